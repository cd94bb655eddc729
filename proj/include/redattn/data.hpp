#pragma once

// Corpus handling: vocabulary construction, character/word tokenization,
// fixed-length sample extraction, train/test splitting, and synthetic
// corpora that stand in for a large natural-text dataset at desk scale.
//
// Ids 0 and 1 are reserved for PAD and UNK. Nothing in this pipeline emits
// PAD: documents shorter than the input length are skipped, not padded.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <random>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "redattn/errors.hpp"
#include "redattn/rng.hpp"

namespace redattn {

inline constexpr std::int32_t kPadId = 0;
inline constexpr std::int32_t kUnkId = 1;

enum class TokenMode { Character, Word };

// UTF-8 aware codepoint split; malformed bytes fall back to single-byte tokens.
inline std::vector<std::string> split_characters(const std::string& text) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < text.size();) {
    const unsigned char c = static_cast<unsigned char>(text[i]);
    std::size_t len = 1;
    if ((c & 0xe0) == 0xc0) len = 2;
    else if ((c & 0xf0) == 0xe0) len = 3;
    else if ((c & 0xf8) == 0xf0) len = 4;
    if (i + len > text.size()) len = 1;
    for (std::size_t j = 1; j < len; ++j)
      if ((static_cast<unsigned char>(text[i + j]) & 0xc0) != 0x80) {
        len = 1;
        break;
      }
    out.push_back(text.substr(i, len));
    i += len;
  }
  return out;
}

inline std::vector<std::string> split_words(const std::string& text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t start = i;
    while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    if (i > start) out.push_back(text.substr(start, i - start));
  }
  return out;
}

inline std::vector<std::string> tokenize(const std::string& text, TokenMode mode) {
  return mode == TokenMode::Character ? split_characters(text) : split_words(text);
}

// Token <-> id bijection over the non-reserved range [2, V).
class Vocabulary {
 public:
  Vocabulary() : id_to_token_{"<pad>", "<unk>"} {}

  // Keeps the most frequent tokens up to max_size - 2, ids assigned in
  // (frequency desc, token asc) order so equal inputs give equal ids.
  static Vocabulary build(const std::vector<std::string>& texts, TokenMode mode,
                          std::size_t max_size) {
    std::unordered_map<std::string, std::size_t> counts;
    for (const auto& text : texts)
      for (auto& tok : tokenize(text, mode)) ++counts[tok];
    if (counts.empty()) throw UsageError("vocabulary: corpus has no tokens");

    std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
      if (a.second != b.second) return a.second > b.second;
      return a.first < b.first;
    });
    const std::size_t keep = max_size > 2 ? max_size - 2 : 0;

    Vocabulary v;
    v.mode_ = mode;
    for (std::size_t i = 0; i < ranked.size() && i < keep; ++i) {
      v.token_to_id_.emplace(ranked[i].first,
                             static_cast<std::int32_t>(v.id_to_token_.size()));
      v.id_to_token_.push_back(ranked[i].first);
    }
    return v;
  }

  std::int32_t id_of(const std::string& token) const {
    auto it = token_to_id_.find(token);
    return it == token_to_id_.end() ? kUnkId : it->second;
  }

  const std::string& token_of(std::int32_t id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= id_to_token_.size())
      throw IndexError("vocabulary: id " + std::to_string(id) + " out of range");
    return id_to_token_[static_cast<std::size_t>(id)];
  }

  std::vector<std::int32_t> encode(const std::string& text) const {
    std::vector<std::int32_t> out;
    for (auto& tok : tokenize(text, mode_)) out.push_back(id_of(tok));
    return out;
  }

  std::size_t size() const { return id_to_token_.size(); }
  TokenMode mode() const { return mode_; }

 private:
  TokenMode mode_ = TokenMode::Character;
  std::vector<std::string> id_to_token_;
  std::unordered_map<std::string, std::int32_t> token_to_id_;
};

// One fixed-length training sequence and where it came from.
struct Sample {
  std::vector<std::int32_t> ids;
  std::string source;
};

// First input_len tokens of a document, or nothing when the document is too
// short. One sample per document, no padding.
inline std::optional<Sample> extract_sample(const std::vector<std::int32_t>& doc_ids,
                                            std::size_t input_len, std::string source = {}) {
  if (doc_ids.size() < input_len) return std::nullopt;
  Sample s;
  s.ids.assign(doc_ids.begin(), doc_ids.begin() + static_cast<std::ptrdiff_t>(input_len));
  s.source = std::move(source);
  return s;
}

// Deterministic shuffle then split; the two parts are disjoint, exhaustive,
// and both nonempty.
inline std::pair<std::vector<Sample>, std::vector<Sample>> split_train_test(
    std::vector<Sample> samples, double ratio, std::uint64_t seed) {
  if (samples.size() < 2)
    throw UsageError("split: need at least 2 samples, got " + std::to_string(samples.size()));
  if (!(ratio > 0.0) || !(ratio < 1.0))
    throw UsageError("split: ratio must lie strictly between 0 and 1");
  std::mt19937_64 rng(seed);
  shuffle_in_place(samples, rng);
  auto want = static_cast<std::size_t>(
      std::llround(ratio * static_cast<double>(samples.size())));
  const std::size_t n_train = std::clamp<std::size_t>(want, 1, samples.size() - 1);
  std::vector<Sample> train(samples.begin(), samples.begin() + static_cast<std::ptrdiff_t>(n_train));
  std::vector<Sample> test(samples.begin() + static_cast<std::ptrdiff_t>(n_train), samples.end());
  return {std::move(train), std::move(test)};
}

// ---------------------------------------------------------------------------
// Synthetic corpora

enum class SyntheticKind { UniformRandom, MarkovBigram, TemplateRepetition };

struct SyntheticSpec {
  SyntheticKind kind = SyntheticKind::TemplateRepetition;
  std::size_t vocab_size = 64;  // includes the two reserved ids
  std::size_t length = 32;
  std::size_t sample_count = 1;
  std::uint64_t seed = 0;
  double bigram_temperature = 1.0;  // 0 collapses to argmax transitions
  std::size_t template_pool = 16;   // phrases in the pool
  double repeat_probability = 0.5;  // chance of repeating the previous phrase
};

inline void validate(const SyntheticSpec& s) {
  if (s.vocab_size < 3) throw UsageError("synthetic: vocab_size must leave room beyond PAD/UNK");
  if (s.length < 1) throw UsageError("synthetic: length must be positive");
  if (s.sample_count < 1) throw UsageError("synthetic: sample_count must be positive");
  if (s.template_pool < 1) throw UsageError("synthetic: template_pool must be positive");
}

namespace detail {

inline std::int32_t content_id(std::mt19937_64& rng, std::size_t vocab_size) {
  return static_cast<std::int32_t>(2 + index_draw(rng, vocab_size - 2));
}

}  // namespace detail

// The bigram table is exposed so tests can replay transitions independently.
// Row s holds the unnormalized preference of each successor of content id
// s + 2; successors are content ids as well.
inline std::vector<std::vector<double>> markov_logits(const SyntheticSpec& spec) {
  validate(spec);
  const std::size_t states = spec.vocab_size - 2;
  std::mt19937_64 rng(mix_seed(spec.seed, 0x6d61726b));
  std::vector<std::vector<double>> logits(states, std::vector<double>(states));
  for (auto& row : logits)
    for (auto& l : row) l = unit_draw(rng);
  return logits;
}

inline std::vector<Sample> gen_synthetic(const SyntheticSpec& spec) {
  validate(spec);
  std::mt19937_64 rng(spec.seed);
  std::vector<Sample> out;
  out.reserve(spec.sample_count);

  switch (spec.kind) {
    case SyntheticKind::UniformRandom: {
      for (std::size_t s = 0; s < spec.sample_count; ++s) {
        Sample sample;
        sample.source = "uniform:" + std::to_string(s);
        sample.ids.reserve(spec.length);
        for (std::size_t i = 0; i < spec.length; ++i)
          sample.ids.push_back(detail::content_id(rng, spec.vocab_size));
        out.push_back(std::move(sample));
      }
      break;
    }
    case SyntheticKind::MarkovBigram: {
      const auto logits = markov_logits(spec);
      const std::size_t states = logits.size();
      for (std::size_t s = 0; s < spec.sample_count; ++s) {
        Sample sample;
        sample.source = "markov:" + std::to_string(s);
        std::size_t state = index_draw(rng, states);
        sample.ids.push_back(static_cast<std::int32_t>(2 + state));
        while (sample.ids.size() < spec.length) {
          const auto& row = logits[state];
          if (spec.bigram_temperature <= 0.0) {
            state = static_cast<std::size_t>(
                std::max_element(row.begin(), row.end()) - row.begin());
          } else {
            double denom = 0.0;
            std::vector<double> w(states);
            for (std::size_t t = 0; t < states; ++t) {
              w[t] = std::exp(row[t] / spec.bigram_temperature);
              denom += w[t];
            }
            double u = unit_draw(rng) * denom;
            state = states - 1;
            for (std::size_t t = 0; t < states; ++t) {
              u -= w[t];
              if (u <= 0.0) {
                state = t;
                break;
              }
            }
          }
          sample.ids.push_back(static_cast<std::int32_t>(2 + state));
        }
        out.push_back(std::move(sample));
      }
      break;
    }
    case SyntheticKind::TemplateRepetition: {
      // A small pool of phrases; documents concatenate pool draws, biased
      // toward repeating the previous phrase. The redundancy mimics the
      // repeated structure of natural text paragraphs.
      std::vector<std::vector<std::int32_t>> pool(spec.template_pool);
      for (auto& phrase : pool) {
        const std::size_t len = 4 + index_draw(rng, 5);
        for (std::size_t i = 0; i < len; ++i)
          phrase.push_back(detail::content_id(rng, spec.vocab_size));
      }
      for (std::size_t s = 0; s < spec.sample_count; ++s) {
        Sample sample;
        sample.source = "template:" + std::to_string(s);
        std::size_t prev = 0;
        while (sample.ids.size() < spec.length) {
          std::size_t pick = prev;
          if (sample.ids.empty() || unit_draw(rng) >= spec.repeat_probability)
            pick = index_draw(rng, pool.size());
          sample.ids.insert(sample.ids.end(), pool[pick].begin(), pool[pick].end());
          prev = pick;
        }
        sample.ids.resize(spec.length);
        out.push_back(std::move(sample));
      }
      break;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Plain-text corpora

// One document per line of a corpus file, or one per file (a directory is
// read as its regular files sorted by name).
inline std::vector<std::string> load_documents(const std::string& path, bool per_line) {
  namespace fs = std::filesystem;
  if (!fs::exists(path)) throw UsageError("corpus: no such path " + path);
  auto read_file = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  };

  std::vector<std::string> docs;
  if (per_line) {
    std::ifstream in(path);
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (!line.empty()) docs.push_back(line);
    }
  } else if (fs::is_directory(path)) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(path))
      if (entry.is_regular_file()) files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) docs.push_back(read_file(f));
  } else {
    docs.push_back(read_file(path));
  }
  return docs;
}

// First fraction of the documents in file order ("the first 30%" style
// subsetting); at least one document survives any positive fraction.
inline std::vector<std::string> take_first_fraction(std::vector<std::string> docs,
                                                    double fraction) {
  if (!(fraction > 0.0) || fraction > 1.0)
    throw UsageError("corpus: subset fraction must lie in (0, 1]");
  if (fraction >= 1.0 || docs.empty()) return docs;
  const std::size_t keep = std::max<std::size_t>(
      1, static_cast<std::size_t>(fraction * static_cast<double>(docs.size())));
  docs.resize(keep);
  return docs;
}

struct TokenizedCorpus {
  Vocabulary vocab;
  std::vector<Sample> samples;
};

// Vocabulary over the documents, then one first-N sample per long-enough
// document. Sample order follows document order.
inline TokenizedCorpus build_corpus(const std::vector<std::string>& documents, TokenMode mode,
                                    std::size_t max_vocab, std::size_t input_len) {
  if (documents.empty()) throw UsageError("corpus: no documents");
  TokenizedCorpus out{Vocabulary::build(documents, mode, max_vocab), {}};
  for (std::size_t i = 0; i < documents.size(); ++i) {
    auto sample =
        extract_sample(out.vocab.encode(documents[i]), input_len, "doc:" + std::to_string(i));
    if (sample) out.samples.push_back(std::move(*sample));
  }
  return out;
}

// Audit export: one sample per row, comma-separated integer ids.
inline void write_samples_csv(const std::string& path, const std::vector<Sample>& samples) {
  std::ofstream out(path);
  if (!out) throw UsageError("samples: cannot open " + path + " for writing");
  for (const auto& s : samples) {
    for (std::size_t i = 0; i < s.ids.size(); ++i) {
      if (i) out << ',';
      out << s.ids[i];
    }
    out << '\n';
  }
}

}  // namespace redattn
