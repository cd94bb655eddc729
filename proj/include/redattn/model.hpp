#pragma once

// The sequence autoencoder: embed N tokens, add learned positional rows,
// encode to L latent tokens with reducing attention, decode back to N with
// an expanding block, and project every token onto vocabulary logits.
//
// The latent tokens live in d_attn-wide space. With encoder depth D the
// blocks run N -> ... -> N -> L (only the last one reduces); the decoder
// mirrors that with L -> ... -> L -> N. Only the first encoder block
// consumes d_model-wide rows, everything after runs at d_attn.

#include <bit>
#include <cstdint>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "redattn/attention.hpp"
#include "redattn/errors.hpp"
#include "redattn/rng.hpp"
#include "redattn/tensor.hpp"

namespace redattn {

struct ModelConfig {
  std::size_t input_len = 0;   // N, fixed by the scaling matrices
  std::size_t latent_len = 0;  // L; L > N is legal and expands instead
  std::size_t d_model = 256;
  std::size_t d_attn = 512;
  std::size_t vocab_size = 0;
  bool use_positional = true;
  std::size_t encoder_depth = 1;
  std::size_t decoder_depth = 1;
};

inline void validate(const ModelConfig& c) {
  if (c.input_len < 1) throw UsageError("model config: input_len must be positive");
  if (c.latent_len < 1) throw UsageError("model config: latent_len must be positive");
  if (c.d_model < 1 || c.d_attn < 1)
    throw UsageError("model config: d_model and d_attn must be positive");
  if (c.vocab_size < 2) throw UsageError("model config: vocab_size must be at least 2");
  if (c.encoder_depth < 1 || c.decoder_depth < 1)
    throw UsageError("model config: encoder/decoder depth must be positive");
}

template <typename T>
struct AutoencoderParams {
  ModelConfig config;
  Tensor<T> embedding;   // V x d_model
  Tensor<T> positional;  // N x d_model; empty when use_positional is off
  std::vector<AttentionParams<T>> encoder;
  std::vector<AttentionParams<T>> decoder;
  Tensor<T> out_proj;  // d_attn x V
};

// Visits every trainable tensor in declaration order with a stable name.
// The order fixes the checkpoint layout and the optimizer state mapping.
template <typename Params, typename Fn>
void for_each_param(Params& p, Fn&& fn) {
  fn("embedding", p.embedding);
  if (p.config.use_positional) fn("positional", p.positional);
  for (std::size_t i = 0; i < p.encoder.size(); ++i) {
    const std::string base = "encoder." + std::to_string(i) + ".";
    fn(base + "w_q", p.encoder[i].w_q);
    fn(base + "w_k", p.encoder[i].w_k);
    fn(base + "w_v", p.encoder[i].w_v);
    fn(base + "w_s", p.encoder[i].w_s);
  }
  for (std::size_t i = 0; i < p.decoder.size(); ++i) {
    const std::string base = "decoder." + std::to_string(i) + ".";
    fn(base + "w_q", p.decoder[i].w_q);
    fn(base + "w_k", p.decoder[i].w_k);
    fn(base + "w_v", p.decoder[i].w_v);
    fn(base + "w_s", p.decoder[i].w_s);
  }
  fn("out_proj", p.out_proj);
}

namespace detail {

// Shared shape logic for init and checkpoint loading. draw(shape, fan_in)
// produces each tensor in declaration order.
//
// The embedding table is drawn at fan-in 1: a lookup row reaches the network
// unsummed, and unit-scale token vectors are what lets attention tell tokens
// apart from the first step. The positional table stays at fan-in d_model so
// it perturbs rather than swamps the content signal.
template <typename T, typename DrawFn>
AutoencoderParams<T> build_params(const ModelConfig& c, DrawFn&& draw) {
  validate(c);
  AutoencoderParams<T> p;
  p.config = c;
  p.embedding = draw(Shape{c.vocab_size, c.d_model}, 1);
  if (c.use_positional) p.positional = draw(Shape{c.input_len, c.d_model}, c.d_model);
  for (std::size_t i = 0; i < c.encoder_depth; ++i) {
    const std::size_t d_in = i == 0 ? c.d_model : c.d_attn;
    const std::size_t n_out = i + 1 == c.encoder_depth ? c.latent_len : c.input_len;
    AttentionParams<T> block;
    block.w_q = draw(Shape{d_in, c.d_attn}, d_in);
    block.w_k = draw(Shape{d_in, c.d_attn}, d_in);
    block.w_v = draw(Shape{d_in, c.d_attn}, d_in);
    block.w_s = draw(Shape{n_out, c.input_len}, c.input_len);
    p.encoder.push_back(std::move(block));
  }
  for (std::size_t i = 0; i < c.decoder_depth; ++i) {
    const std::size_t n_out = i + 1 == c.decoder_depth ? c.input_len : c.latent_len;
    AttentionParams<T> block;
    block.w_q = draw(Shape{c.d_attn, c.d_attn}, c.d_attn);
    block.w_k = draw(Shape{c.d_attn, c.d_attn}, c.d_attn);
    block.w_v = draw(Shape{c.d_attn, c.d_attn}, c.d_attn);
    block.w_s = draw(Shape{n_out, c.latent_len}, c.latent_len);
    p.decoder.push_back(std::move(block));
  }
  p.out_proj = draw(Shape{c.d_attn, c.vocab_size}, c.d_attn);
  return p;
}

}  // namespace detail

// Every weight uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) from one generator
// consumed in declaration order: the same seed reproduces the same bytes.
template <typename T>
AutoencoderParams<T> init_model(const ModelConfig& config, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return detail::build_params<T>(config, [&rng](Shape shape, std::size_t fan_in) {
    Tensor<T> w = Tensor<T>::zeros(std::move(shape), true);
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (std::size_t i = 0; i < w.size(); ++i)
      w.data()[i] = static_cast<T>(uniform_draw(rng, -bound, bound));
    return w;
  });
}

template <typename T>
AutoencoderParams<T> zero_params(const ModelConfig& config) {
  return detail::build_params<T>(
      config, [](Shape shape, std::size_t) { return Tensor<T>::zeros(std::move(shape), true); });
}

template <typename T>
AutoencoderParams<T> clone_params(const AutoencoderParams<T>& p) {
  AutoencoderParams<T> out;
  out.config = p.config;
  out.embedding = p.embedding.clone();
  if (p.config.use_positional) out.positional = p.positional.clone();
  auto clone_block = [](const AttentionParams<T>& b) {
    return AttentionParams<T>{b.w_q.clone(), b.w_k.clone(), b.w_v.clone(), b.w_s.clone()};
  };
  for (const auto& b : p.encoder) out.encoder.push_back(clone_block(b));
  for (const auto& b : p.decoder) out.decoder.push_back(clone_block(b));
  out.out_proj = p.out_proj.clone();
  return out;
}

// Inverted dropout; a no-op at rate 0. The mask carries no gradient.
template <typename T>
Tensor<T> apply_dropout(const Tensor<T>& h, double rate, std::mt19937_64& rng) {
  if (rate <= 0.0) return h;
  Tensor<T> mask = Tensor<T>::zeros(h.shape());
  const T keep = static_cast<T>(1.0 / (1.0 - rate));
  for (std::size_t i = 0; i < mask.size(); ++i)
    mask.data()[i] = unit_draw(rng) < rate ? T(0) : keep;
  return mul(h, mask);
}

// N x d_model -> L x d_attn through the encoder blocks.
template <typename T>
Tensor<T> encode(const AutoencoderParams<T>& p, const Tensor<T>& x, double dropout = 0.0,
                 std::mt19937_64* rng = nullptr) {
  Tensor<T> h = x;
  for (const auto& block : p.encoder) {
    h = reduce_attention(h, block);
    if (rng) h = apply_dropout(h, dropout, *rng);
  }
  return h;
}

// L x d_attn -> N x d_attn through the decoder blocks.
template <typename T>
Tensor<T> decode(const AutoencoderParams<T>& p, const Tensor<T>& z, double dropout = 0.0,
                 std::mt19937_64* rng = nullptr) {
  if (z.rank() != 2 || z.rows() != p.config.latent_len)
    throw FixedLengthError("decode: latent has " + std::to_string(z.rows()) +
                           " rows, model fixes the latent length to " +
                           std::to_string(p.config.latent_len));
  Tensor<T> h = z;
  for (std::size_t i = 0; i < p.decoder.size(); ++i) {
    h = reduce_attention(h, p.decoder[i]);
    const bool last = i + 1 == p.decoder.size();
    if (rng && !last) h = apply_dropout(h, dropout, *rng);
  }
  return h;
}

// ids (length exactly N) -> logits N x V.
template <typename T>
Tensor<T> forward(const AutoencoderParams<T>& p, const std::vector<std::int32_t>& ids,
                  double dropout = 0.0, std::mt19937_64* rng = nullptr) {
  if (ids.size() != p.config.input_len)
    throw FixedLengthError("forward: got " + std::to_string(ids.size()) +
                           " tokens, model fixes the input length to " +
                           std::to_string(p.config.input_len));
  Tensor<T> h = embedding_lookup(p.embedding, ids);
  if (p.config.use_positional) h = add(h, p.positional);
  h = encode(p, h, dropout, rng);
  h = decode(p, h, dropout, rng);
  return matmul(h, p.out_proj);
}

// Row-wise argmax; ties go to the lowest index.
template <typename T>
std::vector<std::int32_t> argmax_rows(const Tensor<T>& logits) {
  std::vector<std::int32_t> out(logits.rows());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < logits.cols(); ++j)
      if (logits.at(i, j) > logits.at(i, best)) best = j;
    out[i] = static_cast<std::int32_t>(best);
  }
  return out;
}

// Per-position argmax of the forward logits.
template <typename T>
std::vector<std::int32_t> reconstruct(const AutoencoderParams<T>& p,
                                      const std::vector<std::int32_t>& ids) {
  Tensor<T> logits = forward(p, ids);
  return argmax_rows(logits);
}

// Fraction of positions where the sequences agree.
inline double token_accuracy(const std::vector<std::int32_t>& pred,
                             const std::vector<std::int32_t>& target) {
  if (pred.size() != target.size())
    throw UsageError("token_accuracy: length " + std::to_string(pred.size()) + " vs " +
                     std::to_string(target.size()));
  if (pred.empty()) throw UsageError("token_accuracy: empty sequences");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i)
    if (pred[i] == target[i]) ++hits;
  return static_cast<double>(hits) / static_cast<double>(pred.size());
}

// ---------------------------------------------------------------------------
// Checkpoint format "redattn-ckpt-v1": a text header (key-value lines, then
// one `tensor <name> <rank> <extents...>` line per parameter in declaration
// order, then `data`), followed by all parameter values concatenated as
// little-endian 32-bit floats. Layout spelled out in the README.

namespace detail {

inline void write_f32_le(std::ostream& out, float f) {
  const std::uint32_t bits = std::bit_cast<std::uint32_t>(f);
  const char bytes[4] = {static_cast<char>(bits & 0xff), static_cast<char>((bits >> 8) & 0xff),
                         static_cast<char>((bits >> 16) & 0xff),
                         static_cast<char>((bits >> 24) & 0xff)};
  out.write(bytes, 4);
}

inline float read_f32_le(std::istream& in) {
  unsigned char bytes[4];
  in.read(reinterpret_cast<char*>(bytes), 4);
  if (!in) throw UsageError("checkpoint: truncated data section");
  const std::uint32_t bits = static_cast<std::uint32_t>(bytes[0]) |
                             (static_cast<std::uint32_t>(bytes[1]) << 8) |
                             (static_cast<std::uint32_t>(bytes[2]) << 16) |
                             (static_cast<std::uint32_t>(bytes[3]) << 24);
  return std::bit_cast<float>(bits);
}

}  // namespace detail

inline constexpr const char* kCheckpointMagic = "redattn-ckpt-v1";

template <typename T>
void save_checkpoint(const std::string& path, const AutoencoderParams<T>& params,
                     std::uint64_t seed) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UsageError("checkpoint: cannot open " + path + " for writing");
  const ModelConfig& c = params.config;
  out << kCheckpointMagic << "\n";
  out << "input_len " << c.input_len << "\n";
  out << "latent_len " << c.latent_len << "\n";
  out << "d_model " << c.d_model << "\n";
  out << "d_attn " << c.d_attn << "\n";
  out << "vocab_size " << c.vocab_size << "\n";
  out << "use_positional " << (c.use_positional ? 1 : 0) << "\n";
  out << "encoder_depth " << c.encoder_depth << "\n";
  out << "decoder_depth " << c.decoder_depth << "\n";
  out << "seed " << seed << "\n";
  std::size_t count = 0;
  for_each_param(params, [&count](const std::string&, const Tensor<T>&) { ++count; });
  out << "tensors " << count << "\n";
  for_each_param(params, [&out](const std::string& name, const Tensor<T>& t) {
    out << "tensor " << name << " " << t.rank();
    for (auto d : t.shape()) out << " " << d;
    out << "\n";
  });
  out << "data\n";
  for_each_param(params, [&out](const std::string&, const Tensor<T>& t) {
    for (std::size_t i = 0; i < t.size(); ++i)
      detail::write_f32_le(out, static_cast<float>(t.data()[i]));
  });
  if (!out) throw UsageError("checkpoint: write to " + path + " failed");
}

template <typename T>
struct Checkpoint {
  AutoencoderParams<T> params;
  std::uint64_t seed = 0;
};

template <typename T>
Checkpoint<T> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("checkpoint: cannot open " + path);
  std::string magic;
  std::getline(in, magic);
  if (magic != kCheckpointMagic)
    throw UsageError("checkpoint: bad magic '" + magic + "' in " + path);

  ModelConfig c;
  std::uint64_t seed = 0;
  std::size_t tensor_count = 0;
  std::string key;
  while (in >> key && key != "tensor" && key != "data") {
    if (key == "input_len") in >> c.input_len;
    else if (key == "latent_len") in >> c.latent_len;
    else if (key == "d_model") in >> c.d_model;
    else if (key == "d_attn") in >> c.d_attn;
    else if (key == "vocab_size") in >> c.vocab_size;
    else if (key == "use_positional") { int b = 0; in >> b; c.use_positional = b != 0; }
    else if (key == "encoder_depth") in >> c.encoder_depth;
    else if (key == "decoder_depth") in >> c.decoder_depth;
    else if (key == "seed") in >> seed;
    else if (key == "tensors") in >> tensor_count;
    else throw UsageError("checkpoint: unknown header key '" + key + "'");
  }

  Checkpoint<T> ckpt{zero_params<T>(c), seed};
  std::size_t seen = 0;
  for_each_param(ckpt.params, [&](const std::string& name, const Tensor<T>& t) {
    if (seen++ > 0) in >> key;
    if (key != "tensor") throw UsageError("checkpoint: expected tensor entry for " + name);
    std::string got;
    std::size_t rank = 0;
    in >> got >> rank;
    if (got != name)
      throw UsageError("checkpoint: expected tensor '" + name + "', found '" + got + "'");
    Shape shape(rank);
    for (auto& d : shape) in >> d;
    if (shape != t.shape())
      throw UsageError("checkpoint: tensor '" + name + "' has shape " + shape_str(shape) +
                       ", expected " + shape_str(t.shape()));
  });
  if (seen != tensor_count)
    throw UsageError("checkpoint: header announced " + std::to_string(tensor_count) +
                     " tensors, layout has " + std::to_string(seen));
  in >> key;
  if (key != "data") throw UsageError("checkpoint: missing data section");
  in.get();  // newline before the binary payload
  for_each_param(ckpt.params, [&in](const std::string&, Tensor<T>& t) {
    for (std::size_t i = 0; i < t.size(); ++i)
      t.data()[i] = static_cast<T>(detail::read_f32_le(in));
  });
  return ckpt;
}

}  // namespace redattn
