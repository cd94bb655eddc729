#pragma once

// Experiment harness: latent-length sweeps over seeds (optionally comparing
// the warm-down and static learning-rate schedules), summary statistics, and
// CSV/SVG outputs. Sweep cells are independent models and may run on worker
// threads; results are ordered by (schedule, latent length, seed) no matter
// how the cells were scheduled, and the CSVs carry no wall-clock fields, so
// parallel and serial runs of the same spec produce identical bytes.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include "redattn/csv.hpp"
#include "redattn/data.hpp"
#include "redattn/errors.hpp"
#include "redattn/model.hpp"
#include "redattn/svg.hpp"
#include "redattn/train.hpp"

namespace redattn {

enum class LrSchedule { Warmdown, Static };

inline const char* schedule_name(LrSchedule s) {
  return s == LrSchedule::Warmdown ? "warmdown" : "static";
}

inline LrSchedule schedule_from_name(const std::string& name) {
  if (name == "warmdown") return LrSchedule::Warmdown;
  if (name == "static") return LrSchedule::Static;
  throw UsageError("unknown schedule '" + name + "'");
}

struct FileCorpus {
  std::string path;
  bool per_line = false;
  TokenMode mode = TokenMode::Character;
  std::size_t max_vocab = 256;
  double subset = 1.0;
};

struct SweepSpec {
  std::variant<SyntheticSpec, FileCorpus> corpus;
  ModelConfig model;  // latent_len is overridden per cell; vocab_size may be 0 for file corpora
  std::vector<std::size_t> latent_lens;
  std::vector<std::uint64_t> seeds;
  TrainConfig train;
  double split_ratio = 0.8;
  bool lr_compare = false;  // run every cell under both schedules
  std::size_t threads = 0;  // 0: REDATTN_THREADS env, then hardware
  std::string out_dir;      // empty: nothing written
};

struct CellResult {
  std::size_t input_len = 0;
  std::size_t latent_len = 0;
  std::uint64_t seed = 0;
  LrSchedule schedule = LrSchedule::Warmdown;
  double best_accuracy = 0.0;
  double final_accuracy = 0.0;
  std::size_t best_epoch = 0;
  std::size_t epochs_run = 0;
  std::vector<EpochRecord> trail;
};

struct SweepResult {
  std::size_t input_len = 0;
  std::vector<CellResult> cells;  // ordered by (schedule, latent_len, seed)
};

inline std::size_t resolve_thread_count(std::size_t requested, std::size_t cells) {
  std::size_t n = requested;
  if (n == 0) {
    if (const char* env = std::getenv("REDATTN_THREADS")) n = std::strtoull(env, nullptr, 10);
  }
  if (n == 0) n = std::thread::hardware_concurrency();
  if (n == 0) n = 1;
  return std::min(n, std::max<std::size_t>(cells, 1));
}

namespace detail {

inline std::vector<Sample> resolve_corpus(const SweepSpec& spec, std::size_t& vocab_size) {
  if (std::holds_alternative<SyntheticSpec>(spec.corpus)) {
    const auto& synth = std::get<SyntheticSpec>(spec.corpus);
    vocab_size = synth.vocab_size;
    return gen_synthetic(synth);
  }
  const auto& files = std::get<FileCorpus>(spec.corpus);
  auto docs = take_first_fraction(load_documents(files.path, files.per_line), files.subset);
  auto corpus = build_corpus(docs, files.mode, files.max_vocab, spec.model.input_len);
  vocab_size = corpus.vocab.size();
  return std::move(corpus.samples);
}

}  // namespace detail

inline void write_results_csv(const std::string& path, const SweepResult& result) {
  std::ofstream out(path);
  if (!out) throw UsageError("results csv: cannot open " + path + " for writing");
  out << "n,latent_len,ratio,seed,schedule,best_accuracy,best_epoch,final_accuracy,epochs_run\n";
  for (const auto& c : result.cells)
    out << c.input_len << ',' << c.latent_len << ','
        << format_sig6(static_cast<double>(c.latent_len) / static_cast<double>(c.input_len))
        << ',' << c.seed << ',' << schedule_name(c.schedule) << ','
        << format_sig6(c.best_accuracy) << ',' << c.best_epoch << ','
        << format_sig6(c.final_accuracy) << ',' << c.epochs_run << '\n';
}

inline void write_trails_csv(const std::string& path, const SweepResult& result) {
  std::ofstream out(path);
  if (!out) throw UsageError("trails csv: cannot open " + path + " for writing");
  out << "n,latent_len,seed,schedule,epoch,lr,train_loss,val_accuracy\n";
  for (const auto& c : result.cells)
    for (const auto& r : c.trail)
      out << c.input_len << ',' << c.latent_len << ',' << c.seed << ','
          << schedule_name(c.schedule) << ',' << r.epoch << ',' << format_sig6(r.lr) << ','
          << format_sig6(r.train_loss) << ',' << format_sig6(r.val_accuracy) << '\n';
}

// Rebuilds a SweepResult (trails included, wall time absent) from the two
// CSVs that `run_sweep` wrote into `dir`.
inline SweepResult load_sweep_csv(const std::string& dir) {
  namespace fs = std::filesystem;
  auto results = read_csv((fs::path(dir) / "results.csv").string());
  auto trails = read_csv((fs::path(dir) / "trails.csv").string());
  SweepResult out;
  for (const auto& row : results.rows) {
    CellResult c;
    c.input_len = std::stoull(row[results.column("n")]);
    c.latent_len = std::stoull(row[results.column("latent_len")]);
    c.seed = std::stoull(row[results.column("seed")]);
    c.schedule = schedule_from_name(row[results.column("schedule")]);
    c.best_accuracy = std::stod(row[results.column("best_accuracy")]);
    c.best_epoch = std::stoull(row[results.column("best_epoch")]);
    c.final_accuracy = std::stod(row[results.column("final_accuracy")]);
    c.epochs_run = std::stoull(row[results.column("epochs_run")]);
    out.input_len = c.input_len;
    out.cells.push_back(c);
  }
  for (const auto& row : trails.rows) {
    const std::size_t latent = std::stoull(row[trails.column("latent_len")]);
    const std::uint64_t seed = std::stoull(row[trails.column("seed")]);
    const LrSchedule sched = schedule_from_name(row[trails.column("schedule")]);
    for (auto& c : out.cells) {
      if (c.latent_len != latent || c.seed != seed || c.schedule != sched) continue;
      EpochRecord r;
      r.epoch = std::stoull(row[trails.column("epoch")]);
      r.lr = std::stod(row[trails.column("lr")]);
      r.train_loss = std::stod(row[trails.column("train_loss")]);
      r.val_accuracy = std::stod(row[trails.column("val_accuracy")]);
      c.trail.push_back(r);
      break;
    }
  }
  return out;
}

// Trains one model per (schedule, latent length, seed) cell on a shared
// train/test split. Cells run on worker threads; the result vector is
// pre-ordered, so execution order cannot change the output.
inline SweepResult run_sweep(const SweepSpec& spec) {
  if (spec.latent_lens.empty()) throw UsageError("sweep: no latent lengths given");
  if (spec.seeds.empty()) throw UsageError("sweep: no seeds given");
  validate(spec.train);

  std::size_t vocab_size = 0;
  auto samples = detail::resolve_corpus(spec, vocab_size);
  if (samples.size() < std::max<std::size_t>(spec.train.batch_size, 2))
    throw UsageError("sweep: corpus yields " + std::to_string(samples.size()) +
                     " samples of length " + std::to_string(spec.model.input_len) +
                     ", need at least " +
                     std::to_string(std::max<std::size_t>(spec.train.batch_size, 2)));
  auto [train_set, test_set] = split_train_test(std::move(samples), spec.split_ratio,
                                                spec.train.seed);

  std::vector<LrSchedule> schedules = {LrSchedule::Warmdown};
  if (spec.lr_compare) schedules.push_back(LrSchedule::Static);
  if (spec.train.static_lr) schedules = {LrSchedule::Static};

  struct Cell {
    LrSchedule schedule;
    std::size_t latent_len;
    std::uint64_t seed;
  };
  std::vector<Cell> cells;
  for (auto schedule : schedules)
    for (auto latent : spec.latent_lens)
      for (auto seed : spec.seeds) cells.push_back({schedule, latent, seed});

  SweepResult result;
  result.input_len = spec.model.input_len;
  result.cells.resize(cells.size());

  const std::size_t workers = resolve_thread_count(spec.threads, cells.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= cells.size()) return;
      try {
        const Cell& cell = cells[i];
        ModelConfig mc = spec.model;
        mc.latent_len = cell.latent_len;
        mc.vocab_size = vocab_size;
        auto params = init_model<float>(mc, cell.seed);
        TrainConfig cfg = spec.train;
        cfg.seed = cell.seed;
        cfg.static_lr = cell.schedule == LrSchedule::Static;
        auto fitted = fit(params, train_set, test_set, cfg);

        CellResult& out = result.cells[i];
        out.input_len = mc.input_len;
        out.latent_len = cell.latent_len;
        out.seed = cell.seed;
        out.schedule = cell.schedule;
        out.best_accuracy = fitted.best_accuracy;
        out.best_epoch = fitted.best_epoch;
        out.final_accuracy = fitted.records.back().val_accuracy;
        out.epochs_run = fitted.records.size();
        out.trail = std::move(fitted.records);
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next.store(cells.size());
        return;
      }
    }
  };
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  if (!spec.out_dir.empty()) {
    namespace fs = std::filesystem;
    fs::create_directories(spec.out_dir);
    write_results_csv((fs::path(spec.out_dir) / "results.csv").string(), result);
    write_trails_csv((fs::path(spec.out_dir) / "trails.csv").string(), result);
  }
  return result;
}

// ---------------------------------------------------------------------------
// Summaries

struct SummaryRow {
  std::size_t input_len = 0;
  std::size_t latent_len = 0;
  LrSchedule schedule = LrSchedule::Warmdown;
  std::size_t n_seeds = 0;
  double mean_best = 0.0;
  double std_best = 0.0;  // sample standard deviation; 0 for a single seed
  double min_best = 0.0;
  double max_best = 0.0;
  double stderr_best = 0.0;
};

struct BandPoint {
  LrSchedule schedule = LrSchedule::Warmdown;
  std::size_t latent_len = 0;
  std::size_t epoch = 0;
  std::size_t n = 0;  // runs still alive at this epoch
  double mean_accuracy = 0.0;
  double stderr_accuracy = 0.0;
};

struct Summary {
  std::vector<SummaryRow> rows;
  std::vector<BandPoint> bands;
};

inline Summary summarize(const SweepResult& result) {
  if (result.cells.empty()) throw UsageError("summarize: empty sweep result");
  Summary summary;
  // group cells by (schedule, latent), keeping first-appearance order
  std::vector<std::pair<LrSchedule, std::size_t>> groups;
  for (const auto& c : result.cells) {
    std::pair<LrSchedule, std::size_t> key{c.schedule, c.latent_len};
    bool seen = false;
    for (const auto& g : groups) seen = seen || g == key;
    if (!seen) groups.push_back(key);
  }
  for (const auto& [schedule, latent] : groups) {
    std::vector<const CellResult*> members;
    for (const auto& c : result.cells)
      if (c.schedule == schedule && c.latent_len == latent) members.push_back(&c);

    SummaryRow row;
    row.input_len = result.input_len;
    row.latent_len = latent;
    row.schedule = schedule;
    row.n_seeds = members.size();
    row.min_best = members.front()->best_accuracy;
    row.max_best = members.front()->best_accuracy;
    double total = 0.0;
    for (const auto* m : members) {
      total += m->best_accuracy;
      row.min_best = std::min(row.min_best, m->best_accuracy);
      row.max_best = std::max(row.max_best, m->best_accuracy);
    }
    row.mean_best = total / static_cast<double>(members.size());
    if (members.size() > 1) {
      double ss = 0.0;
      for (const auto* m : members) {
        const double d = m->best_accuracy - row.mean_best;
        ss += d * d;
      }
      row.std_best = std::sqrt(ss / static_cast<double>(members.size() - 1));
      row.stderr_best = row.std_best / std::sqrt(static_cast<double>(members.size()));
    }
    summary.rows.push_back(row);

    std::size_t longest = 0;
    for (const auto* m : members) longest = std::max(longest, m->trail.size());
    for (std::size_t epoch = 0; epoch < longest; ++epoch) {
      BandPoint bp;
      bp.schedule = schedule;
      bp.latent_len = latent;
      bp.epoch = epoch;
      double sum = 0.0;
      for (const auto* m : members)
        if (epoch < m->trail.size()) {
          sum += m->trail[epoch].val_accuracy;
          ++bp.n;
        }
      bp.mean_accuracy = sum / static_cast<double>(bp.n);
      if (bp.n > 1) {
        double ss = 0.0;
        for (const auto* m : members)
          if (epoch < m->trail.size()) {
            const double d = m->trail[epoch].val_accuracy - bp.mean_accuracy;
            ss += d * d;
          }
        bp.stderr_accuracy =
            std::sqrt(ss / static_cast<double>(bp.n - 1)) / std::sqrt(static_cast<double>(bp.n));
      }
      summary.bands.push_back(bp);
    }
  }
  return summary;
}

inline void write_summary_csv(const std::string& path, const Summary& summary) {
  std::ofstream out(path);
  if (!out) throw UsageError("summary csv: cannot open " + path + " for writing");
  out << "n,latent_len,ratio,schedule,n_seeds,mean_best,std_best,min_best,max_best,stderr_best\n";
  for (const auto& r : summary.rows)
    out << r.input_len << ',' << r.latent_len << ','
        << format_sig6(static_cast<double>(r.latent_len) / static_cast<double>(r.input_len))
        << ',' << schedule_name(r.schedule) << ',' << r.n_seeds << ','
        << format_sig6(r.mean_best) << ',' << format_sig6(r.std_best) << ','
        << format_sig6(r.min_best) << ',' << format_sig6(r.max_best) << ','
        << format_sig6(r.stderr_best) << '\n';
}

inline void write_bands_csv(const std::string& path, const Summary& summary) {
  std::ofstream out(path);
  if (!out) throw UsageError("bands csv: cannot open " + path + " for writing");
  out << "latent_len,schedule,epoch,n,mean_accuracy,stderr\n";
  for (const auto& b : summary.bands)
    out << b.latent_len << ',' << schedule_name(b.schedule) << ',' << b.epoch << ',' << b.n
        << ',' << format_sig6(b.mean_accuracy) << ',' << format_sig6(b.stderr_accuracy) << '\n';
}

// ---------------------------------------------------------------------------
// Charts: accuracy-vs-epoch lines per latent length, best-accuracy-vs-ratio
// curve, and mean-with-standard-error bands per (latent, schedule).

inline void render_charts(const SweepResult& result, const std::string& out_dir) {
  namespace fs = std::filesystem;
  const Summary summary = summarize(result);
  fs::create_directories(out_dir);

  std::vector<ChartSeries> epoch_series;
  std::vector<ChartSeries> band_series;
  std::vector<std::pair<LrSchedule, std::size_t>> groups;
  bool multi_schedule = false;
  for (const auto& r : summary.rows) {
    groups.push_back({r.schedule, r.latent_len});
    multi_schedule = multi_schedule || r.schedule != summary.rows.front().schedule;
  }
  for (const auto& [schedule, latent] : groups) {
    ChartSeries line;
    line.label = std::to_string(result.input_len) + "to" + std::to_string(latent);
    if (multi_schedule) line.label += std::string(" ") + schedule_name(schedule);
    ChartSeries band = line;
    for (const auto& b : summary.bands) {
      if (b.schedule != schedule || b.latent_len != latent) continue;
      line.x.push_back(static_cast<double>(b.epoch));
      line.y.push_back(b.mean_accuracy);
      band.x.push_back(static_cast<double>(b.epoch));
      band.y.push_back(b.mean_accuracy);
      band.lo.push_back(b.mean_accuracy - b.stderr_accuracy);
      band.hi.push_back(b.mean_accuracy + b.stderr_accuracy);
    }
    epoch_series.push_back(std::move(line));
    band_series.push_back(std::move(band));
  }
  write_line_chart((fs::path(out_dir) / "accuracy_vs_epoch.svg").string(),
                   {"Reconstruction accuracy over epochs", "epoch", "token accuracy"},
                   epoch_series);
  write_line_chart((fs::path(out_dir) / "accuracy_band.svg").string(),
                   {"Accuracy mean and standard error", "epoch", "token accuracy"},
                   band_series);

  std::vector<ChartSeries> ratio_series;
  for (auto schedule : {LrSchedule::Warmdown, LrSchedule::Static}) {
    ChartSeries s;
    s.label = schedule_name(schedule);
    for (const auto& r : summary.rows) {
      if (r.schedule != schedule) continue;
      s.x.push_back(static_cast<double>(r.latent_len) / static_cast<double>(r.input_len));
      s.y.push_back(r.mean_best);
    }
    if (!s.x.empty()) ratio_series.push_back(std::move(s));
  }
  write_line_chart((fs::path(out_dir) / "accuracy_vs_ratio.svg").string(),
                   {"Best accuracy over reduction ratio", "latent/input ratio",
                    "token accuracy"},
                   ratio_series);
}

}  // namespace redattn
