/**
 * Copyright 2026 The cdimpute Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#ifndef CDIMPUTE_TRAINER_HPP
#define CDIMPUTE_TRAINER_HPP

#include <algorithm>
#include <cctype>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <numeric>
#include <optional>
#include <sstream>

#include "cdimpute/cdca.hpp"
#include "cdimpute/checkpoint.hpp"
#include "cdimpute/config.hpp"
#include "cdimpute/data.hpp"
#include "cdimpute/denoiser.hpp"
#include "cdimpute/diffusion.hpp"
#include "cdimpute/fmixup.hpp"
#include "cdimpute/metrics.hpp"
#include "cdimpute/nn/adam.hpp"
#include "cdimpute/synthetic.hpp"

namespace cdimpute {

namespace fs = std::filesystem;

/// Both domains, split and normalized with their own training statistics.
struct Experiment {
  SplitDatasets source, target;
  std::vector<std::string> feature_names;
};

inline Experiment load_experiment(const RunConfig& cfg) {
  SeriesTable src, tgt;
  Eigen::Index length = cfg.data.window_length;
  if (cfg.data.synthetic) {
    auto pair = generate_synthetic(cfg.data.synth, cfg.data.synthetic_seed);
    src = std::move(pair.source);
    tgt = std::move(pair.target);
    length = cfg.data.synth.length;
  } else {
    src = read_csv_table(cfg.data.source_csv, cfg.data.schema);
    tgt = read_csv_table(cfg.data.target_csv, cfg.data.schema);
    if (src.feature_names != tgt.feature_names)
      fail<SchemaError>("source and target CSVs have different feature columns");
  }
  Experiment ex;
  ex.feature_names = tgt.feature_names;
  ex.source = split_table(src, length, cfg.data.train_stride, Domain::Source, cfg.data.fractions);
  ex.target = split_table(tgt, length, cfg.data.train_stride, Domain::Target, cfg.data.fractions);
  if (ex.source.train.windows.empty() || ex.target.train.windows.empty())
    fail<ConfigError>("training split has no complete window of length ", length);
  normalize(ex.source);
  normalize(ex.target);
  return ex;
}

/// Split boundaries, normalization and masking seeds; enough to rebuild
/// every window and mask.
inline json make_manifest(const RunConfig& cfg, const Experiment& ex) {
  auto split = [](const DomainDataset& d) {
    json ids = json::array();
    for (const auto& w : d.windows) ids.push_back(w.window_id);
    return json{{"row_begin", d.row_begin}, {"row_end", d.row_end}, {"n_windows", d.windows.size()},
                {"window_ids", ids}};
  };
  auto domain = [&](const SplitDatasets& s) {
    json norm = json::array();
    for (std::size_t f = 0; f < s.norm.size(); ++f)
      norm.push_back({{"feature", ex.feature_names[f]}, {"mean", s.norm[f].mean}, {"scale", s.norm[f].scale}});
    return json{{"train", split(s.train)}, {"val", split(s.val)}, {"test", split(s.test)}, {"norm_record", norm}};
  };
  json m;
  m["format"] = "cdimpute-manifest/1";
  m["features"] = ex.feature_names;
  m["window_length"] = ex.target.train.length();
  m["source"] = domain(ex.source);
  m["target"] = domain(ex.target);
  m["masking"] = to_json(cfg)["masking"];
  m["seeds"] = {{"train", cfg.train.seed},
                {"masking", cfg.masking.seed},
                {"synthetic", cfg.data.synthetic ? json(cfg.data.synthetic_seed) : json(nullptr)}};
  m["streams"] = {{"train_mask", "masking_stream(train.seed, \"train\", window_id, epoch)"},
                  {"val_mask", "masking_stream(train.seed, \"val\", window_id, 0)"},
                  {"test_mask", "masking_stream(masking.seed, \"test\", window_id, 0)"}};
  return m;
}

/// One window ready for a denoiser pass.
struct PreparedWindow {
  Matrix x_cond;
  Matrix x_noisy;
  Matrix eps;
  Mask cond;
  Mask target;
  int t = 1;
};

struct StepLog {
  std::int64_t step = 0;
  int epoch = 0;
  double l_src = 0.0, l_tgt = 0.0, delta = 0.0, l_align = 0.0, total = 0.0, lr = 0.0;
};

struct TrainResult {
  fs::path best_checkpoint, last_checkpoint;
  double best_val = 0.0;
  int best_epoch = -1;
  int epochs_completed = 0;
  bool interrupted = false;
  double seconds = 0.0;
};

/**
 * Joint two-branch training. Every random draw comes from a stream keyed by
 * (seed, purpose, window id, epoch or step), so a resumed run replays the
 * uninterrupted one exactly.
 */
class Trainer {
 public:
  Trainer(RunConfig cfg, const Experiment& ex, fs::path out_dir)
      : cfg_(std::move(cfg)),
        ex_(ex),
        out_(std::move(out_dir)),
        sched_(quadratic_schedule(cfg_.schedule.steps, cfg_.schedule.beta1, cfg_.schedule.beta_t)) {
    cfg_.validate();
    cfg_.model.features = static_cast<Eigen::Index>(ex_.feature_names.size());
  }

  /// Progress callback, called after each epoch with (epoch, mean total loss, val loss).
  std::function<void(int, double, double)> on_epoch;

  TrainResult run(bool resume = false) {
    fs::create_directories(out_);
    const auto t0 = std::chrono::steady_clock::now();
    const fs::path last = out_ / "last.ckpt", best = out_ / "best.ckpt", log_path = out_ / "train_log.csv";
    write_json_file(out_ / "config.json", to_json(cfg_));

    TrainingState st;
    st.config = to_json(cfg_);
    st.source_norm = ex_.source.norm;
    st.target_norm = ex_.target.norm;
    st.feature_names = ex_.feature_names;
    Denoiser model(cfg_.model, cfg_.train.seed);
    nn::Adam adam({cfg_.optim.lr, cfg_.optim.beta1, cfg_.optim.beta2, cfg_.optim.eps});

    if (resume && fs::exists(last)) {
      auto ck = load_checkpoint(last);
      if (ck.model.spec().features != cfg_.model.features) fail<ConfigError>("resume: feature count changed");
      model = std::move(ck.model);
      st.next_epoch = ck.state.next_epoch;
      st.global_step = ck.state.global_step;
      st.adam_steps = ck.state.adam_steps;
      st.best_val = ck.state.best_val;
      st.best_epoch = ck.state.best_epoch;
      adam.set_steps(st.adam_steps);
      truncate_log(log_path, st.global_step);
    } else {
      std::ofstream(log_path) << "step,epoch,L_Src,L_Tgt,Delta,L_align,L,lr\n";
    }

    std::ofstream log(log_path, std::ios::app);
    log << std::setprecision(17);
    const auto params = model.parameters();
    TrainResult res;
    for (int epoch = st.next_epoch; epoch < cfg_.train.epochs; ++epoch) {
      adam.set_lr(cfg_.learning_rate(epoch));
      const auto tgt_order = shuffled(ex_.target.train.windows.size(), "shuffle.target", epoch);
      const auto src_order = shuffled(ex_.source.train.windows.size(), "shuffle.source", epoch);
      std::size_t src_cursor = 0;
      double epoch_loss = 0.0;
      int epoch_steps = 0;
      const auto bs = static_cast<std::size_t>(cfg_.train.batch_size);
      for (std::size_t b0 = 0; b0 < tgt_order.size(); b0 += bs) {
        std::vector<const TimeWindow*> tb, sb;
        for (std::size_t i = b0; i < std::min(b0 + bs, tgt_order.size()); ++i)
          tb.push_back(&ex_.target.train.windows[tgt_order[i]]);
        for (std::size_t i = 0; i < tb.size(); ++i, ++src_cursor)
          sb.push_back(&ex_.source.train.windows[src_order[src_cursor % src_order.size()]]);
        StepLog sl = train_step(model, adam, params, tb, sb, epoch, st.global_step);
        sl.lr = adam.lr();
        log << sl.step << ',' << sl.epoch << ',' << sl.l_src << ',' << sl.l_tgt << ',' << sl.delta << ','
            << sl.l_align << ',' << sl.total << ',' << sl.lr << '\n';
        epoch_loss += sl.total;
        ++epoch_steps;
        ++st.global_step;
      }
      log.flush();
      model.set_trained_steps(st.global_step);
      const double val = validation_loss(model);
      st.adam_steps = adam.steps();
      st.next_epoch = epoch + 1;
      if (val < st.best_val) {
        st.best_val = val;
        st.best_epoch = epoch;
        save_checkpoint(best, model, st);
      }
      save_checkpoint(last, model, st);
      if (on_epoch) on_epoch(epoch, epoch_steps ? epoch_loss / epoch_steps : 0.0, val);
      res.epochs_completed = epoch + 1;
      if (cfg_.train.stop_after_epoch >= 0 && epoch + 1 >= cfg_.train.stop_after_epoch &&
          epoch + 1 < cfg_.train.epochs) {
        res.interrupted = true;
        break;
      }
    }
    if (!fs::exists(best)) save_checkpoint(best, model, st);
    res.best_checkpoint = best;
    res.last_checkpoint = last;
    res.best_val = st.best_val;
    res.best_epoch = st.best_epoch;
    res.epochs_completed = st.next_epoch;
    res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return res;
  }

  /// Apply masking and the configured fill to one window, then corrupt it.
  std::optional<PreparedWindow> prepare(const TimeWindow& w, const DomainDataset& partners, int epoch,
                                        std::uint64_t noise_key, std::string_view purpose = "train") const {
    Rng mrng = masking_stream(cfg_.train.seed, purpose, w.window_id, static_cast<std::uint64_t>(epoch));
    auto masked = apply_train_masking(w, cfg_.masking, mrng);
    if (!masked) return std::nullopt;
    const TimeWindow& mw = masked->window;
    if (count_set(mw.target_mask) == 0) return std::nullopt;
    const Matrix x0 = fill(mw, partners, epoch, purpose);

    Rng nrng = make_stream(cfg_.train.seed, {hash_tag(purpose), hash_tag("noise"), hash_tag(w.window_id), noise_key});
    std::uniform_int_distribution<int> tdist(1, sched_.steps());
    PreparedWindow p;
    p.t = tdist(nrng);
    p.eps = standard_normal(w.features(), w.length(), nrng);
    p.target = mw.target_mask;
    p.cond = mw.cond_mask();
    p.x_cond = mw.conditional_values();
    p.x_noisy = forward_sample(x0, p.t, p.eps, sched_).cwiseProduct(to_real(p.target));
    return p;
  }

  /// X~0 for a masked window under the configured interpolation mode.
  Matrix fill(const TimeWindow& mw, const DomainDataset& partners, int epoch, std::string_view purpose) const {
    if (count_set(mw.missing_mask()) == 0) return mw.values;
    switch (cfg_.fmixup.fill) {
      case FillMode::Zero: return zero_fill_window(mw).values;
      case FillMode::Linear: return linear_interpolate_window(mw).values;
      case FillMode::FMixup: break;
    }
    Rng prng = make_stream(cfg_.train.seed, {hash_tag(purpose), hash_tag("pair"), hash_tag(mw.window_id),
                                             static_cast<std::uint64_t>(epoch)});
    std::uniform_int_distribution<std::size_t> pick(0, partners.windows.size() - 1);
    std::uniform_real_distribution<double> lam(cfg_.fmixup.lambda_min, cfg_.fmixup.lambda_max);
    const TimeWindow& partner = partners.windows[pick(prng)];
    const double lambda = cfg_.fmixup.lambda_min == cfg_.fmixup.lambda_max ? cfg_.fmixup.lambda_min : lam(prng);
    // The partner sees the same masking it would get as a training window this epoch.
    Rng pm = masking_stream(cfg_.train.seed, purpose, partner.window_id, static_cast<std::uint64_t>(epoch));
    auto pmasked = apply_train_masking(partner, cfg_.masking, pm);
    const TimeWindow& pw = pmasked ? pmasked->window : partner;
    FMixupTrace trace;
    const bool report = !cfg_.fmixup.spectral_report.empty() && epoch == 0 && purpose == "train";
    auto out = interpolate_window(mw, pw, cfg_.fmixup.alpha, lambda, cfg_.fmixup.fft_mode, report ? &trace : nullptr);
    if (report) {
      const bool header = !fs::exists(cfg_.fmixup.spectral_report);
      std::ofstream os(cfg_.fmixup.spectral_report, std::ios::app);
      write_spectral_report(os, mw.window_id, trace,
                            low_freq_mask(mw.features(), mw.length(), cfg_.fmixup.alpha, cfg_.fmixup.fft_mode),
                            header);
    }
    return out.values;
  }

  /// Target-branch denoising loss on the validation split with fixed masks,
  /// steps and noise. Falls back to the training split if validation is empty.
  double validation_loss(const Denoiser& model) const {
    const auto& ds = ex_.target.val.windows.empty() ? ex_.target.train : ex_.target.val;
    double sum = 0.0;
    std::size_t count = 0;
    for (const auto& w : ds.windows) {
      auto p = prepare(w, ex_.source.train, 0, 0, "val");
      if (!p) continue;
      const Matrix e = model.forward(Domain::Target, {p->x_cond, p->x_noisy, p->cond, p->t});
      const auto l = denoising_loss(p->eps, e, p->target);
      sum += l.sum;
      count += l.count;
    }
    return count ? sum / static_cast<double>(count) : 0.0;
  }

  const NoiseSchedule& schedule() const { return sched_; }
  const RunConfig& config() const { return cfg_; }

 private:
  RunConfig cfg_;
  const Experiment& ex_;
  fs::path out_;
  NoiseSchedule sched_;

  std::vector<std::size_t> shuffled(std::size_t n, std::string_view tag, int epoch) const {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    Rng rng = make_stream(cfg_.train.seed, {hash_tag(tag), static_cast<std::uint64_t>(epoch)});
    // Fisher-Yates with our own index draws; std::shuffle is not specified bit-for-bit.
    for (std::size_t i = n; i > 1; --i) {
      std::uniform_int_distribution<std::size_t> d(0, i - 1);
      std::swap(idx[i - 1], idx[d(rng)]);
    }
    return idx;
  }

  StepLog train_step(Denoiser& model, nn::Adam& adam, const std::vector<nn::Param*>& params,
                     const std::vector<const TimeWindow*>& tb, const std::vector<const TimeWindow*>& sb, int epoch,
                     std::int64_t step) {
    const auto key = static_cast<std::uint64_t>(step);
    std::vector<PreparedWindow> tp, sp;
    for (const auto* w : tb)
      if (auto p = prepare(*w, ex_.source.train, epoch, key)) tp.push_back(std::move(*p));
    for (const auto* w : sb)
      if (auto p = prepare(*w, ex_.target.train, epoch, key)) sp.push_back(std::move(*p));

    model.zero_grad();
    std::vector<Denoiser::Cache> tc(tp.size()), sc(sp.size());
    std::vector<Matrix> e_tgt(tp.size()), e_cross, e_src(sp.size());
    std::vector<Mask> tmask(tp.size());
    for (std::size_t i = 0; i < tp.size(); ++i) {
      const auto& p = tp[i];
      e_tgt[i] = model.forward(Domain::Target, {p.x_cond, p.x_noisy, p.cond, p.t}, &tc[i]);
      tmask[i] = p.target;
    }
    if (cfg_.cdca_enabled) {
      // Same inputs, t and noise through the source branch; no gradient flows here.
      e_cross.resize(tp.size());
      for (std::size_t i = 0; i < tp.size(); ++i) {
        const auto& p = tp[i];
        e_cross[i] = model.forward(Domain::Source, {p.x_cond, p.x_noisy, p.cond, p.t});
      }
    }
    for (std::size_t i = 0; i < sp.size(); ++i) {
      const auto& p = sp[i];
      e_src[i] = model.forward(Domain::Source, {p.x_cond, p.x_noisy, p.cond, p.t}, &sc[i]);
    }

    auto batch_loss = [](const std::vector<PreparedWindow>& ps, const std::vector<Matrix>& es) {
      MaskedLoss acc;
      for (std::size_t i = 0; i < ps.size(); ++i) {
        const auto l = denoising_loss(ps[i].eps, es[i], ps[i].target);
        acc.sum += l.sum;
        acc.count += l.count;
      }
      acc.value = acc.count ? acc.sum / static_cast<double>(acc.count) : 0.0;
      return acc;
    };
    const MaskedLoss lt = batch_loss(tp, e_tgt), ls = batch_loss(sp, e_src);

    StepLog sl;
    sl.step = step;
    sl.epoch = epoch;
    sl.l_tgt = lt.value;
    sl.l_src = ls.value;
    AlignmentTerm align;
    if (cfg_.cdca_enabled && !tp.empty()) {
      align = alignment_term(e_tgt, e_cross, tmask, cfg_.cdca);
      sl.delta = align.delta;
      sl.l_align = align.loss;
    }
    try {
      sl.total = total_loss(sl.l_src, sl.l_tgt, sl.l_align, cfg_.cdca);
    } catch (const DivergenceError& e) {
      fail<DivergenceError>("epoch ", epoch, " step ", step, ": ", e.what());
    }

    for (std::size_t i = 0; i < tp.size(); ++i) {
      const auto& p = tp[i];
      const Matrix m = to_real(p.target);
      Matrix g = Matrix::Zero(p.eps.rows(), p.eps.cols());
      if (lt.count) g += (2.0 / static_cast<double>(lt.count)) * (e_tgt[i] - p.eps).cwiseProduct(m);
      if (!align.grad.empty()) g += cfg_.cdca.mu_align * align.grad[i];
      model.backward(Domain::Target, tc[i], g);
    }
    for (std::size_t i = 0; i < sp.size(); ++i) {
      const auto& p = sp[i];
      if (!ls.count) break;
      const Matrix g = (2.0 / static_cast<double>(ls.count)) * (e_src[i] - p.eps).cwiseProduct(to_real(p.target));
      model.backward(Domain::Source, sc[i], g);
    }
    adam.step(params);
    return sl;
  }

  static void truncate_log(const fs::path& path, std::int64_t keep_below) {
    std::ifstream in(path);
    std::vector<std::string> lines;
    std::string line;
    if (std::getline(in, line)) lines.push_back(line);
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      if (std::stoll(line.substr(0, line.find(','))) < keep_below) lines.push_back(line);
    }
    in.close();
    std::ofstream out(path, std::ios::trunc);
    for (const auto& l : lines) out << l << '\n';
  }
};

// ---------------------------------------------------------------------------
// Evaluation and export

struct ImputationExport {
  std::vector<ImputationResult> results;
  std::vector<TimeWindow> windows;  // masked windows, normalized
};

/// Binary sample dump: magic "CDSAMPL1", u64 window count, then per window
/// u32 id length, id, u64 S, K, L and S*K*L doubles (raw units, row-major).
inline void write_samples(const fs::path& path, const ImputationExport& ex, const NormRecord& norm) {
  std::ofstream os(path, std::ios::binary);
  if (!os) fail<Error>("cannot write '", path.string(), "'");
  os.write("CDSAMPL1", 8);
  detail::put(os, static_cast<std::uint64_t>(ex.results.size()));
  for (const auto& r : ex.results) {
    detail::put(os, static_cast<std::uint32_t>(r.window_id.size()));
    os.write(r.window_id.data(), static_cast<std::streamsize>(r.window_id.size()));
    detail::put(os, static_cast<std::uint64_t>(r.samples.size()));
    detail::put(os, static_cast<std::uint64_t>(r.median.rows()));
    detail::put(os, static_cast<std::uint64_t>(r.median.cols()));
    for (const auto& s : r.samples) detail::put_matrix(os, denormalize(s, norm));
  }
}

/// window_id, feature, timestamp, truth, point_estimate, q05, q50, q95 for
/// every target position; truth is empty where none exists.
inline void write_imputations_csv(const fs::path& path, const ImputationExport& ex, const NormRecord& norm,
                                  const std::vector<std::string>& features,
                                  const std::vector<std::string>* timestamps = nullptr) {
  std::ofstream os(path);
  if (!os) fail<Error>("cannot write '", path.string(), "'");
  os << "window_id,feature,timestamp,truth,point_estimate,q05,q50,q95\n" << std::setprecision(10);
  for (std::size_t i = 0; i < ex.results.size(); ++i) {
    const auto& r = ex.results[i];
    const auto& w = ex.windows[i];
    const Matrix med = denormalize(r.median, norm);
    const Matrix q05 = denormalize(r.quantile(0.05), norm);
    const Matrix q95 = denormalize(r.quantile(0.95), norm);
    const Matrix truth = denormalize(w.values, norm);
    for (Eigen::Index f = 0; f < w.features(); ++f)
      for (Eigen::Index l = 0; l < w.length(); ++l) {
        if (!w.target_mask(f, l)) continue;
        const auto row = w.start_row + l;
        os << r.window_id << ',' << features[static_cast<std::size_t>(f)] << ',';
        if (timestamps && static_cast<std::size_t>(row) < timestamps->size())
          os << (*timestamps)[static_cast<std::size_t>(row)];
        else
          os << row;
        os << ',';
        if (w.artificial_mask(f, l)) os << truth(f, l);
        os << ',' << med(f, l) << ',' << q05(f, l) << ',' << med(f, l) << ',' << q95(f, l) << '\n';
      }
  }
}

/// Sample every target position of each window with the given branch.
inline ImputationExport impute_windows(const Denoiser& model, const std::vector<TimeWindow>& windows,
                                       const NoiseSchedule& sched, int n_samples, std::uint64_t seed,
                                       Domain branch = Domain::Target) {
  ImputationExport out;
  for (const auto& w : windows) {
    if (count_set(w.target_mask) == 0) continue;
    const Matrix x_cond = w.conditional_values();
    const Mask cond = w.cond_mask();
    auto eps_fn = [&](const Matrix& x, int t) { return model.forward(branch, {x_cond, x, cond, t}); };
    Rng rng = make_stream(seed, {hash_tag("impute"), hash_tag(w.window_id)});
    out.results.push_back(impute_with(w, eps_fn, sched, n_samples, rng));
    out.windows.push_back(w);
  }
  return out;
}

/// Apply the test pattern to each test window; the artificial targets are
/// the evaluation points. Masks depend only on masking.seed.
inline std::vector<TimeWindow> masked_test_windows(const RunConfig& cfg, const DomainDataset& test) {
  std::vector<TimeWindow> out;
  for (const auto& w : test.windows) {
    Rng rng = masking_stream(cfg.masking.seed, "test", w.window_id, 0);
    auto m = apply_test_pattern(w, cfg.masking, rng);
    if (m) out.push_back(std::move(m->window));
  }
  return out;
}

inline MetricsReport score(const ImputationExport& ex, const NormRecord& norm, Eigen::Index features,
                           double runtime_s) {
  MetricsAccumulator acc(features);
  std::vector<double> samples;
  for (std::size_t i = 0; i < ex.results.size(); ++i) {
    const auto& r = ex.results[i];
    const auto& w = ex.windows[i];
    const Matrix truth = denormalize(w.values, norm);
    const Matrix med = denormalize(r.median, norm);
    std::vector<Matrix> raw;
    for (const auto& s : r.samples) raw.push_back(denormalize(s, norm));
    for (Eigen::Index f = 0; f < w.features(); ++f)
      for (Eigen::Index l = 0; l < w.length(); ++l) {
        if (!w.artificial_mask(f, l)) continue;
        samples.clear();
        for (const auto& s : raw) samples.push_back(s(f, l));
        acc.add(f, truth(f, l), med(f, l), samples);
      }
  }
  return make_report(acc, runtime_s);
}

inline json to_json(const MetricsReport& r, const std::vector<std::string>& features) {
  json per = json::array();
  for (std::size_t f = 0; f < r.mae_per_feature.size(); ++f)
    per.push_back({{"feature", f < features.size() ? features[f] : std::to_string(f)},
                   {"mae", r.mae_per_feature[f]},
                   {"n", r.n_per_feature[f]}});
  return {{"mae", r.mae},   {"rmse", r.rmse},       {"crps", r.crps}, {"n_eval_points", r.n_eval_points},
          {"per_feature", per}, {"runtime_s", r.runtime_s}};
}

/// Test-split metrics for a trained checkpoint. Writes metrics.json,
/// imputations.csv and samples.bin into `out_dir` when it is non-empty.
inline MetricsReport evaluate(const LoadedCheckpoint& ck, const Experiment& ex, const fs::path& out_dir,
                              int n_samples) {
  const auto t0 = std::chrono::steady_clock::now();
  const RunConfig& cfg = ck.config;
  const auto sched = quadratic_schedule(cfg.schedule.steps, cfg.schedule.beta1, cfg.schedule.beta_t);
  const auto windows = masked_test_windows(cfg, ex.target.test);
  const auto imp = impute_windows(ck.model, windows, sched, n_samples, cfg.train.seed);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const auto& norm = ck.state.target_norm;
  MetricsReport rep = score(imp, norm, ck.model.spec().features, secs);
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    write_json_file(out_dir / "metrics.json", to_json(rep, ck.state.feature_names));
    write_imputations_csv(out_dir / "imputations.csv", imp, norm, ck.state.feature_names);
    write_samples(out_dir / "samples.bin", imp, norm);
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Ablation

struct AblationRow {
  std::string name;
  MetricsReport metrics;
  double train_seconds = 0.0;
};

/// Full model plus the three single-component variants.
inline std::vector<std::pair<std::string, RunConfig>> ablation_variants(const RunConfig& base) {
  std::vector<std::pair<std::string, RunConfig>> v;
  RunConfig full = base;
  full.cdca_enabled = true;
  full.fmixup.fill = FillMode::FMixup;
  v.emplace_back("full", full);
  RunConfig no_fm = full;
  no_fm.fmixup.fill = FillMode::Zero;
  v.emplace_back("w/o FMixup", no_fm);
  RunConfig li = full;
  li.fmixup.fill = FillMode::Linear;
  v.emplace_back("w/ L.I.", li);
  RunConfig no_cdca = full;
  no_cdca.cdca_enabled = false;
  v.emplace_back("w/o CDCA", no_cdca);
  return v;
}

inline std::string slug(const std::string& name) {
  std::string s;
  for (char c : name) {
    if (std::isalnum(static_cast<unsigned char>(c))) s += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    else if (!s.empty() && s.back() != '_') s += '_';
  }
  while (!s.empty() && s.back() == '_') s.pop_back();
  return s;
}

inline std::vector<AblationRow> run_ablation(const RunConfig& base, const Experiment& ex, const fs::path& out_dir,
                                             const std::function<void(const std::string&)>& progress = {}) {
  std::vector<AblationRow> rows;
  for (const auto& [name, cfg] : ablation_variants(base)) {
    if (progress) progress(name);
    const fs::path dir = out_dir / slug(name);
    Trainer tr(cfg, ex, dir);
    const auto res = tr.run();
    const auto ck = load_checkpoint(res.best_checkpoint);
    rows.push_back({name, evaluate(ck, ex, dir, cfg.train.n_samples), res.seconds});
  }
  std::ofstream os(out_dir / "ablation.csv");
  os << "variant,mae,rmse,crps,n_eval_points,train_seconds\n" << std::setprecision(10);
  for (const auto& r : rows)
    os << r.name << ',' << r.metrics.mae << ',' << r.metrics.rmse << ',' << r.metrics.crps << ','
       << r.metrics.n_eval_points << ',' << r.train_seconds << '\n';
  return rows;
}

}  // namespace cdimpute

#endif  // CDIMPUTE_TRAINER_HPP
