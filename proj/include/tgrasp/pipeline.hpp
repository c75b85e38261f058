#pragma once

// The end-to-end commands behind the CLI. Every command reads and writes a
// workspace directory and returns a one-line JSON summary.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "tgrasp/adapter.hpp"
#include "tgrasp/closed_loop.hpp"
#include "tgrasp/dataset.hpp"
#include "tgrasp/errors.hpp"
#include "tgrasp/expert.hpp"
#include "tgrasp/generator.hpp"
#include "tgrasp/objects.hpp"
#include "tgrasp/split.hpp"
#include "tgrasp/stability.hpp"

namespace tgrasp::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

struct Workspace {
  fs::path root = ".";

  fs::path data_dir() const { return root / "data"; }
  fs::path models_dir() const { return root / "models"; }
  fs::path reports_dir() const { return root / "reports"; }
  fs::path generator_path() const { return models_dir() / "generator.tgm"; }
  fs::path estimator_path() const { return models_dir() / "estimator.tgm"; }
  fs::path adapter_path() const { return models_dir() / "adapter.tgm"; }
};

inline void require_file(const fs::path& p, const std::string& hint) {
  if (!fs::exists(p)) throw DataError("missing " + p.string() + " (" + hint + ")");
}

inline void write_text(const fs::path& p, const std::string& text) {
  fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw DataError("cannot write " + p.string());
  out << text;
}

inline std::string history_text(const std::vector<EpochLoss>& h) {
  std::ostringstream os;
  os << std::setprecision(17) << "epoch\ttrain_mse\tval_mse\n";
  for (const auto& e : h) os << e.epoch << '\t' << e.train_mse() << '\t' << e.val_mse() << '\n';
  return os.str();
}

inline std::vector<EpisodeRecord> load_kind(const Workspace& ws, DatasetKind kind, const std::string& hint) {
  const auto files = list_datasets(ws.root, kind);
  if (files.empty()) {
    throw DataError("no " + std::string(to_string(kind)) + " datasets under " +
                    (ws.data_dir() / std::string(to_string(kind))).string() + " (" + hint + ")");
  }
  std::vector<EpisodeRecord> out;
  for (const auto& f : files) out.push_back(read_dataset(f));
  return out;
}

// ---------------------------------------------------------------------------
// collect

struct CollectOptions {
  std::vector<ObjectSpec> objects = default_catalog();
  std::uint64_t seed = 1;
  int gp_per_object = 3;
  int stab_pos_per_object = 1;
  int stab_neg_per_object = 1;
  int ga_per_object = 5;
  TactileOptions tactile;
};

// Seed of the k-th episode recorded for one object in a run.
inline std::uint64_t episode_seed(std::uint64_t run_seed, int k) { return run_seed * 1000 + static_cast<std::uint64_t>(k); }

inline json collect(const Workspace& ws, const CollectOptions& opt) {
  std::size_t files = 0, frames = 0;
  std::array<std::size_t, 3> per_kind{};
  const std::vector<std::pair<Scenario, int>> plan = {{Scenario::gp, opt.gp_per_object},
                                                      {Scenario::stab_pos, opt.stab_pos_per_object},
                                                      {Scenario::stab_neg, opt.stab_neg_per_object},
                                                      {Scenario::ga, opt.ga_per_object}};
  for (const auto& object : opt.objects) {
    int k = 0;
    for (const auto& [scenario, count] : plan) {
      for (int i = 0; i < count; ++i, ++k) {
        const auto seed = episode_seed(opt.seed, k);
        auto rec = scripted_expert_episode(object, scenario, seed, {opt.tactile});
        write_dataset(dataset_path(ws.root, rec.header.kind, object.name, seed), rec);
        ++files;
        frames += rec.frames.size();
        ++per_kind[static_cast<std::size_t>(rec.header.kind)];
      }
    }
  }
  return {{"command", "collect"},  {"files", files},        {"frames", frames}, {"gp", per_kind[0]},
          {"stab", per_kind[1]},     {"ga", per_kind[2]},     {"objects", opt.objects.size()},
          {"seed", opt.seed}};
}

// ---------------------------------------------------------------------------
// train-gen

// Frames from first contact until the lift are demonstrations (S, theta) ->
// target; the generator is queried at contact, so held frames are left out.
inline std::vector<GraspSample> grasp_samples(const std::vector<EpisodeRecord>& records) {
  std::vector<GraspSample> out;
  for (const auto& r : records) {
    for (const auto& f : r.frames) {
      if (f.label != FrameLabel::na) continue;
      out.push_back({f.S, f.theta_deg, std::clamp(f.theta_deg + f.dtheta_deg, sim::kThetaMin, sim::kThetaMax)});
    }
  }
  return out;
}

inline json train_gen(const Workspace& ws, const GeneratorConfig& cfg) {
  const auto records = load_kind(ws, DatasetKind::gp, "run collect first");
  const auto t = train_generator(grasp_samples(records), cfg);
  fs::create_directories(ws.models_dir());
  t.model.save(ws.generator_path().string());
  write_text(ws.reports_dir() / "generator_history.tsv", history_text(t.history));
  const auto& last = t.history.back();
  return {{"command", "train-gen"},
          {"model", ws.generator_path().string()},
          {"n_train", t.n_train},
          {"n_val", t.n_val},
          {"val_mse", last.val_mse()},
          {"train_mse", last.train_mse()},
          {"val_label_variance", t.val_label_variance},
          {"val_mse_over_variance", last.val_mse() / t.val_label_variance},
          {"epochs", cfg.epochs}};
}

// ---------------------------------------------------------------------------
// train-est

struct EstimatorConfig {
  std::size_t m = 2;
  std::uint64_t seed = 1;
  EmConfig em;
};

struct LabelledFeatures {
  std::vector<Vec> stable;
  std::vector<Vec> unstable;
};

// Frames before the lift and the terminal drop frame carry no stability label.
inline LabelledFeatures labelled_features(const std::vector<EpisodeRecord>& records) {
  LabelledFeatures out;
  for (const auto& r : records) {
    for (const auto& f : r.frames) {
      if (f.label == FrameLabel::stable) out.stable.push_back(GraspFeature::pack(f.S, f.theta_deg, f.P).x);
      if (f.label == FrameLabel::unstable) out.unstable.push_back(GraspFeature::pack(f.S, f.theta_deg, f.P).x);
    }
  }
  return out;
}

inline double likelihood_auc(const GmmModel& g, const LabelledFeatures& lf) {
  std::vector<double> ps, pu;
  for (const auto& x : lf.stable) ps.push_back(gmm_log_likelihood(g, x));
  for (const auto& x : lf.unstable) pu.push_back(gmm_log_likelihood(g, x));
  return roc_auc(ps, pu);
}

inline json train_est(const Workspace& ws, const EstimatorConfig& cfg) {
  auto records = load_kind(ws, DatasetKind::stab, "run collect first");
  const auto split = split_dataset(records, cfg.seed);
  const auto train = labelled_features(split.train);
  const auto val = labelled_features(split.val);
  if (train.stable.empty() || train.unstable.empty()) throw DataError("training episodes lack stable or unstable frames");

  StabilityEstimator est;
  est.gmm = em_fit(train.stable, cfg.m, cfg.seed, cfg.em);
  const auto report = select_threshold(est.gmm, train.stable, train.unstable);
  est.te = report.te;
  fs::create_directories(ws.models_dir());
  est.save(ws.estimator_path().string());
  write_text(ws.reports_dir() / "threshold.txt", report.to_text());

  json out = {{"command", "train-est"},
              {"model", ws.estimator_path().string()},
              {"m", cfg.m},
              {"em_iterations", est.gmm.log_likelihood_history().size() - 1},
              {"te", report.te},
              {"a", report.a},
              {"b", report.b},
              {"clamped_to_bounds", report.clamped},
              {"train_tpr", report.chosen_tpr},
              {"train_fpr", report.chosen_fpr},
              {"n_stable", train.stable.size()},
              {"n_unstable", train.unstable.size()}};
  if (!val.stable.empty() && !val.unstable.empty()) out["val_auc"] = likelihood_auc(est.gmm, val);
  return out;
}

// ---------------------------------------------------------------------------
// train-adapt

inline json train_adapt(const Workspace& ws, const AdapterConfig& cfg) {
  const auto records = load_kind(ws, DatasetKind::ga, "run collect first");
  const auto t = train_adapter(windows_from_episodes(records), cfg);
  fs::create_directories(ws.models_dir());
  t.model.save(ws.adapter_path().string());
  write_text(ws.reports_dir() / "adapter_history.tsv", history_text(t.history));
  const auto& last = t.history.back();
  return {{"command", "train-adapt"},
          {"model", ws.adapter_path().string()},
          {"n_train", t.n_train},
          {"n_val", t.n_val},
          {"val_mse", last.val_mse()},
          {"train_mse", last.train_mse()},
          {"val_label_variance", t.val_label_variance},
          {"val_mse_over_variance", last.val_mse() / t.val_label_variance},
          {"epochs", cfg.epochs}};
}

// ---------------------------------------------------------------------------
// eval and bench

struct LoadedModels {
  GeneratorModel generator;
  StabilityEstimator estimator;
  AdapterModel adapter;
  bool has_adapter = false;
};

inline LoadedModels load_models(const Workspace& ws, bool need_adapter) {
  LoadedModels m;
  require_file(ws.generator_path(), "run train-gen first");
  require_file(ws.estimator_path(), "run train-est first");
  m.generator = GeneratorModel::load(ws.generator_path().string());
  m.estimator = StabilityEstimator::load(ws.estimator_path().string());
  if (need_adapter) {
    require_file(ws.adapter_path(), "run train-adapt first");
    m.adapter = AdapterModel::load(ws.adapter_path().string());
    m.has_adapter = true;
  }
  return m;
}

// Random disturbance schedule of the same family the demonstrations saw.
inline std::vector<ScheduledDisturbance> random_schedule(const ObjectSpec& object, std::uint64_t seed,
                                                         std::int64_t horizon) {
  Rng rng(hash_combine(seed, 0xE7A1ULL));
  std::vector<std::pair<std::int64_t, DisturbanceEvent>> raw;
  detail::append_disturbances(raw, object, rng, static_cast<int>(horizon));
  std::vector<ScheduledDisturbance> out;
  for (const auto& [at, ev] : raw) out.push_back({at, ev});
  return out;
}

struct EvalOptions {
  std::vector<ObjectSpec> objects = test_objects();
  std::uint64_t seed = 1;
  int episodes_per_object = 20;
  std::int64_t max_ticks = bench::kEpisodeTicks;
  std::string trace_dir;  // empty: no traces
};

inline double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline json eval(const Workspace& ws, const EvalOptions& opt) {
  const auto m = load_models(ws, true);
  if (!opt.trace_dir.empty()) fs::create_directories(opt.trace_dir);
  json per_object = json::array();
  std::ostringstream table;
  table << "object\tseed\tarm\tdropped\tticks_survived\tadaptations\n";
  for (const auto& object : opt.objects) {
    std::vector<double> none_ticks, trained_ticks;
    for (int e = 0; e < opt.episodes_per_object; ++e) {
      const std::uint64_t seed = episode_seed(opt.seed, e);
      const auto schedule = random_schedule(object, seed, opt.max_ticks);
      ClosedLoopConfig cfg;
      cfg.max_ticks = opt.max_ticks;
      for (int arm = 0; arm < 2; ++arm) {
        const auto r = run_closed_loop(reset(object, seed), &m.generator, m.estimator, arm ? &m.adapter : nullptr,
                                       schedule, cfg);
        (arm ? trained_ticks : none_ticks).push_back(static_cast<double>(r.ticks_survived));
        table << object.name << '\t' << seed << '\t' << (arm ? "trained" : "none") << '\t' << (r.dropped ? 1 : 0)
              << '\t' << r.ticks_survived << '\t' << r.adaptations << '\n';
        if (!opt.trace_dir.empty()) {
          r.write_trace((fs::path(opt.trace_dir) / (object.name + "_" + std::to_string(seed) + "_" +
                                                     (arm ? "trained" : "none") + ".tsv"))
                            .string());
        }
      }
    }
    per_object.push_back({{"object", object.name},
                          {"median_ticks_none", median(none_ticks)},
                          {"median_ticks_trained", median(trained_ticks)}});
  }
  write_text(ws.reports_dir() / "eval.tsv", table.str());
  return {{"command", "eval"}, {"episodes_per_object", opt.episodes_per_object}, {"objects", per_object}};
}

struct BenchOptions {
  std::vector<ObjectSpec> objects = test_objects();
  std::uint64_t seed = 1;
  bool none = true;
  bool trained = true;
  // Both arms start from the same grasp: the expert's 1.5x capacity margin,
  // or whatever the generator predicts at contact.
  bool generator_grasp = false;
};

inline json bench_cmd(const Workspace& ws, const BenchOptions& opt) {
  const auto m = load_models(ws, opt.trained);
  json per_object = json::array();
  std::ostringstream table;
  table << std::setprecision(9) << "object\tnone_g\ttrained_g\timprovement\n";
  double sum_impr = 0.0;
  std::size_t n_impr = 0;
  bool all_strict = true;
  for (const auto& object : opt.objects) {
    json row = {{"object", object.name}};
    int none_g = -1, trained_g = -1;
    std::optional<double> initial;
    if (!opt.generator_grasp) initial = expert_grasp_angle(object);
    if (opt.none) {
      none_g = bench_max_weight(object, {&m.generator, &m.estimator, nullptr, initial}, opt.seed).max_grams;
      row["none_g"] = none_g;
    }
    if (opt.trained) {
      trained_g = bench_max_weight(object, {&m.generator, &m.estimator, &m.adapter, initial}, opt.seed).max_grams;
      row["trained_g"] = trained_g;
    }
    table << object.name << '\t' << none_g << '\t' << trained_g << '\t';
    if (opt.none && opt.trained) {
      all_strict = all_strict && trained_g > none_g;
      if (none_g > 0) {
        const double impr = static_cast<double>(trained_g - none_g) / static_cast<double>(none_g);
        row["improvement"] = impr;
        sum_impr += impr;
        ++n_impr;
        table << impr;
      } else {
        table << "nan";
      }
    }
    table << '\n';
    per_object.push_back(row);
  }
  write_text(ws.reports_dir() / "bench.tsv", table.str());
  json out = {{"command", "bench"},
              {"seed", opt.seed},
              {"initial_grasp", opt.generator_grasp ? "generator" : "expert"},
              {"objects", per_object}};
  if (opt.none && opt.trained) {
    out["all_strictly_improved"] = all_strict;
    out["mean_improvement"] = n_impr ? sum_impr / static_cast<double>(n_impr) : 0.0;
  }
  return out;
}

// ---------------------------------------------------------------------------
// validate

struct ValidateResult {
  std::size_t files = 0;
  std::vector<std::string> failures;  // "path:line: message"
};

inline ValidateResult validate_tree(const fs::path& dir) {
  if (!fs::exists(dir)) throw DataError("nothing to validate: " + dir.string() + " does not exist");
  std::vector<fs::path> files;
  if (fs::is_regular_file(dir)) {
    files.push_back(dir);
  } else {
    for (const auto& e : fs::recursive_directory_iterator(dir)) {
      if (e.is_regular_file() && e.path().extension() == ".tsv") files.push_back(e.path());
    }
  }
  std::sort(files.begin(), files.end());
  ValidateResult r;
  for (const auto& f : files) {
    ++r.files;
    for (const auto& issue : validate_file(f.string())) {
      r.failures.push_back(f.string() + ":" + std::to_string(issue.line) + ": " + issue.message);
    }
  }
  return r;
}

}  // namespace tgrasp::pipeline
