// tgrasp: command-line driver for the tactile grasping pipeline.

#include <cstdio>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "tgrasp/pipeline.hpp"
#include "tgrasp/teleop_server.hpp"

using namespace tgrasp;
using pipeline::json;

namespace {

std::vector<ObjectSpec> pick_objects(const std::vector<ObjectSpec>& catalog, const std::string& which,
                                     const std::vector<ObjectSpec>& all) {
  if (which == "all") return all;
  return {find_object(catalog, which)};
}

void emit(const json& summary) { std::cout << summary.dump() << std::endl; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Tactile adaptive grasping: data collection, training, evaluation and teleoperation"};
  app.require_subcommand(1);

  std::string work = ".";
  std::string catalog_path;
  std::uint64_t seed = 1;
  app.add_option("--work,-w", work, "Workspace directory (data/, models/, reports/)");
  app.add_option("--catalog", catalog_path, "Object catalog file (default: built-in presets)");
  app.add_option("--seed,-s", seed, "Random seed");

  // collect
  auto* collect = app.add_subcommand("collect", "Generate scripted-expert demonstrations");
  std::string collect_object = "all";
  bool no_noise = false;
  pipeline::CollectOptions copt;
  collect->add_option("--object", collect_object, "Object name or 'all'");
  collect->add_flag("--no-noise", no_noise, "Disable taxel noise");
  collect->add_option("--gp", copt.gp_per_object, "Initial-grasp episodes per object");
  collect->add_option("--stab-pos", copt.stab_pos_per_object, "Stable hold episodes per object");
  collect->add_option("--stab-neg", copt.stab_neg_per_object, "Drop episodes per object");
  collect->add_option("--ga", copt.ga_per_object, "Adaptation episodes per object");

  // train-gen
  auto* train_gen = app.add_subcommand("train-gen", "Train the initial grasp generator");
  GeneratorConfig gcfg;
  train_gen->add_option("--epochs", gcfg.epochs, "Epochs");
  train_gen->add_option("--lr", gcfg.lr, "Learning rate");
  train_gen->add_option("--batch", gcfg.batch, "Batch size");

  // train-est
  auto* train_est = app.add_subcommand("train-est", "Fit the stability estimator and its threshold");
  pipeline::EstimatorConfig ecfg;
  train_est->add_option("--components,-m", ecfg.m, "Mixture components");
  train_est->add_option("--max-iter", ecfg.em.max_iter, "EM iteration cap");

  // train-adapt
  auto* train_adapt = app.add_subcommand("train-adapt", "Train the grasp adapter");
  AdapterConfig acfg;
  train_adapt->add_option("--epochs", acfg.epochs, "Epochs");
  train_adapt->add_option("--lr", acfg.lr, "Learning rate");
  train_adapt->add_option("--batch", acfg.batch, "Batch size");

  // eval
  auto* eval = app.add_subcommand("eval", "Closed-loop episodes with and without adaptation");
  pipeline::EvalOptions vopt;
  std::string eval_object = "all";
  eval->add_option("--object", eval_object, "Test object name or 'all'");
  eval->add_option("--episodes", vopt.episodes_per_object, "Episodes per object");
  eval->add_option("--trace-dir", vopt.trace_dir, "Write per-episode trace files here");

  // bench
  auto* bench = app.add_subcommand("bench", "Maximum supported water fill per test object");
  std::string arm = "both";
  std::string bench_object = "all";
  bench->add_option("--adapter", arm, "none, trained or both")->check(CLI::IsMember({"none", "trained", "both"}));
  bench->add_option("--object", bench_object, "Test object name or 'all'");
  std::string initial = "expert";
  bench->add_option("--initial", initial, "Initial grasp for both arms: expert (1.5x margin) or generator")
      ->check(CLI::IsMember({"expert", "generator"}));

  // validate
  auto* validate = app.add_subcommand("validate", "Check dataset files");
  std::string validate_path;
  validate->add_option("path", validate_path, "File or directory (default: <work>/data)");

  // serve
  auto* serve = app.add_subcommand("serve", "WebSocket teleoperation server");
  ServerOptions sopt;
  std::string serve_object = "milk_bottle";
  serve->add_option("--port", sopt.port, "TCP port");
  serve->add_option("--address", sopt.address, "Bind address");
  serve->add_option("--object", serve_object, "Object to load");
  serve->add_option("--speed", sopt.speed, "Simulation speed factor")->check(CLI::PositiveNumber);

  // catalog
  auto* catalog_cmd = app.add_subcommand("catalog", "Print the object catalog");

  CLI11_PARSE(app, argc, argv);

  try {
    const auto catalog = catalog_path.empty() ? default_catalog() : load_catalog(catalog_path);
    const auto tests = test_objects(catalog);
    pipeline::Workspace ws{work};

    if (*collect) {
      copt.objects = pick_objects(catalog, collect_object, catalog);
      copt.seed = seed;
      copt.tactile.noise = !no_noise;
      emit(pipeline::collect(ws, copt));
    } else if (*train_gen) {
      gcfg.seed = seed;
      emit(pipeline::train_gen(ws, gcfg));
    } else if (*train_est) {
      ecfg.seed = seed;
      emit(pipeline::train_est(ws, ecfg));
    } else if (*train_adapt) {
      acfg.seed = seed;
      emit(pipeline::train_adapt(ws, acfg));
    } else if (*eval) {
      vopt.objects = pick_objects(catalog, eval_object, tests);
      vopt.seed = seed;
      emit(pipeline::eval(ws, vopt));
    } else if (*bench) {
      pipeline::BenchOptions bopt;
      bopt.objects = pick_objects(catalog, bench_object, tests);
      bopt.seed = seed;
      bopt.none = arm != "trained";
      bopt.trained = arm != "none";
      bopt.generator_grasp = initial == "generator";
      emit(pipeline::bench_cmd(ws, bopt));
    } else if (*validate) {
      const auto r = pipeline::validate_tree(validate_path.empty() ? ws.data_dir() : pipeline::fs::path(validate_path));
      for (const auto& f : r.failures) std::cerr << f << '\n';
      emit({{"command", "validate"}, {"files", r.files}, {"failures", r.failures.size()}});
      return r.failures.empty() ? 0 : 1;
    } else if (*serve) {
      TeleopOptions topt;
      topt.object = find_object(catalog, serve_object);
      topt.seed = seed;
      topt.record_root = ws.root;
      std::optional<StabilityEstimator> est;
      if (pipeline::fs::exists(ws.estimator_path())) {
        est = StabilityEstimator::load(ws.estimator_path().string());
        topt.estimator = &*est;
      }
      TeleopServer server(topt, sopt);
      std::cerr << "listening on ws://" << sopt.address << ":" << server.port() << std::endl;
      server.run();
      emit({{"command", "serve"}, {"recordings", server.session().written_files()}});
    } else if (*catalog_cmd) {
      std::cout << format_catalog(catalog);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 1;
  }
  return 0;
}
