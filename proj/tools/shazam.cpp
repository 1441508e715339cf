#include <CLI11.hpp>

#include <iostream>

#include "shazam/cli/ablate.hpp"
#include "shazam/cli/commands.hpp"
#include "shazam/core/log.hpp"

using namespace shazam;

int main(int argc, char** argv) {
  CLI::App app{"shazam: multi-teacher multi-scale feature fusion"};
  app.require_subcommand(1);
  app.fallthrough();
  std::uint64_t seed = 0;
  std::size_t jobs = 1;
  bool verbose = false;
  app.add_option("--seed", seed, "random seed")->capture_default_str();
  app.add_option("--jobs", jobs, "worker threads for ablate")->check(CLI::PositiveNumber)->capture_default_str();
  app.add_flag("-v,--verbose", verbose, "progress on stderr");

  cli::SynthOptions so;
  auto* synth = app.add_subcommand("synth", "synthesize (or import) a teacher feature set");
  synth->add_option("--config", so.config, "key=value config")->required();
  synth->add_option("--out", so.out, "output container path")->required();

  cli::TrainOptions to;
  std::size_t fold = 0, folds = 0;
  double lambda = 0.0;
  auto* train = app.add_subcommand("train", "train one fold and write a checkpoint");
  train->add_option("data", to.data, "feature container")->required();
  train->add_option("--task", to.task, "classification | expression | survival")->required();
  train->add_option("--preset", to.preset, "tile | tile-baseline | st | survival");
  train->add_option("--out", to.out, "output directory")->required();
  auto* cfg_opt = train->add_option("--config", "key=value overrides");
  auto* lambda_opt = train->add_option("--lambda-distill", lambda, "distillation weight");
  train->add_flag("--no-moe", to.no_moe, "uniform 1/N weights in place of the gate");
  auto* scales_opt = train->add_option("--scales", "active scales, e.g. low,high");
  auto* fold_opt = train->add_option("--fold", fold, "held-out fold index");
  auto* folds_opt = train->add_option("--folds", folds, "number of patient folds");
  auto* baseline_opt = train->add_option("--baseline", "single-teacher baseline on this teacher's high-level features");

  cli::EvalOptions eo;
  auto* eval = app.add_subcommand("eval", "evaluate a train run on its held-out fold");
  eval->add_option("run", eo.run, "train output directory")->required();
  auto* data_opt = eval->add_option("--data", "feature container (default: the one recorded by train)");
  auto* eval_out = eval->add_option("--out", "output directory (default: the run directory)");
  eval->add_option("--replicates", eo.replicates, "bootstrap replicates")->capture_default_str();
  eval->add_option("--task-name", eo.task_name, "task name in results.csv");
  eval->add_option("--model-name", eo.model_name, "model name in results.csv");

  cli::AblateOptions ao;
  auto* ablate = app.add_subcommand("ablate", "teacher removal, scale combination or MoE on/off");
  ablate->add_option("data", ao.data, "feature container")->required();
  ablate->add_option("--kind", ao.kind, "teacher_removal | scale_combo | moe_switch")->required();
  ablate->add_option("--out-dir", ao.out_dir, "output directory")->required();
  ablate->add_option("--repeats", ao.repeats, "seeded repeats")->capture_default_str();
  ablate->add_option("--max-folds", ao.max_folds, "limit folds (0 = all)")->capture_default_str();
  auto* ablate_cfg = ablate->add_option("--config", "key=value overrides");

  cli::ReportOptions ro;
  auto* report = app.add_subcommand("report", "rank tables, Wilcoxon tests and plots");
  report->add_option("input", ro.input, "fixture dir, root with benchmarks/, or results tree")->required();
  report->add_option("--out", ro.out, "output directory")->required();
  report->add_option("--reference", ro.reference, "model compared against the rest")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? cli::kExitOk : cli::kExitUsage;
  }
  log::set_level(verbose ? log::Level::Info : log::Level::Warn);

  try {
    if (*synth) {
      so.seed = seed;
      cli::cmd_synth(so);
    } else if (*train) {
      to.seed = seed;
      if (*cfg_opt) to.config = cfg_opt->as<std::string>();
      if (*lambda_opt) to.lambda_distill = lambda;
      if (*scales_opt) to.scales = scales_opt->as<std::string>();
      if (*fold_opt) to.fold = fold;
      if (*folds_opt) to.folds = folds;
      if (*baseline_opt) to.baseline = baseline_opt->as<std::string>();
      const auto r = cli::cmd_train(to);
      if (!r.train.epochs.empty()) {
        const auto& last = r.train.epochs.back();
        std::cout << "trained " << last.epoch + 1 << " epochs (best " << r.train.best_epoch
                  << "), final " << last.split << " loss " << last.total << "\n";
      }
    } else if (*eval) {
      eo.seed = seed;
      if (*data_opt) eo.data = data_opt->as<std::string>();
      if (*eval_out) eo.out = eval_out->as<std::string>();
      for (const auto& m : cli::cmd_eval(eo).metrics)
        std::cout << m.metric << " " << m.point << " [" << m.ci_low << ", " << m.ci_high << "]\n";
    } else if (*ablate) {
      ao.seed = seed;
      ao.jobs = jobs;
      if (*ablate_cfg) ao.config = ablate_cfg->as<std::string>();
      const auto r = cli::cmd_ablate(ao);
      for (const auto& row : r.summary)
        std::cout << row.config << " " << row.metric << " " << row.report.point << "\n";
    } else if (*report) {
      const auto r = cli::cmd_report(ro);
      for (const auto& m : r.ranks.models)
        std::cout << m.model << " mean_rank " << m.mean_rank << " firsts " << m.firsts << "/" << m.tasks << "\n";
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return cli::exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return cli::kExitUsage;
  }
  return cli::kExitOk;
}
