#include <CLI11.hpp>

#include "commands.hpp"

int main(int argc, char** argv) {
  CLI::App app{"hseg: hierarchical ensemble lung segmentation at desk scale"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();

  hseg::cli::SynthOpts synth_opts;
  std::uint64_t seed_value = 0;
  CLI::App* synth = app.add_subcommand("synth", "Generate a synthetic phantom dataset");
  synth->add_option("--config", synth_opts.config_path, "key=value run configuration file");
  synth->add_option("--out-dir", synth_opts.out_dir, "output dataset directory")->required();
  CLI::Option* synth_seed = synth->add_option("--seed", seed_value, "dataset seed override");

  hseg::cli::TrainOpts train_opts;
  std::uint64_t train_seed_value = 0;
  int train_k = 0;
  CLI::App* train = app.add_subcommand("train", "Train a K-member HU-Net ensemble");
  train->add_option("--config", train_opts.config_path, "key=value run configuration file");
  train->add_option("--data", train_opts.manifest_path, "dataset manifest (train split is used)")
      ->required();
  train->add_option("--out", train_opts.out_dir, "checkpoint output directory")->required();
  CLI::Option* train_k_opt =
      train->add_option("--ensemble-k", train_k, "number of ensemble members");
  train->add_option("--jobs", train_opts.jobs,
                    "concurrent member trainings (0 = one per member)");
  train->add_flag("--force", train_opts.force, "overwrite existing checkpoints");
  CLI::Option* train_seed = train->add_option("--seed", train_seed_value, "base seed override");

  hseg::cli::PredictOpts predict_opts;
  CLI::App* predict = app.add_subcommand("predict", "Ensemble prediction for one image");
  predict->add_option("--models", predict_opts.models_dir, "directory of .hseg checkpoints")
      ->required();
  predict->add_option("--image", predict_opts.image_path, "input PGM image")->required();
  predict->add_option("--out-soft", predict_opts.out_soft, "output soft map (SSEG)");
  predict->add_option("--out-labels", predict_opts.out_labels, "output label map (PGM)");

  hseg::cli::EvaluateOpts evaluate_opts;
  CLI::App* evaluate = app.add_subcommand("evaluate", "Segmentation metrics report");
  evaluate->add_option("--pred-dir", evaluate_opts.pred_dir, "predicted label maps")->required();
  evaluate->add_option("--gt-dir", evaluate_opts.gt_dir, "ground-truth label maps")->required();
  evaluate->add_option("--out", evaluate_opts.out_csv, "output metrics CSV")->required();

  hseg::cli::UncertaintyOpts uncertainty_opts;
  CLI::App* uncertainty =
      app.add_subcommand("uncertainty", "Per-slice ensemble entropy (and rater agreement)");
  uncertainty->add_option("--models", uncertainty_opts.models_dir, "directory of checkpoints")
      ->required();
  uncertainty->add_option("--data", uncertainty_opts.manifest_path, "dataset manifest")
      ->required();
  uncertainty->add_option("--split", uncertainty_opts.split, "train, test or all");
  uncertainty->add_option("--gt2", uncertainty_opts.gt2_dir,
                          "second annotation directory (enables the correlation report)");
  uncertainty->add_option("--out", uncertainty_opts.out_csv, "output CSV")->required();

  hseg::cli::SeverityOpts severity_opts;
  CLI::App* severity = app.add_subcommand("severity", "Per-volume infection extent and gravity");
  severity->add_option("--models", severity_opts.models_dir, "directory of checkpoints");
  severity->add_option("--data", severity_opts.manifest_path, "dataset manifest")->required();
  severity->add_option("--split", severity_opts.split, "train, test or all");
  severity->add_option("--out", severity_opts.out_csv, "output CSV")->required();
  severity->add_flag("--use-gt", severity_opts.use_gt,
                     "compute ratios from ground-truth labels instead of predictions");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return hseg::cli::kExitUsage;
  }

  if (app.got_subcommand(synth)) {
    if (*synth_seed) synth_opts.seed = seed_value;
    return hseg::cli::cmd_synth(synth_opts);
  }
  if (app.got_subcommand(train)) {
    if (*train_seed) train_opts.seed = train_seed_value;
    if (*train_k_opt) train_opts.ensemble_k = train_k;
    return hseg::cli::cmd_train(train_opts);
  }
  if (app.got_subcommand(predict)) return hseg::cli::cmd_predict(predict_opts);
  if (app.got_subcommand(evaluate)) return hseg::cli::cmd_evaluate(evaluate_opts);
  if (app.got_subcommand(uncertainty)) return hseg::cli::cmd_uncertainty(uncertainty_opts);
  if (app.got_subcommand(severity)) return hseg::cli::cmd_severity(severity_opts);
  return hseg::cli::kExitUsage;
}
