#include "commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <memory>
#include <set>
#include <vector>

#include "hseg/checkpoint.hpp"
#include "hseg/ensemble.hpp"
#include "hseg/image_io.hpp"
#include "hseg/manifest.hpp"
#include "hseg/metrics.hpp"
#include "hseg/phantom.hpp"
#include "hseg/run_config.hpp"
#include "hseg/severity.hpp"
#include "hseg/softmap_io.hpp"

namespace fs = std::filesystem;

namespace hseg::cli {

namespace {

RunConfig load_run_config(const CommonOpts& opts) {
  RunConfig cfg = opts.config_path.empty() ? RunConfig() : RunConfig::load(opts.config_path);
  return cfg;
}

std::string member_checkpoint_name(int m) { return "member_" + std::to_string(m) + ".hseg"; }

std::vector<fs::path> list_checkpoints(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("model directory " + dir.string() + " does not exist");
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".hseg") {
      files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) {
    throw ConfigError("no .hseg checkpoints in " + dir.string());
  }
  return files;
}

struct LoadedModels {
  std::vector<std::unique_ptr<SegModel>> owned;
  std::vector<const SegModel*> views;
};

LoadedModels load_models(const fs::path& dir) {
  LoadedModels models;
  for (const fs::path& p : list_checkpoints(dir)) {
    models.owned.push_back(load_model_checkpoint(p));
    models.views.push_back(models.owned.back().get());
  }
  return models;
}

std::vector<TrainingSample> to_training_samples(std::vector<LoadedSlice> slices) {
  std::vector<TrainingSample> out;
  out.reserve(slices.size());
  for (LoadedSlice& s : slices) out.push_back({std::move(s.image), std::move(s.labels)});
  return out;
}

std::string slice_name(const SliceRecord& r) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s_slice%02d", r.volume_id.c_str(), r.slice_index);
  return buf;
}

}  // namespace

int cmd_synth(const SynthOpts& opts) {
  return guarded([&] {
    RunConfig cfg = load_run_config(opts);
    if (opts.seed) cfg.phantom.seed = *opts.seed;
    cfg.phantom.validate();

    const fs::path out_dir = opts.out_dir;
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (!fs::is_directory(out_dir)) {
      throw IoError("cannot create output directory " + out_dir.string());
    }
    // Probe writability before generating anything.
    {
      const fs::path probe = out_dir / ".hseg_write_probe";
      std::ofstream f(probe);
      if (!f) throw IoError("output directory not writable: " + out_dir.string());
      f.close();
      fs::remove(probe, ec);
    }

    DatasetManifest manifest = generate_phantom_dataset(cfg.phantom, out_dir);

    std::array<std::int64_t, kNumClasses> counts{};
    std::int64_t total = 0;
    for (const SliceRecord& r : manifest.records) {
      LabelMap labels = read_labels_pgm(out_dir / r.label_path);
      for (std::uint8_t v : labels.values()) ++counts[v];
      total += labels.size();
    }
    std::printf("volumes: %d (train %d, test %d)\n", cfg.phantom.n_volumes,
                cfg.phantom.train_volumes, cfg.phantom.n_volumes - cfg.phantom.train_volumes);
    std::printf("slices: %zu\n", manifest.records.size());
    const char* class_names[kNumClasses] = {"non_lung", "healthy_lung", "ggo", "con"};
    for (int l = 0; l < kNumClasses; ++l) {
      std::printf("class %s: %lld pixels (%.2f%%)\n", class_names[l],
                  static_cast<long long>(counts[static_cast<std::size_t>(l)]),
                  100.0 * static_cast<double>(counts[static_cast<std::size_t>(l)]) /
                      static_cast<double>(total));
    }
    return kExitOk;
  });
}

int cmd_train(const TrainOpts& opts) {
  return guarded([&] {
    RunConfig cfg = load_run_config(opts);
    if (opts.seed) cfg.ensemble.base_seed = *opts.seed;
    if (opts.ensemble_k) cfg.ensemble.k = *opts.ensemble_k;
    cfg.ensemble.validate();
    cfg.ensemble.train.validate(std::max(cfg.ensemble.lnet.spatial_divisor(),
                                         cfg.ensemble.cnet.spatial_divisor()));

    DatasetManifest manifest = DatasetManifest::load(opts.manifest_path);
    manifest.validate();
    std::vector<TrainingSample> data = to_training_samples(load_slices(manifest, "train"));
    if (data.empty()) throw ConfigError("manifest has no train split records");

    if (cfg.auto_class_weights) {
      cfg.ensemble.train.loss.class_weights = inverse_frequency_weights(data);
    }

    const fs::path out_dir = opts.out_dir;
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (!fs::is_directory(out_dir)) {
      throw IoError("cannot create output directory " + out_dir.string());
    }
    for (int m = 0; m < cfg.ensemble.k; ++m) {
      const fs::path ckpt = out_dir / member_checkpoint_name(m);
      if (fs::exists(ckpt) && !opts.force) {
        throw ConfigError("checkpoint " + ckpt.string() + " exists; pass --force to overwrite");
      }
    }

    std::vector<EnsembleMember> members = train_ensemble(data, cfg.ensemble, opts.jobs);
    for (int m = 0; m < cfg.ensemble.k; ++m) {
      const EnsembleMember& member = members[static_cast<std::size_t>(m)];
      save_checkpoint(member.model, out_dir / member_checkpoint_name(m));
      std::ofstream trace(out_dir / ("member_" + std::to_string(m) + "_loss.csv"),
                          std::ios::trunc);
      if (!trace) throw IoError("cannot write loss trace for member " + std::to_string(m));
      write_loss_trace_csv(trace, member.train_result.trace);
      const TraceRow& last = member.train_result.trace.back();
      std::printf("member %d: %zu steps, final total loss %.6g\n", m,
                  member.train_result.trace.size(), static_cast<double>(last.total));
    }
    return kExitOk;
  });
}

int cmd_predict(const PredictOpts& opts) {
  return guarded([&] {
    if (opts.out_soft.empty() && opts.out_labels.empty()) {
      throw ConfigError("nothing to do: pass --out-soft and/or --out-labels");
    }
    LoadedModels models = load_models(opts.models_dir);
    Tensor image = read_image_pgm(opts.image_path);
    EnsemblePrediction pred = ensemble_predict(models.views, image);
    if (!opts.out_soft.empty()) write_softmap(opts.out_soft, pred.class_soft.probs());
    if (!opts.out_labels.empty()) write_labels_pgm(opts.out_labels, hard_labels(pred.class_soft));
    return kExitOk;
  });
}

int cmd_evaluate(const EvaluateOpts& opts) {
  return guarded([&] {
    auto list_pgms = [](const fs::path& dir) {
      if (!fs::is_directory(dir)) throw IoError("directory " + dir.string() + " does not exist");
      std::set<std::string> names;
      for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".pgm") {
          names.insert(entry.path().filename().string());
        }
      }
      return names;
    };
    const std::set<std::string> pred_names = list_pgms(opts.pred_dir);
    const std::set<std::string> gt_names = list_pgms(opts.gt_dir);
    std::string missing;
    for (const std::string& n : gt_names) {
      if (!pred_names.count(n)) missing += " pred/" + n;
    }
    for (const std::string& n : pred_names) {
      if (!gt_names.count(n)) missing += " gt/" + n;
    }
    if (!missing.empty()) throw ConfigError("prediction/gt file sets differ:" + missing);
    if (gt_names.empty()) throw ConfigError("no .pgm label maps to evaluate");

    MetricReport report;
    for (const std::string& name : gt_names) {
      LabelMap pred = read_labels_pgm(fs::path(opts.pred_dir) / name);
      LabelMap gt = read_labels_pgm(fs::path(opts.gt_dir) / name);
      std::string id = name;
      if (id.size() > 4 && id.ends_with(".pgm")) id = id.substr(0, id.size() - 4);
      report.slices.push_back(evaluate_slice(id, pred, gt));
    }
    report.aggregate();

    std::ofstream out(opts.out_csv, std::ios::trunc);
    if (!out) throw IoError("cannot write report " + opts.out_csv);
    write_metric_report_csv(out, report);

    std::printf("aggregate: dice_ggo %.4f, dice_con %.4f, dice_binary %.4f, f1 %.4f\n",
                report.dice_ggo.mean, report.dice_con.mean, report.dice_binary.mean,
                report.f1.mean);
    std::printf(
        "aggregate: mhd_ggo %.4f+-%.4f (%d excluded), mhd_con %.4f+-%.4f (%d excluded), "
        "mhd_binary %.4f+-%.4f (%d excluded)\n",
        report.mhd_ggo.mean, report.mhd_ggo.stddev, report.mhd_ggo.excluded, report.mhd_con.mean,
        report.mhd_con.stddev, report.mhd_con.excluded, report.mhd_binary.mean,
        report.mhd_binary.stddev, report.mhd_binary.excluded);
    return kExitOk;
  });
}

int cmd_uncertainty(const UncertaintyOpts& opts) {
  return guarded([&] {
    LoadedModels models = load_models(opts.models_dir);
    DatasetManifest manifest = DatasetManifest::load(opts.manifest_path);
    manifest.validate();
    const std::string split = opts.split == "all" ? "" : opts.split;
    std::vector<LoadedSlice> slices = load_slices(manifest, split);
    if (slices.empty()) throw ConfigError("manifest has no records for split " + opts.split);

    std::vector<double> entropies, rater_dices;
    std::ofstream out(opts.out_csv, std::ios::trunc);
    if (!out) throw IoError("cannot write " + opts.out_csv);
    out << (opts.gt2_dir.empty() ? "slice_id,entropy\n" : "slice_id,entropy,rater_dice\n");
    char buf[160];
    for (const LoadedSlice& s : slices) {
      EnsemblePrediction pred = ensemble_predict(models.views, s.image);
      LabelMap hard = hard_labels(pred.class_soft);
      const double entropy = slice_uncertainty(pred.class_soft, hard);
      entropies.push_back(entropy);
      if (opts.gt2_dir.empty()) {
        std::snprintf(buf, sizeof(buf), "%s,%.9g\n", slice_name(s.record).c_str(), entropy);
      } else {
        const fs::path gt2_path =
            fs::path(opts.gt2_dir) / fs::path(s.record.label_path).filename();
        LabelMap gt2 = read_labels_pgm(gt2_path);
        const double rater_dice = binary_pathology_dice(s.labels, gt2);
        rater_dices.push_back(rater_dice);
        std::snprintf(buf, sizeof(buf), "%s,%.9g,%.9g\n", slice_name(s.record).c_str(), entropy,
                      rater_dice);
      }
      out << buf;
    }

    double mean_entropy = 0.0;
    for (double e : entropies) mean_entropy += e;
    mean_entropy /= static_cast<double>(entropies.size());
    std::printf("slices: %zu, mean entropy %.4f nats\n", entropies.size(), mean_entropy);
    if (!opts.gt2_dir.empty()) {
      PearsonResult corr = pearson(entropies, rater_dices);
      std::printf("pearson entropy vs rater dice: r=%.4f p=%.4g\n", corr.r, corr.p_value);
    }
    return kExitOk;
  });
}

int cmd_severity(const SeverityOpts& opts) {
  return guarded([&] {
    DatasetManifest manifest = DatasetManifest::load(opts.manifest_path);
    manifest.validate();
    const std::string split = opts.split == "all" ? "" : opts.split;
    std::vector<LoadedSlice> slices = load_slices(manifest, split);
    if (slices.empty()) throw ConfigError("manifest has no records for split " + opts.split);

    LoadedModels models;
    if (!opts.use_gt) models = load_models(opts.models_dir);
    const std::size_t K = opts.use_gt ? 1 : models.views.size();

    // Group slices by volume in first-appearance order.
    std::vector<std::string> volume_order;
    std::map<std::string, std::vector<const LoadedSlice*>> volumes;
    for (const LoadedSlice& s : slices) {
      auto [it, inserted] = volumes.try_emplace(s.record.volume_id);
      if (inserted) volume_order.push_back(s.record.volume_id);
      it->second.push_back(&s);
    }

    std::vector<SeverityRow> rows;
    for (const std::string& vol : volume_order) {
      // Per-member label stacks; consensus stack for the headline counts.
      std::vector<std::vector<LabelMap>> member_stacks(K);
      std::vector<LabelMap> consensus;
      for (const LoadedSlice* s : volumes[vol]) {
        if (opts.use_gt) {
          member_stacks[0].push_back(s->labels);
          consensus.push_back(s->labels);
        } else {
          for (std::size_t m = 0; m < K; ++m) {
            Inference inf = infer(*models.views[m], s->image);
            member_stacks[m].push_back(
                hard_labels(SoftSegmentation(std::move(inf.class_soft))));
          }
          EnsemblePrediction pred = ensemble_predict(models.views, s->image);
          consensus.push_back(hard_labels(pred.class_soft));
        }
      }

      const ClassCounts counts = class_counts(consensus);
      SeverityRow row;
      row.volume_id = vol;
      row.n_lung = counts.healthy();
      row.n_ggo = counts.ggo();
      row.n_con = counts.con();
      row.extent = counts.lung_cavity() > 0 ? extent_ratio(counts)
                                            : std::numeric_limits<double>::quiet_NaN();
      if (counts.infection() > 0) row.gravity = gravity_ratio(counts);

      // Spread of the ratios across members; undefined members are excluded.
      std::vector<double> extents, gravities;
      int excluded = 0;
      for (const std::vector<LabelMap>& stack : member_stacks) {
        const ClassCounts c = class_counts(stack);
        bool member_excluded = false;
        if (c.lung_cavity() > 0) {
          extents.push_back(extent_ratio(c));
        } else {
          member_excluded = true;
        }
        if (c.infection() > 0) {
          gravities.push_back(gravity_ratio(c));
        } else {
          member_excluded = true;
        }
        excluded += member_excluded;
      }
      auto population_std = [](const std::vector<double>& v) {
        if (v.empty()) return 0.0;
        double mean = 0.0;
        for (double x : v) mean += x;
        mean /= static_cast<double>(v.size());
        double var = 0.0;
        for (double x : v) var += (x - mean) * (x - mean);
        return std::sqrt(var / static_cast<double>(v.size()));
      };
      row.extent_std = population_std(extents);
      row.gravity_std = population_std(gravities);
      row.excluded_members = excluded;
      rows.push_back(std::move(row));
    }

    std::ofstream out(opts.out_csv, std::ios::trunc);
    if (!out) throw IoError("cannot write " + opts.out_csv);
    write_severity_csv(out, rows);
    std::printf("volumes: %zu, members: %zu\n", rows.size(), K);
    return kExitOk;
  });
}

}  // namespace hseg::cli
