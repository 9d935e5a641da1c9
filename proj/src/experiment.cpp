#include "bcm/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <optional>

#include "bcm/csv.hpp"
#include "bcm/errors.hpp"
#include "bcm/plot.hpp"
#include "bcm/sampling.hpp"
#include "bcm/triggers.hpp"

namespace bcm {

namespace fs = std::filesystem;

Dataset build_dataset(const ExperimentConfig& cfg) {
  if (cfg.dataset.kind == "cifar10") {
    if (cfg.dataset.path.empty()) throw InvalidInput("dataset.path is required for cifar10");
    return load_cifar10(cfg.dataset.path);
  }
  Rng rng(cfg.dataset.seed);
  return make_toy_dataset(parse_toy_kind(cfg.dataset.kind), rng, cfg.dataset.size);
}

BackdoorConfig build_backdoor(const ExperimentConfig& cfg, const ImageShape& shape) {
  const auto kind = parse_trigger_kind(cfg.backdoor.trigger);
  TriggerSpec trigger = kind == TriggerKind::noise ? make_noise_trigger(cfg.backdoor.trigger_seed, shape)
                                                   : load_stencil_trigger(kind, shape);
  TargetSpec target;
  const std::string& label = cfg.backdoor.target;
  if (label.rfind("const:", 0) == 0) {
    target = {ImageTensor(shape, std::stof(label.substr(6))), label};
  } else {
    target = load_target(label, shape);
  }
  BackdoorConfig backdoor{cfg.backdoor.poison_rate, std::move(trigger), std::move(target)};
  backdoor.validate(shape);
  return backdoor;
}

BackboneSpec build_backbone_spec(const ExperimentConfig& cfg, const ImageShape& shape) {
  return {nn::parse_backbone_kind(cfg.model.backbone), shape, cfg.model.width, cfg.model.time_features};
}

TrainConfig build_train_config(const ExperimentConfig& cfg, const ImageShape& shape) {
  return {cfg.resolved_schedule(), build_backdoor(cfg, shape), cfg.loss, cfg.optimizer};
}

NetworkParams initial_params(const ExperimentConfig& cfg, const BackboneSpec& spec) {
  if (cfg.base_checkpoint.empty()) return init_params<float>(spec, cfg.model.data_sigma, cfg.training.seed);
  Checkpoint ckpt = load_checkpoint(cfg.base_checkpoint);
  if (!(ckpt.params.backbone == spec)) {
    throw InvalidInput("base checkpoint '" + cfg.base_checkpoint + "' does not match the configured model");
  }
  return std::move(ckpt.params);
}

MetricsReport evaluate(const NetworkParams& params, const ExperimentConfig& cfg, const BackdoorConfig& backdoor,
                       const GaussianStats& reference, const FeatureExtractor& extractor) {
  const ScheduleConfig schedule = cfg.resolved_schedule();
  MetricsReport report;
  Rng fid_rng(cfg.eval.seed);
  const auto clean = sample_clean(params, fid_rng, cfg.eval.n_fid, schedule);
  report.fid = frechet_distance(feature_stats(extractor, clean), reference);
  Rng mse_rng(cfg.eval.seed + 1);
  const auto triggered = sample_backdoor(params, backdoor.trigger, mse_rng, cfg.eval.n_mse, schedule);
  report.mse = mse_specificity(triggered, backdoor.target.image);
  report.n_fid_samples = cfg.eval.n_fid;
  report.n_mse_samples = cfg.eval.n_mse;
  report.extractor_id = extractor.id();
  report.config_hash = config_hash(cfg);
  return report;
}

namespace {

std::string seeds_field(const ExperimentConfig& cfg) {
  return "data=" + std::to_string(cfg.dataset.seed) + ";train=" + std::to_string(cfg.training.seed) +
         ";trigger=" + std::to_string(cfg.backdoor.trigger_seed) + ";eval=" + std::to_string(cfg.eval.seed);
}

void write_grids(const NetworkParams& params, const ExperimentConfig& cfg, const BackdoorConfig& backdoor,
                 const fs::path& dir, int tick, const std::string& hash) {
  const int channels = params.backbone.shape.channels;
  if (cfg.eval.grid_n == 0 || (channels != 1 && channels != 3)) return;
  const ScheduleConfig schedule = cfg.resolved_schedule();
  const char* ext = channels == 1 ? ".pgm" : ".ppm";
  const std::vector<std::string> comments = {"config_hash=" + hash, "tick=" + std::to_string(tick)};
  // Same noise every tick, so grids show one fixed set of draws evolving.
  Rng clean_rng(cfg.eval.seed + 2);
  write_grid(dir / ("clean_tick_" + std::to_string(tick) + ext),
             sample_clean(params, clean_rng, cfg.eval.grid_n, schedule), comments);
  Rng backdoor_rng(cfg.eval.seed + 2);
  write_grid(dir / ("backdoor_tick_" + std::to_string(tick) + ext),
             sample_backdoor(params, backdoor.trigger, backdoor_rng, cfg.eval.grid_n, schedule), comments);
}

}  // namespace

RunResult run_experiment(const ExperimentConfig& cfg, std::ostream* progress) {
  cfg.validate();
  const std::string hash = config_hash(cfg);
  const fs::path dir = cfg.output_dir;
  fs::create_directories(dir);
  for (const char* stale : {"train_log.csv", "metrics.csv"}) fs::remove(dir / stale);
  save_config(dir / "config.json", cfg);

  const Dataset data = build_dataset(cfg);
  data.validate();
  const BackboneSpec spec = build_backbone_spec(cfg, data.shape);
  const TrainConfig train_cfg = build_train_config(cfg, data.shape);
  const Trainer trainer(spec, train_cfg);
  TrainState state = TrainState::create(initial_params(cfg, spec), cfg.training.seed, cfg.teacher);
  DataLoader loader(data, cfg.training.batch_size, cfg.training.seed);

  const auto extractor = make_extractor(cfg.eval.extractor);
  const GaussianStats reference = feature_stats(*extractor, data.images);

  const std::vector<std::string> header_comments = {"config_hash=" + hash};
  CsvWriter log(dir / "train_log.csv", {"tick", "branch", "loss_mean"}, header_comments);
  CsvWriter metrics(dir / "metrics.csv", {"tick", "rho", "fid", "mse", "extractor_id", "seeds"}, header_comments);

  std::optional<NetworkParams> average;
  if (cfg.eval.ema_decay > 0.0) average = state.student;
  const NetworkParams& sampled = average ? *average : state.student;

  RunResult result{dir, {}, hash};
  const std::int64_t steps = cfg.steps_per_tick();
  for (int tick = 0; tick < cfg.training.ticks; ++tick) {
    const auto started = std::chrono::steady_clock::now();
    double clean_sum = 0.0;
    double backdoor_sum = 0.0;
    std::int64_t clean_n = 0;
    std::int64_t backdoor_n = 0;
    try {
      for (std::int64_t s = 0; s < steps; ++s) {
        const auto batch = loader.next();
        const StepReport report = trainer.step(state, batch);
        if (average) update_average(*average, state.student, cfg.eval.ema_decay, state.k);
        clean_sum += report.clean_loss_sum;
        clean_n += report.clean_count;
        backdoor_sum += report.backdoor_loss_sum;
        backdoor_n += report.backdoor_count;
      }
    } catch (const TrainingAbort& e) {
      throw TrainingAbort("tick " + std::to_string(tick) + ": " + e.what());
    }
    if (clean_n > 0) log.row({std::to_string(tick), "clean", format_number(clean_sum / clean_n)});
    if (backdoor_n > 0) log.row({std::to_string(tick), "backdoor", format_number(backdoor_sum / backdoor_n)});

    save_checkpoint(dir / ("tick_" + std::to_string(tick) + ".ckpt"),
                    {sampled, train_cfg.schedule, state.k, hash});
    write_grids(sampled, cfg, *train_cfg.backdoor, dir, tick, hash);

    const bool last = tick + 1 == cfg.training.ticks;
    if (last || (tick + 1) % cfg.eval.every_ticks == 0) {
      result.final_metrics = evaluate(sampled, cfg, *train_cfg.backdoor, reference, *extractor);
      const auto& m = result.final_metrics;
      metrics.row({std::to_string(tick), format_number(cfg.backdoor.poison_rate), format_number(m.fid),
                   format_number(m.mse), m.extractor_id, seeds_field(cfg)});
    }
    if (progress) {
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
      *progress << "[" << dir.filename().string() << "] tick " << tick << " k=" << state.k
                << " clean_loss=" << (clean_n ? clean_sum / clean_n : 0.0);
      if (backdoor_n) *progress << " backdoor_loss=" << backdoor_sum / backdoor_n;
      if (last || (tick + 1) % cfg.eval.every_ticks == 0) {
        *progress << " fid=" << result.final_metrics.fid << " mse=" << result.final_metrics.mse;
      }
      *progress << " (" << secs << " s)" << std::endl;
    }
  }
  render_plot(dir / "train_log.csv", PlotKind::loss_curves);
  return result;
}

SweepResult sweep_poison_rate(const ExperimentConfig& base, std::vector<double> rates, std::ostream* progress) {
  if (rates.empty()) throw EmptyInput("sweep: no poison rates");
  for (double r : rates) {
    if (!(r >= 0.0 && r <= 1.0)) throw InvalidInput("sweep: poison rate " + format_number(r) + " outside [0, 1]");
  }
  std::sort(rates.begin(), rates.end());
  rates.erase(std::unique(rates.begin(), rates.end()), rates.end());

  SweepResult result{base.output_dir, {}};
  fs::create_directories(result.dir);
  const fs::path csv = result.dir / "sweep.csv";
  fs::remove(csv);
  CsvWriter writer(csv, {"rate", "fid", "mse", "n_fid", "n_mse", "extractor_id", "config_hash", "status"},
                   {"config_hash=" + config_hash(base)});
  for (double rate : rates) {
    ExperimentConfig cfg = base;
    cfg.backdoor.poison_rate = rate;
    cfg.output_dir = (result.dir / ("rho_" + format_number(rate))).string();
    SweepRow row{rate, std::nullopt, "ok"};
    try {
      row.metrics = run_experiment(cfg, progress).final_metrics;
    } catch (const std::exception& e) {
      std::string what = e.what();
      std::replace(what.begin(), what.end(), ',', ';');
      std::replace(what.begin(), what.end(), '\n', ' ');
      row.status = "failed: " + what;
      if (progress) *progress << "[sweep] rate " << rate << " failed: " << e.what() << std::endl;
    }
    if (row.metrics) {
      const auto& m = *row.metrics;
      writer.row({format_number(rate), format_number(m.fid), format_number(m.mse), std::to_string(m.n_fid_samples),
                  std::to_string(m.n_mse_samples), m.extractor_id, m.config_hash, row.status});
    } else {
      writer.row({format_number(rate), "", "", "", "", "", config_hash(cfg), row.status});
    }
    result.rows.push_back(std::move(row));
  }
  const bool any_ok = std::any_of(result.rows.begin(), result.rows.end(), [](const SweepRow& r) { return r.metrics; });
  if (any_ok) render_plot(csv, PlotKind::fid_mse_vs_rate);
  return result;
}

}  // namespace bcm
