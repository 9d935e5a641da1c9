#pragma once

#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "bcm/config.hpp"
#include "bcm/datasets.hpp"
#include "bcm/eval.hpp"
#include "bcm/model.hpp"
#include "bcm/training.hpp"

namespace bcm {

/// Clean training data named by the config.
Dataset build_dataset(const ExperimentConfig& cfg);

/// Trigger and target for `shape`. Target labels name an asset ("hat",
/// "cat") or a constant image ("const:<v>").
BackdoorConfig build_backdoor(const ExperimentConfig& cfg, const ImageShape& shape);

BackboneSpec build_backbone_spec(const ExperimentConfig& cfg, const ImageShape& shape);
TrainConfig build_train_config(const ExperimentConfig& cfg, const ImageShape& shape);

/// The base checkpoint's parameters if one is configured, else a fresh
/// initialization seeded by training.seed.
NetworkParams initial_params(const ExperimentConfig& cfg, const BackboneSpec& spec);

/// FID of clean samples against `reference` and MSE of backdoor samples
/// against the target, using the eval seeds of `cfg`.
MetricsReport evaluate(const NetworkParams& params, const ExperimentConfig& cfg, const BackdoorConfig& backdoor,
                       const GaussianStats& reference, const FeatureExtractor& extractor);

struct RunResult {
  std::filesystem::path dir;
  MetricsReport final_metrics;
  std::string config_hash;
};

/// Trains for cfg.training.ticks ticks. Every tick writes tick_<n>.ckpt,
/// clean_tick_<n> and backdoor_tick_<n> grids and training-log rows; every
/// eval.every_ticks ticks (and the last) a metrics row. Progress lines go
/// to `progress` when given.
RunResult run_experiment(const ExperimentConfig& cfg, std::ostream* progress = nullptr);

struct SweepRow {
  double rate = 0.0;
  std::optional<MetricsReport> metrics;
  std::string status;  // "ok" or "failed: ..."
};

struct SweepResult {
  std::filesystem::path dir;
  std::vector<SweepRow> rows;
};

/// One run per rate under `<output_dir>/rho_<rate>`, rates sorted ascending.
/// Writes sweep.csv and fid_mse_vs_rate.svg. A failing run is recorded in
/// the status column and the sweep moves on.
SweepResult sweep_poison_rate(const ExperimentConfig& base, std::vector<double> rates,
                              std::ostream* progress = nullptr);

}  // namespace bcm
