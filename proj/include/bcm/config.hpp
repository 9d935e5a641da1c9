#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "bcm/schedules.hpp"
#include "bcm/training.hpp"

namespace bcm {

struct DatasetSection {
  std::string kind = "shapes_8x8";  // dirac, two_gaussians_2d, shapes_8x8, cifar10
  std::size_t size = 4096;          // toy kinds only
  std::string path;                 // cifar10 only
  std::uint64_t seed = 0;
};

struct ModelSection {
  std::string backbone = "small_unet";
  int width = 16;
  int time_features = 16;
  double data_sigma = 0.5;
};

struct BackdoorSection {
  double poison_rate = 0.1;
  std::string trigger = "noise";  // noise, box, glasses
  std::uint64_t trigger_seed = 7;
  std::string target = "hat";
};

struct TrainingSection {
  int ticks = 20;
  std::size_t tick_images = 12800;
  std::size_t batch_size = 64;
  std::uint64_t seed = 1;
};

struct EvalSection {
  int every_ticks = 1;
  std::size_t n_fid = 2000;
  std::size_t n_mse = 64;
  std::string extractor = "randconv(0)";
  std::size_t grid_n = 64;
  std::uint64_t seed = 2;
  /// Samples, metrics and checkpoints use a moving average of the student
  /// with this decay; 0 uses the student itself.
  double ema_decay = 0.0;
};

struct ExperimentConfig {
  DatasetSection dataset;
  ModelSection model;
  ScheduleConfig schedule;
  /// Unset: one tick's worth of iterations (tick_images / batch_size).
  std::optional<std::int64_t> ramp_period;
  BackdoorSection backdoor;
  LossConfig loss;
  OptimizerConfig optimizer;
  TeacherConfig teacher;
  TrainingSection training;
  EvalSection eval;
  std::string output_dir = "runs/default";
  std::string base_checkpoint;  // empty: train from a fresh initialization

  /// Schedule with ramp_period resolved.
  ScheduleConfig resolved_schedule() const;
  std::int64_t steps_per_tick() const;
  /// Throws InvalidInput on any inconsistent value.
  void validate() const;
};

/// Values the method description leaves open, with the convention used.
nlohmann::json assumed_defaults();

/// Full document including `assumed_defaults`.
nlohmann::json to_json(const ExperimentConfig& cfg);

/// Reads a (possibly partial) document over the defaults. Unknown keys and
/// wrongly typed values throw SchemaError naming the key.
ExperimentConfig config_from_json(const nlohmann::json& doc);

ExperimentConfig load_config(const std::filesystem::path& file);

/// Dotted names of every config key ("schedule.T", "backdoor.poison_rate", ...).
std::vector<std::string> config_keys();

/// Defaults, then `flags` (dotted key -> text, parsed as JSON when possible,
/// else taken as a string), then the file at `file` if non-empty. Values in
/// the file win over flags.
ExperimentConfig resolve_config(const std::map<std::string, std::string>& flags, const std::filesystem::path& file);
void save_config(const std::filesystem::path& file, const ExperimentConfig& cfg);

/// Hex SHA-256 prefix (16 chars) of the canonical document without
/// output_dir and assumed_defaults.
std::string config_hash(const ExperimentConfig& cfg);

/// Lower-case hex SHA-256 of arbitrary bytes.
std::string sha256_hex(const std::string& bytes);

}  // namespace bcm
