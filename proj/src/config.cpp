#include "bcm/config.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <fstream>
#include <set>

#include "bcm/errors.hpp"

namespace bcm {

using nlohmann::json;

ScheduleConfig ExperimentConfig::resolved_schedule() const {
  ScheduleConfig s = schedule;
  s.ramp_period = ramp_period.value_or(std::max<std::int64_t>(1, steps_per_tick()));
  return s;
}

std::int64_t ExperimentConfig::steps_per_tick() const {
  if (training.batch_size == 0) throw InvalidInput("training.batch_size must be positive");
  return static_cast<std::int64_t>((training.tick_images + training.batch_size - 1) / training.batch_size);
}

void ExperimentConfig::validate() const {
  resolved_schedule().validate();
  if (training.ticks < 1) throw InvalidInput("training.ticks must be at least 1");
  if (training.tick_images == 0) throw InvalidInput("training.tick_images must be positive");
  if (!(backdoor.poison_rate >= 0.0 && backdoor.poison_rate <= 1.0)) {
    throw InvalidInput("backdoor.poison_rate must lie in [0, 1]");
  }
  if (eval.every_ticks < 1) throw InvalidInput("eval.every_ticks must be at least 1");
  if (eval.n_fid < 2) throw InvalidInput("eval.n_fid must be at least 2");
  if (eval.n_mse < 1) throw InvalidInput("eval.n_mse must be at least 1");
  if (!(eval.ema_decay >= 0.0 && eval.ema_decay < 1.0)) throw InvalidInput("eval.ema_decay must lie in [0, 1)");
  if (!(optimizer.lr > 0.0)) throw InvalidInput("optimizer.lr must be positive");
  if (model.width < 1 || model.time_features < 2 || model.time_features % 2 != 0) {
    throw InvalidInput("model.width must be positive and model.time_features even");
  }
  if (!(model.data_sigma > 0.0)) throw InvalidInput("model.data_sigma must be positive");
  if (loss.huber_c && !(*loss.huber_c > 0.0)) throw InvalidInput("loss.huber_c must be positive");
}

json assumed_defaults() {
  return {
      {"schedule.p_mean", "-1.1, lognormal location; EDM convention"},
      {"schedule.p_std", "2.0, lognormal scale; consistency-tuning convention"},
      {"schedule.t_min", "0.002, boundary time; EDM convention"},
      {"schedule.ramp_period", "one tick of iterations per doubling of N(k)"},
      {"schedule.n_max", "1024, cap on the discretization count"},
      {"model.data_sigma", "0.5 for data in [-1, 1]"},
      {"loss.weighting", "inverse_gap, lambda = 1/(t - r)"},
      {"loss.distance", "pseudo_huber with c = 0.03 sqrt(D)"},
      {"optimizer", "Adam, lr 1e-4, betas 0.9/0.999, eps 1e-8"},
      {"teacher.mode", "stop_grad, teacher is the pre-update student"},
  };
}

json to_json(const ExperimentConfig& cfg) {
  const auto& s = cfg.schedule;
  json doc = {
      {"dataset",
       {{"kind", cfg.dataset.kind}, {"size", cfg.dataset.size}, {"path", cfg.dataset.path}, {"seed", cfg.dataset.seed}}},
      {"model",
       {{"backbone", cfg.model.backbone},
        {"width", cfg.model.width},
        {"time_features", cfg.model.time_features},
        {"data_sigma", cfg.model.data_sigma}}},
      {"schedule",
       {{"T", s.T},
        {"t_min", s.t_min},
        {"p_mean", s.p_mean},
        {"p_std", s.p_std},
        {"ramp_period", cfg.ramp_period ? json(*cfg.ramp_period) : json(nullptr)},
        {"n_max", s.n_max}}},
      {"backdoor",
       {{"poison_rate", cfg.backdoor.poison_rate},
        {"trigger", cfg.backdoor.trigger},
        {"trigger_seed", cfg.backdoor.trigger_seed},
        {"target", cfg.backdoor.target}}},
      {"loss",
       {{"weighting", to_string(cfg.loss.weighting)},
        {"distance", to_string(cfg.loss.distance)},
        {"huber_c", cfg.loss.huber_c ? json(*cfg.loss.huber_c) : json(nullptr)}}},
      {"optimizer",
       {{"lr", cfg.optimizer.lr},
        {"beta1", cfg.optimizer.beta1},
        {"beta2", cfg.optimizer.beta2},
        {"eps", cfg.optimizer.eps}}},
      {"teacher", {{"mode", to_string(cfg.teacher.mode)}, {"ema_decay", cfg.teacher.ema_decay}}},
      {"training",
       {{"ticks", cfg.training.ticks},
        {"tick_images", cfg.training.tick_images},
        {"batch_size", cfg.training.batch_size},
        {"seed", cfg.training.seed}}},
      {"eval",
       {{"every_ticks", cfg.eval.every_ticks},
        {"n_fid", cfg.eval.n_fid},
        {"n_mse", cfg.eval.n_mse},
        {"extractor", cfg.eval.extractor},
        {"grid_n", cfg.eval.grid_n},
        {"seed", cfg.eval.seed},
        {"ema_decay", cfg.eval.ema_decay}}},
      {"output_dir", cfg.output_dir},
      {"base_checkpoint", cfg.base_checkpoint},
      {"assumed_defaults", assumed_defaults()},
  };
  return doc;
}

namespace {

class Reader {
 public:
  Reader(const json& obj, std::string prefix) : obj_(obj), prefix_(std::move(prefix)) {
    if (!obj_.is_object()) throw SchemaError("config: '" + prefix_ + "' must be an object");
  }

  template <class T>
  void operator()(const char* key, T& out) {
    seen_.insert(key);
    const auto it = obj_.find(key);
    if (it == obj_.end()) return;
    try {
      out = it->template get<T>();
    } catch (const json::exception&) {
      throw SchemaError("config: '" + name(key) + "' has the wrong type");
    }
  }

  template <class T>
  void optional(const char* key, std::optional<T>& out) {
    seen_.insert(key);
    const auto it = obj_.find(key);
    if (it == obj_.end()) return;
    if (it->is_null()) {
      out.reset();
      return;
    }
    T value{};
    (*this)(key, value);
    out = value;
  }

  /// Reads a string and maps it with `parse`; parse errors become SchemaErrors.
  template <class E, class F>
  void parsed(const char* key, E& out, F parse) {
    std::string text;
    const auto it = obj_.find(key);
    (*this)(key, text);
    if (it == obj_.end()) return;
    try {
      out = parse(text);
    } catch (const InvalidInput& e) {
      throw SchemaError("config: '" + name(key) + "': " + e.what());
    }
  }

  void ignore(const char* key) { seen_.insert(key); }

  const json& section(const char* key) {
    seen_.insert(key);
    static const json empty = json::object();
    const auto it = obj_.find(key);
    return it == obj_.end() ? empty : *it;
  }

  void finish() const {
    for (const auto& [key, value] : obj_.items()) {
      if (!seen_.count(key)) throw SchemaError("config: unknown key '" + name(key.c_str()) + "'");
    }
  }

 private:
  std::string name(const char* key) const { return prefix_.empty() ? key : prefix_ + "." + key; }

  const json& obj_;
  std::string prefix_;
  std::set<std::string> seen_;
};

}  // namespace

ExperimentConfig config_from_json(const json& doc) {
  ExperimentConfig cfg;
  Reader top(doc, "");
  {
    Reader r(top.section("dataset"), "dataset");
    r("kind", cfg.dataset.kind);
    r("size", cfg.dataset.size);
    r("path", cfg.dataset.path);
    r("seed", cfg.dataset.seed);
    r.finish();
  }
  {
    Reader r(top.section("model"), "model");
    r("backbone", cfg.model.backbone);
    r("width", cfg.model.width);
    r("time_features", cfg.model.time_features);
    r("data_sigma", cfg.model.data_sigma);
    r.finish();
  }
  {
    Reader r(top.section("schedule"), "schedule");
    r("T", cfg.schedule.T);
    r("t_min", cfg.schedule.t_min);
    r("p_mean", cfg.schedule.p_mean);
    r("p_std", cfg.schedule.p_std);
    r.optional("ramp_period", cfg.ramp_period);
    r("n_max", cfg.schedule.n_max);
    r.finish();
  }
  {
    Reader r(top.section("backdoor"), "backdoor");
    r("poison_rate", cfg.backdoor.poison_rate);
    r("trigger", cfg.backdoor.trigger);
    r("trigger_seed", cfg.backdoor.trigger_seed);
    r("target", cfg.backdoor.target);
    r.finish();
  }
  {
    Reader r(top.section("loss"), "loss");
    r.parsed("weighting", cfg.loss.weighting, parse_weighting);
    r.parsed("distance", cfg.loss.distance, parse_distance);
    r.optional("huber_c", cfg.loss.huber_c);
    r.finish();
  }
  {
    Reader r(top.section("optimizer"), "optimizer");
    r("lr", cfg.optimizer.lr);
    r("beta1", cfg.optimizer.beta1);
    r("beta2", cfg.optimizer.beta2);
    r("eps", cfg.optimizer.eps);
    r.finish();
  }
  {
    Reader r(top.section("teacher"), "teacher");
    r.parsed("mode", cfg.teacher.mode, parse_teacher_mode);
    r("ema_decay", cfg.teacher.ema_decay);
    r.finish();
  }
  {
    Reader r(top.section("training"), "training");
    r("ticks", cfg.training.ticks);
    r("tick_images", cfg.training.tick_images);
    r("batch_size", cfg.training.batch_size);
    r("seed", cfg.training.seed);
    r.finish();
  }
  {
    Reader r(top.section("eval"), "eval");
    r("every_ticks", cfg.eval.every_ticks);
    r("n_fid", cfg.eval.n_fid);
    r("n_mse", cfg.eval.n_mse);
    r("extractor", cfg.eval.extractor);
    r("grid_n", cfg.eval.grid_n);
    r("seed", cfg.eval.seed);
    r("ema_decay", cfg.eval.ema_decay);
    r.finish();
  }
  top("output_dir", cfg.output_dir);
  top("base_checkpoint", cfg.base_checkpoint);
  top.ignore("assumed_defaults");
  top.ignore("config_hash");  // written by save_config, recomputed on demand
  top.finish();
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw FormatError("cannot open config '" + file.string() + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw FormatError("config '" + file.string() + "': " + e.what());
  }
  return config_from_json(doc);
}

namespace {

void collect_leaves(const json& node, const std::string& prefix, std::vector<std::string>& out) {
  for (const auto& [key, value] : node.items()) {
    const std::string name = prefix.empty() ? key : prefix + "." + key;
    if (value.is_object()) {
      collect_leaves(value, name, out);
    } else {
      out.push_back(name);
    }
  }
}

json defaults_document() {
  json doc = to_json(ExperimentConfig{});
  doc.erase("assumed_defaults");
  return doc;
}

}  // namespace

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  collect_leaves(defaults_document(), "", keys);
  return keys;
}

ExperimentConfig resolve_config(const std::map<std::string, std::string>& flags, const std::filesystem::path& file) {
  json doc = defaults_document();
  const auto keys = config_keys();
  for (const auto& [key, text] : flags) {
    if (std::find(keys.begin(), keys.end(), key) == keys.end()) throw SchemaError("config: unknown key '" + key + "'");
    json value;
    try {
      value = json::parse(text);
    } catch (const json::parse_error&) {
      value = text;
    }
    std::string pointer;
    for (char c : key) pointer += c == '.' ? '/' : c;
    doc[json::json_pointer("/" + pointer)] = value;
  }
  if (!file.empty()) {
    std::ifstream in(file);
    if (!in) throw FormatError("cannot open config '" + file.string() + "'");
    json patch;
    try {
      patch = json::parse(in);
    } catch (const json::parse_error& e) {
      throw FormatError("config '" + file.string() + "': " + e.what());
    }
    if (!patch.is_object()) throw SchemaError("config '" + file.string() + "' must be a JSON object");
    patch.erase("assumed_defaults");
    patch.erase("config_hash");
    // A null in the file resets the key to its default (JSON merge-patch).
    doc.merge_patch(patch);
  }
  return config_from_json(doc);
}

void save_config(const std::filesystem::path& file, const ExperimentConfig& cfg) {
  std::ofstream out(file);
  if (!out) throw FormatError("cannot open '" + file.string() + "' for writing");
  json doc = to_json(cfg);
  doc["config_hash"] = config_hash(cfg);
  out << doc.dump(2) << '\n';
}

std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error("sha256 failed");
  }
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 0xF]);
  }
  return out;
}

std::string config_hash(const ExperimentConfig& cfg) {
  json doc = to_json(cfg);
  doc.erase("output_dir");
  doc.erase("assumed_defaults");
  return sha256_hex(doc.dump()).substr(0, 16);
}

}  // namespace bcm
