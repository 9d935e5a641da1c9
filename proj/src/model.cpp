#include "bcm/model.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "bcm/errors.hpp"

namespace bcm {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

template <class S>
bool BasicNetworkParams<S>::all_finite() const noexcept {
  for (S v : values) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

template <class S>
void BasicNetworkParams<S>::validate() const {
  if (!(data_sigma > 0.0)) throw InvalidInput("network params: data_sigma must be positive");
  const std::size_t expected = nn::backbone_layout(backbone).total();
  if (values.size() != expected) {
    throw InvalidInput("network params: expected " + std::to_string(expected) + " values, got " +
                       std::to_string(values.size()));
  }
  if (!all_finite()) throw InvalidInput("network params: non-finite value");
}

template <class S>
BasicNetworkParams<S> init_params(const BackboneSpec& spec, double data_sigma, std::uint64_t seed) {
  const auto backbone = nn::make_backbone<S>(spec);
  BasicNetworkParams<S> params{spec, data_sigma, std::vector<S>(backbone->layout().total())};
  std::mt19937_64 rng(seed);
  backbone->initialize(params.view(), rng);
  return params;
}

ConsistencyCoefficients consistency_coefficients(double t, double t_min, double data_sigma) {
  const double sd2 = data_sigma * data_sigma;
  const double gap = t - t_min;
  ConsistencyCoefficients c;
  c.skip = sd2 / (gap * gap + sd2);
  c.out = data_sigma * gap / std::sqrt(sd2 + t * t);
  c.in = 1.0 / std::sqrt(sd2 + t * t);
  c.noise = 0.25 * std::log(t);
  return c;
}

template <class S>
ConsistencyFunction<S>::ConsistencyFunction(const BackboneSpec& spec, double t_min)
    : backbone_(nn::make_backbone<S>(spec)), t_min_(t_min) {}

template <class S>
nn::Batch<S> ConsistencyFunction<S>::forward(const BasicNetworkParams<S>& params, const nn::Batch<S>& x,
                                             std::span<const double> t, ConsistencyTape<S>* tape) const {
  if (static_cast<std::size_t>(x.rows()) != t.size()) throw InvalidInput("consistency forward: one time per sample");
  if (!x.allFinite()) throw InvalidInput("consistency forward: non-finite input");
  const auto n = x.rows();
  std::vector<ConsistencyCoefficients> coeffs(static_cast<std::size_t>(n));
  std::vector<S> c_noise(static_cast<std::size_t>(n));
  nn::Batch<S> scaled(n, x.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    const double ti = t[static_cast<std::size_t>(i)];
    if (!(ti >= t_min_)) throw InvalidInput("consistency forward: t=" + std::to_string(ti) + " is below t_min");
    coeffs[static_cast<std::size_t>(i)] = consistency_coefficients(ti, t_min_, params.data_sigma);
    c_noise[static_cast<std::size_t>(i)] = static_cast<S>(coeffs[static_cast<std::size_t>(i)].noise);
    scaled.row(i) = x.row(i) * static_cast<S>(coeffs[static_cast<std::size_t>(i)].in);
  }
  nn::Batch<S> out = backbone_->forward(params.view(), scaled, c_noise, tape ? &tape->backbone : nullptr);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& c = coeffs[static_cast<std::size_t>(i)];
    out.row(i) = static_cast<S>(c.skip) * x.row(i) + static_cast<S>(c.out) * out.row(i);
  }
  if (tape) tape->coeffs = std::move(coeffs);
  return out;
}

template <class S>
void ConsistencyFunction<S>::backward(const BasicNetworkParams<S>& params, const ConsistencyTape<S>& tape,
                                      const nn::Batch<S>& grad_out, std::span<S> grads,
                                      std::vector<const void*>* probe) const {
  if (probe) probe->push_back(&params);
  nn::Batch<S> grad_raw(grad_out.rows(), grad_out.cols());
  for (Eigen::Index i = 0; i < grad_out.rows(); ++i) {
    grad_raw.row(i) = grad_out.row(i) * static_cast<S>(tape.coeffs[static_cast<std::size_t>(i)].out);
  }
  backbone_->backward(params.view(), tape.backbone, grad_raw, grads);
}

template <class S>
std::vector<S> raw_forward(const BasicNetworkParams<S>& params, std::span<const S> x_scaled, S t_embed) {
  const auto backbone = nn::make_backbone<S>(params.backbone);
  nn::Batch<S> x(1, static_cast<Eigen::Index>(x_scaled.size()));
  for (std::size_t i = 0; i < x_scaled.size(); ++i) x(0, static_cast<Eigen::Index>(i)) = x_scaled[i];
  const S embed[1] = {t_embed};
  const nn::Batch<S> y = backbone->forward(params.view(), x, embed, nullptr);
  return std::vector<S>(y.data(), y.data() + y.size());
}

nn::Batch<float> to_batch(std::span<const ImageTensor> images) {
  if (images.empty()) return {};
  const auto d = static_cast<Eigen::Index>(images.front().size());
  nn::Batch<float> batch(static_cast<Eigen::Index>(images.size()), d);
  for (std::size_t i = 0; i < images.size(); ++i) {
    require_same_shape(images[i].shape(), images.front().shape(), "to_batch");
    std::memcpy(batch.row(static_cast<Eigen::Index>(i)).data(), images[i].values().data(), d * sizeof(float));
  }
  return batch;
}

std::vector<ImageTensor> from_batch(const nn::Batch<float>& batch, const ImageShape& shape) {
  if (static_cast<std::size_t>(batch.cols()) != shape.size()) throw InvalidInput("from_batch: width does not match shape");
  std::vector<ImageTensor> images;
  images.reserve(static_cast<std::size_t>(batch.rows()));
  for (Eigen::Index i = 0; i < batch.rows(); ++i) {
    images.emplace_back(shape, std::vector<float>(batch.row(i).data(), batch.row(i).data() + batch.cols()));
  }
  return images;
}

ImageTensor consistency_forward(const NetworkParams& params, const ImageTensor& x, double t, double t_min) {
  require_same_shape(x.shape(), params.backbone.shape, "consistency_forward");
  const ConsistencyFunction<float> fn(params.backbone, t_min);
  const double times[1] = {t};
  return from_batch(fn.forward(params, to_batch(std::span(&x, 1)), times), x.shape()).front();
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr char kMagic[8] = {'B', 'C', 'M', 'C', 'K', 'P', 'T', '\0'};

template <class T>
void write_pod(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_pod(std::istream& in, const std::string& file) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw FormatError("checkpoint '" + file + "': truncated");
  return v;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& file, const Checkpoint& ckpt) {
  ckpt.params.validate();
  const auto& bb = ckpt.params.backbone;
  const auto& s = ckpt.schedule;
  nlohmann::json header = {
      {"version", kCheckpointVersion},
      {"backbone",
       {{"kind", nn::to_string(bb.kind)},
        {"shape", {bb.shape.channels, bb.shape.height, bb.shape.width}},
        {"width", bb.width},
        {"time_features", bb.time_features}}},
      {"data_sigma", ckpt.params.data_sigma},
      {"schedule",
       {{"T", s.T}, {"t_min", s.t_min}, {"p_mean", s.p_mean}, {"p_std", s.p_std}, {"ramp_period", s.ramp_period},
        {"n_max", s.n_max}}},
      {"iteration", ckpt.iteration},
      {"config_hash", ckpt.config_hash},
  };
  auto& groups = header["groups"] = nlohmann::json::array();
  const nn::ParamLayout layout = nn::backbone_layout(bb);
  for (const auto& g : layout.groups()) {
    groups.push_back({{"name", g.name}, {"shape", g.shape}, {"offset", g.offset}, {"size", g.size}});
  }
  const std::string text = header.dump();

  std::ofstream out(file, std::ios::binary);
  if (!out) throw FormatError("cannot open '" + file.string() + "' for writing");
  out.write(kMagic, sizeof kMagic);
  write_pod(out, kCheckpointVersion);
  write_pod(out, static_cast<std::uint64_t>(text.size()));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  write_pod(out, static_cast<std::uint64_t>(ckpt.params.values.size()));
  out.write(reinterpret_cast<const char*>(ckpt.params.values.data()),
            static_cast<std::streamsize>(ckpt.params.values.size() * sizeof(float)));
  if (!out) throw FormatError("failed writing checkpoint '" + file.string() + "'");
}

Checkpoint load_checkpoint(const std::filesystem::path& file) {
  const std::string name = file.string();
  std::ifstream in(file, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint '" + name + "'");
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0) throw FormatError("'" + name + "' is not a checkpoint");
  const auto version = read_pod<std::uint32_t>(in, name);
  if (version != kCheckpointVersion) {
    throw FormatError("checkpoint '" + name + "': unsupported format version " + std::to_string(version));
  }
  const auto header_len = read_pod<std::uint64_t>(in, name);
  std::string text(header_len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(header_len));
  if (!in) throw FormatError("checkpoint '" + name + "': truncated header");

  Checkpoint ckpt;
  try {
    const auto header = nlohmann::json::parse(text);
    const auto& bb = header.at("backbone");
    const auto shape = bb.at("shape").get<std::vector<int>>();
    if (shape.size() != 3) throw FormatError("checkpoint '" + name + "': bad shape");
    ckpt.params.backbone = {nn::parse_backbone_kind(bb.at("kind").get<std::string>()),
                            {shape[0], shape[1], shape[2]},
                            bb.at("width").get<int>(),
                            bb.at("time_features").get<int>()};
    ckpt.params.data_sigma = header.at("data_sigma").get<double>();
    const auto& s = header.at("schedule");
    ckpt.schedule = {s.at("T").get<double>(),          s.at("t_min").get<double>(),
                     s.at("p_mean").get<double>(),     s.at("p_std").get<double>(),
                     s.at("ramp_period").get<std::int64_t>(), s.at("n_max").get<std::int64_t>()};
    ckpt.iteration = header.at("iteration").get<std::int64_t>();
    ckpt.config_hash = header.at("config_hash").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("checkpoint '" + name + "': bad header: " + e.what());
  }

  const auto count = read_pod<std::uint64_t>(in, name);
  ckpt.params.values.resize(count);
  in.read(reinterpret_cast<char*>(ckpt.params.values.data()), static_cast<std::streamsize>(count * sizeof(float)));
  if (!in) throw FormatError("checkpoint '" + name + "': truncated values");
  try {
    ckpt.params.validate();
  } catch (const InvalidInput& e) {
    throw FormatError("checkpoint '" + name + "': " + e.what());
  }
  return ckpt;
}

template struct BasicNetworkParams<float>;
template struct BasicNetworkParams<double>;
template class ConsistencyFunction<float>;
template class ConsistencyFunction<double>;
template BasicNetworkParams<float> init_params<float>(const BackboneSpec&, double, std::uint64_t);
template BasicNetworkParams<double> init_params<double>(const BackboneSpec&, double, std::uint64_t);
template std::vector<float> raw_forward<float>(const BasicNetworkParams<float>&, std::span<const float>, float);
template std::vector<double> raw_forward<double>(const BasicNetworkParams<double>&, std::span<const double>, double);

}  // namespace bcm
