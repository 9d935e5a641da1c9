#include "bcm/sampling.hpp"

#include <algorithm>
#include <cmath>

#include "bcm/errors.hpp"
#include "bcm/image_io.hpp"

namespace bcm {
namespace {

constexpr std::size_t kChunk = 256;

ImageTensor draw_normal(Rng& rng, const ImageShape& shape) {
  std::normal_distribution<float> normal(0.0f, 1.0f);
  ImageTensor z(shape);
  for (auto& v : z.values()) v = normal(rng);
  return z;
}

// Runs f(., T) over the prepared inputs in fixed-size chunks and clamps.
std::vector<ImageTensor> one_step(const NetworkParams& params, const std::vector<ImageTensor>& inputs,
                                  const ScheduleConfig& cfg) {
  const ConsistencyFunction<float> fn(params.backbone, cfg.t_min);
  std::vector<ImageTensor> out;
  out.reserve(inputs.size());
  for (std::size_t begin = 0; begin < inputs.size(); begin += kChunk) {
    const std::size_t end = std::min(inputs.size(), begin + kChunk);
    const std::span chunk(inputs.data() + begin, end - begin);
    const std::vector<double> times(chunk.size(), cfg.T);
    auto images = from_batch(fn.forward(params, to_batch(chunk), times), params.backbone.shape);
    for (auto& img : images) {
      for (auto& v : img.values()) v = std::clamp(v, -1.0f, 1.0f);
      out.push_back(std::move(img));
    }
  }
  return out;
}

}  // namespace

std::vector<ImageTensor> sample_clean(const NetworkParams& params, Rng& rng, std::size_t n,
                                      const ScheduleConfig& cfg) {
  const auto scale = static_cast<float>(cfg.T);
  std::vector<ImageTensor> inputs;
  inputs.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    ImageTensor z = draw_normal(rng, params.backbone.shape);
    for (auto& v : z.values()) v *= scale;
    inputs.push_back(std::move(z));
  }
  return one_step(params, inputs, cfg);
}

std::vector<ImageTensor> sample_backdoor(const NetworkParams& params, const TriggerSpec& trigger, Rng& rng,
                                         std::size_t n, const ScheduleConfig& cfg) {
  require_same_shape(trigger.shape(), params.backbone.shape, "sample_backdoor trigger");
  std::vector<ImageTensor> inputs;
  inputs.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    inputs.push_back(apply_trigger_to_noise(draw_normal(rng, params.backbone.shape), trigger, cfg.T));
  }
  return one_step(params, inputs, cfg);
}

int grid_side(std::size_t n) {
  int side = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(n))));
  while (static_cast<std::size_t>(side) * side < n) ++side;
  while (side > 1 && static_cast<std::size_t>(side - 1) * (side - 1) >= n) --side;
  return side;
}

void write_grid(const std::filesystem::path& file, const std::vector<ImageTensor>& images,
                const std::vector<std::string>& comments) {
  if (images.empty()) throw EmptyInput("write_grid: no images");
  const ImageShape shape = images.front().shape();
  if (shape.channels != 1 && shape.channels != 3) {
    throw InvalidInput("write_grid: need 1 or 3 channels, got " + shape.str());
  }
  const int side = grid_side(images.size());
  constexpr int gutter = 1;
  Raster raster;
  raster.depth = shape.channels;
  raster.width = side * (shape.width + gutter) + gutter;
  raster.height = side * (shape.height + gutter) + gutter;
  raster.samples.assign(static_cast<std::size_t>(raster.width) * raster.height * raster.depth, 0);
  for (std::size_t i = 0; i < images.size(); ++i) {
    require_same_shape(images[i].shape(), shape, "write_grid");
    const int oy = static_cast<int>(i) / side * (shape.height + gutter) + gutter;
    const int ox = static_cast<int>(i) % side * (shape.width + gutter) + gutter;
    for (int c = 0; c < shape.channels; ++c) {
      for (int y = 0; y < shape.height; ++y) {
        for (int x = 0; x < shape.width; ++x) raster.at(oy + y, ox + x, c) = unit_to_byte(images[i].at(c, y, x));
      }
    }
  }
  write_pnm(file, raster, comments);
}

}  // namespace bcm
