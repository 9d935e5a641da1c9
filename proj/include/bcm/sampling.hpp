#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "bcm/image.hpp"
#include "bcm/model.hpp"
#include "bcm/schedules.hpp"
#include "bcm/triggers.hpp"

namespace bcm {

/// n one-step samples f(T z, T), z ~ N(0, I), clamped into [-1, 1].
std::vector<ImageTensor> sample_clean(const NetworkParams& params, Rng& rng, std::size_t n,
                                      const ScheduleConfig& cfg);

/// n one-step samples f(T (R + z), T), clamped into [-1, 1]. Consumes the rng
/// exactly like sample_clean.
std::vector<ImageTensor> sample_backdoor(const NetworkParams& params, const TriggerSpec& trigger, Rng& rng,
                                         std::size_t n, const ScheduleConfig& cfg);

/// Tiles images row-major on a ceil(sqrt(n)) square with a one pixel gutter
/// and writes a PGM (1 channel) or PPM (3 channels).
void write_grid(const std::filesystem::path& file, const std::vector<ImageTensor>& images,
                const std::vector<std::string>& comments = {});

/// Side length of the grid used for n images.
int grid_side(std::size_t n);

}  // namespace bcm
