#pragma once

#include <filesystem>
#include <string_view>

namespace bcm {

enum class PlotKind { fid_mse_vs_rate, loss_curves };

std::string_view to_string(PlotKind kind) noexcept;
PlotKind parse_plot_kind(std::string_view name);

/// Renders an SVG from a CSV alone, deterministically.
///   fid_mse_vs_rate: columns rate, fid, mse; FID on the left axis, MSE on the right.
///   loss_curves:     columns tick, branch, loss_mean; one line per branch.
/// Default output is `<csv dir>/<kind>.svg`. A missing column throws
/// SchemaError naming it; a CSV without usable rows throws EmptyInput and
/// writes nothing. The CSV's config_hash comment is carried into the SVG.
std::filesystem::path render_plot(const std::filesystem::path& csv, PlotKind kind,
                                  std::filesystem::path out = {});

}  // namespace bcm
