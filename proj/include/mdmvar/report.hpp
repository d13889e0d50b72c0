#pragma once

// Output helpers: round-trip float formatting, CSV, standalone SVG plots and
// the per-directory manifest.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace mdmvar {

/// printf("%.17g"); 17 significant digits round-trip any double.
[[nodiscard]] std::string fmt17(double x);

/// Writes `content` to `path`, creating parent directories. Throws ValidationError on I/O failure.
void write_text(const std::filesystem::path& path, const std::string& content);
[[nodiscard]] std::string read_text(const std::filesystem::path& path);

struct PlotSeries {
    std::string label;
    std::vector<double> x;
    std::vector<double> y;
    bool markers = false;  ///< scatter points instead of a polyline
    std::string color = "#1f77b4";
};

struct PlotNote {
    double x0 = 0.0, x1 = 0.0;  ///< horizontal span in data coordinates
    double y = 0.0;
    std::string text;
};

/// A self-contained SVG line/scatter chart with linear axes.
[[nodiscard]] std::string svg_plot(const std::string& title, const std::string& xlabel, const std::string& ylabel,
                                   const std::vector<PlotSeries>& series, const std::vector<PlotNote>& notes = {});

/// manifest.json: {"command", "seed", "config"} where config is a JSON document.
void write_manifest(const std::filesystem::path& dir, const std::string& command, std::uint64_t seed,
                    const std::string& config_json);

/// Parsed step,loss,weight_mean file.
struct LossCurve {
    std::vector<int> step;
    std::vector<double> loss;
    std::vector<double> weight_mean;
};
[[nodiscard]] LossCurve read_loss_csv(const std::filesystem::path& path);

}  // namespace mdmvar
