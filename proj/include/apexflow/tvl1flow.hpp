#pragma once

#include <filesystem>
#include <utility>
#include <vector>

#include "apexflow/image.hpp"

namespace apexflow::flow {

/// Dense displacement field in pixels: a point at (x, y) in the first frame
/// moves to (x + u, y + v) in the second.
struct FlowField {
    Plane u;
    Plane v;

    FlowField() = default;
    FlowField(int width, int height) : u(width, height), v(width, height) {}
    FlowField(Plane u_, Plane v_);

    int width() const noexcept { return u.width(); }
    int height() const noexcept { return u.height(); }

    bool operator==(const FlowField&) const = default;
};

struct TvL1Params {
    double lambda = 0.15;
    double theta = 0.3;
    double tau = 0.25;
    int n_scales = 5;
    double zoom = 0.5;
    int n_warps = 5;
    double epsilon = 0.01;
    int max_inner_iterations = 300;

    /// Throws ValidationError on out-of-range values.
    void validate() const;
};

inline constexpr int kInputSize = 28;
inline constexpr int kMinPyramidSide = 16;

/// Network input: both flow components resampled to size x size.
struct FlowInputPair {
    int size = kInputSize;
    std::vector<double> u;
    std::vector<double> v;

    bool operator==(const FlowInputPair&) const = default;
};

/// Fine-to-coarse pyramid. Level k+1 is level k blurred with
/// sigma = 0.6 * sqrt(1/zoom^2 - 1) and resampled to ceil(zoom * side).
/// Levels whose shorter side would drop below 16 pixels are not built.
std::vector<GrayImage> build_pyramid(const GrayImage& image, const TvL1Params& params);

/// output(x, y) = image sampled bilinearly at (x + u, y + v), border-clamped.
GrayImage warp(const GrayImage& image, const FlowField& flow);

/// Joint min/max stretch of a frame pair to [0, 255], the intensity range the
/// default solver weights are tuned for. A constant pair maps to zeros.
std::pair<GrayImage, GrayImage> normalize_pair(const GrayImage& first, const GrayImage& second);

/// One pyramid level of the duality-based TV-L1 solver, starting from `init`.
/// Expects intensities in the normalize_pair range.
FlowField tvl1_level(const GrayImage& first, const GrayImage& second, const FlowField& init,
                     const TvL1Params& params);

/// Coarse-to-fine flow from `onset` to `apex`.
FlowField estimate_flow(const GrayImage& onset, const GrayImage& apex, const TvL1Params& params = {});

/// Spatial resampling of u and v to 28x28. Values are not rescaled.
FlowInputPair resize_to_input(const FlowField& flow, int size = kInputSize);

/// Middlebury .flo: float32 tag 202021.25, int32 width, int32 height, then
/// row-major interleaved (u, v) float32 pairs, little-endian.
inline constexpr float kFloTag = 202021.25f;
void write_flo(const FlowField& flow, const std::filesystem::path& path);
FlowField read_flo(const std::filesystem::path& path);

/// Middlebury colour-wheel rendering normalised by the field's largest
/// magnitude. Zero motion is white.
RgbImage flow_to_color(const FlowField& flow);

/// Mean Euclidean distance between corresponding flow vectors.
double mean_endpoint_error(const FlowField& a, const FlowField& b);

}  // namespace apexflow::flow
