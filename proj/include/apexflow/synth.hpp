#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "apexflow/dataset.hpp"
#include "apexflow/image.hpp"

namespace apexflow::synth {

/// Smooth random texture with values in roughly [0.1, 0.9], built from a sum of
/// sinusoids so it can be evaluated at any real coordinate.
class Texture {
public:
    Texture(std::uint64_t seed, int components = 24, double min_period = 10.0, double max_period = 40.0);

    double operator()(double x, double y) const;
    GrayImage render(int width, int height) const;
    /// Renders T(x - dx, y - dy): the texture moved by (dx, dy).
    GrayImage render_shifted(int width, int height, double dx, double dy) const;

private:
    struct Wave {
        double kx, ky, phase, amplitude;
    };
    std::vector<Wave> waves_;
    double offset_ = 0.5;
};

/// Class-specific motion pattern: a smooth displacement field localised on the
/// brows or the mouth, scaled by the per-frame amplitude.
struct MotionPattern {
    dataset::EmotionClass label = dataset::EmotionClass::Negative;
    double amplitude = 3.0;  // peak displacement in pixels
    double jitter_x = 0.0;
    double jitter_y = 0.0;

    /// Displacement at full amplitude.
    void displacement(double x, double y, int width, int height, double& dx, double& dy) const;
    /// Wrinkle shading at full amplitude, in [-1, 1], stripes across the motion direction.
    double crease(double x, double y, int width, int height) const;
};

struct ClipSpec {
    std::uint64_t texture_seed = 0;
    MotionPattern motion;
    int frames = 12;
    int apex = 6;  // 1-based
    double crease = 0.12;  // peak contrast of the wrinkle shading
    double noise = 0.0;
    std::uint64_t noise_seed = 0;
    int width = dataset::kFaceWidth;
    int height = dataset::kFaceHeight;
};

/// Piecewise-linear temporal profile: 0 at the onset, 1 at the apex, falling towards the offset.
double amplitude_profile(int frame, int apex, int frames);

/// Renders a clip in memory: frame j is T(x - a_j D(x)) + crease * a_j * C(x) plus noise.
dataset::FrameSequence render_clip(const ClipSpec& spec);

struct SynthConfig {
    int subjects = 12;
    int videos_per_subject = 6;
    int frames = 12;
    std::uint64_t seed = 1;
    bool include_apex = false;  // write the planted apex into the manifest
};

struct SynthClip {
    dataset::SampleRecord record;
    int planted_apex = 0;
    double amplitude = 0.0;
};

/// Writes `<out>/manifest.json`, `<out>/ground_truth.json` and one PNG frame
/// directory per clip. Output depends only on the config.
std::vector<SynthClip> generate_corpus(const SynthConfig& config, const std::filesystem::path& out_dir);

}  // namespace apexflow::synth
