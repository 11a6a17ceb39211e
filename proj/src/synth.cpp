#include "apexflow/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

#include "json.hpp"

#include "apexflow/error.hpp"
#include "apexflow/imageio.hpp"

namespace apexflow::synth {

namespace {

constexpr double kPi = std::numbers::pi;

struct Bump {
    double cx, cy, sigma, dx, dy;
};

void add_bump(const Bump& b, double x, double y, double& dx, double& dy) {
    const double rx = x - b.cx;
    const double ry = y - b.cy;
    const double g = std::exp(-(rx * rx + ry * ry) / (2.0 * b.sigma * b.sigma));
    dx += g * b.dx;
    dy += g * b.dy;
}

double uniform(std::mt19937_64& rng, double lo, double hi) {
    return lo + (hi - lo) * (static_cast<double>(rng() >> 11) * 0x1.0p-53);
}

}  // namespace

Texture::Texture(std::uint64_t seed, int components, double min_period, double max_period) {
    if (components < 1 || min_period <= 0.0 || max_period < min_period) {
        throw ValidationError("invalid texture parameters");
    }
    std::mt19937_64 rng(seed);
    const double amp = 0.15 * std::sqrt(2.0 / components);
    waves_.reserve(static_cast<std::size_t>(components));
    for (int i = 0; i < components; ++i) {
        const double angle = uniform(rng, 0.0, 2.0 * kPi);
        const double period = uniform(rng, min_period, max_period);
        const double k = 2.0 * kPi / period;
        waves_.push_back({k * std::cos(angle), k * std::sin(angle), uniform(rng, 0.0, 2.0 * kPi), amp});
    }
}

double Texture::operator()(double x, double y) const {
    double s = offset_;
    for (const Wave& w : waves_) s += w.amplitude * std::sin(w.kx * x + w.ky * y + w.phase);
    return std::clamp(s, 0.02, 0.98);
}

GrayImage Texture::render(int width, int height) const { return render_shifted(width, height, 0.0, 0.0); }

GrayImage Texture::render_shifted(int width, int height, double dx, double dy) const {
    GrayImage img(width, height);
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) img.at(x, y) = (*this)(x - dx, y - dy);
    return img;
}

std::vector<Bump> bumps(const MotionPattern& m, int width, int height) {
    const double w = width;
    const double h = height;
    const double brow_y = h / 6.0 + m.jitter_y;
    const double lbrow_x = w / 6.0 + m.jitter_x;
    const double rbrow_x = 5.0 * w / 6.0 + m.jitter_x;
    const double mouth_x = w / 2.0 + m.jitter_x;
    const double mouth_y = 5.0 * h / 6.0 + m.jitter_y;
    const double s_brow = w / 12.0;
    const double s_mouth = w / 17.0;
    switch (m.label) {
        case dataset::EmotionClass::Negative:
            return {{lbrow_x, brow_y, s_brow, 0.6, 0.8}, {rbrow_x, brow_y, s_brow, -0.6, 0.8}};
        case dataset::EmotionClass::Positive:
            return {{mouth_x - w / 10.0, mouth_y, s_mouth, -0.6, -0.8}, {mouth_x + w / 10.0, mouth_y, s_mouth, 0.6, -0.8}};
        case dataset::EmotionClass::Surprise:
            return {{lbrow_x, brow_y, s_brow, 0.0, -1.0},
                    {rbrow_x, brow_y, s_brow, 0.0, -1.0},
                    {mouth_x, mouth_y - h / 16.0, s_mouth, 0.0, -0.6},
                    {mouth_x, mouth_y + h / 16.0, s_mouth, 0.0, 0.8}};
    }
    return {};
}

void MotionPattern::displacement(double x, double y, int width, int height, double& dx, double& dy) const {
    dx = 0.0;
    dy = 0.0;
    for (const Bump& b : bumps(*this, width, height)) add_bump(b, x, y, dx, dy);
    dx *= amplitude;
    dy *= amplitude;
}

double MotionPattern::crease(double x, double y, int width, int height) const {
    constexpr double kPeriod = 5.0;
    double c = 0.0;
    for (const Bump& b : bumps(*this, width, height)) {
        const double rx = x - b.cx;
        const double ry = y - b.cy;
        const double g = std::exp(-(rx * rx + ry * ry) / (2.0 * b.sigma * b.sigma));
        const double norm = std::hypot(b.dx, b.dy);
        const double along = (rx * b.dx + ry * b.dy) / norm;
        c += g * std::sin(2.0 * kPi * along / kPeriod);
    }
    return std::clamp(c, -1.0, 1.0);
}

double amplitude_profile(int frame, int apex, int frames) {
    if (frame <= 1 || frame > frames) return 0.0;
    if (frame <= apex) {
        return (frame - 1) / static_cast<double>(apex - 1);
    }
    return 1.0 - (frame - apex) / static_cast<double>(frames - apex + 1);
}

dataset::FrameSequence render_clip(const ClipSpec& spec) {
    if (spec.frames < 3 || spec.apex < 2 || spec.apex > spec.frames || spec.width < 8 || spec.height < 8) {
        throw ValidationError("invalid clip specification");
    }
    const Texture tex(spec.texture_seed);
    const int w = spec.width;
    const int h = spec.height;
    std::vector<double> field_x(static_cast<std::size_t>(w) * h);
    std::vector<double> field_y(field_x.size());
    std::vector<double> shading(field_x.size());
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const std::size_t i = static_cast<std::size_t>(y) * w + x;
            spec.motion.displacement(x, y, w, h, field_x[i], field_y[i]);
            shading[i] = spec.crease * spec.motion.crease(x, y, w, h);
        }
    dataset::FrameSequence seq;
    seq.frames.reserve(static_cast<std::size_t>(spec.frames));
    std::mt19937_64 noise_rng(spec.noise_seed);
    std::normal_distribution<double> noise(0.0, spec.noise > 0.0 ? spec.noise : 1.0);
    for (int j = 1; j <= spec.frames; ++j) {
        const double a = amplitude_profile(j, spec.apex, spec.frames);
        GrayImage img(w, h);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const std::size_t i = static_cast<std::size_t>(y) * w + x;
                double v = tex(x - a * field_x[i], y - a * field_y[i]) + a * shading[i];
                if (spec.noise > 0.0) v += noise(noise_rng);
                img.at(x, y) = std::clamp(v, 0.0, 1.0);
            }
        seq.frames.push_back(std::move(img));
    }
    return seq;
}

std::vector<SynthClip> generate_corpus(const SynthConfig& config, const std::filesystem::path& out_dir) {
    if (config.subjects < 1 || config.videos_per_subject < 1 || config.frames < 5) {
        throw ValidationError("synth needs at least one subject, one video and five frames");
    }
    std::error_code ec;
    std::filesystem::create_directories(out_dir / "frames", ec);
    if (ec) {
        throw IoError("cannot create " + (out_dir / "frames").string() + ": " + ec.message());
    }
    std::mt19937_64 rng(config.seed);
    std::vector<SynthClip> clips;
    nlohmann::ordered_json truth = nlohmann::ordered_json::array();
    for (int s = 1; s <= config.subjects; ++s) {
        char subject[32];
        std::snprintf(subject, sizeof subject, "s%02d", s);
        const std::uint64_t face_seed = rng();
        for (int v = 1; v <= config.videos_per_subject; ++v) {
            const auto label = static_cast<dataset::EmotionClass>((v - 1 + s) % dataset::kNumClasses);
            ClipSpec spec;
            spec.texture_seed = face_seed ^ (static_cast<std::uint64_t>(v) * 0x9e3779b97f4a7c15ULL);
            spec.motion.label = label;
            spec.motion.amplitude = uniform(rng, 2.5, 3.5);
            spec.motion.jitter_x = uniform(rng, -3.0, 3.0);
            spec.motion.jitter_y = uniform(rng, -3.0, 3.0);
            spec.frames = config.frames;
            const int lo = std::max(2, config.frames / 3);
            const int hi = std::max(lo, (2 * config.frames) / 3);
            spec.apex = lo + static_cast<int>(rng() % static_cast<std::uint64_t>(hi - lo + 1));
            spec.noise = 0.004;
            spec.noise_seed = rng();

            SynthClip clip;
            clip.planted_apex = spec.apex;
            clip.amplitude = spec.motion.amplitude;
            dataset::SampleRecord& r = clip.record;
            r.dataset = dataset::DatasetId::SYNTHETIC;
            r.subject = subject;
            r.video = std::string(subject) + "_v" + std::to_string(v);
            r.raw_label = std::string(dataset::to_string(label));
            r.label = label;
            r.onset_index = 1;
            r.offset_index = spec.frames;
            if (config.include_apex) r.apex_index = spec.apex;
            r.frame_dir = out_dir / "frames" / r.video;

            std::filesystem::create_directories(r.frame_dir, ec);
            if (ec) throw IoError("cannot create " + r.frame_dir.string() + ": " + ec.message());
            const dataset::FrameSequence seq = render_clip(spec);
            for (int j = 0; j < seq.count(); ++j) {
                char name[32];
                std::snprintf(name, sizeof name, "img%03d.png", j + 1);
                io::write_gray_png(r.frame_dir / name, seq.frames[static_cast<std::size_t>(j)]);
            }
            truth.push_back({{"video", r.video},
                             {"subject", r.subject},
                             {"label", r.raw_label},
                             {"apex", spec.apex},
                             {"amplitude", spec.motion.amplitude},
                             {"jitter", {spec.motion.jitter_x, spec.motion.jitter_y}}});
            clips.push_back(std::move(clip));
        }
    }
    std::vector<dataset::SampleRecord> records;
    records.reserve(clips.size());
    for (const auto& c : clips) records.push_back(c.record);
    dataset::write_manifest(out_dir / "manifest.json", records);
    std::ofstream gt(out_dir / "ground_truth.json", std::ios::binary);
    if (!gt) throw IoError("cannot write " + (out_dir / "ground_truth.json").string());
    gt << truth.dump(2) << '\n';
    return clips;
}

}  // namespace apexflow::synth
