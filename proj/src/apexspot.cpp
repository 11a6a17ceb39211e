#include "apexflow/apexspot.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "json.hpp"

#include "apexflow/error.hpp"

namespace apexflow::apexspot {

namespace {

constexpr const char* kRoleKeys[] = {"left_eyebrow", "right_eyebrow", "mouth"};

// Clockwise from top-left; the first entry carries bit 7.
constexpr int kNeighbourDx[8] = {-1, 0, 1, 1, 1, 0, -1, -1};
constexpr int kNeighbourDy[8] = {-1, -1, -1, 0, 1, 1, 1, 0};

std::string describe(const Rect& r) {
    return "[" + std::to_string(r.x) + ", " + std::to_string(r.y) + ", " + std::to_string(r.w) + ", " +
           std::to_string(r.h) + "]";
}

double mean_of(std::span<const double> s, std::size_t lo, std::size_t hi) {
    double acc = 0.0;
    for (std::size_t i = lo; i < hi; ++i) {
        acc += s[i];
    }
    return acc / static_cast<double>(hi - lo);
}

}  // namespace

RoiSet RoiSet::defaults(int width, int height) {
    const int tw = width / 3;
    const int th = height / 3;
    RoiSet set;
    set.rects[0] = {0, 0, tw, th};
    set.rects[1] = {width - tw, 0, tw, th};
    set.rects[2] = {tw, height - th, tw, th};
    return set;
}

void RoiSet::validate(int width, int height) const {
    for (int i = 0; i < 3; ++i) {
        const Rect& r = rects[i];
        if (r.w < 3 || r.h < 3) {
            throw ValidationError(std::string("RoI ") + kRoleKeys[i] + " " + describe(r) + " is smaller than 3x3");
        }
        if (r.x < 0 || r.y < 0 || r.x + r.w > width || r.y + r.h > height) {
            throw ValidationError(std::string("RoI ") + kRoleKeys[i] + " " + describe(r) + " leaves the " +
                                  std::to_string(width) + "x" + std::to_string(height) + " frame");
        }
    }
}

RoiSet load_roi_set(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open RoI file " + path.string());
    }
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::parse_error& e) {
        throw ValidationError("RoI file " + path.string() + " is not valid JSON: " + e.what());
    }
    RoiSet set;
    for (int i = 0; i < 3; ++i) {
        if (!doc.contains(kRoleKeys[i])) {
            throw ValidationError(std::string("RoI file lacks '") + kRoleKeys[i] + "'");
        }
        const auto& arr = doc[kRoleKeys[i]];
        if (!arr.is_array() || arr.size() != 4) {
            throw ValidationError(std::string("RoI '") + kRoleKeys[i] + "' must be [x, y, w, h]");
        }
        set.rects[i] = {arr[0].get<int>(), arr[1].get<int>(), arr[2].get<int>(), arr[3].get<int>()};
    }
    return set;
}

CodeImage lbp_image(const GrayImage& image) {
    if (image.width() < 3 || image.height() < 3) {
        throw ValidationError("LBP needs an image of at least 3x3 pixels");
    }
    CodeImage out;
    out.width = image.width() - 2;
    out.height = image.height() - 2;
    out.codes.resize(static_cast<std::size_t>(out.width) * out.height);
    for (int y = 1; y < image.height() - 1; ++y) {
        for (int x = 1; x < image.width() - 1; ++x) {
            const double centre = image.at(x, y);
            unsigned code = 0;
            for (int k = 0; k < 8; ++k) {
                code <<= 1;
                if (image.at(x + kNeighbourDx[k], y + kNeighbourDy[k]) >= centre) {
                    code |= 1u;
                }
            }
            out.codes[static_cast<std::size_t>(y - 1) * out.width + (x - 1)] = static_cast<std::uint8_t>(code);
        }
    }
    return out;
}

LbpHistogram roi_histogram(const CodeImage& codes, const Rect& r) {
    if (r.w <= 0 || r.h <= 0 || r.x < 0 || r.y < 0 || r.x + r.w > codes.width || r.y + r.h > codes.height) {
        throw ValidationError("histogram rectangle " + describe(r) + " outside the " + std::to_string(codes.width) +
                              "x" + std::to_string(codes.height) + " code image");
    }
    LbpHistogram hist{};
    for (int y = r.y; y < r.y + r.h; ++y) {
        for (int x = r.x; x < r.x + r.w; ++x) {
            hist[codes.at(x, y)] += 1.0;
        }
    }
    return hist;
}

LbpHistogram region_histogram(const CodeImage& codes, const Rect& roi) {
    // Interior pixels (x+1 .. x+w-2) have codes at (x .. x+w-3).
    return roi_histogram(codes, Rect{roi.x, roi.y, roi.w - 2, roi.h - 2});
}

std::optional<double> correlation(const LbpHistogram& a, const LbpHistogram& b) {
    const double n = static_cast<double>(a.size());
    const double mean_a = std::accumulate(a.begin(), a.end(), 0.0) / n;
    const double mean_b = std::accumulate(b.begin(), b.end(), 0.0) / n;
    double cov = 0.0;
    double var_a = 0.0;
    double var_b = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double da = a[i] - mean_a;
        const double db = b[i] - mean_b;
        cov += da * db;
        var_a += da * da;
        var_b += db * db;
    }
    if (var_a <= 0.0 || var_b <= 0.0) {
        return std::nullopt;
    }
    return std::clamp(cov / std::sqrt(var_a * var_b), -1.0, 1.0);
}

DifferenceSignals difference_signals(const dataset::FrameSequence& seq, const RoiSet& rois) {
    if (seq.count() < 2) {
        throw ValidationError("difference signals need at least 2 frames");
    }
    rois.validate(seq.width(), seq.height());

    std::array<LbpHistogram, 3> onset{};
    {
        const CodeImage codes = lbp_image(seq.frames.front());
        for (int r = 0; r < 3; ++r) {
            onset[r] = region_histogram(codes, rois.rects[r]);
        }
    }
    DifferenceSignals out;
    for (auto& s : out.series) {
        s.reserve(seq.count() - 1);
    }
    for (int j = 1; j < seq.count(); ++j) {
        const CodeImage codes = lbp_image(seq.frames[j]);
        for (int r = 0; r < 3; ++r) {
            const auto c = correlation(onset[r], region_histogram(codes, rois.rects[r]));
            out.series[r].push_back(c ? 1.0 - *c : 0.0);
        }
    }
    return out;
}

int divide_and_conquer_peak(std::span<const double> signal, int first_index) {
    if (signal.empty()) {
        throw ValidationError("cannot search an empty signal");
    }
    std::size_t lo = 0;
    std::size_t hi = signal.size();
    while (hi - lo > 3) {
        const std::size_t mid = lo + (hi - lo) / 2;
        // Ties keep the earlier half.
        if (mean_of(signal, mid, hi) > mean_of(signal, lo, mid)) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    std::size_t best = lo;
    for (std::size_t i = lo + 1; i < hi; ++i) {
        if (signal[i] > signal[best]) {
            best = i;
        }
    }
    // The halving can settle on a shoulder; climb to the local maximum it
    // belongs to.
    for (;;) {
        const bool left_higher = best > 0 && signal[best - 1] > signal[best];
        const bool right_higher = best + 1 < signal.size() && signal[best + 1] > signal[best];
        if (right_higher && (!left_higher || signal[best + 1] > signal[best - 1])) {
            ++best;
        } else if (left_higher) {
            --best;
        } else {
            break;
        }
    }
    return first_index + static_cast<int>(best);
}

int spot_apex(const dataset::FrameSequence& seq, const RoiSet& rois) {
    if (seq.count() < 3) {
        throw ValidationError("apex spotting needs at least 3 frames");
    }
    const DifferenceSignals signals = difference_signals(seq, rois);
    int chosen = 0;
    double peak = -1.0;
    for (int r = 0; r < 3; ++r) {
        const double m = *std::max_element(signals.series[r].begin(), signals.series[r].end());
        if (m > peak) {
            peak = m;
            chosen = r;
        }
    }
    return divide_and_conquer_peak(signals.series[chosen], 2);
}

int resolve_apex(const dataset::SampleRecord& record, const dataset::FrameSequence& seq, const RoiSet& rois) {
    if (record.apex_index) {
        if (*record.apex_index < record.onset_index || *record.apex_index > record.offset_index) {
            throw ValidationError("video " + record.video + ": apex outside [onset, offset]");
        }
        return *record.apex_index;
    }
    return record.onset_index + spot_apex(seq, rois) - 1;
}

}  // namespace apexflow::apexspot
