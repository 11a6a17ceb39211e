#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "apexflow/dataset.hpp"
#include "apexflow/image.hpp"

namespace apexflow::apexspot {

struct Rect {
    int x = 0;
    int y = 0;
    int w = 0;
    int h = 0;

    bool operator==(const Rect&) const = default;
};

enum class RoiRole { LeftEyeBrow = 0, RightEyeBrow = 1, Mouth = 2 };

struct RoiSet {
    std::array<Rect, 3> rects{};

    const Rect& operator[](RoiRole role) const { return rects[static_cast<int>(role)]; }

    /// Upper-left third, upper-right third and lower-middle third of the frame.
    static RoiSet defaults(int width = dataset::kFaceWidth, int height = dataset::kFaceHeight);

    /// Throws ValidationError unless every rectangle is at least 3x3 and inside
    /// a width x height frame.
    void validate(int width, int height) const;
};

/// JSON object {"left_eyebrow": [x,y,w,h], "right_eyebrow": [...], "mouth": [...]}.
RoiSet load_roi_set(const std::filesystem::path& path);

/// LBP codes of the interior pixels; code (x, y) belongs to image pixel (x+1, y+1).
struct CodeImage {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> codes;

    std::uint8_t at(int x, int y) const { return codes[static_cast<std::size_t>(y) * width + x]; }
};

using LbpHistogram = std::array<double, 256>;

/// Radius-1, 8-neighbour LBP. A neighbour >= centre sets its bit; bits run
/// clockwise from the top-left neighbour, which is the most significant.
CodeImage lbp_image(const GrayImage& image);

/// Histogram of codes inside a rectangle given in code-image coordinates.
LbpHistogram roi_histogram(const CodeImage& codes, const Rect& code_rect);

/// Histogram over the interior pixels of a rectangle given in image coordinates.
LbpHistogram region_histogram(const CodeImage& codes, const Rect& image_roi);

/// Pearson correlation across the 256 bins; nullopt if either side is constant.
std::optional<double> correlation(const LbpHistogram& a, const LbpHistogram& b);

/// series[r][k] holds d for frame j = k + 2 and RoI r (RoiRole order).
struct DifferenceSignals {
    std::array<std::vector<double>, 3> series;
};

DifferenceSignals difference_signals(const dataset::FrameSequence& sequence, const RoiSet& rois);

/// Divide-and-conquer peak search over a signal whose first element sits at
/// frame index `first_index`. Returns a frame index.
int divide_and_conquer_peak(std::span<const double> signal, int first_index = 2);

/// Sequence-local apex index in [2, count].
int spot_apex(const dataset::FrameSequence& sequence, const RoiSet& rois);

/// Record-level apex index: the annotated apex when present, otherwise the
/// spotted one (shifted by the record's onset).
int resolve_apex(const dataset::SampleRecord& record, const dataset::FrameSequence& sequence, const RoiSet& rois);

}  // namespace apexflow::apexspot
