#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "apexflow/image.hpp"

namespace apexflow::dataset {

enum class DatasetId { SMIC, CASME2, SAMM, SYNTHETIC };

/// Three-class target. The ordinal values are part of every file format.
enum class EmotionClass : int { Negative = 0, Positive = 1, Surprise = 2 };

inline constexpr int kNumClasses = 3;
inline constexpr int kFaceWidth = 170;
inline constexpr int kFaceHeight = 140;

std::string_view to_string(DatasetId id);
std::string_view to_string(EmotionClass label);
DatasetId parse_dataset(std::string_view name);        // throws ValidationError
EmotionClass parse_emotion(std::string_view name);     // negative|positive|surprise

/// One labelled clip. Indices are 1-based positions in the lexicographically
/// sorted frame directory.
struct SampleRecord {
    DatasetId dataset = DatasetId::SYNTHETIC;
    std::string subject;
    std::string video;
    std::string raw_label;
    EmotionClass label = EmotionClass::Negative;
    int onset_index = 1;
    std::optional<int> apex_index;
    int offset_index = 1;
    std::filesystem::path frame_dir;

    /// Number of frames between onset and offset inclusive.
    int frame_count() const noexcept { return offset_index - onset_index + 1; }

    bool operator==(const SampleRecord&) const = default;
};

/// Throws ValidationError if the record breaks an index or label invariant.
void validate(const SampleRecord& record);

struct FrameSequence {
    std::vector<GrayImage> frames;

    int count() const noexcept { return static_cast<int>(frames.size()); }
    int width() const noexcept { return frames.empty() ? 0 : frames.front().width(); }
    int height() const noexcept { return frames.empty() ? 0 : frames.front().height(); }
};

/// Maps a native label to the three-class scheme. std::nullopt means the clip
/// is excluded from all experiments. Unknown labels throw ValidationError.
std::optional<EmotionClass> remap_emotion(std::string_view raw_label, DatasetId dataset);

struct Manifest {
    std::vector<SampleRecord> records;
    std::size_t excluded = 0;  // rows dropped because their label maps to nothing
};

/// Reads a JSON manifest. Relative frame_dir entries resolve against the
/// manifest's own directory. Errors name the offending row (0-based).
Manifest load_manifest(const std::filesystem::path& path);

/// Writes records in manifest format; frame directories below the manifest's
/// directory are stored relative to it.
void write_manifest(const std::filesystem::path& path, std::span<const SampleRecord> records);

/// Image files (png/jpg/jpeg) in a directory, sorted by file name.
std::vector<std::filesystem::path> list_frames(const std::filesystem::path& dir);

/// Loads frames onset..offset as grayscale, bilinearly resized to the target
/// size when they differ from it.
FrameSequence load_sequence(const SampleRecord& record, int width = kFaceWidth, int height = kFaceHeight);

std::array<std::size_t, kNumClasses> class_counts(std::span<const SampleRecord> records);

}  // namespace apexflow::dataset
