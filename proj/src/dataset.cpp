#include "apexflow/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <sstream>

#include "json.hpp"

#include "apexflow/error.hpp"
#include "apexflow/imageio.hpp"
#include "apexflow/log.hpp"

namespace apexflow::dataset {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
    return out;
}

using LabelTable = std::map<std::string, std::optional<EmotionClass>, std::less<>>;

const LabelTable& label_table(DatasetId id) {
    static const LabelTable three_class = {
        {"negative", EmotionClass::Negative},
        {"positive", EmotionClass::Positive},
        {"surprise", EmotionClass::Surprise},
    };
    // Sadness and fear are dropped so the three-class total matches 88/32/25.
    static const LabelTable casme2 = {
        {"disgust", EmotionClass::Negative},  {"repression", EmotionClass::Negative},
        {"happiness", EmotionClass::Positive}, {"surprise", EmotionClass::Surprise},
        {"others", std::nullopt},              {"sadness", std::nullopt},
        {"fear", std::nullopt},
    };
    static const LabelTable samm = {
        {"anger", EmotionClass::Negative},     {"contempt", EmotionClass::Negative},
        {"disgust", EmotionClass::Negative},   {"fear", EmotionClass::Negative},
        {"sadness", EmotionClass::Negative},   {"happiness", EmotionClass::Positive},
        {"surprise", EmotionClass::Surprise},  {"other", std::nullopt},
    };
    switch (id) {
        case DatasetId::CASME2:
            return casme2;
        case DatasetId::SAMM:
            return samm;
        case DatasetId::SMIC:
        case DatasetId::SYNTHETIC:
            break;
    }
    return three_class;
}

bool is_frame_file(const fs::path& p) {
    const std::string ext = lower(p.extension().string());
    return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

std::string row_prefix(std::size_t row) { return "manifest row " + std::to_string(row) + ": "; }

std::string json_text(const json& value, const char* key, std::size_t row) {
    if (!value.contains(key) || value[key].is_null()) {
        throw ValidationError(row_prefix(row) + "missing key '" + key + "'");
    }
    const json& field = value[key];
    if (field.is_string()) {
        return field.get<std::string>();
    }
    if (field.is_number_integer()) {
        return std::to_string(field.get<long long>());
    }
    throw ValidationError(row_prefix(row) + "key '" + key + "' must be a string");
}

int json_index(const json& value, const char* key, std::size_t row) {
    if (!value.contains(key) || !value[key].is_number_integer()) {
        throw ValidationError(row_prefix(row) + "key '" + key + "' must be an integer");
    }
    return value[key].get<int>();
}

}  // namespace

std::string_view to_string(DatasetId id) {
    switch (id) {
        case DatasetId::SMIC:
            return "SMIC";
        case DatasetId::CASME2:
            return "CASME2";
        case DatasetId::SAMM:
            return "SAMM";
        case DatasetId::SYNTHETIC:
            return "SYNTHETIC";
    }
    return "?";
}

std::string_view to_string(EmotionClass label) {
    switch (label) {
        case EmotionClass::Negative:
            return "negative";
        case EmotionClass::Positive:
            return "positive";
        case EmotionClass::Surprise:
            return "surprise";
    }
    return "?";
}

DatasetId parse_dataset(std::string_view name) {
    const std::string n = lower(name);
    if (n == "smic") return DatasetId::SMIC;
    if (n == "casme2" || n == "casme ii" || n == "casme_ii" || n == "casmeii") return DatasetId::CASME2;
    if (n == "samm") return DatasetId::SAMM;
    if (n == "synthetic") return DatasetId::SYNTHETIC;
    throw ValidationError("unknown dataset '" + std::string(name) + "'");
}

EmotionClass parse_emotion(std::string_view name) {
    const std::string n = lower(name);
    if (n == "negative") return EmotionClass::Negative;
    if (n == "positive") return EmotionClass::Positive;
    if (n == "surprise") return EmotionClass::Surprise;
    throw ValidationError("unknown emotion class '" + std::string(name) + "'");
}

std::optional<EmotionClass> remap_emotion(std::string_view raw_label, DatasetId dataset) {
    const LabelTable& table = label_table(dataset);
    auto it = table.find(lower(raw_label));
    if (it == table.end()) {
        throw ValidationError("label '" + std::string(raw_label) + "' is not a " +
                              std::string(to_string(dataset)) + " label");
    }
    return it->second;
}

void validate(const SampleRecord& r) {
    if (r.subject.empty() || r.video.empty()) {
        throw ValidationError("record has an empty subject or video id");
    }
    if (r.onset_index < 1) {
        throw ValidationError("video " + r.video + ": onset must be >= 1");
    }
    if (r.offset_index <= r.onset_index) {
        throw ValidationError("video " + r.video + ": offset " + std::to_string(r.offset_index) +
                              " must come after onset " + std::to_string(r.onset_index));
    }
    if (r.apex_index) {
        if (*r.apex_index < r.onset_index || *r.apex_index > r.offset_index) {
            throw ValidationError("video " + r.video + ": apex " + std::to_string(*r.apex_index) +
                                  " outside [" + std::to_string(r.onset_index) + ", " +
                                  std::to_string(r.offset_index) + "]");
        }
        if (r.dataset == DatasetId::SMIC) {
            throw ValidationError("video " + r.video + ": SMIC records carry no apex annotation");
        }
    } else if (r.dataset == DatasetId::CASME2 || r.dataset == DatasetId::SAMM) {
        throw ValidationError("video " + r.video + ": " + std::string(to_string(r.dataset)) +
                              " records require an apex index");
    }
    const auto mapped = remap_emotion(r.raw_label, r.dataset);
    if (!mapped || *mapped != r.label) {
        throw ValidationError("video " + r.video + ": label does not match raw label '" + r.raw_label + "'");
    }
}

Manifest load_manifest(const fs::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open manifest " + path.string());
    }
    json doc;
    try {
        in >> doc;
    } catch (const json::parse_error& e) {
        throw ValidationError("manifest " + path.string() + " is not valid JSON: " + e.what());
    }
    if (!doc.is_array()) {
        throw ValidationError("manifest " + path.string() + " must be a JSON array");
    }

    const fs::path base = path.parent_path();
    Manifest manifest;
    for (std::size_t row = 0; row < doc.size(); ++row) {
        const json& item = doc[row];
        if (!item.is_object()) {
            throw ValidationError(row_prefix(row) + "expected an object");
        }
        SampleRecord r;
        try {
            r.dataset = parse_dataset(json_text(item, "dataset", row));
            r.subject = json_text(item, "subject", row);
            r.video = json_text(item, "video", row);
            r.raw_label = json_text(item, "raw_label", row);
            r.onset_index = json_index(item, "onset", row);
            r.offset_index = json_index(item, "offset", row);
            if (item.contains("apex") && !item["apex"].is_null()) {
                r.apex_index = json_index(item, "apex", row);
            }
            fs::path dir = json_text(item, "frame_dir", row);
            r.frame_dir = (dir.is_absolute() ? dir : base / dir).lexically_normal();

            const auto label = remap_emotion(r.raw_label, r.dataset);
            if (!label) {
                ++manifest.excluded;
                continue;
            }
            r.label = *label;
            validate(r);
        } catch (const ValidationError& e) {
            const std::string msg = e.what();
            if (msg.rfind("manifest row", 0) == 0) {
                throw;
            }
            throw ValidationError(row_prefix(row) + msg);
        }
        manifest.records.push_back(std::move(r));
    }
    if (manifest.excluded > 0) {
        log::info("excluded " + std::to_string(manifest.excluded) + " clips outside the three-class scheme");
    }
    return manifest;
}

void write_manifest(const fs::path& path, std::span<const SampleRecord> records) {
    const fs::path base = path.parent_path().empty() ? fs::path(".") : path.parent_path();
    const fs::path abs_base = fs::absolute(base).lexically_normal();
    json doc = json::array();
    for (const SampleRecord& r : records) {
        fs::path dir = fs::absolute(r.frame_dir).lexically_normal();
        const fs::path rel = dir.lexically_relative(abs_base);
        if (!rel.empty() && *rel.begin() != "..") {
            dir = rel;
        }
        json item = {
            {"dataset", std::string(to_string(r.dataset))},
            {"subject", r.subject},
            {"video", r.video},
            {"raw_label", r.raw_label},
            {"onset", r.onset_index},
            {"apex", r.apex_index ? json(*r.apex_index) : json(nullptr)},
            {"offset", r.offset_index},
            {"frame_dir", dir.generic_string()},
        };
        doc.push_back(std::move(item));
    }
    std::ofstream out(path);
    if (!out) {
        throw IoError("cannot write manifest " + path.string());
    }
    out << doc.dump(2) << '\n';
}

std::vector<fs::path> list_frames(const fs::path& dir) {
    if (!fs::is_directory(dir)) {
        throw IoError("frame directory not found: " + dir.string());
    }
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.is_regular_file() && is_frame_file(entry.path())) {
            files.push_back(entry.path());
        }
    }
    std::sort(files.begin(), files.end(),
              [](const fs::path& a, const fs::path& b) { return a.filename().string() < b.filename().string(); });
    return files;
}

FrameSequence load_sequence(const SampleRecord& record, int width, int height) {
    const std::vector<fs::path> files = list_frames(record.frame_dir);
    if (static_cast<int>(files.size()) < record.offset_index) {
        throw IoError("video " + record.video + ": expected at least " + std::to_string(record.offset_index) +
                      " frames in " + record.frame_dir.string() + ", found " + std::to_string(files.size()));
    }
    FrameSequence seq;
    seq.frames.reserve(record.frame_count());
    for (int idx = record.onset_index; idx <= record.offset_index; ++idx) {
        GrayImage img = io::read_gray(files[idx - 1]);
        if (img.width() != width || img.height() != height) {
            if (img.width() < 2 || img.height() < 2) {
                throw IoError("frame " + files[idx - 1].string() + " is too small to resize");
            }
            img = resize_bilinear(img, width, height);
        }
        seq.frames.push_back(std::move(img));
    }
    return seq;
}

std::array<std::size_t, kNumClasses> class_counts(std::span<const SampleRecord> records) {
    std::array<std::size_t, kNumClasses> counts{};
    for (const SampleRecord& r : records) {
        ++counts[static_cast<int>(r.label)];
    }
    return counts;
}

}  // namespace apexflow::dataset
