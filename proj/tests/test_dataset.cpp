#include "doctest.h"

#include <string>

#include "json.hpp"

#include "apexflow/dataset.hpp"
#include "apexflow/error.hpp"
#include "apexflow/imageio.hpp"
#include "test_util.hpp"

using namespace apexflow;
using namespace apexflow::dataset;
using nlohmann::json;

namespace {

json row(const std::string& ds, const std::string& subject, const std::string& video, const std::string& label,
         int onset, json apex, int offset, const std::string& dir = "frames") {
    return {{"dataset", ds},       {"subject", subject}, {"video", video},      {"raw_label", label},
            {"onset", onset},      {"apex", apex},       {"offset", offset},    {"frame_dir", dir}};
}

void add_rows(json& doc, const std::string& ds, const std::string& label, int count, bool with_apex) {
    for (int i = 0; i < count; ++i) {
        const std::string id = ds + "_" + label + "_" + std::to_string(i);
        doc.push_back(row(ds, "s" + std::to_string(i % 7), id, label, 1, with_apex ? json(5) : json(nullptr), 10));
    }
}

SampleRecord record(DatasetId ds, const std::string& raw, std::optional<int> apex) {
    SampleRecord r;
    r.dataset = ds;
    r.subject = "s1";
    r.video = "v1";
    r.raw_label = raw;
    r.label = *remap_emotion(raw, ds);
    r.onset_index = 1;
    r.apex_index = apex;
    r.offset_index = 20;
    r.frame_dir = "x";
    return r;
}

}  // namespace

TEST_CASE("remapping follows the three-class scheme") {
    CHECK(remap_emotion("repression", DatasetId::CASME2) == EmotionClass::Negative);
    CHECK(remap_emotion("disgust", DatasetId::CASME2) == EmotionClass::Negative);
    CHECK(remap_emotion("happiness", DatasetId::CASME2) == EmotionClass::Positive);
    CHECK(remap_emotion("surprise", DatasetId::CASME2) == EmotionClass::Surprise);
    CHECK_FALSE(remap_emotion("others", DatasetId::CASME2).has_value());
    CHECK_FALSE(remap_emotion("sadness", DatasetId::CASME2).has_value());
    CHECK_FALSE(remap_emotion("fear", DatasetId::CASME2).has_value());

    for (const char* neg : {"anger", "contempt", "disgust", "fear", "sadness"}) {
        CHECK(remap_emotion(neg, DatasetId::SAMM) == EmotionClass::Negative);
    }
    CHECK(remap_emotion("happiness", DatasetId::SAMM) == EmotionClass::Positive);
    CHECK(remap_emotion("surprise", DatasetId::SAMM) == EmotionClass::Surprise);
    CHECK_FALSE(remap_emotion("other", DatasetId::SAMM).has_value());

    CHECK(remap_emotion("negative", DatasetId::SMIC) == EmotionClass::Negative);
    CHECK(remap_emotion("positive", DatasetId::SMIC) == EmotionClass::Positive);
    CHECK(remap_emotion("surprise", DatasetId::SMIC) == EmotionClass::Surprise);
}

TEST_CASE("unknown labels are rejected per dataset") {
    CHECK_THROWS_AS(remap_emotion("happiness", DatasetId::SMIC), ValidationError);
    CHECK_THROWS_AS(remap_emotion("contempt", DatasetId::CASME2), ValidationError);
    CHECK_THROWS_AS(remap_emotion("repression", DatasetId::SAMM), ValidationError);
    CHECK_THROWS_AS(parse_dataset("MMEW"), ValidationError);
    CHECK(parse_dataset("CASME II") == DatasetId::CASME2);
    CHECK(parse_dataset("samm") == DatasetId::SAMM);
}

TEST_CASE("record invariants") {
    CHECK_NOTHROW(validate(record(DatasetId::CASME2, "disgust", 7)));
    CHECK_NOTHROW(validate(record(DatasetId::SMIC, "negative", std::nullopt)));
    CHECK_THROWS_AS(validate(record(DatasetId::SMIC, "negative", 7)), ValidationError);
    CHECK_THROWS_AS(validate(record(DatasetId::CASME2, "disgust", std::nullopt)), ValidationError);
    CHECK_THROWS_AS(validate(record(DatasetId::SAMM, "anger", 21)), ValidationError);

    auto r = record(DatasetId::SAMM, "anger", 3);
    r.onset_index = 5;
    r.offset_index = 3;
    CHECK_THROWS_AS(validate(r), ValidationError);

    auto wrong = record(DatasetId::SAMM, "anger", 3);
    wrong.label = EmotionClass::Surprise;
    CHECK_THROWS_AS(validate(wrong), ValidationError);
}

TEST_CASE("SMIC manifest keeps every row without apex") {
    testutil::TempDir tmp;
    json doc = json::array();
    add_rows(doc, "SMIC", "negative", 70, false);
    add_rows(doc, "SMIC", "positive", 51, false);
    add_rows(doc, "SMIC", "surprise", 43, false);
    testutil::write_file(tmp / "m.json", doc.dump());

    const Manifest m = load_manifest(tmp / "m.json");
    REQUIRE(m.records.size() == 164);
    for (const auto& r : m.records) CHECK_FALSE(r.apex_index.has_value());
    const auto counts = class_counts(m.records);
    CHECK(counts[0] == 70);
    CHECK(counts[1] == 51);
    CHECK(counts[2] == 43);
    CHECK(m.records.front().video == "SMIC_negative_0");
    CHECK(m.records.back().video == "SMIC_surprise_42");
}

TEST_CASE("three-database manifest totals 441 after exclusions") {
    testutil::TempDir tmp;
    json doc = json::array();
    add_rows(doc, "SMIC", "negative", 70, false);
    add_rows(doc, "SMIC", "positive", 51, false);
    add_rows(doc, "SMIC", "surprise", 43, false);
    add_rows(doc, "CASME2", "disgust", 60, true);
    add_rows(doc, "CASME2", "repression", 28, true);
    add_rows(doc, "CASME2", "happiness", 32, true);
    add_rows(doc, "CASME2", "surprise", 25, true);
    add_rows(doc, "CASME2", "others", 99, true);
    add_rows(doc, "CASME2", "sadness", 7, true);
    add_rows(doc, "CASME2", "fear", 2, true);
    for (const char* neg : {"anger", "contempt", "disgust", "fear", "sadness"}) {
        add_rows(doc, "SAMM", neg, neg == std::string("anger") ? 55 : 9, true);
    }
    add_rows(doc, "SAMM", "happiness", 26, true);
    add_rows(doc, "SAMM", "surprise", 15, true);
    add_rows(doc, "SAMM", "other", 26, true);
    testutil::write_file(tmp / "m.json", doc.dump());

    const Manifest m = load_manifest(tmp / "m.json");
    CHECK(m.records.size() == 441);
    CHECK(m.excluded == 99 + 7 + 2 + 26);
    const auto counts = class_counts(m.records);
    CHECK(counts[0] == 249);
    CHECK(counts[1] == 109);
    CHECK(counts[2] == 83);
}

TEST_CASE("manifest edge cases") {
    testutil::TempDir tmp;
    testutil::write_file(tmp / "empty.json", "[]");
    CHECK(load_manifest(tmp / "empty.json").records.empty());
    CHECK(class_counts({}) == std::array<std::size_t, 3>{0, 0, 0});

    json bad = json::array();
    bad.push_back(row("CASME2", "1", "a", "disgust", 1, 2, 4));
    bad.push_back(row("CASME2", "1", "b", "disgust", 5, nullptr, 3));
    testutil::write_file(tmp / "bad.json", bad.dump());
    try {
        load_manifest(tmp / "bad.json");
        FAIL("expected a validation error");
    } catch (const ValidationError& e) {
        CHECK(std::string(e.what()).find("row 1") != std::string::npos);
    }

    json unknown = json::array();
    unknown.push_back(row("SAMM", "1", "a", "joy", 1, 2, 4));
    testutil::write_file(tmp / "unknown.json", unknown.dump());
    CHECK_THROWS_AS(load_manifest(tmp / "unknown.json"), ValidationError);

    testutil::write_file(tmp / "broken.json", "[{");
    CHECK_THROWS_AS(load_manifest(tmp / "broken.json"), ValidationError);
    CHECK_THROWS_AS(load_manifest(tmp / "missing.json"), IoError);

    json missing_key = json::array();
    missing_key.push_back({{"dataset", "SMIC"}, {"subject", "1"}});
    testutil::write_file(tmp / "key.json", missing_key.dump());
    CHECK_THROWS_AS(load_manifest(tmp / "key.json"), ValidationError);
}

TEST_CASE("relative frame directories resolve against the manifest") {
    testutil::TempDir tmp;
    std::filesystem::create_directories(tmp / "sub");
    json doc = json::array();
    doc.push_back(row("SAMM", "006", "006_1_2", "contempt", 1, 4, 9, "clips/006_1_2"));
    testutil::write_file(tmp / "sub" / "m.json", doc.dump());
    const Manifest m = load_manifest(tmp / "sub" / "m.json");
    REQUIRE(m.records.size() == 1);
    CHECK(m.records[0].frame_dir == (tmp.path() / "sub" / "clips" / "006_1_2").lexically_normal());
}

TEST_CASE("write_manifest then load_manifest is the identity") {
    testutil::TempDir tmp;
    std::vector<SampleRecord> records = {record(DatasetId::CASME2, "repression", 4),
                                         record(DatasetId::SMIC, "surprise", std::nullopt),
                                         record(DatasetId::SAMM, "sadness", 12)};
    records[0].frame_dir = tmp.path() / "frames" / "a";
    records[1].frame_dir = tmp.path() / "frames" / "b";
    records[1].video = "v2";
    records[2].frame_dir = "/elsewhere/c";
    records[2].subject = "007";
    write_manifest(tmp / "m.json", records);
    const Manifest m = load_manifest(tmp / "m.json");
    CHECK(m.records == records);

    const json stored = json::parse(testutil::read_file(tmp / "m.json"));
    CHECK(stored[0]["frame_dir"] == "frames/a");
    CHECK(stored[1]["apex"].is_null());
}

TEST_CASE("frame sequences are loaded in name order and resized") {
    testutil::TempDir tmp;
    const auto dir = tmp / "clip";
    std::filesystem::create_directories(dir);
    for (int j = 1; j <= 3; ++j) {
        GrayImage img(400, 400, 0.1 * j);
        io::write_gray_png(dir / ("f" + std::to_string(j) + ".png"), img);
    }
    testutil::write_file(dir / "notes.txt", "ignored");

    SampleRecord r = record(DatasetId::SAMM, "anger", 2);
    r.frame_dir = dir;
    r.offset_index = 3;
    const FrameSequence seq = load_sequence(r);
    REQUIRE(seq.count() == 3);
    CHECK(seq.width() == kFaceWidth);
    CHECK(seq.height() == kFaceHeight);
    for (int j = 0; j < 3; ++j) {
        const double expected = std::round(0.1 * (j + 1) * 255.0) / 255.0;
        CHECK(seq.frames[j].at(85, 70) == doctest::Approx(expected).epsilon(1e-12));
    }

    r.offset_index = 2;
    r.apex_index = 2;
    CHECK(load_sequence(r).count() == 2);

    r.offset_index = 4;
    r.apex_index = 2;
    CHECK_THROWS_AS(load_sequence(r), IoError);
}

TEST_CASE("colour frames use the fixed luma weights") {
    testutil::TempDir tmp;
    RgbImage rgb;
    rgb.width = 4;
    rgb.height = 4;
    rgb.pixels.assign(4 * 4 * 3, 0);
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x) {
            rgb.pixel(x, y)[0] = 255;
            rgb.pixel(x, y)[1] = x < 2 ? 0 : 255;
            rgb.pixel(x, y)[2] = 0;
        }
    io::write_rgb_png(tmp / "c.png", rgb);
    const GrayImage g = io::read_gray(tmp / "c.png");
    CHECK(g.at(0, 0) == doctest::Approx(0.299).epsilon(1e-12));
    CHECK(g.at(3, 3) == doctest::Approx(0.299 + 0.587).epsilon(1e-12));
    CHECK_THROWS_AS(io::read_gray(tmp / "absent.png"), IoError);
}
