#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "apexflow/dataset.hpp"
#include "apexflow/network.hpp"

namespace apexflow::eval {

using dataset::DatasetId;
using dataset::EmotionClass;
using dataset::kNumClasses;
using dataset::SampleRecord;

struct SubjectKey {
    DatasetId dataset = DatasetId::SYNTHETIC;
    std::string subject;

    auto operator<=>(const SubjectKey&) const = default;
};

struct Fold {
    SubjectKey held_out;
    std::vector<std::size_t> test_indices;
    std::vector<std::size_t> train_indices;

    /// A single-subject corpus leaves nothing to train on.
    bool degenerate() const noexcept { return train_indices.empty(); }
};

/// One fold per distinct (dataset, subject), ordered by dataset then subject.
std::vector<Fold> make_folds(std::span<const SampleRecord> records);

/// Throws ProtocolError if the fold is not a clean subject split of `records`.
void check_fold(const Fold& fold, std::span<const SampleRecord> records);

/// Rows are true classes, columns predicted classes.
using ConfusionMatrix = std::array<std::array<std::int64_t, kNumClasses>, kNumClasses>;

struct ClassMetrics {
    double precision = 0.0;
    double recall = 0.0;
    double f_measure = 0.0;
};

struct Metrics {
    double accuracy = 0.0;
    std::array<ClassMetrics, kNumClasses> per_class{};
    double macro_f = 0.0;
};

/// Throws ValidationError on an empty matrix.
Metrics metrics(const ConfusionMatrix& cm);

struct NormalizedMatrix {
    std::array<std::array<double, kNumClasses>, kNumClasses> rates{};
    std::array<bool, kNumClasses> zero_row{};
};

NormalizedMatrix normalize_rows(const ConfusionMatrix& cm);

/// Two-decimal rendering without the leading zero, e.g. ".84"; 1 renders "1.00".
std::string format_rate(double rate);

struct Prediction {
    std::size_t sample = 0;  // index into the record list
    std::size_t fold = 0;
    EmotionClass truth = EmotionClass::Negative;
    EmotionClass predicted = EmotionClass::Negative;
    std::array<double, kNumClasses> probs{};

    bool operator==(const Prediction&) const = default;
};

enum class FoldStatus { Ok, Skipped, Diverged };
std::string_view to_string(FoldStatus status);

struct FoldOutcome {
    SubjectKey held_out;
    std::size_t test_count = 0;
    std::size_t train_count = 0;
    FoldStatus status = FoldStatus::Ok;
    std::string note;

    bool operator==(const FoldOutcome&) const = default;
};

struct DatasetSummary {
    ConfusionMatrix confusion{};
    Metrics metrics;
};

struct EvalReport {
    std::vector<Prediction> predictions;  // fold order, then record order within the fold
    std::vector<FoldOutcome> folds;
    ConfusionMatrix overall{};
    Metrics overall_metrics;
    std::map<DatasetId, DatasetSummary> per_dataset;
    double fold_mean_accuracy = 0.0;  // unweighted mean over folds that produced predictions
    int epochs = 0;
    std::uint64_t seed = 0;
    bool complete = true;
};

/// Builds every aggregate of a report from the per-sample predictions.
EvalReport assemble_report(std::span<const SampleRecord> records, std::vector<FoldOutcome> folds,
                           std::vector<Prediction> predictions, int epochs, std::uint64_t seed);

/// Stored network inputs, aligned with the record list. A missing entry is an error.
using FlowStore = std::vector<std::optional<flow::FlowInputPair>>;

/// Trains on the given samples and returns a predictor for unseen inputs.
using Predictor = std::function<net::PredictionResult(const flow::FlowInputPair&)>;
using FitFunction = std::function<Predictor(std::span<const net::LabeledInput>, const net::TrainConfig&)>;

/// OFF-ApexNet training followed by dropout-free prediction.
FitFunction default_fit();

struct LosoOptions {
    int jobs = 1;
    FitFunction fit;  // empty -> default_fit()
};

/// Leave-one-subject-out evaluation. Fold f trains with seed config.seed + f.
EvalReport run_losocv(std::span<const SampleRecord> records, const FlowStore& flows,
                      const net::TrainConfig& config, const LosoOptions& options = {});

struct SweepRow {
    int epochs = 0;
    double accuracy = 0.0;
    double macro_f = 0.0;
    double fold_mean_accuracy = 0.0;
    bool complete = true;
};

struct SweepTable {
    std::vector<SweepRow> rows;
    std::size_t best = 0;  // highest accuracy, earliest row on ties
};

SweepTable epoch_sweep(std::span<const SampleRecord> records, const FlowStore& flows,
                       const net::TrainConfig& base, std::span<const int> epochs_list,
                       const LosoOptions& options = {});

// Report rendering.
std::string report_json(const EvalReport& report, std::span<const SampleRecord> records);
std::string report_text(const EvalReport& report);
std::string predictions_csv(const EvalReport& report, std::span<const SampleRecord> records);
std::string sweep_text(const SweepTable& table);
std::string sweep_json(const SweepTable& table);

/// Parses a predictions CSV back into Prediction values keyed against
/// `records` by (dataset, subject, video). Fold numbers follow make_folds.
std::vector<Prediction> parse_predictions_csv(const std::string& csv, std::span<const SampleRecord> records);

}  // namespace apexflow::eval
