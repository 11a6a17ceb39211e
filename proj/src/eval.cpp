#include "apexflow/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iomanip>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <sstream>

#include "json.hpp"

#include "apexflow/error.hpp"
#include "apexflow/log.hpp"
#include "apexflow/pipeline.hpp"

namespace apexflow::eval {

namespace {

using nlohmann::ordered_json;

SubjectKey key_of(const SampleRecord& r) { return {r.dataset, r.subject}; }

std::string full_precision(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string fixed(double v, int decimals) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
    return buf;
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) {
        return s;
    }
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cur += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(std::move(cur));
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    fields.push_back(std::move(cur));
    return fields;
}

ordered_json matrix_json(const ConfusionMatrix& cm) {
    ordered_json rows = ordered_json::array();
    for (const auto& row : cm) rows.push_back(row);
    return rows;
}

ordered_json metrics_json(const Metrics& m) {
    ordered_json per_class = ordered_json::array();
    for (int c = 0; c < kNumClasses; ++c) {
        per_class.push_back({{"class", std::string(dataset::to_string(static_cast<EmotionClass>(c)))},
                             {"precision", m.per_class[c].precision},
                             {"recall", m.per_class[c].recall},
                             {"f_measure", m.per_class[c].f_measure}});
    }
    return {{"accuracy", m.accuracy}, {"macro_f", m.macro_f}, {"per_class", per_class}};
}

std::int64_t total_of(const ConfusionMatrix& cm) {
    std::int64_t t = 0;
    for (const auto& row : cm)
        for (auto v : row) t += v;
    return t;
}

Metrics metrics_or_zero(const ConfusionMatrix& cm) { return total_of(cm) > 0 ? metrics(cm) : Metrics{}; }

void render_matrix(std::ostringstream& os, const std::string& title, const ConfusionMatrix& cm) {
    const NormalizedMatrix nm = normalize_rows(cm);
    os << title << " (rows: ground truth, columns: prediction)\n";
    os << std::string(12, ' ') << std::setw(10) << "Negative" << std::setw(10) << "Positive" << std::setw(10)
       << "Surprise" << '\n';
    bool footnote = false;
    for (int r = 0; r < kNumClasses; ++r) {
        std::string name(dataset::to_string(static_cast<EmotionClass>(r)));
        name[0] = static_cast<char>(std::toupper(name[0]));
        os << "  " << std::left << std::setw(9) << name << (nm.zero_row[r] ? "*" : " ") << std::right;
        for (int c = 0; c < kNumClasses; ++c) {
            os << std::setw(10) << format_rate(nm.rates[r][c]);
        }
        os << '\n';
        footnote = footnote || nm.zero_row[r];
    }
    if (footnote) {
        os << "  * class absent from the evaluated samples; row shown as zeros\n";
    }
}

}  // namespace

std::vector<Fold> make_folds(std::span<const SampleRecord> records) {
    if (records.empty()) {
        throw ValidationError("cannot build folds from an empty record list");
    }
    std::map<SubjectKey, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < records.size(); ++i) {
        groups[key_of(records[i])].push_back(i);
    }
    std::vector<Fold> folds;
    folds.reserve(groups.size());
    for (const auto& [key, members] : groups) {
        Fold f;
        f.held_out = key;
        f.test_indices = members;
        for (std::size_t i = 0; i < records.size(); ++i) {
            if (!(key_of(records[i]) == key)) f.train_indices.push_back(i);
        }
        folds.push_back(std::move(f));
    }
    return folds;
}

void check_fold(const Fold& fold, std::span<const SampleRecord> records) {
    std::vector<int> seen(records.size(), 0);
    for (std::size_t i : fold.test_indices) {
        if (i >= records.size() || !(key_of(records[i]) == fold.held_out)) {
            throw ProtocolError("fold test set contains a sample of another subject");
        }
        ++seen[i];
    }
    for (std::size_t i : fold.train_indices) {
        if (i >= records.size() || key_of(records[i]) == fold.held_out) {
            throw ProtocolError("held-out subject " + fold.held_out.subject + " leaks into the training set");
        }
        ++seen[i];
    }
    if (std::any_of(seen.begin(), seen.end(), [](int n) { return n != 1; })) {
        throw ProtocolError("fold is not a partition of the corpus");
    }
}

Metrics metrics(const ConfusionMatrix& cm) {
    const std::int64_t total = total_of(cm);
    if (total <= 0) {
        throw ValidationError("metrics of an empty confusion matrix");
    }
    Metrics m;
    std::int64_t trace = 0;
    for (int c = 0; c < kNumClasses; ++c) {
        const std::int64_t tp = cm[c][c];
        std::int64_t row = 0;
        std::int64_t col = 0;
        for (int k = 0; k < kNumClasses; ++k) {
            row += cm[c][k];
            col += cm[k][c];
        }
        const std::int64_t fp = col - tp;
        const std::int64_t fn = row - tp;
        ClassMetrics& cmx = m.per_class[c];
        cmx.precision = tp + fp > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
        cmx.recall = tp + fn > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
        const double denom = cmx.precision + cmx.recall;
        cmx.f_measure = denom > 0.0 ? 2.0 * cmx.precision * cmx.recall / denom : 0.0;
        trace += tp;
    }
    m.accuracy = static_cast<double>(trace) / static_cast<double>(total);
    m.macro_f = (m.per_class[0].f_measure + m.per_class[1].f_measure + m.per_class[2].f_measure) / 3.0;
    return m;
}

NormalizedMatrix normalize_rows(const ConfusionMatrix& cm) {
    NormalizedMatrix out;
    for (int r = 0; r < kNumClasses; ++r) {
        std::int64_t sum = 0;
        for (auto v : cm[r]) sum += v;
        out.zero_row[r] = sum == 0;
        for (int c = 0; c < kNumClasses; ++c) {
            out.rates[r][c] = sum > 0 ? static_cast<double>(cm[r][c]) / static_cast<double>(sum) : 0.0;
        }
    }
    return out;
}

std::string format_rate(double rate) {
    std::string s = fixed(rate, 2);
    if (s.rfind("0.", 0) == 0) s.erase(0, 1);
    return s;
}

std::string_view to_string(FoldStatus status) {
    switch (status) {
        case FoldStatus::Ok:
            return "ok";
        case FoldStatus::Skipped:
            return "skipped";
        case FoldStatus::Diverged:
            return "diverged";
    }
    return "?";
}

EvalReport assemble_report(std::span<const SampleRecord> records, std::vector<FoldOutcome> folds,
                           std::vector<Prediction> predictions, int epochs, std::uint64_t seed) {
    EvalReport rep;
    rep.folds = std::move(folds);
    rep.predictions = std::move(predictions);
    rep.epochs = epochs;
    rep.seed = seed;
    rep.complete = std::all_of(rep.folds.begin(), rep.folds.end(),
                               [](const FoldOutcome& f) { return f.status == FoldStatus::Ok; });

    std::set<DatasetId> present;
    for (const SampleRecord& r : records) present.insert(r.dataset);
    for (DatasetId id : present) rep.per_dataset[id] = DatasetSummary{};

    std::map<std::size_t, std::pair<std::int64_t, std::int64_t>> per_fold;  // correct, total
    for (const Prediction& p : rep.predictions) {
        if (p.sample >= records.size()) {
            throw ValidationError("prediction refers to an unknown sample");
        }
        const int t = static_cast<int>(p.truth);
        const int y = static_cast<int>(p.predicted);
        ++rep.overall[t][y];
        ++rep.per_dataset[records[p.sample].dataset].confusion[t][y];
        auto& pf = per_fold[p.fold];
        pf.first += t == y ? 1 : 0;
        pf.second += 1;
    }
    rep.overall_metrics = metrics_or_zero(rep.overall);
    for (auto& [id, summary] : rep.per_dataset) {
        summary.metrics = metrics_or_zero(summary.confusion);
    }
    double acc_sum = 0.0;
    for (const auto& [fold, counts] : per_fold) {
        acc_sum += static_cast<double>(counts.first) / static_cast<double>(counts.second);
    }
    rep.fold_mean_accuracy = per_fold.empty() ? 0.0 : acc_sum / static_cast<double>(per_fold.size());
    if (rep.predictions.empty()) rep.complete = false;
    return rep;
}

FitFunction default_fit() {
    return [](std::span<const net::LabeledInput> train, const net::TrainConfig& config) -> Predictor {
        auto params = std::make_shared<net::NetworkParams>(net::train(train, config).params);
        return [params](const flow::FlowInputPair& input) { return net::predict(*params, input); };
    };
}

EvalReport run_losocv(std::span<const SampleRecord> records, const FlowStore& flows, const net::TrainConfig& config,
                      const LosoOptions& options) {
    config.validate();
    if (flows.size() != records.size()) {
        throw ValidationError("flow store does not match the record list");
    }
    for (std::size_t i = 0; i < records.size(); ++i) {
        if (!flows[i]) {
            throw ValidationError("missing flow for video " + records[i].video);
        }
    }
    const std::vector<Fold> folds = make_folds(records);
    const FitFunction fit = options.fit ? options.fit : default_fit();

    std::vector<FoldOutcome> outcomes(folds.size());
    std::vector<std::vector<Prediction>> fold_preds(folds.size());

    pipeline::parallel_for(folds.size(), options.jobs, [&](std::size_t f) {
        const Fold& fold = folds[f];
        check_fold(fold, records);
        FoldOutcome& out = outcomes[f];
        out.held_out = fold.held_out;
        out.test_count = fold.test_indices.size();
        out.train_count = fold.train_indices.size();
        if (fold.degenerate()) {
            out.status = FoldStatus::Skipped;
            out.note = "no training subjects";
            log::warn("fold " + std::to_string(f) + " skipped: no training subjects");
            return;
        }
        std::vector<net::LabeledInput> train;
        train.reserve(fold.train_indices.size());
        for (std::size_t i : fold.train_indices) {
            train.push_back({*flows[i], records[i].label});
        }
        net::TrainConfig cfg = config;
        cfg.seed = config.seed + f;
        try {
            const Predictor predictor = fit(train, cfg);
            for (std::size_t i : fold.test_indices) {
                const net::PredictionResult r = predictor(*flows[i]);
                fold_preds[f].push_back({i, f, records[i].label, r.label, r.probs});
            }
        } catch (const DivergenceError& e) {
            fold_preds[f].clear();
            out.status = FoldStatus::Diverged;
            out.note = e.what();
            log::warn("fold " + std::to_string(f) + " diverged: " + e.what());
        }
        log::info("fold " + std::to_string(f + 1) + "/" + std::to_string(folds.size()) + " done (" +
                  std::string(dataset::to_string(fold.held_out.dataset)) + " " + fold.held_out.subject + ")");
    });

    std::vector<Prediction> predictions;
    for (auto& fp : fold_preds) {
        predictions.insert(predictions.end(), fp.begin(), fp.end());
    }
    return assemble_report(records, std::move(outcomes), std::move(predictions), config.epochs, config.seed);
}

SweepTable epoch_sweep(std::span<const SampleRecord> records, const FlowStore& flows, const net::TrainConfig& base,
                       std::span<const int> epochs_list, const LosoOptions& options) {
    if (epochs_list.empty()) {
        throw ValidationError("epoch sweep needs at least one epoch value");
    }
    SweepTable table;
    for (int epochs : epochs_list) {
        net::TrainConfig cfg = base;
        cfg.epochs = epochs;
        const EvalReport rep = run_losocv(records, flows, cfg, options);
        table.rows.push_back({epochs, rep.overall_metrics.accuracy, rep.overall_metrics.macro_f,
                              rep.fold_mean_accuracy, rep.complete});
    }
    for (std::size_t i = 1; i < table.rows.size(); ++i) {
        if (table.rows[i].accuracy > table.rows[table.best].accuracy) table.best = i;
    }
    return table;
}

std::string report_json(const EvalReport& rep, std::span<const SampleRecord> records) {
    ordered_json doc;
    doc["epochs"] = rep.epochs;
    doc["seed"] = rep.seed;
    doc["complete"] = rep.complete;
    doc["samples_evaluated"] = rep.predictions.size();
    doc["fold_mean_accuracy"] = rep.fold_mean_accuracy;
    doc["overall"] = metrics_json(rep.overall_metrics);
    doc["overall"]["confusion"] = matrix_json(rep.overall);
    {
        const NormalizedMatrix nm = normalize_rows(rep.overall);
        doc["overall"]["confusion_normalized"] = nm.rates;
    }
    ordered_json per = ordered_json::object();
    for (const auto& [id, summary] : rep.per_dataset) {
        ordered_json d = metrics_json(summary.metrics);
        d["confusion"] = matrix_json(summary.confusion);
        d["confusion_normalized"] = normalize_rows(summary.confusion).rates;
        per[std::string(dataset::to_string(id))] = d;
    }
    doc["per_dataset"] = per;
    ordered_json folds = ordered_json::array();
    for (const FoldOutcome& f : rep.folds) {
        folds.push_back({{"dataset", std::string(dataset::to_string(f.held_out.dataset))},
                         {"subject", f.held_out.subject},
                         {"test", f.test_count},
                         {"train", f.train_count},
                         {"status", std::string(to_string(f.status))},
                         {"note", f.note}});
    }
    doc["folds"] = folds;
    ordered_json preds = ordered_json::array();
    for (const Prediction& p : rep.predictions) {
        const SampleRecord& r = records[p.sample];
        preds.push_back({{"dataset", std::string(dataset::to_string(r.dataset))},
                         {"subject", r.subject},
                         {"video", r.video},
                         {"fold", p.fold},
                         {"true", std::string(dataset::to_string(p.truth))},
                         {"predicted", std::string(dataset::to_string(p.predicted))},
                         {"probs", p.probs}});
    }
    doc["predictions"] = preds;
    return doc.dump(2) + "\n";
}

std::string report_text(const EvalReport& rep) {
    std::ostringstream os;
    os << "Micro-expression recognition, leave-one-subject-out (" << rep.folds.size() << " folds)\n";
    os << "epochs = " << rep.epochs << ", seed = " << rep.seed << ", samples evaluated = " << rep.predictions.size()
       << (rep.complete ? "" : "  [INCOMPLETE]") << "\n\n";
    os << "  Accuracy (%)   F-measure\n";
    os << "  " << std::left << std::setw(15) << fixed(100.0 * rep.overall_metrics.accuracy, 2)
       << fixed(rep.overall_metrics.macro_f, 4) << std::right << "\n";
    os << "  fold-averaged accuracy (%): " << fixed(100.0 * rep.fold_mean_accuracy, 2) << "\n\n";
    render_matrix(os, "Confusion matrix, all databases", rep.overall);
    for (const auto& [id, summary] : rep.per_dataset) {
        os << "\n";
        render_matrix(os, "Confusion matrix, " + std::string(dataset::to_string(id)), summary.confusion);
        os << "  accuracy " << fixed(100.0 * summary.metrics.accuracy, 2) << "%, F-measure "
           << fixed(summary.metrics.macro_f, 4) << "\n";
    }
    os << "\nPer-class (all databases)\n";
    for (int c = 0; c < kNumClasses; ++c) {
        const ClassMetrics& m = rep.overall_metrics.per_class[c];
        os << "  " << std::left << std::setw(9) << dataset::to_string(static_cast<EmotionClass>(c)) << std::right
           << " precision " << fixed(m.precision, 4) << "  recall " << fixed(m.recall, 4) << "  F " << fixed(m.f_measure, 4)
           << "\n";
    }
    bool any_flagged = false;
    for (const FoldOutcome& f : rep.folds) {
        if (f.status != FoldStatus::Ok) {
            if (!any_flagged) os << "\nFlagged folds\n";
            any_flagged = true;
            os << "  " << dataset::to_string(f.held_out.dataset) << " " << f.held_out.subject << ": "
               << to_string(f.status) << " (" << f.note << ")\n";
        }
    }
    return os.str();
}

std::string predictions_csv(const EvalReport& rep, std::span<const SampleRecord> records) {
    std::ostringstream os;
    os << "dataset,subject,video,true,predicted,p_neg,p_pos,p_sur\n";
    for (const Prediction& p : rep.predictions) {
        const SampleRecord& r = records[p.sample];
        os << dataset::to_string(r.dataset) << ',' << csv_field(r.subject) << ',' << csv_field(r.video) << ','
           << dataset::to_string(p.truth) << ',' << dataset::to_string(p.predicted) << ','
           << full_precision(p.probs[0]) << ',' << full_precision(p.probs[1]) << ',' << full_precision(p.probs[2])
           << '\n';
    }
    return os.str();
}

std::vector<Prediction> parse_predictions_csv(const std::string& csv, std::span<const SampleRecord> records) {
    std::map<std::tuple<DatasetId, std::string, std::string>, std::size_t> index;
    for (std::size_t i = 0; i < records.size(); ++i) {
        index[{records[i].dataset, records[i].subject, records[i].video}] = i;
    }
    std::map<SubjectKey, std::size_t> fold_of;
    {
        const auto folds = make_folds(records);
        for (std::size_t f = 0; f < folds.size(); ++f) fold_of[folds[f].held_out] = f;
    }
    std::istringstream in(csv);
    std::string line;
    std::vector<Prediction> out;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line_no == 1 || line.empty()) continue;
        const auto f = split_csv_line(line);
        if (f.size() != 8) {
            throw ValidationError("predictions line " + std::to_string(line_no) + ": expected 8 fields");
        }
        const DatasetId ds = dataset::parse_dataset(f[0]);
        auto it = index.find({ds, f[1], f[2]});
        if (it == index.end()) {
            throw ValidationError("predictions line " + std::to_string(line_no) + ": unknown video " + f[2]);
        }
        Prediction p;
        p.sample = it->second;
        p.fold = fold_of.at(key_of(records[p.sample]));
        p.truth = dataset::parse_emotion(f[3]);
        p.predicted = dataset::parse_emotion(f[4]);
        for (int c = 0; c < kNumClasses; ++c) p.probs[c] = std::strtod(f[5 + c].c_str(), nullptr);
        out.push_back(p);
    }
    return out;
}

std::string sweep_text(const SweepTable& table) {
    std::ostringstream os;
    os << "Epoch    Accuracy (%)   F-measure\n";
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
        const SweepRow& r = table.rows[i];
        os << std::left << std::setw(9) << r.epochs << std::setw(15) << fixed(100.0 * r.accuracy, 2)
           << std::setw(10) << fixed(r.macro_f, 4) << std::right;
        if (i == table.best) os << " <- best";
        if (!r.complete) os << " [incomplete]";
        os << '\n';
    }
    return os.str();
}

std::string sweep_json(const SweepTable& table) {
    ordered_json rows = ordered_json::array();
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
        const SweepRow& r = table.rows[i];
        rows.push_back({{"epochs", r.epochs},
                        {"accuracy", r.accuracy},
                        {"macro_f", r.macro_f},
                        {"fold_mean_accuracy", r.fold_mean_accuracy},
                        {"complete", r.complete},
                        {"best", i == table.best}});
    }
    return ordered_json{{"rows", rows}}.dump(2) + "\n";
}

}  // namespace apexflow::eval
