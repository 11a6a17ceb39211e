#include "apexflow/apexflow.h"

#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <new>
#include <set>
#include <string>
#include <vector>

#include "apexflow/apexspot.hpp"
#include "apexflow/dataset.hpp"
#include "apexflow/error.hpp"
#include "apexflow/eval.hpp"
#include "apexflow/imageio.hpp"
#include "apexflow/log.hpp"
#include "apexflow/network.hpp"
#include "apexflow/pipeline.hpp"
#include "apexflow/synth.hpp"
#include "apexflow/tvl1flow.hpp"

namespace fs = std::filesystem;
using namespace apexflow;

struct apexflow_manifest {
    dataset::Manifest manifest;
    std::vector<std::string> frame_dirs;
    std::vector<std::string> stems;
};

struct apexflow_flow {
    flow::FlowField field;
};

struct apexflow_flowstore {
    eval::FlowStore inputs;
};

struct apexflow_model {
    net::NetworkParams params;
    net::AdamState state;
    std::vector<double> loss_curve;
};

struct apexflow_report {
    eval::EvalReport report;
    std::vector<dataset::SampleRecord> records;
};

struct apexflow_sweep {
    eval::SweepTable table;
};

namespace {

thread_local std::string g_last_error;

apexflow_status fail(apexflow_status status, const std::string& message) {
    g_last_error = message;
    return status;
}

apexflow_status succeed() {
    g_last_error.clear();
    return APEXFLOW_OK;
}

apexflow_status status_of(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::Validation:
            return APEXFLOW_ERR_VALIDATION;
        case ErrorKind::Io:
            return APEXFLOW_ERR_IO;
        case ErrorKind::Format:
            return APEXFLOW_ERR_FORMAT;
        case ErrorKind::Divergence:
            return APEXFLOW_ERR_DIVERGENCE;
        case ErrorKind::Protocol:
            return APEXFLOW_ERR_PROTOCOL;
    }
    return APEXFLOW_ERR_RUNTIME;
}

template <class F>
apexflow_status guarded(F&& body) {
    try {
        g_last_error.clear();
        body();
        return APEXFLOW_OK;
    } catch (const Error& e) {
        return fail(status_of(e.kind()), e.what());
    } catch (const std::bad_alloc&) {
        return fail(APEXFLOW_ERR_RUNTIME, "out of memory");
    } catch (const std::exception& e) {
        return fail(APEXFLOW_ERR_RUNTIME, e.what());
    } catch (...) {
        return fail(APEXFLOW_ERR_RUNTIME, "unknown error");
    }
}

#define APEXFLOW_REQUIRE(cond, what)                                   \
    do {                                                               \
        if (!(cond)) return fail(APEXFLOW_ERR_INVALID_ARGUMENT, what); \
    } while (0)

apexspot::Rect to_rect(const apexflow_rect& r) { return {r.x, r.y, r.w, r.h}; }
apexflow_rect from_rect(const apexspot::Rect& r) { return {r.x, r.y, r.w, r.h}; }

apexspot::RoiSet to_rois(const apexflow_rois* rois) {
    if (!rois) return apexspot::RoiSet::defaults();
    apexspot::RoiSet set;
    set.rects = {to_rect(rois->left_eyebrow), to_rect(rois->right_eyebrow), to_rect(rois->mouth)};
    set.validate(dataset::kFaceWidth, dataset::kFaceHeight);
    return set;
}

flow::TvL1Params to_params(const apexflow_tvl1_params* p) {
    flow::TvL1Params out;
    if (p) {
        out.lambda = p->lambda;
        out.theta = p->theta;
        out.tau = p->tau;
        out.n_scales = p->n_scales;
        out.zoom = p->zoom;
        out.n_warps = p->n_warps;
        out.epsilon = p->epsilon;
        out.max_inner_iterations = p->max_inner_iterations;
    }
    out.validate();
    return out;
}

net::TrainConfig to_config(const apexflow_train_config* c) {
    net::TrainConfig out;
    if (c) {
        out.learning_rate = c->learning_rate;
        out.epochs = c->epochs;
        out.dropout_keep = c->dropout_keep;
        out.seed = c->seed;
        out.adam_beta1 = c->adam_beta1;
        out.adam_beta2 = c->adam_beta2;
        out.adam_epsilon = c->adam_epsilon;
        if (c->streams < 0 || c->streams > 2) throw ValidationError("streams must be 0, 1 or 2");
        out.architecture.streams = static_cast<net::Streams>(c->streams);
    }
    out.validate();
    return out;
}

void check_store(const apexflow_manifest* m, const apexflow_flowstore* s) {
    if (s->inputs.size() != m->manifest.records.size()) {
        throw ValidationError("flow store was built for a different manifest");
    }
}

/// Values as they appear after a .flo round trip, so cached and fresh runs agree.
flow::FlowField quantized(flow::FlowField f) {
    for (Plane* p : {&f.u, &f.v})
        for (double& x : p->values()) x = static_cast<double>(static_cast<float>(x));
    return f;
}

void write_text_file(const char* path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError(std::string("cannot write ") + path);
    out << text;
    if (!out) throw IoError(std::string("write failed: ") + path);
}

}  // namespace

extern "C" {

const char* apexflow_last_error(void) { return g_last_error.c_str(); }

const char* apexflow_status_name(apexflow_status status) {
    switch (status) {
        case APEXFLOW_OK:
            return "ok";
        case APEXFLOW_ERR_INVALID_ARGUMENT:
            return "invalid_argument";
        case APEXFLOW_ERR_VALIDATION:
            return "validation";
        case APEXFLOW_ERR_IO:
            return "io";
        case APEXFLOW_ERR_FORMAT:
            return "format";
        case APEXFLOW_ERR_DIVERGENCE:
            return "divergence";
        case APEXFLOW_ERR_PROTOCOL:
            return "protocol";
        case APEXFLOW_ERR_RUNTIME:
            return "runtime";
    }
    return "unknown";
}

const char* apexflow_version(void) { return "0.1.0"; }

apexflow_status apexflow_set_log_level(int level) {
    APEXFLOW_REQUIRE(level >= 0 && level <= 3, "log level must be in [0, 3]");
    log::set_level(static_cast<log::Level>(level));
    return succeed();
}

apexflow_status apexflow_manifest_load(const char* path, apexflow_manifest** out) {
    APEXFLOW_REQUIRE(path && out, "null argument");
    *out = nullptr;
    return guarded([&] {
        auto m = std::make_unique<apexflow_manifest>();
        m->manifest = dataset::load_manifest(path);
        std::map<std::string, int> uses;
        for (const auto& r : m->manifest.records) {
            m->frame_dirs.push_back(r.frame_dir.string());
            ++uses[r.video];
        }
        for (const auto& r : m->manifest.records) {
            m->stems.push_back(uses[r.video] == 1 ? r.video
                                                  : std::string(dataset::to_string(r.dataset)) + "_" + r.subject +
                                                        "_" + r.video);
        }
        *out = m.release();
    });
}

void apexflow_manifest_free(apexflow_manifest* manifest) { delete manifest; }

size_t apexflow_manifest_size(const apexflow_manifest* manifest) {
    return manifest ? manifest->manifest.records.size() : 0;
}

size_t apexflow_manifest_excluded(const apexflow_manifest* manifest) {
    return manifest ? manifest->manifest.excluded : 0;
}

apexflow_status apexflow_manifest_class_counts(const apexflow_manifest* manifest, size_t counts[APEXFLOW_NUM_CLASSES]) {
    APEXFLOW_REQUIRE(manifest && counts, "null argument");
    const auto c = dataset::class_counts(manifest->manifest.records);
    for (int i = 0; i < APEXFLOW_NUM_CLASSES; ++i) counts[i] = c[static_cast<std::size_t>(i)];
    return succeed();
}

size_t apexflow_manifest_subject_count(const apexflow_manifest* manifest) {
    if (!manifest) return 0;
    std::set<std::pair<dataset::DatasetId, std::string>> keys;
    for (const auto& r : manifest->manifest.records) keys.emplace(r.dataset, r.subject);
    return keys.size();
}

apexflow_status apexflow_manifest_record(const apexflow_manifest* manifest, size_t index, apexflow_record_info* out) {
    APEXFLOW_REQUIRE(manifest && out, "null argument");
    APEXFLOW_REQUIRE(index < manifest->manifest.records.size(), "record index out of range");
    const auto& r = manifest->manifest.records[index];
    out->dataset = dataset::to_string(r.dataset).data();
    out->subject = r.subject.c_str();
    out->video = r.video.c_str();
    out->raw_label = r.raw_label.c_str();
    out->label = static_cast<int>(r.label);
    out->onset_index = r.onset_index;
    out->apex_index = r.apex_index.value_or(0);
    out->offset_index = r.offset_index;
    out->frame_dir = manifest->frame_dirs[index].c_str();
    out->artifact_stem = manifest->stems[index].c_str();
    return succeed();
}

void apexflow_rois_default(apexflow_rois* out) {
    if (!out) return;
    const auto d = apexspot::RoiSet::defaults();
    out->left_eyebrow = from_rect(d.rects[0]);
    out->right_eyebrow = from_rect(d.rects[1]);
    out->mouth = from_rect(d.rects[2]);
}

apexflow_status apexflow_rois_load(const char* path, apexflow_rois* out) {
    APEXFLOW_REQUIRE(path && out, "null argument");
    return guarded([&] {
        const auto set = apexspot::load_roi_set(path);
        set.validate(dataset::kFaceWidth, dataset::kFaceHeight);
        out->left_eyebrow = from_rect(set.rects[0]);
        out->right_eyebrow = from_rect(set.rects[1]);
        out->mouth = from_rect(set.rects[2]);
    });
}

apexflow_status apexflow_spot_apexes(const apexflow_manifest* manifest, const apexflow_rois* rois, int jobs,
                                     int* apex_out) {
    APEXFLOW_REQUIRE(manifest && apex_out, "null argument");
    return guarded([&] {
        const apexspot::RoiSet set = to_rois(rois);
        const auto& records = manifest->manifest.records;
        pipeline::parallel_for(records.size(), jobs, [&](std::size_t i) {
            const auto seq = dataset::load_sequence(records[i]);
            apex_out[i] = records[i].onset_index + apexspot::spot_apex(seq, set) - 1;
        });
    });
}

void apexflow_tvl1_defaults(apexflow_tvl1_params* out) {
    if (!out) return;
    const flow::TvL1Params d;
    *out = {d.lambda, d.theta, d.tau, d.n_scales, d.zoom, d.n_warps, d.epsilon, d.max_inner_iterations};
}

apexflow_status apexflow_flow_estimate_images(const char* onset_path, const char* apex_path,
                                              const apexflow_tvl1_params* params, apexflow_flow** out) {
    APEXFLOW_REQUIRE(onset_path && apex_path && out, "null argument");
    *out = nullptr;
    return guarded([&] {
        const auto p = to_params(params);
        const GrayImage a = io::read_gray(onset_path);
        const GrayImage b = io::read_gray(apex_path);
        if (a.width() != b.width() || a.height() != b.height()) {
            throw ValidationError("onset and apex frames differ in size");
        }
        *out = new apexflow_flow{flow::estimate_flow(a, b, p)};
    });
}

apexflow_status apexflow_flow_read(const char* path, apexflow_flow** out) {
    APEXFLOW_REQUIRE(path && out, "null argument");
    *out = nullptr;
    return guarded([&] { *out = new apexflow_flow{flow::read_flo(path)}; });
}

apexflow_status apexflow_flow_write(const apexflow_flow* f, const char* path) {
    APEXFLOW_REQUIRE(f && path, "null argument");
    return guarded([&] { flow::write_flo(f->field, path); });
}

apexflow_status apexflow_flow_write_color(const apexflow_flow* f, const char* png_path) {
    APEXFLOW_REQUIRE(f && png_path, "null argument");
    return guarded([&] { io::write_rgb_png(png_path, flow::flow_to_color(f->field)); });
}

int apexflow_flow_width(const apexflow_flow* f) { return f ? f->field.width() : 0; }
int apexflow_flow_height(const apexflow_flow* f) { return f ? f->field.height() : 0; }
const double* apexflow_flow_u(const apexflow_flow* f) { return f ? f->field.u.values().data() : nullptr; }
const double* apexflow_flow_v(const apexflow_flow* f) { return f ? f->field.v.values().data() : nullptr; }
void apexflow_flow_free(apexflow_flow* f) { delete f; }

apexflow_status apexflow_flowstore_build(const apexflow_manifest* manifest, const apexflow_tvl1_params* params,
                                         const apexflow_rois* rois, const char* cache_dir, int jobs,
                                         apexflow_flowstore** out, apexflow_flowstore_stats* stats) {
    APEXFLOW_REQUIRE(manifest && out, "null argument");
    *out = nullptr;
    return guarded([&] {
        const auto p = to_params(params);
        const apexspot::RoiSet set = to_rois(rois);
        const auto& records = manifest->manifest.records;
        auto store = std::make_unique<apexflow_flowstore>();
        store->inputs.resize(records.size());
        std::vector<int> computed(records.size(), 0);
        std::vector<int> spotted(records.size(), 0);
        pipeline::parallel_for(records.size(), jobs, [&](std::size_t i) {
            const auto& r = records[i];
            fs::path file;
            if (cache_dir) {
                file = fs::path(cache_dir) / (manifest->stems[i] + ".flo");
            }
            flow::FlowField field;
            if (!file.empty() && fs::exists(file)) {
                field = flow::read_flo(file);
            } else {
                pipeline::RecordFlow rf = pipeline::extract_flow(r, p, set);
                field = quantized(std::move(rf.field));
                computed[i] = 1;
                spotted[i] = rf.spotted ? 1 : 0;
                if (!file.empty()) {
                    fs::create_directories(file.parent_path());
                    fs::path tmp = file;
                    tmp += ".tmp";
                    flow::write_flo(field, tmp);
                    fs::rename(tmp, file);
                }
            }
            store->inputs[i] = flow::resize_to_input(field);
        });
        if (stats) {
            stats->computed = 0;
            stats->spotted = 0;
            for (std::size_t i = 0; i < records.size(); ++i) {
                stats->computed += static_cast<std::size_t>(computed[i]);
                stats->spotted += static_cast<std::size_t>(spotted[i]);
            }
            stats->loaded = records.size() - stats->computed;
        }
        *out = store.release();
    });
}

size_t apexflow_flowstore_size(const apexflow_flowstore* store) { return store ? store->inputs.size() : 0; }
void apexflow_flowstore_free(apexflow_flowstore* store) { delete store; }

void apexflow_train_defaults(apexflow_train_config* out) {
    if (!out) return;
    const net::TrainConfig d;
    *out = {d.learning_rate, d.epochs,        d.dropout_keep, d.seed,
            d.adam_beta1,    d.adam_beta2,    d.adam_epsilon, static_cast<int>(d.architecture.streams)};
}

apexflow_status apexflow_model_train(const apexflow_manifest* manifest, const apexflow_flowstore* store,
                                     const apexflow_train_config* config, apexflow_model** out) {
    APEXFLOW_REQUIRE(manifest && store && out, "null argument");
    *out = nullptr;
    return guarded([&] {
        check_store(manifest, store);
        const auto cfg = to_config(config);
        const auto& records = manifest->manifest.records;
        std::vector<net::LabeledInput> samples;
        samples.reserve(records.size());
        for (std::size_t i = 0; i < records.size(); ++i) {
            if (!store->inputs[i]) throw ValidationError("missing flow for video " + records[i].video);
            samples.push_back({*store->inputs[i], records[i].label});
        }
        net::TrainResult res = net::train(samples, cfg);
        *out = new apexflow_model{std::move(res.params), std::move(res.state), std::move(res.loss_curve)};
    });
}

apexflow_status apexflow_model_save(const apexflow_model* model, const char* path) {
    APEXFLOW_REQUIRE(model && path, "null argument");
    return guarded([&] { net::save_checkpoint(model->params, model->state, path); });
}

apexflow_status apexflow_model_load(const char* path, apexflow_model** out) {
    APEXFLOW_REQUIRE(path && out, "null argument");
    *out = nullptr;
    return guarded([&] {
        auto [params, state] = net::load_checkpoint(path);
        *out = new apexflow_model{std::move(params), std::move(state), {}};
    });
}

apexflow_status apexflow_model_predict(const apexflow_model* model, const apexflow_flowstore* store, size_t index,
                                       int* label, double probs[APEXFLOW_NUM_CLASSES]) {
    APEXFLOW_REQUIRE(model && store && label, "null argument");
    APEXFLOW_REQUIRE(index < store->inputs.size(), "sample index out of range");
    return guarded([&] {
        if (!store->inputs[index]) throw ValidationError("missing flow for sample " + std::to_string(index));
        const auto r = net::predict(model->params, *store->inputs[index]);
        *label = static_cast<int>(r.label);
        if (probs) std::memcpy(probs, r.probs.data(), sizeof(double) * APEXFLOW_NUM_CLASSES);
    });
}

size_t apexflow_model_loss_count(const apexflow_model* model) { return model ? model->loss_curve.size() : 0; }
const double* apexflow_model_loss_curve(const apexflow_model* model) {
    return model && !model->loss_curve.empty() ? model->loss_curve.data() : nullptr;
}
size_t apexflow_model_parameter_count(const apexflow_model* model) {
    return model ? model->params.parameter_count() : 0;
}
void apexflow_model_free(apexflow_model* model) { delete model; }

apexflow_status apexflow_report_run(const apexflow_manifest* manifest, const apexflow_flowstore* store,
                                    const apexflow_train_config* config, int jobs, apexflow_report** out) {
    APEXFLOW_REQUIRE(manifest && store && out, "null argument");
    *out = nullptr;
    return guarded([&] {
        check_store(manifest, store);
        const auto cfg = to_config(config);
        auto rep = std::make_unique<apexflow_report>();
        rep->records = manifest->manifest.records;
        eval::LosoOptions opts;
        opts.jobs = jobs;
        rep->report = eval::run_losocv(rep->records, store->inputs, cfg, opts);
        *out = rep.release();
    });
}

apexflow_status apexflow_report_write_json(const apexflow_report* report, const char* path) {
    APEXFLOW_REQUIRE(report && path, "null argument");
    return guarded([&] { write_text_file(path, eval::report_json(report->report, report->records)); });
}

apexflow_status apexflow_report_write_text(const apexflow_report* report, const char* path) {
    APEXFLOW_REQUIRE(report && path, "null argument");
    return guarded([&] { write_text_file(path, eval::report_text(report->report)); });
}

apexflow_status apexflow_report_write_predictions(const apexflow_report* report, const char* path) {
    APEXFLOW_REQUIRE(report && path, "null argument");
    return guarded([&] { write_text_file(path, eval::predictions_csv(report->report, report->records)); });
}

double apexflow_report_accuracy(const apexflow_report* r) { return r ? r->report.overall_metrics.accuracy : 0.0; }
double apexflow_report_macro_f(const apexflow_report* r) { return r ? r->report.overall_metrics.macro_f : 0.0; }
double apexflow_report_fold_mean_accuracy(const apexflow_report* r) { return r ? r->report.fold_mean_accuracy : 0.0; }
size_t apexflow_report_fold_count(const apexflow_report* r) { return r ? r->report.folds.size() : 0; }
int apexflow_report_complete(const apexflow_report* r) { return r && r->report.complete ? 1 : 0; }
void apexflow_report_free(apexflow_report* report) { delete report; }

apexflow_status apexflow_sweep_run(const apexflow_manifest* manifest, const apexflow_flowstore* store,
                                   const apexflow_train_config* config, const int* epochs, size_t epoch_count,
                                   int jobs, apexflow_sweep** out) {
    APEXFLOW_REQUIRE(manifest && store && out && (epochs || epoch_count == 0), "null argument");
    *out = nullptr;
    return guarded([&] {
        check_store(manifest, store);
        const auto cfg = to_config(config);
        eval::LosoOptions opts;
        opts.jobs = jobs;
        const std::vector<int> list(epochs, epochs + epoch_count);
        auto sw = std::make_unique<apexflow_sweep>();
        sw->table = eval::epoch_sweep(manifest->manifest.records, store->inputs, cfg, list, opts);
        *out = sw.release();
    });
}

apexflow_status apexflow_sweep_write_text(const apexflow_sweep* sweep, const char* path) {
    APEXFLOW_REQUIRE(sweep && path, "null argument");
    return guarded([&] { write_text_file(path, eval::sweep_text(sweep->table)); });
}

apexflow_status apexflow_sweep_write_json(const apexflow_sweep* sweep, const char* path) {
    APEXFLOW_REQUIRE(sweep && path, "null argument");
    return guarded([&] { write_text_file(path, eval::sweep_json(sweep->table)); });
}

size_t apexflow_sweep_rows(const apexflow_sweep* sweep) { return sweep ? sweep->table.rows.size() : 0; }
size_t apexflow_sweep_best(const apexflow_sweep* sweep) { return sweep ? sweep->table.best : 0; }
double apexflow_sweep_accuracy(const apexflow_sweep* sweep, size_t row) {
    return sweep && row < sweep->table.rows.size() ? sweep->table.rows[row].accuracy : 0.0;
}
void apexflow_sweep_free(apexflow_sweep* sweep) { delete sweep; }

void apexflow_synth_defaults(apexflow_synth_config* out) {
    if (!out) return;
    const synth::SynthConfig d;
    *out = {d.subjects, d.videos_per_subject, d.frames, d.seed, d.include_apex ? 1 : 0};
}

apexflow_status apexflow_synth_generate(const apexflow_synth_config* config, const char* out_dir) {
    APEXFLOW_REQUIRE(config && out_dir, "null argument");
    return guarded([&] {
        synth::SynthConfig c;
        c.subjects = config->subjects;
        c.videos_per_subject = config->videos_per_subject;
        c.frames = config->frames;
        c.seed = config->seed;
        c.include_apex = config->include_apex != 0;
        synth::generate_corpus(c, out_dir);
    });
}

}  // extern "C"
