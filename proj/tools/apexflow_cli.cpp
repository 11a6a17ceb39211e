#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "apexflow/apexflow.h"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitRuntime = 2;

struct Failure {
    int exit_code;
    std::string kind;
    std::string message;
};

[[noreturn]] void usage_error(const std::string& message) { throw Failure{kExitValidation, "usage", message}; }

void check(apexflow_status status) {
    if (status == APEXFLOW_OK) return;
    const bool validation = status == APEXFLOW_ERR_VALIDATION || status == APEXFLOW_ERR_INVALID_ARGUMENT;
    throw Failure{validation ? kExitValidation : kExitRuntime, apexflow_status_name(status), apexflow_last_error()};
}

template <class T, void (*Free)(T*)>
struct Handle {
    T* ptr = nullptr;
    Handle() = default;
    Handle(const Handle&) = delete;
    Handle& operator=(const Handle&) = delete;
    ~Handle() { Free(ptr); }
    T** out() { return &ptr; }
    T* get() const { return ptr; }
};

using Manifest = Handle<apexflow_manifest, apexflow_manifest_free>;
using Flow = Handle<apexflow_flow, apexflow_flow_free>;
using FlowStore = Handle<apexflow_flowstore, apexflow_flowstore_free>;
using Model = Handle<apexflow_model, apexflow_model_free>;
using Report = Handle<apexflow_report, apexflow_report_free>;
using Sweep = Handle<apexflow_sweep, apexflow_sweep_free>;

// Command-line values; unset ones fall back to the config file, then defaults.
struct Options {
    std::string config;
    std::optional<std::string> manifest;
    std::optional<std::string> out;
    std::optional<int> jobs;
    std::optional<std::uint64_t> seed;
    std::optional<int> epochs;
    std::optional<std::string> rois;
    std::optional<std::string> flows;
    std::optional<std::string> epochs_list;
    std::optional<std::string> input;
    bool png = false;
    std::optional<int> subjects;
    std::optional<int> videos;
    std::optional<int> frames;
    bool with_apex = false;
};

struct Settings {
    std::string manifest;
    std::string out = ".";
    int jobs = 1;
    std::string rois;
    std::string flows;
    std::vector<int> epochs_list;
    apexflow_tvl1_params tvl1{};
    apexflow_train_config train{};
    apexflow_synth_config synth{};
};

json load_config(const std::string& path) {
    if (path.empty()) return json::object();
    std::ifstream in(path);
    if (!in) usage_error("cannot open config file " + path);
    try {
        json doc = json::parse(in);
        if (!doc.is_object()) usage_error("config file must hold a JSON object");
        return doc;
    } catch (const json::exception& e) {
        usage_error("config file " + path + ": " + e.what());
    }
}

template <class T>
void take(const json& obj, const char* key, T& dst) {
    if (!obj.contains(key)) return;
    try {
        dst = obj.at(key).get<T>();
    } catch (const json::exception&) {
        usage_error(std::string("config key '") + key + "' has the wrong type");
    }
}

std::vector<int> parse_epochs_list(const std::string& text) {
    std::vector<int> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            const int v = std::stoi(item, &used);
            if (used != item.size() && item.find_first_not_of(' ', used) != std::string::npos) throw 0;
            out.push_back(v);
        } catch (...) {
            usage_error("bad epoch value '" + item + "'");
        }
    }
    return out;
}

Settings resolve(const Options& o) {
    Settings s;
    apexflow_tvl1_defaults(&s.tvl1);
    apexflow_train_defaults(&s.train);
    apexflow_synth_defaults(&s.synth);
    const json cfg = load_config(o.config);

    take(cfg, "manifest", s.manifest);
    take(cfg, "out", s.out);
    take(cfg, "jobs", s.jobs);
    take(cfg, "rois", s.rois);
    take(cfg, "flows", s.flows);
    take(cfg, "epochs_list", s.epochs_list);
    take(cfg, "seed", s.train.seed);
    take(cfg, "epochs", s.train.epochs);
    if (cfg.contains("tvl1")) {
        const json& t = cfg["tvl1"];
        take(t, "lambda", s.tvl1.lambda);
        take(t, "theta", s.tvl1.theta);
        take(t, "tau", s.tvl1.tau);
        take(t, "n_scales", s.tvl1.n_scales);
        take(t, "zoom", s.tvl1.zoom);
        take(t, "n_warps", s.tvl1.n_warps);
        take(t, "epsilon", s.tvl1.epsilon);
        take(t, "max_inner_iterations", s.tvl1.max_inner_iterations);
    }
    if (cfg.contains("train")) {
        const json& t = cfg["train"];
        take(t, "learning_rate", s.train.learning_rate);
        take(t, "dropout_keep", s.train.dropout_keep);
        take(t, "adam_beta1", s.train.adam_beta1);
        take(t, "adam_beta2", s.train.adam_beta2);
        take(t, "adam_epsilon", s.train.adam_epsilon);
        take(t, "streams", s.train.streams);
    }
    if (cfg.contains("synth")) {
        const json& t = cfg["synth"];
        take(t, "subjects", s.synth.subjects);
        take(t, "videos_per_subject", s.synth.videos_per_subject);
        take(t, "frames", s.synth.frames);
        take(t, "include_apex", s.synth.include_apex);
    }
    take(cfg, "seed", s.synth.seed);

    if (o.manifest) s.manifest = *o.manifest;
    if (o.out) s.out = *o.out;
    if (o.jobs) s.jobs = *o.jobs;
    if (o.rois) s.rois = *o.rois;
    if (o.flows) s.flows = *o.flows;
    if (o.epochs_list) s.epochs_list = parse_epochs_list(*o.epochs_list);
    if (o.seed) {
        s.train.seed = *o.seed;
        s.synth.seed = *o.seed;
    }
    if (o.epochs) s.train.epochs = *o.epochs;
    if (o.subjects) s.synth.subjects = *o.subjects;
    if (o.videos) s.synth.videos_per_subject = *o.videos;
    if (o.frames) s.synth.frames = *o.frames;
    if (o.with_apex) s.synth.include_apex = 1;

    if (s.jobs < 1) usage_error("--jobs must be at least 1");
    if (s.flows.empty()) s.flows = (fs::path(s.out) / "flows").string();
    return s;
}

void require_file(const std::string& path, const char* what) {
    if (path.empty()) usage_error(std::string("no ") + what + " given");
    if (!fs::exists(path)) usage_error(std::string(what) + " not found: " + path);
}

void make_out_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw Failure{kExitRuntime, "io", "cannot create " + dir + ": " + ec.message()};
}

std::string out_path(const Settings& s, const std::string& name) { return (fs::path(s.out) / name).string(); }

void load_manifest(const Settings& s, Manifest& m) {
    require_file(s.manifest, "manifest");
    check(apexflow_manifest_load(s.manifest.c_str(), m.out()));
}

apexflow_rois load_rois(const Settings& s) {
    apexflow_rois rois;
    apexflow_rois_default(&rois);
    if (!s.rois.empty()) {
        require_file(s.rois, "roi file");
        check(apexflow_rois_load(s.rois.c_str(), &rois));
    }
    return rois;
}

void build_store(const Settings& s, const Manifest& m, FlowStore& store) {
    const apexflow_rois rois = load_rois(s);
    make_out_dir(s.flows);
    apexflow_flowstore_stats stats{};
    check(apexflow_flowstore_build(m.get(), &s.tvl1, &rois, s.flows.c_str(), s.jobs, store.out(), &stats));
    std::cerr << "flows: " << stats.computed << " computed, " << stats.loaded << " reused (" << s.flows << ")\n";
}

int cmd_ingest(const Settings& s) {
    Manifest m;
    load_manifest(s, m);
    size_t counts[APEXFLOW_NUM_CLASSES];
    check(apexflow_manifest_class_counts(m.get(), counts));
    std::cout << "records " << apexflow_manifest_size(m.get()) << "\n"
              << "subjects " << apexflow_manifest_subject_count(m.get()) << "\n"
              << "excluded " << apexflow_manifest_excluded(m.get()) << "\n"
              << "negative " << counts[0] << "\n"
              << "positive " << counts[1] << "\n"
              << "surprise " << counts[2] << "\n";
    return kExitOk;
}

int cmd_spot_apex(const Settings& s) {
    Manifest m;
    load_manifest(s, m);
    const apexflow_rois rois = load_rois(s);
    const size_t n = apexflow_manifest_size(m.get());
    std::vector<int> apex(n);
    check(apexflow_spot_apexes(m.get(), &rois, s.jobs, apex.data()));
    make_out_dir(s.out);
    const std::string path = out_path(s, "apex.csv");
    std::ofstream csv(path, std::ios::binary);
    if (!csv) throw Failure{kExitRuntime, "io", "cannot write " + path};
    csv << "video,predicted_apex,ground_truth_apex\n";
    for (size_t i = 0; i < n; ++i) {
        apexflow_record_info info;
        check(apexflow_manifest_record(m.get(), i, &info));
        csv << info.video << ',' << apex[i] << ',';
        if (info.apex_index > 0) csv << info.apex_index;
        csv << '\n';
    }
    std::cout << "wrote " << path << "\n";
    return kExitOk;
}

int cmd_flow(const Settings& s, bool png) {
    Manifest m;
    load_manifest(s, m);
    Settings local = s;
    local.flows = s.out;
    FlowStore store;
    build_store(local, m, store);
    if (png) {
        const size_t n = apexflow_manifest_size(m.get());
        for (size_t i = 0; i < n; ++i) {
            apexflow_record_info info;
            check(apexflow_manifest_record(m.get(), i, &info));
            Flow f;
            check(apexflow_flow_read(out_path(s, std::string(info.artifact_stem) + ".flo").c_str(), f.out()));
            check(apexflow_flow_write_color(f.get(), out_path(s, std::string(info.artifact_stem) + ".png").c_str()));
        }
    }
    std::cout << "wrote " << apexflow_manifest_size(m.get()) << " flow files to " << s.out << "\n";
    return kExitOk;
}

int cmd_train(const Settings& s) {
    Manifest m;
    load_manifest(s, m);
    FlowStore store;
    build_store(s, m, store);
    Model model;
    check(apexflow_model_train(m.get(), store.get(), &s.train, model.out()));
    make_out_dir(s.out);
    const std::string ckpt = out_path(s, "model.ckpt");
    check(apexflow_model_save(model.get(), ckpt.c_str()));
    std::ofstream loss(out_path(s, "loss.csv"), std::ios::binary);
    loss << "epoch,loss\n";
    const double* curve = apexflow_model_loss_curve(model.get());
    const size_t count = apexflow_model_loss_count(model.get());
    char buf[64];
    for (size_t i = 0; i < count; ++i) {
        std::snprintf(buf, sizeof buf, "%.17g", curve[i]);
        loss << i + 1 << ',' << buf << '\n';
    }
    std::cout << "wrote " << ckpt << " (" << apexflow_model_parameter_count(model.get()) << " parameters)\n";
    return kExitOk;
}

int cmd_eval(const Settings& s) {
    Manifest m;
    load_manifest(s, m);
    FlowStore store;
    build_store(s, m, store);
    Report rep;
    check(apexflow_report_run(m.get(), store.get(), &s.train, s.jobs, rep.out()));
    make_out_dir(s.out);
    check(apexflow_report_write_json(rep.get(), out_path(s, "report.json").c_str()));
    check(apexflow_report_write_text(rep.get(), out_path(s, "report.txt").c_str()));
    check(apexflow_report_write_predictions(rep.get(), out_path(s, "predictions.csv").c_str()));
    char line[160];
    std::snprintf(line, sizeof line, "accuracy %.4f macro_f %.4f folds %zu%s\n", apexflow_report_accuracy(rep.get()),
                  apexflow_report_macro_f(rep.get()), apexflow_report_fold_count(rep.get()),
                  apexflow_report_complete(rep.get()) ? "" : " (incomplete)");
    std::cout << line;
    return kExitOk;
}

int cmd_sweep(const Settings& s) {
    if (s.epochs_list.empty()) usage_error("sweep needs --epochs-list or an epochs_list config entry");
    Manifest m;
    load_manifest(s, m);
    FlowStore store;
    build_store(s, m, store);
    Sweep sw;
    check(apexflow_sweep_run(m.get(), store.get(), &s.train, s.epochs_list.data(), s.epochs_list.size(), s.jobs,
                             sw.out()));
    make_out_dir(s.out);
    check(apexflow_sweep_write_text(sw.get(), out_path(s, "sweep.txt").c_str()));
    check(apexflow_sweep_write_json(sw.get(), out_path(s, "sweep.json").c_str()));
    std::cout << "best epochs " << s.epochs_list[apexflow_sweep_best(sw.get())] << "\n";
    return kExitOk;
}

int cmd_flow_viz(const Settings& s, const std::optional<std::string>& input) {
    const std::string source = input ? *input : s.flows;
    require_file(source, "flow input");
    std::vector<fs::path> files;
    if (fs::is_directory(source)) {
        for (const auto& e : fs::directory_iterator(source)) {
            if (e.is_regular_file() && e.path().extension() == ".flo") files.push_back(e.path());
        }
        std::sort(files.begin(), files.end());
    } else {
        files.emplace_back(source);
    }
    make_out_dir(s.out);
    for (const auto& f : files) {
        Flow flow;
        check(apexflow_flow_read(f.string().c_str(), flow.out()));
        const std::string png = out_path(s, f.stem().string() + ".png");
        check(apexflow_flow_write_color(flow.get(), png.c_str()));
    }
    std::cout << "wrote " << files.size() << " images to " << s.out << "\n";
    return kExitOk;
}

int cmd_synth(const Settings& s) {
    make_out_dir(s.out);
    check(apexflow_synth_generate(&s.synth, s.out.c_str()));
    std::cout << "wrote " << s.synth.subjects * s.synth.videos_per_subject << " clips to " << s.out << "\n";
    return kExitOk;
}

void print_failure(const std::string& command, const Failure& f) {
    const json line = {{"error", f.kind}, {"command", command}, {"exit", f.exit_code}, {"message", f.message}};
    std::cerr << line.dump() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Micro-expression recognition from apex-frame optical flow"};
    app.require_subcommand(1, 1);
    app.set_version_flag("--version", std::string(apexflow_version()));

    Options o;
    auto common = [&o](CLI::App* sub) {
        sub->add_option("--config", o.config, "JSON configuration file; flags override it");
        sub->add_option("--jobs", o.jobs, "Parallel workers");
        sub->add_option("--seed", o.seed, "Base random seed");
        sub->add_option("--epochs", o.epochs, "Training epochs");
        sub->add_option("--out", o.out, "Output directory");
    };
    auto manifest_opt = [&o](CLI::App* sub) { sub->add_option("--manifest", o.manifest, "Dataset manifest (JSON)"); };
    auto flows_opt = [&o](CLI::App* sub) {
        sub->add_option("--flows", o.flows, "Flow cache directory (default <out>/flows)");
    };
    auto rois_opt = [&o](CLI::App* sub) { sub->add_option("--rois", o.rois, "RoI override file (JSON)"); };

    auto* ingest = app.add_subcommand("ingest", "Validate a manifest and print class counts");
    auto* spot = app.add_subcommand("spot-apex", "Spot apex frames and write apex.csv");
    auto* flow = app.add_subcommand("flow", "Estimate onset-to-apex flow and write <video>.flo files");
    auto* train = app.add_subcommand("train", "Train on every sample and write model.ckpt");
    auto* eval = app.add_subcommand("eval", "Leave-one-subject-out evaluation report");
    auto* sweep = app.add_subcommand("sweep", "Evaluate several epoch settings");
    auto* viz = app.add_subcommand("flow-viz", "Render .flo files as colour-wheel PNGs");
    auto* synth = app.add_subcommand("synth", "Generate a synthetic corpus");

    for (auto* sub : {ingest, spot, flow, train, eval, sweep, viz, synth}) common(sub);
    for (auto* sub : {ingest, spot, flow, train, eval, sweep}) manifest_opt(sub);
    for (auto* sub : {spot, flow, train, eval, sweep}) rois_opt(sub);
    for (auto* sub : {train, eval, sweep, viz}) flows_opt(sub);
    flow->add_flag("--png", o.png, "Also write a colour-wheel PNG per video");
    sweep->add_option("--epochs-list", o.epochs_list, "Comma-separated epoch values");
    viz->add_option("--input", o.input, ".flo file or directory (default: the flow cache)");
    synth->add_option("--subjects", o.subjects, "Number of subjects");
    synth->add_option("--videos", o.videos, "Videos per subject");
    synth->add_option("--frames", o.frames, "Frames per clip");
    synth->add_flag("--with-apex", o.with_apex, "Write the planted apex into the manifest");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << app.help();
        print_failure("", Failure{kExitValidation, "usage", e.what()});
        return kExitValidation;
    }

    const std::string command = app.get_subcommands().front()->get_name();
    try {
        const Settings s = resolve(o);
        if (command == "ingest") return cmd_ingest(s);
        if (command == "spot-apex") return cmd_spot_apex(s);
        if (command == "flow") return cmd_flow(s, o.png);
        if (command == "train") return cmd_train(s);
        if (command == "eval") return cmd_eval(s);
        if (command == "sweep") return cmd_sweep(s);
        if (command == "flow-viz") return cmd_flow_viz(s, o.input);
        if (command == "synth") return cmd_synth(s);
        usage_error("unknown command " + command);
    } catch (const Failure& f) {
        print_failure(command, f);
        return f.exit_code;
    } catch (const std::exception& e) {
        print_failure(command, Failure{kExitRuntime, "runtime", e.what()});
        return kExitRuntime;
    }
}
