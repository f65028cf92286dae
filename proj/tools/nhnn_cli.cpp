// Command-line front end: every run is driven by one JSON config file and
// writes into a fixed output layout (model/, reports/, logs/). Exit codes:
// 0 success, 1 config validation error, 2 runtime failure. Config
// validation completes before any output file is created.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "nhnn/component_counts.hpp"
#include "nhnn/dataio.hpp"
#include "nhnn/dpgmm.hpp"
#include "nhnn/evaluation.hpp"
#include "nhnn/experiment.hpp"
#include "nhnn/synthetic.hpp"

using nlohmann::json;
namespace fs = std::filesystem;
using namespace nhnn;

namespace {

// ---- logging (level from NHNN_LOG_LEVEL: debug|info|warn|error)

enum class LogLevel { Debug = 0, Info = 1, Warn = 2, Error = 3 };

LogLevel log_level_from_env() {
    const char* v = std::getenv("NHNN_LOG_LEVEL");
    if (!v) return LogLevel::Info;
    const std::string s(v);
    if (s == "debug") return LogLevel::Debug;
    if (s == "info") return LogLevel::Info;
    if (s == "warn") return LogLevel::Warn;
    if (s == "error") return LogLevel::Error;
    return LogLevel::Info;
}

struct Logger {
    LogLevel level = log_level_from_env();
    std::ofstream file;

    void open(const fs::path& dir) { file.open(dir / "run.log", std::ios::app); }
    void log(LogLevel l, const std::string& msg) {
        if (l < level) return;
        static const char* names[] = {"debug", "info", "warn", "error"};
        const std::string line = std::string("[") + names[static_cast<int>(l)] + "] " + msg;
        std::cerr << line << "\n";
        if (file) file << line << "\n";
    }
    void info(const std::string& msg) { log(LogLevel::Info, msg); }
};

// Thrown during the validation phase; maps to exit code 1.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// ---- config plumbing

json load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file: " + path);
    try {
        json j;
        in >> j;
        return j;
    } catch (const json::exception& e) {
        throw ConfigError("config is not valid JSON: " + std::string(e.what()));
    }
}

void check_keys(const json& obj, const std::string& section,
                const std::set<std::string>& allowed) {
    if (!obj.is_object()) throw ConfigError("config section '" + section + "' must be an object");
    for (const auto& [key, value] : obj.items())
        if (!allowed.count(key))
            throw ConfigError("unknown key '" + key + "' in config section '" + section + "'");
}

template <typename T>
T get_or(const json& obj, const std::string& key, T fallback) {
    if (!obj.contains(key)) return fallback;
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError("config key '" + key + "' has the wrong type");
    }
}

template <typename T>
T require(const json& obj, const std::string& section, const std::string& key) {
    if (!obj.contains(key))
        throw ConfigError("config section '" + section + "' is missing required key '" + key +
                          "'");
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError("config key '" + section + "." + key + "' has the wrong type");
    }
}

struct CommonFlags {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    int jobs = 1;
    std::string out_override;
};

fs::path resolve_out_dir(const json& cfg, const CommonFlags& flags) {
    if (!flags.out_override.empty()) return flags.out_override;
    if (cfg.contains("output")) {
        check_keys(cfg.at("output"), "output", {"dir"});
        return require<std::string>(cfg.at("output"), "output", "dir");
    }
    throw ConfigError("no output directory: provide output.dir in the config or --out");
}

struct OutputLayout {
    fs::path root, model, reports, logs;
};

// Only called after validation succeeds.
OutputLayout make_layout(const fs::path& root) {
    OutputLayout lay{root, root / "model", root / "reports", root / "logs"};
    fs::create_directories(lay.model);
    fs::create_directories(lay.reports);
    fs::create_directories(lay.logs);
    return lay;
}

void write_json(const fs::path& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << j.dump(2) << "\n";
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
}

std::string fixed(double v, int width = 8, int prec = 4) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%*.*f", width, prec, v);
    return buf;
}

// ---- shared section parsers

SyntheticSpec parse_synth_section(const json& s) {
    check_keys(s, "synth",
               {"name", "n_groups", "n_speakers_per_group", "utterances_per_speaker", "d_s",
                "n_mel", "T_min", "T_max", "group_separation", "label_map_mode", "stat_offset",
                "gender_offset", "seed"});
    SyntheticSpec spec;
    spec.n_groups = get_or(s, "n_groups", spec.n_groups);
    spec.n_speakers_per_group = get_or(s, "n_speakers_per_group", spec.n_speakers_per_group);
    spec.utterances_per_speaker = get_or(s, "utterances_per_speaker", spec.utterances_per_speaker);
    spec.d_s = get_or(s, "d_s", spec.d_s);
    spec.n_mel = get_or(s, "n_mel", spec.n_mel);
    spec.T_min = get_or(s, "T_min", spec.T_min);
    spec.T_max = get_or(s, "T_max", spec.T_max);
    spec.group_separation = get_or(s, "group_separation", spec.group_separation);
    spec.stat_offset = get_or(s, "stat_offset", spec.stat_offset);
    spec.gender_offset = get_or(s, "gender_offset", spec.gender_offset);
    spec.seed = get_or<std::uint64_t>(s, "seed", spec.seed);
    const std::string mode = get_or<std::string>(s, "label_map_mode", "shared");
    if (mode == "shared")
        spec.label_map_mode = LabelMapMode::Shared;
    else if (mode == "group_flipped")
        spec.label_map_mode = LabelMapMode::GroupFlipped;
    else
        throw ConfigError("synth.label_map_mode must be 'shared' or 'group_flipped'");
    try {
        spec.validate();
    } catch (const std::exception& e) {
        throw ConfigError(std::string("invalid synth section: ") + e.what());
    }
    return spec;
}

TrainingConfig parse_training_section(const json& t, const std::string& section) {
    check_keys(t, section,
               {"batch_size", "learning_rate", "patience", "max_epochs", "validation_fraction",
                "seed"});
    TrainingConfig cfg;
    cfg.batch_size = get_or(t, "batch_size", cfg.batch_size);
    cfg.learning_rate = get_or(t, "learning_rate", cfg.learning_rate);
    cfg.patience = get_or(t, "patience", cfg.patience);
    cfg.max_epochs = get_or(t, "max_epochs", cfg.max_epochs);
    cfg.validation_fraction = get_or(t, "validation_fraction", cfg.validation_fraction);
    cfg.seed = get_or<std::uint64_t>(t, "seed", cfg.seed);
    try {
        cfg.validate();
    } catch (const std::exception& e) {
        throw ConfigError("invalid " + section + " section: " + e.what());
    }
    return cfg;
}

struct DpgmmSection {
    double alpha0 = 1.0;
    int Ttrunc = 10;
    double tol = 1e-6;
    int max_iter = 500;
    double threshold = 0.10;
    std::uint64_t seed = 0;
    std::string model_in;  // cluster command: reuse a saved model
};

DpgmmSection parse_dpgmm_section(const json& d) {
    check_keys(d, "dpgmm",
               {"alpha0", "Ttrunc", "tol", "max_iter", "threshold", "seed", "model_in"});
    DpgmmSection s;
    s.alpha0 = get_or(d, "alpha0", s.alpha0);
    s.Ttrunc = get_or(d, "Ttrunc", s.Ttrunc);
    s.tol = get_or(d, "tol", s.tol);
    s.max_iter = get_or(d, "max_iter", s.max_iter);
    s.threshold = get_or(d, "threshold", s.threshold);
    s.seed = get_or<std::uint64_t>(d, "seed", s.seed);
    s.model_in = get_or<std::string>(d, "model_in", "");
    if (!(s.alpha0 > 0.0)) throw ConfigError("dpgmm.alpha0 must be > 0");
    if (s.Ttrunc < 1) throw ConfigError("dpgmm.Ttrunc must be >= 1");
    if (!(s.threshold > 0.0) || !(s.threshold < 1.0))
        throw ConfigError("dpgmm.threshold must lie in (0,1)");
    return s;
}

PipelineConfig parse_pipeline(const json& cfg) {
    PipelineConfig pc;
    if (cfg.contains("training")) pc.training = parse_training_section(cfg.at("training"), "training");
    if (cfg.contains("head_training"))
        pc.head_training = parse_training_section(cfg.at("head_training"), "head_training");
    if (cfg.contains("dpgmm")) {
        const DpgmmSection d = parse_dpgmm_section(cfg.at("dpgmm"));
        pc.alpha0 = d.alpha0;
        pc.Ttrunc = d.Ttrunc;
        pc.cavi_tol = d.tol;
        pc.cavi_max_iter = d.max_iter;
        pc.prune_threshold = d.threshold;
    }
    if (cfg.contains("mtl")) {
        check_keys(cfg.at("mtl"), "mtl", {"aux_attr", "lambda"});
        pc.aux_attr = get_or<std::string>(cfg.at("mtl"), "aux_attr", pc.aux_attr);
        pc.mtl_lambda = get_or(cfg.at("mtl"), "lambda", pc.mtl_lambda);
    }
    return pc;
}

std::vector<ModelKind> parse_model_list(const json& exp) {
    std::vector<std::string> names =
        get_or<std::vector<std::string>>(exp, "models", {"dcnn", "nhnn_fc"});
    if (names.empty()) throw ConfigError("experiment.models must not be empty");
    std::vector<ModelKind> kinds;
    for (const std::string& n : names) {
        try {
            kinds.push_back(parse_model_kind(n));
        } catch (const std::exception&) {
            throw ConfigError("unknown model kind '" + n + "' in experiment.models");
        }
    }
    return kinds;
}

std::vector<std::uint64_t> parse_seeds(const json& exp, const CommonFlags& flags,
                                       int default_count) {
    if (flags.seed) return {*flags.seed};
    if (exp.contains("seeds")) {
        auto seeds = get_or<std::vector<std::uint64_t>>(exp, "seeds", {});
        if (seeds.empty()) throw ConfigError("experiment.seeds must not be empty");
        return seeds;
    }
    std::vector<std::uint64_t> seeds(default_count);
    for (int i = 0; i < default_count; ++i) seeds[i] = i;
    return seeds;
}

std::vector<const Utterance*> labeled_view(const Corpus& corpus) {
    std::vector<const Utterance*> utts;
    for (int i : labeled_indices(corpus)) utts.push_back(&corpus.utterances[i]);
    return utts;
}

const char* label_name(LabelBin b) {
    switch (b) {
        case LabelBin::Low: return "low";
        case LabelBin::Medium: return "medium";
        case LabelBin::High: return "high";
    }
    return "?";
}

// ---- model bundles (cmd_train output, cmd_predict input)

void save_bundle(const TrainedModel& model, const OutputLayout& lay) {
    json bundle;
    bundle["format_version"] = 1;
    bundle["kind"] = model_kind_name(model.kind);
    bundle["norm_mean"] = model.norm.mean;
    bundle["norm_stddev"] = model.norm.stddev;
    switch (model.kind) {
        case ModelKind::Dcnn:
            save_dcnn(*model.dcnn, (lay.model / "dcnn.json").string());
            break;
        case ModelKind::Mtl:
            save_mtl(*model.mtl, (lay.model / "mtl.json").string());
            break;
        case ModelKind::NhnnFc:
        case ModelKind::NhnnFcConv:
            save_nhnn(*model.nhnn, (lay.model / "nhnn").string());
            break;
    }
    write_json(lay.model / "bundle.json", bundle);
}

TrainedModel load_bundle(fs::path dir) {
    if (!fs::exists(dir / "bundle.json") && fs::exists(dir / "model" / "bundle.json"))
        dir /= "model";  // accept a train run directory or its model/ subdirectory
    std::ifstream in(dir / "bundle.json");
    if (!in) throw std::runtime_error("no model bundle at " + dir.string());
    json bundle;
    in >> bundle;
    TrainedModel model;
    model.kind = parse_model_kind(bundle.at("kind").get<std::string>());
    model.norm.mean = bundle.at("norm_mean").get<std::vector<double>>();
    model.norm.stddev = bundle.at("norm_stddev").get<std::vector<double>>();
    switch (model.kind) {
        case ModelKind::Dcnn:
            model.dcnn = load_dcnn((dir / "dcnn.json").string());
            break;
        case ModelKind::Mtl:
            model.mtl = load_mtl((dir / "mtl.json").string());
            break;
        case ModelKind::NhnnFc:
        case ModelKind::NhnnFcConv:
            model.nhnn = load_nhnn((dir / "nhnn").string());
            break;
    }
    return model;
}

// ---- commands

int cmd_synth(const json& cfg, const CommonFlags& flags, Logger& log) {
    check_keys(cfg, "<root>", {"synth", "output"});
    if (!cfg.contains("synth")) throw ConfigError("synth command needs a 'synth' section");
    SyntheticSpec spec = parse_synth_section(cfg.at("synth"));
    if (flags.seed) spec.seed = *flags.seed;
    const std::string name = get_or<std::string>(cfg.at("synth"), "name", "synthetic");
    const fs::path out = resolve_out_dir(cfg, flags);

    const OutputLayout lay = make_layout(out);
    log.open(lay.logs);
    Corpus corpus = generate_synthetic(spec);
    corpus.name = name;
    const fs::path data_dir = out / "data";
    save_corpus(corpus, data_dir.string());

    json report;
    report["format_version"] = 1;
    report["name"] = name;
    report["manifest"] = "data/manifest.json";  // relative to the run directory
    report["n_utterances"] = corpus.utterances.size();
    report["n_speakers"] = spec.n_groups * spec.n_speakers_per_group;
    report["seed"] = spec.seed;
    report["label_map_mode"] =
        spec.label_map_mode == LabelMapMode::Shared ? "shared" : "group_flipped";
    std::map<std::string, long> label_counts;
    for (const Utterance& u : corpus.utterances)
        if (u.label) label_counts[label_name(*u.label)]++;
    report["label_counts"] = label_counts;
    write_json(lay.reports / "synth.json", report);
    log.info("synth: wrote " + std::to_string(corpus.utterances.size()) + " utterances to " +
             data_dir.string());
    return 0;
}

int cmd_cluster(const json& cfg, const CommonFlags& flags, Logger& log) {
    check_keys(cfg, "<root>", {"data", "dpgmm", "output"});
    if (!cfg.contains("data")) throw ConfigError("cluster command needs a 'data' section");
    check_keys(cfg.at("data"), "data", {"manifest"});
    const std::string manifest = require<std::string>(cfg.at("data"), "data", "manifest");
    DpgmmSection d = cfg.contains("dpgmm") ? parse_dpgmm_section(cfg.at("dpgmm")) : DpgmmSection{};
    if (flags.seed) d.seed = *flags.seed;
    const fs::path out = resolve_out_dir(cfg, flags);

    const OutputLayout lay = make_layout(out);
    log.open(lay.logs);
    const Corpus corpus = load_corpus(manifest);
    const auto utts = labeled_view(corpus);
    if (utts.empty()) throw std::runtime_error("corpus has no labeled utterances");
    const int n = static_cast<int>(utts.size());
    const int dim = utts.front()->summary_dim();
    Tensor X({n, dim});
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < dim; ++j) X.at(i, j) = utts[i]->summary.data[j];

    SummaryScaler scaler;
    DpGmmModel pruned;
    std::vector<int> assignments;
    int n_before_prune = 0;
    if (!d.model_in.empty()) {
        pruned = load_dpgmm((fs::path(d.model_in) / "dpgmm.json").string());
        std::ifstream sf(fs::path(d.model_in) / "scaler.json");
        if (!sf) throw std::runtime_error("no scaler.json next to " + d.model_in);
        json sj;
        sf >> sj;
        scaler.mean = sj.at("mean").get<std::vector<double>>();
        scaler.stddev = sj.at("stddev").get<std::vector<double>>();
        n_before_prune = pruned.n_active();
        assignments = hard_assign(pruned, scaler.transform(X));
        log.info("cluster: reused model from " + d.model_in);
    } else {
        scaler = SummaryScaler::fit(X);
        const Tensor Xs = scaler.transform(X);
        CaviOptions opts;
        opts.Ttrunc = d.Ttrunc;
        opts.tol = d.tol;
        opts.max_iter = d.max_iter;
        opts.seed = d.seed;
        DpGmmModel fitted = fit_cavi(Xs, empirical_prior(Xs, d.alpha0), opts);
        n_before_prune = fitted.n_active();
        std::tie(pruned, assignments) = prune_and_reassign(fitted, Xs, d.threshold);
        log.info("cluster: CAVI " + std::to_string(fitted.elbo_trace.size()) + " iterations, " +
                 std::to_string(pruned.n_active()) + " active components");
    }

    save_dpgmm(pruned, (lay.model / "dpgmm.json").string());
    write_json(lay.model / "scaler.json", json{{"mean", scaler.mean}, {"stddev", scaler.stddev}});

    std::string csv = "id,cluster\n";
    for (int i = 0; i < n; ++i)
        csv += utts[i]->id + "," + std::to_string(assignments[i]) + "\n";
    write_text(lay.reports / "assignments.csv", csv);

    const std::vector<int> active = pruned.active_indices();
    std::vector<long> counts(active.size(), 0);
    for (int a : assignments) counts[a]++;

    json report;
    report["format_version"] = 1;
    report["corpus"] = corpus.name;
    report["n_utterances"] = n;
    report["n_components_before_prune"] = n_before_prune;
    report["n_components"] = pruned.n_active();
    report["prune_threshold"] = d.threshold;
    json comps = json::array();
    for (std::size_t c = 0; c < active.size(); ++c)
        comps.push_back({{"component", active[c]},
                         {"weight", pruned.weights[active[c]]},
                         {"count", counts[c]}});
    report["components"] = comps;
    report["reassigned_total"] = n;
    if (!pruned.elbo_trace.empty()) {
        report["elbo_iterations"] = pruned.elbo_trace.size();
        report["elbo_final"] = pruned.elbo_trace.back();
    }
    ClusterAttributeReport attrs =
        cluster_attribute_ratios(utts, assignments, {"gender", "native_language"});
    json jclusters = json::array();
    for (const auto& c : attrs.clusters) {
        json jc{{"cluster", c.cluster}, {"size", c.size}};
        for (const auto& [attr, ratio] : c.attr_ratios) {
            json jr{{"count_a", ratio.count_a}, {"count_b", ratio.count_b},
                    {"value_a", ratio.value_a}, {"value_b", ratio.value_b}};
            if (ratio.infinite)
                jr["ratio"] = "inf";
            else
                jr["ratio"] = ratio.value;
            jc["attr_ratios"][attr] = jr;
        }
        if (c.dispersion_infinite)
            jc["subject_dispersion"] = "inf";
        else
            jc["subject_dispersion"] = c.subject_dispersion;
        jclusters.push_back(jc);
    }
    report["attribute_report"] = jclusters;
    write_json(lay.reports / "cluster_report.json", report);

    std::string text = "cluster report: " + corpus.name + "\n";
    text += "  components (post-prune): " + std::to_string(pruned.n_active()) + "\n";
    for (std::size_t c = 0; c < active.size(); ++c)
        text += "  component " + std::to_string(active[c]) + "  weight " +
                fixed(pruned.weights[active[c]]) + "  count " + std::to_string(counts[c]) + "\n";
    write_text(lay.reports / "cluster_report.txt", text);
    return 0;
}

int cmd_train(const json& cfg, const CommonFlags& flags, Logger& log) {
    check_keys(cfg, "<root>",
               {"data", "model", "dpgmm", "training", "head_training", "mtl", "output"});
    if (!cfg.contains("data")) throw ConfigError("train command needs a 'data' section");
    check_keys(cfg.at("data"), "data", {"manifest"});
    const std::string manifest = require<std::string>(cfg.at("data"), "data", "manifest");
    if (!cfg.contains("model")) throw ConfigError("train command needs a 'model' section");
    check_keys(cfg.at("model"), "model", {"kind"});
    ModelKind kind;
    try {
        kind = parse_model_kind(require<std::string>(cfg.at("model"), "model", "kind"));
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        throw ConfigError(e.what());
    }
    PipelineConfig pc = parse_pipeline(cfg);
    std::uint64_t seed = flags.seed.value_or(pc.training.seed);
    const fs::path out = resolve_out_dir(cfg, flags);

    const OutputLayout lay = make_layout(out);
    log.open(lay.logs);
    const Corpus corpus = load_corpus(manifest);
    const auto utts = labeled_view(corpus);
    log.info("train: " + model_kind_name(kind) + " on " + std::to_string(utts.size()) +
             " utterances, seed " + std::to_string(seed));
    const TrainedModel model = train_model(kind, utts, pc, seed);
    save_bundle(model, lay);

    // training-set confusion for the report
    ConfusionMatrix cm(3);
    for (const Utterance* u : utts)
        cm.add(static_cast<int>(*u->label), static_cast<int>(model.predict(*u)));
    json report;
    report["format_version"] = 1;
    report["kind"] = model_kind_name(kind);
    report["corpus"] = corpus.name;
    report["seed"] = seed;
    report["n_train"] = utts.size();
    report["train_uar"] = uar(cm);
    write_json(lay.reports / "train_report.json", report);
    log.info("train: done, training-set UAR " + fixed(uar(cm)));
    return 0;
}

int cmd_predict(const json& cfg, const CommonFlags& flags, Logger& log) {
    check_keys(cfg, "<root>", {"data", "model", "output"});
    if (!cfg.contains("data")) throw ConfigError("predict command needs a 'data' section");
    check_keys(cfg.at("data"), "data", {"manifest"});
    const std::string manifest = require<std::string>(cfg.at("data"), "data", "manifest");
    if (!cfg.contains("model")) throw ConfigError("predict command needs a 'model' section");
    check_keys(cfg.at("model"), "model", {"path"});
    const std::string model_path = require<std::string>(cfg.at("model"), "model", "path");
    const fs::path out = resolve_out_dir(cfg, flags);

    const OutputLayout lay = make_layout(out);
    log.open(lay.logs);
    const TrainedModel model = load_bundle(model_path);
    const Corpus corpus = load_corpus(manifest);

    json rows = json::array();
    std::string csv = "id,p_low,p_medium,p_high,label\n";
    for (const Utterance& u : corpus.utterances) {
        const Tensor probs = model.predict_probs(u);
        const LabelBin label = argmax_label(probs);
        rows.push_back({{"id", u.id},
                        {"probs", probs.data},
                        {"label", label_name(label)}});
        csv += u.id;
        for (double p : probs.data) csv += "," + std::to_string(p);
        csv += std::string(",") + label_name(label) + "\n";
    }
    json report;
    report["format_version"] = 1;
    report["kind"] = model_kind_name(model.kind);
    report["n_utterances"] = corpus.utterances.size();
    report["predictions"] = rows;
    write_json(lay.reports / "predictions.json", report);
    write_text(lay.reports / "predictions.csv", csv);
    log.info("predict: scored " + std::to_string(corpus.utterances.size()) + " utterances");
    return 0;
}

json t_test_to_json(const TTestResult& t) {
    json j;
    j["t_statistic"] = t.degenerate ? json("nan") : json(t.t_statistic);
    j["degrees_of_freedom"] = t.degrees_of_freedom;
    j["p_value_two_sided"] = t.p_value_two_sided;
    j["n_pairs"] = t.n_pairs;
    j["degenerate"] = t.degenerate;
    return j;
}

int cmd_eval_loso(const json& cfg, const CommonFlags& flags, Logger& log) {
    check_keys(cfg, "<root>",
               {"data", "experiment", "dpgmm", "training", "head_training", "mtl", "output"});
    if (!cfg.contains("data")) throw ConfigError("eval-loso command needs a 'data' section");
    check_keys(cfg.at("data"), "data", {"manifest"});
    const std::string manifest = require<std::string>(cfg.at("data"), "data", "manifest");
    const json exp = cfg.contains("experiment") ? cfg.at("experiment") : json::object();
    check_keys(exp, "experiment", {"models", "seeds", "baseline"});
    const std::vector<ModelKind> kinds = parse_model_list(exp);
    const std::vector<std::uint64_t> seeds = parse_seeds(exp, flags, 5);
    const std::string baseline_name = get_or<std::string>(exp, "baseline", "dcnn");
    ModelKind baseline;
    try {
        baseline = parse_model_kind(baseline_name);
    } catch (const std::exception&) {
        throw ConfigError("unknown baseline model kind '" + baseline_name + "'");
    }
    PipelineConfig pc = parse_pipeline(cfg);
    const fs::path out = resolve_out_dir(cfg, flags);

    const OutputLayout lay = make_layout(out);
    log.open(lay.logs);
    const Corpus corpus = load_corpus(manifest);
    log.info("eval-loso: " + std::to_string(kinds.size()) + " models, " +
             std::to_string(seeds.size()) + " seeds, jobs " + std::to_string(flags.jobs));
    const auto results = run_within_corpus_multi(corpus, kinds, pc, seeds, flags.jobs);

    json report;
    report["format_version"] = 1;
    report["protocol"] = "loso";
    report["corpus"] = corpus.name;
    report["seeds"] = seeds;
    const bool have_baseline = results.count(baseline) > 0;
    for (const auto& [kind, r] : results) {
        json jr;
        jr["mean_uar"] = r.mean_uar;
        jr["speakers"] = r.speakers;
        jr["per_subject_uar"] = r.per_subject_uar;
        jr["per_seed_uars"] = r.per_seed_uars;
        if (have_baseline && kind != baseline)
            jr["t_test_vs_" + model_kind_name(baseline)] = t_test_to_json(
                paired_t_test(r.per_subject_uar, results.at(baseline).per_subject_uar));
        report["models"][model_kind_name(kind)] = jr;
    }
    write_json(lay.reports / "loso_report.json", report);

    std::string text = "LOSO evaluation: " + corpus.name + "\n";
    text += "  model           mean UAR\n";
    for (const auto& [kind, r] : results) {
        std::string name = model_kind_name(kind);
        name.resize(14, ' ');
        text += "  " + name + "  " + fixed(r.mean_uar) + "\n";
    }
    write_text(lay.reports / "loso_report.txt", text);
    for (const auto& [kind, r] : results)
        log.info("eval-loso: " + model_kind_name(kind) + " mean UAR " + fixed(r.mean_uar));
    return 0;
}

int cmd_eval_cross(const json& cfg, const CommonFlags& flags, Logger& log) {
    check_keys(cfg, "<root>",
               {"data", "experiment", "dpgmm", "training", "head_training", "mtl", "output"});
    if (!cfg.contains("data")) throw ConfigError("eval-cross command needs a 'data' section");
    check_keys(cfg.at("data"), "data", {"train_manifest", "test_manifest"});
    const std::string train_manifest =
        require<std::string>(cfg.at("data"), "data", "train_manifest");
    const std::string test_manifest =
        require<std::string>(cfg.at("data"), "data", "test_manifest");
    const json exp = cfg.contains("experiment") ? cfg.at("experiment") : json::object();
    check_keys(exp, "experiment", {"models", "seeds", "baseline"});
    const std::vector<ModelKind> kinds = parse_model_list(exp);
    const std::vector<std::uint64_t> seeds = parse_seeds(exp, flags, 30);
    const std::string baseline_name = get_or<std::string>(exp, "baseline", "dcnn");
    ModelKind baseline;
    try {
        baseline = parse_model_kind(baseline_name);
    } catch (const std::exception&) {
        throw ConfigError("unknown baseline model kind '" + baseline_name + "'");
    }
    PipelineConfig pc = parse_pipeline(cfg);
    const fs::path out = resolve_out_dir(cfg, flags);

    const OutputLayout lay = make_layout(out);
    log.open(lay.logs);
    const Corpus train_corpus = load_corpus(train_manifest);
    const Corpus test_corpus = load_corpus(test_manifest);
    log.info("eval-cross: train " + train_corpus.name + " -> test " + test_corpus.name);

    std::map<ModelKind, CrossCorpusResult> results;
    for (ModelKind kind : kinds)
        results.emplace(kind,
                        run_cross_corpus(train_corpus, test_corpus, kind, pc, seeds, flags.jobs));

    json report;
    report["format_version"] = 1;
    report["protocol"] = "cross_corpus";
    report["train_corpus"] = train_corpus.name;
    report["test_corpus"] = test_corpus.name;
    report["seeds"] = seeds;
    const bool have_baseline = results.count(baseline) > 0;
    for (const auto& [kind, r] : results) {
        json jr;
        jr["mean_uar"] = r.mean_uar;
        jr["per_seed_uar"] = r.per_seed_uar;
        if (have_baseline && kind != baseline)
            jr["t_test_vs_" + model_kind_name(baseline)] = t_test_to_json(
                paired_t_test(r.per_seed_uar, results.at(baseline).per_seed_uar));
        report["models"][model_kind_name(kind)] = jr;
    }
    write_json(lay.reports / "cross_report.json", report);

    std::string text = "cross-corpus evaluation: " + train_corpus.name + " -> " +
                       test_corpus.name + "\n";
    text += "  model           mean UAR\n";
    for (const auto& [kind, r] : results) {
        std::string name = model_kind_name(kind);
        name.resize(14, ' ');
        text += "  " + name + "  " + fixed(r.mean_uar) + "\n";
    }
    write_text(lay.reports / "cross_report.txt", text);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Nonparametric hierarchical neural network pipeline"};
    app.require_subcommand(1);

    CommonFlags flags;
    std::uint64_t seed_value = 0;
    bool seed_set = false;
    const auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", flags.config_path, "JSON run configuration")->required();
        sub->add_option("--seed", seed_value, "override every seed in the config")
            ->each([&](const std::string&) { seed_set = true; });
        sub->add_option("--jobs", flags.jobs, "parallel seed/fold jobs (1 = bit-reference mode)");
        sub->add_option("--out", flags.out_override, "output directory (overrides output.dir)");
    };

    CLI::App* synth = app.add_subcommand("synth", "generate a synthetic corpus");
    CLI::App* cluster = app.add_subcommand("cluster", "fit and prune the DP-GMM");
    CLI::App* train = app.add_subcommand("train", "train one model on a full corpus");
    CLI::App* eval_loso =
        app.add_subcommand("eval-loso", "leave-one-subject-out evaluation");
    CLI::App* eval_cross = app.add_subcommand("eval-cross", "cross-corpus evaluation");
    CLI::App* predict = app.add_subcommand("predict", "score a corpus with a trained model");
    for (CLI::App* sub : {synth, cluster, train, eval_loso, eval_cross, predict})
        add_common(sub);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;  // usage problems are validation errors
    }
    if (seed_set) flags.seed = seed_value;
    if (flags.jobs < 1) {
        std::cerr << "error: --jobs must be >= 1\n";
        return 1;
    }

    Logger log;
    json cfg;
    try {
        cfg = load_config(flags.config_path);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    }

    try {
        if (synth->parsed()) return cmd_synth(cfg, flags, log);
        if (cluster->parsed()) return cmd_cluster(cfg, flags, log);
        if (train->parsed()) return cmd_train(cfg, flags, log);
        if (eval_loso->parsed()) return cmd_eval_loso(cfg, flags, log);
        if (eval_cross->parsed()) return cmd_eval_cross(cfg, flags, log);
        if (predict->parsed()) return cmd_predict(cfg, flags, log);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
