#include "drm/harness.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

namespace drm {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

constexpr std::uint64_t kBlobStream = 0x626c6f62;
constexpr std::uint64_t kFlipStream = 0x666c6970;
constexpr std::uint64_t kTestStream = 0x74657374;
constexpr std::uint64_t kHistStream = 0x68697374;

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
    std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& [key, value] : j.items()) {
        if (!ok.count(key)) throw ConfigError("unknown key '" + key + "' in " + where);
    }
}

template <class T>
T read(const json& j, const char* key, T fallback) {
    if (!j.contains(key)) return fallback;
    const auto& v = j.at(key);
    if constexpr (std::is_same_v<T, std::size_t> || std::is_same_v<T, std::uint64_t>) {
        if (!v.is_number_integer() || v.get<long long>() < 0) {
            throw ConfigError(std::string("'") + key + "' must be a non-negative integer");
        }
    } else if constexpr (std::is_same_v<T, int>) {
        if (!v.is_number_integer()) throw ConfigError(std::string("'") + key + "' must be an integer");
    } else if constexpr (std::is_same_v<T, double>) {
        if (!v.is_number()) throw ConfigError(std::string("'") + key + "' must be a number");
    } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v.is_string()) throw ConfigError(std::string("'") + key + "' must be a string");
    }
    return v.get<T>();
}

DatasetSpec parse_dataset(const json& j) {
    check_keys(j, {"generator", "n_train", "n_test", "input_dim", "num_classes", "separation", "noise_frac", "seed"},
               "dataset");
    DatasetSpec d;
    d.generator = read(j, "generator", d.generator);
    d.n_train = read(j, "n_train", d.n_train);
    d.n_test = read(j, "n_test", d.n_test);
    d.input_dim = read(j, "input_dim", d.input_dim);
    d.num_classes = read(j, "num_classes", d.num_classes);
    d.separation = read(j, "separation", d.separation);
    d.noise_frac = read(j, "noise_frac", d.noise_frac);
    d.seed = read(j, "seed", d.seed);
    if (d.generator != "gaussian_blobs") throw ConfigError("dataset.generator must be 'gaussian_blobs'");
    if (d.n_train < 1) throw ConfigError("dataset.n_train must be >= 1");
    if (d.input_dim < 1) throw ConfigError("dataset.input_dim must be >= 1");
    if (d.num_classes < 2) throw ConfigError("dataset.num_classes must be >= 2");
    if (!(d.separation > 0.0)) throw ConfigError("dataset.separation must be > 0");
    if (!(d.noise_frac >= 0.0 && d.noise_frac <= 1.0)) throw ConfigError("dataset.noise_frac must lie in [0, 1]");
    return d;
}

SamplingSchedule parse_sampling(const json& j) {
    check_keys(j, {"every_k", "p"}, "drm.sampling");
    if (j.contains("every_k") == j.contains("p")) throw ConfigError("drm.sampling needs exactly one of every_k, p");
    if (j.contains("every_k")) return SampleEveryK{read(j, "every_k", std::size_t{5})};
    return SampleWithProbability{read(j, "p", 1.0)};
}

FeasibleSet parse_feasible(const json& j, const ParamVector& tmpl) {
    check_keys(j, {"type", "lo", "hi", "radius"}, "drm.feasible_set");
    const auto type = read(j, "type", std::string("unbounded"));
    if (type == "unbounded") {
        if (j.contains("lo") || j.contains("hi") || j.contains("radius")) {
            throw ConfigError("unbounded feasible set takes no parameters");
        }
        return Unbounded{};
    }
    if (type == "box") return Box{read(j, "lo", -1.0), read(j, "hi", 1.0)};
    if (type == "ball") return EuclideanBall{tmpl.zeros_like(), read(j, "radius", 1.0)};
    throw ConfigError("drm.feasible_set.type must be unbounded, box or ball");
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

ordered_json summary_json(const MethodSummary& s) {
    return {{"final_train_risk", s.final_train_risk}, {"min_train_risk", s.min_train_risk},
            {"final_test_acc", s.final_test_acc},     {"peak_test_acc", s.peak_test_acc},
            {"peak_epoch", s.peak_epoch}};
}

ordered_json flatness_json(const FlatnessSide& s) {
    return {{"reference", s.reference}, {"max_risk", s.max_risk}, {"gap", s.gap}};
}

}  // namespace

nlohmann::ordered_json default_experiment_json() {
    return ordered_json{
        {"schema_version", kConfigSchemaVersion},
        {"dataset",
         {{"generator", "gaussian_blobs"},
          {"n_train", 300},
          {"n_test", 1000},
          {"input_dim", 10},
          {"num_classes", 3},
          {"separation", 5.0},
          {"noise_frac", 0.5},
          {"seed", 1}}},
        {"model", {{"hidden_dims", {64, 64, 32}}, {"seed", 1}}},
        {"drm",
         {{"gamma", 2.0},
          {"r", 20},
          {"q", 1},
          {"sampling", {{"every_k", 5}}},
          {"norm", "layerwise_frobenius"},
          {"batch_size", 30},
          {"epochs", 600},
          {"lr_schedule", ordered_json::array({{{"until_epoch", 500}, {"rate", 0.01}},
                                               {{"until_epoch", 600}, {"rate", 0.001}}})},
          {"feasible_set", {{"type", "unbounded"}}},
          {"seed", 1},
          {"epoch_eval_draws", 10}}},
        {"analysis", {{"hist_samples", 1000}}},
        {"output_dir", "out"},
    };
}

ExperimentConfig default_experiment_config() { return experiment_config_from_json(default_experiment_json()); }

ExperimentConfig experiment_config_from_json(const json& j) {
    try {
        check_keys(j, {"schema_version", "dataset", "model", "drm", "analysis", "output_dir"}, "config");
        if (!j.contains("schema_version")) throw ConfigError("config is missing schema_version");
        if (read(j, "schema_version", 0) != kConfigSchemaVersion) {
            throw ConfigError("unsupported schema_version (expected " + std::to_string(kConfigSchemaVersion) + ")");
        }
        for (const char* section : {"dataset", "model", "drm"}) {
            if (!j.contains(section)) throw ConfigError(std::string("config is missing '") + section + "'");
        }
        ExperimentConfig cfg;
        cfg.dataset = parse_dataset(j.at("dataset"));

        const auto& jm = j.at("model");
        check_keys(jm, {"hidden_dims", "seed"}, "model");
        cfg.model.input_dim = cfg.dataset.input_dim;
        cfg.model.num_classes = static_cast<std::size_t>(cfg.dataset.num_classes);
        if (jm.contains("hidden_dims")) {
            if (!jm.at("hidden_dims").is_array()) throw ConfigError("model.hidden_dims must be an array");
            for (const auto& h : jm.at("hidden_dims")) {
                if (!h.is_number_integer() || h.get<long long>() < 1) {
                    throw ConfigError("model.hidden_dims entries must be positive integers");
                }
                cfg.model.hidden_dims.push_back(h.get<std::size_t>());
            }
        }
        cfg.model.seed = read(jm, "seed", std::uint64_t{0});
        cfg.model.validate();

        const auto& jd = j.at("drm");
        check_keys(jd, {"gamma", "r", "q", "sampling", "norm", "batch_size", "epochs", "lr_schedule", "feasible_set",
                        "seed", "epoch_eval_draws"},
                   "drm");
        DrmConfig& d = cfg.drm;
        d.gamma = read(jd, "gamma", 0.0);
        d.r = read(jd, "r", d.r);
        d.q = read(jd, "q", d.q);
        if (jd.contains("sampling")) d.sampling = parse_sampling(jd.at("sampling"));
        d.norm_kind = norm_kind_from_string(read(jd, "norm", std::string("layerwise_frobenius")));
        d.batch_size = read(jd, "batch_size", d.batch_size);
        cfg.epochs = read(jd, "epochs", std::size_t{0});
        if (cfg.epochs < 1) throw ConfigError("drm.epochs must be >= 1");
        if (d.batch_size < 1) throw ConfigError("drm.batch_size must be >= 1");
        const std::size_t per_epoch = batches_per_epoch(cfg.dataset.n_train, d.batch_size);
        d.iterations = cfg.epochs * per_epoch;
        if (!jd.contains("lr_schedule") || !jd.at("lr_schedule").is_array() || jd.at("lr_schedule").empty()) {
            throw ConfigError("drm.lr_schedule must be a nonempty array");
        }
        for (const auto& seg : jd.at("lr_schedule")) {
            check_keys(seg, {"until_epoch", "rate"}, "drm.lr_schedule entry");
            if (!seg.contains("until_epoch") || !seg.contains("rate")) {
                throw ConfigError("drm.lr_schedule entries need until_epoch and rate");
            }
            d.lr_schedule.push_back({read(seg, "until_epoch", std::size_t{0}) * per_epoch, read(seg, "rate", 0.0)});
        }
        const ParamVector tmpl = init_params(cfg.model).zeros_like();
        if (jd.contains("feasible_set")) d.feasible = parse_feasible(jd.at("feasible_set"), tmpl);
        d.seed = read(jd, "seed", std::uint64_t{0});
        d.epoch_eval_draws = read(jd, "epoch_eval_draws", std::size_t{0});
        d.validate();

        if (j.contains("analysis")) {
            const auto& ja = j.at("analysis");
            check_keys(ja, {"hist_samples", "hist_gamma"}, "analysis");
            cfg.analysis.hist_samples = read(ja, "hist_samples", cfg.analysis.hist_samples);
            if (ja.contains("hist_gamma")) cfg.analysis.hist_gamma = read(ja, "hist_gamma", 0.0);
        }
        if (cfg.analysis.hist_samples < 1) throw ConfigError("analysis.hist_samples must be >= 1");
        if (cfg.analysis.hist_gamma && !(*cfg.analysis.hist_gamma >= 0.0)) {
            throw ConfigError("analysis.hist_gamma must be >= 0");
        }
        cfg.output_dir = read(j, "output_dir", cfg.output_dir);
        cfg.source = ordered_json::parse(j.dump());
        return cfg;
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
}

ExperimentConfig load_experiment_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError("invalid JSON in " + path + ": " + e.what());
    }
    return experiment_config_from_json(j);
}

ExperimentConfig with_seed(ExperimentConfig cfg, std::uint64_t seed) {
    cfg.dataset.seed = seed;
    cfg.model.seed = seed;
    cfg.drm.seed = seed;
    cfg.source["dataset"]["seed"] = seed;
    cfg.source["model"]["seed"] = seed;
    cfg.source["drm"]["seed"] = seed;
    return cfg;
}

Dataset gen_gaussian_blobs(int num_classes, std::size_t n, std::size_t d, double separation, std::uint64_t seed) {
    if (num_classes < 2) throw std::invalid_argument("gen_gaussian_blobs: num_classes must be >= 2");
    if (!(separation > 0.0)) throw std::invalid_argument("gen_gaussian_blobs: separation must be > 0");
    if (d < 1) throw std::invalid_argument("gen_gaussian_blobs: d must be >= 1");
    const auto classes = static_cast<std::size_t>(num_classes);
    // vertices s/sqrt(2) e_k are pairwise s apart; with too few dimensions
    // the means are spaced s apart along the first axis instead
    std::vector<std::vector<double>> means(classes, std::vector<double>(d, 0.0));
    for (std::size_t k = 0; k < classes; ++k) {
        if (d >= classes) means[k][k] = separation / std::sqrt(2.0);
        else means[k][0] = separation * static_cast<double>(k);
    }
    Rng rng = derive_rng(seed, {kBlobStream});
    std::normal_distribution<double> noise(0.0, 1.0);
    Dataset out;
    out.num_classes = num_classes;
    out.samples.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        Sample z;
        z.label = static_cast<int>(i % classes);
        z.features = means[i % classes];
        for (auto& x : z.features) x += noise(rng);
        out.samples.push_back(std::move(z));
    }
    out.noise_mask.assign(n, false);
    out.original_labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) out.original_labels[i] = out.samples[i].label;
    return out;
}

Dataset flip_labels(const Dataset& data, double frac, Rng& rng) {
    if (data.num_classes < 2) throw std::invalid_argument("flip_labels: num_classes must be >= 2");
    if (!(frac >= 0.0 && frac <= 1.0)) throw std::invalid_argument("flip_labels: frac must lie in [0, 1]");
    Dataset out = data;
    const std::size_t m = data.size();
    if (out.original_labels.size() != m) {
        out.original_labels.resize(m);
        for (std::size_t i = 0; i < m; ++i) out.original_labels[i] = data.samples[i].label;
    }
    out.noise_mask.resize(m, false);
    const auto count = static_cast<std::size_t>(std::llround(frac * static_cast<double>(m)));
    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    std::uniform_int_distribution<int> offset(1, data.num_classes - 1);
    for (std::size_t k = 0; k < count; ++k) {
        auto& z = out.samples[order[k]];
        z.label = (z.label + offset(rng)) % data.num_classes;
    }
    for (std::size_t i = 0; i < m; ++i) out.noise_mask[i] = out.samples[i].label != out.original_labels[i];
    return out;
}

double accuracy(const MlpSpec& spec, const ParamVector& w, const Dataset& data) {
    if (data.empty()) throw std::invalid_argument("accuracy: empty data");
    std::size_t hits = 0;
    for (const auto& z : data.samples) hits += predict_class(spec, w, z.features) == z.label ? 1 : 0;
    return static_cast<double>(hits) / static_cast<double>(data.size());
}

ExperimentData make_experiment_data(const DatasetSpec& spec) {
    if (spec.generator != "gaussian_blobs") throw ConfigError("unknown dataset generator: " + spec.generator);
    ExperimentData out;
    const Dataset clean = gen_gaussian_blobs(spec.num_classes, spec.n_train, spec.input_dim, spec.separation, spec.seed);
    Rng flip_rng = derive_rng(spec.seed, {kFlipStream});
    out.train = flip_labels(clean, spec.noise_frac, flip_rng);
    const std::uint64_t test_seed = derive_rng(spec.seed, {kTestStream})();
    out.test = gen_gaussian_blobs(spec.num_classes, spec.n_test, spec.input_dim, spec.separation, test_seed);
    return out;
}

MethodSummary summarize(const RunTrace& trace) {
    const auto epochs = trace.epoch_records();
    if (epochs.empty()) throw std::invalid_argument("summarize: trace has no epoch records");
    MethodSummary s;
    s.final_train_risk = *epochs.back().train_risk;
    s.min_train_risk = s.final_train_risk;
    s.final_test_acc = epochs.back().test_acc.value_or(0.0);
    s.peak_test_acc = -1.0;
    for (const auto& r : epochs) {
        s.min_train_risk = std::min(s.min_train_risk, *r.train_risk);
        const double acc = r.test_acc.value_or(0.0);
        if (acc > s.peak_test_acc) {
            s.peak_test_acc = acc;
            s.peak_epoch = r.epoch;
        }
    }
    return s;
}

ExperimentResult run_label_noise_experiment(const ExperimentConfig& cfg, bool write_outputs) {
    const auto data = make_experiment_data(cfg.dataset);
    MlpLoss model(cfg.model);
    const ParamVector w0 = init_params(cfg.model);

    ExperimentResult res;
    res.erm = sgd_erm_run(model, w0, data.train, data.test, cfg.drm);
    res.drm = sgd_drm_run(model, w0, data.train, data.test, cfg.drm);
    if (res.erm.trace.init_fingerprint != res.drm.trace.init_fingerprint ||
        res.erm.trace.batch_fingerprint != res.drm.trace.batch_fingerprint) {
        throw std::logic_error("ERM and DRM runs did not share initialization and batch schedule");
    }
    res.erm_summary = summarize(res.erm.trace);
    res.drm_summary = summarize(res.drm.trace);

    const double hist_gamma = cfg.analysis.hist_gamma.value_or(cfg.drm.gamma);
    Rng hist_rng = derive_rng(cfg.drm.seed, {kHistStream});
    const DirectionSet dirs{hist_rng(), cfg.analysis.hist_samples, hist_gamma, cfg.drm.norm_kind};
    res.hist_erm = landscape_histogram(model, res.erm.w, hist_gamma, cfg.drm.norm_kind, dirs.count, data.train.view(),
                                       hist_rng, dirs);
    res.hist_drm = landscape_histogram(model, res.drm.w, hist_gamma, cfg.drm.norm_kind, dirs.count, data.train.view(),
                                       hist_rng, dirs);
    res.flatness = flatness_report(res.hist_erm, res.hist_drm);

    auto& s = res.summary;
    s["schema_version"] = kConfigSchemaVersion;
    s["erm"] = summary_json(res.erm_summary);
    s["drm"] = summary_json(res.drm_summary);
    s["flatness"] = {{"gamma", hist_gamma},
                     {"samples", dirs.count},
                     {"erm", flatness_json(res.flatness.erm)},
                     {"drm", flatness_json(res.flatness.drm)},
                     {"flatter", res.flatness.flatter}};
    s["noisy_train_labels"] = data.train.noisy_count();
    s["init_fingerprint"] = res.erm.trace.init_fingerprint;
    s["batch_fingerprint"] = res.erm.trace.batch_fingerprint;
    s["config"] = cfg.source;

    if (write_outputs) {
        namespace fs = std::filesystem;
        const fs::path dir(cfg.output_dir);
        fs::create_directories(dir);
        write_text(dir / "trace_erm.csv", res.erm.trace.to_csv());
        write_text(dir / "trace_drm.csv", res.drm.trace.to_csv());
        save_checkpoint(res.erm.w, (dir / "checkpoint_erm.json").string());
        save_checkpoint(res.drm.w, (dir / "checkpoint_drm.json").string());
        std::ostringstream he, hd;
        res.hist_erm.write_csv(he);
        res.hist_drm.write_csv(hd);
        write_text(dir / "hist_erm.csv", he.str());
        write_text(dir / "hist_drm.csv", hd.str());
        write_text(dir / "summary.json", s.dump(2) + "\n");
    }
    return res;
}

}  // namespace drm
