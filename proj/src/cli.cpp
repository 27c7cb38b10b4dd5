#include "drm/cli.hpp"

#include <CLI11.hpp>

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <sstream>

#include "drm/analysis.hpp"
#include "drm/harness.hpp"
#include "drm/losses.hpp"

namespace drm {

namespace {

namespace fs = std::filesystem;

struct Common {
    std::uint64_t seed = 1;
    std::string out = "out";
};

void add_common(CLI::App* cmd, Common& c) {
    cmd->add_option("--seed", c.seed, "Random seed");
    cmd->add_option("--out", c.out, "Output directory");
}

struct ScalarFixture {
    std::unique_ptr<LossModel> model;
    Interval w;
    std::optional<double> kappa;
    double gamma_loss = 0.0;
};

struct ScalarOptions {
    std::string loss = "tent";
    double kappa = 2.0;
    double gamma_loss = 0.5;
    std::optional<double> lo, hi;
};

void add_scalar_options(CLI::App* cmd, ScalarOptions& o) {
    cmd->add_option("--loss", o.loss, "tent or reciprocal")->check(CLI::IsMember({"tent", "reciprocal"}));
    cmd->add_option("--kappa", o.kappa, "Tent height");
    cmd->add_option("--gamma-loss", o.gamma_loss, "Tent half-width");
    cmd->add_option("--lo", o.lo, "Lower end of W");
    cmd->add_option("--hi", o.hi, "Upper end of W");
}

/// W defaults to [-1, 1] for the tent and [gamma, 2] for the reciprocal loss.
ScalarFixture make_fixture(const ScalarOptions& o, double gamma) {
    ScalarFixture f;
    if (o.loss == "tent") {
        f.model = std::make_unique<TentLoss>(o.kappa, o.gamma_loss);
        f.kappa = o.kappa;
        f.gamma_loss = o.gamma_loss;
        f.w = {-1.0, 1.0};
    } else {
        f.model = std::make_unique<ReciprocalLoss>();
        f.w = {gamma, 2.0};
    }
    if (o.lo) f.w.lo = *o.lo;
    if (o.hi) f.w.hi = *o.hi;
    return f;
}

void write_file(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
}

std::string fmt(const char* format, double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, format, x);
    return buf;
}

int cmd_run(const Common& c, const std::string& config_path, bool seed_given, bool out_given, std::ostream& out) {
    ExperimentConfig cfg = load_experiment_config(config_path);
    if (seed_given) cfg = with_seed(std::move(cfg), c.seed);
    if (out_given) cfg.output_dir = c.out;
    const auto res = run_label_noise_experiment(cfg);
    out << "wrote " << cfg.output_dir << "\n";
    out << "method  final_train_risk  final_test_acc  peak_test_acc  flatness_gap\n";
    out << "erm     " << fmt("%-16.6g", res.erm_summary.final_train_risk) << "  "
        << fmt("%-14.4f", res.erm_summary.final_test_acc) << "  " << fmt("%-13.4f", res.erm_summary.peak_test_acc)
        << "  " << fmt("%.6g", res.flatness.erm.gap) << "\n";
    out << "drm     " << fmt("%-16.6g", res.drm_summary.final_train_risk) << "  "
        << fmt("%-14.4f", res.drm_summary.final_test_acc) << "  " << fmt("%-13.4f", res.drm_summary.peak_test_acc)
        << "  " << fmt("%.6g", res.flatness.drm.gap) << "\n";
    return 0;
}

int cmd_rate(const Common& c, const ScalarOptions& o, double gamma, std::optional<double> gamma_times_m,
             const std::vector<std::size_t>& m_list, std::size_t trials, double alpha, double resolution,
             const std::string& statistic, std::ostream& out) {
    const auto fx = make_fixture(o, gamma);
    RateStudyConfig cfg;
    cfg.w = fx.w;
    cfg.gamma = gamma;
    cfg.gamma_times_m = gamma_times_m;
    cfg.m_list = m_list;
    cfg.trials = trials;
    cfg.alpha = alpha;
    cfg.resolution = resolution;
    cfg.statistic = statistic == "uniform" ? GapStatistic::UniformDeviation : GapStatistic::Diametrical;
    cfg.seed = c.seed;
    const auto res = rate_study(*fx.model, fair_binary_labels(), cfg);
    std::ostringstream csv;
    res.write_csv(csv);
    write_file(fs::path(c.out) / "rate.csv", csv.str());
    out << "m        gamma        q05           q50           q95\n";
    for (const auto& r : res.records) {
        out << fmt("%-8.0f", static_cast<double>(r.m)) << " " << fmt("%-12.6g", r.gamma) << " "
            << fmt("%-13.6g", r.q05) << " " << fmt("%-13.6g", r.q50) << " " << fmt("%.6g", r.q95) << "\n";
    }
    if (res.all_nonpositive) out << "all quantiles <= 0; no slope fitted\n";
    else out << "slope " << fmt("%.4f", res.slope) << " over " << res.fitted_points << " points\n";
    return 0;
}

int cmd_confidence(const Common& c, const ScalarOptions& o, double gamma, double delta, std::size_t m,
                   std::size_t trials, double resolution, std::vector<double> epsilons, std::size_t eps_trials,
                   std::ostream& out) {
    const auto fx = make_fixture(o, gamma);
    if (epsilons.empty()) {
        const double q = uniform_deviation_quantile(*fx.model, fair_binary_labels(), fx.w, m, eps_trials, 0.05,
                                                    resolution, derive_rng(c.seed, {0x65707331})());
        out << "epsilon from the 95% uniform-deviation quantile: " << format_double(q) << "\n";
        for (double k : {0.0, 0.25, 0.5, 1.0, 2.0}) epsilons.push_back(k * q);
    }
    ConfidenceConfig cfg;
    cfg.w = fx.w;
    cfg.gamma = gamma;
    cfg.delta = delta;
    cfg.m = m;
    cfg.trials = trials;
    cfg.resolution = resolution;
    cfg.epsilons = epsilons;
    cfg.seed = c.seed;
    const auto res = confidence_region_check(*fx.model, fair_binary_labels(), cfg);
    std::ostringstream csv;
    res.write_csv(csv);
    write_file(fs::path(c.out) / "confidence.csv", csv.str());
    out << "epsilon        pass_rate  level_ok  argmin_ok  empty\n";
    for (const auto& r : res.rows) {
        out << fmt("%-14.6g", r.epsilon) << " " << fmt("%-10.4f", r.pass_rate) << " "
            << fmt("%-9.0f", static_cast<double>(r.level_passes)) << " "
            << fmt("%-10.0f", static_cast<double>(r.argmin_passes)) << " "
            << fmt("%.0f", static_cast<double>(r.empty_level_sets)) << "\n";
    }
    return 0;
}

int cmd_landscape(const Common& c, const std::string& checkpoint, const std::string& config_path, double gamma,
                  std::size_t n, const std::string& norm, std::ostream& out) {
    const ParamVector w = load_checkpoint(checkpoint);
    const MlpSpec spec = mlp_spec_from_params(w);
    const ExperimentConfig cfg = config_path.empty() ? default_experiment_config() : load_experiment_config(config_path);
    if (spec.input_dim != cfg.dataset.input_dim || spec.num_classes != static_cast<std::size_t>(cfg.dataset.num_classes)) {
        throw ConfigError("checkpoint architecture does not match the dataset of the config");
    }
    const auto data = make_experiment_data(cfg.dataset);
    MlpLoss model(spec);
    Rng rng = derive_rng(c.seed, {0x6c616e64});
    const auto hist = landscape_histogram(model, w, gamma, norm_kind_from_string(norm), n, data.train.view(), rng);
    std::ostringstream csv;
    hist.write_csv(csv);
    const auto path = fs::path(c.out) / "hist.csv";
    write_file(path, csv.str());
    out << "reference " << format_double(hist.reference) << "\n";
    out << "max       " << format_double(hist.max_value()) << "\n";
    out << "wrote " << path.string() << " (" << hist.values.size() << " values)\n";
    return 0;
}

int cmd_examples(const Common& c, const ScalarOptions& o, std::optional<double> gamma_opt, std::size_t m,
                 std::size_t trials, double resolution, std::ostream& out) {
    const double gamma = gamma_opt.value_or(o.loss == "tent" ? o.gamma_loss : 0.5);
    const auto fx = make_fixture(o, gamma);
    ExampleConfig cfg;
    cfg.w = fx.w;
    cfg.gamma = gamma;
    cfg.m = m;
    cfg.trials = trials;
    cfg.resolution = resolution;
    cfg.seed = c.seed;
    if (o.loss == "reciprocal") {
        // ERM may approach the pole at 0
        for (int k = 1; k <= 12; ++k) cfg.erm_extra_points.push_back(std::pow(10.0, -k));
    }
    const auto rows = example_gap_study(*fx.model, fair_binary_labels(), cfg, fx.kappa);
    std::ostringstream csv;
    write_example_csv(csv, rows);
    const auto path = fs::path(c.out) / "examples.csv";
    write_file(path, csv.str());

    out << "trial  rho    erm_min        erm_gap        erm_bound      drm_gap\n";
    std::size_t erm_positive = 0, drm_positive = 0;
    double erm_low = 0.0, drm_max = -INFINITY;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& t = rows[i];
        out << fmt("%-6.0f", static_cast<double>(i)) << " " << fmt("%-6.0f", static_cast<double>(t.rho)) << " "
            << fmt("%-14.6g", t.erm_min) << " " << fmt("%-14.6g", t.erm_gap) << " " << fmt("%-14.6g", t.erm_bound)
            << " " << fmt("%.6g", t.drm_gap) << "\n";
        erm_positive += t.erm_gap > 0.0 ? 1 : 0;
        drm_positive += t.drm_gap > 0.0 ? 1 : 0;
        erm_low = std::min(erm_low, t.erm_min);
        drm_max = std::max(drm_max, t.drm_gap);
    }
    out << "trials with erm_gap > 0: " << erm_positive << "/" << rows.size() << "\n";
    out << "trials with drm_gap > 0: " << drm_positive << "/" << rows.size() << "\n";
    out << "lowest erm_min: " << format_double(erm_low) << "\n";
    out << "largest drm_gap: " << format_double(drm_max) << "\n";
    out << "wrote " << path.string() << "\n";
    return 0;
}

}  // namespace

int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Diametrical risk minimization: training, rate studies and landscape diagnostics", "drm"};
    app.require_subcommand(1);

    Common common;

    auto* run = app.add_subcommand("run", "Label-noise experiment: SGD-ERM vs SGD-DRM from a JSON config");
    std::string config_path;
    run->add_option("--config", config_path, "Experiment config (JSON)")->required();
    add_common(run, common);

    auto* rate = app.add_subcommand("rate", "Monte-Carlo rate study of the diametrical generalization gap");
    ScalarOptions rate_opts;
    rate_opts.loss = "reciprocal";
    double rate_gamma = 0.5;
    std::optional<double> gamma_times_m;
    std::vector<std::size_t> m_list{250, 1000, 4000, 16000};
    std::size_t rate_trials = 400;
    double alpha = 0.05, resolution = 4096.0;
    std::string statistic = "diametrical";
    add_scalar_options(rate, rate_opts);
    rate->add_option("--gamma", rate_gamma, "Diametrical radius");
    rate->add_option("--gamma-times-m", gamma_times_m, "Use gamma = c / m for each m");
    rate->add_option("--m", m_list, "Sample sizes (increasing)")->delimiter(',');
    rate->add_option("--trials", rate_trials, "Datasets per sample size");
    rate->add_option("--alpha", alpha, "Quantile level 1 - alpha");
    rate->add_option("--resolution", resolution, "Grid points per unit length");
    rate->add_option("--statistic", statistic, "diametrical or uniform")
        ->check(CLI::IsMember({"diametrical", "uniform"}));
    add_common(rate, common);

    auto* conf = app.add_subcommand("confidence", "Confidence-region check on a scalar fixture");
    ScalarOptions conf_opts;
    double conf_gamma = 0.25, delta = 0.0;
    std::size_t conf_m = 1000, conf_trials = 200, eps_trials = 400;
    std::vector<double> epsilons;
    add_scalar_options(conf, conf_opts);
    conf->add_option("--gamma", conf_gamma, "Diametrical radius");
    conf->add_option("--delta", delta, "Level of the true-risk level set");
    conf->add_option("--m", conf_m, "Sample size");
    conf->add_option("--trials", conf_trials, "Number of datasets");
    conf->add_option("--resolution", resolution, "Grid points per unit length");
    conf->add_option("--eps", epsilons, "Slack values (default: multiples of the calibrated quantile)")
        ->delimiter(',');
    conf->add_option("--eps-trials", eps_trials, "Datasets used to calibrate epsilon");
    add_common(conf, common);

    auto* land = app.add_subcommand("landscape", "Risk histogram over a gamma-sphere around a checkpoint");
    std::string checkpoint, land_config, norm = "layerwise_frobenius";
    double land_gamma = 5.0;
    std::size_t land_n = 10000;
    land->add_option("--checkpoint", checkpoint, "ParamVector JSON checkpoint")->required();
    land->add_option("--config", land_config, "Experiment config that generated the training data");
    land->add_option("--gamma", land_gamma, "Sphere radius");
    land->add_option("--n", land_n, "Number of sphere draws");
    land->add_option("--norm", norm, "euclidean, sup or layerwise_frobenius");
    add_common(land, common);

    auto* ex = app.add_subcommand("examples", "ERM vs DRM gaps on the scalar counterexamples");
    ScalarOptions ex_opts;
    std::optional<double> ex_gamma;
    std::size_t ex_m = 1000, ex_trials = 200;
    add_scalar_options(ex, ex_opts);
    ex->add_option("--gamma", ex_gamma, "Diametrical radius (default: gamma-loss for tent, 0.5 otherwise)");
    ex->add_option("--m", ex_m, "Sample size");
    ex->add_option("--trials", ex_trials, "Number of datasets");
    ex->add_option("--resolution", resolution, "Grid points per unit length");
    add_common(ex, common);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        if (code == 0) return 0;
        err << app.help();
        return 2;
    }

    try {
        if (run->parsed()) {
            return cmd_run(common, config_path, run->count("--seed") > 0, run->count("--out") > 0, out);
        }
        if (rate->parsed()) {
            return cmd_rate(common, rate_opts, rate_gamma, gamma_times_m, m_list, rate_trials, alpha, resolution,
                            statistic, out);
        }
        if (conf->parsed()) {
            return cmd_confidence(common, conf_opts, conf_gamma, delta, conf_m, conf_trials, resolution, epsilons,
                                  eps_trials, out);
        }
        if (land->parsed()) return cmd_landscape(common, checkpoint, land_config, land_gamma, land_n, norm, out);
        if (ex->parsed()) return cmd_examples(common, ex_opts, ex_gamma, ex_m, ex_trials, resolution, out);
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
    err << app.help();
    return 2;
}

}  // namespace drm
