// One PASS/FAIL line per acceptance criterion; nonzero exit if any fail.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "drm/analysis.hpp"
#include "drm/harness.hpp"
#include "drm/mlp.hpp"
#include "drm/optimizer.hpp"
#include "drm/risk.hpp"

using namespace drm;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
    bool pass = false;
    std::string detail;
};

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, x);
    return buf;
}

std::vector<Sample> binary_sample(std::size_t m, Rng& rng) {
    std::vector<Sample> out(m);
    for (auto& z : out) z.label = static_cast<int>(rng() & 1U);
    return out;
}

std::vector<Sample> linear_sample(std::size_t m, Rng& rng) {
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    std::vector<Sample> out(m);
    for (auto& z : out) {
        z.features = {u(rng)};
        z.target = u(rng);
    }
    return out;
}

Outcome tent_example() {
    const auto t0 = Clock::now();
    const TentLoss tent(2.0, 0.5);
    ExampleConfig cfg;
    cfg.w = {-1.0, 1.0};
    cfg.gamma = 0.5;
    cfg.m = 1000;
    cfg.trials = 500;
    cfg.seed = 1;
    const auto rows = example_gap_study(tent, fair_binary_labels(), cfg, 2.0);
    std::size_t drm_positive = 0, erm_positive = 0;
    for (const auto& r : rows) {
        drm_positive += r.drm_gap > 0.0;
        erm_positive += r.erm_gap > 0.0;
    }
    const double secs = seconds_since(t0);
    const double frac = static_cast<double>(erm_positive) / static_cast<double>(rows.size());
    return {drm_positive == 0 && frac >= 0.4 && secs < 10.0,
            "drm_gap > 0 in " + std::to_string(drm_positive) + "/500, erm_gap > 0 in " + fmt("%.3f", frac) +
                " of trials, " + fmt("%.2f", secs) + " s"};
}

Outcome reciprocal_example() {
    const auto t0 = Clock::now();
    const ReciprocalLoss rec;
    const double gamma = 0.5;

    ExampleConfig ex;
    ex.w = {gamma, 2.0};
    ex.gamma = gamma;
    ex.m = 1000;
    ex.trials = 100;
    ex.seed = 2;
    for (int k = 1; k <= 12; ++k) ex.erm_extra_points.push_back(std::pow(10.0, -k));
    const auto rows = example_gap_study(rec, fair_binary_labels(), ex, std::nullopt);
    std::size_t negative = 0, unbounded = 0;
    for (const auto& r : rows) {
        if (r.rho < 0) {
            ++negative;
            unbounded += r.erm_min < -1e3;
        }
    }

    RateStudyConfig rc;
    rc.w = {gamma, 2.0};
    rc.gamma = gamma;
    rc.m_list = {250, 1000, 4000, 16000};
    rc.trials = 400;
    rc.alpha = 0.05;
    rc.seed = 2;
    const auto rate = rate_study(rec, fair_binary_labels(), rc);
    const double secs = seconds_since(t0);
    const bool ok = negative > 0 && unbounded == negative && rate.fitted_points == 4 && rate.slope >= -0.65 &&
                    rate.slope <= -0.35 && secs < 120.0;
    return {ok, "min R_m < -1e3 in " + std::to_string(unbounded) + "/" + std::to_string(negative) +
                    " rho<0 trials, slope " + fmt("%.4f", rate.slope) + ", " + fmt("%.2f", secs) + " s"};
}

Outcome confidence_region() {
    const auto t0 = Clock::now();
    const TentLoss tent(2.0, 0.5);
    const Interval w{-1.0, 1.0};
    const std::size_t m = 1000;
    const double eps = uniform_deviation_quantile(tent, fair_binary_labels(), w, m, 400, 0.05, 4096.0, 3);
    ConfidenceConfig cfg;
    cfg.w = w;
    cfg.gamma = 0.25;
    cfg.delta = 0.0;
    cfg.m = m;
    cfg.trials = 200;
    cfg.epsilons = {eps};
    cfg.seed = 4;
    const auto res = confidence_region_check(tent, fair_binary_labels(), cfg);
    const double rate = res.rows[0].pass_rate;
    const double secs = seconds_since(t0);
    return {rate >= 0.9 && secs < 120.0,
            "eps " + fmt("%.4g", eps) + ", pass rate " + fmt("%.3f", rate) + ", " + fmt("%.2f", secs) + " s"};
}

Outcome mlp_gradients() {
    const MlpSpec spec{3, {3}, 2, 0};
    const MlpLoss model(spec);
    Rng rng(5);
    std::normal_distribution<double> g(0.0, 1.0);
    double worst = 0.0;
    for (int trial = 0; trial < 5; ++trial) {
        auto flat = init_params(spec).flatten();
        for (auto& x : flat) x = g(rng);
        const auto w = init_params(spec).with_flat_values(flat);
        std::vector<Sample> batch(7);
        for (auto& z : batch) {
            z.features = {g(rng), g(rng), g(rng)};
            z.label = static_cast<int>(rng() % 2);
        }
        const auto grad = loss_and_grad(spec, w, batch).second.flatten();
        const double h = 1e-5;
        for (std::size_t k = 0; k < flat.size(); ++k) {
            auto up = flat, down = flat;
            up[k] += h;
            down[k] -= h;
            const double fd = (model.batch_risk(w.with_flat_values(up), batch) -
                               model.batch_risk(w.with_flat_values(down), batch)) /
                              (2.0 * h);
            const double scale = std::max({std::abs(fd), std::abs(grad[k]), 1e-8});
            worst = std::max(worst, std::abs(fd - grad[k]) / scale);
        }
    }
    const double nll_err = std::abs(nll_softmax(std::vector<double>{0.0, 0.0, 0.0}, 0) - std::log(3.0));
    return {worst <= 1e-5 && nll_err <= 1e-12,
            "max rel error " + fmt("%.3g", worst) + ", |nll - ln 3| " + fmt("%.3g", nll_err)};
}

Outcome reduction_laws() {
    const MlpSpec spec{4, {8}, 3, 11};
    const MlpLoss model(spec);
    Dataset train = gen_gaussian_blobs(3, 60, 4, 3.0, 5);
    Dataset test = gen_gaussian_blobs(3, 60, 4, 3.0, 6);
    const auto w0 = init_params(spec);
    DrmConfig cfg;
    cfg.iterations = 120;
    cfg.batch_size = 10;
    cfg.lr_schedule = {{60, 0.05}, {120, 0.01}};
    cfg.seed = 7;
    cfg.r = 5;
    cfg.epoch_eval_draws = 3;

    auto zero = cfg;
    zero.gamma = 0.0;
    zero.q = 4;
    zero.sampling = SampleWithProbability{0.3};
    const bool law1 = sgd_drm_run(model, w0, train, test, zero).trace.to_csv() ==
                      sgd_erm_run(model, w0, train, test, zero).trace.to_csv();

    auto simple = cfg;
    simple.gamma = 0.4;
    simple.q = 1;
    simple.sampling = SampleEveryK{1};
    const bool law2 = sgd_drm_run(model, w0, train, test, simple).trace.to_csv() ==
                      simple_sgd_drm_run(model, w0, train, test, simple).trace.to_csv();
    return {law1 && law2, std::string("gamma=0 vs ERM ") + (law1 ? "identical" : "differ") +
                              ", q=1 every-iteration vs simple " + (law2 ? "identical" : "differ")};
}

Outcome convexity() {
    const QuadraticLoss quad(1);
    Rng rng(8);
    std::uniform_real_distribution<double> u(-5.0, 5.0), ug(0.0, 2.0);
    double worst = -INFINITY;
    for (int trial = 0; trial < 1000; ++trial) {
        const auto s = linear_sample(1 + rng() % 10, rng);
        const double gamma = ug(rng), a = u(rng), b = u(rng);
        auto R = [&](double w) { return diametrical_risk_grid_1d(quad, w, gamma, s, 4097).value; };
        worst = std::max(worst, R(0.5 * (a + b)) - 0.5 * R(a) - 0.5 * R(b));
    }
    return {worst <= 1e-9, "max midpoint excess " + fmt("%.3g", worst)};
}

Outcome label_noise() {
    const auto t0 = Clock::now();
    const auto base = load_experiment_config(std::string(DRM_SOURCE_DIR) + "/configs/label_noise.json");
    bool ok = true;
    std::string detail;
    for (std::uint64_t seed : {1, 2, 3}) {
        const auto res = run_label_noise_experiment(with_seed(base, seed), false);
        const auto& e = res.erm_summary;
        const auto& d = res.drm_summary;
        const bool a = e.min_train_risk < 0.1 && e.peak_test_acc - e.final_test_acc >= 0.10;
        const bool b = d.final_test_acc > e.final_test_acc;
        const bool c = res.flatness.drm.gap < res.flatness.erm.gap;
        ok = ok && a && b && c;
        detail += "seed " + std::to_string(seed) + ": erm risk " + fmt("%.3f", e.min_train_risk) + " acc " +
                  fmt("%.3f", e.peak_test_acc) + "->" + fmt("%.3f", e.final_test_acc) + ", drm acc " +
                  fmt("%.3f", d.final_test_acc) + ", gaps " + fmt("%.3f", res.flatness.erm.gap) + "/" +
                  fmt("%.3f", res.flatness.drm.gap) + "; ";
    }
    const double secs = seconds_since(t0);
    ok = ok && secs < 900.0;
    return {ok, detail + fmt("%.1f", secs) + " s"};
}

Outcome sampled_soundness() {
    struct Fixture {
        std::shared_ptr<LossModel> model;
        std::vector<Sample> samples;
        double lo, hi;
    };
    Rng rng(9);
    std::vector<Fixture> fixtures;
    fixtures.push_back({std::make_shared<TentLoss>(2.0, 0.5), binary_sample(200, rng), -1.0, 1.0});
    fixtures.push_back({std::make_shared<ReciprocalLoss>(), binary_sample(200, rng), 0.05, 2.0});
    fixtures.push_back({std::make_shared<QuadraticLoss>(1), linear_sample(20, rng), -3.0, 3.0});
    fixtures.push_back({std::make_shared<ConstantLoss>(ParamVector::scalar(0.0), 0.7), binary_sample(5, rng), -1.0, 1.0});
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    std::size_t checks = 0, violations = 0, nest_violations = 0;
    for (const auto& fx : fixtures) {
        for (int i = 0; i < 100; ++i) {
            const double w = fx.lo + (fx.hi - fx.lo) * u01(rng);
            const double gamma = 0.5 * u01(rng);
            const double grid = diametrical_risk_grid_1d(*fx.model, w, gamma, fx.samples, 4097).value;
            const auto seed = rng();
            double prev = -INFINITY;
            for (std::size_t r : {1, 10, 100}) {
                Rng draws(seed);
                const double v = diametrical_risk_sampled(*fx.model, ParamVector::scalar(w), gamma,
                                                          NormKind::Euclidean, r, fx.samples, draws)
                                     .estimate.value;
                ++checks;
                violations += v > grid + 1e-12;
                nest_violations += v < prev;
                prev = v;
            }
        }
    }
    return {violations == 0 && nest_violations == 0,
            std::to_string(checks) + " estimates, " + std::to_string(violations) + " above grid, " +
                std::to_string(nest_violations) + " nesting violations"};
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
        {"tent example: DRM gap never positive, ERM gap often positive", tent_example},
        {"reciprocal example: ERM unbounded, DRM rate slope near -1/2", reciprocal_example},
        {"confidence region on the tent fixture", confidence_region},
        {"MLP gradient fidelity and nll at zero logits", mlp_gradients},
        {"reduction laws, bitwise trace equality", reduction_laws},
        {"midpoint convexity of the quadratic diametrical risk", convexity},
        {"label-noise experiment over three seeds", label_noise},
        {"sampled diametrical risk is sound and monotone in r", sampled_soundness},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failed += !o.pass;
        std::printf("%s criterion %zu: %s (%s)\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(),
                    o.detail.c_str());
        std::fflush(stdout);
    }
    return failed == 0 ? 0 : 1;
}
