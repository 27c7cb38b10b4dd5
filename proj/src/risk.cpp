#include "drm/risk.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <stdexcept>

namespace drm {

double empirical_risk(const LossModel& model, const ParamVector& w, std::span<const Sample> samples) {
    if (samples.empty()) throw std::invalid_argument("empirical_risk: empty sample");
    return model.batch_risk(w, samples);
}

double empirical_risk(const LossModel& model, const ParamVector& w, const WeightedSamples& samples) {
    if (samples.total == 0) throw std::invalid_argument("empirical_risk: empty sample");
    double sum = 0.0;
    for (std::size_t k = 0; k < samples.distinct.size(); ++k) {
        sum += static_cast<double>(samples.counts[k]) * model.eval(w, samples.distinct[k]);
    }
    return sum / static_cast<double>(samples.total);
}

TrueRisk true_risk_monte_carlo(const LossModel& model, const ParamVector& w, std::size_t n,
                               const SampleDistribution& distribution, Rng& rng) {
    if (n < 2) throw std::invalid_argument("true_risk_monte_carlo: need at least two draws");
    if (!distribution) throw std::invalid_argument("true_risk_monte_carlo: no sampling distribution");
    // Welford running mean / variance
    double mean = 0.0, m2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double x = model.eval(w, distribution(rng));
        const double delta = x - mean;
        mean += delta / static_cast<double>(i + 1);
        m2 += delta * (x - mean);
    }
    const double var = m2 / static_cast<double>(n - 1);
    return {mean, std::sqrt(var / static_cast<double>(n)), false};
}

TrueRisk true_risk(const LossModel& model, const ParamVector& w, const std::optional<MonteCarloSpec>& mc) {
    if (auto exact = model.true_risk(w)) return {*exact, 0.0, true};
    if (!mc) throw std::invalid_argument("true_risk: model has no analytic risk and no Monte-Carlo settings were given");
    Rng rng = derive_rng(mc->seed, {0x7275});
    return true_risk_monte_carlo(model, w, mc->n, mc->distribution, rng);
}

ScalarRisk scalar_empirical_risk(const LossModel& model, const WeightedSamples& samples) {
    if (model.param_template().size() != 1) throw std::invalid_argument("scalar_empirical_risk: model is not scalar");
    if (samples.total == 0) throw std::invalid_argument("scalar_empirical_risk: empty sample");
    return [&model, &samples, w = model.param_template()](double x) mutable {
        w.layer(0).values[0] = x;
        return empirical_risk(model, w, samples);
    };
}

double grid_max_1d(const ScalarRisk& f, double lo, double hi, std::size_t grid_points,
                   std::span<const double> breakpoints) {
    if (grid_points < 3) throw std::invalid_argument("grid_max_1d: need at least 3 grid points");
    if (!(lo <= hi)) throw std::invalid_argument("grid_max_1d: lo > hi");
    double best = f(lo);
    const double step = (hi - lo) / static_cast<double>(grid_points - 1);
    for (std::size_t j = 1; j + 1 < grid_points; ++j) best = std::max(best, f(lo + step * static_cast<double>(j)));
    best = std::max(best, f(hi));
    for (double b : breakpoints) {
        if (b >= lo && b <= hi) best = std::max(best, f(b));
    }
    return best;
}

RiskEstimate diametrical_risk_grid_1d(const LossModel& model, double w, double gamma,
                                      std::span<const Sample> samples, std::size_t grid_points) {
    if (!(gamma >= 0.0)) throw std::invalid_argument("diametrical_risk_grid_1d: gamma must be >= 0");
    if (samples.empty()) throw std::invalid_argument("diametrical_risk_grid_1d: empty sample");
    if (model.param_template().size() != 1) throw std::invalid_argument("diametrical_risk_grid_1d: model is not scalar");
    ParamVector point = model.param_template();
    auto f = [&](double x) {
        point.layer(0).values[0] = x;
        return empirical_risk(model, point, samples);
    };
    RiskEstimate est;
    est.method = RiskMethod::Grid;
    est.grid_points = grid_points;
    est.gamma = gamma;
    if (gamma == 0.0) {
        if (grid_points < 3) throw std::invalid_argument("diametrical_risk_grid_1d: need at least 3 grid points");
        est.value = f(w);
        return est;
    }
    const auto bps = model.breakpoints();
    est.value = grid_max_1d(f, w - gamma, w + gamma, grid_points, bps);
    return est;
}

std::vector<double> diametrical_profile_1d(const ScalarRisk& f, std::span<const double> w_grid, double gamma,
                                           double resolution, std::span<const double> breakpoints) {
    if (!(gamma >= 0.0)) throw std::invalid_argument("diametrical_profile_1d: gamma must be >= 0");
    if (!(resolution > 0.0)) throw std::invalid_argument("diametrical_profile_1d: resolution must be > 0");
    if (w_grid.empty()) return {};
    if (!std::is_sorted(w_grid.begin(), w_grid.end())) throw std::invalid_argument("diametrical_profile_1d: grid not ascending");

    const double lo = w_grid.front() - gamma;
    const double hi = w_grid.back() + gamma;
    std::vector<double> xs;
    const double h = 1.0 / resolution;
    const auto steps = static_cast<std::size_t>(std::ceil((hi - lo) / h));
    xs.reserve(steps + 2 * w_grid.size() + breakpoints.size() + 1);
    for (std::size_t j = 0; j <= steps; ++j) {
        const double x = lo + h * static_cast<double>(j);
        if (x <= hi) xs.push_back(x);
    }
    for (double w : w_grid) {
        xs.push_back(w - gamma);
        xs.push_back(w + gamma);
    }
    for (double b : breakpoints) {
        if (b >= lo && b <= hi) xs.push_back(b);
    }
    std::sort(xs.begin(), xs.end());
    xs.erase(std::unique(xs.begin(), xs.end()), xs.end());

    std::vector<double> vals(xs.size());
    for (std::size_t k = 0; k < xs.size(); ++k) vals[k] = f(xs[k]);

    std::vector<double> out(w_grid.size());
    std::deque<std::size_t> window;  // indices with decreasing values
    std::size_t right = 0;
    for (std::size_t i = 0; i < w_grid.size(); ++i) {
        const double a = w_grid[i] - gamma;
        const double b = w_grid[i] + gamma;
        while (right < xs.size() && xs[right] <= b) {
            while (!window.empty() && vals[window.back()] <= vals[right]) window.pop_back();
            window.push_back(right);
            ++right;
        }
        while (!window.empty() && xs[window.front()] < a) window.pop_front();
        if (window.empty()) throw std::logic_error("diametrical_profile_1d: empty window");
        out[i] = vals[window.front()];
    }
    return out;
}

SampledRisk diametrical_risk_sampled(const LossModel& model, const ParamVector& w, double gamma, NormKind kind,
                                     std::size_t r, std::span<const Sample> samples, Rng& rng) {
    if (r < 1) throw std::invalid_argument("diametrical_risk_sampled: r must be >= 1");
    if (samples.empty()) throw std::invalid_argument("diametrical_risk_sampled: empty sample");
    std::vector<ParamVector> directions;
    directions.reserve(r);
    for (std::size_t i = 0; i < r; ++i) directions.push_back(sample_sphere(w, gamma, kind, rng));

    std::vector<double> values(r);
    parallel_for(r, [&](std::size_t i) { values[i] = model.batch_risk(w + directions[i], samples); });

    std::size_t best = 0;
    for (std::size_t i = 1; i < r; ++i) {
        if (values[i] > values[best]) best = i;
    }
    SampledRisk out;
    out.estimate.value = values[best];
    out.estimate.method = RiskMethod::Sampled;
    out.estimate.draws = r;
    out.estimate.gamma = gamma;
    out.argmax_index = best;
    out.argmax_perturbation = std::move(directions[best]);
    out.draw_values = std::move(values);
    return out;
}

}  // namespace drm
