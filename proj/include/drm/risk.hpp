#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "drm/dataset.hpp"
#include "drm/losses.hpp"
#include "drm/param_vector.hpp"

namespace drm {

enum class RiskMethod { Exact, Grid, Sampled };

/// Estimate of the diametrical risk sup_{||v|| <= gamma} R_m(w + v).
/// Sampled estimates never exceed the true supremum.
struct RiskEstimate {
    double value = 0.0;
    RiskMethod method = RiskMethod::Exact;
    std::size_t grid_points = 0;  // Grid
    std::size_t draws = 0;        // Sampled
    double gamma = 0.0;
};

/// R_m(w): mean loss in index order. Throws on an empty sample.
double empirical_risk(const LossModel& model, const ParamVector& w, std::span<const Sample> samples);
/// Same quantity from a compressed sample.
double empirical_risk(const LossModel& model, const ParamVector& w, const WeightedSamples& samples);

struct MonteCarloSpec {
    std::size_t n = 0;
    SampleDistribution distribution;
    std::uint64_t seed = 0;
};

struct TrueRisk {
    double value = 0.0;
    double std_error = 0.0;  // zero for analytic values
    bool analytic = false;
};

/// Analytic R(w) when the model has one, else a Monte-Carlo mean.
TrueRisk true_risk(const LossModel& model, const ParamVector& w, const std::optional<MonteCarloSpec>& mc = std::nullopt);
TrueRisk true_risk_monte_carlo(const LossModel& model, const ParamVector& w, std::size_t n,
                               const SampleDistribution& distribution, Rng& rng);

/// R as a function of a scalar parameter.
using ScalarRisk = std::function<double(double)>;

/// Scalar empirical risk w -> R_m(w) over a compressed sample.
ScalarRisk scalar_empirical_risk(const LossModel& model, const WeightedSamples& samples);

/// max of f over a uniform grid of grid_points on [lo, hi], plus any
/// breakpoints inside [lo, hi]. Exact for piecewise-linear f.
double grid_max_1d(const ScalarRisk& f, double lo, double hi, std::size_t grid_points,
                   std::span<const double> breakpoints);

RiskEstimate diametrical_risk_grid_1d(const LossModel& model, double w, double gamma,
                                      std::span<const Sample> samples, std::size_t grid_points);

/// R_m^gamma at every point of an ascending w grid. The candidate set is a
/// uniform grid of spacing 1/resolution over [front - gamma, back + gamma],
/// the breakpoints, and every window endpoint w_i +- gamma; each window max
/// comes from one sliding-window pass.
std::vector<double> diametrical_profile_1d(const ScalarRisk& f, std::span<const double> w_grid, double gamma,
                                           double resolution, std::span<const double> breakpoints);

struct SampledRisk {
    RiskEstimate estimate;
    std::size_t argmax_index = 0;
    ParamVector argmax_perturbation;
    std::vector<double> draw_values;  // R_m(w + u_i) per draw, draw order
};

/// max over r sphere draws (norm exactly gamma) of R_m(w + u). The draws are
/// taken from rng in order, so the first r draws of a longer run coincide.
SampledRisk diametrical_risk_sampled(const LossModel& model, const ParamVector& w, double gamma, NormKind kind,
                                     std::size_t r, std::span<const Sample> samples, Rng& rng);

}  // namespace drm
