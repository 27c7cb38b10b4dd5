#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "drm/losses.hpp"
#include "drm/param_vector.hpp"

namespace drm {

/// A reproducible family of sphere draws: direction i is
/// sample_sphere(template, gamma, kind, derive_rng(seed, {i})), so workers can
/// regenerate any draw independently and two histograms built from the same
/// set see exactly the same perturbations.
struct DirectionSet {
    std::uint64_t seed = 0;
    std::size_t count = 0;
    double gamma = 0.0;
    NormKind kind = NormKind::LayerwiseFrobenius;

    ParamVector direction(const ParamVector& tmpl, std::size_t i) const;
    std::uint64_t fingerprint() const;
};

struct Histogram {
    std::vector<double> values;  // draw order
    std::vector<double> edges;   // bins + 1 ascending edges
    std::vector<std::size_t> counts;
    double reference = 0.0;      // R_m at the center
    double gamma = 0.0;
    NormKind kind = NormKind::LayerwiseFrobenius;
    std::uint64_t direction_fingerprint = 0;

    double max_value() const;
    void write_csv(std::ostream& out) const;
};

/// Bins values into `bins` equal-width bins spanning [min, max]; the last bin
/// is closed. A degenerate range is widened to [v - 0.5, v + 0.5].
Histogram make_histogram(std::vector<double> values, double reference, std::size_t bins = 50);

/// R_m(w_center + u_i) for n_samples sphere draws. Without shared directions a
/// fresh set is seeded from rng.
Histogram landscape_histogram(const LossModel& model, const ParamVector& w_center, double gamma, NormKind kind,
                              std::size_t n_samples, std::span<const Sample> samples, Rng& rng,
                              const std::optional<DirectionSet>& shared = std::nullopt);

using Point = std::vector<double>;

/// exs(A; B) = sup_{a in A} inf_{b in B} ||a - b|| under the flattened
/// Euclidean or Sup norm. Infinity when A is nonempty and B empty, 0 when A
/// is empty.
double excess(std::span<const Point> a, std::span<const Point> b, NormKind kind = NormKind::Euclidean);

/// Same quantity for scalar point sets; both inputs sorted ascending.
double excess_sorted_1d(std::span<const double> a, std::span<const double> b);

struct Interval {
    double lo = 0.0;
    double hi = 0.0;
};

/// Uniform grid of spacing 1/resolution over [lo, hi] (both ends included),
/// merged with the given breakpoints that fall inside.
std::vector<double> interval_grid(const Interval& w, double resolution, std::span<const double> breakpoints = {});

enum class GapStatistic {
    Diametrical,       // max_w { R(w) - R_m^gamma(w) }
    UniformDeviation,  // max_w |R(w) - R_m(w)|
};

std::string to_string(GapStatistic s);

struct RateStudyConfig {
    Interval w;
    double gamma = 0.0;
    /// When set, gamma = gamma_times_m / m for each m (the gamma ~ 1/m mode).
    std::optional<double> gamma_times_m;
    std::vector<std::size_t> m_list;
    std::size_t trials = 200;
    double alpha = 0.05;
    double resolution = 4096.0;  // grid points per unit length
    GapStatistic statistic = GapStatistic::Diametrical;
    std::uint64_t seed = 0;
    double eps_floor = 1e-12;

    void validate() const;
};

struct RateRecord {
    std::size_t m = 0;
    std::size_t trials = 0;
    double gamma = 0.0;
    double q05 = 0.0, q50 = 0.0, q95 = 0.0;
    double q_level = 0.0;  // (1 - alpha) quantile
    std::size_t nonpositive = 0;
    std::vector<double> gaps;  // sorted
};

struct RateStudyResult {
    std::vector<RateRecord> records;
    double slope = std::numeric_limits<double>::quiet_NaN();  // log q vs log m
    std::size_t fitted_points = 0;
    bool all_nonpositive = false;
    double alpha = 0.05;
    double eps_floor = 1e-12;
    GapStatistic statistic = GapStatistic::Diametrical;

    void write_csv(std::ostream& out) const;
};

/// Type-1 empirical quantile of an ascending sample.
double empirical_quantile(std::span<const double> sorted, double p);

/// Least-squares slope of y on x.
double ls_slope(std::span<const double> x, std::span<const double> y);

/// The gap statistic for one sample of a scalar model with analytic R.
double gap_statistic(const LossModel& model, std::span<const Sample> samples, const RateStudyConfig& cfg,
                     double gamma);

RateStudyResult rate_study(const LossModel& model, const SampleDistribution& distribution, const RateStudyConfig& cfg);

/// (1 - alpha) quantile of max_W |R - R_m| over `trials` samples of size m:
/// an empirical stand-in for the slack beta m^{-1/2}.
double uniform_deviation_quantile(const LossModel& model, const SampleDistribution& distribution, const Interval& w,
                                  std::size_t m, std::size_t trials, double alpha, double resolution,
                                  std::uint64_t seed);

struct ConfidenceConfig {
    Interval w;
    double gamma = 0.0;
    double delta = 0.0;  // level of {w | R(w) <= delta}
    std::size_t m = 1000;
    std::size_t trials = 200;
    double resolution = 4096.0;
    std::vector<double> epsilons;
    std::uint64_t seed = 0;

    void validate() const;
};

struct ConfidenceRow {
    double epsilon = 0.0;
    double pass_rate = 0.0;
    std::size_t level_passes = 0;   // level-set excess <= gamma + cell
    std::size_t argmin_passes = 0;  // argmin-set excess <= gamma + cell
    std::size_t empty_level_sets = 0;
};

struct ConfidenceResult {
    std::vector<ConfidenceRow> rows;  // same order as the epsilons
    std::size_t trials = 0;
    double grid_cell = 0.0;
    bool true_level_set_empty = false;

    void write_csv(std::ostream& out) const;
};

/// Per epsilon, the fraction of trials in which both
///   exs({R <= delta}; {R_m <= delta + eps}) and
///   exs(argmin R; {R_m <= inf R_m^gamma + 2 eps})
/// are at most gamma plus one grid cell, with everything discretized on W.
ConfidenceResult confidence_region_check(const LossModel& model, const SampleDistribution& distribution,
                                         const ConfidenceConfig& cfg);

struct FlatnessSide {
    double reference = 0.0;
    double max_risk = 0.0;
    double gap = 0.0;  // max - reference
};

struct FlatnessReport {
    FlatnessSide erm;
    FlatnessSide drm;
    /// "drm", "erm", or "" when the gaps are equal.
    std::string flatter;
};

/// Throws std::invalid_argument when the histograms used different directions.
FlatnessReport flatness_report(const Histogram& hist_erm, const Histogram& hist_drm);

/// One trial of the scalar ERM-vs-DRM comparison on a grid over W.
struct ExampleTrial {
    long rho = 0;
    double erm_min = 0.0;    // min_W R_m
    double erm_gap = 0.0;    // R - R_m at the ERM grid minimizer
    double erm_bound = 0.0;  // max{0, -rho} kappa / m (tent only, else NaN)
    double drm_min = 0.0;    // min_W R_m^gamma
    double drm_gap = 0.0;    // R - R_m^gamma at the DRM grid minimizer
};

struct ExampleConfig {
    Interval w;
    double gamma = 0.5;
    std::size_t m = 1000;
    std::size_t trials = 200;
    double resolution = 4096.0;
    std::uint64_t seed = 0;
    /// Extra points added to the ERM grid (e.g. a geometric sequence toward
    /// a pole of the loss).
    std::vector<double> erm_extra_points;
};

std::vector<ExampleTrial> example_gap_study(const LossModel& model, const SampleDistribution& distribution,
                                            const ExampleConfig& cfg, std::optional<double> tent_kappa);

void write_example_csv(std::ostream& out, std::span<const ExampleTrial> trials);

}  // namespace drm
