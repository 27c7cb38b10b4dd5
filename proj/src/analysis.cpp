#include "drm/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "drm/dataset.hpp"
#include "drm/risk.hpp"

namespace drm {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::vector<Sample> draw_samples(const SampleDistribution& dist, std::size_t m, Rng& rng) {
    std::vector<Sample> out;
    out.reserve(m);
    for (std::size_t i = 0; i < m; ++i) out.push_back(dist(rng));
    return out;
}

void check_interval(const Interval& w, const char* who) {
    if (!(w.lo <= w.hi) || !std::isfinite(w.lo) || !std::isfinite(w.hi)) {
        throw ConfigError(std::string(who) + ": W must be a finite interval with lo <= hi");
    }
}

/// Analytic R on the grid; throws when the model has none.
std::vector<double> true_risk_on(const LossModel& model, std::span<const double> grid) {
    if (model.param_template().size() != 1) throw std::invalid_argument("analysis: model is not scalar");
    ParamVector w = model.param_template();
    std::vector<double> out(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) {
        w.layer(0).values[0] = grid[i];
        const auto r = model.true_risk(w);
        if (!r) throw std::invalid_argument("analysis: model has no analytic true risk");
        out[i] = *r;
    }
    return out;
}

std::vector<double> eval_on(const ScalarRisk& f, std::span<const double> grid) {
    std::vector<double> out(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) out[i] = f(grid[i]);
    return out;
}

std::size_t argmin_lowest(std::span<const double> v) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < v.size(); ++i) {
        if (v[i] < v[best]) best = i;
    }
    return best;
}

std::vector<double> select_le(std::span<const double> grid, std::span<const double> values, double level) {
    std::vector<double> out;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        if (values[i] <= level) out.push_back(grid[i]);
    }
    return out;
}

}  // namespace

ParamVector DirectionSet::direction(const ParamVector& tmpl, std::size_t i) const {
    Rng rng = derive_rng(seed, {static_cast<std::uint64_t>(i)});
    return sample_sphere(tmpl, gamma, kind, rng);
}

std::uint64_t DirectionSet::fingerprint() const {
    Fnv1a h;
    h.add(seed);
    h.add(static_cast<std::uint64_t>(count));
    h.add(gamma);
    h.add(to_string(kind));
    return h.value();
}

double Histogram::max_value() const {
    if (values.empty()) throw std::invalid_argument("histogram is empty");
    return *std::max_element(values.begin(), values.end());
}

void Histogram::write_csv(std::ostream& out) const {
    out << "# reference," << format_double(reference) << '\n';
    out << "# gamma," << format_double(gamma) << '\n';
    out << "# norm," << to_string(kind) << '\n';
    out << "# n," << values.size() << '\n';
    out << "# directions," << direction_fingerprint << '\n';
    out << "# edges";
    for (double e : edges) out << ',' << format_double(e);
    out << '\n' << "# counts";
    for (auto c : counts) out << ',' << c;
    out << '\n' << "value\n";
    for (double v : values) out << format_double(v) << '\n';
}

Histogram make_histogram(std::vector<double> values, double reference, std::size_t bins) {
    if (bins < 1) throw std::invalid_argument("make_histogram: bins must be >= 1");
    Histogram h;
    h.reference = reference;
    h.counts.assign(bins, 0);
    if (values.empty()) {
        h.edges.assign(bins + 1, reference);
        return h;
    }
    double lo = *std::min_element(values.begin(), values.end());
    double hi = *std::max_element(values.begin(), values.end());
    if (!(lo < hi)) {
        lo -= 0.5;
        hi += 0.5;
    }
    const double width = (hi - lo) / static_cast<double>(bins);
    h.edges.resize(bins + 1);
    for (std::size_t b = 0; b <= bins; ++b) h.edges[b] = lo + width * static_cast<double>(b);
    h.edges.back() = hi;
    for (double v : values) {
        // the upper_bound locates the bin; the last bin is closed on the right
        auto it = std::upper_bound(h.edges.begin(), h.edges.end(), v);
        std::size_t b = static_cast<std::size_t>(it - h.edges.begin());
        b = b == 0 ? 0 : b - 1;
        if (b >= bins) b = bins - 1;
        ++h.counts[b];
    }
    h.values = std::move(values);
    return h;
}

Histogram landscape_histogram(const LossModel& model, const ParamVector& w_center, double gamma, NormKind kind,
                              std::size_t n_samples, std::span<const Sample> samples, Rng& rng,
                              const std::optional<DirectionSet>& shared) {
    if (n_samples < 1) throw std::invalid_argument("landscape_histogram: n_samples must be >= 1");
    DirectionSet dirs;
    if (shared) {
        if (shared->count != n_samples || shared->gamma != gamma || shared->kind != kind) {
            throw std::invalid_argument("landscape_histogram: shared directions do not match the request");
        }
        dirs = *shared;
    } else {
        dirs = DirectionSet{rng(), n_samples, gamma, kind};
    }
    std::vector<double> values(n_samples);
    parallel_for(n_samples,
                 [&](std::size_t i) { values[i] = model.batch_risk(w_center + dirs.direction(w_center, i), samples); });
    Histogram h = make_histogram(std::move(values), empirical_risk(model, w_center, samples));
    h.gamma = gamma;
    h.kind = kind;
    h.direction_fingerprint = dirs.fingerprint();
    return h;
}

double excess(std::span<const Point> a, std::span<const Point> b, NormKind kind) {
    if (kind == NormKind::LayerwiseFrobenius) throw std::invalid_argument("excess: point sets have no layers");
    if (a.empty()) return 0.0;
    if (b.empty()) return kInf;
    double sup = 0.0;
    for (const auto& x : a) {
        double inf = kInf;
        for (const auto& y : b) {
            if (x.size() != y.size()) throw std::invalid_argument("excess: dimension mismatch");
            double d = 0.0;
            for (std::size_t k = 0; k < x.size(); ++k) {
                const double diff = std::abs(x[k] - y[k]);
                d = kind == NormKind::Sup ? std::max(d, diff) : d + diff * diff;
            }
            if (kind == NormKind::Euclidean) d = std::sqrt(d);
            inf = std::min(inf, d);
        }
        sup = std::max(sup, inf);
    }
    return sup;
}

double excess_sorted_1d(std::span<const double> a, std::span<const double> b) {
    if (a.empty()) return 0.0;
    if (b.empty()) return kInf;
    double sup = 0.0;
    for (double x : a) {
        auto it = std::lower_bound(b.begin(), b.end(), x);
        double d = kInf;
        if (it != b.end()) d = *it - x;
        if (it != b.begin()) d = std::min(d, x - *(it - 1));
        sup = std::max(sup, d);
    }
    return sup;
}

std::vector<double> interval_grid(const Interval& w, double resolution, std::span<const double> breakpoints) {
    check_interval(w, "interval_grid");
    if (!(resolution > 0.0)) throw ConfigError("interval_grid: resolution must be > 0");
    const double h = 1.0 / resolution;
    const auto steps = static_cast<std::size_t>(std::ceil((w.hi - w.lo) * resolution));
    std::vector<double> out;
    out.reserve(steps + 2 + breakpoints.size());
    for (std::size_t j = 0; j <= steps; ++j) {
        const double x = w.lo + h * static_cast<double>(j);
        if (x < w.hi) out.push_back(x);
    }
    out.push_back(w.hi);
    for (double b : breakpoints) {
        if (b >= w.lo && b <= w.hi) out.push_back(b);
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

std::string to_string(GapStatistic s) {
    return s == GapStatistic::Diametrical ? "diametrical" : "uniform_deviation";
}

void RateStudyConfig::validate() const {
    check_interval(w, "rate_study");
    if (!(gamma >= 0.0)) throw ConfigError("rate_study: gamma must be >= 0");
    if (gamma_times_m && !(*gamma_times_m > 0.0)) throw ConfigError("rate_study: gamma_times_m must be > 0");
    if (m_list.empty()) throw ConfigError("rate_study: m list is empty");
    for (std::size_t i = 0; i < m_list.size(); ++i) {
        if (m_list[i] < 1) throw ConfigError("rate_study: m must be >= 1");
        if (i > 0 && m_list[i] <= m_list[i - 1]) throw ConfigError("rate_study: m values must be strictly increasing");
    }
    if (trials < 30) throw ConfigError("rate_study: at least 30 trials are required");
    if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("rate_study: alpha must lie in (0, 1)");
    if (!(resolution > 0.0)) throw ConfigError("rate_study: resolution must be > 0");
    if (!(eps_floor > 0.0)) throw ConfigError("rate_study: eps_floor must be > 0");
}

void RateStudyResult::write_csv(std::ostream& out) const {
    out << "# statistic," << to_string(statistic) << '\n';
    out << "# alpha," << format_double(alpha) << '\n';
    out << "# eps_floor," << format_double(eps_floor) << '\n';
    out << "# fitted_points," << fitted_points << '\n';
    out << "# all_nonpositive," << (all_nonpositive ? 1 : 0) << '\n';
    out << "# beta is the fitted quantile coefficient; its log(alpha) dependence is not separable here\n";
    out << "m,trials,q05,q50,q95,slope\n";
    for (const auto& r : records) {
        out << r.m << ',' << r.trials << ',' << format_double(r.q05) << ',' << format_double(r.q50) << ','
            << format_double(r.q95) << ',' << format_double(slope) << '\n';
    }
}

double empirical_quantile(std::span<const double> sorted, double p) {
    if (sorted.empty()) throw std::invalid_argument("empirical_quantile: empty sample");
    if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("empirical_quantile: p outside [0, 1]");
    const double n = static_cast<double>(sorted.size());
    auto k = static_cast<std::size_t>(std::ceil(p * n));
    if (k > 0) --k;
    return sorted[std::min(k, sorted.size() - 1)];
}

double ls_slope(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("ls_slope: need two or more paired points");
    const double n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
    }
    if (sxx == 0.0) throw std::invalid_argument("ls_slope: x values are all equal");
    return sxy / sxx;
}

double gap_statistic(const LossModel& model, std::span<const Sample> samples, const RateStudyConfig& cfg,
                     double gamma) {
    const auto bps = model.breakpoints();
    const auto grid = interval_grid(cfg.w, cfg.resolution, bps);
    const auto truth = true_risk_on(model, grid);
    const auto weighted = compress(samples);
    const auto f = scalar_empirical_risk(model, weighted);
    double gap = -kInf;
    if (cfg.statistic == GapStatistic::Diametrical) {
        const auto prof = diametrical_profile_1d(f, grid, gamma, cfg.resolution, bps);
        for (std::size_t i = 0; i < grid.size(); ++i) gap = std::max(gap, truth[i] - prof[i]);
    } else {
        for (std::size_t i = 0; i < grid.size(); ++i) gap = std::max(gap, std::abs(truth[i] - f(grid[i])));
    }
    return gap;
}

RateStudyResult rate_study(const LossModel& model, const SampleDistribution& distribution,
                           const RateStudyConfig& cfg) {
    cfg.validate();
    if (!distribution) throw std::invalid_argument("rate_study: no sampling distribution");
    RateStudyResult out;
    out.alpha = cfg.alpha;
    out.eps_floor = cfg.eps_floor;
    out.statistic = cfg.statistic;

    for (std::size_t m : cfg.m_list) {
        const double gamma = cfg.gamma_times_m ? *cfg.gamma_times_m / static_cast<double>(m) : cfg.gamma;
        std::vector<double> gaps(cfg.trials);
        parallel_for(cfg.trials, [&](std::size_t trial) {
            Rng rng = derive_rng(cfg.seed, {static_cast<std::uint64_t>(m), static_cast<std::uint64_t>(trial)});
            const auto samples = draw_samples(distribution, m, rng);
            gaps[trial] = gap_statistic(model, samples, cfg, gamma);
        });
        std::sort(gaps.begin(), gaps.end());
        RateRecord rec;
        rec.m = m;
        rec.trials = cfg.trials;
        rec.gamma = gamma;
        rec.q05 = empirical_quantile(gaps, 0.05);
        rec.q50 = empirical_quantile(gaps, 0.50);
        rec.q95 = empirical_quantile(gaps, 0.95);
        rec.q_level = empirical_quantile(gaps, 1.0 - cfg.alpha);
        rec.nonpositive = static_cast<std::size_t>(std::count_if(gaps.begin(), gaps.end(), [](double g) { return g <= 0.0; }));
        rec.gaps = std::move(gaps);
        out.records.push_back(std::move(rec));
    }

    std::vector<double> lx, ly;
    for (const auto& r : out.records) {
        if (r.q_level > 0.0) {
            lx.push_back(std::log(static_cast<double>(r.m)));
            ly.push_back(std::log(std::max(r.q_level, cfg.eps_floor)));
        }
    }
    out.fitted_points = lx.size();
    out.all_nonpositive = lx.empty();
    if (lx.size() >= 2) out.slope = ls_slope(lx, ly);
    return out;
}

double uniform_deviation_quantile(const LossModel& model, const SampleDistribution& distribution, const Interval& w,
                                  std::size_t m, std::size_t trials, double alpha, double resolution,
                                  std::uint64_t seed) {
    RateStudyConfig cfg;
    cfg.w = w;
    cfg.m_list = {m};
    cfg.trials = trials;
    cfg.alpha = alpha;
    cfg.resolution = resolution;
    cfg.statistic = GapStatistic::UniformDeviation;
    cfg.seed = seed;
    return rate_study(model, distribution, cfg).records.front().q_level;
}

void ConfidenceConfig::validate() const {
    check_interval(w, "confidence_region_check");
    if (!(gamma > 0.0)) throw ConfigError("confidence_region_check: gamma must be > 0");
    if (m < 1) throw ConfigError("confidence_region_check: m must be >= 1");
    if (trials < 30) throw ConfigError("confidence_region_check: at least 30 trials are required");
    if (!(resolution > 0.0)) throw ConfigError("confidence_region_check: resolution must be > 0");
    if (epsilons.empty()) throw ConfigError("confidence_region_check: no epsilon values");
    for (double e : epsilons) {
        if (!(e >= 0.0)) throw ConfigError("confidence_region_check: epsilon must be >= 0");
    }
}

void ConfidenceResult::write_csv(std::ostream& out) const {
    out << "# trials," << trials << '\n';
    out << "# grid_cell," << format_double(grid_cell) << '\n';
    out << "# true_level_set_empty," << (true_level_set_empty ? 1 : 0) << '\n';
    out << "epsilon,pass_rate\n";
    for (const auto& r : rows) out << format_double(r.epsilon) << ',' << format_double(r.pass_rate) << '\n';
}

ConfidenceResult confidence_region_check(const LossModel& model, const SampleDistribution& distribution,
                                         const ConfidenceConfig& cfg) {
    cfg.validate();
    if (!distribution) throw std::invalid_argument("confidence_region_check: no sampling distribution");
    const auto bps = model.breakpoints();
    const auto grid = interval_grid(cfg.w, cfg.resolution, bps);
    const auto truth = true_risk_on(model, grid);
    const auto level_set = select_le(grid, truth, cfg.delta);
    const double min_truth = *std::min_element(truth.begin(), truth.end());
    const auto argmin_set = select_le(grid, truth, min_truth);

    const std::size_t ne = cfg.epsilons.size();
    // per trial and epsilon: bit 0 level test, bit 1 argmin test, bit 2 empty right-hand set
    std::vector<unsigned char> outcome(cfg.trials * ne, 0);
    const double slack = cfg.gamma + 1.0 / cfg.resolution;

    parallel_for(cfg.trials, [&](std::size_t trial) {
        Rng rng = derive_rng(cfg.seed, {static_cast<std::uint64_t>(cfg.m), static_cast<std::uint64_t>(trial)});
        const auto samples = draw_samples(distribution, cfg.m, rng);
        const auto weighted = compress(samples);
        const auto f = scalar_empirical_risk(model, weighted);
        const auto rm = eval_on(f, grid);
        const auto prof = diametrical_profile_1d(f, grid, cfg.gamma, cfg.resolution, bps);
        const double inf_diam = *std::min_element(prof.begin(), prof.end());
        for (std::size_t k = 0; k < ne; ++k) {
            const double eps = cfg.epsilons[k];
            const auto b1 = select_le(grid, rm, cfg.delta + eps);
            const auto b2 = select_le(grid, rm, inf_diam + 2.0 * eps);
            unsigned char bits = 0;
            if (excess_sorted_1d(level_set, b1) <= slack) bits |= 1;
            if (excess_sorted_1d(argmin_set, b2) <= slack) bits |= 2;
            if ((!level_set.empty() && b1.empty()) || b2.empty()) bits |= 4;
            outcome[trial * ne + k] = bits;
        }
    });

    ConfidenceResult out;
    out.trials = cfg.trials;
    out.grid_cell = 1.0 / cfg.resolution;
    out.true_level_set_empty = level_set.empty();
    for (std::size_t k = 0; k < ne; ++k) {
        ConfidenceRow row;
        row.epsilon = cfg.epsilons[k];
        std::size_t both = 0;
        for (std::size_t t = 0; t < cfg.trials; ++t) {
            const auto bits = outcome[t * ne + k];
            row.level_passes += bits & 1 ? 1 : 0;
            row.argmin_passes += bits & 2 ? 1 : 0;
            row.empty_level_sets += bits & 4 ? 1 : 0;
            both += (bits & 3) == 3 ? 1 : 0;
        }
        row.pass_rate = static_cast<double>(both) / static_cast<double>(cfg.trials);
        out.rows.push_back(row);
    }
    return out;
}

FlatnessReport flatness_report(const Histogram& hist_erm, const Histogram& hist_drm) {
    if (hist_erm.direction_fingerprint != hist_drm.direction_fingerprint ||
        hist_erm.values.size() != hist_drm.values.size()) {
        throw std::invalid_argument("flatness_report: histograms were built from different directions");
    }
    auto side = [](const Histogram& h) {
        FlatnessSide s;
        s.reference = h.reference;
        s.max_risk = h.max_value();
        s.gap = s.max_risk - s.reference;
        return s;
    };
    FlatnessReport r{side(hist_erm), side(hist_drm), ""};
    if (r.drm.gap < r.erm.gap) r.flatter = "drm";
    else if (r.erm.gap < r.drm.gap) r.flatter = "erm";
    return r;
}

std::vector<ExampleTrial> example_gap_study(const LossModel& model, const SampleDistribution& distribution,
                                            const ExampleConfig& cfg, std::optional<double> tent_kappa) {
    check_interval(cfg.w, "example_gap_study");
    if (!(cfg.gamma >= 0.0)) throw ConfigError("example_gap_study: gamma must be >= 0");
    if (cfg.m < 1 || cfg.trials < 1) throw ConfigError("example_gap_study: m and trials must be >= 1");
    if (!distribution) throw std::invalid_argument("example_gap_study: no sampling distribution");
    const auto bps = model.breakpoints();
    const auto grid = interval_grid(cfg.w, cfg.resolution, bps);
    auto erm_grid = grid;
    erm_grid.insert(erm_grid.end(), cfg.erm_extra_points.begin(), cfg.erm_extra_points.end());
    std::sort(erm_grid.begin(), erm_grid.end());
    erm_grid.erase(std::unique(erm_grid.begin(), erm_grid.end()), erm_grid.end());
    const auto truth = true_risk_on(model, grid);
    const auto erm_truth = true_risk_on(model, erm_grid);

    std::vector<ExampleTrial> out(cfg.trials);
    parallel_for(cfg.trials, [&](std::size_t trial) {
        Rng rng = derive_rng(cfg.seed, {static_cast<std::uint64_t>(cfg.m), static_cast<std::uint64_t>(trial)});
        const auto samples = draw_samples(distribution, cfg.m, rng);
        const auto weighted = compress(samples);
        const auto f = scalar_empirical_risk(model, weighted);
        ExampleTrial t;
        t.rho = rho_m(std::span<const Sample>(samples));
        const auto rm = eval_on(f, erm_grid);
        const auto ie = argmin_lowest(rm);
        t.erm_min = rm[ie];
        t.erm_gap = erm_truth[ie] - rm[ie];
        t.erm_bound = tent_kappa ? static_cast<double>(std::max(0L, -t.rho)) * *tent_kappa / static_cast<double>(cfg.m)
                                 : std::numeric_limits<double>::quiet_NaN();
        const auto prof = diametrical_profile_1d(f, grid, cfg.gamma, cfg.resolution, bps);
        const auto id = argmin_lowest(prof);
        t.drm_min = prof[id];
        t.drm_gap = truth[id] - prof[id];
        out[trial] = t;
    });
    return out;
}

void write_example_csv(std::ostream& out, std::span<const ExampleTrial> trials) {
    out << "trial,rho,erm_min,erm_gap,erm_bound,drm_min,drm_gap\n";
    for (std::size_t i = 0; i < trials.size(); ++i) {
        const auto& t = trials[i];
        out << i << ',' << t.rho << ',' << format_double(t.erm_min) << ',' << format_double(t.erm_gap) << ','
            << format_double(t.erm_bound) << ',' << format_double(t.drm_min) << ',' << format_double(t.drm_gap)
            << '\n';
    }
}

}  // namespace drm
