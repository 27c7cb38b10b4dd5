#include "drm/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "drm/risk.hpp"

namespace drm {

namespace {

constexpr std::uint64_t kBatchStream = 0x6261746368;
constexpr std::uint64_t kPerturbStream = 0x7065727475;
constexpr std::uint64_t kCoinStream = 0x636f696e;
constexpr std::uint64_t kEvalStream = 0x6576616c;

class BatchFeed {
public:
    BatchFeed(const Dataset& data, std::size_t batch_size, std::uint64_t seed)
        : data_(data), batch_size_(batch_size), seed_(seed), per_epoch_(batches_per_epoch(data.size(), batch_size)) {}

    std::span<const Sample> batch(std::size_t t) {
        const std::size_t e = epoch(t);
        if (!loaded_ || e != loaded_epoch_) {
            batches_ = make_batches(data_.size(), batch_size_, seed_, e);
            loaded_ = true;
            loaded_epoch_ = e;
        }
        const auto& idx = batches_[t % per_epoch_];
        hash_.add(static_cast<std::uint64_t>(idx.size()));
        for (auto i : idx) hash_.add(static_cast<std::uint64_t>(i));
        current_ = data_.gather(idx);
        return current_;
    }

    std::size_t epoch(std::size_t t) const { return t / per_epoch_; }
    bool epoch_ends(std::size_t t, std::size_t total) const { return (t + 1) % per_epoch_ == 0 || t + 1 == total; }
    std::uint64_t fingerprint() const { return hash_.value(); }

private:
    const Dataset& data_;
    std::size_t batch_size_;
    std::uint64_t seed_;
    std::size_t per_epoch_;
    bool loaded_ = false;
    std::size_t loaded_epoch_ = 0;
    std::vector<std::vector<std::size_t>> batches_;
    std::vector<Sample> current_;
    Fnv1a hash_;
};

void check_run_inputs(const LossModel& model, const ParamVector& w0, const Dataset& data, const DrmConfig& cfg) {
    cfg.validate();
    if (data.empty()) throw std::invalid_argument("training data is empty");
    require_same_structure(w0, model.param_template(), "initial parameters");
    if (!contains(cfg.feasible, w0)) throw std::invalid_argument("initial parameters lie outside the feasible set");
}

void fill_epoch_metrics(IterationRecord& rec, const LossModel& model, const ParamVector& w, const Dataset& data,
                        const Dataset& test, const DrmConfig& cfg) {
    rec.train_risk = empirical_risk(model, w, data.view());
    if (!test.empty() && model.predict(w, test.samples.front())) {
        rec.test_acc = classification_accuracy(model, w, test.view());
    }
    if (cfg.epoch_eval_draws > 0) {
        Rng rng = derive_rng(cfg.seed, {kEvalStream, rec.epoch});
        rec.diam_risk_est =
            diametrical_risk_sampled(model, w, cfg.gamma, cfg.norm_kind, cfg.epoch_eval_draws, data.view(), rng)
                .estimate.value;
    }
}

std::vector<ParamVector> draw_perturbations(const ParamVector& w, const DrmConfig& cfg, Rng& rng) {
    std::vector<ParamVector> u;
    u.reserve(cfg.r);
    for (std::size_t i = 0; i < cfg.r; ++i) u.push_back(sample_sphere(w, cfg.gamma, cfg.norm_kind, rng));
    return u;
}

}  // namespace

void DrmConfig::validate() const {
    if (!(gamma >= 0.0) || !std::isfinite(gamma)) throw ConfigError("gamma must be finite and >= 0");
    if (r < 1) throw ConfigError("r must be >= 1");
    if (q < 1) throw ConfigError("q must be >= 1");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (const auto* every = std::get_if<SampleEveryK>(&sampling)) {
        if (every->k < 1) throw ConfigError("sampling every_k must be >= 1");
    } else {
        const double p = std::get<SampleWithProbability>(sampling).p;
        if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("sampling probability must lie in [0, 1]");
    }
    if (lr_schedule.empty()) throw ConfigError("learning-rate schedule is empty");
    std::size_t prev = 0;
    for (std::size_t i = 0; i < lr_schedule.size(); ++i) {
        const auto& seg = lr_schedule[i];
        if (!(seg.rate > 0.0) || !std::isfinite(seg.rate)) throw ConfigError("learning rates must be finite and > 0");
        if (i > 0 && seg.until <= prev) throw ConfigError("learning-rate segments must have increasing 'until'");
        prev = seg.until;
    }
    if (lr_schedule.back().until < iterations) throw ConfigError("learning-rate schedule does not cover all iterations");
    drm::validate(feasible);
}

double DrmConfig::learning_rate(std::size_t t) const {
    for (const auto& seg : lr_schedule) {
        if (t < seg.until) return seg.rate;
    }
    return lr_schedule.back().rate;
}

bool DrmConfig::sampling_due(std::size_t t, Rng& coin) const {
    if (const auto* every = std::get_if<SampleEveryK>(&sampling)) return t % every->k == 0;
    if (t == 0) return true;
    const double p = std::get<SampleWithProbability>(sampling).p;
    return std::uniform_real_distribution<double>(0.0, 1.0)(coin) < p;
}

PerturbQueue::PerturbQueue(std::size_t capacity) : capacity_(capacity) {
    if (capacity < 1) throw std::invalid_argument("PerturbQueue capacity must be >= 1");
}

std::optional<ParamVector> PerturbQueue::push(ParamVector v) {
    entries_.push_back(std::move(v));
    if (entries_.size() > capacity_) {
        ParamVector oldest = std::move(entries_.front());
        entries_.pop_front();
        return oldest;
    }
    return std::nullopt;
}

const char* RunTrace::csv_header() {
    return "iter,epoch,event,lr,batch_risk,perturbed_batch_risk,train_risk,test_acc,diam_risk_est";
}

void RunTrace::write_csv(std::ostream& out) const {
    auto opt = [](const std::optional<double>& x) { return x ? format_double(*x) : std::string(); };
    out << csv_header() << '\n';
    for (const auto& r : records) {
        out << r.iter << ',' << r.epoch << ',' << (r.event ? 1 : 0) << ',' << format_double(r.lr) << ','
            << format_double(r.batch_risk) << ',' << format_double(r.perturbed_batch_risk) << ',' << opt(r.train_risk)
            << ',' << opt(r.test_acc) << ',' << opt(r.diam_risk_est) << '\n';
    }
}

std::string RunTrace::to_csv() const {
    std::ostringstream out;
    write_csv(out);
    return out.str();
}

std::vector<IterationRecord> RunTrace::epoch_records() const {
    std::vector<IterationRecord> out;
    for (const auto& r : records) {
        if (r.train_risk) out.push_back(r);
    }
    return out;
}

std::size_t batches_per_epoch(std::size_t n, std::size_t batch_size) {
    if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
    return n == 0 ? 0 : (n + batch_size - 1) / batch_size;
}

std::vector<std::vector<std::size_t>> make_batches(std::size_t n, std::size_t batch_size, std::uint64_t seed,
                                                   std::size_t epoch) {
    if (batch_size < 1) throw std::invalid_argument("make_batches: batch_size must be >= 1");
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng = derive_rng(seed, {kBatchStream, epoch});
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t start = 0; start < n; start += batch_size) {
        const std::size_t stop = std::min(n, start + batch_size);
        std::vector<std::size_t> b(order.begin() + static_cast<std::ptrdiff_t>(start),
                                   order.begin() + static_cast<std::ptrdiff_t>(stop));
        std::sort(b.begin(), b.end());
        batches.push_back(std::move(b));
    }
    return batches;
}

WorstCandidate select_worst(const LossModel& model, const ParamVector& w, std::span<const Sample> batch,
                            std::span<const ParamVector> candidates) {
    if (candidates.empty()) throw std::invalid_argument("select_worst: no candidates");
    std::vector<double> risk(candidates.size());
    parallel_for(candidates.size(), [&](std::size_t i) { risk[i] = model.batch_risk(w + candidates[i], batch); });
    std::size_t best = 0;
    for (std::size_t i = 1; i < risk.size(); ++i) {
        if (risk[i] > risk[best]) best = i;
    }
    return {best, candidates[best], risk[best]};
}

ParamVector perturbed_gradient_step(const LossModel& model, const ParamVector& w, std::span<const Sample> batch,
                                    const ParamVector& perturbation, double lr, const FeasibleSet& feasible) {
    auto [risk, g] = model.batch_risk_and_grad(w + perturbation, batch);
    (void)risk;
    return project(axpy(w, -lr, g), feasible);
}

ParamVector simple_sgd_drm_step(const LossModel& model, const ParamVector& w, std::span<const Sample> batch,
                                const DrmConfig& cfg, double lr, Rng& rng) {
    const auto u = draw_perturbations(w, cfg, rng);
    const auto worst = select_worst(model, w, batch, u);
    return perturbed_gradient_step(model, w, batch, worst.perturbation, lr, cfg.feasible);
}

double classification_accuracy(const LossModel& model, const ParamVector& w, std::span<const Sample> samples) {
    if (samples.empty()) throw std::invalid_argument("accuracy: empty data");
    std::size_t hits = 0;
    for (const auto& z : samples) {
        const auto p = model.predict(w, z);
        if (!p) throw std::invalid_argument("accuracy: model is not a classifier");
        hits += *p == z.label ? 1 : 0;
    }
    return static_cast<double>(hits) / static_cast<double>(samples.size());
}

RunResult sgd_erm_run(const LossModel& model, const ParamVector& w0, const Dataset& data, const Dataset& test,
                      const DrmConfig& cfg, const RunHooks& hooks) {
    check_run_inputs(model, w0, data, cfg);
    RunResult out{w0, {}};
    out.trace.init_fingerprint = fingerprint(w0);
    BatchFeed feed(data, cfg.batch_size, cfg.seed);
    ParamVector& w = out.w;

    for (std::size_t t = 0; t < cfg.iterations; ++t) {
        const auto batch = feed.batch(t);
        IterationRecord rec;
        rec.iter = t;
        rec.epoch = feed.epoch(t);
        rec.lr = cfg.learning_rate(t);
        auto [risk, g] = model.batch_risk_and_grad(w, batch);
        rec.batch_risk = risk;
        rec.perturbed_batch_risk = risk;
        w = project(axpy(w, -rec.lr, g), cfg.feasible);
        if (feed.epoch_ends(t, cfg.iterations)) fill_epoch_metrics(rec, model, w, data, test, cfg);
        out.trace.records.push_back(rec);
        if (hooks.on_iterate) hooks.on_iterate(t, w);
    }
    out.trace.batch_fingerprint = feed.fingerprint();
    return out;
}

RunResult sgd_drm_run(const LossModel& model, const ParamVector& w0, const Dataset& data, const Dataset& test,
                      const DrmConfig& cfg, const RunHooks& hooks) {
    check_run_inputs(model, w0, data, cfg);
    RunResult out{w0, {}};
    out.trace.init_fingerprint = fingerprint(w0);
    BatchFeed feed(data, cfg.batch_size, cfg.seed);
    Rng perturb_rng = derive_rng(cfg.seed, {kPerturbStream});
    Rng coin_rng = derive_rng(cfg.seed, {kCoinStream});
    PerturbQueue queue(cfg.q);
    // A radius-0 neighborhood is the single point w: nothing to sample.
    const bool perturbing = cfg.gamma > 0.0;
    ParamVector& w = out.w;

    for (std::size_t t = 0; t < cfg.iterations; ++t) {
        const auto batch = feed.batch(t);
        IterationRecord rec;
        rec.iter = t;
        rec.epoch = feed.epoch(t);
        rec.lr = cfg.learning_rate(t);
        rec.batch_risk = model.batch_risk(w, batch);

        std::pair<double, ParamVector> step;
        if (perturbing) {
            std::optional<double> fresh_risk;
            if (cfg.sampling_due(t, coin_rng)) {
                rec.event = true;
                const auto u = draw_perturbations(w, cfg, perturb_rng);
                auto worst = select_worst(model, w, batch, u);
                fresh_risk = worst.risk;
                queue.push(std::move(worst.perturbation));
            }
            if (hooks.on_queue) hooks.on_queue(t, queue);

            // Step 4 on the current batch; the entry pushed this iteration
            // was already evaluated at (w, batch).
            const auto& entries = queue.entries();
            std::vector<double> risk(entries.size());
            const std::size_t fresh = fresh_risk ? entries.size() - 1 : entries.size();
            parallel_for(fresh, [&](std::size_t i) { risk[i] = model.batch_risk(w + entries[i], batch); });
            if (fresh_risk) risk.back() = *fresh_risk;
            std::size_t best = 0;
            for (std::size_t i = 1; i < risk.size(); ++i) {
                if (risk[i] > risk[best]) best = i;
            }
            rec.perturbed_batch_risk = risk[best];
            step = model.batch_risk_and_grad(w + entries[best], batch);
        } else {
            if (hooks.on_queue) hooks.on_queue(t, queue);
            step = model.batch_risk_and_grad(w, batch);
            rec.perturbed_batch_risk = step.first;
        }
        w = project(axpy(w, -rec.lr, step.second), cfg.feasible);
        if (feed.epoch_ends(t, cfg.iterations)) fill_epoch_metrics(rec, model, w, data, test, cfg);
        out.trace.records.push_back(rec);
        if (hooks.on_iterate) hooks.on_iterate(t, w);
    }
    out.trace.batch_fingerprint = feed.fingerprint();
    return out;
}

RunResult simple_sgd_drm_run(const LossModel& model, const ParamVector& w0, const Dataset& data,
                             const Dataset& test, const DrmConfig& cfg, const RunHooks& hooks) {
    check_run_inputs(model, w0, data, cfg);
    RunResult out{w0, {}};
    out.trace.init_fingerprint = fingerprint(w0);
    BatchFeed feed(data, cfg.batch_size, cfg.seed);
    Rng perturb_rng = derive_rng(cfg.seed, {kPerturbStream});
    const bool perturbing = cfg.gamma > 0.0;
    ParamVector& w = out.w;

    for (std::size_t t = 0; t < cfg.iterations; ++t) {
        const auto batch = feed.batch(t);
        IterationRecord rec;
        rec.iter = t;
        rec.epoch = feed.epoch(t);
        rec.lr = cfg.learning_rate(t);
        rec.batch_risk = model.batch_risk(w, batch);
        if (perturbing) {
            rec.event = true;
            const auto u = draw_perturbations(w, cfg, perturb_rng);
            const auto worst = select_worst(model, w, batch, u);
            rec.perturbed_batch_risk = worst.risk;
            w = perturbed_gradient_step(model, w, batch, worst.perturbation, rec.lr, cfg.feasible);
        } else {
            auto [risk, g] = model.batch_risk_and_grad(w, batch);
            rec.perturbed_batch_risk = risk;
            w = project(axpy(w, -rec.lr, g), cfg.feasible);
        }
        if (feed.epoch_ends(t, cfg.iterations)) fill_epoch_metrics(rec, model, w, data, test, cfg);
        out.trace.records.push_back(rec);
        if (hooks.on_iterate) hooks.on_iterate(t, w);
    }
    out.trace.batch_fingerprint = feed.fingerprint();
    return out;
}

}  // namespace drm
