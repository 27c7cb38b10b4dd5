#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "drm/dataset.hpp"
#include "drm/losses.hpp"
#include "drm/param_vector.hpp"

namespace drm {

/// Learning rate `rate` for iterations t < until (after the previous segment).
struct LrSegment {
    std::size_t until = 0;
    double rate = 0.0;
};

/// Fresh perturbations drawn at iterations t with t % k == 0.
struct SampleEveryK {
    std::size_t k = 5;
};

/// Fresh perturbations drawn with probability p at every iteration t >= 1.
struct SampleWithProbability {
    double p = 1.0;
};

using SamplingSchedule = std::variant<SampleEveryK, SampleWithProbability>;

struct DrmConfig {
    double gamma = 0.0;          // diametrical radius
    std::size_t r = 20;          // draws per sampling event
    std::size_t q = 1;           // perturbation queue capacity
    SamplingSchedule sampling = SampleEveryK{5};
    std::size_t iterations = 0;  // T
    std::size_t batch_size = 1;
    std::vector<LrSegment> lr_schedule;
    NormKind norm_kind = NormKind::LayerwiseFrobenius;
    FeasibleSet feasible = Unbounded{};
    std::uint64_t seed = 0;
    /// Draws for the per-epoch sampled diametrical-risk column; 0 disables it.
    std::size_t epoch_eval_draws = 0;

    /// Throws ConfigError on any invalid field.
    void validate() const;
    double learning_rate(std::size_t t) const;
    bool sampling_due(std::size_t t, Rng& coin) const;
};

/// FIFO of selected worst-case perturbations with capacity q.
class PerturbQueue {
public:
    explicit PerturbQueue(std::size_t capacity);

    /// Appends v; returns the evicted oldest entry when over capacity.
    std::optional<ParamVector> push(ParamVector v);

    std::size_t size() const { return entries_.size(); }
    std::size_t capacity() const { return capacity_; }
    bool empty() const { return entries_.empty(); }
    /// Oldest first.
    const std::deque<ParamVector>& entries() const { return entries_; }

private:
    std::size_t capacity_;
    std::deque<ParamVector> entries_;
};

/// One row of the trace. Epoch-level columns are filled on the last
/// iteration of each epoch.
struct IterationRecord {
    std::size_t iter = 0;
    std::size_t epoch = 0;
    bool event = false;  // fresh perturbations were drawn this iteration
    double lr = 0.0;
    double batch_risk = 0.0;            // R_B(w^t)
    double perturbed_batch_risk = 0.0;  // R_B(w^t + v*), the point the gradient is taken at
    std::optional<double> train_risk;
    std::optional<double> test_acc;
    std::optional<double> diam_risk_est;
};

struct RunTrace {
    std::vector<IterationRecord> records;
    std::uint64_t init_fingerprint = 0;
    std::uint64_t batch_fingerprint = 0;

    static const char* csv_header();
    void write_csv(std::ostream& out) const;
    std::string to_csv() const;
    /// Records that carry epoch-level metrics.
    std::vector<IterationRecord> epoch_records() const;
};

struct RunResult {
    ParamVector w;
    RunTrace trace;
};

/// Optional instrumentation called by the training loops.
struct RunHooks {
    std::function<void(std::size_t iter, const PerturbQueue&)> on_queue;
    std::function<void(std::size_t iter, const ParamVector& w_next)> on_iterate;
};

/// Shuffle without replacement per epoch, chunk into batches (last one may be
/// short), then sort indices inside each batch ascending.
std::vector<std::vector<std::size_t>> make_batches(std::size_t n, std::size_t batch_size, std::uint64_t seed,
                                                   std::size_t epoch);

std::size_t batches_per_epoch(std::size_t n, std::size_t batch_size);

struct WorstCandidate {
    std::size_t index = 0;
    ParamVector perturbation;
    double risk = 0.0;
};

/// argmax_i R_B(w + candidates[i]); ties go to the lowest index.
WorstCandidate select_worst(const LossModel& model, const ParamVector& w, std::span<const Sample> batch,
                            std::span<const ParamVector> candidates);

/// prj_W(w - lr * grad R_B(w + perturbation)).
ParamVector perturbed_gradient_step(const LossModel& model, const ParamVector& w, std::span<const Sample> batch,
                                    const ParamVector& perturbation, double lr, const FeasibleSet& feasible);

/// One iteration of the simple variant: draw r perturbations of norm gamma,
/// keep the worst on the batch, step from the gradient taken there.
ParamVector simple_sgd_drm_step(const LossModel& model, const ParamVector& w, std::span<const Sample> batch,
                                const DrmConfig& cfg, double lr, Rng& rng);

/// Fraction of samples whose predicted class equals the label.
double classification_accuracy(const LossModel& model, const ParamVector& w, std::span<const Sample> samples);

RunResult sgd_erm_run(const LossModel& model, const ParamVector& w0, const Dataset& data, const Dataset& test,
                      const DrmConfig& cfg, const RunHooks& hooks = {});

/// Queue-based DRM with intermittent sampling.
RunResult sgd_drm_run(const LossModel& model, const ParamVector& w0, const Dataset& data, const Dataset& test,
                      const DrmConfig& cfg, const RunHooks& hooks = {});

/// The simple variant run end to end: fresh perturbations at every iteration,
/// no queue. `cfg.q` and `cfg.sampling` are ignored.
RunResult simple_sgd_drm_run(const LossModel& model, const ParamVector& w0, const Dataset& data,
                             const Dataset& test, const DrmConfig& cfg, const RunHooks& hooks = {});

}  // namespace drm
