#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "drm/losses.hpp"
#include "drm/param_vector.hpp"

namespace drm {

/// Fully connected ReLU network ending in a softmax over num_classes.
/// Parameter layers are fc{k}.weight (out x in) and fc{k}.bias (out).
struct MlpSpec {
    std::size_t input_dim = 0;
    std::vector<std::size_t> hidden_dims;
    std::size_t num_classes = 0;
    std::uint64_t seed = 0;

    void validate() const;
    std::size_t num_affine_layers() const { return hidden_dims.size() + 1; }
    std::size_t num_parameters() const;
};

/// Recovers the architecture from checkpoint layer shapes (seed left at 0).
MlpSpec mlp_spec_from_params(const ParamVector& w);

/// He-scaled normal weights, zero biases.
ParamVector init_params(const MlpSpec& spec, Rng& rng);
ParamVector init_params(const MlpSpec& spec);

std::vector<double> forward(const MlpSpec& spec, const ParamVector& w, std::span<const double> x);

/// -log softmax(logits)[label], max-shifted.
double nll_softmax(std::span<const double> logits, int label);

/// Mean NLL over the batch and its exact gradient. Samples are accumulated
/// in the order given.
std::pair<double, ParamVector> loss_and_grad(const MlpSpec& spec, const ParamVector& w,
                                             std::span<const Sample> batch);

/// Mean NLL only; bitwise equal to loss_and_grad(...).first.
double mean_nll(const MlpSpec& spec, const ParamVector& w, std::span<const Sample> batch);

/// argmax of logits, ties to the lowest class index.
int predict_class(const MlpSpec& spec, const ParamVector& w, std::span<const double> x);

class MlpLoss final : public LossModel {
public:
    explicit MlpLoss(MlpSpec spec);

    const MlpSpec& spec() const { return spec_; }

    double eval(const ParamVector& w, const Sample& z) const override;
    ParamVector grad(const ParamVector& w, const Sample& z) const override;
    const ParamVector& param_template() const override { return template_; }
    std::optional<int> predict(const ParamVector& w, const Sample& z) const override;

    double batch_risk(const ParamVector& w, std::span<const Sample> batch) const override;
    std::pair<double, ParamVector> batch_risk_and_grad(const ParamVector& w,
                                                       std::span<const Sample> batch) const override;

private:
    MlpSpec spec_;
    ParamVector template_;
};

}  // namespace drm
