#pragma once

#include <functional>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "drm/param_vector.hpp"

namespace drm {

/// One data point z. The scalar examples use only `label`; the quadratic
/// fixture reads `features` as the regressor a and `target` as b.
struct Sample {
    std::vector<double> features;
    int label = 0;
    double target = 0.0;

    friend bool operator==(const Sample&, const Sample&) = default;
};

/// Pointwise loss l(w, z) with gradient in w.
///
/// batch_risk / batch_risk_and_grad return the arithmetic mean over the
/// batch, summed in the order given. Models with a faster batched path
/// override them; the defaults loop over eval / grad.
class LossModel {
public:
    virtual ~LossModel() = default;

    virtual double eval(const ParamVector& w, const Sample& z) const = 0;
    virtual ParamVector grad(const ParamVector& w, const Sample& z) const = 0;
    virtual const ParamVector& param_template() const = 0;

    /// Analytic true risk E_z[l(w, z)], when known.
    virtual std::optional<double> true_risk(const ParamVector&) const { return std::nullopt; }

    /// Points where l(., z) is not differentiable (scalar models only).
    virtual std::vector<double> breakpoints() const { return {}; }

    /// Predicted class, for classifiers.
    virtual std::optional<int> predict(const ParamVector&, const Sample&) const { return std::nullopt; }

    virtual double batch_risk(const ParamVector& w, std::span<const Sample> batch) const;
    virtual std::pair<double, ParamVector> batch_risk_and_grad(const ParamVector& w,
                                                               std::span<const Sample> batch) const;
};

/// Draws one z from the data-generating distribution.
using SampleDistribution = std::function<Sample(Rng&)>;

/// z uniform on {0, 1}: the distribution of the scalar examples.
SampleDistribution fair_binary_labels();

double tent_eval(double w, int z, double kappa, double gamma_loss);
/// Right-hand derivative in w.
double tent_derivative(double w, int z, double kappa, double gamma_loss);
double tent_true_risk(double w);

double reciprocal_eval(double w, int z);
double reciprocal_derivative(double w, int z);
double reciprocal_true_risk(double w);

/// (#zeros) - (#ones).
long rho_m(std::span<const int> labels);
long rho_m(std::span<const Sample> samples);

/// 1/2 (<a, w> - b)^2 with a = z.features (flattened order), b = z.target.
double quadratic_eval(const ParamVector& w, const Sample& z);

/// Tent-shaped loss whose sign depends on the label: Lipschitz modulus
/// kappa / gamma_loss, zero true risk under fair labels.
class TentLoss final : public LossModel {
public:
    TentLoss(double kappa, double gamma_loss);

    double kappa() const { return kappa_; }
    double gamma_loss() const { return gamma_loss_; }

    double eval(const ParamVector& w, const Sample& z) const override;
    ParamVector grad(const ParamVector& w, const Sample& z) const override;
    const ParamVector& param_template() const override { return template_; }
    std::optional<double> true_risk(const ParamVector& w) const override;
    std::vector<double> breakpoints() const override;

private:
    double kappa_;
    double gamma_loss_;
    ParamVector template_ = ParamVector::scalar(0.0);
};

/// +-1/w on (0, inf), zero elsewhere. Not Lipschitz near 0.
class ReciprocalLoss final : public LossModel {
public:
    double eval(const ParamVector& w, const Sample& z) const override;
    ParamVector grad(const ParamVector& w, const Sample& z) const override;
    const ParamVector& param_template() const override { return template_; }
    std::optional<double> true_risk(const ParamVector& w) const override;
    std::vector<double> breakpoints() const override { return {0.0}; }

private:
    ParamVector template_ = ParamVector::scalar(0.0);
};

class QuadraticLoss final : public LossModel {
public:
    explicit QuadraticLoss(std::size_t dim);

    double eval(const ParamVector& w, const Sample& z) const override;
    ParamVector grad(const ParamVector& w, const Sample& z) const override;
    const ParamVector& param_template() const override { return template_; }

private:
    ParamVector template_;
};

/// l(w, z) = c for all w, z.
class ConstantLoss final : public LossModel {
public:
    explicit ConstantLoss(ParamVector shape_template, double value = 1.0);

    double eval(const ParamVector&, const Sample&) const override { return value_; }
    ParamVector grad(const ParamVector& w, const Sample&) const override { return w.zeros_like(); }
    const ParamVector& param_template() const override { return template_; }
    std::optional<double> true_risk(const ParamVector&) const override { return value_; }

private:
    ParamVector template_;
    double value_;
};

}  // namespace drm
