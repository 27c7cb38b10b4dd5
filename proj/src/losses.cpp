#include "drm/losses.hpp"

#include <cmath>
#include <stdexcept>

namespace drm {

namespace {

double scalar_param(const ParamVector& w) {
    if (w.size() != 1) throw std::invalid_argument("scalar loss expects a one-coordinate parameter");
    return w.front();
}

void require_binary(int z) {
    if (z != 0 && z != 1) throw std::invalid_argument("scalar example losses take labels in {0, 1}");
}

}  // namespace

double LossModel::batch_risk(const ParamVector& w, std::span<const Sample> batch) const {
    if (batch.empty()) throw std::invalid_argument("batch_risk: empty batch");
    double sum = 0.0;
    for (const auto& z : batch) sum += eval(w, z);
    return sum / static_cast<double>(batch.size());
}

std::pair<double, ParamVector> LossModel::batch_risk_and_grad(const ParamVector& w,
                                                              std::span<const Sample> batch) const {
    if (batch.empty()) throw std::invalid_argument("batch_risk_and_grad: empty batch");
    double sum = 0.0;
    ParamVector g = w.zeros_like();
    for (const auto& z : batch) {
        sum += eval(w, z);
        g += grad(w, z);
    }
    const double inv = 1.0 / static_cast<double>(batch.size());
    g *= inv;
    return {sum / static_cast<double>(batch.size()), std::move(g)};
}

SampleDistribution fair_binary_labels() {
    return [](Rng& rng) {
        Sample z;
        z.label = std::bernoulli_distribution(0.5)(rng) ? 1 : 0;
        return z;
    };
}

double tent_eval(double w, int z, double kappa, double gamma_loss) {
    require_binary(z);
    const double sign = z == 0 ? 1.0 : -1.0;
    if (w >= -gamma_loss && w < 0.0) return sign * (kappa * w / gamma_loss + kappa);
    if (w >= 0.0 && w < gamma_loss) return sign * (-kappa * w / gamma_loss + kappa);
    return 0.0;
}

double tent_derivative(double w, int z, double kappa, double gamma_loss) {
    require_binary(z);
    const double sign = z == 0 ? 1.0 : -1.0;
    if (w >= -gamma_loss && w < 0.0) return sign * kappa / gamma_loss;
    if (w >= 0.0 && w < gamma_loss) return -sign * kappa / gamma_loss;
    return 0.0;
}

double tent_true_risk(double) { return 0.0; }

double reciprocal_eval(double w, int z) {
    require_binary(z);
    if (w > 0.0) return z == 0 ? 1.0 / w : -1.0 / w;
    return 0.0;
}

double reciprocal_derivative(double w, int z) {
    require_binary(z);
    if (w > 0.0) return z == 0 ? -1.0 / (w * w) : 1.0 / (w * w);
    return 0.0;
}

double reciprocal_true_risk(double) { return 0.0; }

long rho_m(std::span<const int> labels) {
    long rho = 0;
    for (int z : labels) {
        require_binary(z);
        rho += z == 0 ? 1 : -1;
    }
    return rho;
}

long rho_m(std::span<const Sample> samples) {
    long rho = 0;
    for (const auto& s : samples) {
        require_binary(s.label);
        rho += s.label == 0 ? 1 : -1;
    }
    return rho;
}

double quadratic_eval(const ParamVector& w, const Sample& z) {
    if (z.features.size() != w.size()) throw std::invalid_argument("quadratic_eval: feature length does not match parameter length");
    double inner = 0.0;
    std::size_t k = 0;
    for (const auto& l : w.layers()) {
        for (double x : l.values) inner += z.features[k++] * x;
    }
    const double r = inner - z.target;
    return 0.5 * r * r;
}

TentLoss::TentLoss(double kappa, double gamma_loss) : kappa_(kappa), gamma_loss_(gamma_loss) {
    if (!(kappa > 1.0)) throw ConfigError("TentLoss requires kappa > 1");
    if (!(gamma_loss > 0.0 && gamma_loss < 1.0)) throw ConfigError("TentLoss requires gamma_loss in (0, 1)");
}

double TentLoss::eval(const ParamVector& w, const Sample& z) const {
    return tent_eval(scalar_param(w), z.label, kappa_, gamma_loss_);
}

ParamVector TentLoss::grad(const ParamVector& w, const Sample& z) const {
    ParamVector g = w.zeros_like();
    g.layer(0).values[0] = tent_derivative(scalar_param(w), z.label, kappa_, gamma_loss_);
    return g;
}

std::optional<double> TentLoss::true_risk(const ParamVector& w) const { return tent_true_risk(scalar_param(w)); }

std::vector<double> TentLoss::breakpoints() const { return {-gamma_loss_, 0.0, gamma_loss_}; }

double ReciprocalLoss::eval(const ParamVector& w, const Sample& z) const {
    return reciprocal_eval(scalar_param(w), z.label);
}

ParamVector ReciprocalLoss::grad(const ParamVector& w, const Sample& z) const {
    ParamVector g = w.zeros_like();
    g.layer(0).values[0] = reciprocal_derivative(scalar_param(w), z.label);
    return g;
}

std::optional<double> ReciprocalLoss::true_risk(const ParamVector& w) const {
    return reciprocal_true_risk(scalar_param(w));
}

QuadraticLoss::QuadraticLoss(std::size_t dim) : template_(ParamVector::from_values(std::vector<double>(dim, 0.0))) {
    if (dim == 0) throw std::invalid_argument("QuadraticLoss: dimension must be >= 1");
}

double QuadraticLoss::eval(const ParamVector& w, const Sample& z) const { return quadratic_eval(w, z); }

ParamVector QuadraticLoss::grad(const ParamVector& w, const Sample& z) const {
    if (z.features.size() != w.size()) throw std::invalid_argument("QuadraticLoss::grad: dimension mismatch");
    const auto flat = w.flatten();
    double inner = 0.0;
    for (std::size_t i = 0; i < flat.size(); ++i) inner += z.features[i] * flat[i];
    const double r = inner - z.target;
    std::vector<double> g(flat.size());
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = r * z.features[i];
    return w.with_flat_values(g);
}

ConstantLoss::ConstantLoss(ParamVector shape_template, double value)
    : template_(std::move(shape_template)), value_(value) {}

}  // namespace drm
