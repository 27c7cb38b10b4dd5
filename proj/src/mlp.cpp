#include "drm/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace drm {

namespace {

std::string weight_name(std::size_t k) { return "fc" + std::to_string(k) + ".weight"; }
std::string bias_name(std::size_t k) { return "fc" + std::to_string(k) + ".bias"; }

std::size_t layer_in(const MlpSpec& spec, std::size_t k) { return k == 0 ? spec.input_dim : spec.hidden_dims[k - 1]; }
std::size_t layer_out(const MlpSpec& spec, std::size_t k) {
    return k == spec.hidden_dims.size() ? spec.num_classes : spec.hidden_dims[k];
}

void check_params(const MlpSpec& spec, const ParamVector& w) {
    const std::size_t n = spec.num_affine_layers();
    if (w.num_layers() != 2 * n) throw std::invalid_argument("MLP parameters: wrong number of layers");
    for (std::size_t k = 0; k < n; ++k) {
        const auto& W = w.layer(2 * k);
        const auto& b = w.layer(2 * k + 1);
        const std::vector<std::size_t> wshape{layer_out(spec, k), layer_in(spec, k)};
        const std::vector<std::size_t> bshape{layer_out(spec, k)};
        if (W.shape != wshape || b.shape != bshape) {
            throw std::invalid_argument("MLP parameters: layer " + std::to_string(k) + " has the wrong shape");
        }
    }
}

// z[o] = sum_i W[o][i] a[i] + b[o], summed over i in ascending order.
// Four rows at a time; each accumulator still sums in the same order.
void affine(const std::vector<double>& W, const std::vector<double>& b, std::size_t out, std::size_t in,
            const double* a, double* z) {
    std::size_t o = 0;
    for (; o + 4 <= out; o += 4) {
        const double* r0 = &W[o * in];
        const double* r1 = r0 + in;
        const double* r2 = r1 + in;
        const double* r3 = r2 + in;
        double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
        for (std::size_t i = 0; i < in; ++i) {
            const double ai = a[i];
            s0 += r0[i] * ai;
            s1 += r1[i] * ai;
            s2 += r2[i] * ai;
            s3 += r3[i] * ai;
        }
        z[o] = s0 + b[o];
        z[o + 1] = s1 + b[o + 1];
        z[o + 2] = s2 + b[o + 2];
        z[o + 3] = s3 + b[o + 3];
    }
    for (; o < out; ++o) {
        const double* r = &W[o * in];
        double s = 0.0;
        for (std::size_t i = 0; i < in; ++i) s += r[i] * a[i];
        z[o] = s + b[o];
    }
}

// Pre-activations per affine layer; post-activations are relu of all but the last.
struct Activations {
    std::vector<std::vector<double>> pre;
    std::vector<std::vector<double>> post;  // post[0] is the input
};

void run_forward(const MlpSpec& spec, const ParamVector& w, std::span<const double> x, Activations& act) {
    if (x.size() != spec.input_dim) throw std::invalid_argument("MLP forward: input length does not match input_dim");
    const std::size_t n = spec.num_affine_layers();
    act.pre.resize(n);
    act.post.resize(n);
    act.post[0].assign(x.begin(), x.end());
    for (std::size_t k = 0; k < n; ++k) {
        const std::size_t in = layer_in(spec, k);
        const std::size_t out = layer_out(spec, k);
        act.pre[k].resize(out);
        affine(w.layer(2 * k).values, w.layer(2 * k + 1).values, out, in, act.post[k].data(), act.pre[k].data());
        if (k + 1 < n) {
            auto& next = act.post[k + 1];
            next.resize(out);
            for (std::size_t o = 0; o < out; ++o) next[o] = act.pre[k][o] > 0.0 ? act.pre[k][o] : 0.0;
        }
    }
}

void check_label(const MlpSpec& spec, int label) {
    if (label < 0 || static_cast<std::size_t>(label) >= spec.num_classes) {
        throw std::invalid_argument("MLP: label outside [0, num_classes)");
    }
}

}  // namespace

void MlpSpec::validate() const {
    if (input_dim < 1 || num_classes < 1) throw ConfigError("MlpSpec: input_dim and num_classes must be >= 1");
    for (auto h : hidden_dims) {
        if (h < 1) throw ConfigError("MlpSpec: hidden dims must be >= 1");
    }
}

std::size_t MlpSpec::num_parameters() const {
    std::size_t total = 0;
    for (std::size_t k = 0; k < num_affine_layers(); ++k) total += layer_out(*this, k) * (layer_in(*this, k) + 1);
    return total;
}

MlpSpec mlp_spec_from_params(const ParamVector& w) {
    if (w.num_layers() < 2 || w.num_layers() % 2 != 0) throw ConfigError("checkpoint is not an MLP parameter set");
    MlpSpec spec;
    const std::size_t n = w.num_layers() / 2;
    for (std::size_t k = 0; k < n; ++k) {
        const auto& W = w.layer(2 * k);
        const auto& b = w.layer(2 * k + 1);
        if (W.name != weight_name(k) || b.name != bias_name(k) || W.shape.size() != 2 || b.shape.size() != 1 ||
            b.shape[0] != W.shape[0]) {
            throw ConfigError("checkpoint layer " + std::to_string(k) + " does not look like an MLP layer");
        }
        if (k == 0) {
            spec.input_dim = W.shape[1];
        } else if (W.shape[1] != spec.hidden_dims.back()) {
            throw ConfigError("checkpoint layer " + std::to_string(k) + " input size does not chain");
        }
        if (k + 1 < n) {
            spec.hidden_dims.push_back(W.shape[0]);
        } else {
            spec.num_classes = W.shape[0];
        }
    }
    spec.validate();
    return spec;
}

ParamVector init_params(const MlpSpec& spec, Rng& rng) {
    spec.validate();
    std::vector<Layer> layers;
    for (std::size_t k = 0; k < spec.num_affine_layers(); ++k) {
        const std::size_t in = layer_in(spec, k);
        const std::size_t out = layer_out(spec, k);
        std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / static_cast<double>(in)));
        Layer W{weight_name(k), {out, in}, std::vector<double>(out * in)};
        for (auto& x : W.values) x = normal(rng);
        Layer b{bias_name(k), {out}, std::vector<double>(out, 0.0)};
        layers.push_back(std::move(W));
        layers.push_back(std::move(b));
    }
    return ParamVector(std::move(layers));
}

ParamVector init_params(const MlpSpec& spec) {
    Rng rng = derive_rng(spec.seed, {0x1417});
    return init_params(spec, rng);
}

std::vector<double> forward(const MlpSpec& spec, const ParamVector& w, std::span<const double> x) {
    check_params(spec, w);
    Activations act;
    run_forward(spec, w, x, act);
    return act.pre.back();
}

double nll_softmax(std::span<const double> logits, int label) {
    if (label < 0 || static_cast<std::size_t>(label) >= logits.size()) {
        throw std::invalid_argument("nll_softmax: label outside the logit range");
    }
    const double top = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (double z : logits) sum += std::exp(z - top);
    return (top - logits[label]) + std::log(sum);
}

std::pair<double, ParamVector> loss_and_grad(const MlpSpec& spec, const ParamVector& w,
                                             std::span<const Sample> batch) {
    if (batch.empty()) throw std::invalid_argument("loss_and_grad: empty batch");
    check_params(spec, w);
    const std::size_t n = spec.num_affine_layers();
    ParamVector g = w.zeros_like();
    Activations act;
    std::vector<double> delta, prev_delta;
    double total = 0.0;

    for (const auto& z : batch) {
        check_label(spec, z.label);
        run_forward(spec, w, z.features, act);
        const auto& logits = act.pre.back();
        total += nll_softmax(logits, z.label);

        // d(nll)/d(logits) = softmax - onehot
        const double top = *std::max_element(logits.begin(), logits.end());
        delta.resize(logits.size());
        double sum = 0.0;
        for (std::size_t c = 0; c < logits.size(); ++c) {
            delta[c] = std::exp(logits[c] - top);
            sum += delta[c];
        }
        for (auto& d : delta) d /= sum;
        delta[static_cast<std::size_t>(z.label)] -= 1.0;

        for (std::size_t k = n; k-- > 0;) {
            const std::size_t in = layer_in(spec, k);
            const std::size_t out = layer_out(spec, k);
            const auto& a = act.post[k];
            auto& gW = g.layer(2 * k).values;
            auto& gb = g.layer(2 * k + 1).values;
            for (std::size_t o = 0; o < out; ++o) {
                const double d = delta[o];
                gb[o] += d;
                if (d == 0.0) continue;
                double* row = &gW[o * in];
                for (std::size_t i = 0; i < in; ++i) row[i] += d * a[i];
            }
            if (k == 0) break;
            const auto& W = w.layer(2 * k).values;
            prev_delta.assign(in, 0.0);
            for (std::size_t o = 0; o < out; ++o) {
                const double d = delta[o];
                if (d == 0.0) continue;
                const double* row = &W[o * in];
                for (std::size_t i = 0; i < in; ++i) prev_delta[i] += row[i] * d;
            }
            const auto& pre = act.pre[k - 1];
            for (std::size_t i = 0; i < in; ++i) {
                if (!(pre[i] > 0.0)) prev_delta[i] = 0.0;
            }
            std::swap(delta, prev_delta);
        }
    }
    const double inv = 1.0 / static_cast<double>(batch.size());
    g *= inv;
    return {total / static_cast<double>(batch.size()), std::move(g)};
}

double mean_nll(const MlpSpec& spec, const ParamVector& w, std::span<const Sample> batch) {
    if (batch.empty()) throw std::invalid_argument("mean_nll: empty batch");
    check_params(spec, w);
    Activations act;
    double total = 0.0;
    for (const auto& z : batch) {
        check_label(spec, z.label);
        run_forward(spec, w, z.features, act);
        total += nll_softmax(act.pre.back(), z.label);
    }
    return total / static_cast<double>(batch.size());
}

int predict_class(const MlpSpec& spec, const ParamVector& w, std::span<const double> x) {
    const auto logits = forward(spec, w, x);
    return static_cast<int>(std::max_element(logits.begin(), logits.end()) - logits.begin());
}

MlpLoss::MlpLoss(MlpSpec spec) : spec_(std::move(spec)) {
    spec_.validate();
    Rng rng(0);
    template_ = init_params(spec_, rng).zeros_like();
}

double MlpLoss::eval(const ParamVector& w, const Sample& z) const {
    return mean_nll(spec_, w, std::span<const Sample>(&z, 1));
}

ParamVector MlpLoss::grad(const ParamVector& w, const Sample& z) const {
    return loss_and_grad(spec_, w, std::span<const Sample>(&z, 1)).second;
}

std::optional<int> MlpLoss::predict(const ParamVector& w, const Sample& z) const {
    return predict_class(spec_, w, z.features);
}

double MlpLoss::batch_risk(const ParamVector& w, std::span<const Sample> batch) const {
    return mean_nll(spec_, w, batch);
}

std::pair<double, ParamVector> MlpLoss::batch_risk_and_grad(const ParamVector& w,
                                                            std::span<const Sample> batch) const {
    return loss_and_grad(spec_, w, batch);
}

}  // namespace drm
