#include "drm/param_vector.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace drm {

namespace {

std::size_t shape_product(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

double squared_distance(const ParamVector& a, const ParamVector& b) {
    double s = 0.0;
    for (std::size_t l = 0; l < a.num_layers(); ++l) {
        const auto& x = a.layer(l).values;
        const auto& y = b.layer(l).values;
        for (std::size_t i = 0; i < x.size(); ++i) {
            double d = x[i] - y[i];
            s += d * d;
        }
    }
    return s;
}

// Gaussian components for one block, redrawn while all of them are zero.
void fill_gaussian(std::vector<double>& out, Rng& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    for (int attempt = 0; attempt < 100; ++attempt) {
        bool nonzero = false;
        for (auto& x : out) {
            x = normal(rng);
            nonzero = nonzero || x != 0.0;
        }
        if (nonzero) return;
    }
    throw std::runtime_error("sample_sphere: 100 consecutive all-zero Gaussian draws");
}

}  // namespace

ParamVector::ParamVector(std::vector<Layer> layers) : layers_(std::move(layers)) {
    for (const auto& l : layers_) {
        if (shape_product(l.shape) != l.values.size()) {
            throw std::invalid_argument("ParamVector: layer '" + l.name + "' shape does not match value count");
        }
    }
}

ParamVector ParamVector::from_values(std::vector<double> values, std::string name) {
    Layer l;
    l.name = std::move(name);
    l.shape = {values.size()};
    l.values = std::move(values);
    return ParamVector({std::move(l)});
}

ParamVector ParamVector::scalar(double value, std::string name) {
    return from_values({value}, std::move(name));
}

std::size_t ParamVector::size() const {
    std::size_t n = 0;
    for (const auto& l : layers_) n += l.values.size();
    return n;
}

std::vector<double> ParamVector::flatten() const {
    std::vector<double> flat;
    flat.reserve(size());
    for (const auto& l : layers_) flat.insert(flat.end(), l.values.begin(), l.values.end());
    return flat;
}

ParamVector ParamVector::with_flat_values(std::span<const double> flat) const {
    if (flat.size() != size()) throw std::invalid_argument("with_flat_values: length mismatch");
    ParamVector out = *this;
    std::size_t k = 0;
    for (auto& l : out.layers_) {
        for (auto& x : l.values) x = flat[k++];
    }
    return out;
}

ParamVector ParamVector::zeros_like() const {
    ParamVector out = *this;
    for (auto& l : out.layers_) std::fill(l.values.begin(), l.values.end(), 0.0);
    return out;
}

bool ParamVector::same_structure(const ParamVector& other) const {
    if (layers_.size() != other.layers_.size()) return false;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        if (layers_[i].name != other.layers_[i].name || layers_[i].shape != other.layers_[i].shape) return false;
    }
    return true;
}

bool ParamVector::all_finite() const {
    for (const auto& l : layers_) {
        for (double x : l.values) {
            if (!std::isfinite(x)) return false;
        }
    }
    return true;
}

double ParamVector::front() const {
    for (const auto& l : layers_) {
        if (!l.values.empty()) return l.values.front();
    }
    throw std::invalid_argument("ParamVector::front on empty vector");
}

ParamVector& ParamVector::operator+=(const ParamVector& other) {
    require_same_structure(*this, other, "operator+=");
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        auto& x = layers_[l].values;
        const auto& y = other.layers_[l].values;
        for (std::size_t i = 0; i < x.size(); ++i) x[i] += y[i];
    }
    return *this;
}

ParamVector& ParamVector::operator-=(const ParamVector& other) {
    require_same_structure(*this, other, "operator-=");
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        auto& x = layers_[l].values;
        const auto& y = other.layers_[l].values;
        for (std::size_t i = 0; i < x.size(); ++i) x[i] -= y[i];
    }
    return *this;
}

ParamVector& ParamVector::operator*=(double alpha) {
    for (auto& l : layers_) {
        for (auto& x : l.values) x *= alpha;
    }
    return *this;
}

bool operator==(const ParamVector& a, const ParamVector& b) {
    if (!a.same_structure(b)) return false;
    for (std::size_t l = 0; l < a.layers_.size(); ++l) {
        if (a.layers_[l].values != b.layers_[l].values) return false;
    }
    return true;
}

ParamVector operator+(ParamVector a, const ParamVector& b) { return a += b; }
ParamVector operator-(ParamVector a, const ParamVector& b) { return a -= b; }
ParamVector operator*(double alpha, ParamVector v) { return v *= alpha; }

void require_same_structure(const ParamVector& a, const ParamVector& b, const char* what) {
    if (!a.same_structure(b)) {
        throw std::invalid_argument(std::string(what) + ": parameter vectors differ in layer names or shapes");
    }
}

const char* to_string(NormKind kind) {
    switch (kind) {
        case NormKind::Euclidean: return "euclidean";
        case NormKind::Sup: return "sup";
        case NormKind::LayerwiseFrobenius: return "layerwise_frobenius";
    }
    return "?";
}

NormKind norm_kind_from_string(const std::string& name) {
    if (name == "euclidean") return NormKind::Euclidean;
    if (name == "sup") return NormKind::Sup;
    if (name == "layerwise_frobenius") return NormKind::LayerwiseFrobenius;
    throw ConfigError("unknown norm kind '" + name + "'");
}

std::vector<double> norm(const ParamVector& v, NormKind kind) {
    switch (kind) {
        case NormKind::Euclidean: return {euclidean_norm(v)};
        case NormKind::Sup: return {sup_norm(v)};
        case NormKind::LayerwiseFrobenius: {
            std::vector<double> out;
            out.reserve(v.num_layers());
            for (const auto& l : v.layers()) {
                double s = 0.0;
                for (double x : l.values) s += x * x;
                out.push_back(std::sqrt(s));
            }
            return out;
        }
    }
    return {};
}

double euclidean_norm(const ParamVector& v) { return std::sqrt(dot(v, v)); }

double sup_norm(const ParamVector& v) {
    double m = 0.0;
    for (const auto& l : v.layers()) {
        for (double x : l.values) m = std::max(m, std::abs(x));
    }
    return m;
}

double dot(const ParamVector& a, const ParamVector& b) {
    require_same_structure(a, b, "dot");
    double s = 0.0;
    for (std::size_t l = 0; l < a.num_layers(); ++l) {
        const auto& x = a.layer(l).values;
        const auto& y = b.layer(l).values;
        for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * y[i];
    }
    return s;
}

ParamVector sample_sphere(const ParamVector& shape_template, double gamma, NormKind kind, Rng& rng) {
    if (!(gamma >= 0.0) || !std::isfinite(gamma)) throw std::invalid_argument("sample_sphere: gamma must be finite and >= 0");
    ParamVector out = shape_template.zeros_like();
    if (gamma == 0.0 || out.size() == 0) return out;

    if (kind == NormKind::LayerwiseFrobenius) {
        for (std::size_t l = 0; l < out.num_layers(); ++l) {
            auto& x = out.layer(l).values;
            if (x.empty()) continue;
            fill_gaussian(x, rng);
            double s = 0.0;
            for (double e : x) s += e * e;
            const double length = std::sqrt(s);
            for (auto& e : x) e = e / length * gamma;
        }
        return out;
    }

    std::vector<double> flat(out.size());
    fill_gaussian(flat, rng);
    double length = 0.0;
    if (kind == NormKind::Euclidean) {
        for (double e : flat) length += e * e;
        length = std::sqrt(length);
    } else {
        for (double e : flat) length = std::max(length, std::abs(e));
    }
    for (auto& e : flat) e = e / length * gamma;
    return out.with_flat_values(flat);
}

ParamVector axpy(const ParamVector& w, double alpha, const ParamVector& d) {
    require_same_structure(w, d, "axpy");
    ParamVector out = w;
    for (std::size_t l = 0; l < out.num_layers(); ++l) {
        auto& x = out.layer(l).values;
        const auto& y = d.layer(l).values;
        for (std::size_t i = 0; i < x.size(); ++i) x[i] += alpha * y[i];
    }
    return out;
}

void validate(const FeasibleSet& set) {
    if (const auto* box = std::get_if<Box>(&set)) {
        if (!(box->lo <= box->hi)) throw ConfigError("Box feasible set requires lo <= hi");
    } else if (const auto* ball = std::get_if<EuclideanBall>(&set)) {
        if (!(ball->radius >= 0.0) || !std::isfinite(ball->radius)) {
            throw ConfigError("EuclideanBall feasible set requires a finite radius >= 0");
        }
    }
}

bool contains(const FeasibleSet& set, const ParamVector& w) {
    if (std::holds_alternative<Unbounded>(set)) return true;
    if (const auto* box = std::get_if<Box>(&set)) {
        for (const auto& l : w.layers()) {
            for (double x : l.values) {
                if (!(x >= box->lo && x <= box->hi)) return false;
            }
        }
        return true;
    }
    const auto& ball = std::get<EuclideanBall>(set);
    require_same_structure(w, ball.center, "contains");
    return std::sqrt(squared_distance(w, ball.center)) <= ball.radius;
}

ParamVector project(const ParamVector& w, const FeasibleSet& set) {
    if (std::holds_alternative<Unbounded>(set)) return w;
    if (const auto* box = std::get_if<Box>(&set)) {
        ParamVector out = w;
        for (std::size_t l = 0; l < out.num_layers(); ++l) {
            for (auto& x : out.layer(l).values) x = std::clamp(x, box->lo, box->hi);
        }
        return out;
    }
    const auto& ball = std::get<EuclideanBall>(set);
    require_same_structure(w, ball.center, "project");
    double dist = std::sqrt(squared_distance(w, ball.center));
    if (dist <= ball.radius) return w;
    if (ball.radius == 0.0) return ball.center;

    // Radial scaling; the factor is nudged down until the rounded result
    // passes the same membership test, which makes projection idempotent.
    ParamVector offset = w - ball.center;
    double factor = ball.radius / dist;
    for (int attempt = 0; attempt < 200; ++attempt) {
        ParamVector candidate = axpy(ball.center, factor, offset);
        if (std::sqrt(squared_distance(candidate, ball.center)) <= ball.radius) return candidate;
        factor = std::nextafter(factor, 0.0) * (1.0 - 1e-15 * (attempt + 1));
    }
    throw std::runtime_error("project: failed to land inside the ball");
}

double diameter(const FeasibleSet& set, const ParamVector& shape_template) {
    if (std::holds_alternative<Unbounded>(set)) return std::numeric_limits<double>::infinity();
    if (const auto* box = std::get_if<Box>(&set)) {
        return (box->hi - box->lo) * std::sqrt(static_cast<double>(shape_template.size()));
    }
    return 2.0 * std::get<EuclideanBall>(set).radius;
}

nlohmann::ordered_json to_json(const ParamVector& v) {
    nlohmann::ordered_json j = nlohmann::ordered_json::object();
    for (const auto& l : v.layers()) {
        nlohmann::ordered_json entry;
        entry["shape"] = l.shape;
        entry["data"] = l.values;
        j[l.name] = std::move(entry);
    }
    return j;
}

ParamVector param_vector_from_json(const nlohmann::ordered_json& j) {
    if (!j.is_object()) throw ConfigError("parameter JSON must be an object of layers");
    std::vector<Layer> layers;
    for (const auto& [name, entry] : j.items()) {
        if (!entry.is_object() || !entry.contains("shape") || !entry.contains("data") || entry.size() != 2) {
            throw ConfigError("layer '" + name + "' must have exactly the keys 'shape' and 'data'");
        }
        Layer l;
        l.name = name;
        try {
            l.shape = entry.at("shape").get<std::vector<std::size_t>>();
            l.values = entry.at("data").get<std::vector<double>>();
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError("layer '" + name + "': " + e.what());
        }
        if (shape_product(l.shape) != l.values.size()) {
            throw ConfigError("layer '" + name + "': data length does not match shape");
        }
        layers.push_back(std::move(l));
    }
    ParamVector v(std::move(layers));
    if (!v.all_finite()) throw ConfigError("parameter JSON contains non-finite values");
    return v;
}

void save_checkpoint(const ParamVector& v, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write checkpoint '" + path + "'");
    out << to_json(v).dump() << '\n';
}

ParamVector load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open checkpoint '" + path + "'");
    nlohmann::ordered_json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("checkpoint '" + path + "' is not valid JSON: " + e.what());
    }
    return param_vector_from_json(j);
}

std::uint64_t fingerprint(const ParamVector& v) {
    Fnv1a h;
    for (const auto& l : v.layers()) {
        h.add(l.name);
        for (auto d : l.shape) h.add(static_cast<std::uint64_t>(d));
        for (double x : l.values) h.add(x);
    }
    return h.value();
}

}  // namespace drm
