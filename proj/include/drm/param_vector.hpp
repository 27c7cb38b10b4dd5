#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "drm/common.hpp"

namespace drm {

/// One named block of parameters (a weight matrix, a bias vector, ...).
/// Values are stored row-major.
struct Layer {
    std::string name;
    std::vector<std::size_t> shape;
    std::vector<double> values;

    std::size_t size() const { return values.size(); }
};

/// Layered parameter vector. Flattened coordinate order is layer order,
/// then row-major within a layer.
class ParamVector {
public:
    ParamVector() = default;
    explicit ParamVector(std::vector<Layer> layers);

    /// Single rank-1 layer holding `values`; used by the low-dimensional fixtures.
    static ParamVector from_values(std::vector<double> values, std::string name = "w");
    static ParamVector scalar(double value, std::string name = "w");

    std::size_t num_layers() const { return layers_.size(); }
    std::size_t size() const;
    bool empty() const { return layers_.empty(); }

    const Layer& layer(std::size_t i) const { return layers_.at(i); }
    Layer& layer(std::size_t i) { return layers_.at(i); }
    const std::vector<Layer>& layers() const { return layers_; }

    /// Flattened view (copy) in the canonical coordinate order.
    std::vector<double> flatten() const;
    /// Inverse of flatten() against this vector's structure.
    ParamVector with_flat_values(std::span<const double> flat) const;

    /// Zero vector with identical structure.
    ParamVector zeros_like() const;

    bool same_structure(const ParamVector& other) const;
    bool all_finite() const;

    /// Value of the first coordinate; used by the scalar fixtures.
    double front() const;

    ParamVector& operator+=(const ParamVector& other);
    ParamVector& operator-=(const ParamVector& other);
    ParamVector& operator*=(double alpha);

    friend bool operator==(const ParamVector& a, const ParamVector& b);

private:
    std::vector<Layer> layers_;
};

ParamVector operator+(ParamVector a, const ParamVector& b);
ParamVector operator-(ParamVector a, const ParamVector& b);
ParamVector operator*(double alpha, ParamVector v);

/// Throws std::invalid_argument unless a and b have identical layer names and shapes.
void require_same_structure(const ParamVector& a, const ParamVector& b, const char* what);

enum class NormKind { Euclidean, Sup, LayerwiseFrobenius };

const char* to_string(NormKind kind);
NormKind norm_kind_from_string(const std::string& name);

/// Norm of v. Returns one entry for Euclidean and Sup (flattened vector)
/// and one entry per layer for LayerwiseFrobenius.
std::vector<double> norm(const ParamVector& v, NormKind kind);

double euclidean_norm(const ParamVector& v);
double sup_norm(const ParamVector& v);
double dot(const ParamVector& a, const ParamVector& b);

/// Random point with norm exactly gamma (each layer for LayerwiseFrobenius):
/// standard normal components rescaled to length gamma.
ParamVector sample_sphere(const ParamVector& shape_template, double gamma, NormKind kind, Rng& rng);

/// w + alpha * d
ParamVector axpy(const ParamVector& w, double alpha, const ParamVector& d);

struct Unbounded {};

struct Box {
    double lo = 0.0;
    double hi = 0.0;
};

struct EuclideanBall {
    ParamVector center;
    double radius = 0.0;
};

/// Feasible set W. Projection is always Euclidean.
using FeasibleSet = std::variant<Unbounded, Box, EuclideanBall>;

void validate(const FeasibleSet& set);
ParamVector project(const ParamVector& w, const FeasibleSet& set);
bool contains(const FeasibleSet& set, const ParamVector& w);
/// Diameter sup ||w - w'|| (Euclidean); infinite for Unbounded.
double diameter(const FeasibleSet& set, const ParamVector& shape_template);

/// {layer name -> {shape: [...], data: [...]}} in layer order.
nlohmann::ordered_json to_json(const ParamVector& v);
ParamVector param_vector_from_json(const nlohmann::ordered_json& j);

void save_checkpoint(const ParamVector& v, const std::string& path);
ParamVector load_checkpoint(const std::string& path);

/// FNV-1a over layer names, shapes and the exact bit patterns of the values.
std::uint64_t fingerprint(const ParamVector& v);

}  // namespace drm
