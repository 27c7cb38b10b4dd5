#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

#include "drm/analysis.hpp"
#include "drm/dataset.hpp"
#include "drm/mlp.hpp"
#include "drm/optimizer.hpp"

namespace drm {

inline constexpr int kConfigSchemaVersion = 1;

struct DatasetSpec {
    std::string generator = "gaussian_blobs";
    std::size_t n_train = 300;
    std::size_t n_test = 1000;
    std::size_t input_dim = 0;
    int num_classes = 3;
    double separation = 1.0;
    double noise_frac = 0.0;
    std::uint64_t seed = 0;
};

struct AnalysisSpec {
    std::size_t hist_samples = 1000;
    /// Radius of the landscape histograms; the training gamma when unset.
    std::optional<double> hist_gamma;
};

struct ExperimentConfig {
    DatasetSpec dataset;
    MlpSpec model;
    DrmConfig drm;  // iterations and lr_schedule already expanded from epochs
    std::size_t epochs = 0;
    AnalysisSpec analysis;
    std::string output_dir = "out";
    nlohmann::ordered_json source;  // normalized JSON form, echoed to summary.json
};

/// The desk-scale label-noise setup.
ExperimentConfig default_experiment_config();
nlohmann::ordered_json default_experiment_json();

/// Parses and validates a config document. Unknown keys, wrong types and a
/// missing or unsupported schema_version raise ConfigError.
ExperimentConfig experiment_config_from_json(const nlohmann::json& j);
ExperimentConfig load_experiment_config(const std::string& path);

/// Uses one seed for data, initialization and the optimizer.
ExperimentConfig with_seed(ExperimentConfig cfg, std::uint64_t seed);

/// Balanced classes (label i % num_classes) with unit isotropic Gaussian
/// noise around simplex vertices at pairwise distance `separation`.
Dataset gen_gaussian_blobs(int num_classes, std::size_t n, std::size_t d, double separation, std::uint64_t seed);

/// Relabels exactly round(frac * m) uniformly chosen samples with a uniformly
/// chosen different class. Features are left untouched.
Dataset flip_labels(const Dataset& data, double frac, Rng& rng);

double accuracy(const MlpSpec& spec, const ParamVector& w, const Dataset& data);

struct ExperimentData {
    Dataset train;  // with label noise applied
    Dataset test;   // clean
};

ExperimentData make_experiment_data(const DatasetSpec& spec);

struct MethodSummary {
    double final_train_risk = 0.0;
    double min_train_risk = 0.0;
    double final_test_acc = 0.0;
    double peak_test_acc = 0.0;
    std::size_t peak_epoch = 0;
};

MethodSummary summarize(const RunTrace& trace);

struct ExperimentResult {
    RunResult erm;
    RunResult drm;
    MethodSummary erm_summary;
    MethodSummary drm_summary;
    Histogram hist_erm;
    Histogram hist_drm;
    FlatnessReport flatness;
    nlohmann::ordered_json summary;
};

/// Trains SGD-ERM and SGD-DRM from one initialization and batch schedule,
/// then builds shared-direction landscape histograms around both solutions.
/// With write_outputs, artifacts go to cfg.output_dir.
ExperimentResult run_label_noise_experiment(const ExperimentConfig& cfg, bool write_outputs = true);

}  // namespace drm
