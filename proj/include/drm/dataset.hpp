#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "drm/losses.hpp"

namespace drm {

/// Labeled sample set. When labels have been corrupted, noise_mask[i] is
/// set and original_labels[i] keeps the label before flipping.
struct Dataset {
    std::vector<Sample> samples;
    int num_classes = 2;
    std::vector<bool> noise_mask;
    std::vector<int> original_labels;

    std::size_t size() const { return samples.size(); }
    bool empty() const { return samples.empty(); }
    std::span<const Sample> view() const { return samples; }

    std::size_t noisy_count() const;
    /// Copy with original labels restored and no mask.
    Dataset clean() const;
    /// Samples at the given indices, in that order.
    std::vector<Sample> gather(std::span<const std::size_t> indices) const;
};

/// Dataset of m draws from a distribution.
Dataset draw_dataset(const SampleDistribution& dist, std::size_t m, int num_classes, Rng& rng);

/// Distinct samples with multiplicities, for risk evaluation over large
/// samples with few distinct values (the scalar examples).
struct WeightedSamples {
    std::vector<Sample> distinct;
    std::vector<std::size_t> counts;
    std::size_t total = 0;
};

WeightedSamples compress(std::span<const Sample> samples);

}  // namespace drm
