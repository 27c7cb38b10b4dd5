#include "drm/dataset.hpp"

#include <map>
#include <stdexcept>
#include <tuple>

namespace drm {

std::size_t Dataset::noisy_count() const {
    std::size_t n = 0;
    for (bool b : noise_mask) n += b ? 1 : 0;
    return n;
}

Dataset Dataset::clean() const {
    Dataset out;
    out.samples = samples;
    out.num_classes = num_classes;
    if (!original_labels.empty()) {
        for (std::size_t i = 0; i < out.samples.size(); ++i) out.samples[i].label = original_labels[i];
    }
    return out;
}

std::vector<Sample> Dataset::gather(std::span<const std::size_t> indices) const {
    std::vector<Sample> out;
    out.reserve(indices.size());
    for (auto i : indices) out.push_back(samples.at(i));
    return out;
}

Dataset draw_dataset(const SampleDistribution& dist, std::size_t m, int num_classes, Rng& rng) {
    Dataset d;
    d.num_classes = num_classes;
    d.samples.reserve(m);
    for (std::size_t i = 0; i < m; ++i) d.samples.push_back(dist(rng));
    return d;
}

WeightedSamples compress(std::span<const Sample> samples) {
    auto key = [](const Sample& s) { return std::tie(s.label, s.target, s.features); };
    auto less = [&](const Sample& a, const Sample& b) { return key(a) < key(b); };
    std::map<Sample, std::size_t, decltype(less)> counts(less);
    for (const auto& s : samples) ++counts[s];
    WeightedSamples out;
    out.total = samples.size();
    for (auto& [s, c] : counts) {
        out.distinct.push_back(s);
        out.counts.push_back(c);
    }
    return out;
}

}  // namespace drm
