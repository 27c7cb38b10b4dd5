#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <random>
#include <stdexcept>
#include <string>

namespace drm {

using Rng = std::mt19937_64;

/// Invalid user-supplied configuration (bad JSON, unknown keys, out-of-range
/// hyperparameters). The CLI maps it to exit code 2.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Independent stream for (seed, a, b, ...) so that trials, epochs and
/// workers never share generator state.
Rng derive_rng(std::uint64_t seed, std::initializer_list<std::uint64_t> stream);

/// %.17g text; used for every float written to CSV.
std::string format_double(double x);

/// Worker count: DRM_THREADS if set and positive, else hardware concurrency.
std::size_t worker_count();

/// Runs body(i) for i in [0, n). Each index must write only its own output
/// slot; the result is then independent of scheduling.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

class Fnv1a {
public:
    void add_bytes(const void* data, std::size_t len);
    void add(std::uint64_t x) { add_bytes(&x, sizeof x); }
    void add(double x) { add_bytes(&x, sizeof x); }
    void add(const std::string& s) {
        add(static_cast<std::uint64_t>(s.size()));
        add_bytes(s.data(), s.size());
    }
    std::uint64_t value() const { return h_; }

private:
    std::uint64_t h_ = 0xcbf29ce484222325ULL;
};

}  // namespace drm
