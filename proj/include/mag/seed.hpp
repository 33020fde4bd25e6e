#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace mag {

// Hierarchical seed: a 64-bit root plus a path of labels naming the consuming
// subsystem. Identical (root, path) pairs yield identical random streams
// across runs, platforms and thread schedules.
class SeedKey {
public:
    explicit SeedKey(std::uint64_t root) : root_(root) {}

    SeedKey child(std::string_view label) const {
        SeedKey k(*this);
        k.path_.emplace_back(label);
        return k;
    }

    SeedKey child(std::string_view label, std::uint64_t index) const {
        return child(label).child(std::to_string(index));
    }

    std::uint64_t root() const { return root_; }
    const std::vector<std::string>& path() const { return path_; }

    // Stream id folding the root and every path label through splitmix64.
    std::uint64_t stream() const;

    std::string to_string() const;

private:
    std::uint64_t root_;
    std::vector<std::string> path_;
};

// Deterministic random source. The engine (mt19937_64) has fully specified
// output; all value mappings below are hand-rolled so that streams do not
// depend on the standard library's distribution implementations.
class Rng {
public:
    explicit Rng(const SeedKey& key) : eng_(key.stream()) {}
    explicit Rng(std::uint64_t stream) : eng_(stream) {}

    std::uint64_t next_u64() { return eng_(); }

    // Uniform in [0, 1) with 53-bit resolution.
    double uniform01() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    // Uniform index in [0, n). n must be positive.
    std::size_t uniform_index(std::size_t n) {
        return static_cast<std::size_t>(uniform01() * static_cast<double>(n));
    }

    // Draw from a categorical distribution given by `probs` (sums to ~1).
    // CDF inversion; the final support point absorbs rounding slack.
    std::size_t categorical(std::span<const double> probs) {
        const double u = uniform01();
        double acc = 0.0;
        for (std::size_t i = 0; i + 1 < probs.size(); ++i) {
            acc += probs[i];
            if (u < acc) return i;
        }
        return probs.empty() ? 0 : probs.size() - 1;
    }

private:
    std::mt19937_64 eng_;
};

}  // namespace mag
