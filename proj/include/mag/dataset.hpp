#pragma once

#include <cstddef>
#include <deque>
#include <iosfwd>
#include <string>
#include <vector>

#include "mag/seed.hpp"
#include "mag/types.hpp"

namespace mag {

// Bounded FIFO replay buffer of environment transitions. Single writer;
// concurrent read-only sampling is fine as long as each reader owns its own
// SeedKey stream.
class Dataset {
public:
    Dataset(SpaceSpec spec, std::size_t capacity = kDefaultCapacity);

    // Appends t as the newest entry, evicting the oldest when full.
    // Rejects transitions whose dimensions disagree with the declared spaces.
    void append(const EnvTransition& t);

    // n entries drawn independently and uniformly with replacement.
    // Throws on an empty dataset.
    std::vector<EnvTransition> sample_uniform(std::size_t n, const SeedKey& seed) const;

    std::size_t size() const { return entries_.size(); }
    std::size_t capacity() const { return capacity_; }
    bool empty() const { return entries_.empty(); }
    const SpaceSpec& spec() const { return spec_; }

    // Entries in FIFO order, index 0 oldest.
    const EnvTransition& at(std::size_t i) const { return entries_.at(i); }

    // Line-delimited snapshot: a header row carrying the space sizes followed
    // by one comma-separated transition per line.
    void save(std::ostream& out) const;
    void save_file(const std::string& path) const;
    static Dataset load(std::istream& in);
    static Dataset load_file(const std::string& path);

    bool operator==(const Dataset&) const = default;

    static constexpr std::size_t kDefaultCapacity = 100000;

private:
    SpaceSpec spec_;
    std::size_t capacity_;
    std::deque<EnvTransition> entries_;  // front oldest
};

}  // namespace mag
