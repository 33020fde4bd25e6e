#include "mag/seed.hpp"

namespace mag {
namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 14695981039346656037ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

}  // namespace

std::uint64_t SeedKey::stream() const {
    std::uint64_t h = splitmix64(root_);
    for (const auto& label : path_) {
        h = splitmix64(h ^ fnv1a(label));
    }
    return h;
}

std::string SeedKey::to_string() const {
    std::string s = std::to_string(root_);
    for (const auto& label : path_) {
        s += '/';
        s += label;
    }
    return s;
}

}  // namespace mag
