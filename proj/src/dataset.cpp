#include "mag/dataset.hpp"

#include <cmath>
#include <fstream>
#include <ostream>
#include <stdexcept>

#include "mag/text_io.hpp"

namespace mag {

Dataset::Dataset(SpaceSpec spec, std::size_t capacity)
    : spec_(std::move(spec)), capacity_(capacity) {
    if (capacity_ == 0) throw std::invalid_argument("Dataset: capacity must be positive");
}

void Dataset::append(const EnvTransition& t) {
    spec_.require(t.obs);
    spec_.require(t.act);
    spec_.require(t.next_obs);
    if (!std::isfinite(t.reward)) throw std::invalid_argument("Dataset: non-finite reward");
    if (entries_.size() == capacity_) entries_.pop_front();
    entries_.push_back(t);
}

std::vector<EnvTransition> Dataset::sample_uniform(std::size_t n, const SeedKey& seed) const {
    if (entries_.empty()) throw std::runtime_error("Dataset: sample from empty dataset");
    Rng rng(seed);
    std::vector<EnvTransition> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        out.push_back(entries_[rng.uniform_index(entries_.size())]);
    }
    return out;
}

void Dataset::save(std::ostream& out) const {
    out << "n_agents=" << spec_.n_agents()
        << ",obs_sizes=" << join_ints(spec_.obs_sizes())
        << ",n_actions=" << spec_.n_actions()
        << ",capacity=" << capacity_
        << ",size=" << entries_.size() << "\n";
    for (const auto& t : entries_) {
        out << join_ints(t.obs.per_agent) << ','
            << join_ints(t.act.per_agent) << ','
            << format_double(t.reward) << ','
            << join_ints(t.next_obs.per_agent) << ','
            << (t.terminal ? 1 : 0) << "\n";
    }
}

void Dataset::save_file(const std::string& path) const {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("Dataset: cannot open for write: " + path);
    save(f);
}

Dataset Dataset::load(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("Dataset: missing header");
    std::vector<int> obs_sizes;
    int n_agents = -1, n_actions = -1;
    long capacity = -1, size = -1;
    for (const auto& field : split(line, ',')) {
        auto kv = split(field, '=');
        if (kv.size() != 2) throw std::runtime_error("Dataset: bad header field: " + field);
        const auto key = std::string(trim(kv[0]));
        const auto val = std::string(trim(kv[1]));
        if (key == "n_agents") n_agents = static_cast<int>(parse_long(val));
        else if (key == "obs_sizes") obs_sizes = parse_ints(val);
        else if (key == "n_actions") n_actions = static_cast<int>(parse_long(val));
        else if (key == "capacity") capacity = parse_long(val);
        else if (key == "size") size = parse_long(val);
        else throw std::runtime_error("Dataset: unknown header key: " + key);
    }
    if (n_agents != static_cast<int>(obs_sizes.size()))
        throw std::runtime_error("Dataset: header n_agents/obs_sizes mismatch");
    if (capacity < 1 || size < 0) throw std::runtime_error("Dataset: bad header sizes");
    Dataset d(SpaceSpec(obs_sizes, n_actions), static_cast<std::size_t>(capacity));
    for (long i = 0; i < size; ++i) {
        if (!std::getline(in, line)) throw std::runtime_error("Dataset: truncated snapshot");
        auto fields = split(line, ',');
        if (fields.size() != 5) throw std::runtime_error("Dataset: bad record: " + line);
        EnvTransition t;
        t.obs.per_agent = parse_ints(fields[0]);
        t.act.per_agent = parse_ints(fields[1]);
        t.reward = parse_double(trim(fields[2]));
        t.next_obs.per_agent = parse_ints(fields[3]);
        t.terminal = parse_long(trim(fields[4])) != 0;
        d.append(t);
    }
    return d;
}

Dataset Dataset::load_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("Dataset: cannot open: " + path);
    return load(f);
}

}  // namespace mag
