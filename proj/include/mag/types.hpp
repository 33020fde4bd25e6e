#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace mag {

using ObsId = int;
using ActId = int;

// Joint observation: one categorical observation id per agent.
struct JointObservation {
    std::vector<ObsId> per_agent;

    JointObservation() = default;
    explicit JointObservation(std::vector<ObsId> ids) : per_agent(std::move(ids)) {}

    std::size_t n_agents() const { return per_agent.size(); }
    bool operator==(const JointObservation&) const = default;
};

// Joint action: one categorical action id per agent (shared action space).
struct JointAction {
    std::vector<ActId> per_agent;

    JointAction() = default;
    explicit JointAction(std::vector<ActId> ids) : per_agent(std::move(ids)) {}

    std::size_t n_agents() const { return per_agent.size(); }
    bool operator==(const JointAction&) const = default;
};

// One environment step (o, a, R, o'), plus a terminal marker. For
// model-generated data the marker doubles as a segment boundary.
struct EnvTransition {
    JointObservation obs;
    JointAction act;
    double reward = 0.0;
    JointObservation next_obs;
    bool terminal = false;

    bool operator==(const EnvTransition&) const = default;
};

// Describes the per-agent observation spaces and the shared action space.
// Provides the mixed-radix flattening used everywhere joint spaces are
// enumerated: agent 0 is the least significant digit.
class SpaceSpec {
public:
    SpaceSpec() = default;
    SpaceSpec(std::vector<int> obs_sizes, int n_actions)
        : obs_sizes_(std::move(obs_sizes)), n_actions_(n_actions) {
        if (obs_sizes_.empty()) throw std::invalid_argument("SpaceSpec: no agents");
        if (n_actions_ < 1) throw std::invalid_argument("SpaceSpec: n_actions < 1");
        joint_obs_count_ = 1;
        for (int s : obs_sizes_) {
            if (s < 1) throw std::invalid_argument("SpaceSpec: obs size < 1");
            joint_obs_count_ *= s;
        }
        joint_act_count_ = 1;
        for (std::size_t i = 0; i < obs_sizes_.size(); ++i) joint_act_count_ *= n_actions_;
    }

    int n_agents() const { return static_cast<int>(obs_sizes_.size()); }
    const std::vector<int>& obs_sizes() const { return obs_sizes_; }
    int obs_size(int agent) const { return obs_sizes_[static_cast<std::size_t>(agent)]; }
    int n_actions() const { return n_actions_; }
    int joint_obs_count() const { return joint_obs_count_; }
    int joint_act_count() const { return joint_act_count_; }

    bool valid(const JointObservation& o) const {
        if (static_cast<int>(o.n_agents()) != n_agents()) return false;
        for (int i = 0; i < n_agents(); ++i) {
            if (o.per_agent[static_cast<std::size_t>(i)] < 0 ||
                o.per_agent[static_cast<std::size_t>(i)] >= obs_size(i))
                return false;
        }
        return true;
    }

    bool valid(const JointAction& a) const {
        if (static_cast<int>(a.n_agents()) != n_agents()) return false;
        for (ActId id : a.per_agent) {
            if (id < 0 || id >= n_actions_) return false;
        }
        return true;
    }

    void require(const JointObservation& o) const {
        if (!valid(o)) throw std::invalid_argument("joint observation out of bounds");
    }
    void require(const JointAction& a) const {
        if (!valid(a)) throw std::invalid_argument("joint action out of bounds");
    }

    int obs_index(const JointObservation& o) const {
        int idx = 0;
        for (int i = n_agents() - 1; i >= 0; --i) {
            idx = idx * obs_size(i) + o.per_agent[static_cast<std::size_t>(i)];
        }
        return idx;
    }

    JointObservation obs_at(int index) const {
        JointObservation o;
        o.per_agent.resize(static_cast<std::size_t>(n_agents()));
        for (int i = 0; i < n_agents(); ++i) {
            o.per_agent[static_cast<std::size_t>(i)] = index % obs_size(i);
            index /= obs_size(i);
        }
        return o;
    }

    int act_index(const JointAction& a) const {
        int idx = 0;
        for (int i = n_agents() - 1; i >= 0; --i) {
            idx = idx * n_actions_ + a.per_agent[static_cast<std::size_t>(i)];
        }
        return idx;
    }

    JointAction act_at(int index) const {
        JointAction a;
        a.per_agent.resize(static_cast<std::size_t>(n_agents()));
        for (int i = 0; i < n_agents(); ++i) {
            a.per_agent[static_cast<std::size_t>(i)] = index % n_actions_;
            index /= n_actions_;
        }
        return a;
    }

    bool operator==(const SpaceSpec&) const = default;

private:
    std::vector<int> obs_sizes_;
    int n_actions_ = 1;
    int joint_obs_count_ = 1;
    int joint_act_count_ = 1;
};

}  // namespace mag
