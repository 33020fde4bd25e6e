#pragma once

#include <iosfwd>
#include <vector>

#include "mag/dataset.hpp"
#include "mag/env.hpp"
#include "mag/mlp.hpp"
#include "mag/parallel.hpp"
#include "mag/seed.hpp"
#include "mag/types.hpp"

namespace mag::policy {

enum class PolicyBackend { tabular, mlp };

// Joint policy: N per-agent categorical actors over local observations.
// Probabilities carry a 1e-8 floor so total-variation shifts and PPO ratios
// stay finite. The tabular backend is a logit table (a linear map over the
// one-hot observation); the mlp backend adds a hidden layer.
class JointPolicy {
public:
    JointPolicy() = default;
    JointPolicy(SpaceSpec spaces, PolicyBackend backend, const SeedKey& seed,
                std::vector<int> hidden = {64});

    const SpaceSpec& spaces() const { return spaces_; }
    PolicyBackend backend() const { return backend_; }
    long version() const { return version_; }
    void bump_version() { ++version_; }

    // Floored action distribution of one agent at its local observation.
    std::vector<double> action_probs(int agent, ObsId local_obs) const;

    // Product distribution over joint action indices at a joint observation.
    std::vector<double> joint_action_probs(const JointObservation& o) const;

    JointAction act(const JointObservation& o, Rng& rng) const;
    JointAction act(const JointObservation& o, const SeedKey& seed) const;

    Mlp& actor(int agent) { return actors_[static_cast<std::size_t>(agent)]; }
    const Mlp& actor(int agent) const { return actors_[static_cast<std::size_t>(agent)]; }

    static constexpr double kProbFloor = 1e-8;

    void save(std::ostream& out) const;
    static JointPolicy load(std::istream& in);
    bool operator==(const JointPolicy&) const = default;

private:
    SpaceSpec spaces_;
    PolicyBackend backend_ = PolicyBackend::tabular;
    std::vector<Mlp> actors_;
    long version_ = 0;
};

// Centralized critic over the joint observation.
class CentralizedCritic {
public:
    CentralizedCritic() = default;
    CentralizedCritic(SpaceSpec spaces, PolicyBackend backend, const SeedKey& seed,
                      std::vector<int> hidden = {64});

    double value(const JointObservation& o) const;
    Mlp& net() { return net_; }
    const Mlp& net() const { return net_; }
    const SpaceSpec& spaces() const { return spaces_; }

    void save(std::ostream& out) const;
    static CentralizedCritic load(std::istream& in);
    bool operator==(const CentralizedCritic&) const = default;

private:
    SpaceSpec spaces_;
    Mlp net_;
};

struct PpoHyper {
    double gamma = 0.95;
    double clip = 0.2;
    double gae_lambda = 0.95;
    double lr_actor = 3e-4;
    double lr_critic = 3e-4;
    int segment_len = 0;  // >0: also split the dataset into runs of this length
};

// dLoss/dlogits of the clipped surrogate for one sample: cur_probs is the
// current (floored) action distribution, old_prob the behaviour probability
// of the taken action. Zero when the ratio sits beyond 1 +/- clip on the
// advantage's clipped side.
std::vector<double> clipped_logit_gradient(const std::vector<double>& cur_probs, ActId taken,
                                           double old_prob, double advantage, double clip);

// G clipped-ratio gradient steps on the actors plus squared-error critic
// steps, advantages from generalized advantage estimation over the stored
// trajectory segments. Returns the new policy (version incremented once) and
// critic; deterministic given the seed.
std::pair<JointPolicy, CentralizedCritic> ppo_update(const JointPolicy& policy,
                                                     const CentralizedCritic& critic,
                                                     const Dataset& d_m, int g_updates,
                                                     const PpoHyper& hyper, const SeedKey& seed);

struct EvalResult {
    double mean_return = 0.0;        // undiscounted
    double se_return = 0.0;
    double mean_discounted = 0.0;
    double se_discounted = 0.0;
    int episodes = 0;
    long env_steps = 0;
};

// Monte-Carlo policy evaluation over fresh episodes.
EvalResult evaluate_return(const envs::TabularDecPomdp& env, const JointPolicy& policy,
                           int episodes, const SeedKey& seed,
                           const ExecPolicy& exec = ExecPolicy::serial_ref());

}  // namespace mag::policy
