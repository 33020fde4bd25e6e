#pragma once

#include <iosfwd>
#include <string>

#include "mag/local_models.hpp"
#include "mag/model_reward.hpp"
#include "mag/policy.hpp"

namespace mag::harness {

// Versioned text container bundling everything a later command needs to
// resume analysis: local models, error predictor, current policy, the
// pre-update policy snapshot, and the critic.
struct Checkpoint {
    long iteration = 0;
    long env_steps = 0;
    models::LocalModelSet models;
    reward::ModelRewardPredictor predictor;
    policy::JointPolicy policy;
    policy::JointPolicy policy_old;  // data-collecting policy of the last iteration
    policy::CentralizedCritic critic;

    void save(std::ostream& out) const;
    void save_file(const std::string& path) const;
    static Checkpoint load(std::istream& in);
    static Checkpoint load_file(const std::string& path);
};

}  // namespace mag::harness
