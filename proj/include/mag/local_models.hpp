#pragma once

#include <iosfwd>
#include <span>
#include <vector>

#include "mag/dataset.hpp"
#include "mag/env.hpp"
#include "mag/mlp.hpp"
#include "mag/seed.hpp"
#include "mag/types.hpp"

namespace mag::models {

enum class ModelBackend { tabular, mlp };

// Per-agent predictive model: a categorical distribution over the agent's
// next observation plus a scalar estimate of the global reward, both
// conditioned on the full joint (o, a).
class LocalModel {
public:
    LocalModel() = default;
    LocalModel(int agent_id, SpaceSpec spaces, ModelBackend backend, const SeedKey& seed,
               double laplace_alpha = 0.5, std::vector<int> hidden = {64},
               double learning_rate = 5e-4);

    int agent_id() const { return agent_id_; }
    ModelBackend backend() const { return backend_; }
    const SpaceSpec& spaces() const { return spaces_; }

    // Distribution over this agent's next observation given (o, a).
    std::vector<double> predict_obs(const JointObservation& o, const JointAction& a) const;
    double predict_reward(const JointObservation& o, const JointAction& a) const;

    void train_tabular(const Dataset& d);
    void train_mlp(std::span<const EnvTransition> batch);

    // Installs an explicit conditional and reward estimate at one (o, a)
    // cell (tabular backend only; conditional must sum to 1). The values are
    // stored verbatim as fractional counts, so predictions reproduce them
    // exactly when the model was built with laplace_alpha = 0.
    void set_tabular_cell(const JointObservation& o, const JointAction& a,
                          std::vector<double> conditional, double reward_estimate);

    double laplace_alpha() const { return alpha_; }
    double learning_rate() const { return lr_; }

    void save(std::ostream& out) const;
    static LocalModel load(std::istream& in);
    bool operator==(const LocalModel&) const = default;

private:
    friend class LocalModelSet;

    int agent_id_ = 0;
    SpaceSpec spaces_;
    ModelBackend backend_ = ModelBackend::tabular;
    double alpha_ = 0.5;
    double lr_ = 5e-4;

    // tabular backend: per (o,a) cell counts and reward sums
    std::vector<std::vector<double>> counts_;      // [cell][next obs id]
    std::vector<double> reward_sum_;               // [cell]
    std::vector<double> reward_n_;                 // [cell]
    double global_reward_sum_ = 0.0;
    double global_reward_n_ = 0.0;

    // mlp backend: one-hot(o) ++ one-hot(a) -> logits over obs_size + reward
    Mlp net_;

    std::size_t cell(const JointObservation& o, const JointAction& a) const;
    std::vector<double> encode_input(const JointObservation& o, const JointAction& a) const;
};

// The set of N local models, one per agent; the joint prediction is the
// product of the per-agent categoricals.
class LocalModelSet {
public:
    LocalModelSet() = default;
    LocalModelSet(SpaceSpec spaces, ModelBackend backend, const SeedKey& seed,
                  double laplace_alpha = 0.5, std::vector<int> hidden = {64},
                  double learning_rate = 5e-4);

    // Model set that reproduces a factored true dynamics exactly: per-agent
    // conditionals are the marginals of the dynamics rows and the reward
    // heads return the true rewards. Exact whenever the dynamics rows factor
    // per agent (all rows for other cases are best factored approximations).
    static LocalModelSet perfect(const envs::JointObsDynamics& dyn);

    const SpaceSpec& spaces() const { return spaces_; }
    int n_agents() const { return spaces_.n_agents(); }
    const LocalModel& model(int agent) const { return models_[static_cast<std::size_t>(agent)]; }
    LocalModel& mutable_model(int agent) { return models_[static_cast<std::size_t>(agent)]; }
    long trained_steps() const { return trained_steps_; }
    ModelBackend backend() const { return backend_; }

    // Algorithm line: fit every local model on the environment dataset with
    // the one-step loss (tabular: smoothed empirical conditionals; mlp:
    // categorical NLL plus squared reward error).
    void train_one_step(const Dataset& d, int epochs, const SeedKey& seed);

    struct JointPrediction {
        std::vector<double> joint_probs;        // over joint observation indices
        std::vector<double> per_agent_reward;   // one estimate per agent
        double mean_reward = 0.0;
    };
    JointPrediction predict_joint(const JointObservation& o, const JointAction& a) const;

    // Per-agent categorical draws plus the mean of the reward heads.
    std::pair<JointObservation, double> sample_joint(const JointObservation& o,
                                                     const JointAction& a, Rng& rng) const;
    std::pair<JointObservation, double> sample_joint(const JointObservation& o,
                                                     const JointAction& a,
                                                     const SeedKey& seed) const;

    // Mean held-out negative log-likelihood of next observations (plus
    // squared reward error), for diagnostics.
    double negative_log_likelihood(std::span<const EnvTransition> batch) const;

    void save(std::ostream& out) const;
    static LocalModelSet load(std::istream& in);
    bool operator==(const LocalModelSet&) const = default;

private:
    SpaceSpec spaces_;
    ModelBackend backend_ = ModelBackend::tabular;
    std::vector<LocalModel> models_;
    long trained_steps_ = 0;
};

}  // namespace mag::models
