#pragma once

#include <span>
#include <vector>

#include "mag/dataset.hpp"
#include "mag/local_models.hpp"
#include "mag/model_reward.hpp"
#include "mag/parallel.hpp"
#include "mag/policy.hpp"
#include "mag/seed.hpp"
#include "mag/types.hpp"

namespace mag::rollout {

// Model-MMDP state: the pair (o_t, a_t) the local models condition on.
struct ModelState {
    JointObservation obs;
    JointAction act;
};

// Model-MMDP action: the predicted next joint observation together with the
// models' global reward estimate.
struct ModelAction {
    JointObservation next_obs;
    double pred_reward = 0.0;

    bool operator==(const ModelAction&) const = default;
};

struct PlannedStep {
    ModelState state;
    ModelAction action;
    double predicted_error = 0.0;
};

// One shooting trajectory: H steps and the accumulated (optionally
// discounted) predicted error.
struct PlannedTrajectory {
    std::vector<PlannedStep> steps;
    double score = 0.0;
};

enum class SelectionRule {
    min_error,       // smallest accumulated predicted error (default)
    literal_argmax,  // ablation: largest accumulated predictor output
};

enum class ShootMode {
    sample,     // L random trajectories (random-sampling shooting)
    enumerate,  // one trajectory per H-step next-observation sequence, scored
                // with exact expectations over the policy
};

struct RolloutConfig {
    int k = 10;              // rollout length
    int M = 4;               // parallel rollouts
    int H = 5;               // planning horizon
    int L = 5;               // shooting trajectories
    double gamma_plan = 1.0; // discount inside planning
    SelectionRule selection = SelectionRule::min_error;
    ShootMode shoot_mode = ShootMode::sample;

    void validate() const;
    bool operator==(const RolloutConfig&) const = default;
};

// L rollouts of H steps from the shared initial model-state, alternating
// model sampling with policy sampling; each step is scored by the error
// scorer. In enumerate mode there is one trajectory per next-observation
// sequence (lexicographic in joint-observation indices) and the per-step
// errors are exact expectations over the policy, so the scores match
// brute_force_plan term by term.
std::vector<PlannedTrajectory> shoot(const models::LocalModelSet& ms,
                                     const reward::ErrorScorer& scorer,
                                     const policy::JointPolicy& policy, const ModelState& s_m0,
                                     const RolloutConfig& cfg, const SeedKey& seed,
                                     const ExecPolicy& exec = ExecPolicy::serial_ref());

// Index of the winning trajectory under the selection rule; ties break to the
// lowest index.
std::size_t select_index(std::span<const PlannedTrajectory> trajs,
                         SelectionRule rule = SelectionRule::min_error);

// First model-action of the winning trajectory.
ModelAction select_prediction(std::span<const PlannedTrajectory> trajs,
                              SelectionRule rule = SelectionRule::min_error);

// Full MAG rollout (initial observations drawn uniformly from d_e; policy
// acts, shoot+select chooses each prediction). Returns M*k transitions,
// trajectory-major, with `terminal` marking segment ends.
std::vector<EnvTransition> planned_rollout(const models::LocalModelSet& ms,
                                           const reward::ErrorScorer& scorer,
                                           const policy::JointPolicy& policy, const Dataset& d_e,
                                           const RolloutConfig& cfg, const SeedKey& seed,
                                           const ExecPolicy& exec = ExecPolicy::serial_ref());

// Baseline: one-step sampling straight from the local models (no lookahead).
// Exactly planned_rollout with L = 1, H = 1 and a zero scorer, sharing its
// seed layout, so the two coincide under shared seeds when L = 1.
std::vector<EnvTransition> greedy_rollout(const models::LocalModelSet& ms,
                                          const policy::JointPolicy& policy, const Dataset& d_e,
                                          const RolloutConfig& cfg, const SeedKey& seed,
                                          const ExecPolicy& exec = ExecPolicy::serial_ref());

// Exact expected score of one H-step next-observation sequence: step 0 uses
// the given initial action, later steps take exact expectations over the
// policy.
double exact_sequence_score(const models::LocalModelSet& ms, const reward::ErrorScorer& scorer,
                            const policy::JointPolicy& policy, const ModelState& s_m0,
                            std::span<const int> next_obs_indices, double gamma_plan);

struct BruteForceResult {
    ModelAction action;
    double score = 0.0;
    std::size_t sequence_index = 0;  // lexicographic rank of the winning sequence
};

// Exhaustive plan over all |joint obs|^H next-observation sequences with
// exact expectations over the policy. Refuses when the sequence space
// exceeds the guard.
BruteForceResult brute_force_plan(const models::LocalModelSet& ms,
                                  const reward::ErrorScorer& scorer,
                                  const policy::JointPolicy& policy, const ModelState& s_m0,
                                  int horizon, double gamma_plan = 1.0,
                                  SelectionRule rule = SelectionRule::min_error);

constexpr double kBruteForceGuard = 1e6;

}  // namespace mag::rollout
