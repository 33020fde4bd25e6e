#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mag/env.hpp"
#include "mag/local_models.hpp"
#include "mag/model_reward.hpp"
#include "mag/parallel.hpp"
#include "mag/policy.hpp"
#include "mag/seed.hpp"
#include "mag/types.hpp"

namespace mag::theory {

// Probability table over the enumerated joint-observation space.
struct DistributionTable {
    SpaceSpec spaces;
    std::vector<double> probs;

    static DistributionTable point_mass(const SpaceSpec& spaces, const JointObservation& o);
    static DistributionTable from_vector(const SpaceSpec& spaces, std::vector<double> probs);
    // Empirical distribution of the stored observations (uniform over entries).
    static DistributionTable from_dataset_obs(const Dataset& d);

    void require_valid() const;
};

struct ReturnEstimate {
    double value = 0.0;
    double tail_bound = 0.0;  // gamma^T * r_max / (1 - gamma)
    int truncation_T = 0;
};

// Exact discounted return of the policy under the true observation dynamics,
// propagating the joint-observation distribution T steps from `init`
// (default: the environment's induced initial distribution).
ReturnEstimate exact_return(const envs::JointObsDynamics& dyn, const policy::JointPolicy& pi,
                            double gamma, int T,
                            const std::optional<DistributionTable>& init = std::nullopt);

// Same propagation through the factored model; rewards from the model's own
// reward heads.
ReturnEstimate model_return(const models::LocalModelSet& ms, const policy::JointPolicy& pi,
                            const DistributionTable& init, double gamma, int T);

// Model-dynamics return with the true (known) reward table, the variant the
// performance bound compares against.
ReturnEstimate model_return_known_reward(const models::LocalModelSet& ms,
                                         const envs::JointObsDynamics& dyn,
                                         const policy::JointPolicy& pi,
                                         const DistributionTable& init, double gamma, int T);

// Joint-observation distributions D_0..D_T under the model and policy.
std::vector<std::vector<double>> propagate_model(const models::LocalModelSet& ms,
                                                 const policy::JointPolicy& pi,
                                                 const DistributionTable& init, int T);

// Max over joint observations of the total variation between the joint
// action distributions of the two policies.
double epsilon_pi(const policy::JointPolicy& pi_d, const policy::JointPolicy& pi);

// Model error at rollout step t (t >= 1): the expectation, under the model's
// own observation distribution at t-1, of the worst-case (over joint
// actions) Pinsker-style error sqrt(2 * sum_i E_{o'~model}[log ...]). The
// literal inner sum is cross-checked against sqrt(2 KL) to 1e-9.
double epsilon_m_t(const models::LocalModelSet& ms, const envs::JointObsDynamics& dyn,
                   const policy::JointPolicy& pi, int t, const DistributionTable& init);

// The whole series t = 1..T, sharing one propagation pass.
std::vector<double> epsilon_m_series(const models::LocalModelSet& ms,
                                     const envs::JointObsDynamics& dyn,
                                     const policy::JointPolicy& pi, const DistributionTable& init,
                                     int T);

// Literal inner sum of the epsilon_m formula at one (o, a):
// sum_i E_{o'~prod P^i}[log P^i(o^i'|o,a) - (1/N) log P(o'|o,a)].
double model_error_inner_literal(const models::LocalModelSet& ms,
                                 const envs::JointObsDynamics& dyn, const JointObservation& o,
                                 const JointAction& a);

// Every quantity of the performance bound on one (model, policy) instance.
struct BoundReport {
    double j_true = 0.0;          // J(pi), true dynamics + known reward
    double j_model = 0.0;         // J^P(pi), model dynamics + known reward
    double j_model_learned = 0.0; // model dynamics + learned reward heads
    double gap = 0.0;             // |j_true - j_model|
    double eps_pi = 0.0;
    std::vector<double> eps_m;    // eps_{m_1..T}
    double r_max = 0.0;
    double rhs_per_step = 0.0;
    double rhs_scaled = 0.0;      // max-scaled comparison bound (gamma * max_t eps_m)
    double delta_max = 0.0;       // max_t eps_m
    double delta_tv = 0.0;        // max over (a,t) of expected TV (reported only)
    int truncation_T = 0;
    double tail_bound = 0.0;

    bool sound(double slack = 1e-9) const { return gap <= rhs_per_step + 2.0 * tail_bound + slack; }
    bool tighter_than_scaled(double slack = 1e-9) const {
        return rhs_per_step <= rhs_scaled + 2.0 * tail_bound + slack;
    }
};

// Assembles the report at a common truncation horizon. When T is not given
// it is chosen so that the tail bound drops below 1e-6.
BoundReport bound_report(const envs::JointObsDynamics& dyn, const models::LocalModelSet& ms,
                      const policy::JointPolicy& pi_d, const policy::JointPolicy& pi,
                      const std::optional<DistributionTable>& init = std::nullopt,
                      std::optional<int> T = std::nullopt);

// The looser comparison bound alone: the per-step model error scaled up to
// its maximum over timesteps.
double bound_scaled_max(const BoundReport& report);

struct LemmaCheckResult {
    double tv_joint = 0.0;
    double rhs_max_form = 0.0;     // TV(marg) + max_x TV(cond)
    double rhs_expect_form = 0.0;  // TV(marg) + E_{x~p1} TV(cond)
    bool ok_max = false;
    bool ok_expect = false;
    std::string detail;
};

// Checks both chain-rule inequalities for a pair of joint tables p(x, y)
// given as row-major matrices. x values with zero marginal mass on either
// side are excluded from the conditional max / expectation.
LemmaCheckResult lemma_tv_chain_check(const std::vector<std::vector<double>>& p1_xy,
                                      const std::vector<std::vector<double>>& p2_xy);

struct PinskerCheckResult {
    double tv = 0.0;
    double kl = 0.0;
    bool ok = false;
    bool vacuous = false;  // infinite KL
};

PinskerCheckResult pinsker_check(std::span<const double> p, std::span<const double> q);

struct MonotonicObjective {
    double j_model = 0.0;     // J^P(pi), known reward
    double c_bound = 0.0;     // the return-gap bound's right-hand side
    double objective = 0.0;   // J^P - C
    double objective_2c = 0.0;  // J^P - 2C (the guaranteed lower bound)
    double j_true = 0.0;
    double tail_bound = 0.0;
};

MonotonicObjective monotonic_objective(const envs::JointObsDynamics& dyn,
                                       const models::LocalModelSet& ms,
                                       const policy::JointPolicy& pi_d,
                                       const policy::JointPolicy& pi, double gamma, int T,
                                       const std::optional<DistributionTable>& init = std::nullopt);

// Smallest T with gamma^T * r_max / (1 - gamma) below the tolerance.
int default_truncation(double gamma, double r_max, double tol = 1e-6);

// --- randomized-audit helpers -------------------------------------------

// Random tabular policy; logit spread controls how far from uniform.
policy::JointPolicy make_random_policy(const SpaceSpec& spaces, const SeedKey& seed,
                                       double logit_spread = 1.5);

// Random dense factored model: per-agent conditionals are mixtures of the
// true per-agent marginals with random positive rows (mixing rate drawn up
// to `max_corruption`), reward heads are the true rewards plus noise.
// Requires dense dynamics rows, which every preset provides.
models::LocalModelSet make_random_model_set(const envs::JointObsDynamics& dyn,
                                            const SeedKey& seed, double max_corruption = 0.5);

struct BoundAuditResult {
    int instances = 0;
    int sound_violations = 0;
    int tightness_violations = 0;
    double max_gap_over_rhs = 0.0;  // largest gap / rhs ratio observed
};

// Runs bound_report on `instances` random (model, policy) pairs.
BoundAuditResult audit_bound(const envs::JointObsDynamics& dyn, int instances,
                             const SeedKey& seed,
                             const ExecPolicy& exec = ExecPolicy::serial_ref());

}  // namespace mag::theory
