#include "mag/rollout.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace mag::rollout {

namespace {

// Scorer for the greedy baseline: every trajectory scores zero, so selection
// always takes trajectory 0's sample.
class ZeroScorer final : public reward::ErrorScorer {
public:
    double score(const JointObservation&, const JointAction&, double,
                 const JointObservation&) const override {
        return 0.0;
    }
};

double sequence_space_size(const SpaceSpec& spaces, int horizon) {
    return std::pow(static_cast<double>(spaces.joint_obs_count()), horizon);
}

// Expected per-step error at (o_t -> o_next) when the action is drawn from
// the policy.
double expected_step_error(const models::LocalModelSet& ms, const reward::ErrorScorer& scorer,
                           const policy::JointPolicy& policy, const JointObservation& o,
                           const JointObservation& o_next) {
    const auto probs = policy.joint_action_probs(o);
    double err = 0.0;
    for (int a = 0; a < ms.spaces().joint_act_count(); ++a) {
        const auto ja = ms.spaces().act_at(a);
        const double pr = ms.predict_joint(o, ja).mean_reward;
        err += probs[static_cast<std::size_t>(a)] * scorer.score(o, ja, pr, o_next);
    }
    return err;
}

JointAction most_likely_action(const policy::JointPolicy& policy, const JointObservation& o) {
    JointAction a;
    a.per_agent.resize(static_cast<std::size_t>(policy.spaces().n_agents()));
    for (int i = 0; i < policy.spaces().n_agents(); ++i) {
        const auto p = policy.action_probs(i, o.per_agent[static_cast<std::size_t>(i)]);
        std::size_t best = 0;
        for (std::size_t k = 1; k < p.size(); ++k)
            if (p[k] > p[best]) best = k;
        a.per_agent[static_cast<std::size_t>(i)] = static_cast<ActId>(best);
    }
    return a;
}

std::vector<PlannedTrajectory> shoot_enumerate(const models::LocalModelSet& ms,
                                               const reward::ErrorScorer& scorer,
                                               const policy::JointPolicy& policy,
                                               const ModelState& s_m0, const RolloutConfig& cfg,
                                               const ExecPolicy& exec) {
    const auto& spaces = ms.spaces();
    const double space = sequence_space_size(spaces, cfg.H);
    if (space > kBruteForceGuard) {
        std::ostringstream msg;
        msg << "shoot(enumerate): sequence space " << space << " exceeds guard "
            << kBruteForceGuard;
        throw std::runtime_error(msg.str());
    }
    const int n_obs = spaces.joint_obs_count();
    const auto n_seq = static_cast<std::size_t>(space);
    std::vector<PlannedTrajectory> trajs(n_seq);
    parallel_for(exec, n_seq, [&](std::size_t s) {
        // Decode the sequence: the first step varies fastest.
        std::vector<int> seq(static_cast<std::size_t>(cfg.H));
        std::size_t rem = s;
        for (int t = 0; t < cfg.H; ++t) {
            seq[static_cast<std::size_t>(t)] = static_cast<int>(rem % static_cast<std::size_t>(n_obs));
            rem /= static_cast<std::size_t>(n_obs);
        }
        PlannedTrajectory traj;
        JointObservation o = s_m0.obs;
        double discount = 1.0;
        for (int t = 0; t < cfg.H; ++t) {
            const auto o_next = spaces.obs_at(seq[static_cast<std::size_t>(t)]);
            PlannedStep step;
            double err;
            if (t == 0) {
                step.state = ModelState{o, s_m0.act};
                err = scorer.score(o, s_m0.act, ms.predict_joint(o, s_m0.act).mean_reward, o_next);
                step.action = ModelAction{o_next, ms.predict_joint(o, s_m0.act).mean_reward};
            } else {
                const auto a_hat = most_likely_action(policy, o);
                step.state = ModelState{o, a_hat};
                err = expected_step_error(ms, scorer, policy, o, o_next);
                step.action = ModelAction{o_next, ms.predict_joint(o, a_hat).mean_reward};
            }
            step.predicted_error = err;
            traj.score += discount * err;
            discount *= cfg.gamma_plan;
            traj.steps.push_back(std::move(step));
            o = o_next;
        }
        trajs[s] = std::move(traj);
    });
    return trajs;
}

}  // namespace

void RolloutConfig::validate() const {
    if (H < 1) throw std::invalid_argument("RolloutConfig: H must be >= 1");
    if (H > k) throw std::invalid_argument("RolloutConfig: H must be <= k");
    if (L < 1) throw std::invalid_argument("RolloutConfig: L must be >= 1");
    if (M < 1) throw std::invalid_argument("RolloutConfig: M must be >= 1");
    if (!(gamma_plan > 0.0) || gamma_plan > 1.0)
        throw std::invalid_argument("RolloutConfig: gamma_plan must be in (0, 1]");
}

std::vector<PlannedTrajectory> shoot(const models::LocalModelSet& ms,
                                     const reward::ErrorScorer& scorer,
                                     const policy::JointPolicy& policy, const ModelState& s_m0,
                                     const RolloutConfig& cfg, const SeedKey& seed,
                                     const ExecPolicy& exec) {
    if (cfg.H < 1) throw std::invalid_argument("shoot: H must be >= 1");
    if (cfg.L < 1) throw std::invalid_argument("shoot: L must be >= 1");
    ms.spaces().require(s_m0.obs);
    ms.spaces().require(s_m0.act);
    if (cfg.shoot_mode == ShootMode::enumerate)
        return shoot_enumerate(ms, scorer, policy, s_m0, cfg, exec);

    std::vector<PlannedTrajectory> trajs(static_cast<std::size_t>(cfg.L));
    parallel_for(exec, static_cast<std::size_t>(cfg.L), [&](std::size_t j) {
        const auto traj_seed = seed.child("traj", j);
        Rng rng_model(traj_seed.child("model"));
        Rng rng_policy(traj_seed.child("policy"));
        PlannedTrajectory traj;
        JointObservation o = s_m0.obs;
        JointAction a = s_m0.act;
        double discount = 1.0;
        for (int t = 0; t < cfg.H; ++t) {
            auto [o_next, pred_r] = ms.sample_joint(o, a, rng_model);
            const double err = scorer.score(o, a, pred_r, o_next);
            traj.steps.push_back(PlannedStep{ModelState{o, a}, ModelAction{o_next, pred_r}, err});
            traj.score += discount * err;
            discount *= cfg.gamma_plan;
            o = std::move(o_next);
            if (t + 1 < cfg.H) a = policy.act(o, rng_policy);
        }
        trajs[j] = std::move(traj);
    });
    return trajs;
}

namespace {

// Lowest index whose score sits within a numerical tie width of the optimum,
// so float noise between equivalent candidates cannot bias selection.
std::size_t best_score_index(std::span<const double> scores, SelectionRule rule) {
    double best = scores[0];
    for (double s : scores)
        best = rule == SelectionRule::min_error ? std::min(best, s) : std::max(best, s);
    const double eps = 1e-9 * std::max(1.0, std::abs(best));
    for (std::size_t j = 0; j < scores.size(); ++j) {
        const bool within = rule == SelectionRule::min_error ? scores[j] <= best + eps
                                                             : scores[j] >= best - eps;
        if (within) return j;
    }
    return 0;
}

}  // namespace

std::size_t select_index(std::span<const PlannedTrajectory> trajs, SelectionRule rule) {
    if (trajs.empty()) throw std::invalid_argument("select_prediction: no trajectories");
    std::vector<double> scores(trajs.size());
    for (std::size_t j = 0; j < trajs.size(); ++j) scores[j] = trajs[j].score;
    return best_score_index(scores, rule);
}

ModelAction select_prediction(std::span<const PlannedTrajectory> trajs, SelectionRule rule) {
    const auto idx = select_index(trajs, rule);
    if (trajs[idx].steps.empty()) throw std::invalid_argument("select_prediction: empty trajectory");
    return trajs[idx].steps.front().action;
}

std::vector<EnvTransition> planned_rollout(const models::LocalModelSet& ms,
                                           const reward::ErrorScorer& scorer,
                                           const policy::JointPolicy& policy, const Dataset& d_e,
                                           const RolloutConfig& cfg, const SeedKey& seed,
                                           const ExecPolicy& exec) {
    cfg.validate();
    if (d_e.empty()) throw std::runtime_error("planned_rollout: empty environment dataset");

    std::vector<std::vector<EnvTransition>> per_traj(static_cast<std::size_t>(cfg.M));
    parallel_for(exec, static_cast<std::size_t>(cfg.M), [&](std::size_t m) {
        const auto m_seed = seed.child("rollout", m);
        JointObservation o =
            d_e.sample_uniform(1, m_seed.child("init")).front().obs;
        std::vector<EnvTransition> traj;
        traj.reserve(static_cast<std::size_t>(cfg.k));
        for (int step = 0; step < cfg.k; ++step) {
            const auto step_seed = m_seed.child("step", static_cast<std::uint64_t>(step));
            const auto a = policy.act(o, step_seed.child("act"));
            const auto trajs =
                shoot(ms, scorer, policy, ModelState{o, a}, cfg, step_seed.child("plan"));
            const auto chosen = select_prediction(trajs, cfg.selection);
            EnvTransition t;
            t.obs = o;
            t.act = a;
            t.reward = chosen.pred_reward;
            t.next_obs = chosen.next_obs;
            t.terminal = step + 1 == cfg.k;
            traj.push_back(t);
            o = chosen.next_obs;
        }
        per_traj[m] = std::move(traj);
    });

    std::vector<EnvTransition> out;
    out.reserve(static_cast<std::size_t>(cfg.M) * static_cast<std::size_t>(cfg.k));
    for (auto& traj : per_traj)
        for (auto& t : traj) out.push_back(std::move(t));
    return out;
}

std::vector<EnvTransition> greedy_rollout(const models::LocalModelSet& ms,
                                          const policy::JointPolicy& policy, const Dataset& d_e,
                                          const RolloutConfig& cfg, const SeedKey& seed,
                                          const ExecPolicy& exec) {
    RolloutConfig greedy_cfg = cfg;
    greedy_cfg.L = 1;
    greedy_cfg.H = 1;
    greedy_cfg.shoot_mode = ShootMode::sample;
    ZeroScorer zero;
    return planned_rollout(ms, zero, policy, d_e, greedy_cfg, seed, exec);
}

double exact_sequence_score(const models::LocalModelSet& ms, const reward::ErrorScorer& scorer,
                            const policy::JointPolicy& policy, const ModelState& s_m0,
                            std::span<const int> next_obs_indices, double gamma_plan) {
    const auto& spaces = ms.spaces();
    double score = 0.0;
    double discount = 1.0;
    JointObservation o = s_m0.obs;
    for (std::size_t t = 0; t < next_obs_indices.size(); ++t) {
        const auto o_next = spaces.obs_at(next_obs_indices[t]);
        double err;
        if (t == 0) {
            err = scorer.score(o, s_m0.act, ms.predict_joint(o, s_m0.act).mean_reward, o_next);
        } else {
            err = expected_step_error(ms, scorer, policy, o, o_next);
        }
        score += discount * err;
        discount *= gamma_plan;
        o = o_next;
    }
    return score;
}

BruteForceResult brute_force_plan(const models::LocalModelSet& ms,
                                  const reward::ErrorScorer& scorer,
                                  const policy::JointPolicy& policy, const ModelState& s_m0,
                                  int horizon, double gamma_plan, SelectionRule rule) {
    if (horizon < 1) throw std::invalid_argument("brute_force_plan: horizon must be >= 1");
    const auto& spaces = ms.spaces();
    const double space = sequence_space_size(spaces, horizon);
    if (space > kBruteForceGuard) {
        std::ostringstream msg;
        msg << "brute_force_plan: sequence space " << space << " exceeds guard "
            << kBruteForceGuard;
        throw std::runtime_error(msg.str());
    }
    const int n_obs = spaces.joint_obs_count();
    const auto n_seq = static_cast<std::size_t>(space);
    std::vector<int> seq(static_cast<std::size_t>(horizon));
    std::vector<double> scores(n_seq);
    for (std::size_t s = 0; s < n_seq; ++s) {
        std::size_t rem = s;
        for (int t = 0; t < horizon; ++t) {
            seq[static_cast<std::size_t>(t)] = static_cast<int>(rem % static_cast<std::size_t>(n_obs));
            rem /= static_cast<std::size_t>(n_obs);
        }
        scores[s] = exact_sequence_score(ms, scorer, policy, s_m0, seq, gamma_plan);
    }
    // Same tie rule as select_index so enumeration-mode shooting and the
    // brute-force search pick identical winners.
    BruteForceResult best;
    best.sequence_index = best_score_index(scores, rule);
    best.score = scores[best.sequence_index];
    best.action = ModelAction{spaces.obs_at(static_cast<int>(best.sequence_index %
                                                             static_cast<std::size_t>(n_obs))),
                              ms.predict_joint(s_m0.obs, s_m0.act).mean_reward};
    return best;
}

}  // namespace mag::rollout
