#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "mag/env.hpp"
#include "mag/experiment.hpp"
#include "mag/rollout.hpp"
#include "mag/theory.hpp"
#include "test_util.hpp"

// The OpenMP kernels must be bitwise-identical to the serial reference
// paths: every parallel unit owns a child seed and writes only its slot, so
// the schedule cannot leak into results.

using namespace mag;

namespace {

const ExecPolicy kSerial = ExecPolicy::serial_ref();
const ExecPolicy kTeam2 = ExecPolicy::openmp(2);
const ExecPolicy kTeamAll = ExecPolicy::openmp(0);

struct World {
    envs::TabularDecPomdp env = envs::make_figure1_toy();
    envs::JointObsDynamics dyn = envs::derive_joint_obs_dynamics(env);
    models::LocalModelSet ms = theory::make_random_model_set(dyn, SeedKey(1));
    policy::JointPolicy pi = theory::make_random_policy(env.spaces, SeedKey(2));
    Dataset d_e = testutil::collect_dataset(env, 300, SeedKey(3));
};

}  // namespace

TEST_CASE("planned and greedy rollouts are schedule-independent") {
    World w;
    const reward::ExactScorer scorer(w.dyn, w.ms);
    rollout::RolloutConfig cfg;
    cfg.M = 32;
    cfg.k = 8;
    cfg.L = 4;
    cfg.H = 4;
    const auto serial = rollout::planned_rollout(w.ms, scorer, w.pi, w.d_e, cfg, SeedKey(4), kSerial);
    const auto team2 = rollout::planned_rollout(w.ms, scorer, w.pi, w.d_e, cfg, SeedKey(4), kTeam2);
    const auto all = rollout::planned_rollout(w.ms, scorer, w.pi, w.d_e, cfg, SeedKey(4), kTeamAll);
    CHECK(serial == team2);
    CHECK(serial == all);

    const auto gs = rollout::greedy_rollout(w.ms, w.pi, w.d_e, cfg, SeedKey(5), kSerial);
    const auto gp = rollout::greedy_rollout(w.ms, w.pi, w.d_e, cfg, SeedKey(5), kTeamAll);
    CHECK(gs == gp);
}

TEST_CASE("shooting trajectories are schedule-independent") {
    World w;
    const reward::ExactScorer scorer(w.dyn, w.ms);
    rollout::RolloutConfig cfg;
    cfg.L = 16;
    cfg.H = 5;
    cfg.k = 5;
    const rollout::ModelState s0{w.env.spaces.obs_at(0), w.env.spaces.act_at(1)};
    const auto a = rollout::shoot(w.ms, scorer, w.pi, s0, cfg, SeedKey(6), kSerial);
    const auto b = rollout::shoot(w.ms, scorer, w.pi, s0, cfg, SeedKey(6), kTeamAll);
    REQUIRE(a.size() == b.size());
    for (std::size_t j = 0; j < a.size(); ++j) {
        CHECK(a[j].score == b[j].score);
        REQUIRE(a[j].steps.size() == b[j].steps.size());
        for (std::size_t t = 0; t < a[j].steps.size(); ++t) {
            CHECK(a[j].steps[t].action == b[j].steps[t].action);
            CHECK(a[j].steps[t].predicted_error == b[j].steps[t].predicted_error);
        }
    }
}

TEST_CASE("bound audits are schedule-independent") {
    World w;
    const auto s = theory::audit_bound(w.dyn, 24, SeedKey(7), kSerial);
    const auto p = theory::audit_bound(w.dyn, 24, SeedKey(7), kTeamAll);
    CHECK(s.sound_violations == p.sound_violations);
    CHECK(s.tightness_violations == p.tightness_violations);
    CHECK(s.max_gap_over_rhs == p.max_gap_over_rhs);
}

TEST_CASE("policy evaluation is schedule-independent") {
    World w;
    const auto s = policy::evaluate_return(w.env, w.pi, 200, SeedKey(8), kSerial);
    const auto p = policy::evaluate_return(w.env, w.pi, 200, SeedKey(8), kTeamAll);
    CHECK(s.mean_return == p.mean_return);
    CHECK(s.se_return == p.se_return);
    CHECK(s.mean_discounted == p.mean_discounted);
    CHECK(s.env_steps == p.env_steps);
}

TEST_CASE("error analysis is schedule-independent") {
    World w;
    harness::Checkpoint ckpt;
    ckpt.models = w.ms;
    ckpt.predictor = reward::ModelRewardPredictor(w.env.spaces, SeedKey(9), {16});
    ckpt.policy = w.pi;
    ckpt.policy_old = w.pi;
    ckpt.critic = policy::CentralizedCritic(w.env.spaces, policy::PolicyBackend::tabular, SeedKey(10));
    rollout::RolloutConfig cfg;
    cfg.M = 8;
    cfg.k = 6;
    cfg.L = 3;
    cfg.H = 3;
    const auto s = harness::analyze_error(w.env, ckpt, w.d_e, cfg, 30, SeedKey(11), kSerial);
    const auto p = harness::analyze_error(w.env, ckpt, w.d_e, cfg, 30, SeedKey(11), kTeamAll);
    CHECK(s.planned == p.planned);
    CHECK(s.greedy == p.greedy);
    CHECK(s.diff == p.diff);
}

TEST_CASE("experiments with parallel inner kernels reproduce the serial run") {
    harness::ExperimentConfig cfg;
    cfg.env = "coop_matrix_chain";
    cfg.seed = 12;
    cfg.episodes = 3;
    cfg.rollout.M = 6;
    cfg.rollout.k = 5;
    cfg.rollout.L = 2;
    cfg.rollout.H = 2;
    cfg.eval_every = 1;
    cfg.eval_episodes = 8;
    cfg.predictor_epochs = 1;
    cfg.threads = 1;
    const auto serial = harness::run_experiment(cfg);
    cfg.threads = 0;
    const auto parallel = harness::run_experiment(cfg);
    REQUIRE(serial.records.size() == parallel.records.size());
    for (std::size_t i = 0; i < serial.records.size(); ++i) {
        CHECK(serial.records[i].to_kv() == parallel.records[i].to_kv());
    }
    CHECK(serial.checkpoint.policy == parallel.checkpoint.policy);
    CHECK(serial.checkpoint.models == parallel.checkpoint.models);
    CHECK(serial.checkpoint.predictor == parallel.checkpoint.predictor);
}
