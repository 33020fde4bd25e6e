#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sstream>

#include "mag/env.hpp"
#include "mag/policy.hpp"
#include "mag/theory.hpp"
#include "test_util.hpp"

using namespace mag;
using namespace mag::policy;

namespace {

void set_logit(JointPolicy& pi, int agent, ObsId obs, ActId act, double value) {
    // Tabular actor is a linear map: W[a][o] then biases.
    auto& params = pi.actor(agent).mutable_parameters();
    const int n_obs = pi.spaces().obs_size(agent);
    params[static_cast<std::size_t>(act) * static_cast<std::size_t>(n_obs) +
           static_cast<std::size_t>(obs)] = value;
}

Dataset bandit_batch(const SpaceSpec& spaces, const JointPolicy& pi, int n, const SeedKey& seed) {
    Dataset d(spaces, static_cast<std::size_t>(n));
    Rng rng(seed);
    const auto o = JointObservation({0});
    for (int i = 0; i < n; ++i) {
        const auto a = pi.act(o, rng);
        EnvTransition t;
        t.obs = o;
        t.act = a;
        t.reward = a.per_agent[0] == 1 ? 1.0 : 0.0;
        t.next_obs = o;
        t.terminal = true;
        d.append(t);
    }
    return d;
}

}  // namespace

TEST_CASE("act: forced, uniform frequencies, determinism, probability floor") {
    const SpaceSpec spaces({2, 2}, 2);
    JointPolicy pi(spaces, PolicyBackend::tabular, SeedKey(1));

    SUBCASE("uniform init gives every joint action a quarter") {
        std::vector<long> counts(4, 0);
        Rng rng(SeedKey(2));
        const auto o = JointObservation({0, 1});
        const int n = 100000;
        for (int i = 0; i < n; ++i) ++counts[static_cast<std::size_t>(spaces.act_index(pi.act(o, rng)))];
        for (long c : counts) CHECK(std::abs(c / static_cast<double>(n) - 0.25) < 0.01);
    }
    SUBCASE("deterministic actors force the joint action") {
        set_logit(pi, 0, 0, 1, 50.0);
        set_logit(pi, 1, 1, 0, 50.0);
        const auto a = pi.act(JointObservation({0, 1}), SeedKey(3));
        CHECK(a == JointAction({1, 0}));
        // The floor keeps the other actions strictly positive.
        const auto p = pi.action_probs(0, 0);
        CHECK(p[0] >= JointPolicy::kProbFloor);
        CHECK(p[0] <= 2.0 * JointPolicy::kProbFloor);
    }
    SUBCASE("same seed, same action") {
        CHECK(pi.act(JointObservation({1, 1}), SeedKey(4)) ==
              pi.act(JointObservation({1, 1}), SeedKey(4)));
    }
}

TEST_CASE("joint action probabilities are the per-agent product") {
    const SpaceSpec spaces({2, 2}, 2);
    JointPolicy pi(spaces, PolicyBackend::tabular, SeedKey(5));
    set_logit(pi, 0, 0, 1, 1.3);
    set_logit(pi, 1, 0, 0, -0.4);
    const auto o = JointObservation({0, 0});
    const auto joint = pi.joint_action_probs(o);
    const auto p0 = pi.action_probs(0, 0);
    const auto p1 = pi.action_probs(1, 0);
    for (int a = 0; a < 4; ++a) {
        const auto ja = spaces.act_at(a);
        CHECK(joint[static_cast<std::size_t>(a)] ==
              doctest::Approx(p0[static_cast<std::size_t>(ja.per_agent[0])] *
                              p1[static_cast<std::size_t>(ja.per_agent[1])])
                  .epsilon(1e-12));
    }
}

TEST_CASE("ppo: zero advantages leave the actors untouched") {
    const SpaceSpec spaces({2, 2}, 2);
    const double gamma = 0.9;
    JointPolicy pi(spaces, PolicyBackend::tabular, SeedKey(6));
    CentralizedCritic critic(spaces, PolicyBackend::tabular, SeedKey(7));
    // Converged critic for constant reward 0.5: V = r / (1 - gamma).
    {
        auto& params = critic.net().mutable_parameters();
        for (std::size_t i = 0; i + 1 < params.size(); ++i) params[i] = 0.0;
        params.back() = 0.5 / (1.0 - gamma);
    }
    Dataset d(spaces, 64);
    Rng rng(SeedKey(8));
    for (int i = 0; i < 32; ++i) {
        EnvTransition t;
        t.obs = spaces.obs_at(static_cast<int>(rng.uniform_index(4)));
        t.act = spaces.act_at(static_cast<int>(rng.uniform_index(4)));
        t.reward = 0.5;
        t.next_obs = spaces.obs_at(static_cast<int>(rng.uniform_index(4)));
        t.terminal = false;
        d.append(t);
    }
    PpoHyper hyper;
    hyper.gamma = gamma;
    const auto before = pi;
    const auto [after, new_critic] = ppo_update(pi, critic, d, 4, hyper, SeedKey(9));
    for (int ag = 0; ag < 2; ++ag) {
        const auto& a = before.actor(ag).parameters();
        const auto& b = after.actor(ag).parameters();
        for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a[i] - b[i]) < 1e-12);
    }
    CHECK(after.version() == before.version() + 1);
}

TEST_CASE("ppo: dominant bandit action strengthens monotonically") {
    const SpaceSpec spaces({1}, 2);
    JointPolicy pi(spaces, PolicyBackend::tabular, SeedKey(10));
    CentralizedCritic critic(spaces, PolicyBackend::tabular, SeedKey(11));
    PpoHyper hyper;
    hyper.gamma = 0.9;
    hyper.segment_len = 1;
    hyper.lr_actor = 4e-3;
    double prev = pi.action_probs(0, 0)[1];
    CHECK(prev == doctest::Approx(0.5));  // uniform start
    for (int u = 0; u < 20; ++u) {
        const auto d = bandit_batch(spaces, pi, 256, SeedKey(12).child("batch", static_cast<std::uint64_t>(u)));
        auto [new_pi, new_critic] = ppo_update(pi, critic, d, 8, hyper, SeedKey(13));
        pi = std::move(new_pi);
        critic = std::move(new_critic);
        const double cur = pi.action_probs(0, 0)[1];
        CHECK(cur >= prev - 1e-9);
        prev = cur;
    }
    CHECK(prev > 0.7);
}

TEST_CASE("ppo: clipped samples contribute exactly zero actor gradient") {
    const std::vector<double> cur{0.3, 0.7};
    SUBCASE("positive advantage, ratio above 1 + clip") {
        // ratio = 0.7 / 0.5 = 1.4 > 1.2
        CHECK(clipped_logit_gradient(cur, 1, 0.5, 1.0, 0.2).empty());
    }
    SUBCASE("negative advantage, ratio below 1 - clip") {
        // ratio = 0.3 / 0.5 = 0.6 < 0.8
        CHECK(clipped_logit_gradient(cur, 0, 0.5, -1.0, 0.2).empty());
    }
    SUBCASE("zero advantage contributes nothing") {
        CHECK(clipped_logit_gradient(cur, 0, 0.3, 0.0, 0.2).empty());
    }
    SUBCASE("ratio inside the clip range matches the analytic gradient") {
        const double adv = 1.0;
        const double old_p = 0.69;  // ratio just above 1, inside range
        const auto g = clipped_logit_gradient(cur, 1, old_p, adv, 0.2);
        REQUIRE(g.size() == 2);
        // -A/old * p1 * (delta - p): floored term is negligible here.
        CHECK(g[1] == doctest::Approx(-adv / old_p * 0.7 * (1.0 - 0.7)).epsilon(1e-6));
        CHECK(g[0] == doctest::Approx(-adv / old_p * 0.7 * (0.0 - 0.3)).epsilon(1e-6));
    }
    SUBCASE("opposite-sign side is not clipped") {
        // Positive advantage with a small ratio must still push.
        CHECK_FALSE(clipped_logit_gradient(cur, 0, 0.9, 1.0, 0.2).empty());
        // Negative advantage with a large ratio must still push back.
        CHECK_FALSE(clipped_logit_gradient(cur, 1, 0.5, -1.0, 0.2).empty());
    }
}

TEST_CASE("ppo update is deterministic given inputs and seed") {
    const auto env = envs::make_figure1_toy();
    const auto d = testutil::collect_dataset(env, 200, SeedKey(18));
    JointPolicy pi(env.spaces, PolicyBackend::tabular, SeedKey(19));
    CentralizedCritic critic(env.spaces, PolicyBackend::tabular, SeedKey(20));
    PpoHyper hyper;
    hyper.gamma = env.gamma;
    hyper.segment_len = 10;
    const auto r1 = ppo_update(pi, critic, d, 3, hyper, SeedKey(21));
    const auto r2 = ppo_update(pi, critic, d, 3, hyper, SeedKey(21));
    CHECK(r1.first == r2.first);
    CHECK(r1.second == r2.second);
    CHECK_THROWS_AS(ppo_update(pi, critic, Dataset(env.spaces, 4), 1, hyper, SeedKey(22)),
                    std::runtime_error);
}

TEST_CASE("evaluate_return: zero rewards, zero variance, exact-evaluation match") {
    SUBCASE("zero-reward environment evaluates to exactly zero") {
        auto env = envs::make_coop_grid_nav();
        for (auto& per_act : env.reward)
            for (double& r : per_act) r = 0.0;
        JointPolicy pi(env.spaces, PolicyBackend::tabular, SeedKey(23));
        const auto ev = evaluate_return(env, pi, 32, SeedKey(24));
        CHECK(ev.mean_return == 0.0);
        CHECK(ev.se_return == 0.0);
    }
    SUBCASE("deterministic env and policy have zero standard error") {
        envs::TabularDecPomdp env;
        env.name = "det";
        env.spaces = SpaceSpec({2}, 2);
        env.n_states = 2;
        env.gamma = 0.9;
        env.horizon = 6;
        env.obs_fn = {{0}, {1}};
        env.transition = {{{0.0, 1.0}, {0.0, 1.0}}, {{1.0, 0.0}, {1.0, 0.0}}};
        env.reward = {{1.0, 1.0}, {2.0, 2.0}};
        env.init_dist = {1.0, 0.0};
        env.validate();
        JointPolicy pi(env.spaces, PolicyBackend::tabular, SeedKey(25));
        set_logit(pi, 0, 0, 0, 60.0);
        set_logit(pi, 0, 1, 0, 60.0);
        const auto ev = evaluate_return(env, pi, 16, SeedKey(26));
        CHECK(ev.se_return == 0.0);
        CHECK(ev.mean_return == doctest::Approx(9.0));  // 1 + 2 + 1 + 2 + 1 + 2
    }
    SUBCASE("Monte Carlo matches the exact evaluation within three SEs") {
        const auto env = envs::make_coop_matrix_chain();
        const auto dyn = envs::derive_joint_obs_dynamics(env);
        JointPolicy pi(env.spaces, PolicyBackend::tabular, SeedKey(27));
        const auto exact = theory::exact_return(dyn, pi, env.gamma, env.horizon);
        const auto mc = evaluate_return(env, pi, 4000, SeedKey(28));
        CHECK(std::abs(mc.mean_discounted - exact.value) <= 3.0 * mc.se_discounted + 1e-9);
    }
}

TEST_CASE("policy and critic round-trip their checkpoint form") {
    const SpaceSpec spaces({3, 2}, 2);
    JointPolicy pi(spaces, PolicyBackend::mlp, SeedKey(29), {8});
    CentralizedCritic critic(spaces, PolicyBackend::mlp, SeedKey(30), {8});
    std::ostringstream out;
    pi.save(out);
    critic.save(out);
    std::istringstream in(out.str());
    const auto pi2 = JointPolicy::load(in);
    const auto critic2 = CentralizedCritic::load(in);
    CHECK(pi2 == pi);
    CHECK(critic2 == critic);
}
