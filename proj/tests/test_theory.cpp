#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "mag/env.hpp"
#include "mag/prob.hpp"
#include "mag/theory.hpp"
#include "test_util.hpp"

using namespace mag;
using namespace mag::theory;

namespace {

// Single-agent environment with one absorbing-by-construction state paying 1.
envs::TabularDecPomdp absorbing_reward_env() {
    envs::TabularDecPomdp env;
    env.name = "absorbing";
    env.spaces = SpaceSpec({1}, 1);
    env.n_states = 1;
    env.gamma = 0.5;
    env.horizon = 100;
    env.obs_fn = {{0}};
    env.transition = {{{1.0}}};
    env.reward = {{1.0}};
    env.init_dist = {1.0};
    env.validate();
    return env;
}

// Dynamics whose rows are all identical, so the model-induced observation
// distribution is stationary from the start when the initial table equals
// the shared model row.
struct StationaryCase {
    envs::TabularDecPomdp env;
    envs::JointObsDynamics dyn;
    models::LocalModelSet ms;

    StationaryCase()
        : env(make_env()),
          dyn(envs::derive_joint_obs_dynamics(env)),
          ms(make_model(dyn)) {}

    static envs::TabularDecPomdp make_env() {
        envs::TabularDecPomdp env;
        env.name = "stationary";
        env.spaces = SpaceSpec({2}, 2);
        env.n_states = 2;
        env.gamma = 0.9;
        env.horizon = 50;
        env.obs_fn = {{0}, {1}};
        env.transition = {{{0.75, 0.25}, {0.75, 0.25}}, {{0.75, 0.25}, {0.75, 0.25}}};
        env.reward = {{1.0, 1.0}, {0.5, 0.5}};
        env.init_dist = {0.5, 0.5};
        env.validate();
        return env;
    }

    static models::LocalModelSet make_model(const envs::JointObsDynamics& dyn) {
        models::LocalModelSet ms(dyn.spaces, models::ModelBackend::tabular, SeedKey(0), 0.0);
        for (int o = 0; o < 2; ++o)
            for (int a = 0; a < 2; ++a)
                ms.mutable_model(0).set_tabular_cell(dyn.spaces.obs_at(o), dyn.spaces.act_at(a),
                                                     {0.5, 0.5}, dyn.reward_at(o, a));
        return ms;
    }
};

}  // namespace

TEST_CASE("exact_return: zero rewards, geometric series, Monte-Carlo oracle") {
    SUBCASE("zero rewards evaluate to exactly zero") {
        auto env = envs::make_figure1_toy();
        for (auto& per_act : env.reward)
            for (double& r : per_act) r = 0.0;
        const auto dyn = envs::derive_joint_obs_dynamics(env);
        const auto pi = make_random_policy(env.spaces, SeedKey(1));
        CHECK(exact_return(dyn, pi, env.gamma, 100).value == 0.0);
    }
    SUBCASE("absorbing unit reward with gamma one half sums to two") {
        const auto dyn = envs::derive_joint_obs_dynamics(absorbing_reward_env());
        const auto pi = make_random_policy(dyn.spaces, SeedKey(2));
        const auto r = exact_return(dyn, pi, 0.5, 60);
        CHECK(r.value == doctest::Approx(2.0).epsilon(1e-12));
        CHECK(r.tail_bound < 1e-15);
    }
    SUBCASE("every preset matches Monte Carlo within three standard errors") {
        for (const auto& name : envs::preset_names()) {
            const auto env = envs::make_preset(name);
            const auto dyn = envs::derive_joint_obs_dynamics(env);
            const auto pi = make_random_policy(env.spaces, SeedKey(3).child(name), 0.7);
            const auto exact = exact_return(dyn, pi, env.gamma, env.horizon);
            const auto mc = policy::evaluate_return(env, pi, 3000, SeedKey(4).child(name));
            CHECK(std::abs(mc.mean_discounted - exact.value) <=
                  3.0 * mc.se_discounted + 1e-9);
        }
    }
}

TEST_CASE("exact_return is linear in the reward table") {
    const auto env = envs::make_coop_matrix_chain();
    auto dyn_a = envs::derive_joint_obs_dynamics(env);
    auto dyn_b = dyn_a;
    auto dyn_mix = dyn_a;
    Rng rng(SeedKey(5));
    for (int o = 0; o < dyn_a.spaces.joint_obs_count(); ++o) {
        for (int a = 0; a < dyn_a.spaces.joint_act_count(); ++a) {
            const double ra = rng.uniform(-1.0, 1.0);
            const double rb = rng.uniform(-1.0, 1.0);
            dyn_a.reward_o[static_cast<std::size_t>(o)][static_cast<std::size_t>(a)] = ra;
            dyn_b.reward_o[static_cast<std::size_t>(o)][static_cast<std::size_t>(a)] = rb;
            dyn_mix.reward_o[static_cast<std::size_t>(o)][static_cast<std::size_t>(a)] =
                2.0 * ra - 0.5 * rb;
        }
    }
    const auto pi = make_random_policy(env.spaces, SeedKey(6));
    const double va = exact_return(dyn_a, pi, env.gamma, 200).value;
    const double vb = exact_return(dyn_b, pi, env.gamma, 200).value;
    const double vmix = exact_return(dyn_mix, pi, env.gamma, 200).value;
    CHECK(vmix == doctest::Approx(2.0 * va - 0.5 * vb).epsilon(1e-9));
}

TEST_CASE("model_return: perfect model equals exact return to 1e-9") {
    const auto env = envs::make_coop_grid_nav();
    const auto dyn = envs::derive_joint_obs_dynamics(env);
    const auto ms = models::LocalModelSet::perfect(dyn);
    const auto pi = make_random_policy(env.spaces, SeedKey(7));
    const auto init = DistributionTable::from_vector(env.spaces, dyn.init_dist_o);
    const double j_true = exact_return(dyn, pi, env.gamma, 300).value;
    CHECK(model_return_known_reward(ms, dyn, pi, init, env.gamma, 300).value ==
          doctest::Approx(j_true).epsilon(1e-9));
    // Reward heads of the perfect model are exact as well.
    CHECK(model_return(ms, pi, init, env.gamma, 300).value ==
          doctest::Approx(j_true).epsilon(1e-9));
}

TEST_CASE("model_return: deterministic chain has the closed geometric form") {
    // One observation, deterministic self-loop, reward head 0.25.
    const SpaceSpec spaces({1}, 1);
    models::LocalModelSet ms(spaces, models::ModelBackend::tabular, SeedKey(0), 0.0);
    ms.mutable_model(0).set_tabular_cell(spaces.obs_at(0), spaces.act_at(0), {1.0}, 0.25);
    const auto pi = make_random_policy(spaces, SeedKey(8));
    const auto init = DistributionTable::point_mass(spaces, spaces.obs_at(0));
    const double gamma = 0.8;
    const int T = 120;
    const double expected = 0.25 * (1.0 - std::pow(gamma, T)) / (1.0 - gamma);
    CHECK(model_return(ms, pi, init, gamma, T).value == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("model_return matches a large-sample greedy simulation") {
    const auto env = envs::make_figure1_toy();
    const auto dyn = envs::derive_joint_obs_dynamics(env);
    const auto ms = make_random_model_set(dyn, SeedKey(9));
    const auto pi = make_random_policy(env.spaces, SeedKey(10));
    const auto start = env.spaces.obs_at(0);
    const auto init = DistributionTable::point_mass(env.spaces, start);
    const int T = 20;
    const double exact = model_return(ms, pi, init, env.gamma, T).value;

    // Simulation oracle: roll the model chain forward with sampled actions.
    const int episodes = 4000;
    double mean = 0.0, m2 = 0.0;
    for (int e = 0; e < episodes; ++e) {
        Rng rng(SeedKey(11).child("episode", static_cast<std::uint64_t>(e)));
        auto o = start;
        double g = 1.0, ret = 0.0;
        for (int t = 0; t < T; ++t) {
            const auto a = pi.act(o, rng);
            const auto pred = ms.predict_joint(o, a);
            ret += g * pred.mean_reward;
            g *= env.gamma;
            o = ms.sample_joint(o, a, rng).first;
        }
        const double d = ret - mean;
        mean += d / (e + 1);
        m2 += d * (ret - mean);
    }
    const double se = std::sqrt(m2 / (episodes - 1) / episodes);
    CHECK(std::abs(mean - exact) <= 3.0 * se + 1e-9);
}

TEST_CASE("epsilon_pi: zero at identity, analytic single-agent, product cross-check") {
    const SpaceSpec one({2}, 2);
    SUBCASE("identical policies have zero shift") {
        const auto pi = make_random_policy(one, SeedKey(12));
        CHECK(epsilon_pi(pi, pi) == 0.0);
    }
    SUBCASE("deterministic versus uniform is one half") {
        auto pi_d = make_random_policy(one, SeedKey(13), 0.0);
        auto pi = make_random_policy(one, SeedKey(14), 0.0);
        auto& params = pi_d.actor(0).mutable_parameters();
        params[0] = 80.0;  // action 0 at observation 0
        params[1] = 80.0;  // action 0 at observation 1
        CHECK(epsilon_pi(pi_d, pi) == doctest::Approx(0.5).epsilon(1e-6));
    }
    SUBCASE("two shifted agents cross-check against four-cell enumeration") {
        const SpaceSpec two({2, 2}, 2);
        const auto pi_d = make_random_policy(two, SeedKey(15));
        const auto pi = make_random_policy(two, SeedKey(16));
        double worst = 0.0;
        for (int o = 0; o < two.joint_obs_count(); ++o) {
            const auto jo = two.obs_at(o);
            double tv = 0.0;
            for (int a0 = 0; a0 < 2; ++a0) {
                for (int a1 = 0; a1 < 2; ++a1) {
                    const double pd = pi_d.action_probs(0, jo.per_agent[0])[static_cast<std::size_t>(a0)] *
                                      pi_d.action_probs(1, jo.per_agent[1])[static_cast<std::size_t>(a1)];
                    const double pc = pi.action_probs(0, jo.per_agent[0])[static_cast<std::size_t>(a0)] *
                                      pi.action_probs(1, jo.per_agent[1])[static_cast<std::size_t>(a1)];
                    tv += std::abs(pd - pc);
                }
            }
            worst = std::max(worst, 0.5 * tv);
        }
        CHECK(epsilon_pi(pi_d, pi) == doctest::Approx(worst).epsilon(1e-12));
    }
}

TEST_CASE("epsilon_m_t: perfect model zero, two-term KL oracle, point-mass reduction") {
    SUBCASE("perfect model vanishes for all t") {
        const auto env = envs::make_coop_matrix_chain();
        const auto dyn = envs::derive_joint_obs_dynamics(env);
        const auto ms = models::LocalModelSet::perfect(dyn);
        const auto pi = make_random_policy(env.spaces, SeedKey(17));
        const auto init = DistributionTable::from_vector(env.spaces, dyn.init_dist_o);
        const auto eps = epsilon_m_series(ms, dyn, pi, init, 8);
        for (double e : eps) CHECK(e <= 1e-7);
    }
    SUBCASE("single-cell environment reduces to sqrt(2 KL) with a 2-term KL") {
        // One observation-action cell: P = [0.75, 0.25], model [0.5, 0.5].
        envs::TabularDecPomdp env;
        env.name = "cell";
        env.spaces = SpaceSpec({2}, 1);
        env.n_states = 2;
        env.gamma = 0.9;
        env.horizon = 10;
        env.obs_fn = {{0}, {1}};
        env.transition = {{{0.75, 0.25}}, {{0.75, 0.25}}};
        env.reward = {{0.0}, {0.0}};
        env.init_dist = {1.0, 0.0};
        env.validate();
        const auto dyn = envs::derive_joint_obs_dynamics(env);
        models::LocalModelSet ms(env.spaces, models::ModelBackend::tabular, SeedKey(0), 0.0);
        for (int o = 0; o < 2; ++o)
            ms.mutable_model(0).set_tabular_cell(env.spaces.obs_at(o), env.spaces.act_at(0),
                                                 {0.5, 0.5}, 0.0);
        const auto pi = make_random_policy(env.spaces, SeedKey(18));
        const auto init = DistributionTable::point_mass(env.spaces, env.spaces.obs_at(0));
        const double kl = 0.5 * std::log(0.5 / 0.75) + 0.5 * std::log(0.5 / 0.25);
        const double expected = std::sqrt(2.0 * kl);
        // t = 1 with a point mass is exactly max_a sqrt(2 KL) at that cell.
        CHECK(epsilon_m_t(ms, dyn, pi, 1, init) == doctest::Approx(expected).epsilon(1e-9));
        CHECK_THROWS_AS(epsilon_m_t(ms, dyn, pi, 0, init), std::invalid_argument);
    }
}

TEST_CASE("bound report: degenerate cases and randomized audit") {
    const auto env = envs::make_coop_matrix_chain();
    const auto dyn = envs::derive_joint_obs_dynamics(env);
    SUBCASE("perfect model and unchanged policy zero everything") {
        const auto ms = models::LocalModelSet::perfect(dyn);
        const auto pi = make_random_policy(env.spaces, SeedKey(19));
        const auto rep = bound_report(dyn, ms, pi, pi);
        CHECK(rep.gap <= 1e-9);
        CHECK(rep.eps_pi == 0.0);
        CHECK(rep.rhs_per_step <= 1e-6);
        CHECK(rep.sound());
        CHECK(rep.tighter_than_scaled());
    }
    SUBCASE("perfect model with a shifted policy leaves only the policy term") {
        const auto ms = models::LocalModelSet::perfect(dyn);
        const auto pi_d = make_random_policy(env.spaces, SeedKey(20));
        const auto pi = make_random_policy(env.spaces, SeedKey(21));
        const auto rep = bound_report(dyn, ms, pi_d, pi);
        const double front = dyn.r_max / ((1.0 - dyn.gamma) * (1.0 - dyn.gamma));
        CHECK(rep.rhs_per_step == doctest::Approx(front * 2.0 * rep.eps_pi).epsilon(1e-9));
        CHECK(rep.sound());
    }
    SUBCASE("one hundred random instances violate nothing") {
        const auto audit = audit_bound(dyn, 100, SeedKey(22));
        CHECK(audit.sound_violations == 0);
        CHECK(audit.tightness_violations == 0);
        CHECK(audit.max_gap_over_rhs <= 1.0);
    }
}

TEST_CASE("stationary model error makes both bounds' model terms coincide") {
    const StationaryCase sc;
    const auto pi = make_random_policy(sc.env.spaces, SeedKey(23));
    // Initial table equal to the shared model row [0.5, 0.5].
    const auto init = DistributionTable::from_vector(sc.env.spaces, {0.5, 0.5});
    const auto rep = bound_report(sc.dyn, sc.ms, pi, pi, init);
    for (std::size_t t = 1; t < rep.eps_m.size(); ++t)
        CHECK(rep.eps_m[t] == doctest::Approx(rep.eps_m[0]).epsilon(1e-12));
    // (1-g) sum g^t eps equals g*eps up to the truncated tail.
    const double front = sc.dyn.r_max / ((1.0 - sc.dyn.gamma) * (1.0 - sc.dyn.gamma));
    const double tail_term = front * std::pow(sc.dyn.gamma, rep.truncation_T + 1) * rep.delta_max;
    CHECK(rep.rhs_scaled - rep.rhs_per_step <= tail_term + 1e-9);
    CHECK(rep.rhs_per_step <= rep.rhs_scaled + 1e-9);
}

TEST_CASE("lemma chain check: identities, tight product case, randomized trials") {
    SUBCASE("identical joints") {
        const std::vector<std::vector<double>> p{{0.25, 0.25}, {0.25, 0.25}};
        const auto res = lemma_tv_chain_check(p, p);
        CHECK(res.ok_max);
        CHECK(res.ok_expect);
        CHECK(res.tv_joint == 0.0);
    }
    SUBCASE("marginal-only difference is tight") {
        // p(x, y) = p(x) q(y) with shared q: conditional TVs vanish.
        const std::vector<double> q{0.3, 0.7};
        const std::vector<double> m1{0.2, 0.8}, m2{0.6, 0.4};
        std::vector<std::vector<double>> p1(2, std::vector<double>(2)), p2 = p1;
        for (int x = 0; x < 2; ++x)
            for (int y = 0; y < 2; ++y) {
                p1[x][y] = m1[static_cast<std::size_t>(x)] * q[static_cast<std::size_t>(y)];
                p2[x][y] = m2[static_cast<std::size_t>(x)] * q[static_cast<std::size_t>(y)];
            }
        const auto res = lemma_tv_chain_check(p1, p2);
        CHECK(res.ok_max);
        CHECK(res.rhs_max_form == doctest::Approx(res.tv_joint).epsilon(1e-12));
    }
    SUBCASE("one thousand random pairs hold") {
        for (int i = 0; i < 1000; ++i) {
            Rng rng(SeedKey(24).child("pair", static_cast<std::uint64_t>(i)));
            auto random_joint = [&]() {
                std::vector<std::vector<double>> p(4, std::vector<double>(4));
                double sum = 0.0;
                for (auto& row : p)
                    for (double& x : row) {
                        x = rng.uniform01() + 1e-9;
                        sum += x;
                    }
                for (auto& row : p)
                    for (double& x : row) x /= sum;
                return p;
            };
            const auto res = lemma_tv_chain_check(random_joint(), random_joint());
            CHECK(res.ok_max);
            CHECK(res.ok_expect);
        }
    }
}

TEST_CASE("pinsker check: identity, analytic case, vacuous flag, random trials") {
    SUBCASE("equal distributions") {
        const std::vector<double> p{0.4, 0.6};
        const auto res = pinsker_check(p, p);
        CHECK(res.ok);
        CHECK(res.tv == 0.0);
    }
    SUBCASE("near-point mass against uniform") {
        const std::vector<double> p{1.0 - 1e-9, 1e-9};
        const std::vector<double> q{0.5, 0.5};
        const auto res = pinsker_check(p, q);
        CHECK(res.ok);
        CHECK(res.tv == doctest::Approx(0.5).epsilon(1e-6));
        CHECK(std::sqrt(res.kl / 2.0) == doctest::Approx(0.5887).epsilon(1e-3));
    }
    SUBCASE("infinite divergence is vacuously satisfied and flagged") {
        const std::vector<double> p{0.5, 0.5};
        const std::vector<double> q{1.0, 0.0};
        const auto res = pinsker_check(p, q);
        CHECK(res.ok);
        CHECK(res.vacuous);
    }
    SUBCASE("one thousand random pairs hold") {
        for (int i = 0; i < 1000; ++i) {
            Rng rng(SeedKey(25).child("pair", static_cast<std::uint64_t>(i)));
            auto random_dist = [&] {
                std::vector<double> p(6);
                for (double& x : p) x = rng.uniform01() + 1e-9;
                normalize_in_place(p);
                return p;
            };
            CHECK(pinsker_check(random_dist(), random_dist()).ok);
        }
    }
}

TEST_CASE("monotonic objective: exactness, lower bound, degradation sweep") {
    const auto env = envs::make_figure1_toy();
    const auto dyn = envs::derive_joint_obs_dynamics(env);
    SUBCASE("random instances keep J_model - 2C below the true return") {
        for (int i = 0; i < 25; ++i) {
            const auto inst = SeedKey(27).child("inst", static_cast<std::uint64_t>(i));
            const auto ms = make_random_model_set(dyn, inst.child("m"));
            const auto pi_d = make_random_policy(env.spaces, inst.child("pd"));
            const auto pi = make_random_policy(env.spaces, inst.child("pi"));
            const auto res = monotonic_objective(dyn, ms, pi_d, pi, env.gamma, 300);
            CHECK(res.objective_2c <= res.j_true + 2.0 * res.tail_bound + 1e-9);
        }
    }
    SUBCASE("uniform-noise degradation never shrinks the penalty") {
        const auto grid = envs::make_coop_grid_nav();
        const auto gdyn = envs::derive_joint_obs_dynamics(grid);
        const auto pi = make_random_policy(grid.spaces, SeedKey(28));
        double prev_c = -1.0;
        for (double rate : {0.0, 0.1, 0.2, 0.3, 0.4, 0.5}) {
            // Mix the perfect per-agent conditionals with uniform noise.
            auto ms = models::LocalModelSet::perfect(gdyn);
            for (int o = 0; o < grid.spaces.joint_obs_count(); ++o) {
                for (int a = 0; a < grid.spaces.joint_act_count(); ++a) {
                    const auto jo = grid.spaces.obs_at(o);
                    const auto ja = grid.spaces.act_at(a);
                    for (int ag = 0; ag < 2; ++ag) {
                        auto cond = ms.model(ag).predict_obs(jo, ja);
                        for (double& p : cond)
                            p = (1.0 - rate) * p + rate / static_cast<double>(cond.size());
                        ms.mutable_model(ag).set_tabular_cell(jo, ja, cond,
                                                              gdyn.reward_at(o, a));
                    }
                }
            }
            const auto res = monotonic_objective(gdyn, ms, pi, pi, grid.gamma, 300);
            CHECK(res.c_bound >= prev_c - 1e-9);
            prev_c = res.c_bound;
        }
    }
}

TEST_CASE("perfect model on a factored preset: objective equals the true return") {
    const auto env = envs::make_coop_grid_nav();
    const auto dyn = envs::derive_joint_obs_dynamics(env);
    const auto ms = models::LocalModelSet::perfect(dyn);
    const auto pi = make_random_policy(env.spaces, SeedKey(29));
    const auto res = monotonic_objective(dyn, ms, pi, pi, env.gamma, 400);
    CHECK(res.c_bound <= 1e-6);
    CHECK(res.objective == doctest::Approx(res.j_true).epsilon(1e-6));
}

TEST_CASE("audit determinism: identical seeds give identical verdicts") {
    const auto dyn = envs::derive_joint_obs_dynamics(envs::make_figure1_toy());
    const auto a = audit_bound(dyn, 10, SeedKey(30));
    const auto b = audit_bound(dyn, 10, SeedKey(30));
    CHECK(a.sound_violations == b.sound_violations);
    CHECK(a.tightness_violations == b.tightness_violations);
    CHECK(a.max_gap_over_rhs == b.max_gap_over_rhs);
}
