#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "mag/env.hpp"
#include "mag/model_reward.hpp"
#include "mag/theory.hpp"
#include "test_util.hpp"

using namespace mag;
using namespace mag::models;
using namespace mag::reward;

namespace {

// Single-agent chain with a deterministic row at (o=0, a=0): always moves to
// observation 1.
envs::TabularDecPomdp one_agent_det_env() {
    envs::TabularDecPomdp env;
    env.name = "one_agent_det";
    env.spaces = SpaceSpec({2}, 1);
    env.n_states = 2;
    env.gamma = 0.9;
    env.horizon = 10;
    env.obs_fn = {{0}, {1}};
    env.transition = {{{0.0, 1.0}}, {{0.0, 1.0}}};
    env.reward = {{0.0}, {0.0}};
    env.init_dist = {1.0, 0.0};
    env.validate();
    return env;
}

}  // namespace

TEST_CASE("label_error: exact match scores zero") {
    const SpaceSpec spaces({2, 2}, 1);
    LocalModelSet ms(spaces, ModelBackend::tabular, SeedKey(0), 0.0);
    EnvTransition t;
    t.obs = JointObservation({0, 0});
    t.act = JointAction({0, 0});
    t.reward = 0.5;
    t.next_obs = JointObservation({1, 1});
    ms.mutable_model(0).set_tabular_cell(t.obs, t.act, {0.0, 1.0}, 0.5);
    ms.mutable_model(1).set_tabular_cell(t.obs, t.act, {0.0, 1.0}, 0.5);
    CHECK(label_error(t, ms, 4, SeedKey(1)) == doctest::Approx(0.0));
    CHECK(expected_label_error(t, ms) == doctest::Approx(0.0));
}

TEST_CASE("label_error: both agents wrong with correct reward counts two") {
    const SpaceSpec spaces({2, 2}, 1);
    LocalModelSet ms(spaces, ModelBackend::tabular, SeedKey(0), 0.0);
    EnvTransition t;
    t.obs = JointObservation({0, 0});
    t.act = JointAction({0, 0});
    t.reward = 0.25;
    t.next_obs = JointObservation({1, 1});
    ms.mutable_model(0).set_tabular_cell(t.obs, t.act, {1.0, 0.0}, 0.25);
    ms.mutable_model(1).set_tabular_cell(t.obs, t.act, {1.0, 0.0}, 0.25);
    CHECK(label_error(t, ms, 8, SeedKey(2)) == doctest::Approx(2.0));
}

TEST_CASE("label_error approaches N*p for miss probability p") {
    const SpaceSpec spaces({2, 2}, 1);
    LocalModelSet ms(spaces, ModelBackend::tabular, SeedKey(0), 0.0);
    EnvTransition t;
    t.obs = JointObservation({0, 0});
    t.act = JointAction({0, 0});
    t.reward = 0.0;
    t.next_obs = JointObservation({1, 1});
    const double p_miss = 0.3;
    ms.mutable_model(0).set_tabular_cell(t.obs, t.act, {p_miss, 1.0 - p_miss}, 0.0);
    ms.mutable_model(1).set_tabular_cell(t.obs, t.act, {p_miss, 1.0 - p_miss}, 0.0);
    CHECK(expected_label_error(t, ms) == doctest::Approx(2.0 * p_miss).epsilon(1e-12));
    // Monte-Carlo with many draws lands near the analytic value.
    double acc = 0.0;
    const int reps = 2000;
    for (int i = 0; i < reps; ++i)
        acc += label_error(t, ms, 4, SeedKey(3).child("rep", static_cast<std::uint64_t>(i)));
    CHECK(acc / reps == doctest::Approx(2.0 * p_miss).epsilon(0.05));
}

TEST_CASE("label_error is invariant under consistent agent permutation") {
    const SpaceSpec spaces({2, 2}, 2);
    LocalModelSet ms(spaces, ModelBackend::tabular, SeedKey(0), 0.0);
    EnvTransition t;
    t.obs = JointObservation({0, 1});
    t.act = JointAction({1, 0});
    t.reward = 1.0;
    t.next_obs = JointObservation({1, 0});
    ms.mutable_model(0).set_tabular_cell(t.obs, t.act, {0.2, 0.8}, 0.7);
    ms.mutable_model(1).set_tabular_cell(t.obs, t.act, {0.6, 0.4}, 1.1);

    LocalModelSet swapped(spaces, ModelBackend::tabular, SeedKey(0), 0.0);
    EnvTransition t2;
    t2.obs = JointObservation({1, 0});
    t2.act = JointAction({0, 1});
    t2.reward = 1.0;
    t2.next_obs = JointObservation({0, 1});
    swapped.mutable_model(0).set_tabular_cell(t2.obs, t2.act, {0.6, 0.4}, 1.1);
    swapped.mutable_model(1).set_tabular_cell(t2.obs, t2.act, {0.2, 0.8}, 0.7);

    CHECK(expected_label_error(t, ms) ==
          doctest::Approx(expected_label_error(t2, swapped)).epsilon(1e-12));
}

TEST_CASE("error predictor: zero labels give a near-zero regressor") {
    const auto env = envs::make_coop_grid_nav();
    const auto dyn = envs::derive_joint_obs_dynamics(env);
    auto d = testutil::collect_dataset(env, 400, SeedKey(41));
    // A perfect model makes every observation mismatch impossible only for
    // deterministic rows, so force a deterministic dataset instead: each
    // transition's next_obs is replaced by the model's argmax and the reward
    // by the head output, making all labels zero by construction.
    LocalModelSet ms = LocalModelSet::perfect(dyn);
    Dataset zero_d(env.spaces, d.capacity());
    for (std::size_t i = 0; i < d.size(); ++i) {
        auto t = d.at(i);
        // Deterministic per-agent model at this cell.
        for (int ag = 0; ag < 2; ++ag) {
            const auto p = ms.model(ag).predict_obs(t.obs, t.act);
            std::size_t best = 0;
            for (std::size_t v = 1; v < p.size(); ++v)
                if (p[v] > p[best]) best = v;
            std::vector<double> det(p.size(), 0.0);
            det[best] = 1.0;
            ms.mutable_model(ag).set_tabular_cell(t.obs, t.act, det, t.reward);
            t.next_obs.per_agent[static_cast<std::size_t>(ag)] = static_cast<ObsId>(best);
        }
        zero_d.append(t);
    }
    ModelRewardPredictor rp(env.spaces, SeedKey(6), {32}, 3e-3);
    rp = train_error_predictor(rp, zero_d, ms, 40, SeedKey(7));
    double worst = 0.0;
    for (std::size_t i = 0; i < zero_d.size(); ++i) {
        const auto& t = zero_d.at(i);
        worst = std::max(worst, rp.predict(t.obs, t.act, t.reward, t.next_obs));
    }
    CHECK(worst < 0.1);
}

TEST_CASE("error predictor separates a two-cluster labeling") {
    // Agent-0 observation determines the label: obs 0 -> label 0, obs 1 ->
    // label 2 (model deterministic-right at obs 0, deterministic-wrong at 1).
    const SpaceSpec spaces({2, 2}, 1);
    LocalModelSet ms(spaces, ModelBackend::tabular, SeedKey(0), 0.0);
    Dataset d(spaces, 4096);
    for (int rep = 0; rep < 200; ++rep) {
        for (int v = 0; v < 2; ++v) {
            EnvTransition t;
            t.obs = JointObservation({v, 0});
            t.act = JointAction({0, 0});
            t.reward = 0.0;
            t.next_obs = JointObservation({1, 1});
            d.append(t);
        }
    }
    ms.mutable_model(0).set_tabular_cell(JointObservation({0, 0}), JointAction({0, 0}), {0.0, 1.0}, 0.0);
    ms.mutable_model(1).set_tabular_cell(JointObservation({0, 0}), JointAction({0, 0}), {0.0, 1.0}, 0.0);
    ms.mutable_model(0).set_tabular_cell(JointObservation({1, 0}), JointAction({0, 0}), {1.0, 0.0}, 0.0);
    ms.mutable_model(1).set_tabular_cell(JointObservation({1, 0}), JointAction({0, 0}), {1.0, 0.0}, 0.0);

    ModelRewardPredictor rp(spaces, SeedKey(8), {32}, 3e-3);
    rp = train_error_predictor(rp, d, ms, 60, SeedKey(9));
    CHECK(rp.last_heldout_mse() < 0.05);
    CHECK(rp.predict(JointObservation({0, 0}), JointAction({0, 0}), 0.0, JointObservation({1, 1})) ==
          doctest::Approx(0.0).epsilon(0.15));
    CHECK(rp.predict(JointObservation({1, 0}), JointAction({0, 0}), 0.0, JointObservation({1, 1})) ==
          doctest::Approx(2.0).epsilon(0.15));
}

TEST_CASE("error predictor training loss trends down and is deterministic") {
    const auto env = envs::make_figure1_toy();
    const auto dyn = envs::derive_joint_obs_dynamics(env);
    const auto d = testutil::collect_dataset(env, 600, SeedKey(51));
    const auto ms = theory::make_random_model_set(dyn, SeedKey(52));

    CHECK_THROWS_AS(train_error_predictor(ModelRewardPredictor(env.spaces, SeedKey(1)),
                                          Dataset(env.spaces, 4), ms, 1, SeedKey(2)),
                    std::runtime_error);

    ModelRewardPredictor rp(env.spaces, SeedKey(10), {32}, 2e-3);
    rp = train_error_predictor(rp, d, ms, 12, SeedKey(11));
    const auto& losses = rp.train_loss_trace();
    REQUIRE(losses.size() == 12);
    // Allow small transient increases between consecutive epochs.
    for (std::size_t e = 0; e + 1 < losses.size(); ++e)
        CHECK(losses[e + 1] <= losses[e] * 1.05 + 1e-4);
    CHECK(losses.back() < losses.front());

    const auto r1 = train_error_predictor(ModelRewardPredictor(env.spaces, SeedKey(12)), d, ms, 2,
                                          SeedKey(13));
    const auto r2 = train_error_predictor(ModelRewardPredictor(env.spaces, SeedKey(12)), d, ms, 2,
                                          SeedKey(13));
    CHECK(r1 == r2);
}

TEST_CASE("exact model reward: zero for a perfect factored model") {
    const auto env = envs::make_coop_matrix_chain();
    const auto dyn = envs::derive_joint_obs_dynamics(env);
    const auto ms = LocalModelSet::perfect(dyn);
    for (int oi = 0; oi < dyn.spaces.joint_obs_count(); ++oi) {
        for (int ai = 0; ai < dyn.spaces.joint_act_count(); ++ai) {
            for (int o2 = 0; o2 < dyn.spaces.joint_obs_count(); ++o2) {
                const double r = exact_model_reward(dyn, ms, dyn.spaces.obs_at(oi),
                                                    dyn.spaces.act_at(ai), dyn.spaces.obs_at(o2));
                CHECK(std::abs(r) < 1e-9);
            }
        }
    }
}

TEST_CASE("exact model reward: half-split model against a deterministic row") {
    const auto env = one_agent_det_env();
    const auto dyn = envs::derive_joint_obs_dynamics(env);
    LocalModelSet ms(env.spaces, ModelBackend::tabular, SeedKey(0), 0.0);
    const auto o = JointObservation({0});
    const auto a = JointAction({0});
    ms.mutable_model(0).set_tabular_cell(o, a, {0.5, 0.5}, 0.0);
    // Query the probability-one outcome.
    CHECK(exact_model_reward(dyn, ms, o, a, JointObservation({1})) ==
          doctest::Approx(std::log(0.5)).epsilon(1e-12));
    // Query the probability-zero outcome: the true side vanishes.
    CHECK_THROWS_WITH_AS(exact_model_reward(dyn, ms, o, a, JointObservation({0})),
                         doctest::Contains("true probability is zero"), SupportMismatchError);
    // Deterministic model queried off-support: the model side vanishes.
    ms.mutable_model(0).set_tabular_cell(o, a, {0.0, 1.0}, 0.0);
    CHECK_THROWS_WITH_AS(exact_model_reward(dyn, ms, o, a, JointObservation({0})),
                         doctest::Contains("model probability is zero"), SupportMismatchError);
}

TEST_CASE("expected exact model reward equals the exhaustive KL on every preset") {
    for (const auto& name : envs::preset_names()) {
        const auto dyn = envs::derive_joint_obs_dynamics(envs::make_preset(name));
        const auto ms = theory::make_random_model_set(dyn, SeedKey(61).child(name));
        for (int oi = 0; oi < dyn.spaces.joint_obs_count(); ++oi) {
            if (!dyn.realized[static_cast<std::size_t>(oi)]) continue;
            for (int ai = 0; ai < dyn.spaces.joint_act_count(); ++ai) {
                const auto o = dyn.spaces.obs_at(oi);
                const auto a = dyn.spaces.act_at(ai);
                const auto pred = ms.predict_joint(o, a);
                double expectation = 0.0;
                for (int o2 = 0; o2 < dyn.spaces.joint_obs_count(); ++o2) {
                    const double w = pred.joint_probs[static_cast<std::size_t>(o2)];
                    if (w <= 0.0) continue;
                    expectation += w * exact_model_reward(dyn, ms, o, a, dyn.spaces.obs_at(o2));
                }
                const double kl = model_row_kl(dyn, ms, o, a);
                CHECK(expectation == doctest::Approx(kl).epsilon(1e-9));
                CHECK(kl >= -1e-12);
            }
        }
    }
}

TEST_CASE("predictor round-trips through its checkpoint form") {
    const auto env = envs::make_coop_matrix_chain();
    ModelRewardPredictor rp(env.spaces, SeedKey(70), {16}, 1e-3);
    std::ostringstream out;
    rp.save(out);
    std::istringstream in(out.str());
    const auto loaded = ModelRewardPredictor::load(in);
    CHECK(loaded == rp);
}
