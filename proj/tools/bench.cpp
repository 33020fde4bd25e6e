// Throughput comparison of the serial reference paths against the OpenMP
// kernels, with a bitwise agreement check on every workload.

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <functional>
#include <string>

#include "mag/env.hpp"
#include "mag/experiment.hpp"
#include "mag/rollout.hpp"
#include "mag/theory.hpp"

namespace {

using Clock = std::chrono::steady_clock;

double time_call(const std::function<void()>& fn) {
    const auto t0 = Clock::now();
    fn();
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

void report(const char* name, double serial_s, double parallel_s, bool identical) {
    std::printf("%-22s serial %8.3fs  openmp %8.3fs  speedup %5.2fx  identical %s\n", name,
                serial_s, parallel_s, serial_s / parallel_s, identical ? "yes" : "NO");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"serial-vs-OpenMP benchmark for the rollout and audit kernels"};
    int threads = 0;  // all cores
    int scale = 1;
    app.add_option("--threads", threads, "OpenMP team size (0 = all cores)");
    app.add_option("--scale", scale, "workload multiplier");
    CLI11_PARSE(app, argc, argv);

    const mag::ExecPolicy serial = mag::ExecPolicy::serial_ref();
    const mag::ExecPolicy openmp = mag::ExecPolicy::openmp(threads);
    const mag::SeedKey seed(2718);

    const auto env = mag::envs::make_figure1_toy();
    const auto dyn = mag::envs::derive_joint_obs_dynamics(env);
    const auto ms = mag::theory::make_random_model_set(dyn, seed.child("model"));
    const auto pi = mag::theory::make_random_policy(env.spaces, seed.child("policy"));
    const mag::reward::ExactScorer scorer(dyn, ms);

    mag::Dataset d_e(env.spaces);
    {
        mag::envs::EpisodeSim sim(env, seed.child("collect"));
        mag::Rng rng(seed.child("collect_act"));
        auto obs = sim.reset();
        for (int i = 0; i < 2000; ++i) {
            if (sim.terminal()) obs = sim.reset();
            const auto a = pi.act(obs, rng);
            const auto r = sim.step(a);
            d_e.append(mag::EnvTransition{obs, a, r.reward, r.next_obs, r.terminal});
            obs = r.next_obs;
        }
    }

    {
        mag::rollout::RolloutConfig cfg;
        cfg.M = 256 * scale;
        cfg.k = 10;
        cfg.L = 8;
        cfg.H = 5;
        std::vector<mag::EnvTransition> a, b;
        const double ts = time_call([&] {
            a = mag::rollout::planned_rollout(ms, scorer, pi, d_e, cfg, seed.child("roll"), serial);
        });
        const double tp = time_call([&] {
            b = mag::rollout::planned_rollout(ms, scorer, pi, d_e, cfg, seed.child("roll"), openmp);
        });
        report("planned_rollout", ts, tp, a == b);
    }
    {
        const int instances = 64 * scale;
        mag::theory::BoundAuditResult a, b;
        const double ts =
            time_call([&] { a = mag::theory::audit_bound(dyn, instances, seed.child("audit"), serial); });
        const double tp =
            time_call([&] { b = mag::theory::audit_bound(dyn, instances, seed.child("audit"), openmp); });
        report("bound_audit", ts, tp,
               a.sound_violations == b.sound_violations &&
                   a.tightness_violations == b.tightness_violations &&
                   a.max_gap_over_rhs == b.max_gap_over_rhs);
    }
    {
        const int episodes = 4000 * scale;
        mag::policy::EvalResult a, b;
        const double ts = time_call(
            [&] { a = mag::policy::evaluate_return(env, pi, episodes, seed.child("eval"), serial); });
        const double tp = time_call(
            [&] { b = mag::policy::evaluate_return(env, pi, episodes, seed.child("eval"), openmp); });
        report("evaluate_return", ts, tp,
               a.mean_return == b.mean_return && a.se_return == b.se_return &&
                   a.mean_discounted == b.mean_discounted);
    }
    return 0;
}
