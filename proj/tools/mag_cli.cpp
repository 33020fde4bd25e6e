// Command-line workbench: training loop, rollout-error analysis, bound
// verification, and the bundled oracle checks.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "mag/config.hpp"
#include "mag/env.hpp"
#include "mag/experiment.hpp"
#include "mag/rollout.hpp"
#include "mag/text_io.hpp"
#include "mag/theory.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitCheckFailed = 2;
constexpr int kExitConfigError = 3;

using mag::SeedKey;

mag::harness::ExperimentConfig build_config(const std::string& config_file,
                                            const std::string& preset) {
    if (!config_file.empty() && !preset.empty())
        throw std::runtime_error("choose either --config or --preset, not both");
    if (!config_file.empty()) return mag::harness::ExperimentConfig::load_file(config_file);
    if (!preset.empty()) return mag::harness::config_preset(preset);
    return {};
}

int run_train(const mag::harness::ExperimentConfig& cfg) {
    cfg.validate();
    std::printf("training on %s for %d episodes (mode=%s, seed=%llu)\n", cfg.env.c_str(),
                cfg.episodes, cfg.rollout_mode == mag::harness::RolloutMode::planned ? "planned" : "greedy",
                static_cast<unsigned long long>(cfg.seed));
    const auto res = mag::harness::run_experiment(cfg, [](const mag::harness::MetricsRecord& r) {
        std::printf("iter=%d env_steps=%ld eval_return=%.4f+-%.4f nll=%.4f mse=%.5f wall=%.2fs\n",
                    r.iteration, r.env_steps, r.eval_return, r.eval_se, r.model_nll,
                    r.predictor_mse, r.wall_clock_s);
    });
    std::printf("done: %zu records, %ld real env steps, outputs in %s\n", res.records.size(),
                res.checkpoint.env_steps, cfg.out_dir.c_str());
    return kExitOk;
}

int run_eval(const std::string& env_name, const std::string& run_dir, int episodes,
             std::uint64_t seed, int threads) {
    const auto env = mag::envs::resolve_env(env_name);
    const auto ckpt = mag::harness::Checkpoint::load_file(run_dir + "/checkpoint.txt");
    const auto ev = mag::policy::evaluate_return(env, ckpt.policy, episodes, SeedKey(seed),
                                                 mag::ExecPolicy{threads});
    std::printf("episodes=%d return=%.4f+-%.4f discounted=%.4f+-%.4f\n", ev.episodes,
                ev.mean_return, ev.se_return, ev.mean_discounted, ev.se_discounted);
    return kExitOk;
}

int run_analyze_error(const std::string& env_name, const std::string& run_dir, int starts,
                      std::uint64_t seed, int threads, const std::string& out_file) {
    const auto env = mag::envs::resolve_env(env_name);
    const auto ckpt = mag::harness::Checkpoint::load_file(run_dir + "/checkpoint.txt");
    const auto d_e = mag::Dataset::load_file(run_dir + "/env_data.txt");
    const auto cfg = mag::harness::ExperimentConfig::load_file(run_dir + "/config.txt");
    const auto res = mag::harness::analyze_error(env, ckpt, d_e, cfg.rollout, starts,
                                                 SeedKey(seed), mag::ExecPolicy{threads});
    if (!res.exact)
        std::printf("warning: no exact dynamics for this environment; "
                    "errors use the learned predictor\n");
    std::printf("step  planned_acc  greedy_acc  diff(greedy-planned)\n");
    std::string table = "step planned greedy diff exact=" + std::to_string(res.exact ? 1 : 0) +
                        " starts=" + std::to_string(res.start_states) + "\n";
    for (std::size_t s = 0; s < res.planned.size(); ++s) {
        std::printf("%4zu  %11.5f  %10.5f  %+.5f\n", s + 1, res.planned[s], res.greedy[s],
                    res.diff[s]);
        table += std::to_string(s + 1) + ' ' + mag::format_double(res.planned[s]) + ' ' +
                 mag::format_double(res.greedy[s]) + ' ' + mag::format_double(res.diff[s]) + "\n";
    }
    if (!out_file.empty()) {
        std::ofstream f(out_file);
        if (!f) throw std::runtime_error("cannot open " + out_file);
        f << table;
        std::printf("table written to %s\n", out_file.c_str());
    }
    return kExitOk;
}

int run_verify_bound(const std::string& env_name, const std::string& run_dir, std::uint64_t seed,
                     const std::string& results_file, int audit_instances, int threads) {
    const auto env = mag::envs::resolve_env(env_name);
    const auto dyn = mag::envs::derive_joint_obs_dynamics(env);

    mag::theory::BoundReport rep;
    if (!run_dir.empty()) {
        const auto ckpt = mag::harness::Checkpoint::load_file(run_dir + "/checkpoint.txt");
        // Audits of a training run start from the empirical distribution of
        // the stored real observations, mirroring how model rollouts start.
        const auto d_e = mag::Dataset::load_file(run_dir + "/env_data.txt");
        const auto init = mag::theory::DistributionTable::from_dataset_obs(d_e);
        rep = mag::theory::bound_report(dyn, ckpt.models, ckpt.policy_old, ckpt.policy, init);
    } else {
        const auto inst = SeedKey(seed).child("verify_bound");
        const auto ms = mag::theory::make_random_model_set(dyn, inst.child("model"));
        const auto pi_d = mag::theory::make_random_policy(env.spaces, inst.child("policy"));
        auto pi = pi_d;
        mag::Rng rng(inst.child("shift"));
        for (int ag = 0; ag < env.spaces.n_agents(); ++ag)
            for (double& w : pi.actor(ag).mutable_parameters()) w += rng.uniform(-0.5, 0.5);
        rep = mag::theory::bound_report(dyn, ms, pi_d, pi);
    }
    std::fputs(mag::harness::format_bound_report(rep).c_str(), stdout);
    if (!results_file.empty()) {
        std::ofstream f(results_file, std::ios::app);
        if (!f) throw std::runtime_error("cannot open " + results_file);
        f << mag::harness::bound_summary_row(env.name, seed, rep) << "\n";
    }
    bool ok = rep.sound() && rep.tighter_than_scaled();
    if (audit_instances > 0) {
        const auto audit = mag::theory::audit_bound(dyn, audit_instances, SeedKey(seed).child("audit"),
                                                    mag::ExecPolicy{threads});
        std::printf("audit instances=%d sound_violations=%d tightness_violations=%d\n",
                    audit.instances, audit.sound_violations, audit.tightness_violations);
        ok = ok && audit.sound_violations == 0 && audit.tightness_violations == 0;
    }
    return ok ? kExitOk : kExitCheckFailed;
}

int run_oracle_check(std::uint64_t seed, int bound_instances, int property_trials, int threads) {
    const auto report = mag::harness::oracle_check(bound_instances, property_trials, SeedKey(seed),
                                                   mag::ExecPolicy{threads});
    for (const auto& item : report.items)
        std::printf("[%s] %s: %s\n", item.pass ? "PASS" : "FAIL", item.name.c_str(),
                    item.detail.c_str());
    return report.all_pass() ? kExitOk : kExitCheckFailed;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"desk-scale multi-agent model-based RL workbench"};
    app.require_subcommand(1);

    // --- train ---
    auto* train = app.add_subcommand("train", "run the full training loop");
    std::string config_file, preset;
    mag::harness::ExperimentConfig cfg;
    std::string env_name, out_dir, rollout_mode = "planned", selection = "min-error";
    std::string model_backend = "tabular", policy_backend = "tabular";
    std::uint64_t seed = 0;
    train->add_option("--config", config_file, "declarative config file");
    train->add_option("--preset", preset, "named hyperparameter preset");
    train->add_option("--env", env_name, "preset name or env file")->required();
    train->add_option("--seed", seed, "experiment seed")->required();
    train->add_option("--out", out_dir, "output directory")->required();
    auto* ep_opt = train->add_option("--episodes", cfg.episodes, "outer-loop episodes");
    auto* m_opt = train->add_option("--M", cfg.rollout.M, "parallel model rollouts");
    auto* k_opt = train->add_option("--k", cfg.rollout.k, "rollout length");
    auto* h_opt = train->add_option("--H", cfg.rollout.H, "planning horizon");
    auto* l_opt = train->add_option("--L", cfg.rollout.L, "shooting trajectories");
    auto* pd_opt = train->add_option("--plan-discount", cfg.rollout.gamma_plan, "planning discount");
    auto* sel_opt = train->add_option("--selection", selection, "min-error or literal-argmax");
    auto* mode_opt = train->add_option("--rollout-mode", rollout_mode, "planned or greedy");
    auto* g_opt = train->add_option("--g-updates", cfg.g_updates, "gradient updates per episode");
    auto* mb_opt = train->add_option("--model-backend", model_backend, "tabular or mlp");
    auto* pb_opt = train->add_option("--policy-backend", policy_backend, "tabular or mlp");
    auto* mlr_opt = train->add_option("--model-lr", cfg.model_lr, "model learning rate");
    auto* ee_opt = train->add_option("--eval-every", cfg.eval_every, "evaluation cadence");
    auto* en_opt = train->add_option("--eval-episodes", cfg.eval_episodes, "episodes per evaluation");
    auto* th_opt = train->add_option("--threads", cfg.threads, "1 serial, 0 all cores, n team size");
    auto* ces_flag = train->add_flag("--count-eval-steps", "count evaluation steps in env_steps");

    // --- eval ---
    auto* eval_cmd = app.add_subcommand("eval", "evaluate a trained policy");
    std::string eval_env, eval_run;
    int eval_episodes = 100, eval_threads = 1;
    std::uint64_t eval_seed = 0;
    eval_cmd->add_option("--env", eval_env)->required();
    eval_cmd->add_option("--run", eval_run, "training output directory")->required();
    eval_cmd->add_option("--episodes", eval_episodes);
    eval_cmd->add_option("--seed", eval_seed);
    eval_cmd->add_option("--threads", eval_threads);

    // --- analyze-error ---
    auto* an_cmd = app.add_subcommand("analyze-error",
                                      "accumulated-error comparison of planned vs greedy rollouts");
    std::string an_env, an_run, an_out;
    int an_starts = 200, an_threads = 1;
    std::uint64_t an_seed = 0;
    an_cmd->add_option("--env", an_env)->required();
    an_cmd->add_option("--run", an_run, "training output directory")->required();
    an_cmd->add_option("--starts", an_starts, "number of start states");
    an_cmd->add_option("--seed", an_seed);
    an_cmd->add_option("--threads", an_threads);
    an_cmd->add_option("--out", an_out, "write the per-step table to this file");

    // --- verify-bound ---
    auto* vb_cmd = app.add_subcommand("verify-bound", "performance-bound report and audit");
    std::string vb_env, vb_run, vb_results = "bound_results.txt";
    std::uint64_t vb_seed = 0;
    int vb_audit = 0, vb_threads = 1;
    vb_cmd->add_option("--env", vb_env)->required();
    vb_cmd->add_option("--run", vb_run, "use a trained checkpoint instead of a random instance");
    vb_cmd->add_option("--seed", vb_seed);
    vb_cmd->add_option("--results", vb_results, "summary-row file (appended)");
    vb_cmd->add_option("--audit", vb_audit, "additionally audit this many random instances");
    vb_cmd->add_option("--threads", vb_threads);

    // --- oracle-check ---
    auto* oc_cmd = app.add_subcommand("oracle-check", "bundled exact-oracle suite");
    std::uint64_t oc_seed = 0;
    int oc_bound = 100, oc_trials = 10000, oc_threads = 1;
    oc_cmd->add_option("--seed", oc_seed);
    oc_cmd->add_option("--bound-instances", oc_bound, "random instances per preset");
    oc_cmd->add_option("--property-trials", oc_trials, "trials per property suite");
    oc_cmd->add_option("--threads", oc_threads);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfigError;
    }

    try {
        if (train->parsed()) {
            auto base = build_config(config_file, preset);
            // Flag overrides on top of the file/preset values.
            if (ep_opt->count()) base.episodes = cfg.episodes;
            if (m_opt->count()) base.rollout.M = cfg.rollout.M;
            if (k_opt->count()) base.rollout.k = cfg.rollout.k;
            if (h_opt->count()) base.rollout.H = cfg.rollout.H;
            if (l_opt->count()) base.rollout.L = cfg.rollout.L;
            if (pd_opt->count()) base.rollout.gamma_plan = cfg.rollout.gamma_plan;
            if (sel_opt->count())
                base.rollout.selection = selection == "literal-argmax"
                                             ? mag::rollout::SelectionRule::literal_argmax
                                             : mag::rollout::SelectionRule::min_error;
            if (mode_opt->count())
                base.rollout_mode = rollout_mode == "greedy" ? mag::harness::RolloutMode::greedy
                                                             : mag::harness::RolloutMode::planned;
            if (g_opt->count()) base.g_updates = cfg.g_updates;
            if (mb_opt->count())
                base.model_backend = model_backend == "mlp" ? mag::models::ModelBackend::mlp
                                                            : mag::models::ModelBackend::tabular;
            if (pb_opt->count())
                base.policy_backend = policy_backend == "mlp" ? mag::policy::PolicyBackend::mlp
                                                              : mag::policy::PolicyBackend::tabular;
            if (mlr_opt->count()) base.model_lr = cfg.model_lr;
            if (ee_opt->count()) base.eval_every = cfg.eval_every;
            if (en_opt->count()) base.eval_episodes = cfg.eval_episodes;
            if (th_opt->count()) base.threads = cfg.threads;
            if (ces_flag->count()) base.count_eval_steps = true;
            base.env = env_name;
            base.seed = seed;
            base.out_dir = out_dir;
            return run_train(base);
        }
        if (eval_cmd->parsed())
            return run_eval(eval_env, eval_run, eval_episodes, eval_seed, eval_threads);
        if (an_cmd->parsed())
            return run_analyze_error(an_env, an_run, an_starts, an_seed, an_threads, an_out);
        if (vb_cmd->parsed())
            return run_verify_bound(vb_env, vb_run, vb_seed, vb_results, vb_audit, vb_threads);
        if (oc_cmd->parsed()) return run_oracle_check(oc_seed, oc_bound, oc_trials, oc_threads);
    } catch (const mag::reward::SupportMismatchError& e) {
        std::fprintf(stderr, "invariant failure: %s\n", e.what());
        return kExitCheckFailed;
    } catch (const std::logic_error& e) {
        std::fprintf(stderr, "invariant failure: %s\n", e.what());
        return kExitCheckFailed;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitConfigError;
    }
    return kExitConfigError;
}
