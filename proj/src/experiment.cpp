#include "mag/experiment.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <sstream>
#include <stdexcept>

#include "mag/rollout.hpp"
#include "mag/text_io.hpp"

namespace mag::harness {

namespace {

template <class Fn>
auto run_phase(const char* phase, Fn&& fn) {
    try {
        return fn();
    } catch (const std::exception& e) {
        throw std::runtime_error(std::string("phase '") + phase + "' failed: " + e.what());
    }
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& cfg,
                                const std::function<void(const MetricsRecord&)>& on_record) {
    cfg.validate();
    const auto env = envs::resolve_env(cfg.env);
    env.validate();
    const double gamma = cfg.gamma >= 0.0 ? cfg.gamma : env.gamma;
    const SeedKey root(cfg.seed);
    const ExecPolicy exec{cfg.threads};

    ExperimentResult res;
    res.env_data = Dataset(env.spaces, cfg.dataset_capacity);
    res.model_data = Dataset(env.spaces, cfg.dataset_capacity);

    std::optional<envs::JointObsDynamics> audit_dyn;
    if (cfg.audit_every > 0) {
        try {
            audit_dyn = envs::derive_joint_obs_dynamics(env);
        } catch (const envs::ObservationInsufficiencyError&) {
            audit_dyn.reset();  // error audit falls back to the predictor
        }
    }

    models::LocalModelSet model_set(env.spaces, cfg.model_backend, root.child("models_init"),
                                    cfg.laplace_alpha, cfg.model_hidden, cfg.model_lr);
    reward::ModelRewardPredictor predictor(env.spaces, root.child("predictor_init"),
                                           cfg.predictor_hidden, cfg.predictor_lr,
                                           cfg.error_draws);
    policy::JointPolicy pi(env.spaces, cfg.policy_backend, root.child("policy_init"),
                           cfg.policy_hidden);
    policy::CentralizedCritic critic(env.spaces, cfg.policy_backend, root.child("critic_init"),
                                     cfg.policy_hidden);
    policy::JointPolicy pi_old = pi;

    std::optional<MetricsWriter> writer;
    if (!cfg.out_dir.empty()) {
        std::filesystem::create_directories(cfg.out_dir);
        // The stored copy normalizes out_dir (implied by its location) so a
        // rerun into another directory stays byte-identical.
        auto stored = cfg;
        stored.out_dir.clear();
        stored.save_file(cfg.out_dir + "/config.txt");
        writer.emplace(cfg.out_dir);
    }

    long env_steps = 0;
    for (int e = 1; e <= cfg.episodes; ++e) {
        const auto t0 = std::chrono::steady_clock::now();
        const auto ep = static_cast<std::uint64_t>(e);

        run_phase("collect", [&] {
            envs::EpisodeSim sim(env, root.child("collect_env", ep));
            Rng act_rng(root.child("collect_act", ep));
            auto obs = sim.reset();
            while (!sim.terminal()) {
                const auto a = pi.act(obs, act_rng);
                const auto step = sim.step(a);
                res.env_data.append(EnvTransition{obs, a, step.reward, step.next_obs, step.terminal});
                obs = step.next_obs;
                ++env_steps;
            }
        });

        run_phase("model-training", [&] {
            model_set.train_one_step(res.env_data, cfg.model_epochs, root.child("model_train", ep));
        });

        run_phase("error-predictor-training", [&] {
            predictor = reward::train_error_predictor(predictor, res.env_data, model_set,
                                                      cfg.predictor_epochs,
                                                      root.child("predictor_train", ep));
        });

        pi_old = pi;

        // A fresh dataset of this iteration's rollouts feeds the on-policy
        // update; the persistent model dataset keeps the full history.
        Dataset fresh(env.spaces, cfg.dataset_capacity);
        run_phase("rollout-generation", [&] {
            const reward::PredictorScorer scorer(predictor);
            const auto transitions =
                cfg.rollout_mode == RolloutMode::planned
                    ? rollout::planned_rollout(model_set, scorer, pi, res.env_data, cfg.rollout,
                                               root.child("rollout", ep), exec)
                    : rollout::greedy_rollout(model_set, pi, res.env_data, cfg.rollout,
                                              root.child("rollout", ep), exec);
            for (const auto& t : transitions) {
                res.model_data.append(t);
                fresh.append(t);
            }
        });

        run_phase("policy-update", [&] {
            policy::PpoHyper hyper;
            hyper.gamma = gamma;
            hyper.clip = cfg.clip;
            hyper.gae_lambda = cfg.gae_lambda;
            hyper.lr_actor = cfg.lr_actor;
            hyper.lr_critic = cfg.lr_critic;
            hyper.segment_len = cfg.rollout.k;
            auto [new_pi, new_critic] =
                policy::ppo_update(pi, critic, fresh, cfg.g_updates, hyper, root.child("ppo", ep));
            pi = std::move(new_pi);
            critic = std::move(new_critic);
        });

        if (e % cfg.eval_every == 0 || e == cfg.episodes) {
            MetricsRecord rec;
            rec.iteration = e;
            run_phase("evaluation", [&] {
                const auto ev =
                    policy::evaluate_return(env, pi, cfg.eval_episodes, root.child("eval", ep), exec);
                if (cfg.count_eval_steps) env_steps += ev.env_steps;
                rec.eval_return = ev.mean_return;
                rec.eval_se = ev.se_return;
                rec.eval_discounted = ev.mean_discounted;
                rec.eval_discounted_se = ev.se_discounted;
                const auto probe = res.env_data.sample_uniform(
                    std::min<std::size_t>(res.env_data.size(), 256), root.child("nll_probe", ep));
                rec.model_nll = model_set.negative_log_likelihood(probe);
                rec.predictor_mse = predictor.last_heldout_mse();
            });
            if (cfg.audit_every > 0 && (e / cfg.eval_every) % cfg.audit_every == 0) {
                run_phase("audit", [&] {
                    Checkpoint snap;
                    snap.models = model_set;
                    snap.predictor = predictor;
                    snap.policy = pi;
                    snap.policy_old = pi_old;
                    snap.critic = critic;
                    const auto an = analyze_error(env, snap, res.env_data, cfg.rollout,
                                                  cfg.audit_starts, root.child("audit", ep), exec);
                    rec.planned_final_error = an.planned.back();
                    rec.greedy_final_error = an.greedy.back();
                    if (audit_dyn) {
                        const auto rep = theory::bound_report(*audit_dyn, model_set, pi_old, pi);
                        rec.bound_gap = rep.gap;
                        rec.bound_rhs = rep.rhs_per_step;
                    }
                });
            }
            rec.env_steps = env_steps;
            rec.wall_clock_s =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            res.records.push_back(rec);
            if (writer) writer->append(rec);
            if (on_record) on_record(rec);
        }
    }

    res.checkpoint.iteration = cfg.episodes;
    res.checkpoint.env_steps = env_steps;
    res.checkpoint.models = std::move(model_set);
    res.checkpoint.predictor = std::move(predictor);
    res.checkpoint.policy = std::move(pi);
    res.checkpoint.policy_old = std::move(pi_old);
    res.checkpoint.critic = std::move(critic);

    if (!cfg.out_dir.empty()) {
        res.checkpoint.save_file(cfg.out_dir + "/checkpoint.txt");
        res.env_data.save_file(cfg.out_dir + "/env_data.txt");
        res.model_data.save_file(cfg.out_dir + "/model_data.txt");
    }
    return res;
}

ErrorAnalysis analyze_error(const envs::TabularDecPomdp& env, const Checkpoint& ckpt,
                            const Dataset& d_e, const rollout::RolloutConfig& rollout_cfg,
                            int start_states, const SeedKey& seed, const ExecPolicy& exec) {
    if (start_states < 1) throw std::invalid_argument("analyze_error: need at least one start");
    std::optional<envs::JointObsDynamics> dyn;
    try {
        dyn = envs::derive_joint_obs_dynamics(env);
    } catch (const envs::ObservationInsufficiencyError&) {
        dyn.reset();
    }

    rollout::RolloutConfig cfg = rollout_cfg;
    cfg.M = start_states;
    cfg.validate();

    const reward::PredictorScorer plan_scorer(ckpt.predictor);
    // Shared seed so both modes start from the same uniformly drawn
    // observations (paired comparison).
    const auto roll_seed = seed.child("rollouts");
    const auto planned =
        rollout::planned_rollout(ckpt.models, plan_scorer, ckpt.policy, d_e, cfg, roll_seed, exec);
    const auto greedy =
        rollout::greedy_rollout(ckpt.models, ckpt.policy, d_e, cfg, roll_seed, exec);

    auto step_error = [&](const EnvTransition& t) {
        if (dyn) return reward::exact_model_reward(*dyn, ckpt.models, t.obs, t.act, t.next_obs);
        return ckpt.predictor.predict(t.obs, t.act, t.reward, t.next_obs);
    };

    ErrorAnalysis out;
    out.exact = dyn.has_value();
    out.start_states = start_states;
    out.planned.assign(static_cast<std::size_t>(cfg.k), 0.0);
    out.greedy.assign(static_cast<std::size_t>(cfg.k), 0.0);
    for (int m = 0; m < cfg.M; ++m) {
        double acc_p = 0.0, acc_g = 0.0;
        for (int s = 0; s < cfg.k; ++s) {
            const std::size_t idx =
                static_cast<std::size_t>(m) * static_cast<std::size_t>(cfg.k) +
                static_cast<std::size_t>(s);
            acc_p += step_error(planned[idx]);
            acc_g += step_error(greedy[idx]);
            out.planned[static_cast<std::size_t>(s)] += acc_p;
            out.greedy[static_cast<std::size_t>(s)] += acc_g;
        }
    }
    out.diff.resize(static_cast<std::size_t>(cfg.k));
    for (int s = 0; s < cfg.k; ++s) {
        out.planned[static_cast<std::size_t>(s)] /= static_cast<double>(cfg.M);
        out.greedy[static_cast<std::size_t>(s)] /= static_cast<double>(cfg.M);
        out.diff[static_cast<std::size_t>(s)] =
            out.greedy[static_cast<std::size_t>(s)] - out.planned[static_cast<std::size_t>(s)];
    }
    return out;
}

OracleCheckReport oracle_check(int bound_instances, int property_trials, const SeedKey& seed,
                               const ExecPolicy& exec) {
    OracleCheckReport report;

    // 1. Shooting in enumeration mode must reproduce the brute-force plan.
    {
        OracleCheckItem item;
        item.name = "planner_equivalence";
        item.pass = true;
        int checked = 0;
        for (int i = 0; i < 50 && item.pass; ++i) {
            const auto inst = seed.child("planner", static_cast<std::uint64_t>(i));
            const auto env = envs::make_random_factored_env({2, 2}, 2, inst.child("env"));
            const auto dyn = envs::derive_joint_obs_dynamics(env);
            const auto ms = theory::make_random_model_set(dyn, inst.child("model"));
            const auto pi = theory::make_random_policy(env.spaces, inst.child("policy"));
            Rng rng(inst.child("start"));
            const auto o = env.spaces.obs_at(
                static_cast<int>(rng.uniform_index(static_cast<std::size_t>(env.spaces.joint_obs_count()))));
            const auto a = env.spaces.act_at(
                static_cast<int>(rng.uniform_index(static_cast<std::size_t>(env.spaces.joint_act_count()))));
            const rollout::ModelState s_m0{o, a};
            const reward::ExactScorer scorer(dyn, ms);
            rollout::RolloutConfig cfg;
            cfg.H = 2;
            cfg.k = 2;
            cfg.shoot_mode = rollout::ShootMode::enumerate;
            const auto trajs = rollout::shoot(ms, scorer, pi, s_m0, cfg, inst.child("shoot"));
            const auto chosen_idx = rollout::select_index(trajs);
            const auto chosen = rollout::select_prediction(trajs);
            const auto brute = rollout::brute_force_plan(ms, scorer, pi, s_m0, 2);
            if (!(chosen == brute.action) || chosen_idx != brute.sequence_index ||
                std::abs(trajs[chosen_idx].score - brute.score) > 1e-12) {
                item.pass = false;
                std::ostringstream d;
                d << "instance " << i << ": enumeration selection disagrees with brute force";
                item.detail = d.str();
            }
            ++checked;
        }
        if (item.pass) item.detail = std::to_string(checked) + " instances matched";
        report.items.push_back(std::move(item));
    }

    // 2. Bound soundness and tightness audits on every preset.
    for (const auto& name : envs::preset_names()) {
        OracleCheckItem item;
        item.name = "bound_audit_" + name;
        const auto dyn = envs::derive_joint_obs_dynamics(envs::make_preset(name));
        const auto audit = theory::audit_bound(dyn, bound_instances, seed.child("audit_" + name), exec);
        item.pass = audit.sound_violations == 0 && audit.tightness_violations == 0;
        std::ostringstream d;
        d << audit.instances << " instances, " << audit.sound_violations << " soundness and "
          << audit.tightness_violations << " tightness violations, max gap/rhs "
          << audit.max_gap_over_rhs;
        item.detail = d.str();
        report.items.push_back(std::move(item));
    }

    // 3. Distribution-inequality property suites.
    {
        OracleCheckItem item;
        item.name = "lemma_tv_chain";
        std::vector<char> ok(static_cast<std::size_t>(property_trials), 0);
        parallel_for(exec, static_cast<std::size_t>(property_trials), [&](std::size_t i) {
            Rng rng(seed.child("lemma", i));
            auto random_joint = [&]() {
                std::vector<std::vector<double>> p(4, std::vector<double>(4));
                double sum = 0.0;
                for (auto& row : p)
                    for (double& x : row) {
                        x = rng.uniform01() + 1e-6;
                        sum += x;
                    }
                for (auto& row : p)
                    for (double& x : row) x /= sum;
                return p;
            };
            const auto res = theory::lemma_tv_chain_check(random_joint(), random_joint());
            ok[i] = (res.ok_max && res.ok_expect) ? 1 : 0;
        });
        int violations = 0;
        for (char c : ok)
            if (!c) ++violations;
        item.pass = violations == 0;
        item.detail = std::to_string(property_trials) + " trials, " + std::to_string(violations) +
                      " violations";
        report.items.push_back(std::move(item));
    }
    {
        OracleCheckItem item;
        item.name = "pinsker";
        std::vector<char> ok(static_cast<std::size_t>(property_trials), 0);
        parallel_for(exec, static_cast<std::size_t>(property_trials), [&](std::size_t i) {
            Rng rng(seed.child("pinsker", i));
            auto random_dist = [&](bool allow_zero) {
                std::vector<double> p(5);
                for (double& x : p) x = rng.uniform01() + (allow_zero ? 0.0 : 1e-6);
                if (allow_zero && rng.uniform01() < 0.2) p[rng.uniform_index(5)] = 0.0;
                double s = 0.0;
                for (double x : p) s += x;
                for (double& x : p) x /= s;
                return p;
            };
            const auto res = theory::pinsker_check(random_dist(true), random_dist(false));
            ok[i] = res.ok ? 1 : 0;
        });
        int violations = 0;
        for (char c : ok)
            if (!c) ++violations;
        item.pass = violations == 0;
        item.detail = std::to_string(property_trials) + " trials, " + std::to_string(violations) +
                      " violations";
        report.items.push_back(std::move(item));
    }

    // 4. The model-error inner formula equals sqrt(2 KL) cell by cell.
    {
        OracleCheckItem item;
        item.name = "epsilon_identity";
        item.pass = true;
        double worst = 0.0;
        for (const auto& name : envs::preset_names()) {
            const auto dyn = envs::derive_joint_obs_dynamics(envs::make_preset(name));
            const auto ms = theory::make_random_model_set(dyn, seed.child("identity_" + name));
            for (int o = 0; o < dyn.spaces.joint_obs_count() && item.pass; ++o) {
                if (!dyn.realized[static_cast<std::size_t>(o)]) continue;
                for (int a = 0; a < dyn.spaces.joint_act_count(); ++a) {
                    const auto jo = dyn.spaces.obs_at(o);
                    const auto ja = dyn.spaces.act_at(a);
                    const double literal = theory::model_error_inner_literal(ms, dyn, jo, ja);
                    const double kl = reward::model_row_kl(dyn, ms, jo, ja);
                    worst = std::max(worst, std::abs(literal - kl));
                    if (std::abs(literal - kl) > 1e-9) {
                        item.pass = false;
                        item.detail = "identity broke at " + name + " (o=" + std::to_string(o) +
                                      ", a=" + std::to_string(a) + ")";
                        break;
                    }
                }
            }
        }
        if (item.pass) item.detail = "max |literal - KL| = " + format_double(worst);
        report.items.push_back(std::move(item));
    }

    // 5. Invariant guard: corrupted (non-normalized) model rows must be
    // rejected with the module named.
    {
        OracleCheckItem item;
        item.name = "invariant_rejection";
        const auto env = envs::make_coop_matrix_chain();
        models::LocalModelSet ms(env.spaces, models::ModelBackend::tabular, seed.child("corrupt"),
                                 0.0);
        try {
            ms.mutable_model(0).set_tabular_cell(env.spaces.obs_at(0), env.spaces.act_at(0),
                                                 {0.7, 0.7, 0.7}, 0.0);
            item.pass = false;
            item.detail = "non-normalized row was accepted";
        } catch (const std::invalid_argument& e) {
            item.pass = std::string(e.what()).find("local_models") != std::string::npos;
            item.detail = e.what();
        }
        report.items.push_back(std::move(item));
    }

    // 6. Hyperparameter presets load and carry the pinned values.
    {
        OracleCheckItem item;
        item.name = "config_presets";
        item.pass = true;
        struct Expect {
            const char* name;
            int L;
            int H;
        };
        static constexpr Expect kExpect[] = {
            {"2s_vs_1sc", 5, 10},  {"3s_vs_3z", 5, 10},   {"2s3z", 5, 10},
            {"3s_vs_4z", 4, 10},   {"3s_vs_5z", 5, 7},    {"2c_vs_64zg", 5, 7},
            {"corridor", 4, 6},    {"3s5z_vs_3s6z", 4, 7},
        };
        for (const auto& exp : kExpect) {
            const auto cfg = config_preset(exp.name);
            const bool ok = cfg.rollout.L == exp.L && cfg.rollout.H == exp.H &&
                            cfg.model_lr == 5e-4 &&
                            cfg.predictor_hidden == std::vector<int>{256, 256, 256, 256} &&
                            cfg.rollout.H <= cfg.rollout.k;
            try {
                cfg.validate();
            } catch (const std::exception& e) {
                item.pass = false;
                item.detail = std::string(exp.name) + ": " + e.what();
                break;
            }
            if (!ok) {
                item.pass = false;
                item.detail = std::string(exp.name) + ": preset values drifted";
                break;
            }
        }
        if (item.pass) item.detail = "8 presets validated";
        report.items.push_back(std::move(item));
    }

    return report;
}

std::string format_bound_report(const theory::BoundReport& rep) {
    std::ostringstream out;
    out << "j_true " << format_double(rep.j_true) << "\n";
    out << "j_model " << format_double(rep.j_model) << "\n";
    out << "j_model_learned " << format_double(rep.j_model_learned) << "\n";
    out << "gap " << format_double(rep.gap) << "\n";
    out << "eps_pi " << format_double(rep.eps_pi) << "\n";
    out << "r_max " << format_double(rep.r_max) << "\n";
    out << "rhs_per_step " << format_double(rep.rhs_per_step) << "\n";
    out << "rhs_scaled " << format_double(rep.rhs_scaled) << "\n";
    out << "delta_max " << format_double(rep.delta_max) << "\n";
    out << "delta_tv " << format_double(rep.delta_tv) << "\n";
    out << "truncation_T " << rep.truncation_T << "\n";
    out << "tail_bound " << format_double(rep.tail_bound) << "\n";
    out << "sound " << (rep.sound() ? 1 : 0) << "\n";
    out << "tighter_than_scaled " << (rep.tighter_than_scaled() ? 1 : 0) << "\n";
    for (std::size_t t = 0; t < rep.eps_m.size(); ++t)
        out << "eps_m_" << (t + 1) << ' ' << format_double(rep.eps_m[t]) << "\n";
    return out.str();
}

std::string bound_summary_row(const std::string& env_name, std::uint64_t seed,
                              const theory::BoundReport& rep) {
    std::ostringstream out;
    out << "env=" << env_name << " seed=" << seed << " gap=" << format_double(rep.gap)
        << " rhs_per_step=" << format_double(rep.rhs_per_step)
        << " rhs_scaled=" << format_double(rep.rhs_scaled)
        << " eps_pi=" << format_double(rep.eps_pi) << " sound=" << (rep.sound() ? 1 : 0)
        << " tight=" << (rep.tighter_than_scaled() ? 1 : 0);
    return out.str();
}

}  // namespace mag::harness
