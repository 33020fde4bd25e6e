#include "mag/theory.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "mag/prob.hpp"

namespace mag::theory {

namespace {

using reward::SupportMismatchError;

// Policy-mixed model transition kernel K[o][o'] over the full joint space.
std::vector<std::vector<double>> model_kernel(const models::LocalModelSet& ms,
                                              const policy::JointPolicy& pi) {
    const auto& spaces = ms.spaces();
    const int n_obs = spaces.joint_obs_count();
    const int n_act = spaces.joint_act_count();
    std::vector<std::vector<double>> kernel(
        static_cast<std::size_t>(n_obs), std::vector<double>(static_cast<std::size_t>(n_obs), 0.0));
    for (int o = 0; o < n_obs; ++o) {
        const auto jo = spaces.obs_at(o);
        const auto act_probs = pi.joint_action_probs(jo);
        for (int a = 0; a < n_act; ++a) {
            const double pa = act_probs[static_cast<std::size_t>(a)];
            if (pa <= 0.0) continue;
            const auto pred = ms.predict_joint(jo, spaces.act_at(a));
            for (int o2 = 0; o2 < n_obs; ++o2)
                kernel[static_cast<std::size_t>(o)][static_cast<std::size_t>(o2)] +=
                    pa * pred.joint_probs[static_cast<std::size_t>(o2)];
        }
    }
    return kernel;
}

// Policy-mixed true kernel; rows only for realized joint observations.
std::vector<std::vector<double>> true_kernel(const envs::JointObsDynamics& dyn,
                                             const policy::JointPolicy& pi) {
    const auto& spaces = dyn.spaces;
    const int n_obs = spaces.joint_obs_count();
    const int n_act = spaces.joint_act_count();
    std::vector<std::vector<double>> kernel(static_cast<std::size_t>(n_obs));
    for (int o = 0; o < n_obs; ++o) {
        if (!dyn.realized[static_cast<std::size_t>(o)]) continue;
        auto& row = kernel[static_cast<std::size_t>(o)];
        row.assign(static_cast<std::size_t>(n_obs), 0.0);
        const auto jo = spaces.obs_at(o);
        const auto act_probs = pi.joint_action_probs(jo);
        for (int a = 0; a < n_act; ++a) {
            const double pa = act_probs[static_cast<std::size_t>(a)];
            const auto& tr = dyn.row(o, a);
            for (int o2 = 0; o2 < n_obs; ++o2)
                row[static_cast<std::size_t>(o2)] += pa * tr[static_cast<std::size_t>(o2)];
        }
    }
    return kernel;
}

std::vector<double> step_distribution(const std::vector<std::vector<double>>& kernel,
                                      const std::vector<double>& d) {
    const std::size_t n = d.size();
    std::vector<double> next(n, 0.0);
    for (std::size_t o = 0; o < n; ++o) {
        if (d[o] <= 0.0) continue;
        if (kernel[o].empty())
            throw SupportMismatchError(
                "propagation reached a joint observation never realized by the environment (o=" +
                std::to_string(o) + ")");
        for (std::size_t o2 = 0; o2 < n; ++o2) next[o2] += d[o] * kernel[o][o2];
    }
    return next;
}

DistributionTable resolve_init(const envs::JointObsDynamics& dyn,
                               const std::optional<DistributionTable>& init) {
    if (init) {
        init->require_valid();
        if (!(init->spaces == dyn.spaces))
            throw std::invalid_argument("initial distribution spaces mismatch");
        return *init;
    }
    return DistributionTable::from_vector(dyn.spaces, dyn.init_dist_o);
}

}  // namespace

DistributionTable DistributionTable::point_mass(const SpaceSpec& spaces,
                                                const JointObservation& o) {
    spaces.require(o);
    DistributionTable t;
    t.spaces = spaces;
    t.probs.assign(static_cast<std::size_t>(spaces.joint_obs_count()), 0.0);
    t.probs[static_cast<std::size_t>(spaces.obs_index(o))] = 1.0;
    return t;
}

DistributionTable DistributionTable::from_vector(const SpaceSpec& spaces,
                                                 std::vector<double> probs) {
    DistributionTable t;
    t.spaces = spaces;
    t.probs = std::move(probs);
    t.require_valid();
    return t;
}

DistributionTable DistributionTable::from_dataset_obs(const Dataset& d) {
    if (d.empty()) throw std::runtime_error("DistributionTable: empty dataset");
    DistributionTable t;
    t.spaces = d.spec();
    t.probs.assign(static_cast<std::size_t>(t.spaces.joint_obs_count()), 0.0);
    for (std::size_t i = 0; i < d.size(); ++i)
        t.probs[static_cast<std::size_t>(t.spaces.obs_index(d.at(i).obs))] += 1.0;
    normalize_in_place(t.probs);
    return t;
}

void DistributionTable::require_valid() const {
    if (static_cast<int>(probs.size()) != spaces.joint_obs_count())
        throw std::invalid_argument("DistributionTable: wrong support size");
    require_distribution(probs, 1e-9);
}

ReturnEstimate exact_return(const envs::JointObsDynamics& dyn, const policy::JointPolicy& pi,
                            double gamma, int T, const std::optional<DistributionTable>& init) {
    if (T < 1) throw std::invalid_argument("exact_return: T must be >= 1");
    const auto init_table = resolve_init(dyn, init);
    const auto kernel = true_kernel(dyn, pi);
    const int n_obs = dyn.spaces.joint_obs_count();

    // Expected one-step reward per joint observation under the policy.
    std::vector<double> r_bar(static_cast<std::size_t>(n_obs), 0.0);
    for (int o = 0; o < n_obs; ++o) {
        if (!dyn.realized[static_cast<std::size_t>(o)]) continue;
        const auto act_probs = pi.joint_action_probs(dyn.spaces.obs_at(o));
        for (int a = 0; a < dyn.spaces.joint_act_count(); ++a)
            r_bar[static_cast<std::size_t>(o)] +=
                act_probs[static_cast<std::size_t>(a)] * dyn.reward_at(o, a);
    }

    ReturnEstimate res;
    res.truncation_T = T;
    std::vector<double> d = init_table.probs;
    double discount = 1.0;
    for (int t = 0; t < T; ++t) {
        double step = 0.0;
        for (int o = 0; o < n_obs; ++o) {
            if (d[static_cast<std::size_t>(o)] <= 0.0) continue;
            if (!dyn.realized[static_cast<std::size_t>(o)])
                throw SupportMismatchError(
                    "exact_return: mass on a joint observation never realized (o=" +
                    std::to_string(o) + ")");
            step += d[static_cast<std::size_t>(o)] * r_bar[static_cast<std::size_t>(o)];
        }
        res.value += discount * step;
        discount *= gamma;
        if (t + 1 < T) d = step_distribution(kernel, d);
    }
    res.tail_bound = std::pow(gamma, T) * dyn.r_max / (1.0 - gamma);
    return res;
}

namespace {

ReturnEstimate model_return_impl(const models::LocalModelSet& ms, const policy::JointPolicy& pi,
                                 const DistributionTable& init, double gamma, int T,
                                 const envs::JointObsDynamics* known_reward_dyn, double r_max) {
    if (T < 1) throw std::invalid_argument("model_return: T must be >= 1");
    init.require_valid();
    const auto kernel = model_kernel(ms, pi);
    const auto& spaces = ms.spaces();
    const int n_obs = spaces.joint_obs_count();
    const int n_act = spaces.joint_act_count();

    std::vector<double> r_bar(static_cast<std::size_t>(n_obs), 0.0);
    for (int o = 0; o < n_obs; ++o) {
        const auto jo = spaces.obs_at(o);
        if (known_reward_dyn && !known_reward_dyn->realized[static_cast<std::size_t>(o)])
            continue;  // guarded below if mass actually reaches it
        const auto act_probs = pi.joint_action_probs(jo);
        for (int a = 0; a < n_act; ++a) {
            const double pa = act_probs[static_cast<std::size_t>(a)];
            const double r = known_reward_dyn
                                 ? known_reward_dyn->reward_at(o, a)
                                 : ms.predict_joint(jo, spaces.act_at(a)).mean_reward;
            r_bar[static_cast<std::size_t>(o)] += pa * r;
        }
    }

    ReturnEstimate res;
    res.truncation_T = T;
    std::vector<double> d = init.probs;
    double discount = 1.0;
    for (int t = 0; t < T; ++t) {
        double step = 0.0;
        for (int o = 0; o < n_obs; ++o) {
            const double mass = d[static_cast<std::size_t>(o)];
            if (mass <= 0.0) continue;
            if (known_reward_dyn && !known_reward_dyn->realized[static_cast<std::size_t>(o)])
                throw SupportMismatchError(
                    "model_return: model mass on a joint observation with no known reward (o=" +
                    std::to_string(o) + ")");
            step += mass * r_bar[static_cast<std::size_t>(o)];
        }
        res.value += discount * step;
        discount *= gamma;
        if (t + 1 < T) {
            std::vector<double> next(static_cast<std::size_t>(n_obs), 0.0);
            for (int o = 0; o < n_obs; ++o) {
                const double mass = d[static_cast<std::size_t>(o)];
                if (mass <= 0.0) continue;
                for (int o2 = 0; o2 < n_obs; ++o2)
                    next[static_cast<std::size_t>(o2)] +=
                        mass * kernel[static_cast<std::size_t>(o)][static_cast<std::size_t>(o2)];
            }
            d = std::move(next);
        }
    }
    res.tail_bound = std::pow(gamma, T) * r_max / (1.0 - gamma);
    return res;
}

}  // namespace

ReturnEstimate model_return(const models::LocalModelSet& ms, const policy::JointPolicy& pi,
                            const DistributionTable& init, double gamma, int T) {
    // Tail scale from the reward heads.
    double r_max = 0.0;
    const auto& spaces = ms.spaces();
    for (int o = 0; o < spaces.joint_obs_count(); ++o)
        for (int a = 0; a < spaces.joint_act_count(); ++a)
            r_max = std::max(r_max, std::abs(ms.predict_joint(spaces.obs_at(o), spaces.act_at(a))
                                                 .mean_reward));
    return model_return_impl(ms, pi, init, gamma, T, nullptr, r_max);
}

ReturnEstimate model_return_known_reward(const models::LocalModelSet& ms,
                                         const envs::JointObsDynamics& dyn,
                                         const policy::JointPolicy& pi,
                                         const DistributionTable& init, double gamma, int T) {
    return model_return_impl(ms, pi, init, gamma, T, &dyn, dyn.r_max);
}

std::vector<std::vector<double>> propagate_model(const models::LocalModelSet& ms,
                                                 const policy::JointPolicy& pi,
                                                 const DistributionTable& init, int T) {
    init.require_valid();
    const auto kernel = model_kernel(ms, pi);
    std::vector<std::vector<double>> out;
    out.reserve(static_cast<std::size_t>(T) + 1);
    out.push_back(init.probs);
    for (int t = 1; t <= T; ++t) {
        const auto& d = out.back();
        std::vector<double> next(d.size(), 0.0);
        for (std::size_t o = 0; o < d.size(); ++o) {
            if (d[o] <= 0.0) continue;
            for (std::size_t o2 = 0; o2 < d.size(); ++o2) next[o2] += d[o] * kernel[o][o2];
        }
        out.push_back(std::move(next));
    }
    return out;
}

double epsilon_pi(const policy::JointPolicy& pi_d, const policy::JointPolicy& pi) {
    if (!(pi_d.spaces() == pi.spaces()))
        throw std::invalid_argument("epsilon_pi: policy spaces mismatch");
    const auto& spaces = pi.spaces();
    double worst = 0.0;
    for (int o = 0; o < spaces.joint_obs_count(); ++o) {
        const auto jo = spaces.obs_at(o);
        worst = std::max(worst,
                         total_variation(pi_d.joint_action_probs(jo), pi.joint_action_probs(jo)));
    }
    return worst;
}

double model_error_inner_literal(const models::LocalModelSet& ms,
                                 const envs::JointObsDynamics& dyn, const JointObservation& o,
                                 const JointAction& a) {
    const auto& spaces = ms.spaces();
    const auto pred = ms.predict_joint(o, a);
    const auto& true_row = dyn.row(spaces.obs_index(o), spaces.act_index(a));
    const int n_agents = spaces.n_agents();

    std::vector<std::vector<double>> per_agent;
    for (int i = 0; i < n_agents; ++i) per_agent.push_back(ms.model(i).predict_obs(o, a));

    double total = 0.0;
    for (int i = 0; i < n_agents; ++i) {
        double term = 0.0;
        for (int o2 = 0; o2 < spaces.joint_obs_count(); ++o2) {
            const double w = pred.joint_probs[static_cast<std::size_t>(o2)];
            if (w <= 0.0) continue;
            const double p_true = true_row[static_cast<std::size_t>(o2)];
            if (p_true <= 0.0) {
                std::ostringstream msg;
                msg << "support mismatch in model error: model mass where true mass is 0 at (o="
                    << spaces.obs_index(o) << ", a=" << spaces.act_index(a) << ", o'=" << o2
                    << ")";
                throw SupportMismatchError(msg.str());
            }
            const auto jo2 = spaces.obs_at(o2);
            const double p_i =
                per_agent[static_cast<std::size_t>(i)]
                         [static_cast<std::size_t>(jo2.per_agent[static_cast<std::size_t>(i)])];
            term += w * (std::log(p_i) -
                         std::log(p_true) / static_cast<double>(n_agents));
        }
        total += term;
    }
    return total;
}

namespace {

// Worst-case (over joint actions) Pinsker error at every joint observation,
// with the literal-formula-vs-KL identity enforced.
std::vector<double> worst_case_pinsker(const models::LocalModelSet& ms,
                                       const envs::JointObsDynamics& dyn) {
    const auto& spaces = ms.spaces();
    const int n_obs = spaces.joint_obs_count();
    const int n_act = spaces.joint_act_count();
    std::vector<double> worst(static_cast<std::size_t>(n_obs), -1.0);
    for (int o = 0; o < n_obs; ++o) {
        if (!dyn.realized[static_cast<std::size_t>(o)]) continue;  // guarded at use sites
        const auto jo = spaces.obs_at(o);
        double w = 0.0;
        for (int a = 0; a < n_act; ++a) {
            const auto ja = spaces.act_at(a);
            const double literal = model_error_inner_literal(ms, dyn, jo, ja);
            const double kl = reward::model_row_kl(dyn, ms, jo, ja);
            if (std::abs(literal - kl) > 1e-9)
                throw std::logic_error(
                    "model error identity violated: literal inner sum differs from KL by " +
                    std::to_string(std::abs(literal - kl)));
            // Sums this small are float evaluation noise around an exact KL
            // of zero; the square root would blow the noise up to 1e-8.
            const double kl_val = literal < 1e-12 ? 0.0 : literal;
            w = std::max(w, std::sqrt(2.0 * kl_val));
        }
        worst[static_cast<std::size_t>(o)] = w;
    }
    return worst;
}

double epsilon_from_distribution(const std::vector<double>& d, const std::vector<double>& worst) {
    double eps = 0.0;
    for (std::size_t o = 0; o < d.size(); ++o) {
        if (d[o] <= 0.0) continue;
        if (worst[o] < 0.0)
            throw SupportMismatchError(
                "model distribution puts mass on a joint observation never realized (o=" +
                std::to_string(o) + ")");
        eps += d[o] * worst[o];
    }
    return eps;
}

}  // namespace

double epsilon_m_t(const models::LocalModelSet& ms, const envs::JointObsDynamics& dyn,
                   const policy::JointPolicy& pi, int t, const DistributionTable& init) {
    if (t < 1) throw std::invalid_argument("epsilon_m_t: t must be >= 1");
    const auto dists = propagate_model(ms, pi, init, t - 1);
    const auto worst = worst_case_pinsker(ms, dyn);
    return epsilon_from_distribution(dists.back(), worst);
}

std::vector<double> epsilon_m_series(const models::LocalModelSet& ms,
                                     const envs::JointObsDynamics& dyn,
                                     const policy::JointPolicy& pi, const DistributionTable& init,
                                     int T) {
    if (T < 1) throw std::invalid_argument("epsilon_m_series: T must be >= 1");
    const auto dists = propagate_model(ms, pi, init, T - 1);
    const auto worst = worst_case_pinsker(ms, dyn);
    std::vector<double> eps(static_cast<std::size_t>(T), 0.0);
    for (int t = 1; t <= T; ++t)
        eps[static_cast<std::size_t>(t - 1)] =
            epsilon_from_distribution(dists[static_cast<std::size_t>(t - 1)], worst);
    return eps;
}

int default_truncation(double gamma, double r_max, double tol) {
    if (gamma <= 0.0) return 1;
    if (r_max <= 0.0) return 1;
    int T = 1;
    double tail = gamma * r_max / (1.0 - gamma);
    while (tail >= tol && T < 1000000) {
        tail *= gamma;
        ++T;
    }
    return T;
}

BoundReport bound_report(const envs::JointObsDynamics& dyn, const models::LocalModelSet& ms,
                      const policy::JointPolicy& pi_d, const policy::JointPolicy& pi,
                      const std::optional<DistributionTable>& init, std::optional<int> T_opt) {
    const double gamma = dyn.gamma;
    BoundReport rep;
    rep.r_max = dyn.r_max;
    rep.truncation_T = T_opt ? *T_opt : default_truncation(gamma, dyn.r_max);
    const int T = rep.truncation_T;
    const auto init_table = resolve_init(dyn, init);

    rep.j_true = exact_return(dyn, pi, gamma, T, init_table).value;
    rep.j_model = model_return_known_reward(ms, dyn, pi, init_table, gamma, T).value;
    rep.j_model_learned = model_return(ms, pi, init_table, gamma, T).value;
    rep.gap = std::abs(rep.j_true - rep.j_model);
    rep.eps_pi = epsilon_pi(pi_d, pi);
    rep.eps_m = epsilon_m_series(ms, dyn, pi, init_table, T);
    rep.tail_bound = std::pow(gamma, T) * dyn.r_max / (1.0 - gamma);

    double series = 0.0, discount = gamma;
    for (int t = 1; t <= T; ++t) {
        series += discount * rep.eps_m[static_cast<std::size_t>(t - 1)];
        discount *= gamma;
        rep.delta_max = std::max(rep.delta_max, rep.eps_m[static_cast<std::size_t>(t - 1)]);
    }
    const double front = dyn.r_max / ((1.0 - gamma) * (1.0 - gamma));
    rep.rhs_per_step = front * (2.0 * rep.eps_pi + (1.0 - gamma) * series);
    rep.rhs_scaled = front * (2.0 * rep.eps_pi + gamma * rep.delta_max);

    // Reported only: the expected-TV variant of the scaled bound.
    {
        const auto dists = propagate_model(ms, pi, init_table, T - 1);
        const auto& spaces = ms.spaces();
        const int n_obs = spaces.joint_obs_count();
        const int n_act = spaces.joint_act_count();
        std::vector<std::vector<double>> tv_cell(
            static_cast<std::size_t>(n_obs), std::vector<double>(static_cast<std::size_t>(n_act), 0.0));
        for (int o = 0; o < n_obs; ++o) {
            if (!dyn.realized[static_cast<std::size_t>(o)]) continue;
            const auto jo = spaces.obs_at(o);
            for (int a = 0; a < n_act; ++a) {
                const auto pred = ms.predict_joint(jo, spaces.act_at(a));
                tv_cell[static_cast<std::size_t>(o)][static_cast<std::size_t>(a)] =
                    total_variation(pred.joint_probs, dyn.row(o, a));
            }
        }
        for (int t = 1; t <= T; ++t) {
            const auto& d = dists[static_cast<std::size_t>(t - 1)];
            for (int a = 0; a < n_act; ++a) {
                double e = 0.0;
                for (int o = 0; o < n_obs; ++o) {
                    if (d[static_cast<std::size_t>(o)] <= 0.0) continue;
                    e += d[static_cast<std::size_t>(o)] *
                         tv_cell[static_cast<std::size_t>(o)][static_cast<std::size_t>(a)];
                }
                rep.delta_tv = std::max(rep.delta_tv, e);
            }
        }
    }
    return rep;
}

double bound_scaled_max(const BoundReport& report) { return report.rhs_scaled; }

LemmaCheckResult lemma_tv_chain_check(const std::vector<std::vector<double>>& p1_xy,
                                      const std::vector<std::vector<double>>& p2_xy) {
    if (p1_xy.size() != p2_xy.size() || p1_xy.empty())
        throw std::invalid_argument("lemma_tv_chain_check: shape mismatch");
    const std::size_t nx = p1_xy.size();
    const std::size_t ny = p1_xy[0].size();
    for (std::size_t x = 0; x < nx; ++x)
        if (p1_xy[x].size() != ny || p2_xy[x].size() != ny)
            throw std::invalid_argument("lemma_tv_chain_check: ragged tables");

    double tv_joint = 0.0;
    std::vector<double> m1(nx, 0.0), m2(nx, 0.0);
    for (std::size_t x = 0; x < nx; ++x) {
        for (std::size_t y = 0; y < ny; ++y) {
            tv_joint += std::abs(p1_xy[x][y] - p2_xy[x][y]);
            m1[x] += p1_xy[x][y];
            m2[x] += p2_xy[x][y];
        }
    }
    tv_joint *= 0.5;

    const double tv_marg = total_variation(m1, m2);
    double max_cond = 0.0, exp_cond = 0.0;
    for (std::size_t x = 0; x < nx; ++x) {
        // Conditionals are undefined at zero-mass x; those x are excluded.
        if (m1[x] <= 0.0 || m2[x] <= 0.0) continue;
        double tv_cond = 0.0;
        for (std::size_t y = 0; y < ny; ++y)
            tv_cond += std::abs(p1_xy[x][y] / m1[x] - p2_xy[x][y] / m2[x]);
        tv_cond *= 0.5;
        max_cond = std::max(max_cond, tv_cond);
        exp_cond += m1[x] * tv_cond;
    }

    LemmaCheckResult res;
    res.tv_joint = tv_joint;
    res.rhs_max_form = tv_marg + max_cond;
    res.rhs_expect_form = tv_marg + exp_cond;
    constexpr double kSlack = 1e-12;
    res.ok_max = tv_joint <= res.rhs_max_form + kSlack;
    res.ok_expect = tv_joint <= res.rhs_expect_form + kSlack;
    if (!res.ok_max || !res.ok_expect) {
        std::ostringstream d;
        d << "tv_joint=" << tv_joint << " rhs_max=" << res.rhs_max_form
          << " rhs_expect=" << res.rhs_expect_form;
        res.detail = d.str();
    }
    return res;
}

PinskerCheckResult pinsker_check(std::span<const double> p, std::span<const double> q) {
    PinskerCheckResult res;
    res.tv = total_variation(p, q);
    res.kl = kl_divergence(p, q);
    if (std::isinf(res.kl)) {
        res.vacuous = true;
        res.ok = true;
        return res;
    }
    res.ok = res.tv <= std::sqrt(res.kl / 2.0) + 1e-12;
    return res;
}

MonotonicObjective monotonic_objective(const envs::JointObsDynamics& dyn,
                                       const models::LocalModelSet& ms,
                                       const policy::JointPolicy& pi_d,
                                       const policy::JointPolicy& pi, double gamma, int T,
                                       const std::optional<DistributionTable>& init) {
    if (std::abs(gamma - dyn.gamma) > 1e-12)
        throw std::invalid_argument("monotonic_objective: gamma disagrees with the dynamics");
    const auto rep = bound_report(dyn, ms, pi_d, pi, init, T);
    MonotonicObjective res;
    res.j_model = rep.j_model;
    res.c_bound = rep.rhs_per_step;
    res.objective = rep.j_model - rep.rhs_per_step;
    res.objective_2c = rep.j_model - 2.0 * rep.rhs_per_step;
    res.j_true = rep.j_true;
    res.tail_bound = rep.tail_bound;
    return res;
}

policy::JointPolicy make_random_policy(const SpaceSpec& spaces, const SeedKey& seed,
                                       double logit_spread) {
    policy::JointPolicy pi(spaces, policy::PolicyBackend::tabular, seed);
    Rng rng(seed.child("logits"));
    for (int i = 0; i < spaces.n_agents(); ++i) {
        auto& params = pi.actor(i).mutable_parameters();
        for (double& w : params) w = rng.uniform(-logit_spread, logit_spread);
    }
    return pi;
}

models::LocalModelSet make_random_model_set(const envs::JointObsDynamics& dyn,
                                            const SeedKey& seed, double max_corruption) {
    models::LocalModelSet ms(dyn.spaces, models::ModelBackend::tabular, seed,
                             /*laplace_alpha=*/0.0);
    Rng rng(seed.child("mix"));
    const auto& spaces = dyn.spaces;
    const int n_obs = spaces.joint_obs_count();
    const int n_act = spaces.joint_act_count();
    const double beta_scale = rng.uniform01() * max_corruption;
    for (int o = 0; o < n_obs; ++o) {
        if (!dyn.realized[static_cast<std::size_t>(o)]) continue;
        const auto jo = spaces.obs_at(o);
        for (int a = 0; a < n_act; ++a) {
            const auto& row = dyn.row(o, a);
            const double r_true = dyn.reward_at(o, a);
            const auto ja = spaces.act_at(a);
            for (int i = 0; i < spaces.n_agents(); ++i) {
                const int osz = spaces.obs_size(i);
                std::vector<double> marginal(static_cast<std::size_t>(osz), 0.0);
                for (int o2 = 0; o2 < n_obs; ++o2) {
                    const auto jo2 = spaces.obs_at(o2);
                    marginal[static_cast<std::size_t>(
                        jo2.per_agent[static_cast<std::size_t>(i)])] +=
                        row[static_cast<std::size_t>(o2)];
                }
                std::vector<double> random_row(static_cast<std::size_t>(osz));
                for (double& x : random_row) x = rng.uniform01() + 1e-3;
                normalize_in_place(random_row);
                const double beta = beta_scale * rng.uniform01();
                std::vector<double> cond(static_cast<std::size_t>(osz));
                for (int v = 0; v < osz; ++v)
                    cond[static_cast<std::size_t>(v)] =
                        (1.0 - beta) * marginal[static_cast<std::size_t>(v)] +
                        beta * random_row[static_cast<std::size_t>(v)];
                ms.mutable_model(i).set_tabular_cell(jo, ja, std::move(cond),
                                                     r_true + rng.uniform(-0.2, 0.2));
            }
        }
    }
    return ms;
}

BoundAuditResult audit_bound(const envs::JointObsDynamics& dyn, int instances,
                             const SeedKey& seed, const ExecPolicy& exec) {
    BoundAuditResult res;
    res.instances = instances;
    std::vector<char> sound(static_cast<std::size_t>(instances), 0);
    std::vector<char> tight(static_cast<std::size_t>(instances), 0);
    std::vector<double> ratio(static_cast<std::size_t>(instances), 0.0);
    parallel_for(exec, static_cast<std::size_t>(instances), [&](std::size_t i) {
        const auto inst_seed = seed.child("instance", i);
        const auto ms = make_random_model_set(dyn, inst_seed.child("model"));
        auto pi_d = make_random_policy(dyn.spaces, inst_seed.child("policy"));
        // Perturb the data-collecting policy into the current one.
        auto pi = pi_d;
        Rng rng(inst_seed.child("shift"));
        const double scale = rng.uniform01();
        for (int ag = 0; ag < dyn.spaces.n_agents(); ++ag)
            for (double& w : pi.actor(ag).mutable_parameters())
                w += rng.uniform(-scale, scale);
        const auto rep = bound_report(dyn, ms, pi_d, pi);
        sound[i] = rep.sound() ? 1 : 0;
        tight[i] = rep.tighter_than_scaled() ? 1 : 0;
        ratio[i] = rep.rhs_per_step > 0.0 ? rep.gap / rep.rhs_per_step : 0.0;
    });
    for (int i = 0; i < instances; ++i) {
        if (!sound[static_cast<std::size_t>(i)]) ++res.sound_violations;
        if (!tight[static_cast<std::size_t>(i)]) ++res.tightness_violations;
        res.max_gap_over_rhs = std::max(res.max_gap_over_rhs, ratio[static_cast<std::size_t>(i)]);
    }
    return res;
}

}  // namespace mag::theory
