#include "mag/env.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <ostream>
#include <sstream>

#include "mag/prob.hpp"
#include "mag/text_io.hpp"

namespace mag::envs {

JointObservation TabularDecPomdp::observe(int state) const {
    JointObservation o;
    o.per_agent = obs_fn[static_cast<std::size_t>(state)];
    return o;
}

bool TabularDecPomdp::is_absorbing(int state) const {
    const auto& rows = transition[static_cast<std::size_t>(state)];
    for (const auto& row : rows) {
        if (std::abs(row[static_cast<std::size_t>(state)] - 1.0) > 1e-12) return false;
    }
    return true;
}

double TabularDecPomdp::max_abs_reward() const {
    double m = 0.0;
    for (const auto& per_act : reward)
        for (double r : per_act) m = std::max(m, std::abs(r));
    return m;
}

void TabularDecPomdp::validate() const {
    if (n_states < 1) throw std::invalid_argument(name + ": n_states < 1");
    if (gamma < 0.0 || gamma >= 1.0) throw std::invalid_argument(name + ": gamma outside [0,1)");
    if (horizon < 1) throw std::invalid_argument(name + ": horizon < 1");
    const auto ns = static_cast<std::size_t>(n_states);
    const auto na = static_cast<std::size_t>(spaces.joint_act_count());
    if (obs_fn.size() != ns || transition.size() != ns || reward.size() != ns)
        throw std::invalid_argument(name + ": table sizes disagree with n_states");
    for (std::size_t s = 0; s < ns; ++s) {
        if (static_cast<int>(obs_fn[s].size()) != spaces.n_agents())
            throw std::invalid_argument(name + ": obs_fn row width != n_agents");
        for (int i = 0; i < spaces.n_agents(); ++i) {
            ObsId id = obs_fn[s][static_cast<std::size_t>(i)];
            if (id < 0 || id >= spaces.obs_size(i))
                throw std::invalid_argument(name + ": observation id out of range");
        }
        if (transition[s].size() != na || reward[s].size() != na)
            throw std::invalid_argument(name + ": action dimension mismatch");
        for (std::size_t a = 0; a < na; ++a) {
            if (transition[s][a].size() != ns)
                throw std::invalid_argument(name + ": transition row length != n_states");
            if (!is_distribution(transition[s][a], 1e-9))
                throw std::invalid_argument(name + ": transition row does not sum to 1");
            if (!std::isfinite(reward[s][a]))
                throw std::invalid_argument(name + ": non-finite reward");
        }
    }
    if (init_dist.size() != ns || !is_distribution(init_dist, 1e-9))
        throw std::invalid_argument(name + ": init_dist is not a distribution over states");
}

const std::vector<double>& JointObsDynamics::row(int obs_index, int act_index) const {
    if (!realized[static_cast<std::size_t>(obs_index)])
        throw std::invalid_argument("JointObsDynamics: joint observation never realized");
    return transition_o[static_cast<std::size_t>(obs_index)][static_cast<std::size_t>(act_index)];
}

double JointObsDynamics::reward_at(int obs_index, int act_index) const {
    if (!realized[static_cast<std::size_t>(obs_index)])
        throw std::invalid_argument("JointObsDynamics: joint observation never realized");
    return reward_o[static_cast<std::size_t>(obs_index)][static_cast<std::size_t>(act_index)];
}

std::vector<int> JointObsDynamics::realized_indices() const {
    std::vector<int> out;
    for (std::size_t i = 0; i < realized.size(); ++i)
        if (realized[i]) out.push_back(static_cast<int>(i));
    return out;
}

JointObsDynamics derive_joint_obs_dynamics(const TabularDecPomdp& env) {
    env.validate();
    const int n_obs = env.spaces.joint_obs_count();
    const int n_act = env.spaces.joint_act_count();
    const auto ns = static_cast<std::size_t>(env.n_states);

    std::vector<int> state_obs(ns);
    std::vector<std::vector<int>> groups(static_cast<std::size_t>(n_obs));
    for (std::size_t s = 0; s < ns; ++s) {
        state_obs[s] = env.spaces.obs_index(env.observe(static_cast<int>(s)));
        groups[static_cast<std::size_t>(state_obs[s])].push_back(static_cast<int>(s));
    }

    JointObsDynamics dyn;
    dyn.spaces = env.spaces;
    dyn.gamma = env.gamma;
    dyn.realized.assign(static_cast<std::size_t>(n_obs), 0);
    dyn.transition_o.assign(static_cast<std::size_t>(n_obs), {});
    dyn.reward_o.assign(static_cast<std::size_t>(n_obs), {});
    dyn.init_dist_o.assign(static_cast<std::size_t>(n_obs), 0.0);

    auto pushforward = [&](int s, int a) {
        std::vector<double> row(static_cast<std::size_t>(n_obs), 0.0);
        const auto& tr = env.transition[static_cast<std::size_t>(s)][static_cast<std::size_t>(a)];
        for (std::size_t s2 = 0; s2 < ns; ++s2)
            row[static_cast<std::size_t>(state_obs[s2])] += tr[s2];
        return row;
    };

    constexpr double kTol = 1e-9;
    for (int o = 0; o < n_obs; ++o) {
        const auto& members = groups[static_cast<std::size_t>(o)];
        if (members.empty()) continue;
        dyn.realized[static_cast<std::size_t>(o)] = 1;
        auto& rows = dyn.transition_o[static_cast<std::size_t>(o)];
        auto& rws = dyn.reward_o[static_cast<std::size_t>(o)];
        rows.resize(static_cast<std::size_t>(n_act));
        rws.resize(static_cast<std::size_t>(n_act));
        for (int a = 0; a < n_act; ++a) {
            auto ref = pushforward(members[0], a);
            double ref_r = env.reward[static_cast<std::size_t>(members[0])][static_cast<std::size_t>(a)];
            for (std::size_t m = 1; m < members.size(); ++m) {
                auto other = pushforward(members[m], a);
                double diff = 0.0;
                for (std::size_t k = 0; k < other.size(); ++k) diff += std::abs(other[k] - ref[k]);
                double r_other = env.reward[static_cast<std::size_t>(members[m])][static_cast<std::size_t>(a)];
                if (diff > kTol || std::abs(r_other - ref_r) > kTol) {
                    std::ostringstream msg;
                    msg << env.name << ": observation-insufficiency at joint observation " << o
                        << " (states " << members[0] << " and " << members[m]
                        << " disagree under joint action " << a << ")";
                    throw ObservationInsufficiencyError(msg.str());
                }
            }
            rows[static_cast<std::size_t>(a)] = std::move(ref);
            rws[static_cast<std::size_t>(a)] = ref_r;
        }
    }

    for (std::size_t s = 0; s < ns; ++s)
        dyn.init_dist_o[static_cast<std::size_t>(state_obs[s])] += env.init_dist[s];

    double rm = 0.0;
    for (int o = 0; o < n_obs; ++o) {
        if (!dyn.realized[static_cast<std::size_t>(o)]) continue;
        for (double r : dyn.reward_o[static_cast<std::size_t>(o)]) rm = std::max(rm, std::abs(r));
    }
    dyn.r_max = rm;
    return dyn;
}

EpisodeSim::EpisodeSim(const TabularDecPomdp& env, const SeedKey& seed)
    : env_(&env), rng_(seed) {}

JointObservation EpisodeSim::reset() {
    state_ = static_cast<int>(rng_.categorical(env_->init_dist));
    t_ = 0;
    terminal_ = env_->is_absorbing(state_) || env_->horizon == 0;
    return env_->observe(state_);
}

EpisodeSim::StepResult EpisodeSim::step(const JointAction& act) {
    if (terminal_) throw std::runtime_error("EpisodeSim: step on a terminal episode");
    env_->spaces.require(act);
    const int a = env_->spaces.act_index(act);
    const auto& row = env_->transition[static_cast<std::size_t>(state_)][static_cast<std::size_t>(a)];
    const double r = env_->reward[static_cast<std::size_t>(state_)][static_cast<std::size_t>(a)];
    state_ = static_cast<int>(rng_.categorical(row));
    ++t_;
    terminal_ = t_ >= env_->horizon || env_->is_absorbing(state_);
    return StepResult{env_->observe(state_), r, terminal_};
}

std::pair<int, JointObservation> env_reset(const TabularDecPomdp& env, const SeedKey& seed) {
    Rng rng(seed);
    int s = static_cast<int>(rng.categorical(env.init_dist));
    return {s, env.observe(s)};
}

EpisodeSim::StepResult env_step(const TabularDecPomdp& env, int state, const JointAction& act,
                                const SeedKey& seed, int& next_state) {
    if (env.is_absorbing(state)) throw std::runtime_error("env_step: state is absorbing (terminal)");
    env.spaces.require(act);
    Rng rng(seed);
    const int a = env.spaces.act_index(act);
    next_state = static_cast<int>(rng.categorical(env.transition[static_cast<std::size_t>(state)][static_cast<std::size_t>(a)]));
    const double r = env.reward[static_cast<std::size_t>(state)][static_cast<std::size_t>(a)];
    return EpisodeSim::StepResult{env.observe(next_state), r, env.is_absorbing(next_state)};
}

namespace {

// Builds an env whose states are exactly the joint observations (obs_fn is
// the coordinate projection) and whose transition rows come from row_fn.
TabularDecPomdp build_obs_level_env(
    std::string name, SpaceSpec spaces,
    const std::function<std::vector<double>(int, int)>& row_fn,
    const std::function<double(int, int)>& reward_fn,
    std::vector<double> init_dist, double gamma, int horizon) {
    TabularDecPomdp env;
    env.name = std::move(name);
    env.spaces = spaces;
    env.n_states = spaces.joint_obs_count();
    env.gamma = gamma;
    env.horizon = horizon;
    env.init_dist = std::move(init_dist);
    const int n_act = spaces.joint_act_count();
    env.obs_fn.resize(static_cast<std::size_t>(env.n_states));
    env.transition.resize(static_cast<std::size_t>(env.n_states));
    env.reward.resize(static_cast<std::size_t>(env.n_states));
    for (int s = 0; s < env.n_states; ++s) {
        env.obs_fn[static_cast<std::size_t>(s)] = spaces.obs_at(s).per_agent;
        env.transition[static_cast<std::size_t>(s)].resize(static_cast<std::size_t>(n_act));
        env.reward[static_cast<std::size_t>(s)].resize(static_cast<std::size_t>(n_act));
        for (int a = 0; a < n_act; ++a) {
            env.transition[static_cast<std::size_t>(s)][static_cast<std::size_t>(a)] = row_fn(s, a);
            env.reward[static_cast<std::size_t>(s)][static_cast<std::size_t>(a)] = reward_fn(s, a);
        }
    }
    env.validate();
    return env;
}

// Mixes a per-agent factor with a uniform floor and renormalizes.
std::vector<double> mix_uniform(std::vector<double> f, double eps) {
    const double u = eps / static_cast<double>(f.size());
    for (double& x : f) x = (1.0 - eps) * x + u;
    normalize_in_place(f);
    return f;
}

// Joint row as the product of per-agent component factors.
std::vector<double> product_row(const SpaceSpec& spaces,
                                const std::vector<std::vector<double>>& factors) {
    const int n_obs = spaces.joint_obs_count();
    std::vector<double> row(static_cast<std::size_t>(n_obs), 1.0);
    for (int o = 0; o < n_obs; ++o) {
        const auto jo = spaces.obs_at(o);
        for (int i = 0; i < spaces.n_agents(); ++i)
            row[static_cast<std::size_t>(o)] *=
                factors[static_cast<std::size_t>(i)][static_cast<std::size_t>(jo.per_agent[static_cast<std::size_t>(i)])];
    }
    return row;
}

}  // namespace

TabularDecPomdp make_coop_matrix_chain() {
    // Two agents drive a 3-position chain with a 2-valued phase. Agent 0
    // observes the position, agent 1 the phase. Pushing together in phase 1
    // advances the chain; position 2 pays off and occasionally resets.
    SpaceSpec spaces({3, 2}, 2);
    constexpr double kNoise = 0.05;
    auto row_fn = [&](int s, int a) {
        const auto o = spaces.obs_at(s);
        const auto act = spaces.act_at(a);
        const int pos = o.per_agent[0], phase = o.per_agent[1];
        const int a0 = act.per_agent[0], a1 = act.per_agent[1];
        std::vector<double> fpos(3, 0.0);
        if (pos == 2) {
            fpos[2] = 0.8;
            fpos[0] = 0.2;
        } else if (phase == 1 && a0 == 1 && a1 == 1) {
            fpos[static_cast<std::size_t>(pos + 1)] = 0.85;
            fpos[static_cast<std::size_t>(pos)] = 0.15;
        } else {
            fpos[static_cast<std::size_t>(pos)] = 0.9;
            fpos[static_cast<std::size_t>(std::max(pos - 1, 0))] += 0.1;
        }
        std::vector<double> fphase(2, 0.0);
        fphase[static_cast<std::size_t>(a1)] = 0.9;
        fphase[static_cast<std::size_t>(1 - a1)] = 0.1;
        return product_row(spaces, {mix_uniform(std::move(fpos), kNoise),
                                    mix_uniform(std::move(fphase), kNoise)});
    };
    auto reward_fn = [&](int s, int) {
        return spaces.obs_at(s).per_agent[0] == 2 ? 1.0 : 0.0;
    };
    std::vector<double> init(static_cast<std::size_t>(spaces.joint_obs_count()), 0.0);
    init[0] = 1.0;  // position 0, phase 0
    return build_obs_level_env("coop_matrix_chain", spaces, row_fn, reward_fn, std::move(init),
                               0.95, 20);
}

TabularDecPomdp make_coop_grid_nav() {
    // 4x4 grid: agent 0 patrols columns, agent 1 rows; each observes only its
    // own coordinate. Shared reward when both occupy the goal crossing.
    SpaceSpec spaces({4, 4}, 2);
    constexpr double kNoise = 0.05;
    auto factor_move = [](int v, int a) {
        std::vector<double> f(4, 0.0);
        const int target = std::clamp(v + (a == 1 ? 1 : -1), 0, 3);
        f[static_cast<std::size_t>(target)] += 0.85;
        f[static_cast<std::size_t>(v)] += 0.15;  // slip
        return f;
    };
    auto row_fn = [&](int s, int a) {
        const auto o = spaces.obs_at(s);
        const auto act = spaces.act_at(a);
        return product_row(spaces,
                           {mix_uniform(factor_move(o.per_agent[0], act.per_agent[0]), kNoise),
                            mix_uniform(factor_move(o.per_agent[1], act.per_agent[1]), kNoise)});
    };
    auto reward_fn = [&](int s, int) {
        const auto o = spaces.obs_at(s);
        return (o.per_agent[0] == 3 && o.per_agent[1] == 0) ? 1.0 : 0.0;
    };
    std::vector<double> init(static_cast<std::size_t>(spaces.joint_obs_count()), 0.0);
    init[static_cast<std::size_t>(spaces.obs_index(JointObservation({0, 3})))] = 1.0;
    return build_obs_level_env("coop_grid_nav", spaces, row_fn, reward_fn, std::move(init), 0.95,
                               20);
}

TabularDecPomdp make_figure1_toy() {
    // Branch world. Per-agent components: 0 = hub, 1 = benign loop,
    // 2 = hostile zone. Outside the hostile zone the dynamics factors per
    // agent, so local models can fit it; inside, next components are strongly
    // coupled, which no product of per-agent predictors can represent.
    SpaceSpec spaces({3, 3}, 2);
    constexpr double kNoise = 0.05;
    const int n_obs = spaces.joint_obs_count();
    auto idx = [&](int x, int y) { return spaces.obs_index(JointObservation({x, y})); };

    auto row_fn = [&](int s, int a) -> std::vector<double> {
        const auto o = spaces.obs_at(s);
        const auto act = spaces.act_at(a);
        const int x = o.per_agent[0], y = o.per_agent[1];
        if (x == 2 || y == 2) {
            // Hostile zone: coupled row, action-independent.
            std::vector<double> row(static_cast<std::size_t>(n_obs), 0.0);
            row[static_cast<std::size_t>(idx(2, 2))] += 0.45;
            row[static_cast<std::size_t>(idx(0, 0))] += 0.35;
            row[static_cast<std::size_t>(idx(1, 1))] += 0.10;
            for (int k = 0; k < n_obs; ++k)
                row[static_cast<std::size_t>(k)] += 0.10 / static_cast<double>(n_obs);
            normalize_in_place(row);
            return row;
        }
        // Safe zone: per-agent product row.
        std::vector<std::vector<double>> factors;
        for (int i = 0; i < 2; ++i) {
            const int v = o.per_agent[static_cast<std::size_t>(i)];
            const int ai = act.per_agent[static_cast<std::size_t>(i)];
            std::vector<double> f(3, 0.0);
            if (v == 0) {
                if (ai == 1) { f[1] = 0.8; f[2] = 0.1; f[0] = 0.1; }
                else         { f[2] = 0.7; f[0] = 0.2; f[1] = 0.1; }
            } else {  // v == 1
                if (ai == 1) { f[1] = 0.85; f[0] = 0.1; f[2] = 0.05; }
                else         { f[0] = 0.8;  f[1] = 0.15; f[2] = 0.05; }
            }
            factors.push_back(mix_uniform(std::move(f), kNoise));
        }
        return product_row(spaces, factors);
    };
    auto reward_fn = [&](int s, int a) {
        const auto o = spaces.obs_at(s);
        const auto act = spaces.act_at(a);
        const bool at_goal = o.per_agent[0] == 1 && o.per_agent[1] == 1;
        const bool push = act.per_agent[0] == 1 && act.per_agent[1] == 1;
        return (at_goal && push) ? 1.0 : 0.0;
    };
    std::vector<double> init(static_cast<std::size_t>(n_obs), 0.0);
    init[static_cast<std::size_t>(idx(0, 0))] = 1.0;
    return build_obs_level_env("figure1_toy", spaces, row_fn, reward_fn, std::move(init), 0.95,
                               20);
}

std::vector<std::string> preset_names() {
    return {"coop_matrix_chain", "coop_grid_nav", "figure1_toy"};
}

TabularDecPomdp make_preset(const std::string& name) {
    if (name == "coop_matrix_chain") return make_coop_matrix_chain();
    if (name == "coop_grid_nav") return make_coop_grid_nav();
    if (name == "figure1_toy") return make_figure1_toy();
    throw std::invalid_argument("unknown preset: " + name);
}

TabularDecPomdp make_random_factored_env(const std::vector<int>& obs_sizes, int n_actions,
                                         const SeedKey& seed, double noise, double gamma,
                                         int horizon) {
    SpaceSpec spaces(obs_sizes, n_actions);
    Rng rng(seed);
    const int n_obs = spaces.joint_obs_count();
    const int n_act = spaces.joint_act_count();
    std::vector<std::vector<std::vector<double>>> rows(
        static_cast<std::size_t>(n_obs),
        std::vector<std::vector<double>>(static_cast<std::size_t>(n_act)));
    std::vector<std::vector<double>> rewards(static_cast<std::size_t>(n_obs),
                                             std::vector<double>(static_cast<std::size_t>(n_act)));
    for (int o = 0; o < n_obs; ++o) {
        for (int a = 0; a < n_act; ++a) {
            std::vector<std::vector<double>> factors;
            for (int i = 0; i < spaces.n_agents(); ++i) {
                std::vector<double> f(static_cast<std::size_t>(spaces.obs_size(i)));
                for (double& x : f) x = rng.uniform01() + 1e-3;
                normalize_in_place(f);
                factors.push_back(mix_uniform(std::move(f), noise));
            }
            rows[static_cast<std::size_t>(o)][static_cast<std::size_t>(a)] =
                product_row(spaces, factors);
            rewards[static_cast<std::size_t>(o)][static_cast<std::size_t>(a)] = rng.uniform01();
        }
    }
    std::vector<double> init(static_cast<std::size_t>(n_obs));
    for (double& x : init) x = rng.uniform01() + 1e-3;
    normalize_in_place(init);

    auto row_fn = [&](int s, int a) {
        return rows[static_cast<std::size_t>(s)][static_cast<std::size_t>(a)];
    };
    auto reward_fn = [&](int s, int a) {
        return rewards[static_cast<std::size_t>(s)][static_cast<std::size_t>(a)];
    };
    return build_obs_level_env("random_factored", spaces, row_fn, reward_fn, std::move(init),
                               gamma, horizon);
}

void save_env(const TabularDecPomdp& env, std::ostream& out) {
    out << "magenv v1\n";
    out << "name " << env.name << "\n";
    out << "n_agents " << env.spaces.n_agents() << "\n";
    out << "obs_sizes " << join_ints(env.spaces.obs_sizes()) << "\n";
    out << "n_actions " << env.spaces.n_actions() << "\n";
    out << "n_states " << env.n_states << "\n";
    out << "gamma " << format_double(env.gamma) << "\n";
    out << "horizon " << env.horizon << "\n";
    out << "init";
    for (double p : env.init_dist) out << ' ' << format_double(p);
    out << "\n";
    for (int s = 0; s < env.n_states; ++s)
        out << "obs_fn " << s << ' ' << join_ints(env.obs_fn[static_cast<std::size_t>(s)]) << "\n";
    for (int s = 0; s < env.n_states; ++s) {
        for (int a = 0; a < env.spaces.joint_act_count(); ++a) {
            out << "transition " << s << ' ' << a;
            for (double p : env.transition[static_cast<std::size_t>(s)][static_cast<std::size_t>(a)])
                out << ' ' << format_double(p);
            out << "\n";
        }
    }
    for (int s = 0; s < env.n_states; ++s)
        for (int a = 0; a < env.spaces.joint_act_count(); ++a)
            out << "reward " << s << ' ' << a << ' '
                << format_double(env.reward[static_cast<std::size_t>(s)][static_cast<std::size_t>(a)]) << "\n";
}

void save_env_file(const TabularDecPomdp& env, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("save_env_file: cannot open " + path);
    save_env(env, f);
}

TabularDecPomdp load_env(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || std::string(trim(line)) != "magenv v1")
        throw std::runtime_error("load_env: missing 'magenv v1' header");

    TabularDecPomdp env;
    std::vector<int> obs_sizes;
    int n_agents = -1, n_actions = -1;
    bool shaped = false;
    auto ensure_shape = [&]() {
        if (shaped) return;
        if (n_agents < 1 || obs_sizes.empty() || n_actions < 1 || env.n_states < 1)
            throw std::runtime_error("load_env: table line before sizes were declared");
        if (static_cast<int>(obs_sizes.size()) != n_agents)
            throw std::runtime_error("load_env: n_agents/obs_sizes mismatch");
        env.spaces = SpaceSpec(obs_sizes, n_actions);
        const auto ns = static_cast<std::size_t>(env.n_states);
        const auto na = static_cast<std::size_t>(env.spaces.joint_act_count());
        env.obs_fn.assign(ns, std::vector<ObsId>(static_cast<std::size_t>(n_agents), -1));
        env.transition.assign(ns, std::vector<std::vector<double>>(na));
        env.reward.assign(ns, std::vector<double>(na, 0.0));
        shaped = true;
    };

    while (std::getline(in, line)) {
        auto t = trim(line);
        if (t.empty() || t.front() == '#') continue;
        std::istringstream ls{std::string(t)};
        std::string key;
        ls >> key;
        if (key == "name") {
            std::string rest;
            std::getline(ls, rest);
            env.name = std::string(trim(rest));
        } else if (key == "n_agents") {
            ls >> n_agents;
        } else if (key == "obs_sizes") {
            int v;
            while (ls >> v) obs_sizes.push_back(v);
        } else if (key == "n_actions") {
            ls >> n_actions;
        } else if (key == "n_states") {
            ls >> env.n_states;
        } else if (key == "gamma") {
            ls >> env.gamma;
        } else if (key == "horizon") {
            ls >> env.horizon;
        } else if (key == "init") {
            double p;
            while (ls >> p) env.init_dist.push_back(p);
        } else if (key == "obs_fn") {
            ensure_shape();
            int s;
            ls >> s;
            for (int i = 0; i < n_agents; ++i)
                ls >> env.obs_fn.at(static_cast<std::size_t>(s)).at(static_cast<std::size_t>(i));
        } else if (key == "transition") {
            ensure_shape();
            int s, a;
            ls >> s >> a;
            std::vector<double> row;
            double p;
            while (ls >> p) row.push_back(p);
            env.transition.at(static_cast<std::size_t>(s)).at(static_cast<std::size_t>(a)) = std::move(row);
        } else if (key == "reward") {
            ensure_shape();
            int s, a;
            ls >> s >> a;
            ls >> env.reward.at(static_cast<std::size_t>(s)).at(static_cast<std::size_t>(a));
        } else {
            throw std::runtime_error("load_env: unknown directive '" + key + "'");
        }
    }
    if (!shaped) throw std::runtime_error("load_env: no tables found");
    env.validate();
    return env;
}

TabularDecPomdp load_env_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("load_env_file: cannot open " + path);
    return load_env(f);
}

TabularDecPomdp resolve_env(const std::string& name_or_path) {
    for (const auto& p : preset_names())
        if (p == name_or_path) return make_preset(name_or_path);
    return load_env_file(name_or_path);
}

}  // namespace mag::envs
