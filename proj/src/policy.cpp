#include "mag/policy.hpp"

#include <cmath>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>

#include "mag/prob.hpp"

namespace mag::policy {

namespace {

std::vector<double> floored_softmax(const std::vector<double>& logits) {
    double mx = logits[0];
    for (double z : logits) mx = std::max(mx, z);
    std::vector<double> p(logits.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        p[i] = std::exp(logits[i] - mx);
        sum += p[i];
    }
    const double lam = JointPolicy::kProbFloor * static_cast<double>(p.size());
    for (std::size_t i = 0; i < p.size(); ++i)
        p[i] = (1.0 - lam) * (p[i] / sum) + JointPolicy::kProbFloor;
    return p;
}

std::vector<double> one_hot(int index, int size) {
    std::vector<double> x(static_cast<std::size_t>(size), 0.0);
    x[static_cast<std::size_t>(index)] = 1.0;
    return x;
}

}  // namespace

JointPolicy::JointPolicy(SpaceSpec spaces, PolicyBackend backend, const SeedKey& seed,
                         std::vector<int> hidden)
    : spaces_(std::move(spaces)), backend_(backend) {
    for (int i = 0; i < spaces_.n_agents(); ++i) {
        std::vector<int> sizes{spaces_.obs_size(i)};
        if (backend_ == PolicyBackend::mlp)
            for (int h : hidden) sizes.push_back(h);
        sizes.push_back(spaces_.n_actions());
        actors_.emplace_back(std::move(sizes), seed.child("actor", static_cast<std::uint64_t>(i)));
        actors_.back().zero_output_layer();  // start exactly uniform
    }
}

std::vector<double> JointPolicy::action_probs(int agent, ObsId local_obs) const {
    const auto logits =
        actors_[static_cast<std::size_t>(agent)].forward(one_hot(local_obs, spaces_.obs_size(agent)));
    return floored_softmax(logits);
}

std::vector<double> JointPolicy::joint_action_probs(const JointObservation& o) const {
    spaces_.require(o);
    std::vector<std::vector<double>> per_agent;
    for (int i = 0; i < spaces_.n_agents(); ++i)
        per_agent.push_back(action_probs(i, o.per_agent[static_cast<std::size_t>(i)]));
    const int n_act = spaces_.joint_act_count();
    std::vector<double> probs(static_cast<std::size_t>(n_act), 1.0);
    for (int a = 0; a < n_act; ++a) {
        const auto ja = spaces_.act_at(a);
        for (int i = 0; i < spaces_.n_agents(); ++i)
            probs[static_cast<std::size_t>(a)] *=
                per_agent[static_cast<std::size_t>(i)]
                         [static_cast<std::size_t>(ja.per_agent[static_cast<std::size_t>(i)])];
    }
    return probs;
}

JointAction JointPolicy::act(const JointObservation& o, Rng& rng) const {
    spaces_.require(o);
    JointAction a;
    a.per_agent.resize(static_cast<std::size_t>(spaces_.n_agents()));
    for (int i = 0; i < spaces_.n_agents(); ++i) {
        auto p = action_probs(i, o.per_agent[static_cast<std::size_t>(i)]);
        a.per_agent[static_cast<std::size_t>(i)] = static_cast<ActId>(rng.categorical(p));
    }
    return a;
}

JointAction JointPolicy::act(const JointObservation& o, const SeedKey& seed) const {
    Rng rng(seed);
    return act(o, rng);
}

void JointPolicy::save(std::ostream& out) const {
    out << "joint_policy " << actors_.size() << ' ' << version_ << ' '
        << (backend_ == PolicyBackend::tabular ? "tabular" : "mlp") << "\n";
    out << "spaces";
    for (int s : spaces_.obs_sizes()) out << ' ' << s;
    out << " | " << spaces_.n_actions() << "\n";
    for (const auto& a : actors_) a.save(out);
}

JointPolicy JointPolicy::load(std::istream& in) {
    std::string tag, backend_str, tok;
    std::size_t n;
    long version;
    in >> tag >> n >> version >> backend_str;
    if (tag != "joint_policy") throw std::runtime_error("JointPolicy::load: bad tag");
    in >> tag;
    if (tag != "spaces") throw std::runtime_error("JointPolicy::load: expected spaces");
    std::vector<int> obs_sizes;
    while (in >> tok && tok != "|") obs_sizes.push_back(std::stoi(tok));
    int n_actions;
    in >> n_actions;
    JointPolicy p;
    p.spaces_ = SpaceSpec(obs_sizes, n_actions);
    p.backend_ = backend_str == "tabular" ? PolicyBackend::tabular : PolicyBackend::mlp;
    p.version_ = version;
    for (std::size_t i = 0; i < n; ++i) p.actors_.push_back(Mlp::load(in));
    return p;
}

CentralizedCritic::CentralizedCritic(SpaceSpec spaces, PolicyBackend backend, const SeedKey& seed,
                                     std::vector<int> hidden)
    : spaces_(std::move(spaces)) {
    std::vector<int> sizes{spaces_.joint_obs_count()};
    if (backend == PolicyBackend::mlp)
        for (int h : hidden) sizes.push_back(h);
    sizes.push_back(1);
    net_ = Mlp(std::move(sizes), seed.child("critic"));
    net_.zero_output_layer();  // initial value estimate of zero everywhere
}

double CentralizedCritic::value(const JointObservation& o) const {
    return net_.forward(one_hot(spaces_.obs_index(o), spaces_.joint_obs_count()))[0];
}

void CentralizedCritic::save(std::ostream& out) const {
    out << "critic";
    for (int s : spaces_.obs_sizes()) out << ' ' << s;
    out << " | " << spaces_.n_actions() << "\n";
    net_.save(out);
}

CentralizedCritic CentralizedCritic::load(std::istream& in) {
    std::string tag, tok;
    in >> tag;
    if (tag != "critic") throw std::runtime_error("CentralizedCritic::load: bad tag");
    std::vector<int> obs_sizes;
    while (in >> tok && tok != "|") obs_sizes.push_back(std::stoi(tok));
    int n_actions;
    in >> n_actions;
    CentralizedCritic c;
    c.spaces_ = SpaceSpec(obs_sizes, n_actions);
    c.net_ = Mlp::load(in);
    return c;
}

std::vector<double> clipped_logit_gradient(const std::vector<double>& cur_probs, ActId taken,
                                           double old_prob, double advantage, double clip) {
    const double ratio = cur_probs[static_cast<std::size_t>(taken)] / old_prob;
    if (advantage == 0.0 || (advantage > 0.0 && ratio > 1.0 + clip) ||
        (advantage < 0.0 && ratio < 1.0 - clip))
        return {};
    const double coef = -advantage / old_prob;
    const double lam = JointPolicy::kProbFloor * static_cast<double>(cur_probs.size());
    // Recover the unfloored softmax and differentiate through the floor mix.
    std::vector<double> soft(cur_probs.size());
    for (std::size_t k = 0; k < cur_probs.size(); ++k)
        soft[k] = (cur_probs[k] - JointPolicy::kProbFloor) / (1.0 - lam);
    std::vector<double> g_logits(cur_probs.size(), 0.0);
    const double pa = soft[static_cast<std::size_t>(taken)];
    for (std::size_t k = 0; k < cur_probs.size(); ++k) {
        const double dk = (static_cast<ActId>(k) == taken ? 1.0 : 0.0);
        g_logits[k] = coef * (1.0 - lam) * pa * (dk - soft[k]);
    }
    return g_logits;
}

std::pair<JointPolicy, CentralizedCritic> ppo_update(const JointPolicy& policy,
                                                     const CentralizedCritic& critic,
                                                     const Dataset& d_m, int g_updates,
                                                     const PpoHyper& hyper, const SeedKey&) {
    if (d_m.empty()) throw std::runtime_error("ppo_update: empty model dataset");
    if (g_updates < 1) throw std::invalid_argument("ppo_update: G must be >= 1");

    JointPolicy new_policy = policy;
    CentralizedCritic new_critic = critic;
    const auto& spaces = policy.spaces();
    const std::size_t n = d_m.size();
    const int n_agents = spaces.n_agents();

    // Split into contiguous trajectory segments (terminal marks a boundary;
    // segment_len caps run length for unmarked model rollouts).
    std::vector<std::pair<std::size_t, std::size_t>> segments;  // [begin, end)
    std::size_t begin = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const bool cut = d_m.at(i).terminal ||
                         (hyper.segment_len > 0 &&
                          i + 1 - begin >= static_cast<std::size_t>(hyper.segment_len));
        if (cut || i + 1 == n) {
            segments.emplace_back(begin, i + 1);
            begin = i + 1;
        }
    }

    // GAE with the pre-update critic; bootstrap through next_obs except at
    // true terminals.
    std::vector<double> advantage(n, 0.0), target(n, 0.0);
    for (const auto& [s_begin, s_end] : segments) {
        double gae = 0.0;
        for (std::size_t i = s_end; i-- > s_begin;) {
            const auto& t = d_m.at(i);
            const double v = critic.value(t.obs);
            const double v_next = t.terminal ? 0.0 : critic.value(t.next_obs);
            const double delta = t.reward + hyper.gamma * v_next - v;
            gae = delta + hyper.gamma * hyper.gae_lambda * (i + 1 < s_end ? gae : 0.0);
            advantage[i] = gae;
            target[i] = gae + v;
        }
    }

    // Normalize advantages unless they are (numerically) constant.
    double mean = 0.0;
    for (double a : advantage) mean += a;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double a : advantage) var += (a - mean) * (a - mean);
    const double sd = std::sqrt(var / static_cast<double>(n));
    if (sd > 1e-12) {
        for (double& a : advantage) a = (a - mean) / sd;
    } else if (std::abs(mean) < 1e-12) {
        // All-zero advantages stay zero so the actor gradient vanishes.
    } else {
        for (double& a : advantage) a -= mean;
    }

    // Old (behaviour) probabilities per agent and sample.
    std::vector<std::vector<double>> old_prob(static_cast<std::size_t>(n_agents),
                                              std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i) {
        const auto& t = d_m.at(i);
        for (int ag = 0; ag < n_agents; ++ag) {
            auto p = policy.action_probs(ag, t.obs.per_agent[static_cast<std::size_t>(ag)]);
            old_prob[static_cast<std::size_t>(ag)][i] =
                p[static_cast<std::size_t>(t.act.per_agent[static_cast<std::size_t>(ag)])];
        }
    }

    for (int g = 0; g < g_updates; ++g) {
        // Actor step (full batch).
        for (int ag = 0; ag < n_agents; ++ag) {
            auto& net = new_policy.actor(ag);
            for (std::size_t i = 0; i < n; ++i) {
                const auto& t = d_m.at(i);
                const ObsId o = t.obs.per_agent[static_cast<std::size_t>(ag)];
                const ActId a = t.act.per_agent[static_cast<std::size_t>(ag)];
                const auto g_logits =
                    clipped_logit_gradient(new_policy.action_probs(ag, o), a,
                                           old_prob[static_cast<std::size_t>(ag)][i], advantage[i],
                                           hyper.clip);
                if (g_logits.empty()) continue;
                const auto x = one_hot(o, spaces.obs_size(ag));
                net.accumulate_gradient(x, g_logits);
            }
            net.adam_step(hyper.lr_actor, n);
        }
        // Critic step (full batch).
        auto& cnet = new_critic.net();
        for (std::size_t i = 0; i < n; ++i) {
            const auto& t = d_m.at(i);
            const auto x = one_hot(spaces.obs_index(t.obs), spaces.joint_obs_count());
            const double v = cnet.forward(x)[0];
            const double gout = 2.0 * (v - target[i]);
            cnet.accumulate_gradient(x, std::vector<double>{gout});
        }
        cnet.adam_step(hyper.lr_critic, n);
    }

    new_policy.bump_version();
    return {std::move(new_policy), std::move(new_critic)};
}

EvalResult evaluate_return(const envs::TabularDecPomdp& env, const JointPolicy& policy,
                           int episodes, const SeedKey& seed, const ExecPolicy& exec) {
    EvalResult res;
    res.episodes = episodes;
    if (episodes <= 0) return res;
    std::vector<double> ret(static_cast<std::size_t>(episodes), 0.0);
    std::vector<double> disc(static_cast<std::size_t>(episodes), 0.0);
    std::vector<long> steps(static_cast<std::size_t>(episodes), 0);
    parallel_for(exec, static_cast<std::size_t>(episodes), [&](std::size_t e) {
        const auto ep_seed = seed.child("episode", e);
        envs::EpisodeSim sim(env, ep_seed.child("env"));
        Rng act_rng(ep_seed.child("policy"));
        auto obs = sim.reset();
        double g = 1.0;
        while (!sim.terminal()) {
            const auto a = policy.act(obs, act_rng);
            const auto step = sim.step(a);
            ret[e] += step.reward;
            disc[e] += g * step.reward;
            g *= env.gamma;
            obs = step.next_obs;
            ++steps[e];
        }
    });
    auto mean_se = [&](const std::vector<double>& xs, double& mean, double& se) {
        mean = 0.0;
        for (double x : xs) mean += x;
        mean /= static_cast<double>(xs.size());
        double var = 0.0;
        for (double x : xs) var += (x - mean) * (x - mean);
        se = xs.size() > 1
                 ? std::sqrt(var / static_cast<double>(xs.size() - 1) /
                             static_cast<double>(xs.size()))
                 : 0.0;
    };
    mean_se(ret, res.mean_return, res.se_return);
    mean_se(disc, res.mean_discounted, res.se_discounted);
    for (long s : steps) res.env_steps += s;
    return res;
}

}  // namespace mag::policy
