#include "mag/local_models.hpp"

#include <cmath>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>

#include "mag/prob.hpp"
#include "mag/text_io.hpp"

namespace mag::models {

namespace {

std::vector<double> softmax(std::span<const double> logits) {
    double mx = logits[0];
    for (double z : logits) mx = std::max(mx, z);
    std::vector<double> p(logits.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        p[i] = std::exp(logits[i] - mx);
        sum += p[i];
    }
    for (double& x : p) x /= sum;
    return p;
}

}  // namespace

LocalModel::LocalModel(int agent_id, SpaceSpec spaces, ModelBackend backend, const SeedKey& seed,
                       double laplace_alpha, std::vector<int> hidden, double learning_rate)
    : agent_id_(agent_id),
      spaces_(std::move(spaces)),
      backend_(backend),
      alpha_(laplace_alpha),
      lr_(learning_rate) {
    const std::size_t n_cells = static_cast<std::size_t>(spaces_.joint_obs_count()) *
                                static_cast<std::size_t>(spaces_.joint_act_count());
    const int osz = spaces_.obs_size(agent_id_);
    counts_.assign(n_cells, std::vector<double>(static_cast<std::size_t>(osz), 0.0));
    reward_sum_.assign(n_cells, 0.0);
    reward_n_.assign(n_cells, 0.0);
    if (backend_ == ModelBackend::mlp) {
        std::vector<int> sizes;
        sizes.push_back(spaces_.joint_obs_count() + spaces_.joint_act_count());
        for (int h : hidden) sizes.push_back(h);
        sizes.push_back(osz + 1);  // logits + reward head
        net_ = Mlp(std::move(sizes), seed.child("net", static_cast<std::uint64_t>(agent_id)));
    }
}

std::size_t LocalModel::cell(const JointObservation& o, const JointAction& a) const {
    return static_cast<std::size_t>(spaces_.obs_index(o)) *
               static_cast<std::size_t>(spaces_.joint_act_count()) +
           static_cast<std::size_t>(spaces_.act_index(a));
}

std::vector<double> LocalModel::encode_input(const JointObservation& o,
                                             const JointAction& a) const {
    std::vector<double> x(static_cast<std::size_t>(spaces_.joint_obs_count() +
                                                   spaces_.joint_act_count()),
                          0.0);
    x[static_cast<std::size_t>(spaces_.obs_index(o))] = 1.0;
    x[static_cast<std::size_t>(spaces_.joint_obs_count() + spaces_.act_index(a))] = 1.0;
    return x;
}

std::vector<double> LocalModel::predict_obs(const JointObservation& o,
                                            const JointAction& a) const {
    spaces_.require(o);
    spaces_.require(a);
    const int osz = spaces_.obs_size(agent_id_);
    if (backend_ == ModelBackend::mlp) {
        auto out = net_.forward(encode_input(o, a));
        return softmax(std::span<const double>(out.data(), static_cast<std::size_t>(osz)));
    }
    const auto& c = counts_[cell(o, a)];
    double total = vec_sum(c);
    std::vector<double> p(static_cast<std::size_t>(osz));
    if (total <= 0.0 && alpha_ <= 0.0) {
        // Never-seen cell with no smoothing: fall back to uniform.
        for (double& x : p) x = 1.0 / static_cast<double>(osz);
        return p;
    }
    const double denom = total + alpha_ * static_cast<double>(osz);
    for (int v = 0; v < osz; ++v)
        p[static_cast<std::size_t>(v)] = (c[static_cast<std::size_t>(v)] + alpha_) / denom;
    return p;
}

double LocalModel::predict_reward(const JointObservation& o, const JointAction& a) const {
    if (backend_ == ModelBackend::mlp) {
        auto out = net_.forward(encode_input(o, a));
        return out.back();
    }
    const std::size_t k = cell(o, a);
    if (reward_n_[k] > 0.0) return reward_sum_[k] / reward_n_[k];
    if (global_reward_n_ > 0.0) return global_reward_sum_ / global_reward_n_;
    return 0.0;
}

void LocalModel::train_tabular(const Dataset& d) {
    for (auto& row : counts_) row.assign(row.size(), 0.0);
    reward_sum_.assign(reward_sum_.size(), 0.0);
    reward_n_.assign(reward_n_.size(), 0.0);
    global_reward_sum_ = 0.0;
    global_reward_n_ = 0.0;
    for (std::size_t i = 0; i < d.size(); ++i) {
        const auto& t = d.at(i);
        const std::size_t k = cell(t.obs, t.act);
        counts_[k][static_cast<std::size_t>(t.next_obs.per_agent[static_cast<std::size_t>(agent_id_)])] += 1.0;
        reward_sum_[k] += t.reward;
        reward_n_[k] += 1.0;
        global_reward_sum_ += t.reward;
        global_reward_n_ += 1.0;
    }
}

void LocalModel::train_mlp(std::span<const EnvTransition> batch) {
    const int osz = spaces_.obs_size(agent_id_);
    for (const auto& t : batch) {
        const auto x = encode_input(t.obs, t.act);
        auto out = net_.forward(x);
        auto p = softmax(std::span<const double>(out.data(), static_cast<std::size_t>(osz)));
        std::vector<double> g(out.size(), 0.0);
        const int target = t.next_obs.per_agent[static_cast<std::size_t>(agent_id_)];
        for (int v = 0; v < osz; ++v)
            g[static_cast<std::size_t>(v)] = p[static_cast<std::size_t>(v)] - (v == target ? 1.0 : 0.0);
        g.back() = 2.0 * (out.back() - t.reward);
        net_.accumulate_gradient(x, g);
    }
    net_.adam_step(lr_, batch.size());
}

void LocalModel::set_tabular_cell(const JointObservation& o, const JointAction& a,
                                  std::vector<double> conditional, double reward_estimate) {
    if (backend_ != ModelBackend::tabular)
        throw std::logic_error("local_models: set_tabular_cell needs the tabular backend");
    if (static_cast<int>(conditional.size()) != spaces_.obs_size(agent_id_))
        throw std::invalid_argument("local_models: set_tabular_cell conditional length mismatch");
    if (!is_distribution(conditional, 1e-6))
        throw std::invalid_argument(
            "local_models: set_tabular_cell conditional is not a probability distribution");
    const std::size_t k = cell(o, a);
    counts_[k] = std::move(conditional);
    reward_sum_[k] = reward_estimate;
    reward_n_[k] = 1.0;
}

void LocalModel::save(std::ostream& out) const {
    out << "local_model " << agent_id_ << ' '
        << (backend_ == ModelBackend::tabular ? "tabular" : "mlp") << ' '
        << format_double(alpha_) << ' ' << format_double(lr_) << "\n";
    out << "spaces " << join_ints(spaces_.obs_sizes()) << " | " << spaces_.n_actions() << "\n";
    if (backend_ == ModelBackend::mlp) {
        net_.save(out);
        return;
    }
    out << "reward_global " << format_double(global_reward_sum_) << ' '
        << format_double(global_reward_n_) << "\n";
    for (std::size_t k = 0; k < counts_.size(); ++k) {
        out << "cell " << k;
        for (double c : counts_[k]) out << ' ' << format_double(c);
        out << " | " << format_double(reward_sum_[k]) << ' ' << format_double(reward_n_[k]) << "\n";
    }
}

LocalModel LocalModel::load(std::istream& in) {
    std::string tag, backend_str, bar;
    int agent_id;
    double alpha, lr;
    in >> tag >> agent_id >> backend_str >> alpha >> lr;
    if (tag != "local_model") throw std::runtime_error("LocalModel::load: bad tag");
    in >> tag;
    if (tag != "spaces") throw std::runtime_error("LocalModel::load: expected spaces");
    std::vector<int> obs_sizes;
    std::string tok;
    while (in >> tok && tok != "|") obs_sizes.push_back(static_cast<int>(parse_long(tok)));
    int n_actions;
    in >> n_actions;
    const ModelBackend backend =
        backend_str == "tabular" ? ModelBackend::tabular : ModelBackend::mlp;
    LocalModel m(agent_id, SpaceSpec(obs_sizes, n_actions), backend, SeedKey(0), alpha, {1}, lr);
    if (backend == ModelBackend::mlp) {
        m.net_ = Mlp::load(in);
        return m;
    }
    in >> tag >> m.global_reward_sum_ >> m.global_reward_n_;
    if (tag != "reward_global") throw std::runtime_error("LocalModel::load: expected reward_global");
    for (std::size_t k = 0; k < m.counts_.size(); ++k) {
        std::size_t kk;
        in >> tag >> kk;
        if (tag != "cell" || kk != k) throw std::runtime_error("LocalModel::load: bad cell row");
        for (double& c : m.counts_[k]) in >> c;
        in >> bar >> m.reward_sum_[k] >> m.reward_n_[k];
    }
    if (!in) throw std::runtime_error("LocalModel::load: truncated stream");
    return m;
}

LocalModelSet::LocalModelSet(SpaceSpec spaces, ModelBackend backend, const SeedKey& seed,
                             double laplace_alpha, std::vector<int> hidden, double learning_rate)
    : spaces_(std::move(spaces)), backend_(backend) {
    for (int i = 0; i < spaces_.n_agents(); ++i)
        models_.emplace_back(i, spaces_, backend, seed.child("agent", static_cast<std::uint64_t>(i)),
                             laplace_alpha, hidden, learning_rate);
}

LocalModelSet LocalModelSet::perfect(const envs::JointObsDynamics& dyn) {
    LocalModelSet ms(dyn.spaces, ModelBackend::tabular, SeedKey(0), /*laplace_alpha=*/0.0);
    const int n_act = dyn.spaces.joint_act_count();
    for (int o = 0; o < dyn.spaces.joint_obs_count(); ++o) {
        if (!dyn.realized[static_cast<std::size_t>(o)]) continue;
        const auto jo = dyn.spaces.obs_at(o);
        for (int a = 0; a < n_act; ++a) {
            const auto& row = dyn.transition_o[static_cast<std::size_t>(o)][static_cast<std::size_t>(a)];
            const double r = dyn.reward_o[static_cast<std::size_t>(o)][static_cast<std::size_t>(a)];
            const auto ja = dyn.spaces.act_at(a);
            for (int i = 0; i < dyn.spaces.n_agents(); ++i) {
                auto& m = ms.mutable_model(i);
                const std::size_t k = m.cell(jo, ja);
                // Fractional "counts" equal to the per-agent marginal.
                for (int o2 = 0; o2 < dyn.spaces.joint_obs_count(); ++o2) {
                    const auto jo2 = dyn.spaces.obs_at(o2);
                    m.counts_[k][static_cast<std::size_t>(jo2.per_agent[static_cast<std::size_t>(i)])] +=
                        row[static_cast<std::size_t>(o2)];
                }
                m.reward_sum_[k] = r;
                m.reward_n_[k] = 1.0;
            }
        }
    }
    ms.trained_steps_ = 1;
    return ms;
}

void LocalModelSet::train_one_step(const Dataset& d, int epochs, const SeedKey& seed) {
    if (epochs < 1) throw std::invalid_argument("train_one_step: epochs must be >= 1");
    if (d.empty()) throw std::runtime_error("train_one_step: empty dataset");
    if (backend_ == ModelBackend::tabular) {
        for (auto& m : models_) m.train_tabular(d);
        trained_steps_ += 1;
        return;
    }
    constexpr std::size_t kBatch = 32;
    const std::size_t n_batches = (d.size() + kBatch - 1) / kBatch;
    for (int e = 0; e < epochs; ++e) {
        for (std::size_t b = 0; b < n_batches; ++b) {
            auto batch = d.sample_uniform(
                kBatch, seed.child("epoch", static_cast<std::uint64_t>(e)).child("batch", b));
            for (auto& m : models_) m.train_mlp(batch);
        }
    }
    trained_steps_ += epochs;
}

LocalModelSet::JointPrediction LocalModelSet::predict_joint(const JointObservation& o,
                                                            const JointAction& a) const {
    JointPrediction out;
    std::vector<std::vector<double>> per_agent;
    per_agent.reserve(models_.size());
    for (const auto& m : models_) {
        per_agent.push_back(m.predict_obs(o, a));
        out.per_agent_reward.push_back(m.predict_reward(o, a));
    }
    const int n_obs = spaces_.joint_obs_count();
    out.joint_probs.assign(static_cast<std::size_t>(n_obs), 1.0);
    for (int j = 0; j < n_obs; ++j) {
        const auto jo = spaces_.obs_at(j);
        for (int i = 0; i < spaces_.n_agents(); ++i)
            out.joint_probs[static_cast<std::size_t>(j)] *=
                per_agent[static_cast<std::size_t>(i)]
                         [static_cast<std::size_t>(jo.per_agent[static_cast<std::size_t>(i)])];
    }
    out.mean_reward = vec_sum(out.per_agent_reward) / static_cast<double>(models_.size());
    return out;
}

std::pair<JointObservation, double> LocalModelSet::sample_joint(const JointObservation& o,
                                                                const JointAction& a,
                                                                Rng& rng) const {
    JointObservation next;
    next.per_agent.resize(models_.size());
    double reward = 0.0;
    for (std::size_t i = 0; i < models_.size(); ++i) {
        auto p = models_[i].predict_obs(o, a);
        next.per_agent[i] = static_cast<ObsId>(rng.categorical(p));
        reward += models_[i].predict_reward(o, a);
    }
    reward /= static_cast<double>(models_.size());
    return {std::move(next), reward};
}

std::pair<JointObservation, double> LocalModelSet::sample_joint(const JointObservation& o,
                                                                const JointAction& a,
                                                                const SeedKey& seed) const {
    Rng rng(seed);
    return sample_joint(o, a, rng);
}

double LocalModelSet::negative_log_likelihood(std::span<const EnvTransition> batch) const {
    if (batch.empty()) return 0.0;
    double nll = 0.0;
    for (const auto& t : batch) {
        for (std::size_t i = 0; i < models_.size(); ++i) {
            auto p = models_[i].predict_obs(t.obs, t.act);
            const double pi = p[static_cast<std::size_t>(t.next_obs.per_agent[i])];
            nll -= std::log(std::max(pi, 1e-300));
        }
    }
    return nll / static_cast<double>(batch.size());
}

void LocalModelSet::save(std::ostream& out) const {
    out << "local_model_set " << models_.size() << ' ' << trained_steps_ << ' '
        << (backend_ == ModelBackend::tabular ? "tabular" : "mlp") << "\n";
    for (const auto& m : models_) m.save(out);
}

LocalModelSet LocalModelSet::load(std::istream& in) {
    std::string tag, backend_str;
    std::size_t n;
    long steps;
    in >> tag >> n >> steps >> backend_str;
    if (tag != "local_model_set") throw std::runtime_error("LocalModelSet::load: bad tag");
    LocalModelSet ms;
    ms.backend_ = backend_str == "tabular" ? ModelBackend::tabular : ModelBackend::mlp;
    ms.trained_steps_ = steps;
    for (std::size_t i = 0; i < n; ++i) ms.models_.push_back(LocalModel::load(in));
    if (!ms.models_.empty()) ms.spaces_ = ms.models_.front().spaces();
    return ms;
}

}  // namespace mag::models
