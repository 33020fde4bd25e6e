#include "mag/model_reward.hpp"

#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include "mag/prob.hpp"
#include "mag/text_io.hpp"

namespace mag::reward {

double label_error(const EnvTransition& t, const models::LocalModelSet& ms, int n_draws,
                   const SeedKey& seed) {
    if (n_draws < 1) throw std::invalid_argument("label_error: n_draws must be >= 1");
    Rng rng(seed);
    const int n_agents = ms.n_agents();
    double total = 0.0;
    for (int d = 0; d < n_draws; ++d) {
        for (int i = 0; i < n_agents; ++i) {
            const auto& m = ms.model(i);
            auto p = m.predict_obs(t.obs, t.act);
            const auto drawn = static_cast<ObsId>(rng.categorical(p));
            if (drawn != t.next_obs.per_agent[static_cast<std::size_t>(i)]) total += 1.0;
            total += std::abs(m.predict_reward(t.obs, t.act) - t.reward);
        }
    }
    return total / static_cast<double>(n_draws);
}

double expected_label_error(const EnvTransition& t, const models::LocalModelSet& ms) {
    double total = 0.0;
    for (int i = 0; i < ms.n_agents(); ++i) {
        const auto& m = ms.model(i);
        auto p = m.predict_obs(t.obs, t.act);
        total += 1.0 - p[static_cast<std::size_t>(t.next_obs.per_agent[static_cast<std::size_t>(i)])];
        total += std::abs(m.predict_reward(t.obs, t.act) - t.reward);
    }
    return total;
}

ModelRewardPredictor::ModelRewardPredictor(SpaceSpec spaces, const SeedKey& seed,
                                           std::vector<int> hidden, double learning_rate,
                                           int n_draws)
    : spaces_(std::move(spaces)), lr_(learning_rate), n_draws_(n_draws) {
    std::vector<int> sizes;
    sizes.push_back(2 * spaces_.joint_obs_count() + spaces_.joint_act_count() + 1);
    for (int h : hidden) sizes.push_back(h);
    sizes.push_back(1);
    net_ = Mlp(std::move(sizes), seed.child("error_predictor"));
}

std::vector<double> ModelRewardPredictor::encode(const JointObservation& o, const JointAction& a,
                                                 double pred_reward,
                                                 const JointObservation& next_obs) const {
    const int n_obs = spaces_.joint_obs_count();
    const int n_act = spaces_.joint_act_count();
    std::vector<double> x(static_cast<std::size_t>(2 * n_obs + n_act + 1), 0.0);
    x[static_cast<std::size_t>(spaces_.obs_index(o))] = 1.0;
    x[static_cast<std::size_t>(n_obs + spaces_.act_index(a))] = 1.0;
    x[static_cast<std::size_t>(n_obs + n_act)] = pred_reward;
    x[static_cast<std::size_t>(n_obs + n_act + 1 + spaces_.obs_index(next_obs))] = 1.0;
    return x;
}

double ModelRewardPredictor::predict(const JointObservation& o, const JointAction& a,
                                     double pred_reward, const JointObservation& next_obs) const {
    const double raw = net_.forward(encode(o, a, pred_reward, next_obs))[0];
    return std::max(raw, 0.0);
}

ModelRewardPredictor train_error_predictor(const ModelRewardPredictor& rp, const Dataset& d,
                                           const models::LocalModelSet& ms, int epochs,
                                           const SeedKey& seed) {
    if (d.empty()) throw std::runtime_error("train_error_predictor: empty dataset");
    if (epochs < 1) throw std::invalid_argument("train_error_predictor: epochs must be >= 1");

    ModelRewardPredictor out = rp;
    const std::size_t n = d.size();

    // Labels, inputs and the held-out split are fixed up front.
    struct Sample {
        std::vector<double> x;
        double y;
    };
    std::vector<Sample> train, heldout;
    for (std::size_t i = 0; i < n; ++i) {
        const auto& t = d.at(i);
        const double pred_r = ms.predict_joint(t.obs, t.act).mean_reward;
        Sample s{out.encode(t.obs, t.act, pred_r, t.next_obs),
                 label_error(t, ms, out.n_draws(), seed.child("label", i))};
        if (i % 5 == 4)
            heldout.push_back(std::move(s));
        else
            train.push_back(std::move(s));
    }
    if (train.empty()) train = heldout;

    constexpr std::size_t kBatch = 32;
    Rng shuffle_rng(seed.child("shuffle"));
    out.loss_trace_.clear();
    for (int e = 0; e < epochs; ++e) {
        const std::size_t n_batches = (train.size() + kBatch - 1) / kBatch;
        for (std::size_t b = 0; b < n_batches; ++b) {
            std::size_t bs = 0;
            for (std::size_t k = 0; k < kBatch; ++k) {
                const auto& s = train[shuffle_rng.uniform_index(train.size())];
                const double pred = out.net_.forward(s.x)[0];
                out.net_.accumulate_gradient(s.x, std::vector<double>{2.0 * (pred - s.y)});
                ++bs;
            }
            out.net_.adam_step(out.lr_, bs);
        }
        double sq = 0.0;
        for (const auto& s : train) {
            const double pred = out.net_.forward(s.x)[0];
            sq += (pred - s.y) * (pred - s.y);
        }
        out.train_mse_ = sq / static_cast<double>(train.size());
        out.loss_trace_.push_back(out.train_mse_);
    }

    double hsq = 0.0;
    for (const auto& s : heldout) {
        const double pred = std::max(out.net_.forward(s.x)[0], 0.0);
        hsq += (pred - s.y) * (pred - s.y);
    }
    out.heldout_mse_ = heldout.empty() ? 0.0 : hsq / static_cast<double>(heldout.size());
    return out;
}

void ModelRewardPredictor::save(std::ostream& out) const {
    out << "error_predictor " << format_double(lr_) << ' ' << n_draws_ << ' '
        << format_double(train_mse_) << ' ' << format_double(heldout_mse_) << "\n";
    out << "loss_trace " << loss_trace_.size();
    for (double v : loss_trace_) out << ' ' << format_double(v);
    out << "\n";
    out << "spaces " << join_ints(spaces_.obs_sizes()) << " | " << spaces_.n_actions() << "\n";
    net_.save(out);
}

ModelRewardPredictor ModelRewardPredictor::load(std::istream& in) {
    std::string tag, tok;
    ModelRewardPredictor rp;
    in >> tag >> rp.lr_ >> rp.n_draws_ >> rp.train_mse_ >> rp.heldout_mse_;
    if (tag != "error_predictor") throw std::runtime_error("ModelRewardPredictor::load: bad tag");
    std::size_t trace_len = 0;
    in >> tag >> trace_len;
    if (tag != "loss_trace") throw std::runtime_error("ModelRewardPredictor::load: expected loss_trace");
    rp.loss_trace_.resize(trace_len);
    for (double& v : rp.loss_trace_) in >> v;
    in >> tag;
    if (tag != "spaces") throw std::runtime_error("ModelRewardPredictor::load: expected spaces");
    std::vector<int> obs_sizes;
    while (in >> tok && tok != "|") obs_sizes.push_back(static_cast<int>(parse_long(tok)));
    int n_actions;
    in >> n_actions;
    rp.spaces_ = SpaceSpec(obs_sizes, n_actions);
    rp.net_ = Mlp::load(in);
    return rp;
}

double exact_model_reward(const envs::JointObsDynamics& dyn, const models::LocalModelSet& ms,
                          const JointObservation& o, const JointAction& a,
                          const JointObservation& next_obs) {
    const auto& row = dyn.row(dyn.spaces.obs_index(o), dyn.spaces.act_index(a));
    const double p_true = row[static_cast<std::size_t>(dyn.spaces.obs_index(next_obs))];
    double sum_log_model = 0.0;
    for (int i = 0; i < ms.n_agents(); ++i) {
        const auto p = ms.model(i).predict_obs(o, a);
        const double pi = p[static_cast<std::size_t>(next_obs.per_agent[static_cast<std::size_t>(i)])];
        if (pi <= 0.0) {
            std::ostringstream msg;
            msg << "support mismatch: model probability is zero (agent " << i << ") at (o="
                << dyn.spaces.obs_index(o) << ", a=" << dyn.spaces.act_index(a)
                << ", o'=" << dyn.spaces.obs_index(next_obs) << ")";
            throw SupportMismatchError(msg.str());
        }
        sum_log_model += std::log(pi);
    }
    if (p_true <= 0.0) {
        std::ostringstream msg;
        msg << "support mismatch: true probability is zero at (o=" << dyn.spaces.obs_index(o)
            << ", a=" << dyn.spaces.act_index(a) << ", o'=" << dyn.spaces.obs_index(next_obs)
            << ")";
        throw SupportMismatchError(msg.str());
    }
    return sum_log_model - std::log(p_true);
}

double model_row_kl(const envs::JointObsDynamics& dyn, const models::LocalModelSet& ms,
                    const JointObservation& o, const JointAction& a) {
    const auto pred = ms.predict_joint(o, a);
    const auto& row = dyn.row(dyn.spaces.obs_index(o), dyn.spaces.act_index(a));
    return kl_divergence(pred.joint_probs, row);
}

}  // namespace mag::reward
