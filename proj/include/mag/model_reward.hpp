#pragma once

#include <iosfwd>
#include <memory>
#include <vector>

#include "mag/dataset.hpp"
#include "mag/env.hpp"
#include "mag/local_models.hpp"
#include "mag/mlp.hpp"
#include "mag/seed.hpp"
#include "mag/types.hpp"

namespace mag::reward {

// Model prediction error of one environment transition: average over n_draws
// of sum_i [o^i' mismatch (0/1) + |reward-head estimate - R|] with the
// predicted observations sampled from the local models.
double label_error(const EnvTransition& t, const models::LocalModelSet& ms, int n_draws,
                   const SeedKey& seed);

// Closed form of the same quantity (expectation over the draws).
double expected_label_error(const EnvTransition& t, const models::LocalModelSet& ms);

// Learned regressor from (o, a, predicted reward, o') to a non-negative
// predicted model error.
class ModelRewardPredictor {
public:
    ModelRewardPredictor() = default;
    ModelRewardPredictor(SpaceSpec spaces, const SeedKey& seed, std::vector<int> hidden = {64},
                         double learning_rate = 5e-4, int n_draws = 4);

    double predict(const JointObservation& o, const JointAction& a, double pred_reward,
                   const JointObservation& next_obs) const;

    const SpaceSpec& spaces() const { return spaces_; }
    int n_draws() const { return n_draws_; }
    double learning_rate() const { return lr_; }
    double last_train_mse() const { return train_mse_; }
    double last_heldout_mse() const { return heldout_mse_; }
    // Full-training-split MSE at the end of each epoch of the last training
    // call.
    const std::vector<double>& train_loss_trace() const { return loss_trace_; }

    Mlp& net() { return net_; }
    const Mlp& net() const { return net_; }

    void save(std::ostream& out) const;
    static ModelRewardPredictor load(std::istream& in);
    bool operator==(const ModelRewardPredictor&) const = default;

private:
    friend ModelRewardPredictor train_error_predictor(const ModelRewardPredictor&, const Dataset&,
                                                      const models::LocalModelSet&, int,
                                                      const SeedKey&);
    SpaceSpec spaces_;
    Mlp net_;
    double lr_ = 5e-4;
    int n_draws_ = 4;
    double train_mse_ = 0.0;
    double heldout_mse_ = 0.0;
    std::vector<double> loss_trace_;

    std::vector<double> encode(const JointObservation& o, const JointAction& a, double pred_reward,
                               const JointObservation& next_obs) const;
};

// Squared-error regression of label_error over the environment dataset.
// Every fifth entry is held out for the reported held-out loss.
ModelRewardPredictor train_error_predictor(const ModelRewardPredictor& rp, const Dataset& d,
                                           const models::LocalModelSet& ms, int epochs,
                                           const SeedKey& seed);

// Raised by the exact model reward when the queried point has zero
// probability on one side.
class SupportMismatchError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Exact model-MMDP error at one point: sum_i log P_hat^i(o^i'|o,a) -
// log P(o'|o,a). Its expectation under the model's own joint prediction is
// KL(prod_i P_hat^i || P). Requires the true dynamics.
double exact_model_reward(const envs::JointObsDynamics& dyn, const models::LocalModelSet& ms,
                          const JointObservation& o, const JointAction& a,
                          const JointObservation& next_obs);

// KL(prod_i P_hat^i(.|o,a) || P(.|o,a)) by exhaustive summation.
double model_row_kl(const envs::JointObsDynamics& dyn, const models::LocalModelSet& ms,
                    const JointObservation& o, const JointAction& a);

// Step-error scorers used by the rollout planners. `predict_reward` is the
// model's own reward estimate at (o, a), which is all that is available
// during rollout.
class ErrorScorer {
public:
    virtual ~ErrorScorer() = default;
    virtual double score(const JointObservation& o, const JointAction& a, double pred_reward,
                         const JointObservation& next_obs) const = 0;
};

class PredictorScorer final : public ErrorScorer {
public:
    explicit PredictorScorer(const ModelRewardPredictor& rp) : rp_(&rp) {}
    double score(const JointObservation& o, const JointAction& a, double pred_reward,
                 const JointObservation& next_obs) const override {
        return rp_->predict(o, a, pred_reward, next_obs);
    }

private:
    const ModelRewardPredictor* rp_;
};

class ExactScorer final : public ErrorScorer {
public:
    ExactScorer(const envs::JointObsDynamics& dyn, const models::LocalModelSet& ms)
        : dyn_(&dyn), ms_(&ms) {}
    double score(const JointObservation& o, const JointAction& a, double,
                 const JointObservation& next_obs) const override {
        return exact_model_reward(*dyn_, *ms_, o, a, next_obs);
    }

private:
    const envs::JointObsDynamics* dyn_;
    const models::LocalModelSet* ms_;
};

}  // namespace mag::reward
