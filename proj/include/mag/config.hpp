#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "mag/local_models.hpp"
#include "mag/policy.hpp"
#include "mag/rollout.hpp"

namespace mag::harness {

enum class RolloutMode { planned, greedy };

// Everything one experiment run needs; parses from a declarative text file
// ("key value" per line) and serializes back to the identical text.
struct ExperimentConfig {
    std::string env = "figure1_toy";  // preset name or env-file path
    std::string out_dir;
    std::uint64_t seed = 0;

    int episodes = 200;  // outer-loop count
    rollout::RolloutConfig rollout;
    RolloutMode rollout_mode = RolloutMode::planned;
    int g_updates = 8;

    models::ModelBackend model_backend = models::ModelBackend::tabular;
    double model_lr = 5e-4;
    std::vector<int> model_hidden = {64};
    double laplace_alpha = 0.5;
    int model_epochs = 2;

    std::vector<int> predictor_hidden = {64};
    double predictor_lr = 5e-4;
    int predictor_epochs = 2;
    int error_draws = 4;

    policy::PolicyBackend policy_backend = policy::PolicyBackend::tabular;
    std::vector<int> policy_hidden = {64};
    double clip = 0.2;
    double gae_lambda = 0.95;
    double lr_actor = 3e-4;
    double lr_critic = 3e-4;

    double gamma = -1.0;  // < 0: use the environment's discount

    int eval_every = 10;
    int eval_episodes = 16;
    bool count_eval_steps = false;
    // > 0: every audit_every-th evaluation also records the planned-vs-greedy
    // accumulated-error comparison and a bound summary in the metrics row.
    int audit_every = 0;
    int audit_starts = 64;

    std::size_t dataset_capacity = 100000;
    int threads = 1;

    void validate() const;

    std::string serialize() const;
    static ExperimentConfig parse(std::istream& in);
    static ExperimentConfig parse_string(const std::string& text);
    static ExperimentConfig load_file(const std::string& path);
    void save_file(const std::string& path) const;

    bool operator==(const ExperimentConfig&) const = default;
};

// Named hyperparameter presets: the benchmark-map (L, H) pairs plus the
// deep error-predictor configuration (four 256-unit layers, model learning
// rate 5e-4).
std::vector<std::string> config_preset_names();
ExperimentConfig config_preset(const std::string& name);

}  // namespace mag::harness
