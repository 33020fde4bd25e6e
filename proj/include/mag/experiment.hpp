#pragma once

#include <functional>
#include <limits>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "mag/checkpoint.hpp"
#include "mag/config.hpp"
#include "mag/dataset.hpp"
#include "mag/env.hpp"
#include "mag/theory.hpp"

namespace mag::harness {

// One row of the training log. Wall-clock time is reported on the console
// only; the persisted metrics files carry just the reproducible fields so a
// rerun with the same seed is byte-identical.
struct MetricsRecord {
    int iteration = 0;
    long env_steps = 0;
    double eval_return = 0.0;
    double eval_se = 0.0;
    double eval_discounted = 0.0;
    double eval_discounted_se = 0.0;
    double model_nll = 0.0;
    double predictor_mse = 0.0;
    // Optional audit block (enabled by audit_every): accumulated model error
    // at the last rollout step under each mode, and the bound summary.
    double planned_final_error = std::numeric_limits<double>::quiet_NaN();
    double greedy_final_error = std::numeric_limits<double>::quiet_NaN();
    double bound_gap = std::numeric_limits<double>::quiet_NaN();
    double bound_rhs = std::numeric_limits<double>::quiet_NaN();
    double wall_clock_s = 0.0;  // console only

    std::string to_kv() const;
    std::string to_csv_row() const;
    static std::string csv_header();
};

// Appends records to <out_dir>/metrics.kv and the flat <out_dir>/metrics.csv
// mirror, creating both (with the CSV header) on first use.
class MetricsWriter {
public:
    explicit MetricsWriter(std::string out_dir);
    void append(const MetricsRecord& rec);

private:
    std::string kv_path_;
    std::string csv_path_;
    bool started_ = false;
};

struct ExperimentResult {
    std::vector<MetricsRecord> records;
    Checkpoint checkpoint;
    Dataset env_data;
    Dataset model_data;

    ExperimentResult() : env_data(SpaceSpec({1}, 1), 1), model_data(SpaceSpec({1}, 1), 1) {}
};

// The full outer training loop: collect a real episode, fit the local
// models, fit the error predictor, generate model rollouts (planned or
// greedy), run the policy update, evaluate on cadence. Persists metrics,
// checkpoint and dataset snapshots into cfg.out_dir unless it is empty.
ExperimentResult run_experiment(const ExperimentConfig& cfg,
                                const std::function<void(const MetricsRecord&)>& on_record = {});

struct ErrorAnalysis {
    // Mean accumulated model error after steps 1..k, for both rollout modes,
    // and their difference (greedy - planned).
    std::vector<double> planned;
    std::vector<double> greedy;
    std::vector<double> diff;
    bool exact = false;  // false: learned-predictor fallback (with warning)
    int start_states = 0;
};

// Accumulated-error comparison between planned and greedy rollouts from
// shared start states drawn uniformly from the environment dataset. Uses
// exact per-step model errors when the true dynamics is available and falls
// back to the learned error predictor otherwise.
ErrorAnalysis analyze_error(const envs::TabularDecPomdp& env, const Checkpoint& ckpt,
                            const Dataset& d_e, const rollout::RolloutConfig& rollout_cfg,
                            int start_states, const SeedKey& seed,
                            const ExecPolicy& exec = ExecPolicy::serial_ref());

struct OracleCheckItem {
    std::string name;
    bool pass = false;
    std::string detail;
};

struct OracleCheckReport {
    std::vector<OracleCheckItem> items;
    bool all_pass() const {
        for (const auto& it : items)
            if (!it.pass) return false;
        return true;
    }
};

// Bundled exact-oracle suite: planner equivalence against the brute-force
// search, soundness/tightness audits of the performance bound on every
// preset, the distribution-inequality property suites, and hyperparameter
// preset validation.
OracleCheckReport oracle_check(int bound_instances, int property_trials, const SeedKey& seed,
                               const ExecPolicy& exec = ExecPolicy::serial_ref());

// Renders a bound report as the one-key-per-line record used by the
// verify-bound command.
std::string format_bound_report(const theory::BoundReport& rep);
// One-line machine-readable summary appended to a results file.
std::string bound_summary_row(const std::string& env_name, std::uint64_t seed,
                              const theory::BoundReport& rep);

}  // namespace mag::harness
