#pragma once

#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "mag/seed.hpp"
#include "mag/types.hpp"

namespace mag::envs {

// Exact finite cooperative environment: full transition, observation and
// reward tables. Immutable after construction; simulators share one
// description, each with its own seed stream.
struct TabularDecPomdp {
    std::string name;
    int n_states = 0;
    SpaceSpec spaces;
    std::vector<std::vector<ObsId>> obs_fn;                    // [state][agent]
    std::vector<std::vector<std::vector<double>>> transition;  // [state][joint act] -> dist over states
    std::vector<std::vector<double>> reward;                   // [state][joint act]
    double gamma = 0.95;
    std::vector<double> init_dist;                             // dist over states
    int horizon = 20;

    JointObservation observe(int state) const;
    bool is_absorbing(int state) const;
    double max_abs_reward() const;

    // Checks table shapes, row sums (1e-9), finite rewards.
    void validate() const;
};

// Exact observation-level dynamics obtained by marginalizing states through
// the observation function. Rows exist only for realized joint observations
// (those produced by at least one state).
struct JointObsDynamics {
    SpaceSpec spaces;
    double gamma = 0.95;
    std::vector<char> realized;                                // [joint obs index]
    std::vector<std::vector<std::vector<double>>> transition_o;  // [joint obs][joint act] -> dist over joint obs
    std::vector<std::vector<double>> reward_o;                 // [joint obs][joint act]
    std::vector<double> init_dist_o;                           // induced initial obs dist
    double r_max = 0.0;                                        // max |reward| over realized cells

    const std::vector<double>& row(int obs_index, int act_index) const;
    double reward_at(int obs_index, int act_index) const;
    std::vector<int> realized_indices() const;
};

// Raised when two states share a joint observation but disagree on the
// observation-level transition or reward, so the joint observation is not
// sufficient to predict the next joint observation.
class ObservationInsufficiencyError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Marginalizes the state tables through obs_fn. Throws
// ObservationInsufficiencyError when the tables are ambiguous at observation
// level. Deterministic and idempotent.
JointObsDynamics derive_joint_obs_dynamics(const TabularDecPomdp& env);

// Stateful episode simulator. reset() samples the initial state; step()
// advances until the horizon is reached or an absorbing state is entered,
// after which further steps throw.
class EpisodeSim {
public:
    EpisodeSim(const TabularDecPomdp& env, const SeedKey& seed);

    JointObservation reset();

    struct StepResult {
        JointObservation next_obs;
        double reward = 0.0;
        bool terminal = false;
    };
    StepResult step(const JointAction& act);

    int state() const { return state_; }
    int steps_taken() const { return t_; }
    bool terminal() const { return terminal_; }
    const TabularDecPomdp& env() const { return *env_; }

private:
    const TabularDecPomdp* env_;
    Rng rng_;
    int state_ = 0;
    int t_ = 0;
    bool terminal_ = true;  // must reset() first
};

// One-shot helpers mirroring the simulator.
std::pair<int, JointObservation> env_reset(const TabularDecPomdp& env, const SeedKey& seed);
EpisodeSim::StepResult env_step(const TabularDecPomdp& env, int state, const JointAction& act,
                                const SeedKey& seed, int& next_state);

// Built-in presets.
TabularDecPomdp make_coop_matrix_chain();
TabularDecPomdp make_coop_grid_nav();
TabularDecPomdp make_figure1_toy();
std::vector<std::string> preset_names();
TabularDecPomdp make_preset(const std::string& name);

// Random environment whose observation-level rows factor into per-agent
// conditionals and are strictly positive (noise-mixed), so any dense factored
// model has finite divergence against it. States coincide with joint
// observations. Used by the randomized audits and as a test fixture.
TabularDecPomdp make_random_factored_env(const std::vector<int>& obs_sizes, int n_actions,
                                         const SeedKey& seed, double noise = 0.05,
                                         double gamma = 0.95, int horizon = 20);

// Declarative text format listing the five tables (sizes, obs_fn, transition
// rows, rewards, init) plus gamma and horizon.
TabularDecPomdp load_env(std::istream& in);
TabularDecPomdp load_env_file(const std::string& path);
void save_env(const TabularDecPomdp& env, std::ostream& out);
void save_env_file(const TabularDecPomdp& env, const std::string& path);

// Resolves --env values: a preset name, else a path to an env file.
TabularDecPomdp resolve_env(const std::string& name_or_path);

}  // namespace mag::envs
