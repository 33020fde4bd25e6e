#include "mag/config.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include "mag/text_io.hpp"

namespace mag::harness {

namespace {

std::string mode_str(RolloutMode m) { return m == RolloutMode::planned ? "planned" : "greedy"; }

RolloutMode parse_mode(const std::string& s) {
    if (s == "planned") return RolloutMode::planned;
    if (s == "greedy") return RolloutMode::greedy;
    throw std::runtime_error("config: unknown rollout_mode '" + s + "'");
}

std::string selection_str(rollout::SelectionRule r) {
    return r == rollout::SelectionRule::min_error ? "min-error" : "literal-argmax";
}

rollout::SelectionRule parse_selection(const std::string& s) {
    if (s == "min-error") return rollout::SelectionRule::min_error;
    if (s == "literal-argmax") return rollout::SelectionRule::literal_argmax;
    throw std::runtime_error("config: unknown selection '" + s + "'");
}

std::string backend_str(models::ModelBackend b) {
    return b == models::ModelBackend::tabular ? "tabular" : "mlp";
}

std::string backend_str(policy::PolicyBackend b) {
    return b == policy::PolicyBackend::tabular ? "tabular" : "mlp";
}

}  // namespace

void ExperimentConfig::validate() const {
    if (episodes < 1) throw std::runtime_error("config: episodes must be >= 1");
    if (g_updates < 1) throw std::runtime_error("config: g_updates must be >= 1");
    if (model_epochs < 1 || predictor_epochs < 1)
        throw std::runtime_error("config: training epochs must be >= 1");
    if (error_draws < 1) throw std::runtime_error("config: error_draws must be >= 1");
    if (eval_every < 1) throw std::runtime_error("config: eval_every must be >= 1");
    if (eval_episodes < 1) throw std::runtime_error("config: eval_episodes must be >= 1");
    if (audit_every < 0 || audit_starts < 1)
        throw std::runtime_error("config: audit settings must be non-negative / positive");
    if (dataset_capacity == 0) throw std::runtime_error("config: dataset_capacity must be >= 1");
    if (gamma >= 1.0) throw std::runtime_error("config: gamma must be below 1");
    rollout.validate();  // enforces H <= k, positive loop constants
}

std::string ExperimentConfig::serialize() const {
    std::ostringstream out;
    out << "env " << env << "\n";
    out << "out_dir " << out_dir << "\n";
    out << "seed " << seed << "\n";
    out << "episodes " << episodes << "\n";
    out << "M " << rollout.M << "\n";
    out << "k " << rollout.k << "\n";
    out << "H " << rollout.H << "\n";
    out << "L " << rollout.L << "\n";
    out << "plan_discount " << format_double(rollout.gamma_plan) << "\n";
    out << "selection " << selection_str(rollout.selection) << "\n";
    out << "rollout_mode " << mode_str(rollout_mode) << "\n";
    out << "g_updates " << g_updates << "\n";
    out << "model_backend " << backend_str(model_backend) << "\n";
    out << "model_lr " << format_double(model_lr) << "\n";
    out << "model_hidden " << join_ints(model_hidden) << "\n";
    out << "laplace_alpha " << format_double(laplace_alpha) << "\n";
    out << "model_epochs " << model_epochs << "\n";
    out << "predictor_hidden " << join_ints(predictor_hidden) << "\n";
    out << "predictor_lr " << format_double(predictor_lr) << "\n";
    out << "predictor_epochs " << predictor_epochs << "\n";
    out << "error_draws " << error_draws << "\n";
    out << "policy_backend " << backend_str(policy_backend) << "\n";
    out << "policy_hidden " << join_ints(policy_hidden) << "\n";
    out << "clip " << format_double(clip) << "\n";
    out << "gae_lambda " << format_double(gae_lambda) << "\n";
    out << "lr_actor " << format_double(lr_actor) << "\n";
    out << "lr_critic " << format_double(lr_critic) << "\n";
    out << "gamma " << format_double(gamma) << "\n";
    out << "eval_every " << eval_every << "\n";
    out << "eval_episodes " << eval_episodes << "\n";
    out << "count_eval_steps " << (count_eval_steps ? 1 : 0) << "\n";
    out << "audit_every " << audit_every << "\n";
    out << "audit_starts " << audit_starts << "\n";
    out << "dataset_capacity " << dataset_capacity << "\n";
    out << "threads " << threads << "\n";
    return out.str();
}

ExperimentConfig ExperimentConfig::parse(std::istream& in) {
    ExperimentConfig cfg;
    std::string line;
    while (std::getline(in, line)) {
        const auto t = trim(line);
        if (t.empty() || t.front() == '#') continue;
        std::istringstream ls{std::string(t)};
        std::string key;
        ls >> key;
        std::string rest;
        std::getline(ls, rest);
        const std::string val{trim(rest)};
        if (key == "env") cfg.env = val;
        else if (key == "out_dir") cfg.out_dir = val;
        else if (key == "seed") cfg.seed = static_cast<std::uint64_t>(std::stoull(val));
        else if (key == "episodes") cfg.episodes = static_cast<int>(parse_long(val));
        else if (key == "M") cfg.rollout.M = static_cast<int>(parse_long(val));
        else if (key == "k") cfg.rollout.k = static_cast<int>(parse_long(val));
        else if (key == "H") cfg.rollout.H = static_cast<int>(parse_long(val));
        else if (key == "L") cfg.rollout.L = static_cast<int>(parse_long(val));
        else if (key == "plan_discount") cfg.rollout.gamma_plan = parse_double(val);
        else if (key == "selection") cfg.rollout.selection = parse_selection(val);
        else if (key == "rollout_mode") cfg.rollout_mode = parse_mode(val);
        else if (key == "g_updates") cfg.g_updates = static_cast<int>(parse_long(val));
        else if (key == "model_backend")
            cfg.model_backend = val == "mlp" ? models::ModelBackend::mlp : models::ModelBackend::tabular;
        else if (key == "model_lr") cfg.model_lr = parse_double(val);
        else if (key == "model_hidden") cfg.model_hidden = parse_ints(val);
        else if (key == "laplace_alpha") cfg.laplace_alpha = parse_double(val);
        else if (key == "model_epochs") cfg.model_epochs = static_cast<int>(parse_long(val));
        else if (key == "predictor_hidden") cfg.predictor_hidden = parse_ints(val);
        else if (key == "predictor_lr") cfg.predictor_lr = parse_double(val);
        else if (key == "predictor_epochs") cfg.predictor_epochs = static_cast<int>(parse_long(val));
        else if (key == "error_draws") cfg.error_draws = static_cast<int>(parse_long(val));
        else if (key == "policy_backend")
            cfg.policy_backend = val == "mlp" ? policy::PolicyBackend::mlp : policy::PolicyBackend::tabular;
        else if (key == "policy_hidden") cfg.policy_hidden = parse_ints(val);
        else if (key == "clip") cfg.clip = parse_double(val);
        else if (key == "gae_lambda") cfg.gae_lambda = parse_double(val);
        else if (key == "lr_actor") cfg.lr_actor = parse_double(val);
        else if (key == "lr_critic") cfg.lr_critic = parse_double(val);
        else if (key == "gamma") cfg.gamma = parse_double(val);
        else if (key == "eval_every") cfg.eval_every = static_cast<int>(parse_long(val));
        else if (key == "eval_episodes") cfg.eval_episodes = static_cast<int>(parse_long(val));
        else if (key == "count_eval_steps") cfg.count_eval_steps = parse_long(val) != 0;
        else if (key == "audit_every") cfg.audit_every = static_cast<int>(parse_long(val));
        else if (key == "audit_starts") cfg.audit_starts = static_cast<int>(parse_long(val));
        else if (key == "dataset_capacity")
            cfg.dataset_capacity = static_cast<std::size_t>(parse_long(val));
        else if (key == "threads") cfg.threads = static_cast<int>(parse_long(val));
        else throw std::runtime_error("config: unknown key '" + key + "'");
    }
    return cfg;
}

ExperimentConfig ExperimentConfig::parse_string(const std::string& text) {
    std::istringstream in(text);
    return parse(in);
}

ExperimentConfig ExperimentConfig::load_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("config: cannot open: " + path);
    return parse(f);
}

void ExperimentConfig::save_file(const std::string& path) const {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("config: cannot open for write: " + path);
    f << serialize();
}

std::vector<std::string> config_preset_names() {
    return {"2s_vs_1sc", "3s_vs_3z", "2s3z", "3s_vs_4z", "3s_vs_5z", "2c_vs_64zg", "corridor",
            "3s5z_vs_3s6z"};
}

ExperimentConfig config_preset(const std::string& name) {
    struct Pair {
        const char* name;
        int L;
        int H;
    };
    // (L, H) per benchmark map.
    static constexpr Pair kTable[] = {
        {"2s_vs_1sc", 5, 10},  {"3s_vs_3z", 5, 10},   {"2s3z", 5, 10},
        {"3s_vs_4z", 4, 10},   {"3s_vs_5z", 5, 7},    {"2c_vs_64zg", 5, 7},
        {"corridor", 4, 6},    {"3s5z_vs_3s6z", 4, 7},
    };
    for (const auto& row : kTable) {
        if (name != row.name) continue;
        ExperimentConfig cfg;
        cfg.rollout.L = row.L;
        cfg.rollout.H = row.H;
        cfg.rollout.k = std::max(cfg.rollout.k, row.H);  // keep H <= k
        cfg.model_lr = 5e-4;
        cfg.predictor_hidden = {256, 256, 256, 256};
        return cfg;
    }
    throw std::runtime_error("unknown config preset: " + name);
}

}  // namespace mag::harness
