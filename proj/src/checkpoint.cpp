#include "mag/checkpoint.hpp"

#include <fstream>
#include <stdexcept>
#include <string>

namespace mag::harness {

void Checkpoint::save(std::ostream& out) const {
    out << "magckpt v1\n";
    out << "iteration " << iteration << "\n";
    out << "env_steps " << env_steps << "\n";
    models.save(out);
    predictor.save(out);
    policy.save(out);
    policy_old.save(out);
    critic.save(out);
}

void Checkpoint::save_file(const std::string& path) const {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("Checkpoint: cannot open for write: " + path);
    save(f);
}

Checkpoint Checkpoint::load(std::istream& in) {
    std::string magic, version, key;
    in >> magic >> version;
    if (magic != "magckpt" || version != "v1")
        throw std::runtime_error("Checkpoint: unrecognized container header");
    Checkpoint c;
    in >> key >> c.iteration;
    if (key != "iteration") throw std::runtime_error("Checkpoint: expected iteration");
    in >> key >> c.env_steps;
    if (key != "env_steps") throw std::runtime_error("Checkpoint: expected env_steps");
    c.models = models::LocalModelSet::load(in);
    c.predictor = reward::ModelRewardPredictor::load(in);
    c.policy = policy::JointPolicy::load(in);
    c.policy_old = policy::JointPolicy::load(in);
    c.critic = policy::CentralizedCritic::load(in);
    return c;
}

Checkpoint Checkpoint::load_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("Checkpoint: cannot open: " + path);
    return load(f);
}

}  // namespace mag::harness
