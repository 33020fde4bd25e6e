#include "mag/mlp.hpp"

#include <cmath>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>

#include "mag/text_io.hpp"

namespace mag {

Mlp::Mlp(std::vector<int> layer_sizes, const SeedKey& seed)
    : layer_sizes_(std::move(layer_sizes)) {
    if (layer_sizes_.size() < 2) throw std::invalid_argument("Mlp: need at least input and output");
    build_views();
    Rng rng(seed);
    for (const auto& l : layers_) {
        // Uniform Glorot-style init.
        const double bound = std::sqrt(6.0 / static_cast<double>(l.in + l.out));
        for (int i = 0; i < l.out * l.in; ++i)
            params_[l.w_off + static_cast<std::size_t>(i)] = rng.uniform(-bound, bound);
        for (int i = 0; i < l.out; ++i) params_[l.b_off + static_cast<std::size_t>(i)] = 0.0;
    }
}

void Mlp::build_views() {
    layers_.clear();
    std::size_t off = 0;
    for (std::size_t k = 0; k + 1 < layer_sizes_.size(); ++k) {
        LayerView l;
        l.in = layer_sizes_[k];
        l.out = layer_sizes_[k + 1];
        l.w_off = off;
        off += static_cast<std::size_t>(l.in) * static_cast<std::size_t>(l.out);
        l.b_off = off;
        off += static_cast<std::size_t>(l.out);
        layers_.push_back(l);
    }
    params_.assign(off, 0.0);
    grad_.assign(off, 0.0);
    adam_m_.assign(off, 0.0);
    adam_v_.assign(off, 0.0);
    adam_t_ = 0;
}

std::vector<double> Mlp::forward(std::span<const double> input) const {
    if (static_cast<int>(input.size()) != input_size())
        throw std::invalid_argument("Mlp: input size mismatch");
    std::vector<double> act(input.begin(), input.end());
    for (std::size_t k = 0; k < layers_.size(); ++k) {
        const auto& l = layers_[k];
        std::vector<double> next(static_cast<std::size_t>(l.out));
        for (int o = 0; o < l.out; ++o) {
            double z = params_[l.b_off + static_cast<std::size_t>(o)];
            const std::size_t row = l.w_off + static_cast<std::size_t>(o) * static_cast<std::size_t>(l.in);
            for (int i = 0; i < l.in; ++i) z += params_[row + static_cast<std::size_t>(i)] * act[static_cast<std::size_t>(i)];
            next[static_cast<std::size_t>(o)] = (k + 1 < layers_.size()) ? std::tanh(z) : z;
        }
        act = std::move(next);
    }
    return act;
}

void Mlp::accumulate_gradient(std::span<const double> input, std::span<const double> grad_output) {
    // Forward pass with activation caches.
    std::vector<std::vector<double>> acts;
    acts.emplace_back(input.begin(), input.end());
    for (std::size_t k = 0; k < layers_.size(); ++k) {
        const auto& l = layers_[k];
        std::vector<double> next(static_cast<std::size_t>(l.out));
        for (int o = 0; o < l.out; ++o) {
            double z = params_[l.b_off + static_cast<std::size_t>(o)];
            const std::size_t row = l.w_off + static_cast<std::size_t>(o) * static_cast<std::size_t>(l.in);
            for (int i = 0; i < l.in; ++i)
                z += params_[row + static_cast<std::size_t>(i)] * acts.back()[static_cast<std::size_t>(i)];
            next[static_cast<std::size_t>(o)] = (k + 1 < layers_.size()) ? std::tanh(z) : z;
        }
        acts.push_back(std::move(next));
    }

    // Backward pass.
    std::vector<double> delta(grad_output.begin(), grad_output.end());
    for (std::size_t k = layers_.size(); k-- > 0;) {
        const auto& l = layers_[k];
        const auto& a_in = acts[k];
        std::vector<double> delta_prev(static_cast<std::size_t>(l.in), 0.0);
        for (int o = 0; o < l.out; ++o) {
            const double d = delta[static_cast<std::size_t>(o)];
            grad_[l.b_off + static_cast<std::size_t>(o)] += d;
            const std::size_t row = l.w_off + static_cast<std::size_t>(o) * static_cast<std::size_t>(l.in);
            for (int i = 0; i < l.in; ++i) {
                grad_[row + static_cast<std::size_t>(i)] += d * a_in[static_cast<std::size_t>(i)];
                delta_prev[static_cast<std::size_t>(i)] += d * params_[row + static_cast<std::size_t>(i)];
            }
        }
        if (k > 0) {
            // tanh derivative through the previous layer's output.
            for (int i = 0; i < l.in; ++i) {
                const double a = acts[k][static_cast<std::size_t>(i)];
                delta_prev[static_cast<std::size_t>(i)] *= (1.0 - a * a);
            }
        }
        delta = std::move(delta_prev);
    }
}

void Mlp::adam_step(double learning_rate, std::size_t batch_size) {
    if (batch_size == 0) throw std::invalid_argument("Mlp: empty batch");
    constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;
    ++adam_t_;
    const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(adam_t_));
    const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(adam_t_));
    const double scale = 1.0 / static_cast<double>(batch_size);
    for (std::size_t i = 0; i < params_.size(); ++i) {
        const double g = grad_[i] * scale;
        adam_m_[i] = kBeta1 * adam_m_[i] + (1.0 - kBeta1) * g;
        adam_v_[i] = kBeta2 * adam_v_[i] + (1.0 - kBeta2) * g * g;
        const double mhat = adam_m_[i] / bc1;
        const double vhat = adam_v_[i] / bc2;
        params_[i] -= learning_rate * mhat / (std::sqrt(vhat) + kEps);
    }
    zero_gradients();
}

void Mlp::zero_gradients() { grad_.assign(grad_.size(), 0.0); }

void Mlp::zero_output_layer() {
    const auto& l = layers_.back();
    for (int i = 0; i < l.out * l.in; ++i) params_[l.w_off + static_cast<std::size_t>(i)] = 0.0;
    for (int i = 0; i < l.out; ++i) params_[l.b_off + static_cast<std::size_t>(i)] = 0.0;
}

void Mlp::save(std::ostream& out) const {
    out << "mlp " << layer_sizes_.size();
    for (int s : layer_sizes_) out << ' ' << s;
    out << ' ' << adam_t_ << "\n";
    auto dump = [&](const std::vector<double>& v, const char* tag) {
        out << tag;
        for (double x : v) out << ' ' << format_double(x);
        out << "\n";
    };
    dump(params_, "params");
    dump(adam_m_, "adam_m");
    dump(adam_v_, "adam_v");
}

Mlp Mlp::load(std::istream& in) {
    std::string tag;
    in >> tag;
    if (tag != "mlp") throw std::runtime_error("Mlp::load: bad tag '" + tag + "'");
    std::size_t n_layers;
    in >> n_layers;
    std::vector<int> sizes(n_layers);
    for (auto& s : sizes) in >> s;
    long t;
    in >> t;
    Mlp m;
    m.layer_sizes_ = std::move(sizes);
    m.build_views();
    m.adam_t_ = t;
    auto slurp = [&](std::vector<double>& v, const char* expect) {
        std::string name;
        in >> name;
        if (name != expect) throw std::runtime_error("Mlp::load: expected " + std::string(expect));
        for (double& x : v) in >> x;
    };
    slurp(m.params_, "params");
    slurp(m.adam_m_, "adam_m");
    slurp(m.adam_v_, "adam_v");
    if (!in) throw std::runtime_error("Mlp::load: truncated stream");
    return m;
}

}  // namespace mag
