#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <vector>

#include "mag/seed.hpp"

namespace mag {

// Small fully-connected network with tanh hidden layers and a linear output,
// trained by Adam on manually backpropagated gradients. Deterministic given
// its seed; serializes losslessly into the checkpoint container.
class Mlp {
public:
    Mlp() = default;
    // layer_sizes: input, hidden..., output.
    Mlp(std::vector<int> layer_sizes, const SeedKey& seed);

    int input_size() const { return layer_sizes_.empty() ? 0 : layer_sizes_.front(); }
    int output_size() const { return layer_sizes_.empty() ? 0 : layer_sizes_.back(); }
    const std::vector<int>& layer_sizes() const { return layer_sizes_; }

    std::vector<double> forward(std::span<const double> input) const;

    // Accumulates gradients for one sample given dLoss/dOutput; returns the
    // pre-activation caches so callers can chain custom heads if needed.
    void accumulate_gradient(std::span<const double> input, std::span<const double> grad_output);

    // Applies one Adam step using the gradients accumulated since the last
    // call (averaged over `batch_size` samples), then clears them.
    void adam_step(double learning_rate, std::size_t batch_size);

    void zero_gradients();

    // Clears the final layer's weights and biases (e.g. to start a softmax
    // head exactly uniform).
    void zero_output_layer();

    const std::vector<double>& parameters() const { return params_; }
    std::vector<double>& mutable_parameters() { return params_; }

    void save(std::ostream& out) const;
    static Mlp load(std::istream& in);

    bool operator==(const Mlp& other) const {
        return layer_sizes_ == other.layer_sizes_ && params_ == other.params_;
    }

private:
    struct LayerView {
        std::size_t w_off = 0;  // weights, row-major [out][in]
        std::size_t b_off = 0;
        int in = 0;
        int out = 0;
    };

    std::vector<int> layer_sizes_;
    std::vector<LayerView> layers_;
    std::vector<double> params_;
    std::vector<double> grad_;
    std::vector<double> adam_m_;
    std::vector<double> adam_v_;
    long adam_t_ = 0;

    void build_views();
};

}  // namespace mag
