#pragma once

#include <vector>

#include "selectmix/errors.hpp"
#include "selectmix/rng.hpp"
#include "selectmix/types.hpp"

namespace selectmix {

enum class Activation { kRelu, kTanh };

// Probabilities produced by the softmax head are clamped to this floor
// before any logarithm, so a confident wrong prediction against a one-hot
// target still yields a finite loss.
inline constexpr double kProbFloor = 1e-12;

// Architecture of a dense softmax classifier. layer_widths runs from the
// input dimension to the number of classes C.
struct NetworkSpec {
    std::vector<int> layer_widths;
    Activation activation = Activation::kRelu;
    double weight_decay = 0.0;
    double init_scale = 1.0;

    int input_dim() const { return layer_widths.front(); }
    int num_classes() const { return layer_widths.back(); }
    int num_layers() const { return static_cast<int>(layer_widths.size()) - 1; }
    void validate() const;
};

// Parameters plus SGD momentum buffers. weights[l] is (out x in) for the
// transition layer_widths[l] -> layer_widths[l+1].
struct NetworkState {
    std::vector<Matrix> weights;
    std::vector<Vector> biases;
    std::vector<Matrix> weight_momentum;
    std::vector<Vector> bias_momentum;
};

struct Gradients {
    std::vector<Matrix> weights;
    std::vector<Vector> biases;
    double batch_loss = 0.0;  // mean soft-CE plus the weight-decay penalty
};

struct SgdHyper {
    double base_lr = 0.1;
    double momentum = 0.9;
    double weight_decay = 1e-4;
    std::vector<int> milestones;  // strictly increasing epochs
    double decay_factor = 0.1;

    void validate() const;
};

// Weights and biases drawn uniformly from [-init_scale/sqrt(fan_in), +...],
// momentum buffers zeroed. Small draws keep the initial softmax near uniform.
NetworkState init_network(const NetworkSpec& spec, Rng& rng);

// Row-wise softmax probabilities for a batch of inputs (rows = samples).
// Every output row sums to 1 within 1e-9 and has entries in [kProbFloor, 1].
Matrix forward(const NetworkSpec& spec, const NetworkState& state, const Matrix& inputs);

// -sum_k target_k * ln(max(p_k, kProbFloor)). target must be a distribution.
double soft_cross_entropy(const Eigen::Ref<const Eigen::RowVectorXd>& probs,
                          const Eigen::Ref<const Eigen::RowVectorXd>& target);

// Loss differentiated by gradients(): mean soft-CE over the batch plus
// 0.5 * weight_decay * sum ||W_l||^2 (biases are not decayed).
double batch_loss(const NetworkSpec& spec, const NetworkState& state, const Matrix& inputs,
                  const Matrix& targets);

// Exact backprop gradients of batch_loss. The probability floor is treated
// as inactive; targets are soft label rows summing to 1.
Gradients gradients(const NetworkSpec& spec, const NetworkState& state, const Matrix& inputs,
                    const Matrix& targets);

// buffer <- momentum * buffer + grad; param <- param - lr * buffer.
// Weight decay is already folded into the gradients.
void sgd_step(NetworkState& state, const Gradients& grads, const SgdHyper& hyper, double lr);

// base_lr * decay_factor^(number of milestones <= epoch).
double lr_at(const SgdHyper& hyper, int epoch);

}  // namespace selectmix
