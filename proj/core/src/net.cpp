#include "selectmix/net.hpp"

#include <cmath>
#include <string>

namespace selectmix {

void NetworkSpec::validate() const {
    if (layer_widths.size() < 2) {
        throw SpecError("NetworkSpec: need at least input and output widths");
    }
    for (int w : layer_widths) {
        if (w <= 0) throw SpecError("NetworkSpec: layer widths must be positive");
    }
    if (weight_decay < 0.0) throw SpecError("NetworkSpec: weight_decay must be nonnegative");
    if (init_scale <= 0.0) throw SpecError("NetworkSpec: init_scale must be positive");
}

void SgdHyper::validate() const {
    if (base_lr <= 0.0) throw SpecError("SgdHyper: base_lr must be positive");
    if (momentum < 0.0 || momentum >= 1.0) throw SpecError("SgdHyper: momentum must be in [0,1)");
    if (weight_decay < 0.0) throw SpecError("SgdHyper: weight_decay must be nonnegative");
    if (decay_factor <= 0.0 || decay_factor >= 1.0) {
        throw SpecError("SgdHyper: decay_factor must be in (0,1)");
    }
    for (std::size_t i = 1; i < milestones.size(); ++i) {
        if (milestones[i] <= milestones[i - 1]) {
            throw SpecError("SgdHyper: milestones must be strictly increasing");
        }
    }
}

NetworkState init_network(const NetworkSpec& spec, Rng& rng) {
    spec.validate();
    NetworkState state;
    const int layers = spec.num_layers();
    state.weights.reserve(layers);
    state.biases.reserve(layers);
    for (int l = 0; l < layers; ++l) {
        const int fan_in = spec.layer_widths[l];
        const int fan_out = spec.layer_widths[l + 1];
        const double bound = spec.init_scale / std::sqrt(static_cast<double>(fan_in));
        Matrix w(fan_out, fan_in);
        for (Eigen::Index k = 0; k < w.size(); ++k) {
            w.data()[k] = (2.0 * rng.uniform() - 1.0) * bound;
        }
        Vector b(fan_out);
        for (Eigen::Index k = 0; k < b.size(); ++k) {
            b[k] = (2.0 * rng.uniform() - 1.0) * bound;
        }
        state.weights.push_back(std::move(w));
        state.biases.push_back(std::move(b));
        state.weight_momentum.emplace_back(Matrix::Zero(fan_out, fan_in));
        state.bias_momentum.emplace_back(Vector::Zero(fan_out));
    }
    return state;
}

namespace {

void check_forward_inputs(const NetworkSpec& spec, const NetworkState& state,
                          const Matrix& inputs) {
    if (static_cast<int>(state.weights.size()) != spec.num_layers()) {
        throw ShapeError("forward: state does not match spec layer count");
    }
    if (inputs.cols() != spec.input_dim()) {
        throw ShapeError("forward: input width " + std::to_string(inputs.cols()) +
                         " does not match layer_widths[0] = " +
                         std::to_string(spec.input_dim()));
    }
    if (!inputs.allFinite()) throw InputError("forward: non-finite input");
}

void apply_activation(Matrix& z, Activation act) {
    if (act == Activation::kRelu) {
        z = z.cwiseMax(0.0);
    } else {
        z = z.array().tanh();
    }
}

Matrix softmax_rows(Matrix logits) {
    const Vector row_max = logits.rowwise().maxCoeff();
    logits.colwise() -= row_max;
    Matrix p = logits.array().exp();
    const Vector row_sum = p.rowwise().sum();
    p.array().colwise() /= row_sum.array();
    return p.cwiseMax(kProbFloor);
}

// Activations per layer: acts[0] = inputs, acts[L] = softmax probabilities.
std::vector<Matrix> forward_activations(const NetworkSpec& spec, const NetworkState& state,
                                        const Matrix& inputs) {
    const int layers = spec.num_layers();
    std::vector<Matrix> acts;
    acts.reserve(layers + 1);
    acts.push_back(inputs);
    for (int l = 0; l < layers; ++l) {
        Matrix z = acts.back() * state.weights[l].transpose();
        z.rowwise() += state.biases[l].transpose();
        if (l + 1 < layers) {
            apply_activation(z, spec.activation);
        } else {
            z = softmax_rows(std::move(z));
        }
        acts.push_back(std::move(z));
    }
    return acts;
}

}  // namespace

Matrix forward(const NetworkSpec& spec, const NetworkState& state, const Matrix& inputs) {
    check_forward_inputs(spec, state, inputs);
    return forward_activations(spec, state, inputs).back();
}

double soft_cross_entropy(const Eigen::Ref<const Eigen::RowVectorXd>& probs,
                          const Eigen::Ref<const Eigen::RowVectorXd>& target) {
    if (probs.size() != target.size()) {
        throw ShapeError("soft_cross_entropy: probability and target widths differ");
    }
    double loss = 0.0;
    for (int k = 0; k < probs.size(); ++k) {
        if (target[k] != 0.0) {
            loss -= target[k] * std::log(std::max(probs[k], kProbFloor));
        }
    }
    return loss;
}

double batch_loss(const NetworkSpec& spec, const NetworkState& state, const Matrix& inputs,
                  const Matrix& targets) {
    const Matrix probs = forward(spec, state, inputs);
    if (targets.rows() != probs.rows() || targets.cols() != probs.cols()) {
        throw ShapeError("batch_loss: target shape does not match predictions");
    }
    double loss = 0.0;
    for (Eigen::Index i = 0; i < probs.rows(); ++i) {
        loss += soft_cross_entropy(probs.row(i), targets.row(i));
    }
    loss /= static_cast<double>(probs.rows());
    for (const Matrix& w : state.weights) {
        loss += 0.5 * spec.weight_decay * w.squaredNorm();
    }
    return loss;
}

Gradients gradients(const NetworkSpec& spec, const NetworkState& state, const Matrix& inputs,
                    const Matrix& targets) {
    check_forward_inputs(spec, state, inputs);
    if (inputs.rows() == 0) throw ShapeError("gradients: empty batch");
    if (targets.rows() != inputs.rows() || targets.cols() != spec.num_classes()) {
        throw ShapeError("gradients: target shape does not match batch");
    }

    const int layers = spec.num_layers();
    const double batch = static_cast<double>(inputs.rows());
    const std::vector<Matrix> acts = forward_activations(spec, state, inputs);

    Gradients grads;
    grads.weights.resize(layers);
    grads.biases.resize(layers);

    double loss = 0.0;
    for (Eigen::Index i = 0; i < acts.back().rows(); ++i) {
        loss += soft_cross_entropy(acts.back().row(i), targets.row(i));
    }
    loss /= batch;

    // Softmax + soft-CE head: d loss / d logits = (p - t) / B.
    Matrix delta = (acts.back() - targets) / batch;
    for (int l = layers - 1; l >= 0; --l) {
        grads.weights[l] = delta.transpose() * acts[l];
        grads.weights[l] += spec.weight_decay * state.weights[l];
        grads.biases[l] = delta.colwise().sum();
        loss += 0.5 * spec.weight_decay * state.weights[l].squaredNorm();
        if (l > 0) {
            delta = delta * state.weights[l];
            if (spec.activation == Activation::kRelu) {
                delta.array() *= (acts[l].array() > 0.0).cast<double>();
            } else {
                delta.array() *= 1.0 - acts[l].array().square();
            }
        }
    }
    grads.batch_loss = loss;
    return grads;
}

void sgd_step(NetworkState& state, const Gradients& grads, const SgdHyper& hyper, double lr) {
    if (grads.weights.size() != state.weights.size()) {
        throw ShapeError("sgd_step: gradient layer count does not match state");
    }
    for (std::size_t l = 0; l < state.weights.size(); ++l) {
        if (grads.weights[l].rows() != state.weights[l].rows() ||
            grads.weights[l].cols() != state.weights[l].cols() ||
            grads.biases[l].size() != state.biases[l].size()) {
            throw ShapeError("sgd_step: gradient shape mismatch at layer " + std::to_string(l));
        }
        if (!grads.weights[l].allFinite() || !grads.biases[l].allFinite()) {
            throw TrainingError("sgd_step: non-finite gradient at layer " + std::to_string(l));
        }
    }
    for (std::size_t l = 0; l < state.weights.size(); ++l) {
        state.weight_momentum[l] = hyper.momentum * state.weight_momentum[l] + grads.weights[l];
        state.bias_momentum[l] = hyper.momentum * state.bias_momentum[l] + grads.biases[l];
        state.weights[l] -= lr * state.weight_momentum[l];
        state.biases[l] -= lr * state.bias_momentum[l];
    }
}

double lr_at(const SgdHyper& hyper, int epoch) {
    double lr = hyper.base_lr;
    for (int m : hyper.milestones) {
        if (m <= epoch) lr *= hyper.decay_factor;
    }
    return lr;
}

}  // namespace selectmix
