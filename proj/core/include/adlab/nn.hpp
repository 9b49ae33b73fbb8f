#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "adlab/errors.hpp"
#include "adlab/matrix.hpp"
#include "adlab/rng.hpp"

namespace adlab {

enum class Activation { kIdentity, kRelu, kSigmoid };

const char* activation_name(Activation a);
Activation activation_from_name(const std::string& name);

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

struct LayerSpec {
    size_t width;
    Activation act;
};

struct MlpSpec {
    size_t input_dim = 0;
    std::vector<LayerSpec> layers;

    size_t output_dim() const { return layers.back().width; }
    void validate() const;
};

// One named parameter: value, pending gradient, and adagrad accumulator.
struct Param {
    Matrix value;
    Matrix grad;
    Matrix accum;
};

// Named parameter collection. Iteration is always in name order, so every
// consumer (optimizer, checkpoints, gradient checks) sees a stable order.
class ParamSet {
public:
    Param& add(const std::string& name, size_t rows, size_t cols);
    Param& at(const std::string& name);
    const Param& at(const std::string& name) const;
    bool contains(const std::string& name) const {
        return params_.count(name) > 0;
    }

    void zero_grads();
    void scale_grads(double factor);
    size_t value_count() const;

    auto begin() { return params_.begin(); }
    auto end() { return params_.end(); }
    auto begin() const { return params_.begin(); }
    auto end() const { return params_.end(); }
    size_t size() const { return params_.size(); }

private:
    std::map<std::string, Param> params_;
};

// Uniform init in [-1/sqrt(fan_in), +1/sqrt(fan_in)].
void init_uniform_fan_in(Matrix& m, size_t fan_in, Rng& rng);

// Activation record from one forward pass; reusable across calls to avoid
// reallocation in hot loops.
struct MlpTape {
    std::vector<double> input;
    std::vector<std::vector<double>> pre;   // z_l
    std::vector<std::vector<double>> post;  // a_l = act(z_l)
    bool valid = false;
};

// Fixed-topology MLP over params owned by an external ParamSet. Parameters
// are registered as "<prefix>.w<l>" / "<prefix>.b<l>" and bound by pointer,
// so the hot path never does name lookups.
class Mlp {
public:
    Mlp() = default;
    Mlp(std::string prefix, MlpSpec spec);

    // Creates and initializes this net's params in `ps`.
    void init(ParamSet& ps, Rng& rng);
    // Binds to already-existing params (e.g. loaded from a checkpoint).
    void bind(ParamSet& ps);

    const MlpSpec& spec() const { return spec_; }
    const std::string& prefix() const { return prefix_; }

    void forward(std::span<const double> input, MlpTape& tape) const;
    double forward_scalar(std::span<const double> input, MlpTape& tape) const;

    // Accumulates parameter grads; adds dL/dinput into `dinput` if nonempty.
    void backward(const MlpTape& tape, std::span<const double> upstream,
                  std::span<double> dinput) const;

    // Forward without recording a tape (inference).
    void infer(std::span<const double> input, std::vector<double>& scratch,
               std::span<double> out) const;

    // Batched tape-free forward over n examples held column-wise in a
    // (dim x n) matrix, starting at `first_layer` (the caller supplies that
    // layer's input activations). Weights stream once per batch instead of
    // once per example. Per-example accumulation order is fixed and
    // independent of n, so a batch of one reproduces any larger batch
    // bit for bit. Returns the final activations, (output_dim x n).
    const Matrix& infer_batch_tail(size_t first_layer, const Matrix& activations,
                                   Matrix& ping, Matrix& pong) const;
    const Matrix& infer_batch(const Matrix& inputs, Matrix& ping,
                              Matrix& pong) const {
        return infer_batch_tail(0, inputs, ping, pong);
    }

    const Matrix& layer_weight(size_t l) const { return w_[l]->value; }
    const Matrix& layer_bias(size_t l) const { return b_[l]->value; }

private:
    std::string prefix_;
    MlpSpec spec_;
    std::vector<Param*> w_;
    std::vector<Param*> b_;
};

// One embedding table per feature slot; forward concatenates looked-up rows.
class EmbeddingSet {
public:
    EmbeddingSet() = default;
    EmbeddingSet(std::string prefix, std::vector<size_t> vocab_sizes, size_t dim);

    void init(ParamSet& ps, Rng& rng);
    void bind(ParamSet& ps);

    size_t slot_count() const { return vocab_sizes_.size(); }
    size_t dim() const { return dim_; }
    size_t concat_dim() const { return vocab_sizes_.size() * dim_; }

    void forward(std::span<const int32_t> ids, std::span<double> out) const;
    void backward(std::span<const int32_t> ids, std::span<const double> grad) const;
    std::span<const double> row(size_t slot, int32_t id) const;

private:
    std::string prefix_;
    std::vector<size_t> vocab_sizes_;
    size_t dim_ = 0;
    std::vector<Param*> tables_;
};

enum class OptimizerAlgo { kSgd, kAdagrad };

struct OptimizerConfig {
    OptimizerAlgo algo = OptimizerAlgo::kAdagrad;
    double lr = 0.05;
    double adagrad_eps = 1e-8;
};

// Applies one update from the accumulated grads. Throws NumericError naming
// the offending parameter if any gradient is NaN.
void optimizer_step(ParamSet& params, const OptimizerConfig& config);

}  // namespace adlab
