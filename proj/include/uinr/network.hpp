#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <vector>

#include "uinr/rng.hpp"

namespace uinr {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Decoder head: optional sine hidden layer of width `hidden` (0 = none),
/// then a linear layer to `out` neurons.
struct HeadSpec {
    int hidden = 0;
    int out = 1;

    bool operator==(const HeadSpec&) const = default;
};

struct NetworkShape {
    int input_dim = 3;
    int width = 100;
    int blocks = 3;
    double omega0 = 30.0;       // first-layer activation frequency
    double omega_hidden = 1.0;  // inside residual blocks and head hidden layers
    std::vector<HeadSpec> heads{{0, 1}};
    int dropout_block = -1;  // dropout applied after this block's output (-1 = none)
    double dropout_rate = 0.0;

    std::size_t parameter_count() const;
    int total_out() const;
    bool operator==(const NetworkShape&) const = default;
    void validate() const;  // throws ConfigError
};

enum class ForwardMode { Train, Eval };

/// Cached intermediates from a train-mode forward pass.
struct ForwardCache {
    MatrixXd input;                   // n x 3
    MatrixXd z0;                      // first-layer pre-activation (n x w)
    MatrixXd a0;                      // sin(omega0 * z0)
    std::vector<MatrixXd> block_in;   // per block
    std::vector<MatrixXd> block_z1;   // pre-activation of first block layer
    std::vector<MatrixXd> block_h;    // sin(z1)
    std::vector<MatrixXd> block_z2;   // pre-activation of second block layer
    MatrixXd dropout_mask;            // empty when dropout inactive
    MatrixXd encoder_out;             // n x w, input to the heads
    std::vector<MatrixXd> head_zh;    // per head with hidden layer
    std::vector<MatrixXd> head_ah;    // sin(omega_h * zh)
    bool valid = false;
};

/// Fixed-topology residual sine network. Parameters live in one flat vector;
/// layers address them through Eigen maps, so the optimizer, finite-difference
/// checks, and serialization all see a single contiguous array.
class Network {
public:
    explicit Network(NetworkShape shape);

    const NetworkShape& shape() const { return shape_; }
    VectorXd& params() { return params_; }
    const VectorXd& params() const { return params_; }
    std::size_t parameter_count() const { return static_cast<std::size_t>(params_.size()); }

    /// SIREN-style initialization; deterministic for a given rng state.
    void init(Rng& rng);

    /// Rows of `coords` are points in [-1,1]^3. Returns n x total_out head outputs
    /// (heads concatenated in declaration order). Train mode fills `cache` and
    /// applies inverted dropout; eval mode is a pure function of (params, coords).
    MatrixXd forward(const MatrixXd& coords, ForwardMode mode, Rng* rng = nullptr,
                     ForwardCache* cache = nullptr) const;

    /// Reverse-mode gradients of a scalar loss given d(loss)/d(head outputs).
    VectorXd backward(const ForwardCache& cache, const MatrixXd& d_out) const;

private:
    struct Seg {
        std::ptrdiff_t w_off, b_off;
        int rows, cols;
    };
    Eigen::Map<const MatrixXd> weight(const Seg& s) const;
    Eigen::Map<const VectorXd> bias(const Seg& s) const;

    NetworkShape shape_;
    VectorXd params_;
    Seg input_;
    std::vector<std::array<Seg, 2>> blocks_;     // [layer1, layer2] per block
    std::vector<std::array<Seg, 2>> heads_;      // [hidden (unused if none), output]
};

/// Adam accumulator state; shapes mirror the parameter vector.
struct AdamState {
    VectorXd m, v;
    std::int64_t t = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    static AdamState zeros(std::size_t n);
};

/// Bias-corrected Adam update. When `quantize_f32` is set, updated parameters are
/// rounded to the nearest float32 so checkpoints round-trip bit-exactly.
void adam_step(VectorXd& params, const VectorXd& grads, AdamState& state, double lr,
               bool quantize_f32 = false);

struct LrSchedule {
    double base_lr = 5e-5;
    double decay = 0.8;
    int step_size = 15;

    double lr_at(int epoch) const;
};

}  // namespace uinr
