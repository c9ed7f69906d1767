#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "sonn/errors.hpp"
#include "sonn/tensor.hpp"

namespace sonn {

// One generative layer: every connection i -> k carries a K x Q
// coefficient block; the coefficient of power q+1 at tap r lives at
// 0-based slot (r, q). Physically the weights are kept as one
// (in_channels*K*Q) x out_channels matrix whose row order matches the
// flattened per-connection vector (all K taps of power 1, then all K
// taps of power 2, ...), so a layer forward is a single matrix product.
struct GenerativeLayerParams {
    Index in_channels = 0;
    Index out_channels = 0;
    Index kernel = 0; // K, odd
    Index order = 0;  // Q

    Matrix weights; // (in_channels*K*Q) x out_channels
    Vector biases;  // out_channels

    Index pad() const { return (kernel - 1) / 2; }
    Index block_size() const { return kernel * order; } // per-connection K*Q

    Index flat_index(Index in, Index tap, Index power_slot) const {
        return in * block_size() + power_slot * kernel + tap;
    }
    double weight(Index out, Index in, Index tap, Index power_slot) const {
        return weights(flat_index(in, tap, power_slot), out);
    }
    double& weight(Index out, Index in, Index tap, Index power_slot) {
        return weights(flat_index(in, tap, power_slot), out);
    }
};

// Everything the backward pass needs from a forward pass. yq holds the
// per-channel Y_i^(Q) blocks side by side (M x in_channels*K*Q); the
// power-1 block of each channel is the base Y the backward pass
// re-exponentiates from.
struct ForwardCache {
    std::vector<Vector> input;
    Matrix yq;             // M x (in_channels*K*Q)
    Matrix pre_activation; // M x out_channels, bias included
    bool valid = false;
};

struct LayerGradients {
    Matrix d_weights; // same shape as GenerativeLayerParams::weights
    Vector d_biases;
    std::vector<Vector> d_input;
};

// Triple-loop evaluation of the layer; the correctness oracle for the
// vectorized path. `mul_count`, when given, accumulates one count per
// weight-times-power multiply (exponentiation and bias adds excluded).
std::vector<Vector> forward_naive(const GenerativeLayerParams& params,
                                  const std::vector<Vector>& inputs,
                                  std::uint64_t* mul_count = nullptr);

// Same layer as a sum of Q plain convolutions over the elementwise
// powers of the input.
std::vector<Vector> forward_qconv(const GenerativeLayerParams& params,
                                  const std::vector<Vector>& inputs);

// Fast path: one im2row + power concat per channel, then a single
// matrix product against the flattened weights.
std::pair<std::vector<Vector>, ForwardCache>
forward_vectorized(const GenerativeLayerParams& params, const std::vector<Vector>& inputs);

LayerGradients backward(const GenerativeLayerParams& params, const ForwardCache& cache,
                        const std::vector<Vector>& d_output);

// Uniform fan-in/fan-out init with the power-q slice damped by 1/q!;
// biases zero. Deterministic per seed.
GenerativeLayerParams init_params(Index in_channels, Index out_channels, Index kernel,
                                  Index order, std::uint64_t seed);

Index count_params(const GenerativeLayerParams& params);
std::uint64_t count_macs(const GenerativeLayerParams& params, Index output_len);

} // namespace sonn
