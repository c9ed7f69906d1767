#pragma once

#include <cstdint>
#include <vector>

#include "sonn/tensor.hpp"

namespace sonn {

struct GenerativeLayerParams;

// Plain same-padded unit-stride Conv1D, written as explicit loops over
// std::vector storage. This is the independent reference the Q=1
// generative layer is checked against; it must stay decoupled from the
// im2row/GEMM machinery.
struct ConvLayerParams {
    Index in_channels = 0;
    Index out_channels = 0;
    Index kernel = 0; // odd

    std::vector<double> weights; // [k][i][r]
    std::vector<double> biases;  // [k]

    double weight(Index out, Index in, Index tap) const {
        return weights[static_cast<std::size_t>((out * in_channels + in) * kernel + tap)];
    }
    double& weight(Index out, Index in, Index tap) {
        return weights[static_cast<std::size_t>((out * in_channels + in) * kernel + tap)];
    }
};

struct ConvGradients {
    std::vector<double> d_weights;
    std::vector<double> d_biases;
    std::vector<std::vector<double>> d_input; // [i][m]
};

std::vector<std::vector<double>> conv1d_forward(const ConvLayerParams& params,
                                                const std::vector<std::vector<double>>& inputs);

ConvGradients conv1d_backward(const ConvLayerParams& params,
                              const std::vector<std::vector<double>>& inputs,
                              const std::vector<std::vector<double>>& d_output);

// Copies a Q=1 generative layer's weights into the reference layout.
ConvLayerParams conv_from_generative(const GenerativeLayerParams& params);

} // namespace sonn
