#include "sonn/conv1d.hpp"

#include <stdexcept>

#include "sonn/selfonn.hpp"

namespace sonn {

std::vector<std::vector<double>> conv1d_forward(const ConvLayerParams& params,
                                                const std::vector<std::vector<double>>& inputs) {
    if (static_cast<Index>(inputs.size()) != params.in_channels)
        throw std::invalid_argument("conv1d_forward: input channel count mismatch");
    const Index m = static_cast<Index>(inputs[0].size());
    const Index pad = (params.kernel - 1) / 2;
    std::vector<std::vector<double>> outputs(
        static_cast<std::size_t>(params.out_channels),
        std::vector<double>(static_cast<std::size_t>(m), 0.0));
    for (Index k = 0; k < params.out_channels; ++k) {
        for (Index pos = 0; pos < m; ++pos) {
            double acc = params.biases[static_cast<std::size_t>(k)];
            for (Index i = 0; i < params.in_channels; ++i) {
                const auto& y = inputs[static_cast<std::size_t>(i)];
                for (Index r = 0; r < params.kernel; ++r) {
                    const Index src = pos + r - pad;
                    if (src >= 0 && src < m)
                        acc += params.weight(k, i, r) * y[static_cast<std::size_t>(src)];
                }
            }
            outputs[static_cast<std::size_t>(k)][static_cast<std::size_t>(pos)] = acc;
        }
    }
    return outputs;
}

ConvGradients conv1d_backward(const ConvLayerParams& params,
                              const std::vector<std::vector<double>>& inputs,
                              const std::vector<std::vector<double>>& d_output) {
    if (static_cast<Index>(d_output.size()) != params.out_channels)
        throw std::invalid_argument("conv1d_backward: output channel count mismatch");
    const Index m = static_cast<Index>(inputs[0].size());
    const Index pad = (params.kernel - 1) / 2;

    ConvGradients grads;
    grads.d_weights.assign(params.weights.size(), 0.0);
    grads.d_biases.assign(params.biases.size(), 0.0);
    grads.d_input.assign(static_cast<std::size_t>(params.in_channels),
                         std::vector<double>(static_cast<std::size_t>(m), 0.0));
    for (Index k = 0; k < params.out_channels; ++k) {
        const auto& d_out = d_output[static_cast<std::size_t>(k)];
        for (Index pos = 0; pos < m; ++pos) {
            const double g = d_out[static_cast<std::size_t>(pos)];
            grads.d_biases[static_cast<std::size_t>(k)] += g;
            for (Index i = 0; i < params.in_channels; ++i) {
                for (Index r = 0; r < params.kernel; ++r) {
                    const Index src = pos + r - pad;
                    if (src < 0 || src >= m) continue;
                    grads.d_weights[static_cast<std::size_t>(
                        (k * params.in_channels + i) * params.kernel + r)] +=
                        g * inputs[static_cast<std::size_t>(i)][static_cast<std::size_t>(src)];
                    grads.d_input[static_cast<std::size_t>(i)][static_cast<std::size_t>(src)] +=
                        g * params.weight(k, i, r);
                }
            }
        }
    }
    return grads;
}

ConvLayerParams conv_from_generative(const GenerativeLayerParams& params) {
    if (params.order != 1)
        throw std::invalid_argument("conv_from_generative: layer order must be 1");
    ConvLayerParams conv;
    conv.in_channels = params.in_channels;
    conv.out_channels = params.out_channels;
    conv.kernel = params.kernel;
    conv.weights.resize(
        static_cast<std::size_t>(params.out_channels * params.in_channels * params.kernel));
    conv.biases.resize(static_cast<std::size_t>(params.out_channels));
    for (Index k = 0; k < params.out_channels; ++k) {
        conv.biases[static_cast<std::size_t>(k)] = params.biases(k);
        for (Index i = 0; i < params.in_channels; ++i)
            for (Index r = 0; r < params.kernel; ++r)
                conv.weight(k, i, r) = params.weight(k, i, r, 0);
    }
    return conv;
}

} // namespace sonn
