#include "sonn/selfonn.hpp"

#include <random>
#include <stdexcept>
#include <string>

namespace sonn {

namespace {

Index checked_input_len(const GenerativeLayerParams& params,
                        const std::vector<Vector>& inputs) {
    if (static_cast<Index>(inputs.size()) != params.in_channels)
        throw std::invalid_argument("layer forward: expected " +
                                    std::to_string(params.in_channels) + " input channels, got " +
                                    std::to_string(inputs.size()));
    const Index m = inputs[0].size();
    for (const auto& in : inputs)
        if (in.size() != m)
            throw std::invalid_argument("layer forward: input channels differ in length");
    return m;
}

} // namespace

std::vector<Vector> forward_naive(const GenerativeLayerParams& params,
                                  const std::vector<Vector>& inputs,
                                  std::uint64_t* mul_count) {
    const Index m = checked_input_len(params, inputs);
    const Index pad = params.pad();
    std::vector<Vector> outputs(params.out_channels);
    for (Index k = 0; k < params.out_channels; ++k) {
        Vector out = Vector::Constant(m, params.biases(k));
        for (Index i = 0; i < params.in_channels; ++i) {
            const Vector& y = inputs[i];
            for (Index pos = 0; pos < m; ++pos) {
                double acc = 0.0;
                for (Index r = 0; r < params.kernel; ++r) {
                    const Index src = pos + r - pad;
                    const double padded = (src >= 0 && src < m) ? y(src) : 0.0;
                    double power = 1.0;
                    for (Index q = 0; q < params.order; ++q) {
                        power *= padded;
                        acc += params.weight(k, i, r, q) * power;
                        if (mul_count) ++(*mul_count);
                    }
                }
                out(pos) += acc;
            }
        }
        outputs[k] = std::move(out);
    }
    return outputs;
}

std::vector<Vector> forward_qconv(const GenerativeLayerParams& params,
                                  const std::vector<Vector>& inputs) {
    const Index m = checked_input_len(params, inputs);
    const Index pad = params.pad();
    std::vector<Vector> outputs(params.out_channels);
    for (Index k = 0; k < params.out_channels; ++k)
        outputs[k] = Vector::Constant(m, params.biases(k));
    for (Index i = 0; i < params.in_channels; ++i) {
        Vector powered = Vector::Ones(m);
        for (Index q = 0; q < params.order; ++q) {
            powered = powered.cwiseProduct(inputs[i]);
            const Matrix windows = im2row(powered, params.kernel, pad);
            for (Index k = 0; k < params.out_channels; ++k) {
                Vector taps(params.kernel);
                for (Index r = 0; r < params.kernel; ++r) taps(r) = params.weight(k, i, r, q);
                outputs[k] += row_dot(windows, taps);
            }
        }
    }
    return outputs;
}

std::pair<std::vector<Vector>, ForwardCache>
forward_vectorized(const GenerativeLayerParams& params, const std::vector<Vector>& inputs) {
    const Index m = checked_input_len(params, inputs);
    const Index block = params.block_size();

    ForwardCache cache;
    cache.input = inputs;
    cache.yq.resize(m, params.in_channels * block);
    for (Index i = 0; i < params.in_channels; ++i)
        cache.yq.middleCols(i * block, block) =
            hadamard_power_concat(im2row(inputs[i], params.kernel, params.pad()), params.order);

    cache.pre_activation = cache.yq * params.weights;
    cache.pre_activation.rowwise() += params.biases.transpose();
    cache.valid = true;

    std::vector<Vector> outputs(params.out_channels);
    for (Index k = 0; k < params.out_channels; ++k)
        outputs[k] = cache.pre_activation.col(k);
    return {std::move(outputs), std::move(cache)};
}

LayerGradients backward(const GenerativeLayerParams& params, const ForwardCache& cache,
                        const std::vector<Vector>& d_output) {
    if (!cache.valid || cache.yq.cols() != params.in_channels * params.block_size())
        throw InvalidStateError("layer backward: cache does not match parameters");
    if (static_cast<Index>(d_output.size()) != params.out_channels)
        throw std::invalid_argument("layer backward: wrong output-channel count");
    const Index m = cache.yq.rows();
    Matrix d_out(m, params.out_channels);
    for (Index k = 0; k < params.out_channels; ++k) {
        if (d_output[k].size() != m)
            throw std::invalid_argument("layer backward: d_output length mismatch");
        d_out.col(k) = d_output[k];
    }

    const Index block = params.block_size();
    const Index kernel = params.kernel;

    LayerGradients grads;
    grads.d_weights = cache.yq.transpose() * d_out;
    grads.d_biases = d_out.colwise().sum();
    grads.d_input.resize(params.in_channels);
    for (Index i = 0; i < params.in_channels; ++i) {
        const Matrix g = d_out * params.weights.middleRows(i * block, block).transpose();
        const auto base = cache.yq.middleCols(i * block, kernel); // power-1 block
        // dY = sum_q (q+1) * Y^q ⊗ g-block(q); powers rebuilt from the base.
        Matrix d_y = g.leftCols(kernel);
        Matrix power = Matrix::Ones(m, kernel);
        for (Index q = 1; q < params.order; ++q) {
            power = power.cwiseProduct(base);
            d_y += static_cast<double>(q + 1) *
                   power.cwiseProduct(g.middleCols(q * kernel, kernel));
        }
        grads.d_input[i] = im2row_transpose_scatter(d_y, kernel, params.pad());
    }
    return grads;
}

GenerativeLayerParams init_params(Index in_channels, Index out_channels, Index kernel,
                                  Index order, std::uint64_t seed) {
    if (in_channels < 1 || out_channels < 1 || kernel < 1 || order < 1)
        throw std::invalid_argument("init_params: all shape arguments must be >= 1");
    if (kernel % 2 == 0)
        throw std::invalid_argument("init_params: kernel width must be odd");

    GenerativeLayerParams params;
    params.in_channels = in_channels;
    params.out_channels = out_channels;
    params.kernel = kernel;
    params.order = order;
    params.weights.resize(in_channels * kernel * order, out_channels);
    params.biases = Vector::Zero(out_channels);

    const double bound =
        std::sqrt(6.0 / static_cast<double>(in_channels * kernel + out_channels * kernel));
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uniform(-bound, bound);
    double factorial = 1.0;
    // Draw in [k][i][r][q] order so the stream is stable; damp power q+1 by 1/(q+1)!.
    std::vector<double> damp(static_cast<std::size_t>(order));
    for (Index q = 0; q < order; ++q) {
        factorial *= static_cast<double>(q + 1);
        damp[static_cast<std::size_t>(q)] = 1.0 / factorial;
    }
    for (Index k = 0; k < out_channels; ++k)
        for (Index i = 0; i < in_channels; ++i)
            for (Index r = 0; r < kernel; ++r)
                for (Index q = 0; q < order; ++q)
                    params.weight(k, i, r, q) = uniform(rng) * damp[static_cast<std::size_t>(q)];
    return params;
}

Index count_params(const GenerativeLayerParams& params) {
    return params.out_channels * (params.in_channels * params.kernel * params.order + 1);
}

std::uint64_t count_macs(const GenerativeLayerParams& params, Index output_len) {
    if (output_len < 1)
        throw std::invalid_argument("count_macs: output length must be >= 1");
    return static_cast<std::uint64_t>(params.out_channels) *
           static_cast<std::uint64_t>(params.in_channels) *
           static_cast<std::uint64_t>(output_len) * static_cast<std::uint64_t>(params.kernel) *
           static_cast<std::uint64_t>(params.order);
}

} // namespace sonn
