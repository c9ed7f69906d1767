#include "sonn/network.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

#include "sonn/conv1d.hpp"
#include "sonn/errors.hpp"

namespace sonn {

namespace {

std::vector<std::pair<Index, Index>> layer_shapes(const NetworkConfig& config) {
    const Index depth = config.encoder_depth();
    if (depth < 1 || static_cast<Index>(config.decoder_channels.size()) != depth)
        throw std::invalid_argument("NetworkConfig: encoder and decoder depths must match");
    std::vector<std::pair<Index, Index>> shapes;
    Index in = 1;
    for (Index s = 0; s < depth; ++s) {
        shapes.emplace_back(in, config.encoder_channels[s]);
        in = config.encoder_channels[s];
    }
    shapes.emplace_back(in, config.bottleneck_channels);
    in = config.bottleneck_channels;
    for (Index s = 0; s < depth; ++s) {
        const Index skip =
            config.skip_connections ? config.encoder_channels[depth - 1 - s] : Index{0};
        shapes.emplace_back(in + skip, config.decoder_channels[s]);
        in = config.decoder_channels[s];
    }
    shapes.emplace_back(in, config.output_channels);
    return shapes;
}

Index pool_total(const NetworkConfig& config) {
    Index total = 1;
    for (Index s = 0; s < config.encoder_depth(); ++s) total *= config.pool_factor;
    return total;
}

std::vector<Vector> maxpool(const std::vector<Vector>& channels, Index factor,
                            std::vector<std::vector<Index>>* argmax) {
    std::vector<Vector> pooled(channels.size());
    if (argmax) argmax->assign(channels.size(), {});
    for (std::size_t c = 0; c < channels.size(); ++c) {
        const Vector& x = channels[c];
        const Index out_len = x.size() / factor;
        Vector out(out_len);
        std::vector<Index> idx(static_cast<std::size_t>(out_len));
        for (Index j = 0; j < out_len; ++j) {
            Index best = j * factor;
            for (Index t = 1; t < factor; ++t)
                if (x(j * factor + t) > x(best)) best = j * factor + t; // first index wins ties
            out(j) = x(best);
            idx[static_cast<std::size_t>(j)] = best;
        }
        pooled[c] = std::move(out);
        if (argmax) (*argmax)[c] = std::move(idx);
    }
    return pooled;
}

std::vector<Vector> upsample_nearest(const std::vector<Vector>& channels, Index factor) {
    std::vector<Vector> up(channels.size());
    for (std::size_t c = 0; c < channels.size(); ++c) {
        const Vector& x = channels[c];
        Vector out(x.size() * factor);
        for (Index j = 0; j < x.size(); ++j)
            for (Index t = 0; t < factor; ++t) out(j * factor + t) = x(j);
        up[c] = std::move(out);
    }
    return up;
}

std::vector<Vector> tanh_all(const std::vector<Vector>& channels) {
    std::vector<Vector> out(channels.size());
    for (std::size_t c = 0; c < channels.size(); ++c)
        out[c] = channels[c].array().tanh();
    return out;
}

std::vector<std::vector<double>> to_std(const std::vector<Vector>& channels) {
    std::vector<std::vector<double>> out(channels.size());
    for (std::size_t c = 0; c < channels.size(); ++c)
        out[c].assign(channels[c].data(), channels[c].data() + channels[c].size());
    return out;
}

std::vector<Vector> from_std(const std::vector<std::vector<double>>& channels) {
    std::vector<Vector> out(channels.size());
    for (std::size_t c = 0; c < channels.size(); ++c)
        out[c] = Eigen::Map<const Vector>(channels[c].data(),
                                          static_cast<Index>(channels[c].size()));
    return out;
}

std::vector<Vector> layer_apply(const GenerativeLayerParams& params,
                                const std::vector<Vector>& inputs, LayerBackend backend,
                                StageCache* cache) {
    switch (backend) {
    case LayerBackend::Vectorized: {
        auto [outputs, fwd_cache] = forward_vectorized(params, inputs);
        if (cache) cache->layer = std::move(fwd_cache);
        return outputs;
    }
    case LayerBackend::Naive:
        return forward_naive(params, inputs);
    case LayerBackend::ConvReference: {
        if (cache) cache->layer_input = inputs;
        return from_std(conv1d_forward(conv_from_generative(params), to_std(inputs)));
    }
    }
    throw std::logic_error("unreachable");
}

std::vector<Vector> layer_backprop(const GenerativeLayerParams& params, const StageCache& cache,
                                   const std::vector<Vector>& d_output, LayerBackend backend,
                                   LayerGradients& out_grads) {
    if (backend == LayerBackend::ConvReference) {
        ConvGradients cg = conv1d_backward(conv_from_generative(params), to_std(cache.layer_input),
                                           to_std(d_output));
        out_grads.d_weights.resize(params.weights.rows(), params.weights.cols());
        out_grads.d_biases.resize(params.out_channels);
        for (Index k = 0; k < params.out_channels; ++k) {
            out_grads.d_biases(k) = cg.d_biases[static_cast<std::size_t>(k)];
            for (Index i = 0; i < params.in_channels; ++i)
                for (Index r = 0; r < params.kernel; ++r)
                    out_grads.d_weights(params.flat_index(i, r, 0), k) =
                        cg.d_weights[static_cast<std::size_t>(
                            (k * params.in_channels + i) * params.kernel + r)];
        }
        out_grads.d_input = from_std(cg.d_input);
        return out_grads.d_input;
    }
    out_grads = backward(params, cache.layer, d_output);
    return out_grads.d_input;
}

} // namespace

Model build_model(const NetworkConfig& config, std::uint64_t seed) {
    Model model;
    model.config = config;
    const auto shapes = layer_shapes(config);
    std::uint64_t layer_seed = seed;
    for (const auto& [in, out] : shapes)
        model.layers.push_back(
            init_params(in, out, config.kernel_width, config.q_order, layer_seed++));
    return model;
}

std::pair<Vector, ModelCaches> model_forward(const Model& model, const Vector& segment,
                                             LayerBackend backend) {
    const NetworkConfig& config = model.config;
    const Index depth = config.encoder_depth();
    if (segment.size() < 1 || segment.size() % pool_total(config) != 0)
        throw std::invalid_argument("model_forward: segment length must be a positive multiple of " +
                                    std::to_string(pool_total(config)));
    for (Index j = 0; j < segment.size(); ++j)
        if (!std::isfinite(segment(j)) || std::abs(segment(j)) > 1.0 + 1e-9)
            throw std::invalid_argument("model_forward: input not normalized to [-1, 1]");
    if (backend == LayerBackend::ConvReference && config.q_order != 1)
        throw std::invalid_argument("model_forward: conv reference backend requires Q = 1");

    ModelCaches caches;
    caches.backend = backend;
    caches.stages.resize(model.layers.size());
    const bool keep = model.training;

    std::vector<Vector> cur = {segment};
    std::vector<std::vector<Vector>> skips(static_cast<std::size_t>(depth));
    std::size_t layer_idx = 0;
    for (Index s = 0; s < depth; ++s, ++layer_idx) {
        StageCache& stage = caches.stages[layer_idx];
        auto act = tanh_all(layer_apply(model.layers[layer_idx], cur, backend,
                                        keep ? &stage : nullptr));
        skips[static_cast<std::size_t>(s)] = act;
        cur = maxpool(act, config.pool_factor, keep ? &stage.pool_argmax : nullptr);
        if (keep) stage.activated = std::move(act);
    }
    {
        StageCache& stage = caches.stages[layer_idx];
        auto act = tanh_all(layer_apply(model.layers[layer_idx], cur, backend,
                                        keep ? &stage : nullptr));
        if (keep) stage.activated = act;
        cur = std::move(act);
        ++layer_idx;
    }
    for (Index s = 0; s < depth; ++s, ++layer_idx) {
        StageCache& stage = caches.stages[layer_idx];
        auto up = upsample_nearest(cur, config.pool_factor);
        stage.concat_split = static_cast<Index>(up.size());
        if (config.skip_connections) {
            auto& skip = skips[static_cast<std::size_t>(depth - 1 - s)];
            up.insert(up.end(), skip.begin(), skip.end());
        }
        auto act = tanh_all(layer_apply(model.layers[layer_idx], up, backend,
                                        keep ? &stage : nullptr));
        if (keep) stage.activated = act;
        cur = std::move(act);
    }
    StageCache& head = caches.stages[layer_idx];
    auto out = layer_apply(model.layers[layer_idx], cur, backend, keep ? &head : nullptr);
    Vector prediction = 1.0 / (1.0 + (-out[0].array()).exp());
    if (keep) {
        head.activated = {prediction};
        caches.prediction = prediction;
        caches.valid = true;
    }
    return {std::move(prediction), std::move(caches)};
}

ModelGradients model_backward(const Model& model, const ModelCaches& caches,
                              const Vector& d_prediction) {
    if (!caches.valid || caches.stages.size() != model.layers.size())
        throw InvalidStateError("model_backward: caches missing or stale");
    if (caches.backend == LayerBackend::Naive)
        throw InvalidStateError("model_backward: naive forward keeps no caches");
    const NetworkConfig& config = model.config;
    const Index depth = config.encoder_depth();
    const LayerBackend backend = caches.backend;

    ModelGradients grads(model.layers.size());
    std::vector<std::vector<Vector>> skip_grads(static_cast<std::size_t>(depth));

    // Head: sigmoid adjoint folded in, then the layer itself.
    std::size_t layer_idx = model.layers.size() - 1;
    const Vector& p = caches.prediction;
    Vector d_pre = d_prediction.array() * p.array() * (1.0 - p.array());
    std::vector<Vector> d_cur = layer_backprop(model.layers[layer_idx], caches.stages[layer_idx],
                                               {d_pre}, backend, grads[layer_idx]);

    for (Index s = depth - 1; s >= 0; --s) {
        --layer_idx;
        const StageCache& stage = caches.stages[layer_idx];
        std::vector<Vector> d_pre_act(d_cur.size());
        for (std::size_t c = 0; c < d_cur.size(); ++c)
            d_pre_act[c] = d_cur[c].array() * (1.0 - stage.activated[c].array().square());
        auto d_concat = layer_backprop(model.layers[layer_idx], stage, d_pre_act, backend,
                                       grads[layer_idx]);
        if (config.skip_connections) {
            skip_grads[static_cast<std::size_t>(depth - 1 - s)].assign(
                d_concat.begin() + stage.concat_split, d_concat.end());
            d_concat.resize(static_cast<std::size_t>(stage.concat_split));
        }
        // Upsample adjoint: sum the replicated copies.
        d_cur.assign(d_concat.size(), {});
        for (std::size_t c = 0; c < d_concat.size(); ++c) {
            const Index out_len = d_concat[c].size() / config.pool_factor;
            Vector summed = Vector::Zero(out_len);
            for (Index j = 0; j < out_len; ++j)
                for (Index t = 0; t < config.pool_factor; ++t)
                    summed(j) += d_concat[c](j * config.pool_factor + t);
            d_cur[c] = std::move(summed);
        }
    }
    {
        --layer_idx;
        const StageCache& stage = caches.stages[layer_idx];
        std::vector<Vector> d_pre_act(d_cur.size());
        for (std::size_t c = 0; c < d_cur.size(); ++c)
            d_pre_act[c] = d_cur[c].array() * (1.0 - stage.activated[c].array().square());
        d_cur = layer_backprop(model.layers[layer_idx], stage, d_pre_act, backend,
                               grads[layer_idx]);
    }
    for (Index s = depth - 1; s >= 0; --s) {
        --layer_idx;
        const StageCache& stage = caches.stages[layer_idx];
        std::vector<Vector> d_act(d_cur.size());
        for (std::size_t c = 0; c < d_cur.size(); ++c) {
            Vector routed = Vector::Zero(stage.activated[c].size());
            for (Index j = 0; j < d_cur[c].size(); ++j)
                routed(stage.pool_argmax[c][static_cast<std::size_t>(j)]) += d_cur[c](j);
            d_act[c] = std::move(routed);
        }
        if (config.skip_connections)
            for (std::size_t c = 0; c < d_act.size(); ++c)
                d_act[c] += skip_grads[static_cast<std::size_t>(s)][c];
        std::vector<Vector> d_pre_act(d_act.size());
        for (std::size_t c = 0; c < d_act.size(); ++c)
            d_pre_act[c] = d_act[c].array() * (1.0 - stage.activated[c].array().square());
        d_cur = layer_backprop(model.layers[layer_idx], stage, d_pre_act, backend,
                               grads[layer_idx]);
    }
    return grads;
}

BceResult bce_loss(const Vector& prediction, const Vector& target) {
    if (prediction.size() != target.size())
        throw std::invalid_argument("bce_loss: prediction/target length mismatch");
    const double n = static_cast<double>(prediction.size());
    const Eigen::ArrayXd p = prediction.array().min(1.0 - 1e-7).max(1e-7);
    const Eigen::ArrayXd t = target.array();
    BceResult result;
    result.loss = -(t * p.log() + (1.0 - t) * (1.0 - p).log()).mean();
    result.d_prediction = (p - t) / (p * (1.0 - p) * n);
    return result;
}

OptimizerState make_optimizer(const Model& model, OptimizerKind kind, double lr) {
    OptimizerState state;
    state.kind = kind;
    state.lr = lr;
    for (const auto& layer : model.layers) {
        state.m_weights.push_back(Matrix::Zero(layer.weights.rows(), layer.weights.cols()));
        state.v_weights.push_back(Matrix::Zero(layer.weights.rows(), layer.weights.cols()));
        state.m_biases.push_back(Vector::Zero(layer.biases.size()));
        state.v_biases.push_back(Vector::Zero(layer.biases.size()));
    }
    return state;
}

namespace {

void adam_update(Matrix& param, const Matrix& grad, Matrix& m, Matrix& v,
                 const OptimizerState& s, double bias1, double bias2) {
    m = s.beta1 * m + (1.0 - s.beta1) * grad;
    v = s.beta2 * v + (1.0 - s.beta2) * grad.cwiseProduct(grad);
    param.array() -=
        s.lr * (m.array() / bias1) / ((v.array() / bias2).sqrt() + s.eps_hat);
}

} // namespace

void optimizer_step(OptimizerState& state, Model& model, const ModelGradients& gradients) {
    if (gradients.size() != model.layers.size() ||
        state.m_weights.size() != model.layers.size())
        throw std::invalid_argument("optimizer_step: gradient/state shape mismatch");
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        auto& layer = model.layers[l];
        const auto& g = gradients[l];
        if (g.d_weights.rows() != layer.weights.rows() ||
            g.d_weights.cols() != layer.weights.cols() ||
            g.d_biases.size() != layer.biases.size())
            throw std::invalid_argument("optimizer_step: gradient shape mismatch at layer " +
                                        std::to_string(l));
    }
    ++state.step_count;
    const double bias1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step_count));
    const double bias2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step_count));
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        auto& layer = model.layers[l];
        const auto& g = gradients[l];
        if (state.kind == OptimizerKind::Sgd) {
            layer.weights -= state.lr * g.d_weights;
            layer.biases -= state.lr * g.d_biases;
        } else {
            adam_update(layer.weights, g.d_weights, state.m_weights[l], state.v_weights[l],
                        state, bias1, bias2);
            state.m_biases[l] = state.beta1 * state.m_biases[l] + (1.0 - state.beta1) * g.d_biases;
            state.v_biases[l] = state.beta2 * state.v_biases[l] +
                                (1.0 - state.beta2) * g.d_biases.cwiseProduct(g.d_biases);
            layer.biases.array() -= state.lr * (state.m_biases[l].array() / bias1) /
                                    ((state.v_biases[l].array() / bias2).sqrt() + state.eps_hat);
        }
    }
}

namespace {

void accumulate(ModelGradients& total, const ModelGradients& part) {
    if (total.empty()) {
        total = part;
        return;
    }
    for (std::size_t l = 0; l < total.size(); ++l) {
        total[l].d_weights += part[l].d_weights;
        total[l].d_biases += part[l].d_biases;
    }
}

void scale(ModelGradients& grads, double factor) {
    for (auto& g : grads) {
        g.d_weights *= factor;
        g.d_biases *= factor;
    }
}

} // namespace

std::vector<double> train(Model& model, OptimizerState& state,
                          const std::vector<Sample>& dataset, const TrainOptions& options) {
    if (dataset.empty()) throw std::invalid_argument("train: empty dataset");
    if (options.batch_size < 1) throw std::invalid_argument("train: batch size must be >= 1");
    std::mt19937_64 rng(options.seed);
    std::vector<std::size_t> order(dataset.size());
    std::iota(order.begin(), order.end(), 0);
    std::vector<double> trace;
    model.training = true;
    for (Index epoch = 0; epoch < options.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < order.size();
             start += static_cast<std::size_t>(options.batch_size)) {
            const std::size_t stop =
                std::min(order.size(), start + static_cast<std::size_t>(options.batch_size));
            std::vector<std::size_t> batch(order.begin() + static_cast<std::ptrdiff_t>(start),
                                           order.begin() + static_cast<std::ptrdiff_t>(stop));
            std::sort(batch.begin(), batch.end()); // fixed accumulation order
            ModelGradients total;
            for (std::size_t idx : batch) {
                const Sample& sample = dataset[idx];
                auto [prediction, caches] = model_forward(model, sample.segment);
                BceResult bce = bce_loss(prediction, sample.target);
                epoch_loss += bce.loss;
                accumulate(total, model_backward(model, caches, bce.d_prediction));
            }
            scale(total, 1.0 / static_cast<double>(batch.size()));
            optimizer_step(state, model, total);
        }
        trace.push_back(epoch_loss / static_cast<double>(dataset.size()));
    }
    model.training = false;
    return trace;
}

GradcheckReport gradcheck(Model& model, const Vector& segment, const Vector& target, double h,
                          double tol, bool fault_inject_weight_grad) {
    const bool was_training = model.training;
    model.training = true;
    auto [prediction, caches] = model_forward(model, segment);
    BceResult bce = bce_loss(prediction, target);
    ModelGradients grads = model_backward(model, caches, bce.d_prediction);
    model.training = false;
    if (fault_inject_weight_grad)
        for (auto& g : grads) g.d_weights *= 1.01;

    auto loss_at = [&]() {
        auto [p, unused] = model_forward(model, segment);
        (void)unused;
        return bce_loss(p, target).loss;
    };
    GradcheckReport report;
    auto check_scalar = [&](double& param, double analytic) {
        const double saved = param;
        param = saved + h;
        const double plus = loss_at();
        param = saved - h;
        const double minus = loss_at();
        param = saved;
        const double fd = (plus - minus) / (2.0 * h);
        // The 1e-6 floor keeps central-difference roundoff on near-zero
        // gradients (|g| ~ 1e-9, fd noise ~ eps/h) from dominating.
        const double rel = std::abs(analytic - fd) /
                           std::max({std::abs(analytic), std::abs(fd), 1e-6});
        report.max_rel_err = std::max(report.max_rel_err, rel);
        ++report.parameters_checked;
    };
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        auto& layer = model.layers[l];
        for (Index col = 0; col < layer.weights.cols(); ++col)
            for (Index row = 0; row < layer.weights.rows(); ++row)
                check_scalar(layer.weights(row, col), grads[l].d_weights(row, col));
        for (Index k = 0; k < layer.biases.size(); ++k)
            check_scalar(layer.biases(k), grads[l].d_biases(k));
    }
    report.pass = report.max_rel_err <= tol;
    model.training = was_training;
    return report;
}

std::vector<LayerComplexity> model_complexity(const Model& model, Index segment_len) {
    const Index depth = model.config.encoder_depth();
    if (segment_len < 1 || segment_len % pool_total(model.config) != 0)
        throw std::invalid_argument("model_complexity: bad segment length");
    std::vector<LayerComplexity> report;
    Index len = segment_len;
    std::size_t layer_idx = 0;
    auto add = [&](const std::string& name, Index output_len) {
        const auto& layer = model.layers[layer_idx];
        report.push_back({name, layer.in_channels, layer.out_channels, layer.kernel, layer.order,
                          output_len, count_params(layer), count_macs(layer, output_len)});
        ++layer_idx;
    };
    for (Index s = 0; s < depth; ++s) {
        add("encoder" + std::to_string(s), len);
        len /= model.config.pool_factor;
    }
    add("bottleneck", len);
    for (Index s = 0; s < depth; ++s) {
        len *= model.config.pool_factor;
        add("decoder" + std::to_string(s), len);
    }
    add("head", len);
    return report;
}

Index model_param_count(const Model& model) {
    Index total = 0;
    for (const auto& layer : model.layers) total += count_params(layer);
    return total;
}

} // namespace sonn
