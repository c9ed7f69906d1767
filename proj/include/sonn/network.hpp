#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "sonn/selfonn.hpp"

namespace sonn {

struct NetworkConfig {
    Index q_order = 3;
    Index kernel_width = 5;
    std::vector<Index> encoder_channels = {8, 16};
    Index bottleneck_channels = 32;
    std::vector<Index> decoder_channels = {16, 8};
    Index output_channels = 1;
    Index pool_factor = 2;
    bool skip_connections = true;

    Index encoder_depth() const { return static_cast<Index>(encoder_channels.size()); }
};

// Encoder stages (layer -> tanh -> maxpool), bottleneck (layer -> tanh),
// decoder stages (upsample -> concat skip -> layer -> tanh), head
// (layer -> sigmoid). Layers are stored in that order.
struct Model {
    NetworkConfig config;
    std::vector<GenerativeLayerParams> layers;
    bool training = false;
};

// Which layer math runs under the shared graph plumbing. Naive and
// ConvReference exist for cross-checks; ConvReference requires Q = 1.
enum class LayerBackend { Vectorized, Naive, ConvReference };

struct StageCache {
    ForwardCache layer;
    std::vector<Vector> layer_input; // kept for the conv-reference backward
    std::vector<Vector> activated;
    std::vector<std::vector<Index>> pool_argmax;
    Index concat_split = 0; // channels that came from the upsample side
};

struct ModelCaches {
    std::vector<StageCache> stages;
    Vector prediction;
    bool valid = false;
    LayerBackend backend = LayerBackend::Vectorized;
};

using ModelGradients = std::vector<LayerGradients>;

Model build_model(const NetworkConfig& config, std::uint64_t seed);

std::pair<Vector, ModelCaches> model_forward(const Model& model, const Vector& segment,
                                             LayerBackend backend = LayerBackend::Vectorized);

ModelGradients model_backward(const Model& model, const ModelCaches& caches,
                              const Vector& d_prediction);

struct BceResult {
    double loss = 0.0;
    Vector d_prediction;
};

BceResult bce_loss(const Vector& prediction, const Vector& target);

enum class OptimizerKind { Sgd, Adam };

struct OptimizerState {
    OptimizerKind kind = OptimizerKind::Adam;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps_hat = 1e-8;
    std::uint64_t step_count = 0;
    std::vector<Matrix> m_weights, v_weights;
    std::vector<Vector> m_biases, v_biases;
};

OptimizerState make_optimizer(const Model& model, OptimizerKind kind, double lr);
void optimizer_step(OptimizerState& state, Model& model, const ModelGradients& gradients);

struct Sample {
    Vector segment; // normalized to [-1, 1]
    Vector target;  // {0, 1} pulse train
};

struct TrainOptions {
    Index epochs = 50;
    Index batch_size = 4;
    std::uint64_t seed = 0;
};

// Per-epoch shuffle; gradients accumulated within each batch in
// ascending dataset-index order, averaged, then one optimizer step.
// Returns the mean per-segment BCE per epoch.
std::vector<double> train(Model& model, OptimizerState& state,
                          const std::vector<Sample>& dataset, const TrainOptions& options);

struct GradcheckReport {
    double max_rel_err = 0.0;
    bool pass = false;
    Index parameters_checked = 0;
};

// Central-difference check of every parameter gradient of the BCE loss.
// fault_inject_weight_grad scales the analytic weight gradients by 1.01
// so the harness can prove it actually detects wrong gradients.
GradcheckReport gradcheck(Model& model, const Vector& segment, const Vector& target,
                          double h = 1e-5, double tol = 1e-4,
                          bool fault_inject_weight_grad = false);

// Per-layer shape/cost report for the complexity command.
struct LayerComplexity {
    std::string name;
    Index in_channels = 0;
    Index out_channels = 0;
    Index kernel = 0;
    Index order = 0;
    Index output_len = 0;
    Index params = 0;
    std::uint64_t macs = 0;
};

std::vector<LayerComplexity> model_complexity(const Model& model, Index segment_len);
Index model_param_count(const Model& model);

} // namespace sonn
