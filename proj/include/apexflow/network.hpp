#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "apexflow/dataset.hpp"
#include "apexflow/tvl1flow.hpp"

namespace apexflow::net {

using dataset::EmotionClass;
using flow::FlowInputPair;

/// Row-major dense buffer with an explicit shape.
struct Tensor {
    std::vector<int> shape;
    std::vector<double> values;

    Tensor() = default;
    explicit Tensor(std::vector<int> shape_, double fill = 0.0);

    std::size_t size() const noexcept { return values.size(); }
    bool operator==(const Tensor&) const = default;
};

enum class Streams : int { Both = 0, HorizontalOnly = 1, VerticalOnly = 2 };

/// Layer widths. The defaults are the published configuration; tests shrink
/// them for finite-difference checks.
struct NetworkShape {
    int input_size = 28;
    int kernel = 5;
    int conv1_channels = 6;
    int conv2_channels = 16;
    int fc1_units = 1024;
    int fc2_units = 1024;
    int classes = dataset::kNumClasses;
    Streams streams = Streams::Both;

    int tower_count() const noexcept { return streams == Streams::Both ? 2 : 1; }
    int pool1_size() const noexcept { return (input_size + 1) / 2; }
    int pool2_size() const noexcept { return (pool1_size() + 1) / 2; }
    int tower_width() const noexcept { return pool2_size() * pool2_size() * conv2_channels; }
    int concat_width() const noexcept { return tower_count() * tower_width(); }

    void validate() const;
    bool operator==(const NetworkShape&) const = default;
};

struct TowerParams {
    Tensor conv1_w;  // k x k x 1 x c1
    Tensor conv1_b;  // c1
    Tensor conv2_w;  // k x k x c1 x c2
    Tensor conv2_b;  // c2

    bool operator==(const TowerParams&) const = default;
};

/// Weights of both towers and the shared fully connected head. Gradients and
/// Adam moments use the same type.
struct NetworkParams {
    NetworkShape shape;
    std::vector<TowerParams> towers;  // u tower first when both streams are used
    Tensor fc1_w;  // concat x fc1
    Tensor fc1_b;
    Tensor fc2_w;  // fc1 x fc2
    Tensor fc2_b;
    Tensor out_w;  // fc2 x classes
    Tensor out_b;

    /// Zero-filled parameters with the given shape.
    static NetworkParams zeros(const NetworkShape& shape);

    /// Every buffer in a fixed order (tower conv layers, then head).
    std::vector<Tensor*> buffers();
    std::vector<const Tensor*> buffers() const;
    std::size_t parameter_count() const;

    bool operator==(const NetworkParams&) const = default;
};

struct TrainConfig {
    double learning_rate = 1e-4;
    int epochs = 1000;
    double dropout_keep = 0.5;
    std::uint64_t seed = 0;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_epsilon = 1e-8;
    NetworkShape architecture{};

    void validate() const;
};

struct AdamState {
    NetworkParams m;
    NetworkParams v;
    std::int64_t t = 0;

    static AdamState zeros(const NetworkShape& shape);
    bool operator==(const AdamState&) const = default;
};

/// Weights ~ N(0, 0.1^2) truncated at two standard deviations, biases 0.1.
NetworkParams init_params(std::uint64_t seed, const NetworkShape& shape = {});

// Primitive layers on single H x W x C tensors.
Tensor conv2d_same(const Tensor& input, const Tensor& weights, const Tensor& bias);
Tensor relu(const Tensor& x);
Tensor maxpool2x2(const Tensor& x);
std::array<double, dataset::kNumClasses> softmax(std::span<const double> logits);
double cross_entropy(std::span<const double> probs, EmotionClass label);

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Inverted-dropout multipliers (0 or 1/keep) for both fully connected
/// layers, one row per sample.
struct DropoutMasks {
    Matrix fc1;
    Matrix fc2;
};

DropoutMasks sample_dropout(int batch, const NetworkShape& shape, double keep, std::uint64_t seed,
                            std::uint64_t stream);

struct TowerCache {
    Matrix patches1;  // im2col of the input, (N*H*W) x (k*k)
    Matrix conv1;     // pre-activation, (N*H*W) x c1
    Matrix pool1;     // (N*H1*W1) x c1
    std::vector<int> pool1_argmax;
    Matrix patches2;
    Matrix conv2;     // pre-activation, (N*H1*W1) x c2
    Matrix pool2;     // (N*H2*W2) x c2
    std::vector<int> pool2_argmax;
};

/// Intermediates kept for the backward pass. Activation matrices have one row
/// per sample and spatial position, one column per channel.
struct ForwardCache {
    int batch = 0;
    std::vector<TowerCache> towers;
    Matrix concat;   // N x concat_width
    Matrix fc1_pre;
    Matrix fc1_out;  // after ReLU and dropout
    Matrix fc2_pre;
    Matrix fc2_out;
    Matrix logits;   // N x classes
    std::optional<DropoutMasks> masks;

    bool empty() const noexcept { return batch == 0; }
};

/// Batched forward pass. Throws DivergenceError on non-finite activations.
ForwardCache forward(const NetworkParams& params, std::span<const FlowInputPair> inputs,
                     const DropoutMasks* masks = nullptr);
ForwardCache forward(const NetworkParams& params, const FlowInputPair& input,
                     const DropoutMasks* masks = nullptr);

/// Gradient of the mean cross-entropy over the batch in `cache`.
NetworkParams backward(const NetworkParams& params, const ForwardCache& cache,
                       std::span<const EmotionClass> labels);

/// Mean cross-entropy of the cached logits.
double batch_loss(const ForwardCache& cache, std::span<const EmotionClass> labels);

/// One bias-corrected Adam update; increments state.t.
void adam_step(NetworkParams& params, const NetworkParams& grads, AdamState& state, const TrainConfig& config);

struct LabeledInput {
    FlowInputPair input;
    EmotionClass label = EmotionClass::Negative;
};

struct TrainResult {
    NetworkParams params;
    AdamState state;
    std::vector<double> loss_curve;  // mean loss per epoch, before that epoch's update
};

/// Full-batch training: one Adam step per epoch on the mean gradient.
TrainResult train(std::span<const LabeledInput> samples, const TrainConfig& config);

struct PredictionResult {
    EmotionClass label = EmotionClass::Negative;
    std::array<double, dataset::kNumClasses> probs{};
};

/// Dropout disabled; ties go to the smallest class index.
PredictionResult predict(const NetworkParams& params, const FlowInputPair& input);
std::vector<PredictionResult> predict(const NetworkParams& params, std::span<const FlowInputPair> inputs);

EmotionClass argmax_class(std::span<const double> values);

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const NetworkParams& params, const AdamState& state, const std::filesystem::path& path);
std::pair<NetworkParams, AdamState> load_checkpoint(const std::filesystem::path& path);

}  // namespace apexflow::net
