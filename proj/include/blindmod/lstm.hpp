#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "blindmod/rbc.hpp"

namespace blindmod::lstm {

struct NetworkDims {
    std::size_t input = 2;
    std::size_t hidden = 128;
    std::size_t layers = 2;
    std::size_t classes = 6;
};

/// Gate order inside a layer's stacked weight matrix. `Input` is the tanh
/// candidate z, `Memory` the input gate z^i.
enum class Gate : int { Input = 0, Forget = 1, Memory = 2, Output = 3 };

template <typename T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;
template <typename T>
using Vector = Eigen::Matrix<T, Eigen::Dynamic, 1>;

/// Read-only view of one LSTM layer. `weights` stacks the four gate
/// matrices [W; W^f; W^i; W^o], each hidden x (input + hidden), acting on
/// a^t = [x^t; h^{t-1}].
template <typename T>
struct LstmLayerParams {
    Eigen::Map<const Matrix<T>> weights;
    Eigen::Map<const Vector<T>> bias;
    std::size_t input_dim;
    std::size_t hidden_dim;

    auto gate(Gate g) const {
        return weights.middleRows(static_cast<Eigen::Index>(static_cast<int>(g) * hidden_dim),
                                  static_cast<Eigen::Index>(hidden_dim));
    }
    auto gate_bias(Gate g) const {
        return bias.segment(static_cast<Eigen::Index>(static_cast<int>(g) * hidden_dim),
                            static_cast<Eigen::Index>(hidden_dim));
    }
};

/// All trainable parameters in one contiguous buffer: per layer the stacked
/// weights (column-major) then the stacked bias, followed by the dense head
/// W' (classes x hidden, column-major) and its bias. The same type holds
/// gradients.
template <typename T>
class LstmNetwork {
public:
    LstmNetwork() = default;
    explicit LstmNetwork(const NetworkDims& dims);

    const NetworkDims& dims() const { return dims_; }
    std::size_t parameter_count() const { return values_.size(); }
    std::span<T> values() { return values_; }
    std::span<const T> values() const { return values_; }

    std::size_t layer_input_dim(std::size_t layer) const { return layer == 0 ? dims_.input : dims_.hidden; }

    Eigen::Map<Matrix<T>> layer_weights(std::size_t layer);
    Eigen::Map<const Matrix<T>> layer_weights(std::size_t layer) const;
    Eigen::Map<Vector<T>> layer_bias(std::size_t layer);
    Eigen::Map<const Vector<T>> layer_bias(std::size_t layer) const;
    Eigen::Map<Matrix<T>> head_weights();
    Eigen::Map<const Matrix<T>> head_weights() const;
    Eigen::Map<Vector<T>> head_bias();
    Eigen::Map<const Vector<T>> head_bias() const;

    LstmLayerParams<T> layer(std::size_t l) const {
        return {layer_weights(l), layer_bias(l), layer_input_dim(l), dims_.hidden};
    }

    void set_zero();

    template <typename U>
    LstmNetwork<U> cast() const {
        LstmNetwork<U> out(dims_);
        auto dst = out.values();
        for (std::size_t k = 0; k < values_.size(); ++k) dst[k] = static_cast<U>(values_[k]);
        return out;
    }

private:
    std::size_t layer_offset(std::size_t layer) const;
    std::size_t head_offset() const;

    NetworkDims dims_{};
    // Aligned so vectorised kernels see the same data alignment on every
    // run; otherwise reduction order (and the last bits) can vary.
    std::vector<T, Eigen::aligned_allocator<T>> values_;
};

/// Uniform in [-k, k], k = 1/sqrt(fan_in) per matrix (fan_in = input + hidden
/// for LSTM layers, hidden for the head). Biases zero except the forget
/// gate, which starts at 1.
template <typename T>
LstmNetwork<T> init_params(const NetworkDims& dims, std::uint64_t seed);

/// Single-sample recurrent state with the gate activations of the step
/// that produced it.
template <typename T>
struct LstmState {
    Vector<T> h;
    Vector<T> c;
    Vector<T> z, z_forget, z_memory, z_output;

    static LstmState zeros(std::size_t hidden);
};

template <typename T>
LstmState<T> lstm_cell_forward(const Vector<T>& x, const LstmState<T>& prev, const LstmLayerParams<T>& params);

/// Activations kept from a batched forward pass for back-propagation.
/// Column t*B + b of each per-step matrix belongs to time step t, sample b.
template <typename T>
struct ForwardCache {
    struct Layer {
        Matrix<T> gates;   // 4H x TB, post-activation [z; z^f; z^i; z^o]
        Matrix<T> c;       // H x (T+1)B, block 0 is the initial state
        Matrix<T> h;       // H x (T+1)B
        Matrix<T> tanh_c;  // H x TB
    };
    std::size_t steps = 0;
    std::size_t batch = 0;
    Matrix<T> input;       // input x TB
    std::vector<Layer> layers;
    Matrix<T> probs;       // classes x B
};

/// Packs frames (time-major interleaved I/Q) into an input x (T*B) matrix.
template <typename T>
void pack_batch(std::span<const float> frames_iq, std::size_t frame_len, std::span<const std::size_t> indices,
                Matrix<T>& out);

/// Batched forward over `input` (dims.input x steps*batch). Fills `cache`
/// and returns the class probabilities (classes x batch).
template <typename T>
const Matrix<T>& forward_batch(const LstmNetwork<T>& net, const Matrix<T>& input, std::size_t steps,
                               ForwardCache<T>& cache);

/// Exact gradient of loss_scale * sum_b -ln p_b[label_b] through all time
/// steps, accumulated (+=) into `grads`. Use loss_scale = 1/B for the mean.
template <typename T>
void backward(const LstmNetwork<T>& net, const ForwardCache<T>& cache, std::span<const std::uint16_t> labels,
              T loss_scale, LstmNetwork<T>& grads);

/// Class probabilities for one frame_len x 2 frame.
template <typename T>
std::vector<double> network_forward(const Frame& frame, const LstmNetwork<T>& net);

struct LossValue {
    double loss = 0.0;
    bool floored = false;  // probs[label] was below the 1e-30 floor
};

inline constexpr double kProbabilityFloor = 1e-30;

LossValue cross_entropy_loss(std::span<const double> probs, std::size_t label);

struct AdamConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

template <typename T>
struct AdamState {
    std::vector<T> m;
    std::vector<T> v;
    std::uint64_t step = 0;
};

/// One bias-corrected Adam update. Throws on a non-finite gradient.
template <typename T>
void adam_step(std::span<T> params, std::span<const T> grads, AdamState<T>& state, const AdamConfig& config);

/// Frames packed as float (time-major interleaved I/Q) with labels.
struct LabeledSet {
    std::size_t frame_len = 0;
    std::vector<float> iq;
    std::vector<std::uint16_t> labels;

    std::size_t size() const { return labels.size(); }
    std::span<const float> frame(std::size_t k) const {
        return std::span<const float>(iq).subspan(k * frame_len * 2, frame_len * 2);
    }
    static LabeledSet from_frames(const std::vector<Frame>& frames, const std::vector<std::uint16_t>& labels);
    LabeledSet subset(std::span<const std::size_t> indices) const;
};

struct TrainConfig {
    std::size_t batch_size = 400;
    double learning_rate = 1e-3;
    std::size_t epochs = 250;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_epsilon = 1e-8;
    std::uint64_t seed = 1;
    /// Samples per gradient shard. Shards run in parallel and are summed in
    /// shard order, so results do not depend on the thread count.
    std::size_t shard_size = 100;
    /// Stop once this many epochs pass without a validation improvement (0 = never).
    std::size_t patience = 0;
    /// Stop as soon as validation accuracy reaches this value (0 = never).
    double target_accuracy = 0.0;
    /// Return the parameters of the epoch with the best validation accuracy.
    bool keep_best = true;
    /// Global gradient-norm clip (0 = off).
    double clip_norm = 0.0;

    void validate() const;
};

struct EpochRecord {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double train_accuracy = 0.0;
    double val_loss = 0.0;
    double val_accuracy = 0.0;
};

struct TrainResult {
    LstmNetwork<float> net;
    std::vector<EpochRecord> history;
    std::size_t best_epoch = 0;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Shuffled mini-batch Adam training. `validation` may be empty.
TrainResult train(const LabeledSet& training, const LabeledSet& validation, const NetworkDims& dims,
                  const TrainConfig& config, const EpochCallback& on_epoch = {});

/// Continues training an existing network (used by train()).
TrainResult train_from(LstmNetwork<float> net, const LabeledSet& training, const LabeledSet& validation,
                       const TrainConfig& config, const EpochCallback& on_epoch = {});

struct Evaluation {
    double accuracy = 0.0;
    double mean_loss = 0.0;
    std::vector<std::vector<std::uint64_t>> confusion;  // [true][predicted]

    std::vector<double> per_class_accuracy() const;
};

template <typename T>
Evaluation evaluate(const LstmNetwork<T>& net, const LabeledSet& data);

/// Per-frame class probabilities (classes x N, one column per frame).
template <typename T>
Matrix<double> predict(const LstmNetwork<T>& net, const LabeledSet& data);

/// Binary checkpoint: "LSTM", u32 version, u32 input/hidden/layers/classes,
/// then f32 parameters in declaration order (see docs/formats.md).
void save_checkpoint(const std::filesystem::path& path, const LstmNetwork<float>& net);
LstmNetwork<float> load_checkpoint(const std::filesystem::path& path);

inline constexpr std::uint32_t kCheckpointVersion = 1;

}  // namespace blindmod::lstm
