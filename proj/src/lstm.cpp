#include "blindmod/lstm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "binary_io.hpp"
#include "blindmod/error.hpp"
#include "blindmod/parallel.hpp"

namespace blindmod::lstm {

namespace {

using Eigen::Index;

Index idx(std::size_t v) { return static_cast<Index>(v); }

template <typename Derived>
auto sigmoid(const Eigen::ArrayBase<Derived>& x) {
    using S = typename Derived::Scalar;
    return (x * S(0.5)).tanh() * S(0.5) + S(0.5);
}

std::size_t layer_size(std::size_t in, std::size_t hidden) { return 4 * hidden * (in + hidden) + 4 * hidden; }

void check_dims(const NetworkDims& d) {
    if (d.input == 0 || d.hidden == 0 || d.layers == 0 || d.classes == 0)
        throw ParameterError("LstmNetwork: every dimension must be positive");
}

}  // namespace

// ---------------------------------------------------------------------------
// Parameter storage

template <typename T>
LstmNetwork<T>::LstmNetwork(const NetworkDims& dims) : dims_(dims) {
    check_dims(dims);
    values_.assign(head_offset() + dims.classes * dims.hidden + dims.classes, T(0));
}

template <typename T>
std::size_t LstmNetwork<T>::layer_offset(std::size_t layer) const {
    std::size_t off = 0;
    for (std::size_t l = 0; l < layer; ++l) off += layer_size(layer_input_dim(l), dims_.hidden);
    return off;
}

template <typename T>
std::size_t LstmNetwork<T>::head_offset() const {
    return layer_offset(dims_.layers);
}

template <typename T>
Eigen::Map<Matrix<T>> LstmNetwork<T>::layer_weights(std::size_t layer) {
    return {values_.data() + layer_offset(layer), idx(4 * dims_.hidden), idx(layer_input_dim(layer) + dims_.hidden)};
}

template <typename T>
Eigen::Map<const Matrix<T>> LstmNetwork<T>::layer_weights(std::size_t layer) const {
    return {values_.data() + layer_offset(layer), idx(4 * dims_.hidden), idx(layer_input_dim(layer) + dims_.hidden)};
}

template <typename T>
Eigen::Map<Vector<T>> LstmNetwork<T>::layer_bias(std::size_t layer) {
    const auto w = 4 * dims_.hidden * (layer_input_dim(layer) + dims_.hidden);
    return {values_.data() + layer_offset(layer) + w, idx(4 * dims_.hidden)};
}

template <typename T>
Eigen::Map<const Vector<T>> LstmNetwork<T>::layer_bias(std::size_t layer) const {
    const auto w = 4 * dims_.hidden * (layer_input_dim(layer) + dims_.hidden);
    return {values_.data() + layer_offset(layer) + w, idx(4 * dims_.hidden)};
}

template <typename T>
Eigen::Map<Matrix<T>> LstmNetwork<T>::head_weights() {
    return {values_.data() + head_offset(), idx(dims_.classes), idx(dims_.hidden)};
}

template <typename T>
Eigen::Map<const Matrix<T>> LstmNetwork<T>::head_weights() const {
    return {values_.data() + head_offset(), idx(dims_.classes), idx(dims_.hidden)};
}

template <typename T>
Eigen::Map<Vector<T>> LstmNetwork<T>::head_bias() {
    return {values_.data() + head_offset() + dims_.classes * dims_.hidden, idx(dims_.classes)};
}

template <typename T>
Eigen::Map<const Vector<T>> LstmNetwork<T>::head_bias() const {
    return {values_.data() + head_offset() + dims_.classes * dims_.hidden, idx(dims_.classes)};
}

template <typename T>
void LstmNetwork<T>::set_zero() {
    std::fill(values_.begin(), values_.end(), T(0));
}

template <typename T>
LstmNetwork<T> init_params(const NetworkDims& dims, std::uint64_t seed) {
    LstmNetwork<T> net(dims);
    std::mt19937_64 rng(seed);
    auto fill = [&rng](auto&& m, double k) {
        std::uniform_real_distribution<double> dist(-k, k);
        for (Index c = 0; c < m.cols(); ++c)
            for (Index r = 0; r < m.rows(); ++r) m(r, c) = static_cast<T>(dist(rng));
    };
    const auto h = dims.hidden;
    for (std::size_t l = 0; l < dims.layers; ++l) {
        auto w = net.layer_weights(l);
        const double k = 1.0 / std::sqrt(static_cast<double>(net.layer_input_dim(l) + h));
        for (int g = 0; g < 4; ++g) fill(w.middleRows(idx(g * h), idx(h)), k);
        auto b = net.layer_bias(l);
        b.setZero();
        b.segment(idx(static_cast<int>(Gate::Forget) * h), idx(h)).setConstant(T(1));
    }
    fill(net.head_weights(), 1.0 / std::sqrt(static_cast<double>(h)));
    net.head_bias().setZero();
    return net;
}

// ---------------------------------------------------------------------------
// Single-step cell

template <typename T>
LstmState<T> LstmState<T>::zeros(std::size_t hidden) {
    LstmState s;
    s.h = Vector<T>::Zero(idx(hidden));
    s.c = Vector<T>::Zero(idx(hidden));
    s.z = s.z_forget = s.z_memory = s.z_output = Vector<T>::Zero(idx(hidden));
    return s;
}

template <typename T>
LstmState<T> lstm_cell_forward(const Vector<T>& x, const LstmState<T>& prev, const LstmLayerParams<T>& params) {
    const auto in = idx(params.input_dim);
    const auto h = idx(params.hidden_dim);
    if (x.size() != in)
        throw ParameterError("lstm_cell_forward: input has " + std::to_string(x.size()) + " entries, weights expect " +
                             std::to_string(in));
    if (prev.h.size() != h || prev.c.size() != h)
        throw ParameterError("lstm_cell_forward: state size does not match hidden dimension");
    if (params.weights.rows() != 4 * h || params.weights.cols() != in + h)
        throw ParameterError("lstm_cell_forward: stacked gate matrix W has the wrong shape");

    Vector<T> a(in + h);
    a << x, prev.h;
    auto pre = [&](Gate g) -> Vector<T> { return params.gate(g) * a + params.gate_bias(g); };

    LstmState<T> next;
    next.z = pre(Gate::Input).array().tanh();
    next.z_forget = sigmoid(pre(Gate::Forget).array());
    next.z_memory = sigmoid(pre(Gate::Memory).array());
    next.z_output = sigmoid(pre(Gate::Output).array());
    next.c = next.z_forget.cwiseProduct(prev.c) + next.z_memory.cwiseProduct(next.z);
    next.h = next.z_output.cwiseProduct(Vector<T>(next.c.array().tanh()));
    return next;
}

// ---------------------------------------------------------------------------
// Batched forward / backward

template <typename T>
void pack_batch(std::span<const float> frames_iq, std::size_t frame_len, std::span<const std::size_t> indices,
                Matrix<T>& out) {
    const auto batch = indices.size();
    out.resize(2, idx(frame_len * batch));
    for (std::size_t b = 0; b < batch; ++b) {
        const float* src = frames_iq.data() + indices[b] * frame_len * 2;
        for (std::size_t t = 0; t < frame_len; ++t) {
            out(0, idx(t * batch + b)) = static_cast<T>(src[2 * t]);
            out(1, idx(t * batch + b)) = static_cast<T>(src[2 * t + 1]);
        }
    }
}

template <typename T>
const Matrix<T>& forward_batch(const LstmNetwork<T>& net, const Matrix<T>& input, std::size_t steps,
                               ForwardCache<T>& cache) {
    const auto& d = net.dims();
    if (steps == 0 || input.cols() % idx(steps) != 0 || input.cols() == 0)
        throw ParameterError("forward_batch: input columns must be a positive multiple of the step count");
    if (input.rows() != idx(d.input))
        throw ParameterError("forward_batch: input has " + std::to_string(input.rows()) + " features, network expects " +
                             std::to_string(d.input));
    const Index batch = input.cols() / idx(steps);
    const Index tb = input.cols();
    const Index h = idx(d.hidden);

    cache.steps = steps;
    cache.batch = static_cast<std::size_t>(batch);
    cache.input = input;
    cache.layers.resize(d.layers);

    for (std::size_t l = 0; l < d.layers; ++l) {
        auto& lc = cache.layers[l];
        const auto w = net.layer_weights(l);
        const Index in = idx(net.layer_input_dim(l));
        lc.gates.resize(4 * h, tb);
        lc.c.resize(h, tb + batch);
        lc.h.resize(h, tb + batch);
        lc.tanh_c.resize(h, tb);

        if (l == 0)
            lc.gates.noalias() = w.leftCols(in) * cache.input;
        else
            lc.gates.noalias() = w.leftCols(in) * cache.layers[l - 1].h.rightCols(tb);
        lc.gates.colwise() += net.layer_bias(l);
        lc.c.leftCols(batch).setZero();
        lc.h.leftCols(batch).setZero();

        const auto w_rec = w.rightCols(h);
        for (std::size_t t = 0; t < steps; ++t) {
            const Index col = idx(t) * batch;
            auto g = lc.gates.middleCols(col, batch);
            g.noalias() += w_rec * lc.h.middleCols(col, batch);
            g.topRows(h) = g.topRows(h).array().tanh();
            g.bottomRows(3 * h) = sigmoid(g.bottomRows(3 * h).array());

            lc.c.middleCols(col + batch, batch) =
                g.middleRows(h, h).array() * lc.c.middleCols(col, batch).array() +
                g.middleRows(2 * h, h).array() * g.topRows(h).array();
            lc.tanh_c.middleCols(col, batch) = lc.c.middleCols(col + batch, batch).array().tanh();
            lc.h.middleCols(col + batch, batch) =
                g.bottomRows(h).array() * lc.tanh_c.middleCols(col, batch).array();
        }
    }

    const auto& top = cache.layers.back();
    Matrix<T> logits = net.head_weights() * top.h.rightCols(batch);
    logits.colwise() += net.head_bias();
    cache.probs.resize(logits.rows(), batch);
    for (Index b = 0; b < batch; ++b) {
        auto col = logits.col(b).array();
        const T peak = col.maxCoeff();
        auto e = (col - peak).exp();
        cache.probs.col(b) = e / e.sum();
    }
    return cache.probs;
}

template <typename T>
void backward(const LstmNetwork<T>& net, const ForwardCache<T>& cache, std::span<const std::uint16_t> labels,
              T loss_scale, LstmNetwork<T>& grads) {
    const auto& d = net.dims();
    if (cache.steps == 0 || cache.layers.size() != d.layers)
        throw ParameterError("backward: no forward cache for this network (run forward_batch first)");
    if (labels.size() != cache.batch) throw ParameterError("backward: label count does not match the cached batch");
    if (grads.parameter_count() != net.parameter_count())
        throw ParameterError("backward: gradient buffer has a different layout");

    const Index batch = idx(cache.batch);
    const Index tb = idx(cache.steps) * batch;
    const Index h = idx(d.hidden);

    Matrix<T> dlogits = cache.probs;
    for (Index b = 0; b < batch; ++b) {
        const auto label = labels[static_cast<std::size_t>(b)];
        if (label >= d.classes) throw ParameterError("backward: label out of range");
        dlogits(label, b) -= T(1);
    }
    dlogits *= loss_scale;

    const auto& top = cache.layers.back();
    grads.head_weights().noalias() += dlogits * top.h.rightCols(batch).transpose();
    grads.head_bias() += dlogits.rowwise().sum();

    // Gradient with respect to each layer's outputs h_1..h_T.
    Matrix<T> d_out = Matrix<T>::Zero(h, tb);
    d_out.rightCols(batch).noalias() = net.head_weights().transpose() * dlogits;

    Matrix<T> d_gates(4 * h, tb);
    Matrix<T> dh_next(h, batch);
    Matrix<T> dc_next(h, batch);
    Matrix<T> dh(h, batch);
    Matrix<T> dc(h, batch);

    for (std::size_t l = d.layers; l-- > 0;) {
        const auto& lc = cache.layers[l];
        const auto w = net.layer_weights(l);
        const Index in = idx(net.layer_input_dim(l));
        const auto w_rec = w.rightCols(h);
        dh_next.setZero();
        dc_next.setZero();

        for (std::size_t t = cache.steps; t-- > 0;) {
            const Index col = idx(t) * batch;
            const auto g = lc.gates.middleCols(col, batch);
            const auto z = g.topRows(h).array();
            const auto zf = g.middleRows(h, h).array();
            const auto zi = g.middleRows(2 * h, h).array();
            const auto zo = g.bottomRows(h).array();
            const auto tc = lc.tanh_c.middleCols(col, batch).array();
            const auto c_prev = lc.c.middleCols(col, batch).array();

            dh = d_out.middleCols(col, batch) + dh_next;
            dc.array() = dc_next.array() + dh.array() * zo * (T(1) - tc.square());

            auto dg = d_gates.middleCols(col, batch);
            dg.topRows(h).array() = dc.array() * zi * (T(1) - z.square());
            dg.middleRows(h, h).array() = dc.array() * c_prev * zf * (T(1) - zf);
            dg.middleRows(2 * h, h).array() = dc.array() * z * zi * (T(1) - zi);
            dg.bottomRows(h).array() = dh.array() * tc * zo * (T(1) - zo);

            dc_next.array() = dc.array() * zf;
            dh_next.noalias() = w_rec.transpose() * dg;
        }

        auto gw = grads.layer_weights(l);
        if (l == 0)
            gw.leftCols(in).noalias() += d_gates * cache.input.transpose();
        else
            gw.leftCols(in).noalias() += d_gates * cache.layers[l - 1].h.rightCols(tb).transpose();
        gw.rightCols(h).noalias() += d_gates * lc.h.leftCols(tb).transpose();
        grads.layer_bias(l) += d_gates.rowwise().sum();

        if (l > 0) d_out.noalias() = w.leftCols(in).transpose() * d_gates;
    }
}

template <typename T>
std::vector<double> network_forward(const Frame& frame, const LstmNetwork<T>& net) {
    if (net.dims().input != 2) throw ParameterError("network_forward: network input size must be 2 (I, Q)");
    if (frame.length() == 0 || frame.iq.size() % 2 != 0) throw ParameterError("network_forward: malformed frame");
    Matrix<T> input(2, idx(frame.length()));
    for (std::size_t t = 0; t < frame.length(); ++t) {
        input(0, idx(t)) = static_cast<T>(frame.i(t));
        input(1, idx(t)) = static_cast<T>(frame.q(t));
    }
    ForwardCache<T> cache;
    const auto& probs = forward_batch(net, input, frame.length(), cache);
    std::vector<double> out(static_cast<std::size_t>(probs.rows()));
    for (Index k = 0; k < probs.rows(); ++k) out[static_cast<std::size_t>(k)] = static_cast<double>(probs(k, 0));
    return out;
}

LossValue cross_entropy_loss(std::span<const double> probs, std::size_t label) {
    if (label >= probs.size()) throw ParameterError("cross_entropy_loss: label out of range");
    const double p = probs[label];
    if (p < kProbabilityFloor) return {-std::log(kProbabilityFloor), true};
    return {-std::log(p), false};
}

// ---------------------------------------------------------------------------
// Optimiser

template <typename T>
void adam_step(std::span<T> params, std::span<const T> grads, AdamState<T>& state, const AdamConfig& config) {
    if (params.size() != grads.size()) throw ParameterError("adam_step: parameter and gradient sizes differ");
    if (state.m.empty()) {
        state.m.assign(params.size(), T(0));
        state.v.assign(params.size(), T(0));
    }
    if (state.m.size() != params.size()) throw ParameterError("adam_step: optimiser state has the wrong size");
    for (std::size_t k = 0; k < grads.size(); ++k) {
        if (!std::isfinite(static_cast<double>(grads[k]))) {
            std::ostringstream msg;
            msg << "adam_step: non-finite gradient at parameter " << k << " (step " << state.step + 1 << ")";
            throw Error(msg.str());
        }
    }
    ++state.step;
    const auto step = static_cast<double>(state.step);
    const T b1 = static_cast<T>(config.beta1);
    const T b2 = static_cast<T>(config.beta2);
    const T corr1 = static_cast<T>(1.0 - std::pow(config.beta1, step));
    const T corr2 = static_cast<T>(1.0 - std::pow(config.beta2, step));
    const T lr = static_cast<T>(config.learning_rate);
    const T eps = static_cast<T>(config.epsilon);
    for (std::size_t k = 0; k < params.size(); ++k) {
        const T g = grads[k];
        state.m[k] = b1 * state.m[k] + (T(1) - b1) * g;
        state.v[k] = b2 * state.v[k] + (T(1) - b2) * g * g;
        params[k] -= lr * (state.m[k] / corr1) / (std::sqrt(state.v[k] / corr2) + eps);
    }
}

// ---------------------------------------------------------------------------
// Data, training, evaluation

LabeledSet LabeledSet::from_frames(const std::vector<Frame>& frames, const std::vector<std::uint16_t>& labels) {
    if (frames.size() != labels.size()) throw ParameterError("LabeledSet: frame and label counts differ");
    LabeledSet set;
    set.frame_len = frames.empty() ? 0 : frames.front().length();
    set.iq.reserve(frames.size() * set.frame_len * 2);
    for (const auto& f : frames) {
        if (f.length() != set.frame_len) throw ParameterError("LabeledSet: frames differ in length");
        for (double v : f.iq) set.iq.push_back(static_cast<float>(v));
    }
    set.labels = labels;
    return set;
}

LabeledSet LabeledSet::subset(std::span<const std::size_t> indices) const {
    LabeledSet out;
    out.frame_len = frame_len;
    out.iq.reserve(indices.size() * frame_len * 2);
    out.labels.reserve(indices.size());
    for (auto k : indices) {
        if (k >= size()) throw ParameterError("LabeledSet::subset: index out of range");
        const auto f = frame(k);
        out.iq.insert(out.iq.end(), f.begin(), f.end());
        out.labels.push_back(labels[k]);
    }
    return out;
}

void TrainConfig::validate() const {
    if (batch_size < 1) throw ParameterError("TrainConfig: batch size must be >= 1");
    if (!(learning_rate > 0.0)) throw ParameterError("TrainConfig: learning rate must be positive");
    if (shard_size < 1) throw ParameterError("TrainConfig: shard size must be >= 1");
    if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0))
        throw ParameterError("TrainConfig: Adam betas must lie in [0, 1)");
    if (!(adam_epsilon > 0.0)) throw ParameterError("TrainConfig: Adam epsilon must be positive");
}

std::vector<double> Evaluation::per_class_accuracy() const {
    std::vector<double> out(confusion.size(), 0.0);
    for (std::size_t k = 0; k < confusion.size(); ++k) {
        const auto total = std::accumulate(confusion[k].begin(), confusion[k].end(), std::uint64_t{0});
        out[k] = total ? static_cast<double>(confusion[k][k]) / static_cast<double>(total) : 0.0;
    }
    return out;
}

namespace {

constexpr std::size_t kEvalChunk = 200;

template <typename T>
void check_set(const LstmNetwork<T>& net, const LabeledSet& data, const char* who) {
    if (data.size() == 0) throw ParameterError(std::string(who) + ": empty dataset");
    if (data.iq.size() != data.size() * data.frame_len * 2)
        throw ParameterError(std::string(who) + ": frame storage does not match labels");
    for (auto label : data.labels)
        if (label >= net.dims().classes)
            throw ParameterError(std::string(who) + ": label " + std::to_string(label) + " exceeds class count");
}

}  // namespace

template <typename T>
Matrix<double> predict(const LstmNetwork<T>& net, const LabeledSet& data) {
    if (data.size() == 0) throw ParameterError("predict: empty dataset");
    const std::size_t chunks = (data.size() + kEvalChunk - 1) / kEvalChunk;
    Matrix<double> out(idx(net.dims().classes), idx(data.size()));
    parallel_for(chunks, [&](std::size_t c) {
        const auto begin = c * kEvalChunk;
        const auto end = std::min(data.size(), begin + kEvalChunk);
        std::vector<std::size_t> indices(end - begin);
        std::iota(indices.begin(), indices.end(), begin);
        Matrix<T> input;
        pack_batch<T>(data.iq, data.frame_len, indices, input);
        ForwardCache<T> cache;
        const auto& probs = forward_batch(net, input, data.frame_len, cache);
        out.middleCols(idx(begin), idx(end - begin)) = probs.template cast<double>();
    });
    return out;
}

template <typename T>
Evaluation evaluate(const LstmNetwork<T>& net, const LabeledSet& data) {
    check_set(net, data, "evaluate");
    const auto probs = predict(net, data);
    const auto k = net.dims().classes;
    Evaluation ev;
    ev.confusion.assign(k, std::vector<std::uint64_t>(k, 0));
    double loss = 0.0;
    std::uint64_t correct = 0;
    for (std::size_t n = 0; n < data.size(); ++n) {
        Index best = 0;
        probs.col(idx(n)).maxCoeff(&best);
        const auto label = data.labels[n];
        ev.confusion[label][static_cast<std::size_t>(best)]++;
        if (static_cast<std::size_t>(best) == label) ++correct;
        const auto col = probs.col(idx(n));
        loss += cross_entropy_loss(std::span<const double>(col.data(), k), label).loss;
    }
    ev.accuracy = static_cast<double>(correct) / static_cast<double>(data.size());
    ev.mean_loss = loss / static_cast<double>(data.size());
    return ev;
}

TrainResult train_from(LstmNetwork<float> net, const LabeledSet& training, const LabeledSet& validation,
                       const TrainConfig& config, const EpochCallback& on_epoch) {
    config.validate();
    check_set(net, training, "train");
    if (validation.size() > 0) check_set(net, validation, "train (validation)");
    if (training.frame_len == 0) throw ParameterError("train: zero-length frames");
    const std::set<std::uint16_t> classes(training.labels.begin(), training.labels.end());
    if (classes.size() < 2) throw ParameterError("train: training data must contain at least two classes");

    const AdamConfig adam{config.learning_rate, config.beta1, config.beta2, config.adam_epsilon};
    AdamState<float> opt;
    std::mt19937_64 rng(config.seed);

    const std::size_t n = training.size();
    const std::size_t batch_cap = std::min(config.batch_size, n);
    const std::size_t max_shards = (batch_cap + config.shard_size - 1) / config.shard_size;
    std::vector<LstmNetwork<float>> shard_grads(max_shards, LstmNetwork<float>(net.dims()));
    std::vector<ForwardCache<float>> caches(max_shards);
    std::vector<Matrix<float>> inputs(max_shards);
    std::vector<double> shard_loss(max_shards);
    std::vector<std::size_t> shard_correct(max_shards);
    LstmNetwork<float> total(net.dims());

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);

    TrainResult result;
    LstmNetwork<float> best = net;
    double best_val = -1.0;
    std::size_t since_best = 0;

    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double epoch_loss = 0.0;
        std::size_t epoch_correct = 0;

        for (std::size_t start = 0; start < n; start += config.batch_size) {
            const std::size_t count = std::min(config.batch_size, n - start);
            const std::size_t shards = (count + config.shard_size - 1) / config.shard_size;
            const float scale = 1.0f / static_cast<float>(count);

            parallel_for(shards, [&](std::size_t s) {
                const auto s_begin = start + s * config.shard_size;
                const auto s_count = std::min(config.shard_size, start + count - s_begin);
                const std::span<const std::size_t> ids(order.data() + s_begin, s_count);
                pack_batch<float>(training.iq, training.frame_len, ids, inputs[s]);
                const auto& probs = forward_batch(net, inputs[s], training.frame_len, caches[s]);
                std::vector<std::uint16_t> labels(s_count);
                double loss = 0.0;
                std::size_t correct = 0;
                for (std::size_t b = 0; b < s_count; ++b) {
                    labels[b] = training.labels[ids[b]];
                    Index arg = 0;
                    probs.col(idx(b)).maxCoeff(&arg);
                    if (static_cast<std::size_t>(arg) == labels[b]) ++correct;
                    const double p = static_cast<double>(probs(labels[b], idx(b)));
                    loss += -std::log(std::max(p, kProbabilityFloor));
                }
                shard_loss[s] = loss;
                shard_correct[s] = correct;
                shard_grads[s].set_zero();
                backward(net, caches[s], labels, scale, shard_grads[s]);
            });

            auto acc = total.values();
            std::copy(shard_grads[0].values().begin(), shard_grads[0].values().end(), acc.begin());
            for (std::size_t s = 1; s < shards; ++s) {
                const auto g = shard_grads[s].values();
                for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += g[k];
            }
            for (std::size_t s = 0; s < shards; ++s) {
                epoch_loss += shard_loss[s];
                epoch_correct += shard_correct[s];
            }
            if (config.clip_norm > 0.0) {
                double sq = 0.0;
                for (float g : acc) sq += static_cast<double>(g) * g;
                const double norm = std::sqrt(sq);
                if (norm > config.clip_norm) {
                    const auto f = static_cast<float>(config.clip_norm / norm);
                    for (auto& g : acc) g *= f;
                }
            }
            adam_step<float>(net.values(), total.values(), opt, adam);
        }

        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_loss = epoch_loss / static_cast<double>(n);
        rec.train_accuracy = static_cast<double>(epoch_correct) / static_cast<double>(n);
        if (validation.size() > 0) {
            const auto ev = evaluate(net, validation);
            rec.val_loss = ev.mean_loss;
            rec.val_accuracy = ev.accuracy;
        } else {
            rec.val_loss = rec.train_loss;
            rec.val_accuracy = rec.train_accuracy;
        }
        result.history.push_back(rec);
        if (on_epoch) on_epoch(rec);

        if (rec.val_accuracy > best_val) {
            best_val = rec.val_accuracy;
            result.best_epoch = epoch;
            if (config.keep_best) best = net;
            since_best = 0;
        } else {
            ++since_best;
        }
        if (config.target_accuracy > 0.0 && rec.val_accuracy >= config.target_accuracy) break;
        if (config.patience > 0 && since_best >= config.patience) break;
    }
    result.net = config.keep_best ? std::move(best) : std::move(net);
    return result;
}

TrainResult train(const LabeledSet& training, const LabeledSet& validation, const NetworkDims& dims,
                  const TrainConfig& config, const EpochCallback& on_epoch) {
    return train_from(init_params<float>(dims, config.seed), training, validation, config, on_epoch);
}

// ---------------------------------------------------------------------------
// Checkpoint

namespace {

// Visits parameters in checkpoint order: per layer W, W^f, W^i, W^o
// (row-major), then the four gate biases; then W' (row-major) and its bias.
template <typename Net, typename Fn>
void visit_declaration_order(Net& net, Fn&& fn) {
    const auto& d = net.dims();
    const auto h = idx(d.hidden);
    for (std::size_t l = 0; l < d.layers; ++l) {
        auto w = net.layer_weights(l);
        for (Index g = 0; g < 4; ++g)
            for (Index r = 0; r < h; ++r)
                for (Index c = 0; c < w.cols(); ++c) fn(w(g * h + r, c));
        auto b = net.layer_bias(l);
        for (Index k = 0; k < b.size(); ++k) fn(b(k));
    }
    auto w = net.head_weights();
    for (Index r = 0; r < w.rows(); ++r)
        for (Index c = 0; c < w.cols(); ++c) fn(w(r, c));
    auto b = net.head_bias();
    for (Index k = 0; k < b.size(); ++k) fn(b(k));
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const LstmNetwork<float>& net) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw Error("cannot open '" + path.string() + "' for writing");
    os.write("LSTM", 4);
    detail::put_le<std::uint32_t>(os, kCheckpointVersion);
    const auto& d = net.dims();
    for (auto v : {d.input, d.hidden, d.layers, d.classes}) detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(v));
    visit_declaration_order(net, [&os](float v) { detail::put_le<float>(os, v); });
    if (!os) throw Error("write to '" + path.string() + "' failed");
}

LstmNetwork<float> load_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error("cannot open '" + path.string() + "'");
    char magic[4];
    if (!is.read(magic, 4) || std::string(magic, 4) != "LSTM")
        throw FormatError("'" + path.string() + "' is not an LSTM checkpoint (bad magic)");
    const auto version = detail::get_le<std::uint32_t>(is, "LSTM");
    if (version != kCheckpointVersion) throw FormatError("LSTM: unsupported checkpoint version " + std::to_string(version));
    NetworkDims d;
    d.input = detail::get_le<std::uint32_t>(is, "LSTM");
    d.hidden = detail::get_le<std::uint32_t>(is, "LSTM");
    d.layers = detail::get_le<std::uint32_t>(is, "LSTM");
    d.classes = detail::get_le<std::uint32_t>(is, "LSTM");
    if (d.input == 0 || d.hidden == 0 || d.layers == 0 || d.classes == 0 || d.hidden > 65536 || d.layers > 64)
        throw FormatError("LSTM: implausible dimensions in checkpoint header");
    LstmNetwork<float> net(d);
    visit_declaration_order(net, [&is](float& v) { v = detail::get_le<float>(is, "LSTM"); });
    if (is.peek() != std::char_traits<char>::eof()) throw FormatError("LSTM: trailing bytes after parameters");
    return net;
}

// ---------------------------------------------------------------------------

#define BLINDMOD_LSTM_INSTANTIATE(T)                                                                              \
    template class LstmNetwork<T>;                                                                                \
    template struct LstmState<T>;                                                                                 \
    template LstmNetwork<T> init_params<T>(const NetworkDims&, std::uint64_t);                                    \
    template LstmState<T> lstm_cell_forward<T>(const Vector<T>&, const LstmState<T>&, const LstmLayerParams<T>&); \
    template void pack_batch<T>(std::span<const float>, std::size_t, std::span<const std::size_t>, Matrix<T>&);   \
    template const Matrix<T>& forward_batch<T>(const LstmNetwork<T>&, const Matrix<T>&, std::size_t,              \
                                               ForwardCache<T>&);                                                 \
    template void backward<T>(const LstmNetwork<T>&, const ForwardCache<T>&, std::span<const std::uint16_t>, T,   \
                              LstmNetwork<T>&);                                                                   \
    template std::vector<double> network_forward<T>(const Frame&, const LstmNetwork<T>&);                         \
    template void adam_step<T>(std::span<T>, std::span<const T>, AdamState<T>&, const AdamConfig&);               \
    template Evaluation evaluate<T>(const LstmNetwork<T>&, const LabeledSet&);                                    \
    template Matrix<double> predict<T>(const LstmNetwork<T>&, const LabeledSet&);

BLINDMOD_LSTM_INSTANTIATE(float)
BLINDMOD_LSTM_INSTANTIATE(double)

}  // namespace blindmod::lstm
