#include "apexflow/network.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <random>

#include "apexflow/error.hpp"

namespace apexflow::net {

namespace {

using ConstMap = Eigen::Map<const Matrix>;
using MutMap = Eigen::Map<Matrix>;
using RowVec = Eigen::Matrix<double, 1, Eigen::Dynamic>;

ConstMap as_matrix(const Tensor& t, int rows, int cols) { return ConstMap(t.values.data(), rows, cols); }
MutMap as_matrix(Tensor& t, int rows, int cols) { return MutMap(t.values.data(), rows, cols); }

Eigen::Map<const RowVec> as_row(const Tensor& t) {
    return Eigen::Map<const RowVec>(t.values.data(), static_cast<Eigen::Index>(t.values.size()));
}

std::string shape_string(const std::vector<int>& shape) {
    std::string s = "(";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        s += (i ? "," : "") + std::to_string(shape[i]);
    }
    return s + ")";
}

// Rows of `in` are (n, y, x) positions of a batch of h x w maps; columns are
// channels. Output rows keep that order; column (a*k + b)*c + ch holds
// input (y + a - k/2, x + b - k/2, ch), zero outside the map.
Matrix im2col(const Matrix& in, int batch, int h, int w, int k) {
    const int c = static_cast<int>(in.cols());
    const int pad = k / 2;
    Matrix out = Matrix::Zero(static_cast<Eigen::Index>(batch) * h * w, static_cast<Eigen::Index>(k) * k * c);
    for (int n = 0; n < batch; ++n) {
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                double* dst = out.data() + ((static_cast<Eigen::Index>(n) * h + y) * w + x) * out.cols();
                for (int a = 0; a < k; ++a) {
                    const int yy = y + a - pad;
                    if (yy < 0 || yy >= h) continue;
                    for (int b = 0; b < k; ++b) {
                        const int xx = x + b - pad;
                        if (xx < 0 || xx >= w) continue;
                        const double* src = in.data() + ((static_cast<Eigen::Index>(n) * h + yy) * w + xx) * c;
                        std::copy(src, src + c, dst + (a * k + b) * c);
                    }
                }
            }
        }
    }
    return out;
}

// Adjoint of im2col.
Matrix col2im(const Matrix& patches, int batch, int h, int w, int k, int c) {
    const int pad = k / 2;
    Matrix out = Matrix::Zero(static_cast<Eigen::Index>(batch) * h * w, c);
    for (int n = 0; n < batch; ++n) {
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                const double* src = patches.data() + ((static_cast<Eigen::Index>(n) * h + y) * w + x) * patches.cols();
                for (int a = 0; a < k; ++a) {
                    const int yy = y + a - pad;
                    if (yy < 0 || yy >= h) continue;
                    for (int b = 0; b < k; ++b) {
                        const int xx = x + b - pad;
                        if (xx < 0 || xx >= w) continue;
                        double* dst = out.data() + ((static_cast<Eigen::Index>(n) * h + yy) * w + xx) * c;
                        const double* s = src + (a * k + b) * c;
                        for (int ch = 0; ch < c; ++ch) dst[ch] += s[ch];
                    }
                }
            }
        }
    }
    return out;
}

// 2x2 stride-2 max pooling; odd edges use a clipped window, which equals
// padding by repeating the edge value. argmax holds flat indices into `in`.
Matrix maxpool(const Matrix& in, int batch, int h, int w, std::vector<int>& argmax) {
    const int c = static_cast<int>(in.cols());
    const int ho = (h + 1) / 2;
    const int wo = (w + 1) / 2;
    Matrix out(static_cast<Eigen::Index>(batch) * ho * wo, c);
    argmax.assign(static_cast<std::size_t>(out.size()), 0);
    for (int n = 0; n < batch; ++n) {
        for (int y = 0; y < ho; ++y) {
            for (int x = 0; x < wo; ++x) {
                const Eigen::Index orow = (static_cast<Eigen::Index>(n) * ho + y) * wo + x;
                for (int ch = 0; ch < c; ++ch) {
                    double best = -std::numeric_limits<double>::infinity();
                    int best_idx = -1;
                    for (int dy = 0; dy < 2; ++dy) {
                        const int yy = 2 * y + dy;
                        if (yy >= h) continue;
                        for (int dx = 0; dx < 2; ++dx) {
                            const int xx = 2 * x + dx;
                            if (xx >= w) continue;
                            const Eigen::Index irow = (static_cast<Eigen::Index>(n) * h + yy) * w + xx;
                            const double v = in(irow, ch);
                            if (best_idx < 0 || v > best) {
                                best = v;
                                best_idx = static_cast<int>(irow * c + ch);
                            }
                        }
                    }
                    out(orow, ch) = best;
                    argmax[static_cast<std::size_t>(orow * c + ch)] = best_idx;
                }
            }
        }
    }
    return out;
}

Matrix unpool(const Matrix& grad_out, const std::vector<int>& argmax, Eigen::Index in_rows) {
    Matrix grad_in = Matrix::Zero(in_rows, grad_out.cols());
    const double* g = grad_out.data();
    for (std::size_t i = 0; i < argmax.size(); ++i) {
        grad_in.data()[argmax[i]] += g[i];
    }
    return grad_in;
}

void relu_inplace(Matrix& m) { m = m.cwiseMax(0.0); }

// grad *= 1[pre > 0]
void relu_backward(Matrix& grad, const Matrix& pre) {
    grad = (pre.array() > 0.0).select(grad, 0.0);
}

void add_bias(Matrix& m, const Tensor& bias) { m.rowwise() += as_row(bias); }

void require_shape(const Tensor& t, const std::vector<int>& shape, const char* name) {
    if (t.shape != shape) {
        throw ValidationError(std::string(name) + ": expected shape " + shape_string(shape) + ", got " +
                              shape_string(t.shape));
    }
}

void check_params(const NetworkParams& p) {
    const NetworkShape& s = p.shape;
    s.validate();
    if (static_cast<int>(p.towers.size()) != s.tower_count()) {
        throw ValidationError("network parameters have the wrong number of towers");
    }
    const NetworkParams ref = NetworkParams::zeros(s);
    const auto got = p.buffers();
    const auto want = ref.buffers();
    for (std::size_t i = 0; i < got.size(); ++i) {
        require_shape(*got[i], want[i]->shape, "network parameter");
        if (got[i]->values.size() != want[i]->values.size()) {
            throw ValidationError("network parameter buffer has the wrong size");
        }
    }
}

const std::vector<double>& stream_values(const FlowInputPair& in, Streams streams, int tower) {
    if (streams == Streams::VerticalOnly || (streams == Streams::Both && tower == 1)) {
        return in.v;
    }
    return in.u;
}

Matrix softmax_rows(const Matrix& logits) {
    Matrix p(logits.rows(), logits.cols());
    for (Eigen::Index r = 0; r < logits.rows(); ++r) {
        const double m = logits.row(r).maxCoeff();
        double total = 0.0;
        for (Eigen::Index c = 0; c < logits.cols(); ++c) {
            p(r, c) = std::exp(logits(r, c) - m);
            total += p(r, c);
        }
        p.row(r) /= total;
    }
    return p;
}

Tensor from_matrix(const Matrix& m, std::vector<int> shape) {
    Tensor t;
    t.shape = std::move(shape);
    t.values.assign(m.data(), m.data() + m.size());
    return t;
}

Tensor from_row(const RowVec& r) {
    Tensor t;
    t.shape = {static_cast<int>(r.size())};
    t.values.assign(r.data(), r.data() + r.size());
    return t;
}

}  // namespace

Tensor::Tensor(std::vector<int> shape_, double fill) : shape(std::move(shape_)) {
    std::size_t n = 1;
    for (int d : shape) {
        n *= static_cast<std::size_t>(d);
    }
    values.assign(n, fill);
}

void NetworkShape::validate() const {
    if (input_size < 2 || kernel < 1 || kernel % 2 == 0 || conv1_channels < 1 || conv2_channels < 1 ||
        fc1_units < 1 || fc2_units < 1 || classes != dataset::kNumClasses) {
        throw ValidationError("invalid network shape");
    }
}

NetworkParams NetworkParams::zeros(const NetworkShape& s) {
    NetworkParams p;
    p.shape = s;
    for (int t = 0; t < s.tower_count(); ++t) {
        TowerParams tw;
        tw.conv1_w = Tensor({s.kernel, s.kernel, 1, s.conv1_channels});
        tw.conv1_b = Tensor({s.conv1_channels});
        tw.conv2_w = Tensor({s.kernel, s.kernel, s.conv1_channels, s.conv2_channels});
        tw.conv2_b = Tensor({s.conv2_channels});
        p.towers.push_back(std::move(tw));
    }
    p.fc1_w = Tensor({s.concat_width(), s.fc1_units});
    p.fc1_b = Tensor({s.fc1_units});
    p.fc2_w = Tensor({s.fc1_units, s.fc2_units});
    p.fc2_b = Tensor({s.fc2_units});
    p.out_w = Tensor({s.fc2_units, s.classes});
    p.out_b = Tensor({s.classes});
    return p;
}

std::vector<Tensor*> NetworkParams::buffers() {
    std::vector<Tensor*> out;
    for (TowerParams& t : towers) {
        out.insert(out.end(), {&t.conv1_w, &t.conv1_b, &t.conv2_w, &t.conv2_b});
    }
    out.insert(out.end(), {&fc1_w, &fc1_b, &fc2_w, &fc2_b, &out_w, &out_b});
    return out;
}

std::vector<const Tensor*> NetworkParams::buffers() const {
    std::vector<const Tensor*> out;
    for (const TowerParams& t : towers) {
        out.insert(out.end(), {&t.conv1_w, &t.conv1_b, &t.conv2_w, &t.conv2_b});
    }
    out.insert(out.end(), {&fc1_w, &fc1_b, &fc2_w, &fc2_b, &out_w, &out_b});
    return out;
}

std::size_t NetworkParams::parameter_count() const {
    std::size_t n = 0;
    for (const Tensor* t : buffers()) {
        n += t->size();
    }
    return n;
}

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0)) throw ValidationError("learning_rate must be > 0");
    if (!(dropout_keep > 0.0 && dropout_keep <= 1.0)) throw ValidationError("dropout_keep must be in (0, 1]");
    if (epochs < 1) throw ValidationError("epochs must be >= 1");
    if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0) ||
        !(adam_epsilon > 0.0)) {
        throw ValidationError("invalid Adam hyper-parameters");
    }
    architecture.validate();
}

AdamState AdamState::zeros(const NetworkShape& shape) {
    return AdamState{NetworkParams::zeros(shape), NetworkParams::zeros(shape), 0};
}

NetworkParams init_params(std::uint64_t seed, const NetworkShape& shape) {
    shape.validate();
    NetworkParams p = NetworkParams::zeros(shape);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 0.1);
    auto draw = [&] {
        for (;;) {
            const double x = normal(rng);
            if (std::abs(x) <= 0.2) return x;
        }
    };
    const auto bufs = p.buffers();
    for (std::size_t i = 0; i < bufs.size(); ++i) {
        Tensor& t = *bufs[i];
        const bool is_bias = t.shape.size() == 1;
        for (double& v : t.values) {
            v = is_bias ? 0.1 : draw();
        }
    }
    return p;
}

Tensor conv2d_same(const Tensor& input, const Tensor& weights, const Tensor& bias) {
    if (input.shape.size() != 3 || weights.shape.size() != 4 || bias.shape.size() != 1) {
        throw ValidationError("conv2d_same expects H x W x C input, k x k x Cin x Cout weights, Cout bias");
    }
    const int h = input.shape[0], w = input.shape[1], cin = input.shape[2];
    const int k = weights.shape[0], cout = weights.shape[3];
    if (weights.shape[1] != k || k % 2 == 0 || weights.shape[2] != cin || bias.shape[0] != cout) {
        throw ValidationError("conv2d_same: shape mismatch between " + shape_string(input.shape) + ", " +
                              shape_string(weights.shape) + " and " + shape_string(bias.shape));
    }
    const Matrix in = as_matrix(input, h * w, cin);
    Matrix out = im2col(in, 1, h, w, k) * as_matrix(weights, k * k * cin, cout);
    add_bias(out, bias);
    return from_matrix(out, {h, w, cout});
}

Tensor relu(const Tensor& x) {
    Tensor out = x;
    for (double& v : out.values) v = std::max(0.0, v);
    return out;
}

Tensor maxpool2x2(const Tensor& x) {
    if (x.shape.size() != 3 || x.shape[0] < 2 || x.shape[1] < 2) {
        throw ValidationError("maxpool2x2 expects an H x W x C tensor with H, W >= 2");
    }
    const int h = x.shape[0], w = x.shape[1], c = x.shape[2];
    std::vector<int> argmax;
    const Matrix out = maxpool(as_matrix(x, h * w, c), 1, h, w, argmax);
    return from_matrix(out, {(h + 1) / 2, (w + 1) / 2, c});
}

std::array<double, dataset::kNumClasses> softmax(std::span<const double> logits) {
    if (logits.size() != dataset::kNumClasses) {
        throw ValidationError("softmax expects one logit per class");
    }
    std::array<double, dataset::kNumClasses> p{};
    const double m = *std::max_element(logits.begin(), logits.end());
    double total = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        p[i] = std::exp(logits[i] - m);
        total += p[i];
    }
    for (double& v : p) v /= total;
    return p;
}

double cross_entropy(std::span<const double> probs, EmotionClass label) {
    return -std::log(std::max(probs[static_cast<int>(label)], 1e-12));
}

DropoutMasks sample_dropout(int batch, const NetworkShape& shape, double keep, std::uint64_t seed,
                            std::uint64_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32), 0x5eedu};
    std::mt19937_64 rng(seq);
    const double scale = 1.0 / keep;
    auto fill = [&](Matrix& m, int cols) {
        m.resize(batch, cols);
        for (Eigen::Index i = 0; i < m.size(); ++i) {
            const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
            m.data()[i] = u < keep ? scale : 0.0;
        }
    };
    DropoutMasks masks;
    fill(masks.fc1, shape.fc1_units);
    fill(masks.fc2, shape.fc2_units);
    return masks;
}

ForwardCache forward(const NetworkParams& params, std::span<const FlowInputPair> inputs, const DropoutMasks* masks) {
    check_params(params);
    const NetworkShape& s = params.shape;
    const int batch = static_cast<int>(inputs.size());
    if (batch == 0) {
        throw ValidationError("forward pass needs at least one input");
    }
    const int n0 = s.input_size;
    const int n1 = s.pool1_size();
    const int area = n0 * n0;
    for (const FlowInputPair& in : inputs) {
        if (in.size != n0 || static_cast<int>(in.u.size()) != area || static_cast<int>(in.v.size()) != area) {
            throw ValidationError("network input must be two " + std::to_string(n0) + "x" + std::to_string(n0) +
                                  " maps");
        }
    }
    if (masks && (masks->fc1.rows() != batch || masks->fc1.cols() != s.fc1_units || masks->fc2.rows() != batch ||
                  masks->fc2.cols() != s.fc2_units)) {
        throw ValidationError("dropout masks do not match the batch");
    }

    ForwardCache cache;
    cache.batch = batch;
    cache.concat.resize(batch, s.concat_width());
    const int tw = s.tower_width();
    for (int t = 0; t < s.tower_count(); ++t) {
        const TowerParams& p = params.towers[t];
        TowerCache tc;
        Matrix x(static_cast<Eigen::Index>(batch) * area, 1);
        for (int n = 0; n < batch; ++n) {
            const auto& src = stream_values(inputs[n], s.streams, t);
            std::copy(src.begin(), src.end(), x.data() + static_cast<Eigen::Index>(n) * area);
        }
        tc.patches1 = im2col(x, batch, n0, n0, s.kernel);
        tc.conv1 = tc.patches1 * as_matrix(p.conv1_w, s.kernel * s.kernel, s.conv1_channels);
        add_bias(tc.conv1, p.conv1_b);
        Matrix a1 = tc.conv1;
        relu_inplace(a1);
        tc.pool1 = maxpool(a1, batch, n0, n0, tc.pool1_argmax);

        tc.patches2 = im2col(tc.pool1, batch, n1, n1, s.kernel);
        tc.conv2 = tc.patches2 * as_matrix(p.conv2_w, s.kernel * s.kernel * s.conv1_channels, s.conv2_channels);
        add_bias(tc.conv2, p.conv2_b);
        Matrix a2 = tc.conv2;
        relu_inplace(a2);
        tc.pool2 = maxpool(a2, batch, n1, n1, tc.pool2_argmax);

        // Per sample, pool2 rows are contiguous in HWC order: that is the flatten.
        const ConstMap flat(tc.pool2.data(), batch, tw);
        cache.concat.block(0, static_cast<Eigen::Index>(t) * tw, batch, tw) = flat;
        cache.towers.push_back(std::move(tc));
    }

    cache.fc1_pre = cache.concat * as_matrix(params.fc1_w, s.concat_width(), s.fc1_units);
    add_bias(cache.fc1_pre, params.fc1_b);
    cache.fc1_out = cache.fc1_pre.cwiseMax(0.0);
    if (masks) cache.fc1_out.array() *= masks->fc1.array();

    cache.fc2_pre = cache.fc1_out * as_matrix(params.fc2_w, s.fc1_units, s.fc2_units);
    add_bias(cache.fc2_pre, params.fc2_b);
    cache.fc2_out = cache.fc2_pre.cwiseMax(0.0);
    if (masks) cache.fc2_out.array() *= masks->fc2.array();

    cache.logits = cache.fc2_out * as_matrix(params.out_w, s.fc2_units, s.classes);
    add_bias(cache.logits, params.out_b);
    if (masks) cache.masks = *masks;

    if (!cache.logits.allFinite()) {
        throw DivergenceError("non-finite activations in forward pass");
    }
    return cache;
}

ForwardCache forward(const NetworkParams& params, const FlowInputPair& input, const DropoutMasks* masks) {
    return forward(params, std::span<const FlowInputPair>(&input, 1), masks);
}

double batch_loss(const ForwardCache& cache, std::span<const EmotionClass> labels) {
    if (cache.empty() || static_cast<int>(labels.size()) != cache.batch) {
        throw ValidationError("loss needs a forward cache and one label per sample");
    }
    double total = 0.0;
    for (int n = 0; n < cache.batch; ++n) {
        const auto p = softmax(std::span<const double>(cache.logits.row(n).data(), cache.logits.cols()));
        total += cross_entropy(p, labels[n]);
    }
    return total / cache.batch;
}

NetworkParams backward(const NetworkParams& params, const ForwardCache& cache, std::span<const EmotionClass> labels) {
    if (cache.empty()) {
        throw ValidationError("backward pass called without a forward cache");
    }
    if (static_cast<int>(labels.size()) != cache.batch) {
        throw ValidationError("backward pass needs one label per cached sample");
    }
    const NetworkShape& s = params.shape;
    const int batch = cache.batch;
    const int n1 = s.pool1_size();

    NetworkParams g = NetworkParams::zeros(s);

    // d(mean CE)/d logits = (softmax - onehot) / N
    Matrix grad = softmax_rows(cache.logits);
    for (int n = 0; n < batch; ++n) {
        grad(n, static_cast<int>(labels[n])) -= 1.0;
    }
    grad /= static_cast<double>(batch);

    as_matrix(g.out_w, s.fc2_units, s.classes) = cache.fc2_out.transpose() * grad;
    g.out_b = from_row(grad.colwise().sum());
    Matrix d_fc2 = grad * as_matrix(params.out_w, s.fc2_units, s.classes).transpose();
    if (cache.masks) d_fc2.array() *= cache.masks->fc2.array();
    relu_backward(d_fc2, cache.fc2_pre);

    as_matrix(g.fc2_w, s.fc1_units, s.fc2_units) = cache.fc1_out.transpose() * d_fc2;
    g.fc2_b = from_row(d_fc2.colwise().sum());
    Matrix d_fc1 = d_fc2 * as_matrix(params.fc2_w, s.fc1_units, s.fc2_units).transpose();
    if (cache.masks) d_fc1.array() *= cache.masks->fc1.array();
    relu_backward(d_fc1, cache.fc1_pre);

    as_matrix(g.fc1_w, s.concat_width(), s.fc1_units) = cache.concat.transpose() * d_fc1;
    g.fc1_b = from_row(d_fc1.colwise().sum());
    const Matrix d_concat = d_fc1 * as_matrix(params.fc1_w, s.concat_width(), s.fc1_units).transpose();

    const int tw = s.tower_width();
    for (int t = 0; t < s.tower_count(); ++t) {
        const TowerCache& tc = cache.towers[t];
        const TowerParams& p = params.towers[t];
        TowerParams& gt = g.towers[t];

        Matrix d_pool2(tc.pool2.rows(), tc.pool2.cols());
        MutMap(d_pool2.data(), batch, tw) = d_concat.block(0, static_cast<Eigen::Index>(t) * tw, batch, tw);

        Matrix d_conv2 = unpool(d_pool2, tc.pool2_argmax, tc.conv2.rows());
        relu_backward(d_conv2, tc.conv2);
        const int k2 = s.kernel * s.kernel * s.conv1_channels;
        as_matrix(gt.conv2_w, k2, s.conv2_channels) = tc.patches2.transpose() * d_conv2;
        gt.conv2_b = from_row(d_conv2.colwise().sum());

        const Matrix d_patches2 = d_conv2 * as_matrix(p.conv2_w, k2, s.conv2_channels).transpose();
        const Matrix d_pool1 = col2im(d_patches2, batch, n1, n1, s.kernel, s.conv1_channels);

        Matrix d_conv1 = unpool(d_pool1, tc.pool1_argmax, tc.conv1.rows());
        relu_backward(d_conv1, tc.conv1);
        as_matrix(gt.conv1_w, s.kernel * s.kernel, s.conv1_channels) = tc.patches1.transpose() * d_conv1;
        gt.conv1_b = from_row(d_conv1.colwise().sum());
    }
    return g;
}

void adam_step(NetworkParams& params, const NetworkParams& grads, AdamState& state, const TrainConfig& config) {
    auto p = params.buffers();
    const auto g = grads.buffers();
    auto m = state.m.buffers();
    auto v = state.v.buffers();
    if (p.size() != g.size() || p.size() != m.size() || p.size() != v.size()) {
        throw ValidationError("adam_step: parameter, gradient and state layouts differ");
    }
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i]->shape != g[i]->shape || p[i]->shape != m[i]->shape || p[i]->shape != v[i]->shape) {
            throw ValidationError("adam_step: shape mismatch in buffer " + std::to_string(i));
        }
    }
    state.t += 1;
    const double b1 = config.adam_beta1;
    const double b2 = config.adam_beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.t));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.t));
    for (std::size_t i = 0; i < p.size(); ++i) {
        double* pv = p[i]->values.data();
        const double* gv = g[i]->values.data();
        double* mv = m[i]->values.data();
        double* vv = v[i]->values.data();
        const std::size_t n = p[i]->values.size();
        for (std::size_t j = 0; j < n; ++j) {
            mv[j] = b1 * mv[j] + (1.0 - b1) * gv[j];
            vv[j] = b2 * vv[j] + (1.0 - b2) * gv[j] * gv[j];
            const double mhat = mv[j] / c1;
            const double vhat = vv[j] / c2;
            pv[j] -= config.learning_rate * mhat / (std::sqrt(vhat) + config.adam_epsilon);
        }
    }
}

TrainResult train(std::span<const LabeledInput> samples, const TrainConfig& config) {
    config.validate();
    if (samples.empty()) {
        throw ValidationError("training needs at least one sample");
    }
    const int batch = static_cast<int>(samples.size());
    std::vector<FlowInputPair> inputs;
    std::vector<EmotionClass> labels;
    inputs.reserve(samples.size());
    labels.reserve(samples.size());
    for (const LabeledInput& s : samples) {
        inputs.push_back(s.input);
        labels.push_back(s.label);
    }

    TrainResult result;
    result.params = init_params(config.seed, config.architecture);
    result.state = AdamState::zeros(config.architecture);
    result.loss_curve.reserve(config.epochs);

    const bool use_dropout = config.dropout_keep < 1.0;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        std::optional<DropoutMasks> masks;
        if (use_dropout) {
            masks = sample_dropout(batch, config.architecture, config.dropout_keep, config.seed,
                                   static_cast<std::uint64_t>(epoch));
        }
        const ForwardCache cache = forward(result.params, inputs, masks ? &*masks : nullptr);
        const double loss = batch_loss(cache, labels);
        if (!std::isfinite(loss)) {
            throw DivergenceError("non-finite training loss at epoch " + std::to_string(epoch + 1));
        }
        result.loss_curve.push_back(loss);
        const NetworkParams grads = backward(result.params, cache, labels);
        adam_step(result.params, grads, result.state, config);
    }
    return result;
}

EmotionClass argmax_class(std::span<const double> values) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < values.size(); ++i) {
        if (values[i] > values[best]) best = i;
    }
    return static_cast<EmotionClass>(best);
}

std::vector<PredictionResult> predict(const NetworkParams& params, std::span<const FlowInputPair> inputs) {
    const ForwardCache cache = forward(params, inputs, nullptr);
    std::vector<PredictionResult> out(inputs.size());
    for (int n = 0; n < cache.batch; ++n) {
        const std::span<const double> logits(cache.logits.row(n).data(), cache.logits.cols());
        out[n].probs = softmax(logits);
        out[n].label = argmax_class(logits);
    }
    return out;
}

PredictionResult predict(const NetworkParams& params, const FlowInputPair& input) {
    return predict(params, std::span<const FlowInputPair>(&input, 1)).front();
}

}  // namespace apexflow::net
