#include "doctest.h"

#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>

#include "apexflow/error.hpp"
#include "apexflow/network.hpp"
#include "test_util.hpp"

using namespace apexflow;
using namespace apexflow::net;

namespace {

Tensor random_tensor(std::vector<int> shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t(std::move(shape));
    std::uniform_real_distribution<double> d(lo, hi);
    for (double& v : t.values) v = d(rng);
    return t;
}

FlowInputPair random_input(int size, std::mt19937_64& rng, double scale = 1.0) {
    FlowInputPair in;
    in.size = size;
    std::uniform_real_distribution<double> d(-scale, scale);
    in.u.resize(static_cast<std::size_t>(size) * size);
    in.v.resize(in.u.size());
    for (double& x : in.u) x = d(rng);
    for (double& x : in.v) x = d(rng);
    return in;
}

// Direct zero-padded convolution, H x W x Cin input, k x k x Cin x Cout weights.
Tensor brute_conv(const Tensor& in, const Tensor& w, const Tensor& b) {
    const int h = in.shape[0], wd = in.shape[1], cin = in.shape[2];
    const int k = w.shape[0], cout = w.shape[3], pad = k / 2;
    Tensor out({h, wd, cout});
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < wd; ++j)
            for (int o = 0; o < cout; ++o) {
                double acc = b.values[o];
                for (int a = 0; a < k; ++a)
                    for (int c2 = 0; c2 < k; ++c2)
                        for (int c = 0; c < cin; ++c) {
                            const int y = i + a - pad, x = j + c2 - pad;
                            if (y < 0 || y >= h || x < 0 || x >= wd) continue;
                            acc += w.values[((a * k + c2) * cin + c) * cout + o] * in.values[(y * wd + x) * cin + c];
                        }
                out.values[(i * wd + j) * cout + o] = acc;
            }
    return out;
}

NetworkShape tiny_shape() {
    NetworkShape s;
    s.input_size = 8;
    s.conv1_channels = 2;
    s.conv2_channels = 3;
    s.fc1_units = 6;
    s.fc2_units = 5;
    return s;
}

double loss_of(const NetworkParams& p, std::span<const FlowInputPair> inputs, std::span<const EmotionClass> labels,
               const DropoutMasks* masks) {
    return batch_loss(forward(p, inputs, masks), labels);
}

// Class-coded flow maps: a bump whose position and orientation depend on the class.
std::vector<LabeledInput> separable_samples(int count, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, 0.05);
    std::vector<LabeledInput> out;
    for (int i = 0; i < count; ++i) {
        LabeledInput s;
        s.label = static_cast<EmotionClass>(i % 3);
        s.input.size = 28;
        s.input.u.assign(28 * 28, 0.0);
        s.input.v.assign(28 * 28, 0.0);
        const double cx = 7.0 + 7.0 * (i % 3), cy = i % 3 == 1 ? 21.0 : 7.0;
        for (int y = 0; y < 28; ++y)
            for (int x = 0; x < 28; ++x) {
                const double g = std::exp(-((x - cx) * (x - cx) + (y - cy) * (y - cy)) / 18.0);
                s.input.u[y * 28 + x] = (i % 3 == 2 ? 0.0 : 1.0) * g + noise(rng);
                s.input.v[y * 28 + x] = (i % 3 == 2 ? -1.0 : 0.3) * g + noise(rng);
            }
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace

TEST_CASE("init_params shapes and determinism") {
    const NetworkParams a = init_params(7);
    const NetworkParams b = init_params(7);
    const NetworkParams c = init_params(8);
    CHECK(a == b);
    CHECK_FALSE(a == c);

    REQUIRE(a.towers.size() == 2);
    for (const TowerParams& t : a.towers) {
        CHECK(t.conv1_w.shape == std::vector<int>{5, 5, 1, 6});
        CHECK(t.conv1_b.shape == std::vector<int>{6});
        CHECK(t.conv2_w.shape == std::vector<int>{5, 5, 6, 16});
        CHECK(t.conv2_b.shape == std::vector<int>{16});
    }
    CHECK(a.fc1_w.shape == std::vector<int>{1568, 1024});
    CHECK(a.fc1_b.shape == std::vector<int>{1024});
    CHECK(a.fc2_w.shape == std::vector<int>{1024, 1024});
    CHECK(a.fc2_b.shape == std::vector<int>{1024});
    CHECK(a.out_w.shape == std::vector<int>{1024, 3});
    CHECK(a.out_b.shape == std::vector<int>{3});

    const std::size_t tower = 5 * 5 * 6 + 6 + 5 * 5 * 6 * 16 + 16;
    CHECK(a.parameter_count() == 2 * tower + 1568 * 1024 + 1024 + 1024 * 1024 + 1024 + 1024 * 3 + 3);

    for (const Tensor* t : a.buffers()) {
        for (double v : t->values) {
            if (t->shape.size() == 1) {
                REQUIRE(v == 0.1);
            } else {
                REQUIRE(std::abs(v) <= 0.2);
            }
        }
    }
    double sum = 0.0, sq = 0.0;
    for (double v : a.fc2_w.values) {
        sum += v;
        sq += v * v;
    }
    const double n = static_cast<double>(a.fc2_w.size());
    CHECK(std::abs(sum / n) < 1e-3);
    // A normal(0, 0.1) truncated at two sigma has standard deviation 0.0880.
    CHECK(std::sqrt(sq / n) == doctest::Approx(0.0880).epsilon(0.01));
}

TEST_CASE("conv2d_same") {
    std::mt19937_64 rng(3);
    const Tensor in28 = random_tensor({28, 28, 1}, rng);
    const Tensor out28 = conv2d_same(in28, random_tensor({5, 5, 1, 6}, rng), Tensor({6}, 0.1));
    CHECK(out28.shape == std::vector<int>{28, 28, 6});

    Tensor identity({5, 5, 1, 1});
    identity.values[12] = 1.0;
    const Tensor same = conv2d_same(in28, identity, Tensor({1}));
    CHECK(same.values == in28.values);

    for (int cin : {1, 3}) {
        const Tensor in = random_tensor({7, 7, cin}, rng);
        const Tensor w = random_tensor({5, 5, cin, 4}, rng);
        const Tensor b = random_tensor({4}, rng);
        const Tensor got = conv2d_same(in, w, b);
        const Tensor want = brute_conv(in, w, b);
        REQUIRE(got.shape == want.shape);
        for (std::size_t i = 0; i < got.size(); ++i) CHECK(got.values[i] == doctest::Approx(want.values[i]).epsilon(1e-10));
    }

    CHECK_THROWS_AS(conv2d_same(in28, random_tensor({5, 5, 2, 6}, rng), Tensor({6})), ValidationError);
    CHECK_THROWS_AS(conv2d_same(in28, random_tensor({5, 5, 1, 6}, rng), Tensor({5})), ValidationError);
}

TEST_CASE("relu") {
    Tensor x({3});
    x.values = {-1.0, 0.0, 2.0};
    CHECK(relu(x).values == std::vector<double>{0.0, 0.0, 2.0});
    CHECK(relu(Tensor({2, 2}, -3.0)).values == std::vector<double>(4, 0.0));
    std::mt19937_64 rng(1);
    const Tensor r = random_tensor({4, 4, 2}, rng);
    CHECK(relu(relu(r)) == relu(r));
}

TEST_CASE("maxpool2x2") {
    std::mt19937_64 rng(5);
    CHECK(maxpool2x2(random_tensor({28, 28, 6}, rng)).shape == std::vector<int>{14, 14, 6});
    CHECK(maxpool2x2(random_tensor({14, 14, 16}, rng)).shape == std::vector<int>{7, 7, 16});
    CHECK(maxpool2x2(Tensor({6, 6, 2}, 0.7)) == Tensor({3, 3, 2}, 0.7));

    // Odd sizes behave as if the last row and column were repeated.
    const Tensor odd = random_tensor({5, 3, 2}, rng);
    const Tensor got = maxpool2x2(odd);
    REQUIRE(got.shape == std::vector<int>{3, 2, 2});
    for (int y = 0; y < 3; ++y)
        for (int x = 0; x < 2; ++x)
            for (int c = 0; c < 2; ++c) {
                double m = -1e300;
                for (int dy = 0; dy < 2; ++dy)
                    for (int dx = 0; dx < 2; ++dx) {
                        const int yy = std::min(2 * y + dy, 4), xx = std::min(2 * x + dx, 2);
                        m = std::max(m, odd.values[(yy * 3 + xx) * 2 + c]);
                    }
                CHECK(got.values[(y * 2 + x) * 2 + c] == m);
            }

    CHECK_THROWS_AS(maxpool2x2(Tensor({1, 4, 1})), ValidationError);
}

TEST_CASE("forward shape chain") {
    const NetworkParams p = init_params(1);
    std::mt19937_64 rng(2);
    const FlowInputPair in = random_input(28, rng);
    const auto t0 = std::chrono::steady_clock::now();
    const ForwardCache c = forward(p, in);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    CHECK(secs < 1.0);

    REQUIRE(c.towers.size() == 2);
    for (const TowerCache& t : c.towers) {
        CHECK(t.conv1.rows() == 28 * 28);
        CHECK(t.conv1.cols() == 6);
        CHECK(t.pool1.rows() == 14 * 14);
        CHECK(t.pool1.cols() == 6);
        CHECK(t.conv2.rows() == 14 * 14);
        CHECK(t.conv2.cols() == 16);
        CHECK(t.pool2.rows() == 7 * 7);
        CHECK(t.pool2.cols() == 16);
    }
    CHECK(c.concat.cols() == 1568);
    CHECK(c.fc1_out.cols() == 1024);
    CHECK(c.fc2_out.cols() == 1024);
    CHECK(c.logits.rows() == 1);
    CHECK(c.logits.cols() == 3);
    CHECK(p.shape.concat_width() == 2 * 7 * 7 * 16);

    // Tower halves of the concat line up with an independent per-layer evaluation.
    for (int t = 0; t < 2; ++t) {
        Tensor x({28, 28, 1});
        x.values = t == 0 ? in.u : in.v;
        const Tensor a = maxpool2x2(relu(conv2d_same(x, p.towers[t].conv1_w, p.towers[t].conv1_b)));
        const Tensor b = maxpool2x2(relu(conv2d_same(a, p.towers[t].conv2_w, p.towers[t].conv2_b)));
        REQUIRE(b.size() == 784);
        for (int i = 0; i < 784; ++i) CHECK(c.concat(0, t * 784 + i) == doctest::Approx(b.values[i]).epsilon(1e-12));
    }

    FlowInputPair bad = in;
    bad.u.pop_back();
    CHECK_THROWS_AS(forward(p, bad), ValidationError);
}

TEST_CASE("forward through a hand-propagated affine chain") {
    NetworkParams p = NetworkParams::zeros(NetworkShape{});
    for (Tensor* t : p.buffers())
        if (t->shape.size() == 1) std::fill(t->values.begin(), t->values.end(), 0.1);
    std::fill(p.fc1_w.values.begin(), p.fc1_w.values.end(), 0.01);
    std::fill(p.fc2_w.values.begin(), p.fc2_w.values.end(), 0.001);
    for (int r = 0; r < 1024; ++r)
        for (int c = 0; c < 3; ++c) p.out_w.values[r * 3 + c] = 0.002 * (c + 1);

    FlowInputPair zero;
    zero.u.assign(784, 0.0);
    zero.v.assign(784, 0.0);
    const ForwardCache c = forward(p, zero);

    // Convolution weights are zero so every tower activation is its bias.
    const double fc1 = 1568 * 0.01 * 0.1 + 0.1;
    const double fc2 = 1024 * 0.001 * fc1 + 0.1;
    for (int k = 0; k < 3; ++k) CHECK(c.logits(0, k) == doctest::Approx(1024 * 0.002 * (k + 1) * fc2 + 0.1).epsilon(1e-12));
}

TEST_CASE("softmax and cross-entropy") {
    const auto u = softmax(std::vector<double>{0.0, 0.0, 0.0});
    for (double p : u) CHECK(p == doctest::Approx(1.0 / 3.0).epsilon(1e-15));

    const std::vector<double> x{0.3, -1.2, 2.5};
    const auto a = softmax(x);
    const auto b = softmax(std::vector<double>{x[0] + 700.0, x[1] + 700.0, x[2] + 700.0});
    for (int i = 0; i < 3; ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-12));
    CHECK(a[0] + a[1] + a[2] == doctest::Approx(1.0).epsilon(1e-12));

    const auto c = softmax(std::vector<double>{std::log(1.0), std::log(2.0), std::log(3.0)});
    CHECK(c[0] == doctest::Approx(1.0 / 6.0).epsilon(1e-14));
    CHECK(c[1] == doctest::Approx(2.0 / 6.0).epsilon(1e-14));
    CHECK(c[2] == doctest::Approx(3.0 / 6.0).epsilon(1e-14));

    CHECK(cross_entropy(std::vector<double>{1.0, 0.0, 0.0}, EmotionClass::Negative) == 0.0);
    CHECK(cross_entropy(std::vector<double>{0.25, 0.5, 0.25}, EmotionClass::Positive) ==
          doctest::Approx(0.6931471805599453).epsilon(1e-15));
    CHECK(cross_entropy(std::vector<double>{1.0 / 3, 1.0 / 3, 1.0 / 3}, EmotionClass::Surprise) ==
          doctest::Approx(1.0986122886681098).epsilon(1e-14));
    CHECK(cross_entropy(std::vector<double>{1.0, 0.0, 0.0}, EmotionClass::Surprise) ==
          doctest::Approx(-std::log(1e-12)).epsilon(1e-15));
}

TEST_CASE("backward matches central finite differences") {
    for (Streams streams : {Streams::Both, Streams::HorizontalOnly, Streams::VerticalOnly}) {
        NetworkShape shape = tiny_shape();
        shape.streams = streams;
        NetworkParams p = init_params(11, shape);
        // Larger weights keep activations away from the ReLU kinks at this size.
        for (Tensor* t : p.buffers())
            for (double& v : t->values) v *= 4.0;

        std::mt19937_64 rng(19);
        std::vector<FlowInputPair> inputs;
        for (int i = 0; i < 3; ++i) inputs.push_back(random_input(8, rng));
        const std::vector<EmotionClass> labels{EmotionClass::Negative, EmotionClass::Surprise, EmotionClass::Positive};
        const DropoutMasks masks = sample_dropout(3, shape, 0.5, 4, 0);

        const NetworkParams g = backward(p, forward(p, inputs, &masks), labels);
        REQUIRE(g.shape == p.shape);
        const auto gb = g.buffers();
        const auto pb = p.buffers();
        REQUIRE(gb.size() == pb.size());

        const double h = 1e-5;
        double worst = 0.0;
        for (std::size_t b = 0; b < pb.size(); ++b) {
            REQUIRE(gb[b]->shape == pb[b]->shape);
            for (std::size_t i = 0; i < pb[b]->size(); ++i) {
                NetworkParams q = p;
                double& w = q.buffers()[b]->values[i];
                const double w0 = w;
                w = w0 + h;
                const double up = loss_of(q, inputs, labels, &masks);
                w = w0 - h;
                const double down = loss_of(q, inputs, labels, &masks);
                const double numeric = (up - down) / (2 * h);
                const double analytic = gb[b]->values[i];
                const double denom = std::max({std::abs(numeric), std::abs(analytic), 1e-6});
                worst = std::max(worst, std::abs(numeric - analytic) / denom);
            }
        }
        CHECK(worst < 1e-4);
    }
}

TEST_CASE("backward with a saturated correct prediction is zero") {
    NetworkParams p = init_params(2, tiny_shape());
    std::fill(p.out_w.values.begin(), p.out_w.values.end(), 0.0);
    p.out_b.values = {0.0, 1000.0, 0.0};
    std::mt19937_64 rng(4);
    const std::vector<FlowInputPair> inputs{random_input(8, rng)};
    const std::vector<EmotionClass> labels{EmotionClass::Positive};
    const NetworkParams g = backward(p, forward(p, inputs), labels);
    for (const Tensor* t : g.buffers())
        for (double v : t->values) REQUIRE(v == 0.0);

    CHECK_THROWS_AS(backward(p, ForwardCache{}, labels), ValidationError);
}

TEST_CASE("adam_step") {
    const NetworkShape shape = tiny_shape();
    TrainConfig cfg;
    cfg.architecture = shape;

    NetworkParams p = init_params(3, shape);
    const NetworkParams p0 = p;
    AdamState st = AdamState::zeros(shape);
    adam_step(p, NetworkParams::zeros(shape), st, cfg);
    CHECK(p == p0);
    CHECK(st.t == 1);

    std::mt19937_64 rng(6);
    NetworkParams g1 = NetworkParams::zeros(shape), g2 = NetworkParams::zeros(shape);
    for (Tensor* t : g1.buffers())
        for (double& v : t->values) v = std::uniform_real_distribution<double>(-2, 2)(rng);
    for (Tensor* t : g2.buffers())
        for (double& v : t->values) v = std::uniform_real_distribution<double>(-2, 2)(rng);

    NetworkParams q = p0;
    AdamState s = AdamState::zeros(shape);
    adam_step(q, g1, s, cfg);
    adam_step(q, g2, s, cfg);
    CHECK(s.t == 2);

    const double lr = cfg.learning_rate, b1 = 0.9, b2 = 0.999, eps = 1e-8;
    const auto qb = q.buffers();
    const auto pb = p0.buffers();
    const auto g1b = g1.buffers();
    const auto g2b = g2.buffers();
    for (std::size_t b = 0; b < qb.size(); ++b)
        for (std::size_t i = 0; i < qb[b]->size(); ++i) {
            const double a = g1b[b]->values[i], c = g2b[b]->values[i];
            double w = pb[b]->values[i];
            // Step one: bias-corrected moments are g and g^2.
            w -= lr * a / (std::abs(a) + eps);
            const double m = b1 * (1 - b1) * a + (1 - b1) * c;
            const double v = b2 * (1 - b2) * a * a + (1 - b2) * c * c;
            w -= lr * (m / (1 - b1 * b1)) / (std::sqrt(v / (1 - b2 * b2)) + eps);
            REQUIRE(qb[b]->values[i] == doctest::Approx(w).epsilon(1e-14));
        }

    NetworkParams r = p0;
    AdamState s2 = AdamState::zeros(shape);
    adam_step(r, g1, s2, cfg);
    adam_step(r, g2, s2, cfg);
    CHECK(r == q);
    CHECK(s2 == s);

    NetworkParams wrong = NetworkParams::zeros(NetworkShape{});
    CHECK_THROWS_AS(adam_step(r, wrong, s2, cfg), ValidationError);
}

TEST_CASE("train config validation") {
    TrainConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    cfg.learning_rate = 0.0;
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
    cfg = TrainConfig{};
    cfg.dropout_keep = 0.0;
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
    cfg.dropout_keep = 1.5;
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
    cfg = TrainConfig{};
    cfg.epochs = 0;
    CHECK_THROWS_AS(cfg.validate(), ValidationError);
    CHECK_THROWS_AS(train({}, TrainConfig{}), ValidationError);
}

TEST_CASE("dropout masks") {
    const NetworkShape shape = tiny_shape();
    const DropoutMasks a = sample_dropout(4, shape, 0.5, 9, 3);
    const DropoutMasks b = sample_dropout(4, shape, 0.5, 9, 3);
    const DropoutMasks c = sample_dropout(4, shape, 0.5, 9, 4);
    CHECK(a.fc1 == b.fc1);
    CHECK(a.fc2 == b.fc2);
    CHECK_FALSE(a.fc1 == c.fc1);
    for (Eigen::Index i = 0; i < a.fc1.size(); ++i) CHECK((a.fc1.data()[i] == 0.0 || a.fc1.data()[i] == 2.0));

    const DropoutMasks big = sample_dropout(200, NetworkShape{}, 0.5, 1, 0);
    const double kept = (big.fc1.array() > 0.0).cast<double>().mean();
    CHECK(kept == doctest::Approx(0.5).epsilon(0.01));
}

TEST_CASE("training is deterministic and overfits a separable set") {
    const std::vector<LabeledInput> samples = separable_samples(12, 8);
    TrainConfig cfg;
    cfg.epochs = 500;
    cfg.seed = 21;
    const TrainResult a = train(samples, cfg);
    CHECK(a.loss_curve.size() == 500);
    CHECK(a.state.t == 500);

    std::size_t correct = 0;
    for (const LabeledInput& s : samples) correct += predict(a.params, s.input).label == s.label;
    CHECK(correct == samples.size());
    CHECK(a.loss_curve.back() < a.loss_curve.front());

    cfg.epochs = 20;
    const TrainResult b = train(samples, cfg);
    const TrainResult c = train(samples, cfg);
    CHECK(b.loss_curve == c.loss_curve);
    CHECK(b.params == c.params);
    for (int e = 0; e < 20; ++e) CHECK(b.loss_curve[e] == a.loss_curve[e]);
}

TEST_CASE("loss on one repeated sample decreases after warm-up") {
    std::vector<LabeledInput> samples(4, separable_samples(1, 3).front());
    TrainConfig cfg;
    cfg.epochs = 60;
    cfg.dropout_keep = 1.0;
    cfg.seed = 5;
    const TrainResult r = train(samples, cfg);
    for (std::size_t e = 11; e < r.loss_curve.size(); ++e) CHECK(r.loss_curve[e] <= r.loss_curve[e - 1]);
}

TEST_CASE("training reports divergence") {
    TrainConfig cfg;
    cfg.architecture = tiny_shape();
    cfg.epochs = 3;
    std::mt19937_64 rng(1);
    std::vector<LabeledInput> samples;
    for (int i = 0; i < 3; ++i) samples.push_back({random_input(8, rng), static_cast<EmotionClass>(i)});
    samples[1].input.v[10] = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(train(samples, cfg), DivergenceError);
    CHECK_THROWS_AS(forward(init_params(1, tiny_shape()), samples[1].input), DivergenceError);
}

TEST_CASE("predict tie rules and probabilities") {
    NetworkParams p = init_params(4);
    std::fill(p.out_w.values.begin(), p.out_w.values.end(), 0.0);
    FlowInputPair in;
    in.u.assign(784, 0.2);
    in.v.assign(784, -0.1);

    p.out_b.values = {5.0, 0.0, 0.0};
    CHECK(predict(p, in).label == EmotionClass::Negative);
    p.out_b.values = {0.0, 1.0, 1.0};
    CHECK(predict(p, in).label == EmotionClass::Positive);
    p.out_b.values = {2.0, 2.0, 2.0};
    CHECK(predict(p, in).label == EmotionClass::Negative);

    const NetworkParams q = init_params(6);
    std::mt19937_64 rng(8);
    std::vector<FlowInputPair> batch;
    for (int i = 0; i < 3; ++i) batch.push_back(random_input(28, rng));
    const auto preds = predict(q, batch);
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto& pr = preds[i];
        CHECK(pr.probs[0] + pr.probs[1] + pr.probs[2] == doctest::Approx(1.0).epsilon(1e-6));
        const PredictionResult single = predict(q, batch[i]);
        CHECK(single.label == pr.label);
        for (int k = 0; k < 3; ++k) CHECK(single.probs[k] == doctest::Approx(pr.probs[k]).epsilon(1e-12));
        CHECK(pr.label == argmax_class(pr.probs));
    }
    CHECK(argmax_class(std::vector<double>{1.0, 3.0, 3.0}) == EmotionClass::Positive);
}

TEST_CASE("checkpoint round trip and corruption") {
    testutil::TempDir dir("ckpt");
    NetworkShape shape = tiny_shape();
    shape.streams = Streams::VerticalOnly;
    TrainConfig cfg;
    cfg.architecture = shape;
    cfg.epochs = 4;
    std::mt19937_64 rng(2);
    std::vector<LabeledInput> samples;
    for (int i = 0; i < 3; ++i) samples.push_back({random_input(8, rng), static_cast<EmotionClass>(i)});
    const TrainResult r = train(samples, cfg);

    const auto path = dir / "model.ckpt";
    save_checkpoint(r.params, r.state, path);
    const auto [params, state] = load_checkpoint(path);
    CHECK(params == r.params);
    CHECK(state == r.state);
    save_checkpoint(params, state, dir / "again.ckpt");
    const std::string bytes = testutil::read_file(path);
    CHECK(bytes == testutil::read_file(dir / "again.ckpt"));
    CHECK(bytes.substr(0, 4) == "AXCK");

    testutil::write_file(dir / "short.ckpt", bytes.substr(0, bytes.size() / 2));
    CHECK_THROWS_AS(load_checkpoint(dir / "short.ckpt"), FormatError);

    std::string flipped = bytes;
    flipped[bytes.size() / 2] ^= 0x10;
    testutil::write_file(dir / "flip.ckpt", flipped);
    CHECK_THROWS_AS(load_checkpoint(dir / "flip.ckpt"), FormatError);

    std::string versioned = bytes;
    versioned[4] = 9;
    testutil::write_file(dir / "v9.ckpt", versioned);
    try {
        load_checkpoint(dir / "v9.ckpt");
        FAIL("expected a version error");
    } catch (const FormatError& e) {
        const std::string msg = e.what();
        CHECK(msg.find('9') != std::string::npos);
        CHECK(msg.find('1') != std::string::npos);
    }

    testutil::write_file(dir / "junk.ckpt", "not a model");
    CHECK_THROWS_AS(load_checkpoint(dir / "junk.ckpt"), FormatError);
    CHECK_THROWS_AS(load_checkpoint(dir / "missing.ckpt"), IoError);

    AdamState mismatched = AdamState::zeros(tiny_shape());
    CHECK_THROWS_AS(save_checkpoint(r.params, mismatched, dir / "bad.ckpt"), ValidationError);
}
