#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <random>

#include "apexflow/error.hpp"
#include "apexflow/synth.hpp"
#include "apexflow/tvl1flow.hpp"
#include "test_util.hpp"

using namespace apexflow;
using namespace apexflow::flow;

namespace {

double mse(const GrayImage& a, const GrayImage& b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a.values()[i] - b.values()[i];
        acc += d * d;
    }
    return acc / static_cast<double>(a.size());
}

double max_magnitude(const FlowField& f) {
    double m = 0.0;
    for (std::size_t i = 0; i < f.u.size(); ++i) m = std::max(m, std::hypot(f.u.values()[i], f.v.values()[i]));
    return m;
}

FlowField constant_flow(int w, int h, double u, double v) {
    return FlowField(Plane(w, h, u), Plane(w, h, v));
}

GrayImage blob(int w, int h, double cx, double cy, double sigma) {
    GrayImage img(w, h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const double r2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
            img.at(x, y) = 0.2 + 0.6 * std::exp(-r2 / (2 * sigma * sigma));
        }
    return img;
}

std::vector<unsigned char> bytes_of(const std::filesystem::path& p) {
    const std::string s = testutil::read_file(p);
    return {s.begin(), s.end()};
}

}  // namespace

TEST_CASE("pyramid level sizes") {
    const TvL1Params p;
    const auto levels = build_pyramid(GrayImage(170, 140, 0.5), p);
    REQUIRE(levels.size() == 4);
    const int sizes[4][2] = {{170, 140}, {85, 70}, {43, 35}, {22, 18}};
    for (int k = 0; k < 4; ++k) {
        CHECK(levels[k].width() == sizes[k][0]);
        CHECK(levels[k].height() == sizes[k][1]);
        for (double v : levels[k].values()) CHECK(v == doctest::Approx(0.5).epsilon(1e-12));
    }
    TvL1Params one;
    one.n_scales = 1;
    CHECK(build_pyramid(GrayImage(170, 140, 0.5), one).size() == 1);
    CHECK_THROWS_AS(build_pyramid(GrayImage(), p), ValidationError);
}

TEST_CASE("parameter validation") {
    TvL1Params p;
    p.tau = 0.3;
    CHECK_THROWS_AS(p.validate(), ValidationError);
    p = {};
    p.zoom = 1.0;
    CHECK_THROWS_AS(p.validate(), ValidationError);
    p = {};
    p.lambda = 0.0;
    CHECK_THROWS_AS(p.validate(), ValidationError);
    CHECK_NOTHROW(TvL1Params{}.validate());
}

TEST_CASE("warp") {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    GrayImage img(20, 12);
    for (double& v : img.values()) v = u(rng);
    CHECK(warp(img, constant_flow(20, 12, 0, 0)) == img);

    const GrayImage shifted = warp(img, constant_flow(20, 12, 2.0, 0.0));
    for (int y = 0; y < 12; ++y)
        for (int x = 0; x < 18; ++x) CHECK(shifted.at(x, y) == img.at(x + 2, y));
    for (int y = 0; y < 12; ++y) CHECK(shifted.at(19, y) == img.at(19, y));

    GrayImage ramp(16, 16);
    for (int y = 0; y < 16; ++y)
        for (int x = 0; x < 16; ++x) ramp.at(x, y) = 0.03 * x + 0.01 * y;
    const GrayImage half = warp(ramp, constant_flow(16, 16, 0.5, -0.5));
    for (int y = 1; y < 16; ++y)
        for (int x = 0; x < 15; ++x) {
            CHECK(half.at(x, y) == doctest::Approx(0.03 * (x + 0.5) + 0.01 * (y - 0.5)).epsilon(1e-12));
        }
}

TEST_CASE("normalize_pair stretches jointly") {
    GrayImage a(2, 1), b(2, 1);
    a.at(0, 0) = 0.2;
    a.at(1, 0) = 0.4;
    b.at(0, 0) = 0.6;
    b.at(1, 0) = 0.3;
    const auto [na, nb] = normalize_pair(a, b);
    CHECK(na.at(0, 0) == doctest::Approx(0.0));
    CHECK(na.at(1, 0) == doctest::Approx(127.5));
    CHECK(nb.at(0, 0) == doctest::Approx(255.0));
    CHECK(nb.at(1, 0) == doctest::Approx(63.75));
    const auto [ca, cb] = normalize_pair(GrayImage(3, 3, 0.7), GrayImage(3, 3, 0.7));
    for (double v : ca.values()) CHECK(v == 0.0);
    for (double v : cb.values()) CHECK(v == 0.0);
}

TEST_CASE("single level solver") {
    TvL1Params p;
    p.n_scales = 1;
    const GrayImage i0 = blob(48, 48, 22, 24, 6);
    const GrayImage i1 = blob(48, 48, 24, 24, 6);
    const auto [n0, n1] = normalize_pair(i0, i1);

    const FlowField still = tvl1_level(n0, n0, FlowField(48, 48), p);
    CHECK(max_magnitude(still) < 1e-3);

    const FlowField f = tvl1_level(n0, n1, FlowField(48, 48), p);
    CHECK(mean_endpoint_error(f, constant_flow(48, 48, 2.0, 0.0)) < 0.25);
    CHECK(mse(warp(i1, f), i0) < mse(i1, i0));

    CHECK_THROWS_AS(tvl1_level(n0, GrayImage(40, 48), FlowField(48, 48), p), ValidationError);
}

TEST_CASE("coarse-to-fine recovery of a translation") {
    const synth::Texture tex(77);
    const GrayImage i0 = tex.render(64, 64);
    const GrayImage i1 = tex.render_shifted(64, 64, 3.0, -2.0);
    const FlowField f = estimate_flow(i0, i1);
    CHECK(f.width() == 64);
    CHECK(f.height() == 64);
    CHECK(mean_endpoint_error(f, constant_flow(64, 64, 3.0, -2.0)) < 0.3);
    CHECK(max_magnitude(estimate_flow(i0, i0)) < 1e-3);

    const FlowField back = estimate_flow(i1, i0);
    FlowField negated = back;
    for (double& v : negated.u.values()) v = -v;
    for (double& v : negated.v.values()) v = -v;
    CHECK(mean_endpoint_error(f, negated) < 0.2);

    CHECK(estimate_flow(i0, i1) == f);
}

TEST_CASE("resize_to_input") {
    const FlowInputPair c = resize_to_input(constant_flow(170, 140, 1.0, -1.0));
    CHECK(c.size == 28);
    REQUIRE(c.u.size() == 784);
    for (std::size_t i = 0; i < c.u.size(); ++i) {
        CHECK(c.u[i] == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(c.v[i] == doctest::Approx(-1.0).epsilon(1e-12));
    }

    FlowField small(28, 28);
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(-3, 3);
    for (double& v : small.u.values()) v = u(rng);
    for (double& v : small.v.values()) v = u(rng);
    const FlowInputPair same = resize_to_input(small);
    CHECK(same.u == small.u.values());
    CHECK(same.v == small.v.values());

    FlowField ramp(56, 42);
    for (int y = 0; y < 42; ++y)
        for (int x = 0; x < 56; ++x) {
            ramp.u.at(x, y) = 0.5 * x;
            ramp.v.at(x, y) = -0.25 * y + 1.0;
        }
    const FlowInputPair r = resize_to_input(ramp);
    for (int y = 1; y < 27; ++y)
        for (int x = 1; x < 27; ++x) {
            const double sx = (x + 0.5) * 56.0 / 28.0 - 0.5;
            const double sy = (y + 0.5) * 42.0 / 28.0 - 0.5;
            CHECK(r.u[y * 28 + x] == doctest::Approx(0.5 * sx).epsilon(1e-12));
            CHECK(r.v[y * 28 + x] == doctest::Approx(-0.25 * sy + 1.0).epsilon(1e-12));
        }
}

TEST_CASE(".flo layout") {
    testutil::TempDir tmp;
    FlowField f(2, 1);
    f.u.at(0, 0) = 1;
    f.v.at(0, 0) = 2;
    f.u.at(1, 0) = 3;
    f.v.at(1, 0) = 4;
    write_flo(f, tmp / "a.flo");
    const auto b = bytes_of(tmp / "a.flo");
    REQUIRE(b.size() == 12 + 16);
    const unsigned char header[12] = {0x50, 0x49, 0x45, 0x48, 2, 0, 0, 0, 1, 0, 0, 0};  // "PIEH"
    CHECK(std::memcmp(b.data(), header, 12) == 0);
    const float values[4] = {1, 2, 3, 4};
    for (int i = 0; i < 4; ++i) {
        float got;
        std::memcpy(&got, b.data() + 12 + 4 * i, 4);
        CHECK(got == values[i]);
    }
    CHECK(read_flo(tmp / "a.flo") == f);
}

TEST_CASE(".flo round trip and corruption") {
    testutil::TempDir tmp;
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(-5, 5);
    FlowField f(13, 7);
    for (double& v : f.u.values()) v = u(rng);
    for (double& v : f.v.values()) v = u(rng);
    write_flo(f, tmp / "f.flo");
    const FlowField once = read_flo(tmp / "f.flo");
    for (std::size_t i = 0; i < f.u.size(); ++i) {
        CHECK(once.u.values()[i] == static_cast<double>(static_cast<float>(f.u.values()[i])));
        CHECK(once.v.values()[i] == static_cast<double>(static_cast<float>(f.v.values()[i])));
    }
    write_flo(once, tmp / "g.flo");
    CHECK(bytes_of(tmp / "f.flo") == bytes_of(tmp / "g.flo"));
    CHECK(read_flo(tmp / "g.flo") == once);

    auto bad = bytes_of(tmp / "f.flo");
    bad[0] ^= 0xff;
    testutil::write_file(tmp / "magic.flo", std::string(bad.begin(), bad.end()));
    CHECK_THROWS_AS(read_flo(tmp / "magic.flo"), FormatError);

    const auto good = bytes_of(tmp / "f.flo");
    testutil::write_file(tmp / "short.flo", std::string(good.begin(), good.end() - 5));
    CHECK_THROWS_AS(read_flo(tmp / "short.flo"), FormatError);
    testutil::write_file(tmp / "tiny.flo", std::string(good.begin(), good.begin() + 6));
    CHECK_THROWS_AS(read_flo(tmp / "tiny.flo"), FormatError);
    CHECK_THROWS_AS(read_flo(tmp / "absent.flo"), IoError);
}

TEST_CASE("flow colour coding") {
    const RgbImage white = flow_to_color(FlowField(5, 4));
    for (auto c : white.pixels) CHECK(c == 255);

    FlowField f(6, 5);
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(-2, 2);
    for (double& v : f.u.values()) v = u(rng);
    for (double& v : f.v.values()) v = u(rng);
    FlowField g = f;
    for (double& v : g.u.values()) v *= 7.5;
    for (double& v : g.v.values()) v *= 7.5;
    CHECK(flow_to_color(f).pixels == flow_to_color(g).pixels);

    const RgbImage right = flow_to_color(constant_flow(3, 3, 1.5, 0.0));
    for (int y = 0; y < 3; ++y)
        for (int x = 0; x < 3; ++x) {
            CHECK(right.pixel(x, y)[0] == 255);
            CHECK(right.pixel(x, y)[1] == 0);
            CHECK(right.pixel(x, y)[2] == 0);
        }
}
