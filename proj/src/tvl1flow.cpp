#include "apexflow/tvl1flow.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include "apexflow/error.hpp"

namespace apexflow::flow {

namespace {

constexpr double kGradIsZero = 1e-10;
constexpr double kZoomSigmaZero = 0.6;

struct Gradient {
    Plane x;
    Plane y;
};

// Central differences, replicated borders.
Gradient centered_gradient(const Plane& img) {
    const int w = img.width();
    const int h = img.height();
    Gradient g{Plane(w, h), Plane(w, h)};
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            g.x.at(x, y) = 0.5 * (img.clamped(x + 1, y) - img.clamped(x - 1, y));
            g.y.at(x, y) = 0.5 * (img.clamped(x, y + 1) - img.clamped(x, y - 1));
        }
    }
    return g;
}

// Forward differences with a zero last row/column; adjoint of divergence().
void forward_gradient(const Plane& f, Plane& fx, Plane& fy) {
    const int w = f.width();
    const int h = f.height();
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            fx.at(x, y) = x + 1 < w ? f.at(x + 1, y) - f.at(x, y) : 0.0;
            fy.at(x, y) = y + 1 < h ? f.at(x, y + 1) - f.at(x, y) : 0.0;
        }
    }
}

void divergence(const Plane& p1, const Plane& p2, Plane& div) {
    const int w = p1.width();
    const int h = p1.height();
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double dx;
            if (x == 0) {
                dx = p1.at(x, y);
            } else if (x == w - 1) {
                dx = -p1.at(x - 1, y);
            } else {
                dx = p1.at(x, y) - p1.at(x - 1, y);
            }
            double dy;
            if (y == 0) {
                dy = p2.at(x, y);
            } else if (y == h - 1) {
                dy = -p2.at(x, y - 1);
            } else {
                dy = p2.at(x, y) - p2.at(x, y - 1);
            }
            div.at(x, y) = dx + dy;
        }
    }
}

// Median of the pixel and its four direct neighbours.
Plane median5(const Plane& in) {
    Plane out(in.width(), in.height());
    std::array<double, 5> window{};
    for (int y = 0; y < in.height(); ++y) {
        for (int x = 0; x < in.width(); ++x) {
            window = {in.at(x, y), in.clamped(x - 1, y), in.clamped(x + 1, y), in.clamped(x, y - 1),
                      in.clamped(x, y + 1)};
            std::nth_element(window.begin(), window.begin() + 2, window.end());
            out.at(x, y) = window[2];
        }
    }
    return out;
}

Plane warp_plane(const Plane& img, const FlowField& flow) {
    Plane out(img.width(), img.height());
    for (int y = 0; y < img.height(); ++y) {
        for (int x = 0; x < img.width(); ++x) {
            out.at(x, y) = sample_bilinear(img, x + flow.u.at(x, y), y + flow.v.at(x, y));
        }
    }
    return out;
}

void require_same_size(const Plane& a, const Plane& b, const char* what) {
    if (a.width() != b.width() || a.height() != b.height()) {
        throw ValidationError(std::string(what) + ": dimension mismatch (" + std::to_string(a.width()) + "x" +
                              std::to_string(a.height()) + " vs " + std::to_string(b.width()) + "x" +
                              std::to_string(b.height()) + ")");
    }
}

// .flo fields are little-endian regardless of host order.
template <typename T>
void put_le(std::ofstream& out, T value) {
    static_assert(sizeof(T) == 4);
    std::uint32_t bits;
    std::memcpy(&bits, &value, 4);
    const unsigned char bytes[4] = {static_cast<unsigned char>(bits & 0xff), static_cast<unsigned char>((bits >> 8) & 0xff),
                                    static_cast<unsigned char>((bits >> 16) & 0xff),
                                    static_cast<unsigned char>((bits >> 24) & 0xff)};
    out.write(reinterpret_cast<const char*>(bytes), 4);
}

template <typename T>
T get_le(const unsigned char* bytes) {
    static_assert(sizeof(T) == 4);
    const std::uint32_t bits = static_cast<std::uint32_t>(bytes[0]) | (static_cast<std::uint32_t>(bytes[1]) << 8) |
                               (static_cast<std::uint32_t>(bytes[2]) << 16) |
                               (static_cast<std::uint32_t>(bytes[3]) << 24);
    T value;
    std::memcpy(&value, &bits, 4);
    return value;
}

// Middlebury colour wheel: RY, YG, GC, CB, BM, MR segments.
std::vector<std::array<double, 3>> make_color_wheel() {
    constexpr int RY = 15, YG = 6, GC = 4, CB = 11, BM = 13, MR = 6;
    std::vector<std::array<double, 3>> wheel;
    for (int i = 0; i < RY; ++i) wheel.push_back({255.0, 255.0 * i / RY, 0.0});
    for (int i = 0; i < YG; ++i) wheel.push_back({255.0 - 255.0 * i / YG, 255.0, 0.0});
    for (int i = 0; i < GC; ++i) wheel.push_back({0.0, 255.0, 255.0 * i / GC});
    for (int i = 0; i < CB; ++i) wheel.push_back({0.0, 255.0 - 255.0 * i / CB, 255.0});
    for (int i = 0; i < BM; ++i) wheel.push_back({255.0 * i / BM, 0.0, 255.0});
    for (int i = 0; i < MR; ++i) wheel.push_back({255.0, 0.0, 255.0 - 255.0 * i / MR});
    return wheel;
}

}  // namespace

FlowField::FlowField(Plane u_, Plane v_) : u(std::move(u_)), v(std::move(v_)) {
    require_same_size(u, v, "flow field");
}

void TvL1Params::validate() const {
    if (!(lambda > 0.0)) throw ValidationError("tvl1: lambda must be > 0");
    if (!(tau > 0.0 && tau <= 0.25)) throw ValidationError("tvl1: tau must be in (0, 0.25]");
    if (!(theta > 0.0)) throw ValidationError("tvl1: theta must be > 0");
    if (!(zoom > 0.0 && zoom < 1.0)) throw ValidationError("tvl1: zoom must be in (0, 1)");
    if (n_scales < 1) throw ValidationError("tvl1: n_scales must be >= 1");
    if (n_warps < 1) throw ValidationError("tvl1: n_warps must be >= 1");
    if (!(epsilon > 0.0)) throw ValidationError("tvl1: epsilon must be > 0");
    if (max_inner_iterations < 1) throw ValidationError("tvl1: max_inner_iterations must be >= 1");
}

std::vector<GrayImage> build_pyramid(const GrayImage& image, const TvL1Params& params) {
    if (image.empty()) {
        throw ValidationError("cannot build a pyramid from an empty image");
    }
    params.validate();
    std::vector<GrayImage> levels{image};
    const double sigma = kZoomSigmaZero * std::sqrt(1.0 / (params.zoom * params.zoom) - 1.0);
    for (int s = 1; s < params.n_scales; ++s) {
        const GrayImage& prev = levels.back();
        const int w = static_cast<int>(std::ceil(prev.width() * params.zoom));
        const int h = static_cast<int>(std::ceil(prev.height() * params.zoom));
        if (std::min(w, h) < kMinPyramidSide) {
            break;
        }
        levels.push_back(resize_bilinear(gaussian_blur(prev, sigma), w, h));
    }
    return levels;
}

GrayImage warp(const GrayImage& image, const FlowField& flow) {
    require_same_size(image, flow.u, "warp");
    return warp_plane(image, flow);
}

std::pair<GrayImage, GrayImage> normalize_pair(const GrayImage& first, const GrayImage& second) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (const Plane* p : {&first, &second}) {
        for (double v : p->values()) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    }
    GrayImage a(first.width(), first.height());
    GrayImage b(second.width(), second.height());
    const double range = hi - lo;
    if (range > 0.0) {
        const double scale = 255.0 / range;
        for (std::size_t i = 0; i < first.size(); ++i) a.values()[i] = (first.values()[i] - lo) * scale;
        for (std::size_t i = 0; i < second.size(); ++i) b.values()[i] = (second.values()[i] - lo) * scale;
    }
    return {std::move(a), std::move(b)};
}

FlowField tvl1_level(const GrayImage& I0, const GrayImage& I1, const FlowField& init, const TvL1Params& params) {
    require_same_size(I0, I1, "tvl1_level");
    require_same_size(I0, init.u, "tvl1_level initial flow");
    params.validate();

    const int w = I0.width();
    const int h = I0.height();
    const std::size_t n = I0.size();
    const double lt = params.lambda * params.theta;
    const double taut = params.tau / params.theta;
    const double stop = params.epsilon * params.epsilon;

    FlowField flow = init;
    std::vector<double>& u1 = flow.u.values();
    std::vector<double>& u2 = flow.v.values();

    const Gradient grad1 = centered_gradient(I1);

    Plane p11(w, h), p12(w, h), p21(w, h), p22(w, h);
    Plane div1(w, h), div2(w, h);
    Plane u1x(w, h), u1y(w, h), u2x(w, h), u2y(w, h);
    std::vector<double> v1(n), v2(n), grad_sq(n), rho_c(n);

    for (int warp_i = 0; warp_i < params.n_warps; ++warp_i) {
        const Plane I1w = warp_plane(I1, flow);
        Plane I1wx = warp_plane(grad1.x, flow);
        Plane I1wy = warp_plane(grad1.y, flow);
        auto& gx = I1wx.values();
        auto& gy = I1wy.values();
        // Correspondences leaving the frame carry no data; smoothing fills them in.
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                const double wx = x + flow.u.at(x, y);
                const double wy = y + flow.v.at(x, y);
                if (wx < 0.0 || wx > w - 1.0 || wy < 0.0 || wy > h - 1.0) {
                    const std::size_t i = static_cast<std::size_t>(y) * w + x;
                    gx[i] = 0.0;
                    gy[i] = 0.0;
                }
            }
        }
        for (std::size_t i = 0; i < n; ++i) {
            grad_sq[i] = gx[i] * gx[i] + gy[i] * gy[i];
            rho_c[i] = grad_sq[i] > 0.0 ? I1w.values()[i] - gx[i] * u1[i] - gy[i] * u2[i] - I0.values()[i] : 0.0;
        }

        for (int iter = 0; iter < params.max_inner_iterations; ++iter) {
            // Pointwise thresholding of the linearised data term.
            for (std::size_t i = 0; i < n; ++i) {
                const double rho = rho_c[i] + gx[i] * u1[i] + gy[i] * u2[i];
                double d1 = 0.0;
                double d2 = 0.0;
                if (rho < -lt * grad_sq[i]) {
                    d1 = lt * gx[i];
                    d2 = lt * gy[i];
                } else if (rho > lt * grad_sq[i]) {
                    d1 = -lt * gx[i];
                    d2 = -lt * gy[i];
                } else if (grad_sq[i] > kGradIsZero) {
                    const double f = -rho / grad_sq[i];
                    d1 = f * gx[i];
                    d2 = f * gy[i];
                }
                v1[i] = u1[i] + d1;
                v2[i] = u2[i] + d2;
            }

            divergence(p11, p12, div1);
            divergence(p21, p22, div2);
            double error = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                const double new1 = v1[i] + params.theta * div1.values()[i];
                const double new2 = v2[i] + params.theta * div2.values()[i];
                error += (new1 - u1[i]) * (new1 - u1[i]) + (new2 - u2[i]) * (new2 - u2[i]);
                u1[i] = new1;
                u2[i] = new2;
            }
            error /= static_cast<double>(n);

            // Dual ascent with reprojection.
            forward_gradient(flow.u, u1x, u1y);
            forward_gradient(flow.v, u2x, u2y);
            for (std::size_t i = 0; i < n; ++i) {
                const double a1x = u1x.values()[i], a1y = u1y.values()[i];
                const double a2x = u2x.values()[i], a2y = u2y.values()[i];
                const double ng1 = 1.0 + taut * std::sqrt(a1x * a1x + a1y * a1y);
                const double ng2 = 1.0 + taut * std::sqrt(a2x * a2x + a2y * a2y);
                p11.values()[i] = (p11.values()[i] + taut * a1x) / ng1;
                p12.values()[i] = (p12.values()[i] + taut * a1y) / ng1;
                p21.values()[i] = (p21.values()[i] + taut * a2x) / ng2;
                p22.values()[i] = (p22.values()[i] + taut * a2y) / ng2;
            }

            if (error < stop) {
                break;
            }
        }

        flow.u = median5(flow.u);
        flow.v = median5(flow.v);
    }
    return flow;
}

FlowField estimate_flow(const GrayImage& onset, const GrayImage& apex, const TvL1Params& params) {
    require_same_size(onset, apex, "estimate_flow");
    params.validate();
    const auto [I0, I1] = normalize_pair(onset, apex);
    const std::vector<GrayImage> pyr0 = build_pyramid(I0, params);
    const std::vector<GrayImage> pyr1 = build_pyramid(I1, params);

    const int coarsest = static_cast<int>(pyr0.size()) - 1;
    FlowField flow(pyr0[coarsest].width(), pyr0[coarsest].height());
    for (int s = coarsest; s >= 0; --s) {
        flow = tvl1_level(pyr0[s], pyr1[s], flow, params);
        if (s > 0) {
            const int w = pyr0[s - 1].width();
            const int h = pyr0[s - 1].height();
            FlowField up(resize_bilinear(flow.u, w, h), resize_bilinear(flow.v, w, h));
            for (double& x : up.u.values()) x /= params.zoom;
            for (double& x : up.v.values()) x /= params.zoom;
            flow = std::move(up);
        }
    }
    return flow;
}

FlowInputPair resize_to_input(const FlowField& flow, int size) {
    FlowInputPair pair;
    pair.size = size;
    pair.u = resize_bilinear(flow.u, size, size).values();
    pair.v = resize_bilinear(flow.v, size, size).values();
    return pair;
}

void write_flo(const FlowField& flow, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot write " + path.string());
    }
    put_le(out, kFloTag);
    put_le(out, static_cast<std::int32_t>(flow.width()));
    put_le(out, static_cast<std::int32_t>(flow.height()));
    for (int y = 0; y < flow.height(); ++y) {
        for (int x = 0; x < flow.width(); ++x) {
            put_le(out, static_cast<float>(flow.u.at(x, y)));
            put_le(out, static_cast<float>(flow.v.at(x, y)));
        }
    }
    if (!out) {
        throw IoError("short write to " + path.string());
    }
}

FlowField read_flo(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open " + path.string());
    }
    const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (bytes.size() < 12) {
        throw FormatError(path.string() + ": truncated .flo header");
    }
    const float tag = get_le<float>(bytes.data());
    if (tag != kFloTag) {
        throw FormatError(path.string() + ": bad .flo magic");
    }
    const std::int32_t w = get_le<std::int32_t>(bytes.data() + 4);
    const std::int32_t h = get_le<std::int32_t>(bytes.data() + 8);
    if (w <= 0 || h <= 0 || w > 100000 || h > 100000) {
        throw FormatError(path.string() + ": implausible .flo dimensions");
    }
    const std::size_t expected = 12 + static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * 8;
    if (bytes.size() < expected) {
        throw FormatError(path.string() + ": truncated .flo payload");
    }
    FlowField flow(w, h);
    const unsigned char* p = bytes.data() + 12;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            flow.u.at(x, y) = get_le<float>(p);
            flow.v.at(x, y) = get_le<float>(p + 4);
            p += 8;
        }
    }
    return flow;
}

RgbImage flow_to_color(const FlowField& flow) {
    static const std::vector<std::array<double, 3>> wheel = make_color_wheel();
    const int ncols = static_cast<int>(wheel.size());

    double max_rad = 0.0;
    for (std::size_t i = 0; i < flow.u.size(); ++i) {
        max_rad = std::max(max_rad, std::hypot(flow.u.values()[i], flow.v.values()[i]));
    }

    RgbImage img{flow.width(), flow.height(), std::vector<std::uint8_t>(flow.u.size() * 3, 255)};
    if (max_rad <= 0.0) {
        return img;
    }
    for (int y = 0; y < flow.height(); ++y) {
        for (int x = 0; x < flow.width(); ++x) {
            const double fx = flow.u.at(x, y) / max_rad;
            const double fy = flow.v.at(x, y) / max_rad;
            const double rad = std::hypot(fx, fy);
            const double a = std::atan2(-fy, -fx) / M_PI;
            const double fk = (a + 1.0) / 2.0 * (ncols - 1);
            const int k0 = static_cast<int>(fk);
            const int k1 = (k0 + 1) % ncols;
            const double f = fk - k0;
            std::uint8_t* px = img.pixel(x, y);
            for (int c = 0; c < 3; ++c) {
                const double col0 = wheel[k0][c] / 255.0;
                const double col1 = wheel[k1][c] / 255.0;
                double col = (1.0 - f) * col0 + f * col1;
                col = rad <= 1.0 ? 1.0 - rad * (1.0 - col) : col * 0.75;
                px[c] = static_cast<std::uint8_t>(std::lround(255.0 * col));
            }
        }
    }
    return img;
}

double mean_endpoint_error(const FlowField& a, const FlowField& b) {
    require_same_size(a.u, b.u, "endpoint error");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.u.size(); ++i) {
        acc += std::hypot(a.u.values()[i] - b.u.values()[i], a.v.values()[i] - b.v.values()[i]);
    }
    return acc / static_cast<double>(a.u.size());
}

}  // namespace apexflow::flow
