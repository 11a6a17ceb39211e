#include "apexflow/imageio.hpp"

#include <algorithm>
#include <cmath>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "apexflow/error.hpp"

namespace apexflow::io {

namespace {

constexpr double kLumaR = 0.299;
constexpr double kLumaG = 0.587;
constexpr double kLumaB = 0.114;

template <typename T>
GrayImage to_gray(const cv::Mat& mat, double scale) {
    GrayImage out(mat.cols, mat.rows);
    const int channels = mat.channels();
    for (int y = 0; y < mat.rows; ++y) {
        const T* row = mat.ptr<T>(y);
        for (int x = 0; x < mat.cols; ++x) {
            const T* px = row + static_cast<std::ptrdiff_t>(x) * channels;
            double value;
            if (channels == 1 || channels == 2) {
                value = px[0];
            } else {
                // OpenCV stores colour as BGR(A).
                value = kLumaR * px[2] + kLumaG * px[1] + kLumaB * px[0];
            }
            out.at(x, y) = std::clamp(value / scale, 0.0, 1.0);
        }
    }
    return out;
}

}  // namespace

GrayImage read_gray(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) {
        throw IoError("frame not found: " + path.string());
    }
    cv::Mat mat = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
    if (mat.empty()) {
        throw IoError("cannot decode image: " + path.string());
    }
    switch (mat.depth()) {
        case CV_8U:
            return to_gray<std::uint8_t>(mat, 255.0);
        case CV_16U:
            return to_gray<std::uint16_t>(mat, 65535.0);
        case CV_32F:
            return to_gray<float>(mat, 1.0);
        default:
            throw IoError("unsupported pixel depth in " + path.string());
    }
}

void write_gray_png(const std::filesystem::path& path, const GrayImage& image) {
    cv::Mat mat(image.height(), image.width(), CV_8UC1);
    for (int y = 0; y < image.height(); ++y) {
        auto* row = mat.ptr<std::uint8_t>(y);
        for (int x = 0; x < image.width(); ++x) {
            row[x] = static_cast<std::uint8_t>(std::lround(std::clamp(image.at(x, y), 0.0, 1.0) * 255.0));
        }
    }
    if (!cv::imwrite(path.string(), mat)) {
        throw IoError("cannot write " + path.string());
    }
}

void write_rgb_png(const std::filesystem::path& path, const RgbImage& image) {
    cv::Mat mat(image.height, image.width, CV_8UC3);
    for (int y = 0; y < image.height; ++y) {
        auto* row = mat.ptr<std::uint8_t>(y);
        for (int x = 0; x < image.width; ++x) {
            const std::uint8_t* px = image.pixel(x, y);
            row[3 * x + 0] = px[2];
            row[3 * x + 1] = px[1];
            row[3 * x + 2] = px[0];
        }
    }
    if (!cv::imwrite(path.string(), mat)) {
        throw IoError("cannot write " + path.string());
    }
}

}  // namespace apexflow::io
