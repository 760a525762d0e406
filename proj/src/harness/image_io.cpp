#include "pcstyle/image_io.hpp"

#include <algorithm>
#include <cmath>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "pcstyle/errors.hpp"

namespace pcstyle {
namespace {

cv::Mat load(const std::filesystem::path& path, int flags) {
    if (!std::filesystem::is_regular_file(path)) throw IoError("cannot read '" + path.string() + "': no such file");
    cv::Mat m = cv::imread(path.string(), flags);
    if (m.empty()) throw IoError("cannot decode image '" + path.string() + "'");
    return m;
}

/// Planar float image from an interleaved 8/16-bit Mat in RGB (or gray) order.
ImageBuffer from_mat(const cv::Mat& m) {
    const double scale = m.depth() == CV_16U ? 1.0 / 65535.0 : 1.0 / 255.0;
    cv::Mat f;
    m.convertTo(f, CV_32F, scale);
    ImageBuffer out(f.rows, f.cols, f.channels());
    for (int y = 0; y < f.rows; ++y) {
        const float* row = f.ptr<float>(y);
        for (int x = 0; x < f.cols; ++x)
            for (int c = 0; c < f.channels(); ++c) out.at(c, y, x) = row[x * f.channels() + c];
    }
    return out;
}

cv::Mat to_mat8(const ImageBuffer& img) {
    cv::Mat m(img.height, img.width, CV_8UC(img.channels));
    for (int y = 0; y < img.height; ++y) {
        auto* row = m.ptr<std::uint8_t>(y);
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < img.channels; ++c)
                row[x * img.channels + c] =
                    static_cast<std::uint8_t>(std::lround(std::clamp(img.at(c, y, x), 0.0f, 1.0f) * 255.0f));
    }
    return m;
}

void save(const std::filesystem::path& path, const cv::Mat& m) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    bool ok = false;
    try {
        ok = cv::imwrite(path.string(), m, {cv::IMWRITE_PNG_COMPRESSION, 6});
    } catch (const cv::Exception& e) {
        throw IoError("cannot write '" + path.string() + "': " + e.what());
    }
    if (!ok) throw IoError("cannot write '" + path.string() + "'");
}

} // namespace

ImageBuffer read_image(const std::filesystem::path& path) {
    cv::Mat m = load(path, cv::IMREAD_ANYDEPTH | cv::IMREAD_ANYCOLOR);
    if (m.depth() != CV_8U && m.depth() != CV_16U) throw IoError("unsupported bit depth in '" + path.string() + "'");
    switch (m.channels()) {
    case 1:
        break;
    case 3:
        cv::cvtColor(m, m, cv::COLOR_BGR2RGB);
        break;
    case 4:
        cv::cvtColor(m, m, cv::COLOR_BGRA2RGB);
        break;
    default:
        throw IoError("unsupported channel count in '" + path.string() + "'");
    }
    return from_mat(m);
}

MaskMap read_mask(const std::filesystem::path& path) {
    const cv::Mat m = load(path, cv::IMREAD_GRAYSCALE);
    MaskMap out(m.rows, m.cols);
    for (int y = 0; y < m.rows; ++y) {
        const auto* row = m.ptr<std::uint8_t>(y);
        for (int x = 0; x < m.cols; ++x) out.at(y, x) = row[x] > 127 ? 1.0f : 0.0f;
    }
    return out;
}

void write_png(const std::filesystem::path& path, const ImageBuffer& image) {
    image.validate("write_png");
    cv::Mat m = to_mat8(image);
    if (image.channels == 3) cv::cvtColor(m, m, cv::COLOR_RGB2BGR);
    save(path, m);
}

void write_mask_png(const std::filesystem::path& path, const MaskMap& mask) {
    cv::Mat m(mask.height, mask.width, CV_8UC1);
    for (int y = 0; y < mask.height; ++y)
        for (int x = 0; x < mask.width; ++x)
            m.at<std::uint8_t>(y, x) = static_cast<std::uint8_t>(std::lround(std::clamp(mask.at(y, x), 0.0f, 1.0f) * 255.0f));
    save(path, m);
}

ImageBuffer resize_image_area(const ImageBuffer& image, int height, int width) {
    if (height < 1 || width < 1) throw InvalidArgument("resize_image_area: target dims must be positive");
    if (image.height == height && image.width == width) return image;
    ImageBuffer out(height, width, image.channels);
    for (int c = 0; c < image.channels; ++c) {
        const cv::Mat src(image.height, image.width, CV_32F,
                          const_cast<float*>(image.values.data()) + static_cast<std::size_t>(c) * image.height * image.width);
        cv::Mat dst(height, width, CV_32F, out.values.data() + static_cast<std::size_t>(c) * height * width);
        cv::resize(src, dst, dst.size(), 0, 0, cv::INTER_AREA);
    }
    for (auto& v : out.values) v = std::clamp(v, 0.0f, 1.0f);
    return out;
}

MaskMap resize_mask_nearest(const MaskMap& mask, int height, int width) {
    if (height < 1 || width < 1) throw InvalidArgument("resize_mask_nearest: target dims must be positive");
    MaskMap out(height, width);
    // Sample at pixel centres: source index floor((i + 0.5) * src / dst).
    for (int y = 0; y < height; ++y) {
        const int sy = std::min(mask.height - 1, static_cast<int>((2LL * y + 1) * mask.height / (2LL * height)));
        for (int x = 0; x < width; ++x) {
            const int sx = std::min(mask.width - 1, static_cast<int>((2LL * x + 1) * mask.width / (2LL * width)));
            out.at(y, x) = mask.at(sy, sx);
        }
    }
    return out;
}

std::pair<int, int> capped_dims(int height, int width, int max_side) {
    const int longer = std::max(height, width);
    if (max_side <= 0 || longer <= max_side) return {height, width};
    const double s = static_cast<double>(max_side) / longer;
    return {std::max(1, static_cast<int>(std::lround(height * s))), std::max(1, static_cast<int>(std::lround(width * s)))};
}

} // namespace pcstyle
