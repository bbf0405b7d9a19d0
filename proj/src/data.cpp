#include "hsdnet/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <stdexcept>

namespace hsdnet {

std::array<int, 3> Dataset::image_shape() const {
    if (images.empty()) return {0, 0, 0};
    return {images[0].shape[0], images[0].shape[1], images[0].shape[2]};
}

Tensor stack_images(const Dataset& data, const std::vector<int>& indices) {
    if (indices.empty()) {
        throw std::invalid_argument("stack_images: no indices");
    }
    const auto shape = data.image_shape();
    Tensor batch({static_cast<int>(indices.size()), shape[0], shape[1], shape[2]});
    const std::int64_t stride = static_cast<std::int64_t>(shape[0]) * shape[1] * shape[2];
    for (std::size_t i = 0; i < indices.size(); ++i) {
        const Tensor& img = data.images[static_cast<std::size_t>(indices[i])];
        std::copy(img.data.begin(), img.data.end(),
                  batch.data.begin() + static_cast<std::ptrdiff_t>(i * stride));
    }
    return batch;
}

namespace {

// Shape masks over coordinates normalized to [-1, 1].
double shape_mask(int shape, double x, double y) {
    const double r = std::sqrt(x * x + y * y);
    switch (shape % 8) {
        case 0: return r < 0.55 ? 1.0 : 0.0;                              // disk
        case 1: return (r > 0.38 && r < 0.72) ? 1.0 : 0.0;                // ring
        case 2: return (std::abs(x) < 0.22 || std::abs(y) < 0.22) &&
                       r < 0.85 ? 1.0 : 0.0;                              // cross
        case 3: return std::fmod(std::abs(x + y) * 2.0, 1.0) < 0.5 &&
                       std::abs(x) < 0.85 && std::abs(y) < 0.85 ? 1.0 : 0.0;  // diagonals
        case 4: return std::fmod(std::abs(y) * 2.5 + 0.25, 1.0) < 0.5 &&
                       std::abs(x) < 0.85 ? 1.0 : 0.0;                    // horizontal bars
        case 5: return std::fmod(std::abs(x) * 2.5 + 0.25, 1.0) < 0.5 &&
                       std::abs(y) < 0.85 ? 1.0 : 0.0;                    // vertical bars
        case 6: return (static_cast<int>(std::floor((x + 1.0) * 2.0)) +
                        static_cast<int>(std::floor((y + 1.0) * 2.0))) % 2 == 0 ? 1.0 : 0.0;  // checker
        default: return std::abs(x) < 0.55 && std::abs(y) < 0.55 ? 1.0 : 0.0;  // square
    }
}

}  // namespace

Dataset synth_dataset(const SynthSpec& spec) {
    if (spec.class_count < 4 || spec.class_count % 2 != 0) {
        throw std::invalid_argument("synth_dataset: class count must be even and at least 4");
    }
    const int shapes = spec.class_count / 2;
    if (shapes > 8) {
        throw std::invalid_argument("synth_dataset: at most 16 classes (8 shape patterns)");
    }
    if (spec.per_class < 1 || spec.image_size < 8) {
        throw std::invalid_argument("synth_dataset: need per_class >= 1 and image size >= 8");
    }

    Dataset data;
    data.split = spec.split;
    for (int c = 0; c < spec.class_count; ++c) {
        data.class_list.push_back("c" + std::to_string(c));
    }

    std::uint64_t salt = 0x9e3779b97f4a7c15ull;
    for (char ch : spec.split) salt = salt * 1099511628211ull + static_cast<unsigned char>(ch);
    std::mt19937_64 rng(spec.seed ^ salt);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);

    const int s = spec.image_size;
    for (int c = 0; c < spec.class_count; ++c) {
        const int shape = c % shapes;
        const int family = c / shapes;
        // warm and cool palettes
        const double base_r = family == 0 ? 0.95 : 0.15;
        const double base_g = 0.45;
        const double base_b = family == 0 ? 0.15 : 0.95;
        for (int i = 0; i < spec.per_class; ++i) {
            const double cx = (unit(rng) - 0.5) * 0.35;
            const double cy = (unit(rng) - 0.5) * 0.35;
            const double scale = 0.85 + unit(rng) * 0.3;
            const double intensity = 0.75 + unit(rng) * 0.25;
            const double hue_jitter = (unit(rng) - 0.5) * 0.15;
            const double col[3] = {
                std::clamp(base_r + hue_jitter, 0.0, 1.0),
                std::clamp(base_g + hue_jitter * 0.5, 0.0, 1.0),
                std::clamp(base_b - hue_jitter, 0.0, 1.0),
            };
            Tensor img({3, s, s});
            for (int py = 0; py < s; ++py) {
                for (int px = 0; px < s; ++px) {
                    const double x = ((2.0 * px / (s - 1)) - 1.0 - cx) / scale;
                    const double y = ((2.0 * py / (s - 1)) - 1.0 - cy) / scale;
                    const double m = shape_mask(shape, x, y) * intensity;
                    for (int ch = 0; ch < 3; ++ch) {
                        const double noise = gauss(rng) * 0.04;
                        const double v = 0.1 + m * col[ch] + noise;
                        img.data[static_cast<std::size_t>(ch) * s * s + py * s + px] =
                            std::clamp(v, 0.0, 1.0);
                    }
                }
            }
            data.images.push_back(std::move(img));
            data.labels.push_back(c);
        }
    }
    return data;
}

ChannelStats compute_channel_stats(const Dataset& data) {
    if (data.images.empty()) {
        throw std::invalid_argument("compute_channel_stats: empty dataset");
    }
    const auto shape = data.image_shape();
    if (shape[0] != 3) {
        throw std::invalid_argument("compute_channel_stats: expected 3 channels");
    }
    const std::int64_t plane = static_cast<std::int64_t>(shape[1]) * shape[2];
    ChannelStats stats;
    for (int ch = 0; ch < 3; ++ch) {
        double sum = 0.0, sq = 0.0;
        for (const Tensor& img : data.images) {
            const double* p = img.ptr() + ch * plane;
            for (std::int64_t i = 0; i < plane; ++i) {
                sum += p[i];
                sq += p[i] * p[i];
            }
        }
        const double n = static_cast<double>(plane) * data.images.size();
        const double mean = sum / n;
        const double var = std::max(0.0, sq / n - mean * mean);
        stats.mean[static_cast<std::size_t>(ch)] = mean;
        stats.stdev[static_cast<std::size_t>(ch)] = std::max(1e-8, std::sqrt(var));
    }
    return stats;
}

void standardize(Dataset& data, const ChannelStats& stats) {
    const auto shape = data.image_shape();
    const std::int64_t plane = static_cast<std::int64_t>(shape[1]) * shape[2];
    for (Tensor& img : data.images) {
        for (int ch = 0; ch < 3; ++ch) {
            const double mean = stats.mean[static_cast<std::size_t>(ch)];
            const double inv = 1.0 / stats.stdev[static_cast<std::size_t>(ch)];
            double* p = img.ptr() + ch * plane;
            for (std::int64_t i = 0; i < plane; ++i) {
                p[i] = (p[i] - mean) * inv;
            }
        }
    }
}

Dataset load_cifar_binary(const std::string& path, const std::vector<std::string>& class_list,
                          const std::string& split, const ChannelStats* use_stats,
                          ChannelStats* out_stats) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("load_cifar_binary: cannot open " + path);
    }
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                     std::istreambuf_iterator<char>());
    constexpr std::size_t record = 3073;  // label byte + 3 * 1024 pixel bytes
    if (bytes.empty() || bytes.size() % record != 0) {
        throw std::runtime_error("load_cifar_binary: file size " + std::to_string(bytes.size()) +
                                 " is not a multiple of 3073; truncated record at byte offset " +
                                 std::to_string((bytes.size() / record) * record));
    }

    Dataset data;
    data.split = split;
    data.class_list = class_list;
    const std::size_t count = bytes.size() / record;
    for (std::size_t r = 0; r < count; ++r) {
        const unsigned char* rec = bytes.data() + r * record;
        const int label = rec[0];
        if (label >= static_cast<int>(class_list.size())) {
            throw std::runtime_error("load_cifar_binary: label " + std::to_string(label) +
                                     " in record " + std::to_string(r) + " exceeds the class list");
        }
        Tensor img({3, 32, 32});
        for (std::size_t i = 0; i < 3072; ++i) {
            img.data[i] = static_cast<double>(rec[1 + i]) / 255.0;
        }
        data.images.push_back(std::move(img));
        data.labels.push_back(label);
    }

    ChannelStats stats = use_stats ? *use_stats : compute_channel_stats(data);
    standardize(data, stats);
    if (out_stats) *out_stats = stats;
    return data;
}

}  // namespace hsdnet
