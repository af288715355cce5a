#pragma once

// Binary PGM (P5) and PPM (P6) with maxval 255. Pixel tensors are [C, H, W]
// in [-1, 1]; byte values map linearly onto that range. Writing a sampled
// latent rescales its actual min/max so the output always uses full range.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "taiyi/error.hpp"
#include "taiyi/tensor.hpp"

namespace taiyi {

namespace detail {

inline uint8_t to_byte(double v) {
    const double scaled = (v + 1.0) * 0.5 * 255.0;
    const double clamped = std::min(255.0, std::max(0.0, scaled));
    return static_cast<uint8_t>(std::lround(clamped));
}

}  // namespace detail

// Serializes [C, H, W] with C in {1, 3}; 1 channel writes P5, 3 writes P6.
inline std::string image_to_pnm(const Tensor& image) {
    if (image.shape().size() != 3) throw Error("image io: expected [C, H, W] tensor");
    const size_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
    if (c != 1 && c != 3) throw Error("image io: channel count must be 1 or 3");
    std::ostringstream os;
    os << (c == 1 ? "P5" : "P6") << "\n" << w << " " << h << "\n255\n";
    for (size_t y = 0; y < h; ++y)
        for (size_t x = 0; x < w; ++x)
            for (size_t ch = 0; ch < c; ++ch)
                os.put(static_cast<char>(detail::to_byte(image.at(ch * h * w + y * w + x))));
    return os.str();
}

// Linear rescale of an arbitrary tensor onto [-1, 1] before serialization;
// constant inputs map to -1 (byte 0).
inline std::string rescaled_to_pnm(const Tensor& t) {
    double lo = t.at(0), hi = t.at(0);
    for (size_t i = 0; i < t.numel(); ++i) {
        lo = std::min(lo, t.at(i));
        hi = std::max(hi, t.at(i));
    }
    std::vector<double> scaled(t.numel());
    if (hi > lo) {
        for (size_t i = 0; i < t.numel(); ++i) scaled[i] = 2.0 * (t.at(i) - lo) / (hi - lo) - 1.0;
    } else {
        std::fill(scaled.begin(), scaled.end(), -1.0);
    }
    return image_to_pnm(Tensor::from_data(t.shape(), std::move(scaled)));
}

inline Tensor image_from_pnm(const std::string& bytes) {
    std::istringstream is(bytes);
    std::string magic;
    is >> magic;
    size_t channels;
    if (magic == "P5") {
        channels = 1;
    } else if (magic == "P6") {
        channels = 3;
    } else {
        throw FormatError("image io: bad magic '" + magic + "'");
    }
    size_t w = 0, h = 0, maxval = 0;
    is >> w >> h >> maxval;
    if (!is || w == 0 || h == 0) throw FormatError("image io: bad header dimensions");
    if (maxval != 255) throw FormatError("image io: unsupported maxval " + std::to_string(maxval));
    is.get();  // single whitespace after maxval
    std::vector<double> data(channels * h * w);
    for (size_t y = 0; y < h; ++y)
        for (size_t x = 0; x < w; ++x)
            for (size_t ch = 0; ch < channels; ++ch) {
                const int b = is.get();
                if (b == EOF) throw FormatError("image io: truncated pixel data");
                data[ch * h * w + y * w + x] = static_cast<double>(b) / 255.0 * 2.0 - 1.0;
            }
    return Tensor::from_data({channels, h, w}, std::move(data));
}

inline void write_image(const std::string& path, const Tensor& image) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write image: " + path);
    const std::string bytes = image_to_pnm(image);
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

inline Tensor read_image(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot read image: " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return image_from_pnm(ss.str());
}

}  // namespace taiyi
