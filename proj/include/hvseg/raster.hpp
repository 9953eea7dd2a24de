#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "hvseg/error.hpp"

namespace hvseg {

// Dense single-channel row-major raster. x = column, y = row.
template <typename T>
class Raster {
public:
    using value_type = T;

    Raster() = default;
    Raster(int width, int height, T fill = T{})
        : width_(width), height_(height) {
        require(width >= 0 && height >= 0, "raster dimensions must be non-negative");
        data_.assign(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), fill);
    }
    Raster(int width, int height, std::vector<T> data)
        : width_(width), height_(height), data_(std::move(data)) {
        require(width >= 0 && height >= 0, "raster dimensions must be non-negative");
        require(data_.size() == static_cast<std::size_t>(width) * static_cast<std::size_t>(height),
                "raster data size does not match dimensions");
    }

    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    bool contains(int x, int y) const noexcept {
        return x >= 0 && y >= 0 && x < width_ && y < height_;
    }
    std::size_t index(int x, int y) const noexcept {
        return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
               static_cast<std::size_t>(x);
    }

    T& operator()(int x, int y) noexcept { return data_[index(x, y)]; }
    const T& operator()(int x, int y) const noexcept { return data_[index(x, y)]; }
    T& operator[](std::size_t i) noexcept { return data_[i]; }
    const T& operator[](std::size_t i) const noexcept { return data_[i]; }

    // Border-replicating accessor.
    const T& clamped(int x, int y) const noexcept {
        x = x < 0 ? 0 : (x >= width_ ? width_ - 1 : x);
        y = y < 0 ? 0 : (y >= height_ ? height_ - 1 : y);
        return data_[index(x, y)];
    }

    std::span<T> data() noexcept { return data_; }
    std::span<const T> data() const noexcept { return data_; }
    std::vector<T>& storage() noexcept { return data_; }
    const std::vector<T>& storage() const noexcept { return data_; }

    bool same_shape(const auto& other) const noexcept {
        return width_ == other.width() && height_ == other.height();
    }

    // Copy of the rectangle [x, x+w) x [y, y+h); pixels outside the raster take `fill`.
    Raster crop(int x, int y, int w, int h, T fill = T{}) const {
        Raster out(w, h, fill);
        for (int r = 0; r < h; ++r) {
            const int sy = y + r;
            if (sy < 0 || sy >= height_) continue;
            for (int c = 0; c < w; ++c) {
                const int sx = x + c;
                if (sx >= 0 && sx < width_) out(c, r) = (*this)(sx, sy);
            }
        }
        return out;
    }

    friend bool operator==(const Raster& a, const Raster& b) {
        return a.width_ == b.width_ && a.height_ == b.height_ && a.data_ == b.data_;
    }

private:
    int width_ = 0;
    int height_ = 0;
    std::vector<T> data_;
};

using LabelMap = Raster<std::uint32_t>;   // 0 = background
using ProbabilityMap = Raster<float>;
using Mask = Raster<std::uint8_t>;

template <typename A, typename B>
void require_same_shape(const A& a, const B& b, const char* what) {
    require(a.width() == b.width() && a.height() == b.height(),
            std::string(what) + ": shape mismatch (" + std::to_string(a.width()) + "x" +
                std::to_string(a.height()) + " vs " + std::to_string(b.width()) + "x" +
                std::to_string(b.height()) + ")");
}

// Interleaved 8-bit image (1..4 channels).
struct Image {
    int width = 0;
    int height = 0;
    int channels = 0;
    std::vector<std::uint8_t> pixels;

    Image() = default;
    Image(int w, int h, int c, std::uint8_t fill = 0)
        : width(w), height(h), channels(c),
          pixels(static_cast<std::size_t>(w) * h * c, fill) {}

    std::uint8_t* at(int x, int y) noexcept {
        return pixels.data() + (static_cast<std::size_t>(y) * width + x) * channels;
    }
    const std::uint8_t* at(int x, int y) const noexcept {
        return pixels.data() + (static_cast<std::size_t>(y) * width + x) * channels;
    }
    bool empty() const noexcept { return pixels.empty(); }
    friend bool operator==(const Image&, const Image&) = default;
};

}  // namespace hvseg
