#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sodkit/errors.hpp"

namespace sodkit {

// Row-major single-channel 2-D map.
template <typename T>
struct Plane {
    int height = 0;
    int width = 0;
    std::vector<T> values;

    Plane() = default;
    Plane(int h, int w, T fill = T{}) : height(h), width(w), values(static_cast<std::size_t>(h) * w, fill) {}

    std::size_t size() const { return values.size(); }
    T& at(int y, int x) { return values[static_cast<std::size_t>(y) * width + x]; }
    const T& at(int y, int x) const { return values[static_cast<std::size_t>(y) * width + x]; }
    bool same_shape(const auto& other) const { return height == other.height && width == other.width; }
    bool operator==(const Plane&) const = default;
};

using Mask = Plane<std::uint8_t>;

template <typename A, typename B>
void require_same_shape(const Plane<A>& a, const Plane<B>& b, const char* what) {
    if (!a.same_shape(b))
        throw DimensionError(std::string(what) + ": shape " + std::to_string(a.height) + "x" +
                             std::to_string(a.width) + " vs " + std::to_string(b.height) + "x" +
                             std::to_string(b.width));
}

}  // namespace sodkit
