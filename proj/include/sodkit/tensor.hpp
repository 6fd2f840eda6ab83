#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace sodkit {

// Every tensor is rank 4. Activations are (batch, channels, height, width),
// convolution kernels are (out, in, kh, kw) and per-channel vectors are (C,1,1,1).
struct Shape {
    int n = 0;
    int c = 0;
    int h = 0;
    int w = 0;

    std::size_t numel() const {
        return static_cast<std::size_t>(n) * c * h * w;
    }
    std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
    bool operator==(const Shape&) const = default;
    std::string str() const;
};

class Tensor {
  public:
    Tensor() = default;
    explicit Tensor(Shape shape, float fill = 0.0f);
    Tensor(Shape shape, std::vector<float> values);

    const Shape& shape() const { return shape_; }
    std::size_t numel() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    float* data() { return data_.data(); }
    const float* data() const { return data_.data(); }
    std::span<float> values() { return data_; }
    std::span<const float> values() const { return data_; }

    float& at(int n, int c, int h, int w) { return data_[offset(n, c, h, w)]; }
    float at(int n, int c, int h, int w) const { return data_[offset(n, c, h, w)]; }

    // Pointer to the (n, c) plane.
    float* plane(int n, int c) { return data_.data() + offset(n, c, 0, 0); }
    const float* plane(int n, int c) const { return data_.data() + offset(n, c, 0, 0); }

    void fill(float v);
    void add_(const Tensor& other);

    double sum() const;
    double squared_norm() const;
    bool all_finite() const;

  private:
    std::size_t offset(int n, int c, int h, int w) const {
        return ((static_cast<std::size_t>(n) * shape_.c + c) * shape_.h + h) * shape_.w + w;
    }

    Shape shape_;
    std::vector<float> data_;
};

}  // namespace sodkit
