#include "sodkit/tensor.hpp"

#include <cmath>
#include <sstream>

#include "sodkit/errors.hpp"

namespace sodkit {

std::string Shape::str() const {
    std::ostringstream os;
    os << "(" << n << "," << c << "," << h << "," << w << ")";
    return os.str();
}

Tensor::Tensor(Shape shape, float fill) : shape_(shape), data_(shape.numel(), fill) {
    if (shape.n < 0 || shape.c < 0 || shape.h < 0 || shape.w < 0)
        throw DimensionError("negative tensor extent " + shape.str());
}

Tensor::Tensor(Shape shape, std::vector<float> values) : shape_(shape), data_(std::move(values)) {
    if (data_.size() != shape.numel())
        throw DimensionError("value count " + std::to_string(data_.size()) + " does not match shape " +
                             shape.str());
}

void Tensor::fill(float v) {
    for (auto& x : data_) x = v;
}

void Tensor::add_(const Tensor& other) {
    if (other.shape_ != shape_)
        throw DimensionError("add_: shape " + other.shape_.str() + " vs " + shape_.str());
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
}

double Tensor::sum() const {
    double s = 0.0;
    for (float x : data_) s += x;
    return s;
}

double Tensor::squared_norm() const {
    double s = 0.0;
    for (float x : data_) s += static_cast<double>(x) * x;
    return s;
}

bool Tensor::all_finite() const {
    for (float x : data_)
        if (!std::isfinite(x)) return false;
    return true;
}

}  // namespace sodkit
