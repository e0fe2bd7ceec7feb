#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace neurophys {

using Shape = std::vector<std::size_t>;

std::size_t shape_product(const Shape& shape);
std::string shape_str(const Shape& shape);
Shape row_major_strides(const Shape& shape);

// Dense N-dimensional array of doubles in row-major order.
class Tensor {
   public:
    Tensor() = default;
    explicit Tensor(Shape shape);  // zero-filled
    Tensor(Shape shape, std::vector<double> data);
    static Tensor scalar(double v);
    static Tensor full(Shape shape, double v);

    const Shape& shape() const { return shape_; }
    std::size_t ndim() const { return shape_.size(); }
    std::size_t size() const { return data_.size(); }
    std::size_t dim(std::size_t axis) const { return shape_[axis]; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
    bool all_finite() const;

    // Scalar extraction; throws UsageError unless size() == 1.
    double item() const;

    // Copy with a new shape of identical element count.
    Tensor reshaped(Shape new_shape) const;

    void fill(double v);

   private:
    Shape shape_;
    std::vector<double> data_;
};

void check_same_shape(const Tensor& a, const Tensor& b, const char* op);

}  // namespace neurophys
