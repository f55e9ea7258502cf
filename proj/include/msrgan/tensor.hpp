#pragma once

#include <algorithm>
#include <cassert>
#include <cstdint>
#include <memory>
#include <vector>

#include "msrgan/common.hpp"

namespace msrgan {

int64_t numel(const std::vector<int>& shape);

/// Dense row-major tensor of `real`. Value semantics (deep copy); shapes are
/// small int vectors ([B, C, H, W] for feature maps). The default
/// constructor-from-shape zero-fills; ops whose kernels overwrite every
/// element allocate via uninitialized() to skip the dead write pass.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<int> shape) : Tensor(std::move(shape), /*zero=*/true) {}

    static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }
    static Tensor uninitialized(std::vector<int> shape) { return Tensor(std::move(shape), false); }
    static Tensor full(std::vector<int> shape, real v) {
        Tensor t = uninitialized(std::move(shape));
        t.fill(v);
        return t;
    }
    static Tensor scalar(real v) { return full({1}, v); }

    Tensor(const Tensor& o) : shape_(o.shape_), size_(o.size_) {
        if (o.data_) {
            data_.reset(new real[size_t(size_)]);
            std::copy_n(o.data_.get(), size_, data_.get());
        }
    }
    Tensor& operator=(const Tensor& o) {
        if (this == &o) return *this;
        shape_ = o.shape_;
        size_ = o.size_;
        if (o.data_) {
            data_.reset(new real[size_t(size_)]);
            std::copy_n(o.data_.get(), size_, data_.get());
        } else {
            data_.reset();
        }
        return *this;
    }
    Tensor(Tensor&&) noexcept = default;
    Tensor& operator=(Tensor&&) noexcept = default;

    const std::vector<int>& shape() const { return shape_; }
    int ndim() const { return static_cast<int>(shape_.size()); }
    int dim(int i) const { return shape_[static_cast<size_t>(i)]; }
    int64_t size() const { return size_; }
    bool empty() const { return size_ == 0; }

    real* data() { return data_.get(); }
    const real* data() const { return data_.get(); }
    real& operator[](int64_t i) { return data_[i]; }
    real operator[](int64_t i) const { return data_[i]; }

    void fill(real v) { std::fill_n(data_.get(), size_, v); }
    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

private:
    Tensor(std::vector<int> shape, bool zero) : shape_(std::move(shape)), size_(numel(shape_)) {
        data_.reset(size_ > 0 ? new real[size_t(size_)] : nullptr);
        if (zero) fill(0);
    }

    std::vector<int> shape_;
    int64_t size_ = 0;
    std::unique_ptr<real[]> data_;
};

} // namespace msrgan
