#pragma once

#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "qsdt/core/errors.hpp"

namespace qsdt {

// Dense row-major float32 tensor. Values are immutable by convention once a
// tensor has been handed to an operation; ops return fresh tensors.
class Tensor {
  public:
    Tensor() = default;

    explicit Tensor(std::vector<int> shape, float fill = 0.0f) : shape_(std::move(shape)) {
        validate_shape();
        data_.assign(static_cast<size_t>(numel()), fill);
    }

    static Tensor from(std::vector<int> shape, std::vector<float> data) {
        Tensor t;
        t.shape_ = std::move(shape);
        t.validate_shape();
        if (static_cast<int64_t>(data.size()) != t.numel())
            throw ShapeError("data length " + std::to_string(data.size()) +
                             " does not match shape product " + std::to_string(t.numel()));
        t.data_ = std::move(data);
        return t;
    }

    // 1-D convenience for literals in tests and small fixtures.
    static Tensor row(std::initializer_list<float> v) {
        return from({static_cast<int>(v.size())}, std::vector<float>(v));
    }

    const std::vector<int>& shape() const { return shape_; }
    int ndim() const { return static_cast<int>(shape_.size()); }
    int dim(int i) const { return shape_.at(static_cast<size_t>(i)); }

    int64_t numel() const {
        int64_t n = 1;
        for (int d : shape_) n *= d;
        return shape_.empty() ? (data_.empty() ? 0 : static_cast<int64_t>(data_.size())) : n;
    }

    float* data() { return data_.data(); }
    const float* data() const { return data_.data(); }
    std::vector<float>& vec() { return data_; }
    const std::vector<float>& vec() const { return data_; }

    float& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
    float operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

    float& at(int i) { return data_[static_cast<size_t>(i)]; }
    float& at(int i, int j) { return data_[static_cast<size_t>(i) * dim(1) + j]; }
    float& at(int i, int j, int k) {
        return data_[(static_cast<size_t>(i) * dim(1) + j) * dim(2) + k];
    }
    float& at(int i, int j, int k, int l) {
        return data_[((static_cast<size_t>(i) * dim(1) + j) * dim(2) + k) * dim(3) + l];
    }
    float at(int i) const { return data_[static_cast<size_t>(i)]; }
    float at(int i, int j) const { return data_[static_cast<size_t>(i) * dim(1) + j]; }
    float at(int i, int j, int k) const {
        return data_[(static_cast<size_t>(i) * dim(1) + j) * dim(2) + k];
    }
    float at(int i, int j, int k, int l) const {
        return data_[((static_cast<size_t>(i) * dim(1) + j) * dim(2) + k) * dim(3) + l];
    }

    // Reinterprets the buffer under a new shape with equal element count.
    Tensor reshaped(std::vector<int> shape) const {
        Tensor t;
        t.shape_ = std::move(shape);
        t.validate_shape();
        if (t.numel() != numel()) throw ShapeError("reshape changes element count");
        t.data_ = data_;
        return t;
    }

    void fill(float v) { std::fill(data_.begin(), data_.end(), v); }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    std::string shape_str() const {
        std::string s = "[";
        for (size_t i = 0; i < shape_.size(); ++i) {
            if (i) s += "x";
            s += std::to_string(shape_[i]);
        }
        return s + "]";
    }

  private:
    void validate_shape() const {
        for (int d : shape_)
            if (d < 1) throw ShapeError("dimension must be >= 1, got " + std::to_string(d));
    }

    std::vector<int> shape_;
    std::vector<float> data_;
};

// Integer code tensor used by the weight quantizer (codes fit int8 for b <= 8).
struct CodeTensor {
    std::vector<int> shape;
    std::vector<int8_t> codes;

    int64_t numel() const {
        int64_t n = 1;
        for (int d : shape) n *= d;
        return n;
    }
};

}  // namespace qsdt
