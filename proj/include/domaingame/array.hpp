// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "domaingame/abi.hpp"

namespace domaingame::inline DOMAINGAME_ABI {

#ifdef DOMAINGAME_DOUBLE
using Real = double;
#else
using Real = float;
#endif

struct ShapeError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

inline std::string shape_string(const std::vector<int>& shape);

/// Dense row-major n-d array. The last two dimensions are treated as the
/// spatial (H, W) axes by the geometry module.
template <class T>
class Array {
public:
    using value_type = T;

    Array() = default;
    explicit Array(std::vector<int> shape, T fill = T{}) : shape_(std::move(shape))
    {
        for (int d : shape_) {
            if (d < 0) throw ShapeError("negative dimension in shape " + shape_string(shape_));
        }
        data_.assign(count(shape_), fill);
    }
    Array(std::vector<int> shape, std::vector<T> values) : shape_(std::move(shape)), data_(std::move(values))
    {
        if (data_.size() != count(shape_)) {
            throw ShapeError("value count " + std::to_string(data_.size()) + " does not match shape " +
                             shape_string(shape_));
        }
    }

    static std::size_t count(const std::vector<int>& shape)
    {
        return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                               [](std::size_t a, int b) { return a * static_cast<std::size_t>(b); });
    }

    const std::vector<int>& shape() const noexcept { return shape_; }
    int rank() const noexcept { return static_cast<int>(shape_.size()); }
    /// Negative indices count from the back.
    int dim(int i) const
    {
        const int r = rank();
        const int k = i < 0 ? r + i : i;
        if (k < 0 || k >= r) throw ShapeError("dimension index out of range for " + shape_string(shape_));
        return shape_[static_cast<std::size_t>(k)];
    }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    std::span<T> values() noexcept { return data_; }
    std::span<const T> values() const noexcept { return data_; }
    T* data() noexcept { return data_.data(); }
    const T* data() const noexcept { return data_.data(); }
    std::vector<T>& storage() noexcept { return data_; }
    const std::vector<T>& storage() const noexcept { return data_; }

    T& operator[](std::size_t i) noexcept { return data_[i]; }
    const T& operator[](std::size_t i) const noexcept { return data_[i]; }

    T& at(int i, int j) { return data_[idx2(i, j)]; }
    const T& at(int i, int j) const { return data_[idx2(i, j)]; }
    T& at(int i, int j, int k) { return data_[idx3(i, j, k)]; }
    const T& at(int i, int j, int k) const { return data_[idx3(i, j, k)]; }

    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }
    void reshape(std::vector<int> shape)
    {
        if (count(shape) != data_.size()) {
            throw ShapeError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
        }
        shape_ = std::move(shape);
    }

    bool operator==(const Array& o) const = default;

private:
    std::size_t idx2(int i, int j) const
    {
        return static_cast<std::size_t>(i) * static_cast<std::size_t>(shape_[1]) + static_cast<std::size_t>(j);
    }
    std::size_t idx3(int i, int j, int k) const
    {
        return (static_cast<std::size_t>(i) * static_cast<std::size_t>(shape_[1]) + static_cast<std::size_t>(j)) *
                   static_cast<std::size_t>(shape_[2]) +
               static_cast<std::size_t>(k);
    }

    std::vector<int> shape_;
    std::vector<T> data_;
};

using Tensor = Array<Real>;
using LabelTensor = Array<std::int32_t>;

inline std::string shape_string(const std::vector<int>& shape)
{
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

inline void require_shape(const std::vector<int>& actual, const std::vector<int>& expected, const char* what)
{
    if (actual != expected) {
        throw ShapeError(std::string(what) + ": expected shape " + shape_string(expected) + ", got " +
                         shape_string(actual));
    }
}

} // namespace domaingame
