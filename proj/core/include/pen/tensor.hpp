#pragma once

#include <cstddef>
#include <algorithm>
#include <span>
#include <string>
#include <vector>

#include "pen/error.hpp"

namespace pen {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

// Dense row-major tensor. Scalars have an empty shape and one element.
template <typename T>
struct Tensor {
    Shape shape;
    std::vector<T> data;

    Tensor() : data(1, T{0}) {}
    explicit Tensor(Shape s, T fill = T{0}) : shape(std::move(s)), data(numel(shape), fill) {}
    Tensor(Shape s, std::vector<T> values) : shape(std::move(s)), data(std::move(values))
    {
        if (data.size() != numel(shape)) {
            throw ShapeError("tensor: " + std::to_string(data.size()) + " values for shape " +
                             to_string(shape));
        }
    }

    static Tensor scalar(T v) { return Tensor(Shape{}, std::vector<T>{v}); }

    std::size_t size() const { return data.size(); }
    std::size_t rank() const { return shape.size(); }
    std::size_t dim(std::size_t axis) const { return shape.at(axis); }
    // Size of the last axis (1 for scalars).
    std::size_t cols() const { return shape.empty() ? 1 : shape.back(); }
    // Product of all leading axes.
    std::size_t rows() const { return shape.empty() ? 1 : size() / shape.back(); }

    T& operator[](std::size_t i) { return data[i]; }
    const T& operator[](std::size_t i) const { return data[i]; }
    T item() const
    {
        if (data.size() != 1) {
            throw ShapeError("item() on tensor of shape " + to_string(shape));
        }
        return data[0];
    }

    std::span<T> values() { return data; }
    std::span<const T> values() const { return data; }

    bool operator==(const Tensor&) const = default;
};

// Trainable leaf: a named tensor plus its accumulated gradient.
template <typename T>
struct Parameter {
    std::string name;
    Tensor<T> value;
    Tensor<T> grad;

    Parameter(std::string n, Tensor<T> v)
        : name(std::move(n)), value(std::move(v)), grad(value.shape, T{0})
    {
    }

    void zero_grad() { std::fill(grad.data.begin(), grad.data.end(), T{0}); }
};

template <typename To, typename From>
Tensor<To> tensor_cast(const Tensor<From>& src)
{
    std::vector<To> out(src.data.begin(), src.data.end());
    return Tensor<To>(src.shape, std::move(out));
}

}  // namespace pen
