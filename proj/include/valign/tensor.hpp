#pragma once

#include <cstddef>
#include <cstdint>
#include <numeric>
#include <vector>

#include "valign/errors.hpp"

namespace valign {

// Dense row-major double tensor. Shapes are checked at construction; the data
// buffer is always shape-product long.
struct Tensor {
    std::vector<std::int64_t> shape;
    std::vector<double> data;

    Tensor() = default;

    explicit Tensor(std::vector<std::int64_t> s) : shape(std::move(s)) {
        data.assign(static_cast<std::size_t>(numel()), 0.0);
    }

    Tensor(std::vector<std::int64_t> s, std::vector<double> d)
        : shape(std::move(s)), data(std::move(d)) {
        if (static_cast<std::int64_t>(data.size()) != numel())
            throw dimension_error("tensor data length does not match shape");
    }

    std::int64_t numel() const {
        std::int64_t n = 1;
        for (auto d : shape) n *= d;
        return n;
    }

    std::int64_t dim(std::size_t i) const { return shape.at(i); }

    // 2-D accessors
    double& at(std::int64_t r, std::int64_t c) {
        return data[static_cast<std::size_t>(r * shape[1] + c)];
    }
    double at(std::int64_t r, std::int64_t c) const {
        return data[static_cast<std::size_t>(r * shape[1] + c)];
    }

    // 3-D accessors
    double& at(std::int64_t i, std::int64_t j, std::int64_t k) {
        return data[static_cast<std::size_t>((i * shape[1] + j) * shape[2] + k)];
    }
    double at(std::int64_t i, std::int64_t j, std::int64_t k) const {
        return data[static_cast<std::size_t>((i * shape[1] + j) * shape[2] + k)];
    }

    // Reshape without copying; element count must be preserved.
    Tensor reshaped(std::vector<std::int64_t> s) const {
        Tensor t;
        t.shape = std::move(s);
        t.data = data;
        if (t.numel() != numel())
            throw dimension_error("reshape changes element count");
        return t;
    }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }
};

}  // namespace valign
