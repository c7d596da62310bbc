#pragma once

#include <cmath>
#include <cstddef>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "emph/rng.hpp"

namespace emph {

// Dense row-major matrix/vector. Scalars are 1x1. The autodiff tape keeps its
// own value/grad buffers; Tensor is the persistent storage for parameters and
// plain data.
template <typename T>
struct Tensor {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<T> values;
    std::vector<T> grad;  // empty unless a training step touched it

    Tensor() = default;
    Tensor(std::size_t r, std::size_t c, T fill = T(0))
        : rows(r), cols(c), values(r * c, fill) {}
    Tensor(std::size_t r, std::size_t c, std::vector<T> v)
        : rows(r), cols(c), values(std::move(v)) {
        if (values.size() != rows * cols)
            throw std::invalid_argument("Tensor: value count does not match shape");
    }

    std::size_t size() const { return rows * cols; }

    T& at(std::size_t r, std::size_t c) { return values[r * cols + c]; }
    const T& at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }

    std::string shape_str() const {
        std::ostringstream os;
        os << rows << "x" << cols;
        return os.str();
    }

    bool finite() const {
        for (T v : values)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

    template <typename U>
    Tensor<U> cast() const {
        Tensor<U> out(rows, cols);
        for (std::size_t i = 0; i < values.size(); ++i)
            out.values[i] = static_cast<U>(values[i]);
        return out;
    }
};

// Xavier-uniform fill: limit sqrt(6/(fan_in+fan_out)), fan taken from shape.
template <typename T>
Tensor<T> xavier_uniform(std::size_t rows, std::size_t cols, RngStream& rng) {
    Tensor<T> t(rows, cols);
    double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
    for (auto& v : t.values) v = static_cast<T>(rng.uniform(-limit, limit));
    return t;
}

}  // namespace emph
