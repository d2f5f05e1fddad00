#pragma once

#include <cstddef>
#include <initializer_list>
#include <vector>

namespace surro::ad {

// Dense row-major matrix of doubles. Vectors are 1 x n; batched values are
// batch x n. This is the only shape the gradient engine deals in.
struct Tensor {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> v;

    Tensor() = default;
    Tensor(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), v(r * c, fill) {}

    static Tensor row(std::initializer_list<double> xs) {
        Tensor t(1, xs.size());
        std::size_t i = 0;
        for (double x : xs) t.v[i++] = x;
        return t;
    }

    double& at(std::size_t r, std::size_t c) { return v[r * cols + c]; }
    double at(std::size_t r, std::size_t c) const { return v[r * cols + c]; }

    std::size_t size() const { return v.size(); }

    bool same_shape(const Tensor& o) const { return rows == o.rows && cols == o.cols; }
};

} // namespace surro::ad
