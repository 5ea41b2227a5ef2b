#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace fedpm {

/// Dense row-major design matrix and target matrix.
struct Samples {
    std::size_t input_dim = 0;
    std::size_t output_dim = 0;
    std::vector<double> x;
    std::vector<double> y;

    Samples() = default;
    Samples(std::size_t in, std::size_t out) : input_dim(in), output_dim(out) {}

    std::size_t size() const { return input_dim == 0 ? 0 : x.size() / input_dim; }
    bool empty() const { return size() == 0; }

    std::span<const double> input(std::size_t i) const { return {x.data() + i * input_dim, input_dim}; }
    std::span<const double> target(std::size_t i) const { return {y.data() + i * output_dim, output_dim}; }

    void push_back(std::span<const double> in, std::span<const double> out) {
        if (in.size() != input_dim || out.size() != output_dim) {
            throw std::invalid_argument("Samples::push_back: dimension mismatch");
        }
        x.insert(x.end(), in.begin(), in.end());
        y.insert(y.end(), out.begin(), out.end());
    }
};

}  // namespace fedpm
