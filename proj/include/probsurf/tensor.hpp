#pragma once

#include "probsurf/error.hpp"

#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

namespace probsurf {

/// Dense row-major array of doubles with a runtime shape.
struct Tensor
{
    std::vector<int> shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(std::vector<int> s, double fill = 0.0) : shape(std::move(s))
    {
        data.assign(numel(shape), fill);
    }

    static std::size_t numel(const std::vector<int>& s)
    {
        return std::accumulate(s.begin(), s.end(), std::size_t{1},
                               [](std::size_t a, int b) { return a * static_cast<std::size_t>(b); });
    }

    std::size_t size() const { return data.size(); }
    double& operator[](std::size_t i) { return data[i]; }
    double operator[](std::size_t i) const { return data[i]; }
    double* ptr() { return data.data(); }
    const double* ptr() const { return data.data(); }

    void zero() { std::fill(data.begin(), data.end(), 0.0); }

    std::string shape_string() const
    {
        std::string s = "[";
        for (std::size_t i = 0; i < shape.size(); ++i)
            s += (i ? "," : "") + std::to_string(shape[i]);
        return s + "]";
    }

    bool operator==(const Tensor&) const = default;
};

} // namespace probsurf
