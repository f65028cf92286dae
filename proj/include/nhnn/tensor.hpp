#ifndef NHNN_TENSOR_HPP
#define NHNN_TENSOR_HPP

#include <cstddef>
#include <vector>

namespace nhnn {

// Dense row-major tensor of doubles.
struct Tensor {
    std::vector<int> shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(std::vector<int> s);

    std::size_t size() const { return data.size(); }
    double* ptr() { return data.data(); }
    const double* ptr() const { return data.data(); }

    // 2-d accessors (shape = {rows, cols})
    double& at(int r, int c) { return data[static_cast<std::size_t>(r) * shape[1] + c]; }
    double at(int r, int c) const { return data[static_cast<std::size_t>(r) * shape[1] + c]; }

    void fill(double v);
    bool all_finite() const;
};

std::size_t shape_numel(const std::vector<int>& shape);

}  // namespace nhnn

#endif
