#include "nhnn/neural.hpp"

#include <algorithm>
#include <cstddef>

// Serial reference kernels. These stay deliberately naive (per-output
// nested loops, no tiling) so the OpenMP kernels can be checked against
// them in tests and timed against them in the benchmark.

namespace nhnn {

namespace ref {

void conv1d_forward(const DilatedConv1d& layer, const double* x, int T, double* y) {
    const int k = layer.kernel;
    const int center = k / 2;
    for (int o = 0; o < layer.out_ch; ++o) {
        for (int t = 0; t < T; ++t) {
            double acc = layer.bias.value.data[o];
            for (int c = 0; c < layer.in_ch; ++c) {
                for (int j = 0; j < k; ++j) {
                    const int src = t + (j - center) * layer.dilation;
                    if (src < 0 || src >= T) continue;
                    acc += layer.weight.value.data[(static_cast<std::size_t>(o) * layer.in_ch + c) * k + j]
                         * x[static_cast<std::size_t>(c) * T + src];
                }
            }
            y[static_cast<std::size_t>(o) * T + t] = acc;
        }
    }
}

void conv1d_backward(DilatedConv1d& layer, const double* x, int T, const double* dy, double* dx) {
    const int k = layer.kernel;
    const int center = k / 2;
    if (dx) std::fill(dx, dx + static_cast<std::size_t>(layer.in_ch) * T, 0.0);
    for (int o = 0; o < layer.out_ch; ++o) {
        for (int t = 0; t < T; ++t) {
            const double g = dy[static_cast<std::size_t>(o) * T + t];
            for (int c = 0; c < layer.in_ch; ++c) {
                for (int j = 0; j < k; ++j) {
                    const int src = t + (j - center) * layer.dilation;
                    if (src < 0 || src >= T) continue;
                    const std::size_t wi = (static_cast<std::size_t>(o) * layer.in_ch + c) * k + j;
                    if (!layer.weight.frozen)
                        layer.weight.grad.data[wi] += g * x[static_cast<std::size_t>(c) * T + src];
                    if (dx) dx[static_cast<std::size_t>(c) * T + src] += layer.weight.value.data[wi] * g;
                }
            }
        }
        if (!layer.weight.frozen) {
            double s = 0.0;
            for (int t = 0; t < T; ++t) s += dy[static_cast<std::size_t>(o) * T + t];
            layer.bias.grad.data[o] += s;
        }
    }
}

}  // namespace ref

}  // namespace nhnn
