// Timing comparison of the OpenMP kernels against their serial reference
// implementations, plus an end-to-end forward/backward throughput figure.

#include <chrono>
#include <cstdio>
#include <vector>

#include "nhnn/dpgmm.hpp"
#include "nhnn/model.hpp"
#include "nhnn/neural.hpp"
#include "nhnn/rng.hpp"

using namespace nhnn;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

void bench_conv(int T, int reps) {
    Rng rng(1);
    DilatedConv1d conv(128, 128, 8, 4);
    conv.init_params(rng);
    Tensor x({128, T}), y({128, T}), dy({128, T}), dx({128, T});
    for (double& v : x.data) v = rng.normal();
    for (double& v : dy.data) v = rng.normal();

    auto t0 = Clock::now();
    for (int r = 0; r < reps; ++r) conv1d_forward(conv, x.ptr(), T, y.ptr());
    const double fwd_omp = seconds_since(t0);

    t0 = Clock::now();
    for (int r = 0; r < reps; ++r) ref::conv1d_forward(conv, x.ptr(), T, y.ptr());
    const double fwd_ref = seconds_since(t0);

    t0 = Clock::now();
    for (int r = 0; r < reps; ++r) conv1d_backward(conv, x.ptr(), T, dy.ptr(), dx.ptr());
    const double bwd_omp = seconds_since(t0);

    t0 = Clock::now();
    for (int r = 0; r < reps; ++r) ref::conv1d_backward(conv, x.ptr(), T, dy.ptr(), dx.ptr());
    const double bwd_ref = seconds_since(t0);

    const double macs = 128.0 * 128 * 8 * T * reps;
    std::printf("conv 128x128 k8 d4 T=%d  fwd omp %.3fs (%.2f GMAC/s) ref %.3fs | bwd omp %.3fs ref %.3fs\n",
                T, fwd_omp, macs / fwd_omp * 1e-9, fwd_ref, bwd_omp, bwd_ref);
}

void bench_responsibilities(int n, int d, int k, int reps) {
    Rng rng(2);
    DpGmmModel model;
    model.Ttrunc = k;
    model.d = d;
    model.means = Tensor({k, d});
    model.variances = Tensor({k, d});
    model.weights.assign(k, 1.0 / k);
    model.active_mask.assign(k, 1);
    for (double& v : model.means.data) v = rng.normal();
    for (double& v : model.variances.data) v = 1.0 + rng.uniform();
    Tensor X({n, d});
    for (double& v : X.data) v = rng.normal();

    auto t0 = Clock::now();
    for (int r = 0; r < reps; ++r) responsibilities(model, X);
    std::printf("responsibilities n=%d d=%d k=%d: %.3fs for %d reps\n", n, d, k,
                seconds_since(t0), reps);
}

void bench_conv_batch(int T, int batch, int reps) {
    Rng rng(4);
    DilatedConv1d conv(128, 128, 8, 4);
    conv.init_params(rng);
    std::vector<int> lengths(batch, T);
    BatchLayout lay = make_batch_layout(lengths);
    Tensor xcat({128, lay.total}), xcol({128 * 8, lay.total}), y, dy({128, lay.total}), dxcol;
    for (double& v : xcat.data) v = rng.normal();
    for (double& v : dy.data) v = rng.normal();

    auto t0 = Clock::now();
    for (int r = 0; r < reps; ++r) {
        conv_im2col(conv, xcat.ptr(), lay, xcol.ptr());
        conv1d_forward_cols(conv, xcol, y);
    }
    const double fwd = seconds_since(t0);
    t0 = Clock::now();
    for (int r = 0; r < reps; ++r) conv1d_backward_cols(conv, xcol, dy, &dxcol);
    const double bwd = seconds_since(t0);
    const double macs = 128.0 * 128 * 8 * lay.total * reps;
    std::printf("conv batch %dxT=%d  fwd %.3fs (%.2f GMAC/s) | bwd %.3fs (%.2f GMAC/s x3)\n",
                batch, T, fwd, macs / fwd * 1e-9, bwd, 3.0 * macs / bwd * 1e-9);
}

void bench_dcnn_batch_step(int T, int batch, int reps) {
    Rng rng(5);
    DcnnModel model = DcnnModel::make(40, 3, rng);
    std::vector<Tensor> xs(batch, Tensor({40, T}));
    for (Tensor& x : xs)
        for (double& v : x.data) v = rng.normal();
    std::vector<const Tensor*> ptrs;
    for (Tensor& x : xs) ptrs.push_back(&x);
    std::vector<int> labels(batch);
    for (int i = 0; i < batch; ++i) labels[i] = i % 3;
    auto t0 = Clock::now();
    for (int r = 0; r < reps; ++r) {
        BatchCache cache;
        dcnn_forward_batch(model, ptrs, cache);
        dcnn_backward_batch(model, cache, labels, 1.0 / batch);
    }
    const double dt = seconds_since(t0);
    std::printf("dcnn batched fwd+bwd T=%d batch=%d: %.1f samples/s\n", T, batch,
                reps * static_cast<double>(batch) / dt);
}

void bench_dcnn_step(int T, int reps) {
    Rng rng(3);
    DcnnModel model = DcnnModel::make(40, 3, rng);
    Tensor x({40, T});
    for (double& v : x.data) v = rng.normal();
    auto params = model.params();
    auto t0 = Clock::now();
    for (int r = 0; r < reps; ++r) {
        ForwardCache cache;
        dcnn_forward(model, x, &cache);
        dcnn_backward(model, cache, r % 3, 1.0);
    }
    const double dt = seconds_since(t0);
    std::printf("dcnn fwd+bwd T=%d: %.1f samples/s\n", T, reps / dt);
}

}  // namespace

int main() {
    bench_conv(100, 200);
    bench_conv(12, 2000);
    bench_conv_batch(10, 64, 100);
    bench_responsibilities(2000, 88, 10, 50);
    bench_dcnn_step(12, 500);
    bench_dcnn_step(30, 300);
    bench_dcnn_batch_step(10, 64, 30);
    bench_dcnn_batch_step(30, 64, 15);
    return 0;
}
