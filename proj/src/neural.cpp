#include "nhnn/neural.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace nhnn {

DilatedConv1d::DilatedConv1d(int in, int out, int k, int dil)
    : in_ch(in), out_ch(out), kernel(k), dilation(dil),
      weight({out, in, k}), bias({out}) {
    if (k < 1 || dil < 1) throw std::invalid_argument("conv1d: kernel and dilation must be >= 1");
}

void DilatedConv1d::init_params(Rng& rng) {
    const int fan_in = in_ch * kernel;
    const double limit = std::sqrt(6.0 / fan_in);
    for (double& w : weight.value.data) w = rng.uniform(-limit, limit);
    bias.value.fill(0.0);
}

Dense::Dense(int in, int out) : in_dim(in), out_dim(out), weight({out, in}), bias({out}) {}

void Dense::init_params(Rng& rng) {
    const double limit = std::sqrt(6.0 / in_dim);
    for (double& w : weight.value.data) w = rng.uniform(-limit, limit);
    bias.value.fill(0.0);
}

void conv1d_forward(const DilatedConv1d& layer, const double* x, int T, double* y) {
    const int k = layer.kernel;
    const int dil = layer.dilation;
    const int center = k / 2;
    const double* w = layer.weight.value.ptr();
    const double* b = layer.bias.value.ptr();
#pragma omp parallel for schedule(static)
    for (int o = 0; o < layer.out_ch; ++o) {
        double* yo = y + static_cast<std::size_t>(o) * T;
        std::fill(yo, yo + T, b[o]);
        for (int c = 0; c < layer.in_ch; ++c) {
            const double* xc = x + static_cast<std::size_t>(c) * T;
            const double* wo = w + (static_cast<std::size_t>(o) * layer.in_ch + c) * k;
            for (int j = 0; j < k; ++j) {
                const int off = (j - center) * dil;
                const double wj = wo[j];
                const int t0 = std::max(0, -off);
                const int t1 = std::min(T, T - off);
                for (int t = t0; t < t1; ++t) yo[t] += wj * xc[t + off];
            }
        }
    }
}

void conv1d_backward(DilatedConv1d& layer, const double* x, int T, const double* dy, double* dx) {
    const int k = layer.kernel;
    const int dil = layer.dilation;
    const int center = k / 2;
    if (!layer.weight.frozen) {
        double* dw = layer.weight.grad.ptr();
        double* db = layer.bias.grad.ptr();
#pragma omp parallel for schedule(static)
        for (int o = 0; o < layer.out_ch; ++o) {
            const double* dyo = dy + static_cast<std::size_t>(o) * T;
            double s = 0.0;
            for (int t = 0; t < T; ++t) s += dyo[t];
            db[o] += s;
            for (int c = 0; c < layer.in_ch; ++c) {
                const double* xc = x + static_cast<std::size_t>(c) * T;
                double* dwo = dw + (static_cast<std::size_t>(o) * layer.in_ch + c) * k;
                for (int j = 0; j < k; ++j) {
                    const int off = (j - center) * dil;
                    const int t0 = std::max(0, -off);
                    const int t1 = std::min(T, T - off);
                    double acc = 0.0;
                    for (int t = t0; t < t1; ++t) acc += dyo[t] * xc[t + off];
                    dwo[j] += acc;
                }
            }
        }
    }
    if (dx) {
        const double* w = layer.weight.value.ptr();
#pragma omp parallel for schedule(static)
        for (int c = 0; c < layer.in_ch; ++c) {
            double* dxc = dx + static_cast<std::size_t>(c) * T;
            std::fill(dxc, dxc + T, 0.0);
            for (int o = 0; o < layer.out_ch; ++o) {
                const double* dyo = dy + static_cast<std::size_t>(o) * T;
                const double* wo = w + (static_cast<std::size_t>(o) * layer.in_ch + c) * k;
                for (int j = 0; j < k; ++j) {
                    const int off = (j - center) * dil;
                    const double wj = wo[j];
                    // dx[c][t+off] += w * dy[o][t] for valid t
                    const int t0 = std::max(0, -off);
                    const int t1 = std::min(T, T - off);
                    for (int t = t0; t < t1; ++t) dxc[t + off] += wj * dyo[t];
                }
            }
        }
    }
}

void dense_forward(const Dense& layer, const double* x, double* y) {
    const double* w = layer.weight.value.ptr();
    for (int o = 0; o < layer.out_dim; ++o) {
        double acc = layer.bias.value.data[o];
        const double* wo = w + static_cast<std::size_t>(o) * layer.in_dim;
        for (int i = 0; i < layer.in_dim; ++i) acc += wo[i] * x[i];
        y[o] = acc;
    }
}

void dense_backward(Dense& layer, const double* x, const double* dy, double* dx) {
    const double* w = layer.weight.value.ptr();
    if (!layer.weight.frozen) {
        double* dw = layer.weight.grad.ptr();
        for (int o = 0; o < layer.out_dim; ++o) {
            layer.bias.grad.data[o] += dy[o];
            double* dwo = dw + static_cast<std::size_t>(o) * layer.in_dim;
            for (int i = 0; i < layer.in_dim; ++i) dwo[i] += dy[o] * x[i];
        }
    }
    if (dx) {
        std::fill(dx, dx + layer.in_dim, 0.0);
        for (int o = 0; o < layer.out_dim; ++o) {
            const double* wo = w + static_cast<std::size_t>(o) * layer.in_dim;
            for (int i = 0; i < layer.in_dim; ++i) dx[i] += wo[i] * dy[o];
        }
    }
}

void relu_forward(const double* x, int n, double* y) {
    for (int i = 0; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_backward(const double* x, const double* dy, int n, double* dx) {
    for (int i = 0; i < n; ++i) dx[i] = x[i] > 0.0 ? dy[i] : 0.0;
}

void global_max_pool(const double* x, int ch, int T, int length, double* out, int* argmax) {
    if (length < 1) throw std::invalid_argument("global_max_pool: length must be >= 1");
    if (length > T) length = T;
    for (int c = 0; c < ch; ++c) {
        const double* xc = x + static_cast<std::size_t>(c) * T;
        int best = 0;
        for (int t = 1; t < length; ++t)
            if (xc[t] > xc[best]) best = t;
        out[c] = xc[best];
        if (argmax) argmax[c] = best;
    }
}

void global_max_pool_backward(const double* dout, int ch, const int* argmax, int T, double* dx) {
    std::fill(dx, dx + static_cast<std::size_t>(ch) * T, 0.0);
    for (int c = 0; c < ch; ++c) dx[static_cast<std::size_t>(c) * T + argmax[c]] += dout[c];
}

namespace {

// Column-chunked GEMM with per-row accumulation: each C row is owned by one
// thread, so results are bit-identical for any thread count. The column
// chunk keeps the active slice of B cache-resident while all M rows sweep
// over it.
constexpr int kGemmChunk = 128;

// C {M,N} = A {M,K} * B {K,N} (+ bias per row); accumulate adds into C.
// Rows are processed four at a time so each streamed B row feeds four
// accumulator rows (register blocking).
void gemm_nn(int M, int K, int N, const double* A, const double* B, const double* bias,
             double* C, bool accumulate) {
    const int Mb = M / 4 * 4;
    for (int cb = 0; cb < N; cb += kGemmChunk) {
        const int ce = std::min(N, cb + kGemmChunk);
#pragma omp parallel for schedule(static)
        for (int ob = 0; ob < Mb; ob += 4) {
            double* c0 = C + static_cast<std::size_t>(ob) * N;
            double* c1 = c0 + N;
            double* c2 = c1 + N;
            double* c3 = c2 + N;
            if (!accumulate) {
                std::fill(c0 + cb, c0 + ce, bias ? bias[ob] : 0.0);
                std::fill(c1 + cb, c1 + ce, bias ? bias[ob + 1] : 0.0);
                std::fill(c2 + cb, c2 + ce, bias ? bias[ob + 2] : 0.0);
                std::fill(c3 + cb, c3 + ce, bias ? bias[ob + 3] : 0.0);
            }
            const double* a0 = A + static_cast<std::size_t>(ob) * K;
            const double* a1 = a0 + K;
            const double* a2 = a1 + K;
            const double* a3 = a2 + K;
            for (int kk = 0; kk < K; ++kk) {
                const double* br = B + static_cast<std::size_t>(kk) * N;
                const double w0 = a0[kk], w1 = a1[kk], w2 = a2[kk], w3 = a3[kk];
                for (int t = cb; t < ce; ++t) {
                    const double b = br[t];
                    c0[t] += w0 * b;
                    c1[t] += w1 * b;
                    c2[t] += w2 * b;
                    c3[t] += w3 * b;
                }
            }
        }
        for (int o = Mb; o < M; ++o) {
            double* co = C + static_cast<std::size_t>(o) * N;
            if (!accumulate) std::fill(co + cb, co + ce, bias ? bias[o] : 0.0);
            const double* ao = A + static_cast<std::size_t>(o) * K;
            for (int kk = 0; kk < K; ++kk) {
                const double a = ao[kk];
                const double* br = B + static_cast<std::size_t>(kk) * N;
                for (int t = cb; t < ce; ++t) co[t] += a * br[t];
            }
        }
    }
}

// C {K,N} = A^T * B with A {M,K}, B {M,N}; same four-row blocking over K.
void gemm_tn(int M, int K, int N, const double* A, const double* B, double* C) {
    const int Kb = K / 4 * 4;
    for (int cb = 0; cb < N; cb += kGemmChunk) {
        const int ce = std::min(N, cb + kGemmChunk);
#pragma omp parallel for schedule(static)
        for (int kb = 0; kb < Kb; kb += 4) {
            double* c0 = C + static_cast<std::size_t>(kb) * N;
            double* c1 = c0 + N;
            double* c2 = c1 + N;
            double* c3 = c2 + N;
            std::fill(c0 + cb, c0 + ce, 0.0);
            std::fill(c1 + cb, c1 + ce, 0.0);
            std::fill(c2 + cb, c2 + ce, 0.0);
            std::fill(c3 + cb, c3 + ce, 0.0);
            for (int o = 0; o < M; ++o) {
                const double* ao = A + static_cast<std::size_t>(o) * K + kb;
                const double w0 = ao[0], w1 = ao[1], w2 = ao[2], w3 = ao[3];
                const double* br = B + static_cast<std::size_t>(o) * N;
                for (int t = cb; t < ce; ++t) {
                    const double b = br[t];
                    c0[t] += w0 * b;
                    c1[t] += w1 * b;
                    c2[t] += w2 * b;
                    c3[t] += w3 * b;
                }
            }
        }
        for (int kk = Kb; kk < K; ++kk) {
            double* ck = C + static_cast<std::size_t>(kk) * N;
            std::fill(ck + cb, ck + ce, 0.0);
            for (int o = 0; o < M; ++o) {
                const double a = A[static_cast<std::size_t>(o) * K + kk];
                const double* br = B + static_cast<std::size_t>(o) * N;
                for (int t = cb; t < ce; ++t) ck[t] += a * br[t];
            }
        }
    }
}

void transpose(const double* src, int R, int C, double* dst) {
    constexpr int blk = 32;
    for (int rb = 0; rb < R; rb += blk)
        for (int cb = 0; cb < C; cb += blk) {
            const int re = std::min(R, rb + blk), ce = std::min(C, cb + blk);
            for (int r = rb; r < re; ++r)
                for (int c = cb; c < ce; ++c)
                    dst[static_cast<std::size_t>(c) * R + r] = src[static_cast<std::size_t>(r) * C + c];
        }
}

}  // namespace

BatchLayout make_batch_layout(const std::vector<int>& lengths) {
    BatchLayout lay;
    lay.length = lengths;
    lay.offset.reserve(lengths.size());
    for (int len : lengths) {
        if (len < 1) throw std::invalid_argument("batch layout: sample length must be >= 1");
        lay.offset.push_back(lay.total);
        lay.total += len;
    }
    return lay;
}

void conv_im2col(const DilatedConv1d& layer, const double* xcat, const BatchLayout& layout,
                 double* xcol) {
    const int k = layer.kernel, dil = layer.dilation, center = k / 2;
    const int N = layout.total;
    const int B = static_cast<int>(layout.length.size());
#pragma omp parallel for schedule(static)
    for (int c = 0; c < layer.in_ch; ++c) {
        const double* xc = xcat + static_cast<std::size_t>(c) * N;
        for (int j = 0; j < k; ++j) {
            double* row = xcol + (static_cast<std::size_t>(c) * k + j) * N;
            const int off = (j - center) * dil;
            for (int s = 0; s < B; ++s) {
                const int o0 = layout.offset[s], len = layout.length[s];
                const int t0 = std::max(0, -off), t1 = std::min(len, len - off);
                std::fill(row + o0, row + o0 + len, 0.0);
                if (t0 < t1)
                    std::copy(xc + o0 + t0 + off, xc + o0 + t1 + off, row + o0 + t0);
            }
        }
    }
}

void conv1d_forward_cols(const DilatedConv1d& layer, const Tensor& xcol, Tensor& y) {
    const int K = layer.in_ch * layer.kernel;
    const int N = xcol.shape[1];
    y = Tensor({layer.out_ch, N});
    gemm_nn(layer.out_ch, K, N, layer.weight.value.ptr(), xcol.ptr(), layer.bias.value.ptr(),
            y.ptr(), false);
}

void conv1d_backward_cols(DilatedConv1d& layer, const Tensor& xcol, const Tensor& dy,
                          Tensor* dxcol) {
    const int K = layer.in_ch * layer.kernel;
    const int N = xcol.shape[1];
    if (!layer.weight.frozen) {
        double* db = layer.bias.grad.ptr();
        const double* dyp = dy.ptr();
#pragma omp parallel for schedule(static)
        for (int o = 0; o < layer.out_ch; ++o) {
            double s = 0.0;
            const double* dyo = dyp + static_cast<std::size_t>(o) * N;
            for (int t = 0; t < N; ++t) s += dyo[t];
            db[o] += s;
        }
        Tensor xcolT({N, K});
        transpose(xcol.ptr(), K, N, xcolT.ptr());
        gemm_nn(layer.out_ch, N, K, dy.ptr(), xcolT.ptr(), nullptr, layer.weight.grad.ptr(),
                true);
    }
    if (dxcol) {
        *dxcol = Tensor({K, N});
        gemm_tn(layer.out_ch, K, N, layer.weight.value.ptr(), dy.ptr(), dxcol->ptr());
    }
}

void conv_col2im(const DilatedConv1d& layer, const Tensor& dxcol, const BatchLayout& layout,
                 double* dxcat) {
    const int k = layer.kernel, dil = layer.dilation, center = k / 2;
    const int N = layout.total;
    const int B = static_cast<int>(layout.length.size());
#pragma omp parallel for schedule(static)
    for (int c = 0; c < layer.in_ch; ++c) {
        double* dxc = dxcat + static_cast<std::size_t>(c) * N;
        std::fill(dxc, dxc + N, 0.0);
        for (int j = 0; j < k; ++j) {
            const double* row = dxcol.ptr() + (static_cast<std::size_t>(c) * k + j) * N;
            const int off = (j - center) * dil;
            for (int s = 0; s < B; ++s) {
                const int o0 = layout.offset[s], len = layout.length[s];
                const int t0 = std::max(0, -off), t1 = std::min(len, len - off);
                for (int t = t0; t < t1; ++t) dxc[o0 + t + off] += row[o0 + t];
            }
        }
    }
}

void dense_forward_cols(const Dense& layer, const Tensor& Z, Tensor& Y) {
    const int B = Z.shape[1];
    Y = Tensor({layer.out_dim, B});
    gemm_nn(layer.out_dim, layer.in_dim, B, layer.weight.value.ptr(), Z.ptr(),
            layer.bias.value.ptr(), Y.ptr(), false);
}

void dense_backward_cols(Dense& layer, const Tensor& Z, const Tensor& dY, Tensor* dZ) {
    const int B = Z.shape[1];
    if (!layer.weight.frozen) {
        double* db = layer.bias.grad.ptr();
        for (int o = 0; o < layer.out_dim; ++o) {
            const double* dyo = dY.ptr() + static_cast<std::size_t>(o) * B;
            double s = 0.0;
            for (int t = 0; t < B; ++t) s += dyo[t];
            db[o] += s;
        }
        Tensor ZT({B, layer.in_dim});
        transpose(Z.ptr(), layer.in_dim, B, ZT.ptr());
        gemm_nn(layer.out_dim, B, layer.in_dim, dY.ptr(), ZT.ptr(), nullptr,
                layer.weight.grad.ptr(), true);
    }
    if (dZ) {
        *dZ = Tensor({layer.in_dim, B});
        gemm_tn(layer.out_dim, layer.in_dim, B, layer.weight.value.ptr(), dY.ptr(), dZ->ptr());
    }
}

void global_max_pool_cols(const Tensor& x, const BatchLayout& layout, Tensor& pooled,
                          std::vector<int>& argmax) {
    const int ch = x.shape[0], N = x.shape[1];
    const int B = static_cast<int>(layout.length.size());
    pooled = Tensor({ch, B});
    argmax.assign(static_cast<std::size_t>(ch) * B, 0);
#pragma omp parallel for schedule(static)
    for (int c = 0; c < ch; ++c) {
        const double* xc = x.ptr() + static_cast<std::size_t>(c) * N;
        for (int s = 0; s < B; ++s) {
            const int o0 = layout.offset[s], len = layout.length[s];
            int best = 0;
            for (int t = 1; t < len; ++t)
                if (xc[o0 + t] > xc[o0 + best]) best = t;
            pooled.at(c, s) = xc[o0 + best];
            argmax[static_cast<std::size_t>(c) * B + s] = best;
        }
    }
}

void global_max_pool_cols_backward(const Tensor& dpooled, const BatchLayout& layout,
                                   const std::vector<int>& argmax, Tensor& dx) {
    const int ch = dpooled.shape[0], B = dpooled.shape[1];
    dx = Tensor({ch, layout.total});
    for (int c = 0; c < ch; ++c)
        for (int s = 0; s < B; ++s)
            dx.ptr()[static_cast<std::size_t>(c) * layout.total + layout.offset[s] +
                     argmax[static_cast<std::size_t>(c) * B + s]] += dpooled.at(c, s);
}

void softmax_cols(const Tensor& logits, Tensor& probs) {
    const int n = logits.shape[0], B = logits.shape[1];
    probs = Tensor({n, B});
    for (int s = 0; s < B; ++s) {
        double m = logits.at(0, s);
        for (int i = 1; i < n; ++i) m = std::max(m, logits.at(i, s));
        double sum = 0.0;
        for (int i = 0; i < n; ++i) {
            probs.at(i, s) = std::exp(logits.at(i, s) - m);
            sum += probs.at(i, s);
        }
        for (int i = 0; i < n; ++i) probs.at(i, s) /= sum;
    }
}

void softmax(const double* logits, int n, double* probs) {
    double m = logits[0];
    for (int i = 1; i < n; ++i) m = std::max(m, logits[i]);
    double s = 0.0;
    for (int i = 0; i < n; ++i) {
        probs[i] = std::exp(logits[i] - m);
        s += probs[i];
    }
    for (int i = 0; i < n; ++i) probs[i] /= s;
}

double cross_entropy(const double* probs, int label, int n) {
    if (label < 0 || label >= n) throw std::out_of_range("cross_entropy: label out of range");
    return -std::log(std::max(probs[label], 1e-300));
}

void Adam::step(std::vector<Param*>& params) {
    if (m_.empty()) {
        for (Param* p : params) {
            m_.emplace_back(p->value.shape);
            v_.emplace_back(p->value.shape);
        }
    }
    ++t_;
    const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        Param& p = *params[pi];
        if (p.frozen) continue;
        double* m = m_[pi].ptr();
        double* v = v_[pi].ptr();
        double* val = p.value.ptr();
        const double* g = p.grad.ptr();
        const std::size_t n = p.value.size();
        for (std::size_t i = 0; i < n; ++i) {
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            val[i] -= lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
        }
    }
}

}  // namespace nhnn
