#ifndef NHNN_NEURAL_HPP
#define NHNN_NEURAL_HPP

#include <vector>

#include "nhnn/rng.hpp"
#include "nhnn/tensor.hpp"

namespace nhnn {

// Trainable parameter tensor with its gradient accumulator.
struct Param {
    Tensor value;
    Tensor grad;
    bool frozen = false;

    Param() = default;
    explicit Param(std::vector<int> shape) : value(shape), grad(std::move(shape)) {}
    void zero_grad() { grad.fill(0.0); }
};

// 1-d convolution with dilation, "same" output length via symmetric
// zero padding of (kernel-1)*dilation total.
struct DilatedConv1d {
    int in_ch = 0, out_ch = 0, kernel = 1, dilation = 1;
    Param weight;  // {out_ch, in_ch, kernel}
    Param bias;    // {out_ch}

    DilatedConv1d() = default;
    DilatedConv1d(int in, int out, int k, int dil);
    void init_params(Rng& rng);
};

struct Dense {
    int in_dim = 0, out_dim = 0;
    Param weight;  // {out_dim, in_dim}
    Param bias;    // {out_dim}

    Dense() = default;
    Dense(int in, int out);
    void init_params(Rng& rng);
};

// ---- forward kernels (OpenMP; output elements are written by exactly one
// ---- thread each, so results are bit-identical for any thread count)

// x: {in_ch, T} row-major, y: {out_ch, T}
void conv1d_forward(const DilatedConv1d& layer, const double* x, int T, double* y);

// Accumulates weight/bias grads into layer params; writes dx if non-null.
void conv1d_backward(DilatedConv1d& layer, const double* x, int T, const double* dy, double* dx);

void dense_forward(const Dense& layer, const double* x, double* y);
void dense_backward(Dense& layer, const double* x, const double* dy, double* dx);

void relu_forward(const double* x, int n, double* y);
void relu_backward(const double* x, const double* dy, int n, double* dx);

// Max over t < length per channel; padding frames never win. argmax (if
// non-null) records winning column per channel for the backward pass.
void global_max_pool(const double* x, int ch, int T, int length, double* out, int* argmax);
void global_max_pool_backward(const double* dout, int ch, const int* argmax, int T, double* dx);

void softmax(const double* logits, int n, double* probs);
double cross_entropy(const double* probs, int label, int n);

// ---- batched kernels
//
// A minibatch of variable-length samples is laid out as one matrix per
// activation: sample s occupies columns [offset[s], offset[s]+length[s]).
// Convolutions then become a single im2col + GEMM pass over all columns,
// which keeps the inner loops long even when individual samples are short.

struct BatchLayout {
    std::vector<int> offset, length;
    int total = 0;
};

BatchLayout make_batch_layout(const std::vector<int>& lengths);

// xcat: {in_ch, total} -> xcol: {in_ch*kernel, total}; padding columns that
// fall outside a sample are zero, so convolution never leaks across samples.
void conv_im2col(const DilatedConv1d& layer, const double* xcat, const BatchLayout& layout,
                 double* xcol);

// y {out_ch, total} = weight * xcol + bias
void conv1d_forward_cols(const DilatedConv1d& layer, const Tensor& xcol, Tensor& y);

// Accumulates weight/bias grads from dy {out_ch, total}; writes the im2col
// input gradient {in_ch*kernel, total} when dxcol is non-null.
void conv1d_backward_cols(DilatedConv1d& layer, const Tensor& xcol, const Tensor& dy,
                          Tensor* dxcol);

// Folds an im2col gradient back onto the {in_ch, total} input layout.
void conv_col2im(const DilatedConv1d& layer, const Tensor& dxcol, const BatchLayout& layout,
                 double* dxcat);

// Z {in_dim, B} holds one sample per column.
void dense_forward_cols(const Dense& layer, const Tensor& Z, Tensor& Y);
void dense_backward_cols(Dense& layer, const Tensor& Z, const Tensor& dY, Tensor* dZ);

// Per-sample masked max over the sample's columns; argmax stores the
// within-sample winning column, laid out {ch, B}.
void global_max_pool_cols(const Tensor& x, const BatchLayout& layout, Tensor& pooled,
                          std::vector<int>& argmax);
void global_max_pool_cols_backward(const Tensor& dpooled, const BatchLayout& layout,
                                   const std::vector<int>& argmax, Tensor& dx);

// column-wise softmax of logits {n_class, B}
void softmax_cols(const Tensor& logits, Tensor& probs);

// ---- serial reference kernels, kept for testing and benchmarking
namespace ref {
void conv1d_forward(const DilatedConv1d& layer, const double* x, int T, double* y);
void conv1d_backward(DilatedConv1d& layer, const double* x, int T, const double* dy, double* dx);
}  // namespace ref

// ---- optimizer

// Adam with bias correction; beta1=0.9, beta2=0.999, eps=1e-8.
class Adam {
  public:
    explicit Adam(double learning_rate) : lr_(learning_rate) {}

    // Parameter set must stay fixed after the first step.
    void step(std::vector<Param*>& params);
    long step_count() const { return t_; }

  private:
    double lr_;
    long t_ = 0;
    std::vector<Tensor> m_, v_;
};

}  // namespace nhnn

#endif
