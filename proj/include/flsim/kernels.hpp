#pragma once

#include <cstdint>

// Data-parallel layer kernels, NHWC layout, parallelized with OpenMP over the
// sample dimension. Per-sample arithmetic order is fixed, so results are
// bit-identical for any thread count. kern::ref holds the plain serial
// implementations kept as the reference for tests and benchmarks.
namespace flsim::kern {

struct ConvDims {
    int ih, iw, ic;  // input height/width/channels
    int k;           // square kernel size
    int oc;          // output channels
    int oh() const { return ih - k + 1; }
    int ow() const { return iw - k + 1; }
};

// weights (k,k,ic,oc), bias (oc)
void conv2d_forward(int n, const float* in, const float* w, const float* b,
                    float* out, const ConvDims& d);
void conv2d_backward_input(int n, const float* dout, const float* w,
                           float* din, const ConvDims& d);
// Accumulates per-sample weight gradients into a fixed-order reduction;
// dw has size k*k*ic*oc, db has size oc. Both are overwritten.
void conv2d_backward_params(int n, const float* in, const float* dout,
                            float* dw, float* db, const ConvDims& d);

// weights (in_dim, out_dim)
void dense_forward(int n, const float* in, const float* w, const float* b,
                   float* out, int in_dim, int out_dim);
void dense_backward_input(int n, const float* dout, const float* w,
                          float* din, int in_dim, int out_dim);
void dense_backward_params(int n, const float* in, const float* dout,
                           float* dw, float* db, int in_dim, int out_dim);

void relu_forward(int n, const float* in, float* out, int width);
// uses forward output: din = dout where out > 0
void relu_backward(int n, const float* out, const float* dout, float* din,
                   int width);

// 2x2 window, stride 2, floor semantics on odd dims; argmax holds the flat
// input offset (within sample) of each max for the backward scatter.
void maxpool2_forward(int n, const float* in, float* out, std::int32_t* argmax,
                      int h, int w, int c);
void maxpool2_backward(int n, const float* dout, const std::int32_t* argmax,
                       float* din, int in_sample_size, int out_sample_size);

// Inverted-dropout mask application; mask holds 0 or 1/(1-rate) per element.
void apply_mask(int n, const float* in, const float* mask, float* out,
                int width);

// Row softmax, numerically stabilized.
void softmax_rows(int n, const float* logits, float* probs, int classes);

// Per-channel batch normalization over all samples and spatial positions.
// Train mode: uses batch statistics and records xhat and 1/sqrt(var+eps).
void batchnorm_forward_train(int n, const float* in, const float* gamma,
                             const float* beta, float* out, float* xhat,
                             float* mean, float* var, float* invstd,
                             int spatial, int c, float eps);
void batchnorm_forward_eval(int n, const float* in, const float* gamma,
                            const float* beta, const float* rmean,
                            const float* rvar, float* out, int spatial, int c,
                            float eps);
void batchnorm_backward(int n, const float* dout, const float* xhat,
                        const float* invstd, const float* gamma, float* din,
                        float* dgamma, float* dbeta, int spatial, int c);

namespace ref {
void conv2d_forward(int n, const float* in, const float* w, const float* b,
                    float* out, const ConvDims& d);
void conv2d_backward_input(int n, const float* dout, const float* w,
                           float* din, const ConvDims& d);
void conv2d_backward_params(int n, const float* in, const float* dout,
                            float* dw, float* db, const ConvDims& d);
void dense_forward(int n, const float* in, const float* w, const float* b,
                   float* out, int in_dim, int out_dim);
void maxpool2_forward(int n, const float* in, float* out, std::int32_t* argmax,
                      int h, int w, int c);
}  // namespace ref

}  // namespace flsim::kern
