#include "flsim/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <vector>

namespace flsim::kern {

namespace {
constexpr int kMaxOc = 64;  // largest channel count in any supported layer
}

// Output pixels are processed four at a time so the weight row loaded for a
// given (ky,kx,ic) feeds four independent accumulator chains.
void conv2d_forward(int n, const float* in, const float* w, const float* b,
                    float* out, const ConvDims& d) {
    const int oh = d.oh(), ow = d.ow(), oc = d.oc, ic = d.ic, k = d.k;
    const int iw = d.iw;
    const std::size_t in_sz = static_cast<std::size_t>(d.ih) * d.iw * ic;
    const std::size_t out_sz = static_cast<std::size_t>(oh) * ow * oc;

#pragma omp parallel for schedule(static) if (n > 1)
    for (int s = 0; s < n; ++s) {
        const float* xin = in + s * in_sz;
        float* xout = out + s * out_sz;
        for (int oy = 0; oy < oh; ++oy) {
            int ox = 0;
            for (; ox + 4 <= ow; ox += 4) {
                float a0[kMaxOc], a1[kMaxOc], a2[kMaxOc], a3[kMaxOc];
                for (int o = 0; o < oc; ++o) a0[o] = a1[o] = a2[o] = a3[o] = b[o];
                for (int ky = 0; ky < k; ++ky) {
                    for (int kx = 0; kx < k; ++kx) {
                        const float* ip = xin + ((oy + ky) * iw + (ox + kx)) * ic;
                        const float* wp = w + ((ky * k + kx) * ic) * oc;
                        for (int c = 0; c < ic; ++c) {
                            const float v0 = ip[c];
                            const float v1 = ip[c + ic];
                            const float v2 = ip[c + 2 * ic];
                            const float v3 = ip[c + 3 * ic];
                            const float* wr = wp + c * oc;
#pragma omp simd
                            for (int o = 0; o < oc; ++o) {
                                const float wv = wr[o];
                                a0[o] += v0 * wv;
                                a1[o] += v1 * wv;
                                a2[o] += v2 * wv;
                                a3[o] += v3 * wv;
                            }
                        }
                    }
                }
                float* op = xout + (oy * ow + ox) * oc;
                for (int o = 0; o < oc; ++o) {
                    op[o] = a0[o];
                    op[oc + o] = a1[o];
                    op[2 * oc + o] = a2[o];
                    op[3 * oc + o] = a3[o];
                }
            }
            for (; ox < ow; ++ox) {
                float acc[kMaxOc];
                for (int o = 0; o < oc; ++o) acc[o] = b[o];
                for (int ky = 0; ky < k; ++ky) {
                    for (int kx = 0; kx < k; ++kx) {
                        const float* ip = xin + ((oy + ky) * iw + (ox + kx)) * ic;
                        const float* wp = w + ((ky * k + kx) * ic) * oc;
                        for (int c = 0; c < ic; ++c) {
                            const float v = ip[c];
                            const float* wr = wp + c * oc;
#pragma omp simd
                            for (int o = 0; o < oc; ++o) acc[o] += v * wr[o];
                        }
                    }
                }
                float* op = xout + (oy * ow + ox) * oc;
                for (int o = 0; o < oc; ++o) op[o] = acc[o];
            }
        }
    }
}

void conv2d_backward_input(int n, const float* dout, const float* w,
                           float* din, const ConvDims& d) {
    const int oh = d.oh(), ow = d.ow(), oc = d.oc, ic = d.ic, k = d.k;
    const int iw = d.iw;
    const std::size_t in_sz = static_cast<std::size_t>(d.ih) * d.iw * ic;
    const std::size_t out_sz = static_cast<std::size_t>(oh) * ow * oc;

    // Transposed copy (k,k,oc,ic) so the inner loop runs contiguously over ic.
    std::vector<float> wt(static_cast<std::size_t>(k) * k * ic * oc);
    for (int ky = 0; ky < k; ++ky)
        for (int kx = 0; kx < k; ++kx)
            for (int c = 0; c < ic; ++c)
                for (int o = 0; o < oc; ++o)
                    wt[(((ky * k + kx) * oc) + o) * ic + c] =
                        w[(((ky * k + kx) * ic) + c) * oc + o];

#pragma omp parallel for schedule(static) if (n > 1)
    for (int s = 0; s < n; ++s) {
        const float* xdout = dout + s * out_sz;
        float* xdin = din + s * in_sz;
        std::memset(xdin, 0, in_sz * sizeof(float));
        for (int oy = 0; oy < oh; ++oy) {
            for (int ox = 0; ox < ow; ++ox) {
                const float* dp = xdout + (oy * ow + ox) * oc;
                for (int ky = 0; ky < k; ++ky) {
                    for (int kx = 0; kx < k; ++kx) {
                        float* ip = xdin + ((oy + ky) * iw + (ox + kx)) * ic;
                        const float* wp = wt.data() + ((ky * k + kx) * oc) * ic;
                        for (int o = 0; o < oc; ++o) {
                            const float v = dp[o];
                            const float* wr = wp + o * ic;
#pragma omp simd
                            for (int c = 0; c < ic; ++c) ip[c] += v * wr[c];
                        }
                    }
                }
            }
        }
    }
}

void conv2d_backward_params(int n, const float* in, const float* dout,
                            float* dw, float* db, const ConvDims& d) {
    const int oh = d.oh(), ow = d.ow(), oc = d.oc, ic = d.ic, k = d.k;
    const int iw = d.iw;
    const std::size_t in_sz = static_cast<std::size_t>(d.ih) * d.iw * ic;
    const std::size_t out_sz = static_cast<std::size_t>(oh) * ow * oc;
    const std::size_t w_sz = static_cast<std::size_t>(k) * k * ic * oc;

    // Per-sample partials reduced in sample order: the reduction result is
    // independent of the parallel schedule.
    std::vector<float> part(static_cast<std::size_t>(n) * (w_sz + oc), 0.0f);

#pragma omp parallel for schedule(static) if (n > 1)
    for (int s = 0; s < n; ++s) {
        const float* xin = in + s * in_sz;
        const float* xdout = dout + s * out_sz;
        float* pw = part.data() + s * (w_sz + oc);
        float* pb = pw + w_sz;
        for (int oy = 0; oy < oh; ++oy) {
            for (int ox = 0; ox < ow; ++ox) {
                const float* dp = xdout + (oy * ow + ox) * oc;
#pragma omp simd
                for (int o = 0; o < oc; ++o) pb[o] += dp[o];
                for (int ky = 0; ky < k; ++ky) {
                    for (int kx = 0; kx < k; ++kx) {
                        const float* ip = xin + ((oy + ky) * iw + (ox + kx)) * ic;
                        float* wp = pw + ((ky * k + kx) * ic) * oc;
                        for (int c = 0; c < ic; ++c) {
                            const float v = ip[c];
                            float* wr = wp + c * oc;
#pragma omp simd
                            for (int o = 0; o < oc; ++o) wr[o] += v * dp[o];
                        }
                    }
                }
            }
        }
    }

    std::memset(dw, 0, w_sz * sizeof(float));
    std::memset(db, 0, static_cast<std::size_t>(oc) * sizeof(float));
    for (int s = 0; s < n; ++s) {
        const float* pw = part.data() + s * (w_sz + oc);
        const float* pb = pw + w_sz;
#pragma omp simd
        for (std::size_t i = 0; i < w_sz; ++i) dw[i] += pw[i];
        for (int o = 0; o < oc; ++o) db[o] += pb[o];
    }
}

void dense_forward(int n, const float* in, const float* w, const float* b,
                   float* out, int in_dim, int out_dim) {
#pragma omp parallel for schedule(static) if (n > 1)
    for (int s = 0; s < n; ++s) {
        const float* x = in + static_cast<std::size_t>(s) * in_dim;
        float* y = out + static_cast<std::size_t>(s) * out_dim;
        for (int o = 0; o < out_dim; ++o) y[o] = b[o];
        for (int i = 0; i < in_dim; ++i) {
            const float v = x[i];
            const float* wr = w + static_cast<std::size_t>(i) * out_dim;
#pragma omp simd
            for (int o = 0; o < out_dim; ++o) y[o] += v * wr[o];
        }
    }
}

void dense_backward_input(int n, const float* dout, const float* w,
                          float* din, int in_dim, int out_dim) {
#pragma omp parallel for schedule(static) if (n > 1)
    for (int s = 0; s < n; ++s) {
        const float* dy = dout + static_cast<std::size_t>(s) * out_dim;
        float* dx = din + static_cast<std::size_t>(s) * in_dim;
        for (int i = 0; i < in_dim; ++i) {
            const float* wr = w + static_cast<std::size_t>(i) * out_dim;
            float acc = 0.0f;
#pragma omp simd reduction(+ : acc)
            for (int o = 0; o < out_dim; ++o) acc += dy[o] * wr[o];
            dx[i] = acc;
        }
    }
}

void dense_backward_params(int n, const float* in, const float* dout,
                           float* dw, float* db, int in_dim, int out_dim) {
    const std::size_t w_sz = static_cast<std::size_t>(in_dim) * out_dim;
    std::vector<float> part(static_cast<std::size_t>(n) * (w_sz + out_dim),
                            0.0f);

#pragma omp parallel for schedule(static) if (n > 1)
    for (int s = 0; s < n; ++s) {
        const float* x = in + static_cast<std::size_t>(s) * in_dim;
        const float* dy = dout + static_cast<std::size_t>(s) * out_dim;
        float* pw = part.data() + s * (w_sz + out_dim);
        float* pb = pw + w_sz;
        for (int i = 0; i < in_dim; ++i) {
            const float v = x[i];
            float* wr = pw + static_cast<std::size_t>(i) * out_dim;
#pragma omp simd
            for (int o = 0; o < out_dim; ++o) wr[o] += v * dy[o];
        }
        for (int o = 0; o < out_dim; ++o) pb[o] += dy[o];
    }

    std::memset(dw, 0, w_sz * sizeof(float));
    std::memset(db, 0, static_cast<std::size_t>(out_dim) * sizeof(float));
    for (int s = 0; s < n; ++s) {
        const float* pw = part.data() + s * (w_sz + out_dim);
        const float* pb = pw + w_sz;
#pragma omp simd
        for (std::size_t i = 0; i < w_sz; ++i) dw[i] += pw[i];
        for (int o = 0; o < out_dim; ++o) db[o] += pb[o];
    }
}

void relu_forward(int n, const float* in, float* out, int width) {
    const std::size_t total = static_cast<std::size_t>(n) * width;
#pragma omp parallel for schedule(static) if (n > 1)
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(total); ++i)
        out[i] = in[i] > 0.0f ? in[i] : 0.0f;
}

void relu_backward(int n, const float* out, const float* dout, float* din,
                   int width) {
    const std::size_t total = static_cast<std::size_t>(n) * width;
#pragma omp parallel for schedule(static) if (n > 1)
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(total); ++i)
        din[i] = out[i] > 0.0f ? dout[i] : 0.0f;
}

void maxpool2_forward(int n, const float* in, float* out, std::int32_t* argmax,
                      int h, int w, int c) {
    const int oh = h / 2, ow = w / 2;
    const std::size_t in_sz = static_cast<std::size_t>(h) * w * c;
    const std::size_t out_sz = static_cast<std::size_t>(oh) * ow * c;

#pragma omp parallel for schedule(static) if (n > 1)
    for (int s = 0; s < n; ++s) {
        const float* xin = in + s * in_sz;
        float* xout = out + s * out_sz;
        std::int32_t* xarg = argmax + s * out_sz;
        for (int oy = 0; oy < oh; ++oy) {
            for (int ox = 0; ox < ow; ++ox) {
                for (int ch = 0; ch < c; ++ch) {
                    std::int32_t best = ((2 * oy) * w + 2 * ox) * c + ch;
                    float bv = xin[best];
                    const int cand[3] = {((2 * oy) * w + 2 * ox + 1) * c + ch,
                                         ((2 * oy + 1) * w + 2 * ox) * c + ch,
                                         ((2 * oy + 1) * w + 2 * ox + 1) * c + ch};
                    for (int t = 0; t < 3; ++t) {
                        if (xin[cand[t]] > bv) {
                            bv = xin[cand[t]];
                            best = cand[t];
                        }
                    }
                    xout[(oy * ow + ox) * c + ch] = bv;
                    xarg[(oy * ow + ox) * c + ch] = best;
                }
            }
        }
    }
}

void maxpool2_backward(int n, const float* dout, const std::int32_t* argmax,
                       float* din, int in_sample_size, int out_sample_size) {
#pragma omp parallel for schedule(static) if (n > 1)
    for (int s = 0; s < n; ++s) {
        float* xdin = din + static_cast<std::size_t>(s) * in_sample_size;
        const float* xdout = dout + static_cast<std::size_t>(s) * out_sample_size;
        const std::int32_t* xarg =
            argmax + static_cast<std::size_t>(s) * out_sample_size;
        std::memset(xdin, 0, static_cast<std::size_t>(in_sample_size) * sizeof(float));
        for (int i = 0; i < out_sample_size; ++i) xdin[xarg[i]] += xdout[i];
    }
}

void apply_mask(int n, const float* in, const float* mask, float* out,
                int width) {
    const std::size_t total = static_cast<std::size_t>(n) * width;
#pragma omp parallel for schedule(static) if (n > 1)
    for (std::int64_t i = 0; i < static_cast<std::int64_t>(total); ++i)
        out[i] = in[i] * mask[i];
}

void softmax_rows(int n, const float* logits, float* probs, int classes) {
#pragma omp parallel for schedule(static) if (n > 1)
    for (int s = 0; s < n; ++s) {
        const float* z = logits + static_cast<std::size_t>(s) * classes;
        float* p = probs + static_cast<std::size_t>(s) * classes;
        float m = z[0];
        for (int i = 1; i < classes; ++i) m = std::max(m, z[i]);
        float sum = 0.0f;
        for (int i = 0; i < classes; ++i) {
            p[i] = std::exp(z[i] - m);
            sum += p[i];
        }
        const float inv = 1.0f / sum;
        for (int i = 0; i < classes; ++i) p[i] *= inv;
    }
}

void batchnorm_forward_train(int n, const float* in, const float* gamma,
                             const float* beta, float* out, float* xhat,
                             float* mean, float* var, float* invstd,
                             int spatial, int c, float eps) {
    const std::size_t rows = static_cast<std::size_t>(n) * spatial;
#pragma omp parallel for schedule(static)
    for (int ch = 0; ch < c; ++ch) {
        double sum = 0.0;
        for (std::size_t r = 0; r < rows; ++r) sum += in[r * c + ch];
        const float mu = static_cast<float>(sum / static_cast<double>(rows));
        double sq = 0.0;
        for (std::size_t r = 0; r < rows; ++r) {
            const float d = in[r * c + ch] - mu;
            sq += static_cast<double>(d) * d;
        }
        const float v = static_cast<float>(sq / static_cast<double>(rows));
        const float is = 1.0f / std::sqrt(v + eps);
        mean[ch] = mu;
        var[ch] = v;
        invstd[ch] = is;
        for (std::size_t r = 0; r < rows; ++r) {
            const float xh = (in[r * c + ch] - mu) * is;
            xhat[r * c + ch] = xh;
            out[r * c + ch] = gamma[ch] * xh + beta[ch];
        }
    }
}

void batchnorm_forward_eval(int n, const float* in, const float* gamma,
                            const float* beta, const float* rmean,
                            const float* rvar, float* out, int spatial, int c,
                            float eps) {
    const std::size_t rows = static_cast<std::size_t>(n) * spatial;
#pragma omp parallel for schedule(static) if (n > 1)
    for (std::int64_t r = 0; r < static_cast<std::int64_t>(rows); ++r) {
        for (int ch = 0; ch < c; ++ch) {
            const float is = 1.0f / std::sqrt(rvar[ch] + eps);
            out[r * c + ch] = gamma[ch] * (in[r * c + ch] - rmean[ch]) * is + beta[ch];
        }
    }
}

void batchnorm_backward(int n, const float* dout, const float* xhat,
                        const float* invstd, const float* gamma, float* din,
                        float* dgamma, float* dbeta, int spatial, int c) {
    const std::size_t rows = static_cast<std::size_t>(n) * spatial;
    const float inv_m = 1.0f / static_cast<float>(rows);
#pragma omp parallel for schedule(static)
    for (int ch = 0; ch < c; ++ch) {
        double sdy = 0.0, sdyx = 0.0;
        for (std::size_t r = 0; r < rows; ++r) {
            const float dy = dout[r * c + ch];
            sdy += dy;
            sdyx += static_cast<double>(dy) * xhat[r * c + ch];
        }
        dbeta[ch] = static_cast<float>(sdy);
        dgamma[ch] = static_cast<float>(sdyx);
        const float g = gamma[ch] * invstd[ch];
        const float mdy = static_cast<float>(sdy) * inv_m;
        const float mdyx = static_cast<float>(sdyx) * inv_m;
        for (std::size_t r = 0; r < rows; ++r) {
            const float dy = dout[r * c + ch];
            din[r * c + ch] = g * (dy - mdy - xhat[r * c + ch] * mdyx);
        }
    }
}

namespace ref {

void conv2d_forward(int n, const float* in, const float* w, const float* b,
                    float* out, const ConvDims& d) {
    const int oh = d.oh(), ow = d.ow();
    for (int s = 0; s < n; ++s) {
        for (int oy = 0; oy < oh; ++oy)
            for (int ox = 0; ox < ow; ++ox)
                for (int o = 0; o < d.oc; ++o) {
                    float acc = b[o];
                    for (int ky = 0; ky < d.k; ++ky)
                        for (int kx = 0; kx < d.k; ++kx)
                            for (int c = 0; c < d.ic; ++c)
                                acc += in[((s * d.ih + oy + ky) * d.iw + ox + kx) * d.ic + c] *
                                       w[(((ky * d.k + kx) * d.ic) + c) * d.oc + o];
                    out[((s * oh + oy) * ow + ox) * d.oc + o] = acc;
                }
    }
}

void conv2d_backward_input(int n, const float* dout, const float* w,
                           float* din, const ConvDims& d) {
    const int oh = d.oh(), ow = d.ow();
    const std::size_t in_sz = static_cast<std::size_t>(d.ih) * d.iw * d.ic;
    for (std::size_t i = 0; i < static_cast<std::size_t>(n) * in_sz; ++i) din[i] = 0.0f;
    for (int s = 0; s < n; ++s)
        for (int oy = 0; oy < oh; ++oy)
            for (int ox = 0; ox < ow; ++ox)
                for (int o = 0; o < d.oc; ++o) {
                    const float dv = dout[((s * oh + oy) * ow + ox) * d.oc + o];
                    for (int ky = 0; ky < d.k; ++ky)
                        for (int kx = 0; kx < d.k; ++kx)
                            for (int c = 0; c < d.ic; ++c)
                                din[((s * d.ih + oy + ky) * d.iw + ox + kx) * d.ic + c] +=
                                    dv * w[(((ky * d.k + kx) * d.ic) + c) * d.oc + o];
                }
}

void conv2d_backward_params(int n, const float* in, const float* dout,
                            float* dw, float* db, const ConvDims& d) {
    const int oh = d.oh(), ow = d.ow();
    const std::size_t w_sz = static_cast<std::size_t>(d.k) * d.k * d.ic * d.oc;
    for (std::size_t i = 0; i < w_sz; ++i) dw[i] = 0.0f;
    for (int o = 0; o < d.oc; ++o) db[o] = 0.0f;
    for (int s = 0; s < n; ++s)
        for (int oy = 0; oy < oh; ++oy)
            for (int ox = 0; ox < ow; ++ox)
                for (int o = 0; o < d.oc; ++o) {
                    const float dv = dout[((s * oh + oy) * ow + ox) * d.oc + o];
                    db[o] += dv;
                    for (int ky = 0; ky < d.k; ++ky)
                        for (int kx = 0; kx < d.k; ++kx)
                            for (int c = 0; c < d.ic; ++c)
                                dw[(((ky * d.k + kx) * d.ic) + c) * d.oc + o] +=
                                    dv * in[((s * d.ih + oy + ky) * d.iw + ox + kx) * d.ic + c];
                }
}

void dense_forward(int n, const float* in, const float* w, const float* b,
                   float* out, int in_dim, int out_dim) {
    for (int s = 0; s < n; ++s)
        for (int o = 0; o < out_dim; ++o) {
            float acc = b[o];
            for (int i = 0; i < in_dim; ++i)
                acc += in[static_cast<std::size_t>(s) * in_dim + i] *
                       w[static_cast<std::size_t>(i) * out_dim + o];
            out[static_cast<std::size_t>(s) * out_dim + o] = acc;
        }
}

void maxpool2_forward(int n, const float* in, float* out, std::int32_t* argmax,
                      int h, int w, int c) {
    const int oh = h / 2, ow = w / 2;
    for (int s = 0; s < n; ++s)
        for (int oy = 0; oy < oh; ++oy)
            for (int ox = 0; ox < ow; ++ox)
                for (int ch = 0; ch < c; ++ch) {
                    std::int32_t best = -1;
                    float bv = 0.0f;
                    for (int dy = 0; dy < 2; ++dy)
                        for (int dx = 0; dx < 2; ++dx) {
                            const std::int32_t idx =
                                ((2 * oy + dy) * w + 2 * ox + dx) * c + ch;
                            if (best < 0 || in[s * h * w * c + idx] > bv) {
                                bv = in[s * h * w * c + idx];
                                best = idx;
                            }
                        }
                    out[((s * oh + oy) * ow + ox) * c + ch] = bv;
                    argmax[((s * oh + oy) * ow + ox) * c + ch] = best;
                }
}

}  // namespace ref

}  // namespace flsim::kern
