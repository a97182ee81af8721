#include "flsim/nn.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>

#include "flsim/kernels.hpp"
#include "flsim/rng.hpp"

namespace flsim {

std::vector<LayerSpec> default_architecture(bool with_batchnorm) {
    std::vector<LayerSpec> s;
    auto conv = [&](int oc, int k) {
        s.push_back({LayerKind::Conv2d, oc, k, 0.0f});
        if (with_batchnorm) s.push_back({LayerKind::BatchNorm, 0, 0, 0.0f});
    };
    conv(64, 4);
    s.push_back({LayerKind::Relu});
    conv(16, 5);
    s.push_back({LayerKind::Relu});
    s.push_back({LayerKind::MaxPool});
    s.push_back({LayerKind::Dropout, 0, 0, 0.25f});
    conv(32, 4);
    s.push_back({LayerKind::Relu});
    conv(16, 4);
    s.push_back({LayerKind::Relu});
    s.push_back({LayerKind::MaxPool});
    s.push_back({LayerKind::Dropout, 0, 0, 0.25f});
    s.push_back({LayerKind::Dense, 128});
    s.push_back({LayerKind::Relu});
    s.push_back({LayerKind::Dropout, 0, 0, 0.5f});
    s.push_back({LayerKind::SoftmaxOutput, 10});
    return s;
}

ModelLayout make_layout(const std::vector<LayerSpec>& specs,
                        const LayerDims& input) {
    if (specs.empty()) throw std::invalid_argument("layout: empty spec list");
    ModelLayout lay;
    lay.input = input;
    lay.out.reserve(specs.size());
    lay.first_param.assign(specs.size(), -1);
    lay.bn_slot.assign(specs.size(), -1);

    LayerDims cur = input;
    int conv_no = 0, dense_no = 0, bn_no = 0;
    for (std::size_t l = 0; l < specs.size(); ++l) {
        const LayerSpec& sp = specs[l];
        switch (sp.kind) {
            case LayerKind::Conv2d: {
                if (cur.flat)
                    throw std::invalid_argument("layout: conv after flatten");
                if (sp.kernel < 1 || sp.units < 1)
                    throw std::invalid_argument("layout: bad conv spec");
                const int oh = cur.h - sp.kernel + 1;
                const int ow = cur.w - sp.kernel + 1;
                if (oh < 1 || ow < 1)
                    throw std::invalid_argument(
                        "layout: conv kernel " + std::to_string(sp.kernel) +
                        " does not fit input " + std::to_string(cur.h) + "x" +
                        std::to_string(cur.w));
                lay.first_param[l] = lay.n_blocks;
                ++conv_no;
                lay.block_names.push_back("c" + std::to_string(conv_no) + "_w");
                lay.block_names.push_back("c" + std::to_string(conv_no) + "_b");
                lay.n_blocks += 2;
                cur = {oh, ow, sp.units, false};
                break;
            }
            case LayerKind::Relu:
                break;
            case LayerKind::MaxPool: {
                if (cur.flat)
                    throw std::invalid_argument("layout: pool after flatten");
                const int oh = cur.h / 2, ow = cur.w / 2;
                if (oh < 1 || ow < 1)
                    throw std::invalid_argument("layout: pool on degenerate dims");
                cur = {oh, ow, cur.c, false};
                break;
            }
            case LayerKind::Dropout:
                if (sp.rate < 0.0f || sp.rate >= 1.0f)
                    throw std::invalid_argument("layout: dropout rate outside [0,1)");
                break;
            case LayerKind::Dense:
            case LayerKind::SoftmaxOutput: {
                if (sp.units < 1)
                    throw std::invalid_argument("layout: bad dense width");
                lay.first_param[l] = lay.n_blocks;
                if (sp.kind == LayerKind::Dense) {
                    ++dense_no;
                    lay.block_names.push_back("fc" + std::to_string(dense_no) + "_w");
                    lay.block_names.push_back("fc" + std::to_string(dense_no) + "_b");
                } else {
                    lay.block_names.push_back("out_w");
                    lay.block_names.push_back("out_b");
                }
                lay.n_blocks += 2;
                cur = {0, 0, sp.units, true};
                break;
            }
            case LayerKind::BatchNorm: {
                lay.first_param[l] = lay.n_blocks;
                ++bn_no;
                lay.bn_slot[l] = bn_no - 1;
                lay.block_names.push_back("bn" + std::to_string(bn_no) + "_g");
                lay.block_names.push_back("bn" + std::to_string(bn_no) + "_b");
                lay.n_blocks += 2;
                break;
            }
        }
        lay.out.push_back(cur);
        if (sp.kind == LayerKind::SoftmaxOutput && l + 1 != specs.size())
            throw std::invalid_argument("layout: output layer must be last");
    }
    if (specs.back().kind != LayerKind::SoftmaxOutput)
        throw std::invalid_argument("layout: last layer must be the output");

    for (int l = static_cast<int>(specs.size()) - 1; l >= 0; --l) {
        if (specs[static_cast<std::size_t>(l)].kind == LayerKind::Relu) {
            lay.penultimate_layer = l;
            break;
        }
    }
    return lay;
}

namespace {

const LayerDims& dims_in(const Model& m, std::size_t l) {
    return l == 0 ? m.layout.input : m.layout.out[l - 1];
}

std::vector<int> conv_w_shape(const LayerSpec& sp, const LayerDims& in) {
    return {sp.kernel, sp.kernel, in.c, sp.units};
}

}  // namespace

Model init_model(const std::vector<LayerSpec>& specs, std::uint64_t seed,
                 const LayerDims& input) {
    Model m;
    m.specs = specs;
    m.layout = make_layout(specs, input);
    m.params.resize(static_cast<std::size_t>(m.layout.n_blocks));

    for (std::size_t l = 0; l < specs.size(); ++l) {
        const LayerSpec& sp = specs[l];
        const int pb = m.layout.first_param[l];
        if (pb < 0) continue;
        const LayerDims& in = dims_in(m, l);
        if (sp.kind == LayerKind::Conv2d) {
            Tensor w(conv_w_shape(sp, in));
            const float scale =
                1.0f / std::sqrt(static_cast<float>(sp.kernel * sp.kernel * in.c));
            for (std::size_t i = 0; i < w.numel(); ++i)
                w.data[i] = (rng::u01(rng::derive(seed, pb, i)) * 2.0f - 1.0f) * scale;
            m.params[static_cast<std::size_t>(pb)] = std::move(w);
            m.params[static_cast<std::size_t>(pb) + 1] = Tensor({sp.units});
        } else if (sp.kind == LayerKind::Dense ||
                   sp.kind == LayerKind::SoftmaxOutput) {
            Tensor w({in.size(), sp.units});
            const float scale = 1.0f / std::sqrt(static_cast<float>(in.size()));
            for (std::size_t i = 0; i < w.numel(); ++i)
                w.data[i] = (rng::u01(rng::derive(seed, pb, i)) * 2.0f - 1.0f) * scale;
            m.params[static_cast<std::size_t>(pb)] = std::move(w);
            m.params[static_cast<std::size_t>(pb) + 1] = Tensor({sp.units});
        } else if (sp.kind == LayerKind::BatchNorm) {
            Tensor gamma({in.c});
            std::fill(gamma.data.begin(), gamma.data.end(), 1.0f);
            m.params[static_cast<std::size_t>(pb)] = std::move(gamma);
            m.params[static_cast<std::size_t>(pb) + 1] = Tensor({in.c});
            BnRunning r;
            r.mean = Tensor({in.c});
            r.var = Tensor({in.c});
            std::fill(r.var.data.begin(), r.var.data.end(), 1.0f);
            m.bn_running.push_back(std::move(r));
        }
    }
    return m;
}

namespace {

void fill_dropout_mask(Tensor& mask, int n, int width, float rate, int layer,
                       std::uint64_t mask_seed, const std::uint64_t* seeds) {
    const float scale = 1.0f / (1.0f - rate);
#pragma omp parallel for schedule(static) if (n > 1)
    for (int s = 0; s < n; ++s) {
        const std::uint64_t ss = seeds ? seeds[s] : rng::derive(mask_seed, s);
        float* mp = mask.ptr() + static_cast<std::size_t>(s) * width;
        for (int e = 0; e < width; ++e)
            mp[e] = rng::u01(rng::derive(ss, layer, e)) >= rate ? scale : 0.0f;
    }
}

void check_batch_shape(const Model& m, const Tensor& batch) {
    const LayerDims& in = m.layout.input;
    if (in.flat) {
        if (batch.shape.size() != 2 || batch.dim(1) != in.c)
            throw std::invalid_argument("forward: batch shape " +
                                        shape_str(batch.shape) + " does not match input");
        return;
    }
    if (batch.shape.size() != 4 || batch.dim(1) != in.h || batch.dim(2) != in.w ||
        batch.dim(3) != in.c)
        throw std::invalid_argument("forward: batch shape " + shape_str(batch.shape) +
                                    " does not match input " + shape_str({-1, in.h, in.w, in.c}));
}

}  // namespace

ForwardTrace forward(const Model& model, const Tensor& batch,
                     const ForwardMode& mode) {
    check_batch_shape(model, batch);
    const int n = batch.dim(0);
    const std::size_t L = model.specs.size();

    ForwardTrace tr;
    tr.input = batch;
    tr.batch = n;
    tr.penultimate_layer = model.layout.penultimate_layer;
    tr.acts.resize(L);
    tr.dropout_mask.resize(L);
    tr.pool_argmax.resize(L);
    tr.bn_xhat.resize(L);
    tr.bn_invstd.resize(L);
    tr.bn_mean.resize(L);
    tr.bn_var.resize(L);

    const float* cur = batch.ptr();
    for (std::size_t l = 0; l < L; ++l) {
        const LayerSpec& sp = model.specs[l];
        const LayerDims& din = dims_in(model, l);
        const LayerDims& dout = model.layout.out[l];
        Tensor out({n, dout.size()});
        const int pb = model.layout.first_param[l];

        switch (sp.kind) {
            case LayerKind::Conv2d: {
                kern::ConvDims cd{din.h, din.w, din.c, sp.kernel, sp.units};
                kern::conv2d_forward(n, cur, model.params[pb].ptr(),
                                     model.params[pb + 1].ptr(), out.ptr(), cd);
                break;
            }
            case LayerKind::Relu:
                kern::relu_forward(n, cur, out.ptr(), din.size());
                break;
            case LayerKind::MaxPool: {
                tr.pool_argmax[l].resize(static_cast<std::size_t>(n) * dout.size());
                kern::maxpool2_forward(n, cur, out.ptr(), tr.pool_argmax[l].data(),
                                       din.h, din.w, din.c);
                break;
            }
            case LayerKind::Dropout: {
                if (mode.train) {
                    Tensor mask({n, din.size()});
                    fill_dropout_mask(mask, n, din.size(), sp.rate,
                                      static_cast<int>(l), mode.mask_seed,
                                      mode.sample_seeds);
                    kern::apply_mask(n, cur, mask.ptr(), out.ptr(), din.size());
                    tr.dropout_mask[l] = std::move(mask);
                } else {
                    out.data.assign(cur, cur + static_cast<std::size_t>(n) * din.size());
                }
                break;
            }
            case LayerKind::Dense:
                kern::dense_forward(n, cur, model.params[pb].ptr(),
                                    model.params[pb + 1].ptr(), out.ptr(),
                                    din.size(), sp.units);
                break;
            case LayerKind::BatchNorm: {
                const int slot = model.layout.bn_slot[l];
                if (mode.train) {
                    if (n * din.spatial() < 2)
                        throw std::invalid_argument(
                            "batchnorm: train mode needs at least 2 rows");
                    tr.bn_xhat[l] = Tensor({n, din.size()});
                    tr.bn_invstd[l] = Tensor({din.c});
                    tr.bn_mean[l] = Tensor({din.c});
                    tr.bn_var[l] = Tensor({din.c});
                    kern::batchnorm_forward_train(
                        n, cur, model.params[pb].ptr(), model.params[pb + 1].ptr(),
                        out.ptr(), tr.bn_xhat[l].ptr(), tr.bn_mean[l].ptr(),
                        tr.bn_var[l].ptr(), tr.bn_invstd[l].ptr(), din.spatial(),
                        din.c, kBnEps);
                } else {
                    kern::batchnorm_forward_eval(
                        n, cur, model.params[pb].ptr(), model.params[pb + 1].ptr(),
                        model.bn_running[slot].mean.ptr(),
                        model.bn_running[slot].var.ptr(), out.ptr(), din.spatial(),
                        din.c, kBnEps);
                }
                break;
            }
            case LayerKind::SoftmaxOutput: {
                tr.logits = Tensor({n, sp.units});
                kern::dense_forward(n, cur, model.params[pb].ptr(),
                                    model.params[pb + 1].ptr(), tr.logits.ptr(),
                                    din.size(), sp.units);
                kern::softmax_rows(n, tr.logits.ptr(), out.ptr(), sp.units);
                break;
            }
        }
        tr.acts[l] = std::move(out);
        cur = tr.acts[l].ptr();
    }
    return tr;
}

GradientSet backward(const Model& model, const ForwardTrace& trace,
                     const std::vector<int>& labels) {
    const int n = trace.batch;
    if (static_cast<int>(labels.size()) != n)
        throw std::invalid_argument("backward: label count does not match batch");
    const int classes = model.specs.back().units;
    for (int y : labels)
        if (y < 0 || y >= classes)
            throw std::invalid_argument("backward: label " + std::to_string(y) +
                                        " outside [0," + std::to_string(classes - 1) + "]");

    GradientSet gs;
    gs.grads.resize(model.params.size());
    for (std::size_t b = 0; b < model.params.size(); ++b)
        gs.grads[b] = Tensor(model.params[b].shape);

    const std::size_t L = model.specs.size();
    Tensor dcur;

    for (std::size_t li = L; li-- > 0;) {
        const LayerSpec& sp = model.specs[li];
        const LayerDims& din = dims_in(model, li);
        const LayerDims& dout = model.layout.out[li];
        const int pb = model.layout.first_param[li];
        const float* in_act =
            li == 0 ? trace.input.ptr() : trace.acts[li - 1].ptr();
        Tensor dprev({n, din.size()});

        switch (sp.kind) {
            case LayerKind::SoftmaxOutput: {
                // d(mean CE)/dlogits = (p - onehot)/n, fused with the softmax.
                Tensor dlogits({n, sp.units});
                const float invn = 1.0f / static_cast<float>(n);
                const float* p = trace.probs().ptr();
                for (int s = 0; s < n; ++s) {
                    float* dz = dlogits.ptr() + static_cast<std::size_t>(s) * sp.units;
                    const float* ps = p + static_cast<std::size_t>(s) * sp.units;
                    for (int c = 0; c < sp.units; ++c) dz[c] = ps[c] * invn;
                    dz[labels[static_cast<std::size_t>(s)]] -= invn;
                }
                kern::dense_backward_params(n, in_act, dlogits.ptr(),
                                            gs.grads[pb].ptr(), gs.grads[pb + 1].ptr(),
                                            din.size(), sp.units);
                kern::dense_backward_input(n, dlogits.ptr(), model.params[pb].ptr(),
                                           dprev.ptr(), din.size(), sp.units);
                break;
            }
            case LayerKind::Dense:
                kern::dense_backward_params(n, in_act, dcur.ptr(),
                                            gs.grads[pb].ptr(), gs.grads[pb + 1].ptr(),
                                            din.size(), sp.units);
                kern::dense_backward_input(n, dcur.ptr(), model.params[pb].ptr(),
                                           dprev.ptr(), din.size(), sp.units);
                break;
            case LayerKind::Dropout:
                if (trace.dropout_mask[li].numel() > 0)
                    kern::apply_mask(n, dcur.ptr(), trace.dropout_mask[li].ptr(),
                                     dprev.ptr(), din.size());
                else
                    dprev.data = dcur.data;  // eval-mode trace: identity
                break;
            case LayerKind::MaxPool:
                kern::maxpool2_backward(n, dcur.ptr(), trace.pool_argmax[li].data(),
                                        dprev.ptr(), din.size(), dout.size());
                break;
            case LayerKind::Relu:
                kern::relu_backward(n, trace.acts[li].ptr(), dcur.ptr(), dprev.ptr(),
                                    din.size());
                break;
            case LayerKind::BatchNorm:
                kern::batchnorm_backward(n, dcur.ptr(), trace.bn_xhat[li].ptr(),
                                         trace.bn_invstd[li].ptr(),
                                         model.params[pb].ptr(), dprev.ptr(),
                                         gs.grads[pb].ptr(), gs.grads[pb + 1].ptr(),
                                         din.spatial(), din.c);
                break;
            case LayerKind::Conv2d: {
                kern::ConvDims cd{din.h, din.w, din.c, sp.kernel, sp.units};
                kern::conv2d_backward_params(n, in_act, dcur.ptr(),
                                             gs.grads[pb].ptr(),
                                             gs.grads[pb + 1].ptr(), cd);
                if (li > 0)
                    kern::conv2d_backward_input(n, dcur.ptr(), model.params[pb].ptr(),
                                                dprev.ptr(), cd);
                break;
            }
        }
        dcur = std::move(dprev);
    }
    return gs;
}

void sgd_step(Model& model, const GradientSet& grads, float lr, float lambda) {
    if (grads.grads.size() != model.params.size())
        throw std::invalid_argument("sgd_step: gradient block count mismatch");
    for (std::size_t b = 0; b < model.params.size(); ++b) {
        Tensor& w = model.params[b];
        const Tensor& g = grads.grads[b];
        if (!w.same_shape(g))
            throw std::invalid_argument("sgd_step: shape mismatch in block " +
                                        model.layout.block_names[b]);
        const bool is_weight = model.layout.block_names[b].ends_with("_w");
        const float lam = is_weight ? lambda : 0.0f;
        float* wp = w.ptr();
        const float* gp = g.ptr();
        const std::size_t m = w.numel();
#pragma omp simd
        for (std::size_t i = 0; i < m; ++i) wp[i] -= lr * (gp[i] + lam * wp[i]);
    }
}

void update_bn_running(Model& model, const ForwardTrace& trace, float momentum) {
    for (std::size_t l = 0; l < model.specs.size(); ++l) {
        const int slot = model.layout.bn_slot[l];
        if (slot < 0 || trace.bn_mean[l].numel() == 0) continue;
        BnRunning& r = model.bn_running[static_cast<std::size_t>(slot)];
        for (std::size_t c = 0; c < r.mean.numel(); ++c) {
            r.mean.data[c] = momentum * r.mean.data[c] +
                             (1.0f - momentum) * trace.bn_mean[l].data[c];
            r.var.data[c] = momentum * r.var.data[c] +
                            (1.0f - momentum) * trace.bn_var[l].data[c];
        }
    }
}

double cross_entropy(const Tensor& probs, const std::vector<int>& labels) {
    const int n = probs.dim(0);
    const int classes = probs.dim(1);
    if (static_cast<int>(labels.size()) != n)
        throw std::invalid_argument("cross_entropy: label count mismatch");
    double acc = 0.0;
    for (int s = 0; s < n; ++s) {
        const int y = labels[static_cast<std::size_t>(s)];
        if (y < 0 || y >= classes)
            throw std::invalid_argument("cross_entropy: label out of range");
        const float p = std::max(probs.data[static_cast<std::size_t>(s) * classes + y],
                                 kProbFloor);
        acc -= std::log(static_cast<double>(p));
    }
    return acc / static_cast<double>(n);
}

namespace {

// Trace-free walk used by the prediction paths; processes rows in chunks to
// bound memory. seeds==nullptr selects eval mode (dropout identity,
// batchnorm running stats).
void walk_probs(const Model& model, const Tensor& batch,
                const std::uint64_t* seeds, float* probs_out,
                float* penult_out) {
    check_batch_shape(model, batch);
    const int total = batch.dim(0);
    const std::size_t L = model.specs.size();
    const int classes = model.specs.back().units;

    int max_sz = model.layout.input.size();
    for (const LayerDims& d : model.layout.out) max_sz = std::max(max_sz, d.size());

    const int chunk = std::max(1, std::min(total, 256));
    Tensor buf_a({chunk, max_sz}), buf_b({chunk, max_sz}), mask({chunk, max_sz});
    std::vector<std::int32_t> argmax(static_cast<std::size_t>(chunk) * max_sz);

    const int in_size = model.layout.input.size();
    const int penult = model.layout.penultimate_layer;

    for (int start = 0; start < total; start += chunk) {
        const int n = std::min(chunk, total - start);
        std::memcpy(buf_a.ptr(), batch.ptr() + static_cast<std::size_t>(start) * in_size,
                    static_cast<std::size_t>(n) * in_size * sizeof(float));
        float* cur = buf_a.ptr();
        float* nxt = buf_b.ptr();

        for (std::size_t l = 0; l < L; ++l) {
            const LayerSpec& sp = model.specs[l];
            const LayerDims& din = dims_in(model, l);
            const int pb = model.layout.first_param[l];
            bool swap = true;

            switch (sp.kind) {
                case LayerKind::Conv2d: {
                    kern::ConvDims cd{din.h, din.w, din.c, sp.kernel, sp.units};
                    kern::conv2d_forward(n, cur, model.params[pb].ptr(),
                                         model.params[pb + 1].ptr(), nxt, cd);
                    break;
                }
                case LayerKind::Relu:
                    kern::relu_forward(n, cur, nxt, din.size());
                    break;
                case LayerKind::MaxPool:
                    kern::maxpool2_forward(n, cur, nxt, argmax.data(), din.h, din.w,
                                           din.c);
                    break;
                case LayerKind::Dropout:
                    if (seeds) {
                        fill_dropout_mask(mask, n, din.size(), sp.rate,
                                          static_cast<int>(l), 0, seeds + start);
                        kern::apply_mask(n, cur, mask.ptr(), nxt, din.size());
                    } else {
                        swap = false;  // identity
                    }
                    break;
                case LayerKind::Dense:
                    kern::dense_forward(n, cur, model.params[pb].ptr(),
                                        model.params[pb + 1].ptr(), nxt, din.size(),
                                        sp.units);
                    break;
                case LayerKind::BatchNorm: {
                    const int slot = model.layout.bn_slot[l];
                    kern::batchnorm_forward_eval(
                        n, cur, model.params[pb].ptr(), model.params[pb + 1].ptr(),
                        model.bn_running[slot].mean.ptr(),
                        model.bn_running[slot].var.ptr(), nxt, din.spatial(), din.c,
                        kBnEps);
                    break;
                }
                case LayerKind::SoftmaxOutput:
                    kern::dense_forward(n, cur, model.params[pb].ptr(),
                                        model.params[pb + 1].ptr(), nxt, din.size(),
                                        sp.units);
                    kern::softmax_rows(n, nxt, nxt, sp.units);
                    break;
            }
            if (swap) std::swap(cur, nxt);
            if (penult_out && static_cast<int>(l) == penult) {
                const int w = model.layout.out[l].size();
                std::memcpy(penult_out + static_cast<std::size_t>(start) * w, cur,
                            static_cast<std::size_t>(n) * w * sizeof(float));
            }
        }
        std::memcpy(probs_out + static_cast<std::size_t>(start) * classes, cur,
                    static_cast<std::size_t>(n) * classes * sizeof(float));
    }
}

}  // namespace

Tensor predict_probs(const Model& model, const Tensor& batch) {
    Tensor probs({batch.dim(0), model.specs.back().units});
    walk_probs(model, batch, nullptr, probs.ptr(), nullptr);
    return probs;
}

EvalActivations predict_with_penultimate(const Model& model, const Tensor& batch) {
    if (model.layout.penultimate_layer < 0)
        throw std::invalid_argument("model has no penultimate activation layer");
    EvalActivations ev;
    ev.probs = Tensor({batch.dim(0), model.specs.back().units});
    ev.penultimate = Tensor(
        {batch.dim(0),
         model.layout.out[static_cast<std::size_t>(model.layout.penultimate_layer)].size()});
    walk_probs(model, batch, nullptr, ev.probs.ptr(), ev.penultimate.ptr());
    return ev;
}

Tensor stochastic_probs(const Model& model, const Tensor& batch,
                        const std::uint64_t* sample_seeds) {
    Tensor probs({batch.dim(0), model.specs.back().units});
    walk_probs(model, batch, sample_seeds, probs.ptr(), nullptr);
    return probs;
}

bool congruent(const Model& a, const Model& b) {
    if (a.params.size() != b.params.size()) return false;
    for (std::size_t i = 0; i < a.params.size(); ++i)
        if (!a.params[i].same_shape(b.params[i])) return false;
    return true;
}

}  // namespace flsim
