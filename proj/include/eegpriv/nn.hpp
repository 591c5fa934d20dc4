#pragma once

#include "eegpriv/rng.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

// Minimal CNN engine: explicit forward/backward per layer, gradients with
// respect to parameters and to the input (the latter drives perturbation
// optimization). Templated on the scalar so the finite-difference checks can
// run the exact same code in double precision.

namespace eegpriv::nn {

template <class S>
struct Tensor {
    int n = 0, c = 0, h = 0, w = 0;
    std::vector<S> v;

    Tensor() = default;
    Tensor(int n_, int c_, int h_, int w_)
        : n(n_), c(c_), h(h_), w(w_),
          v(static_cast<std::size_t>(n_) * c_ * h_ * w_, S(0)) {}

    std::size_t size() const { return v.size(); }
    S* at(int b, int ch) {
        return v.data() + ((static_cast<std::size_t>(b) * c + ch) * h) * w;
    }
    const S* at(int b, int ch) const {
        return v.data() + ((static_cast<std::size_t>(b) * c + ch) * h) * w;
    }
};

template <class S>
struct ParamView {
    S* value;
    S* grad;
    std::size_t size;
    std::string name;
};

template <class S>
struct Ctx {
    bool train = false;
    Rng* rng = nullptr;  // used by dropout in training mode
};

template <class S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <class S>
class Layer {
public:
    virtual ~Layer() = default;
    virtual Tensor<S> forward(const Tensor<S>& x, const Ctx<S>& ctx) = 0;
    virtual Tensor<S> backward(const Tensor<S>& gy) = 0;
    virtual std::vector<ParamView<S>> params() { return {}; }
    // Non-trainable state that checkpoints must carry (batch-norm running stats).
    virtual std::vector<ParamView<S>> state() { return {}; }
    virtual std::string name() const = 0;
};

// ---------------------------------------------------------------------------

template <class S>
class Conv2d : public Layer<S> {
public:
    Conv2d(int in_ch, int out_ch, int kh, int kw, int sh, int sw, int pad_top, int pad_bottom,
           int pad_left, int pad_right, int groups, bool bias, Rng& init_rng)
        : in_ch_(in_ch), out_ch_(out_ch), kh_(kh), kw_(kw), sh_(sh), sw_(sw), pt_(pad_top),
          pb_(pad_bottom), pl_(pad_left), pr_(pad_right), groups_(groups), has_bias_(bias) {
        if (in_ch % groups != 0 || out_ch % groups != 0)
            throw std::runtime_error("Conv2d: channels not divisible by groups");
        cin_g_ = in_ch / groups;
        cout_g_ = out_ch / groups;
        const std::size_t wsize =
            static_cast<std::size_t>(out_ch) * cin_g_ * kh * kw;
        weight_.resize(wsize);
        wgrad_.assign(wsize, S(0));
        // Glorot uniform, as in the reference Keras/PyTorch EEG implementations.
        const double fan_in = static_cast<double>(cin_g_) * kh * kw;
        const double fan_out = static_cast<double>(cout_g_) * kh * kw;
        const double limit = std::sqrt(6.0 / (fan_in + fan_out));
        for (S& v : weight_) v = static_cast<S>((2.0 * init_rng.uniform() - 1.0) * limit);
        if (has_bias_) {
            bias_.assign(out_ch, S(0));
            bgrad_.assign(out_ch, S(0));
        }
    }

    static std::unique_ptr<Conv2d<S>> same_w(int in_ch, int out_ch, int kw, int groups,
                                             bool bias, Rng& rng) {
        const int pl = (kw - 1) / 2, pr = kw - 1 - pl;
        return std::make_unique<Conv2d<S>>(in_ch, out_ch, 1, kw, 1, 1, 0, 0, pl, pr, groups,
                                           bias, rng);
    }
    static std::unique_ptr<Conv2d<S>> valid(int in_ch, int out_ch, int kh, int kw, bool bias,
                                            Rng& rng) {
        return std::make_unique<Conv2d<S>>(in_ch, out_ch, kh, kw, 1, 1, 0, 0, 0, 0, 1, bias,
                                           rng);
    }

    int out_h(int h) const { return (h + pt_ + pb_ - kh_) / sh_ + 1; }
    int out_w(int w) const { return (w + pl_ + pr_ - kw_) / sw_ + 1; }

    // Two hot shapes get dedicated paths: temporal filters (kh=1, one input
    // channel per group) run as direct FIR accumulation, and full-height
    // spatial filters run as one GEMM per batch element on the contiguous
    // [c*h x w] input block. Everything else goes through im2col.
    bool fir_path(const Tensor<S>& x) const {
        return kh_ == 1 && sh_ == 1 && sw_ == 1 && cin_g_ == 1 && pt_ == 0 && pb_ == 0 &&
               x.h >= 1;
    }
    bool spatial_path(const Tensor<S>& x) const {
        return kw_ == 1 && kh_ == x.h && sh_ == 1 && sw_ == 1 && groups_ == 1 && pt_ == 0 &&
               pb_ == 0 && pl_ == 0 && pr_ == 0;
    }

    Tensor<S> forward(const Tensor<S>& x, const Ctx<S>&) override {
        if (x.c != in_ch_) throw std::runtime_error("Conv2d: channel mismatch");
        const int ho = out_h(x.h), wo = out_w(x.w);
        if (ho < 1 || wo < 1)
            throw std::runtime_error("Conv2d: input smaller than receptive field");
        x_ = x;
        Tensor<S> y(x.n, out_ch_, ho, wo);

        if (fir_path(x)) {
            forward_fir(x, y, wo);
        } else if (spatial_path(x)) {
            const int rows = in_ch_ * x.h;
            Eigen::Map<const Mat<S>> w_mat(weight_.data(), out_ch_, rows);
            for (int b = 0; b < x.n; ++b) {
                Eigen::Map<const Mat<S>> in_b(x.at(b, 0), rows, x.w);
                Eigen::Map<Mat<S>> out_b(y.at(b, 0), out_ch_, x.w);
                out_b.noalias() = w_mat * in_b;
            }
        } else {
            const std::size_t cols = static_cast<std::size_t>(x.n) * ho * wo;
            const int rows = cin_g_ * kh_ * kw_;
            col_.resize(static_cast<std::size_t>(rows) * cols);
            for (int g = 0; g < groups_; ++g) {
                im2col(x, g, ho, wo);
                Eigen::Map<const Mat<S>> w_mat(weight_.data() +
                                                   static_cast<std::size_t>(g) * cout_g_ * rows,
                                               cout_g_, rows);
                Eigen::Map<const Mat<S>> col_mat(col_.data(), rows, cols);
                Mat<S> out_mat(cout_g_, cols);
                out_mat.noalias() = w_mat * col_mat;
                for (int co = 0; co < cout_g_; ++co)
                    for (int b = 0; b < x.n; ++b)
                        std::memcpy(
                            y.at(b, g * cout_g_ + co),
                            out_mat.data() + (static_cast<std::size_t>(co) * x.n + b) * ho * wo,
                            sizeof(S) * ho * wo);
            }
        }
        if (has_bias_) {
            for (int b = 0; b < y.n; ++b)
                for (int co = 0; co < out_ch_; ++co) {
                    S* p = y.at(b, co);
                    const S bv = bias_[co];
                    for (int i = 0; i < ho * wo; ++i) p[i] += bv;
                }
        }
        return y;
    }

    Tensor<S> backward(const Tensor<S>& gy) override {
        const int ho = gy.h, wo = gy.w;
        Tensor<S> gx(x_.n, x_.c, x_.h, x_.w);

        if (fir_path(x_)) {
            backward_fir(gy, gx, wo);
        } else if (spatial_path(x_)) {
            const int rows = in_ch_ * x_.h;
            Eigen::Map<const Mat<S>> w_mat(weight_.data(), out_ch_, rows);
            Eigen::Map<Mat<S>> wg_mat(wgrad_.data(), out_ch_, rows);
            for (int b = 0; b < x_.n; ++b) {
                Eigen::Map<const Mat<S>> in_b(x_.at(b, 0), rows, x_.w);
                Eigen::Map<const Mat<S>> gy_b(gy.at(b, 0), out_ch_, x_.w);
                Eigen::Map<Mat<S>> gx_b(gx.at(b, 0), rows, x_.w);
                wg_mat.noalias() += gy_b * in_b.transpose();
                gx_b.noalias() = w_mat.transpose() * gy_b;
            }
        } else {
            const std::size_t cols = static_cast<std::size_t>(x_.n) * ho * wo;
            const int rows = cin_g_ * kh_ * kw_;
            col_.resize(static_cast<std::size_t>(rows) * cols);
            Mat<S> gy_mat(cout_g_, cols);
            for (int g = 0; g < groups_; ++g) {
                for (int co = 0; co < cout_g_; ++co)
                    for (int b = 0; b < x_.n; ++b)
                        std::memcpy(
                            gy_mat.data() + (static_cast<std::size_t>(co) * x_.n + b) * ho * wo,
                            gy.at(b, g * cout_g_ + co), sizeof(S) * ho * wo);

                im2col(x_, g, ho, wo);
                Eigen::Map<const Mat<S>> col_mat(col_.data(), rows, cols);
                Eigen::Map<Mat<S>> wg_mat(wgrad_.data() +
                                              static_cast<std::size_t>(g) * cout_g_ * rows,
                                          cout_g_, rows);
                wg_mat.noalias() += gy_mat * col_mat.transpose();

                Eigen::Map<const Mat<S>> w_mat(weight_.data() +
                                                   static_cast<std::size_t>(g) * cout_g_ * rows,
                                               cout_g_, rows);
                Mat<S> dcol(rows, cols);
                dcol.noalias() = w_mat.transpose() * gy_mat;
                col2im_add(dcol, gx, g, ho, wo);
            }
        }
        if (has_bias_) {
            for (int b = 0; b < gy.n; ++b)
                for (int co = 0; co < out_ch_; ++co) {
                    const S* p = gy.at(b, co);
                    S acc(0);
                    for (int i = 0; i < ho * wo; ++i) acc += p[i];
                    bgrad_[co] += acc;
                }
        }
        return gx;
    }

    std::vector<ParamView<S>> params() override {
        std::vector<ParamView<S>> p = {
            {weight_.data(), wgrad_.data(), weight_.size(), "conv.weight"}};
        if (has_bias_) p.push_back({bias_.data(), bgrad_.data(), bias_.size(), "conv.bias"});
        return p;
    }
    std::string name() const override { return "conv2d"; }

private:
    using ArrMap = Eigen::Map<Eigen::Array<S, Eigen::Dynamic, 1>>;
    using ArrMapC = Eigen::Map<const Eigen::Array<S, Eigen::Dynamic, 1>>;

    // out[b, g*cout_g + co, h, :] += w[co, kj] * x[b, g, h, : shifted by kj - pl]
    void forward_fir(const Tensor<S>& x, Tensor<S>& y, int wo) {
        for (int b = 0; b < x.n; ++b) {
            for (int g = 0; g < groups_; ++g) {
                for (int h = 0; h < x.h; ++h) {
                    const S* xrow = x.at(b, g) + static_cast<std::size_t>(h) * x.w;
                    for (int co = 0; co < cout_g_; ++co) {
                        S* yrow = y.at(b, g * cout_g_ + co) + static_cast<std::size_t>(h) * wo;
                        const S* w = weight_.data() +
                                     static_cast<std::size_t>(g * cout_g_ + co) * kw_;
                        for (int kj = 0; kj < kw_; ++kj) {
                            const int off = kj - pl_;
                            const int a = std::max(0, -off);
                            const int stop = std::min(wo, x.w - off);
                            if (stop <= a) continue;
                            ArrMap(yrow + a, stop - a) +=
                                w[kj] * ArrMapC(xrow + a + off, stop - a);
                        }
                    }
                }
            }
        }
    }

    void backward_fir(const Tensor<S>& gy, Tensor<S>& gx, int wo) {
        for (int b = 0; b < gy.n; ++b) {
            for (int g = 0; g < groups_; ++g) {
                for (int h = 0; h < gx.h; ++h) {
                    const S* xrow = x_.at(b, g) + static_cast<std::size_t>(h) * x_.w;
                    S* gxrow = gx.at(b, g) + static_cast<std::size_t>(h) * gx.w;
                    for (int co = 0; co < cout_g_; ++co) {
                        const S* gyrow =
                            gy.at(b, g * cout_g_ + co) + static_cast<std::size_t>(h) * wo;
                        const S* w = weight_.data() +
                                     static_cast<std::size_t>(g * cout_g_ + co) * kw_;
                        S* wg = wgrad_.data() + static_cast<std::size_t>(g * cout_g_ + co) * kw_;
                        for (int kj = 0; kj < kw_; ++kj) {
                            const int off = kj - pl_;
                            const int a = std::max(0, -off);
                            const int stop = std::min(wo, x_.w - off);
                            if (stop <= a) continue;
                            ArrMapC gseg(gyrow + a, stop - a);
                            wg[kj] += (gseg * ArrMapC(xrow + a + off, stop - a)).sum();
                            ArrMap(gxrow + a + off, stop - a) += w[kj] * gseg;
                        }
                    }
                }
            }
        }
    }

    // col_ layout: RowMajor [cin_g*kh*kw x n*ho*wo], one group at a time.
    void im2col(const Tensor<S>& x, int g, int ho, int wo) {
        const std::size_t cols = static_cast<std::size_t>(x.n) * ho * wo;
        for (int ci = 0; ci < cin_g_; ++ci) {
            for (int ki = 0; ki < kh_; ++ki) {
                for (int kj = 0; kj < kw_; ++kj) {
                    S* dst = col_.data() +
                             (static_cast<std::size_t>((ci * kh_ + ki) * kw_ + kj)) * cols;
                    for (int b = 0; b < x.n; ++b) {
                        const S* src = x.at(b, g * cin_g_ + ci);
                        for (int oh = 0; oh < ho; ++oh) {
                            const int ih = oh * sh_ - pt_ + ki;
                            S* drow = dst + (static_cast<std::size_t>(b) * ho + oh) * wo;
                            if (ih < 0 || ih >= x.h) {
                                std::fill(drow, drow + wo, S(0));
                                continue;
                            }
                            const S* srow = src + static_cast<std::size_t>(ih) * x.w;
                            for (int ow = 0; ow < wo; ++ow) {
                                const int iw = ow * sw_ - pl_ + kj;
                                drow[ow] = (iw >= 0 && iw < x.w) ? srow[iw] : S(0);
                            }
                        }
                    }
                }
            }
        }
    }

    void col2im_add(const Mat<S>& dcol, Tensor<S>& gx, int g, int ho, int wo) {
        for (int ci = 0; ci < cin_g_; ++ci) {
            for (int ki = 0; ki < kh_; ++ki) {
                for (int kj = 0; kj < kw_; ++kj) {
                    const S* src =
                        dcol.data() + (static_cast<std::size_t>((ci * kh_ + ki) * kw_ + kj)) *
                                          dcol.cols();
                    for (int b = 0; b < gx.n; ++b) {
                        S* dst = gx.at(b, g * cin_g_ + ci);
                        for (int oh = 0; oh < ho; ++oh) {
                            const int ih = oh * sh_ - pt_ + ki;
                            if (ih < 0 || ih >= gx.h) continue;
                            const S* srow = src + (static_cast<std::size_t>(b) * ho + oh) * wo;
                            S* drow = dst + static_cast<std::size_t>(ih) * gx.w;
                            for (int ow = 0; ow < wo; ++ow) {
                                const int iw = ow * sw_ - pl_ + kj;
                                if (iw >= 0 && iw < gx.w) drow[iw] += srow[ow];
                            }
                        }
                    }
                }
            }
        }
    }

    int in_ch_, out_ch_, kh_, kw_, sh_, sw_, pt_, pb_, pl_, pr_, groups_;
    bool has_bias_;
    int cin_g_ = 0, cout_g_ = 0;
    std::vector<S> weight_, wgrad_, bias_, bgrad_;
    std::vector<S> col_;
    Tensor<S> x_;
};

// ---------------------------------------------------------------------------

template <class S>
class BatchNorm2d : public Layer<S> {
public:
    explicit BatchNorm2d(int channels, double momentum = 0.1, double eps = 1e-5)
        : ch_(channels), momentum_(momentum), eps_(eps) {
        gamma_.assign(ch_, S(1));
        beta_.assign(ch_, S(0));
        ggrad_.assign(ch_, S(0));
        bgrad_.assign(ch_, S(0));
        run_mean_.assign(ch_, S(0));
        run_var_.assign(ch_, S(1));
    }

    Tensor<S> forward(const Tensor<S>& x, const Ctx<S>& ctx) override {
        x_ = x;
        train_ = ctx.train;
        Tensor<S> y(x.n, x.c, x.h, x.w);
        const std::size_t hw = static_cast<std::size_t>(x.h) * x.w;
        const std::size_t count = static_cast<std::size_t>(x.n) * hw;
        mean_.assign(ch_, S(0));
        ivar_.assign(ch_, S(0));
        using ArrC = Eigen::Map<const Eigen::Array<S, Eigen::Dynamic, 1>>;
        using Arr = Eigen::Map<Eigen::Array<S, Eigen::Dynamic, 1>>;
        for (int c = 0; c < ch_; ++c) {
            S mean, var;
            if (train_) {
                S sum(0), sum2(0);
                for (int b = 0; b < x.n; ++b) {
                    ArrC p(x.at(b, c), hw);
                    sum += p.sum();
                    sum2 += p.square().sum();
                }
                mean = sum / static_cast<S>(count);
                var = sum2 / static_cast<S>(count) - mean * mean;
                if (var < S(0)) var = S(0);
                run_mean_[c] = static_cast<S>((1.0 - momentum_) * run_mean_[c] +
                                              momentum_ * mean);
                run_var_[c] = static_cast<S>((1.0 - momentum_) * run_var_[c] + momentum_ * var);
            } else {
                mean = run_mean_[c];
                var = run_var_[c];
            }
            const S ivar = S(1) / std::sqrt(var + static_cast<S>(eps_));
            mean_[c] = mean;
            ivar_[c] = ivar;
            const S g = gamma_[c], bta = beta_[c];
            for (int b = 0; b < x.n; ++b) {
                ArrC p(x.at(b, c), hw);
                Arr q(y.at(b, c), hw);
                q = (p - mean) * (g * ivar) + bta;
            }
        }
        return y;
    }

    Tensor<S> backward(const Tensor<S>& gy) override {
        Tensor<S> gx(gy.n, gy.c, gy.h, gy.w);
        const std::size_t hw = static_cast<std::size_t>(gy.h) * gy.w;
        const S count = static_cast<S>(static_cast<std::size_t>(gy.n) * hw);
        using ArrC = Eigen::Map<const Eigen::Array<S, Eigen::Dynamic, 1>>;
        using Arr = Eigen::Map<Eigen::Array<S, Eigen::Dynamic, 1>>;
        for (int c = 0; c < ch_; ++c) {
            const S mean = mean_[c], ivar = ivar_[c], g = gamma_[c];
            S sum_dy(0), sum_dy_xhat(0);
            for (int b = 0; b < gy.n; ++b) {
                ArrC dy(gy.at(b, c), hw);
                ArrC x(x_.at(b, c), hw);
                sum_dy += dy.sum();
                sum_dy_xhat += (dy * (x - mean)).sum() * ivar;
            }
            ggrad_[c] += sum_dy_xhat;
            bgrad_[c] += sum_dy;
            if (train_) {
                const S scale = g * ivar / count;
                for (int b = 0; b < gy.n; ++b) {
                    ArrC dy(gy.at(b, c), hw);
                    ArrC x(x_.at(b, c), hw);
                    Arr dx(gx.at(b, c), hw);
                    dx = scale * (count * dy - sum_dy - (x - mean) * ivar * sum_dy_xhat);
                }
            } else {
                for (int b = 0; b < gy.n; ++b) {
                    ArrC dy(gy.at(b, c), hw);
                    Arr dx(gx.at(b, c), hw);
                    dx = dy * (g * ivar);
                }
            }
        }
        return gx;
    }

    std::vector<ParamView<S>> params() override {
        return {{gamma_.data(), ggrad_.data(), gamma_.size(), "bn.gamma"},
                {beta_.data(), bgrad_.data(), beta_.size(), "bn.beta"}};
    }
    std::vector<ParamView<S>> state() override {
        return {{run_mean_.data(), nullptr, run_mean_.size(), "bn.run_mean"},
                {run_var_.data(), nullptr, run_var_.size(), "bn.run_var"}};
    }
    std::string name() const override { return "batchnorm"; }

private:
    int ch_;
    double momentum_, eps_;
    bool train_ = false;
    std::vector<S> gamma_, beta_, ggrad_, bgrad_, run_mean_, run_var_, mean_, ivar_;
    Tensor<S> x_;
};

// ---------------------------------------------------------------------------

template <class S>
class Elu : public Layer<S> {
public:
    Tensor<S> forward(const Tensor<S>& x, const Ctx<S>&) override {
        Tensor<S> y = x;
        using Arr = Eigen::Array<S, Eigen::Dynamic, 1>;
        Eigen::Map<Arr> ym(y.v.data(), y.size());
        ym = (ym > S(0)).select(ym, ym.exp() - S(1));
        y_ = y;
        return y;
    }
    Tensor<S> backward(const Tensor<S>& gy) override {
        Tensor<S> gx = gy;
        using Arr = Eigen::Array<S, Eigen::Dynamic, 1>;
        Eigen::Map<Arr> gm(gx.v.data(), gx.size());
        Eigen::Map<const Arr> ym(y_.v.data(), y_.size());
        gm = (ym > S(0)).select(gm, gm * (ym + S(1)));
        return gx;
    }
    std::string name() const override { return "elu"; }

private:
    Tensor<S> y_;
};

template <class S>
class Square : public Layer<S> {
public:
    Tensor<S> forward(const Tensor<S>& x, const Ctx<S>&) override {
        x_ = x;
        Tensor<S> y = x;
        for (S& v : y.v) v = v * v;
        return y;
    }
    Tensor<S> backward(const Tensor<S>& gy) override {
        Tensor<S> gx = gy;
        for (std::size_t i = 0; i < gx.size(); ++i) gx.v[i] = S(2) * x_.v[i] * gy.v[i];
        return gx;
    }
    std::string name() const override { return "square"; }

private:
    Tensor<S> x_;
};

// log(max(x, eps)), the usual safe-log after average pooling of squares.
template <class S>
class SafeLog : public Layer<S> {
public:
    explicit SafeLog(double eps = 1e-6) : eps_(static_cast<S>(eps)) {}
    Tensor<S> forward(const Tensor<S>& x, const Ctx<S>&) override {
        x_ = x;
        Tensor<S> y = x;
        for (S& v : y.v) v = std::log(std::max(v, eps_));
        return y;
    }
    Tensor<S> backward(const Tensor<S>& gy) override {
        Tensor<S> gx = gy;
        for (std::size_t i = 0; i < gx.size(); ++i)
            gx.v[i] = x_.v[i] > eps_ ? gy.v[i] / x_.v[i] : S(0);
        return gx;
    }
    std::string name() const override { return "safelog"; }

private:
    S eps_;
    Tensor<S> x_;
};

// ---------------------------------------------------------------------------

template <class S>
class AvgPool2d : public Layer<S> {
public:
    AvgPool2d(int ph, int pw, int sh, int sw) : ph_(ph), pw_(pw), sh_(sh), sw_(sw) {}
    AvgPool2d(int ph, int pw) : AvgPool2d(ph, pw, ph, pw) {}

    Tensor<S> forward(const Tensor<S>& x, const Ctx<S>&) override {
        in_h_ = x.h;
        in_w_ = x.w;
        const int ho = (x.h - ph_) / sh_ + 1;
        const int wo = (x.w - pw_) / sw_ + 1;
        if (ho < 1 || wo < 1) throw std::runtime_error("AvgPool2d: input too small");
        Tensor<S> y(x.n, x.c, ho, wo);
        const S inv = S(1) / static_cast<S>(ph_ * pw_);
        for (int b = 0; b < x.n; ++b)
            for (int c = 0; c < x.c; ++c) {
                const S* src = x.at(b, c);
                S* dst = y.at(b, c);
                for (int oh = 0; oh < ho; ++oh)
                    for (int ow = 0; ow < wo; ++ow) {
                        S acc(0);
                        for (int i = 0; i < ph_; ++i) {
                            const S* row = src + static_cast<std::size_t>(oh * sh_ + i) * x.w +
                                           ow * sw_;
                            for (int j = 0; j < pw_; ++j) acc += row[j];
                        }
                        dst[static_cast<std::size_t>(oh) * wo + ow] = acc * inv;
                    }
            }
        return y;
    }

    Tensor<S> backward(const Tensor<S>& gy) override {
        Tensor<S> gx(gy.n, gy.c, in_h_, in_w_);
        const S inv = S(1) / static_cast<S>(ph_ * pw_);
        for (int b = 0; b < gy.n; ++b)
            for (int c = 0; c < gy.c; ++c) {
                const S* src = gy.at(b, c);
                S* dst = gx.at(b, c);
                for (int oh = 0; oh < gy.h; ++oh)
                    for (int ow = 0; ow < gy.w; ++ow) {
                        const S g = src[static_cast<std::size_t>(oh) * gy.w + ow] * inv;
                        for (int i = 0; i < ph_; ++i) {
                            S* row = dst + static_cast<std::size_t>(oh * sh_ + i) * in_w_ +
                                     ow * sw_;
                            for (int j = 0; j < pw_; ++j) row[j] += g;
                        }
                    }
            }
        return gx;
    }
    std::string name() const override { return "avgpool"; }

private:
    int ph_, pw_, sh_, sw_;
    int in_h_ = 0, in_w_ = 0;
};

template <class S>
class MaxPool2d : public Layer<S> {
public:
    MaxPool2d(int ph, int pw, int sh, int sw) : ph_(ph), pw_(pw), sh_(sh), sw_(sw) {}
    MaxPool2d(int ph, int pw) : MaxPool2d(ph, pw, ph, pw) {}

    Tensor<S> forward(const Tensor<S>& x, const Ctx<S>&) override {
        in_h_ = x.h;
        in_w_ = x.w;
        const int ho = (x.h - ph_) / sh_ + 1;
        const int wo = (x.w - pw_) / sw_ + 1;
        if (ho < 1 || wo < 1) throw std::runtime_error("MaxPool2d: input too small");
        Tensor<S> y(x.n, x.c, ho, wo);
        argmax_.assign(y.size(), 0);
        std::size_t out_i = 0;
        for (int b = 0; b < x.n; ++b)
            for (int c = 0; c < x.c; ++c) {
                const S* src = x.at(b, c);
                S* dst = y.at(b, c);
                for (int oh = 0; oh < ho; ++oh)
                    for (int ow = 0; ow < wo; ++ow, ++out_i) {
                        S best = src[static_cast<std::size_t>(oh * sh_) * x.w + ow * sw_];
                        int best_idx = (oh * sh_) * x.w + ow * sw_;
                        for (int i = 0; i < ph_; ++i)
                            for (int j = 0; j < pw_; ++j) {
                                const int idx = (oh * sh_ + i) * x.w + ow * sw_ + j;
                                if (src[idx] > best) {
                                    best = src[idx];
                                    best_idx = idx;
                                }
                            }
                        dst[static_cast<std::size_t>(oh) * wo + ow] = best;
                        argmax_[out_i] = best_idx;
                    }
            }
        return y;
    }

    Tensor<S> backward(const Tensor<S>& gy) override {
        Tensor<S> gx(gy.n, gy.c, in_h_, in_w_);
        std::size_t out_i = 0;
        for (int b = 0; b < gy.n; ++b)
            for (int c = 0; c < gy.c; ++c) {
                const S* src = gy.at(b, c);
                S* dst = gx.at(b, c);
                const std::size_t n_out = static_cast<std::size_t>(gy.h) * gy.w;
                for (std::size_t i = 0; i < n_out; ++i, ++out_i) dst[argmax_[out_i]] += src[i];
            }
        return gx;
    }
    std::string name() const override { return "maxpool"; }

private:
    int ph_, pw_, sh_, sw_;
    int in_h_ = 0, in_w_ = 0;
    std::vector<int> argmax_;
};

// ---------------------------------------------------------------------------

template <class S>
class Dropout : public Layer<S> {
public:
    explicit Dropout(double p) : p_(p) {}

    Tensor<S> forward(const Tensor<S>& x, const Ctx<S>& ctx) override {
        if (!ctx.train || p_ <= 0.0) {
            active_ = false;
            return x;
        }
        if (ctx.rng == nullptr) throw std::runtime_error("Dropout: no rng in training mode");
        active_ = true;
        mask_.resize(x.size());
        const S scale = static_cast<S>(1.0 / (1.0 - p_));
        Tensor<S> y = x;
        for (std::size_t i = 0; i < x.size(); ++i) {
            mask_[i] = ctx.rng->uniform() >= p_ ? scale : S(0);
            y.v[i] *= mask_[i];
        }
        return y;
    }

    Tensor<S> backward(const Tensor<S>& gy) override {
        if (!active_) return gy;
        Tensor<S> gx = gy;
        for (std::size_t i = 0; i < gx.size(); ++i) gx.v[i] *= mask_[i];
        return gx;
    }
    std::string name() const override { return "dropout"; }

private:
    double p_;
    bool active_ = false;
    std::vector<S> mask_;
};

// ---------------------------------------------------------------------------

// Flattens (c,h,w) and applies a dense map to n_out logits.
template <class S>
class Linear : public Layer<S> {
public:
    Linear(int in_features, int out_features, Rng& init_rng)
        : in_(in_features), out_(out_features) {
        weight_.resize(static_cast<std::size_t>(out_) * in_);
        wgrad_.assign(weight_.size(), S(0));
        bias_.assign(out_, S(0));
        bgrad_.assign(out_, S(0));
        const double limit = std::sqrt(6.0 / (in_ + out_));
        for (S& v : weight_) v = static_cast<S>((2.0 * init_rng.uniform() - 1.0) * limit);
    }

    Tensor<S> forward(const Tensor<S>& x, const Ctx<S>&) override {
        if (static_cast<int>(x.size() / x.n) != in_)
            throw std::runtime_error("Linear: feature size mismatch");
        x_ = x;
        Tensor<S> y(x.n, out_, 1, 1);
        Eigen::Map<const Mat<S>> xm(x.v.data(), x.n, in_);
        Eigen::Map<const Mat<S>> wm(weight_.data(), out_, in_);
        Eigen::Map<Mat<S>> ym(y.v.data(), x.n, out_);
        ym.noalias() = xm * wm.transpose();
        for (int b = 0; b < x.n; ++b)
            for (int k = 0; k < out_; ++k) ym(b, k) += bias_[k];
        return y;
    }

    Tensor<S> backward(const Tensor<S>& gy) override {
        Tensor<S> gx(x_.n, x_.c, x_.h, x_.w);
        Eigen::Map<const Mat<S>> gym(gy.v.data(), gy.n, out_);
        Eigen::Map<const Mat<S>> xm(x_.v.data(), x_.n, in_);
        Eigen::Map<Mat<S>> wgm(wgrad_.data(), out_, in_);
        wgm.noalias() += gym.transpose() * xm;
        for (int b = 0; b < gy.n; ++b)
            for (int k = 0; k < out_; ++k) bgrad_[k] += gym(b, k);
        Eigen::Map<const Mat<S>> wm(weight_.data(), out_, in_);
        Eigen::Map<Mat<S>> gxm(gx.v.data(), x_.n, in_);
        gxm.noalias() = gym * wm;
        return gx;
    }

    std::vector<ParamView<S>> params() override {
        return {{weight_.data(), wgrad_.data(), weight_.size(), "linear.weight"},
                {bias_.data(), bgrad_.data(), bias_.size(), "linear.bias"}};
    }
    std::string name() const override { return "linear"; }

private:
    int in_, out_;
    std::vector<S> weight_, wgrad_, bias_, bgrad_;
    Tensor<S> x_;
};

// ---------------------------------------------------------------------------

template <class S>
class Net {
public:
    std::vector<std::unique_ptr<Layer<S>>> layers;

    Tensor<S> forward(const Tensor<S>& x, bool train, Rng* rng = nullptr) {
        Ctx<S> ctx{train, rng};
        Tensor<S> cur = x;
        for (auto& l : layers) cur = l->forward(cur, ctx);
        return cur;
    }

    // Returns the gradient with respect to the network input.
    Tensor<S> backward(const Tensor<S>& gy) {
        Tensor<S> cur = gy;
        for (auto it = layers.rbegin(); it != layers.rend(); ++it) cur = (*it)->backward(cur);
        return cur;
    }

    std::vector<ParamView<S>> params() {
        std::vector<ParamView<S>> out;
        for (auto& l : layers)
            for (auto& p : l->params()) out.push_back(p);
        return out;
    }

    std::size_t param_count() {
        std::size_t n = 0;
        for (auto& p : params()) n += p.size;
        return n;
    }

    void zero_grads() {
        for (auto& p : params()) std::fill(p.grad, p.grad + p.size, S(0));
    }

    std::vector<S> flat_params() {
        std::vector<S> out;
        for (auto& p : params()) out.insert(out.end(), p.value, p.value + p.size);
        return out;
    }

    void set_flat_params(const std::vector<S>& flat) {
        std::size_t off = 0;
        for (auto& p : params()) {
            if (off + p.size > flat.size()) throw std::runtime_error("set_flat_params: size mismatch");
            std::copy(flat.begin() + off, flat.begin() + off + p.size, p.value);
            off += p.size;
        }
        if (off != flat.size()) throw std::runtime_error("set_flat_params: size mismatch");
    }

    std::vector<ParamView<S>> state() {
        std::vector<ParamView<S>> out;
        for (auto& l : layers)
            for (auto& p : l->state()) out.push_back(p);
        return out;
    }

    std::vector<S> flat_state() {
        std::vector<S> out;
        for (auto& p : state()) out.insert(out.end(), p.value, p.value + p.size);
        return out;
    }

    void set_flat_state(const std::vector<S>& flat) {
        std::size_t off = 0;
        for (auto& p : state()) {
            if (off + p.size > flat.size()) throw std::runtime_error("set_flat_state: size mismatch");
            std::copy(flat.begin() + off, flat.begin() + off + p.size, p.value);
            off += p.size;
        }
        if (off != flat.size()) throw std::runtime_error("set_flat_state: size mismatch");
    }
};

// Softmax cross-entropy over logits [B, K]; labels are 1-based.
// Returns mean loss; writes dL/dlogits (already divided by B) if dlogits != nullptr.
template <class S>
S softmax_cross_entropy(const Tensor<S>& logits, const std::vector<int>& labels,
                        Tensor<S>* dlogits = nullptr, std::vector<int>* argmax = nullptr) {
    const int B = logits.n;
    const int K = static_cast<int>(logits.size() / logits.n);
    if (static_cast<int>(labels.size()) != B)
        throw std::runtime_error("softmax_cross_entropy: label count mismatch");
    if (dlogits != nullptr) *dlogits = Tensor<S>(logits.n, logits.c, logits.h, logits.w);
    if (argmax != nullptr) argmax->assign(B, 1);
    S total(0);
    for (int b = 0; b < B; ++b) {
        const S* z = logits.v.data() + static_cast<std::size_t>(b) * K;
        S zmax = z[0];
        int best = 0;
        for (int k = 1; k < K; ++k)
            if (z[k] > zmax) {
                zmax = z[k];
                best = k;
            }
        if (argmax != nullptr) (*argmax)[b] = best + 1;
        S denom(0);
        for (int k = 0; k < K; ++k) denom += std::exp(z[k] - zmax);
        const int y = labels[b] - 1;
        if (y < 0 || y >= K) throw std::runtime_error("softmax_cross_entropy: label out of range");
        total += -(z[y] - zmax) + std::log(denom);
        if (dlogits != nullptr) {
            S* d = dlogits->v.data() + static_cast<std::size_t>(b) * K;
            for (int k = 0; k < K; ++k) d[k] = std::exp(z[k] - zmax) / denom / static_cast<S>(B);
            d[y] -= S(1) / static_cast<S>(B);
        }
    }
    return total / static_cast<S>(B);
}

// Row-wise softmax probabilities.
template <class S>
Mat<S> softmax(const Tensor<S>& logits) {
    const int B = logits.n;
    const int K = static_cast<int>(logits.size() / logits.n);
    Mat<S> out(B, K);
    for (int b = 0; b < B; ++b) {
        const S* z = logits.v.data() + static_cast<std::size_t>(b) * K;
        S zmax = *std::max_element(z, z + K);
        S denom(0);
        for (int k = 0; k < K; ++k) denom += std::exp(z[k] - zmax);
        for (int k = 0; k < K; ++k) out(b, k) = std::exp(z[k] - zmax) / denom;
    }
    return out;
}

template <class S>
class Adam {
public:
    Adam(double lr, double weight_decay = 0.0, double beta1 = 0.9, double beta2 = 0.999,
         double eps = 1e-8)
        : lr_(lr), wd_(weight_decay), b1_(beta1), b2_(beta2), eps_(eps) {}

    void step(const std::vector<ParamView<S>>& params) {
        std::size_t total = 0;
        for (const auto& p : params) total += p.size;
        if (m_.size() != total) {
            m_.assign(total, S(0));
            v_.assign(total, S(0));
            t_ = 0;
        }
        ++t_;
        const double bc1 = 1.0 - std::pow(b1_, t_);
        const double bc2 = 1.0 - std::pow(b2_, t_);
        std::size_t off = 0;
        for (const auto& p : params) {
            for (std::size_t i = 0; i < p.size; ++i) {
                double g = static_cast<double>(p.grad[i]) + wd_ * static_cast<double>(p.value[i]);
                double m = b1_ * static_cast<double>(m_[off + i]) + (1.0 - b1_) * g;
                double v = b2_ * static_cast<double>(v_[off + i]) + (1.0 - b2_) * g * g;
                m_[off + i] = static_cast<S>(m);
                v_[off + i] = static_cast<S>(v);
                p.value[i] -= static_cast<S>(lr_ * (m / bc1) / (std::sqrt(v / bc2) + eps_));
            }
            off += p.size;
        }
    }

private:
    double lr_, wd_, b1_, b2_, eps_;
    std::vector<S> m_, v_;
    long t_ = 0;
};

}  // namespace eegpriv::nn
