#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "eegpriv/models.hpp"
#include "eegpriv/nn.hpp"
#include "eegpriv/rng.hpp"

#include <cmath>

using namespace eegpriv;
using namespace eegpriv::nn;

namespace {

// reference convolution for the im2col implementation
template <class S>
Tensor<S> conv_naive(const Tensor<S>& x, const std::vector<S>& w, int out_ch, int kh, int kw,
                     int sh, int sw, int pt, int pl, int groups) {
    const int cin_g = x.c / groups, cout_g = out_ch / groups;
    const int ho = (x.h + 2 * pt - kh) / sh + 1;  // symmetric pads in this helper
    const int wo = (x.w + 2 * pl - kw) / sw + 1;
    Tensor<S> y(x.n, out_ch, ho, wo);
    for (int b = 0; b < x.n; ++b)
        for (int g = 0; g < groups; ++g)
            for (int co = 0; co < cout_g; ++co)
                for (int oh = 0; oh < ho; ++oh)
                    for (int ow = 0; ow < wo; ++ow) {
                        S acc(0);
                        for (int ci = 0; ci < cin_g; ++ci)
                            for (int ki = 0; ki < kh; ++ki)
                                for (int kj = 0; kj < kw; ++kj) {
                                    const int ih = oh * sh - pt + ki;
                                    const int iw = ow * sw - pl + kj;
                                    if (ih < 0 || ih >= x.h || iw < 0 || iw >= x.w) continue;
                                    const S xv =
                                        x.at(b, g * cin_g + ci)[static_cast<std::size_t>(ih) * x.w + iw];
                                    const S wv =
                                        w[(((static_cast<std::size_t>(g) * cout_g + co) * cin_g +
                                            ci) * kh + ki) * kw + kj];
                                    acc += xv * wv;
                                }
                        y.at(b, g * cout_g + co)[static_cast<std::size_t>(oh) * wo + ow] = acc;
                    }
    return y;
}

template <class S>
Tensor<S> random_tensor(int n, int c, int h, int w, Rng& rng) {
    Tensor<S> x(n, c, h, w);
    for (S& v : x.v) v = static_cast<S>(rng.normal());
    return x;
}

// Central finite differences of the mean CE with respect to selected
// parameters; the oracle for the autodiff path.
double check_param_gradients(Net<double>& net, const Tensor<double>& x,
                             const std::vector<int>& labels, int n_checked, std::uint64_t seed) {
    auto params = net.params();
    // eval-mode forward: deterministic (dropout off, batch-norm frozen)
    auto logits = net.forward(x, false, nullptr);
    Tensor<double> dlogits;
    softmax_cross_entropy(logits, labels, &dlogits);
    net.zero_grads();
    net.backward(dlogits);

    std::vector<std::pair<std::size_t, std::size_t>> entries;  // (param block, offset)
    for (std::size_t p = 0; p < params.size(); ++p)
        for (std::size_t i = 0; i < params[p].size; ++i) entries.emplace_back(p, i);
    Rng rng(seed);
    rng.shuffle(entries);
    entries.resize(std::min<std::size_t>(entries.size(), n_checked));

    double worst = 0.0;
    for (auto [p, i] : entries) {
        const double saved = params[p].value[i];
        const double ad = params[p].grad[i];
        double best_rel = 1e9;
        // primary step 1e-3; smaller steps only rescue entries sitting on a
        // max-pool argmax switch, where finite differences are undefined
        for (double step : {1e-3, 1e-4, 1e-5}) {
            params[p].value[i] = saved + step;
            const double up =
                softmax_cross_entropy<double>(net.forward(x, false, nullptr), labels);
            params[p].value[i] = saved - step;
            const double dn =
                softmax_cross_entropy<double>(net.forward(x, false, nullptr), labels);
            params[p].value[i] = saved;
            const double fd = (up - dn) / (2.0 * step);
            const double rel = std::abs(fd - ad) / std::max({std::abs(fd), std::abs(ad), 1e-4});
            best_rel = std::min(best_rel, rel);
            if (best_rel < 1e-3) break;
        }
        worst = std::max(worst, best_rel);
    }
    return worst;
}

ModelSpec tiny_spec(Arch arch) {
    ModelSpec spec;
    spec.arch = arch;
    spec.c = 4;
    spec.t = 256;
    spec.n_classes = 3;
    spec.seed = 11;
    return spec;
}

}  // namespace

TEST_CASE("grouped im2col convolution matches the naive loop") {
    Rng rng(3);
    for (auto [groups, out_ch, kh, kw] : {std::tuple{1, 6, 2, 5}, {2, 4, 1, 3}, {4, 8, 3, 1}}) {
        auto x = random_tensor<double>(2, 4, 3, 17, rng);
        Conv2d<double> conv(4, out_ch, kh, kw, 1, 1, 1, 1, 2, 2, groups, false, rng);
        auto w_view = conv.params()[0];
        std::vector<double> w(w_view.value, w_view.value + w_view.size);
        Ctx<double> ctx;
        auto got = conv.forward(x, ctx);
        auto want = conv_naive(x, w, out_ch, kh, kw, 1, 1, 1, 2, groups);
        REQUIRE(got.size() == want.size());
        for (std::size_t i = 0; i < got.size(); ++i)
            CHECK(got.v[i] == doctest::Approx(want.v[i]).epsilon(1e-10));
    }
}

TEST_CASE("fast conv paths match the naive loop") {
    Rng rng(13);
    Ctx<double> ctx;

    SUBCASE("temporal FIR path, same padding") {
        auto x = random_tensor<double>(3, 1, 4, 33, rng);
        Conv2d<double> conv(1, 5, 1, 8, 1, 1, 0, 0, 3, 4, 1, false, rng);
        auto w_view = conv.params()[0];
        std::vector<double> w(w_view.value, w_view.value + w_view.size);
        auto got = conv.forward(x, ctx);
        // the naive oracle only does symmetric pads; emulate the asymmetric
        // pad by pre-padding the input
        Tensor<double> xp(3, 1, 4, 33 + 7);
        for (int b = 0; b < 3; ++b)
            for (int h = 0; h < 4; ++h)
                for (int j = 0; j < 33; ++j)
                    xp.at(b, 0)[h * 40 + j + 3] = x.at(b, 0)[h * 33 + j];
        auto want = conv_naive(xp, w, 5, 1, 8, 1, 1, 0, 0, 1);
        REQUIRE(got.size() == want.size());
        for (std::size_t i = 0; i < got.size(); ++i)
            CHECK(got.v[i] == doctest::Approx(want.v[i]).epsilon(1e-10));
    }

    SUBCASE("grouped FIR path (separable depthwise)") {
        auto x = random_tensor<double>(2, 6, 1, 21, rng);
        Conv2d<double> conv(6, 6, 1, 5, 1, 1, 0, 0, 2, 2, 6, false, rng);
        auto w_view = conv.params()[0];
        std::vector<double> w(w_view.value, w_view.value + w_view.size);
        auto got = conv.forward(x, ctx);
        auto want = conv_naive(x, w, 6, 1, 5, 1, 1, 0, 2, 6);
        REQUIRE(got.size() == want.size());
        for (std::size_t i = 0; i < got.size(); ++i)
            CHECK(got.v[i] == doctest::Approx(want.v[i]).epsilon(1e-10));
    }

    SUBCASE("full-height spatial path") {
        auto x = random_tensor<double>(2, 3, 5, 14, rng);
        Conv2d<double> conv(3, 7, 5, 1, 1, 1, 0, 0, 0, 0, 1, false, rng);
        auto w_view = conv.params()[0];
        std::vector<double> w(w_view.value, w_view.value + w_view.size);
        auto got = conv.forward(x, ctx);
        auto want = conv_naive(x, w, 7, 5, 1, 1, 1, 0, 0, 1);
        REQUIRE(got.size() == want.size());
        for (std::size_t i = 0; i < got.size(); ++i)
            CHECK(got.v[i] == doctest::Approx(want.v[i]).epsilon(1e-10));
    }
}

TEST_CASE("every architecture passes the finite-difference gradient check") {
    // 2-trial batch, 32 sampled parameters, relative error < 1e-3 in double
    Rng rng(5);
    for (Arch arch : {Arch::EEGNet, Arch::DeepCNN, Arch::ShallowCNN}) {
        CAPTURE(to_string(arch));
        auto spec = tiny_spec(arch);
        spec.hyper.deep_filters = 4;
        spec.hyper.eegnet_f1 = 4;
        spec.hyper.shallow_filters = 6;
        auto net = build_net<double>(spec);
        auto x = random_tensor<double>(2, 1, spec.c, spec.t, rng);
        const double worst = check_param_gradients(net, x, {1, 3}, 32, 17 + static_cast<int>(arch));
        CHECK(worst < 1e-3);
    }
}

TEST_CASE("input gradients match finite differences") {
    Rng rng(7);
    auto spec = tiny_spec(Arch::EEGNet);
    spec.hyper.eegnet_f1 = 4;
    auto net = build_net<double>(spec);
    auto x = random_tensor<double>(2, 1, spec.c, spec.t, rng);
    std::vector<int> labels = {2, 1};

    auto logits = net.forward(x, false, nullptr);
    Tensor<double> dlogits;
    softmax_cross_entropy(logits, labels, &dlogits);
    net.zero_grads();
    auto gx = net.backward(dlogits);

    Rng pick(19);
    const double step = 1e-4;
    for (int k = 0; k < 24; ++k) {
        const std::size_t i = pick.uniform_int(x.size());
        Tensor<double> xp = x, xm = x;
        xp.v[i] += step;
        xm.v[i] -= step;
        const double up = softmax_cross_entropy<double>(net.forward(xp, false, nullptr), labels);
        const double dn = softmax_cross_entropy<double>(net.forward(xm, false, nullptr), labels);
        const double fd = (up - dn) / (2.0 * step);
        CHECK(gx.v[i] ==
              doctest::Approx(fd).epsilon(1e-3).scale(std::max(1e-4, std::abs(fd))));
    }
}

TEST_CASE("batchnorm backward matches finite differences through batch stats") {
    Rng rng(23);
    BatchNorm2d<double> bn(3);
    auto x = random_tensor<double>(4, 3, 2, 5, rng);
    Ctx<double> ctx{true, nullptr};

    // scalar loss = weighted sum of outputs
    auto weights = random_tensor<double>(4, 3, 2, 5, rng);
    auto loss_of = [&](const Tensor<double>& input) {
        BatchNorm2d<double> fresh(3);
        auto params_src = bn.params();
        auto params_dst = fresh.params();
        for (std::size_t p = 0; p < params_src.size(); ++p)
            std::copy(params_src[p].value, params_src[p].value + params_src[p].size,
                      params_dst[p].value);
        auto y = fresh.forward(input, ctx);
        double acc = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) acc += y.v[i] * weights.v[i];
        return acc;
    };

    // randomize gamma/beta so the test is not at the identity point
    for (auto& p : bn.params())
        for (std::size_t i = 0; i < p.size; ++i) p.value[i] += 0.3 * rng.normal();

    bn.forward(x, ctx);
    auto gx = bn.backward(weights);

    Rng pick(29);
    const double step = 1e-5;
    for (int k = 0; k < 16; ++k) {
        const std::size_t i = pick.uniform_int(x.size());
        Tensor<double> xp = x, xm = x;
        xp.v[i] += step;
        xm.v[i] -= step;
        const double fd = (loss_of(xp) - loss_of(xm)) / (2.0 * step);
        CHECK(gx.v[i] == doctest::Approx(fd).epsilon(2e-4).scale(std::max(1.0, std::abs(fd))));
    }
}

TEST_CASE("forward pass emits probability rows on the simplex") {
    for (Arch arch : {Arch::EEGNet, Arch::DeepCNN, Arch::ShallowCNN}) {
        auto spec = tiny_spec(arch);
        spec.n_classes = 2;
        auto net = build_net<float>(spec);
        Rng rng(31);
        auto x = random_tensor<float>(5, 1, spec.c, spec.t, rng);
        auto probs = softmax(net.forward(x, false, nullptr));
        REQUIRE(probs.rows() == 5);
        REQUIRE(probs.cols() == 2);
        for (int b = 0; b < 5; ++b) {
            CHECK(std::abs(probs.row(b).sum() - 1.0f) < 1e-5f);
            CHECK(probs.row(b).minCoeff() >= 0.0f);
        }
    }
}

TEST_CASE("EEGNet is the compact family") {
    auto eegnet = build_net<float>(tiny_spec(Arch::EEGNet));
    auto deep = build_net<float>(tiny_spec(Arch::DeepCNN));
    CHECK(eegnet.param_count() < deep.param_count());
}

TEST_CASE("identical seeds give identical initial parameters") {
    auto a = build_net<float>(tiny_spec(Arch::ShallowCNN));
    auto b = build_net<float>(tiny_spec(Arch::ShallowCNN));
    CHECK(a.flat_params() == b.flat_params());

    auto spec = tiny_spec(Arch::ShallowCNN);
    spec.seed = 12;
    auto c = build_net<float>(spec);
    CHECK(a.flat_params() != c.flat_params());
}

TEST_CASE("too-small inputs are rejected at build or first forward") {
    ModelSpec spec = tiny_spec(Arch::EEGNet);
    spec.t = 16;  // pool1*pool2 = 32 > t
    CHECK_THROWS_AS(build_net<float>(spec), std::runtime_error);

    ModelSpec deep = tiny_spec(Arch::DeepCNN);
    deep.t = 20;
    CHECK_THROWS_AS(build_net<float>(deep), std::runtime_error);
}
