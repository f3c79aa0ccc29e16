#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "sems/tensor.hpp"

using namespace sems;

namespace {

Rng& test_rng() {
    static Rng rng(2024);
    return rng;
}

Tensor random_leaf(std::vector<int> shape, double stddev = 1.0) {
    return Tensor::gaussian(std::move(shape), stddev, test_rng());
}

}  // namespace

TEST_CASE("dense with identity weights is the identity") {
    Tensor x = random_leaf({3});
    Tensor w = Tensor::constant({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
    Tensor b = Tensor::constant({3}, {0, 0, 0});
    Tensor y = dense(x, w, b);
    for (int i = 0; i < 3; ++i) CHECK(y.values()[i] == x.values()[i]);
}

TEST_CASE("dense hand example") {
    Tensor x = Tensor::leaf({2}, {1, 2});
    Tensor w = Tensor::leaf({2, 2}, {1, 0, 0, 1});
    Tensor b = Tensor::leaf({2}, {3, 4});
    Tensor y = dense(x, w, b);
    CHECK(y.values()[0] == 4);
    CHECK(y.values()[1] == 6);
    CHECK_THROWS_AS(dense(Tensor::leaf({3}, {1, 2, 3}), w, b), ValidationError);
}

TEST_CASE("dense gradients match finite differences") {
    Tensor w = random_leaf({4, 3});
    Tensor b = random_leaf({3});
    double err = grad_check([&](const Tensor& x) { return sum(dense(x, w, b)); }, random_leaf({4}));
    CHECK(err < 1e-6);
    Tensor x = random_leaf({2, 4});
    double werr = grad_check(
        [&](const Tensor& wt) { return mean(mul(dense(x, wt, b), dense(x, wt, b))); }, w);
    CHECK(werr < 1e-6);
}

TEST_CASE("conv2d with a delta kernel is the identity per channel") {
    Tensor x = random_leaf({2, 4, 5});
    std::vector<double> kv(2 * 2 * 9, 0.0);
    kv[0 * 2 * 9 + 0 * 9 + 4] = 1.0;  // out ch 0 reads in ch 0 center
    kv[1 * 2 * 9 + 1 * 9 + 4] = 1.0;  // out ch 1 reads in ch 1 center
    Tensor k = Tensor::constant({2, 2, 3, 3}, kv);
    Tensor y = conv2d(x, k);
    for (size_t i = 0; i < x.size(); ++i) CHECK(y.values()[i] == x.values()[i]);
}

TEST_CASE("all-ones conv kernel sums the padded neighborhood") {
    const double c = 0.7;
    Tensor x = Tensor::constant({1, 4, 4}, std::vector<double>(16, c));
    Tensor k = Tensor::constant({1, 1, 3, 3}, std::vector<double>(9, 1.0));
    Tensor y = conv2d(x, k);
    CHECK(y.values()[1 * 4 + 1] == Catch::Approx(9.0 * c));   // interior
    CHECK(y.values()[0] == Catch::Approx(4.0 * c));           // corner
    CHECK(y.values()[3] == Catch::Approx(4.0 * c));
    CHECK(y.values()[0 * 4 + 1] == Catch::Approx(6.0 * c));   // edge
}

TEST_CASE("conv2d validates shapes") {
    Tensor x = random_leaf({2, 4, 4});
    CHECK_THROWS_AS(conv2d(x, random_leaf({3, 1, 3, 3})), ValidationError);  // channel mismatch
    CHECK_THROWS_AS(conv2d(x, random_leaf({3, 2, 2, 2})), ValidationError);  // even kernel
}

TEST_CASE("conv gradients match finite differences") {
    Tensor k = random_leaf({3, 2, 3, 3});
    CHECK(grad_check([&](const Tensor& x) { return sum(mul(conv2d(x, k), conv2d(x, k))); },
                     random_leaf({2, 5, 5})) < 1e-6);
    Tensor x2 = random_leaf({2, 5, 5});
    CHECK(grad_check([&](const Tensor& kt) { return sum(mul(conv2d(x2, kt), conv2d(x2, kt))); }, k) <
          1e-6);
    Tensor k1 = random_leaf({2, 3, 3});
    CHECK(grad_check([&](const Tensor& x) { return sum(mul(conv1d(x, k1), conv1d(x, k1))); },
                     random_leaf({3, 7})) < 1e-6);
}

TEST_CASE("conv1d delta kernel passes channels through") {
    Tensor x = random_leaf({2, 6});
    std::vector<double> kv(2 * 2 * 3, 0.0);
    kv[0 * 2 * 3 + 0 * 3 + 1] = 1.0;
    kv[1 * 2 * 3 + 1 * 3 + 1] = 1.0;
    Tensor y = conv1d(x, Tensor::constant({2, 2, 3}, kv));
    for (size_t i = 0; i < x.size(); ++i) CHECK(y.values()[i] == x.values()[i]);
}

TEST_CASE("softmax of equal logits is uniform and stable under large inputs") {
    Tensor equal = Tensor::leaf({4}, {2.5, 2.5, 2.5, 2.5});
    for (double v : softmax(equal).values()) CHECK(v == Catch::Approx(0.25));
    Tensor huge = Tensor::leaf({2}, {1000.0, 0.0});
    auto s = softmax(huge).values();
    CHECK(s[0] == Catch::Approx(1.0));
    CHECK(s[1] == Catch::Approx(0.0).margin(1e-300));
    CHECK(std::isfinite(s[0]));
    Tensor rows = Tensor::leaf({2, 3}, {1, 1, 1, 5, 5, 5});
    auto r = softmax(rows).values();
    CHECK(r[0] + r[1] + r[2] == Catch::Approx(1.0));
    CHECK(r[3] + r[4] + r[5] == Catch::Approx(1.0));
}

TEST_CASE("relu gradient is 0/1 on either side of the kink") {
    Tensor x = Tensor::leaf({2}, {1.5, -2.0});
    Tensor y = sum(relu(x));
    backward(y);
    auto g = x.grad();
    CHECK(g[0] == 1.0);
    CHECK(g[1] == 0.0);
    CHECK(grad_check([](const Tensor& t) { return sum(relu(t)); },
                     Tensor::leaf({3}, {0.5, -0.7, 1.2})) < 1e-6);
}

TEST_CASE("cross entropy hand values") {
    CHECK(cross_entropy(Tensor::leaf({3}, {0.0, 1.0, 0.0}), 1).value() == Catch::Approx(0.0).margin(1e-12));
    CHECK(cross_entropy(Tensor::leaf({3}, {0.1, 0.8, 0.1}), 1).value() ==
          Catch::Approx(0.2231435513).epsilon(1e-9));
    double third = 1.0 / 3.0;
    CHECK(cross_entropy(Tensor::leaf({3}, {third, third, third}), 0).value() ==
          Catch::Approx(std::log(3.0)).epsilon(1e-12));
    CHECK_THROWS_AS(cross_entropy(Tensor::leaf({3}, {0.1, 0.8, 0.1}), 3), ValidationError);
    CHECK_THROWS_AS(cross_entropy(Tensor::leaf({2}, {0.9, 0.5}), 0), ValidationError);
}

TEST_CASE("gumbel-softmax straight-through") {
    Tensor z = random_leaf({16});
    GumbelSample s = gumbel_softmax_st(z, 0.7, 5);
    double total = 0.0;
    for (double v : s.soft.values()) total += v;
    CHECK(total == Catch::Approx(1.0).epsilon(1e-12));
    // forward hard value is one-hot at the perturbed argmax
    CHECK(s.hard.values()[s.hard_index] == 1.0);
    double hard_sum = 0.0;
    for (double v : s.hard.values()) hard_sum += v;
    CHECK(hard_sum == 1.0);
    CHECK_THROWS_AS(gumbel_softmax_st(z, 0.0, 1), ValidationError);

    // tiny temperature concentrates the soft mass at the argmax
    GumbelSample cold = gumbel_softmax_st(z, 0.01, 5);
    CHECK(cold.soft.values()[cold.hard_index] >= 0.999);

    // a dominant score wins the hard draw almost always
    std::vector<double> dom(16, 0.0);
    dom[7] = 10.0;
    Tensor zd = Tensor::leaf({16}, dom);
    int hits = 0;
    for (uint64_t seed = 0; seed < 10000; ++seed)
        if (gumbel_softmax_st(zd, 1.0, seed).hard_index == 7) ++hits;
    CHECK(hits > 9900);
}

TEST_CASE("soft max entry grows monotonically as temperature drops") {
    Tensor z = random_leaf({12});
    double prev = 0.0;
    bool first = true;
    for (double tau : {3.0, 1.5, 1.0, 0.5, 0.2, 0.1, 0.05}) {
        GumbelSample s = gumbel_softmax_st(z, tau, 99);  // same seed -> same perturbation
        double mx = 0.0;
        for (double v : s.soft.values()) mx = std::max(mx, v);
        if (!first) CHECK(mx >= prev - 1e-12);
        prev = mx;
        first = false;
    }
}

TEST_CASE("straight-through backward is the soft jacobian path") {
    Tensor z = random_leaf({8});
    GumbelSample s = gumbel_softmax_st(z, 0.9, 3);
    // loss built on the hard tensor
    std::vector<double> w(8);
    for (int i = 0; i < 8; ++i) w[i] = 0.1 * i;
    backward(dot_const(s.hard, w));
    auto g_st = z.grad();
    z.node()->grad.clear();
    // the same loss on the soft tensor yields the identical gradient
    GumbelSample s2 = gumbel_softmax_st(z, 0.9, 3);
    backward(dot_const(s2.soft, w));
    auto g_soft = z.grad();
    for (int i = 0; i < 8; ++i) CHECK(g_st[i] == Catch::Approx(g_soft[i]).margin(1e-12));
}

TEST_CASE("backward of sum of squares is 2x") {
    Tensor x = random_leaf({6});
    backward(sum(mul(x, x)));
    auto g = x.grad();
    for (int i = 0; i < 6; ++i) CHECK(g[i] == Catch::Approx(2.0 * x.values()[i]).epsilon(1e-12));
}

TEST_CASE("disconnected leaves receive zero gradient") {
    Tensor x = random_leaf({4});
    Tensor other = random_leaf({4});
    backward(sum(mul(x, x)));
    for (double g : other.grad()) CHECK(g == 0.0);
    CHECK_THROWS_AS(backward(random_leaf({3})), ValidationError);  // non-scalar loss
}

TEST_CASE("gradients accumulate across backward calls until cleared") {
    Tensor x = Tensor::leaf({2}, {1.0, 2.0});
    backward(sum(x));
    backward(sum(x));
    auto g = x.grad();
    CHECK(g[0] == 2.0);
    CHECK(g[1] == 2.0);
    std::vector<Tensor> params{x};
    zero_grad(params);
    for (double v : x.grad()) CHECK(v == 0.0);
}

TEST_CASE("adam first step and determinism") {
    // zero gradient from a fresh state leaves parameters unchanged
    Tensor p = Tensor::leaf({3}, {1.0, -2.0, 0.5});
    std::vector<Tensor> params{p};
    AdamState st = AdamState::init(params, 0.01);
    zero_grad(params);
    adam_step(params, st);
    CHECK(p.values()[0] == 1.0);
    CHECK(p.values()[1] == -2.0);

    // constant gradient: first update has magnitude ~lr against the sign
    Tensor q = Tensor::leaf({2}, {0.0, 0.0});
    std::vector<Tensor> qp{q};
    AdamState st2 = AdamState::init(qp, 0.01);
    q.node()->grad = {3.0, -0.25};
    adam_step(qp, st2);
    CHECK(q.values()[0] == Catch::Approx(-0.01).epsilon(1e-6));
    CHECK(q.values()[1] == Catch::Approx(0.01).epsilon(1e-4));

    // identical seeds give identical trajectories
    auto run = [](uint64_t seed) {
        Rng rng(seed);
        Tensor w = Tensor::gaussian({4}, 1.0, rng);
        std::vector<Tensor> ps{w};
        AdamState s = AdamState::init(ps, 0.01);
        for (int step = 0; step < 25; ++step) {
            zero_grad(ps);
            backward(sum(mul(w, w)));
            adam_step(ps, s);
        }
        return w.values();
    };
    CHECK(run(7) == run(7));
}

TEST_CASE("grad_check fixtures") {
    CHECK(grad_check([](const Tensor& x) { return sum(x); }, random_leaf({5})) < 1e-10);
    CHECK(grad_check([](const Tensor& x) { return cross_entropy(softmax(x), 2); },
                     random_leaf({5})) < 1e-6);
    Tensor big = Tensor::leaf({4}, {0.5, -0.9, 1.4, -0.3});  // away from the relu kink
    CHECK(grad_check([](const Tensor& x) { return sum(mul(relu(x), relu(x))); }, big) < 1e-6);
}

TEST_CASE("every primitive passes grad_check on random instances") {
    for (int trial = 0; trial < 10; ++trial) {
        Tensor a = random_leaf({6});
        Tensor b = random_leaf({6});
        CHECK(grad_check([&](const Tensor& x) { return sum(mul(add(x, b), sub(x, b))); }, a) < 1e-5);
        CHECK(grad_check([&](const Tensor& x) { return mean(mul(affine(x, 1.7, -0.3), x)); }, a) < 1e-5);
        Tensor w = random_leaf({6, 4});
        Tensor bias = random_leaf({4});
        CHECK(grad_check([&](const Tensor& x) { return sum(mul(dense(x, w, bias), dense(x, w, bias))); }, a) < 1e-5);
        Tensor k = random_leaf({2, 3, 3, 3});
        CHECK(grad_check([&](const Tensor& x) { return sum(mul(conv2d(x, k), conv2d(x, k))); },
                         random_leaf({3, 4, 5})) < 1e-5);
        Tensor cb = random_leaf({3});
        CHECK(grad_check([&](const Tensor& x) { return sum(mul(bias_channels(x, cb), x)); },
                         random_leaf({3, 4, 5})) < 1e-5);
        CHECK(grad_check([&](const Tensor& x) { return cross_entropy(softmax(x), trial % 6); },
                         random_leaf({6})) < 1e-5);
        CHECK(grad_check([&](const Tensor& x) { return sum(mul(reshape(x, {2, 3}), reshape(x, {2, 3}))); }, a) < 1e-5);
        CHECK(grad_check([&](const Tensor& x) { return sum(mul(stack2(x, b, {2, 6}), stack2(b, x, {2, 6}))); }, a) < 1e-5);
    }
}
