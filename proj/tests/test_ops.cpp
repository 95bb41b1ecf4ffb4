#include <doctest.h>

#include "rinkkp/ops.hpp"
#include "test_support.hpp"

using namespace rinkkp;
using testsup::grad_rel_err;
using testsup::numeric_grad;
using testsup::random_tensor;
using testsup::weighted_sum;

TEST_SUITE("ops") {

TEST_CASE("conv2d box-sum counting on an all-ones 3x3") {
    const Tensor input = Tensor::full({1, 1, 3, 3}, 1.0);
    const Tensor kernel = Tensor::full({1, 1, 3, 3}, 1.0);
    const Tensor bias({1});
    const Tensor out = conv2d_forward(input, kernel, bias, 1, 1);
    CHECK(out.dims == std::vector<int>{1, 1, 3, 3});
    CHECK(out.at4(0, 0, 1, 1) == 9.0);
    CHECK(out.at4(0, 0, 0, 0) == 4.0);
    CHECK(out.at4(0, 0, 0, 2) == 4.0);
    CHECK(out.at4(0, 0, 2, 0) == 4.0);
    CHECK(out.at4(0, 0, 0, 1) == 6.0);
}

TEST_CASE("conv2d 1x1 identity kernel is the identity map") {
    testsup::Rng rng(11);
    const Tensor input = random_tensor({2, 1, 5, 4}, rng);
    const Tensor kernel({1, 1, 1, 1}, {1.0});
    const Tensor bias({1});
    const Tensor out = conv2d_forward(input, kernel, bias, 1, 0);
    CHECK(testsup::bit_equal(out, input));
}

TEST_CASE("conv2d rejects bad shapes with a diagnostic") {
    const Tensor input({1, 3, 4, 4});
    const Tensor kernel({2, 2, 3, 3});
    const Tensor bias({2});
    CHECK_THROWS_WITH_AS(conv2d_forward(input, kernel, bias, 1, 1),
                         doctest::Contains("channels"), std::runtime_error);
    const Tensor even_kernel({2, 3, 2, 2});
    CHECK_THROWS(conv2d_forward(input, even_kernel, bias, 1, 1));
    const Tensor big_kernel({2, 3, 7, 7});
    CHECK_THROWS(conv2d_forward(input, big_kernel, bias, 1, 0));
}

TEST_CASE("conv2d gradients match central finite differences (spec instance)") {
    testsup::Rng rng(21);
    Tensor input = random_tensor({2, 3, 8, 8}, rng);
    Tensor kernel = random_tensor({4, 3, 3, 3}, rng);
    Tensor bias = random_tensor({4}, rng);

    auto loss = [&]() {
        const Tensor out = conv2d_forward(input, kernel, bias, 1, 1);
        double s = 0.0;
        for (double v : out.data) s += v;
        return s;
    };
    const Tensor out = conv2d_forward(input, kernel, bias, 1, 1);
    Tensor grad_kernel(kernel.dims), grad_bias(bias.dims);
    const Tensor ones = Tensor::full(out.dims, 1.0);
    const Tensor grad_input = conv2d_backward(ones, input, kernel, 1, 1, grad_kernel, grad_bias);

    CHECK(grad_rel_err(grad_input, numeric_grad(input, loss)) < 1e-6);
    CHECK(grad_rel_err(grad_kernel, numeric_grad(kernel, loss)) < 1e-6);
    CHECK(grad_rel_err(grad_bias, numeric_grad(bias, loss)) < 1e-6);
}

TEST_CASE("conv2d gradients hold across strides and paddings") {
    testsup::Rng rng(22);
    const struct { int cin, cout, h, w, k, stride, pad; } cases[] = {
        {1, 1, 5, 5, 3, 1, 0}, {2, 3, 6, 5, 3, 2, 1}, {3, 2, 7, 7, 1, 1, 0},
        {2, 2, 8, 6, 5, 1, 2}, {1, 4, 6, 6, 3, 3, 1},
    };
    for (const auto& c : cases) {
        Tensor input = random_tensor({2, c.cin, c.h, c.w}, rng);
        Tensor kernel = random_tensor({c.cout, c.cin, c.k, c.k}, rng);
        Tensor bias = random_tensor({c.cout}, rng);
        const Tensor out0 = conv2d_forward(input, kernel, bias, c.stride, c.pad);
        const Tensor weights = random_tensor(out0.dims, rng);
        auto loss = [&]() {
            return weighted_sum(conv2d_forward(input, kernel, bias, c.stride, c.pad), weights);
        };
        Tensor grad_kernel(kernel.dims), grad_bias(bias.dims);
        const Tensor grad_input = conv2d_backward(weights, input, kernel, c.stride, c.pad, grad_kernel, grad_bias);
        CHECK(grad_rel_err(grad_input, numeric_grad(input, loss)) < 1e-5);
        CHECK(grad_rel_err(grad_kernel, numeric_grad(kernel, loss)) < 1e-5);
        CHECK(grad_rel_err(grad_bias, numeric_grad(bias, loss)) < 1e-5);
    }
}

TEST_CASE("batch_norm constant channel collapses to beta in train mode") {
    Tensor input = Tensor::full({2, 2, 3, 3}, 4.2);
    Tensor gamma = Tensor::full({2}, 1.5);
    Tensor beta({2}, {0.25, -0.5});
    Tensor rmean({2}), rvar = Tensor::full({2}, 1.0);
    const Tensor out = batch_norm_forward(input, gamma, beta, rmean, rvar, true, 0.1, 1e-5, nullptr);
    for (int c = 0; c < 2; ++c) {
        for (int n = 0; n < 2; ++n) {
            CHECK(out.at4(n, c, 1, 1) == doctest::Approx(beta.data[c]).epsilon(1e-12));
        }
    }
    // Running stats fold in the batch statistics with momentum 0.1.
    CHECK(rmean.data[0] == doctest::Approx(0.9 * 0.0 + 0.1 * 4.2));
    CHECK(rvar.data[0] == doctest::Approx(0.9 * 1.0 + 0.1 * 0.0));
}

TEST_CASE("batch_norm leaves standardized input nearly unchanged") {
    // Two-point channel {-1, +1}: zero mean, unit variance.
    Tensor input({1, 1, 1, 2}, {-1.0, 1.0});
    Tensor gamma = Tensor::full({1}, 1.0);
    Tensor beta({1});
    Tensor rmean({1}), rvar = Tensor::full({1}, 1.0);
    const Tensor out = batch_norm_forward(input, gamma, beta, rmean, rvar, true, 0.1, 1e-5, nullptr);
    CHECK(out.data[0] == doctest::Approx(-1.0).epsilon(1e-4));
    CHECK(out.data[1] == doctest::Approx(1.0).epsilon(1e-4));
}

TEST_CASE("batch_norm rejects degenerate train batches") {
    Tensor input({1, 3, 1, 1});
    Tensor gamma = Tensor::full({3}, 1.0), beta({3});
    Tensor rmean({3}), rvar = Tensor::full({3}, 1.0);
    CHECK_THROWS(batch_norm_forward(input, gamma, beta, rmean, rvar, true, 0.1, 1e-5, nullptr));
    // Eval mode is fine with a single element.
    CHECK_NOTHROW(batch_norm_forward(input, gamma, beta, rmean, rvar, false, 0.1, 1e-5, nullptr));
}

TEST_CASE("batch_norm eval mode uses running statistics") {
    Tensor input({1, 1, 1, 2}, {3.0, 5.0});
    Tensor gamma = Tensor::full({1}, 2.0);
    Tensor beta({1}, {1.0});
    Tensor rmean({1}, {3.0});
    Tensor rvar({1}, {4.0 - 1e-5});  // invstd exactly 1/2
    const Tensor out = batch_norm_forward(input, gamma, beta, rmean, rvar, false, 0.1, 1e-5, nullptr);
    CHECK(out.data[0] == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(out.data[1] == doctest::Approx(3.0).epsilon(1e-9));
    CHECK(rmean.data[0] == 3.0);  // untouched in eval
}

TEST_CASE("batch_norm gradients match finite differences in both modes") {
    testsup::Rng rng(23);
    for (const bool train_mode : {true, false}) {
        Tensor input = random_tensor({2, 3, 4, 3}, rng);
        Tensor gamma = random_tensor({3}, rng, 0.5, 1.5);
        Tensor beta = random_tensor({3}, rng);
        Tensor rmean = random_tensor({3}, rng, -0.2, 0.2);
        Tensor rvar = random_tensor({3}, rng, 0.5, 2.0);
        const Tensor weights = random_tensor({2, 3, 4, 3}, rng);
        auto loss = [&]() {
            Tensor rm = rmean, rv = rvar;  // keep the FD loop from drifting the stats
            return weighted_sum(
                batch_norm_forward(input, gamma, beta, rm, rv, train_mode, 0.1, 1e-5, nullptr), weights);
        };
        BatchNormCache cache;
        Tensor rm = rmean, rv = rvar;
        batch_norm_forward(input, gamma, beta, rm, rv, train_mode, 0.1, 1e-5, &cache);
        Tensor grad_gamma(gamma.dims), grad_beta(beta.dims);
        const Tensor grad_input = batch_norm_backward(weights, cache, gamma, grad_gamma, grad_beta);
        CHECK(grad_rel_err(grad_input, numeric_grad(input, loss)) < 1e-5);
        CHECK(grad_rel_err(grad_gamma, numeric_grad(gamma, loss)) < 1e-5);
        CHECK(grad_rel_err(grad_beta, numeric_grad(beta, loss)) < 1e-5);
    }
}

TEST_CASE("relu and sigmoid point values") {
    Tensor x({1, 1, 1, 3}, {-3.0, 0.0, 3.0});
    const Tensor r = relu_forward(x);
    CHECK(r.data == std::vector<double>{0.0, 0.0, 3.0});

    Tensor z({1, 1, 1, 1}, {0.0});
    CHECK(sigmoid_forward(z).data[0] == 0.5);

    Tensor big({1, 1, 1, 2}, {750.0, -750.0});
    const Tensor s = sigmoid_forward(big);  // must not overflow
    CHECK(s.data[0] == doctest::Approx(1.0));
    CHECK(s.data[1] == doctest::Approx(0.0));
}

TEST_CASE("sigmoid gradient at zero is 1/4 and matches finite differences") {
    Tensor x({1, 1, 1, 1}, {0.0});
    const Tensor y = sigmoid_forward(x);
    const Tensor g = sigmoid_backward(Tensor::full(x.dims, 1.0), y);
    CHECK(g.data[0] == 0.25);
    auto loss = [&]() {
        double s = 0.0;
        for (double v : sigmoid_forward(x).data) s += v;
        return s;
    };
    CHECK(grad_rel_err(g, numeric_grad(x, loss)) < 1e-6);
}

TEST_CASE("relu gradient matches finite differences away from the kink") {
    testsup::Rng rng(24);
    Tensor x = testsup::random_tensor_off_kink({2, 2, 3, 3}, rng);
    const Tensor weights = random_tensor(x.dims, rng);
    auto loss = [&]() { return weighted_sum(relu_forward(x), weights); };
    const Tensor g = relu_backward(weights, x);
    CHECK(grad_rel_err(g, numeric_grad(x, loss)) < 1e-6);
}

TEST_CASE("bilinear upsample keeps constants and the documented 1x2 -> 1x4 values") {
    const Tensor c = Tensor::full({1, 2, 3, 3}, 2.5);
    const Tensor up = upsample_bilinear_forward(c, 6, 7);
    for (double v : up.data) CHECK(v == 2.5);

    Tensor line({1, 1, 1, 2}, {0.0, 1.0});
    const Tensor out = upsample_bilinear_forward(line, 1, 4);
    CHECK(out.data[0] == doctest::Approx(0.0));
    CHECK(out.data[1] == doctest::Approx(0.25));
    CHECK(out.data[2] == doctest::Approx(0.75));
    CHECK(out.data[3] == doctest::Approx(1.0));
}

TEST_CASE("bilinear upsample rejects shrinking") {
    const Tensor t({1, 1, 4, 4});
    CHECK_THROWS(upsample_bilinear_forward(t, 3, 8));
    CHECK_THROWS(upsample_bilinear_forward(t, 8, 3));
}

TEST_CASE("bilinear upsample stays inside the input range") {
    testsup::Rng rng(25);
    for (int trial = 0; trial < 10; ++trial) {
        const Tensor t = random_tensor({1, 2, 3, 4}, rng, -2.0, 2.0);
        double lo = t.data[0], hi = t.data[0];
        for (double v : t.data) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        const Tensor up = upsample_bilinear_forward(t, 7, 9);
        for (double v : up.data) {
            CHECK(v >= lo - 1e-12);
            CHECK(v <= hi + 1e-12);
        }
    }
}

TEST_CASE("bilinear upsample gradient matches finite differences") {
    testsup::Rng rng(26);
    Tensor x = random_tensor({2, 2, 3, 4}, rng);
    const Tensor out0 = upsample_bilinear_forward(x, 7, 6);
    const Tensor weights = random_tensor(out0.dims, rng);
    auto loss = [&]() { return weighted_sum(upsample_bilinear_forward(x, 7, 6), weights); };
    const Tensor g = upsample_bilinear_backward(weights, 3, 4);
    CHECK(grad_rel_err(g, numeric_grad(x, loss)) < 1e-6);
}

TEST_CASE("concat_channels layout, identity case, and error paths") {
    testsup::Rng rng(27);
    const Tensor a = random_tensor({2, 2, 3, 3}, rng);
    const Tensor b = random_tensor({2, 3, 3, 3}, rng);
    const Tensor cat = concat_channels({&a, &b});
    CHECK(cat.dims == std::vector<int>{2, 5, 3, 3});
    CHECK(cat.at4(1, 0, 2, 2) == a.at4(1, 0, 2, 2));
    CHECK(cat.at4(1, 4, 0, 1) == b.at4(1, 2, 0, 1));

    const Tensor single = concat_channels({&a});
    CHECK(testsup::bit_equal(single, a));

    const Tensor wrong = random_tensor({2, 2, 4, 3}, rng);
    CHECK_THROWS(concat_channels({&a, &wrong}));
    CHECK_THROWS(concat_channels({}));
}

TEST_CASE("concat backward splits the upstream gradient exactly") {
    testsup::Rng rng(28);
    const Tensor grad = random_tensor({2, 5, 3, 3}, rng);
    const std::vector<Tensor> parts = concat_channels_backward(grad, {2, 3});
    REQUIRE(parts.size() == 2);
    for (int n = 0; n < 2; ++n) {
        for (int c = 0; c < 2; ++c) {
            for (int i = 0; i < 9; ++i) {
                CHECK(parts[0].data[parts[0].offset4(n, c, i / 3, i % 3)] ==
                      grad.data[grad.offset4(n, c, i / 3, i % 3)]);
            }
        }
        for (int c = 0; c < 3; ++c) {
            for (int i = 0; i < 9; ++i) {
                CHECK(parts[1].data[parts[1].offset4(n, c, i / 3, i % 3)] ==
                      grad.data[grad.offset4(n, 2 + c, i / 3, i % 3)]);
            }
        }
    }
    // Round trip: concatenating the slices rebuilds the upstream gradient.
    const Tensor rebuilt = concat_channels({&parts[0], &parts[1]});
    CHECK(testsup::bit_equal(rebuilt, grad));
    CHECK_THROWS(concat_channels_backward(grad, {2, 2}));
}

}  // TEST_SUITE
