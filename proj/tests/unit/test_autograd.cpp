#include <cmath>
#include <limits>

#include "doctest.h"
#include "gradient_cases.hpp"
#include "muse/optimizer.hpp"

using namespace muse;

TEST_CASE("every primitive matches central differences")
{
    for (const auto& c : oracle::primitive_cases(11, 2)) {
        CAPTURE(c.name);
        CHECK(oracle::gradient_error(c.build, c.params) < 1e-6);
    }
}

TEST_CASE("encoders and task losses match central differences")
{
    for (const auto& c : oracle::composite_cases(12)) {
        CAPTURE(c.name);
        CHECK(oracle::gradient_error(c.build, c.params) < 1e-5);
    }
}

TEST_CASE("matmul forward values")
{
    Graph<double> g;
    Var a = g.constant(Tensor<double>({2, 3}, {1, 2, 3, 4, 5, 6}));
    Var b = g.constant(Tensor<double>({3, 2}, {7, 8, 9, 10, 11, 12}));
    CHECK(g.value(g.matmul(a, b)) == Tensor<double>({2, 2}, {58, 64, 139, 154}));
    Var bt = g.constant(Tensor<double>({2, 3}, {7, 9, 11, 8, 10, 12}));
    CHECK(g.value(g.matmul(a, bt, true)) == Tensor<double>({2, 2}, {58, 64, 139, 154}));
}

TEST_CASE("softmax rows sum to one and layer norm standardises")
{
    std::mt19937_64 rng(3);
    Graph<double> g;
    Var x = g.constant(oracle::random_tensor({4, 5}, rng, -5, 5));
    const auto& s = g.value(g.softmax(x));
    for (std::size_t r = 0; r < 4; ++r) {
        double total = 0;
        for (std::size_t c = 0; c < 5; ++c) total += s[r * 5 + c];
        CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
    }
    Var ln = g.layer_norm(x, g.constant(Tensor<double>({5}, 1.0)), g.constant(Tensor<double>({5}, 0.0)));
    const auto& y = g.value(ln);
    for (std::size_t r = 0; r < 4; ++r) {
        double mean = 0, var = 0;
        for (std::size_t c = 0; c < 5; ++c) mean += y[r * 5 + c] / 5;
        for (std::size_t c = 0; c < 5; ++c) var += (y[r * 5 + c] - mean) * (y[r * 5 + c] - mean) / 5;
        CHECK(std::abs(mean) < 1e-12);
        CHECK(var == doctest::Approx(1.0).epsilon(1e-5));
    }
}

TEST_CASE("conv1d ignores masked positions")
{
    std::mt19937_64 rng(5);
    auto w = oracle::random_tensor({3, 2, 4}, rng);
    auto bias = oracle::random_tensor({4}, rng);
    auto x = oracle::random_tensor({1, 5, 2}, rng);
    const std::size_t lengths[] = {3};
    const auto mask = SequenceMask::from_lengths(lengths, 5);

    Graph<double> g;
    const auto full = g.value(g.conv1d(g.constant(x), g.constant(w), g.constant(bias), mask));
    auto short_x = Tensor<double>({1, 3, 2}, std::vector<double>(x.data(), x.data() + 6));
    const auto short_mask = SequenceMask::from_lengths(lengths, 3);
    const auto cut = g.value(g.conv1d(g.constant(short_x), g.constant(w), g.constant(bias), short_mask));
    for (std::size_t i = 0; i < cut.size(); ++i) CHECK(full[i] == doctest::Approx(cut[i]).epsilon(1e-12));
}

TEST_CASE("attention gives masked keys zero weight")
{
    std::mt19937_64 rng(8);
    auto q = oracle::random_tensor({1, 3, 4}, rng);
    auto k = oracle::random_tensor({1, 3, 4}, rng);
    auto v = oracle::random_tensor({1, 3, 4}, rng);
    const std::size_t lengths[] = {2};
    const auto mask = SequenceMask::from_lengths(lengths, 3);
    Graph<double> g;
    const auto before = g.value(g.scaled_dot_attention(g.constant(q), g.constant(k), g.constant(v), mask, 2));
    for (std::size_t c = 0; c < 4; ++c) {
        k[2 * 4 + c] = 100.0;
        v[2 * 4 + c] = -50.0;
    }
    const auto after = g.value(g.scaled_dot_attention(g.constant(q), g.constant(k), g.constant(v), mask, 2));
    for (std::size_t i = 0; i < 2 * 4; ++i) CHECK(before[i] == doctest::Approx(after[i]).epsilon(1e-12));
}

TEST_CASE("shape and value errors")
{
    Graph<double> g;
    Var a = g.constant(Tensor<double>({2, 3}));
    Var b = g.constant(Tensor<double>({2, 3}));
    CHECK_THROWS_AS(g.matmul(a, b), InvalidArgument);
    CHECK_THROWS_AS(g.add(a, g.constant(Tensor<double>({2}))), InvalidArgument);
    CHECK_THROWS_AS(g.backward(a), InvalidArgument);
    CHECK_THROWS_AS(g.constant(Tensor<double>({1}, std::numeric_limits<double>::quiet_NaN())), NumericError);
    CHECK_THROWS_AS(g.scale(g.constant(Tensor<double>({1}, 1e308)), 1e10), NumericError);
    const std::int32_t bad[] = {3};
    CHECK_THROWS_AS(g.cross_entropy_from_logits(a, std::span<const std::int32_t>(bad, 1)), InvalidArgument);

    Graph<double> frozen(false);
    Var s = frozen.sum(frozen.constant(Tensor<double>({2}, 1.0)));
    CHECK_THROWS_AS(frozen.backward(s), InvalidArgument);
}

TEST_CASE("a parameter used twice accumulates both gradients")
{
    ParameterSet<double> p;
    p.add("w", Tensor<double>({2}, {1.5, -2.0}));
    Graph<double> g;
    Var w = g.parameter(p, "w");
    Var loss = g.sum(g.multiply(w, g.parameter(p, "w")));
    g.backward(loss);
    const auto grads = g.gradients(p);
    CHECK(grads.at("w") == Tensor<double>({2}, {3.0, -4.0}));
}

TEST_CASE("adam step matches the update rule")
{
    ParameterSet<double> p;
    p.add("w", Tensor<double>({2}, {1.0, -1.0}));
    GradientMap<double> grads{{"w", Tensor<double>({2}, {0.5, -2.0})}};
    const double lr = 0.1;
    double m[2] = {0, 0}, v[2] = {0, 0}, w[2] = {1.0, -1.0};
    for (std::int64_t step = 1; step <= 3; ++step) {
        adam_step(p, grads, lr, step);
        for (int i = 0; i < 2; ++i) {
            const double gi = grads.at("w")[static_cast<std::size_t>(i)];
            m[i] = 0.9 * m[i] + 0.1 * gi;
            v[i] = 0.999 * v[i] + 0.001 * gi * gi;
            const double mh = m[i] / (1 - std::pow(0.9, step));
            const double vh = v[i] / (1 - std::pow(0.999, step));
            w[i] -= lr * mh / (std::sqrt(vh) + 1e-8);
        }
    }
    CHECK(p.at("w")[0] == doctest::Approx(w[0]).epsilon(1e-12));
    CHECK(p.at("w")[1] == doctest::Approx(w[1]).epsilon(1e-12));
    CHECK_THROWS_AS(adam_step(p, grads, lr, 0), InvalidArgument);
    GradientMap<double> stray{{"nope", Tensor<double>({1})}};
    CHECK_THROWS_AS(adam_step(p, stray, lr, 1), InvalidArgument);
}
