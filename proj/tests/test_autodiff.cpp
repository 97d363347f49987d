#include <cmath>
#include <vector>

#include "doctest.h"
#include "gpcd/rng.hpp"
#include "gpcd/tensor.hpp"
#include "support/gradcheck.hpp"

using namespace gpcd;
using gpcd::testing::DTensor;
using gpcd::testing::gradcheck;
using gpcd::testing::random_leaf;
using gpcd::testing::random_leaf_off_kink;
using gpcd::testing::separate_group_max;

namespace {
constexpr int kTrials = 50;
constexpr double kTol = 1e-3;

int dim(Rng& rng) { return 1 + static_cast<int>(rng.uniform_index(6)); }
}  // namespace

TEST_CASE("matmul forward matches a hand example") {
    auto a = DTensor::leaf({2, 2}, {1, 2, 3, 4});
    auto b = DTensor::leaf({2, 2}, {5, 6, 7, 8});
    auto c = matmul(a, b);
    CHECK(c.values() == std::vector<double>{19, 22, 43, 50});
}

TEST_CASE("matmul gradcheck over random shapes") {
    Rng rng(101);
    for (int trial = 0; trial < kTrials; ++trial) {
        const int m = dim(rng), k = dim(rng), n = dim(rng);
        auto a = random_leaf(rng, {m, k});
        auto b = random_leaf(rng, {k, n});
        auto res = gradcheck([&] { return matmul(a, b); }, {a, b}, rng);
        CHECK(res.max_rel <= kTol);
    }
}

TEST_CASE("add, sub and scale gradcheck") {
    Rng rng(102);
    for (int trial = 0; trial < kTrials; ++trial) {
        const int m = dim(rng), n = dim(rng);
        auto a = random_leaf(rng, {m, n});
        auto b = random_leaf(rng, {m, n});
        const double factor = rng.uniform(-2.0, 2.0);
        auto res = gradcheck(
            [&] { return scale(sub(add(a, b), b), factor); }, {a, b}, rng);
        CHECK(res.max_rel <= kTol);
    }
}

TEST_CASE("bias broadcast adds per column and gradchecks") {
    auto a = DTensor::leaf({2, 3}, {0, 0, 0, 1, 1, 1});
    auto bias = DTensor::leaf({3}, {10, 20, 30});
    CHECK(add_bias(a, bias).values() == std::vector<double>{10, 20, 30, 11, 21, 31});

    Rng rng(103);
    for (int trial = 0; trial < kTrials; ++trial) {
        const int m = dim(rng), n = dim(rng);
        auto x = random_leaf(rng, {m, n});
        auto b = random_leaf(rng, {n});
        auto res = gradcheck([&] { return add_bias(x, b); }, {x, b}, rng);
        CHECK(res.max_rel <= kTol);
    }
}

TEST_CASE("relu clamps negatives, keeps zero flat, and gradchecks off the kink") {
    auto x = DTensor::leaf({1, 3}, {-1.0, 0.0, 2.0}, true);
    auto y = relu(x);
    CHECK(y.values() == std::vector<double>{0.0, 0.0, 2.0});
    backward_from(y, {1.0, 1.0, 1.0});
    CHECK(x.grad() == std::vector<double>{0.0, 0.0, 1.0});

    Rng rng(104);
    for (int trial = 0; trial < kTrials; ++trial) {
        auto a = random_leaf_off_kink(rng, {dim(rng), dim(rng)});
        auto res = gradcheck([&] { return relu(a); }, {a}, rng);
        CHECK(res.max_rel <= kTol);
    }
}

TEST_CASE("concat stitches columns and gradchecks with three parts") {
    auto a = DTensor::leaf({2, 1}, {1, 4});
    auto b = DTensor::leaf({2, 2}, {2, 3, 5, 6});
    CHECK(concat_cols(a, b).values() == std::vector<double>{1, 2, 3, 4, 5, 6});

    Rng rng(105);
    for (int trial = 0; trial < kTrials; ++trial) {
        const int m = dim(rng);
        auto p = random_leaf(rng, {m, dim(rng)});
        auto q = random_leaf(rng, {m, dim(rng)});
        auto r = random_leaf(rng, {m, dim(rng)});
        auto res = gradcheck(
            [&] { return concat_cols<double>({p, q, r}); }, {p, q, r}, rng);
        CHECK(res.max_rel <= kTol);
    }
}

TEST_CASE("gather_rows scatter-adds through duplicate indices") {
    auto a = DTensor::leaf({3, 2}, {1, 2, 3, 4, 5, 6}, true);
    auto g = gather_rows(a, {2, 0, 2});
    CHECK(g.values() == std::vector<double>{5, 6, 1, 2, 5, 6});
    backward_from(g, {1, 1, 1, 1, 1, 1});
    CHECK(a.grad() == std::vector<double>{1, 1, 0, 0, 2, 2});

    Rng rng(106);
    for (int trial = 0; trial < kTrials; ++trial) {
        const int n = dim(rng), c = dim(rng), m = dim(rng) + 2;
        auto x = random_leaf(rng, {n, c});
        std::vector<int> index(static_cast<size_t>(m));
        for (int& v : index) v = static_cast<int>(rng.uniform_index(static_cast<size_t>(n)));
        auto res = gradcheck([&] { return gather_rows(x, index); }, {x}, rng);
        CHECK(res.max_rel <= kTol);
    }
}

TEST_CASE("group_max takes per-group column maxima and breaks ties low") {
    auto a = DTensor::leaf({4, 1}, {3, 7, 7, 1}, true);
    auto m = group_max(a, 1);
    CHECK(m.values() == std::vector<double>{7});
    backward_from(m, {1.0});
    CHECK(a.grad() == std::vector<double>{0, 1, 0, 0});
}

TEST_CASE("group_max gradcheck with separated maxima") {
    Rng rng(107);
    for (int trial = 0; trial < kTrials; ++trial) {
        const int groups = dim(rng), k = dim(rng), c = dim(rng);
        auto a = random_leaf(rng, {groups * k, c});
        separate_group_max(a, groups);
        auto res = gradcheck([&] { return group_max(a, groups); }, {a}, rng);
        CHECK(res.max_rel <= kTol);
    }
}

TEST_CASE("mean and sum_of_squares match hand values and gradcheck") {
    auto x = DTensor::leaf({1, 2}, {1.0, 2.0}, true);
    auto ss = sum_of_squares(x);
    CHECK(ss.values()[0] == doctest::Approx(5.0));
    backward(ss);
    CHECK(x.grad()[0] == doctest::Approx(2.0));
    CHECK(x.grad()[1] == doctest::Approx(4.0));

    auto y = DTensor::leaf({2, 2}, {1, 2, 3, 4}, true);
    CHECK(mean_all(y).values()[0] == doctest::Approx(2.5));

    Rng rng(108);
    for (int trial = 0; trial < kTrials; ++trial) {
        auto a = random_leaf(rng, {dim(rng), dim(rng)});
        auto res1 = gradcheck([&] { return mean_all(a); }, {a}, rng);
        auto res2 = gradcheck([&] { return sum_of_squares(a); }, {a}, rng);
        CHECK(res1.max_rel <= kTol);
        CHECK(res2.max_rel <= kTol);
    }
}

TEST_CASE("two-layer perceptron gradchecks end to end") {
    Rng rng(109);
    for (int trial = 0; trial < 20; ++trial) {
        const int m = dim(rng), in = dim(rng), hidden = dim(rng) + 1, out = dim(rng);
        auto x = random_leaf(rng, {m, in});
        auto w1 = random_leaf(rng, {in, hidden});
        auto b1 = random_leaf(rng, {hidden});
        auto w2 = random_leaf(rng, {hidden, out});
        auto b2 = random_leaf(rng, {out});
        auto forward = [&] {
            auto h = relu(add_bias(matmul(x, w1), b1));
            return sum_of_squares(add_bias(matmul(h, w2), b2));
        };
        auto res = gradcheck(forward, {x, w1, b1, w2, b2}, rng);
        CHECK(res.max_rel <= kTol);
    }
}

TEST_CASE("backward accumulates, so a second call doubles gradients") {
    auto x = DTensor::leaf({1, 2}, {1.0, 2.0}, true);
    auto loss = sum_of_squares(x);
    backward(loss);
    const auto once = x.grad();
    backward(loss);
    for (size_t i = 0; i < once.size(); ++i) CHECK(x.grad()[i] == 2.0 * once[i]);
    x.zero_grad();
    backward(loss);
    CHECK(x.grad() == once);
}

TEST_CASE("graphs built under NoGradGuard carry no gradients") {
    auto x = DTensor::leaf({1, 2}, {1.0, 2.0}, true);
    DTensor loss;
    {
        NoGradGuard ng;
        loss = sum_of_squares(x);
    }
    backward(loss);
    CHECK(x.grad().empty());
}

TEST_CASE("shape and usage errors are rejected") {
    auto a = DTensor::leaf({2, 2}, {1, 2, 3, 4}, true);
    auto b = DTensor::leaf({3, 2}, {1, 2, 3, 4, 5, 6});
    CHECK_THROWS_AS(add(a, b), std::invalid_argument);
    CHECK_THROWS_AS(sub(a, b), std::invalid_argument);
    CHECK_THROWS_AS(matmul(a, DTensor::leaf({3, 1}, {1, 2, 3})), std::invalid_argument);
    CHECK_THROWS_AS(add_bias(a, DTensor::leaf({3}, {1, 2, 3})), std::invalid_argument);
    CHECK_THROWS_AS(concat_cols(a, b), std::invalid_argument);
    CHECK_THROWS_AS(gather_rows(a, {0, 2}), std::invalid_argument);
    CHECK_THROWS_AS(gather_rows(a, {-1}), std::invalid_argument);
    CHECK_THROWS_AS(group_max(a, 3), std::invalid_argument);
    CHECK_THROWS_AS(backward(a), std::invalid_argument);
    CHECK_THROWS_AS(backward_from(a, {1.0}), std::invalid_argument);
    CHECK_THROWS_AS(DTensor::leaf({2, 2}, {1.0}), std::invalid_argument);
}

TEST_CASE("backward_from injects an external gradient seed") {
    auto x = DTensor::leaf({2, 2}, {1, 2, 3, 4}, true);
    auto y = scale(x, 3.0);
    backward_from(y, {1.0, 10.0, 100.0, 1000.0});
    CHECK(x.grad() == std::vector<double>{3.0, 30.0, 300.0, 3000.0});
}

TEST_CASE("reusing one tensor as both operands accumulates both paths") {
    auto x = DTensor::leaf({1, 2}, {1.0, 2.0}, true);
    auto y = add(x, x);
    backward_from(y, {1.0, 1.0});
    CHECK(x.grad() == std::vector<double>{2.0, 2.0});
}
