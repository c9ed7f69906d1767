#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "sonn/tensor.hpp"

using namespace sonn;

namespace {

// Naive zero-padded convolution, the triple-loop reference.
Vector naive_conv_same(const Vector& y, const Vector& w) {
    const Index m = y.size();
    const Index k = w.size();
    const Index pad = (k - 1) / 2;
    Vector out = Vector::Zero(m);
    for (Index pos = 0; pos < m; ++pos)
        for (Index r = 0; r < k; ++r) {
            const Index src = pos + r - pad;
            if (src >= 0 && src < m) out(pos) += w(r) * y(src);
        }
    return out;
}

Matrix random_matrix(Index rows, Index cols, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    Matrix out(rows, cols);
    for (Index r = 0; r < rows; ++r)
        for (Index c = 0; c < cols; ++c) out(r, c) = dist(rng);
    return out;
}

Vector random_vector(Index n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    Vector out(n);
    for (Index j = 0; j < n; ++j) out(j) = dist(rng);
    return out;
}

} // namespace

TEST_CASE("im2row basic windows") {
    Vector y(3);
    y << 1, 2, 3; // a, b, c
    Matrix rows = im2row(y, 3, 1);
    REQUIRE(rows.rows() == 3);
    CHECK(rows(0, 0) == 0);
    CHECK(rows(0, 1) == 1);
    CHECK(rows(0, 2) == 2);
    CHECK(rows(1, 0) == 1);
    CHECK(rows(1, 1) == 2);
    CHECK(rows(1, 2) == 3);
    CHECK(rows(2, 0) == 2);
    CHECK(rows(2, 1) == 3);
    CHECK(rows(2, 2) == 0);
}

TEST_CASE("im2row identity case") {
    Vector y(1);
    y << 5;
    Matrix rows = im2row(y, 1, 0);
    REQUIRE(rows.rows() == 1);
    REQUIRE(rows.cols() == 1);
    CHECK(rows(0, 0) == 5);
}

TEST_CASE("im2row + row_dot reproduces naive convolution") {
    Vector y(4);
    y << 1, 2, 3, 4;
    Vector w = Vector::Ones(3);
    Vector out = row_dot(im2row(y, 3, 1), w);
    Vector expected(4);
    expected << 3, 6, 9, 7;
    CHECK((out - expected).cwiseAbs().maxCoeff() == 0.0);

    for (Index m : {5, 17, 64})
        for (Index k : {1, 3, 5, 9}) {
            if (k > m) continue;
            Vector sig = random_vector(m, static_cast<std::uint64_t>(m * 100 + k));
            Vector kern = random_vector(k, static_cast<std::uint64_t>(m + k));
            Vector fast = row_dot(im2row(sig, k, (k - 1) / 2), kern);
            CHECK((fast - naive_conv_same(sig, kern)).cwiseAbs().maxCoeff() <= 1e-12);
        }
}

TEST_CASE("im2row rejects invalid arguments") {
    Vector y = random_vector(8, 1);
    CHECK_THROWS_AS(im2row(y, 2, 0), std::invalid_argument);
    CHECK_THROWS_AS(im2row(y, 11, 0), std::invalid_argument);
}

TEST_CASE("hadamard_power_concat small cases") {
    Matrix y(1, 2);
    y << 2, 3;
    Matrix out = hadamard_power_concat(y, 2);
    REQUIRE(out.cols() == 4);
    CHECK(out(0, 0) == 2);
    CHECK(out(0, 1) == 3);
    CHECK(out(0, 2) == 4);
    CHECK(out(0, 3) == 9);

    Matrix neg(1, 1);
    neg << -1;
    Matrix alt = hadamard_power_concat(neg, 3);
    CHECK(alt(0, 0) == -1);
    CHECK(alt(0, 1) == 1);
    CHECK(alt(0, 2) == -1);

    CHECK_THROWS_AS(hadamard_power_concat(y, 0), std::invalid_argument);
}

TEST_CASE("hadamard_power_concat matches scalar pow loop") {
    Matrix y = random_matrix(3, 2, 7);
    Matrix out = hadamard_power_concat(y, 4);
    for (Index q = 0; q < 4; ++q)
        for (Index r = 0; r < 3; ++r)
            for (Index c = 0; c < 2; ++c)
                CHECK(out(r, q * 2 + c) ==
                      doctest::Approx(std::pow(y(r, c), q + 1)).epsilon(1e-12));
}

TEST_CASE("hadamard_power_concat with Q=1 is identity") {
    Matrix y = random_matrix(5, 3, 11);
    CHECK((hadamard_power_concat(y, 1) - y).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("row_dot") {
    Matrix y(2, 2);
    y << 1, 2, 3, 4;
    Vector w = Vector::Ones(2);
    Vector out = row_dot(y, w);
    CHECK(out(0) == 3);
    CHECK(out(1) == 7);

    Matrix eye = Matrix::Identity(3, 3);
    Vector abc(3);
    abc << 1.5, -2.0, 0.25;
    CHECK((row_dot(eye, abc) - abc).cwiseAbs().maxCoeff() == 0.0);

    Matrix sys = random_matrix(5, 6, 3);
    Vector weights = random_vector(6, 4);
    Vector fast = row_dot(sys, weights);
    for (Index r = 0; r < 5; ++r) {
        double acc = 0;
        for (Index c = 0; c < 6; ++c) acc += sys(r, c) * weights(c);
        CHECK(fast(r) == doctest::Approx(acc).epsilon(1e-14));
    }

    CHECK_THROWS_AS(row_dot(sys, Vector::Ones(5)), std::invalid_argument);
}

TEST_CASE("scatter overlap counts") {
    Matrix g = Matrix::Ones(4, 3);
    Vector out = im2row_transpose_scatter(g, 3, 1);
    REQUIRE(out.size() == 4);
    CHECK(out(0) == 2);
    CHECK(out(1) == 3);
    CHECK(out(2) == 3);
    CHECK(out(3) == 2);
}

TEST_CASE("scatter K=1 is identity") {
    Matrix g = random_matrix(6, 1, 9);
    CHECK((im2row_transpose_scatter(g, 1, 0) - g.col(0)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("scatter is the adjoint of im2row") {
    for (std::uint64_t seed = 0; seed < 10; ++seed)
        for (Index k : {1, 3, 5, 9}) {
            const Index m = 16 + static_cast<Index>(seed);
            Vector u = random_vector(m, seed * 7 + 1);
            Matrix g = random_matrix(m, k, seed * 7 + 2);
            const double lhs = (im2row(u, k, (k - 1) / 2).cwiseProduct(g)).sum();
            const double rhs = u.dot(im2row_transpose_scatter(g, k, (k - 1) / 2));
            CHECK(std::abs(lhs - rhs) <= 1e-12);
        }
}

TEST_CASE("scatter rejects dimension mismatch") {
    Matrix g = Matrix::Ones(4, 3);
    CHECK_THROWS_AS(im2row_transpose_scatter(g, 5, 2), std::invalid_argument);
}
