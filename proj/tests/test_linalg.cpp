#include <doctest.h>

#include <cmath>

#include "sara/matrix.hpp"
#include "sara/rng.hpp"

using namespace sara;

namespace {

// independent naive triple-loop product, same accumulation order by spec
Matrix naive_matmul(const Matrix& a, const Matrix& b) {
    Matrix c(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < b.cols(); ++j) {
            double acc = 0.0;
            for (std::size_t k = 0; k < a.cols(); ++k) {
                acc += a(i, k) * b(k, j);
            }
            c(i, j) = acc;
        }
    }
    return c;
}

} // namespace

TEST_CASE("matrix construction validates data length") {
    CHECK_NOTHROW(Matrix(2, 3, std::vector<double>(6, 1.0)));
    CHECK_THROWS_AS(Matrix(2, 3, std::vector<double>(5, 1.0)), std::invalid_argument);
    CHECK_THROWS_AS(Matrix({{1.0, 2.0}, {3.0}}), std::invalid_argument);
}

TEST_CASE("matmul identity") {
    Rng rng(1);
    Matrix m = kaiming_uniform(rng, 3, 5, 5);
    CHECK(matmul(Matrix::identity(3), m) == m);
}

TEST_CASE("matmul hand case") {
    Matrix a{{1, 2}, {3, 4}};
    Matrix b{{0}, {1}};
    Matrix c = matmul(a, b);
    CHECK(c.rows() == 2);
    CHECK(c.cols() == 1);
    CHECK(c(0, 0) == 2.0);
    CHECK(c(1, 0) == 4.0);
}

TEST_CASE("matmul matches naive triple-loop oracle bit-exactly") {
    Rng rng(7);
    Matrix a = kaiming_uniform(rng, 7, 5, 5);
    Matrix b = kaiming_uniform(rng, 5, 3, 3);
    CHECK(matmul(a, b) == naive_matmul(a, b));

    for (int trial = 0; trial < 20; ++trial) {
        std::size_t m = 1 + rng.uniform_int(12);
        std::size_t k = 1 + rng.uniform_int(12);
        std::size_t n = 1 + rng.uniform_int(12);
        Matrix x = kaiming_uniform(rng, m, k, k);
        Matrix y = kaiming_uniform(rng, k, n, n);
        CHECK(matmul(x, y) == naive_matmul(x, y));
    }
}

TEST_CASE("matmul dimension mismatch names both shapes") {
    Matrix a(2, 3), b(4, 2);
    try {
        matmul(a, b);
        FAIL("expected throw");
    } catch (const std::invalid_argument& e) {
        const std::string msg = e.what();
        CHECK(msg.find("2x3") != std::string::npos);
        CHECK(msg.find("4x2") != std::string::npos);
    }
}

TEST_CASE("matmul associativity to 1e-9 relative") {
    Rng rng(11);
    for (int trial = 0; trial < 10; ++trial) {
        Matrix a = kaiming_uniform(rng, 16, 16, 16);
        Matrix b = kaiming_uniform(rng, 16, 16, 16);
        Matrix c = kaiming_uniform(rng, 16, 16, 16);
        Matrix lhs = matmul(matmul(a, b), c);
        Matrix rhs = matmul(a, matmul(b, c));
        CHECK(max_abs_diff(lhs, rhs) / std::max(max_abs(lhs), 1e-30) <= 1e-9);
    }
}

TEST_CASE("softmax of equal values is uniform") {
    Matrix m(2, 4, 3.5);
    Matrix s = softmax_rows(m);
    for (std::size_t i = 0; i < 2; ++i) {
        for (std::size_t j = 0; j < 4; ++j) {
            CHECK(s(i, j) == doctest::Approx(0.25).epsilon(1e-12));
        }
    }
}

TEST_CASE("softmax survives large magnitudes") {
    Matrix m{{1000.0, 0.0}};
    Matrix s = softmax_rows(m);
    CHECK(all_finite(s));
    CHECK(s(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(s(0, 1) < 1e-300);
}

TEST_CASE("softmax matches extended-precision oracle") {
    Rng rng(23);
    Matrix m = kaiming_uniform(rng, 4, 9, 2);
    Matrix s = softmax_rows(m);
    for (std::size_t i = 0; i < m.rows(); ++i) {
        long double denom = 0.0L;
        for (std::size_t j = 0; j < m.cols(); ++j) {
            denom += std::exp(static_cast<long double>(m(i, j)));
        }
        double rowsum = 0.0;
        for (std::size_t j = 0; j < m.cols(); ++j) {
            const long double expect = std::exp(static_cast<long double>(m(i, j))) / denom;
            CHECK(std::abs(s(i, j) - static_cast<double>(expect)) <= 1e-12);
            rowsum += s(i, j);
        }
        CHECK(std::abs(rowsum - 1.0) <= 1e-12);
    }
}

TEST_CASE("kaiming bound for fan_in 6 is 1") {
    Rng rng(5);
    Matrix m = kaiming_uniform(rng, 40, 40, 6);
    CHECK(max_abs(m) <= 1.0);
}

TEST_CASE("kaiming is deterministic per seed") {
    Rng a(99), b(99);
    CHECK(kaiming_uniform(a, 8, 8, 8) == kaiming_uniform(b, 8, 8, 8));
}

TEST_CASE("kaiming sample moments match the uniform law") {
    Rng rng(2024);
    const std::size_t n = 100000;
    const std::size_t fan_in = 24;
    Matrix m = kaiming_uniform(rng, 1, n, fan_in);
    const double b = std::sqrt(6.0 / 24.0);
    double mean = 0.0;
    for (double x : m.data()) {
        mean += x;
    }
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double x : m.data()) {
        var += (x - mean) * (x - mean);
    }
    var /= static_cast<double>(n);

    const double sigma = b / std::sqrt(3.0); // std of U(-b, b)
    CHECK(std::abs(mean) <= 3.0 * sigma / std::sqrt(static_cast<double>(n)));
    CHECK(std::abs(var - b * b / 3.0) <= 0.05 * b * b / 3.0);
}

TEST_CASE("kaiming rejects zero fan_in") {
    Rng rng(1);
    CHECK_THROWS_AS(kaiming_uniform(rng, 2, 2, 0), std::invalid_argument);
}

TEST_CASE("rng streams replay per seed") {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) {
        CHECK(a.next_u64() == b.next_u64());
    }
}

TEST_CASE("rng children do not depend on sibling draw order") {
    Rng a(7), b(7);
    for (int i = 0; i < 13; ++i) {
        (void)b.uniform(); // advance one stream only
    }
    Rng ca = a.child("weights");
    Rng cb = b.child("weights");
    for (int i = 0; i < 50; ++i) {
        CHECK(ca.next_u64() == cb.next_u64());
    }
    CHECK(a.child("weights").next_u64() != a.child("bias").next_u64());
}

TEST_CASE("scale_cols and scale_rows") {
    Matrix m{{1, 2}, {3, 4}};
    Matrix c = scale_cols(m, {2.0, 0.5});
    CHECK(c(0, 0) == 2.0);
    CHECK(c(0, 1) == 1.0);
    CHECK(c(1, 0) == 6.0);
    CHECK(c(1, 1) == 2.0);
    Matrix r = scale_rows(m, {2.0, 0.5});
    CHECK(r(0, 1) == 4.0);
    CHECK(r(1, 0) == 1.5);
    CHECK_THROWS_AS(scale_cols(m, {1.0}), std::invalid_argument);
}

TEST_CASE("finite checks") {
    Matrix ok{{1.0, 2.0}};
    CHECK(all_finite(ok));
    Matrix bad{{1.0, std::nan("")}};
    CHECK_FALSE(all_finite(bad));
    CHECK_THROWS_AS(softmax_rows(bad), std::invalid_argument);
}
