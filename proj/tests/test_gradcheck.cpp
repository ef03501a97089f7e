#include <catch2/catch_amalgamated.hpp>

#include "drlora/gradcheck.hpp"
#include "drlora/matrix.hpp"

using drlora::finite_diff_check;
using drlora::Matrix;

TEST_CASE("quadratic loss with exact gradient passes") {
    Matrix theta = Matrix::from_rows({{0.5, -1.0, 2.0}});
    auto loss = [&]() {
        double s = 0.0;
        for (double v : theta.data()) s += v * v;
        return s;
    };
    Matrix grad(1, 3);
    for (std::size_t i = 0; i < 3; ++i) grad.data()[i] = 2.0 * theta.data()[i];
    CHECK(finite_diff_check(loss, {&theta}, {&grad}, 1e-6) <= 1e-8);
}

TEST_CASE("deliberately wrong gradient is flagged") {
    Matrix theta = Matrix::from_rows({{1.0, 2.0}});
    auto loss = [&]() {
        double s = 0.0;
        for (double v : theta.data()) s += v * v;
        return s;
    };
    Matrix wrong(1, 2);
    for (std::size_t i = 0; i < 2; ++i) wrong.data()[i] = 4.0 * theta.data()[i];  // x2
    const double err = finite_diff_check(loss, {&theta}, {&wrong}, 1e-6);
    CHECK(err == Catch::Approx(0.5).margin(0.05));
}

TEST_CASE("invalid epsilon and non-finite losses raise") {
    Matrix theta(1, 1);
    Matrix grad(1, 1);
    auto loss = [&]() { return theta(0, 0); };
    CHECK_THROWS_AS(finite_diff_check(loss, {&theta}, {&grad}, 0.0), drlora::NumericError);
    auto bad = [&]() { return std::numeric_limits<double>::quiet_NaN(); };
    CHECK_THROWS_AS(finite_diff_check(bad, {&theta}, {&grad}, 1e-6), drlora::NumericError);
}
