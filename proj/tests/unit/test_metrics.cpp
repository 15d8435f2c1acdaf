#include "doctest.h"

#include <stdexcept>

#include "stms/metrics.hpp"

using namespace stms;

TEST_CASE("mae hand values") {
    const Tensor a = Tensor::from_vector({2}, {2.0, 4.0});
    const Tensor b = Tensor::from_vector({2}, {1.0, 5.0});
    CHECK(mae(a, b) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(mae(b, b) == 0.0);
    CHECK_THROWS_AS(mae(a, Tensor::zeros({3})), std::invalid_argument);
    CHECK_THROWS_AS(mae(Tensor::zeros({0}), Tensor::zeros({0})),
                    std::invalid_argument);
}

TEST_CASE("rmse hand values") {
    const Tensor a = Tensor::from_vector({2}, {2.0, 4.0});
    const Tensor b = Tensor::from_vector({2}, {1.0, 5.0});
    CHECK(rmse(a, b) == doctest::Approx(1.0).epsilon(1e-15));
    // single element with error 3
    CHECK(rmse(Tensor::from_vector({1}, {5.0}), Tensor::from_vector({1}, {2.0})) ==
          doctest::Approx(3.0).epsilon(1e-15));
    CHECK_THROWS_AS(rmse(a, Tensor::zeros({2, 1})), std::invalid_argument);
}

TEST_CASE("mape masking and hand value") {
    const Tensor a = Tensor::from_vector({2}, {2.0, 4.0});
    const Tensor b = Tensor::from_vector({2}, {1.0, 5.0});
    // (1/1 + 1/5) / 2 * 100
    CHECK(mape(a, b, 0.0) == doctest::Approx(60.0).epsilon(1e-15));

    // a zero target is masked out instead of dividing by zero
    const Tensor c = Tensor::from_vector({3}, {2.0, 7.0, 4.0});
    const Tensor d = Tensor::from_vector({3}, {1.0, 0.0, 5.0});
    CHECK(mape(c, d, 0.0) == doctest::Approx(60.0).epsilon(1e-15));

    // everything masked -> undefined
    const Tensor z = Tensor::zeros({4});
    CHECK_THROWS_AS(mape(c.reshaped({3}), Tensor::zeros({3}), 0.0),
                    std::domain_error);
    CHECK_THROWS_AS(mape(z, Tensor::full({4}, 0.5), 0.5), std::domain_error);
    CHECK_THROWS_AS(mape(a, b, -1.0), std::invalid_argument);

    // floor keeps only |y| strictly above it
    const Tensor e = Tensor::from_vector({2}, {12.0, 100.0});
    const Tensor f = Tensor::from_vector({2}, {10.0, 80.0});
    CHECK(mape(e, f, 10.0) == doctest::Approx(25.0).epsilon(1e-12));
}
