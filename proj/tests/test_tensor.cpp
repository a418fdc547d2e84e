#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "invmm/errors.hpp"
#include "invmm/rng.hpp"
#include "invmm/tensor.hpp"

using namespace invmm;

TEST_CASE("tensor shape/data invariant") {
    CHECK_THROWS_AS(Tensor({2, 3}, {1, 2, 3}), ContractError);
    Tensor t({2, 3});
    CHECK(t.size() == 6);
    CHECK(t.shape_str() == "[2x3]");
    CHECK(Tensor::scalar(4.0).item() == 4.0);
    CHECK_THROWS_AS(Tensor({2}, {1, 2}).item(), ContractError);
}

TEST_CASE("elementwise add matches definition") {
    Tensor a({2}, {1, 2});
    Tensor b({2}, {3, 4});
    Tensor c = add(a, b);
    CHECK(c[0] == 4);
    CHECK(c[1] == 6);
    CHECK_THROWS_AS(add(Tensor({2}), Tensor({3})), ContractError);
}

TEST_CASE("scalar broadcast on either side") {
    Tensor a({3}, {1, 2, 3});
    Tensor s = Tensor::scalar(2.0);
    CHECK(mul(a, s)[2] == 6);
    CHECK(mul(s, a)[2] == 6);
    CHECK(sub(a, s)[0] == -1);
    CHECK(div(s, Tensor::scalar(4.0)).item() == 0.5);
}

TEST_CASE("matmul identity case") {
    Tensor eye({3, 3});
    for (int i = 0; i < 3; ++i) eye.at2(i, i) = 1.0;
    Rng rng(1);
    Tensor a = rng.normal_tensor({3, 5});
    Tensor out = matmul(eye, a);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(out[i] == a[i]);
    CHECK_THROWS_AS(matmul(Tensor({2, 3}), Tensor({2, 3})), ContractError);
}

TEST_CASE("transposed matmul kernels agree with explicit transposition") {
    Rng rng(2);
    Tensor a = rng.normal_tensor({4, 3});
    Tensor b = rng.normal_tensor({5, 3});
    // a * b^T
    Tensor nt = matmul_nt(a, b);
    Tensor bt({3, 5});
    for (std::size_t i = 0; i < 5; ++i) {
        for (std::size_t j = 0; j < 3; ++j) bt.at2(j, i) = b.at2(i, j);
    }
    Tensor ref = matmul(a, bt);
    REQUIRE(nt.size() == ref.size());
    for (std::size_t i = 0; i < ref.size(); ++i) CHECK(nt[i] == doctest::Approx(ref[i]).epsilon(1e-12));

    Tensor c = rng.normal_tensor({3, 4});
    Tensor d = rng.normal_tensor({3, 6});
    Tensor tn = matmul_tn(c, d);
    Tensor ct({4, 3});
    for (std::size_t i = 0; i < 3; ++i) {
        for (std::size_t j = 0; j < 4; ++j) ct.at2(j, i) = c.at2(i, j);
    }
    Tensor ref2 = matmul(ct, d);
    for (std::size_t i = 0; i < ref2.size(); ++i) {
        CHECK(tn[i] == doctest::Approx(ref2[i]).epsilon(1e-12));
    }
}

TEST_CASE("norm helpers") {
    Tensor a({2}, {3, -3});
    double m = 0;
    for (std::size_t i = 0; i < a.size(); ++i) m += a[i] * a[i];
    CHECK(m / a.size() == 9); // mean(square([3,-3])) = 9
    CHECK(l2_norm(a) == doctest::Approx(std::sqrt(18.0)));
    CHECK(l2_distance(a, Tensor({2}, {3, -3})) == 0.0);
}
