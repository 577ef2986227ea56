#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "nfseg/adam.hpp"
#include "nfseg/rng.hpp"

using namespace nfseg;

TEST_CASE("zero gradient leaves parameters unchanged") {
    Tensor<double> p({4}, {1.0, -2.0, 3.0, 0.5});
    const Tensor<double> orig = p;
    Tensor<double> g({4});
    AdamState<double> st;
    for (int i = 0; i < 5; ++i) adam_step(p, g, st, "p");
    for (int i = 0; i < 4; ++i) CHECK(p(i) == orig(i));
    CHECK(st.t == 5);
}

TEST_CASE("first step moves by about -lr for a positive gradient") {
    // bias correction makes the first update -lr * g/(|g| + eps')
    Tensor<double> p({1}, {0.0});
    Tensor<double> g({1}, {0.5});
    AdamState<double> st;
    st.lr = 1e-4;
    adam_step(p, g, st, "p");
    CHECK(std::abs(p(0) - (-1e-4)) < 1e-7);
}

TEST_CASE("constant gradient keeps each step near -lr") {
    Tensor<double> p({1}, {1.0});
    Tensor<double> g({1}, {0.5});
    AdamState<double> st;
    st.lr = 1e-4;
    double prev = p(0);
    for (int i = 0; i < 2; ++i) {
        adam_step(p, g, st, "p");
        CHECK(std::abs((p(0) - prev) - (-1e-4)) < 1e-6);
        prev = p(0);
    }
    CHECK(st.t == 2);
}

TEST_CASE("non-finite gradients raise a divergence error naming the parameter") {
    Tensor<double> p({2}, {0.0, 0.0});
    Tensor<double> g({2}, {0.1, std::nan("")});
    AdamState<double> st;
    try {
        adam_step(p, g, st, "enc.stem.w");
        FAIL("expected DivergenceError");
    } catch (const DivergenceError& e) {
        CHECK(std::string(e.what()).find("enc.stem.w") != std::string::npos);
    }
    CHECK(st.t == 0);  // the failed step does not count
}

TEST_CASE("shape mismatch is a contract violation") {
    Tensor<double> p({2});
    Tensor<double> g({3});
    AdamState<double> st;
    CHECK_THROWS_AS(adam_step(p, g, st, "p"), ContractViolation);
}

TEST_CASE("optimizer steps every trainable parameter and clears gradients") {
    Rng rng(3);
    ParamSet<float> ps;
    ps.add("a", init_uniform<float>({3, 3}, 3, rng));
    ps.add("b", init_uniform<float>({3}, 3, rng));
    ps.add("running", Tensor<float>({3}), /*trainable=*/false);
    const Tensor<float> before_a = *ps.find("a")->value;
    const Tensor<float> before_r = *ps.find("running")->value;

    ps.find("a")->grad->fill(0.3f);
    ps.find("b")->grad->fill(-0.2f);
    AdamOptimizer<float> opt(1e-2f);
    opt.attach(ps);
    opt.step();

    CHECK(ps.find("a")->value->data[0] != before_a.data[0]);
    CHECK(ps.find("running")->value->data[0] == before_r.data[0]);
    for (float v : ps.find("a")->grad->data) CHECK(v == 0.0f);
}
