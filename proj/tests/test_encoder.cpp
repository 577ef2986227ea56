#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "nfseg/encoder.hpp"
#include "nfseg/gradcheck.hpp"
#include "nfseg/ops.hpp"
#include "nfseg/receptive_field.hpp"
#include "nfseg/rng.hpp"

using namespace nfseg;

TEST_CASE("encoder output shapes follow the downsample arithmetic") {
    // default config: stem + 4 stages, downsample 32
    EncoderConfig cfg;
    CHECK(cfg.downsample() == 32);
    Encoder<float> enc(cfg, Rng(3));

    Graph<float> g(/*grads=*/false);
    auto* out = enc.forward(g, g.leaf(Tensor<float>({1, 3, 256, 256})), false);
    CHECK(out->val().shape == std::vector<int>{1, 128, 8, 8});

    Graph<float> g2(false);
    auto* out2 = enc.forward(g2, g2.leaf(Tensor<float>({1, 3, 512, 512})), false);
    CHECK(out2->val().shape == std::vector<int>{1, 128, 16, 16});
}

TEST_CASE("three-stage desk encoder downsamples by 16") {
    EncoderConfig cfg;
    cfg.stage_widths = {32, 64, 128};
    CHECK(cfg.downsample() == 16);
    Encoder<float> enc(cfg, Rng(4));
    Graph<float> g(false);
    auto* out = enc.forward(g, g.leaf(Tensor<float>({2, 3, 64, 64})), false);
    CHECK(out->val().shape == std::vector<int>{2, 128, 4, 4});
}

TEST_CASE("indivisible input size is a configuration error") {
    Encoder<float> enc(EncoderConfig{}, Rng(5));
    Graph<float> g(false);
    CHECK_THROWS_AS(enc.forward(g, g.leaf(Tensor<float>({1, 3, 100, 96})), false), ConfigError);
}

TEST_CASE("gradcheck: one-stage encoder on a 16x16 input") {
    EncoderConfig cfg;
    cfg.stem_width = 4;
    cfg.stage_widths = {6};
    Encoder<double> enc(cfg, Rng(6));

    auto image = std::make_shared<Tensor<double>>(std::vector<int>{1, 3, 16, 16});
    {
        Rng rng(7);
        for (auto& v : image->data) v = rng.uniform(-1.0, 1.0);
    }
    auto image_grad = std::make_shared<Tensor<double>>(image->shape);
    Tensor<double> wts({1, 6, 4, 4});
    {
        Rng rng(8);
        for (auto& v : wts.data) v = rng.normal();
    }

    auto forward = [&](bool backward) {
        Graph<double> g;
        auto* img = g.leaf_shared(image, image_grad);
        auto* out = enc.forward(g, img, /*train=*/true);
        auto* loss = weighted_sum(g, out, wts);
        if (backward) g.backward(loss);
        return loss->val()(0);
    };
    enc.params().zero_grads();
    image_grad->fill(0.0);
    forward(true);

    std::vector<GradCheckInput> inputs{{image.get(), image_grad.get()}};
    for (auto& p : enc.params())
        if (p.trainable) inputs.push_back({p.value.get(), p.grad.get()});
    const double err = finite_diff_check([&] { return forward(false); }, inputs);
    CHECK(err < 1e-4);
}

TEST_CASE("receptive field of simple stacks") {
    CHECK(receptive_field({{3, 1, 1}}) == 3);
    CHECK(receptive_field({{3, 1, 1}, {3, 1, 1}}) == 5);
    CHECK_THROWS_AS(receptive_field({}), ContractViolation);
}

TEST_CASE("bundled ResNet34 stack has a receptive field of 899") {
    const auto layers = resnet34_layers();
    CHECK(layers.size() == 34u);  // stem + maxpool + 16 blocks of two convs
    CHECK(receptive_field(layers) == 899);
}

TEST_CASE("receptive field grows monotonically") {
    Rng rng(9);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<ConvLayerSpec> layers;
        const int n = 1 + rng.uniform_int(6);
        for (int i = 0; i < n; ++i)
            layers.push_back({1 + rng.uniform_int(6), 1 + rng.uniform_int(2), 1 + rng.uniform_int(2)});
        const int base = receptive_field(layers);

        auto bigger = layers;
        bigger[static_cast<std::size_t>(rng.uniform_int(n))].kernel += 1 + rng.uniform_int(3);
        CHECK(receptive_field(bigger) >= base);

        auto longer = layers;
        longer.push_back({1 + rng.uniform_int(6), 1, 1});
        CHECK(receptive_field(longer) >= base);
    }
}
