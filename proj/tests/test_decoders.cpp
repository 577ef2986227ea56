#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>

#include "nfseg/conditioning.hpp"
#include "nfseg/decoder.hpp"
#include "nfseg/ops.hpp"
#include "nfseg/rng.hpp"

using namespace nfseg;

namespace {

DecoderConfig tiny_config(Strategy s, CodeSource c) {
    DecoderConfig cfg;
    cfg.strategy = s;
    cfg.code_source = c;
    cfg.hidden = 8;
    cfg.blocks = 1;
    cfg.heads = 2;
    cfg.embed_l = 1;
    cfg.classes = 2;
    return cfg;
}

Tensor<float> random_rows(int rows, int cols, Rng& rng) {
    Tensor<float> t({rows, cols});
    for (auto& v : t.data) v = static_cast<float>(rng.uniform(-1.0, 1.0));
    return t;
}

}  // namespace

TEST_CASE("decoders are bit-level equivariant to point permutation in eval mode") {
    Rng rng(21);
    const int S = 6;
    const int perm[S] = {3, 0, 5, 1, 4, 2};
    for (Strategy strat : {Strategy::concat, Strategy::film, Strategy::cross_attention}) {
        const CodeSource src =
            strat == Strategy::cross_attention ? CodeSource::tokens : CodeSource::local;
        DecoderConfig cfg = tiny_config(strat, src);
        const int d = strat == Strategy::cross_attention ? 7 : 5;
        NeuralFieldModel<float> model(cfg, d, rng.fork(static_cast<std::uint64_t>(strat)));

        const int T_ = strat == Strategy::cross_attention ? 4 : 0;
        Tensor<float> emb = random_rows(S, cfg.embed_width(), rng);
        Tensor<float> cond = random_rows(strat == Strategy::cross_attention ? T_ : S, d, rng);

        Tensor<float> emb_p = emb, cond_p = cond;
        for (int i = 0; i < S; ++i)
            for (int j = 0; j < cfg.embed_width(); ++j) emb_p(i, j) = emb(perm[i], j);
        if (strat != Strategy::cross_attention)
            for (int i = 0; i < S; ++i)
                for (int j = 0; j < d; ++j) cond_p(i, j) = cond(perm[i], j);

        Graph<float> g(/*grads=*/false);
        auto* base = model.forward(g, g.leaf(emb), g.leaf(cond), 1, S, T_, /*train=*/false);
        auto* permuted = model.forward(g, g.leaf(emb_p), g.leaf(cond_p), 1, S, T_, /*train=*/false);
        for (int i = 0; i < S; ++i)
            for (int c = 0; c < cfg.classes; ++c) {
                CAPTURE(static_cast<int>(strat));
                CHECK(permuted->val()(i, c) == base->val()(perm[i], c));
            }
    }
}

TEST_CASE("concat and film decoders are strictly per-point in eval mode") {
    Rng rng(22);
    const int S = 5;
    for (Strategy strat : {Strategy::concat, Strategy::film}) {
        DecoderConfig cfg = tiny_config(strat, CodeSource::local);
        NeuralFieldModel<float> model(cfg, 4, rng.fork(static_cast<std::uint64_t>(strat) + 9));
        Tensor<float> emb = random_rows(S, cfg.embed_width(), rng);
        Tensor<float> code = random_rows(S, 4, rng);

        Tensor<float> emb2 = emb;
        emb2(2, 0) += 0.5f;  // poke one point

        Graph<float> g(false);
        auto* a = model.forward(g, g.leaf(emb), g.leaf(code), 1, S, 0, false);
        auto* b = model.forward(g, g.leaf(emb2), g.leaf(code), 1, S, 0, false);
        for (int i = 0; i < S; ++i)
            for (int c = 0; c < cfg.classes; ++c) {
                if (i == 2) continue;
                CHECK(a->val()(i, c) == b->val()(i, c));
            }
        CHECK(a->val()(2, 0) != b->val()(2, 0));
    }
}

TEST_CASE("identical (point, code) rows produce identical logits") {
    Rng rng(23);
    DecoderConfig cfg = tiny_config(Strategy::concat, CodeSource::global);
    NeuralFieldModel<float> model(cfg, 4, rng.fork(1));
    Tensor<float> emb({3, cfg.embed_width()});
    Tensor<float> code({3, 4});
    Tensor<float> one_emb = random_rows(1, cfg.embed_width(), rng);
    Tensor<float> one_code = random_rows(1, 4, rng);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < cfg.embed_width(); ++j) emb(i, j) = one_emb(0, j);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 4; ++j) code(i, j) = one_code(0, j);
    Graph<float> g(false);
    auto* out = model.forward(g, g.leaf(emb), g.leaf(code), 1, 3, 0, false);
    for (int i = 1; i < 3; ++i)
        for (int c = 0; c < cfg.classes; ++c) CHECK(out->val()(i, c) == out->val()(0, c));
}

TEST_CASE("parameter count matches a layer-by-layer hand count") {
    Rng rng(24);
    // concat, k=8, d=4, e=4 (l=0? e=4(l+1), use l=0 -> e=4), N=1, K=2:
    //   fc_in 4->8 with bias      = 40
    //   block: lin1 (8+4)->8      = 96   (no bias before batchnorm)
    //          bn1 gamma+beta     = 16
    //          lin2 (8+4)->8      = 96
    //          bn2                = 16
    //   head 8->2 with bias       = 18
    DecoderConfig cfg = tiny_config(Strategy::concat, CodeSource::local);
    cfg.embed_l = 0;
    NeuralFieldModel<float> model(cfg, 4, rng.fork(1));
    CHECK(model.count_parameters() == 40 + 96 + 16 + 96 + 16 + 18);

    // film, same dims: fc_in 40; per block lin 64 each, cbn 80 each; head 18
    DecoderConfig fcfg = tiny_config(Strategy::film, CodeSource::local);
    fcfg.embed_l = 0;
    NeuralFieldModel<float> fmodel(fcfg, 4, rng.fork(2));
    CHECK(fmodel.count_parameters() == 40 + 64 + 80 + 64 + 80 + 18);
}

TEST_CASE("concat parameter count grows by 2*N*k per unit of code width") {
    Rng rng(25);
    for (int blocks = 1; blocks <= 2; ++blocks) {
        DecoderConfig cfg = tiny_config(Strategy::concat, CodeSource::combined);
        cfg.blocks = blocks;
        NeuralFieldModel<float> narrow(cfg, 4, rng.fork(1));
        NeuralFieldModel<float> wide(cfg, 9, rng.fork(2));
        const long long diff = wide.count_parameters() - narrow.count_parameters();
        CHECK(diff == 2LL * blocks * cfg.hidden * (9 - 4));
    }
}

TEST_CASE("parameter count is a pure function of the configuration") {
    Rng rng(26);
    DecoderConfig cfg = tiny_config(Strategy::cross_attention, CodeSource::tokens);
    NeuralFieldModel<float> a(cfg, 7, rng.fork(1));
    NeuralFieldModel<float> b(cfg, 7, rng.fork(2));
    CHECK(a.count_parameters() == b.count_parameters());
}

TEST_CASE("paper-scale parameter counts, reported for comparison") {
    Rng rng(27);
    DecoderConfig cfg;
    cfg.hidden = 512;
    cfg.embed_l = 4;
    cfg.classes = 6;

    // published Table-1 counts: 2.1M (global/local), 4.0M / 3.7M (combined),
    // 2.6M (cross-attention); our normative blocks land in the same regime
    // but are not an exact-match gate
    cfg.strategy = Strategy::concat;
    cfg.code_source = CodeSource::global;
    cfg.blocks = 1;
    NeuralFieldModel<float> cg(cfg, 512, rng.fork(1));
    cfg.code_source = CodeSource::combined;
    NeuralFieldModel<float> cc(cfg, 1024, rng.fork(2));
    cfg.strategy = Strategy::film;
    cfg.code_source = CodeSource::global;
    NeuralFieldModel<float> fg(cfg, 512, rng.fork(3));
    cfg.strategy = Strategy::cross_attention;
    cfg.code_source = CodeSource::tokens;
    cfg.blocks = 2;
    NeuralFieldModel<float> ca(cfg, 532, rng.fork(4));

    std::printf("paper-scale params: concat/global %.2fM (paper 2.1M), "
                "concat/combined %.2fM (4.0M), film/global %.2fM (2.1M), "
                "cross-attention %.2fM (2.6M)\n",
                cg.count_parameters() / 1e6, cc.count_parameters() / 1e6,
                fg.count_parameters() / 1e6, ca.count_parameters() / 1e6);
    CHECK(cg.count_parameters() > 500000);
    CHECK(ca.count_parameters() > 1000000);
}

TEST_CASE("single linear 512->512 has 262656 parameters") {
    Rng rng(28);
    ParamSet<float> ps;
    ps.add("w", init_uniform<float>({512, 512}, 512, rng));
    ps.add("b", init_uniform<float>({512}, 512, rng));
    CHECK(ps.count_trainable() == 262656);
}

TEST_CASE("film with zeroed regressors ignores the code") {
    Rng rng(29);
    DecoderConfig cfg = tiny_config(Strategy::film, CodeSource::global);
    NeuralFieldModel<float> model(cfg, 4, rng.fork(1));
    // gamma(code) == 1, beta(code) == 0 regardless of the code
    for (const char* site : {"dec.b0.cbn1", "dec.b0.cbn2"}) {
        model.params().find(std::string(site) + ".gamma.w")->value->fill(0);
        model.params().find(std::string(site) + ".gamma.b")->value->fill(1);
        model.params().find(std::string(site) + ".beta.w")->value->fill(0);
        model.params().find(std::string(site) + ".beta.b")->value->fill(0);
    }
    const int S = 4;
    Tensor<float> emb = random_rows(S, cfg.embed_width(), rng);
    Tensor<float> code_a = random_rows(S, 4, rng);
    Tensor<float> code_b = random_rows(S, 4, rng);
    Graph<float> g(false);
    auto* a = model.forward(g, g.leaf(emb), g.leaf(code_a), 1, S, 0, false);
    auto* b = model.forward(g, g.leaf(emb), g.leaf(code_b), 1, S, 0, false);
    for (std::size_t i = 0; i < a->val().numel(); ++i) CHECK(a->val().data[i] == b->val().data[i]);
}

TEST_CASE("film beta bias drives the block output when gamma is zero") {
    Rng rng(30);
    DecoderConfig cfg = tiny_config(Strategy::film, CodeSource::global);
    NeuralFieldModel<float> model(cfg, 4, rng.fork(1));
    const float v1 = 0.6f, v2 = -0.4f;
    model.params().find("dec.b0.cbn1.gamma.w")->value->fill(0);
    model.params().find("dec.b0.cbn1.gamma.b")->value->fill(0);
    model.params().find("dec.b0.cbn1.beta.w")->value->fill(0);
    model.params().find("dec.b0.cbn1.beta.b")->value->fill(v1);
    model.params().find("dec.b0.cbn2.gamma.w")->value->fill(0);
    model.params().find("dec.b0.cbn2.gamma.b")->value->fill(0);
    model.params().find("dec.b0.cbn2.beta.w")->value->fill(0);
    model.params().find("dec.b0.cbn2.beta.b")->value->fill(v2);

    // with both modulations collapsed to constants the block adds
    // relu(v2) to every unit, so logits must match the replica
    // head(relu(fc_in(emb) + relu(v2)))
    const int S = 3;
    Tensor<float> emb = random_rows(S, cfg.embed_width(), rng);
    Tensor<float> code = random_rows(S, 4, rng);
    Graph<float> g(false);
    auto* logits = model.forward(g, g.leaf(emb), g.leaf(code), 1, S, 0, false);

    auto* h = linear(g, g.leaf(emb), g.leaf(*model.params().find("dec.fc_in.w")->value),
                     g.leaf(*model.params().find("dec.fc_in.b")->value));
    auto* shifted = add(g, h, g.leaf(Tensor<float>::full({S, cfg.hidden}, std::max(v2, 0.0f))));
    auto* replica = linear(g, relu(g, shifted), g.leaf(*model.params().find("dec.head.w")->value),
                           g.leaf(*model.params().find("dec.head.b")->value));
    for (std::size_t i = 0; i < logits->val().numel(); ++i)
        CHECK(logits->val().data[i] == doctest::Approx(replica->val().data[i]));
}

TEST_CASE("single-token attention contributes identically to every point") {
    Rng rng(31);
    DecoderConfig cfg = tiny_config(Strategy::cross_attention, CodeSource::tokens);
    cfg.blocks = 2;
    NeuralFieldModel<float> model(cfg, 5, rng.fork(1));
    const int S = 6, T_ = 1;
    Tensor<float> emb = random_rows(S, cfg.embed_width(), rng);
    Tensor<float> tok = random_rows(T_, 5, rng);

    model.capture_mha = true;
    Graph<float> g(false);
    auto* logits = model.forward(g, g.leaf(emb), g.leaf(tok), 1, S, T_, false);
    REQUIRE(model.captured_mha.size() == 2u);
    for (const auto& block_out : model.captured_mha)
        for (int i = 1; i < S; ++i)
            for (int c = 0; c < cfg.hidden; ++c)
                CHECK(std::abs(block_out(i, c) - block_out(0, c)) < 1e-6);

    // the residual query path still separates the points
    bool any_diff = false;
    for (int c = 0; c < cfg.classes; ++c)
        if (logits->val()(0, c) != logits->val()(1, c)) any_diff = true;
    CHECK(any_diff);
}

TEST_CASE("token permutation leaves logits bit-identical") {
    Rng rng(32);
    DecoderConfig cfg = tiny_config(Strategy::cross_attention, CodeSource::tokens);
    cfg.token_posenc = false;
    NeuralFieldModel<float> model(cfg, 5, rng.fork(1));
    const int S = 4, T_ = 6;
    Tensor<float> emb = random_rows(S, cfg.embed_width(), rng);
    Tensor<float> tok = random_rows(T_, 5, rng);
    const int perm[T_] = {5, 2, 0, 4, 1, 3};
    Tensor<float> tok_p({T_, 5});
    for (int t = 0; t < T_; ++t)
        for (int j = 0; j < 5; ++j) tok_p(t, j) = tok(perm[t], j);

    Graph<float> g(false);
    auto* a = model.forward(g, g.leaf(emb), g.leaf(tok), 1, S, T_, false);
    auto* b = model.forward(g, g.leaf(emb), g.leaf(tok_p), 1, S, T_, false);
    for (std::size_t i = 0; i < a->val().numel(); ++i) CHECK(a->val().data[i] == b->val().data[i]);
}

TEST_CASE("two identical images in a batch produce identical logit rows") {
    Rng rng(33);
    DecoderConfig cfg = tiny_config(Strategy::cross_attention, CodeSource::tokens);
    NeuralFieldModel<float> model(cfg, 5, rng.fork(1));
    const int S = 3, T_ = 4;
    Tensor<float> one_emb = random_rows(S, cfg.embed_width(), rng);
    Tensor<float> one_tok = random_rows(T_, 5, rng);
    Tensor<float> emb({2 * S, cfg.embed_width()});
    Tensor<float> tok({2 * T_, 5});
    for (int b = 0; b < 2; ++b) {
        for (int i = 0; i < S; ++i)
            for (int j = 0; j < cfg.embed_width(); ++j) emb(b * S + i, j) = one_emb(i, j);
        for (int t = 0; t < T_; ++t)
            for (int j = 0; j < 5; ++j) tok(b * T_ + t, j) = one_tok(t, j);
    }
    Graph<float> g(false);
    auto* out = model.forward(g, g.leaf(emb), g.leaf(tok), 2, S, T_, false);
    for (int i = 0; i < S; ++i)
        for (int c = 0; c < cfg.classes; ++c) CHECK(out->val()(i, c) == out->val()(S + i, c));
}

TEST_CASE("config validation rejects inconsistent pairings") {
    DecoderConfig cfg = tiny_config(Strategy::cross_attention, CodeSource::global);
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    DecoderConfig cfg2 = tiny_config(Strategy::concat, CodeSource::tokens);
    CHECK_THROWS_AS(cfg2.validate(), ConfigError);
    DecoderConfig cfg3 = tiny_config(Strategy::cross_attention, CodeSource::tokens);
    cfg3.hidden = 9;  // not divisible by two heads
    CHECK_THROWS_AS(cfg3.validate(), ConfigError);
}
