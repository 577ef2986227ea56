#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nfseg/encoder.hpp"
#include "nfseg/ops.hpp"
#include "nfseg/params.hpp"

namespace nfseg {

enum class Strategy { concat, film, cross_attention };
enum class CodeSource { global, local, combined, tokens };

inline const char* to_string(Strategy s) {
    switch (s) {
        case Strategy::concat: return "concat";
        case Strategy::film: return "film";
        case Strategy::cross_attention: return "cross_attention";
    }
    return "?";
}

inline const char* to_string(CodeSource c) {
    switch (c) {
        case CodeSource::global: return "global";
        case CodeSource::local: return "local";
        case CodeSource::combined: return "combined";
        case CodeSource::tokens: return "tokens";
    }
    return "?";
}

struct DecoderConfig {
    Strategy strategy = Strategy::concat;
    CodeSource code_source = CodeSource::global;
    int hidden = 512;   // k
    int blocks = 1;     // N; cross-attention defaults to 2
    int heads = 8;
    int embed_l = 4;
    int classes = 6;
    bool token_posenc = true;

    int embed_width() const { return embed_dim(embed_l); }

    void validate() const {
        const bool tokens = code_source == CodeSource::tokens;
        if ((strategy == Strategy::cross_attention) != tokens)
            throw ConfigError("decoder: cross_attention pairs with the tokens code source only");
        if (strategy == Strategy::cross_attention && hidden % heads != 0)
            throw ConfigError("decoder: hidden width must divide by head count");
        if (hidden < 1 || blocks < 1 || heads < 1 || embed_l < 0 || classes < 2)
            throw ConfigError("decoder: invalid dimension in config");
    }
};

// Projections + attention + output projection, the full attention module.
// q rows are grouped per image (S each), token rows likewise (T each); the
// defaults treat all rows as one image. The key projection has no bias: a
// per-row constant shift of the scores cancels inside the softmax.
template <typename T>
Node<T>* multi_head_attention(Graph<T>& g, Node<T>* q, Node<T>* tokens, int heads, Node<T>* wq,
                              Node<T>* bq, Node<T>* wk, Node<T>* wv, Node<T>* bv, Node<T>* wo,
                              Node<T>* bo, int B = 1, int S = -1, int T_ = -1) {
    if (S < 0) S = q->val().dim(0);
    if (T_ < 0) T_ = tokens->val().dim(0);
    Node<T>* Q = linear(g, q, wq, bq);
    Node<T>* K = linear(g, tokens, wk, static_cast<Node<T>*>(nullptr));
    Node<T>* V = linear(g, tokens, wv, bv);
    Node<T>* a = attention_core(g, Q, K, V, B, S, T_, heads);
    return linear(g, a, wo, bo);
}

// The conditional neural field: maps embedded points plus conditioning to
// class logits. Parameter shapes are fully determined by (config, cond_dim),
// where cond_dim is the code length (concat/film) or the raw token width.
template <typename T>
class NeuralFieldModel {
public:
    NeuralFieldModel(DecoderConfig cfg, int cond_dim, Rng rng) : cfg_(cfg), cond_dim_(cond_dim) {
        cfg_.validate();
        const int k = cfg_.hidden;
        const int e = cfg_.embed_width();
        switch (cfg_.strategy) {
            case Strategy::concat:
                add_linear("dec.fc_in", k, e, rng);
                for (int i = 0; i < cfg_.blocks; ++i) {
                    const std::string b = "dec.b" + std::to_string(i);
                    add_linear(b + ".lin1", k, k + cond_dim_, rng, /*bias=*/false);
                    add_bn(b + ".bn1", k);
                    add_linear(b + ".lin2", k, k + cond_dim_, rng, /*bias=*/false);
                    add_bn(b + ".bn2", k);
                }
                add_linear("dec.head", cfg_.classes, k, rng);
                break;
            case Strategy::film:
                add_linear("dec.fc_in", k, e, rng);
                for (int i = 0; i < cfg_.blocks; ++i) {
                    const std::string b = "dec.b" + std::to_string(i);
                    add_linear(b + ".lin1", k, k, rng, /*bias=*/false);
                    add_cbn(b + ".cbn1", k, rng);
                    add_linear(b + ".lin2", k, k, rng, /*bias=*/false);
                    add_cbn(b + ".cbn2", k, rng);
                }
                add_linear("dec.head", cfg_.classes, k, rng);
                break;
            case Strategy::cross_attention:
                add_linear("dec.tokproj", k, cond_dim_, rng);
                add_linear("dec.qinit", k, e, rng);
                for (int i = 0; i < cfg_.blocks; ++i) {
                    const std::string b = "dec.b" + std::to_string(i);
                    add_ln(b + ".ln1", k);
                    add_linear(b + ".mha.q", k, k, rng);
                    add_linear(b + ".mha.k", k, k, rng, /*bias=*/false);
                    add_linear(b + ".mha.v", k, k, rng);
                    add_linear(b + ".mha.o", k, k, rng);
                    add_ln(b + ".ln2", k);
                    add_linear(b + ".mlp1", 2 * k, k, rng);
                    add_linear(b + ".mlp2", k, 2 * k, rng);
                }
                add_ln("dec.ln_head", k);
                add_linear("dec.head", cfg_.classes, k, rng);
                break;
        }
    }

    // emb: [B*S, 4(l+1)] embedded points.
    // cond: per-point codes [B*S, d] (concat/film) or raw tokens [B*T, d_tok].
    Node<T>* forward(Graph<T>& g, Node<T>* emb, Node<T>* cond, int B, int S, int T_, bool train) {
        switch (cfg_.strategy) {
            case Strategy::concat: return forward_concat(g, emb, cond, train);
            case Strategy::film: return forward_film(g, emb, cond, train);
            case Strategy::cross_attention: return forward_cross_attention(g, emb, cond, B, S, T_, train);
        }
        throw ConfigError("decoder: unknown strategy");
    }

    ParamSet<T>& params() { return params_; }
    const DecoderConfig& config() const { return cfg_; }
    int cond_dim() const { return cond_dim_; }

    std::int64_t count_parameters() const { return params_.count_trainable(); }

    // When set, forward_cross_attention records each block's attention-module
    // output (after the output projection) for inspection in tests.
    bool capture_mha = false;
    std::vector<Tensor<T>> captured_mha;

private:
    Node<T>* lin(Graph<T>& g, Node<T>* x, const std::string& base) {
        Parameter<T>* b = params_.find(base + ".b");
        return linear(g, x, use(g, *params_.find(base + ".w")), b ? use(g, *b) : nullptr);
    }

    Node<T>* forward_concat(Graph<T>& g, Node<T>* emb, Node<T>* code, bool train) {
        Node<T>* h = lin(g, emb, "dec.fc_in");
        for (int i = 0; i < cfg_.blocks; ++i) {
            const std::string b = "dec.b" + std::to_string(i);
            Node<T>* t = concat_cols(g, h, code);
            t = lin(g, t, b + ".lin1");
            t = bn(g, t, b + ".bn1", train);
            t = relu(g, t);
            t = concat_cols(g, t, code);
            t = lin(g, t, b + ".lin2");
            t = bn(g, t, b + ".bn2", train);
            t = relu(g, t);
            h = add(g, h, t);
        }
        return lin(g, relu(g, h), "dec.head");
    }

    Node<T>* forward_film(Graph<T>& g, Node<T>* emb, Node<T>* code, bool train) {
        Node<T>* h = lin(g, emb, "dec.fc_in");
        for (int i = 0; i < cfg_.blocks; ++i) {
            const std::string b = "dec.b" + std::to_string(i);
            Node<T>* t = cbn_site(g, lin(g, h, b + ".lin1"), code, b + ".cbn1", train);
            t = relu(g, t);
            t = cbn_site(g, lin(g, t, b + ".lin2"), code, b + ".cbn2", train);
            t = relu(g, t);
            h = add(g, h, t);
        }
        return lin(g, relu(g, h), "dec.head");
    }

    // conditional batchnorm: normalize without learned affine, then modulate
    // by gamma(code) and beta(code)
    Node<T>* cbn_site(Graph<T>& g, Node<T>* x, Node<T>* code, const std::string& base, bool train) {
        Node<T>* xhat = batchnorm<T>(g, x, nullptr, nullptr,
                                     params_.find(base + ".run_mean")->value.get(),
                                     params_.find(base + ".run_var")->value.get(), train);
        Node<T>* gam = lin(g, code, base + ".gamma");
        Node<T>* bet = lin(g, code, base + ".beta");
        return add(g, mul(g, xhat, gam), bet);
    }

    Node<T>* forward_cross_attention(Graph<T>& g, Node<T>* emb, Node<T>* tokens_raw, int B, int S,
                                     int T_, bool train) {
        (void)train;  // every layer of this path behaves identically in both modes
        Node<T>* tok = lin(g, tokens_raw, "dec.tokproj");
        Node<T>* q = lin(g, emb, "dec.qinit");
        if (capture_mha) captured_mha.clear();
        for (int i = 0; i < cfg_.blocks; ++i) {
            const std::string b = "dec.b" + std::to_string(i);
            Node<T>* qn = ln(g, q, b + ".ln1");
            Node<T>* a = multi_head_attention(
                g, qn, tok, cfg_.heads, use(g, *params_.find(b + ".mha.q.w")),
                use(g, *params_.find(b + ".mha.q.b")), use(g, *params_.find(b + ".mha.k.w")),
                use(g, *params_.find(b + ".mha.v.w")), use(g, *params_.find(b + ".mha.v.b")),
                use(g, *params_.find(b + ".mha.o.w")), use(g, *params_.find(b + ".mha.o.b")), B,
                S, T_);
            if (capture_mha) captured_mha.push_back(a->val());
            q = add(g, q, a);
            Node<T>* m = lin(g, relu(g, lin(g, ln(g, q, b + ".ln2"), b + ".mlp1")), b + ".mlp2");
            q = add(g, q, m);
        }
        return lin(g, ln(g, q, "dec.ln_head"), "dec.head");
    }

    Node<T>* bn(Graph<T>& g, Node<T>* x, const std::string& base, bool train) {
        return batchnorm(g, x, use(g, *params_.find(base + ".gamma")),
                         use(g, *params_.find(base + ".beta")),
                         params_.find(base + ".run_mean")->value.get(),
                         params_.find(base + ".run_var")->value.get(), train);
    }

    Node<T>* ln(Graph<T>& g, Node<T>* x, const std::string& base) {
        return layernorm(g, x, use(g, *params_.find(base + ".gamma")),
                         use(g, *params_.find(base + ".beta")));
    }

    void add_linear(const std::string& base, int out, int in, Rng& rng, bool bias = true) {
        params_.add(base + ".w", init_uniform<T>({out, in}, in, rng));
        if (bias) params_.add(base + ".b", init_uniform<T>({out}, in, rng));
    }

    void add_bn(const std::string& base, int width) {
        params_.add(base + ".gamma", Tensor<T>::full({width}, T(1)));
        params_.add(base + ".beta", Tensor<T>({width}));
        params_.add(base + ".run_mean", Tensor<T>({width}), /*trainable=*/false);
        params_.add(base + ".run_var", Tensor<T>::full({width}, T(1)), /*trainable=*/false);
    }

    // gamma regressor biased to 1 so modulation starts near identity
    void add_cbn(const std::string& base, int width, Rng& rng) {
        params_.add(base + ".gamma.w", init_uniform<T>({width, cond_dim_}, cond_dim_, rng));
        params_.add(base + ".gamma.b", Tensor<T>::full({width}, T(1)));
        params_.add(base + ".beta.w", init_uniform<T>({width, cond_dim_}, cond_dim_, rng));
        params_.add(base + ".beta.b", Tensor<T>({width}));
        params_.add(base + ".run_mean", Tensor<T>({width}), /*trainable=*/false);
        params_.add(base + ".run_var", Tensor<T>::full({width}, T(1)), /*trainable=*/false);
    }

    void add_ln(const std::string& base, int width) {
        params_.add(base + ".gamma", Tensor<T>::full({width}, T(1)));
        params_.add(base + ".beta", Tensor<T>({width}));
    }

    DecoderConfig cfg_;
    int cond_dim_;
    ParamSet<T> params_;
};

}  // namespace nfseg
