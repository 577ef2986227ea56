#pragma once

#include "nfseg/decoder.hpp"
#include "nfseg/ops.hpp"

namespace nfseg {

// Conditioning input handed to the decoder: per-point code rows for
// concat/film, or per-image token rows for cross-attention.
template <typename T>
struct Conditioning {
    Node<T>* node = nullptr;
    int dim = 0;     // code length, or raw token width
    int tokens = 0;  // T per image (tokens source), else 0
};

// Width of the conditioning vector a model sees for a given source.
inline int cond_dim_for(CodeSource src, int encoder_channels, int l, bool token_posenc) {
    switch (src) {
        case CodeSource::global: return encoder_channels;
        case CodeSource::local: return encoder_channels;
        case CodeSource::combined: return 2 * encoder_channels;
        case CodeSource::tokens:
            return encoder_channels + (token_posenc ? embed_dim(l) : 0);
    }
    throw ConfigError("cond_dim_for: unknown code source");
}

// fmap[B,c,h,w] + per-point coords[B,S,2] -> conditioning rows
template <typename T>
Conditioning<T> build_conditioning(Graph<T>& g, Node<T>* fmap, const Tensor<T>& coords,
                                   CodeSource src, int S, int l, bool token_posenc) {
    const int c = fmap->val().dim(1);
    const int h = fmap->val().dim(2), w = fmap->val().dim(3);
    Conditioning<T> out;
    switch (src) {
        case CodeSource::global:
            out.node = repeat_rows(g, global_avg_pool(g, fmap), S);
            out.dim = c;
            break;
        case CodeSource::local:
            out.node = bilinear_sample(g, fmap, coords);
            out.dim = c;
            break;
        case CodeSource::combined:
            out.node = concat_cols(g, repeat_rows(g, global_avg_pool(g, fmap), S),
                                   bilinear_sample(g, fmap, coords));
            out.dim = 2 * c;
            break;
        case CodeSource::tokens:
            out.node = feature_tokens(g, fmap, l, token_posenc);
            out.dim = c + (token_posenc ? embed_dim(l) : 0);
            out.tokens = h * w;
            break;
    }
    return out;
}

}  // namespace nfseg
