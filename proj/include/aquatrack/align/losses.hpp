// Alignment objectives tying the modality encoders together: a symmetric
// InfoNCE-style contrastive loss over pooled embeddings, a per-location L1
// regression with a stop-gradient on the RGB side, element-wise max fusion,
// and top-k visual-textual token pairing with an L1 adapter loss.
#pragma once

#include "aquatrack/model/encoders.hpp"

namespace aquatrack {

struct AlignmentConfig {
    double tau = 0.07;
    int batch = 8;    // K
    int k_pairs = 4;  // top-k visual-textual pairs

    void validate() const {
        if (tau <= 0.0) throw std::invalid_argument("AlignmentConfig: tau must be positive");
        if (batch < 1) throw std::invalid_argument("AlignmentConfig: batch must be >= 1");
        if (k_pairs < 1) throw std::invalid_argument("AlignmentConfig: k_pairs must be >= 1");
    }
};

// Symmetric contrastive loss over two batches of pooled embeddings (K x p).
// Row i of each batch is a positive pair; all other rows are negatives.
// Returns 0.5 * (L_d->e + L_e->d); zero iff each softmax puts mass 1 on its
// positive, which includes every K=1 batch.
inline Var contrastive_loss(const Var& e_batch, const Var& d_batch, double tau) {
    if (tau <= 0.0) throw std::invalid_argument("contrastive_loss: tau must be positive");
    const Tensor& ev = e_batch.value();
    const Tensor& dv = d_batch.value();
    if (ev.rank() != 2 || dv.rank() != 2 || ev.dim(0) != dv.dim(0) || ev.dim(1) != dv.dim(1))
        throw std::invalid_argument("contrastive_loss: batch shape mismatch " + ev.shape_str() +
                                    " vs " + dv.shape_str());
    int K = ev.dim(0);
    if (K < 1) throw std::invalid_argument("contrastive_loss: empty batch");

    Var sims = mul_scalar(matmul(e_batch, transpose2d(d_batch)), 1.0 / tau);  // (K x K)
    Tensor eye({K, K});
    for (int i = 0; i < K; ++i) eye.at(i, i) = 1.0;
    Var diag_total = sum(mul(sims, Var::constant(std::move(eye))));
    Var lse_rows = sum(logsumexp_rows(sims));
    Var lse_cols = sum(logsumexp_rows(transpose2d(sims)));
    // 0.5 * ( (1/K)(sum lse_rows - sum diag) + (1/K)(sum lse_cols - sum diag) )
    Var total = sub(add(lse_rows, lse_cols), mul_scalar(diag_total, 2.0));
    return mul_scalar(total, 0.5 / K);
}

// Mean over grid locations of the L1 distance between the depth features and
// the stop-gradient RGB features. Gradient reaches only d's producer.
inline Var l1_align_loss(const FeatureMap& d, const FeatureMap& e) {
    if (d.h != e.h || d.w != e.w || d.channels != e.channels)
        throw std::invalid_argument("l1_align_loss: grid shape mismatch");
    Var diff = sub(d.grid, e.grid.detach());
    return mul_scalar(sum(abs_(diff)), 1.0 / d.positions());
}

// Element-wise max over the grids; pooled embedding recomputed from the fused
// grid. Idempotent, commutative, monotone.
inline FeatureMap fuse_vg(const FeatureMap& e, const FeatureMap& d) {
    if (d.h != e.h || d.w != e.w || d.channels != e.channels)
        throw std::invalid_argument("fuse_vg: grid shape mismatch");
    return make_feature_map(maximum(e.grid, d.grid), e.h, e.w);
}

// Index pairs (text i, visual j) with the k largest cosine similarities over
// all n_t x n_v combinations. Sorted by descending similarity; exact ties
// break lexicographically on (i, j).
inline std::vector<std::pair<int, int>> select_topk_pairs(const TokenSet& text,
                                                          const TokenSet& visual, int k) {
    int nt = text.count(), nv = visual.count();
    if (k < 1 || k > nt * nv)
        throw std::invalid_argument("select_topk_pairs: k=" + std::to_string(k) +
                                    " outside [1, " + std::to_string(nt * nv) + "]");
    const Tensor& tv = text.tokens.value();
    const Tensor& vv = visual.tokens.value();
    int p = tv.dim(1);
    auto norm_of = [p](const Tensor& m, int row) {
        double s = 0;
        for (int c = 0; c < p; ++c) s += m.at(row, c) * m.at(row, c);
        return std::max(std::sqrt(s), 1e-12);
    };
    struct Scored {
        double sim;
        int i, j;
    };
    std::vector<Scored> all;
    all.reserve(static_cast<size_t>(nt) * nv);
    for (int i = 0; i < nt; ++i)
        for (int j = 0; j < nv; ++j) {
            double dot = 0;
            for (int c = 0; c < p; ++c) dot += tv.at(i, c) * vv.at(j, c);
            all.push_back({dot / (norm_of(tv, i) * norm_of(vv, j)), i, j});
        }
    std::sort(all.begin(), all.end(), [](const Scored& a, const Scored& b) {
        if (a.sim != b.sim) return a.sim > b.sim;
        if (a.i != b.i) return a.i < b.i;
        return a.j < b.j;
    });
    std::vector<std::pair<int, int>> out;
    for (int r = 0; r < k; ++r) out.emplace_back(all[static_cast<size_t>(r)].i, all[static_cast<size_t>(r)].j);
    return out;
}

// Mean over pairs of the L1 distance between the adapted visual token and its
// paired language token. Language tokens are targets (detached); gradient
// trains the adapter and the prompt encoder feeding `visual`.
inline Var vl_align_loss(const std::vector<std::pair<int, int>>& pairs, const TokenSet& text,
                         const TokenSet& visual, const V2LAdapter& adapter) {
    if (pairs.empty()) throw std::invalid_argument("vl_align_loss: empty pair list");
    TokenSet adapted = adapter.forward(visual);
    int k = static_cast<int>(pairs.size());
    int nt = text.count(), nv = visual.count();
    Tensor sel_t({k, nt}), sel_v({k, nv});
    for (int r = 0; r < k; ++r) {
        auto [i, j] = pairs[static_cast<size_t>(r)];
        if (i < 0 || i >= nt || j < 0 || j >= nv)
            throw std::invalid_argument("vl_align_loss: pair index out of range");
        sel_t.at(r, i) = 1.0;
        sel_v.at(r, j) = 1.0;
    }
    Var picked_adapted = matmul(Var::constant(std::move(sel_v)), adapted.tokens);
    Var picked_text = matmul(Var::constant(std::move(sel_t)), text.tokens.detach());
    return mul_scalar(sum(abs_(sub(picked_adapted, picked_text))), 1.0 / k);
}

// Concatenation [adapted ; text], the visual-language prompt.
inline TokenSet build_vl_prompt(const TokenSet& adapted, const TokenSet& text) {
    if (adapted.count() == 0 || text.count() == 0)
        throw std::invalid_argument("build_vl_prompt: empty token set");
    if (adapted.dim() != text.dim())
        throw std::invalid_argument("build_vl_prompt: token dimension mismatch");
    return TokenSet{concat_rows({adapted.tokens, text.tokens}), TokenKind::VlFused};
}

}  // namespace aquatrack
