#include <catch2/catch_amalgamated.hpp>

#include "aquatrack/align/losses.hpp"
#include "gradcheck.hpp"

using namespace aquatrack;
using aquatrack::testing::grad_check;

namespace {

// Direct double-loop evaluation of the two directional contrastive terms.
// Test-side oracle, independent of the log-sum-exp implementation path.
double contrastive_bruteforce(const Tensor& e, const Tensor& d, double tau) {
    int K = e.dim(0), p = e.dim(1);
    auto dot = [&](const Tensor& a, int i, const Tensor& b, int j) {
        double s = 0;
        for (int c = 0; c < p; ++c) s += a.at(i, c) * b.at(j, c);
        return s;
    };
    double l_de = 0, l_ed = 0;
    for (int i = 0; i < K; ++i) {
        double num = std::exp(dot(e, i, d, i) / tau);
        double den = 0;
        for (int j = 0; j < K; ++j) den += std::exp(dot(e, i, d, j) / tau);
        l_de += -std::log(num / den);

        double num2 = std::exp(dot(d, i, e, i) / tau);
        double den2 = 0;
        for (int j = 0; j < K; ++j) den2 += std::exp(dot(d, i, e, j) / tau);
        l_ed += -std::log(num2 / den2);
    }
    return 0.5 * (l_de / K + l_ed / K);
}

Tensor unit_rows(Rng& rng, int k, int p) {
    Tensor t = rng.normal_tensor({k, p}, 1.0);
    for (int i = 0; i < k; ++i) {
        double n = 0;
        for (int c = 0; c < p; ++c) n += t.at(i, c) * t.at(i, c);
        n = std::sqrt(n);
        for (int c = 0; c < p; ++c) t.at(i, c) /= n;
    }
    return t;
}

FeatureMap grid_map(Var grid, int h, int w) { return make_feature_map(std::move(grid), h, w); }

}  // namespace

TEST_CASE("contrastive loss: single-pair batch is exactly zero") {
    Rng rng(1);
    Tensor e = unit_rows(rng, 1, 6), d = unit_rows(rng, 1, 6);
    Var loss = contrastive_loss(Var::constant(e), Var::constant(d), 0.07);
    CHECK(loss.value().item() == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("contrastive loss: K=2 orthonormal pairs at tau=1") {
    // <e_i, d_j> = 1 if i == j else 0  ->  each direction log(1 + e^-1).
    Tensor e({2, 2}, {1, 0, 0, 1});
    Tensor d({2, 2}, {1, 0, 0, 1});
    Var loss = contrastive_loss(Var::constant(e), Var::constant(d), 1.0);
    double expect = std::log(1.0 + std::exp(-1.0));
    CHECK(loss.value().item() == Catch::Approx(expect).margin(1e-12));
    CHECK(loss.value().item() == Catch::Approx(0.31326168751822286).margin(1e-10));
}

TEST_CASE("contrastive loss matches the brute-force evaluator for K <= 8") {
    Rng rng(2);
    for (int K = 1; K <= 8; ++K)
        for (int rep = 0; rep < 6; ++rep) {
            Tensor e = unit_rows(rng, K, 5), d = unit_rows(rng, K, 5);
            double tau = rng.uniform(0.05, 1.5);
            Var loss = contrastive_loss(Var::constant(e), Var::constant(d), tau);
            double expect = contrastive_bruteforce(e, d, tau);
            CHECK(loss.value().item() == Catch::Approx(expect).epsilon(1e-10));
            CHECK(loss.value().item() >= -1e-12);
        }
}

TEST_CASE("contrastive loss: joint permutation invariance and modality symmetry") {
    Rng rng(3);
    int K = 5, p = 4;
    Tensor e = unit_rows(rng, K, p), d = unit_rows(rng, K, p);
    std::vector<int> perm = {3, 0, 4, 1, 2};
    Tensor ep({K, p}), dp({K, p});
    for (int i = 0; i < K; ++i)
        for (int c = 0; c < p; ++c) {
            ep.at(i, c) = e.at(perm[static_cast<size_t>(i)], c);
            dp.at(i, c) = d.at(perm[static_cast<size_t>(i)], c);
        }
    double base = contrastive_loss(Var::constant(e), Var::constant(d), 0.2).value().item();
    double permuted = contrastive_loss(Var::constant(ep), Var::constant(dp), 0.2).value().item();
    CHECK(base == Catch::Approx(permuted).epsilon(1e-12));

    double swapped = contrastive_loss(Var::constant(d), Var::constant(e), 0.2).value().item();
    CHECK(base == Catch::Approx(swapped).epsilon(1e-12));
}

TEST_CASE("contrastive loss rejects bad inputs") {
    Rng rng(4);
    Tensor e = unit_rows(rng, 3, 4), d = unit_rows(rng, 2, 4);
    CHECK_THROWS_AS(contrastive_loss(Var::constant(e), Var::constant(d), 0.07),
                    std::invalid_argument);
    Tensor d2 = unit_rows(rng, 3, 4);
    CHECK_THROWS_AS(contrastive_loss(Var::constant(e), Var::constant(d2), 0.0),
                    std::invalid_argument);
    CHECK_THROWS_AS(contrastive_loss(Var::constant(e), Var::constant(d2), -1.0),
                    std::invalid_argument);
}

TEST_CASE("contrastive loss gradient through pooled embeddings") {
    Rng rng(5);
    ParamStore ps;
    Var& e = ps.create("e", rng.normal_tensor({4, 5}, 1.0));
    Var& d = ps.create("d", rng.normal_tensor({4, 5}, 1.0));
    auto res = grad_check(ps, [&] {
        // Normalize inside so the gradient path covers the cosine step.
        std::vector<Var> er, dr;
        for (int i = 0; i < 4; ++i) {
            er.push_back(l2_normalize(slice_rows(e, i, i + 1)));
            dr.push_back(l2_normalize(slice_rows(d, i, i + 1)));
        }
        return contrastive_loss(concat_rows(er), concat_rows(dr), 0.1);
    }, rng);
    INFO(res.worst_where);
    CHECK(res.pass);
}

TEST_CASE("l1 align loss: zero at equality, closed form for offsets, stop-gradient") {
    Rng rng(6);
    int h = 2, w = 3, p = 4;
    Tensor base = rng.normal_tensor({h * w, p}, 1.0);

    ParamStore ps;
    Var& dvar = ps.create("d", base);
    Var& evar = ps.create("e", base);
    FeatureMap dfm = grid_map(dvar, h, w), efm = grid_map(evar, h, w);
    Var zero_loss = l1_align_loss(dfm, efm);
    CHECK(zero_loss.value().item() == Catch::Approx(0.0).margin(1e-12));

    // d = e + per-channel constant offset -> mean per-location L1 = sum_c |c|.
    Tensor offs({p}, {0.5, -1.25, 0.0, 2.0});
    Tensor shifted = base;
    for (int r = 0; r < h * w; ++r)
        for (int c = 0; c < p; ++c) shifted.at(r, c) += offs[c];
    FeatureMap dfm2 = grid_map(Var::constant(shifted), h, w);
    Var off_loss = l1_align_loss(dfm2, efm);
    CHECK(off_loss.value().item() == Catch::Approx(0.5 + 1.25 + 0.0 + 2.0).margin(1e-12));

    // Gradient: zero into e (stop-gradient side), finite-difference match on d.
    ps.zero_grads();
    Tensor d2 = base;
    for (int64_t i = 0; i < d2.size(); ++i) d2[i] += 0.1 * (i % 3);
    dvar.mutable_value() = d2;
    Var loss = l1_align_loss(grid_map(dvar, h, w), grid_map(evar, h, w));
    loss.backward();
    Tensor eg = evar.grad_or_zero();
    for (int64_t i = 0; i < eg.size(); ++i) CHECK(eg[i] == 0.0);

    // Finite differences only make sense on the differentiated (d) side; the
    // e side is a stop-gradient by contract, checked exactly above.
    ParamStore ps_d;
    Var& d_only = ps_d.create("d", d2);
    auto res = grad_check(ps_d, [&] {
        return l1_align_loss(grid_map(d_only, h, w), grid_map(evar, h, w));
    }, rng);
    INFO(res.worst_where);
    CHECK(res.pass);

    FeatureMap small = grid_map(Var::constant(rng.normal_tensor({2, p}, 1.0)), 1, 2);
    CHECK_THROWS_AS(l1_align_loss(small, efm), std::invalid_argument);
}

TEST_CASE("fuse_vg: idempotent, commutative, dominating, monotone") {
    Rng rng(7);
    int h = 2, w = 2, p = 3;
    Tensor xa = rng.normal_tensor({h * w, p}, 1.0);
    Tensor xb = rng.normal_tensor({h * w, p}, 1.0);
    FeatureMap fa = grid_map(Var::constant(xa), h, w);
    FeatureMap fb = grid_map(Var::constant(xb), h, w);

    FeatureMap faa = fuse_vg(fa, fa);
    for (int64_t i = 0; i < xa.size(); ++i) CHECK(faa.grid.value()[i] == xa[i]);

    FeatureMap fab = fuse_vg(fa, fb), fba = fuse_vg(fb, fa);
    for (int64_t i = 0; i < xa.size(); ++i) {
        CHECK(fab.grid.value()[i] == fba.grid.value()[i]);
        CHECK(fab.grid.value()[i] >= xa[i]);
        CHECK(fab.grid.value()[i] >= xb[i]);
    }

    // Monotone: raising an input never lowers the fusion.
    Tensor xc = xa;
    for (int64_t i = 0; i < xc.size(); ++i) xc[i] += 0.3;
    FeatureMap fc = grid_map(Var::constant(xc), h, w);
    FeatureMap fcb = fuse_vg(fc, fb);
    for (int64_t i = 0; i < xa.size(); ++i) CHECK(fcb.grid.value()[i] >= fab.grid.value()[i]);

    // Pooled is recomputed from the fused grid.
    double nrm = 0;
    for (int64_t i = 0; i < fab.pooled.value().size(); ++i)
        nrm += fab.pooled.value()[i] * fab.pooled.value()[i];
    CHECK(std::sqrt(nrm) == Catch::Approx(1.0).margin(1e-9));
}

TEST_CASE("select_topk_pairs: diagonal case, full case, enumeration oracle") {
    int p = 6;
    SECTION("orthonormal identical token sets pick the diagonal") {
        Tensor t({4, p});
        for (int i = 0; i < 4; ++i) t.at(i, i) = 1.0;
        TokenSet text{Var::constant(t), TokenKind::Language};
        TokenSet vis{Var::constant(t), TokenKind::VisualPrompt};
        auto pairs = select_topk_pairs(text, vis, 4);
        REQUIRE(pairs.size() == 4);
        for (auto [i, j] : pairs) CHECK(i == j);
    }
    SECTION("k equal to n_t*n_v returns every pair") {
        Rng rng(8);
        TokenSet text{Var::constant(rng.normal_tensor({3, p}, 1.0)), TokenKind::Language};
        TokenSet vis{Var::constant(rng.normal_tensor({4, p}, 1.0)), TokenKind::VisualPrompt};
        auto pairs = select_topk_pairs(text, vis, 12);
        CHECK(pairs.size() == 12);
        std::set<std::pair<int, int>> unique(pairs.begin(), pairs.end());
        CHECK(unique.size() == 12);
    }
    SECTION("matches an independent max-extraction oracle on random tables") {
        Rng rng(9);
        for (int rep = 0; rep < 30; ++rep) {
            int nt = rng.uniform_int(1, 6), nv = rng.uniform_int(1, 6);
            Tensor tt = rng.normal_tensor({nt, p}, 1.0);
            Tensor vt = rng.normal_tensor({nv, p}, 1.0);
            TokenSet text{Var::constant(tt), TokenKind::Language};
            TokenSet vis{Var::constant(vt), TokenKind::VisualPrompt};
            int k = rng.uniform_int(1, nt * nv);
            auto got = select_topk_pairs(text, vis, k);

            // Oracle: repeatedly extract the best remaining pair by cosine.
            auto cosine = [&](int i, int j) {
                double dot = 0, na = 0, nb = 0;
                for (int c = 0; c < p; ++c) {
                    dot += tt.at(i, c) * vt.at(j, c);
                    na += tt.at(i, c) * tt.at(i, c);
                    nb += vt.at(j, c) * vt.at(j, c);
                }
                return dot / (std::sqrt(na) * std::sqrt(nb));
            };
            std::set<std::pair<int, int>> taken;
            std::vector<std::pair<int, int>> expect;
            for (int r = 0; r < k; ++r) {
                double best = -1e300;
                std::pair<int, int> arg{-1, -1};
                for (int i = 0; i < nt; ++i)
                    for (int j = 0; j < nv; ++j) {
                        if (taken.count({i, j})) continue;
                        double s = cosine(i, j);
                        if (s > best) {
                            best = s;
                            arg = {i, j};
                        }
                    }
                taken.insert(arg);
                expect.push_back(arg);
            }
            INFO("nt=" << nt << " nv=" << nv << " k=" << k);
            CHECK(got == expect);
        }
    }
    SECTION("k out of range rejected") {
        Rng rng(10);
        TokenSet text{Var::constant(rng.normal_tensor({2, p}, 1.0)), TokenKind::Language};
        TokenSet vis{Var::constant(rng.normal_tensor({2, p}, 1.0)), TokenKind::VisualPrompt};
        CHECK_THROWS_AS(select_topk_pairs(text, vis, 0), std::invalid_argument);
        CHECK_THROWS_AS(select_topk_pairs(text, vis, 5), std::invalid_argument);
    }
}

TEST_CASE("vl_align_loss: zero at match, closed form, gradient check") {
    Rng rng(11);
    EncoderConfig cfg;
    cfg.feature_dim = 8;
    cfg.grid_h = cfg.grid_w = 2;
    cfg.layers = 2;
    cfg.base_channels = 4;
    int p = cfg.feature_dim;

    ParamStore ps;
    V2LAdapter ad(ps, "adapter", cfg, rng);
    Tensor eye({p, p});
    for (int i = 0; i < p; ++i) eye.at(i, i) = 1.0;

    SECTION("identity adapter on matched pairs gives zero") {
        ps.at("adapter.fc1.w").mutable_value() = eye;
        ps.at("adapter.fc2.w").mutable_value() = eye;
        Tensor toks = rng.normal_tensor({3, p}, 1.0);
        TokenSet text{Var::constant(toks), TokenKind::Language};
        TokenSet vis{Var::constant(toks), TokenKind::VisualPrompt};
        std::vector<std::pair<int, int>> pairs = {{0, 0}, {1, 1}, {2, 2}};
        Var loss = vl_align_loss(pairs, text, vis, ad);
        CHECK(loss.value().item() == Catch::Approx(0.0).margin(1e-12));
    }
    SECTION("single pair with constant offset gives sum |c|") {
        ps.at("adapter.fc1.w").mutable_value() = eye;
        ps.at("adapter.fc2.w").mutable_value() = eye;
        Tensor c({p});
        for (int i = 0; i < p; ++i) c[i] = 0.25 * (i - 3);
        Tensor vis_t = rng.normal_tensor({2, p}, 1.0);
        Tensor text_t = vis_t;
        for (int i = 0; i < p; ++i) text_t.at(1, i) += c[i];  // T_1 = V_1 + c
        TokenSet text{Var::constant(text_t), TokenKind::Language};
        TokenSet vis{Var::constant(vis_t), TokenKind::VisualPrompt};
        double expect = 0;
        for (int i = 0; i < p; ++i) expect += std::abs(c[i]);
        Var loss = vl_align_loss({{1, 1}}, text, vis, ad);
        CHECK(loss.value().item() == Catch::Approx(expect).margin(1e-12));
    }
    SECTION("gradient vs finite differences") {
        Tensor text_t = rng.normal_tensor({4, p}, 1.0);
        Var& vis_leaf = ps.create("vis", rng.normal_tensor({3, p}, 1.0));
        TokenSet text{Var::constant(text_t), TokenKind::Language};
        std::vector<std::pair<int, int>> pairs = {{0, 1}, {2, 0}, {3, 2}};
        auto res = grad_check(ps, [&] {
            TokenSet vis{vis_leaf, TokenKind::VisualPrompt};
            return vl_align_loss(pairs, text, vis, ad);
        }, rng, {.max_coords_per_param = 20});
        INFO(res.worst_where);
        CHECK(res.pass);
    }
    SECTION("empty pair list rejected") {
        Tensor toks = rng.normal_tensor({2, p}, 1.0);
        TokenSet text{Var::constant(toks), TokenKind::Language};
        TokenSet vis{Var::constant(toks), TokenKind::VisualPrompt};
        CHECK_THROWS_AS(vl_align_loss({}, text, vis, ad), std::invalid_argument);
    }
}

TEST_CASE("build_vl_prompt: concatenation contract") {
    Rng rng(12);
    int p = 8;
    Tensor a = rng.normal_tensor({4, p}, 1.0);
    Tensor t = rng.normal_tensor({5, p}, 1.0);
    TokenSet adapted{Var::constant(a), TokenKind::Adapted};
    TokenSet text{Var::constant(t), TokenKind::Language};

    TokenSet vl = build_vl_prompt(adapted, text);
    CHECK(vl.kind == TokenKind::VlFused);
    CHECK(vl.count() == 9);
    for (int i = 0; i < 4; ++i)
        for (int c = 0; c < p; ++c) CHECK(vl.tokens.value().at(i, c) == a.at(i, c));
    for (int i = 0; i < 5; ++i)
        for (int c = 0; c < p; ++c) CHECK(vl.tokens.value().at(4 + i, c) == t.at(i, c));

    TokenSet vl2 = build_vl_prompt(adapted, text);
    for (int64_t i = 0; i < vl.tokens.value().size(); ++i)
        CHECK(vl.tokens.value()[i] == vl2.tokens.value()[i]);

    TokenSet empty{Var::constant(Tensor({0, p})), TokenKind::Adapted};
    CHECK_THROWS_AS(build_vl_prompt(empty, text), std::invalid_argument);
    TokenSet narrow{Var::constant(Tensor({2, p / 2})), TokenKind::Adapted};
    CHECK_THROWS_AS(build_vl_prompt(narrow, text), std::invalid_argument);
}
