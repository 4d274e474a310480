#include <catch2/catch_amalgamated.hpp>

#include "aquatrack/model/encoders.hpp"
#include "gradcheck.hpp"

using namespace aquatrack;
using aquatrack::testing::grad_check;

namespace {

EncoderConfig tiny_config() {
    EncoderConfig cfg;
    cfg.feature_dim = 8;
    cfg.grid_h = cfg.grid_w = 2;
    cfg.layers = 2;  // 8x8 images
    cfg.base_channels = 4;
    return cfg;
}

}  // namespace

TEST_CASE("encode_rgb: constant input yields a constant grid with zeroed head") {
    Rng rng(1);
    ParamStore ps;
    auto cfg = tiny_config();
    ConvEncoder enc(ps, "enc", 3, cfg, rng);
    ps.at("enc.proj.w").mutable_value() = Tensor({4 * 2, 8});  // zero final linear layer
    ps.at("enc.proj.b").mutable_value() = Tensor({8});         // zero bias

    FeatureMap fm = enc.forward(Tensor({8, 8, 3}));
    for (int r = 0; r < fm.positions(); ++r)
        for (int c = 0; c < fm.channels; ++c)
            CHECK(fm.grid.value().at(r, c) == fm.grid.value().at(0, c));
    // Pooled is the (safe) normalization of that constant vector: zero here.
    for (int c = 0; c < fm.channels; ++c) CHECK(fm.pooled.value()[c] == 0.0);

    // Non-degenerate head: constant bias row, unit-norm pooled.
    Tensor b({8});
    for (int i = 0; i < 8; ++i) b[i] = 0.5 + 0.1 * i;
    ps.at("enc.proj.b").mutable_value() = b;
    FeatureMap fm2 = enc.forward(Tensor({8, 8, 3}));
    double nrm = 0;
    for (int c = 0; c < fm2.channels; ++c) nrm += fm2.pooled.value()[c] * fm2.pooled.value()[c];
    CHECK(std::sqrt(nrm) == Catch::Approx(1.0).margin(1e-9));
    double bn = 0;
    for (int i = 0; i < 8; ++i) bn += b[i] * b[i];
    bn = std::sqrt(bn);
    for (int c = 0; c < fm2.channels; ++c)
        CHECK(fm2.pooled.value()[c] == Catch::Approx(b[c] / bn).margin(1e-12));
}

TEST_CASE("encoders are deterministic and satisfy shape contracts") {
    Rng rng(2);
    ParamStore ps;
    auto cfg = tiny_config();
    ConvEncoder rgb(ps, "rgb", 3, cfg, rng);
    ConvEncoder dep(ps, "dep", 1, cfg, rng);

    Rng data(3);
    Tensor img = data.uniform_tensor({8, 8, 3}, 0, 1);
    Tensor dmap = data.uniform_tensor({8, 8, 1}, 0.1, 1);

    auto a = rgb.forward(img), b = rgb.forward(img);
    for (int64_t i = 0; i < a.grid.value().size(); ++i)
        CHECK(a.grid.value()[i] == b.grid.value()[i]);
    CHECK(a.h == 2);
    CHECK(a.w == 2);
    CHECK(a.channels == 8);

    auto d1 = dep.forward(dmap), d2 = dep.forward(dmap);
    for (int64_t i = 0; i < d1.pooled.value().size(); ++i)
        CHECK(d1.pooled.value()[i] == d2.pooled.value()[i]);

    double nrm = 0;
    for (int64_t i = 0; i < a.pooled.value().size(); ++i)
        nrm += a.pooled.value()[i] * a.pooled.value()[i];
    CHECK(std::sqrt(nrm) == Catch::Approx(1.0).margin(1e-6));

    CHECK_THROWS_AS(rgb.forward(Tensor({8, 8, 1})), std::invalid_argument);
    CHECK_THROWS_AS(rgb.forward(Tensor({16, 8, 3})), std::invalid_argument);
}

TEST_CASE("encoder gradients: weights and input match finite differences") {
    Rng rng(5);
    auto cfg = tiny_config();
    for (int channels : {3, 1}) {
        ParamStore ps;
        ConvEncoder enc(ps, "enc", channels, cfg, rng);
        Var& input = ps.create("input", rng.uniform_tensor({8, 8, channels}, 0, 1));
        Tensor probe = rng.normal_tensor({4, 8}, 1.0);
        Tensor probe_p = rng.normal_tensor({1, 8}, 1.0);
        auto res = grad_check(ps, [&] {
            FeatureMap fm = enc.forward(input);
            return add(sum(mul(fm.grid, Var::constant(probe))),
                       sum(mul(fm.pooled, Var::constant(probe_p))));
        }, rng, {.max_coords_per_param = 14});
        INFO("channels=" << channels << " " << res.worst_where);
        CHECK(res.pass);
    }
}

TEST_CASE("encode_prompt: determinism, token count, sensitivity, errors") {
    Rng rng(7);
    ParamStore ps;
    auto cfg = tiny_config();
    ConvEncoder enc(ps, "enc", 3, cfg, rng);
    PromptEncoder pe(ps, "prompt", cfg, rng);
    Tensor img = rng.uniform_tensor({8, 8, 3}, 0, 1);
    FeatureMap fm = enc.forward(img);

    Box full{0, 0, 8, 8}, quarter{0, 0, 4, 4};
    TokenSet t1 = pe.forward(full, fm), t2 = pe.forward(full, fm);
    CHECK(t1.count() == cfg.n_visual_tokens);
    CHECK(t1.kind == TokenKind::VisualPrompt);
    for (int64_t i = 0; i < t1.tokens.value().size(); ++i)
        CHECK(t1.tokens.value()[i] == t2.tokens.value()[i]);

    TokenSet tq = pe.forward(quarter, fm);
    bool any_diff = false;
    for (int64_t i = 0; i < t1.tokens.value().size(); ++i)
        if (t1.tokens.value()[i] != tq.tokens.value()[i]) any_diff = true;
    CHECK(any_diff);

    CHECK_THROWS_AS(pe.forward(Box{0, 0, 0, 4}, fm), std::invalid_argument);
    CHECK_THROWS_AS(pe.forward(Box{6, 6, 4, 4}, fm), std::invalid_argument);
}

TEST_CASE("encode_prompt gradients flow into weights and context features") {
    Rng rng(11);
    ParamStore ps;
    auto cfg = tiny_config();
    ConvEncoder enc(ps, "enc", 3, cfg, rng);
    PromptEncoder pe(ps, "prompt", cfg, rng);
    Var& input = ps.create("input", rng.uniform_tensor({8, 8, 3}, 0, 1));
    Tensor probe = rng.normal_tensor({cfg.n_visual_tokens, 8}, 1.0);
    auto res = grad_check(ps, [&] {
        TokenSet t = pe.forward(Box{1, 1, 5, 4}, enc.forward(input));
        return sum(mul(t.tokens, Var::constant(probe)));
    }, rng, {.max_coords_per_param = 12});
    INFO(res.worst_where);
    CHECK(res.pass);
}

TEST_CASE("encode_language: tokenizer contract and stable hashing") {
    Rng rng(13);
    ParamStore ps;
    auto cfg = tiny_config();
    LanguageEncoder le(ps, "lang", cfg, rng);

    TokenSet t = le.forward("a red circle moving left");
    CHECK(t.count() == 5);
    CHECK(t.kind == TokenKind::Language);

    TokenSet t2 = le.forward("a red circle moving left");
    for (int64_t i = 0; i < t.tokens.value().size(); ++i)
        CHECK(t.tokens.value()[i] == t2.tokens.value()[i]);

    // Case folding and whitespace runs.
    auto idx1 = le.token_indices("A   Red circle moving LEFT");
    auto idx2 = le.token_indices("a red circle moving left");
    CHECK(idx1 == idx2);

    // Out-of-vocabulary words deterministically land in the same hash bucket.
    int vocab = static_cast<int>(language_vocabulary().size());
    auto oov1 = le.token_indices("barracuda");
    auto oov2 = le.token_indices("barracuda");
    CHECK(oov1 == oov2);
    CHECK(oov1[0] >= vocab);
    CHECK(oov1[0] < vocab + cfg.hash_buckets);

    CHECK_THROWS_AS(le.forward(""), std::invalid_argument);
    CHECK_THROWS_AS(le.forward("   "), std::invalid_argument);

    // Truncation, never padding.
    std::string long_text;
    for (int i = 0; i < 40; ++i) long_text += "word" + std::to_string(i) + " ";
    CHECK(le.forward(long_text).count() == cfg.max_text_tokens);
}

TEST_CASE("adapt_v2l: identity init, zero weights, gradient check") {
    Rng rng(17);
    ParamStore ps;
    auto cfg = tiny_config();
    V2LAdapter ad(ps, "adapter", cfg, rng);
    int p = cfg.feature_dim;

    Tensor vis = rng.normal_tensor({3, p}, 1.0);
    TokenSet visual{Var::constant(vis), TokenKind::VisualPrompt};

    SECTION("identity-initialized adapter reproduces its input") {
        Tensor eye({p, p});
        for (int i = 0; i < p; ++i) eye.at(i, i) = 1.0;
        ps.at("adapter.fc1.w").mutable_value() = eye;
        ps.at("adapter.fc2.w").mutable_value() = eye;
        ps.at("adapter.fc1.b").mutable_value() = Tensor({p});
        ps.at("adapter.fc2.b").mutable_value() = Tensor({p});
        TokenSet out = ad.forward(visual);
        CHECK(out.kind == TokenKind::Adapted);
        CHECK(out.count() == 3);
        for (int64_t i = 0; i < vis.size(); ++i)
            CHECK(out.tokens.value()[i] == Catch::Approx(vis[i]).margin(1e-12));
    }
    SECTION("zero weights produce zero tokens") {
        ps.at("adapter.fc1.w").mutable_value() = Tensor({p, p});
        ps.at("adapter.fc1.b").mutable_value() = Tensor({p});
        ps.at("adapter.fc2.w").mutable_value() = Tensor({p, p});
        ps.at("adapter.fc2.b").mutable_value() = Tensor({p});
        TokenSet out = ad.forward(visual);
        for (int64_t i = 0; i < out.tokens.value().size(); ++i)
            CHECK(out.tokens.value()[i] == 0.0);
    }
    SECTION("downstream L1 gradient matches finite differences") {
        Tensor target = rng.normal_tensor({3, p}, 1.0);
        auto res = grad_check(ps, [&] {
            TokenSet out = ad.forward(visual);
            return sum(abs_(sub(out.tokens, Var::constant(target))));
        }, rng, {.max_coords_per_param = 20});
        INFO(res.worst_where);
        CHECK(res.pass);
    }
    SECTION("rejects non-visual token kinds") {
        TokenSet lang{Var::constant(vis), TokenKind::Language};
        CHECK_THROWS_AS(ad.forward(lang), std::invalid_argument);
    }
}
