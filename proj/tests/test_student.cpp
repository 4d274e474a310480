#include <catch2/catch_amalgamated.hpp>

#include "aquatrack/data/generate.hpp"
#include "aquatrack/track/student.hpp"
#include "gradcheck.hpp"

using namespace aquatrack;
using aquatrack::testing::grad_check;

namespace {

TrackerConfig tiny_tracker() {
    TrackerConfig cfg;
    cfg.enc.feature_dim = 16;
    cfg.enc.grid_h = cfg.enc.grid_w = 2;
    cfg.enc.layers = 3;
    cfg.enc.base_channels = 4;
    cfg.memory_capacity = 3;
    cfg.attention_layers = 2;
    return cfg;
}

SceneConfig tiny_scene(int n_frames) {
    SceneConfig sc;
    sc.width = sc.height = 16;
    sc.n_frames = n_frames;
    sc.n_distractors = 1;
    sc.min_radius = 2.5;
    sc.max_radius = 4.0;
    sc.n_rocks = 0;
    return sc;
}

FeatureMap grid_map(Var grid, int h, int w) { return make_feature_map(std::move(grid), h, w); }

}  // namespace

TEST_CASE("kd_vg_loss: identity, closed form, stop-gradient into teacher") {
    Rng rng(1);
    int h = 2, w = 3, p = 5;
    Tensor base = rng.normal_tensor({h * w, p}, 1.0);

    FeatureMap fs = grid_map(Var::constant(base), h, w);
    FeatureMap fvg = grid_map(Var::constant(base), h, w);
    CHECK(kd_vg_loss(fs, fvg).value().item() == Catch::Approx(0.0).margin(1e-12));

    double c = 0.7;
    Tensor shifted = base;
    for (int64_t i = 0; i < shifted.size(); ++i) shifted[i] += c;
    FeatureMap fs2 = grid_map(Var::constant(shifted), h, w);
    CHECK(kd_vg_loss(fs2, fvg).value().item() == Catch::Approx(c * c * p).margin(1e-10));

    ParamStore ps;
    Var& teacher_leaf = ps.create("teacher", base);
    Var& student_leaf = ps.create("student", shifted);
    ps.zero_grads();
    kd_vg_loss(grid_map(student_leaf, h, w), grid_map(teacher_leaf, h, w)).backward();
    Tensor tg = teacher_leaf.grad_or_zero();
    for (int64_t i = 0; i < tg.size(); ++i) CHECK(tg[i] == 0.0);
    Tensor sg = student_leaf.grad_or_zero();
    bool any = false;
    for (int64_t i = 0; i < sg.size(); ++i) any = any || sg[i] != 0.0;
    CHECK(any);

    FeatureMap small = grid_map(Var::constant(rng.normal_tensor({2, p}, 1.0)), 1, 2);
    CHECK_THROWS_AS(kd_vg_loss(small, fvg), std::invalid_argument);
}

TEST_CASE("kd_attention_loss: identity, hand arithmetic, errors name the layer") {
    Tensor uniform({2, 2}, {0.5, 0.5, 0.5, 0.5});
    Tensor ident({2, 2}, {1.0, 0.0, 0.0, 1.0});
    AttentionTrace t{{Var::constant(uniform)}};
    AttentionTrace s_same{{Var::constant(uniform)}};
    AttentionTrace s_id{{Var::constant(ident)}};

    CHECK(kd_attention_loss(t, s_same).value().item() == Catch::Approx(0.0).margin(1e-12));
    CHECK(kd_attention_loss(t, s_id).value().item() == Catch::Approx(1.0).margin(1e-12));
    CHECK(kd_attention_loss(t, s_id).value().item() >= 0.0);

    AttentionTrace two{{Var::constant(uniform), Var::constant(uniform)}};
    CHECK_THROWS_WITH(kd_attention_loss(two, s_same),
                      Catch::Matchers::ContainsSubstring("layer count"));
    AttentionTrace wide{{Var::constant(Tensor({2, 3}))}};
    CHECK_THROWS_WITH(kd_attention_loss(t, wide), Catch::Matchers::ContainsSubstring("layer 0"));
}

TEST_CASE("kd_vla_loss and kd_mask_loss closed forms") {
    Rng rng(2);
    int p = 6;
    Tensor tok = rng.normal_tensor({1, p}, 1.0);
    Tensor c({1, p});
    for (int i = 0; i < p; ++i) c.at(0, i) = 0.3 * (i - 2);
    Tensor tok_off = tok;
    for (int i = 0; i < p; ++i) tok_off.at(0, i) += c.at(0, i);
    TokenSet a{Var::constant(tok), TokenKind::Adapted};
    TokenSet b{Var::constant(tok_off), TokenKind::Adapted};
    double c_sq = 0;
    for (int i = 0; i < p; ++i) c_sq += c.at(0, i) * c.at(0, i);
    CHECK(kd_vla_loss(a, a).value().item() == Catch::Approx(0.0).margin(1e-12));
    CHECK(kd_vla_loss(a, b).value().item() == Catch::Approx(c_sq).margin(1e-10));

    Tensor logits = rng.normal_tensor({4, 4}, 1.0);
    Tensor logits_off = logits;
    for (int64_t i = 0; i < logits_off.size(); ++i) logits_off[i] += 2.0;
    MaskLogits mt{Var::constant(logits)}, ms{Var::constant(logits_off)};
    CHECK(kd_mask_loss(mt, mt).value().item() == Catch::Approx(0.0).margin(1e-12));
    CHECK(kd_mask_loss(mt, ms).value().item() == Catch::Approx(4.0).margin(1e-10));
    CHECK(kd_mask_loss(mt, ms).value().item() >= 0.0);

    TokenSet narrow{Var::constant(Tensor({2, p})), TokenKind::Adapted};
    CHECK_THROWS_AS(kd_vla_loss(a, narrow), std::invalid_argument);
    MaskLogits bad{Var::constant(Tensor({4, 5}))};
    CHECK_THROWS_AS(kd_mask_loss(mt, bad), std::invalid_argument);
}

TEST_CASE("kd_vla gradient on the student side matches finite differences") {
    Rng rng(3);
    int p = 6;
    ParamStore ps;
    Var& student_tokens = ps.create("s", rng.normal_tensor({3, p}, 1.0));
    Tensor teacher_tokens = rng.normal_tensor({3, p}, 1.0);
    auto res = grad_check(ps, [&] {
        TokenSet t{Var::constant(teacher_tokens), TokenKind::Adapted};
        TokenSet s{student_tokens, TokenKind::Adapted};
        return kd_vla_loss(t, s);
    }, rng);
    INFO(res.worst_where);
    CHECK(res.pass);
}

TEST_CASE("kd_total: arithmetic, enable flags, weight linearity") {
    auto scalar = [](double v) { return Var::constant(Tensor::scalar(v)); };
    KDLosses losses{scalar(1.0), scalar(2.0), scalar(3.0), scalar(4.0)};

    KDConfig cfg;
    CHECK(kd_total(losses, cfg).value().item() == Catch::Approx(10.0).margin(1e-12));

    KDConfig no_mask = cfg;
    no_mask.en_mask = false;  // the "drop mask-logit distillation" ablation row
    CHECK(kd_total(losses, no_mask).value().item() == Catch::Approx(6.0).margin(1e-12));

    KDConfig weighted = cfg;
    weighted.w_vg = 0.5;
    weighted.w_att = 2.0;
    CHECK(kd_total(losses, weighted).value().item() ==
          Catch::Approx(0.5 * 1 + 2.0 * 2 + 3 + 4).margin(1e-12));

    KDLosses zeros{scalar(0.0), scalar(0.0), scalar(0.0), scalar(0.0)};
    CHECK(kd_total(zeros, cfg).value().item() == 0.0);

    KDConfig none;
    none.en_vg = none.en_att = none.en_vla = none.en_mask = false;
    CHECK_THROWS_AS(kd_total(losses, none), std::invalid_argument);
    KDConfig negw;
    negw.w_vg = -1.0;
    CHECK_THROWS_AS(kd_total(losses, negw), std::invalid_argument);
}

TEST_CASE("KD losses push no gradient into teacher parameters") {
    auto cfg = tiny_tracker();
    TeacherModel teacher(cfg, ModalityConfig{}, 7);
    StudentModel student(cfg, 8);
    auto seq = generate_scene(31, tiny_scene(3));

    // Teacher runs with grad mode on; the loss-level detach must block flow.
    auto tf = teacher.forward(seq, seq.boxes[0]);
    auto sf = student.forward(seq.frames_raw, seq.boxes[0]);

    KDLosses losses;
    losses.vg = Var::constant(Tensor::scalar(0.0));
    losses.att = Var::constant(Tensor::scalar(0.0));
    losses.mask = Var::constant(Tensor::scalar(0.0));
    for (int t = 0; t < 3; ++t) {
        losses.vg = add(losses.vg, kd_vg_loss(sf.frames[static_cast<size_t>(t)].input_features,
                                              tf.frames[static_cast<size_t>(t)].input_features));
        losses.att = add(losses.att, kd_attention_loss(tf.frames[static_cast<size_t>(t)].trace,
                                                       sf.frames[static_cast<size_t>(t)].trace));
        losses.mask = add(losses.mask, kd_mask_loss(tf.frames[static_cast<size_t>(t)].logits,
                                                    sf.frames[static_cast<size_t>(t)].logits));
    }
    losses.vla = kd_vla_loss(*tf.prompts.adapted, *sf.prompts.adapted);

    teacher.params().zero_grads();
    student.params().zero_grads();
    kd_total(losses, KDConfig{}).backward();
    CHECK(teacher.params().grad_norm() == 0.0);
    CHECK(student.params().grad_norm() > 0.0);
}

TEST_CASE("self-distillation: student initialized from teacher on identical inputs") {
    auto cfg = tiny_tracker();
    // Enhanced-RGB + language teacher; the student sees the enhanced frames
    // as its raw stream, so shared weights imply matching features exactly.
    auto mods = ModalityConfig::from_label("E+L");
    TeacherModel teacher(cfg, mods, 11);
    auto seq = generate_scene(33, tiny_scene(4));
    seq.frames_raw = seq.frames_enhanced;

    auto compute_kd = [&](StudentModel& student) {
        NoGradGuard ng;
        auto tf = teacher.forward(seq, seq.boxes[0]);
        auto sf = student.forward(seq.frames_raw, seq.boxes[0]);
        KDLosses losses;
        losses.vg = Var::constant(Tensor::scalar(0.0));
        losses.att = Var::constant(Tensor::scalar(0.0));
        losses.mask = Var::constant(Tensor::scalar(0.0));
        for (size_t t = 0; t < tf.frames.size(); ++t) {
            losses.vg = add(losses.vg, kd_vg_loss(sf.frames[t].input_features,
                                                  tf.frames[t].input_features));
            losses.att = add(losses.att, kd_attention_loss(tf.frames[t].trace, sf.frames[t].trace));
            losses.mask = add(losses.mask, kd_mask_loss(tf.frames[t].logits, sf.frames[t].logits));
        }
        losses.vla = kd_vla_loss(*tf.prompts.adapted, *sf.prompts.adapted);
        return kd_total(losses, KDConfig{}).value().item();
    };

    StudentModel random_student(cfg, 999);
    double kd_random = compute_kd(random_student);

    StudentModel student(cfg, 999);
    student.init_from_teacher(teacher);
    double kd_self = compute_kd(student);

    CHECK(kd_self < 1e-8);  // decoder residuals are zero-initialized
    CHECK(kd_random > 1e-4);
}

TEST_CASE("track: thresholded masks to boxes with sentinel on empty foreground") {
    SECTION("all-background logits produce an absent prediction") {
        std::vector<MaskLogits> logits;
        logits.push_back(MaskLogits{Var::constant(Tensor::full({8, 8}, -5.0))});
        auto res = logits_to_track_result(logits);
        REQUIRE(res.boxes.size() == 1);
        CHECK(res.boxes[0].is_sentinel());
        CHECK(res.absent[0]);
        CHECK(res.confidence[0] == 0.0);
    }
    SECTION("foreground blob becomes its tight box with confidence above 0.5") {
        Tensor l = Tensor::full({8, 8}, -6.0);
        for (int i = 2; i <= 4; ++i)
            for (int j = 3; j <= 6; ++j) l.at(i, j) = 4.0;
        std::vector<MaskLogits> logits{MaskLogits{Var::constant(l)}};
        auto res = logits_to_track_result(logits);
        CHECK(res.boxes[0] == Box{3, 2, 4, 3});
        CHECK_FALSE(res.absent[0]);
        CHECK(res.confidence[0] > 0.5);
    }
    SECTION("largest-component filter drops satellite blobs") {
        Tensor l = Tensor::full({8, 8}, -6.0);
        for (int i = 1; i <= 4; ++i)
            for (int j = 1; j <= 4; ++j) l.at(i, j) = 4.0;  // 4x4 main blob
        l.at(7, 7) = 4.0;                                   // lone pixel
        std::vector<MaskLogits> logits{MaskLogits{Var::constant(l)}};
        auto with = logits_to_track_result(logits, true);
        auto without = logits_to_track_result(logits, false);
        CHECK(with.boxes[0] == Box{1, 1, 4, 4});
        CHECK(without.boxes[0] == Box{1, 1, 7, 7});
    }
    SECTION("student tracking is deterministic") {
        auto cfg = tiny_tracker();
        StudentModel student(cfg, 3);
        auto seq = generate_scene(35, tiny_scene(4));
        auto a = track(student, seq.frames_raw, seq.boxes[0]);
        auto b = track(student, seq.frames_raw, seq.boxes[0]);
        CHECK(a.boxes == b.boxes);
        CHECK(a.confidence == b.confidence);
    }
}

TEST_CASE("student checkpoints round-trip") {
    auto cfg = tiny_tracker();
    StudentModel student(cfg, 5);
    std::string path = std::filesystem::temp_directory_path() /
                       ("aquatrack_student_" + std::to_string(::getpid()) + ".ckpt");
    student.save(path);
    StudentModel loaded = StudentModel::load(path);
    for (const auto& [name, var] : student.params().all()) {
        const Tensor& a = var.value();
        const Tensor& b = loaded.params().at(name).value();
        REQUIRE(a.same_shape(b));
        for (int64_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
    }
    std::filesystem::remove(path);
}
