#include <catch2/catch_amalgamated.hpp>
#include <filesystem>

#include "aquatrack/core/rng.hpp"
#include "aquatrack/eval/report_io.hpp"

using namespace aquatrack;

namespace {

// Pixel-count oracle: a box covers cells [x, x+w) x [y, y+h).
double iou_rasterized(const Box& a, const Box& b, int canvas) {
    int both = 0, either = 0;
    for (int y = 0; y < canvas; ++y)
        for (int x = 0; x < canvas; ++x) {
            bool in_a = x >= a.x && x < a.x + a.w && y >= a.y && y < a.y + a.h;
            bool in_b = x >= b.x && x < b.x + b.w && y >= b.y && y < b.y + b.h;
            if (in_a && in_b) ++both;
            if (in_a || in_b) ++either;
        }
    if (either == 0) return (a.is_sentinel() && b.is_sentinel()) ? 1.0 : 0.0;
    return static_cast<double>(both) / either;
}

SequenceAnnotations simple_gt(const std::string& id, int n, Box box) {
    SequenceAnnotations gt;
    gt.id = id;
    gt.boxes.assign(static_cast<size_t>(n), box);
    gt.absent.assign(static_cast<size_t>(n), false);
    return gt;
}

}  // namespace

TEST_CASE("iou: frozen examples and basic properties") {
    CHECK(iou(Box{2, 3, 5, 7}, Box{2, 3, 5, 7}) == 1.0);
    CHECK(iou(Box{0, 0, 4, 4}, Box{10, 10, 4, 4}) == 0.0);
    CHECK(iou(Box{0, 0, 10, 10}, Box{5, 5, 10, 10}) == Catch::Approx(25.0 / 175.0).margin(1e-12));
    CHECK(iou(Box{0, 0, 10, 10}, Box{5, 5, 10, 10}) ==
          iou(Box{5, 5, 10, 10}, Box{0, 0, 10, 10}));
    CHECK(iou(Box{}, Box{}) == 1.0);          // sentinel pair (excluded upstream)
    CHECK(iou(Box{0, 0, 0, 5}, Box{0, 0, 0, 5}) == 0.0);  // degenerate, not sentinel
    CHECK_THROWS_AS(iou(Box{0, 0, -1, 5}, Box{}), std::invalid_argument);
}

TEST_CASE("iou equals the rasterization oracle exhaustively on an 8x8 canvas") {
    std::vector<Box> boxes;
    for (int x = 0; x <= 8; ++x)
        for (int w = 0; w + x <= 8; ++w)
            for (int y = 0; y <= 8; ++y)
                for (int h = 0; h + y <= 8; ++h) boxes.push_back(Box{x, y, w, h});
    size_t mismatches = 0;
    for (const Box& a : boxes)
        for (const Box& b : boxes)
            if (std::abs(iou(a, b) - iou_rasterized(a, b, 8)) > 1e-12) ++mismatches;
    CHECK(mismatches == 0);
}

TEST_CASE("iou matches the rasterization oracle on dense random 32x32 boxes") {
    Rng rng(7);
    auto random_box = [&] {
        int x = rng.uniform_int(0, 31), y = rng.uniform_int(0, 31);
        return Box{x, y, rng.uniform_int(0, 32 - x), rng.uniform_int(0, 32 - y)};
    };
    for (int rep = 0; rep < 50000; ++rep) {
        Box a = random_box(), b = random_box();
        INFO("a=(" << a.x << "," << a.y << "," << a.w << "," << a.h << ") b=(" << b.x << "," << b.y
                   << "," << b.w << "," << b.h << ")");
        REQUIRE(std::abs(iou(a, b) - iou_rasterized(a, b, 32)) <= 1e-12);
    }
}

TEST_CASE("center errors: frozen examples") {
    CHECK(center_error(Box{1, 2, 4, 6}, Box{1, 2, 4, 6}) == 0.0);
    // Centers (0,0) and (3,4).
    CHECK(center_error(Box{-2, -2, 4, 4}, Box{1, 2, 4, 4}) == Catch::Approx(5.0).margin(1e-12));
    // gt 100x50, offset (10,10) -> sqrt(0.1^2 + 0.2^2).
    Box gt{0, 0, 100, 50};
    Box pred{10, 10, 100, 50};
    CHECK(norm_center_error(pred, gt, gt) ==
          Catch::Approx(std::sqrt(0.1 * 0.1 + 0.2 * 0.2)).margin(1e-12));
    CHECK(norm_center_error(pred, gt, gt) == Catch::Approx(0.22360679).margin(1e-6));
    CHECK_THROWS_AS(norm_center_error(pred, gt, Box{0, 0, 0, 5}), std::invalid_argument);
}

TEST_CASE("success curve: threshold-edge conventions") {
    auto perfect = success_curve(std::vector<double>(12, 1.0));
    CHECK(perfect.auc == Catch::Approx(100.0 / 101.0).margin(1e-12));
    CHECK(perfect.values.front() == 1.0);
    CHECK(perfect.values.back() == 0.0);  // IoU > 1 never holds

    auto half = success_curve({0.5});
    CHECK(half.auc == Catch::Approx(50.0 / 101.0).margin(1e-12));
    for (size_t i = 0; i < half.thresholds.size(); ++i)
        CHECK(half.values[i] == (half.thresholds[i] < 0.5 ? 1.0 : 0.0));
}

TEST_CASE("curves are monotone and success AUC tracks mean IoU") {
    Rng rng(11);
    for (int rep = 0; rep < 20; ++rep) {
        int n = rng.uniform_int(5, 200);
        std::vector<double> ious, errors;
        double mean_iou = 0;
        for (int i = 0; i < n; ++i) {
            ious.push_back(rng.uniform(0, 1));
            errors.push_back(rng.uniform(0, 60));
            mean_iou += ious.back() / n;
        }
        auto sc = success_curve(ious);
        for (size_t i = 1; i < sc.values.size(); ++i) CHECK(sc.values[i] <= sc.values[i - 1]);
        CHECK(std::abs(sc.auc - mean_iou) < 0.01);

        auto pc = precision_curve(errors);
        for (size_t i = 1; i < pc.values.size(); ++i) CHECK(pc.values[i] >= pc.values[i - 1]);
        for (double v : pc.values) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }
    }
    CHECK(precision_at({0.0, 0.0, 0.0}, 20.0) == 1.0);
    CHECK(precision_at({20.0}, 20.0) == 1.0);  // inclusive
    CHECK(precision_at({20.001}, 20.0) == 0.0);
}

TEST_CASE("evaluate: perfect tracker and all-sentinel tracker") {
    std::vector<SequenceAnnotations> dataset;
    std::vector<SequencePrediction> perfect, sentinel;
    Rng rng(13);
    for (int s = 0; s < 3; ++s) {
        Box b{5 + s, 7, 10, 8};
        auto gt = simple_gt("seq" + std::to_string(s), 12, b);
        SequencePrediction p{gt.id, gt.boxes, {}};
        SequencePrediction z{gt.id, std::vector<Box>(12, Box{}), {}};
        dataset.push_back(gt);
        perfect.push_back(p);
        sentinel.push_back(z);
    }
    auto rep = evaluate(perfect, dataset);
    CHECK(rep.success_auc == Catch::Approx(100.0 / 101.0).margin(1e-12));
    CHECK(std::abs(rep.success_auc - 1.0) <= 1.0 / 101.0 + 1e-12);
    CHECK(rep.precision_at_20 == 1.0);
    CHECK(rep.norm_precision_auc == 1.0);

    auto rep0 = evaluate(sentinel, dataset);
    CHECK(rep0.success_auc == 0.0);
}

TEST_CASE("evaluate: absent frames never change metrics") {
    Rng rng(17);
    std::vector<SequenceAnnotations> dataset;
    std::vector<SequencePrediction> preds;
    for (int s = 0; s < 2; ++s) {
        SequenceAnnotations gt;
        gt.id = "seq" + std::to_string(s);
        SequencePrediction p{gt.id, {}, {}};
        for (int t = 0; t < 15; ++t) {
            Box b{rng.uniform_int(0, 20), rng.uniform_int(0, 20), rng.uniform_int(5, 12),
                  rng.uniform_int(5, 12)};
            gt.boxes.push_back(b);
            gt.absent.push_back(false);
            p.boxes.push_back(Box{b.x + rng.uniform_int(-3, 3), b.y + rng.uniform_int(-3, 3),
                                  b.w + rng.uniform_int(-2, 2), b.h});
        }
        dataset.push_back(gt);
        preds.push_back(p);
    }
    auto base = evaluate(preds, dataset);

    // Insert absent frames with arbitrary predictions at scattered positions.
    auto dataset2 = dataset;
    auto preds2 = preds;
    for (size_t s = 0; s < dataset2.size(); ++s)
        for (int ins = 0; ins < 4; ++ins) {
            size_t pos = static_cast<size_t>(rng.uniform_int(1, static_cast<int>(dataset2[s].boxes.size()) - 1));
            dataset2[s].boxes.insert(dataset2[s].boxes.begin() + static_cast<long>(pos), Box{});
            dataset2[s].absent.insert(dataset2[s].absent.begin() + static_cast<long>(pos), true);
            Box junk{rng.uniform_int(0, 30), rng.uniform_int(0, 30), rng.uniform_int(0, 10),
                     rng.uniform_int(0, 10)};
            preds2[s].boxes.insert(preds2[s].boxes.begin() + static_cast<long>(pos), junk);
        }
    auto with_absent = evaluate(preds2, dataset2);
    CHECK(with_absent.success_auc == base.success_auc);
    CHECK(with_absent.precision_at_20 == base.precision_at_20);
    CHECK(with_absent.norm_precision_auc == base.norm_precision_auc);
    for (size_t i = 0; i < base.success.values.size(); ++i)
        CHECK(with_absent.success.values[i] == base.success.values[i]);
}

TEST_CASE("evaluate: attribute bookkeeping and error paths") {
    auto gt = simple_gt("only", 8, Box{4, 4, 6, 6});
    gt.attributes[3] = true;
    SequencePrediction pred{"only", std::vector<Box>(8, Box{5, 5, 6, 6}), {}};
    auto rep = evaluate({pred}, {gt});
    for (const auto& row : rep.attributes) {
        if (row.index == 3) {
            CHECK(row.count == 1);
            CHECK(row.success_auc == Catch::Approx(rep.success_auc).margin(1e-15));
            CHECK(row.precision_at_20 == Catch::Approx(rep.precision_at_20).margin(1e-15));
        } else {
            CHECK(row.count == 0);
        }
    }
    CHECK(rep.attributes.size() == kAttributeCount);

    SequencePrediction short_pred{"only", std::vector<Box>(7, Box{}), {}};
    CHECK_THROWS_WITH(evaluate({short_pred}, {gt}),
                      Catch::Matchers::ContainsSubstring("7") &&
                          Catch::Matchers::ContainsSubstring("8"));
    CHECK_THROWS_WITH(evaluate({}, {gt}), Catch::Matchers::ContainsSubstring("only"));
}

TEST_CASE("comparison table round-trips and preserves ordering") {
    namespace fs = std::filesystem;
    std::vector<RunSummary> rows = {
        {"teacher-EDL", 0.83125, 0.9913, 0.77},
        {"student-I", 0.7512345678901234, 0.95, 0.7},
        {"baseline-I", 0.601, 0.88, 0.66},
    };
    auto path = fs::temp_directory_path() / ("aq_cmp_" + std::to_string(::getpid()) + ".csv");
    write_comparison_csv(path.string(), rows);
    auto loaded = load_comparison_csv(path.string());
    CHECK(loaded == rows);

    // Identical reports produce identical rows.
    auto gt = simple_gt("s", 5, Box{2, 2, 8, 8});
    SequencePrediction pred{"s", std::vector<Box>(5, Box{2, 2, 8, 8}), {}};
    auto rep = evaluate({pred}, {gt});
    CHECK(summarize("a", rep).success == summarize("b", rep).success);
    fs::remove(path);
}

TEST_CASE("curve csv and svg emission") {
    namespace fs = std::filesystem;
    auto tmp = fs::temp_directory_path() / ("aq_plot_" + std::to_string(::getpid()));
    fs::create_directories(tmp);
    auto curve = success_curve({0.9, 0.7, 0.55, 0.3});
    write_curve_csv((tmp / "success.csv").string(), curve);
    auto loaded = load_curve_csv((tmp / "success.csv").string());
    REQUIRE(loaded.values.size() == curve.values.size());
    for (size_t i = 0; i < curve.values.size(); ++i) {
        CHECK(loaded.values[i] == curve.values[i]);
        CHECK(loaded.thresholds[i] == curve.thresholds[i]);
    }

    write_curves_svg((tmp / "success.svg").string(), {{"run-a", curve}, {"run-b", curve}},
                     "success");
    std::ifstream svg(tmp / "success.svg");
    std::string content((std::istreambuf_iterator<char>(svg)), std::istreambuf_iterator<char>());
    CHECK(content.find("<svg") != std::string::npos);
    CHECK(content.find("polyline") != std::string::npos);
    CHECK(content.find("run-a") != std::string::npos);
    fs::remove_all(tmp);
}

TEST_CASE("prediction files round-trip") {
    namespace fs = std::filesystem;
    auto tmp = fs::temp_directory_path() / ("aq_pred_" + std::to_string(::getpid()));
    SequencePrediction pred{"seq007", {Box{1, 2, 3, 4}, Box{}, Box{9, 9, 2, 2}}, {0.9, 0.0, 0.5}};
    write_prediction_files(tmp.string(), pred);
    auto loaded = load_prediction_files(tmp.string(), "seq007", 3);
    CHECK(loaded.boxes == pred.boxes);
    CHECK(loaded.confidence == pred.confidence);
    CHECK_THROWS_WITH(load_prediction_files(tmp.string(), "seq007", 5),
                      Catch::Matchers::ContainsSubstring("expected 5"));
    fs::remove_all(tmp);
}
