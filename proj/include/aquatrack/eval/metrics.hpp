// One-pass evaluation: IoU / center-error metrics, success and precision
// curves, per-sequence reports with attribute breakdown. Frames whose ground
// truth is absent are excluded from every metric.
#pragma once

#include <cmath>
#include <array>
#include <map>

#include "aquatrack/data/types.hpp"

namespace aquatrack {

// Intersection-over-union of two boxes (w, h >= 0). A zero-area union scores
// 0 unless both boxes are the absent sentinel; sentinel ground-truth frames
// never reach here during evaluation.
inline double iou(const Box& a, const Box& b) {
    if (a.w < 0 || a.h < 0 || b.w < 0 || b.h < 0)
        throw std::invalid_argument("iou: negative box dimensions");
    double ix = std::max(0.0, static_cast<double>(std::min(a.x + a.w, b.x + b.w)) -
                                  std::max(a.x, b.x));
    double iy = std::max(0.0, static_cast<double>(std::min(a.y + a.h, b.y + b.h)) -
                                  std::max(a.y, b.y));
    double inter = ix * iy;
    double uni = static_cast<double>(a.area()) + static_cast<double>(b.area()) - inter;
    if (uni <= 0.0) return (a.is_sentinel() && b.is_sentinel()) ? 1.0 : 0.0;
    return inter / uni;
}

inline double center_error(const Box& a, const Box& b) {
    return std::hypot(a.cx() - b.cx(), a.cy() - b.cy());
}

// Center error with each axis normalized by the ground-truth box dimensions.
inline double norm_center_error(const Box& a, const Box& b, const Box& gt) {
    if (gt.w <= 0 || gt.h <= 0)
        throw std::invalid_argument("norm_center_error: degenerate ground-truth box");
    return std::hypot((a.cx() - b.cx()) / gt.w, (a.cy() - b.cy()) / gt.h);
}

struct Curve {
    std::vector<double> thresholds;
    std::vector<double> values;
    double auc = 0.0;
};

namespace metric_detail {

inline double mean(const std::vector<double>& v) {
    double s = 0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

}  // namespace metric_detail

// success(theta) = fraction of frames with IoU strictly above theta, over 101
// uniform thresholds in [0,1]. AUC is the mean curve value.
inline Curve success_curve(const std::vector<double>& ious) {
    Curve c;
    for (int i = 0; i <= 100; ++i) {
        double theta = i / 100.0;
        int hits = 0;
        for (double v : ious)
            if (v > theta) ++hits;
        c.thresholds.push_back(theta);
        c.values.push_back(ious.empty() ? 0.0 : static_cast<double>(hits) / ious.size());
    }
    c.auc = metric_detail::mean(c.values);
    return c;
}

inline double precision_at(const std::vector<double>& errors, double threshold) {
    if (errors.empty()) return 0.0;
    int hits = 0;
    for (double e : errors)
        if (e <= threshold) ++hits;
    return static_cast<double>(hits) / errors.size();
}

// Pixel thresholds 0..50 (51 samples).
inline Curve precision_curve(const std::vector<double>& errors) {
    Curve c;
    for (int i = 0; i <= 50; ++i) {
        c.thresholds.push_back(static_cast<double>(i));
        c.values.push_back(precision_at(errors, static_cast<double>(i)));
    }
    c.auc = metric_detail::mean(c.values);
    return c;
}

// Normalized thresholds in [0, 0.5] (51 samples).
inline Curve norm_precision_curve(const std::vector<double>& norm_errors) {
    Curve c;
    for (int i = 0; i <= 50; ++i) {
        double theta = 0.01 * i;
        c.thresholds.push_back(theta);
        c.values.push_back(precision_at(norm_errors, theta));
    }
    c.auc = metric_detail::mean(c.values);
    return c;
}

// ---------------------------------------------------------------------------

// Ground-truth annotations needed by the evaluator (no pixel data).
struct SequenceAnnotations {
    std::string id;
    std::vector<Box> boxes;
    std::vector<bool> absent;
    std::array<bool, kAttributeCount> attributes{};
};

inline SequenceAnnotations annotations_of(const MultimodalSequence& seq) {
    return SequenceAnnotations{seq.id, seq.boxes, seq.absent, seq.attributes};
}

struct SequencePrediction {
    std::string id;
    std::vector<Box> boxes;
    std::vector<double> confidence;  // optional, one per frame when present
};

struct SequenceEval {
    std::string id;
    std::array<bool, kAttributeCount> attributes{};
    std::vector<double> ious, center_errors, norm_center_errors;
    Curve success, precision, norm_precision;
    double success_auc = 0, precision_at_20 = 0, norm_precision_auc = 0;
};

struct AttributeRow {
    int index = 0;
    std::string name;
    int count = 0;
    double success_auc = 0, precision_at_20 = 0, norm_precision_auc = 0;
};

struct MetricReport {
    std::vector<SequenceEval> sequences;
    Curve success, precision, norm_precision;  // pointwise means over sequences
    double success_auc = 0, precision_at_20 = 0, norm_precision_auc = 0;
    std::vector<AttributeRow> attributes;  // one row per attribute flag
};

// Scores predictions against ground truth. Predictions are matched to
// sequences by id; every sequence needs a prediction of matching length.
// Aggregation is sequence-averaged: each sequence contributes equally.
inline MetricReport evaluate(const std::vector<SequencePrediction>& predictions,
                             const std::vector<SequenceAnnotations>& dataset) {
    std::map<std::string, const SequencePrediction*> by_id;
    for (const auto& p : predictions) by_id[p.id] = &p;

    MetricReport report;
    for (const auto& gt : dataset) {
        auto it = by_id.find(gt.id);
        if (it == by_id.end())
            throw std::invalid_argument("evaluate: no prediction for sequence " + gt.id);
        const SequencePrediction& pred = *it->second;
        if (pred.boxes.size() != gt.boxes.size())
            throw std::invalid_argument("evaluate: sequence " + gt.id + " has " +
                                        std::to_string(pred.boxes.size()) +
                                        " predictions for " + std::to_string(gt.boxes.size()) +
                                        " frames");
        SequenceEval ev;
        ev.id = gt.id;
        ev.attributes = gt.attributes;
        for (size_t t = 0; t < gt.boxes.size(); ++t) {
            if (gt.absent[t]) continue;  // absent frames are excluded from all metrics
            ev.ious.push_back(iou(pred.boxes[t], gt.boxes[t]));
            ev.center_errors.push_back(center_error(pred.boxes[t], gt.boxes[t]));
            ev.norm_center_errors.push_back(
                norm_center_error(pred.boxes[t], gt.boxes[t], gt.boxes[t]));
        }
        if (ev.ious.empty())
            throw std::invalid_argument("evaluate: sequence " + gt.id +
                                        " has no visible frames to score");
        ev.success = success_curve(ev.ious);
        ev.precision = precision_curve(ev.center_errors);
        ev.norm_precision = norm_precision_curve(ev.norm_center_errors);
        ev.success_auc = ev.success.auc;
        ev.precision_at_20 = precision_at(ev.center_errors, 20.0);
        ev.norm_precision_auc = ev.norm_precision.auc;
        report.sequences.push_back(std::move(ev));
    }

    auto mean_curves = [&](auto getter) {
        Curve mean_c;
        const Curve& first = getter(report.sequences.front());
        mean_c.thresholds = first.thresholds;
        mean_c.values.assign(first.values.size(), 0.0);
        for (const auto& ev : report.sequences) {
            const Curve& c = getter(ev);
            for (size_t i = 0; i < c.values.size(); ++i) mean_c.values[i] += c.values[i];
        }
        for (double& v : mean_c.values) v /= static_cast<double>(report.sequences.size());
        mean_c.auc = metric_detail::mean(mean_c.values);
        return mean_c;
    };
    if (report.sequences.empty()) throw std::invalid_argument("evaluate: empty dataset");
    report.success = mean_curves([](const SequenceEval& e) -> const Curve& { return e.success; });
    report.precision =
        mean_curves([](const SequenceEval& e) -> const Curve& { return e.precision; });
    report.norm_precision =
        mean_curves([](const SequenceEval& e) -> const Curve& { return e.norm_precision; });

    double s = 0, p20 = 0, np = 0;
    for (const auto& ev : report.sequences) {
        s += ev.success_auc;
        p20 += ev.precision_at_20;
        np += ev.norm_precision_auc;
    }
    int n = static_cast<int>(report.sequences.size());
    report.success_auc = s / n;
    report.precision_at_20 = p20 / n;
    report.norm_precision_auc = np / n;

    for (int a = 0; a < kAttributeCount; ++a) {
        AttributeRow row;
        row.index = a;
        row.name = attribute_names()[static_cast<size_t>(a)];
        double as = 0, ap = 0, anp = 0;
        for (const auto& ev : report.sequences) {
            if (!ev.attributes[static_cast<size_t>(a)]) continue;
            ++row.count;
            as += ev.success_auc;
            ap += ev.precision_at_20;
            anp += ev.norm_precision_auc;
        }
        if (row.count > 0) {
            row.success_auc = as / row.count;
            row.precision_at_20 = ap / row.count;
            row.norm_precision_auc = anp / row.count;
        }
        report.attributes.push_back(std::move(row));
    }
    return report;
}

}  // namespace aquatrack
