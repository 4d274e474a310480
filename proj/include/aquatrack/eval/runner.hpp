// Runs a trained model over a dataset and assembles the metric report.
// Per-sequence prediction is independent, so it can fan out over worker
// threads; results land in index-fixed slots and the reduction order is
// deterministic regardless of worker count.
#pragma once

#include <atomic>
#include <thread>

#include "aquatrack/eval/report_io.hpp"
#include "aquatrack/track/train.hpp"

namespace aquatrack {

inline SequencePrediction predict_sequence(const TeacherModel& model,
                                           const MultimodalSequence& seq,
                                           bool largest_component_only = false) {
    NoGradGuard ng;
    auto fwd = model.forward(seq, seq.boxes[0]);
    std::vector<MaskLogits> logits;
    for (auto& f : fwd.frames) logits.push_back(f.logits);
    TrackResult tr = logits_to_track_result(logits, largest_component_only);
    return SequencePrediction{seq.id, tr.boxes, tr.confidence};
}

inline SequencePrediction predict_sequence(const StudentModel& model,
                                           const MultimodalSequence& seq,
                                           bool largest_component_only = false) {
    TrackResult tr = track(model, seq.frames_raw, seq.boxes[0], largest_component_only);
    return SequencePrediction{seq.id, tr.boxes, tr.confidence};
}

template <typename Fn>
std::vector<SequencePrediction> predict_dataset(const std::vector<MultimodalSequence>& dataset,
                                                Fn&& predict_one, int workers = 1) {
    std::vector<SequencePrediction> out(dataset.size());
    if (workers <= 1) {
        for (size_t i = 0; i < dataset.size(); ++i) out[i] = predict_one(dataset[i]);
        return out;
    }
    std::atomic<size_t> next{0};
    auto work = [&] {
        for (size_t i; (i = next.fetch_add(1)) < dataset.size();) out[i] = predict_one(dataset[i]);
    };
    std::vector<std::thread> pool;
    int n = std::min<int>(workers, static_cast<int>(dataset.size()));
    for (int w = 0; w < n; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
    return out;
}

inline MetricReport evaluate_predictions(const std::vector<SequencePrediction>& preds,
                                         const std::vector<MultimodalSequence>& dataset) {
    std::vector<SequenceAnnotations> gt;
    gt.reserve(dataset.size());
    for (const auto& seq : dataset) gt.push_back(annotations_of(seq));
    return evaluate(preds, gt);
}

template <typename Model>
MetricReport evaluate_model(const Model& model, const std::vector<MultimodalSequence>& dataset,
                            int workers = 1, bool largest_component_only = false) {
    auto preds = predict_dataset(
        dataset,
        [&](const MultimodalSequence& seq) {
            return predict_sequence(model, seq, largest_component_only);
        },
        workers);
    return evaluate_predictions(preds, dataset);
}

// Writes the standard run artifacts: report.csv, curves/*.csv, plots/*.svg.
inline void write_report_bundle(const std::string& out_dir, const MetricReport& report) {
    namespace fs = std::filesystem;
    fs::create_directories(fs::path(out_dir) / "curves");
    fs::create_directories(fs::path(out_dir) / "plots");
    write_report_csv((fs::path(out_dir) / "report.csv").string(), report);
    write_curve_csv((fs::path(out_dir) / "curves" / "success.csv").string(), report.success);
    write_curve_csv((fs::path(out_dir) / "curves" / "precision.csv").string(), report.precision);
    write_curve_csv((fs::path(out_dir) / "curves" / "norm_precision.csv").string(),
                    report.norm_precision);
    write_curves_svg((fs::path(out_dir) / "plots" / "success.svg").string(),
                     {{"run", report.success}}, "Success");
    write_curves_svg((fs::path(out_dir) / "plots" / "precision.svg").string(),
                     {{"run", report.precision}}, "Precision");
    write_curves_svg((fs::path(out_dir) / "plots" / "norm_precision.svg").string(),
                     {{"run", report.norm_precision}}, "Normalized precision");
}

}  // namespace aquatrack
