// Sequence-level data model: one clip with aligned raw RGB, enhanced RGB,
// depth, masks, boxes, absent flags, 32 attribute flags, and a language
// string. Images are float64 tensors in [0,1]; depth values are strictly
// positive.
#pragma once

#include <cmath>
#include <array>
#include <string>
#include <vector>

#include "aquatrack/core/tensor.hpp"

namespace aquatrack {

struct Box {
    int x = 0, y = 0, w = 0, h = 0;

    bool is_sentinel() const { return x == 0 && y == 0 && w == 0 && h == 0; }
    double cx() const { return x + w / 2.0; }
    double cy() const { return y + h / 2.0; }
    int64_t area() const { return static_cast<int64_t>(w) * h; }
    bool operator==(const Box&) const = default;
};

constexpr int kAttributeCount = 32;

// Per-sequence challenge flags; the first 20 are generic tracking factors,
// the last 12 are water-specific.
inline const std::array<std::string, kAttributeCount>& attribute_names() {
    static const std::array<std::string, kAttributeCount> names = {
        "low_resolution",      "fast_motion",        "scale_variation",
        "aspect_ratio_variation", "camera_motion",   "viewpoint_change",
        "partial_occlusion",   "full_occlusion",     "out_of_view",
        "rotation",            "deformation",        "similar_distractors",
        "illumination_variation", "motion_blur",     "partial_target_information",
        "camouflage",          "background_clutter", "low_contrast",
        "natural_object",      "artificial_object",  "high_visibility",
        "medium_visibility",   "low_visibility",     "greenish_tint",
        "bluish_tint",         "yellowish_tint",     "submerged_camera",
        "above_water_camera",  "bubbles",            "turbidity",
        "reflections",         "transparency"};
    return names;
}

struct MultimodalSequence {
    std::string id;
    std::vector<Tensor> frames_raw;       // H x W x 3 in [0,1]
    std::vector<Tensor> frames_enhanced;  // H x W x 3 in [0,1]
    std::vector<Tensor> depth;            // H x W, values in (0,1]
    std::vector<Tensor> masks;            // H x W, values exactly 0 or 1
    std::vector<Box> boxes;
    std::vector<bool> absent;
    std::array<bool, kAttributeCount> attributes{};
    std::string language;
    int fps = 24;
    uint64_t seed = 0;

    int length() const { return static_cast<int>(frames_raw.size()); }
    int height() const { return frames_raw.empty() ? 0 : frames_raw[0].dim(0); }
    int width() const { return frames_raw.empty() ? 0 : frames_raw[0].dim(1); }
};

// Tight bounding box of the nonzero region; sentinel when the mask is empty.
inline Box tight_box(const Tensor& mask) {
    int H = mask.dim(0), W = mask.dim(1);
    int x0 = W, y0 = H, x1 = -1, y1 = -1;
    for (int i = 0; i < H; ++i)
        for (int j = 0; j < W; ++j)
            if (mask.at(i, j) != 0.0) {
                x0 = std::min(x0, j);
                y0 = std::min(y0, i);
                x1 = std::max(x1, j);
                y1 = std::max(y1, i);
            }
    if (x1 < 0) return Box{};
    return Box{x0, y0, x1 - x0 + 1, y1 - y0 + 1};
}

// Checks every structural invariant; throws with a description on violation.
inline void validate_sequence(const MultimodalSequence& seq) {
    size_t n = seq.frames_raw.size();
    if (n == 0) throw std::invalid_argument("sequence " + seq.id + ": empty");
    auto check_len = [&](size_t m, const char* what) {
        if (m != n)
            throw std::invalid_argument("sequence " + seq.id + ": " + what + " has " +
                                        std::to_string(m) + " entries, expected " +
                                        std::to_string(n));
    };
    check_len(seq.frames_enhanced.size(), "frames_enhanced");
    check_len(seq.depth.size(), "depth");
    check_len(seq.masks.size(), "masks");
    check_len(seq.boxes.size(), "boxes");
    check_len(seq.absent.size(), "absent");
    if (seq.fps <= 0) throw std::invalid_argument("sequence " + seq.id + ": fps must be positive");

    int H = seq.height(), W = seq.width();
    for (size_t t = 0; t < n; ++t) {
        const std::string at = "sequence " + seq.id + " frame " + std::to_string(t);
        for (const Tensor* img : {&seq.frames_raw[t], &seq.frames_enhanced[t]}) {
            if (img->rank() != 3 || img->dim(0) != H || img->dim(1) != W || img->dim(2) != 3)
                throw std::invalid_argument(at + ": bad image shape " + img->shape_str());
            for (int64_t i = 0; i < img->size(); ++i)
                if ((*img)[i] < 0.0 || (*img)[i] > 1.0)
                    throw std::invalid_argument(at + ": image value outside [0,1]");
        }
        if (seq.depth[t].rank() != 2 || seq.depth[t].dim(0) != H || seq.depth[t].dim(1) != W)
            throw std::invalid_argument(at + ": bad depth shape");
        for (int64_t i = 0; i < seq.depth[t].size(); ++i)
            if (seq.depth[t][i] <= 0.0 || seq.depth[t][i] > 1.0)
                throw std::invalid_argument(at + ": depth value outside (0,1]");
        for (int64_t i = 0; i < seq.masks[t].size(); ++i)
            if (seq.masks[t][i] != 0.0 && seq.masks[t][i] != 1.0)
                throw std::invalid_argument(at + ": non-binary mask value");
        const Box& b = seq.boxes[t];
        if (seq.absent[t]) {
            if (!b.is_sentinel()) throw std::invalid_argument(at + ": absent frame without sentinel box");
            if (!tight_box(seq.masks[t]).is_sentinel())
                throw std::invalid_argument(at + ": absent frame with nonzero mask");
        } else {
            if (b.w <= 0 || b.h <= 0 || b.x < 0 || b.y < 0 || b.x + b.w > W || b.y + b.h > H)
                throw std::invalid_argument(at + ": box outside frame");
            if (tight_box(seq.masks[t]) != b)
                throw std::invalid_argument(at + ": box is not the tight box of the mask");
        }
    }
}

}  // namespace aquatrack
