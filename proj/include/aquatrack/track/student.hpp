// RGB-only student and the four knowledge-distillation losses. The student
// mirrors the teacher's dimensions (its raw-RGB encoder replaces the fused
// input) so every distilled signal is shape-compatible; matching parameter
// names let it initialize from a teacher checkpoint. Its adapter produces
// prompt tokens from its own visual tokens, standing in for the language
// prompt it does not receive.
#pragma once

#include "aquatrack/track/teacher.hpp"

namespace aquatrack {

class StudentModel {
public:
    StudentModel(const TrackerConfig& cfg, uint64_t seed)
        : cfg_(cfg), store_(std::make_shared<ParamStore>()) {
        cfg_.validate();
        Rng rng(Rng::mix(seed, 0x57de17ULL));
        rgb_ = ConvEncoder(*store_, "enc_rgb", 3, cfg_.enc, rng);
        prompt_ = PromptEncoder(*store_, "prompt", cfg_.enc, rng);
        adapter_ = V2LAdapter(*store_, "adapter", cfg_.enc, rng);
        core_ = TrackerCore(*store_, "core", cfg_, rng);
    }

    // Heap-backed store keeps component back-pointers valid across moves.
    StudentModel(const StudentModel&) = delete;
    StudentModel& operator=(const StudentModel&) = delete;
    StudentModel(StudentModel&&) = default;
    StudentModel& operator=(StudentModel&&) = default;

    ParamStore& params() { return *store_; }
    const ParamStore& params() const { return *store_; }
    const TrackerConfig& config() const { return cfg_; }
    const TrackerCore& core() const { return core_; }
    const ConvEncoder& rgb_encoder() const { return rgb_; }
    const V2LAdapter& adapter() const { return adapter_; }

    // Copies every shape-matching parameter shared with the teacher (RGB
    // encoder, prompt encoder, adapter, tracker core).
    void init_from_teacher(const TeacherModel& teacher) {
        store_->copy_matching_from(teacher.params());
    }

    PromptBundle build_prompts(const std::vector<Tensor>& raw_frames, const Box& init_box,
                               int t0) const {
        PromptBundle out;
        FeatureMap ctx = rgb_.forward(raw_frames[static_cast<size_t>(t0)]);
        out.visual = prompt_.forward(init_box, ctx);
        out.adapted = adapter_.forward(out.visual);
        out.decoder = TokenSet{concat_rows({out.visual.tokens, out.adapted->tokens}),
                               TokenKind::VlFused};
        return out;
    }

    SequenceForward forward(const std::vector<Tensor>& raw_frames, const Box& init_box, int t0 = 0,
                            int len = -1) const {
        int n = static_cast<int>(raw_frames.size());
        if (len < 0) len = n - t0;
        if (t0 < 0 || len < 1 || t0 + len > n)
            throw std::invalid_argument("StudentModel::forward: bad window");
        if (init_box.is_sentinel())
            throw std::invalid_argument("StudentModel::forward: sentinel init box");
        SequenceForward result;
        result.bank = MemoryBank(cfg_.memory_capacity);
        result.prompts = build_prompts(raw_frames, init_box, t0);
        for (int t = t0; t < t0 + len; ++t) {
            FrameOutput fo;
            fo.input_features = rgb_.forward(raw_frames[static_cast<size_t>(t)]);
            auto [cond, trace] = core_.memory_attend(fo.input_features, result.bank);
            fo.conditioned = cond;
            fo.trace = std::move(trace);
            fo.logits = core_.decode_mask(fo.conditioned, result.prompts.decoder);
            Var mask_embed = core_.encode_memory(fo.conditioned, fo.logits);
            result.bank.push(MemoryEntry{fo.conditioned, std::move(mask_embed), t});
            result.frames.push_back(std::move(fo));
        }
        return result;
    }

    std::string meta_json() const {
        nlohmann::json j;
        j["kind"] = "student";
        j["tracker"] = model_detail::tracker_config_json(cfg_);
        return j.dump();
    }

    void save(const std::string& path) const { save_checkpoint(path, *store_, meta_json()); }

    static StudentModel load(const std::string& path) {
        Checkpoint ck = load_checkpoint(path);
        auto j = nlohmann::json::parse(ck.meta_json);
        if (j.value("kind", "") != "student")
            throw std::runtime_error(path + ": not a student checkpoint");
        StudentModel m(model_detail::tracker_config_from_json(j.at("tracker")), 0);
        restore_params(*m.store_, ck, path);
        return m;
    }

private:
    TrackerConfig cfg_;
    std::shared_ptr<ParamStore> store_;
    ConvEncoder rgb_;
    PromptEncoder prompt_;
    V2LAdapter adapter_;
    TrackerCore core_;
};

// ---------------------------------------------------------------------------
// Knowledge-distillation losses. The teacher side is detached in all four;
// gradient reaches only the student.

// Mean over grid locations of the squared L2 distance between student
// features and the (detached) teacher fused features.
inline Var kd_vg_loss(const FeatureMap& student, const FeatureMap& teacher_fused) {
    if (student.h != teacher_fused.h || student.w != teacher_fused.w ||
        student.channels != teacher_fused.channels)
        throw std::invalid_argument("kd_vg_loss: grid shape mismatch");
    Var diff = sub(student.grid, teacher_fused.grid.detach());
    return mul_scalar(sum(square(diff)), 1.0 / student.positions());
}

// Sum over layers of squared Frobenius distances between attention maps.
inline Var kd_attention_loss(const AttentionTrace& teacher, const AttentionTrace& student) {
    if (teacher.layers.size() != student.layers.size())
        throw std::invalid_argument("kd_attention_loss: layer count mismatch: teacher " +
                                    std::to_string(teacher.layers.size()) + " vs student " +
                                    std::to_string(student.layers.size()));
    Var total = Var::constant(Tensor::scalar(0.0));
    for (size_t l = 0; l < teacher.layers.size(); ++l) {
        if (!teacher.layers[l].value().same_shape(student.layers[l].value()))
            throw std::invalid_argument(
                "kd_attention_loss: shape mismatch at layer " + std::to_string(l) + ": " +
                teacher.layers[l].value().shape_str() + " vs " +
                student.layers[l].value().shape_str());
        total = add(total, sum(square(sub(student.layers[l], teacher.layers[l].detach()))));
    }
    return total;
}

// Mean over tokens of the squared L2 distance between adapter outputs.
inline Var kd_vla_loss(const TokenSet& teacher_adapted, const TokenSet& student_adapted) {
    if (teacher_adapted.count() != student_adapted.count() ||
        teacher_adapted.dim() != student_adapted.dim())
        throw std::invalid_argument("kd_vla_loss: token shape mismatch");
    Var diff = sub(student_adapted.tokens, teacher_adapted.tokens.detach());
    return mul_scalar(sum(square(diff)), 1.0 / teacher_adapted.count());
}

// Mean over pixels of the squared logit distance.
inline Var kd_mask_loss(const MaskLogits& teacher, const MaskLogits& student) {
    require_same_shape(teacher.logits.value(), student.logits.value(), "kd_mask_loss");
    Var diff = sub(student.logits, teacher.logits.detach());
    return mul_scalar(sum(square(diff)), 1.0 / (teacher.h() * teacher.w()));
}

// ---------------------------------------------------------------------------

struct KDConfig {
    double w_vg = 1.0, w_att = 1.0, w_vla = 1.0, w_mask = 1.0;
    bool en_vg = true, en_att = true, en_vla = true, en_mask = true;

    void validate() const {
        if (w_vg < 0 || w_att < 0 || w_vla < 0 || w_mask < 0)
            throw std::invalid_argument("KDConfig: negative loss weight");
        if (!en_vg && !en_att && !en_vla && !en_mask)
            throw std::invalid_argument("KDConfig: at least one KD loss must be enabled");
    }

    std::string label() const {
        std::string s;
        auto app = [&s](const char* m) {
            if (!s.empty()) s += "+";
            s += m;
        };
        if (en_vg) app("VG");
        if (en_att) app("A");
        if (en_vla) app("VLA");
        if (en_mask) app("M");
        return s;
    }
};

struct KDLosses {
    Var vg, att, vla, mask;
};

// Weighted sum honoring the enable flags; plain sum at default weights.
inline Var kd_total(const KDLosses& losses, const KDConfig& cfg) {
    cfg.validate();
    Var total = Var::constant(Tensor::scalar(0.0));
    if (cfg.en_vg) total = add(total, mul_scalar(losses.vg, cfg.w_vg));
    if (cfg.en_att) total = add(total, mul_scalar(losses.att, cfg.w_att));
    if (cfg.en_vla) total = add(total, mul_scalar(losses.vla, cfg.w_vla));
    if (cfg.en_mask) total = add(total, mul_scalar(losses.mask, cfg.w_mask));
    return total;
}

// ---------------------------------------------------------------------------
// Mask-to-box tracking output

struct TrackResult {
    std::vector<Box> boxes;
    std::vector<Tensor> masks;  // binary H x W
    std::vector<double> confidence;
    std::vector<bool> absent;
};

namespace track_detail {

inline Tensor largest_component(const Tensor& mask) {
    int H = mask.dim(0), W = mask.dim(1);
    Tensor label({H, W});
    Tensor best({H, W});
    int best_size = 0;
    std::vector<std::pair<int, int>> stack;
    for (int i = 0; i < H; ++i)
        for (int j = 0; j < W; ++j) {
            if (mask.at(i, j) == 0.0 || label.at(i, j) != 0.0) continue;
            std::vector<std::pair<int, int>> comp;
            stack.push_back({i, j});
            label.at(i, j) = 1.0;
            while (!stack.empty()) {
                auto [y, x] = stack.back();
                stack.pop_back();
                comp.push_back({y, x});
                constexpr int dy[4] = {-1, 1, 0, 0}, dx[4] = {0, 0, -1, 1};
                for (int d = 0; d < 4; ++d) {
                    int ny = y + dy[d], nx = x + dx[d];
                    if (ny >= 0 && ny < H && nx >= 0 && nx < W && mask.at(ny, nx) != 0.0 &&
                        label.at(ny, nx) == 0.0) {
                        label.at(ny, nx) = 1.0;
                        stack.push_back({ny, nx});
                    }
                }
            }
            if (static_cast<int>(comp.size()) > best_size) {
                best_size = static_cast<int>(comp.size());
                best = Tensor({H, W});
                for (auto [y, x] : comp) best.at(y, x) = 1.0;
            }
        }
    return best;
}

}  // namespace track_detail

// Converts per-frame logits to boxes: threshold sigmoid at 0.5, optionally
// keep only the largest connected component, take the tight box. Empty
// foreground yields an absent prediction with the sentinel box.
inline TrackResult logits_to_track_result(const std::vector<MaskLogits>& logits,
                                          bool largest_component_only = false) {
    TrackResult out;
    for (const auto& ml : logits) {
        const Tensor& lv = ml.logits.value();
        int H = lv.dim(0), W = lv.dim(1);
        Tensor prob({H, W}), mask({H, W});
        for (int64_t i = 0; i < lv.size(); ++i) {
            double x = lv[i];
            prob[i] = x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
            mask[i] = prob[i] > 0.5 ? 1.0 : 0.0;
        }
        if (largest_component_only) mask = track_detail::largest_component(mask);
        Box b = tight_box(mask);
        double conf = 0.0;
        if (!b.is_sentinel()) {
            int count = 0;
            for (int i = b.y; i < b.y + b.h; ++i)
                for (int j = b.x; j < b.x + b.w; ++j) {
                    conf += prob.at(i, j);
                    ++count;
                }
            conf /= count;
        }
        out.absent.push_back(b.is_sentinel());
        out.boxes.push_back(b);
        out.masks.push_back(std::move(mask));
        out.confidence.push_back(conf);
    }
    return out;
}

// Inference-time tracking: student forward over raw frames, masks to boxes.
inline TrackResult track(const StudentModel& student, const std::vector<Tensor>& raw_frames,
                         const Box& init_box, bool largest_component_only = false) {
    NoGradGuard ng;
    SequenceForward fwd = student.forward(raw_frames, init_box);
    std::vector<MaskLogits> logits;
    for (auto& f : fwd.frames) logits.push_back(f.logits);
    return logits_to_track_result(logits, largest_component_only);
}

}  // namespace aquatrack
