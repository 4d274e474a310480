// Multimodal teacher: modality encoders (per the modality flags) feeding the
// tracker core. Frame-1 visual tokens and the language tokens are computed
// once per window and reused as decoder prompts on every frame.
#pragma once

#include <json.hpp>

#include "aquatrack/nn/checkpoint.hpp"
#include "aquatrack/track/tracker_core.hpp"

namespace aquatrack {

struct FrameOutput {
    FeatureMap input_features;  // f^vg (or the single enabled modality)
    FeatureMap conditioned;
    AttentionTrace trace;
    MaskLogits logits;
};

struct PromptBundle {
    TokenSet visual;                    // frame-1 box tokens
    std::optional<TokenSet> adapted;    // adapter(visual), when language is on
    std::optional<TokenSet> language;   // text tokens, when language is on
    TokenSet decoder;                   // what the mask decoder consumes
};

struct SequenceForward {
    std::vector<FrameOutput> frames;
    MemoryBank bank{6};
    PromptBundle prompts;
};

namespace model_detail {

inline Tensor depth_as_image(const Tensor& depth) {
    return Tensor({depth.dim(0), depth.dim(1), 1}, depth.vec());
}

inline nlohmann::json tracker_config_json(const TrackerConfig& cfg) {
    return {{"feature_dim", cfg.enc.feature_dim},
            {"grid_h", cfg.enc.grid_h},
            {"grid_w", cfg.enc.grid_w},
            {"layers", cfg.enc.layers},
            {"base_channels", cfg.enc.base_channels},
            {"n_visual_tokens", cfg.enc.n_visual_tokens},
            {"max_text_tokens", cfg.enc.max_text_tokens},
            {"hash_buckets", cfg.enc.hash_buckets},
            {"memory_capacity", cfg.memory_capacity},
            {"attention_layers", cfg.attention_layers},
            {"decoder_blocks", cfg.decoder_blocks}};
}

inline TrackerConfig tracker_config_from_json(const nlohmann::json& j) {
    TrackerConfig cfg;
    cfg.enc.feature_dim = j.at("feature_dim").get<int>();
    cfg.enc.grid_h = j.at("grid_h").get<int>();
    cfg.enc.grid_w = j.at("grid_w").get<int>();
    cfg.enc.layers = j.at("layers").get<int>();
    cfg.enc.base_channels = j.at("base_channels").get<int>();
    cfg.enc.n_visual_tokens = j.at("n_visual_tokens").get<int>();
    cfg.enc.max_text_tokens = j.at("max_text_tokens").get<int>();
    cfg.enc.hash_buckets = j.at("hash_buckets").get<int>();
    cfg.memory_capacity = j.at("memory_capacity").get<int>();
    cfg.attention_layers = j.at("attention_layers").get<int>();
    cfg.decoder_blocks = j.at("decoder_blocks").get<int>();
    return cfg;
}

}  // namespace model_detail

class TeacherModel {
public:
    TeacherModel(const TrackerConfig& cfg, const ModalityConfig& mods, uint64_t seed)
        : cfg_(cfg), mods_(mods), store_(std::make_shared<ParamStore>()) {
        cfg_.validate();
        mods_.validate();
        Rng rng(Rng::mix(seed, 0x7e4c4e5ULL));
        if (mods_.has_rgb()) rgb_ = ConvEncoder(*store_, "enc_rgb", 3, cfg_.enc, rng);
        if (mods_.use_depth) depth_ = ConvEncoder(*store_, "enc_depth", 1, cfg_.enc, rng);
        prompt_ = PromptEncoder(*store_, "prompt", cfg_.enc, rng);
        if (mods_.use_language) {
            lang_ = LanguageEncoder(*store_, "lang", cfg_.enc, rng);
            adapter_ = V2LAdapter(*store_, "adapter", cfg_.enc, rng);
        }
        core_ = TrackerCore(*store_, "core", cfg_, rng);
    }

    // The parameter store lives on the heap: component back-pointers stay
    // valid across moves. Copying would silently alias weights, so it is off.
    TeacherModel(const TeacherModel&) = delete;
    TeacherModel& operator=(const TeacherModel&) = delete;
    TeacherModel(TeacherModel&&) = default;
    TeacherModel& operator=(TeacherModel&&) = default;

    ParamStore& params() { return *store_; }
    const ParamStore& params() const { return *store_; }
    const TrackerConfig& config() const { return cfg_; }
    const ModalityConfig& modalities() const { return mods_; }
    const TrackerCore& core() const { return core_; }
    const ConvEncoder& rgb_encoder() const { return *rgb_; }
    const ConvEncoder& depth_encoder() const { return *depth_; }
    const PromptEncoder& prompt_encoder() const { return prompt_; }
    const LanguageEncoder& language_encoder() const { return *lang_; }
    const V2LAdapter& adapter() const { return *adapter_; }

    // Per-frame input features honoring the modality flags; when both an RGB
    // stream and depth are enabled the grids fuse by element-wise max.
    FeatureMap input_features(const MultimodalSequence& seq, int t) const {
        std::optional<FeatureMap> rgb_fm, depth_fm;
        if (mods_.has_rgb()) {
            const Tensor& frame = mods_.use_enhanced ? seq.frames_enhanced[static_cast<size_t>(t)]
                                                     : seq.frames_raw[static_cast<size_t>(t)];
            rgb_fm = rgb_->forward(frame);
        }
        if (mods_.use_depth)
            depth_fm = depth_->forward(model_detail::depth_as_image(seq.depth[static_cast<size_t>(t)]));
        if (rgb_fm && depth_fm) return fuse_vg(*rgb_fm, *depth_fm);
        return rgb_fm ? std::move(*rgb_fm) : std::move(*depth_fm);
    }

    // Prompt context follows the paper's recipe: box tokens from the frame-1
    // RGB features (depth features when no RGB stream is enabled).
    FeatureMap prompt_context(const MultimodalSequence& seq, int t) const {
        if (mods_.has_rgb()) {
            const Tensor& frame = mods_.use_enhanced ? seq.frames_enhanced[static_cast<size_t>(t)]
                                                     : seq.frames_raw[static_cast<size_t>(t)];
            return rgb_->forward(frame);
        }
        return depth_->forward(model_detail::depth_as_image(seq.depth[static_cast<size_t>(t)]));
    }

    PromptBundle build_prompts(const MultimodalSequence& seq, const Box& init_box, int t0) const {
        PromptBundle out;
        out.visual = prompt_.forward(init_box, prompt_context(seq, t0));
        if (mods_.use_language) {
            out.language = lang_->forward(seq.language);
            out.adapted = adapter_->forward(out.visual);
            TokenSet vl = build_vl_prompt(*out.adapted, *out.language);
            out.decoder = TokenSet{concat_rows({out.visual.tokens, vl.tokens}), TokenKind::VlFused};
        } else {
            out.decoder = out.visual;
        }
        return out;
    }

    // Runs frames [t0, t0+len) as one tracking episode with a fresh memory
    // bank. init_box is the ground-truth box at t0; an absent start frame is
    // rejected because the prompt would be undefined.
    SequenceForward forward(const MultimodalSequence& seq, const Box& init_box, int t0 = 0,
                            int len = -1) const {
        if (len < 0) len = seq.length() - t0;
        if (t0 < 0 || len < 1 || t0 + len > seq.length())
            throw std::invalid_argument("TeacherModel::forward: bad window");
        if (seq.absent[static_cast<size_t>(t0)] || init_box.is_sentinel())
            throw std::invalid_argument("TeacherModel::forward: absent first frame, prompt undefined");
        SequenceForward result;
        result.bank = MemoryBank(cfg_.memory_capacity);
        result.prompts = build_prompts(seq, init_box, t0);
        for (int t = t0; t < t0 + len; ++t) {
            FrameOutput fo;
            fo.input_features = input_features(seq, t);
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
        j["kind"] = "teacher";
        j["tracker"] = model_detail::tracker_config_json(cfg_);
        j["modalities"] = mods_.label();
        return j.dump();
    }

    void save(const std::string& path) const { save_checkpoint(path, *store_, meta_json()); }

    static TeacherModel load(const std::string& path) {
        Checkpoint ck = load_checkpoint(path);
        auto j = nlohmann::json::parse(ck.meta_json);
        if (j.value("kind", "") != "teacher")
            throw std::runtime_error(path + ": not a teacher checkpoint");
        TeacherModel m(model_detail::tracker_config_from_json(j.at("tracker")),
                       ModalityConfig::from_label(j.at("modalities").get<std::string>()), 0);
        restore_params(*m.store_, ck, path);
        return m;
    }

private:
    TrackerConfig cfg_;
    ModalityConfig mods_;
    std::shared_ptr<ParamStore> store_;
    std::optional<ConvEncoder> rgb_, depth_;
    PromptEncoder prompt_;
    std::optional<LanguageEncoder> lang_;
    std::optional<V2LAdapter> adapter_;
    TrackerCore core_;
};

}  // namespace aquatrack
