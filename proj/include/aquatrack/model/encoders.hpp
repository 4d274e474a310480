// Trainable per-modality encoders.
//
// RGB and depth share the same patch-convolution architecture with separate
// weights: `layers` non-overlapping 2x2 stride-2 convolutions with GELU, then
// a linear projection to feature_dim. Valid (pad-free) patches keep constant
// inputs constant across the grid. The prompt encoder turns a bounding box
// plus pooled region features into visual tokens; the language encoder is a
// word-embedding lookup over a fixed vocabulary with hashed fallback buckets;
// the vision-to-language adapter is a token-wise two-layer affine map.
#pragma once

#include "aquatrack/data/types.hpp"
#include "aquatrack/nn/layers.hpp"

namespace aquatrack {

struct EncoderConfig {
    int feature_dim = 64;  // p_r; token_dim is identical by construction
    int grid_h = 8, grid_w = 8;
    int layers = 3;  // image size must equal grid * 2^layers
    int base_channels = 16;
    int n_visual_tokens = 4;
    int max_text_tokens = 16;
    int hash_buckets = 32;

    void validate() const {
        if (feature_dim < 8) throw std::invalid_argument("EncoderConfig: feature_dim must be >= 8");
        if (grid_h < 1 || grid_w < 1 || layers < 1 || base_channels < 1)
            throw std::invalid_argument("EncoderConfig: non-positive size field");
        if (n_visual_tokens < 1 || max_text_tokens < 1 || hash_buckets < 1)
            throw std::invalid_argument("EncoderConfig: non-positive token field");
    }
    int image_h() const { return grid_h << layers; }
    int image_w() const { return grid_w << layers; }
};

// Spatial grid of feature vectors plus a pooled global embedding.
// grid is stored flattened as (h*w x channels); pooled is (1 x channels),
// L2-normalized mean of the grid rows.
struct FeatureMap {
    Var grid;
    Var pooled;
    int h = 0, w = 0, channels = 0;

    int positions() const { return h * w; }
};

inline Var mean_rows(const Var& m) {
    int r = m.value().dim(0);
    Tensor ones({1, r});
    for (int i = 0; i < r; ++i) ones.at(0, i) = 1.0 / r;
    return matmul(Var::constant(std::move(ones)), m);
}

inline FeatureMap make_feature_map(Var grid, int h, int w) {
    FeatureMap fm;
    fm.h = h;
    fm.w = w;
    fm.channels = grid.value().dim(1);
    fm.pooled = l2_normalize(mean_rows(grid));
    fm.grid = std::move(grid);
    return fm;
}

enum class TokenKind { Language, VisualPrompt, Adapted, VlFused };

struct TokenSet {
    Var tokens;  // (n x token_dim)
    TokenKind kind = TokenKind::Language;

    int count() const { return tokens.value().dim(0); }
    int dim() const { return tokens.value().dim(1); }
};

// ---------------------------------------------------------------------------

class ConvEncoder {
public:
    ConvEncoder() = default;
    ConvEncoder(ParamStore& ps, std::string prefix, int in_channels, const EncoderConfig& cfg,
                Rng& rng)
        : ps_(&ps), prefix_(std::move(prefix)), in_channels_(in_channels), cfg_(cfg) {
        cfg_.validate();
        int cin = in_channels_;
        for (int l = 0; l < cfg_.layers; ++l) {
            int cout = cfg_.base_channels << l;
            ps.create(conv_name(l, "w"), init::he_normal(rng, {2 * 2 * cin, cout}, 2 * 2 * cin));
            ps.create(conv_name(l, "b"), Tensor({cout}));
            cin = cout;
        }
        ps.create(prefix_ + ".proj.w", init::xavier(rng, {cin, cfg_.feature_dim}, cin, cfg_.feature_dim));
        ps.create(prefix_ + ".proj.b", Tensor({cfg_.feature_dim}));
    }

    FeatureMap forward(const Var& image) const {
        // Single-channel maps may arrive as (H x W); view them as (H x W x 1).
        if (in_channels_ == 1 && image.value().rank() == 2)
            return forward(reshape(image, {image.value().dim(0), image.value().dim(1), 1}));
        const Tensor& v = image.value();
        if (v.rank() != 3 || v.dim(2) != in_channels_ || v.dim(0) != cfg_.image_h() ||
            v.dim(1) != cfg_.image_w())
            throw std::invalid_argument(prefix_ + ": expected " + std::to_string(cfg_.image_h()) +
                                        "x" + std::to_string(cfg_.image_w()) + "x" +
                                        std::to_string(in_channels_) + " input, got " +
                                        v.shape_str());
        Var x = image;
        for (int l = 0; l < cfg_.layers; ++l)
            x = gelu(conv2d(x, ps_->at(conv_name(l, "w")), ps_->at(conv_name(l, "b")), 2, 2, 0));
        Var flat = reshape(x, {cfg_.grid_h * cfg_.grid_w, x.value().dim(2)});
        Var grid = linear(flat, ps_->at(prefix_ + ".proj.w"), ps_->at(prefix_ + ".proj.b"));
        return make_feature_map(std::move(grid), cfg_.grid_h, cfg_.grid_w);
    }

    FeatureMap forward(const Tensor& image) const { return forward(Var::constant(image)); }

    const EncoderConfig& config() const { return cfg_; }

private:
    std::string conv_name(int l, const char* part) const {
        return prefix_ + ".conv" + std::to_string(l) + "." + part;
    }
    ParamStore* ps_ = nullptr;
    std::string prefix_;
    int in_channels_ = 3;
    EncoderConfig cfg_;
};

// ---------------------------------------------------------------------------

class PromptEncoder {
public:
    static constexpr int kPosFeatures = 36;  // 4 raw + 4 components x 4 freqs x (sin,cos)

    PromptEncoder() = default;
    PromptEncoder(ParamStore& ps, std::string prefix, const EncoderConfig& cfg, Rng& rng)
        : ps_(&ps), prefix_(std::move(prefix)), cfg_(cfg) {
        int p = cfg_.feature_dim;
        ps.create(prefix_ + ".queries", init::embedding(rng, {cfg_.n_visual_tokens, p}));
        ps.create(prefix_ + ".pos.w", init::xavier(rng, {kPosFeatures, p}, kPosFeatures, p));
        ps.create(prefix_ + ".pos.b", Tensor({p}));
        ps.create(prefix_ + ".region.w", init::xavier(rng, {p, p}, p, p));
    }

    // Box in pixel coordinates of the frame the features came from.
    TokenSet forward(const Box& box, const FeatureMap& frame_features) const {
        int H = cfg_.image_h(), W = cfg_.image_w();
        if (box.w <= 0 || box.h <= 0)
            throw std::invalid_argument("PromptEncoder: degenerate box (w or h is zero)");
        if (box.x < 0 || box.y < 0 || box.x + box.w > W || box.y + box.h > H)
            throw std::invalid_argument("PromptEncoder: box outside frame");

        Tensor pos({1, kPosFeatures});
        double vals[4] = {box.cx() / W, box.cy() / H, static_cast<double>(box.w) / W,
                          static_cast<double>(box.h) / H};
        int k = 0;
        for (double v : vals) pos.at(0, k++) = v;
        for (double freq : {1.0, 2.0, 4.0, 8.0})
            for (double v : vals) {
                pos.at(0, k++) = std::sin(2.0 * M_PI * freq * v);
                pos.at(0, k++) = std::cos(2.0 * M_PI * freq * v);
            }

        // Average the grid cells overlapped by the box (at least one cell).
        int hf = frame_features.h, wf = frame_features.w;
        double sy = static_cast<double>(H) / hf, sx = static_cast<double>(W) / wf;
        int gy0 = std::clamp(static_cast<int>(box.y / sy), 0, hf - 1);
        int gy1 = std::clamp(static_cast<int>((box.y + box.h - 1) / sy), gy0, hf - 1);
        int gx0 = std::clamp(static_cast<int>(box.x / sx), 0, wf - 1);
        int gx1 = std::clamp(static_cast<int>((box.x + box.w - 1) / sx), gx0, wf - 1);
        Tensor sel({1, hf * wf});
        int cells = (gy1 - gy0 + 1) * (gx1 - gx0 + 1);
        for (int gy = gy0; gy <= gy1; ++gy)
            for (int gx = gx0; gx <= gx1; ++gx) sel.at(0, gy * wf + gx) = 1.0 / cells;
        Var region = matmul(Var::constant(std::move(sel)), frame_features.grid);

        Var shared = add(linear(Var::constant(std::move(pos)), ps_->at(prefix_ + ".pos.w"),
                                ps_->at(prefix_ + ".pos.b")),
                         matmul(region, ps_->at(prefix_ + ".region.w")));
        Tensor ones({cfg_.n_visual_tokens, 1});
        for (int i = 0; i < cfg_.n_visual_tokens; ++i) ones.at(i, 0) = 1.0;
        Var tokens = add(ps_->at(prefix_ + ".queries"), matmul(Var::constant(std::move(ones)), shared));
        return TokenSet{std::move(tokens), TokenKind::VisualPrompt};
    }

private:
    ParamStore* ps_ = nullptr;
    std::string prefix_;
    EncoderConfig cfg_;
};

// ---------------------------------------------------------------------------

inline const std::vector<std::string>& language_vocabulary() {
    static const std::vector<std::string> vocab = {
        "a",      "the",    "circle", "ellipse", "square", "triangle", "red",
        "orange", "yellow", "green",  "cyan",    "white",  "purple",   "pink",
        "moving", "left",   "right",  "up",      "down"};
    return vocab;
}

class LanguageEncoder {
public:
    LanguageEncoder() = default;
    LanguageEncoder(ParamStore& ps, std::string prefix, const EncoderConfig& cfg, Rng& rng)
        : ps_(&ps), prefix_(std::move(prefix)), cfg_(cfg) {
        int rows = static_cast<int>(language_vocabulary().size()) + cfg_.hash_buckets;
        ps.create(prefix_ + ".embed", init::embedding(rng, {rows, cfg_.feature_dim}));
    }

    // Lowercase whitespace tokenization; out-of-vocabulary words hash into a
    // fixed bucket range. Truncates at max_text_tokens, never pads.
    std::vector<int> token_indices(const std::string& text) const {
        std::vector<int> idx;
        std::string word;
        auto flush = [&] {
            if (word.empty()) return;
            if (static_cast<int>(idx.size()) < cfg_.max_text_tokens) idx.push_back(index_of(word));
            word.clear();
        };
        for (char c : text) {
            if (std::isspace(static_cast<unsigned char>(c))) flush();
            else word.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
        }
        flush();
        if (idx.empty())
            throw std::invalid_argument("LanguageEncoder: empty description");
        return idx;
    }

    TokenSet forward(const std::string& text) const {
        return TokenSet{gather_rows(ps_->at(prefix_ + ".embed"), token_indices(text)),
                        TokenKind::Language};
    }

    int index_of(const std::string& word) const {
        const auto& vocab = language_vocabulary();
        for (size_t i = 0; i < vocab.size(); ++i)
            if (vocab[i] == word) return static_cast<int>(i);
        // FNV-1a over the word bytes.
        uint64_t h = 1469598103934665603ULL;
        for (char c : word) {
            h ^= static_cast<unsigned char>(c);
            h *= 1099511628211ULL;
        }
        return static_cast<int>(vocab.size()) + static_cast<int>(h % cfg_.hash_buckets);
    }

private:
    ParamStore* ps_ = nullptr;
    std::string prefix_;
    EncoderConfig cfg_;
};

// ---------------------------------------------------------------------------

// Token-wise two-layer fully connected map from visual-prompt space into
// language-token space.
class V2LAdapter {
public:
    V2LAdapter() = default;
    V2LAdapter(ParamStore& ps, std::string prefix, const EncoderConfig& cfg, Rng& rng)
        : ps_(&ps), prefix_(std::move(prefix)) {
        int p = cfg.feature_dim;
        ps.create(prefix_ + ".fc1.w", init::xavier(rng, {p, p}, p, p));
        ps.create(prefix_ + ".fc1.b", Tensor({p}));
        ps.create(prefix_ + ".fc2.w", init::xavier(rng, {p, p}, p, p));
        ps.create(prefix_ + ".fc2.b", Tensor({p}));
    }

    TokenSet forward(const TokenSet& visual) const {
        if (visual.kind != TokenKind::VisualPrompt)
            throw std::invalid_argument("V2LAdapter: input tokens must be visual prompts");
        Var h = linear(visual.tokens, ps_->at(prefix_ + ".fc1.w"), ps_->at(prefix_ + ".fc1.b"));
        Var out = linear(h, ps_->at(prefix_ + ".fc2.w"), ps_->at(prefix_ + ".fc2.b"));
        return TokenSet{std::move(out), TokenKind::Adapted};
    }

private:
    ParamStore* ps_ = nullptr;
    std::string prefix_;
};

}  // namespace aquatrack
