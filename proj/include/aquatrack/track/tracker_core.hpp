// Shared tracking machinery: FIFO memory bank, memory cross-attention,
// prompt-conditioned mask decoder with an upsampling head, memory encoder,
// and the focal + dice segmentation loss. Both the multimodal teacher and the
// RGB-only student instantiate this core with their own weights.
#pragma once

#include <deque>
#include <optional>

#include "aquatrack/align/losses.hpp"

namespace aquatrack {

struct TrackerConfig {
    EncoderConfig enc;
    int memory_capacity = 6;  // C
    int attention_layers = 2;  // L
    int decoder_blocks = 1;

    void validate() const {
        enc.validate();
        if (memory_capacity < 1) throw std::invalid_argument("TrackerConfig: memory_capacity < 1");
        if (attention_layers < 1) throw std::invalid_argument("TrackerConfig: attention_layers < 1");
        if (decoder_blocks < 1) throw std::invalid_argument("TrackerConfig: decoder_blocks < 1");
    }
};

// Which modalities feed the teacher. The RGB stream comes from enhanced
// frames when use_enhanced is set, else from raw frames when use_raw is set.
struct ModalityConfig {
    bool use_raw = false;       // I
    bool use_enhanced = true;   // E
    bool use_depth = true;      // D
    bool use_language = true;   // L

    void validate() const {
        if (use_raw && use_enhanced)
            throw std::invalid_argument("ModalityConfig: raw and enhanced RGB are exclusive");
        if (!use_raw && !use_enhanced && !use_depth)
            throw std::invalid_argument("ModalityConfig: no input modality enabled");
    }

    bool has_rgb() const { return use_raw || use_enhanced; }

    std::string label() const {
        std::string s;
        auto app = [&s](const char* m) {
            if (!s.empty()) s += "+";
            s += m;
        };
        if (use_raw) app("I");
        if (use_enhanced) app("E");
        if (use_depth) app("D");
        if (use_language) app("L");
        return s;
    }

    static ModalityConfig from_label(const std::string& label) {
        ModalityConfig m{false, false, false, false};
        std::string cur;
        auto apply = [&](const std::string& tok) {
            if (tok == "I") m.use_raw = true;
            else if (tok == "E") m.use_enhanced = true;
            else if (tok == "D") m.use_depth = true;
            else if (tok == "L") m.use_language = true;
            else throw std::invalid_argument("ModalityConfig: unknown modality '" + tok + "'");
        };
        for (char c : label) {
            if (c == '+') {
                apply(cur);
                cur.clear();
            } else {
                cur.push_back(c);
            }
        }
        if (!cur.empty()) apply(cur);
        m.validate();
        return m;
    }
};

struct MaskLogits {
    Var logits;  // (H' x W')
    int h() const { return logits.value().dim(0); }
    int w() const { return logits.value().dim(1); }
};

// Row-stochastic attention matrices, one per memory-attention layer.
struct AttentionTrace {
    std::vector<Var> layers;
};

struct MemoryEntry {
    FeatureMap features;  // conditioned features
    Var mask_embed;       // (h*w x p)
    int frame_index = 0;
};

class MemoryBank {
public:
    explicit MemoryBank(int capacity = 6) : capacity_(capacity) {
        if (capacity < 1) throw std::invalid_argument("MemoryBank: capacity must be >= 1");
    }

    void push(MemoryEntry entry) {
        if (!entries_.empty() && entry.frame_index <= entries_.back().frame_index)
            throw std::logic_error("MemoryBank: frame_index must be strictly increasing");
        entries_.push_back(std::move(entry));
        if (static_cast<int>(entries_.size()) > capacity_) entries_.pop_front();
    }

    const std::deque<MemoryEntry>& entries() const { return entries_; }
    bool empty() const { return entries_.empty(); }
    int size() const { return static_cast<int>(entries_.size()); }
    int capacity() const { return capacity_; }

private:
    std::deque<MemoryEntry> entries_;
    int capacity_;
};

// ---------------------------------------------------------------------------

// Focal (alpha=0.25, gamma=2) plus squared-denominator dice, equally
// weighted. Zero in the limit of saturated-correct logits; both-empty inputs
// contribute zero dice.
inline Var segmentation_loss(const MaskLogits& logits, const Tensor& gt_mask) {
    require_same_shape(logits.logits.value(), gt_mask, "segmentation_loss");
    constexpr double alpha = 0.25;
    const Var& x = logits.logits;
    Var y = Var::constant(gt_mask);
    Var one_minus_y = Var::constant([&] {
        Tensor t = gt_mask;
        for (int64_t i = 0; i < t.size(); ++i) t[i] = 1.0 - t[i];
        return t;
    }());

    Var p = sigmoid(x);
    Var one_minus_p = add_scalar(neg(p), 1.0);
    // -log sigmoid(x) = softplus(-x);  -log(1 - sigmoid(x)) = softplus(x)
    Var pos = mul_scalar(mul(square(one_minus_p), softplus(neg(x))), alpha);
    Var negt = mul_scalar(mul(square(p), softplus(x)), 1.0 - alpha);
    Var focal = mean(add(mul(y, pos), mul(one_minus_y, negt)));

    // Squared-denominator dice. The smoothing constant keeps the empty-vs-
    // near-empty case at ~0 instead of collapsing to 1; it is small enough to
    // leave moderate-size masks unchanged to better than 1e-12.
    constexpr double smooth = 1e-12;
    double gt_sq = 0;
    for (int64_t i = 0; i < gt_mask.size(); ++i) gt_sq += gt_mask[i] * gt_mask[i];
    Var num = add_scalar(mul_scalar(sum(mul(p, y)), 2.0), smooth);
    Var den = add_scalar(sum(square(p)), gt_sq + smooth);
    Var dice = maximum(add_scalar(neg(divv(num, den)), 1.0), Var::constant(Tensor::scalar(0.0)));
    return add(focal, dice);
}

// ---------------------------------------------------------------------------

class TrackerCore {
public:
    TrackerCore() = default;
    TrackerCore(ParamStore& ps, std::string prefix, const TrackerConfig& cfg, Rng& rng)
        : ps_(&ps), prefix_(std::move(prefix)), cfg_(cfg) {
        cfg_.validate();
        const int p = cfg_.enc.feature_dim;
        const int hw = cfg_.enc.grid_h * cfg_.enc.grid_w;
        ps.create(prefix_ + ".pos", init::embedding(rng, {hw, p}));
        ps.create(prefix_ + ".null_token", init::embedding(rng, {1, p}));
        for (int l = 0; l < cfg_.attention_layers; ++l) {
            for (const char* part : {"wq", "wk", "wv"})
                ps.create(attn_name(l, part), init::xavier(rng, {p, p}, p, p));
            ps.create(attn_name(l, "wo"), Tensor({p, p}));  // zero: residual no-op at init
        }
        for (int b = 0; b < cfg_.decoder_blocks; ++b)
            for (const char* dir : {"t2i", "i2t"}) {
                for (const char* part : {"wq", "wk", "wv"})
                    ps.create(dec_attn_name(b, dir, part), init::xavier(rng, {p, p}, p, p));
                ps.create(dec_attn_name(b, dir, "wo"), Tensor({p, p}));
            }
        ps.create(prefix_ + ".dec.mask_token", init::embedding(rng, {1, p}));
        int cin = p;
        for (int s = 0; s < cfg_.enc.layers; ++s) {
            int cout = up_channels(s);
            ps.create(up_name(s, "w"), init::he_normal(rng, {3 * 3 * cin, cout}, 3 * 3 * cin));
            ps.create(up_name(s, "b"), Tensor({cout}));
            cin = cout;
        }
        ps.create(prefix_ + ".dec.hyper.fc1.w", init::xavier(rng, {p, p}, p, p));
        ps.create(prefix_ + ".dec.hyper.fc1.b", Tensor({p}));
        ps.create(prefix_ + ".dec.hyper.fc2.w", init::xavier(rng, {p, cin}, p, cin));
        ps.create(prefix_ + ".dec.hyper.fc2.b", Tensor({cin}));
        ps.create(prefix_ + ".dec.logit_bias", Tensor({1}));
        ps.create(prefix_ + ".mem.feat.w", init::he_normal(rng, {3 * 3 * p, p}, 3 * 3 * p));
        ps.create(prefix_ + ".mem.feat.b", Tensor({p}));
        ps.create(prefix_ + ".mem.pool.w", init::embedding(rng, {1, p}));
    }

    const TrackerConfig& config() const { return cfg_; }

    // L layers of cross-attention from the current grid to all memory
    // positions. An empty bank attends to a learned null token, making the
    // trace a single uniform column.
    std::pair<FeatureMap, AttentionTrace> memory_attend(const FeatureMap& current,
                                                        const MemoryBank& bank) const {
        check_grid(current, "memory_attend");
        Var x = add(current.grid, ps_->at(prefix_ + ".pos"));
        Var memory;
        if (bank.empty()) {
            memory = ps_->at(prefix_ + ".null_token");
        } else {
            std::vector<Var> tokens;
            for (const auto& entry : bank.entries())
                tokens.push_back(add(add(entry.features.grid, entry.mask_embed),
                                     ps_->at(prefix_ + ".pos")));
            memory = concat_rows(tokens);
        }
        AttentionTrace trace;
        for (int l = 0; l < cfg_.attention_layers; ++l) {
            auto res = cross_attention(x, memory, ps_->at(attn_name(l, "wq")),
                                       ps_->at(attn_name(l, "wk")), ps_->at(attn_name(l, "wv")),
                                       ps_->at(attn_name(l, "wo")));
            x = res.out;
            trace.layers.push_back(res.attn);
        }
        return {make_feature_map(std::move(x), current.h, current.w), std::move(trace)};
    }

    // Two-way attention between prompt tokens and the grid, then an
    // upsampling head whose per-pixel features are dotted with a mask
    // embedding predicted from the mask token.
    MaskLogits decode_mask(const FeatureMap& conditioned, const TokenSet& prompts) const {
        check_grid(conditioned, "decode_mask");
        if (prompts.count() < 1) throw std::invalid_argument("decode_mask: empty prompt set");
        if (prompts.dim() != cfg_.enc.feature_dim)
            throw std::invalid_argument("decode_mask: prompt dim mismatch");
        Var tokens = concat_rows({ps_->at(prefix_ + ".dec.mask_token"), prompts.tokens});
        Var grid = add(conditioned.grid, ps_->at(prefix_ + ".pos"));
        for (int b = 0; b < cfg_.decoder_blocks; ++b) {
            tokens = cross_attention(tokens, grid, ps_->at(dec_attn_name(b, "t2i", "wq")),
                                     ps_->at(dec_attn_name(b, "t2i", "wk")),
                                     ps_->at(dec_attn_name(b, "t2i", "wv")),
                                     ps_->at(dec_attn_name(b, "t2i", "wo")))
                         .out;
            grid = cross_attention(grid, tokens, ps_->at(dec_attn_name(b, "i2t", "wq")),
                                   ps_->at(dec_attn_name(b, "i2t", "wk")),
                                   ps_->at(dec_attn_name(b, "i2t", "wv")),
                                   ps_->at(dec_attn_name(b, "i2t", "wo")))
                       .out;
        }
        Var mask_tok = slice_rows(tokens, 0, 1);
        Var hyper = linear(gelu(linear(mask_tok, ps_->at(prefix_ + ".dec.hyper.fc1.w"),
                                       ps_->at(prefix_ + ".dec.hyper.fc1.b"))),
                           ps_->at(prefix_ + ".dec.hyper.fc2.w"),
                           ps_->at(prefix_ + ".dec.hyper.fc2.b"));

        Var up = reshape(grid, {cfg_.enc.grid_h, cfg_.enc.grid_w, cfg_.enc.feature_dim});
        for (int s = 0; s < cfg_.enc.layers; ++s) {
            up = conv2d(upsample2x(up), ps_->at(up_name(s, "w")), ps_->at(up_name(s, "b")), 3, 1, 1);
            if (s + 1 < cfg_.enc.layers) up = gelu(up);
        }
        int H = cfg_.enc.image_h(), W = cfg_.enc.image_w();
        Var flat = reshape(up, {H * W, up.value().dim(2)});
        Var logits = add_rowvec(matmul(flat, transpose2d(hyper)),
                                ps_->at(prefix_ + ".dec.logit_bias"));
        return MaskLogits{reshape(logits, {H, W})};
    }

    // Downsamples the probability map to grid resolution and fuses it with
    // the conditioned features through a small conv head.
    Var encode_memory(const FeatureMap& conditioned, const MaskLogits& logits) const {
        check_grid(conditioned, "encode_memory");
        int H = logits.h(), W = logits.w();
        int fy = H / cfg_.enc.grid_h, fx = W / cfg_.enc.grid_w;
        if (fy * cfg_.enc.grid_h != H || fx * cfg_.enc.grid_w != W || fy != fx)
            throw std::invalid_argument("encode_memory: logits not an integer multiple of grid");
        Var prob = reshape(sigmoid(logits.logits), {H, W, 1});
        Var pooled = reshape(avgpool(prob, fy), {cfg_.enc.grid_h * cfg_.enc.grid_w, 1});
        Var feats3 = reshape(conditioned.grid,
                             {cfg_.enc.grid_h, cfg_.enc.grid_w, cfg_.enc.feature_dim});
        Var conv = conv2d(feats3, ps_->at(prefix_ + ".mem.feat.w"), ps_->at(prefix_ + ".mem.feat.b"),
                          3, 1, 1);
        Var conv_flat = reshape(conv, {cfg_.enc.grid_h * cfg_.enc.grid_w, cfg_.enc.feature_dim});
        return add(conv_flat, matmul(pooled, ps_->at(prefix_ + ".mem.pool.w")));
    }

private:
    void check_grid(const FeatureMap& fm, const char* where) const {
        if (fm.h != cfg_.enc.grid_h || fm.w != cfg_.enc.grid_w ||
            fm.channels != cfg_.enc.feature_dim)
            throw std::invalid_argument(std::string(where) + ": feature grid mismatch");
    }
    int up_channels(int stage) const {
        return std::max(cfg_.enc.feature_dim >> (stage + 1), 4);
    }
    std::string attn_name(int l, const char* part) const {
        return prefix_ + ".attn" + std::to_string(l) + "." + part;
    }
    std::string dec_attn_name(int b, const char* dir, const char* part) const {
        return prefix_ + ".dec.block" + std::to_string(b) + "." + dir + "." + part;
    }
    std::string up_name(int s, const char* part) const {
        return prefix_ + ".dec.up" + std::to_string(s) + "." + part;
    }

    ParamStore* ps_ = nullptr;
    std::string prefix_;
    TrackerConfig cfg_;
};

}  // namespace aquatrack
