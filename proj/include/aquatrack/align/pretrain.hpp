// Stage-I training: visual-geometric alignment of the RGB and depth encoders
// (contrastive + stop-gradient L1), then visual-textual alignment of the
// adapter and prompt encoder against detached language tokens.
#pragma once

#include <ostream>

#include "aquatrack/nn/optim.hpp"
#include "aquatrack/track/teacher.hpp"

namespace aquatrack {

struct AlignTrainConfig {
    AlignmentConfig align;  // tau, batch K, k_pairs
    int steps = 300;
    int vl_steps = 200;
    double lr = 1e-4;
    double weight_decay = 1e-2;
    uint64_t seed = 0;
};

struct AlignStepResult {
    double l_cont = 0, l_l1 = 0, l_pre = 0;
};

// One AdamW step on the RGB and depth encoders for a batch of (rgb, depth)
// frame pairs. Returns the pre-step loss decomposition.
inline AlignStepResult pretrain_align_step(TeacherModel& model,
                                           const std::vector<std::pair<const Tensor*, const Tensor*>>& batch,
                                           double tau, AdamW& opt) {
    if (batch.empty()) throw std::invalid_argument("pretrain_align_step: empty batch");
    std::vector<Var> e_rows, d_rows;
    Var l1_sum = Var::constant(Tensor::scalar(0.0));
    for (const auto& [rgb, depth] : batch) {
        FeatureMap e = model.rgb_encoder().forward(*rgb);
        FeatureMap d = model.depth_encoder().forward(*depth);
        e_rows.push_back(e.pooled);
        d_rows.push_back(d.pooled);
        l1_sum = add(l1_sum, l1_align_loss(d, e));
    }
    Var l_cont = contrastive_loss(concat_rows(e_rows), concat_rows(d_rows), tau);
    Var l_l1 = mul_scalar(l1_sum, 1.0 / static_cast<double>(batch.size()));
    Var l_pre = add(l_l1, l_cont);
    if (!std::isfinite(l_pre.value().item()))
        throw std::runtime_error("pretrain_align_step: non-finite loss (cont=" +
                                 std::to_string(l_cont.value().item()) + ", l1=" +
                                 std::to_string(l_l1.value().item()) + ")");
    model.params().zero_grads();
    l_pre.backward();
    opt.step(model.params(), [](const std::string& name) {
        return name.rfind("enc_rgb.", 0) == 0 || name.rfind("enc_depth.", 0) == 0;
    });
    return {l_cont.value().item(), l_l1.value().item(), l_pre.value().item()};
}

// One AdamW step on the adapter and prompt encoder: top-k visual-textual
// pairing against detached language tokens, averaged over a sequence batch.
inline double vl_align_step(TeacherModel& model,
                            const std::vector<const MultimodalSequence*>& batch, int k_pairs,
                            AdamW& opt) {
    if (batch.empty()) throw std::invalid_argument("vl_align_step: empty batch");
    Var total = Var::constant(Tensor::scalar(0.0));
    for (const MultimodalSequence* seq : batch) {
        TokenSet text = model.language_encoder().forward(seq->language);
        TokenSet visual =
            model.prompt_encoder().forward(seq->boxes[0], model.prompt_context(*seq, 0));
        int k = std::min(k_pairs, text.count() * visual.count());
        auto pairs = select_topk_pairs(text, visual, k);
        total = add(total, vl_align_loss(pairs, text, visual, model.adapter()));
    }
    Var loss = mul_scalar(total, 1.0 / static_cast<double>(batch.size()));
    if (!std::isfinite(loss.value().item()))
        throw std::runtime_error("vl_align_step: non-finite loss");
    model.params().zero_grads();
    loss.backward();
    opt.step(model.params(), [](const std::string& name) {
        return name.rfind("adapter.", 0) == 0 || name.rfind("prompt.", 0) == 0;
    });
    return loss.value().item();
}

// Full Stage-I schedule. Emits per-step CSV rows "step,L_cont,L_l1,L_pre" to
// align_log and "step,L_vl" to vl_log when streams are given.
inline AlignStepResult pretrain_align(TeacherModel& model,
                                      const std::vector<MultimodalSequence>& train,
                                      const AlignTrainConfig& cfg, std::ostream* align_log,
                                      std::ostream* vl_log) {
    cfg.align.validate();
    if (train.empty()) throw std::invalid_argument("pretrain_align: empty training set");
    if (!model.modalities().has_rgb() || !model.modalities().use_depth)
        throw std::invalid_argument(
            "pretrain_align: teacher must enable an RGB stream and depth");
    Rng rng(Rng::mix(cfg.seed, 0xa119ULL));

    std::vector<std::pair<int, int>> frame_pool;  // (sequence, frame)
    for (size_t s = 0; s < train.size(); ++s)
        for (int t = 0; t < train[s].length(); ++t) frame_pool.emplace_back(static_cast<int>(s), t);

    OptimConfig oc;
    oc.lr = cfg.lr;
    oc.weight_decay = cfg.weight_decay;
    AdamW opt(oc);
    if (align_log) *align_log << "step,L_cont,L_l1,L_pre\n";
    AlignStepResult last;
    const bool use_enh = model.modalities().use_enhanced;
    for (int step = 0; step < cfg.steps; ++step) {
        std::vector<std::pair<const Tensor*, const Tensor*>> batch;
        for (int b = 0; b < cfg.align.batch; ++b) {
            auto [s, t] = frame_pool[static_cast<size_t>(
                rng.uniform_int(0, static_cast<int>(frame_pool.size()) - 1))];
            const auto& seq = train[static_cast<size_t>(s)];
            const Tensor& rgb = use_enh ? seq.frames_enhanced[static_cast<size_t>(t)]
                                        : seq.frames_raw[static_cast<size_t>(t)];
            batch.emplace_back(&rgb, &seq.depth[static_cast<size_t>(t)]);  // rank-2, auto-viewed
        }
        last = pretrain_align_step(model, batch, cfg.align.tau, opt);
        if (align_log)
            *align_log << step << "," << last.l_cont << "," << last.l_l1 << "," << last.l_pre
                       << "\n";
    }

    if (model.modalities().use_language && cfg.vl_steps > 0) {
        AdamW vl_opt(oc);
        if (vl_log) *vl_log << "step,L_vl\n";
        for (int step = 0; step < cfg.vl_steps; ++step) {
            std::vector<const MultimodalSequence*> batch;
            for (int b = 0; b < cfg.align.batch; ++b)
                batch.push_back(&train[static_cast<size_t>(
                    rng.uniform_int(0, static_cast<int>(train.size()) - 1))]);
            double l = vl_align_step(model, batch, cfg.align.k_pairs, vl_opt);
            if (vl_log) *vl_log << step << "," << l << "\n";
        }
    }
    return last;
}

}  // namespace aquatrack
