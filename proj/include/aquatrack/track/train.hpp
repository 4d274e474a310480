// Stage-II teacher finetuning (segmentation loss over sampled windows) and
// Stage-III distillation (student mimics a frozen teacher on synchronized
// windows). Windows are contiguous frame runs starting at a visible frame;
// the window's ground-truth start box serves as the episode prompt.
#pragma once

#include <ostream>

#include "aquatrack/nn/optim.hpp"
#include "aquatrack/track/student.hpp"

namespace aquatrack {

struct TrainSchedule {
    int epochs = 8;
    int window = 8;
    double lr = 5e-5;
    bool cosine_decay = true;
    double weight_decay = 1e-2;
    uint64_t seed = 0;
    // "all": every parameter trains. "core": only the tracker core trains.
    // "heads": everything except the stage-one-aligned RGB/depth encoders
    // trains, preserving the aligned feature space through this stage.
    std::string train_scope = "all";

    void validate() const {
        if (epochs < 1 || window < 1) throw std::invalid_argument("TrainSchedule: bad sizes");
        if (lr < 0) throw std::invalid_argument("TrainSchedule: negative lr");
        if (train_scope != "all" && train_scope != "core" && train_scope != "heads")
            throw std::invalid_argument("TrainSchedule: unknown train_scope '" + train_scope + "'");
    }
};

namespace train_detail {

// Random window start among visible frames (the prompt needs a real box).
inline int sample_window_start(const MultimodalSequence& seq, int window, Rng& rng) {
    std::vector<int> starts;
    int last = std::max(0, seq.length() - window);
    for (int t = 0; t <= last; ++t)
        if (!seq.absent[static_cast<size_t>(t)]) starts.push_back(t);
    if (starts.empty()) {
        for (int t = 0; t < seq.length(); ++t)
            if (!seq.absent[static_cast<size_t>(t)]) starts.push_back(t);
    }
    if (starts.empty())
        throw std::runtime_error("sample_window_start: sequence " + seq.id +
                                 " has no visible frames");
    return starts[static_cast<size_t>(rng.uniform_int(0, static_cast<int>(starts.size()) - 1))];
}

}  // namespace train_detail

struct TeacherTrainRow {
    int epoch = 0, step = 0;
    double seg_loss = 0, lr = 0;
};

// Minimizes the mean segmentation loss over window frames. Returns the
// per-step log; also streams "epoch,step,seg_loss,lr" CSV rows.
inline std::vector<TeacherTrainRow> finetune_teacher(TeacherModel& model,
                                                     const std::vector<MultimodalSequence>& train,
                                                     const TrainSchedule& sched,
                                                     std::ostream* log_csv) {
    sched.validate();
    if (train.empty()) throw std::invalid_argument("finetune_teacher: empty training set");
    Rng rng(Rng::mix(sched.seed, 0x7eacULL));
    OptimConfig oc;
    oc.lr = sched.lr;
    oc.weight_decay = sched.weight_decay;
    oc.cosine_decay = sched.cosine_decay;
    oc.total_steps = static_cast<int64_t>(sched.epochs) * static_cast<int64_t>(train.size());
    AdamW opt(oc);
    if (log_csv) *log_csv << "epoch,step,seg_loss,lr\n";

    std::vector<TeacherTrainRow> rows;
    std::vector<int> order(train.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    int step = 0;
    for (int epoch = 0; epoch < sched.epochs; ++epoch) {
        rng.shuffle(order.begin(), order.end());
        for (int si : order) {
            const auto& seq = train[static_cast<size_t>(si)];
            int t0 = train_detail::sample_window_start(seq, sched.window, rng);
            int len = std::min(sched.window, seq.length() - t0);
            auto fwd = model.forward(seq, seq.boxes[static_cast<size_t>(t0)], t0, len);
            Var loss = Var::constant(Tensor::scalar(0.0));
            for (int t = 0; t < len; ++t)
                loss = add(loss, segmentation_loss(fwd.frames[static_cast<size_t>(t)].logits,
                                                   seq.masks[static_cast<size_t>(t0 + t)]));
            loss = mul_scalar(loss, 1.0 / len);
            double lv = loss.value().item();
            if (!std::isfinite(lv))
                throw std::runtime_error("finetune_teacher: non-finite loss at epoch " +
                                         std::to_string(epoch) + " step " + std::to_string(step));
            double lr_now = opt.current_lr();
            model.params().zero_grads();
            loss.backward();
            if (sched.train_scope == "core") {
                opt.step(model.params(),
                         [](const std::string& name) { return name.rfind("core.", 0) == 0; });
            } else if (sched.train_scope == "heads") {
                opt.step(model.params(), [](const std::string& name) {
                    return name.rfind("enc_rgb.", 0) != 0 && name.rfind("enc_depth.", 0) != 0;
                });
            } else {
                opt.step(model.params());
            }
            rows.push_back({epoch, step, lv, lr_now});
            if (log_csv) *log_csv << epoch << "," << step << "," << lv << "," << lr_now << "\n";
            ++step;
        }
    }
    return rows;
}

// ---------------------------------------------------------------------------

struct DistillSchedule {
    TrainSchedule base;
    KDConfig kd;
    bool init_from_teacher = true;
    // "all": update every student parameter; "encoder": only the RGB encoder
    // adapts (the transplanted tracker core stays at teacher weights).
    std::string train_scope = "all";
};

struct DistillRow {
    int epoch = 0, step = 0;
    double l_vg = 0, l_att = 0, l_vla = 0, l_mask = 0, total = 0, lr = 0;
};

// Per-window KD losses between a frozen teacher pass and the student pass on
// the same frames. vg/att/mask average over frames; the adapter term is one
// per window (prompts are window-level).
inline KDLosses window_kd_losses(const SequenceForward& teacher_fwd,
                                 const SequenceForward& student_fwd) {
    size_t len = teacher_fwd.frames.size();
    if (len != student_fwd.frames.size())
        throw std::invalid_argument("window_kd_losses: window length mismatch");
    KDLosses out;
    out.vg = Var::constant(Tensor::scalar(0.0));
    out.att = Var::constant(Tensor::scalar(0.0));
    out.mask = Var::constant(Tensor::scalar(0.0));
    for (size_t t = 0; t < len; ++t) {
        out.vg = add(out.vg, kd_vg_loss(student_fwd.frames[t].input_features,
                                        teacher_fwd.frames[t].input_features));
        out.att = add(out.att,
                      kd_attention_loss(teacher_fwd.frames[t].trace, student_fwd.frames[t].trace));
        out.mask = add(out.mask,
                       kd_mask_loss(teacher_fwd.frames[t].logits, student_fwd.frames[t].logits));
    }
    double inv = 1.0 / static_cast<double>(len);
    out.vg = mul_scalar(out.vg, inv);
    out.att = mul_scalar(out.att, inv);
    out.mask = mul_scalar(out.mask, inv);
    if (teacher_fwd.prompts.adapted && student_fwd.prompts.adapted) {
        out.vla = kd_vla_loss(*teacher_fwd.prompts.adapted, *student_fwd.prompts.adapted);
    } else {
        out.vla = Var::constant(Tensor::scalar(0.0));
    }
    return out;
}

inline std::vector<DistillRow> distill(const TeacherModel& teacher, StudentModel& student,
                                       const std::vector<MultimodalSequence>& train,
                                       const DistillSchedule& sched, std::ostream* log_csv) {
    sched.base.validate();
    sched.kd.validate();
    if (train.empty()) throw std::invalid_argument("distill: empty training set");
    if (sched.init_from_teacher) student.init_from_teacher(teacher);
    Rng rng(Rng::mix(sched.base.seed, 0xd157ULL));
    OptimConfig oc;
    oc.lr = sched.base.lr;
    oc.weight_decay = sched.base.weight_decay;
    oc.cosine_decay = sched.base.cosine_decay;
    oc.total_steps = static_cast<int64_t>(sched.base.epochs) * static_cast<int64_t>(train.size());
    AdamW opt(oc);
    if (log_csv) *log_csv << "epoch,step,L_VG,L_A,L_VLA,L_M,L_KD,lr\n";

    std::vector<DistillRow> rows;
    std::vector<int> order(train.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    int step = 0;
    for (int epoch = 0; epoch < sched.base.epochs; ++epoch) {
        rng.shuffle(order.begin(), order.end());
        for (int si : order) {
            const auto& seq = train[static_cast<size_t>(si)];
            int t0 = train_detail::sample_window_start(seq, sched.base.window, rng);
            int len = std::min(sched.base.window, seq.length() - t0);
            const Box& b0 = seq.boxes[static_cast<size_t>(t0)];
            SequenceForward teacher_fwd;
            {
                NoGradGuard ng;  // frozen teacher
                teacher_fwd = teacher.forward(seq, b0, t0, len);
            }
            SequenceForward student_fwd = student.forward(seq.frames_raw, b0, t0, len);
            KDLosses losses = window_kd_losses(teacher_fwd, student_fwd);
            Var total = kd_total(losses, sched.kd);
            double tv = total.value().item();
            if (!std::isfinite(tv))
                throw std::runtime_error("distill: non-finite loss at epoch " +
                                         std::to_string(epoch) + " step " + std::to_string(step));
            double lr_now = opt.current_lr();
            student.params().zero_grads();
            total.backward();
            if (sched.train_scope == "encoder") {
                opt.step(student.params(), [](const std::string& name) {
                    return name.rfind("enc_rgb.", 0) == 0;
                });
            } else if (sched.train_scope == "all") {
                opt.step(student.params());
            } else {
                throw std::invalid_argument("distill: unknown train_scope '" + sched.train_scope +
                                            "'");
            }
            DistillRow row{epoch,
                           step,
                           losses.vg.value().item(),
                           losses.att.value().item(),
                           losses.vla.value().item(),
                           losses.mask.value().item(),
                           tv,
                           lr_now};
            rows.push_back(row);
            if (log_csv)
                *log_csv << epoch << "," << step << "," << row.l_vg << "," << row.l_att << ","
                         << row.l_vla << "," << row.l_mask << "," << row.total << "," << row.lr
                         << "\n";
            ++step;
        }
    }
    return rows;
}

// Mean KD components over full held-out sequences (teacher and student both
// frozen); `total` honors the config's weights and enable flags.
struct KDEval {
    double vg = 0, att = 0, vla = 0, mask = 0, total = 0;
};

inline KDEval eval_kd(const TeacherModel& teacher, const StudentModel& student,
                      const std::vector<MultimodalSequence>& dataset, const KDConfig& kd) {
    if (dataset.empty()) throw std::invalid_argument("eval_kd: empty dataset");
    NoGradGuard ng;
    KDEval out;
    for (const auto& seq : dataset) {
        auto tf = teacher.forward(seq, seq.boxes[0]);
        auto sf = student.forward(seq.frames_raw, seq.boxes[0]);
        KDLosses losses = window_kd_losses(tf, sf);
        out.vg += losses.vg.value().item() / dataset.size();
        out.att += losses.att.value().item() / dataset.size();
        out.vla += losses.vla.value().item() / dataset.size();
        out.mask += losses.mask.value().item() / dataset.size();
        out.total += kd_total(losses, kd).value().item() / dataset.size();
    }
    return out;
}

}  // namespace aquatrack
