// aquatrack: command-line driver for dataset generation, the three training
// stages, evaluation, ablation grids, and plot emission.
//
// Usage: aquatrack <command> [--config file] [--key value ...]
//   commands: generate | pretrain-align | train-teacher | distill | eval |
//             ablate | plot
//
// Settings come from an optional flat config file (`key = value`, '#'
// comments) overridden by command-line pairs. Unknown keys are rejected.
// Every run writes a resolved-config manifest into its output directory.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "aquatrack/align/pretrain.hpp"
#include "aquatrack/data/generate.hpp"
#include "aquatrack/data/io.hpp"
#include "aquatrack/eval/runner.hpp"
#include "aquatrack/track/train.hpp"

namespace fs = std::filesystem;
using namespace aquatrack;

namespace {

enum class OptType { Int, Uint, Float, Bool, String };

struct OptionSpec {
    std::string key;
    OptType type;
    std::string default_value;  // empty + required=true means must be given
    std::string help;
    bool required = false;
};

class RunConfig {
public:
    RunConfig(std::string command, std::vector<OptionSpec> schema)
        : command_(std::move(command)), schema_(std::move(schema)) {
        for (const auto& s : schema_) values_[s.key] = s.default_value;
    }

    const OptionSpec& spec_for(const std::string& key) const {
        for (const auto& s : schema_)
            if (s.key == key) return s;
        throw std::invalid_argument("unknown key '" + key + "' for command '" + command_ + "'");
    }

    void set(const std::string& key, const std::string& value) {
        const OptionSpec& spec = spec_for(key);
        validate_type(spec, value);
        values_[key] = value;
    }

    void load_file(const std::string& path) {
        std::ifstream is(path);
        if (!is) throw std::runtime_error("cannot open config file: " + path);
        std::string line;
        int lineno = 0;
        while (std::getline(is, line)) {
            ++lineno;
            auto hash = line.find('#');
            if (hash != std::string::npos) line = line.substr(0, hash);
            auto trim = [](std::string s) {
                size_t a = s.find_first_not_of(" \t\r");
                size_t b = s.find_last_not_of(" \t\r");
                return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
            };
            std::string t = trim(line);
            if (t.empty()) continue;
            auto eq = t.find('=');
            if (eq == std::string::npos)
                throw std::runtime_error(path + " line " + std::to_string(lineno) +
                                         ": expected 'key = value'");
            set(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
        }
    }

    void finalize() const {
        for (const auto& s : schema_)
            if (s.required && values_.at(s.key).empty())
                throw std::invalid_argument("missing required option --" + s.key + " for '" +
                                            command_ + "'");
    }

    int geti(const std::string& key) const { return std::stoi(values_.at(key)); }
    uint64_t getu(const std::string& key) const { return std::stoull(values_.at(key)); }
    double getf(const std::string& key) const { return std::stod(values_.at(key)); }
    bool getb(const std::string& key) const {
        const std::string& v = values_.at(key);
        return v == "1" || v == "true" || v == "yes" || v == "on";
    }
    const std::string& gets(const std::string& key) const { return values_.at(key); }

    void write_manifest(const fs::path& out_dir) const {
        fs::create_directories(out_dir);
        std::ofstream os(out_dir / "config_resolved.txt");
        os << "# resolved configuration for '" << command_ << "'\n";
        os << "command = " << command_ << "\n";
        for (const auto& [k, v] : values_) os << k << " = " << v << "\n";
    }

    void print_help(std::ostream& os) const {
        os << "options for '" << command_ << "':\n";
        for (const auto& s : schema_) {
            os << "  --" << s.key;
            if (!s.default_value.empty()) os << " (default " << s.default_value << ")";
            if (s.required) os << " (required)";
            os << "\n      " << s.help << "\n";
        }
    }

private:
    static void validate_type(const OptionSpec& spec, const std::string& value) {
        try {
            size_t pos = 0;
            switch (spec.type) {
                case OptType::Int:
                    (void)std::stoi(value, &pos);
                    if (pos != value.size()) throw std::invalid_argument("");
                    break;
                case OptType::Uint:
                    (void)std::stoull(value, &pos);
                    if (pos != value.size()) throw std::invalid_argument("");
                    break;
                case OptType::Float:
                    (void)std::stod(value, &pos);
                    if (pos != value.size()) throw std::invalid_argument("");
                    break;
                case OptType::Bool:
                    if (value != "0" && value != "1" && value != "true" && value != "false" &&
                        value != "yes" && value != "no" && value != "on" && value != "off")
                        throw std::invalid_argument("");
                    break;
                case OptType::String:
                    break;
            }
        } catch (const std::exception&) {
            throw std::invalid_argument("bad value '" + value + "' for --" + spec.key);
        }
    }

    std::string command_;
    std::vector<OptionSpec> schema_;
    std::map<std::string, std::string> values_;
};

RunConfig parse_args(const std::string& command, std::vector<OptionSpec> schema, int argc,
                     char** argv) {
    RunConfig cfg(command, std::move(schema));
    // First pass: find --config so file values sit below CLI overrides.
    for (int i = 0; i < argc; ++i) {
        std::string a = argv[i];
        if (a == "--config") {
            if (i + 1 >= argc) throw std::invalid_argument("--config needs a path");
            cfg.load_file(argv[i + 1]);
        }
    }
    for (int i = 0; i < argc; ++i) {
        std::string a = argv[i];
        if (a == "--help" || a == "-h") {
            cfg.print_help(std::cout);
            std::exit(0);
        }
        if (a.rfind("--", 0) != 0)
            throw std::invalid_argument("unexpected argument '" + a + "'");
        std::string key = a.substr(2);
        std::string value;
        auto eq = key.find('=');
        if (eq != std::string::npos) {
            value = key.substr(eq + 1);
            key = key.substr(0, eq);
        } else {
            if (i + 1 >= argc) throw std::invalid_argument("option --" + key + " needs a value");
            value = argv[++i];
        }
        if (key == "config") continue;  // handled above
        cfg.set(key, value);
    }
    cfg.finalize();
    return cfg;
}

std::string default_data_root() {
    const char* env = std::getenv("AQUATRACK_DATA");
    return env ? env : "data";
}

std::vector<MultimodalSequence> load_dataset(const std::string& root) {
    std::vector<MultimodalSequence> out;
    for (const std::string& dir : list_sequence_dirs(root)) out.push_back(load_sequence(dir));
    if (out.empty()) throw std::runtime_error("no sequences found under " + root);
    return out;
}

// Shared model-geometry options for the training commands.
std::vector<OptionSpec> model_options() {
    return {
        {"feature_dim", OptType::Int, "32", "feature/token dimension p_r"},
        {"feature_grid", OptType::Int, "8", "feature grid side (h_f = w_f)"},
        {"memory_capacity", OptType::Int, "6", "memory bank capacity C"},
        {"attention_layers", OptType::Int, "2", "memory-attention layers L"},
        {"decoder_blocks", OptType::Int, "1", "two-way decoder blocks"},
        {"n_visual_tokens", OptType::Int, "4", "visual prompt tokens n_v"},
    };
}

TrackerConfig tracker_config_from(const RunConfig& cfg, int image_w, int image_h) {
    TrackerConfig tc;
    tc.enc.feature_dim = cfg.geti("feature_dim");
    tc.enc.grid_h = tc.enc.grid_w = cfg.geti("feature_grid");
    tc.enc.n_visual_tokens = cfg.geti("n_visual_tokens");
    tc.memory_capacity = cfg.geti("memory_capacity");
    tc.attention_layers = cfg.geti("attention_layers");
    tc.decoder_blocks = cfg.geti("decoder_blocks");
    if (image_w != image_h)
        throw std::runtime_error("non-square frames are not supported by this configuration");
    int ratio = image_w / tc.enc.grid_h;
    int layers = 0;
    while ((1 << layers) < ratio) ++layers;
    if ((tc.enc.grid_h << layers) != image_w)
        throw std::runtime_error("frame size " + std::to_string(image_w) +
                                 " is not grid * 2^k for grid " + std::to_string(tc.enc.grid_h));
    tc.enc.layers = layers;
    tc.validate();
    return tc;
}

// ---------------------------------------------------------------------------

int cmd_generate(int argc, char** argv) {
    auto cfg = parse_args(
        "generate",
        {
            {"out", OptType::String, "", "output dataset root", true},
            {"seed", OptType::Uint, "0", "master seed"},
            {"train_sequences", OptType::Int, "40", "number of training sequences"},
            {"test_sequences", OptType::Int, "10", "number of test sequences"},
            {"width", OptType::Int, "64", "frame width"},
            {"height", OptType::Int, "64", "frame height"},
            {"frames", OptType::Int, "40", "frames per sequence"},
            {"distractors", OptType::Int, "3", "moving distractors per scene"},
            {"occlusion_fraction", OptType::Float, "0.25", "fraction of sequences with a full-occlusion event"},
            {"bubbles_fraction", OptType::Float, "0.2", "fraction of sequences with bubble particles"},
            {"transparency_fraction", OptType::Float, "0.1", "fraction with a translucent target"},
            {"fps", OptType::Int, "24", "nominal frames per second"},
            {"haze_min", OptType::Float, "0.2", "lower bound for sampled haze strength"},
            {"haze_max", OptType::Float, "0.8", "upper bound for sampled haze strength"},
            {"noise_min", OptType::Float, "0.01", "lower bound for sampled noise sigma"},
            {"noise_max", OptType::Float, "0.08", "upper bound for sampled noise sigma"},
            {"blur_max", OptType::Float, "1.2", "upper bound for sampled blur sigma"},
            {"attenuation_floor_r", OptType::Float, "0.5", "lower bound for red-channel attenuation"},
            {"attenuation_floor_g", OptType::Float, "0.7", "lower bound for green-channel attenuation"},
            {"attenuation_floor_b", OptType::Float, "0.8", "lower bound for blue-channel attenuation"},
        },
        argc, argv);

    const fs::path out = cfg.gets("out");
    uint64_t seed = cfg.getu("seed");
    auto make_split = [&](const std::string& split, int count, uint64_t stream) {
        for (int i = 0; i < count; ++i) {
            SceneConfig sc;
            sc.width = cfg.geti("width");
            sc.height = cfg.geti("height");
            sc.n_frames = cfg.geti("frames");
            sc.n_distractors = cfg.geti("distractors");
            sc.fps = cfg.geti("fps");
            sc.haze_min = cfg.getf("haze_min");
            sc.haze_max = cfg.getf("haze_max");
            sc.noise_min = cfg.getf("noise_min");
            sc.noise_max = cfg.getf("noise_max");
            sc.blur_max = cfg.getf("blur_max");
            sc.attenuation_floor_r = cfg.getf("attenuation_floor_r");
            sc.attenuation_floor_g = cfg.getf("attenuation_floor_g");
            sc.attenuation_floor_b = cfg.getf("attenuation_floor_b");
            double u = (i + 0.5) / std::max(1, count);
            sc.occlusion_event = u < cfg.getf("occlusion_fraction");
            sc.bubbles = std::fmod(u * 3.7, 1.0) < cfg.getf("bubbles_fraction");
            if (std::fmod(u * 7.3, 1.0) < cfg.getf("transparency_fraction"))
                sc.transparency_alpha = 0.6;
            uint64_t seq_seed = Rng::mix(seed, stream * 100000ULL + static_cast<uint64_t>(i));
            auto seq = generate_scene(seq_seed, sc);
            char name[32];
            std::snprintf(name, sizeof(name), "seq%03d", i);
            seq.id = name;
            write_sequence(seq, (out / split / name).string());
        }
    };
    make_split("train", cfg.geti("train_sequences"), 1);
    make_split("test", cfg.geti("test_sequences"), 2);
    cfg.write_manifest(out);
    std::cout << "generate: wrote " << cfg.geti("train_sequences") << " train + "
              << cfg.geti("test_sequences") << " test sequences under " << out << "\n";
    return 0;
}

int cmd_pretrain_align(int argc, char** argv) {
    auto schema = model_options();
    schema.insert(schema.end(),
                  {
                      {"data", OptType::String, "", "training dataset directory (default $AQUATRACK_DATA/train)"},
                      {"out", OptType::String, "", "run output directory", true},
                      {"seed", OptType::Uint, "0", "training seed"},
                      {"steps", OptType::Int, "300", "visual-geometric alignment steps"},
                      {"vl_steps", OptType::Int, "200", "visual-textual alignment steps"},
                      {"batch", OptType::Int, "8", "contrastive batch size K"},
                      {"tau", OptType::Float, "0.07", "contrastive temperature"},
                      {"k_pairs", OptType::Int, "4", "top-k visual-textual pairs"},
                      {"lr", OptType::Float, "1e-4", "learning rate"},
                  });
    auto cfg = parse_args("pretrain-align", std::move(schema), argc, argv);

    std::string data = cfg.gets("data").empty() ? default_data_root() + "/train" : cfg.gets("data");
    auto train = load_dataset(data);
    TrackerConfig tc = tracker_config_from(cfg, train[0].width(), train[0].height());
    TeacherModel model(tc, ModalityConfig{}, cfg.getu("seed"));

    AlignTrainConfig at;
    at.align.tau = cfg.getf("tau");
    at.align.batch = cfg.geti("batch");
    at.align.k_pairs = cfg.geti("k_pairs");
    at.steps = cfg.geti("steps");
    at.vl_steps = cfg.geti("vl_steps");
    at.lr = cfg.getf("lr");
    at.seed = cfg.getu("seed");

    const fs::path out = cfg.gets("out");
    fs::create_directories(out);
    std::ofstream align_log(out / "align_log.csv"), vl_log(out / "vl_log.csv");
    auto last = pretrain_align(model, train, at, &align_log, &vl_log);
    model.save((out / "align.ckpt").string());
    cfg.write_manifest(out);
    std::cout << "pretrain-align: final L_pre " << last.l_pre << " (L_cont " << last.l_cont
              << ", L_l1 " << last.l_l1 << ") -> " << (out / "align.ckpt") << "\n";
    return 0;
}

int cmd_train_teacher(int argc, char** argv) {
    auto schema = model_options();
    schema.insert(schema.end(),
                  {
                      {"data", OptType::String, "", "training dataset directory (default $AQUATRACK_DATA/train)"},
                      {"out", OptType::String, "", "run output directory", true},
                      {"seed", OptType::Uint, "0", "training seed"},
                      {"init", OptType::String, "", "optional checkpoint to initialize matching weights from"},
                      {"modalities", OptType::String, "E+D+L", "input modality set (I/E/D/L combination)"},
                      {"epochs", OptType::Int, "10", "training epochs"},
                      {"window", OptType::Int, "8", "frames per training window"},
                      {"lr", OptType::Float, "5e-5", "base learning rate (cosine decay)"},
                      {"cosine", OptType::Bool, "1", "cosine learning-rate decay"},
                      {"train_scope", OptType::String, "all", "parameters updated: all | core | heads"},
                  });
    auto cfg = parse_args("train-teacher", std::move(schema), argc, argv);

    std::string data = cfg.gets("data").empty() ? default_data_root() + "/train" : cfg.gets("data");
    auto train = load_dataset(data);
    TrackerConfig tc = tracker_config_from(cfg, train[0].width(), train[0].height());
    auto mods = ModalityConfig::from_label(cfg.gets("modalities"));
    TeacherModel model(tc, mods, cfg.getu("seed"));
    if (!cfg.gets("init").empty()) {
        Checkpoint ck = load_checkpoint(cfg.gets("init"));
        int copied = 0;
        for (auto& [name, var] : model.params().all()) {
            auto it = ck.arrays.find(name);
            if (it != ck.arrays.end() && var.value().same_shape(it->second)) {
                var.mutable_value() = it->second;
                ++copied;
            }
        }
        std::cout << "train-teacher: initialized " << copied << " arrays from " << cfg.gets("init")
                  << "\n";
    }

    TrainSchedule sched;
    sched.epochs = cfg.geti("epochs");
    sched.window = cfg.geti("window");
    sched.lr = cfg.getf("lr");
    sched.cosine_decay = cfg.getb("cosine");
    sched.seed = cfg.getu("seed");
    sched.train_scope = cfg.gets("train_scope");

    const fs::path out = cfg.gets("out");
    fs::create_directories(out);
    std::ofstream log(out / "teacher_log.csv");
    auto rows = finetune_teacher(model, train, sched, &log);
    model.save((out / "teacher.ckpt").string());
    cfg.write_manifest(out);
    std::cout << "train-teacher[" << mods.label() << "]: " << rows.size()
              << " steps, final seg_loss " << rows.back().seg_loss << " -> "
              << (out / "teacher.ckpt") << "\n";
    return 0;
}

int cmd_distill(int argc, char** argv) {
    auto schema = model_options();
    schema.insert(schema.end(),
                  {
                      {"data", OptType::String, "", "training dataset directory (default $AQUATRACK_DATA/train)"},
                      {"out", OptType::String, "", "run output directory", true},
                      {"teacher", OptType::String, "", "teacher checkpoint", true},
                      {"seed", OptType::Uint, "0", "training seed"},
                      {"epochs", OptType::Int, "8", "distillation epochs"},
                      {"window", OptType::Int, "8", "frames per training window"},
                      {"lr", OptType::Float, "5e-5", "base learning rate (cosine decay)"},
                      {"cosine", OptType::Bool, "1", "cosine learning-rate decay"},
                      {"init_from_teacher", OptType::Bool, "1", "initialize student from teacher weights"},
                      {"train_scope", OptType::String, "all", "parameters updated: all | encoder"},
                      {"kd_vg", OptType::Bool, "1", "enable visual-geometric feature distillation"},
                      {"kd_att", OptType::Bool, "1", "enable attention-map distillation"},
                      {"kd_vla", OptType::Bool, "1", "enable adapter-token distillation"},
                      {"kd_mask", OptType::Bool, "1", "enable mask-logit distillation"},
                      {"w_vg", OptType::Float, "1", "weight for the feature term"},
                      {"w_att", OptType::Float, "1", "weight for the attention term"},
                      {"w_vla", OptType::Float, "1", "weight for the adapter term"},
                      {"w_mask", OptType::Float, "1", "weight for the mask term"},
                  });
    auto cfg = parse_args("distill", std::move(schema), argc, argv);

    std::string data = cfg.gets("data").empty() ? default_data_root() + "/train" : cfg.gets("data");
    auto train = load_dataset(data);
    TeacherModel teacher = TeacherModel::load(cfg.gets("teacher"));
    StudentModel student(teacher.config(), cfg.getu("seed"));

    DistillSchedule ds;
    ds.base.epochs = cfg.geti("epochs");
    ds.base.window = cfg.geti("window");
    ds.base.lr = cfg.getf("lr");
    ds.base.cosine_decay = cfg.getb("cosine");
    ds.base.seed = cfg.getu("seed");
    ds.init_from_teacher = cfg.getb("init_from_teacher");
    ds.train_scope = cfg.gets("train_scope");
    ds.kd.en_vg = cfg.getb("kd_vg");
    ds.kd.en_att = cfg.getb("kd_att");
    ds.kd.en_vla = cfg.getb("kd_vla");
    ds.kd.en_mask = cfg.getb("kd_mask");
    ds.kd.w_vg = cfg.getf("w_vg");
    ds.kd.w_att = cfg.getf("w_att");
    ds.kd.w_vla = cfg.getf("w_vla");
    ds.kd.w_mask = cfg.getf("w_mask");

    const fs::path out = cfg.gets("out");
    fs::create_directories(out);
    std::ofstream log(out / "distill_log.csv");
    auto rows = distill(teacher, student, train, ds, &log);
    student.save((out / "student.ckpt").string());
    cfg.write_manifest(out);
    std::cout << "distill[" << ds.kd.label() << "]: " << rows.size() << " steps, final L_KD "
              << rows.back().total << " -> " << (out / "student.ckpt") << "\n";
    return 0;
}

struct LoadedModel {
    std::optional<TeacherModel> teacher;
    std::optional<StudentModel> student;
};

LoadedModel load_any_model(const std::string& path) {
    Checkpoint ck = load_checkpoint(path);
    auto j = nlohmann::json::parse(ck.meta_json);
    LoadedModel m;
    if (j.value("kind", "") == "teacher") m.teacher = TeacherModel::load(path);
    else if (j.value("kind", "") == "student") m.student = StudentModel::load(path);
    else throw std::runtime_error(path + ": unknown checkpoint kind");
    return m;
}

int cmd_eval(int argc, char** argv) {
    auto cfg = parse_args(
        "eval",
        {
            {"data", OptType::String, "", "test dataset directory (default $AQUATRACK_DATA/test)"},
            {"out", OptType::String, "", "run output directory", true},
            {"model", OptType::String, "", "teacher or student checkpoint", true},
            {"workers", OptType::Int, "1", "per-sequence worker threads"},
            {"deterministic", OptType::Bool, "0", "force single-threaded bit-exact mode"},
            {"largest_component", OptType::Bool, "0", "keep only the largest mask component"},
        },
        argc, argv);

    std::string data = cfg.gets("data").empty() ? default_data_root() + "/test" : cfg.gets("data");
    auto dataset = load_dataset(data);
    LoadedModel model = load_any_model(cfg.gets("model"));
    int workers = cfg.getb("deterministic") ? 1 : cfg.geti("workers");
    bool lcc = cfg.getb("largest_component");

    auto preds = model.teacher
                     ? predict_dataset(dataset,
                                       [&](const MultimodalSequence& s) {
                                           return predict_sequence(*model.teacher, s, lcc);
                                       },
                                       workers)
                     : predict_dataset(dataset,
                                       [&](const MultimodalSequence& s) {
                                           return predict_sequence(*model.student, s, lcc);
                                       },
                                       workers);

    const fs::path out = cfg.gets("out");
    fs::create_directories(out);
    for (const auto& p : preds) write_prediction_files((out / "predictions").string(), p);
    MetricReport report = evaluate_predictions(preds, dataset);
    write_report_bundle(out.string(), report);
    cfg.write_manifest(out);
    std::cout << "eval: S " << report.success_auc << "  P " << report.precision_at_20 << "  NP "
              << report.norm_precision_auc << "  (" << dataset.size() << " sequences) -> "
              << (out / "report.csv") << "\n";
    return 0;
}

int cmd_ablate(int argc, char** argv) {
    auto schema = model_options();
    schema.insert(schema.end(),
                  {
                      {"grid", OptType::String, "", "ablation grid: 'kd' or 'modality'", true},
                      {"data", OptType::String, "", "dataset root containing train/ and test/ (default $AQUATRACK_DATA)"},
                      {"out", OptType::String, "", "output directory", true},
                      {"seed", OptType::Uint, "0", "seed"},
                      {"teacher", OptType::String, "", "teacher checkpoint (kd grid; trained here when empty)"},
                      {"align_init", OptType::String, "", "optional stage-one checkpoint for teacher rows"},
                      {"epochs", OptType::Int, "8", "epochs per run"},
                      {"window", OptType::Int, "8", "frames per training window"},
                      {"lr", OptType::Float, "5e-5", "base learning rate"},
                      {"workers", OptType::Int, "1", "eval worker threads"},
                  });
    auto cfg = parse_args("ablate", std::move(schema), argc, argv);

    std::string root = cfg.gets("data").empty() ? default_data_root() : cfg.gets("data");
    auto train = load_dataset(root + "/train");
    auto test = load_dataset(root + "/test");
    const fs::path out = cfg.gets("out");
    fs::create_directories(out);
    TrackerConfig tc = tracker_config_from(cfg, train[0].width(), train[0].height());

    TrainSchedule sched;
    sched.epochs = cfg.geti("epochs");
    sched.window = cfg.geti("window");
    sched.lr = cfg.getf("lr");
    sched.seed = cfg.getu("seed");
    int workers = cfg.geti("workers");

    std::vector<RunSummary> rows;
    const std::string grid = cfg.gets("grid");
    if (grid == "kd") {
        TeacherModel teacher = [&] {
            if (!cfg.gets("teacher").empty()) return TeacherModel::load(cfg.gets("teacher"));
            TeacherModel t(tc, ModalityConfig{}, cfg.getu("seed"));
            std::ofstream tlog(out / "teacher_log.csv");
            finetune_teacher(t, train, sched, &tlog);
            t.save((out / "teacher.ckpt").string());
            return t;
        }();

        struct KdRun {
            const char* label;
            bool vg, att, vla, mask;
        };
        const KdRun runs[] = {{"kd-full", true, true, true, true},
                              {"kd-drop-mask", true, true, true, false},
                              {"kd-drop-vla", true, true, false, true},
                              {"kd-drop-att", true, false, true, true},
                              {"kd-drop-vg", false, true, true, true}};
        std::ofstream kd_csv(out / "kd_eval.csv");
        kd_csv << "run,L_VG,L_A,L_VLA,L_M,kd_total\n";
        for (const KdRun& run : runs) {
            DistillSchedule ds;
            ds.base = sched;
            ds.kd.en_vg = run.vg;
            ds.kd.en_att = run.att;
            ds.kd.en_vla = run.vla;
            ds.kd.en_mask = run.mask;
            StudentModel student(tc, cfg.getu("seed"));
            fs::path run_dir = out / run.label;
            fs::create_directories(run_dir);
            std::ofstream dlog(run_dir / "distill_log.csv");
            distill(teacher, student, train, ds, &dlog);
            student.save((run_dir / "student.ckpt").string());
            auto report = evaluate_model(student, test, workers);
            write_report_bundle(run_dir.string(), report);
            rows.push_back(summarize(run.label, report));
            KDEval kd = eval_kd(teacher, student, test, ds.kd);
            kd_csv << run.label << "," << kd.vg << "," << kd.att << "," << kd.vla << "," << kd.mask
                   << "," << kd.total << "\n";
            std::cout << "ablate " << run.label << ": S " << report.success_auc << ", held-out kd "
                      << kd.total << "\n";
        }
    } else if (grid == "modality") {
        for (const std::string label :
             {"I", "E", "D", "E+D", "E+L", "D+L", "I+D+L", "E+D+L"}) {
            auto mods = ModalityConfig::from_label(label);
            TeacherModel teacher(tc, mods, cfg.getu("seed"));
            if (!cfg.gets("align_init").empty()) {
                Checkpoint ck = load_checkpoint(cfg.gets("align_init"));
                for (auto& [name, var] : teacher.params().all()) {
                    auto it = ck.arrays.find(name);
                    if (it != ck.arrays.end() && var.value().same_shape(it->second))
                        var.mutable_value() = it->second;
                }
            }
            std::string dir_label = label;
            for (char& c : dir_label)
                if (c == '+') c = '_';
            fs::path run_dir = out / ("mod-" + dir_label);
            fs::create_directories(run_dir);
            std::ofstream tlog(run_dir / "teacher_log.csv");
            finetune_teacher(teacher, train, sched, &tlog);
            teacher.save((run_dir / "teacher.ckpt").string());
            auto report = evaluate_model(teacher, test, workers);
            write_report_bundle(run_dir.string(), report);
            rows.push_back(summarize(label, report));
            std::cout << "ablate modality " << label << ": S " << report.success_auc << "\n";
        }
    } else {
        throw std::invalid_argument("unknown --grid '" + grid + "' (choose kd or modality)");
    }

    write_comparison_csv((out / "comparison.csv").string(), rows);
    cfg.write_manifest(out);
    std::cout << "ablate: wrote " << rows.size() << " rows -> " << (out / "comparison.csv") << "\n";
    return 0;
}

int cmd_plot(int argc, char** argv) {
    auto cfg = parse_args(
        "plot",
        {
            {"runs", OptType::String, "", "comma-separated run directories containing curves/", true},
            {"labels", OptType::String, "", "comma-separated labels (defaults to directory names)"},
            {"out", OptType::String, "", "output directory for SVG files", true},
        },
        argc, argv);

    auto split = [](const std::string& s) {
        std::vector<std::string> out;
        std::string cur;
        for (char c : s) {
            if (c == ',') {
                out.push_back(cur);
                cur.clear();
            } else cur.push_back(c);
        }
        if (!cur.empty()) out.push_back(cur);
        return out;
    };
    auto runs = split(cfg.gets("runs"));
    auto labels = split(cfg.gets("labels"));
    if (labels.empty())
        for (const auto& r : runs) labels.push_back(fs::path(r).filename().string());
    if (labels.size() != runs.size())
        throw std::invalid_argument("labels count does not match runs count");

    const fs::path out = cfg.gets("out");
    fs::create_directories(out);
    struct PlotSpec {
        const char* file;
        const char* title;
    };
    for (const PlotSpec& p : {PlotSpec{"success", "Success"}, PlotSpec{"precision", "Precision"},
                              PlotSpec{"norm_precision", "Normalized precision"}}) {
        std::vector<std::pair<std::string, Curve>> curves;
        for (size_t i = 0; i < runs.size(); ++i) {
            fs::path csv = fs::path(runs[i]) / "curves" / (std::string(p.file) + ".csv");
            curves.emplace_back(labels[i], load_curve_csv(csv.string()));
        }
        write_curves_svg((out / (std::string(p.file) + ".svg")).string(), curves, p.title);
    }
    cfg.write_manifest(out);
    std::cout << "plot: wrote 3 SVG files under " << out << "\n";
    return 0;
}

void print_usage(std::ostream& os) {
    os << "usage: aquatrack <command> [--config file] [--key value ...]\n"
          "commands:\n"
          "  generate        render a synthetic multimodal dataset\n"
          "  pretrain-align  stage one: align RGB/depth encoders and the VL adapter\n"
          "  train-teacher   stage two: finetune the multimodal teacher (or an ablation row)\n"
          "  distill         stage three: distill the RGB-only student from a teacher\n"
          "  eval            run a checkpoint over a dataset and write the metric report\n"
          "  ablate          expand a kd/modality flag grid and emit one comparison table\n"
          "  plot            overlay run curves as SVG plots\n"
          "run 'aquatrack <command> --help' for per-command options.\n";
}

}  // namespace

int main(int argc, char** argv) {
    if (argc < 2) {
        print_usage(std::cerr);
        return 2;
    }
    std::string command = argv[1];
    try {
        if (command == "generate") return cmd_generate(argc - 2, argv + 2);
        if (command == "pretrain-align") return cmd_pretrain_align(argc - 2, argv + 2);
        if (command == "train-teacher") return cmd_train_teacher(argc - 2, argv + 2);
        if (command == "distill") return cmd_distill(argc - 2, argv + 2);
        if (command == "eval") return cmd_eval(argc - 2, argv + 2);
        if (command == "ablate") return cmd_ablate(argc - 2, argv + 2);
        if (command == "plot") return cmd_plot(argc - 2, argv + 2);
        if (command == "--help" || command == "-h" || command == "help") {
            print_usage(std::cout);
            return 0;
        }
        std::cerr << "unknown command '" << command << "'\n";
        print_usage(std::cerr);
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "aquatrack " << command << ": " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "aquatrack " << command << ": " << e.what() << "\n";
        return 1;
    }
}
