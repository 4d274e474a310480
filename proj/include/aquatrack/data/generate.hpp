// Synthetic underwater sequence generator. Renders a single moving target
// among distractors with exact masks, boxes, depth (from z-ordering), absent
// flags, attribute flags, and a templated language string. The enhanced
// stream is the clean render; the raw stream is degrade(enhanced).
// Deterministic given (seed, config).
#pragma once

#include <algorithm>
#include <cmath>

#include "aquatrack/data/degrade.hpp"
#include "aquatrack/data/types.hpp"

namespace aquatrack {

struct SceneConfig {
    int width = 64;
    int height = 64;
    int n_frames = 40;
    int n_distractors = 3;
    std::string shape = "random";  // circle | ellipse | square | triangle | random
    bool occlusion_event = false;
    bool bubbles = false;
    double transparency_alpha = 1.0;  // < 1 renders a translucent target
    int n_rocks = -1;                 // -1: sample 0..5
    bool randomize_degradation = true;
    DegradationParams degradation;  // used when randomize_degradation is false
    // Sampling ranges for randomized degradation.
    double haze_min = 0.2, haze_max = 0.8;
    double noise_min = 0.01, noise_max = 0.08;
    double blur_max = 1.2;
    double attenuation_floor_r = 0.5, attenuation_floor_g = 0.7, attenuation_floor_b = 0.8;
    int fps = 24;
    double min_radius = 5.0, max_radius = 10.0;
    double min_speed = 0.5, max_speed = 4.0;

    void validate() const {
        if (width <= 0 || height <= 0)
            throw std::invalid_argument("SceneConfig: non-positive frame size " +
                                        std::to_string(width) + "x" + std::to_string(height));
        if (n_frames < 1) throw std::invalid_argument("SceneConfig: n_frames must be >= 1");
        if (n_distractors < 0) throw std::invalid_argument("SceneConfig: negative n_distractors");
        if (fps <= 0) throw std::invalid_argument("SceneConfig: fps must be positive");
        if (min_radius <= 0 || max_radius < min_radius)
            throw std::invalid_argument("SceneConfig: bad radius range");
        if (haze_min < 0 || haze_max > 1 || haze_max < haze_min || noise_min < 0 ||
            noise_max < noise_min || blur_max < 0)
            throw std::invalid_argument("SceneConfig: bad degradation ranges");
        for (double a : {attenuation_floor_r, attenuation_floor_g, attenuation_floor_b})
            if (a <= 0 || a > 1)
                throw std::invalid_argument("SceneConfig: attenuation floor outside (0,1]");
        if (transparency_alpha <= 0 || transparency_alpha > 1)
            throw std::invalid_argument("SceneConfig: transparency_alpha outside (0,1]");
        static const char* shapes[] = {"circle", "ellipse", "square", "triangle", "random"};
        if (std::find_if(std::begin(shapes), std::end(shapes),
                         [&](const char* s) { return shape == s; }) == std::end(shapes))
            throw std::invalid_argument("SceneConfig: unknown shape class '" + shape + "'");
    }
};

namespace scene_detail {

struct ColorWord {
    const char* word;
    std::array<double, 3> rgb;
};

inline const std::vector<ColorWord>& palette() {
    static const std::vector<ColorWord> p = {
        {"red", {0.85, 0.12, 0.12}},   {"orange", {0.90, 0.55, 0.10}},
        {"yellow", {0.90, 0.85, 0.20}}, {"green", {0.15, 0.70, 0.25}},
        {"cyan", {0.20, 0.80, 0.80}},  {"white", {0.95, 0.95, 0.95}},
        {"purple", {0.60, 0.25, 0.70}}, {"pink", {0.95, 0.55, 0.70}}};
    return p;
}

struct SceneObject {
    std::string shape;  // circle | ellipse | square | triangle
    int color_idx = 0;
    double rx = 5, ry = 5;
    double z = 0.5;
    double alpha = 1.0;
    double scale_amp = 0.0, scale_period = 20.0, scale_phase = 0.0;
    double omega = 0.0;  // rotation rad/frame
    std::vector<double> cx, cy;  // per-frame centers
    std::vector<bool> active;    // empty means active everywhere

    bool is_active(int t) const { return active.empty() || active[static_cast<size_t>(t)]; }

    double radius_at(int t) const {
        return 1.0 + scale_amp * std::sin(2.0 * M_PI * t / scale_period + scale_phase);
    }

    // Point-inside test in frame coordinates at frame t.
    bool covers(int t, double px, double py) const {
        double s = radius_at(t);
        double dx = px - cx[static_cast<size_t>(t)];
        double dy = py - cy[static_cast<size_t>(t)];
        double ang = -omega * t;
        double ux = dx * std::cos(ang) - dy * std::sin(ang);
        double uy = dx * std::sin(ang) + dy * std::cos(ang);
        double ex = rx * s, ey = ry * s;
        if (shape == "circle" || shape == "ellipse")
            return (ux * ux) / (ex * ex) + (uy * uy) / (ey * ey) <= 1.0;
        if (shape == "square") return std::abs(ux) <= ex && std::abs(uy) <= ey;
        // Isoceles triangle pointing up within the (ex, ey) half-extents.
        if (uy < -ey || uy > ey) return false;
        double half_width = ex * (uy + ey) / (2.0 * ey);
        return std::abs(ux) <= half_width;
    }
};

inline void random_walk(SceneObject& obj, Rng& rng, const SceneConfig& cfg, double speed) {
    int n = cfg.n_frames;
    obj.cx.resize(static_cast<size_t>(n));
    obj.cy.resize(static_cast<size_t>(n));
    double margin = std::max(obj.rx, obj.ry);
    double x = rng.uniform(margin, std::max(margin + 1.0, cfg.width - margin));
    double y = rng.uniform(margin, std::max(margin + 1.0, cfg.height - margin));
    double ang = rng.uniform(0, 2 * M_PI);
    double vx = speed * std::cos(ang), vy = speed * std::sin(ang);
    for (int t = 0; t < n; ++t) {
        obj.cx[static_cast<size_t>(t)] = x;
        obj.cy[static_cast<size_t>(t)] = y;
        vx += rng.normal(0.0, 0.15 * speed);
        vy += rng.normal(0.0, 0.15 * speed);
        double v = std::hypot(vx, vy);
        if (v > cfg.max_speed) {
            vx *= cfg.max_speed / v;
            vy *= cfg.max_speed / v;
        }
        x += vx;
        y += vy;
        if (x < margin) { x = 2 * margin - x; vx = -vx; }
        if (x > cfg.width - margin) { x = 2 * (cfg.width - margin) - x; vx = -vx; }
        if (y < margin) { y = 2 * margin - y; vy = -vy; }
        if (y > cfg.height - margin) { y = 2 * (cfg.height - margin) - y; vy = -vy; }
        x = std::clamp(x, 0.0, static_cast<double>(cfg.width));
        y = std::clamp(y, 0.0, static_cast<double>(cfg.height));
    }
}

inline double luminance(const std::array<double, 3>& c) {
    return 0.299 * c[0] + 0.587 * c[1] + 0.114 * c[2];
}

inline double quantize8(double v) { return std::round(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0; }

inline double quantize16_positive(double v) {
    double q = std::round(std::clamp(v, 0.0, 1.0) * 65535.0);
    return std::max(q, 1.0) / 65535.0;
}

inline double attenuation_floor(const SceneConfig& cfg, int channel) {
    return channel == 0 ? cfg.attenuation_floor_r
                        : channel == 1 ? cfg.attenuation_floor_g : cfg.attenuation_floor_b;
}

}  // namespace scene_detail

inline MultimodalSequence generate_scene(uint64_t seed, const SceneConfig& config) {
    using namespace scene_detail;
    config.validate();

    for (uint64_t attempt = 0; attempt < 64; ++attempt) {
        Rng rng(Rng::mix(seed, attempt));
        const int W = config.width, H = config.height, n = config.n_frames;

        // --- cast ------------------------------------------------------
        static const std::vector<std::string> shape_vocab = {"circle", "ellipse", "square",
                                                             "triangle"};
        SceneObject target;
        target.shape = config.shape == "random"
                           ? shape_vocab[static_cast<size_t>(rng.uniform_int(0, 3))]
                           : config.shape;
        target.color_idx = rng.uniform_int(0, static_cast<int>(palette().size()) - 1);
        target.rx = rng.uniform(config.min_radius, config.max_radius);
        target.ry = target.shape == "circle" ? target.rx
                                             : rng.uniform(config.min_radius, config.max_radius);
        target.z = rng.uniform(0.4, 0.8);
        target.alpha = config.transparency_alpha;
        target.scale_amp = rng.uniform(0.0, 0.35);
        target.scale_period = rng.uniform(15.0, 30.0);
        target.scale_phase = rng.uniform(0.0, 2 * M_PI);
        if (target.shape != "circle") target.omega = rng.uniform(-0.06, 0.06);
        double target_speed = rng.uniform(config.min_speed, config.max_speed);
        random_walk(target, rng, config, target_speed);

        std::vector<SceneObject> others;
        for (int d = 0; d < config.n_distractors; ++d) {
            SceneObject o;
            o.shape = shape_vocab[static_cast<size_t>(rng.uniform_int(0, 3))];
            o.color_idx = rng.uniform_int(0, static_cast<int>(palette().size()) - 1);
            o.rx = rng.uniform(config.min_radius * 0.7, config.max_radius);
            o.ry = o.shape == "circle" ? o.rx : rng.uniform(config.min_radius * 0.7, config.max_radius);
            o.z = rng.uniform(0.3, 0.9);
            if (o.shape != "circle") o.omega = rng.uniform(-0.06, 0.06);
            random_walk(o, rng, config, rng.uniform(config.min_speed, config.max_speed));
            others.push_back(std::move(o));
        }

        int n_rocks = config.n_rocks >= 0 ? config.n_rocks : rng.uniform_int(0, 5);
        for (int r = 0; r < n_rocks; ++r) {
            SceneObject rock;
            rock.shape = "ellipse";
            rock.color_idx = -1;  // painted dark gray below
            rock.rx = rng.uniform(3.0, 9.0);
            rock.ry = rng.uniform(2.0, 6.0);
            rock.z = 0.95;
            rock.cx.assign(static_cast<size_t>(n), rng.uniform(0.0, W));
            rock.cy.assign(static_cast<size_t>(n), rng.uniform(0.6 * H, 1.0 * H));
            others.push_back(std::move(rock));
        }

        if (config.bubbles) {
            int n_bubbles = rng.uniform_int(3, 7);
            for (int bi = 0; bi < n_bubbles; ++bi) {
                SceneObject b;
                b.shape = "circle";
                b.color_idx = 5;  // white
                b.rx = b.ry = rng.uniform(0.8, 1.8);
                b.z = rng.uniform(0.2, 0.35);
                double bx = rng.uniform(0.0, W);
                double by = rng.uniform(0.0, H);
                double rise = rng.uniform(0.8, 1.6);
                b.cx.resize(static_cast<size_t>(n));
                b.cy.resize(static_cast<size_t>(n));
                for (int t = 0; t < n; ++t) {
                    b.cx[static_cast<size_t>(t)] = bx + 1.5 * std::sin(0.3 * t + bi);
                    double y = by - rise * t;
                    while (y < 0) y += H;  // recycle to the bottom
                    b.cy[static_cast<size_t>(t)] = y;
                }
                others.push_back(std::move(b));
            }
        }

        // Scripted occluder: pinned to the target for a mid-sequence window.
        bool has_occluder = false;
        if (config.occlusion_event && n >= 4) {
            SceneObject occ;
            occ.shape = "square";
            occ.color_idx = rng.uniform_int(0, static_cast<int>(palette().size()) - 1);
            occ.rx = occ.ry = 2.2 * std::max(target.rx, target.ry) * (1.0 + target.scale_amp);
            occ.z = 0.15;
            int mid = n / 2;
            int w = std::max(1, n / 12);
            occ.cx.resize(static_cast<size_t>(n));
            occ.cy.resize(static_cast<size_t>(n));
            occ.active.assign(static_cast<size_t>(n), false);
            for (int t = std::max(1, mid - w); t <= std::min(n - 2, mid + w); ++t) {
                occ.active[static_cast<size_t>(t)] = true;
                occ.cx[static_cast<size_t>(t)] = target.cx[static_cast<size_t>(t)];
                occ.cy[static_cast<size_t>(t)] = target.cy[static_cast<size_t>(t)];
            }
            others.push_back(std::move(occ));
            has_occluder = true;
        }

        // --- degradation params ----------------------------------------
        DegradationParams deg = config.degradation;
        int tint_family = 0;
        if (config.randomize_degradation) {
            deg.attenuation = {rng.uniform(attenuation_floor(config, 0), 1.0 - 0.1 * (1.0 - attenuation_floor(config, 0))),
                               rng.uniform(attenuation_floor(config, 1), 1.0 - 0.05 * (1.0 - attenuation_floor(config, 1))),
                               rng.uniform(attenuation_floor(config, 2), 1.0)};
            deg.haze_strength = rng.uniform(config.haze_min, config.haze_max);
            tint_family = rng.uniform_int(0, 2);  // 0 green, 1 blue, 2 yellow
            static const std::array<std::array<double, 3>, 3> tints = {
                {{0.15, 0.50, 0.35}, {0.15, 0.35, 0.55}, {0.50, 0.48, 0.20}}};
            for (int c = 0; c < 3; ++c)
                deg.haze_color[c] =
                    std::clamp(tints[static_cast<size_t>(tint_family)][static_cast<size_t>(c)] +
                                   rng.uniform(-0.04, 0.04),
                               0.0, 1.0);
            deg.blur_sigma = rng.uniform(0.0, config.blur_max);
            deg.noise_sigma = rng.uniform(config.noise_min, config.noise_max);
        } else {
            const auto& hc = deg.haze_color;
            tint_family = (hc[1] >= hc[0] && hc[1] >= hc[2]) ? 0 : (hc[2] >= hc[0] ? 1 : 2);
        }
        deg.validate();

        // --- render ------------------------------------------------------
        MultimodalSequence seq;
        seq.id = "scene-" + std::to_string(seed);
        seq.seed = seed;
        seq.fps = config.fps;
        std::array<double, 3> bg_top = {0.10, 0.28, 0.38};
        std::array<double, 3> bg_bottom = {0.04, 0.13, 0.22};
        std::array<double, 3> bg_mean = {0, 0, 0};

        int visible_count = 0;
        int partial_count = 0;
        std::vector<int> full_raster(static_cast<size_t>(n), 0);
        std::vector<int> visible_raster(static_cast<size_t>(n), 0);

        Rng noise_rng(Rng::mix(seed, attempt + 1000));
        for (int t = 0; t < n; ++t) {
            Tensor enh({H, W, 3}), dep({H, W}), mask({H, W});
            for (int i = 0; i < H; ++i)
                for (int j = 0; j < W; ++j) {
                    double px = j + 0.5, py = i + 0.5;
                    double fy = static_cast<double>(i) / std::max(1, H - 1);
                    std::array<double, 3> color;
                    for (int c = 0; c < 3; ++c)
                        color[static_cast<size_t>(c)] =
                            bg_top[static_cast<size_t>(c)] * (1 - fy) +
                            bg_bottom[static_cast<size_t>(c)] * fy;
                    double z = 1.0;

                    bool target_covers = target.covers(t, px, py);
                    if (target_covers) full_raster[static_cast<size_t>(t)]++;

                    // Nearest non-target object covering this pixel.
                    const SceneObject* front = nullptr;
                    for (const auto& o : others)
                        if (o.is_active(t) && (!front || o.z < front->z) && o.covers(t, px, py))
                            front = &o;

                    bool target_visible = target_covers && (!front || target.z < front->z);
                    if (front && (!target_visible || front->z < target.z)) {
                        std::array<double, 3> oc =
                            front->color_idx < 0
                                ? std::array<double, 3>{0.16, 0.16, 0.18}
                                : palette()[static_cast<size_t>(front->color_idx)].rgb;
                        color = oc;
                        z = front->z;
                    }
                    if (target_visible) {
                        const auto& tc = palette()[static_cast<size_t>(target.color_idx)].rgb;
                        for (int c = 0; c < 3; ++c)
                            color[static_cast<size_t>(c)] =
                                target.alpha * tc[static_cast<size_t>(c)] +
                                (1 - target.alpha) * color[static_cast<size_t>(c)];
                        z = target.z;
                        mask.at(i, j) = 1.0;
                        visible_raster[static_cast<size_t>(t)]++;
                    }
                    for (int c = 0; c < 3; ++c)
                        enh.at(i, j, c) = quantize8(color[static_cast<size_t>(c)]);
                    dep.at(i, j) = quantize16_positive(z);
                    if (t == 0)
                        for (int c = 0; c < 3; ++c)
                            bg_mean[static_cast<size_t>(c)] += color[static_cast<size_t>(c)] / (H * W);
                }

            Tensor raw = degrade(enh, deg, dep, noise_rng);
            for (int64_t i = 0; i < raw.size(); ++i) raw[i] = quantize8(raw[i]);

            Box b = tight_box(mask);
            bool is_absent = b.is_sentinel();
            if (!is_absent) {
                ++visible_count;
                if (visible_raster[static_cast<size_t>(t)] < full_raster[static_cast<size_t>(t)])
                    ++partial_count;
            }
            seq.frames_enhanced.push_back(std::move(enh));
            seq.frames_raw.push_back(std::move(raw));
            seq.depth.push_back(std::move(dep));
            seq.masks.push_back(std::move(mask));
            seq.boxes.push_back(b);
            seq.absent.push_back(is_absent);
        }

        // Frame 1 must carry a valid init box and the target must be
        // trackable for most of the clip; otherwise reroll deterministically.
        if (seq.absent[0] || visible_count < (n + 1) / 2) continue;

        // --- language ------------------------------------------------------
        int last_visible = n - 1;
        while (seq.absent[static_cast<size_t>(last_visible)]) --last_visible;
        double dx = target.cx[static_cast<size_t>(last_visible)] - target.cx[0];
        double dy = target.cy[static_cast<size_t>(last_visible)] - target.cy[0];
        const char* direction = std::abs(dx) >= std::abs(dy) ? (dx >= 0 ? "right" : "left")
                                                             : (dy >= 0 ? "down" : "up");
        seq.language = std::string("a ") + palette()[static_cast<size_t>(target.color_idx)].word +
                       " " + target.shape + " moving " + direction;

        // --- attributes ----------------------------------------------------
        auto& attr = seq.attributes;
        double mean_area = 0;
        double min_aspect = 1e9, max_aspect = 0;
        int64_t min_area = INT64_MAX, max_area = 0;
        double max_step = 0;
        Box prev{};
        bool have_prev = false;
        for (int t = 0; t < n; ++t) {
            if (seq.absent[static_cast<size_t>(t)]) { have_prev = false; continue; }
            const Box& b = seq.boxes[static_cast<size_t>(t)];
            mean_area += static_cast<double>(b.area()) / visible_count;
            min_area = std::min(min_area, b.area());
            max_area = std::max(max_area, b.area());
            double aspect = static_cast<double>(b.w) / b.h;
            min_aspect = std::min(min_aspect, aspect);
            max_aspect = std::max(max_aspect, aspect);
            if (have_prev) max_step = std::max(max_step, std::hypot(b.cx() - prev.cx(), b.cy() - prev.cy()));
            prev = b;
            have_prev = true;
        }
        bool any_absent = visible_count < n;
        attr[0] = mean_area < 80.0;
        attr[1] = max_step > 3.0;
        attr[2] = max_area > 0 && static_cast<double>(max_area) / std::max<int64_t>(1, min_area) > 1.5;
        attr[3] = max_aspect / std::max(1e-9, min_aspect) > 1.4;
        attr[6] = partial_count > 0;
        attr[7] = any_absent;
        attr[9] = std::abs(target.omega) > 0.02;
        bool similar_shape = false, same_color_shape = false;
        int moving_distractors = 0;
        for (const auto& o : others) {
            if (o.color_idx < 0 || o.z < 0.2 || (o.rx < 2.0 && o.color_idx == 5)) continue;
            ++moving_distractors;
            if (o.shape == target.shape) similar_shape = true;
            if (o.shape == target.shape && o.color_idx == target.color_idx) same_color_shape = true;
        }
        attr[11] = config.n_distractors >= 3 || similar_shape;
        attr[13] = deg.blur_sigma > 0.75;
        attr[15] = same_color_shape;
        attr[16] = n_rocks >= 3;
        {
            const auto& tc = palette()[static_cast<size_t>(target.color_idx)].rgb;
            attr[17] = std::abs(luminance(tc) - luminance(bg_mean)) < 0.18;
        }
        bool natural = target.shape == "circle" || target.shape == "ellipse";
        attr[18] = natural;
        attr[19] = !natural;
        attr[20] = deg.haze_strength <= 0.25;
        attr[21] = deg.haze_strength > 0.25 && deg.haze_strength <= 0.5;
        attr[22] = deg.haze_strength > 0.5;
        attr[23] = tint_family == 0;
        attr[24] = tint_family == 1;
        attr[25] = tint_family == 2;
        attr[26] = true;   // submerged camera
        attr[28] = config.bubbles;
        attr[29] = deg.noise_sigma > 0.05;
        attr[31] = config.transparency_alpha < 0.95;
        (void)has_occluder;

        validate_sequence(seq);
        return seq;
    }
    throw std::runtime_error("generate_scene: could not produce a trackable scene for seed " +
                             std::to_string(seed));
}

}  // namespace aquatrack
