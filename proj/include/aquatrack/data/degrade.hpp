// Analytic water-column degradation: per-channel attenuation raised to the
// pixel depth, depth-weighted haze mix, separable Gaussian blur, additive
// Gaussian noise, final clamp to [0,1].
#pragma once

#include "aquatrack/core/rng.hpp"
#include "aquatrack/data/types.hpp"

namespace aquatrack {

struct DegradationParams {
    std::array<double, 3> attenuation{1.0, 1.0, 1.0};  // per-channel, in (0,1]
    double haze_strength = 0.0;                        // [0,1]
    std::array<double, 3> haze_color{0.0, 0.0, 0.0};
    double blur_sigma = 0.0;  // pixels
    double noise_sigma = 0.0;

    bool is_identity() const {
        return attenuation[0] == 1.0 && attenuation[1] == 1.0 && attenuation[2] == 1.0 &&
               haze_strength == 0.0 && blur_sigma == 0.0 && noise_sigma == 0.0;
    }

    void validate() const {
        for (double a : attenuation)
            if (a <= 0.0 || a > 1.0)
                throw std::invalid_argument("DegradationParams: attenuation outside (0,1]");
        if (haze_strength < 0.0 || haze_strength > 1.0)
            throw std::invalid_argument("DegradationParams: haze_strength outside [0,1]");
        if (blur_sigma < 0.0 || noise_sigma < 0.0)
            throw std::invalid_argument("DegradationParams: negative sigma");
    }
};

namespace detail {

inline Tensor gaussian_blur(const Tensor& img, double sigma) {
    int H = img.dim(0), W = img.dim(1), C = img.dim(2);
    int radius = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<double> kernel(2 * radius + 1);
    double ksum = 0;
    for (int i = -radius; i <= radius; ++i) {
        kernel[i + radius] = std::exp(-0.5 * (i * i) / (sigma * sigma));
        ksum += kernel[i + radius];
    }
    for (double& k : kernel) k /= ksum;
    auto reflect = [](int i, int n) {
        if (i < 0) i = -i - 1;
        if (i >= n) i = 2 * n - i - 1;
        return i;
    };
    Tensor tmp({H, W, C}), out({H, W, C});
    for (int i = 0; i < H; ++i)
        for (int j = 0; j < W; ++j)
            for (int c = 0; c < C; ++c) {
                double s = 0;
                for (int k = -radius; k <= radius; ++k)
                    s += kernel[k + radius] * img.at(i, reflect(j + k, W), c);
                tmp.at(i, j, c) = s;
            }
    for (int i = 0; i < H; ++i)
        for (int j = 0; j < W; ++j)
            for (int c = 0; c < C; ++c) {
                double s = 0;
                for (int k = -radius; k <= radius; ++k)
                    s += kernel[k + radius] * tmp.at(reflect(i + k, H), j, c);
                out.at(i, j, c) = s;
            }
    return out;
}

}  // namespace detail

// out = clean . attenuation^depth . (1 - haze*depth) + haze_color . haze . depth,
// then blur(blur_sigma), then N(0, noise_sigma^2), clamped to [0,1].
// Identity parameters return the input untouched (bit-exact).
inline Tensor degrade(const Tensor& clean, const DegradationParams& params, const Tensor& depth,
                      Rng& rng) {
    params.validate();
    if (clean.rank() != 3 || clean.dim(2) != 3)
        throw std::invalid_argument("degrade: clean must be HxWx3, got " + clean.shape_str());
    if (depth.rank() != 2 || depth.dim(0) != clean.dim(0) || depth.dim(1) != clean.dim(1))
        throw std::invalid_argument("degrade: depth shape " + depth.shape_str() +
                                    " does not match image " + clean.shape_str());
    if (params.is_identity()) return clean;

    int H = clean.dim(0), W = clean.dim(1);
    Tensor out({H, W, 3});
    for (int i = 0; i < H; ++i)
        for (int j = 0; j < W; ++j) {
            double d = depth.at(i, j);
            for (int c = 0; c < 3; ++c) {
                double direct = clean.at(i, j, c) * std::pow(params.attenuation[c], d) *
                                (1.0 - params.haze_strength * d);
                out.at(i, j, c) = direct + params.haze_color[c] * params.haze_strength * d;
            }
        }
    if (params.blur_sigma > 0.0) out = detail::gaussian_blur(out, params.blur_sigma);
    if (params.noise_sigma > 0.0)
        for (int64_t i = 0; i < out.size(); ++i) out[i] += rng.normal(0.0, params.noise_sigma);
    for (int64_t i = 0; i < out.size(); ++i) out[i] = std::clamp(out[i], 0.0, 1.0);
    return out;
}

}  // namespace aquatrack
