// Escape-time images of the model map with the strip/disk skeleton overlaid.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "graph_model.hpp"
#include "grid.hpp"

namespace qcfold {

struct RenderSpec {
    int width = 400;
    int height = 300;
    double x0 = -2, x1 = 14, y0 = -6, y1 = 6;
    int max_iter = 12;
    double bailout = 1e8;
    bool overlay = true;
};

// per-pixel outcome codes besides an escape count in [0, max_iter]
inline constexpr int kBounded = -1;           // no escape within max_iter
inline constexpr int kUnsupportedStart = -2;  // pixel itself lies in an unmodelled zone
inline constexpr int kUnsupportedLater = -3;  // orbit reaches an unmodelled zone

using Rgb = std::array<std::uint8_t, 3>;

inline constexpr Rgb kSentinel{255, 0, 255};
inline constexpr Rgb kSentinelLater{110, 40, 110};
inline constexpr Rgb kBoundedColor{0, 0, 0};
inline constexpr Rgb kStripColor{255, 255, 255};
inline constexpr Rgb kCircleColor{0, 255, 255};
inline constexpr Rgb kMarkerColor{255, 220, 0};

struct Image {
    int width = 0, height = 0;
    std::vector<int> codes;        // row-major, row 0 at the top
    std::vector<Rgb> pixels;

    int code(int row, int col) const { return codes[size_t(row) * width + col]; }
    const Rgb& pixel(int row, int col) const { return pixels[size_t(row) * width + col]; }
};

// pixel centre; rows and columns placed symmetrically about the window midpoint
inline cplx pixel_point(const RenderSpec& s, int row, int col) {
    double hx = (s.x1 - s.x0) / (2.0 * s.width), hy = (s.y1 - s.y0) / (2.0 * s.height);
    double xc = 0.5 * (s.x0 + s.x1), yc = 0.5 * (s.y0 + s.y1);
    return {xc + (2 * col - (s.width - 1)) * hx, yc + ((s.height - 1) - 2 * row) * hy};
}

inline int escape_code(cplx z, const ModelParams& p, int max_iter, double bailout) {
    for (int it = 0; it < max_iter; ++it) {
        if (std::abs(z) > bailout) return it;
        try {
            z = model_g(z, p);
        } catch (const UnsupportedRegion&) {
            return it == 0 ? kUnsupportedStart : kUnsupportedLater;
        }
        if (!std::isfinite(z.real()) || !std::isfinite(z.imag())) return it + 1;
    }
    return std::abs(z) > bailout ? max_iter : kBounded;
}

inline Rgb escape_color(int code, int max_iter) {
    if (code == kBounded) return kBoundedColor;
    if (code == kUnsupportedStart) return kSentinel;
    if (code == kUnsupportedLater) return kSentinelLater;
    double t = max_iter > 0 ? double(code) / max_iter : 0.0;
    auto ch = [](double v) { return std::uint8_t(std::lround(255 * std::clamp(v, 0.0, 1.0))); };
    return {ch(0.15 + 0.85 * t), ch(0.25 + 0.5 * std::sin(kPi * t)), ch(0.9 - 0.8 * t)};
}

// skeleton: Im z = +-pi/2, unit circles about +-z_n and conjugates, centre markers
inline int overlay_kind(cplx z, const GraphModel& g, double px) {
    double x = std::fabs(z.real()), y = std::fabs(z.imag());
    if (std::fabs(y - kPi / 2) <= 0.5 * px) return 1;
    long long n0 = (long long)std::llround(x / kPi);
    for (long long n = std::max(1LL, n0 - 1); n <= n0 + 1; ++n) {
        double d = std::abs(cplx(x, y) - g.z(n));
        if (d <= 1.5 * px) return 3;
        if (std::fabs(d - 1.0) <= 0.5 * px) return 2;
    }
    return 0;
}

inline Image render_escape(const RenderSpec& s, const ModelParams& p) {
    if (s.width < 1 || s.height < 1) throw std::invalid_argument("image size must be positive");
    if (!(s.x1 > s.x0 && s.y1 > s.y0)) throw std::invalid_argument("empty window");
    Image img;
    img.width = s.width;
    img.height = s.height;
    img.codes.assign(size_t(s.width) * s.height, 0);
    img.pixels.assign(img.codes.size(), kBoundedColor);
    double px = std::max((s.x1 - s.x0) / s.width, (s.y1 - s.y0) / s.height);
    parallel_for(s.height, [&](int row) {
        for (int col = 0; col < s.width; ++col) {
            cplx z = pixel_point(s, row, col);
            size_t k = size_t(row) * s.width + col;
            img.codes[k] = escape_code(z, p, s.max_iter, s.bailout);
            img.pixels[k] = escape_color(img.codes[k], s.max_iter);
            if (!s.overlay) continue;
            switch (overlay_kind(z, p.graph, px)) {
                case 1: img.pixels[k] = kStripColor; break;
                case 2: img.pixels[k] = kCircleColor; break;
                case 3: img.pixels[k] = kMarkerColor; break;
                default: break;
            }
        }
    });
    return img;
}

inline void write_ppm(const std::string& path, const Image& img) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "P6\n" << img.width << " " << img.height << "\n255\n";
    for (const auto& c : img.pixels) out.write(reinterpret_cast<const char*>(c.data()), 3);
}

struct RenderStats {
    long long escaped = 0, bounded = 0, unsupported_start = 0, unsupported_later = 0;
    bool vertically_symmetric = true;
};

inline RenderStats render_stats(const Image& img) {
    RenderStats st;
    for (int c : img.codes) {
        if (c == kBounded) ++st.bounded;
        else if (c == kUnsupportedStart) ++st.unsupported_start;
        else if (c == kUnsupportedLater) ++st.unsupported_later;
        else ++st.escaped;
    }
    for (int r = 0; r < img.height / 2 && st.vertically_symmetric; ++r)
        for (int c = 0; c < img.width; ++c)
            if (img.pixel(r, c) != img.pixel(img.height - 1 - r, c)) {
                st.vertically_symmetric = false;
                break;
            }
    return st;
}

}  // namespace qcfold
