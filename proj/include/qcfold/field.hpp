// Sampled Beltrami coefficients.
#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <utility>
#include <vector>

#include "grid.hpp"

namespace qcfold {

struct BeltramiField {
    Grid2D grid;
    double sup_norm = 0;
    double support_radius = 0;   // max distance from grid center to a nonzero cell center

    BeltramiField() = default;
    explicit BeltramiField(Grid2D g) : grid(std::move(g)) { refresh(); }

    void refresh() {
        sup_norm = 0;
        support_radius = 0;
        for (int i = 0; i < grid.n; ++i)
            for (int j = 0; j < grid.n; ++j) {
                double a = std::abs(grid.at(i, j));
                if (a == 0) continue;
                sup_norm = std::max(sup_norm, a);
                support_radius = std::max(support_radius, std::abs(grid.point(i, j) - grid.center));
            }
    }
};

/**
 * Adds the integrals of mu(u), u = z - center, over (cell) intersect {s_in < |u| < s_out}
 * into acc by midpoint supersampling; divide by spacing^2 for cell averages.
 * `freq` is the angular frequency of mu; subsamples are fine enough to resolve it.
 */
template <class F>
void deposit_annulus(Grid2D& acc, cplx center, double s_in, double s_out, double freq, F&& mu) {
    if (!(s_out > s_in)) return;
    double d = acc.spacing();
    int ss = std::clamp(int(std::ceil(8 * freq * d / (2 * std::numbers::pi))), 8, 256);
    double x0 = acc.center.real() - acc.half_width, y0 = acc.center.imag() - acc.half_width;
    int ilo = std::max(0, int(std::floor((center.imag() - s_out - y0) / d)));
    int ihi = std::min(acc.n - 1, int(std::floor((center.imag() + s_out - y0) / d)));
    int jlo = std::max(0, int(std::floor((center.real() - s_out - x0) / d)));
    int jhi = std::min(acc.n - 1, int(std::floor((center.real() + s_out - x0) / d)));
    if (ilo > ihi || jlo > jhi) return;
    double h = d / ss, w = h * h;
    parallel_for(ihi - ilo + 1, [&](int r) {
        int i = ilo + r;
        for (int j = jlo; j <= jhi; ++j) {
            // cell box relative to center
            double bx = x0 + j * d - center.real(), by = y0 + i * d - center.imag();
            double nx = std::max({0.0, bx, -(bx + d)}), ny = std::max({0.0, by, -(by + d)});
            double fx = std::max(std::fabs(bx), std::fabs(bx + d)), fy = std::max(std::fabs(by), std::fabs(by + d));
            if (nx * nx + ny * ny >= s_out * s_out || fx * fx + fy * fy <= s_in * s_in) continue;
            cplx sum = 0;
            for (int a = 0; a < ss; ++a) {
                double uy = by + (a + 0.5) * h;
                for (int b = 0; b < ss; ++b) {
                    cplx u(bx + (b + 0.5) * h, uy);
                    double t = std::abs(u);
                    if (t <= s_in || t >= s_out) continue;
                    sum += mu(u);
                }
            }
            acc.at(i, j) += sum * w;
        }
    });
}

}  // namespace qcfold
