// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.
#include <gmp.h>
#include <quadmath.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "qcfold/beltrami.hpp"
#include "qcfold/construction.hpp"
#include "qcfold/disk_maps.hpp"
#include "qcfold/graph_model.hpp"
#include "qcfold/koebe_budget.hpp"

using namespace qcfold;

namespace {

struct Outcome {
    bool pass = true;
    std::ostringstream detail;

    void require(bool ok, const std::string& why) {
        if (!ok) {
            pass = false;
            detail << " [" << why << "]";
        }
    }
};

const std::vector<long long> kGridM{20, 50, 100, 200, 500, 1000, 2000, 5000, 10000};
// delta = kGridDeltaNum / 10000
const std::vector<long> kGridDeltaNum{1, 3, 10, 30, 100, 300, 600};
constexpr long kDeltaDen = 10000;

double grid_delta(long num) { return double(num) / kDeltaDen; }

// --- quad-precision psi and its central differences ----------------------------------------

using quad = __float128;

struct QC {
    quad re, im;
};

QC psi_quad(QC z, long long m, quad delta, quad r) {
    quad t = hypotq(z.re, z.im);
    quad eta = 1;
    if (t >= 1) {
        eta = 0;
    } else if (t > r) {
        quad x = (t - r) / (1 - r);
        eta = expq(1 + 1 / (x * x - 1));
    }
    quad mod = expq(quad(m) * logq(t)), ang = quad(m) * atan2q(z.im, z.re);
    return {mod * cosq(ang) + delta * eta * z.re, mod * sinq(ang) + delta * eta * z.im};
}

cplx dilatation_quad_fd(cplx z, const DiskMapParams& p) {
    quad r = p.r(), h = quad(1e-12) * (1 - r), d = p.delta;
    QC c{z.real(), z.imag()};
    QC xp = psi_quad({c.re + h, c.im}, p.m, d, r), xm = psi_quad({c.re - h, c.im}, p.m, d, r);
    QC yp = psi_quad({c.re, c.im + h}, p.m, d, r), ym = psi_quad({c.re, c.im - h}, p.m, d, r);
    QC fx{(xp.re - xm.re) / (2 * h), (xp.im - xm.im) / (2 * h)};
    QC fy{(yp.re - ym.re) / (2 * h), (yp.im - ym.im) / (2 * h)};
    // d_z = (fx - i fy)/2, d_zbar = (fx + i fy)/2
    QC dz{(fx.re + fy.im) / 2, (fx.im - fy.re) / 2};
    QC dzb{(fx.re - fy.im) / 2, (fx.im + fy.re) / 2};
    quad den = dz.re * dz.re + dz.im * dz.im;
    return {double((dzb.re * dz.re + dzb.im * dz.im) / den), double((dzb.im * dz.re - dzb.re * dz.im) / den)};
}

// --- criteria --------------------------------------------------------------------------------

void dilatation_bound(Outcome& o) {
    double worst = 0;
    int cases = 0;
    for (long long m : kGridM)
        for (long dn : kGridDeltaNum) {
            DiskMapParams p(m, grid_delta(dn));
            DilatationBoundReport rep = verify_lemma31(p, 512);
            worst = std::max(worst, rep.max_dilatation);
            ++cases;
            o.require(rep.max_dilatation < 0.8, "sup " + std::to_string(rep.max_dilatation) + " at m=" + std::to_string(m));
            o.require(rep.argmax_radius > rep.r && rep.argmax_radius < 1, "sup outside annulus at m=" + std::to_string(m));
            o.require(psi_dilatation(std::polar(rep.r, 0.3), p) == 0.0, "dilatation inside r");
        }
    std::mt19937_64 rng(20240611);
    std::uniform_real_distribution<double> u(0, 1);
    double worst_rel = 0;
    int bad = 0;
    for (int i = 0; i < 1000; ++i) {
        DiskMapParams p(kGridM[rng() % kGridM.size()], grid_delta(kGridDeltaNum[rng() % kGridDeltaNum.size()]));
        double r = p.r(), t = r + (1 - r) * (0.02 + 0.96 * u(rng));
        cplx z = std::polar(t, 2 * kPi * u(rng));
        cplx mu = psi_dilatation(z, p), ref = dilatation_quad_fd(z, p);
        double rel = std::abs(mu - ref) / std::abs(ref);
        worst_rel = std::max(worst_rel, rel);
        if (!(rel <= 1e-4)) ++bad;
    }
    o.require(bad == 0, std::to_string(bad) + " finite-difference mismatches");
    o.detail << cases << " grid cases, worst sup " << worst << "; 1000 points, worst relative FD gap " << worst_rel;
}

void radius_inequality(Outcome& o) {
    // (1 - 4d/m)^{m-1} > d/m with d = a/D  <=>  (Dm - 4a)^{m-1} > a (Dm)^{m-2}
    mpz_t lhs, rhs, base;
    mpz_inits(lhs, rhs, base, nullptr);
    int cases = 0;
    for (long long m : kGridM)
        for (long a : kGridDeltaNum) {
            unsigned long Dm = (unsigned long)(kDeltaDen * m);
            mpz_set_ui(base, Dm - 4 * (unsigned long)a);
            mpz_pow_ui(lhs, base, (unsigned long)(m - 1));
            mpz_ui_pow_ui(rhs, Dm, (unsigned long)(m - 2));
            mpz_mul_ui(rhs, rhs, (unsigned long)a);
            bool exact = mpz_cmp(lhs, rhs) > 0;
            DiskMapParams p(m, grid_delta(a));
            bool floating = p.r() > p.critical_radius();
            o.require(exact, "fails at m=" + std::to_string(m) + " delta=" + std::to_string(grid_delta(a)));
            o.require(exact == floating, "floating verdict disagrees at m=" + std::to_string(m));
            ++cases;
        }
    mpz_clears(lhs, rhs, base, nullptr);
    o.detail << cases << " grid cases exact";
}

void support(Outcome& o) {
    const std::vector<cplx> ws{0.0, 0.74, cplx(0, 0.74), cplx(-0.5, 0.5), cplx(0.3, -0.6), -0.74};
    const double s = 0.9;
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0, 1);
    int cases = 0;
    long long nonzero = 0;
    for (long long m : {100LL, 1000LL, 10000LL})
        for (long dn : kGridDeltaNum) {
            for (cplx w : ws) {
                DiskMapParams p(m, grid_delta(dn), w);
                o.require(verify_support(p, s), "support fails at m=" + std::to_string(m));
                for (int i = 0; i < 2000; ++i) {
                    cplx z = std::polar(std::sqrt(u(rng)), 2 * kPi * u(rng));
                    if (composed_dilatation(z, p) != 0.0) {
                        ++nonzero;
                        o.require(std::abs(z) > s, "sampled support inside s");
                    }
                }
                ++cases;
            }
        }
    o.detail << cases << " parameter sets, " << nonzero << " sampled support points all in |z| > " << s;
}

void critical_data_check(Outcome& o) {
    double worst_res = 0, worst_mod = 0;
    for (long long m : {20LL, 100LL, 1000LL, 10000LL})
        for (long dn : kGridDeltaNum) {
            DiskMapParams p(m, grid_delta(dn), cplx(0.2, -0.1));
            CriticalData c = critical_data(p);
            o.require((long long)c.points.size() == m - 1, "root count");
            for (size_t k = 0; k < c.points.size(); ++k) {
                double res = std::abs(psi_plateau_deriv(c.points[k], p)) / double(m);
                worst_res = std::max(worst_res, res);
                o.require(res < 1e-10, "residual at m=" + std::to_string(m));
                if (m == 10000) {
                    double gap = std::fabs(std::abs(c.values_unshifted[k]) - p.delta);
                    worst_mod = std::max(worst_mod, gap);
                    o.require(gap < 1e-3, "critical value modulus far from delta");
                }
            }
        }
    o.detail << "worst residual/m " << worst_res << ", worst ||v|-delta| at m=1e4 " << worst_mod;
}

Grid2D unit_disk_indicator(int N, double hw) {
    Grid2D g(0.0, hw, N);
    double d = g.spacing();
    deposit_annulus(g, 0.0, 0.0, 1.0, 0, [](cplx) { return cplx(1.0); });
    for (auto& v : g.values) v /= d * d;
    return g;
}

void beltrami_solver(Outcome& o) {
    const double k = 1.0 / 3, tol = 1e-10;
    auto t0 = std::chrono::steady_clock::now();
    BeltramiField mu = radial_stretch_field(1024, 1.5, k, 0.0);
    QCMapApprox phi = solve_beltrami(mu, tol, 200);
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    double err = 0;
    for (int i = 0; i < 1024; ++i)
        for (int j = 0; j < 1024; ++j)
            err = std::max(err, std::abs(phi.grid.at(i, j) - radial_stretch_exact(phi.grid.point(i, j), k, 0.0)));
    int bound = int(std::ceil(std::log(tol) / std::log(mu.sup_norm)));
    o.require(err <= 1e-3, "oracle error " + std::to_string(err));
    o.require(secs <= 60, "oracle solve took " + std::to_string(secs) + " s");
    o.require(phi.iterations <= bound + 5, "iterations beyond Neumann bound");

    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> u(-1, 1);
    Grid2D h(0.0, 1.0, 256);
    for (int i = 2; i < 254; ++i)
        for (int j = 2; j < 254; ++j) h.at(i, j) = cplx(u(rng), u(rng));
    double unit = std::max(beurling_unitarity_defect(h), beurling_unitarity_defect(unit_disk_indicator(256, 2.0)));
    o.require(unit < 1e-10, "unitarity defect " + std::to_string(unit));

    // Cauchy transform of the unit-disk indicator: conj(z) inside, 1/z outside
    Grid2D T = cauchy_transform(unit_disk_indicator(512, 2.5));
    const std::vector<cplx> inside{{0.1, 0.2}, {-0.5, 0.3}, {0.6, -0.4}, {0.0, -0.75}, {-0.3, -0.3}};
    const std::vector<cplx> outside{{2.0, 0.0}, {0.0, 1.6}, {-1.4, 0.9}, {1.2, -1.3}, {-1.9, -0.4}};
    double d = T.spacing(), probe = 0;
    auto cell = [&](cplx z) { return std::pair<int, int>{int((z.imag() + 2.5) / d), int((z.real() + 2.5) / d)}; };
    for (cplx z : inside) {
        auto [i, j] = cell(z);
        probe = std::max(probe, std::abs(T.at(i, j) - std::conj(T.point(i, j))));
    }
    for (cplx z : outside) {
        auto [i, j] = cell(z);
        probe = std::max(probe, std::abs(T.at(i, j) - 1.0 / T.point(i, j)));
    }
    o.require(probe <= 1e-3, "closed-form probe error " + std::to_string(probe));
    o.detail << "oracle error " << err << " in " << secs << " s, iterations " << phi.iterations << " (bound " << bound
             << " + 5), unitarity defect " << unit << ", probe error " << probe;
}

// composed disk-map dilatation about the centre; sampling resolves both the angular period and the radial width
BeltramiField disk_annulus_field(const DiskMapParams& p, int N, double hw) {
    Grid2D g(0.0, hw, N);
    double d = g.spacing(), s_in = composed_support_inner_radius(p);
    double freq = std::max(double(p.m), 2 * kPi / (1 - s_in));
    deposit_annulus(g, 0.0, s_in, 1.0, freq, [&](cplx u) { return composed_dilatation(u, p); });
    for (auto& v : g.values) v /= d * d;
    return BeltramiField(std::move(g));
}

void displacement_decay(Outcome& o) {
    double prev = HUGE_VAL;
    for (long long m : {100LL, 1000LL, 10000LL}) {
        auto t0 = std::chrono::steady_clock::now();
        DiskMapParams p(m, 0.01, cplx(0.5, 0.0));
        BeltramiField mu = disk_annulus_field(p, 1024, 1.25);
        QCMapApprox phi = solve_beltrami(mu, 1e-10, 300);
        double dev = deviation_profile(phi, mu.support_radius).eps_global;
        double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        o.require(dev < prev, "no decrease at m=" + std::to_string(m));
        o.require(secs <= 120, "m=" + std::to_string(m) + " took " + std::to_string(secs) + " s");
        o.require(!phi.truncated, "solver truncated at m=" + std::to_string(m));
        o.detail << "m=" << m << ": " << dev << " (" << secs << " s); ";
        prev = dev;
    }
}

void budget_engine(Outcome& o) {
    auto [lo, hi] = phi_prime_bounds(1.0 / 32);
    o.require(lo == 1.0 / 12 && hi == 125.0 / 36, "derivative bounds not exact");
    Budget b(20);
    Scaled prev = b.upper(1);
    for (int n = 1; n <= 50; ++n) {
        Scaled l = b.lower(n), u = b.upper(n);
        o.require(!(u < l), "lower > upper at n=" + std::to_string(n));
        if (n > 1) o.require(u < prev, "upper not decreasing at n=" + std::to_string(n));
        prev = u;
    }
    o.detail << "bounds (" << lo << ", " << hi << "); upper(50) = " << b.upper(50).str();
}

ConstructionState toy_run() {
    ConstructionConfig cfg;
    cfg.lambda = 20;
    cfg.mode = Mode::toy;
    cfg.levels = 3;
    return run_construction(cfg);
}

ConstructionState g_state;
bool g_have_state = false;

void construction_pipeline(Outcome& o) {
    try {
        g_state = toy_run();
    } catch (const HorizonError& e) {
        o.require(false, e.what());
        return;
    }
    g_have_state = true;
    o.require(g_state.level() == 3, "reached level " + std::to_string(g_state.level()));
    for (const auto& L : g_state.levels) {
        std::string k = "level " + std::to_string(L.k);
        o.require(L.margins.all_positive(), k + " margins");
        o.require(L.inclusion.ok, k + " inclusion");
        o.require(L.exclusion.ok, k + " exclusion");
    }
    uint64_t h1 = state_hash(g_state);
    setenv("QCFOLD_THREADS", "1", 1);
    uint64_t h2 = state_hash(toy_run());
    unsetenv("QCFOLD_THREADS");
    o.require(h1 == h2, "state hash differs across reruns");
    o.detail << "n_seq";
    for (int n : g_state.n_seq) o.detail << " " << n;
    o.detail << ", hash " << std::hex << h1 << std::dec;
    for (const auto& L : g_state.levels)
        o.detail << "; level " << L.k << " m1 " << L.margins.m1.str() << " m2 " << L.margins.m2.str() << " m3 "
                 << L.margins.m3.str();
}

void univalence(Outcome& o) {
    if (!g_have_state) {
        o.require(false, "no construction state");
        return;
    }
    ConstructionState s = g_state;
    AuditReport a = univalence_audit(s);
    bool found = false;
    for (const auto& c : a.chain)
        if (c.level == 3) {
            found = true;
            o.require(c.log_ratio > TowerReal(0, std::log(10.0)), "chain ratio at level 3 not above 10");
            o.detail << "chain log ratio at level 3 " << c.log_ratio.str();
        }
    o.require(found, "no level-3 chain entry");
    for (double x0 : {0.0, 1.0, -1.0})
        for (int depth = 1; depth <= 6; ++depth) {
            OrbitResult r = real_orbit_escape(x0, 20, TowerReal(depth, 10.0), 12);
            o.require(r.increasing && r.escapes, "orbit of " + std::to_string(x0) + " below E" + std::to_string(depth));
        }
    o.detail << "; orbits of 0, 1, -1 pass E1(10)..E6(10)";
    ConstructionState c = g_state;
    for (int k : {2, 3}) {
        choose_w_delta(k, c, 0.0);
        StepReport ex = verify_critical_exclusion(k, c);
        o.require(!ex.ok, "delta = 0 passes exclusion at level " + std::to_string(k));
        o.detail << "; delta=0 exclusion margin at level " << k << " " << ex.margin_pre.str();
    }
}

ModelParams symmetry_model() {
    ModelParams p;
    p.graph = solve_vertices(20, 12);
    p.base_disk = DiskMapParams(24, 0.0, 0.0);
    p.disks[2] = DiskMapParams(100, 0.01, cplx(0.5, 0.0));
    p.disks[3] = DiskMapParams(40, 0.02, cplx(0.2, -0.3));
    p.disks[4] = DiskMapParams(1000, 0.05, cplx(0.0, 0.7));
    return p;
}

void symmetry(Outcome& o) {
    ModelParams p = symmetry_model();
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> u(0, 1);
    int checked = 0, strip = 0;
    double worst = 0;
    while (checked < 1000) {
        cplx z;
        if (checked % 2 == 0) {
            z = cplx(0.3 + 3.5 * u(rng), (u(rng) - 0.5) * kPi * 0.98);
        } else {
            long long n = 1 + (long long)(u(rng) * 5);
            z = p.graph.z(n) + std::polar(std::sqrt(u(rng)), 2 * kPi * u(rng));
            if (u(rng) < 0.5) z = std::conj(z);
        }
        if (u(rng) < 0.5) z = -z;
        Located L = locate(z, p.graph);
        if (L.region != Region::strip && L.region != Region::disk) continue;
        if (L.region == Region::strip) ++strip;
        cplx a = model_g(z, p), b = model_g(std::conj(z), p), c = model_g(-z, p);
        double scale = std::max(1.0, std::abs(a));
        double e = std::max(std::abs(b - std::conj(a)), std::abs(c - a)) / scale;
        worst = std::max(worst, e);
        o.require(e <= 1e-12, "symmetry defect");
        ++checked;
    }
    o.detail << checked << " points (" << strip << " strip), worst scaled defect " << worst;
}

struct Criterion {
    int id;
    const char* name;
    double limit_s;   // 0: no runtime limit
    std::function<void(Outcome&)> run;
};

}  // namespace

int main() {
    const std::vector<Criterion> criteria = {
        {1, "disk-map dilatation bound", 300, dilatation_bound},
        {2, "radius inequality", 1, radius_inequality},
        {3, "composed dilatation support", 0, support},
        {4, "critical data", 0, critical_data_check},
        {5, "Beltrami solver", 0, beltrami_solver},
        {6, "displacement decay in the degree", 0, displacement_decay},
        {7, "derivative budget", 0, budget_engine},
        {8, "construction pipeline", 600, construction_pipeline},
        {9, "univalence audit", 0, univalence},
        {10, "model map symmetries", 0, symmetry},
    };
    int failed = 0;
    for (const auto& c : criteria) {
        Outcome o;
        auto t0 = std::chrono::steady_clock::now();
        try {
            c.run(o);
        } catch (const std::exception& e) {
            o.require(false, std::string("exception: ") + e.what());
        }
        double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (c.limit_s > 0) o.require(secs <= c.limit_s, "runtime over " + std::to_string(int(c.limit_s)) + " s");
        if (!o.pass) ++failed;
        std::printf("%s %2d %s (%.1f s): %s\n", o.pass ? "PASS" : "FAIL", c.id, c.name, secs, o.detail.str().c_str());
        std::fflush(stdout);
    }
    std::printf("%d of %zu criteria passed\n", int(criteria.size()) - failed, criteria.size());
    return failed ? 1 : 0;
}
