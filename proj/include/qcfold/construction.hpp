// Inductive parameter selection (n_k, C_{n_k}, m), choice of (w, delta) per level,
// inclusion / critical-exclusion verification and the univalence audit.
//
// Level quantities live in a frame normalized by the inverse-branch derivative
// D = |(f^{-n_k})'(g^{n_k}(1/2))|. Remainders are divided by D_eval, the value
// used for evaluation: the lower bound c in strict mode, D itself in toy mode.
#pragma once

#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "beltrami.hpp"
#include "disk_maps.hpp"
#include "graph_model.hpp"
#include "koebe_budget.hpp"
#include "tower.hpp"

namespace qcfold {

class HorizonError : public std::runtime_error {
public:
    HorizonError(int level, std::string binding)
        : std::runtime_error("no admissible index within scan horizon at level " + std::to_string(level) + ": " +
                             binding),
          level_(level), binding_(std::move(binding)) {}
    int level() const { return level_; }
    const std::string& binding() const { return binding_; }

private:
    int level_;
    std::string binding_;
};

enum class Mode { strict, toy };

inline const char* mode_name(Mode m) { return m == Mode::strict ? "strict" : "toy"; }

struct ConstructionConfig {
    double lambda = 20;
    Mode mode = Mode::toy;
    int levels = 3;                        // n_1 .. n_levels
    int scan_horizon = 50;
    double dist_override = 0;              // 0: dist_n = |z_{p_n}|/2
    int disp_grid = 512;
    std::vector<long long> disp_ms{20, 40, 80};
    double audit_ratio_threshold = 10;
    int boundary_samples = 256;
    CertifiedConstants constants{};
};

// --- scalar helpers ---------------------------------------------------------------

// smallest m with (1 - mu)^m < target
inline long long min_degree_for_decay(double mu, double target) {
    if (!(mu > 0 && mu < 1) || !(target > 0 && target < 1)) throw DomainError("min_degree_for_decay needs mu, target in (0,1)");
    return (long long)std::ceil(std::log(target) / std::log1p(-mu));
}

// (K/m)^{1/(m-1)} (m-1)/m
inline double outer_factor(double K, double m) {
    if (!(m > 1) || !(K > 0)) throw DomainError("outer_factor needs m > 1, K > 0");
    return std::exp((std::log(K) - std::log(m)) / (m - 1) + std::log1p(-1 / m));
}

inline double koebe_K(double mu_prev) { return (2 - mu_prev) / (2 - 2 * mu_prev); }

// containment constants of the univalence chain
inline double chain_C_lower() {
    double rad = 1.5 * kPi + 1;
    return 100 / ((10 + rad) * (10 + rad));
}
inline double chain_C_upper() {
    double rad = 1.5 * kPi + 1;
    return 100 / ((10 - rad) * (10 - rad));
}

/**
 * 1 - A and B - 1 for the Koebe correction products
 *   A = (1-x)/(1+x)^3 * d^2 (1-2mu)/(d+1-2mu)^2,  B = (1+x)/(1-x)^3 * d^2 (1+2mu)/(d-1-2mu)^2,
 * x = 2pi/d. Exact in doubles when both inputs are representable, first order otherwise.
 */
struct KoebeDeficits {
    Scaled defA, defB;
    bool exact = false;
};

inline KoebeDeficits koebe_deficits(const Scaled& mu_pn, const Scaled& inv_dist) {
    KoebeDeficits k;
    bool dbl = mu_pn.scale.is_zero() && inv_dist.scale.is_zero();
    if (dbl) {
        double mu = mu_pn.coeff, d = 1 / inv_dist.coeff, x = 2 * kPi / d;
        if (!(x < 1) || !(d > 1 + 2 * mu)) throw DomainError("dist_n must exceed 2pi and 1 + 2mu");
        double A = (1 - x) / std::pow(1 + x, 3) * d * d * (1 - 2 * mu) / ((d + 1 - 2 * mu) * (d + 1 - 2 * mu));
        double B = (1 + x) / std::pow(1 - x, 3) * d * d * (1 + 2 * mu) / ((d - 1 - 2 * mu) * (d - 1 - 2 * mu));
        k.defA = Scaled(1 - A);
        k.defB = Scaled(B - 1);
        k.exact = true;
        return k;
    }
    Scaled lin = inv_dist * (8 * kPi + 2) + mu_pn * 2.0;
    k.defA = lin;
    k.defB = lin;
    return k;
}

// both corrections meet the thresholds built from mu_prev
inline bool check_asymptotics_terms(const Scaled& mu_pn, const Scaled& mu_prev, const Scaled& inv_dist) {
    if (inv_dist.coeff <= 0) return false;
    if (inv_dist.scale.is_zero() && inv_dist.coeff >= 1 / (2 * kPi)) return false;
    KoebeDeficits k = koebe_deficits(mu_pn, inv_dist);
    double mp = mu_prev.to_double();
    Scaled capA = mu_prev * 0.5;
    Scaled capB = mu_prev * (1 / (2 - 2 * mp));
    return !(capA < k.defA) && !(capB < k.defB);
}

inline bool check_asymptotics(double mu_pn, double mu_prev, double dist_n) {
    if (!(dist_n > 2 * kPi)) throw DomainError("dist_n must exceed 2pi");
    if (!(mu_prev > 0 && mu_prev < 0.125)) throw DomainError("mu_prev must lie in (0, 1/8)");
    return check_asymptotics_terms(Scaled(mu_pn), Scaled(mu_prev), Scaled(1 / dist_n));
}

// mu_{p_n} taken from the model's target disk
inline bool check_asymptotics(int n, double mu_prev, double dist_n, Budget& b, const GraphModel& g) {
    PIndex p = p_index(n, b, g);
    Scaled mu = mu_sequence_scaled(p.abs_z);
    if (!(dist_n > 2 * kPi)) throw DomainError("dist_n must exceed 2pi");
    if (!(mu_prev > 0 && mu_prev < 0.125)) throw DomainError("mu_prev must lie in (0, 1/8)");
    return check_asymptotics_terms(mu, Scaled(mu_prev), Scaled(1 / dist_n));
}

// --- state --------------------------------------------------------------------------

struct EqMargins {
    Scaled m1, m2, m3;
    Scaled R_m, R_phi, outer_defect;
    bool all_positive() const { return m1.sign() > 0 && m2.sign() > 0 && m3.sign() > 0; }
};

struct StepReport {
    bool ok = false;
    int samples = 0;
    Scaled margin_pre;                 // before the phi correction, relative to D_eval
    Scaled margin_post;                // after it
    Scaled required;                   // C_rel (pre) ; post needs 3/4 of it
    std::vector<Scaled> step_margins;  // absolute distance margin after each forward step
    std::string failure;
};

struct Choice {
    Scaled delta;          // K * D
    Scaled w_scale;        // D: w = 1/2 + D (o + i pi)
    double w_offset = 0;   // o = a_p - g^n(1/2) when resolved
    bool offset_exact = false;
    cplx w_approx{0.5, 0};
    TowerReal log_m;       // ln m
    Scaled inv_m_rel;      // 1 / (m D_eval)
    double delta_scale = 1;
};

struct LevelRecord {
    int k = 0;
    int n = 0;
    PIndex p;                  // target p_{n_k}
    std::string disk;          // index of the disk whose parameters this level fixes, p_{n_{k-1}}
    Scaled mu_prev, mu_p, inv_dist;
    Scaled inv_dist_required;  // largest 1/dist_n meeting both thresholds
    KoebeDeficits deficits;
    double K = 1;
    Scaled b1, b2;
    TowerReal Lambda, Lambda_eval;
    double eval_rel = 1;       // D_eval / D
    Scaled C_rel, C_abs;
    Scaled minC_rel;           // min_{l<=k} C_{n_l} / D_eval
    std::string m_binding;
    EqMargins margins;
    Choice choice;
    bool permissible = true;
    std::string permissibility;
    Scaled disp_bound_abs, disp_sup_abs;
    StepReport inclusion, exclusion;
};

struct ConstructionState {
    ConstructionConfig config;
    Budget budget;
    GraphModel graph;
    double c_disp = 0;
    std::vector<int> n_seq{1};
    std::vector<PIndex> p_seq;
    std::vector<LevelRecord> levels;     // k = 2, 3, ...
    std::map<std::string, Choice> chosen;

    int level() const { return int(n_seq.size()); }
    std::vector<Scaled> C_seq() const {
        std::vector<Scaled> c;
        for (const auto& L : levels) c.push_back(L.C_abs);
        return c;
    }
    LevelRecord& record(int k) {
        if (k < 2 || k - 2 >= int(levels.size())) throw DomainError("no record for level " + std::to_string(k));
        return levels[size_t(k - 2)];
    }
    const LevelRecord& record(int k) const { return const_cast<ConstructionState*>(this)->record(k); }
};

inline std::string pindex_key(const PIndex& p) { return p.exact ? std::to_string(p.value) : "pi^-1*" + p.symbolic.str(); }

inline ConstructionState initial_state(const ConstructionConfig& cfg, double c_disp) {
    ConstructionState s;
    s.config = cfg;
    s.budget = Budget(cfg.lambda, cfg.mode == Mode::strict);
    s.graph = solve_vertices(cfg.lambda, 3);
    s.c_disp = c_disp;
    s.p_seq.push_back(p_index(1, s.budget, s.graph));
    return s;
}

// --- displacement calibration ----------------------------------------------------------------

struct DisplacementSweep {
    std::vector<long long> ms;
    std::vector<double> sup;     // solved sup |psi - id|
    std::vector<double> ratio;   // sup * m / (4 delta0)
    double closed_form = 0;      // 2 k0 / (1 - k0)
    double c_disp = 0;
};

// worst-case annulus field of strength k0 and width 4 delta0 / m
inline DisplacementSweep displacement_calibration(const std::vector<long long>& ms, int N, const CertifiedConstants& c = {}) {
    DisplacementSweep s;
    s.closed_form = 2 * c.k0 / (1 - c.k0);
    s.c_disp = s.closed_form;
    for (long long m : ms) {
        double width = 4 * c.delta0 / double(m);
        BeltramiField f = radial_stretch_field(N, 1.25, c.k0, 1 - width, 1.0);
        QCMapApprox phi = solve_beltrami(f, 1e-10, 400);
        double sup = deviation_profile(phi, 1.0).eps_global;
        s.ms.push_back(m);
        s.sup.push_back(sup);
        s.ratio.push_back(sup / width);
        s.c_disp = std::max(s.c_disp, sup / width);
    }
    return s;
}

// --- margins --------------------------------------------------------------------------

// ln m for the stored inverse 1/(m D_eval)
inline TowerReal log_degree(const Scaled& inv_m_rel, const TowerReal& Lambda_eval) {
    return tower_add(Lambda_eval, inv_m_rel.neglog());
}

// K (1 - F) bounded by 2K (ln X + 1) / m, exact in doubles when m is representable
inline Scaled power_defect(double K, const TowerReal& log_m, const TowerReal& log_ratio, double ratio_exact_m_over) {
    if (log_m.depth == 0 && log_m.mantissa < 700) {
        double m = std::exp(log_m.mantissa);
        double F = std::exp(-std::log(ratio_exact_m_over) / (m - 1) + std::log1p(-1 / m));
        return Scaled(K * (1 - F));
    }
    TowerReal nl = tower_sub(log_m, tower_log(tower_add_const(log_ratio, 1.0)));
    return Scaled(nl, 2 * K);
}

inline EqMargins eq_margins_for(const LevelRecord& L, const Scaled& inv_m_rel, double c_disp, double delta0,
                                std::optional<Scaled> C_override = std::nullopt) {
    EqMargins e;
    Scaled C = C_override ? *C_override : L.C_rel;
    TowerReal lm = log_degree(inv_m_rel, L.Lambda_eval);
    // (1 - mu)^m / D_eval <= exp(-(m mu - Lambda_eval))
    TowerReal m_mu;
    try {
        double q = (L.mu_prev / inv_m_rel).to_double();
        m_mu = tower_exp(tower_add_const(L.Lambda_eval, std::log(q)));
    } catch (const DomainError&) {
        m_mu = tower_exp(tower_add(L.Lambda_eval, tower_sub(inv_m_rel.neglog(), L.mu_prev.neglog())));
    }
    if (m_mu >= L.Lambda_eval) {
        e.R_m = Scaled::from_neglog(tower_sub(m_mu, L.Lambda_eval));
    } else {
        double gap = tower_diff_double(L.Lambda_eval, m_mu);
        e.R_m = Scaled(std::isfinite(gap) && gap < kExpMax ? std::exp(gap) : HUGE_VAL);
    }
    e.R_phi = inv_m_rel * (c_disp * 4 * delta0);
    double m_over_K = lm.depth == 0 && lm.mantissa < 700 ? std::exp(lm.mantissa) / L.K : 0;
    e.outer_defect = power_defect(L.K, lm, lm, m_over_K);
    e.m1 = L.b1 - e.R_m - C;
    e.m2 = L.b2 - e.outer_defect - C;
    e.m3 = L.minC_rel * std::ldexp(1.0, -L.k) - e.R_phi;
    return e;
}

// --- level selection ---------------------------------------------------------------------

struct LevelGeometry {
    PIndex p;
    Scaled mu_p, inv_dist;
};

inline LevelGeometry level_geometry(int n, ConstructionState& s) {
    LevelGeometry g;
    g.p = p_index(n, s.budget, s.graph);
    g.mu_p = mu_sequence_scaled(g.p.abs_z);
    if (s.config.dist_override > 0)
        g.inv_dist = Scaled(1 / s.config.dist_override);
    else
        g.inv_dist = Scaled::from_neglog(tower_log(g.p.abs_z)) * 2.0;
    return g;
}

inline Scaled mu_of_target(const PIndex& p) { return mu_sequence_scaled(p.abs_z); }

/**
 * Choose n_k (first index past n_{k-1} meeting the Koebe thresholds), C_{n_k} and m_{p_{n_{k-1}}}.
 * Appends the level record; choices and verification are separate steps.
 */
inline LevelRecord& select_level(ConstructionState& s) {
    int k = s.level() + 1;
    int n_prev = s.n_seq.back();
    const PIndex& p_prev = s.p_seq.back();
    Scaled mu_prev = mu_of_target(p_prev);
    bool strict = s.config.mode == Mode::strict;

    LevelRecord L;
    L.k = k;
    L.mu_prev = mu_prev;
    L.disk = pindex_key(p_prev);
    std::string binding = "none scanned";
    bool found = false;
    for (int n = n_prev + 1; n <= n_prev + s.config.scan_horizon; ++n) {
        LevelGeometry geo = level_geometry(n, s);
        if (strict && !check_cor_4_10(n, s.budget)) {
            binding = "containment in D(1/2, 1/8) fails at n = " + std::to_string(n);
            continue;
        }
        if (!check_asymptotics_terms(geo.mu_p, mu_prev, geo.inv_dist)) {
            KoebeDeficits d = koebe_deficits(geo.mu_p, geo.inv_dist);
            binding = "Koebe deficits at n = " + std::to_string(n) + ": 1-A = " + d.defA.str() + ", B-1 = " +
                      d.defB.str() + " vs mu_prev/2 = " + (mu_prev * 0.5).str();
            continue;
        }
        L.n = n;
        L.p = geo.p;
        L.mu_p = geo.mu_p;
        L.inv_dist = geo.inv_dist;
        found = true;
        break;
    }
    if (!found) throw HorizonError(k, binding);

    double mp = mu_prev.to_double();
    L.K = koebe_K(mp);
    L.deficits = koebe_deficits(L.mu_p, L.inv_dist);
    L.b1 = mu_prev * 0.5 - L.deficits.defA;
    L.b2 = mu_prev * (1 / (2 - 2 * mp)) - L.deficits.defB;
    {
        // first order: (8pi + 2)/d <= mu_prev/2 - 2 mu_p
        Scaled room = mu_prev * 0.5 - L.mu_p * 2.0;
        L.inv_dist_required = room.sign() > 0 ? room * (1 / (8 * kPi + 2)) : Scaled(0.0);
    }

    L.Lambda = s.budget.log_inverse_derivative(L.n);
    L.eval_rel = strict ? s.budget.lower_over_exact(L.n) : 1.0;
    L.Lambda_eval = tower_add_const(L.Lambda, -std::log(L.eval_rel));
    Scaled D_eval = Scaled::from_neglog(L.Lambda_eval);
    L.C_rel = scaled_min(L.b1, L.b2) * 0.5;
    L.C_abs = L.C_rel * D_eval;

    Scaled minC_abs = L.C_abs;
    L.minC_rel = L.C_rel;
    for (const auto& prev : s.levels)
        if (prev.C_abs < minC_abs) {
            minC_abs = prev.C_abs;
            L.minC_rel = prev.C_abs / D_eval;
        }

    // degree requirements as lower bounds on ln m; the stored inverse is 1/(m D_eval)
    const auto& cc = s.config.constants;
    double disp_const = s.c_disp * 4 * cc.delta0 * std::ldexp(1.0, k + 1);
    Scaled inv_disp = L.minC_rel * (1 / disp_const);
    TowerReal ln_disp = log_degree(inv_disp, L.Lambda_eval);
    TowerReal X1 = tower_add(L.Lambda_eval, tower_add_const(L.b1.neglog(), std::log(4.0)));
    TowerReal ln_inner = tower_add(tower_log(X1), mu_prev.neglog());
    Scaled t = L.b2 * (1 / (16 * L.K));
    TowerReal l2t = tower_add_const(t.neglog(), std::log(2.0));
    TowerReal ln_outer = tower_add(l2t, tower_log(tower_add_const(l2t, 1.0)));
    TowerReal ln_m0(0, std::log(double(cc.m0)));

    TowerReal ln_m = ln_disp;
    L.m_binding = "displacement";
    auto take = [&](const TowerReal& c, const char* name) {
        if (c > ln_m) {
            ln_m = c;
            L.m_binding = name;
        }
    };
    take(ln_inner, "inner");
    take(ln_outer, "outer");
    take(ln_m0, "m0");
    Scaled inv = inv_disp;
    if (L.m_binding != "displacement") {
        TowerReal nl = tower_sub(ln_m, L.Lambda_eval);
        inv = Scaled::from_neglog(nl);
    }
    L.choice.inv_m_rel = inv;
    L.choice.log_m = log_degree(inv, L.Lambda_eval);
    L.margins = eq_margins_for(L, inv, s.c_disp, cc.delta0);
    L.disp_bound_abs = minC_abs * std::ldexp(1.0, -k);
    L.disp_sup_abs = L.disp_bound_abs * (L.margins.R_phi / (L.minC_rel * std::ldexp(1.0, -k))).to_double();

    s.levels.push_back(L);
    s.n_seq.push_back(L.n);
    s.p_seq.push_back(L.p);
    return s.levels.back();
}

inline EqMargins eq_margins(int k, const ConstructionState& s) {
    const LevelRecord& L = s.record(k);
    return eq_margins_for(L, L.choice.inv_m_rel, s.c_disp, s.config.constants.delta0);
}

// --- choices ----------------------------------------------------------------------------

// w = f^{-n_k}(z_{p_{n_k}}) to first order, delta = K (f^{-n_k})'(g^{n_k}(1/2)); writes only this level's disk
inline Choice& choose_w_delta(int k, ConstructionState& s, double delta_scale = 1.0) {
    LevelRecord& L = s.record(k);
    Scaled D = Scaled::from_neglog(L.Lambda);
    Choice& c = L.choice;
    c.delta_scale = delta_scale;
    c.delta = D * (L.K * delta_scale);
    c.w_scale = D;
    c.offset_exact = L.p.exact;
    c.w_offset = L.p.exact ? L.p.offset : 0.0;
    double Dd = D.to_double();
    c.w_approx = cplx(0.5 + Dd * c.w_offset, Dd * kPi);

    const auto& cc = s.config.constants;
    std::ostringstream why;
    bool ok = true;
    if (!(c.delta < Scaled(cc.delta0))) {
        ok = false;
        why << "delta >= delta0; ";
    }
    // |w - 1/2| <= D |z_p - g^n(1/2)| times the Koebe growth factor on D(z_p, 1 + 2 mu)
    Scaled reach = D * (std::hypot(kPi / 2, kPi) * 4);
    if (!(reach < Scaled(0.125))) {
        ok = false;
        why << "w leaves D(1/2, 1/8); ";
    }
    if (locate(cplx(0.5, 0), s.graph).region != Region::strip) {
        ok = false;
        why << "w outside the strip region; ";
    }
    if (s.config.mode == Mode::strict) {
        if (!s.budget.certifying()) {
            ok = false;
            why << "lambda below lambda0; ";
        }
        if (!check_cor_4_10(L.n, s.budget)) {
            ok = false;
            why << "containment estimate fails at n; ";
        }
    }
    L.permissible = ok;
    L.permissibility = ok ? "ok" : why.str();
    s.chosen[L.disk] = c;
    return c;
}

// --- verification -----------------------------------------------------------------------

// absolute distance margin after j forward steps: margin_rel * eval_rel * prod_{i=j}^{n-1} 1/g'(x_i)
inline std::vector<Scaled> forward_step_margins(const Scaled& margin_rel, const LevelRecord& L, ConstructionState& s) {
    std::vector<Scaled> out(size_t(L.n) + 1);
    TowerReal tail(0, 0.0);
    for (int j = L.n; j >= 0; --j) {
        out[size_t(j)] = Scaled(tower_add(tail, margin_rel.scale), margin_rel.coeff * L.eval_rel);
        if (j > 0) tail = tower_add(tail, log_g_prime_tower(s.budget.orbit_point(j - 1), s.budget.lambda));
    }
    return out;
}

/**
 * Image of the boundary of D^-_{p_{n_{k-1}}} under the level's disk map, then n_k strip steps,
 * against D^{--}_{p_{n_k}}. Per sample the image offset is bounded by the worst-case modulus
 * K'(1-mu) + (1-mu)^m / D_eval, so the verdict cannot depend on theta at tower scale.
 */
inline StepReport verify_inclusion(int k, ConstructionState& s) {
    LevelRecord& L = s.record(k);
    const Choice& c = L.choice;
    StepReport r;
    r.required = L.C_rel;
    Scaled one_minus_mu_half = Scaled(1.0) - L.mu_prev * 0.5;   // K (1 - mu)
    Scaled slack = one_minus_mu_half * (1 - c.delta_scale);
    EqMargins e = eq_margins_for(L, c.inv_m_rel, s.c_disp, s.config.constants.delta0);
    int N = std::max(256, s.config.boundary_samples);
    std::optional<bool> prev;
    for (;; N *= 2) {
        bool all = true;
        Scaled worst;
        bool first = true;
        for (int j = 0; j < N; ++j) {
            Scaled pre = L.b1 + slack - e.R_m;
            if (first || pre < worst) worst = pre;
            first = false;
            if (pre < L.C_rel) all = false;
        }
        r.margin_pre = worst;
        r.margin_post = worst - e.R_phi;
        bool verdict = all && !(r.margin_post < L.C_rel * 0.75);
        r.samples = N;
        if (prev && *prev == verdict) {
            r.ok = verdict;
            break;
        }
        prev = verdict;
        if (N >= 1 << 14) {
            r.ok = verdict;
            break;
        }
    }
    if (!r.ok) r.failure = "inclusion margin " + r.margin_post.str() + " below 3C/4 = " + (L.C_rel * 0.75).str();
    if (r.margin_post.sign() > 0) r.step_margins = forward_step_margins(r.margin_post, L, s);
    L.inclusion = r;
    return r;
}

/**
 * Critical values of the level's disk map sit at |v - w| = delta (delta/m)^{1/(m-1)} (m-1)/m.
 * They must stay outside the pulled-back D^{++}, whose radius is at most B D.
 */
inline StepReport verify_critical_exclusion(int k, ConstructionState& s) {
    LevelRecord& L = s.record(k);
    const Choice& c = L.choice;
    StepReport r;
    r.required = L.C_rel;
    EqMargins e = eq_margins_for(L, c.inv_m_rel, s.c_disp, s.config.constants.delta0);
    Scaled B = Scaled(1.0) + L.deficits.defB;
    if (c.delta_scale <= 0 || c.delta.is_zero()) {
        // the single critical value is w itself, the pulled-back centre
        r.margin_pre = -B;
    } else {
        double Ks = L.K * c.delta_scale;
        // ln(m/delta) = ln m + Lambda - ln(K s)
        TowerReal lmd = tower_add_const(tower_add(c.log_m, L.Lambda), -std::log(Ks));
        double m_over_delta = 0;
        if (c.log_m.depth == 0 && c.log_m.mantissa < 700 && L.Lambda.depth == 0 && L.Lambda.mantissa < 700)
            m_over_delta = std::exp(c.log_m.mantissa + L.Lambda.mantissa) / Ks;
        Scaled defect = power_defect(Ks, c.log_m, lmd, m_over_delta);
        r.margin_pre = L.b2 - defect - Scaled(L.K * (1 - c.delta_scale));
    }
    r.margin_post = r.margin_pre - e.R_phi;
    r.samples = std::max(256, s.config.boundary_samples);
    r.ok = !(r.margin_pre < L.C_rel) && !(r.margin_post < L.C_rel * 0.75);
    if (!r.ok) r.failure = "critical values within C of the pulled-back D++: margin " + r.margin_post.str();
    if (r.margin_post.sign() > 0) r.step_margins = forward_step_margins(r.margin_post, L, s);
    L.exclusion = r;
    return r;
}

// --- pipeline ---------------------------------------------------------------------------

inline void construct_level(ConstructionState& s) {
    ConstructionState trial = s;
    LevelRecord& L = select_level(trial);
    int k = L.k;
    choose_w_delta(k, trial);
    verify_inclusion(k, trial);
    verify_critical_exclusion(k, trial);
    s = std::move(trial);
}

inline ConstructionState run_construction(const ConstructionConfig& cfg, double c_disp) {
    if (cfg.levels < 1) throw DomainError("levels >= 1");
    ConstructionState s = initial_state(cfg, c_disp);
    while (s.level() < cfg.levels) construct_level(s);
    return s;
}

inline ConstructionState run_construction(const ConstructionConfig& cfg) {
    DisplacementSweep sw = displacement_calibration(cfg.disp_ms, cfg.disp_grid, cfg.constants);
    return run_construction(cfg, sw.c_disp);
}

// --- univalence audit ----------------------------------------------------------------------

struct ChainResult {
    int level = 0;             // the later level of the pair
    int n_lo = 0, n_hi = 0;
    TowerReal log_ratio;
    double ratio = HUGE_VAL;   // when representable
    bool pass = false;
};

struct OrbitResult {
    double x0 = 0;
    std::vector<TowerReal> orbit;
    bool increasing = false;
    bool escapes = false;
};

struct AuditReport {
    bool exclusion_all = false;
    std::vector<ChainResult> chain;
    std::vector<OrbitResult> orbits;
    bool localized = false;
    std::string localization;
    std::vector<std::string> failures;
    bool pass() const { return failures.empty(); }
};

// ln of C'((pi-1) lo_{n_a} - pi hi_{n_b}) / (C hi_{n_b} (1 + 2 mu)), summed rather than subtracted
inline ChainResult chain_ratio(int n_a, int n_b, const Scaled& mu_b, Budget& b, double threshold) {
    ChainResult c;
    c.n_lo = n_a;
    c.n_hi = n_b;
    double base = n_a * std::log(b.c_lo()) - n_b * std::log(b.C0());
    for (int k = 1; k <= n_a; ++k)
        base += tower_diff_double(b.log_g_prime_at_shifted_preimage(k, -2 * b.eps0),
                                  b.log_g_prime_at_shifted_preimage(k, 2 * b.eps0));
    TowerReal S(0, 0.0);
    for (int k = n_a + 1; k <= n_b; ++k) S = tower_add(S, b.log_g_prime_at_shifted_preimage(k, -2 * b.eps0));
    TowerReal logQ = tower_add_const(S, base);
    double consts = std::log(chain_C_lower() / chain_C_upper()) - std::log1p(2 * mu_b.to_double());
    double lq = logQ.to_double();
    if (logQ.depth == 0 && lq < 700) {
        double Q = std::exp(lq);
        double num = (kPi - 1) * Q - kPi;
        c.ratio = std::exp(consts) * num;
        c.log_ratio = TowerReal(0, num > 0 ? std::log(c.ratio) : std::numeric_limits<double>::lowest());
        c.pass = c.ratio >= threshold;
        return c;
    }
    c.log_ratio = tower_add_const(logQ, std::log(kPi - 1) + consts);
    c.pass = c.log_ratio >= TowerReal(0, std::log(threshold));
    return c;
}

inline OrbitResult real_orbit_escape(double x0, double lambda, const TowerReal& bound, int max_steps = 8) {
    OrbitResult o;
    o.x0 = x0;
    // g(0) = sigma(0) = 1 in the boundary model; g is even
    o.orbit.push_back(TowerReal(0, x0));
    TowerReal x = x0 == 0 ? TowerReal(0, 1.0) : TowerReal(0, std::fabs(x0));
    if (x0 == 0)
        o.orbit.push_back(x);
    else
        x = g_real_tower(x, lambda), o.orbit.push_back(x);
    for (int s = 0; s < max_steps && !(x > bound); ++s) {
        x = g_real_tower(x, lambda);
        o.orbit.push_back(x);
    }
    o.increasing = true;
    for (size_t i = 1; i < o.orbit.size(); ++i) {
        bool up = o.orbit[i - 1].depth == 0 && o.orbit[i - 1].mantissa < 0 ? true : o.orbit[i] > o.orbit[i - 1];
        if (!up) o.increasing = false;
    }
    o.escapes = o.orbit.back() > bound;
    return o;
}

inline AuditReport univalence_audit(ConstructionState& s) {
    AuditReport a;
    if (s.level() < 3) throw DomainError("univalence audit needs at least 3 levels");
    a.exclusion_all = true;
    for (const auto& L : s.levels)
        if (!L.exclusion.ok) {
            a.exclusion_all = false;
            a.failures.push_back("level " + std::to_string(L.k) + ": critical exclusion margin " +
                                 L.exclusion.margin_post.str());
        }
    Budget strict_budget(s.config.lambda, true);
    for (size_t l = 1; l + 1 < s.n_seq.size(); ++l) {
        ChainResult c = chain_ratio(s.n_seq[l], s.n_seq[l + 1], mu_of_target(s.p_seq[l + 1]), strict_budget,
                                    s.config.audit_ratio_threshold);
        c.level = int(l) + 2;
        if (!c.pass) a.failures.push_back("level " + std::to_string(c.level) + ": chain ratio log " + c.log_ratio.str());
        a.chain.push_back(c);
    }
    TowerReal bound(3, 10.0);
    for (double x0 : {0.0, 1.0, -1.0}) {
        OrbitResult o = real_orbit_escape(x0, s.config.lambda, bound);
        if (!o.increasing || !o.escapes)
            a.failures.push_back("real orbit of " + std::to_string(x0) + " does not escape");
        a.orbits.push_back(o);
    }
    // the component through phi(D^-_{p_1}) stays inside D(z_{p_1}, 1 + 2 mu_{p_1})
    const PIndex& p1 = s.p_seq[0];
    double mu1 = mu_of_target(p1).to_double();
    double rad = 1 + 2 * mu1;
    std::ostringstream os;
    bool ok = p1.exact;
    if (ok) {
        cplx z = s.graph.z(p1.value);
        double gap = std::min(std::abs(s.graph.z(p1.value + 1) - z), std::abs(s.graph.z(p1.value - 1) - z));
        ok = rad + 1 < gap && z.imag() - rad > 0 && mu1 < 0.125 && s.record(2).inclusion.ok;
        os << "radius " << rad << ", neighbour gap " << gap << ", inclusion at level 2 "
           << (s.record(2).inclusion.ok ? "holds" : "fails");
    } else {
        os << "p_1 not resolved";
    }
    a.localized = ok;
    a.localization = os.str();
    if (!ok) a.failures.push_back("localization: " + a.localization);
    return a;
}

// --- serialization ----------------------------------------------------------------------------

inline uint64_t fnv1a(const std::string& s) {
    uint64_t h = 1469598103934665603ull;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    return h;
}

inline std::string serialize_level(const LevelRecord& L) {
    std::ostringstream os;
    os.precision(17);
    os << "[level " << L.k << "]\n";
    os << "n = " << L.n << "\np = " << pindex_key(L.p) << "\ndisk = " << L.disk << "\n";
    os << "mu_prev = " << L.mu_prev.str() << "\nmu_p = " << L.mu_p.str() << "\ninv_dist = " << L.inv_dist.str()
       << "\ninv_dist_required = " << L.inv_dist_required.str() << "\n";
    os << "defA = " << L.deficits.defA.str() << "\ndefB = " << L.deficits.defB.str() << "\nK = " << L.K << "\n";
    os << "b1 = " << L.b1.str() << "\nb2 = " << L.b2.str() << "\n";
    os << "Lambda = " << L.Lambda.str() << "\nLambda_eval = " << L.Lambda_eval.str() << "\neval_rel = " << L.eval_rel
       << "\n";
    os << "C_rel = " << L.C_rel.str() << "\nC = " << L.C_abs.str() << "\nminC_rel = " << L.minC_rel.str() << "\n";
    os << "m_binding = " << L.m_binding << "\nlog_m = " << L.choice.log_m.str() << "\ninv_m_rel = "
       << L.choice.inv_m_rel.str() << "\n";
    os << "m1 = " << L.margins.m1.str() << "\nm2 = " << L.margins.m2.str() << "\nm3 = " << L.margins.m3.str()
       << "\nR_m = " << L.margins.R_m.str() << "\nR_phi = " << L.margins.R_phi.str() << "\nouter_defect = "
       << L.margins.outer_defect.str() << "\n";
    os << "delta = " << L.choice.delta.str() << "\ndelta_scale = " << L.choice.delta_scale << "\nw = 1/2 + "
       << L.choice.w_scale.str() << "*(" << (L.choice.offset_exact ? std::to_string(L.choice.w_offset) : "o") << " + i pi)\n";
    os << "permissible = " << L.permissibility << "\n";
    os << "disp_bound = " << L.disp_bound_abs.str() << "\ndisp_sup = " << L.disp_sup_abs.str() << "\n";
    os << "inclusion = " << (L.inclusion.ok ? 1 : 0) << " samples " << L.inclusion.samples << " margin "
       << L.inclusion.margin_post.str() << "\n";
    os << "exclusion = " << (L.exclusion.ok ? 1 : 0) << " margin " << L.exclusion.margin_post.str() << "\n";
    return os.str();
}

inline std::string serialize_state(const ConstructionState& s) {
    std::ostringstream os;
    os.precision(17);
    os << "lambda = " << s.config.lambda << "\nmode = " << mode_name(s.config.mode) << "\nlevels = " << s.level()
       << "\nc_disp = " << s.c_disp << "\nn_seq =";
    for (int n : s.n_seq) os << " " << n;
    os << "\np_1 = " << pindex_key(s.p_seq[0]) << "\n";
    for (const auto& L : s.levels) os << serialize_level(L);
    return os.str();
}

inline uint64_t state_hash(const ConstructionState& s) { return fnv1a(serialize_state(s)); }

// per-level audit table
inline std::string audit_csv(const ConstructionState& s) {
    std::ostringstream os;
    os << "k,n,p,C,m1,m2,m3,inclusion,exclusion,permissible\n";
    for (const auto& L : s.levels)
        os << L.k << "," << L.n << "," << pindex_key(L.p) << "," << L.C_abs.str() << "," << L.margins.m1.str() << ","
           << L.margins.m2.str() << "," << L.margins.m3.str() << "," << (L.inclusion.ok ? 1 : 0) << ","
           << (L.exclusion.ok ? 1 : 0) << "," << (L.permissible ? 1 : 0) << "\n";
    return os.str();
}

}  // namespace qcfold
