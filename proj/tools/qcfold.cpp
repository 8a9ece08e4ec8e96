#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <random>
#include <sstream>

#include "qcfold/beltrami.hpp"
#include "qcfold/config.hpp"
#include "qcfold/construction.hpp"
#include "qcfold/disk_maps.hpp"
#include "qcfold/graph_model.hpp"
#include "qcfold/koebe_budget.hpp"
#include "qcfold/render.hpp"

using namespace qcfold;
namespace fs = std::filesystem;

namespace {

constexpr int kExitPass = 0;
constexpr int kExitUsage = 1;
constexpr int kExitCheck = 2;

struct Report {
    std::string command;
    fs::path out;
    std::ostringstream text;   // structured key = value report
    std::ostringstream csv;
    std::ostringstream log;
    int failures = 0;

    Report(std::string cmd, fs::path dir) : command(std::move(cmd)), out(std::move(dir)) {
        text << std::setprecision(17);
        csv << std::setprecision(17);
        log << std::setprecision(17);
    }

    void check(const std::string& name, bool ok, const std::string& detail) {
        std::string line = std::string(ok ? "PASS " : "FAIL ") + name + ": " + detail;
        log << line << "\n";
        std::cout << line << "\n";
        if (!ok) ++failures;
    }

    void note(const std::string& msg) {
        log << msg << "\n";
        std::cout << msg << "\n";
    }

    void write() const {
        auto put = [&](const std::string& ext, const std::string& body) {
            std::ofstream f(out / (command + ext), std::ios::binary);
            if (!f) throw std::runtime_error("cannot write " + (out / (command + ext)).string());
            f << body;
        };
        put(".txt", text.str());
        if (!csv.str().empty()) put(".csv", csv.str());
        put(".log", log.str() + (failures ? "result = FAIL\n" : "result = PASS\n"));
    }
};

std::string fmt(double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

CertifiedConstants constants_from(const RunConfig& cfg) {
    std::string path = cfg.str("constants_file");
    if (path.empty()) path = std::string(QCFOLD_DATA_DIR) + "/certified_constants.txt";
    try {
        return load_certified_constants(path);
    } catch (const std::runtime_error& e) {
        throw ConfigError(e.what());
    }
}

// --- verify-disk-maps ----------------------------------------------------------------

void run_verify_disk_maps(const RunConfig& cfg, Report& r) {
    DiskMapParams p;
    try {
        p = DiskMapParams(cfg.integer("disk.m"), cfg.real("disk.delta"), cplx(cfg.real("disk.w_re"), cfg.real("disk.w_im")));
    } catch (const ParameterError& e) {
        throw ConfigError(e.what());
    }
    int grid = int(cfg.integer("disk.grid"));
    if (grid < 256) throw ConfigError("disk.grid must be >= 256");
    CertifiedConstants cc = constants_from(cfg);

    DilatationBoundReport rep = verify_lemma31(p, grid);
    double bound = cfg.real("disk.max_dilatation");
    r.text << "m = " << p.m << "\ndelta = " << p.delta << "\nw = " << p.w.real() << " " << p.w.imag() << "\n";
    r.text << "r = " << rep.r << "\ncritical_radius = " << rep.critical_radius << "\nmax_dilatation = "
           << rep.max_dilatation << "\nargmax_radius = " << rep.argmax_radius << "\n";
    r.text << "permissible = " << (permissible(p, cc) ? 1 : 0) << "\n";
    r.csv << "check,value,bound,pass\n";

    bool sup_ok = rep.max_dilatation < bound;
    r.check("dilatation sup", sup_ok, fmt(rep.max_dilatation) + " < " + fmt(bound));
    r.csv << "max_dilatation," << rep.max_dilatation << "," << bound << "," << sup_ok << "\n";
    bool where_ok = rep.argmax_radius > rep.r && rep.argmax_radius < 1;
    r.check("sup location", where_ok, "radius " + fmt(rep.argmax_radius) + " in (" + fmt(rep.r) + ", 1)");
    r.csv << "argmax_radius," << rep.argmax_radius << "," << rep.r << "," << where_ok << "\n";
    r.check("radius inequality", rep.r_inequality, fmt(rep.r) + " > " + fmt(rep.critical_radius));
    r.csv << "radius_inequality," << rep.r << "," << rep.critical_radius << "," << rep.r_inequality << "\n";

    // closed-form dilatation against central differences on the annulus
    std::mt19937_64 rng(std::uint64_t(cfg.integer("seed")));
    std::uniform_real_distribution<double> u(0, 1);
    long long npts = cfg.integer("disk.fd_points");
    double tol = cfg.real("disk.fd_tol"), worst = 0;
    double rr = std::max(rep.r, 0.0), h = 1e-4 * (1 - rr);
    long long bad = 0;
    for (long long i = 0; i < npts; ++i) {
        double t = rr + (1 - rr) * (0.02 + 0.96 * u(rng));
        cplx z = std::polar(t, 2 * kPi * u(rng));
        cplx mu = psi_dilatation(z, p);
        Wirtinger fd = wirtinger_fd([&](cplx x) { return psi_eval(x, p); }, z, h);
        double err = std::abs(mu - fd.d_zbar / fd.d_z);
        double allowed = tol * std::abs(mu) + 1e-15 / h;
        worst = std::max(worst, err / allowed);
        if (!(err <= allowed)) ++bad;
    }
    r.text << "fd_points = " << npts << "\nfd_worst_ratio = " << worst << "\n";
    r.check("finite differences", bad == 0, std::to_string(bad) + " of " + std::to_string(npts) + " outside tolerance");
    r.csv << "fd_outliers," << bad << ",0," << (bad == 0) << "\n";

    double s = cfg.real("disk.support_s");
    if (p.delta >= 1.0 / 16) {
        r.check("support", false, "delta >= 1/16, support guarantee does not apply");
        r.csv << "support,0,1,0\n";
    } else {
        bool ok = verify_support(p, s);
        r.check("support", ok, "composed dilatation vanishes on |z| <= " + fmt(s));
        r.csv << "support," << ok << ",1," << ok << "\n";
    }

    CriticalData cd = critical_data(p);
    double resid = 0;
    for (cplx c : cd.points) resid = std::max(resid, std::abs(psi_plateau_deriv(c, p)));
    r.text << "critical_points = " << cd.points.size() << "\ncritical_residual = " << resid << "\n";
}

// --- solve-beltrami ------------------------------------------------------------------------

void run_solve_beltrami(const RunConfig& cfg, Report& r) {
    int N = int(cfg.integer("beltrami.N"));
    if (!is_pow2(N) || N < 16) throw ConfigError("beltrami.N must be a power of two >= 16");
    double hw = cfg.real("beltrami.half_width"), k = cfg.real("beltrami.k"), r1 = cfg.real("beltrami.r1");
    double tol = cfg.real("beltrami.tol");
    int max_iter = int(cfg.integer("beltrami.max_iter"));
    if (!(k >= 0 && k < 1)) throw ConfigError("beltrami.k must lie in [0, 1)");
    if (!(hw > 1)) throw ConfigError("beltrami.half_width must exceed 1");
    if (!(r1 >= 0 && r1 < 1)) throw ConfigError("beltrami.r1 must lie in [0, 1)");

    BeltramiField mu = radial_stretch_field(N, hw, k, r1);
    QCMapApprox phi;
    try {
        phi = solve_beltrami(mu, tol, max_iter);
    } catch (const std::runtime_error& e) {
        r.check("solve", false, e.what());
        return;
    }
    double err = 0;
    for (int i = 0; i < N; ++i)
        for (int j = 0; j < N; ++j) {
            cplx z = phi.grid.point(i, j);
            err = std::max(err, std::abs(phi.grid.at(i, j) - radial_stretch_exact(z, k, r1)));
        }
    int bound = mu.sup_norm > 0 ? int(std::ceil(std::log(tol) / std::log(mu.sup_norm))) + 5 : 1;
    DeviationReport dev = deviation_profile(phi, mu.support_radius);
    double otol = cfg.real("beltrami.oracle_tol");

    r.text << "N = " << N << "\nhalf_width = " << hw << "\nk = " << k << "\nr1 = " << r1 << "\nsup_mu = " << mu.sup_norm
           << "\niterations = " << phi.iterations << "\nneumann_bound = " << bound << "\nresidual = " << phi.residual
           << "\nmin_jacobian = " << phi.min_jacobian << "\nsup_error = " << err << "\neps_global = " << dev.eps_global
           << "\nC_fit = " << dev.C_fit << "\nC_bound = " << dev.C_bound << "\n";
    if (!phi.warning.empty()) r.note("warning: " + phi.warning);
    r.check("oracle error", err <= otol, fmt(err) + " <= " + fmt(otol));
    r.check("iteration count", phi.iterations <= bound, std::to_string(phi.iterations) + " <= " + std::to_string(bound));
    r.check("converged", !phi.truncated, phi.truncated ? "iteration cap reached" : "change below tolerance");
    r.check("orientation", phi.min_jacobian > 0, "min jacobian " + fmt(phi.min_jacobian));

    r.csv << "radius,max_dev\n";
    for (const auto& s : phi.profile) r.csv << s.radius << "," << s.max_dev << "\n";
    if (cfg.boolean("beltrami.snapshot"))
        write_snapshot((r.out / "solve-beltrami.snap").string(), phi.grid, 'P', {{"k", fmt(k)}, {"r1", fmt(r1)}});
}

// --- budget ----------------------------------------------------------------------------------

void run_budget(const RunConfig& cfg, Report& r) {
    double lambda = cfg.real("lambda");
    int n_max = int(cfg.integer("budget.n_max"));
    if (n_max < 1) throw ConfigError("budget.n_max must be positive");
    Budget b;
    try {
        b = Budget(lambda, cfg.str("mode") == "strict");
    } catch (const DomainError& e) {
        throw ConfigError(e.what());
    }
    GraphModel g = solve_vertices(lambda, 4);
    auto rows = budget_rows(b, g, n_max);
    r.text << serialize_budget(b, rows);
    r.text << "certifying = " << (b.certifying() ? 1 : 0) << "\ncontainment_threshold = " << containment_threshold(b) << "\n";
    r.csv << "n,lower,upper,upper_product,p,containment\n";
    bool ordered = true, decreasing = true;
    for (size_t i = 0; i < rows.size(); ++i) {
        const auto& row = rows[i];
        r.csv << row.n << "," << row.lower.str() << "," << row.upper.str() << "," << row.upper_product.str() << ","
              << (row.p.exact ? std::to_string(row.p.value) : row.p.symbolic.str()) << "," << row.containment << "\n";
        if (row.upper < row.lower) ordered = false;
        if (i > 0 && !(row.upper < rows[i - 1].upper)) decreasing = false;
    }
    auto [lo, hi] = phi_prime_bounds(1.0 / 32);
    r.check("derivative bounds", lo == 1.0 / 12 && hi == 125.0 / 36, fmt(lo) + ", " + fmt(hi));
    r.check("bounds ordered", ordered, "lower <= upper for n <= " + std::to_string(n_max));
    r.check("upper bound decreasing", decreasing, "strict decrease for n <= " + std::to_string(n_max));
}

// --- construct / audit -------------------------------------------------------------------------

ConstructionConfig construction_config(const RunConfig& cfg) {
    ConstructionConfig c;
    c.lambda = cfg.real("lambda");
    c.mode = cfg.str("mode") == "strict" ? Mode::strict : Mode::toy;
    c.levels = int(cfg.integer("levels"));
    c.scan_horizon = int(cfg.integer("scan_horizon"));
    c.dist_override = cfg.real("dist_override");
    c.disp_grid = int(cfg.integer("disp_grid"));
    c.disp_ms.clear();
    for (long long m : cfg.int_list("disp_ms")) c.disp_ms.push_back(m);
    c.audit_ratio_threshold = cfg.real("audit_ratio_threshold");
    c.boundary_samples = int(cfg.integer("boundary_samples"));
    c.constants = constants_from(cfg);
    if (c.levels < 2) throw ConfigError("levels must be >= 2");
    if (c.scan_horizon < 1) throw ConfigError("scan_horizon must be positive");
    if (!is_pow2(c.disp_grid) || c.disp_grid < 64) throw ConfigError("disp_grid must be a power of two >= 64");
    if (c.dist_override < 0) throw ConfigError("dist_override must be non-negative");
    if (c.boundary_samples < 1) throw ConfigError("boundary_samples must be positive");
    if (!(c.lambda > 1)) throw ConfigError("lambda must exceed 1");
    return c;
}

bool build_state(const RunConfig& cfg, Report& r, ConstructionState& out) {
    try {
        out = run_construction(construction_config(cfg));
        return true;
    } catch (const HorizonError& e) {
        r.check("level selection", false, e.what());
    } catch (const DomainError& e) {
        r.check("construction", false, e.what());
    }
    return false;
}

void run_construct(const RunConfig& cfg, Report& r) {
    ConstructionState s;
    if (!build_state(cfg, r, s)) return;
    r.text << serialize_state(s);
    std::ostringstream hash;
    hash << std::hex << std::setw(16) << std::setfill('0') << state_hash(s);
    r.text << "state_hash = " << hash.str() << "\n";
    r.csv << audit_csv(s);
    r.check("level selection", true, "n_seq reached level " + std::to_string(s.level()));
    for (const auto& L : s.levels) {
        std::string tag = "level " + std::to_string(L.k);
        r.check(tag + " margins", L.margins.all_positive(),
                "m1 " + L.margins.m1.str() + ", m2 " + L.margins.m2.str() + ", m3 " + L.margins.m3.str());
        r.check(tag + " permissible", L.permissible, L.permissibility);
        r.check(tag + " inclusion", L.inclusion.ok, "margin " + L.inclusion.margin_post.str());
        r.check(tag + " critical exclusion", L.exclusion.ok, "margin " + L.exclusion.margin_post.str());
    }
}

void run_audit(const RunConfig& cfg, Report& r) {
    ConstructionState s;
    if (!build_state(cfg, r, s)) return;
    if (s.level() < 3) {
        r.check("audit", false, "needs at least 3 levels");
        return;
    }
    AuditReport a = univalence_audit(s);
    r.check("critical exclusion", a.exclusion_all, "all levels");
    r.csv << "level,n_lo,n_hi,log_ratio,ratio,pass\n";
    for (const auto& c : a.chain) {
        r.csv << c.level << "," << c.n_lo << "," << c.n_hi << "," << c.log_ratio.str() << "," << c.ratio << ","
              << c.pass << "\n";
        r.text << "chain_" << c.level << " = " << c.log_ratio.str() << "\n";
        r.check("chain ratio level " + std::to_string(c.level), c.pass,
                "log ratio " + c.log_ratio.str() + " vs threshold " + fmt(s.config.audit_ratio_threshold));
    }
    for (const auto& o : a.orbits) {
        r.text << "orbit_" << o.x0 << " =";
        for (const auto& x : o.orbit) r.text << " " << x.str();
        r.text << "\n";
        r.check("real orbit of " + fmt(o.x0), o.increasing && o.escapes,
                std::string(o.increasing ? "increasing" : "not increasing") + ", " + (o.escapes ? "escapes" : "stays bounded"));
    }
    r.text << "localization = " << a.localization << "\n";
    r.check("localization", a.localized, a.localization);
}

// --- render -------------------------------------------------------------------------------------

void run_render(const RunConfig& cfg, Report& r) {
    RenderSpec spec;
    spec.width = int(cfg.integer("render.width"));
    spec.height = int(cfg.integer("render.height"));
    spec.x0 = cfg.real("render.x0");
    spec.x1 = cfg.real("render.x1");
    spec.y0 = cfg.real("render.y0");
    spec.y1 = cfg.real("render.y1");
    spec.max_iter = int(cfg.integer("render.max_iter"));
    spec.bailout = cfg.real("render.bailout");
    spec.overlay = cfg.boolean("render.overlay");
    if (spec.width < 1 || spec.height < 1 || spec.width > 20000 || spec.height > 20000)
        throw ConfigError("render size must lie in [1, 20000]");
    if (!(spec.x1 > spec.x0 && spec.y1 > spec.y0)) throw ConfigError("render window is empty");
    if (spec.max_iter < 1) throw ConfigError("render.max_iter must be positive");

    ModelParams p;
    double lambda = cfg.real("lambda");
    if (!(lambda > 1)) throw ConfigError("lambda must exceed 1");
    long long count = (long long)std::ceil(std::max(std::fabs(spec.x0), std::fabs(spec.x1)) / kPi) + 3;
    p.graph = solve_vertices(lambda, count);
    try {
        p.base_disk = DiskMapParams(cfg.integer("disk.m"), cfg.real("disk.delta"),
                                    cplx(cfg.real("disk.w_re"), cfg.real("disk.w_im")));
    } catch (const ParameterError& e) {
        throw ConfigError(e.what());
    }
    Image img = render_escape(spec, p);
    write_ppm((r.out / "render.ppm").string(), img);
    RenderStats st = render_stats(img);

    r.text << "width = " << spec.width << "\nheight = " << spec.height << "\nwindow = " << spec.x0 << " " << spec.x1 << " "
           << spec.y0 << " " << spec.y1 << "\nmax_iter = " << spec.max_iter << "\nbailout = " << spec.bailout
           << "\nescaped = " << st.escaped << "\nbounded = " << st.bounded << "\nunsupported = " << st.unsupported_start
           << "\nunsupported_later = " << st.unsupported_later << "\nimage_hash = " << std::hex
           << fnv1a(std::string(reinterpret_cast<const char*>(img.pixels.data()), img.pixels.size() * 3)) << std::dec
           << "\n";
    r.csv << "n,a_n,offset_from_n_pi\n";
    bool centres_ok = true;
    for (const auto& v : p.graph.vertices) {
        double off = v.a - double(v.n) * kPi;
        r.csv << v.n << "," << v.a << "," << off << "\n";
        if (!(std::fabs(off) < kPi / 2)) centres_ok = false;
    }
    r.check("disk centres", centres_ok, "|a_n - n pi| < pi/2 for n <= " + std::to_string(count));
    if (spec.y0 == -spec.y1) r.check("vertical symmetry", st.vertically_symmetric, "window symmetric about the real axis");
}

int dispatch(const std::string& cmd, const RunConfig& cfg, const fs::path& out) {
    Report r(cmd, out);
    r.log << "# qcfold " << cmd << "\n" << cfg.dump();
    if (cmd == "verify-disk-maps") run_verify_disk_maps(cfg, r);
    else if (cmd == "solve-beltrami") run_solve_beltrami(cfg, r);
    else if (cmd == "budget") run_budget(cfg, r);
    else if (cmd == "construct") run_construct(cfg, r);
    else if (cmd == "audit") run_audit(cfg, r);
    else if (cmd == "render") run_render(cfg, r);
    r.write();
    std::cout << (r.failures ? "result: FAIL" : "result: PASS") << "\n";
    return r.failures ? kExitCheck : kExitPass;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"qcfold: disk maps, Beltrami solver, derivative budget and level construction"};
    app.require_subcommand(0, 1);
    bool reference = false;
    app.add_flag("--config-reference", reference, "print the configuration reference page and exit");

    std::string config_path, out_dir = ".";
    std::vector<std::string> overrides;
    const std::vector<std::pair<std::string, std::string>> commands = {
        {"verify-disk-maps", "check the disk-map dilatation bound, radius inequality and support"},
        {"solve-beltrami", "solve the radial-stretch oracle and compare with the exact map"},
        {"budget", "tabulate inverse-branch derivative bounds"},
        {"construct", "run the level construction and report margins"},
        {"audit", "run the construction and the univalence audit"},
        {"render", "escape-time image of the model map"},
    };
    for (const auto& [name, help] : commands) {
        auto* sub = app.add_subcommand(name, help);
        sub->add_option("--config", config_path, "key = value config file");
        sub->add_option("--out", out_dir, "output directory")->capture_default_str();
        sub->add_option("--set", overrides, "override, key=value")->take_all();
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e) == 0 ? kExitPass : kExitUsage;
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }
    if (reference) {
        std::cout << config_reference();
        return kExitPass;
    }
    auto chosen = app.get_subcommands();
    if (chosen.empty()) {
        std::cerr << app.help();
        return kExitUsage;
    }
    const std::string cmd = chosen.front()->get_name();

    try {
        RunConfig cfg;
        if (!config_path.empty()) cfg.load(config_path);
        for (const auto& kv : overrides) cfg.set_override(kv);
        if (long long t = cfg.integer("threads"); t > 0) {
            unsigned cap = std::min<unsigned>(thread_count(), unsigned(t));
            setenv("QCFOLD_THREADS", std::to_string(cap).c_str(), 1);
        }
        fs::create_directories(out_dir);
        return dispatch(cmd, cfg, out_dir);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "output error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitCheck;
    }
}
