#include "experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numbers>
#include <sstream>

#include <spdlog/spdlog.h>

#include "pacs/energy_el.hpp"
#include "pacs/error.hpp"
#include "pacs/format.hpp"
#include "pacs/identity_suite.hpp"
#include "pacs/parallel.hpp"
#include "pacs/regularity_monitor.hpp"
#include "pacs/spectral_ops.hpp"

#ifndef PACS_VERSION
#define PACS_VERSION "unknown"
#endif

namespace pacs::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

std::string command_name(Command c) {
    switch (c) {
        case Command::MINIMIZE: return "minimize";
        case Command::VERIFY_IDENTITIES: return "verify-identities";
        case Command::WEAK_FORMS: return "weak-forms";
        case Command::DECAY: return "decay";
        case Command::ALL: return "all";
    }
    return "unknown";
}

Command parse_command(const std::string& s) {
    for (Command c : {Command::MINIMIZE, Command::VERIFY_IDENTITIES, Command::WEAK_FORMS, Command::DECAY, Command::ALL})
        if (command_name(c) == s) return c;
    throw UsageError("unknown command '" + s + "'");
}

namespace {

std::string preconditioner_name(PreconditionerChoice p) {
    switch (p) {
        case PreconditionerChoice::Auto: return "auto";
        case PreconditionerChoice::None: return "none";
        case PreconditionerChoice::Sobolev: return "sobolev";
    }
    return "auto";
}

PreconditionerChoice parse_preconditioner(const std::string& s) {
    if (s == "auto") return PreconditionerChoice::Auto;
    if (s == "none") return PreconditionerChoice::None;
    if (s == "sobolev") return PreconditionerChoice::Sobolev;
    throw UsageError("unknown preconditioner '" + s + "' (expected auto, none or sobolev)");
}

}  // namespace

int ExperimentConfig::matrix_rank() const {
    if (rank > 0) return rank;
    return dim() == 2 ? 4 : dim();
}

double ExperimentConfig::identity_tolerance() const {
    if (tol_identity) return *tol_identity;
    return m == 3 ? 1e-4 : 1e-6;
}

void ExperimentConfig::validate() const {
    if (m < 1 || m > 3) throw UsageError("unsupported m=" + std::to_string(m) + "; supported set is {1,2,3}");
    if (grids.empty()) throw UsageError("--grid needs at least one size");
    for (int n : grids)
        if (n < 4 || n % 2 != 0 || n > 4096) throw UsageError("grid sizes must be even and in [4, 4096], got " + std::to_string(n));
    if (band_limit < 0) throw UsageError("--band-limit must be non-negative");
    if (!(amplitude >= 0.0) || !std::isfinite(amplitude)) throw UsageError("--amplitude must be finite and non-negative");
    if (jobs < 0) throw UsageError("--jobs must be non-negative");
    if (rank != 0 && (rank < 2 || rank % 2 != 0 || rank > 64)) throw UsageError("--rank must be 0 or an even size in [2, 64]");
    if (!(tol_constraint > 0.0)) throw UsageError("--tol-constraint must be positive");
    if (tol_identity && !(*tol_identity > 0.0)) throw UsageError("--tol-identity must be positive");
    if (!(weak_form_factor > 0.0)) throw UsageError("weak form factor must be positive");
    if (weak_samples < 1) throw UsageError("weak form sample count must be positive");
    if (!(monitor.theta > 0.0 && monitor.theta <= 0.5)) throw UsageError("--theta must lie in (0, 1/2]");
    if (monitor.levels < 3) throw UsageError("--levels must be at least 3");
    if (!(monitor.r_max > 0.0 && monitor.r_max < std::numbers::pi)) throw UsageError("--r-max must lie in (0, pi)");
    if (monitor.centers < 1) throw UsageError("--centers must be positive");
    if (!(monitor.eps0 > 0.0) || !(monitor.tau > 0.0)) throw UsageError("eps0 and tau must be positive");
    if (monitor.grid != 0 && (monitor.grid < 4 || monitor.grid % 2 != 0)) throw UsageError("--monitor-grid must be even");
    OptimizerConfig oc = optimizer;
    oc.m = m;
    try {
        oc.validate();
    } catch (const ArgumentError& e) {
        throw UsageError(e.what());
    }
}

json to_json(const ExperimentConfig& c) {
    const OptimizerConfig& o = c.optimizer;
    const MonitorConfig& mo = c.monitor;
    return json{
        {"command", command_name(c.command)},
        {"m", c.m},
        {"grid", c.grids},
        {"band_limit", c.band_limit},
        {"amplitude", c.amplitude},
        {"seed", c.seed},
        {"output_dir", c.output_dir},
        {"jobs", c.jobs},
        {"rank", c.rank},
        {"field", c.field},
        {"optimizer",
         {{"max_iters", o.max_iters},
          {"grad_tol", o.grad_tol},
          {"armijo_c", o.armijo_c},
          {"backtrack_factor", o.backtrack_factor},
          {"initial_step", o.initial_step},
          {"renormalize_every", o.renormalize_every},
          {"log_every", o.log_every},
          {"min_step", o.min_step},
          {"preconditioner", preconditioner_name(c.preconditioner)}}},
        {"monitor",
         {{"eps0", mo.eps0},
          {"tau", mo.tau},
          {"theta", mo.theta},
          {"levels", mo.levels},
          {"r_max", mo.r_max},
          {"centers", mo.centers},
          {"grid", mo.grid},
          {"max_points", mo.max_points}}},
        {"tolerances",
         {{"constraint", c.tol_constraint},
          {"identity", c.tol_identity ? json(*c.tol_identity) : json(nullptr)},
          {"weak_form_factor", c.weak_form_factor},
          {"weak_samples", c.weak_samples}}},
    };
}

ExperimentConfig from_json(const json& j, ExperimentConfig c) {
    try {
        if (!j.is_object()) throw UsageError("config must be a JSON object");
        if (j.contains("command")) c.command = parse_command(j.at("command").get<std::string>());
        c.m = j.value("m", c.m);
        if (j.contains("grid")) {
            if (j.at("grid").is_array()) c.grids = j.at("grid").get<std::vector<int>>();
            else c.grids = {j.at("grid").get<int>()};
        }
        c.band_limit = j.value("band_limit", c.band_limit);
        c.amplitude = j.value("amplitude", c.amplitude);
        c.seed = j.value("seed", c.seed);
        c.output_dir = j.value("output_dir", c.output_dir);
        c.jobs = j.value("jobs", c.jobs);
        c.rank = j.value("rank", c.rank);
        c.field = j.value("field", c.field);
        if (j.contains("optimizer")) {
            const json& o = j.at("optimizer");
            OptimizerConfig& oc = c.optimizer;
            oc.max_iters = o.value("max_iters", oc.max_iters);
            oc.grad_tol = o.value("grad_tol", oc.grad_tol);
            oc.armijo_c = o.value("armijo_c", oc.armijo_c);
            oc.backtrack_factor = o.value("backtrack_factor", oc.backtrack_factor);
            oc.initial_step = o.value("initial_step", oc.initial_step);
            oc.renormalize_every = o.value("renormalize_every", oc.renormalize_every);
            oc.log_every = o.value("log_every", oc.log_every);
            oc.min_step = o.value("min_step", oc.min_step);
            if (o.contains("preconditioner")) c.preconditioner = parse_preconditioner(o.at("preconditioner").get<std::string>());
        }
        if (j.contains("monitor")) {
            const json& o = j.at("monitor");
            MonitorConfig& mo = c.monitor;
            mo.eps0 = o.value("eps0", mo.eps0);
            mo.tau = o.value("tau", mo.tau);
            mo.theta = o.value("theta", mo.theta);
            mo.levels = o.value("levels", mo.levels);
            mo.r_max = o.value("r_max", mo.r_max);
            mo.centers = o.value("centers", mo.centers);
            mo.grid = o.value("grid", mo.grid);
            mo.max_points = o.value("max_points", mo.max_points);
        }
        if (j.contains("tolerances")) {
            const json& o = j.at("tolerances");
            c.tol_constraint = o.value("constraint", c.tol_constraint);
            if (o.contains("identity")) {
                if (o.at("identity").is_null()) c.tol_identity.reset();
                else c.tol_identity = o.at("identity").get<double>();
            }
            c.weak_form_factor = o.value("weak_form_factor", c.weak_form_factor);
            c.weak_samples = o.value("weak_samples", c.weak_samples);
        }
    } catch (const json::exception& e) {
        throw UsageError(std::string("bad config: ") + e.what());
    }
    return c;
}

namespace {

struct Context {
    const ExperimentConfig& cfg;
    fs::path out;
    json summary = json::object();
    json failures = json::array();
    std::vector<std::string> outputs;

    void output(const std::string& name) { outputs.push_back(name); }
    void fail(const std::string& stage, const std::string& reason, json detail = json::object()) {
        spdlog::error("{}: {}", stage, reason);
        failures.push_back(json{{"stage", stage}, {"reason", reason}, {"detail", std::move(detail)}});
    }
};

std::ofstream open_out(Context& ctx, const std::string& name) {
    std::ofstream os(ctx.out / name, std::ios::binary);
    if (!os) throw Error("cannot write " + (ctx.out / name).string());
    ctx.output(name);
    return os;
}

AcsField stage_minimize(Context& ctx) {
    const ExperimentConfig& cfg = ctx.cfg;
    const Grid g(cfg.dim(), cfg.grids.back());
    const AcsField j0 = random_acs(g, cfg.band_limit, cfg.amplitude, cfg.seed, cfg.matrix_rank());
    OptimizerConfig oc = cfg.optimizer;
    oc.m = cfg.m;
    switch (cfg.preconditioner) {
        case PreconditionerChoice::None: oc.preconditioner = Preconditioner::None; break;
        case PreconditionerChoice::Sobolev: oc.preconditioner = Preconditioner::Sobolev; break;
        case PreconditionerChoice::Auto:
            oc.preconditioner = cfg.m == 1 ? Preconditioner::None : Preconditioner::Sobolev;
            break;
    }
    spdlog::info("minimize: m={} T^{} N={} rank={} band={} amplitude={} seed={}", cfg.m, g.dim, g.points_per_axis,
                 cfg.matrix_rank(), cfg.band_limit, cfg.amplitude, cfg.seed);

    std::ofstream csv = open_out(ctx, "run.csv");
    write_run_csv_header(csv);
    double worst_drift = 0.0;
    bool monotone = true;
    double last = std::numeric_limits<double>::infinity();
    auto [j, rep] = minimize(j0, oc, [&](const IterateRecord& r) {
        write_run_csv_row(csv, r);
        csv.flush();
        worst_drift = std::max(worst_drift, r.constraint_drift);
        if (!(r.energy < last) && r.iter > 0) monotone = false;
        last = r.energy;
        spdlog::debug("iter {} energy {:.17g} grad {:.3e} step {:.3e}", r.iter, r.energy, r.grad_norm, r.step);
    });
    save_snapshot((ctx.out / "final.field").string(), j.field());
    ctx.output("final.field");

    const double el_bound = 2.0 * linf_matrix_norm(j.field()) * oc.grad_tol;
    ctx.summary["minimize"] = json{
        {"status", status_name(rep.status)},
        {"iterations", rep.iterations},
        {"initial_energy", rep.initial_energy},
        {"final_energy", rep.final_energy},
        {"final_grad_norm", rep.final_grad_norm},
        {"initial_el_residual", rep.initial_el_residual},
        {"final_el_residual", rep.final_el_residual},
        {"el_residual_bound", el_bound},
        {"max_constraint_drift", worst_drift},
        {"preconditioner", oc.preconditioner == Preconditioner::Sobolev ? "sobolev" : "none"},
    };
    spdlog::info("minimize: {} after {} iterations, energy {:.6g} -> {:.6g}, grad {:.3e}", status_name(rep.status),
                 rep.iterations, rep.initial_energy, rep.final_energy, rep.final_grad_norm);
    if (rep.status != RunStatus::CONVERGED) ctx.fail("minimize", "optimizer ended with status " + status_name(rep.status));
    if (worst_drift > cfg.tol_constraint)
        ctx.fail("minimize", "constraint drift above tolerance", {{"drift", worst_drift}, {"tol", cfg.tol_constraint}});
    if (!monotone) ctx.fail("minimize", "energy trace is not strictly decreasing");
    if (rep.status == RunStatus::CONVERGED && rep.final_el_residual > el_bound)
        ctx.fail("minimize", "EL residual above 2 |J|_inf grad_tol", {{"residual", rep.final_el_residual}, {"bound", el_bound}});
    return j;
}

AcsField input_field(Context& ctx) {
    const ExperimentConfig& cfg = ctx.cfg;
    if (cfg.field.empty()) return stage_minimize(ctx);
    MatrixField f = load_snapshot(cfg.field);
    if (f.grid().dim != cfg.dim())
        throw UsageError("field " + cfg.field + " lives on T^" + std::to_string(f.grid().dim) + " but m=" +
                         std::to_string(cfg.m) + " needs T^" + std::to_string(cfg.dim()));
    spdlog::info("loaded {} (N={}, rank {})", cfg.field, f.grid().points_per_axis, f.rank());
    return validate_acs(f, cfg.tol_constraint);
}

std::vector<IdentityId> identities_for(int m) {
    switch (m) {
        case 1: return {IdentityId::PROP82_M1, IdentityId::T1_DOUBLE_COMMUTATOR, IdentityId::Q_ROUTE_AGREEMENT};
        case 2: return {IdentityId::PROP82_M2, IdentityId::Q_ROUTE_AGREEMENT};
        default: return {IdentityId::PROP82_M3, IdentityId::LEMMA83_TERMS, IdentityId::Q_ROUTE_AGREEMENT};
    }
}

json report_json(const IdentityReport& r) {
    return json{{"identity_id", identity_name(r.identity_id)},
                {"m", r.m},
                {"dim", r.dim},
                {"N", r.grid_N},
                {"band_limit", r.band_limit},
                {"term", r.term},
                {"residual_linf", r.residual_linf},
                {"residual_l2", r.residual_l2},
                {"relative_l2", r.relative_l2()},
                {"rate", r.convergence_rate ? json(*r.convergence_rate) : json(nullptr)}};
}

void stage_verify(Context& ctx) {
    const ExperimentConfig& cfg = ctx.cfg;
    const double tol = cfg.identity_tolerance();
    std::vector<IdentityReport> all;
    const int finest = *std::max_element(cfg.grids.begin(), cfg.grids.end());
    for (IdentityId id : identities_for(cfg.m)) {
        RefinementCase c;
        c.identity = id;
        c.m = cfg.m;
        c.dim = cfg.dim();
        c.rank = cfg.matrix_rank();
        c.grids = cfg.grids;
        c.band_limit = cfg.band_limit;
        c.amplitude = cfg.amplitude;
        c.seed = cfg.seed;
        const auto t0 = std::chrono::steady_clock::now();
        std::vector<IdentityReport> rs = run_refinement(c);
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        for (const auto& r : rs) {
            spdlog::info("{} N={} term={} relative l2 {:.3e} ({:.1f}s for the ladder)", identity_name(r.identity_id),
                         r.grid_N, r.term, r.relative_l2(), secs);
            if (r.grid_N == finest && !(r.relative_l2() <= tol))
                ctx.fail("verify-identities", identity_name(r.identity_id) + " residual above tolerance",
                         json{{"report", report_json(r)}, {"tol", tol}});
        }
        if (cfg.grids.size() >= 2) {
            const int coarsest = *std::min_element(cfg.grids.begin(), cfg.grids.end());
            for (const auto& fine : rs) {
                if (fine.grid_N != finest) continue;
                for (const auto& coarse : rs) {
                    if (coarse.grid_N != coarsest || coarse.term != fine.term) continue;
                    const double drop = coarse.residual_l2 / fine.residual_l2;
                    if (!(drop >= 100.0))
                        ctx.fail("verify-identities", identity_name(fine.identity_id) + " residual dropped less than 100x",
                                 json{{"report", report_json(fine)}, {"drop", drop}});
                }
            }
        }
        all.insert(all.end(), rs.begin(), rs.end());
    }
    std::ofstream csv = open_out(ctx, "identities.csv");
    write_identities_csv(csv, all);
    json rows = json::array();
    for (const auto& r : all) rows.push_back(report_json(r));
    ctx.summary["verify_identities"] = json{{"tolerance", tol}, {"reports", rows}};
}

void stage_weak_forms(Context& ctx, const AcsField& j) {
    const ExperimentConfig& cfg = ctx.cfg;
    const EnergyOrder m(cfg.m);
    const Grid& g = j.grid();
    const int band = std::max(1, std::min(2, g.points_per_axis / 4));
    const double el = l2_norm(el_residual(j, m));
    std::ofstream csv = open_out(ctx, "weak_forms.csv");
    csv << "sample,weak_residual,commutator_weak_residual,cm_proxy,bound\n";
    double worst = 0.0;
    int violations = 0;
    for (int i = 0; i < cfg.weak_samples; ++i) {
        const MatrixField t = random_test_field(g, j.rank(), band, cfg.seed * 1000003u + static_cast<unsigned>(i), cfg.m);
        const double w = weak_form_residual(j, m, t).residual;
        const double c = commutator_weak_residual(j, m, t).residual;
        const double proxy = cm_proxy_norm(t, cfg.m);
        const double bound = cfg.weak_form_factor * el * proxy;
        csv << i << ',' << fmt17(w) << ',' << fmt17(c) << ',' << fmt17(proxy) << ',' << fmt17(bound) << '\n';
        worst = std::max(worst, std::max(std::abs(w), std::abs(c)) / (el * proxy));
        if (std::abs(w) > bound || std::abs(c) > bound) ++violations;
    }
    ctx.summary["weak_forms"] = json{{"samples", cfg.weak_samples},
                                     {"el_residual_l2", el},
                                     {"factor", cfg.weak_form_factor},
                                     {"worst_ratio", worst},
                                     {"violations", violations}};
    spdlog::info("weak forms: {} samples, worst |residual| / (EL * proxy) = {:.3g}", cfg.weak_samples, worst);
    if (violations > 0)
        ctx.fail("weak-forms", std::to_string(violations) + " samples exceed the consistency bound", {{"worst_ratio", worst}});
}

int monitor_grid(const ExperimentConfig& cfg, const Grid& g) {
    if (cfg.monitor.grid != 0) return std::max(cfg.monitor.grid, g.points_per_axis);
    const double r_min = cfg.monitor.r_max * std::pow(cfg.monitor.theta, cfg.monitor.levels - 1);
    int n = static_cast<int>(std::ceil(2.0 * g.length / r_min));
    n += n % 2;
    n = std::max(n, g.points_per_axis);
    while (n > g.points_per_axis && std::pow(static_cast<double>(n), g.dim) > static_cast<double>(cfg.monitor.max_points))
        n -= 2;
    return n;
}

void stage_decay(Context& ctx, const AcsField& j) {
    const ExperimentConfig& cfg = ctx.cfg;
    const Grid& g = j.grid();
    const int nm = monitor_grid(cfg, g);
    const MatrixField f = nm == g.points_per_axis ? j.field() : resample(j.field(), Grid(g.dim, nm));
    std::vector<std::vector<int>> centers;
    for (int i = 0; i < cfg.monitor.centers; ++i) {
        std::vector<int> c(g.dim);
        for (int a = 0; a < g.dim; ++a) c[a] = ((2 * i + 1) * (a + 1) * nm / (2 * cfg.monitor.centers)) % nm;
        centers.push_back(c);
    }
    DecayConfig dc;
    dc.eps0 = cfg.monitor.eps0;
    dc.tau = cfg.monitor.tau;
    const auto profiles = decay_profiles(f, centers, cfg.monitor.r_max, cfg.monitor.theta, cfg.monitor.levels, cfg.m, dc);
    std::ofstream csv = open_out(ctx, "decay.csv");
    write_decay_csv(csv, profiles);

    json rows = json::array();
    int alarms = 0;
    for (const auto& d : profiles) {
        alarms += d.alarms;
        rows.push_back(json{{"center", d.center},
                            {"levels", d.radii.size()},
                            {"alarms", d.alarms},
                            {"degraded", d.degraded},
                            {"alpha", std::isnan(d.fitted_alpha) ? json(nullptr) : json(d.fitted_alpha)}});
        if (d.degraded) spdlog::warn("decay: ladder kept {} of {} levels", d.radii.size(), cfg.monitor.levels);
        if (d.alarms > 0) ctx.fail("decay", "decay alarm fired", rows.back());
        if (!d.degraded && !(d.fitted_alpha > 0.0)) ctx.fail("decay", "fitted exponent is not positive", rows.back());
    }
    ctx.summary["decay"] = json{{"monitor_grid", nm}, {"alarms", alarms}, {"profiles", rows}};
    spdlog::info("decay: monitor grid N={}, {} centers, {} alarms", nm, profiles.size(), alarms);
}

std::string utc_now() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::ostringstream os;
    os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return os.str();
}

}  // namespace

int run(const ExperimentConfig& cfg) {
    cfg.validate();
    set_num_threads(cfg.jobs);
    Context ctx{cfg, fs::path(cfg.output_dir)};
    std::error_code ec;
    fs::create_directories(ctx.out, ec);
    if (ec) throw Error("cannot create output directory " + cfg.output_dir + ": " + ec.message());

    const std::string started = utc_now();
    const auto t0 = std::chrono::steady_clock::now();
    std::string stage = command_name(cfg.command);
    try {
        switch (cfg.command) {
            case Command::MINIMIZE: stage_minimize(ctx); break;
            case Command::VERIFY_IDENTITIES: stage_verify(ctx); break;
            case Command::WEAK_FORMS: stage_weak_forms(ctx, input_field(ctx)); break;
            case Command::DECAY: stage_decay(ctx, input_field(ctx)); break;
            case Command::ALL: {
                const AcsField j = input_field(ctx);
                stage_weak_forms(ctx, j);
                stage_decay(ctx, j);
                stage_verify(ctx);
                break;
            }
        }
    } catch (const UsageError&) {
        throw;
    } catch (const std::exception& e) {
        ctx.fail(stage, std::string("error: ") + e.what());
    }
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const int code = ctx.failures.empty() ? 0 : 1;

    if (!ctx.failures.empty()) {
        std::ofstream os(ctx.out / "failure.json");
        os << json{{"exit_code", code}, {"failures", ctx.failures}}.dump(2) << '\n';
        ctx.output("failure.json");
    }
    json manifest{{"tool", "pacs"},
                  {"version", PACS_VERSION},
                  {"command", command_name(cfg.command)},
                  {"config", to_json(cfg)},
                  {"started_at", started},
                  {"wall_clock_seconds", wall},
                  {"threads", num_threads()},
                  {"exit_code", code},
                  {"outputs", ctx.outputs},
                  {"summary", ctx.summary},
                  {"failures", ctx.failures}};
    std::ofstream os(ctx.out / "manifest.json");
    os << manifest.dump(2) << '\n';
    spdlog::info("{} finished in {:.1f}s with exit code {}", command_name(cfg.command), wall, code);
    return code;
}

}  // namespace pacs::cli
