#include <cstdlib>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <spdlog/cfg/helpers.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "experiment.hpp"
#include "pacs/error.hpp"

namespace {

using pacs::cli::ExperimentConfig;

void setup_logging() {
    auto logger = spdlog::stderr_color_mt("pacs");
    logger->set_pattern("[%H:%M:%S.%e] [%^%l%$] %v");
    spdlog::set_default_logger(logger);
    spdlog::set_level(spdlog::level::info);
    if (const char* lvl = std::getenv("PACS_LOG_LEVEL")) spdlog::cfg::helpers::load_levels(lvl);
}

// Options bound on every subcommand. After parsing, only the flags the user
// actually passed override the --config file.
struct Flags {
    ExperimentConfig v;
    std::string config;
    std::string preconditioner = "auto";
    double tol_identity = 0.0;

    void bind(CLI::App* s) {
        s->add_option("--config", config, "JSON config file; explicit flags take precedence")->check(CLI::ExistingFile);
        s->add_option("--m", v.m, "energy order (1, 2 or 3); the torus is T^{2m}");
        s->add_option("--grid", v.grids, "points per axis, comma separated for refinement ladders")->delimiter(',');
        s->add_option("--band-limit", v.band_limit, "Fourier band of the random initial data");
        s->add_option("--amplitude", v.amplitude, "perturbation amplitude of the random initial data");
        s->add_option("--seed", v.seed, "RNG seed");
        s->add_option("--out", v.output_dir, "output directory");
        s->add_option("--jobs", v.jobs, "worker threads, 0 for hardware concurrency");
        s->add_option("--rank", v.rank, "matrix size; 0 picks 2m, or 4 on T^2");
        s->add_option("--field", v.field, "start from a saved .field snapshot instead of minimizing");
        s->add_option("--tol-constraint", v.tol_constraint, "allowed |J^2 + I| and |J + J^T| drift");
        s->add_option("--tol-identity", tol_identity, "relative l2 tolerance for identity checks");
        s->add_option("--grad-tol", v.optimizer.grad_tol, "stop when the gradient l2 norm drops below this");
        s->add_option("--max-iters", v.optimizer.max_iters, "iteration cap");
        s->add_option("--log-every", v.optimizer.log_every, "run.csv cadence");
        s->add_option("--preconditioner", preconditioner, "auto, none or sobolev")
            ->check(CLI::IsMember({"auto", "none", "sobolev"}));
        s->add_option("--weak-samples", v.weak_samples, "random test fields for the weak form check");
        s->add_option("--theta", v.monitor.theta, "radius ratio of the decay ladder");
        s->add_option("--levels", v.monitor.levels, "radii in the decay ladder");
        s->add_option("--r-max", v.monitor.r_max, "largest decay radius");
        s->add_option("--centers", v.monitor.centers, "decay centers");
        s->add_option("--monitor-grid", v.monitor.grid, "grid for the decay monitor, 0 for automatic");
    }

    ExperimentConfig resolve(const CLI::App* s) const {
        ExperimentConfig c;
        if (!config.empty()) {
            std::ifstream is(config);
            nlohmann::json j;
            try {
                is >> j;
            } catch (const nlohmann::json::exception& e) {
                throw pacs::cli::UsageError("cannot parse " + config + ": " + e.what());
            }
            c = pacs::cli::from_json(j, c);
        }
        auto given = [&](const char* name) { return s->count(name) > 0; };
        if (given("--m")) c.m = v.m;
        if (given("--grid")) c.grids = v.grids;
        if (given("--band-limit")) c.band_limit = v.band_limit;
        if (given("--amplitude")) c.amplitude = v.amplitude;
        if (given("--seed")) c.seed = v.seed;
        if (given("--out")) c.output_dir = v.output_dir;
        if (given("--jobs")) c.jobs = v.jobs;
        if (given("--rank")) c.rank = v.rank;
        if (given("--field")) c.field = v.field;
        if (given("--tol-constraint")) c.tol_constraint = v.tol_constraint;
        if (given("--tol-identity")) c.tol_identity = tol_identity;
        if (given("--grad-tol")) c.optimizer.grad_tol = v.optimizer.grad_tol;
        if (given("--max-iters")) c.optimizer.max_iters = v.optimizer.max_iters;
        if (given("--log-every")) c.optimizer.log_every = v.optimizer.log_every;
        if (given("--preconditioner"))
            c.preconditioner = pacs::cli::from_json({{"optimizer", {{"preconditioner", preconditioner}}}}).preconditioner;
        if (given("--weak-samples")) c.weak_samples = v.weak_samples;
        if (given("--theta")) c.monitor.theta = v.monitor.theta;
        if (given("--levels")) c.monitor.levels = v.monitor.levels;
        if (given("--r-max")) c.monitor.r_max = v.monitor.r_max;
        if (given("--centers")) c.monitor.centers = v.monitor.centers;
        if (given("--monitor-grid")) c.monitor.grid = v.monitor.grid;
        c.command = pacs::cli::parse_command(s->get_name());
        return c;
    }
};

}  // namespace

int main(int argc, char** argv) {
    setup_logging();
    CLI::App app{"Gradient flow and identity checks for polyharmonic almost complex structures on flat tori"};
    app.set_version_flag("--version", PACS_VERSION);
    app.require_subcommand(1, 1);

    Flags flags;
    const std::pair<const char*, const char*> verbs[] = {
        {"minimize", "run the constrained gradient flow from random data"},
        {"verify-identities", "check the algebraic identities on a refinement ladder"},
        {"weak-forms", "test the weak Euler-Lagrange forms on a minimizer"},
        {"decay", "measure Morrey decay of a minimizer"},
        {"all", "minimize, then run every check"},
    };
    for (const auto& [name, help] : verbs) flags.bind(app.add_subcommand(name, help));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        const ExperimentConfig cfg = flags.resolve(app.get_subcommands().front());
        return pacs::cli::run(cfg);
    } catch (const pacs::cli::UsageError& e) {
        std::cerr << "pacs: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "pacs: " << e.what() << '\n';
        return 1;
    }
}
