#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "doctest.h"
#include "experiment.hpp"

using namespace pacs::cli;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

fs::path scratch(const std::string& name) {
    fs::path p = fs::temp_directory_path() / ("pacs_cli_test_" + name);
    fs::remove_all(p);
    return p;
}

int pacs_exit(const std::string& args) {
    const std::string cmd = std::string(PACS_CLI) + " " + args + " > /dev/null 2>&1";
    const int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

json read_json(const fs::path& p) {
    std::ifstream is(p);
    return json::parse(is);
}

}  // namespace

TEST_CASE("config validation") {
    ExperimentConfig c;
    CHECK_NOTHROW(c.validate());
    CHECK(c.dim() == 4);
    CHECK(c.matrix_rank() == 4);
    CHECK(c.identity_tolerance() == 1e-6);

    c.m = 1;
    CHECK(c.matrix_rank() == 4);
    c.m = 3;
    CHECK(c.matrix_rank() == 6);
    CHECK(c.identity_tolerance() == 1e-4);
    c.tol_identity = 1e-3;
    CHECK(c.identity_tolerance() == 1e-3);

    ExperimentConfig bad;
    bad.m = 4;
    try {
        bad.validate();
        FAIL("m = 4 accepted");
    } catch (const UsageError& e) {
        CHECK(std::string(e.what()).find("{1,2,3}") != std::string::npos);
    }
    bad = {};
    bad.grids = {15};
    CHECK_THROWS_AS(bad.validate(), UsageError);
    bad = {};
    bad.grids = {};
    CHECK_THROWS_AS(bad.validate(), UsageError);
    bad = {};
    bad.rank = 3;
    CHECK_THROWS_AS(bad.validate(), UsageError);
    bad = {};
    bad.monitor.theta = 0.75;
    CHECK_THROWS_AS(bad.validate(), UsageError);
    bad = {};
    bad.monitor.r_max = 3.5;
    CHECK_THROWS_AS(bad.validate(), UsageError);
    bad = {};
    bad.optimizer.armijo_c = 2.0;
    CHECK_THROWS_AS(bad.validate(), UsageError);
}

TEST_CASE("config json round trip and partial override") {
    ExperimentConfig c;
    c.command = Command::DECAY;
    c.m = 3;
    c.grids = {8, 12};
    c.band_limit = 1;
    c.amplitude = 0.2;
    c.seed = 123456789012345ull;
    c.rank = 6;
    c.preconditioner = PreconditionerChoice::None;
    c.optimizer.grad_tol = 1e-9;
    c.monitor.levels = 5;
    c.tol_identity = 2e-5;
    const json j = to_json(c);
    const ExperimentConfig d = from_json(j);
    CHECK(to_json(d) == j);
    CHECK(d.seed == c.seed);

    const ExperimentConfig e = from_json(json{{"m", 1}, {"grid", 32}});
    CHECK(e.m == 1);
    CHECK(e.grids == std::vector<int>{32});
    CHECK(e.amplitude == ExperimentConfig{}.amplitude);
    CHECK_FALSE(e.tol_identity.has_value());

    CHECK_THROWS_AS(from_json(json{{"m", "two"}}), UsageError);
    CHECK_THROWS_AS(from_json(json{{"command", "plot"}}), UsageError);
    CHECK_THROWS_AS(from_json(json{{"optimizer", {{"preconditioner", "newton"}}}}), UsageError);
}

TEST_CASE("command names") {
    for (Command c : {Command::MINIMIZE, Command::VERIFY_IDENTITIES, Command::WEAK_FORMS, Command::DECAY, Command::ALL})
        CHECK(parse_command(command_name(c)) == c);
    CHECK_THROWS_AS(parse_command("fit"), UsageError);
}

TEST_CASE("minimize writes run.csv, snapshot and manifest") {
    ExperimentConfig c;
    c.m = 1;
    c.grids = {8};
    c.output_dir = scratch("minimize").string();
    REQUIRE(run(c) == 0);
    const fs::path out(c.output_dir);
    CHECK(fs::exists(out / "run.csv"));
    CHECK(fs::exists(out / "final.field"));
    CHECK_FALSE(fs::exists(out / "failure.json"));
    const json m = read_json(out / "manifest.json");
    CHECK(m.at("exit_code") == 0);
    CHECK(m.at("config") == to_json(c));
    CHECK(m.at("summary").at("minimize").at("status") == "CONVERGED");
    CHECK(m.at("wall_clock_seconds").get<double>() >= 0.0);

    std::ifstream is(out / "run.csv");
    std::string header;
    std::getline(is, header);
    CHECK(header == "iter,energy,grad_norm,el_residual,constraint_drift,step");
}

TEST_CASE("verification failure exits 1 and persists the report") {
    ExperimentConfig c;
    c.command = Command::VERIFY_IDENTITIES;
    c.m = 1;
    c.grids = {8};
    c.band_limit = 3;
    c.amplitude = 0.5;
    c.output_dir = scratch("verify_fail").string();
    CHECK(run(c) == 1);
    const json f = read_json(fs::path(c.output_dir) / "failure.json");
    REQUIRE(f.at("failures").size() >= 1);
    const json& r = f.at("failures")[0].at("detail").at("report");
    CHECK(r.at("N") == 8);
    CHECK(r.at("relative_l2").get<double>() > 1e-6);
    CHECK(fs::exists(fs::path(c.output_dir) / "identities.csv"));
}

TEST_CASE("identities pass on a resolved ladder") {
    ExperimentConfig c;
    c.command = Command::VERIFY_IDENTITIES;
    c.m = 1;
    c.grids = {16, 32, 48};
    c.amplitude = 0.1;
    c.output_dir = scratch("verify_ok").string();
    CHECK(run(c) == 0);
    const json m = read_json(fs::path(c.output_dir) / "manifest.json");
    CHECK(m.at("summary").at("verify_identities").at("reports").size() == 9);
}

TEST_CASE("weak forms and decay on a loaded field") {
    ExperimentConfig c;
    c.m = 1;
    c.grids = {16};
    c.output_dir = scratch("field_src").string();
    REQUIRE(run(c) == 0);

    ExperimentConfig w;
    w.command = Command::WEAK_FORMS;
    w.m = 1;
    w.weak_samples = 4;
    w.field = (fs::path(c.output_dir) / "final.field").string();
    w.output_dir = scratch("weak").string();
    CHECK(run(w) == 0);
    std::ifstream is(fs::path(w.output_dir) / "weak_forms.csv");
    int lines = 0;
    for (std::string s; std::getline(is, s);) ++lines;
    CHECK(lines == 5);

    ExperimentConfig d = w;
    d.command = Command::DECAY;
    d.output_dir = scratch("decay").string();
    d.monitor.centers = 3;
    run(d);
    const json m = read_json(fs::path(d.output_dir) / "manifest.json");
    const json& s = m.at("summary").at("decay");
    CHECK(s.at("profiles").size() == 3);
    CHECK(s.at("monitor_grid").get<int>() >= 16);

    ExperimentConfig wrong = w;
    wrong.m = 2;
    CHECK_THROWS_AS(run(wrong), UsageError);
}

TEST_CASE("command line exit codes") {
    CHECK(pacs_exit("minimize --m 4") == 2);
    CHECK(pacs_exit("minimize --grid 7") == 2);
    CHECK(pacs_exit("minimize --bogus") == 2);
    CHECK(pacs_exit("") == 2);
    CHECK(pacs_exit("--help") == 0);

    const fs::path out = scratch("cli");
    fs::create_directories(out);
    {
        std::ofstream cfg(out / "cfg.json");
        cfg << R"({"m": 1, "grid": [8], "seed": 3, "amplitude": 0.5})";
    }
    CHECK(pacs_exit("minimize --config " + (out / "cfg.json").string() + " --seed 4 --out " + (out / "run").string()) ==
          0);
    const json m = read_json(out / "run" / "manifest.json");
    CHECK(m.at("config").at("seed") == 4);
    CHECK(m.at("config").at("amplitude") == 0.5);
    CHECK(m.at("config").at("m") == 1);
}
