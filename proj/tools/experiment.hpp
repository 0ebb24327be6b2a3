#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pacs/optimizer.hpp"

namespace pacs::cli {

enum class Command { MINIMIZE, VERIFY_IDENTITIES, WEAK_FORMS, DECAY, ALL };
std::string command_name(Command c);
Command parse_command(const std::string& s);

enum class PreconditionerChoice { Auto, None, Sobolev };

struct MonitorConfig {
    double eps0 = 0.05;
    double tau = 0.5;
    double theta = 0.5;
    int levels = 4;
    double r_max = 3.0;
    int centers = 5;
    int grid = 0;  // 0: smallest even N resolving every ladder radius
    std::size_t max_points = std::size_t{1} << 22;
};

struct ExperimentConfig {
    Command command = Command::MINIMIZE;
    int m = 2;
    std::vector<int> grids{16};
    int band_limit = 2;
    double amplitude = 0.3;
    std::uint64_t seed = 7;
    std::string output_dir = "out";
    int jobs = 0;
    int rank = 0;  // 0: grid dim, or 4 on T^2
    std::string field;  // optional input snapshot for weak-forms and decay
    OptimizerConfig optimizer;
    PreconditionerChoice preconditioner = PreconditionerChoice::Auto;
    MonitorConfig monitor;
    double tol_constraint = 1e-10;
    std::optional<double> tol_identity;
    double weak_form_factor = 10.0;
    int weak_samples = 20;

    int dim() const { return 2 * m; }
    int matrix_rank() const;
    double identity_tolerance() const;
    // throws UsageError
    void validate() const;
};

class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

nlohmann::json to_json(const ExperimentConfig& c);
// Fields missing from `j` keep their value in `base`.
ExperimentConfig from_json(const nlohmann::json& j, ExperimentConfig base = {});

// Runs the configured pipeline and writes every report under output_dir.
// Returns 0 on success and 1 on a verification failure.
int run(const ExperimentConfig& cfg);

}  // namespace pacs::cli
