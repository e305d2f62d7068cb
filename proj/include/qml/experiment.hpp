#pragma once

#include "qml/estimates.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace qml {

/// What flows between pipeline stages.
enum class DataKind { None, Field, Coefficients };
std::string to_string(DataKind k);

/// Stage kinds and their chain signature:
///   construct  None -> Field     t_alpha or flat_model field
///   norm       Field -> Field    lp_norm rows
///   defect     Field -> Field    defect / joint defect rows
///   propagate  Field -> Field    v = W u along a graph symbol
///   cwt        Field -> Coefficients   band-projected spectral coefficient norms
///   kernel     None -> None      kernel_sample rows
///   contact    None -> None      contact order of pulled-back graphs
///   wstar      None -> None      W*W - Id on a Gaussian packet
struct StageSpec {
  std::string kind;
  int line = 0;
  /// key -> raw value text, validated against the stage schema at parse time.
  std::map<std::string, std::string> params;
  std::map<std::string, int> param_lines;

  bool has(const std::string& key) const { return params.count(key) != 0; }
  const std::string& text(const std::string& key) const;
};

DataKind stage_input(const std::string& kind);
DataKind stage_output(const std::string& kind);

/// One line of the [assert] section: `<kind> = <quantity> key=value ...`.
struct AssertionSpec {
  std::string kind;
  std::string quantity;
  std::map<std::string, std::string> args;
  int line = 0;
};

struct ExperimentConfig {
  std::string name;
  std::vector<StageSpec> stages;
  std::vector<double> h_list;
  /// t_alpha_grid lattice oversampling.
  double oversampling = 2.0;
  /// Output stem, relative to the output root.
  std::string output;
  std::uint64_t seed = 0;
  std::vector<AssertionSpec> assertions;
  /// The text the config was parsed from.
  std::string source;
};

struct ConfigIssue {
  int line = 0;
  std::string message;
};

/// Every problem found in a config, each with its line number (0 for whole-file problems).
class ConfigErrors : public InvalidInput {
 public:
  explicit ConfigErrors(std::vector<ConfigIssue> issues);
  const std::vector<ConfigIssue>& issues() const { return issues_; }

 private:
  std::vector<ConfigIssue> issues_;
};

/// Line-based grammar: `key = value`, `[section]` headers, `#` comments. Top-level keys: name, h,
/// output, seed. Sections: [grid], one [<stage kind>] per stage in pipeline order, [assert].
/// Throws ConfigErrors listing all problems.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Scalars in configs: numbers, `inf`, `a/b`, `2^-5`, and `h^e` (needs h).
double parse_scalar(const std::string& text, std::optional<double> h = std::nullopt);
std::vector<std::string> split_list(const std::string& text);

/// One CSV row. Unused columns stay empty.
struct Measurement {
  std::string experiment;
  double h = 0;
  std::optional<double> p;
  std::optional<int> k;
  std::optional<int> j;
  std::optional<double> alpha;
  std::string quantity;
  double value = 0;
};

/// `name[key=value;...]` labels carry stage parameters that have no CSV column.
std::string tagged(const std::string& name, const std::vector<std::pair<std::string, double>>& tags);
std::string base_quantity(const std::string& label);
std::optional<double> quantity_tag(const std::string& label, const std::string& key);

struct StageFailure {
  double h = 0;
  std::string stage;
  std::string reason;
};

struct StageTiming {
  std::string stage;
  double seconds = 0;
};

struct SweepResult {
  std::vector<Measurement> rows;
  std::vector<StageFailure> failures;
  /// Summed over h, one entry per stage.
  std::vector<StageTiming> timings;
};

/// Runs the pipeline for each h in turn. A stage error aborts that h and is recorded; the sweep continues.
SweepResult run_sweep(const ExperimentConfig& config, const std::vector<double>& h_list);
inline SweepResult run_sweep(const ExperimentConfig& config) { return run_sweep(config, config.h_list); }

void write_csv(std::ostream& out, const std::vector<Measurement>& rows);
std::vector<Measurement> read_csv(std::istream& in);

struct AssertionResult {
  std::string description;
  bool pass = false;
  double measured = 0;
  std::optional<double> expected;
  std::string detail;
};

struct RunReport {
  ExperimentConfig config;
  SweepResult sweep;
  std::vector<ExponentFit> fits;
  std::vector<AssertionResult> assertions;
  bool pass() const;
};

/// Power-law fits of every measured group with at least 3 distinct h, and the config's assertions.
RunReport evaluate(const ExperimentConfig& config, SweepResult sweep);
/// Markdown summary. Timings are the only run-dependent part and can be left out.
std::string render_markdown(const RunReport& report, bool include_timings = true);

struct RunOutputs {
  RunReport report;
  std::filesystem::path csv;
  std::filesystem::path markdown;
};

/// Sweep, evaluate, and write `<root>/<output>.csv` and `<root>/<output>.md`.
RunOutputs run_experiment(const ExperimentConfig& config, const std::filesystem::path& out_root);

}  // namespace qml
