#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "formation/scenario.hpp"

namespace formation {

inline constexpr int kReportSchemaVersion = 1;

// Exit codes shared by the command-line front end.
inline constexpr int kExitOk = 0;
inline constexpr int kExitCheckFailed = 1;
inline constexpr int kExitInvalidInput = 2;
inline constexpr int kExitUnsupported = 3;

struct CommandResult {
  int exit_code = kExitOk;
  nlohmann::json report;
};

// Builds report entries whose numbers carry the producing operation and the
// scenario's config hash.
class ReportBuilder {
 public:
  ReportBuilder(std::string command, const ScenarioConfig& scenario);

  void add(const std::string& operation, nlohmann::json value);
  void add_check(const std::string& name, bool passed, nlohmann::json detail);
  bool all_passed() const { return all_passed_; }
  const std::string& hash() const { return hash_; }
  nlohmann::json finish() const;

 private:
  nlohmann::json doc_;
  std::string hash_;
  bool all_passed_ = true;
};

// Writes to a sibling temporary file and renames it into place.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

// Rank of the rigidity matrix at the reference configuration, or at a target
// found by minimizing V when the scenario has none.
CommandResult cmd_rigidity(const ScenarioConfig& scenario, std::ostream& log);

// Trajectory CSV, energy CSV and summary JSON in out_dir.
CommandResult cmd_simulate(const ScenarioConfig& scenario, const std::filesystem::path& out_dir,
                           std::ostream& log);

// sweep.json and sweep.csv in out_dir. Uses the scenario's omega list when
// `omegas` is empty.
CommandResult cmd_sweep(const ScenarioConfig& scenario, std::vector<double> omegas,
                        const std::filesystem::path& out_dir, std::ostream& log);

// Runs the invariant suite and writes report.json; exit code 0 iff every check
// passes.
CommandResult cmd_verify(const ScenarioConfig& scenario, const std::filesystem::path& out_dir,
                         std::ostream& log);

}  // namespace formation
