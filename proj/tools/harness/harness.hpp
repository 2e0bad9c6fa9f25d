#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hcbm/error.hpp"
#include "hcbm/models.hpp"

namespace hcbm::harness {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;   // the command ran and failed
inline constexpr int kExitUsage = 2;     // bad command line
inline constexpr int kExitConfig = 3;    // values rejected by validation
inline constexpr int kExitExists = 4;    // run already completed, no --force

/// Entry point of the `hcbm` tool; `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// --- run ledger ----------------------------------------------------------------

struct LedgerEntry {
  std::string run_id;
  std::string command;
  std::string config_hash;
  std::string status;  // started | completed | failed
  std::string timestamp;
  std::string directory;
};

/// Append-only JSON-lines index of runs under an output root.
class Ledger {
 public:
  explicit Ledger(std::filesystem::path root);

  void append(const LedgerEntry& entry) const;
  [[nodiscard]] std::vector<LedgerEntry> entries() const;
  /// Status of the newest entry for `run_id`.
  [[nodiscard]] std::optional<std::string> last_status(const std::string& run_id) const;
  [[nodiscard]] const std::filesystem::path& path() const noexcept { return path_; }

 private:
  std::filesystem::path path_;
};

inline constexpr std::string_view kLedgerFile = "ledger.jsonl";

/// Hex digest of the canonical dump of `config`.
std::string config_hash(const nlohmann::json& config);
/// UTC, second resolution, ISO 8601.
std::string utc_timestamp();

class RunExistsError : public Error {
 public:
  using Error::Error;
};

/// Bookkeeping for one command invocation: run directory, config snapshot,
/// INCOMPLETE marker and ledger lines.
class RunScope {
 public:
  struct Options {
    std::filesystem::path root;
    std::string command;
    nlohmann::json config;
    std::string config_text;  // re-runnable config file contents
    std::optional<std::string> run_id;
    std::optional<std::filesystem::path> directory;
    bool force = false;
  };

  /// Throws RunExistsError when the run id already completed and `force` is off.
  explicit RunScope(Options options);
  ~RunScope();
  RunScope(const RunScope&) = delete;
  RunScope& operator=(const RunScope&) = delete;

  [[nodiscard]] const std::string& run_id() const noexcept { return run_id_; }
  [[nodiscard]] const std::filesystem::path& dir() const noexcept { return dir_; }

  /// Extra lines for replication.md (seeds, inputs).
  void note(const std::string& line) { notes_.push_back(line); }
  /// Marks the run completed. Without this the destructor records a failure
  /// and leaves the INCOMPLETE marker in place.
  void complete();

 private:
  Options options_;
  Ledger ledger_;
  std::string run_id_;
  std::string hash_;
  std::filesystem::path dir_;
  std::vector<std::string> notes_;
  bool done_ = false;
};

// --- plot data export ------------------------------------------------------------

struct Cell {
  models::Variant variant = models::Variant::standard;
  int size = 0;
  std::uint64_t seed = 0;
  friend bool operator==(const Cell&, const Cell&) = default;
};

struct ExportSummary {
  std::size_t result_rows = 0;
  std::size_t accuracy_rows = 0;
  std::size_t mpo_rows = 0;
  std::vector<Cell> missing;
};

/// Reads `results_dir/results.csv` and writes `accuracy_vs_size.csv` and
/// `mpo_vs_m.csv` into `out_dir`. Expected cells default to the cross product
/// of what was found. A missing results file counts every expected cell as
/// missing.
ExportSummary export_plot_data(const std::filesystem::path& results_dir, const std::filesystem::path& out_dir,
                               std::vector<models::Variant> variants, std::vector<int> sizes,
                               std::vector<std::uint64_t> seeds);

}  // namespace hcbm::harness
