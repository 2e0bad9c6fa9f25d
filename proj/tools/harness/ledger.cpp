#include <chrono>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "harness.hpp"
#include "hcbm/rng.hpp"

#ifndef HCBM_VERSION
#define HCBM_VERSION "unknown"
#endif

namespace hcbm::harness {

namespace fs = std::filesystem;

Ledger::Ledger(fs::path root) : path_(std::move(root) / kLedgerFile) {}

void Ledger::append(const LedgerEntry& e) const {
  fs::create_directories(path_.parent_path());
  const nlohmann::json j{{"run_id", e.run_id},       {"command", e.command},
                         {"config_hash", e.config_hash}, {"status", e.status},
                         {"timestamp", e.timestamp}, {"directory", e.directory}};
  // One write per line so concurrent appenders do not interleave.
  const std::string line = j.dump() + "\n";
  std::ofstream out(path_, std::ios::app | std::ios::binary);
  if (!out) throw IoError("cannot append to " + path_.string());
  out.write(line.data(), static_cast<std::streamsize>(line.size()));
  out.flush();
}

std::vector<LedgerEntry> Ledger::entries() const {
  std::vector<LedgerEntry> out;
  std::ifstream in(path_);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    // A crash can leave a torn last line; skip anything unparsable.
    const auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) continue;
    out.push_back({j.value("run_id", ""), j.value("command", ""), j.value("config_hash", ""),
                   j.value("status", ""), j.value("timestamp", ""), j.value("directory", "")});
  }
  return out;
}

std::optional<std::string> Ledger::last_status(const std::string& run_id) const {
  std::optional<std::string> status;
  for (const auto& e : entries()) {
    if (e.run_id == run_id) status = e.status;
  }
  return status;
}

std::string config_hash(const nlohmann::json& config) {
  std::ostringstream s;
  s << std::hex << std::setw(16) << std::setfill('0') << label_hash(config.dump());
  return s.str();
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream s;
  s << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return s.str();
}

namespace {

void check_run_id(const std::string& id) {
  if (id.empty()) throw InvalidConfigError("run-id: must not be empty");
  for (char c : id) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '-' ||
                    c == '_' || c == '.';
    if (!ok) throw InvalidConfigError("run-id: '" + id + "' may only contain letters, digits, '.', '-' and '_'");
  }
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw IoError("cannot write " + p.string());
  out << text;
}

}  // namespace

RunScope::RunScope(Options options) : options_(std::move(options)), ledger_(options_.root) {
  hash_ = config_hash(options_.config);
  run_id_ = options_.run_id.value_or(options_.command + "-" + hash_.substr(0, 12));
  check_run_id(run_id_);
  dir_ = fs::absolute(options_.directory.value_or(options_.root / "runs" / run_id_));
  if (!options_.force && ledger_.last_status(run_id_) == "completed") {
    throw RunExistsError("run " + run_id_ + " already completed (" + dir_.string() +
                         "); pass --force to run it again");
  }
  fs::create_directories(dir_);
  write_text(dir_ / "INCOMPLETE", run_id_ + "\n");
  const nlohmann::json snapshot{{"command", options_.command},
                                {"run_id", run_id_},
                                {"config_hash", hash_},
                                {"config", options_.config}};
  write_text(dir_ / "config.json", snapshot.dump(2) + "\n");
  if (!options_.config_text.empty()) write_text(dir_ / "config.toml", options_.config_text);
  ledger_.append({run_id_, options_.command, hash_, "started", utc_timestamp(), dir_.string()});
}

RunScope::~RunScope() {
  if (done_) return;
  try {
    ledger_.append({run_id_, options_.command, hash_, "failed", utc_timestamp(), dir_.string()});
  } catch (...) {
  }
}

void RunScope::complete() {
  std::ostringstream md;
  md << "# Run " << run_id_ << "\n\n"
     << "Command: `" << options_.command << "`\n\n"
     << "Re-run with:\n\n"
     << "    hcbm " << options_.command << " --config " << (dir_ / "config.toml").string() << " --force\n\n"
     << "Config hash: " << hash_ << "\n"
     << "Finished: " << utc_timestamp() << "\n\n"
     << "## Versions\n\n"
     << "- hcbm " << HCBM_VERSION << "\n"
     << "- compiler " << __VERSION__ << "\n"
     << "- nlohmann_json " << NLOHMANN_JSON_VERSION_MAJOR << "." << NLOHMANN_JSON_VERSION_MINOR << "."
     << NLOHMANN_JSON_VERSION_PATCH << "\n\n"
     << "## Seeds and inputs\n\n";
  for (const auto& n : notes_) md << "- " << n << "\n";
  md << "\nResults are bit-identical across re-runs with a single worker thread.\n";
  write_text(dir_ / "replication.md", md.str());
  fs::remove(dir_ / "INCOMPLETE");
  ledger_.append({run_id_, options_.command, hash_, "completed", utc_timestamp(), dir_.string()});
  done_ = true;
}

}  // namespace hcbm::harness
