#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "harness.hpp"
#include "hcbm/training.hpp"

namespace hcbm::harness {

namespace fs = std::filesystem;

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string f;
  while (std::getline(ss, f, ',')) out.push_back(f);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

struct ResultRow {
  Cell cell;
  double accuracy = 0.0;
  std::vector<double> mpo;
};

std::vector<ResultRow> read_results(const fs::path& path) {
  std::ifstream in(path);
  if (!in) return {};
  std::string line;
  if (!std::getline(in, line)) return {};
  const auto header = split_csv(line);
  auto column = [&](const std::string& name) -> std::size_t {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw IoError(path.string() + ": missing column " + name);
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t c_variant = column("variant"), c_size = column("subset_size"), c_seed = column("seed"),
                    c_acc = column("test_accuracy");
  std::vector<std::size_t> c_mpo;
  for (std::size_t m = 1;; ++m) {
    const auto it = std::find(header.begin(), header.end(), "mpo_" + std::to_string(m));
    if (it == header.end()) break;
    c_mpo.push_back(static_cast<std::size_t>(it - header.begin()));
  }
  std::vector<ResultRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != header.size()) throw IoError(path.string() + ": malformed line: " + line);
    ResultRow r;
    r.cell = {models::variant_from_string(f[c_variant]), std::stoi(f[c_size]), std::stoull(f[c_seed])};
    r.accuracy = std::stod(f[c_acc]);
    for (std::size_t c : c_mpo) {
      if (!f[c].empty()) r.mpo.push_back(std::stod(f[c]));  // blank for the standard model
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

void write_ci(std::ostream& out, const std::vector<double>& v) {
  const double mean = [&] {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
  }();
  out << v.size() << ',' << mean << ',';
  // The interval needs two seeds; a lone run gets an empty cell.
  if (v.size() >= 2) out << training::aggregate_ci(v).half_width;
  out << '\n';
}

}  // namespace

ExportSummary export_plot_data(const fs::path& results_dir, const fs::path& out_dir,
                               std::vector<models::Variant> variants, std::vector<int> sizes,
                               std::vector<std::uint64_t> seeds) {
  const auto rows = read_results(results_dir / "results.csv");
  ExportSummary summary;
  summary.result_rows = rows.size();

  std::set<models::Variant> seen_v;
  std::set<int> seen_n;
  std::set<std::uint64_t> seen_s;
  for (const auto& r : rows) {
    seen_v.insert(r.cell.variant);
    seen_n.insert(r.cell.size);
    seen_s.insert(r.cell.seed);
  }
  if (variants.empty()) variants.assign(seen_v.begin(), seen_v.end());
  if (sizes.empty()) sizes.assign(seen_n.begin(), seen_n.end());
  if (seeds.empty()) seeds.assign(seen_s.begin(), seen_s.end());
  for (auto v : variants) {
    for (int n : sizes) {
      for (auto s : seeds) {
        const Cell c{v, n, s};
        if (std::none_of(rows.begin(), rows.end(), [&](const ResultRow& r) { return r.cell == c; })) {
          summary.missing.push_back(c);
        }
      }
    }
  }
  if (rows.empty()) return summary;

  std::map<std::pair<models::Variant, int>, std::vector<const ResultRow*>> groups;
  for (const auto& r : rows) groups[{r.cell.variant, r.cell.size}].push_back(&r);

  fs::create_directories(out_dir);
  std::ofstream acc(out_dir / "accuracy_vs_size.csv");
  std::ofstream mpo(out_dir / "mpo_vs_m.csv");
  if (!acc || !mpo) throw IoError("cannot write plot tables into " + out_dir.string());
  acc.precision(10);
  mpo.precision(10);
  acc << "variant,subset_size,n,accuracy_mean,accuracy_ci95\n";
  mpo << "variant,subset_size,m,n,mpo_mean,mpo_ci95\n";
  for (const auto& [key, group] : groups) {
    std::vector<double> a;
    for (const auto* r : group) a.push_back(r->accuracy);
    acc << models::to_string(key.first) << ',' << key.second << ',';
    write_ci(acc, a);
    ++summary.accuracy_rows;
    const std::size_t k = group.front()->mpo.size();
    for (std::size_t m = 0; m < k; ++m) {
      std::vector<double> v;
      for (const auto* r : group) v.push_back(r->mpo.at(m));
      mpo << models::to_string(key.first) << ',' << key.second << ',' << (m + 1) << ',';
      write_ci(mpo, v);
      ++summary.mpo_rows;
    }
  }
  return summary;
}

}  // namespace hcbm::harness
