#include <CLI11.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <mutex>
#include <ostream>
#include <thread>

#include "harness.hpp"
#include "hcbm/attack.hpp"
#include "hcbm/datagen.hpp"
#include "hcbm/image.hpp"
#include "hcbm/training.hpp"

namespace hcbm::harness {

namespace fs = std::filesystem;
using models::Variant;

namespace {

const std::vector<std::string> kVariantNames{"standard", "vanilla_cbm", "cbm_res", "cbm_skip", "scm", "oracle"};

struct Global {
  std::string root = "hcbm-out";
  std::string run_id;
  bool force = false;
  int threads = 1;
  bool single_thread = false;
  bool quiet = false;

  [[nodiscard]] int workers() const { return single_thread ? 1 : std::max(1, threads); }
};

struct TrainFlags {
  training::TrainConfig cfg;
  std::string bottleneck = "soft";
  bool no_crop = false;

  training::TrainConfig resolve() const {
    auto c = cfg;
    c.bottleneck = models::bottleneck_from_string(bottleneck);
    c.random_crop = !no_crop;
    c.validate();
    return c;
  }
};

void add_train_flags(CLI::App* app, TrainFlags& f) {
  auto& c = f.cfg;
  app->add_option("--lr", c.learning_rate, "Initial learning rate")->capture_default_str();
  app->add_option("--dropout", c.dropout, "Dropout probability")->capture_default_str();
  app->add_option("--lr-decay", c.lr_decay, "Learning-rate factor applied every --decay-every epochs")
      ->capture_default_str();
  app->add_option("--decay-every", c.decay_every, "Epochs between learning-rate decays")->capture_default_str();
  app->add_option("--lambda0", c.lambda0, "Concept-loss weight at epoch 0")->capture_default_str();
  app->add_option("--lambda-decay", c.lambda_decay, "Per-epoch factor on the concept-loss weight")
      ->capture_default_str();
  app->add_option("--epochs", c.epochs, "Training epochs")->capture_default_str();
  app->add_option("--batch-size", c.batch_size, "Mini-batch size")->capture_default_str();
  app->add_option("--bottleneck", f.bottleneck, "Concept bottleneck: soft or hard")
      ->check(CLI::IsMember({"soft", "hard"}))
      ->capture_default_str();
  app->add_flag("--no-crop", f.no_crop, "Disable random-crop augmentation");
  app->add_option("--crop-padding", c.crop_padding, "Random-crop shift in pixels")->capture_default_str();
}

std::string canonical(const std::string& p) { return fs::weakly_canonical(fs::absolute(p)).string(); }

std::vector<const datagen::SampleRecord*> train_val_records(const datagen::DatasetManifest& m) {
  std::vector<const datagen::SampleRecord*> out;
  for (const auto& r : m.records) {
    if (r.split != datagen::Split::test) out.push_back(&r);
  }
  return out;
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw IoError("cannot write " + p.string());
  out << text;
}

RgbImage to_image(const ad::Tensor& x) {
  const int s = static_cast<int>(x.shape().at(2));
  RgbImage img(s, s);
  const std::size_t plane = static_cast<std::size_t>(s) * static_cast<std::size_t>(s);
  for (int y = 0; y < s; ++y) {
    for (int xx = 0; xx < s; ++xx) {
      Rgb c{};
      for (std::size_t ch = 0; ch < 3; ++ch) {
        const float v = x[ch * plane + static_cast<std::size_t>(y * s + xx)];
        const double u = (static_cast<double>(v) * training::kPixelStd + training::kPixelMean) * 255.0;
        c[ch] = static_cast<std::uint8_t>(std::clamp(std::lround(u), 0L, 255L));
      }
      img.set(xx, y, c);
    }
  }
  return img;
}

/// Wires one subcommand to the shared run bookkeeping.
class Runner {
 public:
  Runner(CLI::App& app, Global& g, std::ostream& out) : app_(app), g_(g), out_(out) {}

  RunScope scope(const std::string& command, const nlohmann::json& config,
                 const std::optional<fs::path>& dir = std::nullopt) const {
    RunScope::Options o;
    o.root = g_.root;
    o.command = command;
    o.config = config;
    o.config_text = app_.config_to_str(false, false);
    if (!g_.run_id.empty()) o.run_id = g_.run_id;
    o.directory = dir;
    o.force = g_.force;
    return RunScope(std::move(o));
  }

  void say(const std::string& line) const {
    if (g_.quiet) return;
    std::lock_guard lock(mu_);
    out_ << line << '\n' << std::flush;
  }

  [[nodiscard]] const Global& global() const { return g_; }

 private:
  CLI::App& app_;
  Global& g_;
  std::ostream& out_;
  mutable std::mutex mu_;
};

// --- generate ----------------------------------------------------------------

struct GenerateArgs {
  datagen::DatasetConfig cfg;
  std::string out;
};

int do_generate(const Runner& r, GenerateArgs& a) {
  auto cfg = a.cfg;
  cfg.threads = r.global().workers();
  cfg.validate();
  auto snapshot = datagen::config_to_json(cfg);
  snapshot.erase("threads");  // does not affect the output
  auto run = r.scope("generate", snapshot, fs::path(a.out));
  const auto manifest = datagen::generate_dataset(cfg, run.dir());
  run.note("master seed " + std::to_string(cfg.master_seed));
  run.note(std::to_string(manifest.records.size()) + " images, " + std::to_string(cfg.num_classes()) + " classes");
  run.complete();
  r.say("wrote " + std::to_string(manifest.records.size()) + " images to " + run.dir().string());
  return kExitOk;
}

// --- train -------------------------------------------------------------------

struct TrainArgs {
  std::string dataset;
  std::string variant = "vanilla_cbm";
  TrainFlags flags;
  std::vector<int> conv_widths{16, 32, 64};
  int hidden = 64;
  int standard_width = 32;
  int subset = 0;
  std::uint64_t subset_seed = 0;
  std::string out;
};

int do_train(const Runner& r, TrainArgs& a) {
  const auto cfg = a.flags.resolve();
  const auto manifest = datagen::read_manifest(a.dataset);
  auto mc = training::model_config_for(models::variant_from_string(a.variant), manifest.config, cfg);
  if (a.conv_widths.size() != 3) throw InvalidConfigError("conv-widths: expected three values");
  std::copy(a.conv_widths.begin(), a.conv_widths.end(), mc.conv_widths.begin());
  mc.hidden = a.hidden;
  mc.standard_width = a.standard_width;
  mc.validate();

  const nlohmann::json snapshot{{"dataset", canonical(a.dataset)},
                                {"model", models::config_to_json(mc)},
                                {"train", training::config_to_json(cfg)},
                                {"subset", a.subset},
                                {"subset_seed", a.subset_seed}};
  auto run = r.scope("train", snapshot, a.out.empty() ? std::nullopt : std::optional<fs::path>(a.out));

  training::ImageSet train_set, val_set;
  if (a.subset > 0) {
    const auto all = training::load_images(manifest, train_val_records(manifest), a.dataset);
    std::tie(train_set, val_set) = training::subset_sets(manifest, all, a.subset, a.subset_seed);
  } else {
    train_set = training::load_split(manifest, datagen::Split::train, a.dataset);
    val_set = training::load_split(manifest, datagen::Split::val, a.dataset);
  }
  const auto test_set = training::load_split(manifest, datagen::Split::test, a.dataset);
  r.say("training " + a.variant + " on " + std::to_string(train_set.size()) + " images");

  models::ConceptModel model(mc, cfg.seed);
  const auto result = training::train(model, train_set, val_set, test_set, cfg, [&](const training::EpochStats& e) {
    std::ostringstream s;
    s << "epoch " << e.epoch << " loss " << e.train_loss << " train_acc " << e.train_accuracy << " val_acc "
      << e.val_accuracy;
    r.say(s.str());
  });

  save_checkpoint(model, run.dir() / "model.ckpt",
                  {{"dataset", canonical(a.dataset)}, {"train", training::config_to_json(cfg)}, {"run_id", run.run_id()}});
  write_text(run.dir() / "run.json", training::to_json(result).dump(2) + "\n");
  std::ostringstream epochs;
  epochs.precision(10);
  epochs << "epoch,lr,lambda,train_loss,train_accuracy,val_loss,val_accuracy\n";
  for (const auto& e : result.epochs) {
    epochs << e.epoch << ',' << e.lr << ',' << e.lambda << ',' << e.train_loss << ',' << e.train_accuracy << ','
           << e.val_loss << ',' << e.val_accuracy << '\n';
  }
  write_text(run.dir() / "epochs.csv", epochs.str());
  run.note("seed " + std::to_string(cfg.seed) + " (model init, shuffling, dropout, crops)");
  run.note("dataset " + canonical(a.dataset) + ", master seed " + std::to_string(manifest.config.master_seed));
  if (a.subset > 0) run.note("subset " + std::to_string(a.subset) + " per class, seed " + std::to_string(a.subset_seed));
  run.complete();
  std::ostringstream s;
  s << "best epoch " << result.best_epoch << " val " << result.best_val_accuracy << " test " << result.test_accuracy
    << "\ncheckpoint " << (run.dir() / "model.ckpt").string();
  r.say(s.str());
  return kExitOk;
}

// --- eval --------------------------------------------------------------------

struct EvalArgs {
  std::string checkpoint;
  std::string dataset;
  std::string split = "test";
  std::string out;
};

int do_eval(const Runner& r, EvalArgs& a) {
  const auto split = datagen::split_from_string(a.split);
  const nlohmann::json snapshot{
      {"checkpoint", canonical(a.checkpoint)}, {"dataset", canonical(a.dataset)}, {"split", a.split}};
  auto model = models::load_checkpoint(a.checkpoint);
  const auto manifest = datagen::read_manifest(a.dataset);
  auto run = r.scope("eval", snapshot, a.out.empty() ? std::nullopt : std::optional<fs::path>(a.out));
  const auto set = training::load_split(manifest, split, a.dataset);
  const auto e = training::evaluate(model, set);
  const nlohmann::json result{{"split", a.split},         {"n", set.size()},
                              {"accuracy", e.accuracy},   {"loss", e.loss},
                              {"concept_accuracy", e.concept_accuracy}, {"mpo", e.mpo}};
  write_text(run.dir() / "eval.json", result.dump(2) + "\n");
  run.complete();
  r.say("accuracy " + std::to_string(e.accuracy) + " on " + std::to_string(set.size()) + " " + a.split + " images");
  return kExitOk;
}

// --- attack ------------------------------------------------------------------

struct AttackArgs {
  std::string method = "aca";
  std::string checkpoint;
  std::string dataset;
  std::string split = "test";
  attack::AttackConfig cfg;
  std::size_t max_samples = 0;
  bool dump_png = false;
  std::string out;
};

nlohmann::json attack_json(const attack::AttackConfig& c) {
  return {{"alpha", c.alpha},     {"gamma", c.gamma}, {"epsilon", c.epsilon},
          {"beta", c.beta},       {"max_steps", c.max_steps}};
}

int do_attack(const Runner& r, AttackArgs& a) {
  const auto method = attack::method_from_string(a.method);
  a.cfg.validate();
  const nlohmann::json snapshot{{"method", a.method},
                                {"checkpoint", canonical(a.checkpoint)},
                                {"dataset", canonical(a.dataset)},
                                {"split", a.split},
                                {"attack", attack_json(a.cfg)},
                                {"max_samples", a.max_samples}};
  auto model = models::load_checkpoint(a.checkpoint);
  const auto target = attack::model_target(model);
  if (method == attack::Method::aca && !target->has_concepts()) {
    throw UnsupportedVariantError("aca: " + std::string(models::to_string(model.variant())) +
                                  " has no concept logits to protect");
  }
  const auto manifest = datagen::read_manifest(a.dataset);
  auto run = r.scope("attack", snapshot, a.out.empty() ? std::nullopt : std::optional<fs::path>(a.out));
  const auto set = training::load_split(manifest, datagen::split_from_string(a.split), a.dataset);
  const auto s = attack::success_rate(*target, set, method, a.cfg, a.max_samples, r.global().workers());

  std::ostringstream csv;
  csv.precision(10);
  csv << "sample_id,status,iterations,linf_norm,label,final_class,class_flipped\n";
  for (const auto& so : s.outcomes) {
    const auto& o = so.outcome;
    csv << so.sample_id << ',' << attack::to_string(o.status) << ',' << o.iterations << ',' << o.linf << ','
        << so.label << ',' << o.final_class << ',' << (o.class_flipped ? 1 : 0) << '\n';
    if (a.dump_png && o.status == attack::Status::success) {
      fs::create_directories(run.dir() / "adversarial");
      write_png(run.dir() / "adversarial" / (std::to_string(so.sample_id) + ".png"), to_image(o.perturbed));
    }
  }
  write_text(run.dir() / "attacks.csv", csv.str());
  const nlohmann::json summary{{"method", a.method},         {"eligible", s.eligible},
                               {"successes", s.successes},   {"success_rate", s.rate},
                               {"class_flips", s.class_flips}, {"flip_rate", s.flip_rate},
                               {"attack", attack_json(a.cfg)}};
  write_text(run.dir() / "summary.json", summary.dump(2) + "\n");
  run.complete();
  r.say(a.method + " success rate " + std::to_string(s.rate) + " over " + std::to_string(s.eligible) +
        " correctly classified images");
  return kExitOk;
}

// --- sweep -------------------------------------------------------------------

struct SweepArgs {
  std::string checkpoint;
  std::string dataset;
  std::string split = "val";
  std::string eval_split = "test";
  attack::AttackConfig base;
  attack::SweepGrid grid;
  std::size_t max_samples = 0;
  std::size_t eval_max_samples = 0;
  std::string out;
};

int do_sweep(const Runner& r, SweepArgs& a) {
  a.base.validate();
  const nlohmann::json snapshot{{"checkpoint", canonical(a.checkpoint)},
                                {"dataset", canonical(a.dataset)},
                                {"split", a.split},
                                {"eval_split", a.eval_split},
                                {"base", attack_json(a.base)},
                                {"alphas", a.grid.alphas},
                                {"gammas", a.grid.gammas},
                                {"grid_beta", a.grid.grid_beta},
                                {"betas", a.grid.betas},
                                {"max_samples", a.max_samples},
                                {"eval_max_samples", a.eval_max_samples}};
  auto model = models::load_checkpoint(a.checkpoint);
  const auto target = attack::model_target(model);
  if (!target->has_concepts()) {
    throw UnsupportedVariantError("sweep: " + std::string(models::to_string(model.variant())) +
                                  " has no concept logits to protect");
  }
  const auto manifest = datagen::read_manifest(a.dataset);
  auto run = r.scope("sweep", snapshot, a.out.empty() ? std::nullopt : std::optional<fs::path>(a.out));
  const auto tune = training::load_split(manifest, datagen::split_from_string(a.split), a.dataset);
  const int workers = r.global().workers();
  const auto sweep = attack::attack_sweep(*target, tune, a.base, a.grid, a.max_samples, workers,
                                          [&](const attack::SweepRow& row) {
                                            std::ostringstream s;
                                            s << row.phase << " alpha " << row.alpha << " gamma " << row.gamma
                                              << " beta " << row.beta << " rate " << row.rate;
                                            r.say(s.str());
                                          });
  std::ostringstream csv;
  csv.precision(10);
  csv << "phase,alpha,gamma,beta,success_rate,eligible\n";
  for (const auto& row : sweep.rows) {
    csv << row.phase << ',' << row.alpha << ',' << row.gamma << ',' << row.beta << ',' << row.rate << ','
        << row.eligible << '\n';
  }
  write_text(run.dir() / "sweep.csv", csv.str());

  const auto eval = training::load_split(manifest, datagen::split_from_string(a.eval_split), a.dataset);
  const auto aca = attack::success_rate(*target, eval, attack::Method::aca, sweep.best, a.eval_max_samples, workers);
  const auto pgd = attack::success_rate(*target, eval, attack::Method::pgd, sweep.best, a.eval_max_samples, workers);
  const nlohmann::json best{{"best", attack_json(sweep.best)},
                            {"eval_split", a.eval_split},
                            {"eligible", aca.eligible},
                            {"aca_success_rate", aca.rate},
                            {"pgd_success_rate", pgd.rate},
                            {"pgd_flip_rate", pgd.flip_rate}};
  write_text(run.dir() / "best.json", best.dump(2) + "\n");
  run.complete();
  r.say("aca " + std::to_string(aca.rate) + " pgd " + std::to_string(pgd.rate) + " (pgd class flips " +
        std::to_string(pgd.flip_rate) + ")");
  return kExitOk;
}

// --- subset-experiment ----------------------------------------------------------

struct SubsetArgs {
  std::string dataset;
  std::vector<int> sizes{50, 100, 150, 200, 250};
  std::vector<std::string> variants{"standard", "vanilla_cbm", "cbm_res", "cbm_skip", "scm"};
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  int max_trials = 0;
  std::uint64_t subset_seed = 0;
  std::uint64_t search_seed = 0;
  TrainFlags flags;
  std::string out;
};

int do_subset(const Runner& r, SubsetArgs& a) {
  training::SubsetOptions o;
  o.sizes = a.sizes;
  for (const auto& v : a.variants) o.variants.push_back(models::variant_from_string(v));
  o.seeds = a.seeds;
  o.base = a.flags.resolve();
  o.max_trials = a.max_trials;
  o.subset_seed = a.subset_seed;
  o.search_seed = a.search_seed;
  if (o.sizes.empty() || o.variants.empty() || o.seeds.empty()) {
    throw InvalidConfigError("sizes, variants and seeds must all be non-empty");
  }
  const nlohmann::json snapshot{{"dataset", canonical(a.dataset)},
                                {"subset", {{"sizes", a.sizes}, {"variants", a.variants}, {"seeds", a.seeds}}},
                                {"max_trials", a.max_trials},
                                {"subset_seed", a.subset_seed},
                                {"search_seed", a.search_seed},
                                {"train", training::config_to_json(o.base)}};
  const auto manifest = datagen::read_manifest(a.dataset);
  auto run = r.scope("subset-experiment", snapshot, a.out.empty() ? std::nullopt : std::optional<fs::path>(a.out));
  const auto all = training::load_images(manifest, train_val_records(manifest), a.dataset);
  const auto test = training::load_split(manifest, datagen::Split::test, a.dataset);

  // Cells are independent, so they run in parallel; rows are merged in a
  // fixed order afterwards.
  std::vector<std::pair<Variant, int>> cells;
  for (auto v : o.variants) {
    for (int n : o.sizes) cells.emplace_back(v, n);
  }
  std::vector<training::SubsetExperiment> parts(cells.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  auto worker = [&] {
    for (std::size_t i = next++; i < cells.size(); i = next++) {
      try {
        auto cell = o;
        cell.variants = {cells[i].first};
        cell.sizes = {cells[i].second};
        parts[i] = training::subset_experiment(manifest, all, test, cell, [&](const std::string& m) { r.say(m); });
      } catch (...) {
        std::lock_guard lock(failure_mu);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  {
    std::vector<std::jthread> pool;
    for (int w = 1; w < std::min<int>(r.global().workers(), static_cast<int>(cells.size())); ++w) {
      pool.emplace_back(worker);
    }
    worker();
  }
  if (failure) std::rethrow_exception(failure);

  std::vector<training::SubsetRow> rows;
  for (auto& p : parts) {
    for (auto& row : p.rows) rows.push_back(std::move(row));
  }
  training::write_results_csv(run.dir() / "results.csv", rows, manifest.config);
  training::write_summary_csv(run.dir() / "summary.csv", training::summarize(rows));
  for (auto s : a.seeds) run.note("training seed " + std::to_string(s));
  run.note("subset seed " + std::to_string(a.subset_seed) + ", search seed " + std::to_string(a.search_seed));
  run.complete();
  r.say("wrote " + std::to_string(rows.size()) + " runs to " + (run.dir() / "results.csv").string());
  return kExitOk;
}

// --- export ------------------------------------------------------------------

struct ExportArgs {
  std::string results;
  std::string out;
  std::vector<std::string> variants;
  std::vector<int> sizes;
  std::vector<std::uint64_t> seeds;
};

int do_export(const Runner& r, ExportArgs& a, std::ostream& err) {
  std::vector<Variant> variants;
  for (const auto& v : a.variants) variants.push_back(models::variant_from_string(v));
  auto sizes = a.sizes;
  auto seeds = a.seeds;
  // Fill unspecified expectations from the experiment's own snapshot.
  std::ifstream snap(fs::path(a.results) / "config.json");
  if (snap) {
    const auto j = nlohmann::json::parse(snap, nullptr, false);
    if (!j.is_discarded() && j.contains("config") && j["config"].contains("subset")) {
      const auto& s = j["config"]["subset"];
      if (variants.empty()) {
        for (const auto& v : s.value("variants", std::vector<std::string>{})) {
          variants.push_back(models::variant_from_string(v));
        }
      }
      if (sizes.empty()) sizes = s.value("sizes", std::vector<int>{});
      if (seeds.empty()) seeds = s.value("seeds", std::vector<std::uint64_t>{});
    }
  }
  const fs::path out = a.out.empty() ? fs::path(a.results) / "plots" : fs::path(a.out);
  std::vector<std::string> variant_names;
  for (auto v : variants) variant_names.emplace_back(models::to_string(v));
  const nlohmann::json snapshot{{"results", canonical(a.results)},
                                {"expected", {{"variants", variant_names}, {"sizes", sizes}, {"seeds", seeds}}}};
  auto run = r.scope("export", snapshot, out);
  const auto s = export_plot_data(a.results, out, variants, sizes, seeds);
  if (!s.missing.empty() || s.result_rows == 0) {
    err << "error: " << s.missing.size() << " expected runs are missing from " << a.results << ":\n";
    for (const auto& c : s.missing) {
      err << "  variant=" << models::to_string(c.variant) << " size=" << c.size << " seed=" << c.seed << '\n';
    }
    if (s.missing.empty()) err << "  (no results and no expected cells)\n";
    return kExitFailure;
  }
  run.complete();
  r.say("wrote " + std::to_string(s.accuracy_rows) + " accuracy rows and " + std::to_string(s.mpo_rows) +
        " MPO rows to " + out.string());
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Hybrid concept-based models on synthetic ConceptShapes data.", "hcbm"};
  app.set_config("--config", "", "TOML file with option values; command-line flags take precedence");
  app.require_subcommand(1);
  app.fallthrough();

  Global g;
  app.add_option("--root", g.root, "Output root for run directories and the ledger")
      ->envname("HCBM_ROOT")
      ->capture_default_str();
  app.add_option("--run-id", g.run_id, "Run identifier (default: command and config hash)")->configurable(false);
  app.add_flag("--force", g.force, "Re-run a run id that already completed")->configurable(false);
  app.add_option("--threads", g.threads, "Worker threads")->check(CLI::PositiveNumber)->capture_default_str();
  app.add_flag("--single-thread", g.single_thread, "Force one worker thread");
  app.add_flag("-q,--quiet", g.quiet, "Suppress progress output");

  GenerateArgs gen;
  auto* c_gen = app.add_subcommand("generate", "Render a ConceptShapes dataset");
  c_gen->add_option("--shapes", gen.cfg.num_shapes, "Number of shape kinds")
      ->check(CLI::IsMember({4, 5, 6}))
      ->capture_default_str();
  c_gen->add_option("--concepts", gen.cfg.num_concepts, "Concepts per image")
      ->check(CLI::IsMember({5, 9}))
      ->capture_default_str();
  c_gen->add_option("--s", gen.cfg.s, "Concept-class association strength")->capture_default_str();
  c_gen->add_option("--per-class", gen.cfg.images_per_class, "Images per class")->capture_default_str();
  c_gen->add_option("--size", gen.cfg.image_size, "Image side in pixels")->capture_default_str();
  c_gen->add_option("--seed", gen.cfg.master_seed, "Master seed")->capture_default_str();
  c_gen->add_option("--out", gen.out, "Dataset directory")->required();

  TrainArgs tr;
  auto* c_train = app.add_subcommand("train", "Train one model on a generated dataset");
  c_train->add_option("--dataset", tr.dataset, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  c_train->add_option("--variant", tr.variant, "Model variant")
      ->check(CLI::IsMember(kVariantNames))
      ->capture_default_str();
  add_train_flags(c_train, tr.flags);
  c_train->add_option("--seed", tr.flags.cfg.seed, "Seed for initialization and training randomness")
      ->capture_default_str();
  c_train->add_option("--conv-widths", tr.conv_widths, "Channels of the three conv stages")
      ->delimiter(',')
      ->expected(3)
      ->capture_default_str();
  c_train->add_option("--hidden", tr.hidden, "Width of the shared hidden layer")->capture_default_str();
  c_train->add_option("--standard-width", tr.standard_width, "Extra layer width of the standard model")
      ->capture_default_str();
  c_train->add_option("--subset", tr.subset, "Train+val images per class (0: full splits)")->capture_default_str();
  c_train->add_option("--subset-seed", tr.subset_seed, "Seed of the subset permutation")->capture_default_str();
  c_train->add_option("--out", tr.out, "Run directory (default: <root>/runs/<run-id>)");

  EvalArgs ev;
  auto* c_eval = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset split");
  c_eval->add_option("--model-ckpt", ev.checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);
  c_eval->add_option("--dataset", ev.dataset, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  c_eval->add_option("--split", ev.split, "train, val or test")
      ->check(CLI::IsMember({"train", "val", "test"}))
      ->capture_default_str();
  c_eval->add_option("--out", ev.out, "Run directory");

  AttackArgs at;
  auto* c_attack = app.add_subcommand("attack", "Attack the correctly classified images of a split");
  c_attack->add_option("--method", at.method, "pgd or aca")->check(CLI::IsMember({"pgd", "aca"}))->capture_default_str();
  c_attack->add_option("--model-ckpt", at.checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);
  c_attack->add_option("--dataset", at.dataset, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  c_attack->add_option("--split", at.split, "train, val or test")
      ->check(CLI::IsMember({"train", "val", "test"}))
      ->capture_default_str();
  c_attack->add_option("--alpha", at.cfg.alpha, "Step size")->capture_default_str();
  c_attack->add_option("--gamma", at.cfg.gamma, "Concept sensitivity threshold")->capture_default_str();
  c_attack->add_option("--beta", at.cfg.beta, "Weight of masked pixels")->capture_default_str();
  c_attack->add_option("--epsilon", at.cfg.epsilon, "L-infinity budget in normalized units")->capture_default_str();
  c_attack->add_option("--max-steps", at.cfg.max_steps, "Iteration limit")->capture_default_str();
  c_attack->add_option("--max-samples", at.max_samples, "Attack at most this many images (0: all)")
      ->capture_default_str();
  c_attack->add_flag("--dump-png", at.dump_png, "Write successful adversarial images as PNG");
  c_attack->add_option("--out", at.out, "Run directory");

  SweepArgs sw;
  auto* c_sweep = app.add_subcommand("sweep", "Tune the concept attack, then compare it with PGD");
  c_sweep->add_option("--model-ckpt", sw.checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);
  c_sweep->add_option("--dataset", sw.dataset, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  c_sweep->add_option("--split", sw.split, "Split used for tuning")
      ->check(CLI::IsMember({"train", "val", "test"}))
      ->capture_default_str();
  c_sweep->add_option("--eval-split", sw.eval_split, "Split used for the final comparison")
      ->check(CLI::IsMember({"train", "val", "test"}))
      ->capture_default_str();
  c_sweep->add_option("--alphas", sw.grid.alphas, "Step sizes")->delimiter(',')->capture_default_str();
  c_sweep->add_option("--gammas", sw.grid.gammas, "Sensitivity thresholds")->delimiter(',')->capture_default_str();
  c_sweep->add_option("--grid-beta", sw.grid.grid_beta, "Beta during the alpha/gamma grid")->capture_default_str();
  c_sweep->add_option("--betas", sw.grid.betas, "Beta line search")->delimiter(',')->capture_default_str();
  c_sweep->add_option("--epsilon", sw.base.epsilon, "L-infinity budget")->capture_default_str();
  c_sweep->add_option("--max-steps", sw.base.max_steps, "Iteration limit")->capture_default_str();
  c_sweep->add_option("--max-samples", sw.max_samples, "Images per tuning point (0: all)")->capture_default_str();
  c_sweep->add_option("--eval-max-samples", sw.eval_max_samples, "Images in the final comparison (0: all)")
      ->capture_default_str();
  c_sweep->add_option("--out", sw.out, "Run directory");

  SubsetArgs sub;
  auto* c_sub = app.add_subcommand("subset-experiment", "Grid search and multi-seed training per subset size");
  c_sub->add_option("--dataset", sub.dataset, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  c_sub->add_option("--sizes", sub.sizes, "Train+val images per class")->delimiter(',')->capture_default_str();
  c_sub->add_option("--variants", sub.variants, "Model variants")
      ->delimiter(',')
      ->check(CLI::IsMember(kVariantNames))
      ->capture_default_str();
  c_sub->add_option("--seeds", sub.seeds, "Training seeds; the first one drives the search")
      ->delimiter(',')
      ->capture_default_str();
  c_sub->add_option("--max-trials", sub.max_trials, "Sampled grid points per model (0: full grid)")
      ->capture_default_str();
  c_sub->add_option("--subset-seed", sub.subset_seed, "Seed of the subset permutation")->capture_default_str();
  c_sub->add_option("--search-seed", sub.search_seed, "Seed for sampling grid points")->capture_default_str();
  add_train_flags(c_sub, sub.flags);
  c_sub->add_option("--out", sub.out, "Run directory");

  ExportArgs ex;
  auto* c_export = app.add_subcommand("export", "Write plot-ready tables from a subset experiment");
  c_export->add_option("--results", ex.results, "Directory holding results.csv")->required();
  c_export->add_option("--out", ex.out, "Output directory (default: <results>/plots)");
  c_export->add_option("--variants", ex.variants, "Expected variants")
      ->delimiter(',')
      ->check(CLI::IsMember(kVariantNames));
  c_export->add_option("--sizes", ex.sizes, "Expected subset sizes")->delimiter(',');
  c_export->add_option("--seeds", ex.seeds, "Expected seeds")->delimiter(',');

  try {
    app.parse(std::vector<std::string>(args.rbegin(), args.rend()));
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ValidationError& e) {
    err << "error: invalid value: " << e.what() << '\n';
    return kExitConfig;
  } catch (const CLI::ConversionError& e) {
    err << "error: invalid value: " << e.what() << '\n';
    return kExitConfig;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  }

  Runner runner(app, g, out);
  try {
    if (c_gen->parsed()) return do_generate(runner, gen);
    if (c_train->parsed()) return do_train(runner, tr);
    if (c_eval->parsed()) return do_eval(runner, ev);
    if (c_attack->parsed()) return do_attack(runner, at);
    if (c_sweep->parsed()) return do_sweep(runner, sw);
    if (c_sub->parsed()) return do_subset(runner, sub);
    if (c_export->parsed()) return do_export(runner, ex, err);
  } catch (const RunExistsError& e) {
    err << "error: " << e.what() << '\n';
    return kExitExists;
  } catch (const InvalidConfigError& e) {
    err << "error: invalid config: " << e.what() << '\n';
    return kExitConfig;
  } catch (const UnsupportedVariantError& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  err << app.help();
  return kExitUsage;
}

}  // namespace hcbm::harness
