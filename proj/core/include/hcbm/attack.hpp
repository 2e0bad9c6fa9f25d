#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string_view>
#include <vector>

#include "hcbm/models.hpp"
#include "hcbm/training.hpp"

namespace hcbm::attack {

struct AttackConfig {
  double alpha = 0.001;    // step size
  double gamma = 0.1;      // sensitivity threshold
  double epsilon = 1.0;    // L-infinity bound, normalized input units
  double beta = -0.1;      // weight of masked pixels, in [-1, 1)
  int max_steps = 800;
  float x_min = training::kNormalizedMin;
  float x_max = training::kNormalizedMax;

  void validate() const;
};

enum class Status : std::uint8_t {
  success,
  fail_concepts_changed,
  fail_all_beta_mask,
  fail_max_iterations,
};
std::string_view to_string(Status s);

struct Outcome {
  Status status = Status::fail_max_iterations;
  ad::Tensor perturbed;  // last iterate
  int iterations = 0;    // steps taken
  int final_class = -1;
  bool class_flipped = false;
  double linf = 0.0;
  std::vector<ad::Tensor> trajectory;  // iterates x_0, x_1, ... when recorded
};

/// One evaluation of a differentiable model at a single input [1, ...].
struct Probe {
  ad::Tensor class_logits;    // [1, p]
  ad::Tensor concept_logits;  // [1, k]; empty when the model has none
  /// d CE(h(x), y) / dx.
  std::function<ad::Tensor()> loss_gradient;
  /// d g(x)_j / dx.
  std::function<ad::Tensor(std::size_t j)> concept_gradient;
};

/// Anything the attacks can query. Implementations must be safe to call
/// from several threads at once.
class Target {
 public:
  virtual ~Target() = default;
  [[nodiscard]] virtual bool has_concepts() const = 0;
  virtual Probe probe(const ad::Tensor& x, int label) const = 0;
};

/// Builds the forward graph on a fresh tape per probe.
using GraphFn = std::function<std::pair<ad::Var, std::optional<ad::Var>>(ad::Tape&, ad::Var x)>;
std::unique_ptr<Target> graph_target(GraphFn fn, bool has_concepts);

/// Eval-mode view of a trained model (parameters enter as constants).
std::unique_ptr<Target> model_target(models::ConceptModel& model);

/// Indices j with logits[j] in [-gamma, gamma].
std::vector<std::size_t> concept_sensitivity(std::span<const float> concept_logits, double gamma);

/// Per sensitive concept j: 1 where p_hat * q_j is 0 or equals the sign of the
/// original logit j (or that sign is 0), beta elsewhere; the result is the
/// elementwise minimum over j, or all ones when `q` is empty.
ad::Tensor build_mask(const ad::Tensor& p_hat, const std::vector<ad::Tensor>& q,
                      const std::vector<float>& original_signs, float beta);

struct RunOptions {
  bool record_trajectory = false;
};

/// Iterated sign-gradient ascent on the class loss with projection and
/// clamping. Stops at the first class flip; success additionally requires the
/// binary concept predictions to be unchanged at that point.
Outcome pgd_attack(const Target& target, const ad::Tensor& x, int y, const AttackConfig& config,
                   const RunOptions& options = {});

/// The adversarial concept attack. Throws UnsupportedVariantError when the
/// target has no concept path.
Outcome concept_attack(const Target& target, const ad::Tensor& x, int y, const AttackConfig& config,
                       const RunOptions& options = {});

enum class Method : std::uint8_t { pgd, aca };
std::string_view to_string(Method m);
Method method_from_string(std::string_view name);

struct SampleOutcome {
  std::int64_t sample_id = 0;
  int label = 0;
  Outcome outcome;
};

struct RateSummary {
  std::size_t eligible = 0;  // correctly classified, hence attacked
  std::size_t successes = 0;
  std::size_t class_flips = 0;
  double rate = 0.0;
  double flip_rate = 0.0;
  std::vector<SampleOutcome> outcomes;
};

/// Attacks every correctly classified sample of `set` (or the first
/// `max_samples` of them when > 0). Throws InvalidConfigError when none is
/// eligible.
RateSummary success_rate(const Target& target, const training::ImageSet& set, Method method,
                         const AttackConfig& config, std::size_t max_samples = 0, int threads = 1);

struct SweepRow {
  std::string phase;  // "grid" or "beta"
  double alpha = 0.0;
  double gamma = 0.0;
  double beta = 0.0;
  double rate = 0.0;
  std::size_t eligible = 0;
};

struct SweepResult {
  AttackConfig best;
  std::vector<SweepRow> rows;
};

struct SweepGrid {
  std::vector<double> alphas{0.003, 0.001, 0.00075};
  std::vector<double> gammas{0.1, 0.05, 0.01};
  double grid_beta = -0.3;
  std::vector<double> betas{0.1, 0.0, -0.1, -0.3, -0.5, -0.7, -1.0};
};

/// Grid over (alpha, gamma) at grid_beta, then a line search over beta with
/// the best pair. Earlier grid points win ties.
SweepResult attack_sweep(const Target& target, const training::ImageSet& samples, const AttackConfig& base,
                         const SweepGrid& grid, std::size_t max_samples, int threads = 1,
                         const std::function<void(const SweepRow&)>& on_row = {});

}  // namespace hcbm::attack
