#include "hcbm/attack.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <thread>

#include "hcbm/error.hpp"

namespace hcbm::attack {

using ad::Tape;
using ad::Tensor;
using ad::Var;

void AttackConfig::validate() const {
  auto require = [](bool ok, const char* msg) {
    if (!ok) throw InvalidConfigError(msg);
  };
  require(alpha > 0.0, "alpha must be positive");
  require(gamma >= 0.0, "gamma must be non-negative");
  require(epsilon >= 0.0, "epsilon must be non-negative");
  // The published beta line search also tries 0.1, so small positive values
  // are accepted; 1 would make the mask meaningless.
  require(beta >= -1.0 && beta < 1.0, "beta must lie in [-1, 1)");
  require(max_steps >= 1, "max_steps must be at least 1");
  require(x_min <= x_max, "x_min must not exceed x_max");
}

std::string_view to_string(Status s) {
  switch (s) {
    case Status::success:
      return "success";
    case Status::fail_concepts_changed:
      return "fail_concepts_changed";
    case Status::fail_all_beta_mask:
      return "fail_all_beta_mask";
    case Status::fail_max_iterations:
      return "fail_max_iterations";
  }
  return "?";
}

std::string_view to_string(Method m) { return m == Method::pgd ? "pgd" : "aca"; }

Method method_from_string(std::string_view name) {
  if (name == "pgd") return Method::pgd;
  if (name == "aca") return Method::aca;
  throw InvalidConfigError("method: unknown value '" + std::string(name) + "'");
}

namespace {

class GraphTarget final : public Target {
 public:
  GraphTarget(GraphFn fn, bool has_concepts) : fn_(std::move(fn)), has_concepts_(has_concepts) {}

  [[nodiscard]] bool has_concepts() const override { return has_concepts_; }

  Probe probe(const Tensor& x, int label) const override {
    struct State {
      Tape tape;
      Var x, h;
      std::optional<Var> g;
      int label = 0;
    };
    auto st = std::make_shared<State>();
    st->label = label;
    st->x = st->tape.input(x, true);
    auto [h, g] = fn_(st->tape, st->x);
    st->h = h;
    st->g = g;
    Probe p;
    p.class_logits = h.value();
    if (g) p.concept_logits = g->value();
    p.loss_gradient = [st] {
      const int labels[] = {st->label};
      const Var loss = ad::softmax_cross_entropy(st->h, std::span<const int>(labels));
      return st->tape.input_gradient(loss, st->x);
    };
    p.concept_gradient = [st](std::size_t j) {
      if (!st->g) throw UnsupportedVariantError("target has no concept logits");
      Tensor seed(st->g->shape());
      seed[j] = 1.0f;
      st->tape.backward(*st->g, seed);
      return st->tape.grad(st->x);
    };
    return p;
  }

 private:
  GraphFn fn_;
  bool has_concepts_;
};

int argmax(const Tensor& logits) {
  const auto v = logits.values();
  return static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
}

std::vector<std::uint8_t> binary(const Tensor& concept_logits) {
  std::vector<std::uint8_t> bits(concept_logits.numel());
  for (std::size_t i = 0; i < bits.size(); ++i) bits[i] = concept_logits[i] > 0.0f ? 1 : 0;
  return bits;
}

Tensor step(const Tensor& xt, const Tensor& direction, const Tensor& x0, const AttackConfig& c) {
  Tensor moved = xt;
  const auto a = static_cast<float>(c.alpha);
  for (std::size_t i = 0; i < moved.numel(); ++i) moved[i] += a * direction[i];
  return ad::clamp(ad::project_linf(moved, x0, static_cast<float>(c.epsilon)), c.x_min, c.x_max);
}

Outcome finish(Outcome o, Status s, const Tensor& xt, const Tensor& x0, int t, int cls, int y) {
  o.status = s;
  o.perturbed = xt;
  o.iterations = t;
  o.final_class = cls;
  o.class_flipped = cls != y;
  o.linf = ad::linf_distance(xt, x0);
  return o;
}

}  // namespace

std::unique_ptr<Target> graph_target(GraphFn fn, bool has_concepts) {
  return std::make_unique<GraphTarget>(std::move(fn), has_concepts);
}

std::unique_ptr<Target> model_target(models::ConceptModel& model) {
  auto* m = &model;
  return graph_target(
      [m](Tape& tape, Var x) {
        auto out = m->forward(tape, x, false);
        return std::pair<Var, std::optional<Var>>{out.class_logits, out.concept_logits};
      },
      models::has_concepts(model.variant()) && model.variant() != models::Variant::oracle);
}

std::vector<std::size_t> concept_sensitivity(std::span<const float> logits, double gamma) {
  // Compared in float so that a logit equal to the rounded gamma is inside.
  const auto bound = static_cast<float>(gamma);
  std::vector<std::size_t> out;
  for (std::size_t j = 0; j < logits.size(); ++j) {
    if (std::abs(logits[j]) <= bound) out.push_back(j);
  }
  return out;
}

Tensor build_mask(const Tensor& p_hat, const std::vector<Tensor>& q, const std::vector<float>& original_signs,
                  float beta) {
  if (q.size() != original_signs.size()) {
    throw ShapeError("build_mask: " + std::to_string(q.size()) + " gradient signs vs " +
                     std::to_string(original_signs.size()) + " concept signs");
  }
  Tensor mask(p_hat.shape(), 1.0f);
  for (std::size_t j = 0; j < q.size(); ++j) {
    if (q[j].shape() != p_hat.shape()) {
      throw ShapeError("build_mask: " + ad::to_string(q[j].shape()) + " vs " + ad::to_string(p_hat.shape()));
    }
    const float s = original_signs[j];
    if (s == 0.0f) continue;
    for (std::size_t i = 0; i < mask.numel(); ++i) {
      const float prod = p_hat[i] * q[j][i];
      const float m = (prod == 0.0f || prod == s) ? 1.0f : beta;
      mask[i] = std::min(mask[i], m);
    }
  }
  return mask;
}

Outcome pgd_attack(const Target& target, const Tensor& x, int y, const AttackConfig& config,
                   const RunOptions& options) {
  config.validate();
  Outcome out;
  std::vector<std::uint8_t> original_bits;
  Tensor xt = x;
  for (int t = 0; t <= config.max_steps; ++t) {
    if (options.record_trajectory) out.trajectory.push_back(xt);
    const Probe probe = target.probe(xt, y);
    if (t == 0 && target.has_concepts()) original_bits = binary(probe.concept_logits);
    const int cls = argmax(probe.class_logits);
    if (cls != y) {
      const bool same = !target.has_concepts() || binary(probe.concept_logits) == original_bits;
      return finish(std::move(out), same ? Status::success : Status::fail_concepts_changed, xt, x, t, cls, y);
    }
    if (t == config.max_steps) return finish(std::move(out), Status::fail_max_iterations, xt, x, t, cls, y);
    xt = step(xt, ad::sign(probe.loss_gradient()), x, config);
  }
  return out;  // unreachable
}

Outcome concept_attack(const Target& target, const Tensor& x, int y, const AttackConfig& config,
                       const RunOptions& options) {
  config.validate();
  if (!target.has_concepts()) throw UnsupportedVariantError("concept_attack needs a model with concept logits");
  Outcome out;
  std::vector<std::uint8_t> original_bits;
  std::vector<float> original_signs;
  Tensor xt = x;
  for (int t = 0; t <= config.max_steps; ++t) {
    if (options.record_trajectory) out.trajectory.push_back(xt);
    const Probe probe = target.probe(xt, y);
    const auto bits = binary(probe.concept_logits);
    if (t == 0) {
      original_bits = bits;
      for (float g : probe.concept_logits.values()) original_signs.push_back(g > 0.0f ? 1.0f : (g < 0.0f ? -1.0f : 0.0f));
    }
    const int cls = argmax(probe.class_logits);
    if (bits != original_bits) return finish(std::move(out), Status::fail_concepts_changed, xt, x, t, cls, y);
    if (cls != y) return finish(std::move(out), Status::success, xt, x, t, cls, y);
    if (t == config.max_steps) return finish(std::move(out), Status::fail_max_iterations, xt, x, t, cls, y);

    const Tensor p_hat = ad::sign(probe.loss_gradient());
    const auto sensitive = concept_sensitivity(probe.concept_logits.values(), config.gamma);
    std::vector<Tensor> q;
    std::vector<float> signs;
    for (std::size_t j : sensitive) {
      q.push_back(ad::sign(probe.concept_gradient(j)));
      signs.push_back(original_signs[j]);
    }
    const auto beta = static_cast<float>(config.beta);
    const Tensor mask = build_mask(p_hat, q, signs, beta);
    const auto mv = mask.values();
    if (std::all_of(mv.begin(), mv.end(), [beta](float m) { return m == beta; })) {
      return finish(std::move(out), Status::fail_all_beta_mask, xt, x, t, cls, y);
    }
    Tensor direction = p_hat;
    for (std::size_t i = 0; i < direction.numel(); ++i) direction[i] *= mask[i];
    xt = step(xt, direction, x, config);
  }
  return out;  // unreachable
}

RateSummary success_rate(const Target& target, const training::ImageSet& set, Method method,
                         const AttackConfig& config, std::size_t max_samples, int threads) {
  config.validate();
  if (method == Method::aca && !target.has_concepts()) {
    throw UnsupportedVariantError("concept attack needs a model with concept logits");
  }
  RateSummary summary;
  std::vector<std::size_t> eligible;
  for (std::size_t i = 0; i < set.size(); ++i) {
    if (max_samples > 0 && eligible.size() >= max_samples) break;
    const std::size_t idx[] = {i};
    const auto probe = target.probe(training::make_batch(set, idx), set.labels[i]);
    if (argmax(probe.class_logits) == set.labels[i]) eligible.push_back(i);
  }
  if (eligible.empty()) throw InvalidConfigError("no correctly classified samples to attack");
  summary.outcomes.resize(eligible.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t n = next++; n < eligible.size(); n = next++) {
      const std::size_t i = eligible[n];
      const std::size_t idx[] = {i};
      const Tensor x = training::make_batch(set, idx);
      auto& so = summary.outcomes[n];
      so.sample_id = set.sample_ids[i];
      so.label = set.labels[i];
      so.outcome = method == Method::pgd ? pgd_attack(target, x, so.label, config)
                                         : concept_attack(target, x, so.label, config);
    }
  };
  {
    std::vector<std::jthread> pool;
    for (int w = 1; w < threads; ++w) pool.emplace_back(worker);
    worker();
  }
  summary.eligible = eligible.size();
  for (const auto& so : summary.outcomes) {
    summary.successes += so.outcome.status == Status::success;
    summary.class_flips += so.outcome.class_flipped;
  }
  const double n = static_cast<double>(summary.eligible);
  summary.rate = static_cast<double>(summary.successes) / n;
  summary.flip_rate = static_cast<double>(summary.class_flips) / n;
  return summary;
}

SweepResult attack_sweep(const Target& target, const training::ImageSet& samples, const AttackConfig& base,
                         const SweepGrid& grid, std::size_t max_samples, int threads,
                         const std::function<void(const SweepRow&)>& on_row) {
  SweepResult result;
  double best_rate = -1.0;
  AttackConfig best = base;
  for (double a : grid.alphas) {
    for (double g : grid.gammas) {
      AttackConfig c = base;
      c.alpha = a;
      c.gamma = g;
      c.beta = grid.grid_beta;
      const auto s = success_rate(target, samples, Method::aca, c, max_samples, threads);
      SweepRow row{"grid", a, g, c.beta, s.rate, s.eligible};
      result.rows.push_back(row);
      if (on_row) on_row(row);
      if (s.rate > best_rate) {
        best_rate = s.rate;
        best = c;
      }
    }
  }
  double best_beta_rate = -1.0;
  AttackConfig best_beta = best;
  for (double b : grid.betas) {
    AttackConfig c = best;
    c.beta = b;
    const auto s = success_rate(target, samples, Method::aca, c, max_samples, threads);
    SweepRow row{"beta", c.alpha, c.gamma, b, s.rate, s.eligible};
    result.rows.push_back(row);
    if (on_row) on_row(row);
    if (s.rate > best_beta_rate) {
      best_beta_rate = s.rate;
      best_beta = c;
    }
  }
  result.best = best_beta;
  return result;
}

}  // namespace hcbm::attack
