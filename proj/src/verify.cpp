#include "pico/verify.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "pico/errors.hpp"

namespace pico {

namespace {

constexpr double kTolerance = 1e-9;
constexpr double kZ99 = 2.576;

std::vector<double> to_vector(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

std::vector<double> random_in_ball(Rng& rng, std::span<const double> center, double radius) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<double> dir(center.size());
  double norm = 0.0;
  for (auto& v : dir) {
    v = normal(rng);
    norm += v * v;
  }
  norm = std::sqrt(norm);
  const double r = radius * std::pow(unit(rng), 1.0 / static_cast<double>(center.size()));
  std::vector<double> out(center.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = center[i] + (norm > 0.0 ? r * dir[i] / norm : 0.0);
  return out;
}

}  // namespace

std::vector<FusionSample> measure_fusion(const Model& model, std::span<const ChannelizedExample> examples,
                                         const ForwardOptions& options) {
  std::vector<FusionSample> out;
  out.reserve(examples.size());
  for (const auto& ex : examples) {
    const Analysis a = analyze(model, ex.system, ex.user, options);
    FusedState f = fuse(a.system.pooled, a.user.pooled, a.signals);
    FusionSample s{to_vector(a.system.pooled), to_vector(a.user.pooled), to_vector(f.fused), a.signals,
                   ex.adversarial};
    out.push_back(std::move(s));
  }
  return out;
}

void inject_fault(std::vector<FusionSample>& samples, double magnitude) {
  for (auto& s : samples) {
    const double shift = magnitude / std::sqrt(static_cast<double>(s.fused.size()));
    for (auto& v : s.fused) v += shift;
  }
}

double l2_distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionError("l2_distance: vectors of different length");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

double representation_gap(std::span<const FusionSample> samples) {
  if (samples.empty()) throw ContractError("representation_gap: empty sample");
  double g = 0.0;
  for (const auto& s : samples) g = std::max(g, l2_distance(s.e_u, s.e_s));
  return g;
}

double lipschitz_estimate(const VectorMap& map, std::span<const std::vector<double>> centers, std::size_t pairs,
                          double radius, std::uint64_t seed) {
  if (pairs == 0) throw ContractError("lipschitz_estimate: need at least one pair");
  if (centers.empty()) throw ContractError("lipschitz_estimate: no centers");
  if (!(radius > 0.0)) throw ContractError("lipschitz_estimate: radius must be positive");
  Rng rng = substream(seed, "lipschitz");
  double best = 0.0;
  for (std::size_t p = 0; p < pairs; ++p) {
    const auto& c = centers[std::uniform_int_distribution<std::size_t>(0, centers.size() - 1)(rng)];
    const auto z1 = random_in_ball(rng, c, radius);
    const auto z2 = random_in_ball(rng, c, radius);
    const double dz = l2_distance(z1, z2);
    if (dz == 0.0) continue;
    best = std::max(best, l2_distance(map(z1), map(z2)) / dz);
  }
  return best;
}

BoundReport check_containment(std::span<const FusionSample> adversarial, double G, double epsilon) {
  BoundReport r;
  r.bound = "containment";
  r.epsilon = epsilon;
  r.G = G;
  r.candidates = adversarial.size();
  r.worst_slack = std::numeric_limits<double>::infinity();
  const double premise = G > 0.0 ? 1.0 - epsilon / G : -std::numeric_limits<double>::infinity();
  for (const auto& s : adversarial) {
    const double a = s.signals.alpha_eff;
    if (a < premise) continue;
    ++r.trials;
    const double dist = l2_distance(s.fused, s.e_s);
    const double identity = (1.0 - a) * l2_distance(s.e_u, s.e_s);
    r.worst_slack = std::min(r.worst_slack, epsilon - dist);
    if (dist > epsilon + kTolerance || std::abs(dist - identity) > kTolerance) ++r.violations;
  }
  r.vacuous = r.trials == 0;
  if (r.vacuous) {
    r.worst_slack = 0.0;
    r.notes.push_back("no example meets the gate premise; vacuous");
  }
  r.pass = r.violations == 0;
  return r;
}

Detector synthetic_detector(double fire_rate, std::size_t d, double G, double fire_alpha, double miss_alpha_max) {
  if (!(fire_rate >= 0.0 && fire_rate <= 1.0)) throw ContractError("synthetic_detector: fire rate outside [0,1]");
  if (d == 0) throw ContractError("synthetic_detector: dimension must be positive");
  return [=](Rng& rng) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);
    FusionSample s;
    s.adversarial = true;
    s.e_s.resize(d);
    for (auto& v : s.e_s) v = normal(rng);
    std::vector<double> dir(d);
    double norm = 0.0;
    for (auto& v : dir) {
      v = normal(rng);
      norm += v * v;
    }
    norm = std::sqrt(norm);
    const double len = G * unit(rng);
    s.e_u.resize(d);
    for (std::size_t i = 0; i < d; ++i) s.e_u[i] = s.e_s[i] + len * dir[i] / norm;
    const double alpha = unit(rng) < fire_rate ? fire_alpha : miss_alpha_max * unit(rng);
    s.signals = effective_gate(alpha, 0.0, 0.0);
    const Tensor f = fuse(Tensor::vector(s.e_s), Tensor::vector(s.e_u), s.signals).fused;
    s.fused = to_vector(f);
    return s;
  };
}

Detector empirical_detector(std::vector<FusionSample> pool) {
  if (pool.empty()) throw ContractError("empirical_detector: empty pool");
  return [pool = std::move(pool)](Rng& rng) {
    return pool[std::uniform_int_distribution<std::size_t>(0, pool.size() - 1)(rng)];
  };
}

BoundReport check_detection(const Detector& detector, double G, double delta, double gamma, std::size_t trials,
                             std::uint64_t seed) {
  if (trials < 100) throw ContractError("check_detection: at least 100 trials required");
  BoundReport r;
  r.bound = "detection";
  r.delta = delta;
  r.gamma = gamma;
  r.G = G;
  r.candidates = trials;
  r.trials = trials;
  r.worst_slack = std::numeric_limits<double>::infinity();
  Rng rng = substream(seed, "detection");
  std::size_t fired = 0;
  for (std::size_t t = 0; t < trials; ++t) {
    const FusionSample s = detector(rng);
    if (s.signals.alpha_eff < 1.0 - delta) continue;
    ++fired;
    const double dist = l2_distance(s.fused, s.e_s);
    r.worst_slack = std::min(r.worst_slack, delta * G - dist);
    if (dist > delta * G + kTolerance) ++r.violations;
  }
  if (fired == 0) r.worst_slack = 0.0;
  const double n = static_cast<double>(trials);
  r.p_hat = static_cast<double>(fired) / n;
  r.required = (1.0 - gamma) - kZ99 * std::sqrt(r.p_hat * (1.0 - r.p_hat) / n);
  r.pass = r.p_hat >= r.required && r.violations == 0;
  if (r.p_hat < r.required) r.notes.push_back("detection rate below 1 - gamma at 99% confidence");
  return r;
}

BoundReport check_utility(std::span<const FusionSample> benign, double G, double eta) {
  BoundReport r;
  r.bound = "utility";
  r.eta = eta;
  r.G = G;
  r.candidates = benign.size();
  r.worst_slack = std::numeric_limits<double>::infinity();
  for (const auto& s : benign) {
    const double a = s.signals.alpha_eff;
    if (a > eta) continue;
    ++r.trials;
    const double dist = l2_distance(s.fused, s.e_u);
    const double identity = a * l2_distance(s.e_u, s.e_s);
    r.worst_slack = std::min(r.worst_slack, eta * G - dist);
    if (dist > eta * G + kTolerance || std::abs(dist - identity) > kTolerance) ++r.violations;
  }
  r.vacuous = r.trials == 0;
  if (r.vacuous) {
    r.worst_slack = 0.0;
    r.notes.push_back("no benign example has alpha_eff <= eta; vacuous");
  }
  r.pass = r.violations == 0;
  return r;
}

CorollaryReport decoder_corollary(const Model& model, std::span<const FusionSample> samples, double L_hat,
                                  double epsilon) {
  CorollaryReport r;
  r.samples = samples.size();
  r.lipschitz_bound = L_hat * epsilon;
  for (const auto& s : samples)
    r.max_output_deviation =
        std::max(r.max_output_deviation, l2_distance(decoder_map(model, s.fused), decoder_map(model, s.e_s)));
  r.note = "descriptive only: L_hat is a sampled lower bound on the decoder's Lipschitz constant";
  return r;
}

nlohmann::ordered_json to_json(const BoundEstimates& b) {
  nlohmann::ordered_json j;
  j["G"] = b.G;
  j["L_hat"] = b.L_hat;
  j["gap_samples"] = b.gap_samples;
  j["lipschitz_pairs"] = b.lipschitz_pairs;
  j["lipschitz_radius"] = b.lipschitz_radius;
  j["seed"] = b.seed;
  return j;
}

nlohmann::ordered_json to_json(const BoundReport& r) {
  nlohmann::ordered_json j;
  j["bound"] = r.bound;
  j["epsilon"] = r.epsilon;
  j["delta"] = r.delta;
  j["gamma"] = r.gamma;
  j["eta"] = r.eta;
  j["G"] = r.G;
  j["candidates"] = r.candidates;
  j["trials"] = r.trials;
  j["violations"] = r.violations;
  j["worst_slack"] = r.worst_slack;
  if (r.bound == "detection") {
    j["p_hat"] = r.p_hat;
    j["required"] = r.required;
  }
  j["vacuous"] = r.vacuous;
  j["pass"] = r.pass;
  j["notes"] = r.notes;
  return j;
}

nlohmann::ordered_json to_json(const CorollaryReport& r) {
  nlohmann::ordered_json j;
  j["samples"] = r.samples;
  j["max_output_deviation"] = r.max_output_deviation;
  j["lipschitz_bound"] = r.lipschitz_bound;
  j["note"] = r.note;
  return j;
}

}  // namespace pico
