#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "pico/model.hpp"

namespace pico {

// Pooled quantities of one example as seen by the bounds.
struct FusionSample {
  std::vector<double> e_s;
  std::vector<double> e_u;
  std::vector<double> fused;
  GateSignals signals;
  bool adversarial = false;
};

// Runs the encoders and gate on each example.
std::vector<FusionSample> measure_fusion(const Model& model, std::span<const ChannelizedExample> examples,
                                         const ForwardOptions& options = {});

// Shifts every F by a vector of Euclidean norm `magnitude` along (1,…,1).
// Breaks the fusion identity on purpose so the checkers can be shown to notice.
void inject_fault(std::vector<FusionSample>& samples, double magnitude);

double l2_distance(std::span<const double> a, std::span<const double> b);

// G = max ‖E_U − E_S‖₂. Throws ContractError on an empty sample.
double representation_gap(std::span<const FusionSample> samples);

using VectorMap = std::function<std::vector<double>(const std::vector<double>&)>;

// Max of ‖D(z₁) − D(z₂)‖ / ‖z₁ − z₂‖ over `pairs` random pairs drawn
// uniformly from balls of `radius` around randomly chosen centers. A lower
// bound on the true constant. Coincident pairs are skipped.
double lipschitz_estimate(const VectorMap& map, std::span<const std::vector<double>> centers, std::size_t pairs,
                          double radius, std::uint64_t seed);

struct BoundEstimates {
  double G = 0.0;
  double L_hat = 0.0;
  std::size_t gap_samples = 0;
  std::size_t lipschitz_pairs = 0;
  double lipschitz_radius = 0.0;
  std::uint64_t seed = 0;
};

struct BoundReport {
  std::string bound;
  double epsilon = 0.0;
  double delta = 0.0;
  double gamma = 0.0;
  double eta = 0.0;
  double G = 0.0;
  std::size_t candidates = 0;  // examples offered to the check
  std::size_t trials = 0;      // examples meeting the premise (0 means vacuous)
  std::size_t violations = 0;
  double worst_slack = 0.0;  // min of bound − measured over the trials
  double p_hat = 0.0;        // detection bound only
  double required = 0.0;     // detection bound only: (1−γ) − z·sqrt(p̂(1−p̂)/trials)
  bool vacuous = false;
  bool pass = false;
  std::vector<std::string> notes;
};

// Premise α_eff ≥ 1 − ε/G. Checks ‖F − E_S‖ ≤ ε and
// ‖F − E_S‖ = (1 − α_eff)‖E_U − E_S‖.
BoundReport check_containment(std::span<const FusionSample> adversarial, double G, double epsilon);

// Draws one adversarial sample.
using Detector = std::function<FusionSample(Rng&)>;

// Detector with a known fire rate: with probability `fire_rate` the gate is
// `fire_alpha`, otherwise uniform in [0, miss_alpha_max]. Representations are
// random in dimension d with ‖E_U − E_S‖ ≤ G.
Detector synthetic_detector(double fire_rate, std::size_t d, double G, double fire_alpha = 1.0,
                            double miss_alpha_max = 0.5);

// Resamples uniformly from measured samples.
Detector empirical_detector(std::vector<FusionSample> pool);

// p̂ = share of draws with α_eff ≥ 1 − δ; pass iff p̂ ≥ (1−γ) − 2.576·sqrt(p̂(1−p̂)/trials)
// and every firing draw satisfies ‖F − E_S‖ ≤ δG.
BoundReport check_detection(const Detector& detector, double G, double delta, double gamma, std::size_t trials,
                             std::uint64_t seed);

// Premise α_eff ≤ η. Checks ‖F − E_U‖ ≤ ηG and ‖F − E_U‖ = α_eff‖E_U − E_S‖.
BoundReport check_utility(std::span<const FusionSample> benign, double G, double eta);

// Decoder corollary, reported only: max ‖D(F) − D(E_S)‖ over the samples
// next to L̂·ε.
struct CorollaryReport {
  std::size_t samples = 0;
  double max_output_deviation = 0.0;
  double lipschitz_bound = 0.0;  // L̂ · ε
  std::string note;
};

CorollaryReport decoder_corollary(const Model& model, std::span<const FusionSample> samples, double L_hat,
                                  double epsilon);

nlohmann::ordered_json to_json(const BoundEstimates& b);
nlohmann::ordered_json to_json(const BoundReport& r);
nlohmann::ordered_json to_json(const CorollaryReport& r);

}  // namespace pico
