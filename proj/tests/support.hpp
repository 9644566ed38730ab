#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "pico/corpus.hpp"
#include "pico/model.hpp"
#include "pico/rng.hpp"
#include "pico/tensor.hpp"

namespace pico::testing {

Tensor random_tensor(const Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0);

// Max finite-difference error of f over every coordinate of every input,
// perturbing one input at a time.
using MultiFn = std::function<Tensor(const std::vector<Tensor>&)>;
double check_all_inputs(const MultiFn& f, const std::vector<Tensor>& inputs);

// One differentiable primitive. run() draws a fresh random point and returns
// the worst relative error found there.
struct GradCase {
  std::string name;
  std::function<double(Rng&)> run;
};

std::vector<GradCase> primitive_grad_cases();

// Small model used where the default dimensions would be slow.
ModelConfig tiny_model_config();
CorpusSpec tiny_corpus_spec(std::size_t n_benign, std::size_t n_direct, std::size_t n_puppetry,
                            std::uint64_t seed = 7);

// Training loss of one example under a random small model, checked on
// `coordinates` random parameter entries.
double end_to_end_grad_error(std::uint64_t seed, std::size_t coordinates);

// Fresh empty directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag);
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

std::string read_file(const std::filesystem::path& path);

}  // namespace pico::testing
