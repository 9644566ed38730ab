#include "support.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <unistd.h>

#include "pico/gradcheck.hpp"
#include "pico/ops.hpp"
#include "pico/training.hpp"

namespace pico::testing {

Tensor random_tensor(const Shape& shape, Rng& rng, double lo, double hi) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return Tensor(shape, std::move(v));
}

double check_all_inputs(const MultiFn& f, const std::vector<Tensor>& inputs) {
  double worst = 0.0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const auto fi = [&](const Tensor& x) {
      std::vector<Tensor> args = inputs;
      args[i] = x;
      return f(args);
    };
    worst = std::max(worst, finite_diff_check(fi, inputs[i]));
  }
  return worst;
}

namespace {

using Op = std::function<Tensor(const std::vector<Tensor>&)>;
using Maker = std::function<std::vector<Tensor>(Rng&)>;

// Contracts op's output against a random weight so every output entry
// contributes to the checked scalar.
GradCase make_case(std::string name, Maker make, Op op) {
  return {name, [make, op](Rng& rng) {
            const std::vector<Tensor> inputs = make(rng);
            const Tensor w = random_tensor(op(inputs).shape(), rng);
            return check_all_inputs([&](const std::vector<Tensor>& a) { return ops::sum(ops::mul(op(a), w)); },
                                    inputs);
          }};
}

Maker shapes(std::vector<Shape> s, double lo = -1.0, double hi = 1.0) {
  return [s, lo, hi](Rng& rng) {
    std::vector<Tensor> out;
    for (const auto& shape : s) out.push_back(random_tensor(shape, rng, lo, hi));
    return out;
  };
}

// Values kept at least 0.05 away from zero, for ops with a kink there.
Maker away_from_zero(Shape s) {
  return [s](Rng& rng) {
    Tensor t = random_tensor(s, rng, 0.05, 1.0);
    std::bernoulli_distribution sign(0.5);
    for (auto& v : t.values())
      if (sign(rng)) v = -v;
    return std::vector<Tensor>{t};
  };
}

}  // namespace

std::vector<GradCase> primitive_grad_cases() {
  using V = const std::vector<Tensor>&;
  static const std::vector<std::int32_t> ids{1, 4, 1, 0};
  static const std::vector<std::int32_t> targets{0, 4, 2};
  static const std::vector<std::int32_t> cols{1, 3};
  return {
      make_case("matmul", shapes({{3, 4}, {4, 2}}), [](V a) { return ops::matmul(a[0], a[1]); }),
      make_case("matmul_nt", shapes({{3, 4}, {2, 4}}), [](V a) { return ops::matmul_nt(a[0], a[1]); }),
      make_case("transpose", shapes({{3, 4}}), [](V a) { return ops::transpose(a[0]); }),
      make_case("add", shapes({{2, 3}, {2, 3}}), [](V a) { return ops::add(a[0], a[1]); }),
      make_case("sub", shapes({{2, 3}, {2, 3}}), [](V a) { return ops::sub(a[0], a[1]); }),
      make_case("mul", shapes({{2, 3}, {2, 3}}), [](V a) { return ops::mul(a[0], a[1]); }),
      make_case("add_bias", shapes({{3, 4}, {4}}), [](V a) { return ops::add_bias(a[0], a[1]); }),
      make_case("scale", shapes({{2, 3}}), [](V a) { return ops::scale(a[0], -1.7); }),
      make_case("add_constant", shapes({{2, 3}}), [](V a) { return ops::add_constant(a[0], 0.3); }),
      make_case("mul_scalar", shapes({{2, 3}, {1}}), [](V a) { return ops::mul_scalar(a[0], a[1]); }),
      make_case("one_minus", shapes({{4}}), [](V a) { return ops::one_minus(a[0]); }),
      make_case("relu", away_from_zero({3, 3}), [](V a) { return ops::relu(a[0]); }),
      make_case("gelu", shapes({{3, 3}}, -3.0, 3.0), [](V a) { return ops::gelu(a[0]); }),
      make_case("sigmoid", shapes({{3, 3}}, -4.0, 4.0), [](V a) { return ops::sigmoid(a[0]); }),
      make_case("clamped_log", shapes({{5}}, 0.2, 2.0), [](V a) { return ops::clamped_log(a[0]); }),
      make_case("softmax_rows", shapes({{3, 4}}, -3.0, 3.0), [](V a) { return ops::softmax(a[0], 1); }),
      make_case("softmax_cols", shapes({{3, 4}}, -3.0, 3.0), [](V a) { return ops::softmax(a[0], 0); }),
      make_case("softmax_vector", shapes({{5}}, -3.0, 3.0), [](V a) { return ops::softmax(a[0], 0); }),
      make_case("layer_norm", shapes({{3, 4}, {4}, {4}}, -2.0, 2.0),
                [](V a) { return ops::layer_norm(a[0], a[1], a[2]); }),
      make_case("layer_norm_vector", shapes({{5}, {5}, {5}}, -2.0, 2.0),
                [](V a) { return ops::layer_norm(a[0], a[1], a[2]); }),
      make_case("embedding", shapes({{6, 3}}), [](V a) { return ops::embedding(a[0], ids); }),
      make_case("mean_rows", shapes({{3, 4}}), [](V a) { return ops::mean_rows(a[0]); }),
      make_case("row", shapes({{3, 4}}), [](V a) { return ops::row(a[0], 1); }),
      make_case("sum", shapes({{3, 4}}), [](V a) { return ops::sum(a[0]); }),
      make_case("mean", shapes({{3, 4}}), [](V a) { return ops::mean(a[0]); }),
      make_case("reshape", shapes({{3, 4}}), [](V a) { return ops::reshape(a[0], {2, 6}); }),
      make_case("slice_cols", shapes({{3, 4}}), [](V a) { return ops::slice_cols(a[0], 1, 3); }),
      make_case("slice_rows", shapes({{4, 3}}), [](V a) { return ops::slice_rows(a[0], 1, 3); }),
      make_case("concat_cols", shapes({{3, 2}, {3, 3}}), [](V a) { return ops::concat_cols({a[0], a[1]}); }),
      make_case("cross_entropy", shapes({{3, 5}}, -3.0, 3.0), [](V a) { return ops::cross_entropy(a[0], targets); }),
      make_case("select_cols_sum", shapes({{3, 5}}), [](V a) { return ops::select_cols_sum(a[0], cols); }),
      make_case("maximum", shapes({{1}, {1}, {1}}), [](V a) { return ops::maximum({a[0], a[1], a[2]}); }),
  };
}

ModelConfig tiny_model_config() {
  ModelConfig c;
  c.vocab_size = 40;
  c.d_model = 8;
  c.n_layers = 1;
  c.n_heads = 2;
  c.d_ff = 16;
  c.max_len = 32;
  c.expert_hidden = 8;
  c.d_kg = 4;
  return c;
}

CorpusSpec tiny_corpus_spec(std::size_t n_benign, std::size_t n_direct, std::size_t n_puppetry, std::uint64_t seed) {
  CorpusSpec s;
  s.vocab_size = 40;
  s.max_len = 32;
  s.n_benign = n_benign;
  s.n_direct = n_direct;
  s.n_puppetry = n_puppetry;
  s.seed = seed;
  return s;
}

double end_to_end_grad_error(std::uint64_t seed, std::size_t coordinates) {
  Model model = Model::init(tiny_model_config(), seed);
  const auto corpus = generate_corpus(tiny_corpus_spec(1, 1, 1, seed));
  TrainConfig config;
  double worst = 0.0;
  for (const auto& ex : corpus) {
    std::vector<Tensor> params;
    for (const auto& p : model.trainable_parameters()) params.push_back(p.tensor);
    const auto loss = [&] { return example_loss(model, ex, config, true).total; };
    worst = std::max(worst, finite_diff_check(loss, params, coordinates, seed));
  }
  return worst;
}

TempDir::TempDir(const std::string& tag) {
  static int counter = 0;
  path_ = std::filesystem::temp_directory_path() /
          ("pico_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
  std::filesystem::remove_all(path_);
  std::filesystem::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  std::filesystem::remove_all(path_, ec);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace pico::testing
