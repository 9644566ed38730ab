#include <doctest.h>

#include <cstring>
#include <set>

#include "pico/decoder.hpp"
#include "pico/errors.hpp"
#include "pico/eval.hpp"
#include "pico/model.hpp"
#include "pico/ops.hpp"
#include "support.hpp"

using namespace pico;

namespace {

// Reference: every n-gram of system[1:], scanned exhaustively.
std::set<TokenSeq> ngrams(const TokenSeq& system, std::size_t n) {
  std::set<TokenSeq> out;
  for (std::size_t i = 1; i + n <= system.size(); ++i) out.emplace(system.begin() + i, system.begin() + i + n);
  return out;
}

TokenSeq random_user(Rng& rng, std::size_t vocab) {
  std::uniform_int_distribution<TokenId> tok(8, static_cast<TokenId>(vocab - 1));
  std::uniform_int_distribution<std::size_t> len(1, 10);
  TokenSeq u{token::kUser};
  for (std::size_t i = len(rng); i > 0; --i) u.push_back(tok(rng));
  return u;
}

}  // namespace

TEST_CASE("leakage filter") {
  const TokenSeq system{token::kSystem, 5, 6, 7, 8};
  CHECK_FALSE(leakage_filter(7, TokenSeq{3, 5, 6}, system));
  CHECK(leakage_filter(7, TokenSeq{6}, system));
  CHECK(leakage_filter(9, TokenSeq{5, 6}, system));
  CHECK(leakage_filter(6, TokenSeq{token::kSystem, 5}, system));  // the tag is exempt
  CHECK_FALSE(leakage_filter(6, TokenSeq{5}, system, 2));
  CHECK_THROWS_AS(leakage_filter(6, TokenSeq{5}, system, 1), ContractError);

  Rng rng(1);
  std::uniform_int_distribution<TokenId> tok(20, 24);
  for (int trial = 0; trial < 500; ++trial) {
    TokenSeq s{token::kSystem};
    for (int i = 0; i < 6; ++i) s.push_back(tok(rng));
    TokenSeq g;
    for (int i = 0; i < 3; ++i) g.push_back(tok(rng));
    const TokenId c = tok(rng);
    for (std::size_t n : {2u, 3u}) {
      TokenSeq gram(g.end() - static_cast<std::ptrdiff_t>(n - 1), g.end());
      gram.push_back(c);
      CHECK(leakage_filter(c, g, s, n) == !ngrams(s, n).contains(gram));
    }
  }
}

TEST_CASE("greedy decode") {
  const TokenSeq system{token::kSystem, 20, 21, 22};
  SUBCASE("END always wins") {
    const StepFn step = [](const TokenSeq&) {
      std::vector<double> l(10, 0.0);
      l[token::kEnd] = 5.0;
      return l;
    };
    CHECK(greedy_decode(step, system, 8).tokens == TokenSeq{token::kEnd});
  }
  SUBCASE("vetoed argmax falls back to the next best") {
    // Prefers 20, 21, 22 in sequence; the third would complete the system 3-gram.
    const StepFn step = [](const TokenSeq& prefix) {
      std::vector<double> l(30, 0.0);
      const std::size_t k = prefix.size() - 1;
      if (k < 3) l[20 + k] = 3.0;
      l[25] = 1.0;
      l[token::kEnd] = k >= 3 ? 4.0 : 0.5;
      return l;
    };
    const auto r = greedy_decode(step, system, 8, 3, true);
    CHECK(r.tokens == TokenSeq{20, 21, 25, token::kEnd});
    CHECK(r.filtered_count == 1);
    CHECK(r.step_logits.size() == 4);
  }
  SUBCASE("stops at max_len") {
    const StepFn step = [](const TokenSeq&) {
      std::vector<double> l(30, 0.0);
      l[25] = 1.0;
      return l;
    };
    CHECK(greedy_decode(step, system, 5).tokens == TokenSeq(5, 25));
    CHECK_THROWS_AS(greedy_decode(step, system, 0), ContractError);
  }
  SUBCASE("everything vetoed") {
    // Two-token vocabulary whose every bigram after "1" occurs in the system prompt.
    const StepFn step = [](const TokenSeq&) { return std::vector<double>{0.0, 1.0}; };
    const TokenSeq sys{token::kSystem, 1, 1, 0, 1};
    CHECK_THROWS_AS(greedy_decode(step, sys, 6, 2), GenerationError);
  }
}

TEST_CASE("decoder") {
  const ModelConfig cfg = pico::testing::tiny_model_config();
  const Model model = Model::init(cfg, 3);
  Rng rng(4);
  const Tensor sys_mem = pico::testing::random_tensor({4, cfg.d_model}, rng);
  const TokenSeq prev{token::kStart, 20, 21};

  SUBCASE("alpha = 1 removes the user memory") {
    std::vector<ContextTrace> trace;
    const Tensor a = decode_logits(model.decoder, prev, sys_mem, pico::testing::random_tensor({3, cfg.d_model}, rng),
                                   Tensor::scalar(1.0), &trace);
    const Tensor b = decode_logits(model.decoder, prev, sys_mem, pico::testing::random_tensor({6, cfg.d_model}, rng),
                                   Tensor::scalar(1.0));
    CHECK(std::memcmp(a.values().data(), b.values().data(), a.size() * sizeof(double)) == 0);
    REQUIRE(trace.size() == cfg.n_layers);
    for (const auto& t : trace)
      CHECK(std::memcmp(t.combined.values().data(), t.system_context.values().data(),
                        t.combined.size() * sizeof(double)) == 0);
    const Tensor sa = decode_step(model.decoder, prev, sys_mem, pico::testing::random_tensor({2, cfg.d_model}, rng), 1.0);
    const Tensor sb = decode_step(model.decoder, prev, sys_mem, pico::testing::random_tensor({5, cfg.d_model}, rng), 1.0);
    CHECK(sa.shape() == Shape{cfg.vocab_size});
    CHECK(std::memcmp(sa.values().data(), sb.values().data(), sa.size() * sizeof(double)) == 0);
  }
  SUBCASE("decode_step preconditions") {
    const Tensor u = pico::testing::random_tensor({2, cfg.d_model}, rng);
    CHECK_THROWS_AS(decode_step(model.decoder, TokenSeq{}, sys_mem, u, 0.5), ContractError);
    CHECK_THROWS_AS(decode_step(model.decoder, TokenSeq{20}, sys_mem, u, 0.5), ContractError);
    CHECK_THROWS_AS(decode_step(model.decoder, prev, sys_mem, u, 1.5), ContractError);
    CHECK_THROWS_AS(decode_step(model.decoder, TokenSeq{token::kStart, 40}, sys_mem, u, 0.5), VocabularyError);
  }
}

TEST_CASE("hand-sized context mixing") {
  DecoderConfig cfg;
  cfg.vocab_size = 40;
  cfg.d_model = 2;
  cfg.n_layers = 1;
  cfg.n_heads = 1;
  cfg.d_ff = 4;
  cfg.max_len = 4;
  Rng rng(5);
  const DecoderParams p = DecoderParams::init(cfg, rng);
  const Tensor s = Tensor::matrix(1, 2, {0.7, -0.3}), u = Tensor::matrix(1, 2, {-1.1, 0.4});
  std::vector<ContextTrace> trace;
  decode_logits(p, TokenSeq{token::kStart}, s, u, Tensor::scalar(0.5), &trace);
  REQUIRE(trace.size() == 1);
  // One memory row: attention weight 1, so context = output(value(row)).
  const auto& att_s = p.layers[0].system_attention;
  const auto& att_u = p.layers[0].user_attention;
  const Tensor cs = att_s.output(att_s.value(s)), cu = att_u.output(att_u.value(u));
  for (std::size_t j = 0; j < 2; ++j) {
    CHECK(trace[0].system_context.at(j) == doctest::Approx(cs.at(j)).epsilon(1e-12));
    CHECK(trace[0].user_context.at(j) == doctest::Approx(cu.at(j)).epsilon(1e-12));
    CHECK(trace[0].combined.at(j) == doctest::Approx(0.5 * (cs.at(j) + cu.at(j))).epsilon(1e-12));
  }
}

TEST_CASE("generation") {
  const Model model = Model::init(pico::testing::tiny_model_config(), 6);
  const auto corpus = generate_corpus(pico::testing::tiny_corpus_spec(20, 10, 10, 6));
  SUBCASE("deterministic") {
    const auto a = generate(model, corpus[0].system, corpus[0].user, 10);
    const auto b = generate(model, corpus[0].system, corpus[0].user, 10);
    CHECK(a.tokens == b.tokens);
    for (std::size_t i = 0; i + 1 < a.tokens.size(); ++i) CHECK(a.tokens[i] != token::kEnd);
  }
  SUBCASE("forced alpha = 1 ignores the user prompt") {
    const TokenSeq& s = corpus[1].system;
    const auto ref = generate(model, s, corpus[1].user, 10, 3, {.force_alpha = 1.0}, true);
    Rng rng(7);
    for (int trial = 0; trial < 100; ++trial) {
      const auto r = generate(model, s, random_user(rng, 40), 10, 3, {.force_alpha = 1.0}, true);
      CHECK(r.tokens == ref.tokens);
      REQUIRE(r.step_logits.size() == ref.step_logits.size());
      for (std::size_t k = 0; k < r.step_logits.size(); ++k)
        CHECK(std::memcmp(r.step_logits[k].data(), ref.step_logits[k].data(), r.step_logits[k].size() * 8) == 0);
    }
  }
}

TEST_CASE("no system 3-gram survives in 1000 generations") {
  // A decoder biased toward system tokens, so the filter has work to do.
  Model model = Model::init(pico::testing::tiny_model_config(), 8);
  const Vocab& v = model.vocab;
  auto bias = model.decoder.output.bias.values();
  for (TokenId t = v.secrets().first; t < v.secrets().first + v.secrets().count; ++t) bias[t] += 6.0;
  bias[token::kEnd] -= 6.0;

  CorpusSpec spec = pico::testing::tiny_corpus_spec(400, 300, 300, 8);
  spec.secret_len = 8;
  const auto corpus = generate_corpus(spec);
  std::size_t overlaps = 0, filtered = 0;
  for (const auto& ex : corpus) {
    const auto r = generate(model, ex.system, ex.user, 12);
    overlaps += count_ngram_overlaps(r.tokens, ex.system, 3);
    filtered += r.filtered_count;
    for (std::size_t i = 2; i < r.tokens.size(); ++i)
      CHECK_FALSE(ngrams(ex.system, 3).contains(TokenSeq(r.tokens.begin() + i - 2, r.tokens.begin() + i + 1)));
  }
  CHECK(corpus.size() == 1000);
  CHECK(overlaps == 0);
  CHECK(filtered > 0);
}
