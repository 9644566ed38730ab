#include <doctest.h>

#include <algorithm>
#include <map>

#include "pico/corpus.hpp"
#include "pico/errors.hpp"
#include "support.hpp"

using namespace pico;

TEST_CASE("vocabulary layout") {
  const Vocab v(64);
  CHECK(v.size() == 64);
  for (TokenId id = 0; id < 64; ++id) CHECK(v.id(v.symbol(id)) == id);
  CHECK(v.id("[SYSTEM]") == token::kSystem);
  CHECK(v.id("[USER]") == token::kUser);
  CHECK(v.alias_for(token::kInjForget, 0) != v.alias_for(token::kInjForget, 1));
  CHECK(v.aliases().contains(v.alias_for(token::kInjReveal, 1)));
  CHECK_THROWS_AS(v.alias_for(token::kEnd, 0), ContractError);
  CHECK_THROWS_AS(Vocab(10), ContractError);
  CHECK(Vocab::from_symbols(v.symbols()).symbols() == v.symbols());
  auto bad = v.symbols();
  std::swap(bad[40], bad[41]);
  CHECK_THROWS_AS(Vocab::from_symbols(bad), VocabularyError);
}

TEST_CASE("tokenize") {
  const Vocab v(64);
  CHECK(tokenize(v, "", Channel::system) == TokenSeq{token::kSystem});
  const std::string a = v.symbol(40), b = v.symbol(41);
  CHECK(tokenize(v, a + " " + b, Channel::user) == TokenSeq{token::kUser, 40, 41});
  const auto s = tokenize(v, a + "  " + b, Channel::system);
  const auto u = tokenize(v, a + " " + b, Channel::user);
  REQUIRE(s.size() == u.size());
  CHECK(s[0] != u[0]);
  CHECK(std::equal(s.begin() + 1, s.end(), u.begin() + 1));
  try {
    tokenize(v, a + " bogus", Channel::user);
    FAIL("expected VocabularyError");
  } catch (const VocabularyError& e) {
    CHECK(std::string(e.what()).find("bogus") != std::string::npos);
  }
  CHECK(detokenize(v, u) == "[USER] " + a + " " + b);
}

TEST_CASE("generate_corpus") {
  SUBCASE("empty") { CHECK(generate_corpus(pico::testing::tiny_corpus_spec(0, 0, 0)).empty()); }
  SUBCASE("deterministic") {
    CorpusSpec spec;
    spec.n_benign = 30;
    spec.n_direct = 20;
    spec.n_puppetry = 20;
    const auto a = generate_corpus(spec), b = generate_corpus(spec);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(to_json(a[i]).dump() == to_json(b[i]).dump());
    spec.seed = 8;
    const auto c = generate_corpus(spec);
    bool differs = false;
    for (std::size_t i = 0; i < a.size(); ++i) differs |= to_json(a[i]).dump() != to_json(c[i]).dump();
    CHECK(differs);
  }
  SUBCASE("class counts, labels and structure") {
    CorpusSpec spec;
    spec.n_benign = 100;
    spec.n_direct = 50;
    spec.n_puppetry = 50;
    const Vocab vocab(spec.vocab_size);
    const auto corpus = generate_corpus(spec);
    REQUIRE(corpus.size() == 200);
    std::map<AttackKind, int> counts;
    std::size_t aliased = 0;
    for (const auto& ex : corpus) {
      ++counts[ex.attack_kind];
      CHECK(ex.adversarial == (ex.attack_kind != AttackKind::none));
      REQUIRE(!ex.system.empty());
      REQUIRE(!ex.user.empty());
      CHECK(ex.system[0] == token::kSystem);
      CHECK(ex.user[0] == token::kUser);
      // Channel separation: no system-only tokens or tags inside the user payload.
      for (std::size_t i = 1; i < ex.user.size(); ++i) {
        const TokenId t = ex.user[i];
        CHECK_FALSE(vocab.modes().contains(t));
        CHECK_FALSE(vocab.secrets().contains(t));
        CHECK(t != token::kSystem);
        CHECK(t != token::kUser);
      }
      if (ex.adversarial) {
        CHECK(ex.target == refuse_sequence());
      } else {
        CHECK(ex.target == reference_target(vocab, ex.system, ex.user, spec.family));
      }
      if (ex.attack_kind == AttackKind::direct_injection) CHECK(has_raw_trigger(ex.user));
      if (ex.attack_kind == AttackKind::policy_puppetry) {
        const auto open = std::count(ex.user.begin(), ex.user.end(), token::kPolicyOpen);
        const auto close = std::count(ex.user.begin(), ex.user.end(), token::kPolicyClose);
        CHECK(open == 1);
        CHECK(close == 1);
        const auto o = std::find(ex.user.begin(), ex.user.end(), token::kPolicyOpen);
        const auto c = std::find(ex.user.begin(), ex.user.end(), token::kPolicyClose);
        CHECK(o < c);
        if (!has_raw_trigger(ex.user)) {
          ++aliased;
          CHECK(std::any_of(o, c, [&](TokenId t) { return vocab.aliases().contains(t); }));
        }
      }
    }
    CHECK(counts[AttackKind::none] == 100);
    CHECK(counts[AttackKind::direct_injection] == 50);
    CHECK(counts[AttackKind::policy_puppetry] == 50);
    CHECK(aliased > 10);
    CHECK(aliased < 40);
  }
  SUBCASE("capacity exceeded") {
    CorpusSpec spec = pico::testing::tiny_corpus_spec(10, 0, 0);
    spec.payload_min = spec.payload_max = 1;
    spec.secret_len = 1;
    spec.n_benign = 4 * 8 * 6 + 1;
    CHECK_THROWS_AS(generate_corpus(spec), GenerationError);
  }
  SUBCASE("invalid spec") {
    CorpusSpec spec;
    spec.payload_min = 5;
    spec.payload_max = 3;
    CHECK_THROWS_AS(generate_corpus(spec), ContractError);
  }
}

TEST_CASE("reference targets") {
  const Vocab v(64);
  const TokenId p0 = v.payload().at(0), p1 = v.payload().at(1);
  const TokenSeq s{token::kSystem, v.modes().at(2), v.secrets().at(0)};
  const TokenSeq u{token::kUser, p0, p1};
  CHECK(reference_target(v, s, u, TaskFamily::copy) == TokenSeq{v.prefixes().at(2), p0, p1, token::kEnd});
  CHECK(reference_target(v, s, u, TaskFamily::reverse) == TokenSeq{v.prefixes().at(2), p1, p0, token::kEnd});
  CHECK(reference_target(v, s, u, TaskFamily::map) ==
        TokenSeq{v.prefixes().at(2), v.payload().at(3), v.payload().at(4), token::kEnd});
}

TEST_CASE("split") {
  const auto corpus = generate_corpus(pico::testing::tiny_corpus_spec(50, 25, 25));
  SUBCASE("all in train") {
    const auto s = split(corpus, {1.0, 0.0, 0.0}, 1);
    CHECK(s.train.size() == 100);
    CHECK(s.validation.empty());
    CHECK(s.test.empty());
  }
  SUBCASE("ten examples") {
    const std::vector<ChannelizedExample> ten(corpus.begin(), corpus.begin() + 10);
    const auto s = split(ten, {0.8, 0.1, 0.1}, 1);
    CHECK(s.train.size() == 8);
    CHECK(s.validation.size() == 1);
    CHECK(s.test.size() == 1);
  }
  SUBCASE("partition and stratification") {
    const auto s = split(corpus, {0.8, 0.2, 0.0}, 3);
    CHECK(s.train.size() + s.validation.size() + s.test.size() == corpus.size());
    std::multiset<std::string> all, parts;
    for (const auto& ex : corpus) all.insert(to_json(ex).dump());
    for (const auto* part : {&s.train, &s.validation, &s.test})
      for (const auto& ex : *part) parts.insert(to_json(ex).dump());
    CHECK(all == parts);
    const auto adversarial = [](const std::vector<ChannelizedExample>& xs) {
      return static_cast<double>(std::count_if(xs.begin(), xs.end(), [](const auto& e) { return e.adversarial; }));
    };
    CHECK(std::abs(adversarial(s.train) - 0.5 * s.train.size()) <= 1.0);
    CHECK(std::abs(adversarial(s.validation) - 0.5 * s.validation.size()) <= 1.0);
  }
  SUBCASE("invalid fractions") {
    CHECK_THROWS_AS(split(corpus, {0.5, 0.2, 0.2}, 1), ContractError);
    CHECK_THROWS_AS(split(corpus, {1.2, -0.1, -0.1}, 1), ContractError);
  }
}

TEST_CASE("jsonl round trip") {
  pico::testing::TempDir dir("corpus");
  const auto corpus = generate_corpus(pico::testing::tiny_corpus_spec(5, 3, 3));
  write_jsonl(dir.path() / "c.jsonl", corpus);
  const auto back = read_jsonl(dir.path() / "c.jsonl");
  REQUIRE(back.size() == corpus.size());
  for (std::size_t i = 0; i < back.size(); ++i) CHECK(to_json(back[i]).dump() == to_json(corpus[i]).dump());
  const auto j = to_json(corpus[0]);
  for (const char* key : {"system", "user", "target", "adversarial", "attack_kind"}) CHECK(j.contains(key));
  CHECK_THROWS_AS(read_jsonl(dir.path() / "missing.jsonl"), IoError);
}
