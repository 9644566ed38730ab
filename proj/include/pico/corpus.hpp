#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace pico {

using TokenId = std::int32_t;
using TokenSeq = std::vector<TokenId>;

// Reserved ids. They occupy the low end of every vocabulary.
namespace token {
inline constexpr TokenId kPad = 0;
inline constexpr TokenId kSystem = 1;
inline constexpr TokenId kUser = 2;
inline constexpr TokenId kStart = 3;
inline constexpr TokenId kEnd = 4;
inline constexpr TokenId kRefuse = 5;
inline constexpr TokenId kPolicyOpen = 6;
inline constexpr TokenId kPolicyClose = 7;
inline constexpr TokenId kInjForget = 8;
inline constexpr TokenId kInjReveal = 9;
}  // namespace token

enum class Channel { system, user };

struct TokenRange {
  TokenId first = 0;
  TokenId count = 0;
  TokenId at(std::size_t i) const { return first + static_cast<TokenId>(i); }
  bool contains(TokenId id) const { return id >= first && id < first + count; }
};

// Symbol table of the synthetic task language. Layout after the reserved ids:
// obfuscation aliases (forget a/b, reveal a/b), filler, system mode tokens,
// system secret tokens, output prefix tokens, then the payload alphabet.
class Vocab {
 public:
  static constexpr std::size_t kMinSize = 40;

  explicit Vocab(std::size_t size = 64);
  // Rebuilds a vocabulary from a stored symbol list; it must match the
  // standard layout of the same size.
  static Vocab from_symbols(const std::vector<std::string>& symbols);

  std::size_t size() const { return symbols_.size(); }
  TokenId id(std::string_view symbol) const;
  const std::string& symbol(TokenId id) const;
  const std::vector<std::string>& symbols() const { return symbols_; }

  TokenRange aliases() const { return {10, 4}; }
  TokenId alias_for(TokenId trigger, std::size_t variant) const;
  TokenRange filler() const { return {14, 4}; }
  TokenRange modes() const { return {18, 4}; }
  TokenRange secrets() const { return {22, 8}; }
  TokenRange prefixes() const { return {30, 4}; }
  TokenRange payload() const { return {34, static_cast<TokenId>(size() - 34)}; }

 private:
  std::vector<std::string> symbols_;
};

// Whitespace-separated symbols, tagged with the channel header.
TokenSeq tokenize(const Vocab& vocab, std::string_view text, Channel channel);
std::string detokenize(const Vocab& vocab, std::span<const TokenId> ids);

enum class AttackKind { none, direct_injection, policy_puppetry };
std::string to_string(AttackKind kind);
AttackKind attack_kind_from_string(std::string_view name);

struct ChannelizedExample {
  TokenSeq system;  // starts with [SYSTEM]
  TokenSeq user;    // starts with [USER]
  TokenSeq target;  // ends with END
  bool adversarial = false;
  AttackKind attack_kind = AttackKind::none;
};

// The canonical safe completion.
TokenSeq refuse_sequence();

enum class TaskFamily { copy, reverse, map };
std::string to_string(TaskFamily family);
TaskFamily task_family_from_string(std::string_view name);

struct CorpusSpec {
  std::size_t vocab_size = 64;
  std::size_t n_benign = 1000;
  std::size_t n_direct = 500;
  std::size_t n_puppetry = 500;
  std::size_t payload_min = 3;
  std::size_t payload_max = 6;
  std::size_t secret_len = 4;
  std::size_t max_filler = 2;
  std::size_t max_len = 64;
  double alias_fraction = 0.5;  // share of puppetry payloads using alias triggers
  TaskFamily family = TaskFamily::copy;
  std::uint64_t seed = 7;
};

void validate(const CorpusSpec& spec);

// Benign target for (S, U) under the task family: the prefix token selected
// by S's mode followed by the transformed U payload and END.
TokenSeq reference_target(const Vocab& vocab, std::span<const TokenId> system,
                          std::span<const TokenId> user, TaskFamily family);

// True when `user` contains a raw injection trigger (not an alias).
bool has_raw_trigger(std::span<const TokenId> user);

std::vector<ChannelizedExample> generate_corpus(const CorpusSpec& spec);

struct CorpusSplits {
  std::vector<ChannelizedExample> train;
  std::vector<ChannelizedExample> validation;
  std::vector<ChannelizedExample> test;
};

// Stratified by attack kind: each class's share of a split is within one
// example of fraction × class size.
CorpusSplits split(const std::vector<ChannelizedExample>& corpus, std::array<double, 3> fractions,
                   std::uint64_t seed);

nlohmann::ordered_json to_json(const ChannelizedExample& example);
ChannelizedExample example_from_json(const nlohmann::json& j);

void write_jsonl(const std::filesystem::path& path, std::span<const ChannelizedExample> examples);
std::vector<ChannelizedExample> read_jsonl(const std::filesystem::path& path);

}  // namespace pico
