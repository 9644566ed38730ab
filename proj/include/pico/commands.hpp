#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

#include "pico/config.hpp"

namespace pico {

// Exit codes shared by all commands.
inline constexpr int kExitOk = 0;
inline constexpr int kExitCheckFailed = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitRuntime = 3;
inline constexpr int kExitFrozenViolation = 4;

// Symbolic replays of the two attack case studies plus a benign control.
// Names: simple_injection, policy_puppetry, benign_control.
ChannelizedExample attack_scenario(const Vocab& vocab, std::string_view name);

// Each command prints a JSON report to `out` and writes it under the run's
// out_dir. Return value is the process exit code.
int cmd_gen_corpus(const RunConfig& config, std::ostream& out);
int cmd_train(const RunConfig& config, std::ostream& out);
int cmd_eval(const RunConfig& config, const std::filesystem::path& checkpoint, std::ostream& out);
// Nonzero iff a non-vacuous check fails. `inject_fault` shifts every F by 2ε.
int cmd_verify(const RunConfig& config, const std::filesystem::path& checkpoint, bool inject_fault,
               std::ostream& out);
int cmd_attack(const RunConfig& config, const std::filesystem::path& checkpoint, std::string_view scenario,
               bool ablate_expert, std::ostream& out);
int cmd_generate(const RunConfig& config, const std::filesystem::path& checkpoint, std::string_view system_text,
                 std::string_view user_text, std::ostream& out);

}  // namespace pico
