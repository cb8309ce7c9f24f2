#pragma once

#include <filesystem>
#include <string_view>

#include "nlsql/eval_harness.hpp"

namespace nlsql::testkit {

inline constexpr std::string_view kDeskModel = "o3-2025-04-16";

// Replays one of the desk cassettes over the 10-item desk set with default flags.
// Audit entries go to audit_path.
eval::EvalRun run_desk_replay(std::string_view cassette_file, const std::filesystem::path& audit_path);

}  // namespace nlsql::testkit
