#pragma once

// In-process CLI entry point so tests can drive every verb without spawning a binary.

#include <iosfwd>
#include <string>
#include <vector>

namespace stepgame {

// Exit codes: 0 success, 1 domain/data failure (faulty input, unreachable query, failed
// search, unreadable files, malformed config), 2 command-line usage error.
int run_cli(const std::vector<std::string>& args, std::istream& in, std::ostream& out,
            std::ostream& err);

}  // namespace stepgame
