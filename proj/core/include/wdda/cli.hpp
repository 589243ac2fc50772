// Copyright 2026 The WDDA Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef WDDA_CLI_HPP_
#define WDDA_CLI_HPP_

#include <iosfwd>
#include <string>
#include <vector>

namespace wdda {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitRuntime = 2;

// Entry point of the `wdda` tool. `args` excludes the program name.
// Returns 0 on success, 1 on usage errors (unknown flags, missing files,
// invalid configs, phase-order violations) and 2 on runtime failures.
int cli_main(const std::vector<std::string>& args, std::ostream& out,
             std::ostream& err);

}  // namespace wdda

#endif  // WDDA_CLI_HPP_
