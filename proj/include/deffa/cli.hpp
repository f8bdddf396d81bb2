#pragma once

#include <string>
#include <vector>

namespace deffa {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;    ///< usage, validation or I/O error
inline constexpr int kExitPartial = 2;  ///< some samples failed evaluation

/// Environment variable naming the directory that relative --data paths
/// are resolved against when they do not exist under the working directory.
inline constexpr const char* kDataRootEnv = "DEFFA_DATA_ROOT";

/// Runs one subcommand. `args` excludes the program name.
int dispatch(const std::vector<std::string>& args);

}  // namespace deffa
