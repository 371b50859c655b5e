#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace pgf::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;

// $PROGAN_FORGE_HOME, or ./forge when unset.
std::filesystem::path home_dir();

// argv[0] is the program name. Never throws; returns an exit code.
int run(const std::vector<std::string>& argv);

}  // namespace pgf::cli
