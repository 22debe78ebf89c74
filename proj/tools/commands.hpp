#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "refldiff/config.hpp"

namespace refldiff::cli {

enum ExitCode : int { kOk = 0, kCheckFailed = 1, kConfigError = 2, kMissingArtifact = 3 };

class MissingArtifact : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

const std::vector<std::string>& command_names();
std::string command_description(const std::string& command);
// Keys (with defaults) accepted by a command.
Config::Schema schema_for(const std::string& command);

// Runs a command whose config already passed apply_schema(). Returns the exit code.
int run_command(const std::string& command, const Config& config, const std::filesystem::path& out_dir);

// Writes to path.tmp and renames over path.
void write_atomic(const std::filesystem::path& path, const std::string& contents);

}  // namespace refldiff::cli
