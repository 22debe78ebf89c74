#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <map>
#include <optional>

#include "commands.hpp"
#include "refldiff/checkpoint.hpp"

namespace fs = std::filesystem;
using namespace refldiff;

namespace {

struct Options {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out = "out";
};

int execute(const std::string& command, const Options& opts) {
  try {
    Config config = opts.config_path.empty() ? Config() : Config::load(opts.config_path);
    if (opts.seed) config.set("run.seed", std::to_string(*opts.seed));
    config.apply_schema(cli::schema_for(command));

    const fs::path out = opts.out;
    fs::create_directories(out);
    cli::write_atomic(out / (command + ".resolved.cfg"), config.to_string());
    return cli::run_command(command, config, out);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return cli::kConfigError;
  } catch (const cli::MissingArtifact& e) {
    std::cerr << "missing artifact: " << e.what() << "\n";
    return cli::kMissingArtifact;
  } catch (const CheckpointError& e) {
    std::cerr << "bad checkpoint: " << e.what() << "\n";
    return cli::kMissingArtifact;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return cli::kCheckFailed;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Reflected diffusion models on bounded domains"};
  app.require_subcommand(1);

  std::map<std::string, Options> options;
  for (const auto& name : cli::command_names()) {
    auto* sub = app.add_subcommand(name, cli::command_description(name));
    Options& opts = options[name];
    sub->add_option("--config", opts.config_path, "Config file (section.key = value lines)")->check(CLI::ExistingFile);
    sub->add_option("--seed", opts.seed, "Overrides run.seed");
    sub->add_option("--out", opts.out, "Output directory")->capture_default_str();
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : cli::kConfigError;
  }
  for (const auto& name : cli::command_names()) {
    if (app.got_subcommand(name)) return execute(name, options[name]);
  }
  return cli::kConfigError;
}
