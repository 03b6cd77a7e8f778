#pragma once

// Command-line front end. Subcommands: run, report, footprint, dynamics,
// gradcheck. Exit codes: 0 success, 1 a check failed, 2 usage or input
// error (diagnostics on `err`).

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "vpr/data.hpp"
#include "vpr/encoder.hpp"
#include "vpr/trainer.hpp"

namespace vpr::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailed = 1;
inline constexpr int kExitUsage = 2;

// `args` excludes the program name.
int cli_run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// Everything a `run` configuration file describes, resolved.
struct RunSetup {
  Dataset dataset;
  ProtocolSchedule schedule;
  NetworkSpec network;
  TrainerConfig trainer;
  std::optional<BaselineConfig> baseline;
};

// Parses and validates a run configuration; relative data paths resolve
// against the file's directory. Throws std::invalid_argument on bad keys
// or values and std::runtime_error on unreadable files.
RunSetup load_run_setup(const std::filesystem::path& config_path);

// 2126500 -> "2,126,500".
std::string with_commas(std::size_t value);

}  // namespace vpr::cli
