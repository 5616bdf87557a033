#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "marginlab/config.hpp"

namespace marginlab {

struct RunOptions {
  std::optional<std::string> out_dir;
  std::optional<std::uint64_t> seed;
  int workers = 1;
  bool quiet = false;
};

const char* version_string();

// Names accepted by `verify <check>`.
const std::vector<std::string>& verify_checks();

// Runs one command and returns its summary document. The summary is also
// written to <out_dir>/summary.json together with the manifest of emitted files.
json run_command(const std::string& command, ExperimentConfig cfg, const RunOptions& opts);

// Process exit status for an exception thrown by run_command.
int exit_code_for(const std::exception& e);

}  // namespace marginlab
