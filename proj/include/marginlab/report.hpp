#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "marginlab/config.hpp"
#include "marginlab/maxmargin.hpp"
#include "marginlab/model.hpp"
#include "marginlab/theory.hpp"
#include "marginlab/trainer.hpp"

namespace marginlab {

json to_json(const GroupStat& s);
json to_json(const GroupMetrics& m);
json to_json(const QpSolution& s);
json to_json(const BoundReport& r);
json to_json(const TheoremConstants& c);
json to_json(const ConcentrationResult& r);
json to_json(const ModelParams& p);
ModelParams params_from_json(const json& j);

// Columns: epoch,split,group,loss,acc,w_y,B_wz,we_norm (weight columns empty for mlp).
void write_metrics_csv(const TrainRecord& rec, std::ostream& out);

std::string sha256_hex(const std::string& bytes);
std::string sha256_file(const std::filesystem::path& path);

// Collects emitted files with their content hashes.
class OutputDir {
 public:
  explicit OutputDir(std::filesystem::path root);

  const std::filesystem::path& root() const { return root_; }
  void write(const std::string& rel, const std::string& content);
  void write_json(const std::string& rel, const json& j);
  json manifest() const;

 private:
  std::filesystem::path root_;
  json entries_ = json::array();
};

}  // namespace marginlab
