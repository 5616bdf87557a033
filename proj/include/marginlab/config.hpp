#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "marginlab/dgp.hpp"
#include "marginlab/losses.hpp"
#include "marginlab/maxmargin.hpp"
#include "marginlab/trainer.hpp"

namespace marginlab {

using json = nlohmann::ordered_json;

struct TestSplit {
  double rho = 0.1;
  int n = 0;                  // 0 means "same as train"
  std::optional<std::uint64_t> seed;  // default: derived from the train seed
};

struct DgpSection {
  DgpConfig train;
  std::optional<TestSplit> test;

  DgpConfig test_config() const;
};

struct ModelSection {
  ModelKind kind = ModelKind::Linear;
  int hidden = 200;
  std::optional<std::uint64_t> init_seed;  // default: train.seed
};

struct MaxMarginSection {
  Side side = Side::None;
  SolverOptions solver;
  double eps = 1.0;
  std::optional<int> M;  // default floor(n / 2k)
  std::uint64_t subset_seed = 0;
};

struct SweepSection {
  std::string command = "train";
  // dotted key -> candidate values, in file order
  std::vector<std::pair<std::string, std::vector<json>>> grid;
};

struct ExperimentConfig {
  std::string command;
  std::optional<DgpSection> dgp;
  ModelSection model;
  LossSpec loss;
  TrainConfig train;
  MaxMarginSection maxmargin;
  json verify = json::object();  // check name plus its parameters; validated by the check
  std::optional<SweepSection> sweep;
  std::string out_dir = "runs/default";

  json raw;  // the document as read, used to re-derive sweep cells
};

// Strict parse: unknown keys and wrong types raise ConfigError naming the key.
ExperimentConfig parse_config(const json& doc);
ExperimentConfig load_config(const std::string& path);

// Normalized config with all defaults filled in.
json config_to_json(const ExperimentConfig& cfg);

// Sets a dotted key ("loss.kind") inside a raw config document.
void set_dotted(json& doc, const std::string& dotted, const json& value);

// Reads a key from a JSON object and records it as consumed.
class Section {
 public:
  Section(const json& obj, std::string path);

  bool has(const std::string& key) const;
  const json& raw(const std::string& key);
  double num(const std::string& key, std::optional<double> fallback = std::nullopt);
  std::int64_t integer(const std::string& key, std::optional<std::int64_t> fallback = std::nullopt);
  std::uint64_t u64(const std::string& key, std::optional<std::uint64_t> fallback = std::nullopt);
  std::string str(const std::string& key, std::optional<std::string> fallback = std::nullopt);
  bool boolean(const std::string& key, std::optional<bool> fallback = std::nullopt);
  Section sub(const std::string& key);
  // Throws on any key that was never read.
  void finish() const;
  const std::string& path() const { return path_; }

 private:
  const json* get(const std::string& key, bool required);
  std::string name(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  const json& obj_;
  std::string path_;
  std::vector<std::string> seen_;
};

}  // namespace marginlab
