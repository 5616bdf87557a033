#include "marginlab/report.hpp"

#include <openssl/evp.h>

#include <fstream>
#include <ostream>
#include <sstream>

#include "marginlab/errors.hpp"
#include "marginlab/numfmt.hpp"

namespace marginlab {

namespace {

json opt(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json vec(const Eigen::VectorXd& v) { return json(std::vector<double>(v.data(), v.data() + v.size())); }

Eigen::VectorXd to_vec(const json& j, const std::string& key) {
  if (!j.is_array()) throw ConfigError("params: '" + key + "' must be an array");
  Eigen::VectorXd v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) v(i) = j[i].get<double>();
  return v;
}

}  // namespace

json to_json(const GroupStat& s) { return {{"count", s.count}, {"loss", opt(s.loss)}, {"acc", opt(s.acc)}}; }

json to_json(const GroupMetrics& m) {
  return {{"all", to_json(m.all)},
          {"shortcut", to_json(m.shortcut)},
          {"leftover", to_json(m.leftover)},
          {"worst_group_acc", opt(m.worst_group_acc)},
          {"balanced_acc", opt(m.balanced_acc)}};
}

json to_json(const QpSolution& s) {
  return {{"primal_value", s.primal_value},
          {"dual_value", s.dual_value},
          {"iterations", s.iterations},
          {"polished", s.polished},
          {"kkt",
           {{"max_violation", s.kkt.max_violation},
            {"max_comp_slack", s.kkt.max_comp_slack},
            {"stationarity", s.kkt.stationarity},
            {"gap", s.kkt.gap}}},
          {"nu", s.nu},
          {"w", vec(s.w)},
          {"lambda", vec(s.lambda)}};
}

json to_json(const TheoremConstants& c) {
  return {{"G", c.G}, {"c", c.c}, {"C", c.C}, {"C1", c.C1}, {"C2", c.C2}, {"M", c.M}};
}

json to_json(const BoundReport& r) {
  json j = {{"eps", r.eps},
            {"M", r.M},
            {"k", r.k},
            {"n", r.n},
            {"d", r.d},
            {"B", r.B},
            {"subset_seed", r.subset_seed},
            {"W_stable", opt(r.W_stable)},
            {"W_shortcut", opt(r.W_shortcut)},
            {"gamma", opt(r.gamma)},
            {"beta", opt(r.beta)},
            {"lemma8_precondition_failure",
             r.lemma8_precondition_failure ? json(*r.lemma8_precondition_failure) : json(nullptr)},
            {"lemma7_bound", r.lemma7_bound},
            {"lemma7_Gamma", r.lemma7_Gamma},
            {"lemma7_feasible", r.lemma7_feasible},
            {"lemma8_norm2", opt(r.lemma8_norm2)},
            {"lemma8_feasible", r.lemma8_feasible},
            {"solved_stable_norm2", r.solved_stable_norm2},
            {"solved_shortcut_norm2", opt(r.solved_shortcut_norm2)},
            {"shortcut_side_gap", opt(r.shortcut_side_gap)},
            {"stable_brackets", r.stable_brackets},
            {"shortcut_brackets", r.shortcut_brackets ? json(*r.shortcut_brackets) : json(nullptr)},
            {"formula_stable_below_data",
             r.formula_stable_below_data ? json(*r.formula_stable_below_data) : json(nullptr)},
            {"separation_holds", r.separation_holds ? json(*r.separation_holds) : json(nullptr)},
            {"unconstrained",
             {{"norm2", r.unconstrained_norm2},
              {"w_y", r.unconstrained_w_y},
              {"B_wz", r.unconstrained_B_wz},
              {"we_norm", r.unconstrained_we_norm},
              {"shortcut_reliant", r.shortcut_reliant}}},
            {"constants", to_json(r.constants)},
            {"regime_threshold", r.regime_threshold},
            {"regime_reached", r.regime_reached},
            {"notes", r.notes}};
  return j;
}

json to_json(const ConcentrationResult& r) {
  json subs = json::array();
  for (const auto& s : r.subs)
    subs.push_back({{"name", s.name},
                    {"empirical", s.empirical},
                    {"std_error", s.std_error},
                    {"stated_raw", s.stated_raw},
                    {"stated", s.stated},
                    {"pass", s.pass}});
  return {{"lemma", to_string(r.lemma)},
          {"d", r.params.d},
          {"eps", r.params.eps},
          {"T_V", r.params.T_V},
          {"T_U", r.params.T_U},
          {"trials", r.trials},
          {"subs", subs},
          {"pass", r.pass}};
}

json to_json(const ModelParams& p) {
  if (p.kind() == ModelKind::Linear) return {{"kind", "linear"}, {"w", vec(p.theta())}};
  json W1 = json::array();
  const auto W = p.W1();
  for (int r = 0; r < p.h(); ++r) W1.push_back(vec(W.row(r).transpose()));
  return {{"kind", "mlp"}, {"W1", W1}, {"b1", vec(p.b1())}, {"w2", vec(p.w2())}, {"b2", p.b2()}};
}

ModelParams params_from_json(const json& j) {
  if (!j.is_object() || !j.contains("kind")) throw ConfigError("params: missing 'kind'");
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "linear") return ModelParams::linear(to_vec(j.at("w"), "w"));
  if (kind != "mlp") throw ConfigError("params: unknown kind '" + kind + "'");
  const json& W1 = j.at("W1");
  if (!W1.is_array() || W1.empty()) throw ConfigError("params: 'W1' must be a non-empty array");
  const int h = static_cast<int>(W1.size());
  const int d = static_cast<int>(W1[0].size());
  ModelParams p = ModelParams::mlp_zeros(d, h);
  for (int r = 0; r < h; ++r) {
    const auto row = to_vec(W1[r], "W1");
    if (row.size() != d) throw ConfigError("params: ragged 'W1'");
    p.W1().row(r) = row.transpose();
  }
  const auto b1 = to_vec(j.at("b1"), "b1"), w2 = to_vec(j.at("w2"), "w2");
  if (b1.size() != h || w2.size() != h) throw ConfigError("params: b1 and w2 must have length h");
  p.b1() = b1;
  p.w2() = w2;
  p.b2() = j.at("b2").get<double>();
  return p;
}

void write_metrics_csv(const TrainRecord& rec, std::ostream& out) {
  out << "epoch,split,group,loss,acc,w_y,B_wz,we_norm\n";
  auto cell = [](const std::optional<double>& v) { return v ? fmt_double(*v) : std::string(); };
  for (const auto& s : rec.snapshots) {
    const std::string tail = "," + cell(s.w_y) + "," + cell(s.B_wz) + "," + cell(s.we_norm) + "\n";
    for (const auto& [split, m] : {std::pair{"train", &s.train}, std::pair{"test", &s.test}}) {
      for (const auto& [group, g] :
           {std::pair{"all", &m->all}, std::pair{"shortcut", &m->shortcut}, std::pair{"leftover", &m->leftover}}) {
        out << s.epoch << ',' << split << ',' << group << ',' << cell(g->loss) << ',' << cell(g->acc) << tail;
      }
    }
  }
}

std::string sha256_hex(const std::string& bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("sha256 failed");
  static const char* hex = "0123456789abcdef";
  std::string s;
  for (unsigned int i = 0; i < len; ++i) {
    s += hex[md[i] >> 4];
    s += hex[md[i] & 15];
  }
  return s;
}

std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return sha256_hex(ss.str());
}

OutputDir::OutputDir(std::filesystem::path root) : root_(std::move(root)) {
  std::error_code ec;
  std::filesystem::create_directories(root_, ec);
  if (ec) throw ConfigError("cannot create output directory '" + root_.string() + "': " + ec.message());
}

void OutputDir::write(const std::string& rel, const std::string& content) {
  const auto path = root_ / rel;
  std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write '" + path.string() + "'");
  out << content;
  out.close();
  entries_.push_back({{"path", rel}, {"bytes", content.size()}, {"sha256", sha256_hex(content)}});
}

void OutputDir::write_json(const std::string& rel, const json& j) { write(rel, j.dump(2) + "\n"); }

json OutputDir::manifest() const { return entries_; }

}  // namespace marginlab
