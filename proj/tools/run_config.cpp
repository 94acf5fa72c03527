#include "run_config.hpp"

#include "dmae/errors.hpp"

#include <fstream>
#include <set>
#include <sstream>

namespace dmae::cli {

using nlohmann::json;

namespace {

// Reads members of one JSON object and remembers which keys were consumed,
// so anything left over can be reported as unknown.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ParameterError(where() + " must be an object");
  }

  template <class T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      out = it->template get<T>();
    } catch (const json::exception&) {
      throw ParameterError("config key '" + name(key) + "' has the wrong type");
    }
  }

  template <class E, class F>
  void get_enum(const char* key, E& out, F from_string) {
    std::string s;
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    if (!it->is_string()) throw ParameterError("config key '" + name(key) + "' must be a string");
    try {
      out = from_string(it->template get<std::string>());
    } catch (const ParameterError& e) {
      throw ParameterError("config key '" + name(key) + "': " + e.what());
    }
  }

  bool has(const char* key) const { return j_.contains(key); }

  Section child(const char* key) {
    seen_.insert(key);
    return Section(j_.at(key), name(key));
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) throw ParameterError("unknown config key '" + name(it.key().c_str()) + "'");
    }
  }

 private:
  std::string name(const char* key) const { return path_.empty() ? key : path_ + "." + key; }
  std::string where() const { return path_.empty() ? "config" : "config key '" + path_ + "'"; }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

// Prefixes validation messages with the section they came from.
template <class F>
void validated(const char* section, F&& fn) {
  try {
    fn();
  } catch (const ParameterError& e) {
    throw ParameterError(std::string(section) + "." + e.what());
  }
}

void read_solver(Section s, PiSolverConfig& p) {
  s.get("max_iters", p.max_iters);
  s.get("step_init", p.step_init);
  s.get("backtrack_factor", p.backtrack_factor);
  s.get("sufficient_decrease", p.sufficient_decrease);
  s.get("tol", p.tol);
  s.finish();
}

void read_train(Section s, TrainConfig& t) {
  s.get_enum("measure", t.measure, measure_from_string);
  s.get_enum("mode", t.mode, train_mode_from_string);
  s.get_enum("pairing", t.pairing, pairing_from_string);
  s.get("lambda_dep", t.lambda_dep);
  s.get("lambda_dep_paired", t.lambda_dep_paired);
  s.get("lambda_pi", t.lambda_pi);
  s.get("sigma2_x", t.sigma2_x);
  s.get("sigma2_y", t.sigma2_y);
  s.get("median_heuristic", t.median_heuristic);
  s.get("lambda_ridge", t.lambda_ridge);
  s.get("latent_dim", t.latent_dim);
  s.get("depth", t.depth);
  std::vector<long> widths(t.hidden_widths.begin(), t.hidden_widths.end());
  s.get("hidden_widths", widths);
  t.hidden_widths.assign(widths.begin(), widths.end());
  s.get_enum("hidden_activation", t.hidden_activation, activation_from_string);
  s.get("standardize", t.standardize);
  s.get("pretrain_epochs", t.pretrain_epochs);
  s.get("outer_rounds", t.outer_rounds);
  s.get("theta_epochs_per_round", t.theta_epochs_per_round);
  s.get("lr", t.lr);
  s.get("tol", t.tol);
  s.get_enum("theta_guard", t.theta_guard, theta_guard_from_string);
  if (s.has("pi_solver")) read_solver(s.child("pi_solver"), t.pi_solver);
  s.finish();
}

void read_synthetic(Section s, SyntheticSpec& spec) {
  s.get("n", spec.n);
  s.get("latent_dim_true", spec.latent_dim_true);
  s.get("d_x", spec.d_x);
  s.get("d_y", spec.d_y);
  s.get("noise_std", spec.noise_std);
  s.get_enum("nonlinearity", spec.nonlinearity, nonlinearity_from_string);
  s.get("identity_projection", spec.identity_projection);
  s.get("planted_permutation", spec.planted_permutation);
  s.finish();
}

void read_data(Section s, DataSection& d) {
  s.get("source", d.source);
  if (s.has("synthetic")) read_synthetic(s.child("synthetic"), d.synthetic);
  s.get("categories", d.categories);
  s.get("x", d.x);
  s.get("y", d.y);
  s.get("paired_x", d.paired_x);
  s.get("paired_y", d.paired_y);
  s.get("test_x", d.test_x);
  s.get("test_y", d.test_y);
  s.get("truth", d.truth);
  s.get("has_header", d.has_header);
  s.finish();
  if (d.source != "synthetic" && d.source != "files") {
    throw ParameterError("data.source must be 'synthetic' or 'files'");
  }
  if (d.source == "files" && (d.x.empty() != d.y.empty())) {
    throw ParameterError("data.x and data.y must be given together");
  }
  if (d.source == "files" && d.paired_x.empty() != d.paired_y.empty()) {
    throw ParameterError("data.paired_x and data.paired_y must be given together");
  }
  if (d.source == "files" && d.test_x.empty() != d.test_y.empty()) {
    throw ParameterError("data.test_x and data.test_y must be given together");
  }
  if (d.source == "synthetic") validated("data.synthetic", [&] { d.synthetic.validate(); });
}

void read_split(Section s, SplitFractions& f) {
  s.get("paired", f.paired);
  s.get("unpaired", f.unpaired);
  s.get("test", f.test);
  s.finish();
  validated("split", [&] { f.validate(); });
}

void read_eval(Section s, EvalSection& e) {
  s.get("ks", e.ks);
  s.get("classifier_reg", e.classifier_reg);
  s.finish();
  for (int k : e.ks) {
    if (k < 1) throw ParameterError("eval.ks entries must be at least 1");
  }
  if (!(e.classifier_reg >= 0.0)) throw ParameterError("eval.classifier_reg must be nonnegative");
}

}  // namespace

RunConfig parse_run_config(const json& j) {
  RunConfig cfg;
  Section root(j, "");
  root.get("seed", cfg.seed);
  if (root.has("data")) read_data(root.child("data"), cfg.data);
  if (root.has("split")) read_split(root.child("split"), cfg.split);
  if (root.has("train")) read_train(root.child("train"), cfg.train);
  if (root.has("eval")) read_eval(root.child("eval"), cfg.eval);
  root.finish();
  if (cfg.data.categories > 0) cfg.train.pairing = PairingMode::many_one;
  validated("train", [&] { cfg.train.validate(); });
  return with_seed(cfg, cfg.seed);
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParameterError("cannot open config '" + path.string() + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParameterError("config '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return parse_run_config(j);
}

RunConfig with_seed(RunConfig cfg, std::uint64_t seed) {
  cfg.seed = seed;
  cfg.data.synthetic.seed = seed;
  cfg.train.seed = seed;
  return cfg;
}

json to_json(const RunConfig& c) {
  const TrainConfig& t = c.train;
  const SyntheticSpec& s = c.data.synthetic;
  json j;
  j["seed"] = c.seed;
  j["data"] = {
      {"source", c.data.source},
      {"synthetic",
       {{"n", s.n},
        {"latent_dim_true", s.latent_dim_true},
        {"d_x", s.d_x},
        {"d_y", s.d_y},
        {"noise_std", s.noise_std},
        {"nonlinearity", std::string(to_string(s.nonlinearity))},
        {"identity_projection", s.identity_projection},
        {"planted_permutation", s.planted_permutation}}},
      {"categories", c.data.categories},
      {"x", c.data.x},
      {"y", c.data.y},
      {"paired_x", c.data.paired_x},
      {"paired_y", c.data.paired_y},
      {"test_x", c.data.test_x},
      {"test_y", c.data.test_y},
      {"truth", c.data.truth},
      {"has_header", c.data.has_header},
  };
  j["split"] = {{"paired", c.split.paired}, {"unpaired", c.split.unpaired}, {"test", c.split.test}};
  std::vector<long> widths(t.hidden_widths.begin(), t.hidden_widths.end());
  j["train"] = {
      {"measure", std::string(to_string(t.measure))},
      {"mode", std::string(to_string(t.mode))},
      {"pairing", std::string(to_string(t.pairing))},
      {"lambda_dep", t.lambda_dep},
      {"lambda_dep_paired", t.lambda_dep_paired},
      {"lambda_pi", t.lambda_pi},
      {"sigma2_x", t.sigma2_x},
      {"sigma2_y", t.sigma2_y},
      {"median_heuristic", t.median_heuristic},
      {"lambda_ridge", t.lambda_ridge},
      {"latent_dim", t.latent_dim},
      {"depth", t.depth},
      {"hidden_widths", widths},
      {"hidden_activation", std::string(to_string(t.hidden_activation))},
      {"standardize", t.standardize},
      {"pretrain_epochs", t.pretrain_epochs},
      {"outer_rounds", t.outer_rounds},
      {"theta_epochs_per_round", t.theta_epochs_per_round},
      {"lr", t.lr},
      {"tol", t.tol},
      {"theta_guard", std::string(to_string(t.theta_guard))},
      {"pi_solver",
       {{"max_iters", t.pi_solver.max_iters},
        {"step_init", t.pi_solver.step_init},
        {"backtrack_factor", t.pi_solver.backtrack_factor},
        {"sufficient_decrease", t.pi_solver.sufficient_decrease},
        {"tol", t.pi_solver.tol}}},
  };
  j["eval"] = {{"ks", c.eval.ks}, {"classifier_reg", c.eval.classifier_reg}};
  return j;
}

std::vector<int> parse_int_list(const std::string& text, const char* what) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    std::size_t used = 0;
    int v = 0;
    try {
      v = std::stoi(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != item.size()) throw ParameterError(std::string(what) + ": '" + item + "' is not an integer");
    out.push_back(v);
  }
  if (out.empty()) throw ParameterError(std::string(what) + ": empty list");
  return out;
}

}  // namespace dmae::cli
