#include "commands.hpp"

#include "dmae/errors.hpp"
#include "dmae/selfcheck.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <atomic>
#include <fstream>
#include <iostream>
#include <mutex>
#include <thread>

#include "CLI11.hpp"

namespace dmae::cli {

namespace fs = std::filesystem;

namespace {

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  return out;
}

std::ifstream open_in(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read '" + path.string() + "'");
  return in;
}

void write_labels(const fs::path& path, const std::vector<int>& labels) {
  std::ofstream out = open_out(path);
  for (int l : labels) out << l << '\n';
}

std::vector<int> read_labels(const fs::path& path) {
  std::vector<int> out;
  if (!fs::exists(path)) return out;
  std::ifstream in = open_in(path);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      std::size_t used = 0;
      out.push_back(std::stoi(line, &used));
      if (used != line.size()) throw std::invalid_argument(line);
    } catch (const std::exception&) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": not an integer label");
    }
  }
  return out;
}

void write_pool(const fs::path& path, const Matrix& m) {
  if (m.rows() > 0) write_features(path, m);
}

Matrix read_pool(const fs::path& path, Eigen::Index cols) {
  if (!fs::exists(path)) return Matrix(0, cols);
  return load_features(path);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out = open_out(path);
  out << text;
}

void write_history_files(const fs::path& out, const std::vector<RoundRecord>& history) {
  {
    std::ofstream h = open_out(out / "history.tsv");
    write_history(h, history);
  }
  std::ofstream t = open_out(out / "timings.tsv");
  t << "round\twall_seconds\n";
  for (const RoundRecord& r : history) t << r.round << '\t' << format_double(r.wall_seconds) << '\n';
}

std::optional<PairingFile> truth_of(const SplitDataset& data) {
  if (data.unpaired_truth.empty() || data.unpaired_truth.size() != data.n_unpaired_x()) return std::nullopt;
  HardAssignment a{data.unpaired_truth, data.mode};
  const bool labelled = data.unpaired_labels.size() == data.unpaired_truth.size();
  return pairing_from_assignment(a, labelled ? &data.unpaired_labels : nullptr);
}

void write_data_dir(const fs::path& dir, const SplitDataset& d) {
  fs::create_directories(dir);
  write_pool(dir / "paired_x.csv", d.paired_x);
  write_pool(dir / "paired_y.csv", d.paired_y);
  write_pool(dir / "unpaired_x.csv", d.unpaired_x);
  write_pool(dir / "unpaired_y.csv", d.unpaired_y);
  write_pool(dir / "test_x.csv", d.test_x);
  write_pool(dir / "test_y.csv", d.test_y);
  if (!d.test_labels.empty()) write_labels(dir / "test_labels.csv", d.test_labels);
  if (!d.unpaired_y_labels.empty()) write_labels(dir / "unpaired_y_labels.csv", d.unpaired_y_labels);
}

// Maps every exception type onto the exit-code contract.
template <class F>
int guarded(F&& fn) {
  try {
    return fn();
  } catch (const TrainingError& e) {
    spdlog::error("numerical failure: {}", e.what());
    return exit_numerical;
  } catch (const NumericalError& e) {
    spdlog::error("numerical failure: {}", e.what());
    return exit_numerical;
  } catch (const Error& e) {
    spdlog::error("{}", e.what());
    return exit_usage;
  } catch (const fs::filesystem_error& e) {
    spdlog::error("{}", e.what());
    return exit_usage;
  }
}

}  // namespace

void write_metrics(const fs::path& path, const std::vector<MetricRecord>& metrics) {
  std::ofstream out = open_out(path);
  out << "metric\tk\tvalue\n";
  for (const MetricRecord& m : metrics) out << m.name << '\t' << m.k << '\t' << format_double(m.value) << '\n';
}

std::vector<MetricRecord> read_metrics(const fs::path& path) {
  std::ifstream in = open_in(path);
  std::string header;
  std::getline(in, header);
  if (header != "metric\tk\tvalue") throw DataError(path.string() + ": not a metrics file");
  std::vector<MetricRecord> out;
  std::string name, k, value;
  while (in >> name >> k >> value) out.push_back({name, std::stoi(k), parse_double(value)});
  return out;
}

std::optional<double> find_metric(const std::vector<MetricRecord>& metrics, const std::string& name, int k) {
  for (const MetricRecord& m : metrics) {
    if (m.name == name && m.k == k) return m.value;
  }
  return std::nullopt;
}

SplitDataset build_dataset(const RunConfig& cfg) {
  const DataSection& d = cfg.data;
  if (d.source == "synthetic") {
    const TwoViewData data = d.categories > 0 ? synth_many_one(d.synthetic, d.categories) : synth_two_view(d.synthetic);
    // The split draws from its own stream so the data itself depends only on the seed.
    return split(data, cfg.split, cfg.seed ^ 0x5BD1E995ULL);
  }

  LoadOptions opts;
  opts.has_header = d.has_header;
  SplitDataset ds;
  ds.mode = cfg.train.pairing;
  Eigen::Index dx = 0, dy = 0;
  auto load_pair = [&](const std::string& px, const std::string& py, Matrix& mx, Matrix& my) {
    if (px.empty()) return;
    mx = load_features(px, opts);
    my = load_features(py, opts);
    dx = mx.cols();
    dy = my.cols();
  };
  load_pair(d.x, d.y, ds.unpaired_x, ds.unpaired_y);
  load_pair(d.paired_x, d.paired_y, ds.paired_x, ds.paired_y);
  load_pair(d.test_x, d.test_y, ds.test_x, ds.test_y);
  if (dx == 0) throw ParameterError("data: no feature files given");
  auto shape = [&](Matrix& m, Eigen::Index cols, const char* what) {
    if (m.size() == 0) m.resize(0, cols);
    if (m.cols() != cols) throw ShapeError(std::string("data: ") + what + " has a different feature dimension");
  };
  shape(ds.unpaired_x, dx, "x");
  shape(ds.paired_x, dx, "paired_x");
  shape(ds.test_x, dx, "test_x");
  shape(ds.unpaired_y, dy, "y");
  shape(ds.paired_y, dy, "paired_y");
  shape(ds.test_y, dy, "test_y");
  if (ds.paired_x.rows() != ds.paired_y.rows()) throw DataError("data: paired pools differ in row count");
  if (ds.test_x.rows() != ds.test_y.rows()) throw DataError("data: test pools differ in row count");

  if (!d.truth.empty()) {
    const PairingFile truth = load_pairing(d.truth);
    truth.validate(ds.n_unpaired_x(), ds.n_unpaired_y(), ds.mode);
    if (truth.rows.size() != ds.n_unpaired_x()) throw DataError("data.truth must cover every unpaired x row");
    ds.unpaired_truth.assign(ds.n_unpaired_x(), 0);
    for (const PairingRow& r : truth.rows) ds.unpaired_truth[r.x_index] = r.y_index;
    if (truth.has_labels()) {
      ds.unpaired_labels.assign(ds.n_unpaired_x(), 0);
      for (const PairingRow& r : truth.rows) ds.unpaired_labels[r.x_index] = *r.label;
    }
  }
  return ds;
}

RunArtifacts load_run(const fs::path& run_dir) {
  if (!fs::is_directory(run_dir)) throw ParameterError("run directory '" + run_dir.string() + "' does not exist");
  const RunConfig cfg = load_run_config(run_dir / "config.json");
  RunArtifacts run;
  {
    std::ifstream in = open_in(run_dir / "model.txt");
    run.model = read_model(in);
  }
  if (fs::exists(run_dir / "pi.txt")) {
    std::ifstream in = open_in(run_dir / "pi.txt");
    PiCheckpoint ck = read_pi(in);
    run.pi = ck.pi;
    run.model.pi = ck.pi;
    run.model.pi_iterations = ck.iterations;
  }
  const fs::path data = run_dir / "data";
  const Eigen::Index dx = run.model.theta_x.input_dim();
  const Eigen::Index dy = run.model.theta_y.input_dim();
  run.data.mode = cfg.train.pairing;
  run.data.paired_x = read_pool(data / "paired_x.csv", dx);
  run.data.paired_y = read_pool(data / "paired_y.csv", dy);
  run.data.unpaired_x = read_pool(data / "unpaired_x.csv", dx);
  run.data.unpaired_y = read_pool(data / "unpaired_y.csv", dy);
  run.data.test_x = read_pool(data / "test_x.csv", dx);
  run.data.test_y = read_pool(data / "test_y.csv", dy);
  run.data.test_labels = read_labels(data / "test_labels.csv");
  run.data.unpaired_y_labels = read_labels(data / "unpaired_y_labels.csv");
  return run;
}

Anchors retrieval_anchors(const DmaeModel& model, const SplitDataset& data,
                          const std::optional<RelaxedPermutation>& pi) {
  Matrix ax = data.n_paired() > 0 ? model.embed_x(data.paired_x) : Matrix(0, model.theta_x.latent_dim());
  Matrix ay = data.n_paired() > 0 ? model.embed_y(data.paired_y) : Matrix(0, model.theta_y.latent_dim());
  if (pi && data.n_unpaired_x() > 0) {
    const HardAssignment a = round_assignment(*pi);
    const Matrix zx = model.embed_x(data.unpaired_x);
    const Matrix zy = model.embed_y(data.unpaired_y);
    Matrix mx(ax.rows() + zx.rows(), ax.cols());
    Matrix my(ay.rows() + zx.rows(), ay.cols());
    mx.topRows(ax.rows()) = ax;
    my.topRows(ay.rows()) = ay;
    for (Eigen::Index i = 0; i < zx.rows(); ++i) {
      mx.row(ax.rows() + i) = zx.row(i);
      my.row(ay.rows() + i) = zy.row(static_cast<Eigen::Index>(a.assignment[static_cast<std::size_t>(i)]));
    }
    ax = std::move(mx);
    ay = std::move(my);
  }
  return {ax, ay};
}

std::vector<MetricRecord> compute_metrics(const RunArtifacts& run, const std::optional<PairingFile>& truth,
                                          const std::vector<int>& ks, double classifier_reg) {
  std::vector<MetricRecord> out;
  const DmaeModel& model = run.model;
  const SplitDataset& data = run.data;

  if (data.test_x.rows() > 0) {
    const Matrix zx = model.embed_x(data.test_x);
    const Matrix zy = model.embed_y(data.test_y);
    const Anchors anchors = retrieval_anchors(model, data, run.pi);
    if (anchors.x.rows() > 0) {
      const Matrix px = anchor_profile(zx, anchors.x, model.dependence.sigma2_x);
      const Matrix py = anchor_profile(zy, anchors.y, model.dependence.sigma2_y);
      for (const RetrievalResult& r : retrieval_both(px, py, ks)) {
        for (const auto& [k, v] : r.recall_at) out.push_back({"recall_" + std::string(to_string(r.direction)), k, v});
      }
    }
    if (zx.cols() == zy.cols()) {
      for (const RetrievalResult& r : retrieval_both(zx, zy, ks)) {
        for (const auto& [k, v] : r.recall_at) {
          out.push_back({"latent_recall_" + std::string(to_string(r.direction)), k, v});
        }
      }
    }
  }

  if (!truth) {
    spdlog::warn("no ground-truth pairing available: reporting retrieval metrics only");
    return out;
  }
  if (!run.pi) return out;

  truth->validate(data.n_unpaired_x(), data.n_unpaired_y(), run.pi->mode);
  if (truth->rows.size() != data.n_unpaired_x()) throw DataError("truth must cover every unpaired x row");
  std::vector<std::size_t> truth_map(data.n_unpaired_x(), 0);
  for (const PairingRow& r : truth->rows) truth_map[r.x_index] = r.y_index;
  const HardAssignment assign = round_assignment(*run.pi);
  out.push_back({"match_accuracy", 0, matching_accuracy(assign, truth_map)});

  if (!truth->has_labels()) return out;
  std::vector<int> truth_labels(data.n_unpaired_x(), 0);
  for (const PairingRow& r : truth->rows) truth_labels[r.x_index] = *r.label;
  std::vector<int> class_of_column = data.unpaired_y_labels;
  if (class_of_column.size() != data.n_unpaired_y()) {
    if (run.pi->mode != PairingMode::one_one) return out;
    class_of_column.assign(data.n_unpaired_y(), 0);
    for (const PairingRow& r : truth->rows) class_of_column[r.y_index] = *r.label;
  }
  const MatchReport rep = pi_precision_recall(assign, truth_labels, class_of_column);
  out.push_back({"precision_mean", 0, rep.mean_precision});
  out.push_back({"recall_mean", 0, rep.mean_recall});
  for (const auto& [c, pr] : rep.per_class) {
    out.push_back({"precision_class_" + std::to_string(c), 0, pr.precision});
    out.push_back({"recall_class_" + std::to_string(c), 0, pr.recall});
  }

  if (data.test_labels.size() == static_cast<std::size_t>(data.test_x.rows()) && data.test_x.rows() > 0) {
    std::vector<int> inferred(assign.assignment.size());
    for (std::size_t i = 0; i < inferred.size(); ++i) inferred[i] = class_of_column[assign.assignment[i]];
    const ClassifierParams clf = train_label_classifier(model.embed_x(data.unpaired_x), inferred, classifier_reg);
    out.push_back({"classifier_accuracy", 0, accuracy(classify(clf, model.embed_x(data.test_x)), data.test_labels)});
  }
  return out;
}

int cmd_train(const RunConfig& cfg, const fs::path& out) {
  return guarded([&] {
    const SplitDataset data = build_dataset(cfg);
    cfg.train.validate_for(data);
    fs::create_directories(out);
    write_text(out / "config.json", to_json(cfg).dump(2) + "\n");
    write_data_dir(out / "data", data);
    const std::optional<PairingFile> truth = truth_of(data);
    if (truth) write_pairing(out / "truth.csv", *truth);

    DmaeModel model;
    try {
      model = train(data, cfg.train);
    } catch (const TrainingError& e) {
      write_history_files(out, e.history());
      throw;
    }
    write_history_files(out, model.history);
    {
      std::ofstream m = open_out(out / "model.txt");
      write_model(m, model);
    }
    if (model.pi) {
      std::ofstream p = open_out(out / "pi.txt");
      write_pi(p, *model.pi, model.pi_iterations);
    }
    RunArtifacts run{model, model.pi, data};
    write_metrics(out / "metrics.txt", compute_metrics(run, truth, cfg.eval.ks, cfg.eval.classifier_reg));
    spdlog::info("run written to {}", out.string());
    return int{exit_ok};
  });
}

int cmd_train_seeds(const RunConfig& cfg, const fs::path& out, const std::vector<std::uint64_t>& seeds, int jobs) {
  if (seeds.size() == 1) return cmd_train(with_seed(cfg, seeds.front()), out);
  const std::size_t workers = std::clamp<std::size_t>(static_cast<std::size_t>(std::max(jobs, 1)), 1, seeds.size());
  std::atomic<std::size_t> next{0};
  std::atomic<int> worst{exit_ok};
  auto work = [&] {
    for (std::size_t i = next++; i < seeds.size(); i = next++) {
      const int rc = cmd_train(with_seed(cfg, seeds[i]), out / ("seed_" + std::to_string(seeds[i])));
      int cur = worst.load();
      while (rc > cur && !worst.compare_exchange_weak(cur, rc)) {
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(work);
  work();
  for (std::thread& t : pool) t.join();
  return worst.load();
}

int cmd_match(const fs::path& run_dir, const fs::path& out) {
  return guarded([&] {
    const fs::path pi_path = run_dir / "pi.txt";
    if (!fs::exists(pi_path)) throw ParameterError("no Pi checkpoint in '" + run_dir.string() + "'");
    std::ifstream in = open_in(pi_path);
    const PiCheckpoint ck = read_pi(in);
    write_pairing(out, pairing_from_assignment(round_assignment(ck.pi)));
    return int{exit_ok};
  });
}

int cmd_eval(const fs::path& run_dir, const std::optional<fs::path>& truth_path, const std::vector<int>& ks,
             const fs::path& out) {
  return guarded([&] {
    const RunArtifacts run = load_run(run_dir);
    const RunConfig cfg = load_run_config(run_dir / "config.json");
    std::optional<PairingFile> truth;
    if (truth_path) {
      truth = load_pairing(*truth_path);
    } else if (fs::exists(run_dir / "truth.csv")) {
      truth = load_pairing(run_dir / "truth.csv");
    }
    write_metrics(out, compute_metrics(run, truth, ks, cfg.eval.classifier_reg));
    return int{exit_ok};
  });
}

int cmd_verify(bool inject_fault) {
  SelfCheckOptions opts;
  opts.inject_gradient_fault = inject_fault;
  bool ok = true;
  for (const CheckResult& r : run_selfchecks(opts)) {
    std::cout << (r.passed ? "PASS " : "FAIL ") << r.name << ": " << r.detail << '\n';
    ok = ok && r.passed;
  }
  return ok ? exit_ok : exit_check_failed;
}

int run_cli(int argc, char** argv) {
  CLI::App app{"Deep matching autoencoders: train, match, eval, verify"};
  app.require_subcommand(1);

  std::string config_path, out_path, seeds_text, ks_text = "1,5", truth_path, run_dir;
  int jobs = 1;
  bool inject = false;

  CLI::App* train_cmd = app.add_subcommand("train", "Train a model and write a run directory");
  train_cmd->add_option("--config", config_path, "JSON run configuration")->required();
  train_cmd->add_option("--out", out_path, "Run directory")->required();
  train_cmd->add_option("--seed", seeds_text, "Seed or comma-separated seed list (overrides config)");
  train_cmd->add_option("--jobs", jobs, "Parallel runs for a seed list")->check(CLI::PositiveNumber);

  CLI::App* match_cmd = app.add_subcommand("match", "Round the Pi checkpoint to a hard assignment");
  match_cmd->add_option("run", run_dir, "Run directory")->required();
  match_cmd->add_option("--out", out_path, "Assignment file (default <run>/assignment.csv)");

  CLI::App* eval_cmd = app.add_subcommand("eval", "Compute metrics for a run directory");
  eval_cmd->add_option("run", run_dir, "Run directory")->required();
  eval_cmd->add_option("--truth", truth_path, "Ground-truth pairing file (default <run>/truth.csv)");
  eval_cmd->add_option("--ks", ks_text, "Comma-separated recall cutoffs");
  eval_cmd->add_option("--out", out_path, "Metrics file (default <run>/metrics.txt)");

  CLI::App* verify_cmd = app.add_subcommand("verify", "Run the fast invariant checks");
  verify_cmd->add_flag("--inject-fault", inject, "Corrupt one gradient to exercise the failure path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? exit_ok : exit_usage;
  }

  if (*train_cmd) {
    return guarded([&] {
      const RunConfig cfg = load_run_config(config_path);
      std::vector<std::uint64_t> seeds{cfg.seed};
      if (!seeds_text.empty()) {
        seeds.clear();
        for (int s : parse_int_list(seeds_text, "--seed")) {
          if (s < 0) throw ParameterError("--seed values must be nonnegative");
          seeds.push_back(static_cast<std::uint64_t>(s));
        }
      }
      return cmd_train_seeds(cfg, out_path, seeds, jobs);
    });
  }
  if (*match_cmd) {
    return cmd_match(run_dir, out_path.empty() ? fs::path(run_dir) / "assignment.csv" : fs::path(out_path));
  }
  if (*eval_cmd) {
    return guarded([&] {
      const std::vector<int> ks = parse_int_list(ks_text, "--ks");
      for (int k : ks) {
        if (k < 1) throw ParameterError("--ks values must be at least 1");
      }
      std::optional<fs::path> truth;
      if (!truth_path.empty()) truth = truth_path;
      return cmd_eval(run_dir, truth, ks, out_path.empty() ? fs::path(run_dir) / "metrics.txt" : fs::path(out_path));
    });
  }
  return cmd_verify(inject);
}

}  // namespace dmae::cli
