#pragma once

#include "run_config.hpp"

#include "dmae/eval.hpp"
#include "dmae/trainer.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace dmae::cli {

enum ExitCode : int { exit_ok = 0, exit_check_failed = 1, exit_usage = 2, exit_numerical = 3 };

// One line of the metrics file: name, K (0 when not applicable), value.
struct MetricRecord {
  std::string name;
  int k = 0;
  double value = 0.0;
};

void write_metrics(const std::filesystem::path& path, const std::vector<MetricRecord>& metrics);
std::vector<MetricRecord> read_metrics(const std::filesystem::path& path);
std::optional<double> find_metric(const std::vector<MetricRecord>& metrics, const std::string& name, int k = 0);

// Builds the split dataset described by the config (synthetic or files).
SplitDataset build_dataset(const RunConfig& cfg);

// Everything the eval step needs, as stored in a run directory.
struct RunArtifacts {
  DmaeModel model;
  std::optional<RelaxedPermutation> pi;
  SplitDataset data;
};

RunArtifacts load_run(const std::filesystem::path& run_dir);

// Latent pairs used as anchors for cross-view retrieval: paired rows and,
// when Pi exists, unpaired rows matched by the rounded Pi.
struct Anchors {
  Matrix x;
  Matrix y;
};
Anchors retrieval_anchors(const DmaeModel& model, const SplitDataset& data,
                          const std::optional<RelaxedPermutation>& pi);

// Recall@K both ways on the test pool, Pi accuracy and per-class precision /
// recall against `truth`, and classifier accuracy when labels exist.
std::vector<MetricRecord> compute_metrics(const RunArtifacts& run, const std::optional<PairingFile>& truth,
                                          const std::vector<int>& ks, double classifier_reg);

int cmd_train(const RunConfig& cfg, const std::filesystem::path& out);
int cmd_train_seeds(const RunConfig& cfg, const std::filesystem::path& out,
                    const std::vector<std::uint64_t>& seeds, int jobs);
int cmd_match(const std::filesystem::path& run_dir, const std::filesystem::path& out);
int cmd_eval(const std::filesystem::path& run_dir, const std::optional<std::filesystem::path>& truth,
             const std::vector<int>& ks, const std::filesystem::path& out);
int cmd_verify(bool inject_fault);

// Full command-line entry point; returns the process exit code.
int run_cli(int argc, char** argv);

}  // namespace dmae::cli
