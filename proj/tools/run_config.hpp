#pragma once

#include "dmae/dataio.hpp"
#include "dmae/trainer.hpp"

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

namespace dmae::cli {

struct DataSection {
  // "synthetic" or "files".
  std::string source = "synthetic";
  SyntheticSpec synthetic;
  // Non-zero selects the many-one generator with this many categories.
  std::size_t categories = 0;

  // Feature files (source = "files"). x / y are the unpaired pools.
  std::string x;
  std::string y;
  std::string paired_x;
  std::string paired_y;
  std::string test_x;
  std::string test_y;
  // Optional pairing file giving the hidden x -> y alignment of the unpaired pools.
  std::string truth;
  bool has_header = false;
};

struct EvalSection {
  std::vector<int> ks{1, 5};
  double classifier_reg = 1e-2;
};

struct RunConfig {
  std::uint64_t seed = 0;
  DataSection data;
  SplitFractions split;
  TrainConfig train;
  EvalSection eval;
};

// Parses and validates; unknown keys raise ParameterError naming the key path.
RunConfig parse_run_config(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);

// Fully resolved echo with every default spelled out.
nlohmann::json to_json(const RunConfig& cfg);

// Seed-dependent fields follow the top-level seed.
RunConfig with_seed(RunConfig cfg, std::uint64_t seed);

std::vector<int> parse_int_list(const std::string& text, const char* what);

}  // namespace dmae::cli
