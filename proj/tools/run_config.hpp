#pragma once

// Flat key=value run configuration shared by every wsgic command.

#include <filesystem>
#include <string>
#include <vector>

#include "wsgic/training.hpp"

namespace wsgic::cli {

struct RunConfig {
  CorpusSpec corpus;
  TrainConfig train;
  double rho = kDefaultRho;
  std::string split = "test";
  std::vector<std::string> groundable_words = shape_nouns();
  AblationAxes axes;

  // Throws ConfigError for unknown keys or unparsable values.
  void set(const std::string& key, const std::string& value);
  std::string get(const std::string& key) const;

  // "key=value" per line, sorted by key, covering every known key.
  std::string to_text() const;

  // Blank lines and lines starting with '#' are skipped.
  void apply_text(const std::string& text);
  void apply_file(const std::filesystem::path& path);
  // One "key=value" override.
  void apply_assignment(const std::string& assignment);

  EvalOptions eval_options() const;
  // The training config with image size and relation count taken from the corpus.
  TrainConfig train_for(const Corpus& corpus) const;

  void validate() const;
};

const std::vector<std::string>& config_keys();

}  // namespace wsgic::cli
