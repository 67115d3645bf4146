#pragma once

#include <filesystem>
#include <string>

#include "gdpr/active_learning.hpp"
#include "gdpr/classifier.hpp"
#include "gdpr/embeddings.hpp"

namespace gdpr {

// Artifact locations. Relative paths are resolved against the working
// directory of the process.
struct PathsConfig {
  std::filesystem::path documents = "documents.jsonl";
  std::filesystem::path embeddings = "embeddings";
  std::filesystem::path model = "model";
  std::filesystem::path labels = "labels";
  std::filesystem::path state = "iteration_state.json";
  std::filesystem::path reports = "reports";
  std::filesystem::path static_dir;  // UI bundle; empty = no static files
  friend bool operator==(const PathsConfig&, const PathsConfig&) = default;
};

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  int page_size = 20;
  bool show_hints = false;  // model hints in queue entries
  friend bool operator==(const ServiceConfig&, const ServiceConfig&) = default;
};

struct RunConfig {
  PathsConfig paths;
  EmbeddingConfig embedding;
  ClassifierConfig classifier;
  ActiveLearningConfig active_learning;
  ServiceConfig service;
  double tau = 0.5;  // compliance evidence threshold

  void validate() const;  // ConfigError
};

// INI/TOML-style text: [paths], [embedding], [classifier], [active_learning],
// [service] and [compliance] sections of `key = value` lines. Unknown keys and
// malformed values throw ConfigError.
RunConfig parse_run_config(const std::string& text);

// "default" (or an empty path) yields the built-in defaults.
RunConfig load_run_config(const std::filesystem::path& file);

// Canonical text form; parse_run_config(format_run_config(c)) == c.
std::string format_run_config(const RunConfig& config);

}  // namespace gdpr
