#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "svae/data.hpp"
#include "svae/trainer.hpp"

namespace svae {

/// Everything a run depends on. Serialized as `key = value` lines; `#`
/// starts a comment. Unknown keys are errors.
struct ExperimentConfig {
  Task task = Task::multilabel;
  Method method = Method::svae_reweight;
  double noise_ratio = 0.0;
  std::uint64_t seed = 1;  // data, split, noise, init and shuffling all derive from it

  // data
  std::string dataset;  // stem of a saved dataset; empty generates one
  std::size_t samples = 2000;
  std::size_t features = 20;
  std::size_t classes = 6;
  std::size_t height = 1;
  std::size_t width = 1;
  MultiLabelShape multilabel_shape;
  SegmentationShape segmentation_shape;

  // model
  std::vector<std::size_t> hidden;
  std::size_t feature_dim = 64;
  std::size_t latent_dim = 16;

  // optimization
  std::size_t epochs = 100;
  std::size_t batch_size = 64;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;

  // reweighting
  double alpha_floor = 0.01;
  AlphaGranularity alpha_granularity = AlphaGranularity::epoch;
  std::optional<double> fixed_alpha;
  GapSource gap_source = GapSource::svae_task;
  loss::KlSign kl_sign = loss::KlSign::standard;
  double weight_reconstruction = 1.0;
  double weight_task = 1.0;
  double weight_kl = 1.0;
  double focal_gamma = 2.0;
  bool isolate_svae = true;

  // output
  std::string output_dir = "runs";
  bool audit = false;          // per-sample weight log (audit.tsv)
  bool probe_routing = false;  // extra probe backward passes every step

  bool operator==(const ExperimentConfig&) const;
};

/// Defaults with the desk-scale data dimensions of `task`
/// (multilabel N=2000 F=20 C=6; segmentation N=500 8x8 F=8 C=5).
ExperimentConfig default_config(Task task);

/// Switches the task, resetting the data dimensions to that task's
/// defaults when the task actually changes. Other fields are kept.
ExperimentConfig with_task(const ExperimentConfig& base, Task task);

std::string serialize(const ExperimentConfig& config);

/// Parses `key = value` text, then applies `overrides` in order. Fields not
/// mentioned keep the defaults of the final task.
ExperimentConfig parse_config(const std::string& text,
                              const std::vector<std::pair<std::string, std::string>>& overrides = {});

/// Splits "key=value".
std::pair<std::string, std::string> parse_override(const std::string& text);

void apply_setting(ExperimentConfig& config, const std::string& key, const std::string& value);

ExperimentConfig load_config(const std::filesystem::path& path,
                             const std::vector<std::pair<std::string, std::string>>& overrides = {});
void save_config(const std::filesystem::path& path, const ExperimentConfig& config);

TrainConfig to_train_config(const ExperimentConfig& config);

/// Shortest text that parses back to the same double.
std::string format_double(double value);

}  // namespace svae
