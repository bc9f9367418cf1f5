#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "svae/adam.hpp"
#include "svae/data.hpp"
#include "svae/losses.hpp"
#include "svae/metrics.hpp"
#include "svae/model.hpp"
#include "svae/reweight.hpp"

namespace svae {

enum class Method { cel_baseline, focal_baseline, svae_reweight };

std::string to_string(Method method);
/// Accepts the long names and the short forms cel / focal / svae.
Method parse_method(const std::string& text);

enum class AlphaGranularity { epoch, step };

/// Which SVAE-side loss is compared against the main loss when computing gaps.
enum class GapSource {
  svae_task,   // task loss of the SVAE head alone
  svae_total,  // the full composite (reconstruction + task + kl)
};

struct TrainConfig {
  Task task = Task::multilabel;
  Method method = Method::svae_reweight;
  ModelDims dims;
  std::size_t epochs = 100;
  std::size_t batch_size = 64;
  AdamOptions adam;
  reweight::AlphaSchedule alpha;  // total_epochs is taken from `epochs`
  AlphaGranularity alpha_granularity = AlphaGranularity::epoch;
  std::optional<double> fixed_alpha;  // overrides the schedule when set
  GapSource gap_source = GapSource::svae_task;
  loss::KlSign kl_sign = loss::KlSign::standard;
  loss::SvaeLossWeights svae_weights;
  double focal_gamma = 2.0;
  bool isolate_svae = true;
  std::uint64_t seed = 1;
};

struct StepRecord {
  reweight::BatchWeights weights;
  std::vector<std::int32_t> ids;
  std::vector<std::size_t> rows;
  std::vector<double> svae_total;  // per-sample composite SVAE loss
  double objective_main = 0.0;  // mean_i w_i L_i
  double objective_svae = 0.0;  // mean_i w_i L_i^SVAE
  // Largest |grad| a probe backward of one objective left on the other
  // parameter set. Populated only when routing probes are enabled.
  std::optional<double> svae_grad_on_main;
  std::optional<double> main_grad_on_svae;
};

struct EpochReport {
  std::size_t epoch = 0;
  double alpha = 0.0;
  double mean_main_loss = 0.0;
  double mean_weighted_main_loss = 0.0;
  double mean_svae_loss = 0.0;
  double mean_weighted_svae_loss = 0.0;
  double validation_metric = 0.0;
  std::optional<double> mean_weight_noisy;
  std::optional<double> mean_weight_clean;
};

class TrainingAborted : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One model plus the two optimizers. Main parameters (encoder, head) and SVAE
/// parameters each get their own Adam state.
class Trainer {
 public:
  explicit Trainer(const TrainConfig& config);

  /// Forward both heads, weight the per-sample losses, backpropagate each
  /// objective into its own parameter set and take one Adam step per set.
  StepRecord train_step(const Batch& batch, double alpha, bool probe_routing = false);

  double alpha_for(std::size_t epoch_index, std::size_t batch_index, std::size_t batches) const;

  Model& model() { return model_; }
  const Model& model() const { return model_; }
  const TrainConfig& config() const { return config_; }
  const Adam& main_optimizer() const { return main_opt_; }
  const Adam& svae_optimizer() const { return svae_opt_; }
  std::mt19937_64& shuffle_rng() { return shuffle_rng_; }

 private:
  Tensor task_loss(const Tensor& logits, const Batch& batch, bool allow_focal) const;

  TrainConfig config_;
  Model model_;
  Adam main_opt_;
  Adam svae_opt_;
  std::mt19937_64 shuffle_rng_;
  std::mt19937_64 eps_rng_;
};

struct TrainHooks {
  std::function<void(std::size_t epoch, std::size_t batch, const StepRecord&)> on_step;
  std::function<void(const EpochReport&)> on_epoch;
  // Reporting only: used to split mean weights by flag in EpochReport.
  std::span<const std::uint8_t> train_noise_flags;
  bool probe_routing = false;
  // Written on a numeric failure before TrainingAborted is thrown.
  std::filesystem::path abort_dump;
};

struct TrainResult {
  std::vector<EpochReport> epochs;
  Model best_model;
  std::size_t best_epoch = 0;  // 0 means the initial parameters
  double best_validation = 0.0;
  Metrics test;
};

/// Runs `config.epochs` epochs of shuffled mini-batches, tracks the best
/// validation metric (epoch 0 being the initial model) and evaluates that
/// snapshot once on the test split.
TrainResult train(const TrainConfig& config, const LabeledData& train_data,
                  const LabeledData& validation, const LabeledData& test,
                  const TrainHooks& hooks = {});

}  // namespace svae
