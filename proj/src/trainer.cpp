#include "svae/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "svae/ops.hpp"

namespace svae {

namespace {

std::mt19937_64 stream(std::uint64_t seed, std::uint32_t id) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), id};
  return std::mt19937_64(seq);
}

double max_abs_grad(const std::vector<Tensor>& params) {
  double out = 0.0;
  for (const auto& p : params) {
    for (double g : p.grad()) out = std::max(out, std::abs(g));
  }
  return out;
}

void zero_grads(const std::vector<Tensor>& params) {
  for (auto p : params) p.zero_grad();
}

void write_abort_dump(const std::filesystem::path& path, const Trainer& trainer,
                      std::size_t epoch, std::size_t batch, double alpha, const std::string& what) {
  if (path.empty()) return;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  out.precision(17);
  out << "error " << what << '\n'
      << "epoch " << epoch << '\n'
      << "batch " << batch << '\n'
      << "alpha " << alpha << '\n'
      << "main_steps " << trainer.main_optimizer().step_count() << '\n'
      << "svae_steps " << trainer.svae_optimizer().step_count() << '\n';
  for (const auto& [name, tensor] : trainer.model().named_parameters()) {
    double norm2 = 0.0;
    std::size_t non_finite = 0;
    for (double v : tensor.data()) {
      if (std::isfinite(v)) {
        norm2 += v * v;
      } else {
        ++non_finite;
      }
    }
    out << "param " << name << " l2 " << std::sqrt(norm2) << " non_finite " << non_finite << '\n';
  }
}

}  // namespace

std::string to_string(Method method) {
  switch (method) {
    case Method::cel_baseline: return "cel-baseline";
    case Method::focal_baseline: return "focal-baseline";
    case Method::svae_reweight: return "svae-reweight";
  }
  return "cel-baseline";
}

Method parse_method(const std::string& text) {
  if (text == "cel-baseline" || text == "cel") return Method::cel_baseline;
  if (text == "focal-baseline" || text == "focal") return Method::focal_baseline;
  if (text == "svae-reweight" || text == "svae") return Method::svae_reweight;
  throw std::invalid_argument("unknown method '" + text + "'");
}

Trainer::Trainer(const TrainConfig& config)
    : config_(config),
      model_(config.dims, config.method == Method::svae_reweight, config.seed),
      main_opt_(model_.main_parameters(), config.adam),
      svae_opt_(model_.svae_parameters(), config.adam),
      shuffle_rng_(stream(config.seed, 10)),
      eps_rng_(stream(config.seed, 11)) {
  if (config.batch_size == 0) throw std::invalid_argument("trainer: batch_size must be positive");
  if (config.method == Method::focal_baseline && config.task != Task::multilabel) {
    throw std::invalid_argument("trainer: focal-baseline is defined for multilabel only");
  }
  if (config.fixed_alpha && !(*config.fixed_alpha >= 0.0 && *config.fixed_alpha <= 1.0)) {
    throw std::invalid_argument("trainer: fixed alpha outside [0,1]");
  }
  config_.alpha.total_epochs = config.epochs;
  static_cast<void>(config_.alpha.decay_rate());  // validates the floor
}

double Trainer::alpha_for(std::size_t epoch_index, std::size_t batch_index,
                          std::size_t batches) const {
  if (config_.fixed_alpha) return *config_.fixed_alpha;
  double at = static_cast<double>(epoch_index);
  if (config_.alpha_granularity == AlphaGranularity::step && batches > 0) {
    at += static_cast<double>(batch_index) / static_cast<double>(batches);
  }
  return config_.alpha.at(std::min(at, static_cast<double>(config_.alpha.total_epochs)));
}

Tensor Trainer::task_loss(const Tensor& logits, const Batch& batch, bool allow_focal) const {
  if (batch.task == Task::segmentation) return loss::ce_pixelwise(logits, batch.pixel_targets);
  if (allow_focal && config_.method == Method::focal_baseline) {
    return loss::focal_multilabel(logits, batch.multilabel_targets, config_.focal_gamma);
  }
  return loss::bce_multilabel(logits, batch.multilabel_targets);
}

StepRecord Trainer::train_step(const Batch& batch, double alpha, bool probe_routing) {
  if (batch.size() == 0) throw std::invalid_argument("train_step: empty batch");
  if (batch.task != config_.task) throw std::invalid_argument("train_step: batch task mismatch");
  const bool with_svae = model_.has_svae();
  const std::size_t b = batch.size();

  StepRecord record;
  record.ids = batch.ids;
  record.rows = batch.rows;

  Tape tape;
  const MainForward main = model_.forward_main(batch.inputs);
  const Tensor main_loss = task_loss(main.logits, batch, true);

  Tensor eps;
  Tensor svae_total;
  if (with_svae) {
    const SvaeForward branch = model_.forward_svae(main.features, eps_rng_, config_.isolate_svae);
    eps = branch.eps;
    const Tensor svae_task = task_loss(branch.logits, batch, false);
    const Tensor reconstruction = loss::mse_features(branch.reconstruction, main.features);
    const Tensor kl = loss::kl_gaussian(branch.mu, branch.logvar, config_.kl_sign);
    svae_total = loss::svae_loss(reconstruction, svae_task, kl, config_.svae_weights);
    const Tensor& gap_input = config_.gap_source == GapSource::svae_task ? svae_task : svae_total;
    record.weights = reweight::compute_batch_weights(main_loss.data(), gap_input.data(), alpha);
    record.svae_total = svae_total.to_vector();
  } else {
    record.weights.main_loss = main_loss.to_vector();
    record.weights.gap.assign(b, 0.0);
    record.weights.weight.assign(b, 1.0);
    record.weights.alpha = alpha;
  }
  const Tensor w(Shape{b}, record.weights.weight);

  const Tensor objective_main = mean(w * main_loss);
  record.objective_main = objective_main.item();

  if (with_svae) {
    const Tensor objective_svae = mean(w * svae_total);
    record.objective_svae = objective_svae.item();

    if (probe_routing) {
      const auto main_params = model_.main_parameters();
      const auto svae_params = model_.svae_parameters();
      auto probe = [&](bool svae_objective) {
        Tape probe_tape;
        const MainForward m = model_.forward_main(batch.inputs);
        Tensor objective;
        if (svae_objective) {
          const SvaeForward s = model_.forward_svae(m.features, eps, config_.isolate_svae);
          const Tensor total = loss::svae_loss(
              loss::mse_features(s.reconstruction, m.features), task_loss(s.logits, batch, false),
              loss::kl_gaussian(s.mu, s.logvar, config_.kl_sign), config_.svae_weights);
          objective = mean(w * total);
        } else {
          objective = mean(w * task_loss(m.logits, batch, true));
        }
        probe_tape.backward(objective);
        const double leak = max_abs_grad(svae_objective ? main_params : svae_params);
        zero_grads(main_params);
        zero_grads(svae_params);
        return leak;
      };
      record.svae_grad_on_main = probe(true);
      record.main_grad_on_svae = probe(false);
    }

    // Parameter sets are disjoint and the branch input is detached, so one
    // pass over the sum delivers each objective's gradient to its own set.
    tape.backward(objective_main + objective_svae);
    main_opt_.step();
    svae_opt_.step();
  } else {
    tape.backward(objective_main);
    main_opt_.step();
  }
  return record;
}

TrainResult train(const TrainConfig& config, const LabeledData& train_data,
                  const LabeledData& validation, const LabeledData& test, const TrainHooks& hooks) {
  if (train_data.size() == 0 || validation.size() == 0 || test.size() == 0) {
    throw std::invalid_argument("train: empty split");
  }
  for (const auto* d : {&train_data, &validation, &test}) {
    if (d->task != config.task || d->features != config.dims.input ||
        d->classes != config.dims.classes) {
      throw std::invalid_argument("train: split does not match the configured task/dims");
    }
  }
  const bool have_flags = !hooks.train_noise_flags.empty();
  if (have_flags && hooks.train_noise_flags.size() != train_data.size()) {
    throw std::invalid_argument("train: noise flag count differs from training size");
  }

  Trainer trainer(config);
  TrainResult result;
  result.best_model = trainer.model().clone();
  result.best_validation = evaluate(trainer.model(), validation).primary();
  result.best_epoch = 0;

  const std::size_t n = train_data.size();
  const std::size_t batches = (n + config.batch_size - 1) / config.batch_size;
  std::vector<std::size_t> order(n);
  for (std::size_t e = 0; e < config.epochs; ++e) {
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), trainer.shuffle_rng());

    EpochReport report;
    report.epoch = e + 1;
    report.alpha = trainer.alpha_for(e, 0, batches);
    double noisy_weight = 0.0, clean_weight = 0.0;
    std::size_t noisy_seen = 0, clean_seen = 0;
    double main_sum = 0.0, main_weighted = 0.0, svae_sum = 0.0, svae_weighted = 0.0;

    for (std::size_t k = 0; k < batches; ++k) {
      const std::span<const std::size_t> rows =
          std::span<const std::size_t>(order).subspan(k * config.batch_size,
                                                      std::min(config.batch_size, n - k * config.batch_size));
      const double alpha = trainer.alpha_for(e, k, batches);
      StepRecord step;
      try {
        step = trainer.train_step(make_batch(train_data, rows), alpha, hooks.probe_routing);
      } catch (const NumericError& err) {
        write_abort_dump(hooks.abort_dump, trainer, e + 1, k, alpha, err.what());
        throw TrainingAborted("epoch " + std::to_string(e + 1) + " batch " + std::to_string(k) +
                              ": " + err.what());
      }
      const auto& bw = step.weights;
      for (std::size_t i = 0; i < rows.size(); ++i) {
        main_sum += bw.main_loss[i];
        main_weighted += bw.weight[i] * bw.main_loss[i];
        if (!step.svae_total.empty()) {
          svae_sum += step.svae_total[i];
          svae_weighted += bw.weight[i] * step.svae_total[i];
        }
        if (have_flags) {
          if (hooks.train_noise_flags[rows[i]]) {
            noisy_weight += bw.weight[i];
            ++noisy_seen;
          } else {
            clean_weight += bw.weight[i];
            ++clean_seen;
          }
        }
      }
      if (hooks.on_step) hooks.on_step(e + 1, k, step);
    }
    const double count = static_cast<double>(n);
    report.mean_main_loss = main_sum / count;
    report.mean_weighted_main_loss = main_weighted / count;
    report.mean_svae_loss = svae_sum / count;
    report.mean_weighted_svae_loss = svae_weighted / count;
    if (noisy_seen) report.mean_weight_noisy = noisy_weight / static_cast<double>(noisy_seen);
    if (clean_seen) report.mean_weight_clean = clean_weight / static_cast<double>(clean_seen);
    report.validation_metric = evaluate(trainer.model(), validation).primary();
    if (report.validation_metric > result.best_validation) {
      result.best_validation = report.validation_metric;
      result.best_epoch = e + 1;
      result.best_model = trainer.model().clone();
    }
    result.epochs.push_back(report);
    if (hooks.on_epoch) hooks.on_epoch(report);
  }
  result.test = evaluate(result.best_model, test);
  return result;
}

}  // namespace svae
