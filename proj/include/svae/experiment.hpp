#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "svae/config.hpp"
#include "svae/data.hpp"

namespace svae {

/// Clean dataset (generated or loaded), split 52/24/24, noise injected into
/// the training split only.
Splits prepare_splits(const ExperimentConfig& config);

struct ResultRow {
  Task task = Task::multilabel;
  Method method = Method::svae_reweight;
  double ratio = 0.0;
  std::uint64_t seed = 0;
  std::string status = "ok";  // ok | failed
  std::optional<double> metric;  // primary test metric of the selected checkpoint
  std::optional<double> mean_weight_noisy;  // final epoch
  std::optional<double> mean_weight_clean;
  double runtime_seconds = 0.0;
  std::string run_dir;
  std::string error;

  /// Equality on everything except runtime.
  bool same_result(const ResultRow& other) const;
};

/// Trains one configuration. With a non-empty `run_dir` the directory gets
/// config.txt, epochs.tsv, result.tsv, the best checkpoint (model.*) and,
/// when `config.audit` is set, audit.tsv. Failures are caught and reported
/// in the row (status "failed"); nothing is thrown for a failed run.
ResultRow run_experiment(const ExperimentConfig& config, const std::filesystem::path& run_dir = {});

struct SweepSpec {
  std::vector<Task> tasks;
  std::vector<Method> methods;
  std::vector<double> ratios;
  std::vector<std::uint64_t> seeds;
  std::size_t jobs = 1;
};

std::size_t sweep_size(const SweepSpec& spec);

/// One run per (task, method, ratio, seed), each in its own directory under
/// `out_dir` (when non-empty). Rows come back in grid order regardless of
/// `jobs`; results.tsv is appended by a single writer as runs finish and
/// rewritten in grid order at the end.
std::vector<ResultRow> run_sweep(const ExperimentConfig& base, const SweepSpec& spec,
                                 const std::filesystem::path& out_dir,
                                 const std::function<void(const ResultRow&)>& on_row = {});

std::string rows_header();
std::string format_row(const ResultRow& row);
void write_rows(const std::filesystem::path& path, const std::vector<ResultRow>& rows);
std::vector<ResultRow> read_rows(const std::filesystem::path& path);

struct AuditEntry {
  std::int32_t id = 0;
  double mean_weight = 0.0;
  std::size_t observations = 0;
  std::optional<bool> noisy;
};

struct AuditReport {
  std::vector<std::size_t> epochs;  // epochs averaged over
  std::vector<AuditEntry> ranking;  // ascending mean weight, ties by id
  std::size_t flagged = 0;
  std::optional<double> precision;  // precision@flagged; undefined without flags
};

/// Ranks samples by their mean weight over the last `k` logged epochs. The
/// lowest `flagged` entries are scored against the noise flags.
AuditReport audit_run(const std::filesystem::path& run_dir, std::size_t k = 10);
void write_audit(std::ostream& out, const AuditReport& report);

struct SummaryRow {
  Task task = Task::multilabel;
  Method method = Method::svae_reweight;
  double ratio = 0.0;
  std::size_t runs = 0;
  double mean = 0.0;
  double stddev = 0.0;  // population
};

/// Mean and population std per (task, method, ratio) over successful rows,
/// ordered by task, ratio, then descending mean.
std::vector<SummaryRow> summarize(const std::vector<ResultRow>& rows);

/// summary.txt (aligned table) plus series_<task>_<method>.tsv per curve.
void write_report(const std::filesystem::path& out_dir, const std::vector<SummaryRow>& summary);
std::string format_summary(const std::vector<SummaryRow>& summary);

}  // namespace svae
