#include "svae/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "svae/checkpoint.hpp"

namespace svae {

namespace {

std::string opt_str(const std::optional<double>& v) { return v ? format_double(*v) : "NA"; }

std::optional<double> parse_opt(const std::string& s) {
  if (s == "NA") return std::nullopt;
  return std::stod(s);
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, '\t')) out.push_back(cell);
  if (!line.empty() && line.back() == '\t') out.emplace_back();
  return out;
}

std::string one_line(std::string s) {
  std::replace(s.begin(), s.end(), '\t', ' ');
  std::replace(s.begin(), s.end(), '\n', ' ');
  return s;
}

NoiseMode noise_mode_for(Task task) {
  return task == Task::multilabel ? NoiseMode::multilabel_flip : NoiseMode::segmentation_region;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.precision(17);
  return out;
}

}  // namespace

Splits prepare_splits(const ExperimentConfig& config) {
  Dataset clean;
  if (!config.dataset.empty()) {
    clean = load_dataset(config.dataset);
    const auto& d = clean.data;
    if (d.task != config.task || d.features != config.features || d.classes != config.classes ||
        d.height != config.height || d.width != config.width) {
      throw std::invalid_argument("dataset " + config.dataset +
                                  " does not match the configured task and dimensions");
    }
  } else if (config.task == Task::multilabel) {
    clean = gen_multilabel(config.samples, config.features, config.classes, config.seed,
                           config.multilabel_shape);
  } else {
    clean = gen_segmentation(config.samples, config.height, config.width, config.features,
                             config.classes, config.seed, config.segmentation_shape);
  }
  Splits s = split(clean, config.seed);
  s.train = inject_noise(s.train, {config.noise_ratio, noise_mode_for(config.task), config.seed});
  return s;
}

bool ResultRow::same_result(const ResultRow& o) const {
  return task == o.task && method == o.method && ratio == o.ratio && seed == o.seed &&
         status == o.status && metric == o.metric && mean_weight_noisy == o.mean_weight_noisy &&
         mean_weight_clean == o.mean_weight_clean && run_dir == o.run_dir && error == o.error;
}

ResultRow run_experiment(const ExperimentConfig& config, const std::filesystem::path& run_dir) {
  const auto start = std::chrono::steady_clock::now();
  ResultRow row;
  row.task = config.task;
  row.method = config.method;
  row.ratio = config.noise_ratio;
  row.seed = config.seed;
  row.run_dir = run_dir.string();
  const bool artifacts = !run_dir.empty();
  try {
    std::ofstream epochs_out, audit_out;
    if (artifacts) {
      std::filesystem::create_directories(run_dir);
      save_config(run_dir / "config.txt", config);
      epochs_out = open_out(run_dir / "epochs.tsv");
      epochs_out << "epoch\talpha\tmean_main_loss\tmean_weighted_main_loss\tmean_svae_loss\t"
                    "mean_weighted_svae_loss\tvalidation_metric\tmean_weight_noisy\tmean_weight_clean\n";
      if (config.audit) {
        audit_out = open_out(run_dir / "audit.tsv");
        audit_out << "epoch\tbatch\tsample_id\tmain_loss\tsvae_loss\tgap\tweight\tis_noisy\n";
      }
    }

    const Splits splits = prepare_splits(config);
    const auto& flags = splits.train.noisy;
    const auto& train_data = splits.train.data;
    TrainHooks hooks;
    hooks.train_noise_flags = flags;
    hooks.probe_routing = config.probe_routing;
    if (artifacts) hooks.abort_dump = run_dir / "abort.txt";
    std::string routing_error;
    hooks.on_step = [&](std::size_t epoch, std::size_t batch, const StepRecord& r) {
      if (config.probe_routing && r.svae_grad_on_main &&
          (*r.svae_grad_on_main != 0.0 || *r.main_grad_on_svae != 0.0) && routing_error.empty()) {
        routing_error = "routing probe saw cross-set gradient at epoch " + std::to_string(epoch);
      }
      if (!audit_out.is_open()) return;
      const auto& w = r.weights;
      for (std::size_t i = 0; i < r.ids.size(); ++i) {
        audit_out << epoch << '\t' << batch << '\t' << r.ids[i] << '\t' << w.main_loss[i] << '\t';
        if (w.svae_loss.empty()) {
          audit_out << "NA";
        } else {
          audit_out << w.svae_loss[i];
        }
        audit_out << '\t' << w.gap[i] << '\t' << w.weight[i] << '\t' << int(flags[r.rows[i]]) << '\n';
      }
    };
    std::optional<EpochReport> last;
    hooks.on_epoch = [&](const EpochReport& e) {
      last = e;
      if (!epochs_out.is_open()) return;
      epochs_out << e.epoch << '\t' << e.alpha << '\t' << e.mean_main_loss << '\t'
                 << e.mean_weighted_main_loss << '\t' << e.mean_svae_loss << '\t'
                 << e.mean_weighted_svae_loss << '\t' << e.validation_metric << '\t'
                 << opt_str(e.mean_weight_noisy) << '\t' << opt_str(e.mean_weight_clean) << '\n';
      epochs_out.flush();
    };

    const TrainResult result = train(to_train_config(config), train_data, splits.validation.data,
                                     splits.test.data, hooks);
    if (!routing_error.empty()) throw std::runtime_error(routing_error);
    row.metric = result.test.primary();
    if (last) {
      row.mean_weight_noisy = last->mean_weight_noisy;
      row.mean_weight_clean = last->mean_weight_clean;
    }
    if (artifacts) save_checkpoint(run_dir / "model", result.best_model.named_parameters());
  } catch (const std::exception& e) {
    row.status = "failed";
    row.error = one_line(e.what());
    row.metric.reset();
  }
  row.runtime_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (artifacts) {
    try {
      write_rows(run_dir / "result.tsv", {row});
    } catch (const std::exception& e) {
      row.status = "failed";
      row.error = one_line(e.what());
    }
  }
  return row;
}

std::size_t sweep_size(const SweepSpec& s) {
  return s.tasks.size() * s.methods.size() * s.ratios.size() * s.seeds.size();
}

std::vector<ResultRow> run_sweep(const ExperimentConfig& base, const SweepSpec& spec,
                                 const std::filesystem::path& out_dir,
                                 const std::function<void(const ResultRow&)>& on_row) {
  struct Job {
    ExperimentConfig config;
    std::filesystem::path dir;
    std::string setup_error;
  };
  std::vector<Job> jobs;
  for (Task task : spec.tasks) {
    for (Method method : spec.methods) {
      for (double ratio : spec.ratios) {
        for (auto seed : spec.seeds) {
          Job job;
          job.config = base;
          job.config.method = method;
          try {
            job.config = with_task(job.config, task);
          } catch (const std::exception& e) {
            job.config.task = task;
            job.setup_error = e.what();
          }
          job.config.noise_ratio = ratio;
          job.config.seed = seed;
          if (!out_dir.empty()) {
            job.dir = out_dir / to_string(task) / to_string(method) /
                      ("rho" + format_double(ratio) + "_seed" + std::to_string(seed));
          }
          jobs.push_back(std::move(job));
        }
      }
    }
  }

  std::vector<ResultRow> rows(jobs.size());
  std::mutex writer;
  std::ofstream log;
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    save_config(out_dir / "base_config.txt", base);
    log = open_out(out_dir / "results.tsv");
    log << rows_header() << '\n';
  }
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= jobs.size()) return;
      ResultRow row;
      if (jobs[i].setup_error.empty()) {
        row = run_experiment(jobs[i].config, jobs[i].dir);
      } else {
        row.task = jobs[i].config.task;
        row.method = jobs[i].config.method;
        row.ratio = jobs[i].config.noise_ratio;
        row.seed = jobs[i].config.seed;
        row.status = "failed";
        row.error = one_line(jobs[i].setup_error);
        row.run_dir = jobs[i].dir.string();
      }
      std::lock_guard<std::mutex> lock(writer);
      rows[i] = row;
      if (log.is_open()) {
        log << format_row(row) << '\n';
        log.flush();
      }
      if (on_row) on_row(row);
    }
  };
  const std::size_t threads = std::max<std::size_t>(1, std::min(spec.jobs, jobs.size()));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (log.is_open()) {
    log.close();
    write_rows(out_dir / "results.tsv", rows);
  }
  return rows;
}

std::string rows_header() {
  return "task\tmethod\tratio\tseed\tstatus\tmetric\tmean_weight_noisy\tmean_weight_clean\t"
         "runtime_seconds\trun_dir\terror";
}

std::string format_row(const ResultRow& r) {
  std::string error = r.error.empty() ? "-" : r.error;
  for (char& c : error) {
    if (c == '\t' || c == '\n' || c == '\r') c = ' ';
  }
  std::ostringstream out;
  out << to_string(r.task) << '\t' << to_string(r.method) << '\t' << format_double(r.ratio) << '\t'
      << r.seed << '\t' << r.status << '\t' << opt_str(r.metric) << '\t'
      << opt_str(r.mean_weight_noisy) << '\t' << opt_str(r.mean_weight_clean) << '\t'
      << std::fixed << std::setprecision(3) << r.runtime_seconds << '\t'
      << (r.run_dir.empty() ? "-" : r.run_dir) << '\t' << error;
  return out.str();
}

void write_rows(const std::filesystem::path& path, const std::vector<ResultRow>& rows) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto out = open_out(path);
  out << rows_header() << '\n';
  for (const auto& r : rows) out << format_row(r) << '\n';
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

std::vector<ResultRow> read_rows(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != rows_header()) {
    throw std::runtime_error(path.string() + ": not a result table");
  }
  std::vector<ResultRow> rows;
  std::size_t number = 1;
  while (std::getline(in, line)) {
    ++number;
    if (line.empty()) continue;
    const auto cells = split_tabs(line);
    if (cells.size() != 11) {
      throw std::runtime_error(path.string() + ":" + std::to_string(number) + ": expected 11 columns");
    }
    ResultRow r;
    r.task = parse_task(cells[0]);
    r.method = parse_method(cells[1]);
    r.ratio = std::stod(cells[2]);
    r.seed = std::stoull(cells[3]);
    r.status = cells[4];
    r.metric = parse_opt(cells[5]);
    r.mean_weight_noisy = parse_opt(cells[6]);
    r.mean_weight_clean = parse_opt(cells[7]);
    r.runtime_seconds = std::stod(cells[8]);
    r.run_dir = cells[9] == "-" ? "" : cells[9];
    r.error = cells[10] == "-" ? "" : cells[10];
    rows.push_back(r);
  }
  return rows;
}

AuditReport audit_run(const std::filesystem::path& run_dir, std::size_t k) {
  if (k == 0) throw std::invalid_argument("audit: k must be positive");
  const auto path = run_dir / "audit.tsv";
  std::ifstream in(path);
  if (!in) throw std::runtime_error("audit: no weight log at " + path.string() + " (run with audit = true)");
  std::string line;
  std::getline(in, line);
  if (line.rfind("epoch\tbatch\tsample_id", 0) != 0) throw std::runtime_error("audit: malformed " + path.string());

  struct Obs {
    std::size_t epoch;
    std::int32_t id;
    double weight;
    std::optional<bool> noisy;
  };
  std::vector<Obs> obs;
  std::set<std::size_t> epochs;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto c = split_tabs(line);
    if (c.size() != 8) throw std::runtime_error("audit: malformed row in " + path.string());
    Obs o{std::stoull(c[0]), static_cast<std::int32_t>(std::stol(c[2])), std::stod(c[6]), std::nullopt};
    if (c[7] != "NA") o.noisy = c[7] == "1";
    epochs.insert(o.epoch);
    obs.push_back(o);
  }
  if (obs.empty()) throw std::runtime_error("audit: weight log is empty");

  AuditReport report;
  auto first = epochs.end();
  for (std::size_t i = 0; i < k && first != epochs.begin(); ++i) --first;
  report.epochs.assign(first, epochs.end());
  const std::size_t cutoff = report.epochs.front();

  std::map<std::int32_t, AuditEntry> by_id;
  bool flags_known = true;
  for (const auto& o : obs) {
    if (o.epoch < cutoff) continue;
    auto& e = by_id[o.id];
    e.id = o.id;
    e.mean_weight += o.weight;
    ++e.observations;
    e.noisy = o.noisy;
    flags_known = flags_known && o.noisy.has_value();
  }
  for (auto& [id, e] : by_id) {
    e.mean_weight /= static_cast<double>(e.observations);
    report.ranking.push_back(e);
  }
  std::sort(report.ranking.begin(), report.ranking.end(), [](const AuditEntry& a, const AuditEntry& b) {
    return a.mean_weight != b.mean_weight ? a.mean_weight < b.mean_weight : a.id < b.id;
  });
  if (flags_known) {
    for (const auto& e : report.ranking) report.flagged += *e.noisy;
    if (report.flagged > 0) {
      std::size_t hits = 0;
      for (std::size_t i = 0; i < report.flagged; ++i) hits += *report.ranking[i].noisy;
      report.precision = static_cast<double>(hits) / static_cast<double>(report.flagged);
    }
  }
  return report;
}

void write_audit(std::ostream& out, const AuditReport& r) {
  out << "# epochs " << r.epochs.front() << "-" << r.epochs.back() << " (" << r.epochs.size() << ")\n"
      << "# samples " << r.ranking.size() << "\n"
      << "# flagged " << r.flagged << "\n"
      << "# precision_at_flagged " << (r.precision ? format_double(*r.precision) : "undefined") << "\n"
      << "# ties in mean weight are broken by ascending sample id\n"
      << "rank\tsample_id\tmean_weight\tobservations\tis_noisy\n";
  for (std::size_t i = 0; i < r.ranking.size(); ++i) {
    const auto& e = r.ranking[i];
    out << i + 1 << '\t' << e.id << '\t' << format_double(e.mean_weight) << '\t' << e.observations
        << '\t' << (e.noisy ? (*e.noisy ? "1" : "0") : "NA") << '\n';
  }
}

std::vector<SummaryRow> summarize(const std::vector<ResultRow>& rows) {
  std::map<std::tuple<int, double, int>, std::vector<double>> groups;
  for (const auto& r : rows) {
    if (r.status != "ok" || !r.metric) continue;
    groups[{static_cast<int>(r.task), r.ratio, static_cast<int>(r.method)}].push_back(*r.metric);
  }
  std::vector<SummaryRow> out;
  for (const auto& [key, values] : groups) {
    SummaryRow s;
    s.task = static_cast<Task>(std::get<0>(key));
    s.ratio = std::get<1>(key);
    s.method = static_cast<Method>(std::get<2>(key));
    s.runs = values.size();
    double total = 0.0;
    for (double v : values) total += v;
    s.mean = total / static_cast<double>(values.size());
    double sq = 0.0;
    for (double v : values) sq += (v - s.mean) * (v - s.mean);
    s.stddev = std::sqrt(sq / static_cast<double>(values.size()));
    out.push_back(s);
  }
  std::stable_sort(out.begin(), out.end(), [](const SummaryRow& a, const SummaryRow& b) {
    if (a.task != b.task) return a.task < b.task;
    if (a.ratio != b.ratio) return a.ratio < b.ratio;
    return a.mean > b.mean;
  });
  return out;
}

std::string format_summary(const std::vector<SummaryRow>& summary) {
  std::ostringstream out;
  out << std::left << std::setw(14) << "task" << std::setw(16) << "method" << std::right
      << std::setw(7) << "ratio" << std::setw(6) << "runs" << std::setw(10) << "mean"
      << std::setw(10) << "std" << '\n';
  for (const auto& s : summary) {
    out << std::left << std::setw(14) << to_string(s.task) << std::setw(16) << to_string(s.method)
        << std::right << std::fixed << std::setprecision(2) << std::setw(7) << s.ratio
        << std::setw(6) << s.runs << std::setprecision(4) << std::setw(10) << s.mean
        << std::setw(10) << s.stddev << '\n';
  }
  return out.str();
}

void write_report(const std::filesystem::path& out_dir, const std::vector<SummaryRow>& summary) {
  std::filesystem::create_directories(out_dir);
  {
    auto out = open_out(out_dir / "summary.txt");
    out << format_summary(summary);
  }
  std::map<std::string, std::vector<const SummaryRow*>> series;
  for (const auto& s : summary) series[to_string(s.task) + "_" + to_string(s.method)].push_back(&s);
  for (auto& [name, points] : series) {
    std::sort(points.begin(), points.end(), [](auto* a, auto* b) { return a->ratio < b->ratio; });
    auto out = open_out(out_dir / ("series_" + name + ".tsv"));
    out << "ratio\tmean\tstd\truns\n";
    for (const auto* p : points) {
      out << format_double(p->ratio) << '\t' << format_double(p->mean) << '\t'
          << format_double(p->stddev) << '\t' << p->runs << '\n';
    }
  }
}

}  // namespace svae
