#include "svae/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>

namespace svae {

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

double to_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw std::invalid_argument("config: " + key + " expects a number, got '" + v + "'");
  }
  return out;
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw std::invalid_argument("config: " + key + " expects a non-negative integer, got '" + v + "'");
  }
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw std::invalid_argument("config: " + key + " expects true/false, got '" + v + "'");
}

std::string sizes_to_string(const std::vector<std::size_t>& v) {
  if (v.empty()) return "none";
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

std::vector<std::size_t> parse_sizes(const std::string& key, const std::string& v) {
  std::vector<std::size_t> out;
  if (v == "none" || v.empty()) return out;
  std::stringstream in(v);
  std::string item;
  while (std::getline(in, item, ',')) out.push_back(to_u64(key, trim(item)));
  return out;
}

struct Field {
  std::string key;
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, const std::string&)> set;
};

#define SVAE_SIZE_FIELD(name, member)                                              \
  Field{name, [](const ExperimentConfig& c) { return std::to_string(c.member); },  \
        [](ExperimentConfig& c, const std::string& v) { c.member = to_u64(name, v); }}
#define SVAE_DOUBLE_FIELD(name, member)                                          \
  Field{name, [](const ExperimentConfig& c) { return format_double(c.member); }, \
        [](ExperimentConfig& c, const std::string& v) { c.member = to_double(name, v); }}
#define SVAE_BOOL_FIELD(name, member)                                                  \
  Field{name, [](const ExperimentConfig& c) { return c.member ? "true" : "false"; }, \
        [](ExperimentConfig& c, const std::string& v) { c.member = to_bool(name, v); }}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      Field{"task", [](const ExperimentConfig& c) { return to_string(c.task); },
            [](ExperimentConfig& c, const std::string& v) { c.task = parse_task(v); }},
      Field{"method", [](const ExperimentConfig& c) { return to_string(c.method); },
            [](ExperimentConfig& c, const std::string& v) { c.method = parse_method(v); }},
      SVAE_DOUBLE_FIELD("noise_ratio", noise_ratio),
      SVAE_SIZE_FIELD("seed", seed),
      Field{"dataset", [](const ExperimentConfig& c) { return c.dataset.empty() ? "none" : c.dataset; },
            [](ExperimentConfig& c, const std::string& v) { c.dataset = v == "none" ? "" : v; }},
      SVAE_SIZE_FIELD("samples", samples),
      SVAE_SIZE_FIELD("features", features),
      SVAE_SIZE_FIELD("classes", classes),
      SVAE_SIZE_FIELD("height", height),
      SVAE_SIZE_FIELD("width", width),
      SVAE_DOUBLE_FIELD("multilabel.center_scale", multilabel_shape.center_scale),
      SVAE_DOUBLE_FIELD("multilabel.spread", multilabel_shape.spread),
      SVAE_DOUBLE_FIELD("multilabel.radius_factor", multilabel_shape.radius_factor),
      SVAE_SIZE_FIELD("segmentation.min_regions", segmentation_shape.min_regions),
      SVAE_SIZE_FIELD("segmentation.max_regions", segmentation_shape.max_regions),
      SVAE_DOUBLE_FIELD("segmentation.pixel_noise", segmentation_shape.pixel_noise),
      Field{"hidden", [](const ExperimentConfig& c) { return sizes_to_string(c.hidden); },
            [](ExperimentConfig& c, const std::string& v) { c.hidden = parse_sizes("hidden", v); }},
      SVAE_SIZE_FIELD("feature_dim", feature_dim),
      SVAE_SIZE_FIELD("latent_dim", latent_dim),
      SVAE_SIZE_FIELD("epochs", epochs),
      SVAE_SIZE_FIELD("batch_size", batch_size),
      SVAE_DOUBLE_FIELD("lr", lr),
      SVAE_DOUBLE_FIELD("beta1", beta1),
      SVAE_DOUBLE_FIELD("beta2", beta2),
      SVAE_DOUBLE_FIELD("adam_eps", adam_eps),
      SVAE_DOUBLE_FIELD("alpha_floor", alpha_floor),
      Field{"alpha_granularity",
            [](const ExperimentConfig& c) {
              return std::string(c.alpha_granularity == AlphaGranularity::epoch ? "epoch" : "step");
            },
            [](ExperimentConfig& c, const std::string& v) {
              if (v == "epoch") {
                c.alpha_granularity = AlphaGranularity::epoch;
              } else if (v == "step") {
                c.alpha_granularity = AlphaGranularity::step;
              } else {
                throw std::invalid_argument("config: alpha_granularity must be epoch or step");
              }
            }},
      Field{"fixed_alpha",
            [](const ExperimentConfig& c) { return c.fixed_alpha ? format_double(*c.fixed_alpha) : "none"; },
            [](ExperimentConfig& c, const std::string& v) {
              if (v == "none") {
                c.fixed_alpha.reset();
              } else {
                c.fixed_alpha = to_double("fixed_alpha", v);
              }
            }},
      Field{"gap_source",
            [](const ExperimentConfig& c) {
              return std::string(c.gap_source == GapSource::svae_task ? "svae_task" : "svae_total");
            },
            [](ExperimentConfig& c, const std::string& v) {
              if (v == "svae_task") {
                c.gap_source = GapSource::svae_task;
              } else if (v == "svae_total") {
                c.gap_source = GapSource::svae_total;
              } else {
                throw std::invalid_argument("config: gap_source must be svae_task or svae_total");
              }
            }},
      Field{"kl_sign",
            [](const ExperimentConfig& c) {
              return std::string(c.kl_sign == loss::KlSign::standard ? "standard" : "literal");
            },
            [](ExperimentConfig& c, const std::string& v) {
              if (v == "standard") {
                c.kl_sign = loss::KlSign::standard;
              } else if (v == "literal") {
                c.kl_sign = loss::KlSign::literal;
              } else {
                throw std::invalid_argument("config: kl_sign must be standard or literal");
              }
            }},
      SVAE_DOUBLE_FIELD("weight_reconstruction", weight_reconstruction),
      SVAE_DOUBLE_FIELD("weight_task", weight_task),
      SVAE_DOUBLE_FIELD("weight_kl", weight_kl),
      SVAE_DOUBLE_FIELD("focal_gamma", focal_gamma),
      SVAE_BOOL_FIELD("isolate_svae", isolate_svae),
      Field{"output_dir", [](const ExperimentConfig& c) { return c.output_dir; },
            [](ExperimentConfig& c, const std::string& v) { c.output_dir = v; }},
      SVAE_BOOL_FIELD("audit", audit),
      SVAE_BOOL_FIELD("probe_routing", probe_routing),
  };
  return table;
}

#undef SVAE_SIZE_FIELD
#undef SVAE_DOUBLE_FIELD
#undef SVAE_BOOL_FIELD

const Field& field(const std::string& key) {
  for (const auto& f : fields()) {
    if (f.key == key) return f;
  }
  throw std::invalid_argument("config: unknown key '" + key + "'");
}

}  // namespace

std::string format_double(double value) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
  if (ec != std::errc()) throw std::runtime_error("format_double: conversion failed");
  return std::string(buf, ptr);
}

bool ExperimentConfig::operator==(const ExperimentConfig& other) const {
  for (const auto& f : fields()) {
    if (f.get(*this) != f.get(other)) return false;
  }
  return true;
}

ExperimentConfig default_config(Task task) {
  ExperimentConfig c;
  c.task = task;
  if (task == Task::segmentation) {
    c.samples = 500;
    c.height = 8;
    c.width = 8;
    c.features = 8;
    c.classes = 5;
  }
  return c;
}

ExperimentConfig with_task(const ExperimentConfig& base, Task task) {
  if (base.task == task) return base;
  ExperimentConfig out = base;
  const ExperimentConfig d = default_config(task);
  out.task = task;
  out.samples = d.samples;
  out.features = d.features;
  out.classes = d.classes;
  out.height = d.height;
  out.width = d.width;
  if (task == Task::segmentation && out.method == Method::focal_baseline) {
    throw std::invalid_argument("with_task: focal-baseline has no segmentation form");
  }
  return out;
}

std::string serialize(const ExperimentConfig& config) {
  std::string out;
  for (const auto& f : fields()) out += f.key + " = " + f.get(config) + "\n";
  return out;
}

std::pair<std::string, std::string> parse_override(const std::string& text) {
  const auto eq = text.find('=');
  if (eq == std::string::npos) throw std::invalid_argument("config: expected key=value, got '" + text + "'");
  auto key = trim(text.substr(0, eq));
  auto value = trim(text.substr(eq + 1));
  if (key.empty()) throw std::invalid_argument("config: empty key in '" + text + "'");
  return {key, value};
}

void apply_setting(ExperimentConfig& config, const std::string& key, const std::string& value) {
  field(key).set(config, value);
}

ExperimentConfig parse_config(const std::string& text,
                              const std::vector<std::pair<std::string, std::string>>& overrides) {
  std::vector<std::pair<std::string, std::string>> settings;
  std::istringstream in(text);
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    try {
      settings.push_back(parse_override(line));
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument("line " + std::to_string(number) + ": " + e.what());
    }
  }
  settings.insert(settings.end(), overrides.begin(), overrides.end());

  // Task decides which data defaults apply, so it is resolved first.
  Task task = Task::multilabel;
  for (const auto& [k, v] : settings) {
    if (k == "task") task = parse_task(v);
  }
  ExperimentConfig config = default_config(task);
  for (const auto& [k, v] : settings) apply_setting(config, k, v);
  return config;
}

ExperimentConfig load_config(const std::filesystem::path& path,
                             const std::vector<std::pair<std::string, std::string>>& overrides) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read config " + path.string());
  std::stringstream text;
  text << in.rdbuf();
  return parse_config(text.str(), overrides);
}

void save_config(const std::filesystem::path& path, const ExperimentConfig& config) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write config " + path.string());
  out << serialize(config);
}

TrainConfig to_train_config(const ExperimentConfig& c) {
  TrainConfig t;
  t.task = c.task;
  t.method = c.method;
  t.dims.input = c.features;
  t.dims.hidden = c.hidden;
  t.dims.feature = c.feature_dim;
  t.dims.latent = c.latent_dim;
  t.dims.classes = c.classes;
  t.epochs = c.epochs;
  t.batch_size = c.batch_size;
  t.adam = AdamOptions{c.lr, c.beta1, c.beta2, c.adam_eps};
  t.alpha = reweight::AlphaSchedule{c.alpha_floor, c.epochs};
  t.alpha_granularity = c.alpha_granularity;
  t.fixed_alpha = c.fixed_alpha;
  t.gap_source = c.gap_source;
  t.kl_sign = c.kl_sign;
  t.svae_weights = loss::SvaeLossWeights{c.weight_reconstruction, c.weight_task, c.weight_kl};
  t.focal_gamma = c.focal_gamma;
  t.isolate_svae = c.isolate_svae;
  t.seed = c.seed;
  return t;
}

}  // namespace svae
