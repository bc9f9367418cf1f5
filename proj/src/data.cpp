#include "svae/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

#include "svae/binary_io.hpp"

namespace svae {

namespace {

std::mt19937_64 seeded(std::uint64_t seed, std::uint32_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    stream};
  return std::mt19937_64(seq);
}

std::size_t uniform_index(std::mt19937_64& rng, std::size_t n) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

std::vector<std::size_t> shuffled_indices(std::size_t n, std::mt19937_64& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

std::vector<std::int32_t> identity_ids(std::size_t n) {
  std::vector<std::int32_t> ids(n);
  std::iota(ids.begin(), ids.end(), 0);
  return ids;
}

std::vector<std::int32_t> derangement(std::size_t classes, std::mt19937_64& rng) {
  std::vector<std::int32_t> perm(classes);
  std::iota(perm.begin(), perm.end(), 0);
  for (;;) {
    std::shuffle(perm.begin(), perm.end(), rng);
    bool fixed_point = false;
    for (std::size_t c = 0; c < classes; ++c) fixed_point = fixed_point || perm[c] == static_cast<std::int32_t>(c);
    if (!fixed_point) return perm;
  }
}

std::vector<std::vector<double>> read_rows(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    std::replace(line.begin(), line.end(), ',', ' ');
    std::replace(line.begin(), line.end(), '\t', ' ');
    std::istringstream fields(line);
    std::vector<double> row;
    std::string token;
    while (fields >> token) row.push_back(std::stod(token));
    if (!row.empty()) rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace

std::string to_string(Task task) {
  return task == Task::multilabel ? "multilabel" : "segmentation";
}

Task parse_task(const std::string& text) {
  if (text == "multilabel") return Task::multilabel;
  if (text == "segmentation") return Task::segmentation;
  throw std::invalid_argument("unknown task '" + text + "'");
}

std::string to_string(NoiseMode mode) {
  switch (mode) {
    case NoiseMode::none: return "none";
    case NoiseMode::multilabel_flip: return "multilabel-flip";
    case NoiseMode::segmentation_region: return "segmentation-region";
  }
  return "none";
}

NoiseMode parse_noise_mode(const std::string& text) {
  if (text == "none") return NoiseMode::none;
  if (text == "multilabel-flip") return NoiseMode::multilabel_flip;
  if (text == "segmentation-region") return NoiseMode::segmentation_region;
  throw std::invalid_argument("unknown noise mode '" + text + "'");
}

void LabeledData::validate() const {
  if (features == 0 || classes == 0 || height == 0 || width == 0) {
    throw std::invalid_argument("dataset: dimensions must be positive");
  }
  if (inputs.size() != size() * pixels() * features ||
      labels.size() != size() * labels_per_sample()) {
    throw std::invalid_argument("dataset: block sizes disagree with dimensions");
  }
  for (auto y : labels) {
    const bool ok = task == Task::multilabel ? (y == 0 || y == 1)
                                             : (y >= 0 && static_cast<std::size_t>(y) < classes);
    if (!ok) throw std::invalid_argument("dataset: label " + std::to_string(y) + " out of range");
  }
}

Dataset gen_multilabel(std::size_t n, std::size_t features, std::size_t classes,
                       std::uint64_t seed, const MultiLabelShape& shape) {
  if (n == 0 || features == 0 || classes == 0) {
    throw std::invalid_argument("gen_multilabel: N, F and C must be positive");
  }
  auto rng = seeded(seed, 1);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> centers(classes * features);
  for (double& v : centers) v = shape.center_scale * normal(rng);

  const double radius = shape.radius_factor * shape.spread * std::sqrt(static_cast<double>(features));
  Dataset out;
  out.seed = seed;
  auto& d = out.data;
  d.task = Task::multilabel;
  d.features = features;
  d.classes = classes;
  d.inputs.resize(n * features);
  d.labels.assign(n * classes, 0);
  d.ids = identity_ids(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t own = uniform_index(rng, classes);
    double* x = d.inputs.data() + i * features;
    for (std::size_t f = 0; f < features; ++f) {
      x[f] = centers[own * features + f] + shape.spread * normal(rng);
    }
    for (std::size_t c = 0; c < classes; ++c) {
      double dist2 = 0.0;
      for (std::size_t f = 0; f < features; ++f) {
        const double delta = x[f] - centers[c * features + f];
        dist2 += delta * delta;
      }
      if (c == own || dist2 <= radius * radius) d.labels[i * classes + c] = 1;
    }
  }
  out.noisy.assign(n, 0);
  return out;
}

Dataset gen_segmentation(std::size_t n, std::size_t height, std::size_t width,
                         std::size_t features, std::size_t classes, std::uint64_t seed,
                         const SegmentationShape& shape) {
  if (n == 0 || height == 0 || width == 0 || features == 0 || classes < 2) {
    throw std::invalid_argument("gen_segmentation: positive dims and C >= 2 required");
  }
  if (n < classes) {
    throw std::invalid_argument("gen_segmentation: need at least C images to cover every class");
  }
  const std::size_t pixels = height * width;
  if (shape.min_regions == 0 || shape.min_regions > shape.max_regions ||
      shape.max_regions > pixels) {
    throw std::invalid_argument("gen_segmentation: invalid region count range");
  }
  auto rng = seeded(seed, 2);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> signatures(classes * features);
  for (double& v : signatures) v = normal(rng);

  Dataset out;
  out.seed = seed;
  auto& d = out.data;
  d.task = Task::segmentation;
  d.features = features;
  d.classes = classes;
  d.height = height;
  d.width = width;
  d.inputs.resize(n * pixels * features);
  d.labels.resize(n * pixels);
  d.ids = identity_ids(n);

  std::uniform_int_distribution<std::size_t> region_count(shape.min_regions, shape.max_regions);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t regions = region_count(rng);
    // Seeds sit on distinct pixels, so each owns at least its own pixel.
    auto cells = shuffled_indices(pixels, rng);
    std::vector<std::size_t> seed_class(regions);
    for (std::size_t s = 0; s < regions; ++s) {
      seed_class[s] = s == 0 ? i % classes : uniform_index(rng, classes);
    }
    for (std::size_t p = 0; p < pixels; ++p) {
      const double py = static_cast<double>(p / width);
      const double px = static_cast<double>(p % width);
      std::size_t nearest = 0;
      double best = 0.0;
      for (std::size_t s = 0; s < regions; ++s) {
        const double dy = py - static_cast<double>(cells[s] / width);
        const double dx = px - static_cast<double>(cells[s] % width);
        const double dist = dy * dy + dx * dx;
        if (s == 0 || dist < best) {
          best = dist;
          nearest = s;
        }
      }
      const std::size_t c = seed_class[nearest];
      d.labels[i * pixels + p] = static_cast<std::int32_t>(c);
      double* x = d.inputs.data() + (i * pixels + p) * features;
      for (std::size_t f = 0; f < features; ++f) {
        x[f] = signatures[c * features + f] + shape.pixel_noise * normal(rng);
      }
    }
  }
  out.noisy.assign(n, 0);
  return out;
}

std::size_t noisy_count(double ratio, std::size_t n) {
  return static_cast<std::size_t>(std::floor(ratio * static_cast<double>(n) + 1e-9));
}

Dataset inject_noise(const Dataset& clean, const NoiseSpec& spec) {
  if (!(spec.ratio >= 0.0 && spec.ratio <= 0.6)) {
    throw std::invalid_argument("inject_noise: ratio " + std::to_string(spec.ratio) +
                                " outside [0, 0.6]");
  }
  Dataset out = clean;
  out.noise = spec;
  const auto& d = clean.data;
  const std::size_t n = d.size();
  const std::size_t count = noisy_count(spec.ratio, n);
  if (count == 0) return out;
  const bool mode_ok = (spec.mode == NoiseMode::multilabel_flip && d.task == Task::multilabel) ||
                       (spec.mode == NoiseMode::segmentation_region && d.task == Task::segmentation);
  if (!mode_ok) {
    throw std::invalid_argument("inject_noise: mode " + to_string(spec.mode) +
                                " does not apply to task " + to_string(d.task));
  }

  auto rng = seeded(spec.seed, 3);
  const auto order = shuffled_indices(n, rng);
  std::bernoulli_distribution coin(0.5);
  const std::size_t width = d.labels_per_sample();
  for (std::size_t k = 0; k < count; ++k) {
    const std::size_t i = order[k];
    std::int32_t* y = out.data.labels.data() + i * width;
    if (spec.mode == NoiseMode::multilabel_flip) {
      bool changed = false;
      for (std::size_t c = 0; c < width; ++c) {
        if (coin(rng)) {
          y[c] = 1 - y[c];
          changed = true;
        }
      }
      if (!changed) {
        const std::size_t c = uniform_index(rng, width);
        y[c] = 1 - y[c];
      }
    } else {
      const auto perm = derangement(d.classes, rng);
      for (std::size_t p = 0; p < width; ++p) y[p] = perm[static_cast<std::size_t>(y[p])];
    }
    out.noisy[i] = 1;
  }
  return out;
}

Dataset subset(const Dataset& data, std::span<const std::size_t> rows) {
  const auto& src = data.data;
  Dataset out;
  out.seed = data.seed;
  out.noise = data.noise;
  auto& d = out.data;
  d.task = src.task;
  d.features = src.features;
  d.classes = src.classes;
  d.height = src.height;
  d.width = src.width;
  const std::size_t in_width = src.pixels() * src.features;
  const std::size_t label_width = src.labels_per_sample();
  for (auto r : rows) {
    if (r >= src.size()) throw std::out_of_range("subset: row out of range");
    d.inputs.insert(d.inputs.end(), src.inputs.begin() + static_cast<std::ptrdiff_t>(r * in_width),
                    src.inputs.begin() + static_cast<std::ptrdiff_t>((r + 1) * in_width));
    d.labels.insert(d.labels.end(),
                    src.labels.begin() + static_cast<std::ptrdiff_t>(r * label_width),
                    src.labels.begin() + static_cast<std::ptrdiff_t>((r + 1) * label_width));
    d.ids.push_back(src.ids[r]);
    out.noisy.push_back(data.noisy[r]);
  }
  return out;
}

Splits split(const Dataset& data, std::span<const double> fractions, std::uint64_t seed) {
  if (fractions.size() != 3) throw std::invalid_argument("split: need three fractions");
  double total = 0.0;
  for (double f : fractions) {
    if (!(f >= 0.0)) throw std::invalid_argument("split: negative fraction");
    total += f;
  }
  if (std::abs(total - 1.0) > 1e-9) throw std::invalid_argument("split: fractions must sum to 1");
  const std::size_t n = data.size();
  const auto n_train = static_cast<std::size_t>(std::llround(fractions[0] * static_cast<double>(n)));
  const auto n_val = std::min(
      n - n_train, static_cast<std::size_t>(std::llround(fractions[1] * static_cast<double>(n))));
  auto rng = seeded(seed, 4);
  const auto order = shuffled_indices(n, rng);
  const std::span<const std::size_t> all(order);
  return Splits{subset(data, all.subspan(0, n_train)), subset(data, all.subspan(n_train, n_val)),
                subset(data, all.subspan(n_train + n_val))};
}

Splits split(const Dataset& data, std::uint64_t seed) {
  const double fractions[] = {0.52, 0.24, 0.24};
  return split(data, fractions, seed);
}

std::vector<std::size_t> label_cardinality(const LabeledData& data) {
  if (data.task != Task::multilabel) {
    throw std::invalid_argument("label_cardinality: multilabel data only");
  }
  std::vector<std::size_t> hist(data.classes + 1, 0);
  for (std::size_t i = 0; i < data.size(); ++i) {
    std::size_t k = 0;
    for (std::size_t c = 0; c < data.classes; ++c) k += data.labels[i * data.classes + c] != 0;
    ++hist[k];
  }
  return hist;
}

void save_dataset(const std::filesystem::path& stem, const Dataset& data) {
  const auto& d = data.data;
  d.validate();
  if (stem.has_parent_path()) std::filesystem::create_directories(stem.parent_path());
  std::ofstream manifest(stem.string() + ".manifest");
  std::ofstream blob(stem.string() + ".bin", std::ios::binary);
  if (!manifest || !blob) throw std::runtime_error("save_dataset: cannot write " + stem.string());
  manifest.precision(17);
  manifest << "svae-dataset 1\n"
           << "task " << to_string(d.task) << '\n'
           << "samples " << d.size() << '\n'
           << "features " << d.features << '\n'
           << "classes " << d.classes << '\n'
           << "height " << d.height << '\n'
           << "width " << d.width << '\n'
           << "seed " << data.seed << '\n'
           << "noise_ratio " << data.noise.ratio << '\n'
           << "noise_mode " << to_string(data.noise.mode) << '\n'
           << "noise_seed " << data.noise.seed << '\n'
           << "block inputs f64 " << d.inputs.size() << '\n'
           << "block labels i32 " << d.labels.size() << '\n'
           << "block ids i32 " << d.ids.size() << '\n'
           << "block flags u8 " << data.noisy.size() << '\n';
  io::write_f64(blob, d.inputs);
  io::write_i32(blob, d.labels);
  io::write_i32(blob, d.ids);
  io::write_u8(blob, data.noisy);
  if (!manifest || !blob) throw std::runtime_error("save_dataset: write failed");
}

Dataset load_dataset(const std::filesystem::path& stem) {
  std::ifstream manifest(stem.string() + ".manifest");
  std::ifstream blob(stem.string() + ".bin", std::ios::binary);
  if (!manifest || !blob) throw std::runtime_error("load_dataset: cannot read " + stem.string());
  std::string magic;
  int version = 0;
  manifest >> magic >> version;
  if (magic != "svae-dataset" || version != 1) {
    throw std::runtime_error("load_dataset: bad manifest header");
  }
  std::map<std::string, std::string> fields;
  std::map<std::string, std::size_t> blocks;
  std::string key;
  while (manifest >> key) {
    if (key == "block") {
      std::string name, type;
      std::size_t count = 0;
      manifest >> name >> type >> count;
      blocks[name] = count;
    } else {
      manifest >> fields[key];
    }
  }
  auto field = [&](const std::string& k) -> const std::string& {
    auto it = fields.find(k);
    if (it == fields.end()) throw std::runtime_error("load_dataset: manifest lacks " + k);
    return it->second;
  };
  auto block = [&](const std::string& k) {
    auto it = blocks.find(k);
    if (it == blocks.end()) throw std::runtime_error("load_dataset: manifest lacks block " + k);
    return it->second;
  };
  Dataset out;
  auto& d = out.data;
  d.task = parse_task(field("task"));
  d.features = std::stoull(field("features"));
  d.classes = std::stoull(field("classes"));
  d.height = std::stoull(field("height"));
  d.width = std::stoull(field("width"));
  out.seed = std::stoull(field("seed"));
  out.noise.ratio = std::stod(field("noise_ratio"));
  out.noise.mode = parse_noise_mode(field("noise_mode"));
  out.noise.seed = std::stoull(field("noise_seed"));
  d.inputs = io::read_f64(blob, block("inputs"));
  d.labels = io::read_i32(blob, block("labels"));
  d.ids = io::read_i32(blob, block("ids"));
  out.noisy = io::read_u8(blob, block("flags"));
  if (d.size() != std::stoull(field("samples")) || out.noisy.size() != d.size()) {
    throw std::runtime_error("load_dataset: sample count mismatch");
  }
  d.validate();
  return out;
}

Dataset load_delimited(const std::filesystem::path& features, const std::filesystem::path& labels,
                       Task task, std::size_t height, std::size_t width,
                       std::optional<std::size_t> classes) {
  const auto x_rows = read_rows(features);
  const auto y_rows = read_rows(labels);
  if (x_rows.empty() || x_rows.size() != y_rows.size()) {
    throw std::invalid_argument("load_delimited: feature and label row counts differ or are zero");
  }
  Dataset out;
  auto& d = out.data;
  d.task = task;
  d.height = task == Task::segmentation ? height : 1;
  d.width = task == Task::segmentation ? width : 1;
  const std::size_t pixels = d.pixels();
  if (x_rows[0].size() % pixels != 0) {
    throw std::invalid_argument("load_delimited: feature row width not a multiple of H*W");
  }
  d.features = x_rows[0].size() / pixels;
  std::int32_t max_label = 0;
  for (std::size_t i = 0; i < x_rows.size(); ++i) {
    if (x_rows[i].size() != d.features * pixels) {
      throw std::invalid_argument("load_delimited: ragged feature row " + std::to_string(i));
    }
    d.inputs.insert(d.inputs.end(), x_rows[i].begin(), x_rows[i].end());
    for (double v : y_rows[i]) {
      const auto label = static_cast<std::int32_t>(v);
      if (static_cast<double>(label) != v) {
        throw std::invalid_argument("load_delimited: non-integer label");
      }
      max_label = std::max(max_label, label);
      d.labels.push_back(label);
    }
  }
  if (task == Task::multilabel) {
    d.classes = y_rows[0].size();
  } else {
    d.classes = classes.value_or(static_cast<std::size_t>(max_label) + 1);
  }
  if (classes && *classes != d.classes) {
    throw std::invalid_argument("load_delimited: label width disagrees with class count");
  }
  d.ids = identity_ids(x_rows.size());
  out.noisy.assign(x_rows.size(), 0);
  d.validate();
  return out;
}

Batch make_batch(const LabeledData& data, std::span<const std::size_t> rows) {
  if (rows.empty()) throw std::invalid_argument("make_batch: empty batch");
  Batch batch;
  batch.task = data.task;
  batch.rows.assign(rows.begin(), rows.end());
  const std::size_t pixels = data.pixels();
  const std::size_t in_width = pixels * data.features;
  const std::size_t label_width = data.labels_per_sample();
  std::vector<double> inputs;
  inputs.reserve(rows.size() * in_width);
  std::vector<double> targets;
  for (auto r : rows) {
    if (r >= data.size()) throw std::out_of_range("make_batch: row out of range");
    inputs.insert(inputs.end(), data.inputs.begin() + static_cast<std::ptrdiff_t>(r * in_width),
                  data.inputs.begin() + static_cast<std::ptrdiff_t>((r + 1) * in_width));
    const auto* y = data.labels.data() + r * label_width;
    if (data.task == Task::multilabel) {
      for (std::size_t c = 0; c < label_width; ++c) targets.push_back(static_cast<double>(y[c]));
    } else {
      batch.pixel_targets.insert(batch.pixel_targets.end(), y, y + label_width);
    }
    batch.ids.push_back(data.ids[r]);
  }
  const std::size_t b = rows.size();
  if (data.task == Task::multilabel) {
    batch.inputs = Tensor(Shape{b, data.features}, std::move(inputs));
    batch.multilabel_targets = Tensor(Shape{b, data.classes}, std::move(targets));
  } else {
    batch.inputs = Tensor(Shape{b, pixels, data.features}, std::move(inputs));
  }
  return batch;
}

}  // namespace svae
