#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "svae/tensor.hpp"

namespace svae {

enum class Task { multilabel, segmentation };

std::string to_string(Task task);
Task parse_task(const std::string& text);

/// Features and (possibly corrupted) labels. This is the only view of a
/// dataset the training path receives; noise flags live in `Dataset`.
struct LabeledData {
  Task task = Task::multilabel;
  std::size_t features = 0;
  std::size_t classes = 0;
  std::size_t height = 1;
  std::size_t width = 1;
  std::vector<double> inputs;         // size() x pixels() x features
  std::vector<std::int32_t> labels;   // multilabel: size() x classes in {0,1};
                                      // segmentation: size() x pixels() class ids
  std::vector<std::int32_t> ids;      // stable id of each sample in its source set

  std::size_t size() const { return ids.size(); }
  std::size_t pixels() const { return height * width; }
  std::size_t labels_per_sample() const {
    return task == Task::multilabel ? classes : pixels();
  }
  void validate() const;
};

enum class NoiseMode { none, multilabel_flip, segmentation_region };

std::string to_string(NoiseMode mode);
NoiseMode parse_noise_mode(const std::string& text);

struct NoiseSpec {
  double ratio = 0.0;
  NoiseMode mode = NoiseMode::multilabel_flip;
  std::uint64_t seed = 0;
};

struct Dataset {
  LabeledData data;
  std::vector<std::uint8_t> noisy;  // one flag per sample
  std::uint64_t seed = 0;
  NoiseSpec noise{0.0, NoiseMode::none, 0};

  std::size_t size() const { return data.size(); }
};

struct MultiLabelShape {
  double center_scale = 0.5;   // std of cluster centers per coordinate
  double spread = 0.6;         // within-cluster std per coordinate
  double radius_factor = 1.4;  // positive radius, relative to typical own-center distance
};

/// Samples drawn around one of `classes` Gaussian cluster centers; a sample
/// is positive for its own cluster and for every cluster whose center lies
/// within the radius.
Dataset gen_multilabel(std::size_t n, std::size_t features, std::size_t classes,
                       std::uint64_t seed, const MultiLabelShape& shape = {});

struct SegmentationShape {
  std::size_t min_regions = 2;
  std::size_t max_regions = 5;
  double pixel_noise = 0.9;  // std of per-channel noise around a class signature
};

/// Voronoi class maps over random seed pixels with class-conditional channel
/// signatures plus Gaussian noise.
Dataset gen_segmentation(std::size_t n, std::size_t height, std::size_t width,
                         std::size_t features, std::size_t classes, std::uint64_t seed,
                         const SegmentationShape& shape = {});

/// floor(ratio * n) up to a 1e-9 guard against representation error.
std::size_t noisy_count(double ratio, std::size_t n);

/// Corrupts labels of floor(ratio * n) uniformly chosen samples and flags
/// exactly those. Features are never touched.
Dataset inject_noise(const Dataset& clean, const NoiseSpec& spec);

struct Splits {
  Dataset train;
  Dataset validation;
  Dataset test;
};

/// Deterministic shuffle, then round(f0 n), round(f1 n) and the remainder.
Splits split(const Dataset& data, std::span<const double> fractions, std::uint64_t seed);
Splits split(const Dataset& data, std::uint64_t seed);  // 52 / 24 / 24

Dataset subset(const Dataset& data, std::span<const std::size_t> rows);

/// Label cardinality histogram (multilabel only): entry k counts samples
/// with exactly k positives.
std::vector<std::size_t> label_cardinality(const LabeledData& data);

// <stem>.manifest (text) + <stem>.bin: inputs f64, labels i32, ids i32,
// flags u8, all little-endian.
void save_dataset(const std::filesystem::path& stem, const Dataset& data);
Dataset load_dataset(const std::filesystem::path& stem);

/// Delimited text (comma, tab or space separated), one sample per line.
/// Multilabel: feature rows of F values and label rows of C 0/1 values.
/// Segmentation: feature rows of P*F values (pixel-major) and label rows of
/// P class ids; height * width must equal P.
Dataset load_delimited(const std::filesystem::path& features, const std::filesystem::path& labels,
                       Task task, std::size_t height = 1, std::size_t width = 1,
                       std::optional<std::size_t> classes = std::nullopt);

struct Batch {
  Task task = Task::multilabel;
  Tensor inputs;                            // B x F or B x P x F
  Tensor multilabel_targets;                // B x C (multilabel only)
  std::vector<std::int32_t> pixel_targets;  // B x P (segmentation only)
  std::vector<std::size_t> rows;            // positions in the source LabeledData
  std::vector<std::int32_t> ids;

  std::size_t size() const { return rows.size(); }
};

Batch make_batch(const LabeledData& data, std::span<const std::size_t> rows);

}  // namespace svae
