#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "svae/tensor.hpp"

namespace svae {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

/// Affine map on rows: x (n x in) -> x W + b (n x out).
struct Linear {
  Tensor weight;  // in x out
  Tensor bias;    // out

  Tensor operator()(const Tensor& x) const;
  std::size_t in_features() const { return weight.dim(0); }
  std::size_t out_features() const { return weight.dim(1); }
};

/// Weights uniform on +-sqrt(6 / fan_in) (variance 2 / fan_in), zero bias.
Linear make_linear(std::size_t in, std::size_t out, std::mt19937_64& rng);

struct ModelDims {
  std::size_t input = 20;
  std::vector<std::size_t> hidden;  // encoder widths before the feature layer
  std::size_t feature = 64;
  std::size_t latent = 16;
  std::size_t classes = 6;

  bool operator==(const ModelDims&) const = default;
};

/// Main-path outputs. Leading axes follow the input: B x F gives B x D
/// features and B x C logits; B x P x F gives B x P x D and B x P x C.
struct MainForward {
  Tensor features;
  Tensor logits;
};

struct SvaeForward {
  Tensor mu;
  Tensor logvar;
  Tensor sigma;
  Tensor eps;  // the standard-normal draw used for z
  Tensor z;
  Tensor reconstruction;
  Tensor logits;
};

/// Encoder and task head, plus the optional SVAE branch: variational encoder
/// (features -> mu, logvar), feature decoder (z -> features) and an
/// independently parameterized copy of the task head on z. Per-pixel inputs
/// share every parameter across pixels.
class Model {
 public:
  Model() = default;
  /// Main and SVAE parameters come from separate streams of `seed`, so the
  /// main initialization does not depend on whether the branch exists.
  Model(const ModelDims& dims, bool with_svae, std::uint64_t seed);

  MainForward forward_main(const Tensor& inputs) const;

  /// With `isolate` set, the features are detached before entering the
  /// branch so branch losses never reach the encoder.
  SvaeForward forward_svae(const Tensor& features, std::mt19937_64& rng,
                           bool isolate = true) const;
  SvaeForward forward_svae(const Tensor& features, const Tensor& eps,
                           bool isolate = true) const;

  bool has_svae() const { return has_svae_; }
  const ModelDims& dims() const { return dims_; }

  std::vector<Tensor> main_parameters() const;
  std::vector<Tensor> svae_parameters() const;
  std::vector<NamedTensor> named_parameters() const;

  /// Copies values (not grads) from tensors matched by name and shape.
  void load(const std::vector<NamedTensor>& tensors);
  Model clone() const;

  // Exposed for tests that need to pin specific layers.
  std::vector<Linear>& encoder_layers() { return encoder_; }
  Linear& head() { return head_; }
  Linear& variational() { return variational_; }
  Linear& decoder() { return decoder_; }
  Linear& svae_head() { return svae_head_; }

 private:
  ModelDims dims_;
  bool has_svae_ = false;
  std::vector<Linear> encoder_;
  Linear head_;
  Linear variational_;  // feature -> 2 * latent (mu | logvar)
  Linear decoder_;
  Linear svae_head_;
};

}  // namespace svae
