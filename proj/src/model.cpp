#include "svae/model.hpp"

#include <cmath>
#include <map>

#include "svae/ops.hpp"

namespace svae {

namespace {

constexpr std::uint64_t kMainStream = 0x6d61696eULL;
constexpr std::uint64_t kSvaeStream = 0x73766165ULL;

std::mt19937_64 stream_rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream)};
  return std::mt19937_64(seq);
}

// Flattens leading axes so every op below sees rows x channels.
Tensor as_rows(const Tensor& x) {
  if (x.rank() == 2) return x;
  if (x.rank() != 3) {
    throw ShapeError("model: inputs must be B x F or B x P x F, got " + shape_str(x.shape()));
  }
  return reshape(x, Shape{x.dim(0) * x.dim(1), x.dim(2)});
}

Tensor restore_leading(const Tensor& rows, const Shape& like) {
  if (like.size() == 2) return rows;
  return reshape(rows, Shape{like[0], like[1], rows.dim(1)});
}

void append(std::vector<NamedTensor>& out, const std::string& prefix, const Linear& layer) {
  out.push_back({prefix + ".weight", layer.weight});
  out.push_back({prefix + ".bias", layer.bias});
}

}  // namespace

Tensor Linear::operator()(const Tensor& x) const { return add(matmul(x, weight), bias); }

Linear make_linear(std::size_t in, std::size_t out, std::mt19937_64& rng) {
  if (in == 0 || out == 0) throw std::invalid_argument("make_linear: dimensions must be positive");
  const double bound = std::sqrt(6.0 / static_cast<double>(in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> w(in * out);
  for (double& v : w) v = dist(rng);
  return Linear{Tensor(Shape{in, out}, std::move(w), true), Tensor::zeros(Shape{out}, true)};
}

Model::Model(const ModelDims& dims, bool with_svae, std::uint64_t seed)
    : dims_(dims), has_svae_(with_svae) {
  if (dims.input == 0 || dims.feature == 0 || dims.classes == 0 ||
      (with_svae && dims.latent == 0)) {
    throw std::invalid_argument("model: dimensions must be positive");
  }
  for (auto h : dims.hidden) {
    if (h == 0) throw std::invalid_argument("model: hidden widths must be positive");
  }
  auto rng = stream_rng(seed, kMainStream);
  std::size_t width = dims.input;
  for (auto h : dims.hidden) {
    encoder_.push_back(make_linear(width, h, rng));
    width = h;
  }
  encoder_.push_back(make_linear(width, dims.feature, rng));
  head_ = make_linear(dims.feature, dims.classes, rng);
  if (with_svae) {
    auto branch_rng = stream_rng(seed, kSvaeStream);
    variational_ = make_linear(dims.feature, 2 * dims.latent, branch_rng);
    decoder_ = make_linear(dims.latent, dims.feature, branch_rng);
    svae_head_ = make_linear(dims.latent, dims.classes, branch_rng);
  }
}

MainForward Model::forward_main(const Tensor& inputs) const {
  if (inputs.rank() < 2 || inputs.shape().back() != dims_.input) {
    throw ShapeError("forward_main: expected trailing extent " + std::to_string(dims_.input) +
                     ", got " + shape_str(inputs.shape()));
  }
  Tensor h = as_rows(inputs);
  for (const auto& layer : encoder_) h = relu(layer(h));
  Tensor logits = head_(h);
  return MainForward{restore_leading(h, inputs.shape()), restore_leading(logits, inputs.shape())};
}

SvaeForward Model::forward_svae(const Tensor& features, std::mt19937_64& rng,
                                bool isolate) const {
  if (!has_svae_) throw std::logic_error("forward_svae: model has no SVAE branch");
  Shape eps_shape = features.shape();
  eps_shape.back() = dims_.latent;
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> eps(shape_numel(eps_shape));
  for (double& e : eps) e = normal(rng);
  return forward_svae(features, Tensor(std::move(eps_shape), std::move(eps)), isolate);
}

SvaeForward Model::forward_svae(const Tensor& features, const Tensor& eps, bool isolate) const {
  if (!has_svae_) throw std::logic_error("forward_svae: model has no SVAE branch");
  if (features.rank() < 2 || features.shape().back() != dims_.feature) {
    throw ShapeError("forward_svae: expected trailing extent " + std::to_string(dims_.feature) +
                     ", got " + shape_str(features.shape()));
  }
  const Tensor source = isolate ? stop_gradient(features) : features;
  const Tensor rows = as_rows(source);
  const Tensor eps_rows = as_rows(eps);
  if (eps_rows.shape() != Shape{rows.dim(0), dims_.latent}) {
    throw ShapeError("forward_svae: eps shape " + shape_str(eps.shape()) + " does not match");
  }
  const Tensor stats = variational_(rows);
  const Tensor mu = slice(stats, 1, 0, dims_.latent);
  const Tensor logvar = slice(stats, 1, dims_.latent, 2 * dims_.latent);
  for (double v : logvar.data()) {
    if (!std::isfinite(v)) throw NumericError("forward_svae: non-finite logvar (diverged)");
  }
  const Tensor sigma = exp(scale(logvar, 0.5));
  const Tensor z = mu + sigma * eps_rows;
  const Tensor reconstruction = decoder_(z);
  const Tensor logits = svae_head_(z);
  const Shape& like = features.shape();
  return SvaeForward{restore_leading(mu, like),     restore_leading(logvar, like),
                     restore_leading(sigma, like),  eps,
                     restore_leading(z, like),      restore_leading(reconstruction, like),
                     restore_leading(logits, like)};
}

std::vector<Tensor> Model::main_parameters() const {
  std::vector<Tensor> out;
  for (const auto& layer : encoder_) {
    out.push_back(layer.weight);
    out.push_back(layer.bias);
  }
  out.push_back(head_.weight);
  out.push_back(head_.bias);
  return out;
}

std::vector<Tensor> Model::svae_parameters() const {
  if (!has_svae_) return {};
  return {variational_.weight, variational_.bias, decoder_.weight,
          decoder_.bias,       svae_head_.weight,   svae_head_.bias};
}

std::vector<NamedTensor> Model::named_parameters() const {
  std::vector<NamedTensor> out;
  for (std::size_t i = 0; i < encoder_.size(); ++i) {
    append(out, "encoder." + std::to_string(i), encoder_[i]);
  }
  append(out, "head", head_);
  if (has_svae_) {
    append(out, "svae.variational", variational_);
    append(out, "svae.decoder", decoder_);
    append(out, "svae.head", svae_head_);
  }
  return out;
}

void Model::load(const std::vector<NamedTensor>& tensors) {
  std::map<std::string, const Tensor*> by_name;
  for (const auto& t : tensors) by_name[t.name] = &t.tensor;
  for (auto& [name, param] : named_parameters()) {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw std::invalid_argument("model load: missing tensor " + name);
    if (it->second->shape() != param.shape()) {
      throw ShapeError("model load: " + name + " has shape " + shape_str(it->second->shape()) +
                       ", expected " + shape_str(param.shape()));
    }
    auto dst = param.mutable_data();
    const auto src = it->second->data();
    std::copy(src.begin(), src.end(), dst.begin());
  }
}

Model Model::clone() const {
  Model copy = *this;
  auto deep = [](Linear& l) { l = Linear{l.weight.clone(), l.bias.clone()}; };
  for (auto& layer : copy.encoder_) deep(layer);
  deep(copy.head_);
  if (has_svae_) {
    deep(copy.variational_);
    deep(copy.decoder_);
    deep(copy.svae_head_);
  }
  return copy;
}

}  // namespace svae
