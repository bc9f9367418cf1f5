#include "svae/checkpoint.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include "svae/binary_io.hpp"

namespace svae {

namespace {

std::filesystem::path with_suffix(const std::filesystem::path& stem, const char* suffix) {
  return std::filesystem::path(stem.string() + suffix);
}

}  // namespace

void save_checkpoint(const std::filesystem::path& stem, const std::vector<NamedTensor>& tensors) {
  if (stem.has_parent_path()) std::filesystem::create_directories(stem.parent_path());
  std::ofstream manifest(with_suffix(stem, ".manifest"));
  std::ofstream blob(with_suffix(stem, ".bin"), std::ios::binary);
  if (!manifest || !blob) throw std::runtime_error("checkpoint: cannot write " + stem.string());
  manifest << "svae-checkpoint 1\n";
  std::size_t offset = 0;
  for (const auto& [name, tensor] : tensors) {
    if (name.empty() || name.find_first_of(" \t\n") != std::string::npos) {
      throw std::invalid_argument("checkpoint: invalid tensor name '" + name + "'");
    }
    manifest << name << ' ' << tensor.rank();
    for (auto extent : tensor.shape()) manifest << ' ' << extent;
    manifest << ' ' << offset << ' ' << tensor.numel() << '\n';
    io::write_f64(blob, tensor.data());
    offset += tensor.numel();
  }
  if (!manifest || !blob) throw std::runtime_error("checkpoint: write failed for " + stem.string());
}

std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& stem) {
  std::ifstream manifest(with_suffix(stem, ".manifest"));
  std::ifstream blob(with_suffix(stem, ".bin"), std::ios::binary);
  if (!manifest || !blob) throw std::runtime_error("checkpoint: cannot read " + stem.string());
  std::string magic;
  int version = 0;
  manifest >> magic >> version;
  if (magic != "svae-checkpoint" || version != 1) {
    throw std::runtime_error("checkpoint: bad manifest header in " + stem.string());
  }
  std::vector<NamedTensor> out;
  std::size_t expected_offset = 0;
  std::string line;
  std::getline(manifest, line);
  while (std::getline(manifest, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string name;
    std::size_t rank = 0;
    row >> name >> rank;
    Shape shape(rank);
    for (auto& extent : shape) row >> extent;
    std::size_t offset = 0;
    std::size_t count = 0;
    row >> offset >> count;
    if (!row || offset != expected_offset || count != shape_numel(shape)) {
      throw std::runtime_error("checkpoint: malformed manifest entry '" + line + "'");
    }
    out.push_back({name, Tensor(shape, io::read_f64(blob, count))});
    expected_offset += count;
  }
  if (blob.peek() != std::char_traits<char>::eof()) {
    throw std::runtime_error("checkpoint: trailing bytes in " + stem.string() + ".bin");
  }
  return out;
}

}  // namespace svae
