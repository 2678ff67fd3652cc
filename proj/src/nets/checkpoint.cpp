#include "pidon/nets/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "pidon/errors.hpp"

namespace pidon::nets {
namespace {

constexpr const char* kMagic = "pidon-checkpoint v1";

void to_little_endian(char* bytes, std::size_t count) {
  if constexpr (std::endian::native == std::endian::big) {
    for (std::size_t i = 0; i < count; ++i) std::reverse(bytes + 8 * i, bytes + 8 * i + 8);
  }
}

}  // namespace

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out << kMagic << '\n';
  for (const auto& [k, v] : ckpt.manifest) {
    if (k.find('=') != std::string::npos || k.find('\n') != std::string::npos ||
        v.find('\n') != std::string::npos) {
      throw ConfigError("checkpoint manifest entry is not a single key=value line: " + k);
    }
    out << k << '=' << v << '\n';
  }
  out << "tensors=" << ckpt.tensors.count() << '\n' << "end\n";
  for (std::size_t i = 0; i < ckpt.tensors.count(); ++i) {
    const ad::Mat& m = ckpt.tensors.tensor(i);
    out << ckpt.tensors.name(i) << ' ' << m.rows() << ' ' << m.cols() << '\n';
    std::string bytes(static_cast<std::size_t>(m.size()) * 8, '\0');
    std::memcpy(bytes.data(), m.data(), bytes.size());
    to_little_endian(bytes.data(), static_cast<std::size_t>(m.size()));
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  }
  if (!out) throw IoError("failed while writing checkpoint " + path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kMagic) throw ArtifactMismatch(path.string() + " is not a checkpoint");
  Checkpoint ckpt;
  std::size_t count = 0;
  bool ended = false;
  while (std::getline(in, line)) {
    if (line == "end") {
      ended = true;
      break;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ArtifactMismatch("malformed manifest line in " + path.string());
    const std::string key = line.substr(0, eq);
    if (key == "tensors") count = std::stoull(line.substr(eq + 1));
    else ckpt.manifest[key] = line.substr(eq + 1);
  }
  if (!ended) throw ArtifactMismatch("truncated manifest in " + path.string());
  for (std::size_t i = 0; i < count; ++i) {
    if (!std::getline(in, line)) throw ArtifactMismatch("missing tensor header in " + path.string());
    std::istringstream hs(line);
    std::string name;
    ad::Index rows = 0, cols = 0;
    if (!(hs >> name >> rows >> cols) || rows < 0 || cols < 0) {
      throw ArtifactMismatch("bad tensor header '" + line + "' in " + path.string());
    }
    ad::Mat m(rows, cols);
    std::string bytes(static_cast<std::size_t>(rows * cols) * 8, '\0');
    in.read(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (in.gcount() != static_cast<std::streamsize>(bytes.size())) {
      throw ArtifactMismatch("truncated tensor " + name + " in " + path.string());
    }
    to_little_endian(bytes.data(), static_cast<std::size_t>(rows * cols));
    std::memcpy(m.data(), bytes.data(), bytes.size());
    ckpt.tensors.add(name, std::move(m));
  }
  return ckpt;
}

}  // namespace pidon::nets
