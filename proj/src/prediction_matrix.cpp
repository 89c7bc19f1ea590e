#include "sed/prediction_matrix.hpp"

#include <algorithm>
#include <cstdio>
#include <stdexcept>

#include "sed/binary_io.hpp"

namespace sed {
namespace io {

std::vector<std::byte> read_file(const std::filesystem::path& path) {
  std::FILE* f = std::fopen(path.c_str(), "rb");
  if (f == nullptr) throw IoError("cannot open " + path.string() + " for reading");
  std::vector<std::byte> bytes;
  std::byte chunk[1 << 16];
  std::size_t got = 0;
  while ((got = std::fread(chunk, 1, sizeof chunk, f)) > 0) {
    bytes.insert(bytes.end(), chunk, chunk + got);
  }
  const bool failed = std::ferror(f) != 0;
  std::fclose(f);
  if (failed) throw IoError("read error on " + path.string());
  return bytes;
}

void write_file(const std::filesystem::path& path, const std::vector<std::byte>& bytes) {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (f == nullptr) throw IoError("cannot open " + path.string() + " for writing");
  const std::size_t put = std::fwrite(bytes.data(), 1, bytes.size(), f);
  const bool closed = std::fclose(f) == 0;
  if (put != bytes.size() || !closed) throw IoError("write error on " + path.string());
}

}  // namespace io

PredictionMatrix PredictionMatrix::from_logits(Tensor3 logits) {
  PredictionMatrix pm;
  pm.probs = Tensor3(logits.dim0, logits.dim1, logits.dim2);
  for (std::size_t i = 0; i < logits.dim0; ++i) {
    for (std::size_t m = 0; m < logits.dim1; ++m) {
      softmax_into(logits.at(i, m), pm.probs.at(i, m));
    }
  }
  pm.logits = std::move(logits);
  return pm;
}

namespace {
constexpr std::uint32_t kSedpVersion = 1;
}

void save_predictions(const PredictionMatrix& pm, const std::filesystem::path& path) {
  io::ByteWriter w;
  w.magic("SEDP");
  w.put<std::uint32_t>(kSedpVersion);
  w.put<std::uint64_t>(pm.rows());
  w.put<std::uint32_t>(static_cast<std::uint32_t>(pm.members()));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(pm.classes()));
  for (double v : pm.logits.data) w.put<float>(static_cast<float>(v));
  for (double v : pm.probs.data) w.put<float>(static_cast<float>(v));
  io::write_file(path, w.bytes());
}

PredictionMatrix load_predictions(const std::filesystem::path& path) {
  const auto bytes = io::read_file(path);
  io::ByteReader r(bytes, path.string());
  r.expect_magic("SEDP");
  const auto version_at = r.offset();
  const auto version = r.get<std::uint32_t>("version");
  if (version != kSedpVersion) {
    throw ParseError(path.string() + ": unsupported SEDP version " + std::to_string(version),
                     version_at);
  }
  const auto n = r.get<std::uint64_t>("n");
  const auto members = r.get<std::uint32_t>("M");
  const auto classes = r.get<std::uint32_t>("C");
  const std::size_t count = static_cast<std::size_t>(n) * members * classes;
  std::vector<float> logits;
  std::vector<float> probs;
  r.get_array(logits, count, "logits");
  r.get_array(probs, count, "probs");
  r.expect_end();

  PredictionMatrix pm;
  pm.logits = Tensor3(n, members, classes);
  pm.probs = Tensor3(n, members, classes);
  std::copy(logits.begin(), logits.end(), pm.logits.data.begin());
  std::copy(probs.begin(), probs.end(), pm.probs.data.begin());
  return pm;
}

PredictionMatrix quantize_to_float(const PredictionMatrix& pm) {
  PredictionMatrix out = pm;
  for (double& v : out.logits.data) v = static_cast<float>(v);
  for (double& v : out.probs.data) v = static_cast<float>(v);
  return out;
}

}  // namespace sed
