#include "sed/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

#include "sed/binary_io.hpp"
#include "sed/error.hpp"
#include "sed/rng.hpp"

namespace sed {
namespace {

constexpr std::uint32_t kSedfVersion = 1;

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
    while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
    cells.push_back(cell);
  }
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

template <typename T>
T parse_cell(const std::string& cell, std::size_t line_no, const std::string& source) {
  T value{};
  const auto* first = cell.data();
  const auto* last = cell.data() + cell.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc{} || ptr != last) {
    throw ParseError(source + ": cannot parse '" + cell + "' on line " + std::to_string(line_no),
                     line_no);
  }
  return value;
}

FeatureDataset load_sedf(const std::filesystem::path& path) {
  const auto bytes = io::read_file(path);
  io::ByteReader r(bytes, path.string());
  r.expect_magic("SEDF");
  const auto version_at = r.offset();
  const auto version = r.get<std::uint32_t>("version");
  if (version != kSedfVersion) {
    throw ParseError(path.string() + ": unsupported sedf version " + std::to_string(version),
                     version_at);
  }
  FeatureDataset ds;
  ds.n = r.get<std::uint64_t>("N");
  ds.d = r.get<std::uint32_t>("D");
  ds.c = r.get<std::uint32_t>("C");
  const auto has_labels = r.get<std::uint8_t>("has_labels");
  const auto has_groups = r.get<std::uint8_t>("has_groups");
  const auto pad_at = r.offset();
  if (r.get<std::uint16_t>("padding") != 0) {
    throw ParseError(path.string() + ": non-zero header padding", pad_at);
  }
  if (has_labels > 1 || has_groups > 1) {
    throw ParseError(path.string() + ": flag bytes must be 0 or 1", pad_at - 2);
  }
  if (ds.d != 0 && ds.n > r.remaining() / (sizeof(float) * ds.d)) {
    throw ParseError(path.string() + ": truncated while reading features", r.offset());
  }
  r.get_array(ds.features, ds.n * ds.d, "features");
  if (has_labels != 0) {
    const auto labels_at = r.offset();
    std::vector<std::uint32_t> labels;
    r.get_array(labels, ds.n, "labels");
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] >= ds.c) {
        throw ParseError(path.string() + ": label " + std::to_string(labels[i]) +
                             " out of range for C=" + std::to_string(ds.c),
                         labels_at + i * sizeof(std::uint32_t));
      }
    }
    ds.labels = std::move(labels);
  }
  if (has_groups != 0) {
    std::vector<std::uint32_t> groups;
    r.get_array(groups, ds.n, "groups");
    ds.groups = std::move(groups);
  }
  r.expect_end();
  return ds;
}

FeatureDataset load_csv(const std::filesystem::path& path, std::uint32_t csv_classes) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string() + " for reading");
  const std::string source = path.string();
  std::string line;
  if (!std::getline(in, line)) throw ParseError(source + ": missing header row", 1);
  const auto header = split_csv_line(line);
  if (header.empty()) throw ParseError(source + ": empty header row", 1);
  const bool labelled = header.back() == "label";
  const std::size_t d = header.size() - (labelled ? 1 : 0);
  if (d == 0) throw ParseError(source + ": no feature columns", 1);

  FeatureDataset ds;
  ds.d = static_cast<std::uint32_t>(d);
  std::vector<std::uint32_t> labels;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != header.size()) {
      throw ParseError(source + ": expected " + std::to_string(header.size()) + " columns on line " +
                           std::to_string(line_no),
                       line_no);
    }
    for (std::size_t j = 0; j < d; ++j) {
      ds.features.push_back(parse_cell<float>(cells[j], line_no, source));
    }
    if (labelled) labels.push_back(parse_cell<std::uint32_t>(cells.back(), line_no, source));
    ++ds.n;
  }
  if (labelled) {
    const std::uint32_t seen = labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end());
    if (csv_classes == 0) {
      ds.c = std::max<std::uint32_t>(2, seen + 1);
    } else {
      if (seen >= csv_classes) {
        throw ParseError(source + ": label " + std::to_string(seen) + " out of range for C=" +
                             std::to_string(csv_classes),
                         line_no);
      }
      ds.c = csv_classes;
    }
    ds.labels = std::move(labels);
  } else {
    ds.c = csv_classes;
  }
  return ds;
}

}  // namespace

std::vector<double> FeatureDataset::features_as_double() const {
  return {features.begin(), features.end()};
}

void FeatureDataset::validate() const {
  if (n == 0) throw std::invalid_argument("dataset has no rows");
  if (d == 0) throw std::invalid_argument("dataset has zero feature dimension");
  if (features.size() != n * d) throw std::invalid_argument("feature buffer size != n*d");
  if (!std::all_of(features.begin(), features.end(), [](float v) { return std::isfinite(v); })) {
    throw std::invalid_argument("dataset contains non-finite features");
  }
  if (labels) {
    if (labels->size() != n) throw std::invalid_argument("label count != n");
    for (auto y : *labels) {
      if (y >= c) throw std::invalid_argument("label " + std::to_string(y) + " >= C");
    }
  }
  if (groups && groups->size() != n) throw std::invalid_argument("group count != n");
}

DatasetFormat format_for(const std::filesystem::path& path) {
  return path.extension() == ".csv" ? DatasetFormat::csv : DatasetFormat::sedf;
}

FeatureDataset load_dataset(const std::filesystem::path& path, DatasetFormat format,
                            std::uint32_t csv_classes) {
  return format == DatasetFormat::csv ? load_csv(path, csv_classes) : load_sedf(path);
}

FeatureDataset load_dataset(const std::filesystem::path& path) {
  return load_dataset(path, format_for(path));
}

void save_dataset(const FeatureDataset& ds, const std::filesystem::path& path) {
  if (ds.features.size() != ds.n * ds.d) throw std::invalid_argument("feature buffer size != n*d");
  io::ByteWriter w;
  w.magic("SEDF");
  w.put<std::uint32_t>(kSedfVersion);
  w.put<std::uint64_t>(ds.n);
  w.put<std::uint32_t>(ds.d);
  w.put<std::uint32_t>(ds.c);
  w.put<std::uint8_t>(ds.labels ? 1 : 0);
  w.put<std::uint8_t>(ds.groups ? 1 : 0);
  w.zeros(2);
  for (float v : ds.features) w.put<float>(v);
  if (ds.labels) {
    for (auto y : *ds.labels) w.put<std::uint32_t>(y);
  }
  if (ds.groups) {
    for (auto g : *ds.groups) w.put<std::uint32_t>(g);
  }
  io::write_file(path, w.bytes());
}

void save_dataset_csv(const FeatureDataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  for (std::uint32_t j = 0; j < ds.d; ++j) out << (j ? "," : "") << 'f' << j;
  if (ds.labels) out << ",label";
  out << '\n';
  char buf[32];
  for (std::size_t i = 0; i < ds.n; ++i) {
    const auto r = ds.row(i);
    for (std::uint32_t j = 0; j < ds.d; ++j) {
      auto res = std::to_chars(buf, buf + sizeof buf, r[j]);
      out << (j ? "," : "") << std::string_view(buf, res.ptr - buf);
    }
    if (ds.labels) out << ',' << (*ds.labels)[i];
    out << '\n';
  }
  if (!out) throw IoError("write error on " + path.string());
}

std::vector<std::vector<std::size_t>> iterate_batches(std::size_t n, const BatchPlan& plan,
                                                      std::uint64_t epoch) {
  if (plan.batch_size < 2) throw std::invalid_argument("batch_size must be >= 2");
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(derive_seed(plan.seed, epoch));
  rng.shuffle(std::span<std::size_t>(order));

  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < n; start += plan.batch_size) {
    const std::size_t stop = std::min(n, start + plan.batch_size);
    if (plan.drop_last && stop - start < plan.batch_size) break;
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(stop));
  }
  return batches;
}

std::vector<std::vector<std::size_t>> iterate_batches(const FeatureDataset& ds,
                                                      const BatchPlan& plan, std::uint64_t epoch) {
  return iterate_batches(ds.n, plan, epoch);
}

namespace {

// Magnitude of a cue value; its sign carries the (dis)agreement.
double cue_magnitude(Rng& rng) {
  return 0.5 + rng.uniform01();
}

FeatureDataset make_split(Rng& rng, std::size_t n, std::uint32_t d_noise, double spurious_corr) {
  FeatureDataset ds;
  ds.n = n;
  ds.d = 2 + d_noise;
  ds.c = 2;
  ds.features.reserve(n * ds.d);
  std::vector<std::uint32_t> labels(n);
  std::vector<std::uint32_t> groups(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint32_t y = rng.bernoulli(0.5) ? 1 : 0;
    const double sign = y == 1 ? 1.0 : -1.0;
    const bool core_agrees = rng.bernoulli(kCoreCueAgreement);
    const bool spurious_agrees = rng.bernoulli(spurious_corr);
    ds.features.push_back(static_cast<float>((core_agrees ? sign : -sign) * cue_magnitude(rng)));
    ds.features.push_back(
        static_cast<float>((spurious_agrees ? sign : -sign) * cue_magnitude(rng)));
    for (std::uint32_t j = 0; j < d_noise; ++j) ds.features.push_back(static_cast<float>(rng.normal()));
    labels[i] = y;
    groups[i] = 2 * y + (spurious_agrees ? 1 : 0);
  }
  ds.labels = std::move(labels);
  ds.groups = std::move(groups);
  return ds;
}

}  // namespace

SyntheticSplits gen_synthetic_shortcut(const SyntheticParams& params) {
  if (!(params.spurious_corr >= 0.0 && params.spurious_corr <= 1.0)) {
    throw std::invalid_argument("spurious_corr must lie in [0, 1]");
  }
  Rng train_rng(derive_seed(params.seed, "synthetic/train"));
  Rng id_rng(derive_seed(params.seed, "synthetic/test_id"));
  Rng ood_rng(derive_seed(params.seed, "synthetic/test_ood"));
  return {make_split(train_rng, params.n_train, params.d_noise, params.spurious_corr),
          make_split(id_rng, params.n_test, params.d_noise, params.spurious_corr),
          make_split(ood_rng, params.n_test, params.d_noise, 0.5)};
}

std::vector<std::size_t> select_low_confidence(const FeatureDataset& ds,
                                               const PredictionMatrix& probs, double threshold) {
  if (!(threshold > 0.0 && threshold <= 1.0)) {
    throw std::invalid_argument("confidence threshold must lie in (0, 1]");
  }
  if (probs.rows() != ds.n) throw std::invalid_argument("prediction rows != dataset rows");
  if (probs.members() != 1) throw std::invalid_argument("expected predictions of a single model");
  std::vector<std::size_t> picked;
  for (std::size_t i = 0; i < ds.n; ++i) {
    const auto p = probs.member_probs(i, 0);
    if (*std::max_element(p.begin(), p.end()) < threshold) picked.push_back(i);
  }
  return picked;
}

}  // namespace sed
