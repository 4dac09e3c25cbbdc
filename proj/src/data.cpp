#include "lgg/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iterator>
#include <numbers>
#include <random>
#include <sstream>
#include <string>

#include "lgg/errors.hpp"

namespace lgg::data {

using ad::Tensor;

std::vector<std::size_t> Dataset::indices(Split s) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < split.size(); ++i)
    if (split[i] == s) out.push_back(i);
  return out;
}

Batch Dataset::gather(std::span<const std::size_t> rows) const {
  if (rows.empty()) throw UsageError("cannot gather an empty batch");
  const std::size_t d = dim();
  std::vector<double> x;
  x.reserve(rows.size() * d);
  Batch b;
  for (auto r : rows) {
    if (r >= size()) throw UsageError("row " + std::to_string(r) + " out of range");
    const auto row = features.data().subspan(r * d, d);
    x.insert(x.end(), row.begin(), row.end());
    b.y.push_back(labels[r]);
  }
  b.x = Tensor::matrix(rows.size(), d, std::move(x));
  return b;
}

void Dataset::validate() const {
  if (features.rank() != 2 || features.rows() != labels.size() || split.size() != labels.size()) {
    throw ValidationError("dataset: feature rows, labels and split tags disagree in count");
  }
  for (Split s : {Split::train, Split::test}) {
    std::vector<bool> seen(num_classes, false);
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= num_classes) {
        throw ValidationError("dataset: label " + std::to_string(labels[i]) + " at row " +
                              std::to_string(i) + " outside [0, " + std::to_string(num_classes) + ")");
      }
      if (split[i] == s) seen[static_cast<std::size_t>(labels[i])] = true;
    }
    for (std::size_t c = 0; c < num_classes; ++c) {
      if (!seen[c]) {
        throw ValidationError("dataset: class " + std::to_string(c) + " has no sample in the " +
                              (s == Split::train ? "train" : "test") + " split");
      }
    }
  }
}

Dataset concat(const Dataset& a, const Dataset& b) {
  if (a.dim() != b.dim()) throw ValidationError("concat: feature dimensions differ");
  Dataset out;
  std::vector<double> x(a.features.values());
  x.insert(x.end(), b.features.values().begin(), b.features.values().end());
  out.features = Tensor::matrix(a.size() + b.size(), a.dim(), std::move(x));
  out.labels = a.labels;
  out.labels.insert(out.labels.end(), b.labels.begin(), b.labels.end());
  out.split = a.split;
  out.split.insert(out.split.end(), b.split.begin(), b.split.end());
  out.num_classes = std::max(a.num_classes, b.num_classes);
  return out;
}

// ---------------------------------------------------------------- synthetic

std::vector<double> class_centers(const BlobsSpec& spec) {
  const std::size_t c = spec.classes, d = spec.dim;
  std::vector<double> centers(c * d, 0.0);
  if (spec.layout == CenterLayout::random) {
    std::mt19937_64 rng(spec.seed ^ 0x9e3779b97f4a7c15ULL);
    std::normal_distribution<double> n01(0.0, 1.0);
    for (std::size_t k = 0; k < c; ++k) {
      double norm = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        centers[k * d + j] = n01(rng);
        norm += centers[k * d + j] * centers[k * d + j];
      }
      norm = std::sqrt(norm);
      for (std::size_t j = 0; j < d; ++j) centers[k * d + j] /= norm;
    }
    return centers;
  }
  if (c > d + 1) {
    throw UsageError("simplex layout of " + std::to_string(c) + " classes needs dim >= " +
                     std::to_string(c - 1));
  }
  // Centered standard simplex in R^c, expressed in an orthonormal basis of
  // its (c-1)-dimensional span and padded with zeros.
  std::vector<std::vector<double>> verts(c, std::vector<double>(c, -1.0 / static_cast<double>(c)));
  for (std::size_t k = 0; k < c; ++k) verts[k][k] += 1.0;
  std::vector<std::vector<double>> basis;
  for (std::size_t k = 0; k + 1 < c; ++k) {
    std::vector<double> e = verts[k];
    for (const auto& q : basis) {
      double dot = 0.0;
      for (std::size_t j = 0; j < c; ++j) dot += e[j] * q[j];
      for (std::size_t j = 0; j < c; ++j) e[j] -= dot * q[j];
    }
    double norm = 0.0;
    for (double v : e) norm += v * v;
    norm = std::sqrt(norm);
    for (double& v : e) v /= norm;
    basis.push_back(std::move(e));
  }
  for (std::size_t k = 0; k < c; ++k) {
    double norm = 0.0;
    for (std::size_t b = 0; b < basis.size(); ++b) {
      double dot = 0.0;
      for (std::size_t j = 0; j < c; ++j) dot += verts[k][j] * basis[b][j];
      centers[k * d + b] = dot;
      norm += dot * dot;
    }
    norm = std::sqrt(norm);
    for (std::size_t b = 0; b < basis.size(); ++b) centers[k * d + b] /= norm;
  }
  return centers;
}

Dataset make_blobs(const BlobsSpec& spec) {
  if (spec.classes < 2) throw UsageError("make_blobs: needs at least 2 classes");
  if (spec.dim < 2) throw UsageError("make_blobs: needs dim >= 2");
  if (!(spec.separation >= 0.0)) throw UsageError("make_blobs: separation must be >= 0");
  if (spec.per_class == 0) throw UsageError("make_blobs: per_class must be positive");
  const auto centers = class_centers(spec);
  const std::size_t d = spec.dim;
  const std::size_t test_n = spec.test_per_class ? spec.test_per_class : spec.per_class;

  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> n01(0.0, 1.0);
  Dataset ds;
  ds.num_classes = spec.classes;
  std::vector<double> x;
  for (Split s : {Split::train, Split::test}) {
    const std::size_t n = s == Split::train ? spec.per_class : test_n;
    for (std::size_t k = 0; k < spec.classes; ++k) {
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < d; ++j) x.push_back(spec.separation * centers[k * d + j] + n01(rng));
        ds.labels.push_back(static_cast<int>(k));
        ds.split.push_back(s);
      }
    }
  }
  ds.features = Tensor::matrix(ds.labels.size(), d, std::move(x));
  return ds;
}

Dataset make_blobs(std::size_t classes, std::size_t per_class, std::size_t dim, double separation,
                   std::uint64_t seed) {
  BlobsSpec spec;
  spec.classes = classes;
  spec.per_class = per_class;
  spec.dim = dim;
  spec.separation = separation;
  spec.seed = seed;
  return make_blobs(spec);
}

Dataset make_rings(const RingsSpec& spec) {
  if (!(spec.noise >= 0.0)) throw UsageError("make_rings: noise must be >= 0");
  if (spec.per_class == 0) throw UsageError("make_rings: per_class must be positive");
  const std::size_t test_n = spec.test_per_class ? spec.test_per_class : spec.per_class;
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
  std::normal_distribution<double> n01(0.0, 1.0);
  Dataset ds;
  ds.num_classes = 2;
  std::vector<double> x;
  for (Split s : {Split::train, Split::test}) {
    const std::size_t n = s == Split::train ? spec.per_class : test_n;
    for (int k = 0; k < 2; ++k) {
      for (std::size_t i = 0; i < n; ++i) {
        const double a = angle(rng);
        const double r = (k == 0 ? 1.0 : 2.0) + spec.noise * n01(rng);
        x.push_back(r * std::cos(a));
        x.push_back(r * std::sin(a));
        ds.labels.push_back(k);
        ds.split.push_back(s);
      }
    }
  }
  ds.features = Tensor::matrix(ds.labels.size(), 2, std::move(x));
  return ds;
}

// ---------------------------------------------------------------- CSV

namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && (s[b] == ' ' || s[b] == '\t')) ++b;
  while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r')) --e;
  return std::string(s.substr(b, e - b));
}

std::vector<std::string> split_commas(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    out.push_back(trim(std::string_view(line).substr(start, pos == std::string::npos ? std::string::npos : pos - start)));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return out;
}

}  // namespace

Dataset load_csv_dataset(const std::filesystem::path& path, std::string_view label_column,
                         Split default_split) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path.string());
  const std::string where = path.string() + " line ";
  std::string line;
  std::size_t line_no = 0;

  std::vector<std::string> header;
  while (std::getline(is, line)) {
    ++line_no;
    if (!trim(line).empty()) {
      header = split_commas(line);
      break;
    }
  }
  if (header.empty()) throw FormatError(path.string() + ": missing header row");
  std::ptrdiff_t label_col = -1, split_col = -1;
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == label_column) label_col = static_cast<std::ptrdiff_t>(i);
    if (header[i] == "split") split_col = static_cast<std::ptrdiff_t>(i);
  }
  if (label_col < 0) {
    throw FormatError(where + std::to_string(line_no) + ": no column named '" + std::string(label_column) + "'");
  }
  const std::size_t features = header.size() - 1 - (split_col >= 0 ? 1 : 0);
  if (features == 0) throw FormatError(where + std::to_string(line_no) + ": no feature columns");

  Dataset ds;
  std::vector<double> x;
  int top = -1;
  while (std::getline(is, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto cells = split_commas(line);
    if (cells.size() != header.size()) {
      throw FormatError(where + std::to_string(line_no) + ": expected " + std::to_string(header.size()) +
                        " fields, got " + std::to_string(cells.size()));
    }
    Split s = default_split;
    for (std::size_t i = 0; i < cells.size(); ++i) {
      const auto& cell = cells[i];
      const std::string at = where + std::to_string(line_no) + ", column " + std::to_string(i + 1);
      if (static_cast<std::ptrdiff_t>(i) == split_col) {
        if (cell == "train") s = Split::train;
        else if (cell == "test") s = Split::test;
        else throw FormatError(at + ": split must be 'train' or 'test', got '" + cell + "'");
        continue;
      }
      char* end = nullptr;
      if (static_cast<std::ptrdiff_t>(i) == label_col) {
        const long v = std::strtol(cell.c_str(), &end, 10);
        if (cell.empty() || *end != '\0' || v < 0 || v > 1'000'000) {
          throw FormatError(at + ": label '" + cell + "' is not a nonnegative integer");
        }
        ds.labels.push_back(static_cast<int>(v));
        top = std::max(top, static_cast<int>(v));
        continue;
      }
      const double v = std::strtod(cell.c_str(), &end);
      if (cell.empty() || *end != '\0') throw FormatError(at + ": '" + cell + "' is not a number");
      if (!std::isfinite(v)) throw FormatError(at + ": non-finite feature value");
      x.push_back(v);
    }
    ds.split.push_back(s);
  }
  if (ds.labels.empty()) throw FormatError(path.string() + ": no data rows");
  ds.features = Tensor::matrix(ds.labels.size(), features, std::move(x));
  ds.num_classes = static_cast<std::size_t>(top) + 1;
  return ds;
}

// ---------------------------------------------------------------- IDX

namespace {

struct IdxArray {
  std::vector<std::size_t> dims;
  std::vector<unsigned char> payload;
};

IdxArray read_idx(const std::filesystem::path& path, unsigned expected_magic) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  const std::string name = path.string();
  if (bytes.size() < 4) throw FormatError(name + ": byte 0: truncated IDX magic number");
  const unsigned magic = (unsigned(bytes[0]) << 24) | (unsigned(bytes[1]) << 16) |
                         (unsigned(bytes[2]) << 8) | unsigned(bytes[3]);
  if (magic != expected_magic) {
    char buf[96];
    std::snprintf(buf, sizeof buf, ": byte 0: magic 0x%08x, expected 0x%08x", magic, expected_magic);
    throw FormatError(name + buf);
  }
  IdxArray out;
  const std::size_t ndims = bytes[3];
  std::size_t offset = 4;
  std::size_t count = 1;
  for (std::size_t d = 0; d < ndims; ++d) {
    if (bytes.size() < offset + 4) {
      throw FormatError(name + ": byte " + std::to_string(offset) + ": truncated dimension header");
    }
    const std::size_t n = (std::size_t(bytes[offset]) << 24) | (std::size_t(bytes[offset + 1]) << 16) |
                          (std::size_t(bytes[offset + 2]) << 8) | std::size_t(bytes[offset + 3]);
    out.dims.push_back(n);
    count *= n;
    offset += 4;
  }
  if (bytes.size() != offset + count) {
    throw FormatError(name + ": byte " + std::to_string(std::min(bytes.size(), offset + count)) +
                      ": payload holds " + std::to_string(bytes.size() - offset) + " bytes, header declares " +
                      std::to_string(count));
  }
  out.payload.assign(bytes.begin() + static_cast<std::ptrdiff_t>(offset), bytes.end());
  return out;
}

}  // namespace

Dataset load_idx_pair(const std::filesystem::path& images, const std::filesystem::path& labels, Split split) {
  const IdxArray img = read_idx(images, 0x00000803);
  const IdxArray lab = read_idx(labels, 0x00000801);
  const std::size_t n = img.dims[0];
  if (lab.dims[0] != n) {
    throw FormatError("IDX pair: " + std::to_string(n) + " images but " + std::to_string(lab.dims[0]) + " labels");
  }
  if (n == 0) throw FormatError("IDX pair: no samples");
  const std::size_t d = img.dims[1] * img.dims[2];
  Dataset ds;
  std::vector<double> x(img.payload.size());
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = static_cast<double>(img.payload[i]) / 255.0;
  ds.features = Tensor::matrix(n, d, std::move(x));
  int top = 0;
  for (unsigned char c : lab.payload) {
    ds.labels.push_back(c);
    top = std::max(top, static_cast<int>(c));
  }
  ds.split.assign(n, split);
  ds.num_classes = static_cast<std::size_t>(top) + 1;
  return ds;
}

// ---------------------------------------------------------------- batching

StratifiedBatches::StratifiedBatches(const Dataset& ds, Split split, std::size_t batch_size,
                                     std::uint64_t seed, bool stratified)
    : seed_(seed) {
  if (!stratified) {
    if (batch_size == 0) throw UsageError("batch size must be positive");
    by_class_.resize(1);
    by_class_[0] = ds.indices(split);
    if (by_class_[0].empty()) throw DegenerateInputError("batches: the split is empty");
    batches_ = (by_class_[0].size() + batch_size - 1) / batch_size;
    return;
  }
  if (batch_size < 2 * ds.num_classes) {
    throw UsageError("batch size " + std::to_string(batch_size) + " below 2 x " +
                     std::to_string(ds.num_classes) + " classes");
  }
  by_class_.resize(ds.num_classes);
  std::size_t total = 0;
  for (auto i : ds.indices(split)) {
    by_class_[static_cast<std::size_t>(ds.labels[i])].push_back(i);
    ++total;
  }
  std::vector<std::size_t> counts;
  for (const auto& c : by_class_) counts.push_back(c.size());
  std::sort(counts.rbegin(), counts.rend());
  if (counts.size() < 2 || counts[1] == 0) {
    throw DegenerateInputError("stratified batches: split holds fewer than two classes");
  }
  // Every batch receives a sample of the two largest classes as long as there
  // are no more batches than members of the second largest one.
  batches_ = std::min((total + batch_size - 1) / batch_size, counts[1]);
}

std::vector<std::vector<std::size_t>> StratifiedBatches::epoch(std::size_t index) const {
  std::seed_seq seq{static_cast<std::uint32_t>(seed_), static_cast<std::uint32_t>(seed_ >> 32),
                    static_cast<std::uint32_t>(index), 0x5eedu};
  std::mt19937_64 rng(seq);
  std::vector<std::size_t> order;
  for (auto members : by_class_) {
    std::shuffle(members.begin(), members.end(), rng);
    order.insert(order.end(), members.begin(), members.end());
  }
  // Deal class-contiguous samples round-robin: class shares stay proportional
  // and batch sizes differ by at most one.
  std::vector<std::vector<std::size_t>> out(batches_);
  for (std::size_t t = 0; t < order.size(); ++t) out[t % batches_].push_back(order[t]);
  for (auto& b : out) std::shuffle(b.begin(), b.end(), rng);
  std::shuffle(out.begin(), out.end(), rng);
  return out;
}

}  // namespace lgg::data
