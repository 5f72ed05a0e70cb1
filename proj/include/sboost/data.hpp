#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "sboost/matrix.hpp"
#include "sboost/model.hpp"

namespace sboost {

// Column-wise multimodal dataset: one feature matrix per modality, integer
// labels, and a per-modality presence mask.
struct Dataset {
  std::size_t num_classes = 0;
  std::vector<std::string> names;
  std::vector<Matrix> features;                  // [o] is N × D_o
  std::vector<std::vector<std::uint8_t>> present;  // [o][i]
  std::vector<std::size_t> labels;

  std::size_t size() const { return labels.size(); }
  std::size_t num_modalities() const { return names.size(); }
  std::size_t dim(std::size_t o) const { return features.at(o).cols(); }

  std::optional<std::size_t> find(std::string_view name) const {
    for (std::size_t o = 0; o < names.size(); ++o)
      if (names[o] == name) return o;
    return std::nullopt;
  }

  Matrix one_hot(std::span<const std::size_t> idx) const {
    Matrix y(idx.size(), num_classes);
    for (std::size_t r = 0; r < idx.size(); ++r) y(r, labels[idx[r]]) = 1.0;
    return y;
  }

  Matrix rows(std::size_t o, std::span<const std::size_t> idx) const {
    const Matrix& f = features.at(o);
    Matrix out(idx.size(), f.cols());
    for (std::size_t r = 0; r < idx.size(); ++r) {
      auto src = f.row(idx[r]);
      std::copy(src.begin(), src.end(), out.row(r).begin());
    }
    return out;
  }

  Dataset subset(std::span<const std::size_t> idx) const {
    Dataset d;
    d.num_classes = num_classes;
    d.names = names;
    for (std::size_t o = 0; o < names.size(); ++o) {
      d.features.push_back(rows(o, idx));
      std::vector<std::uint8_t> m(idx.size());
      for (std::size_t r = 0; r < idx.size(); ++r) m[r] = present[o][idx[r]];
      d.present.push_back(std::move(m));
    }
    for (std::size_t i : idx) d.labels.push_back(labels[i]);
    return d;
  }

  void validate() const {
    if (names.size() != features.size() || names.size() != present.size())
      throw std::invalid_argument("dataset: modality bookkeeping mismatch");
    for (std::size_t o = 0; o < names.size(); ++o) {
      if (features[o].rows() != labels.size() || present[o].size() != labels.size())
        throw std::invalid_argument("dataset: modality '" + names[o] + "' row count mismatch");
    }
    for (std::size_t l : labels)
      if (l >= num_classes) throw std::invalid_argument("dataset: label " + std::to_string(l) + " out of range");
  }

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

struct SyntheticModality {
  std::string name;
  std::size_t dim = 16;
  double separation = 1.0;  // pairwise distance between class means
  double noise = 1.0;       // per-coordinate gaussian std
};

struct SyntheticSpec {
  std::size_t num_samples = 2000;
  std::size_t num_classes = 6;
  std::vector<SyntheticModality> modalities;
  std::uint64_t seed = 0;

  void validate() const {
    if (num_classes < 2) throw std::invalid_argument("synthetic: need K >= 2");
    if (num_samples < num_classes) throw std::invalid_argument("synthetic: need N >= K");
    if (modalities.empty()) throw std::invalid_argument("synthetic: no modalities");
    for (const auto& m : modalities) {
      if (m.dim < num_classes)
        throw std::invalid_argument("synthetic: modality '" + m.name + "' needs dim >= K for simplex means");
      if (!(m.separation >= 0.0)) throw std::invalid_argument("synthetic: separation must be >= 0");
      if (!(m.noise > 0.0)) throw std::invalid_argument("synthetic: noise must be > 0");
    }
  }
};

// Orthonormal K columns in R^D (Gram-Schmidt on gaussian draws).
inline Matrix random_orthonormal_columns(std::size_t d, std::size_t k, Rng& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  Matrix q(d, k);
  for (std::size_t c = 0; c < k; ++c) {
    for (;;) {
      for (std::size_t r = 0; r < d; ++r) q(r, c) = g(rng);
      for (std::size_t p = 0; p < c; ++p) {
        double dot = 0.0;
        for (std::size_t r = 0; r < d; ++r) dot += q(r, c) * q(r, p);
        for (std::size_t r = 0; r < d; ++r) q(r, c) -= dot * q(r, p);
      }
      double n = 0.0;
      for (std::size_t r = 0; r < d; ++r) n += q(r, c) * q(r, c);
      n = std::sqrt(n);
      if (n < 1e-8) continue;
      for (std::size_t r = 0; r < d; ++r) q(r, c) /= n;
      break;
    }
  }
  return q;
}

// Class means of one modality: vertices of a regular simplex with edge
// length `separation`, rotated into R^D. Rows are classes.
inline Matrix simplex_means(const SyntheticModality& m, std::size_t k, Rng& rng) {
  const Matrix basis = random_orthonormal_columns(m.dim, k, rng);
  const double s = m.separation / std::sqrt(2.0);
  Matrix means(k, m.dim);
  for (std::size_t c = 0; c < k; ++c)
    for (std::size_t r = 0; r < m.dim; ++r) means(c, r) = s * basis(r, c);
  return means;
}

// Balanced labels (sample i has label i mod K before shuffling) and
// per-modality gaussian clusters around simplex means.
inline Dataset gen_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  Dataset d;
  d.num_classes = spec.num_classes;
  d.labels.resize(spec.num_samples);
  for (std::size_t i = 0; i < spec.num_samples; ++i) d.labels[i] = i % spec.num_classes;
  std::shuffle(d.labels.begin(), d.labels.end(), rng);
  std::normal_distribution<double> g(0.0, 1.0);
  for (const auto& m : spec.modalities) {
    const Matrix means = simplex_means(m, spec.num_classes, rng);
    Matrix x(spec.num_samples, m.dim);
    for (std::size_t i = 0; i < spec.num_samples; ++i)
      for (std::size_t r = 0; r < m.dim; ++r) x(i, r) = means(d.labels[i], r) + m.noise * g(rng);
    d.names.push_back(m.name);
    d.features.push_back(std::move(x));
    d.present.emplace_back(spec.num_samples, 1);
  }
  return d;
}

// Per-class empirical centroids of modality o.
inline Matrix class_centroids(const Dataset& d, std::size_t o) {
  Matrix c(d.num_classes, d.dim(o));
  std::vector<std::size_t> n(d.num_classes, 0);
  for (std::size_t i = 0; i < d.size(); ++i) {
    auto row = d.features[o].row(i);
    for (std::size_t r = 0; r < row.size(); ++r) c(d.labels[i], r) += row[r];
    ++n[d.labels[i]];
  }
  for (std::size_t k = 0; k < d.num_classes; ++k)
    if (n[k] > 0)
      for (std::size_t r = 0; r < c.cols(); ++r) c(k, r) /= static_cast<double>(n[k]);
  return c;
}

// ---------------------------------------------------------------------------
// Feature file (text, UTF-8):
//   #mmfeat v1 K=<k> modalities=<name:dim,...>
//   <label>;<m1 comma-separated floats>;<m2 ...>
// ---------------------------------------------------------------------------

class FormatError : public std::runtime_error {
 public:
  FormatError(std::size_t line, const std::string& msg)
      : std::runtime_error("line " + std::to_string(line) + ": " + msg), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

namespace detail {

inline std::vector<std::string> split_on(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = s.find(sep, start);
    out.emplace_back(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline double parse_double(const std::string& tok, std::size_t line) {
  std::istringstream is(tok);
  is.imbue(std::locale::classic());
  double v;
  if (!(is >> v) || !(is >> std::ws).eof()) throw FormatError(line, "bad number '" + tok + "'");
  if (!std::isfinite(v)) throw FormatError(line, "non-finite value '" + tok + "'");
  return v;
}

}  // namespace detail

inline void write_features(const Dataset& d, std::ostream& os) {
  d.validate();
  os << "#mmfeat v1 K=" << d.num_classes << " modalities=";
  for (std::size_t o = 0; o < d.num_modalities(); ++o) os << (o ? "," : "") << d.names[o] << ':' << d.dim(o);
  os << '\n';
  std::ostringstream line;
  line.imbue(std::locale::classic());
  line << std::setprecision(17);
  for (std::size_t i = 0; i < d.size(); ++i) {
    line.str("");
    line << d.labels[i];
    for (std::size_t o = 0; o < d.num_modalities(); ++o) {
      line << ';';
      auto row = d.features[o].row(i);
      for (std::size_t r = 0; r < row.size(); ++r) line << (r ? "," : "") << row[r];
    }
    os << line.str() << '\n';
  }
}

inline void save_features(const Dataset& d, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open '" + path + "' for writing");
  write_features(d, os);
}

inline Dataset read_features(std::istream& is) {
  std::string header;
  if (!std::getline(is, header) || header.empty()) throw FormatError(1, "no samples (empty file)");
  std::istringstream hs(header);
  std::string magic, version, kfield, mfield, extra;
  hs >> magic >> version >> kfield >> mfield;
  if (magic != "#mmfeat" || version != "v1") throw FormatError(1, "expected header '#mmfeat v1 ...'");
  if (kfield.rfind("K=", 0) != 0 || mfield.rfind("modalities=", 0) != 0 || (hs >> extra))
    throw FormatError(1, "malformed header");
  Dataset d;
  try {
    d.num_classes = std::stoul(kfield.substr(2));
  } catch (const std::exception&) {
    throw FormatError(1, "bad class count '" + kfield + "'");
  }
  if (d.num_classes < 1) throw FormatError(1, "class count must be >= 1");
  std::vector<std::size_t> dims;
  for (const auto& item : detail::split_on(mfield.substr(11), ',')) {
    const auto colon = item.find(':');
    if (colon == std::string::npos || colon == 0) throw FormatError(1, "bad modality entry '" + item + "'");
    d.names.push_back(item.substr(0, colon));
    try {
      dims.push_back(std::stoul(item.substr(colon + 1)));
    } catch (const std::exception&) {
      throw FormatError(1, "bad modality dim in '" + item + "'");
    }
    if (dims.back() == 0) throw FormatError(1, "modality '" + d.names.back() + "' has zero dim");
  }
  std::vector<std::vector<double>> cols(dims.size());
  std::string line;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto parts = detail::split_on(line, ';');
    if (parts.size() != dims.size() + 1)
      throw FormatError(lineno, "expected " + std::to_string(dims.size() + 1) + " ';'-separated fields, got " +
                                    std::to_string(parts.size()));
    std::size_t label;
    try {
      std::size_t pos = 0;
      label = std::stoul(parts[0], &pos);
      if (pos != parts[0].size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw FormatError(lineno, "bad label '" + parts[0] + "'");
    }
    if (label >= d.num_classes) throw FormatError(lineno, "label " + std::to_string(label) + " >= K");
    d.labels.push_back(label);
    for (std::size_t o = 0; o < dims.size(); ++o) {
      const auto toks = detail::split_on(parts[o + 1], ',');
      if (toks.size() != dims[o])
        throw FormatError(lineno, "modality '" + d.names[o] + "' has " + std::to_string(toks.size()) +
                                      " values, header says " + std::to_string(dims[o]));
      for (const auto& tok : toks) cols[o].push_back(detail::parse_double(tok, lineno));
    }
  }
  if (d.labels.empty()) throw FormatError(lineno, "no samples");
  for (std::size_t o = 0; o < dims.size(); ++o) {
    d.features.emplace_back(d.labels.size(), dims[o], std::move(cols[o]));
    d.present.emplace_back(d.labels.size(), 1);
  }
  return d;
}

inline Dataset load_features(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open feature file '" + path + "'");
  return read_features(is);
}

struct Splits {
  Dataset train, val, test;
};

// Stratified, seeded three-way split.
inline Splits split(const Dataset& d, double train_frac, double val_frac, std::uint64_t seed) {
  if (train_frac < 0.0 || val_frac < 0.0 || train_frac + val_frac > 1.0 + 1e-12)
    throw std::invalid_argument("split: fractions must be non-negative and sum to <= 1");
  Rng rng(seed);
  std::vector<std::vector<std::size_t>> by_class(d.num_classes);
  for (std::size_t i = 0; i < d.size(); ++i) by_class[d.labels[i]].push_back(i);
  std::vector<std::size_t> tr, va, te;
  for (auto& idx : by_class) {
    std::shuffle(idx.begin(), idx.end(), rng);
    const double n = static_cast<double>(idx.size());
    const auto n_tr = static_cast<std::size_t>(std::floor(n * train_frac + 0.5));
    const auto n_trva = std::min(idx.size(), static_cast<std::size_t>(std::floor(n * (train_frac + val_frac) + 0.5)));
    for (std::size_t r = 0; r < idx.size(); ++r) (r < n_tr ? tr : r < n_trva ? va : te).push_back(idx[r]);
  }
  std::shuffle(tr.begin(), tr.end(), rng);
  std::shuffle(va.begin(), va.end(), rng);
  std::shuffle(te.begin(), te.end(), rng);
  return Splits{d.subset(tr), d.subset(va), d.subset(te)};
}

struct PerturbationSpec {
  std::size_t modality = 0;
  double noise_rate = 0.0;    // percent of samples receiving gaussian noise
  double noise_scale = 1.0;   // multiple of the modality's feature std
  double missing_rate = 0.0;  // percent of samples with the modality dropped
  std::uint64_t seed = 0;

  bool is_identity() const { return noise_rate == 0.0 && missing_rate == 0.0; }

  void validate() const {
    if (!(noise_rate >= 0.0 && noise_rate <= 100.0)) throw std::invalid_argument("perturb: noise_rate outside [0,100]");
    if (!(missing_rate >= 0.0 && missing_rate <= 100.0))
      throw std::invalid_argument("perturb: missing_rate outside [0,100]");
    if (!(noise_scale >= 0.0)) throw std::invalid_argument("perturb: noise_scale must be >= 0");
  }
};

inline double feature_std(const Matrix& x) {
  if (x.empty()) return 0.0;
  double mean = 0.0;
  for (double v : x.values()) mean += v;
  mean /= static_cast<double>(x.size());
  double var = 0.0;
  for (double v : x.values()) var += (v - mean) * (v - mean);
  return std::sqrt(var / static_cast<double>(x.size()));
}

// round-half-up of rate% of n
inline std::size_t affected_count(double rate_percent, std::size_t n) {
  return static_cast<std::size_t>(std::floor(rate_percent / 100.0 * static_cast<double>(n) + 0.5));
}

// Affected samples are a prefix of a seeded permutation, and each sample's
// noise comes from its own stream, so a higher rate perturbs a superset of
// the samples a lower rate perturbs, identically.
inline Dataset perturb(const Dataset& d, const PerturbationSpec& spec) {
  spec.validate();
  if (spec.modality >= d.num_modalities()) throw std::invalid_argument("perturb: modality index out of range");
  Dataset out = d;
  const std::size_t n = d.size();
  const std::size_t o = spec.modality;
  auto order = [&](std::uint64_t salt) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng(mix_seed(spec.seed, salt));
    std::shuffle(idx.begin(), idx.end(), rng);
    return idx;
  };
  if (spec.noise_rate > 0.0) {
    const double scale = spec.noise_scale * feature_std(d.features[o]);
    const auto idx = order(0x6e6f6973ULL);
    const std::size_t k = affected_count(spec.noise_rate, n);
    for (std::size_t r = 0; r < k; ++r) {
      const std::size_t i = idx[r];
      Rng rng(mix_seed(mix_seed(spec.seed, 0x67617573ULL), i));
      std::normal_distribution<double> g(0.0, scale);
      for (double& v : out.features[o].row(i)) v += g(rng);
    }
  }
  if (spec.missing_rate > 0.0) {
    const auto idx = order(0x6d697373ULL);
    const std::size_t k = affected_count(spec.missing_rate, n);
    for (std::size_t r = 0; r < k; ++r) {
      const std::size_t i = idx[r];
      out.present[o][i] = 0;
      for (double& v : out.features[o].row(i)) v = 0.0;
    }
  }
  return out;
}

}  // namespace sboost
