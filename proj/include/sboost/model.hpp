#pragma once

// Multimodal architecture: one encoder per modality, a growable stack of
// configurable classifiers per modality, and a single output layer shared by
// every classifier of every modality.
//
//   p_t = softmax(head(ReLU(layer1_t(encoder(x)))))

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "sboost/matrix.hpp"
#include "sboost/tape.hpp"

namespace sboost {

using Rng = std::mt19937_64;

// splitmix64 finalizer; derives independent stream seeds.
inline std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) { return mix_seed(mix_seed(a) ^ b); }

struct Linear {
  Parameter w;
  Parameter b;

  Linear() = default;
  // Uniform(−1/√fan_in, 1/√fan_in) for weights and bias.
  Linear(std::size_t in, std::size_t out, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Matrix wv(in, out), bv(1, out);
    for (double& v : wv.values()) v = dist(rng);
    for (double& v : bv.values()) v = dist(rng);
    w = Parameter(std::move(wv));
    b = Parameter(std::move(bv));
  }
  Linear(Matrix wv, Matrix bv) : w(std::move(wv)), b(std::move(bv)) {}

  std::size_t in_dim() const { return w.value.rows(); }
  std::size_t out_dim() const { return w.value.cols(); }
  Var forward(Tape& t, Var x) { return ad::linear(t, x, w, b); }
};

// input → hidden... → output, ReLU between layers. output_dim == 0 means
// the identity encoder (features are the raw inputs).
struct EncoderSpec {
  std::size_t input_dim = 0;
  std::vector<std::size_t> hidden_dims;
  std::size_t output_dim = 0;

  bool is_identity() const { return output_dim == 0 && hidden_dims.empty(); }
  std::size_t feature_dim() const { return is_identity() ? input_dim : output_dim; }

  static EncoderSpec identity(std::size_t d) { return EncoderSpec{d, {}, 0}; }
};

struct Encoder {
  std::size_t input_dim = 0;
  std::vector<Linear> layers;

  Encoder() = default;
  Encoder(const EncoderSpec& spec, Rng& rng) : input_dim(spec.input_dim) {
    if (spec.input_dim == 0) throw std::invalid_argument("EncoderSpec: input_dim must be >= 1");
    if (spec.is_identity()) return;
    if (spec.output_dim == 0) throw std::invalid_argument("EncoderSpec: output_dim must be >= 1");
    std::size_t prev = spec.input_dim;
    for (std::size_t h : spec.hidden_dims) {
      if (h == 0) throw std::invalid_argument("EncoderSpec: zero hidden width");
      layers.emplace_back(prev, h, rng);
      prev = h;
    }
    layers.emplace_back(prev, spec.output_dim, rng);
  }

  std::size_t output_dim() const { return layers.empty() ? input_dim : layers.back().out_dim(); }

  Var forward(Tape& t, Var x) {
    if (t.value(x).cols() != input_dim) {
      throw std::invalid_argument("encode: input has " + std::to_string(t.value(x).cols()) +
                                  " columns, encoder expects " + std::to_string(input_dim));
    }
    Var h = x;
    for (std::size_t i = 0; i < layers.size(); ++i) {
      h = layers[i].forward(t, h);
      if (i + 1 < layers.size()) h = ad::relu(t, h);
    }
    return h;
  }
};

struct SharedHead {
  Linear layer2;
};

struct ConfigurableClassifier {
  Linear layer1;
};

enum class EnsembleMode { kSum, kMean };

struct ModalityModel {
  std::string name;
  Encoder encoder;
  std::vector<ConfigurableClassifier> classifiers;

  std::size_t count() const { return classifiers.size(); }
  std::size_t feature_dim() const { return encoder.output_dim(); }

  Var encode(Tape& t, Var x) { return encoder.forward(t, x); }

  Var classify_one(Tape& t, SharedHead& head, Var u, std::size_t index) {
    if (index >= classifiers.size()) {
      throw std::out_of_range("classify_one: classifier index " + std::to_string(index) +
                              " out of range for stack of " + std::to_string(classifiers.size()));
    }
    Var h = ad::relu(t, classifiers[index].layer1.forward(t, u));
    return ad::softmax(t, head.layer2.forward(t, h));
  }

  std::vector<Var> predict_stack(Tape& t, SharedHead& head, Var u) {
    std::vector<Var> out;
    out.reserve(classifiers.size());
    for (std::size_t j = 0; j < classifiers.size(); ++j) out.push_back(classify_one(t, head, u, j));
    return out;
  }
};

inline Var ensemble_prediction(Tape& t, std::span<const Var> preds, EnsembleMode mode) {
  if (preds.empty()) throw std::invalid_argument("ensemble_prediction: empty prediction sequence");
  Var acc = preds[0];
  for (std::size_t j = 1; j < preds.size(); ++j) acc = ad::add(t, acc, preds[j]);
  if (mode == EnsembleMode::kMean && preds.size() > 1) {
    acc = ad::scale(t, acc, 1.0 / static_cast<double>(preds.size()));
  }
  return acc;
}

inline Matrix ensemble_prediction(std::span<const Matrix> preds, EnsembleMode mode) {
  if (preds.empty()) throw std::invalid_argument("ensemble_prediction: empty prediction sequence");
  Matrix acc = preds[0];
  for (std::size_t j = 1; j < preds.size(); ++j) acc += preds[j];
  if (mode == EnsembleMode::kMean) acc *= 1.0 / static_cast<double>(preds.size());
  return acc;
}

struct ModalitySpec {
  std::string name;
  EncoderSpec encoder;
};

struct ModelSpec {
  std::vector<ModalitySpec> modalities;
  std::size_t num_classes = 0;
  std::size_t hidden = 256;
};

class MultimodalModel {
 public:
  MultimodalModel() = default;

  MultimodalModel(const ModelSpec& spec, Rng& rng) : num_classes_(spec.num_classes), hidden_(spec.hidden) {
    if (spec.modalities.empty()) throw std::invalid_argument("ModelSpec: no modalities");
    if (spec.num_classes < 1) throw std::invalid_argument("ModelSpec: num_classes must be >= 1");
    if (spec.hidden < 1) throw std::invalid_argument("ModelSpec: hidden width must be >= 1");
    for (const auto& ms : spec.modalities) {
      ModalityModel m;
      m.name = ms.name;
      m.encoder = Encoder(ms.encoder, rng);
      modalities_.push_back(std::move(m));
    }
    head_.layer2 = Linear(hidden_, num_classes_, rng);
    for (auto& m : modalities_) m.classifiers.push_back(make_classifier(m, rng));
  }

  std::size_t num_classes() const { return num_classes_; }
  std::size_t hidden() const { return hidden_; }
  std::size_t num_modalities() const { return modalities_.size(); }

  ModalityModel& modality(std::size_t o) { return modalities_.at(o); }
  const ModalityModel& modality(std::size_t o) const { return modalities_.at(o); }
  std::span<ModalityModel> modalities() { return modalities_; }
  std::span<const ModalityModel> modalities() const { return modalities_; }
  SharedHead& head() { return head_; }
  const SharedHead& head() const { return head_; }

  std::optional<std::size_t> find(const std::string& name) const {
    for (std::size_t o = 0; o < modalities_.size(); ++o)
      if (modalities_[o].name == name) return o;
    return std::nullopt;
  }

  // Appends a freshly initialized classifier to modality o. Returns false
  // (and leaves the model unchanged) when the optional cap is reached.
  bool add_classifier(std::size_t o, Rng& rng, std::optional<std::size_t> max_classifiers = std::nullopt) {
    ModalityModel& m = modalities_.at(o);
    if (max_classifiers && m.count() >= *max_classifiers) {
      std::cerr << "warning: classifier cap " << *max_classifiers << " reached for modality '" << m.name
                << "'; not adding\n";
      return false;
    }
    m.classifiers.push_back(make_classifier(m, rng));
    return true;
  }

  std::vector<Parameter*> parameters() {
    std::vector<Parameter*> out;
    for (auto& m : modalities_) {
      for (auto& l : m.encoder.layers) {
        out.push_back(&l.w);
        out.push_back(&l.b);
      }
      for (auto& c : m.classifiers) {
        out.push_back(&c.layer1.w);
        out.push_back(&c.layer1.b);
      }
    }
    out.push_back(&head_.layer2.w);
    out.push_back(&head_.layer2.b);
    return out;
  }

  // Named (name, value) view used for checkpointing and comparisons.
  std::vector<std::pair<std::string, const Matrix*>> named_values() const {
    std::vector<std::pair<std::string, const Matrix*>> out;
    for (const auto& m : modalities_) {
      for (std::size_t i = 0; i < m.encoder.layers.size(); ++i) {
        const std::string p = "mod." + m.name + ".enc." + std::to_string(i);
        out.emplace_back(p + ".w", &m.encoder.layers[i].w.value);
        out.emplace_back(p + ".b", &m.encoder.layers[i].b.value);
      }
      for (std::size_t j = 0; j < m.classifiers.size(); ++j) {
        const std::string p = "mod." + m.name + ".cls." + std::to_string(j);
        out.emplace_back(p + ".w", &m.classifiers[j].layer1.w.value);
        out.emplace_back(p + ".b", &m.classifiers[j].layer1.b.value);
      }
    }
    out.emplace_back("head.w", &head_.layer2.w.value);
    out.emplace_back("head.b", &head_.layer2.b.value);
    return out;
  }

  // Builds a model from already-materialized parts (checkpoint loading, tests).
  static MultimodalModel assemble(std::vector<ModalityModel> mods, SharedHead head) {
    MultimodalModel m;
    m.num_classes_ = head.layer2.out_dim();
    m.hidden_ = head.layer2.in_dim();
    m.modalities_ = std::move(mods);
    m.head_ = std::move(head);
    return m;
  }

 private:
  ConfigurableClassifier make_classifier(const ModalityModel& m, Rng& rng) const {
    return ConfigurableClassifier{Linear(m.feature_dim(), hidden_, rng)};
  }

  std::size_t num_classes_ = 0;
  std::size_t hidden_ = 0;
  std::vector<ModalityModel> modalities_;
  SharedHead head_;
};

// Probability stack of modality o on a fixed input, without recording gradients.
inline std::vector<Matrix> predict_stack_values(MultimodalModel& model, std::size_t o, const Matrix& x) {
  Tape t;
  ModalityModel& m = model.modality(o);
  Var u = m.encode(t, t.constant(x));
  std::vector<Matrix> out;
  for (Var p : m.predict_stack(t, model.head(), u)) out.push_back(t.value(p));
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoint file
//
//   magic   "SBCK" (4 bytes)
//   version u32 = 1
//   count   u32
//   count × { name_len u32, name bytes (UTF-8), rows u64, cols u64,
//             rows·cols × f64 }
//
// All integers and doubles little-endian. Entry names follow
// mod.<modality>.enc.<i>.{w,b}, mod.<modality>.cls.<j>.{w,b}, head.{w,b};
// modality order in the file is the model's modality order.
// ---------------------------------------------------------------------------

namespace detail {

template <typename T>
void write_le(std::ostream& os, T v) {
  unsigned char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
  os.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <typename T>
T read_le(std::istream& is) {
  unsigned char buf[sizeof(T)];
  if (!is.read(reinterpret_cast<char*>(buf), sizeof(T))) throw std::runtime_error("checkpoint: truncated file");
  if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
  T v;
  std::memcpy(&v, buf, sizeof(T));
  return v;
}

}  // namespace detail

inline constexpr std::uint32_t kCheckpointVersion = 1;

inline void save_checkpoint(const MultimodalModel& model, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("checkpoint: cannot open '" + path + "' for writing");
  const auto entries = model.named_values();
  os.write("SBCK", 4);
  detail::write_le<std::uint32_t>(os, kCheckpointVersion);
  detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(entries.size()));
  for (const auto& [name, m] : entries) {
    detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    detail::write_le<std::uint64_t>(os, m->rows());
    detail::write_le<std::uint64_t>(os, m->cols());
    for (double v : m->values()) detail::write_le<double>(os, v);
  }
  if (!os) throw std::runtime_error("checkpoint: write failed for '" + path + "'");
}

inline MultimodalModel load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint: cannot open '" + path + "'");
  char magic[4];
  if (!is.read(magic, 4) || std::string(magic, 4) != "SBCK") throw std::runtime_error("checkpoint: bad magic");
  const auto version = detail::read_le<std::uint32_t>(is);
  if (version != kCheckpointVersion) {
    throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
  }
  const auto count = detail::read_le<std::uint32_t>(is);

  std::vector<ModalityModel> mods;
  SharedHead head;
  bool have_head_w = false, have_head_b = false;

  auto modality_for = [&](const std::string& name) -> ModalityModel& {
    for (auto& m : mods)
      if (m.name == name) return m;
    mods.push_back(ModalityModel{name, {}, {}});
    return mods.back();
  };

  for (std::uint32_t e = 0; e < count; ++e) {
    const auto len = detail::read_le<std::uint32_t>(is);
    std::string name(len, '\0');
    if (!is.read(name.data(), len)) throw std::runtime_error("checkpoint: truncated name");
    const auto rows = detail::read_le<std::uint64_t>(is);
    const auto cols = detail::read_le<std::uint64_t>(is);
    Matrix m(rows, cols);
    for (double& v : m.values()) v = detail::read_le<double>(is);

    if (name == "head.w") {
      head.layer2.w = Parameter(std::move(m));
      have_head_w = true;
      continue;
    }
    if (name == "head.b") {
      head.layer2.b = Parameter(std::move(m));
      have_head_b = true;
      continue;
    }
    // mod.<name>.<enc|cls>.<idx>.<w|b>; modality names may not contain '.'
    if (name.rfind("mod.", 0) != 0) throw std::runtime_error("checkpoint: unknown entry '" + name + "'");
    const auto p1 = name.find('.', 4);
    const auto p2 = p1 == std::string::npos ? p1 : name.find('.', p1 + 1);
    const auto p3 = p2 == std::string::npos ? p2 : name.find('.', p2 + 1);
    if (p3 == std::string::npos) throw std::runtime_error("checkpoint: malformed entry '" + name + "'");
    const std::string mod_name = name.substr(4, p1 - 4);
    const std::string kind = name.substr(p1 + 1, p2 - p1 - 1);
    const std::size_t idx = std::stoul(name.substr(p2 + 1, p3 - p2 - 1));
    const std::string which = name.substr(p3 + 1);
    ModalityModel& mm = modality_for(mod_name);
    Linear* target = nullptr;
    if (kind == "enc") {
      if (mm.encoder.layers.size() < idx + 1) mm.encoder.layers.resize(idx + 1);
      target = &mm.encoder.layers[idx];
    } else if (kind == "cls") {
      if (mm.classifiers.size() < idx + 1) mm.classifiers.resize(idx + 1);
      target = &mm.classifiers[idx].layer1;
    } else {
      throw std::runtime_error("checkpoint: unknown entry kind in '" + name + "'");
    }
    if (which == "w") {
      target->w = Parameter(std::move(m));
    } else if (which == "b") {
      target->b = Parameter(std::move(m));
    } else {
      throw std::runtime_error("checkpoint: malformed entry '" + name + "'");
    }
  }
  if (!have_head_w || !have_head_b) throw std::runtime_error("checkpoint: missing shared head");
  for (auto& m : mods) {
    if (m.classifiers.empty()) throw std::runtime_error("checkpoint: modality '" + m.name + "' has no classifiers");
    m.encoder.input_dim = m.encoder.layers.empty() ? m.classifiers[0].layer1.in_dim() : m.encoder.layers[0].in_dim();
  }
  return MultimodalModel::assemble(std::move(mods), std::move(head));
}

}  // namespace sboost
