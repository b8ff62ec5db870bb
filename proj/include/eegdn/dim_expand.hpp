#pragma once

// Rewrites a 1-D model as a 2-D model over 1 x L images and checks that the
// two compute the same function. Time maps to the width axis, height stays 1:
//   input [C, L]      -> [C, 1, L]
//   conv kernel K     -> (1, K), stride s -> (1, s), padding p -> (0, p)
//   pool window w     -> (1, w), stride s -> (1, s)
//   upsample factor f -> (1, f)
//   weights [O, I, K] -> [O, I, 1, K] (same buffer), biases unchanged

#include <cmath>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "eegdn/model.hpp"

namespace eegdn {

struct LayerMapping {
  std::string path;  // e.g. "layers[3].branches[1][0]"
  std::string kind;
  std::string from;
  std::string to;
};

struct ExpansionReport {
  std::string model;
  std::string precision;  // "float32" / "float64"
  std::vector<LayerMapping> mapping;
  std::size_t n_test_inputs = 0;
  double tolerance = 0.0;
  double max_abs_difference = 0.0;
  bool pass = false;
  bool vacuous = false;

  nlohmann::json to_json() const {
    nlohmann::json m = nlohmann::json::array();
    for (const auto& r : mapping) m.push_back({{"path", r.path}, {"kind", r.kind}, {"from", r.from}, {"to", r.to}});
    return {{"model", model},
            {"precision", precision},
            {"n_test_inputs", n_test_inputs},
            {"tolerance", tolerance},
            {"max_abs_difference", max_abs_difference},
            {"pass", pass},
            {"vacuous", vacuous},
            {"mapping", m}};
  }

  std::string to_text() const {
    std::ostringstream os;
    os << "model: " << model << " (" << precision << ")\n";
    for (const auto& r : mapping) os << "  " << r.path << "  " << r.kind << "  " << r.from << " -> " << r.to << "\n";
    os.precision(3);
    os << std::scientific;
    os << "inputs: " << n_test_inputs << "  max |diff|: " << max_abs_difference << "  tolerance: " << tolerance
       << "  " << (pass ? "PASS" : "FAIL") << (vacuous ? " (vacuous: no inputs checked)" : "") << "\n";
    return os.str();
  }
};

namespace detail {

inline std::string dims_str(const std::vector<std::size_t>& v) {
  std::string s = "(";
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s + ")";
}

inline std::vector<std::size_t> lift(const std::vector<std::size_t>& v, std::size_t head, const std::string& where,
                                     const char* what) {
  if (v.size() != 1) throw GeometryError(where + ": " + what + " must have one spatial axis to expand");
  return {head, v[0]};
}

inline std::vector<std::size_t> drop(const std::vector<std::size_t>& v, std::size_t head, const std::string& where,
                                     const char* what) {
  if (v.size() != 2 || v[0] != head) {
    throw GeometryError(where + ": " + what + " " + dims_str(v) + " has no 1-D equivalent");
  }
  return {v[1]};
}

inline std::string describe(const LayerSpec& l) {
  switch (l.kind) {
    case LayerKind::conv:
    case LayerKind::residual_block:
      return "k" + dims_str(l.geometry.kernel) + " s" + dims_str(l.geometry.stride) + " p" +
             dims_str(l.geometry.padding) + " " + std::to_string(l.geometry.in_channels) + "->" +
             std::to_string(l.geometry.out_channels);
    case LayerKind::pool:
      return std::string(to_string(l.pool_kind)) + " w" + dims_str(l.pool_geometry.window) + " s" +
             dims_str(l.pool_geometry.stride);
    case LayerKind::upsample:
      return "x" + dims_str(l.factor);
    case LayerKind::activation:
      return std::string(to_string(l.activation));
    case LayerKind::branch_concat:
      return std::to_string(l.branches.size()) + " branches";
  }
  return "?";
}

/// Maps one layer tree in either direction; `up` selects 1-D -> 2-D.
inline std::vector<LayerSpec> map_layers(const std::vector<LayerSpec>& layers, bool up, const std::string& prefix,
                                         std::vector<LayerMapping>* table) {
  std::vector<LayerSpec> out;
  out.reserve(layers.size());
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& src = layers[i];
    const std::string where = prefix + "[" + std::to_string(i) + "]";
    LayerSpec dst = src;
    auto f = up ? lift : drop;
    switch (src.kind) {
      case LayerKind::conv:
      case LayerKind::residual_block:
        dst.geometry.kernel = f(src.geometry.kernel, 1, where, "kernel");
        dst.geometry.stride = f(src.geometry.stride, 1, where, "stride");
        dst.geometry.padding = f(src.geometry.padding, 0, where, "padding");
        break;
      case LayerKind::pool:
        dst.pool_geometry.window = f(src.pool_geometry.window, 1, where, "pool window");
        dst.pool_geometry.stride = f(src.pool_geometry.stride, 1, where, "pool stride");
        break;
      case LayerKind::upsample:
        dst.factor = f(src.factor, 1, where, "upsample factor");
        break;
      case LayerKind::activation:
        break;
      case LayerKind::branch_concat:
        for (std::size_t b = 0; b < src.branches.size(); ++b) dst.branches[b].clear();
        break;
      default:
        throw InputError(where + ": layer kind " + std::to_string(static_cast<int>(src.kind)) +
                         " has no 2-D mapping");
    }
    if (table) table->push_back({where, std::string(to_string(src.kind)), describe(src), describe(dst)});
    if (src.kind == LayerKind::branch_concat) {
      for (std::size_t b = 0; b < src.branches.size(); ++b) {
        dst.branches[b] = map_layers(src.branches[b], up, where + ".branches[" + std::to_string(b) + "]", table);
      }
    }
    out.push_back(std::move(dst));
  }
  return out;
}

}  // namespace detail

/// Layer-by-layer table of what expand_spec does; one row per layer, nested layers included.
inline std::vector<LayerMapping> expansion_mapping(const ModelSpec& spec_1d) {
  if (spec_1d.dimensionality != Dimensionality::one_d) throw InputError("expand: model '" + spec_1d.name + "' is already 2-D");
  std::vector<LayerMapping> table;
  detail::map_layers(spec_1d.layers, true, "layers", &table);
  return table;
}

inline ModelSpec expand_spec(const ModelSpec& spec_1d) {
  if (spec_1d.dimensionality != Dimensionality::one_d) throw InputError("expand: model '" + spec_1d.name + "' is already 2-D");
  validate_spec(spec_1d);
  ModelSpec s = spec_1d;
  s.dimensionality = Dimensionality::two_d;
  s.input_shape = {spec_1d.input_shape[0], 1, spec_1d.input_shape[1]};
  s.layers = detail::map_layers(spec_1d.layers, true, "layers", nullptr);
  validate_spec(s);
  return s;
}

/// Inverse of expand_spec.
inline ModelSpec collapse_spec(const ModelSpec& spec_2d) {
  if (spec_2d.dimensionality != Dimensionality::two_d) throw InputError("collapse: model '" + spec_2d.name + "' is not 2-D");
  validate_spec(spec_2d);
  ModelSpec s = spec_2d;
  s.dimensionality = Dimensionality::one_d;
  s.input_shape = {spec_2d.input_shape[0], spec_2d.input_shape[2]};
  s.layers = detail::map_layers(spec_2d.layers, false, "layers", nullptr);
  validate_spec(s);
  return s;
}

/// [O, I, K] -> [O, I, 1, K]; values and their order are untouched.
template <class T>
ParamStore<T> expand_weights(const ModelSpec& spec_1d, const ParamStore<T>& store) {
  check_params(spec_1d, store);
  ParamStore<T> out = store;
  for (auto& e : out.entries) {
    const auto& s = e.weights.shape();
    e.weights.reshape({s[0], s[1], 1, s[2]});
  }
  check_params(expand_spec(spec_1d), out);
  return out;
}

template <class T>
ParamStore<T> collapse_weights(const ModelSpec& spec_2d, const ParamStore<T>& store) {
  check_params(spec_2d, store);
  ParamStore<T> out = store;
  for (auto& e : out.entries) {
    const auto& s = e.weights.shape();
    e.weights.reshape({s[0], s[1], s[3]});
  }
  check_params(collapse_spec(spec_2d), out);
  return out;
}

template <class T>
Model<T> expand_model(const Model<T>& m) {
  return Model<T>(expand_spec(m.spec()), expand_weights(m.spec(), m.params()));
}

/// Feeds `n_inputs` seeded uniform [-1, 1] windows through both models (the 2-D
/// one sees the [C, 1, L] reshape) and records the largest output difference.
template <class T>
ExpansionReport verify_equivalence(const Model<T>& m1, const Model<T>& m2, std::size_t n_inputs, double tolerance,
                                   std::uint64_t seed = 7) {
  ExpansionReport rep;
  rep.model = m1.spec().name;
  rep.precision = sizeof(T) == 4 ? "float32" : "float64";
  rep.mapping = expansion_mapping(m1.spec());
  rep.n_test_inputs = n_inputs;
  rep.tolerance = tolerance;
  rep.vacuous = n_inputs == 0;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (std::size_t t = 0; t < n_inputs; ++t) {
    Tensor<T> x(m1.input_shape());
    for (auto& v : x.data()) v = static_cast<T>(u(rng));
    const auto y1 = m1.forward(x);
    const auto y2 = m2.forward(x.reshaped(m2.input_shape()));
    if (y1.size() != y2.size()) {
      rep.max_abs_difference = std::numeric_limits<double>::infinity();
      break;
    }
    for (std::size_t i = 0; i < y1.size(); ++i) {
      const double d = std::abs(static_cast<double>(y1[i]) - static_cast<double>(y2[i]));
      if (!(d <= rep.max_abs_difference)) rep.max_abs_difference = std::isnan(d) ? std::numeric_limits<double>::infinity() : d;
    }
  }
  rep.pass = rep.max_abs_difference <= tolerance;
  return rep;
}

}  // namespace eegdn
