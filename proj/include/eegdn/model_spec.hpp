#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "eegdn/error.hpp"
#include "eegdn/ops.hpp"
#include "eegdn/tensor.hpp"

namespace eegdn {

enum class LayerKind { conv, residual_block, pool, upsample, branch_concat, activation };
enum class Dimensionality { one_d, two_d };

/// One node of a declarative model graph.
///
/// Field use by kind:
///   conv            geometry (all fields), activation applied to the output
///   residual_block  geometry.kernel, geometry.in_channels == out_channels; stride 1, same padding
///   pool            pool_kind, pool_geometry
///   upsample        factor (per spatial axis)
///   branch_concat   branches (each an ordered sub-graph; an empty branch is the identity)
///   activation      activation
struct LayerSpec {
  LayerKind kind = LayerKind::conv;
  ConvGeometry geometry{};
  ActivationKind activation = ActivationKind::relu;
  PoolKind pool_kind = PoolKind::max;
  PoolGeometry pool_geometry{};
  std::vector<std::size_t> factor{};
  std::vector<std::vector<LayerSpec>> branches{};

  static LayerSpec conv(std::size_t in_ch, std::size_t out_ch, std::size_t k, std::size_t stride,
                        std::size_t pad, ActivationKind act) {
    LayerSpec l;
    l.kind = LayerKind::conv;
    l.geometry = ConvGeometry{{k}, {stride}, {pad}, in_ch, out_ch};
    l.activation = act;
    return l;
  }
  static LayerSpec conv_same(std::size_t in_ch, std::size_t out_ch, std::size_t k, ActivationKind act) {
    LayerSpec l;
    l.kind = LayerKind::conv;
    l.geometry = ConvGeometry::same(in_ch, out_ch, k);
    l.activation = act;
    return l;
  }
  static LayerSpec residual(std::size_t channels, std::size_t k) {
    LayerSpec l;
    l.kind = LayerKind::residual_block;
    l.geometry = ConvGeometry::same(channels, channels, k);
    return l;
  }
  static LayerSpec pooling(PoolKind kind, std::size_t window, std::size_t stride) {
    LayerSpec l;
    l.kind = LayerKind::pool;
    l.pool_kind = kind;
    l.pool_geometry = PoolGeometry{{window}, {stride}};
    return l;
  }
  static LayerSpec upsampling(std::size_t f) {
    LayerSpec l;
    l.kind = LayerKind::upsample;
    l.factor = {f};
    return l;
  }
  static LayerSpec act(ActivationKind kind) {
    LayerSpec l;
    l.kind = LayerKind::activation;
    l.activation = kind;
    return l;
  }
  static LayerSpec branch_concat(std::vector<std::vector<LayerSpec>> branches) {
    LayerSpec l;
    l.kind = LayerKind::branch_concat;
    l.branches = std::move(branches);
    return l;
  }
};

struct ModelSpec {
  std::string name;
  Dimensionality dimensionality = Dimensionality::one_d;
  Shape input_shape{1, 800};
  std::vector<LayerSpec> layers;
  std::uint64_t seed = 7;
};

// ---------------------------------------------------------------------------
// names

inline std::string_view to_string(LayerKind k) {
  switch (k) {
    case LayerKind::conv: return "conv";
    case LayerKind::residual_block: return "residual_block";
    case LayerKind::pool: return "pool";
    case LayerKind::upsample: return "upsample";
    case LayerKind::branch_concat: return "branch_concat";
    case LayerKind::activation: return "activation";
  }
  return "?";
}
inline std::string_view to_string(ActivationKind k) { return k == ActivationKind::relu ? "relu" : "linear"; }
inline std::string_view to_string(PoolKind k) { return k == PoolKind::max ? "max" : "avg"; }
inline std::string_view to_string(Dimensionality d) { return d == Dimensionality::one_d ? "one_d" : "two_d"; }

inline LayerKind layer_kind_from(std::string_view s) {
  for (auto k : {LayerKind::conv, LayerKind::residual_block, LayerKind::pool, LayerKind::upsample,
                 LayerKind::branch_concat, LayerKind::activation}) {
    if (to_string(k) == s) return k;
  }
  throw InputError("unknown layer kind '" + std::string(s) + "'");
}
inline ActivationKind activation_from(std::string_view s) {
  if (s == "relu") return ActivationKind::relu;
  if (s == "linear") return ActivationKind::linear;
  throw InputError("unknown activation '" + std::string(s) + "'");
}
inline PoolKind pool_kind_from(std::string_view s) {
  if (s == "max") return PoolKind::max;
  if (s == "avg") return PoolKind::avg;
  throw InputError("unknown pool kind '" + std::string(s) + "'");
}
inline Dimensionality dimensionality_from(std::string_view s) {
  if (s == "one_d") return Dimensionality::one_d;
  if (s == "two_d") return Dimensionality::two_d;
  throw InputError("unknown dimensionality '" + std::string(s) + "'");
}

// ---------------------------------------------------------------------------
// JSON

inline nlohmann::json layer_to_json(const LayerSpec& l) {
  nlohmann::json j;
  j["kind"] = to_string(l.kind);
  switch (l.kind) {
    case LayerKind::conv:
      j["in_channels"] = l.geometry.in_channels;
      j["out_channels"] = l.geometry.out_channels;
      j["kernel"] = l.geometry.kernel;
      j["stride"] = l.geometry.stride;
      j["padding"] = l.geometry.padding;
      j["activation"] = to_string(l.activation);
      break;
    case LayerKind::residual_block:
      j["channels"] = l.geometry.in_channels;
      j["kernel"] = l.geometry.kernel;
      break;
    case LayerKind::pool:
      j["pool"] = to_string(l.pool_kind);
      j["window"] = l.pool_geometry.window;
      j["stride"] = l.pool_geometry.stride;
      break;
    case LayerKind::upsample:
      j["factor"] = l.factor;
      break;
    case LayerKind::activation:
      j["activation"] = to_string(l.activation);
      break;
    case LayerKind::branch_concat: {
      auto arr = nlohmann::json::array();
      for (const auto& br : l.branches) {
        auto b = nlohmann::json::array();
        for (const auto& sub : br) b.push_back(layer_to_json(sub));
        arr.push_back(std::move(b));
      }
      j["branches"] = std::move(arr);
      break;
    }
  }
  return j;
}

inline LayerSpec layer_from_json(const nlohmann::json& j) {
  try {
    LayerSpec l;
    l.kind = layer_kind_from(j.at("kind").get<std::string>());
    switch (l.kind) {
      case LayerKind::conv:
        l.geometry.in_channels = j.at("in_channels").get<std::size_t>();
        l.geometry.out_channels = j.at("out_channels").get<std::size_t>();
        l.geometry.kernel = j.at("kernel").get<std::vector<std::size_t>>();
        l.geometry.stride = j.at("stride").get<std::vector<std::size_t>>();
        l.geometry.padding = j.at("padding").get<std::vector<std::size_t>>();
        l.activation = activation_from(j.value("activation", "linear"));
        break;
      case LayerKind::residual_block: {
        const auto ch = j.at("channels").get<std::size_t>();
        l.geometry.in_channels = l.geometry.out_channels = ch;
        l.geometry.kernel = j.at("kernel").get<std::vector<std::size_t>>();
        l.geometry.stride.assign(l.geometry.kernel.size(), 1);
        for (auto k : l.geometry.kernel) {
          if (k % 2 == 0) throw InputError("residual_block kernel must be odd");
          l.geometry.padding.push_back(k / 2);
        }
        break;
      }
      case LayerKind::pool:
        l.pool_kind = pool_kind_from(j.at("pool").get<std::string>());
        l.pool_geometry.window = j.at("window").get<std::vector<std::size_t>>();
        l.pool_geometry.stride = j.at("stride").get<std::vector<std::size_t>>();
        break;
      case LayerKind::upsample:
        l.factor = j.at("factor").get<std::vector<std::size_t>>();
        break;
      case LayerKind::activation:
        l.activation = activation_from(j.at("activation").get<std::string>());
        break;
      case LayerKind::branch_concat:
        for (const auto& br : j.at("branches")) {
          std::vector<LayerSpec> sub;
          for (const auto& e : br) sub.push_back(layer_from_json(e));
          l.branches.push_back(std::move(sub));
        }
        break;
    }
    return l;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed layer: ") + e.what());
  }
}

inline nlohmann::json spec_to_json(const ModelSpec& s) {
  nlohmann::json j;
  j["name"] = s.name;
  j["dimensionality"] = to_string(s.dimensionality);
  j["input_shape"] = s.input_shape;
  j["seed"] = s.seed;
  auto layers = nlohmann::json::array();
  for (const auto& l : s.layers) layers.push_back(layer_to_json(l));
  j["layers"] = std::move(layers);
  return j;
}

inline ModelSpec spec_from_json(const nlohmann::json& j) {
  try {
    ModelSpec s;
    s.name = j.at("name").get<std::string>();
    s.dimensionality = dimensionality_from(j.at("dimensionality").get<std::string>());
    s.input_shape = j.at("input_shape").get<Shape>();
    s.seed = j.value("seed", std::uint64_t{7});
    for (const auto& l : j.at("layers")) s.layers.push_back(layer_from_json(l));
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed model spec: ") + e.what());
  }
}

inline void save_spec(const ModelSpec& s, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw InputError("cannot write spec file " + path);
  f << spec_to_json(s).dump(2) << '\n';
}

inline ModelSpec load_spec(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw InputError("cannot read spec file " + path);
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("spec file " + path + " is not valid JSON: " + e.what());
  }
  return spec_from_json(j);
}

// ---------------------------------------------------------------------------
// shape validation

namespace detail {

inline std::size_t spatial_rank_of(Dimensionality d) { return d == Dimensionality::one_d ? 1 : 2; }

inline Shape infer_layers(const std::vector<LayerSpec>& layers, Shape shape, Dimensionality dim,
                          const std::string& prefix);

inline void check_height_one(const Shape& s, Dimensionality dim, const std::string& where) {
  if (dim == Dimensionality::two_d && s[1] != 1) {
    throw ShapeError(where + ": two_d models keep the height axis at 1, got " + shape_str(s), "height");
  }
}

inline Shape infer_layer(const LayerSpec& l, const Shape& in, Dimensionality dim, const std::string& where) {
  const std::size_t sr = spatial_rank_of(dim);
  auto fail = [&](const std::string& msg, const std::string& axis) -> void {
    throw ShapeError(where + " (" + std::string(to_string(l.kind)) + "): " + msg, axis);
  };
  auto check_axes = [&](std::size_t n, const char* what) {
    if (n != sr) fail(std::string(what) + " has " + std::to_string(n) + " spatial axes, model is " +
                          std::string(to_string(dim)),
                      what);
  };
  auto check_2d_height = [&](const std::vector<std::size_t>& v, std::size_t must, const char* what) {
    if (dim == Dimensionality::two_d && v[0] != must) {
      fail(std::string(what) + " on the height axis must be " + std::to_string(must), what);
    }
  };
  Shape out = in;
  switch (l.kind) {
    case LayerKind::conv:
    case LayerKind::residual_block: {
      const auto& g = l.geometry;
      check_axes(g.kernel.size(), "kernel");
      check_axes(g.stride.size(), "stride");
      check_axes(g.padding.size(), "padding");
      check_2d_height(g.kernel, 1, "kernel");
      check_2d_height(g.stride, 1, "stride");
      check_2d_height(g.padding, 0, "padding");
      try {
        g.validate();
      } catch (const GeometryError& e) {
        fail(e.what(), "geometry");
      }
      if (g.in_channels != in[0]) {
        fail("expects " + std::to_string(g.in_channels) + " input channels, previous layer produces " +
                 std::to_string(in[0]),
             "channels");
      }
      out[0] = g.out_channels;
      for (std::size_t a = 0; a < sr; ++a) {
        try {
          out[1 + a] = g.out_length(a, in[1 + a]);
        } catch (const GeometryError& e) {
          fail(e.what(), "spatial axis " + std::to_string(a));
        }
      }
      if (l.kind == LayerKind::residual_block && (out != in || g.in_channels != g.out_channels)) {
        fail("residual block must preserve its input shape " + shape_str(in), "shape");
      }
      break;
    }
    case LayerKind::pool: {
      check_axes(l.pool_geometry.window.size(), "window");
      check_axes(l.pool_geometry.stride.size(), "stride");
      check_2d_height(l.pool_geometry.window, 1, "window");
      check_2d_height(l.pool_geometry.stride, 1, "stride");
      for (std::size_t a = 0; a < sr; ++a) {
        try {
          out[1 + a] = l.pool_geometry.out_length(a, in[1 + a]);
        } catch (const GeometryError& e) {
          fail(e.what(), "spatial axis " + std::to_string(a));
        }
      }
      break;
    }
    case LayerKind::upsample:
      check_axes(l.factor.size(), "factor");
      check_2d_height(l.factor, 1, "factor");
      for (std::size_t a = 0; a < sr; ++a) {
        if (l.factor[a] < 1) fail("factor must be >= 1", "factor");
        out[1 + a] = in[1 + a] * l.factor[a];
      }
      break;
    case LayerKind::activation:
      break;
    case LayerKind::branch_concat: {
      if (l.branches.empty()) fail("needs at least one branch", "branches");
      std::size_t channels = 0;
      Shape first;
      for (std::size_t b = 0; b < l.branches.size(); ++b) {
        Shape bs = infer_layers(l.branches[b], in, dim, where + ".branches[" + std::to_string(b) + "]");
        if (b == 0) first = bs;
        if (!std::equal(bs.begin() + 1, bs.end(), first.begin() + 1)) {
          fail("branch " + std::to_string(b) + " output " + shape_str(bs) + " does not match branch 0 " +
                   shape_str(first) + " outside the channel axis",
               "spatial");
        }
        channels += bs[0];
      }
      out = first;
      out[0] = channels;
      break;
    }
  }
  check_height_one(out, dim, where);
  return out;
}

inline Shape infer_layers(const std::vector<LayerSpec>& layers, Shape shape, Dimensionality dim,
                          const std::string& prefix) {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    shape = infer_layer(layers[i], shape, dim, prefix + "[" + std::to_string(i) + "]");
  }
  return shape;
}

}  // namespace detail

/// Output shape of the layer chain; ShapeError names the first inconsistent layer.
inline Shape infer_output_shape(const ModelSpec& s) {
  const std::size_t want_rank = detail::spatial_rank_of(s.dimensionality) + 1;
  if (s.input_shape.size() != want_rank) {
    throw ShapeError("model '" + s.name + "': input shape " + shape_str(s.input_shape) + " is not rank " +
                         std::to_string(want_rank) + " for " + std::string(to_string(s.dimensionality)),
                     "input");
  }
  for (auto d : s.input_shape) {
    if (d == 0) throw ShapeError("model '" + s.name + "': zero-sized input axis", "input");
  }
  detail::check_height_one(s.input_shape, s.dimensionality, "input");
  return detail::infer_layers(s.layers, s.input_shape, s.dimensionality, "layers");
}

/// Full build-time validation: shape chain plus the autoencoder contract (output shape == input shape).
inline void validate_spec(const ModelSpec& s) {
  const Shape out = infer_output_shape(s);
  if (out != s.input_shape) {
    throw ShapeError("model '" + s.name + "': output shape " + shape_str(out) + " differs from input shape " +
                         shape_str(s.input_shape),
                     "output");
  }
}

// ---------------------------------------------------------------------------
// structural queries

/// Geometries of all parameterized convolutions in depth-first order. A
/// residual block contributes two entries. The position in this list is the
/// layer index used by parameter stores and weight files.
inline void collect_conv_slots(const std::vector<LayerSpec>& layers, std::vector<ConvGeometry>& out) {
  for (const auto& l : layers) {
    if (l.kind == LayerKind::conv) {
      out.push_back(l.geometry);
    } else if (l.kind == LayerKind::residual_block) {
      out.push_back(l.geometry);
      out.push_back(l.geometry);
    } else if (l.kind == LayerKind::branch_concat) {
      for (const auto& br : l.branches) collect_conv_slots(br, out);
    }
  }
}

inline std::vector<ConvGeometry> conv_slots(const ModelSpec& s) {
  std::vector<ConvGeometry> out;
  collect_conv_slots(s.layers, out);
  return out;
}

inline Shape weight_shape(const ConvGeometry& g) {
  Shape s{g.out_channels, g.in_channels};
  s.insert(s.end(), g.kernel.begin(), g.kernel.end());
  return s;
}

inline std::size_t parameter_count(const ModelSpec& s) {
  std::size_t n = 0;
  for (const auto& g : conv_slots(s)) n += shape_numel(weight_shape(g)) + g.out_channels;
  return n;
}

inline void count_kinds(const std::vector<LayerSpec>& layers, LayerKind kind, std::size_t& n) {
  for (const auto& l : layers) {
    if (l.kind == kind) ++n;
    for (const auto& br : l.branches) count_kinds(br, kind, n);
  }
}

inline std::size_t count_layers(const ModelSpec& s, LayerKind kind) {
  std::size_t n = 0;
  count_kinds(s.layers, kind, n);
  return n;
}

// ---------------------------------------------------------------------------
// reference architectures (1-D, input [1, 800])

inline const std::vector<std::string>& reference_names() {
  static const std::vector<std::string> names{"cnn_ref", "resnet_ref", "dae_ref", "e2car_ref"};
  return names;
}

namespace detail {

// Strided-conv encoder 800 -> 400 -> 200 -> 100, nearest-upsample decoder back to 800.
inline std::vector<LayerSpec> dae_layers(std::size_t in_channels) {
  using A = ActivationKind;
  return {
      LayerSpec::conv(in_channels, 32, 5, 2, 2, A::relu),
      LayerSpec::conv(32, 64, 5, 2, 2, A::relu),
      LayerSpec::conv(64, 64, 5, 2, 2, A::relu),
      LayerSpec::upsampling(2),
      LayerSpec::conv_same(64, 64, 5, A::relu),
      LayerSpec::upsampling(2),
      LayerSpec::conv_same(64, 32, 5, A::relu),
      LayerSpec::upsampling(2),
      LayerSpec::conv_same(32, 16, 5, A::relu),
      LayerSpec::conv_same(16, 1, 1, A::linear),
  };
}

}  // namespace detail

inline ModelSpec reference_spec(std::string_view name, std::uint64_t seed = 7) {
  using A = ActivationKind;
  ModelSpec s;
  s.name = std::string(name);
  s.dimensionality = Dimensionality::one_d;
  s.input_shape = {1, 800};
  s.seed = seed;
  if (name == "cnn_ref") {
    s.layers = {LayerSpec::conv_same(1, 16, 5, A::relu), LayerSpec::conv_same(16, 16, 5, A::relu),
                LayerSpec::conv_same(16, 16, 5, A::relu), LayerSpec::conv_same(16, 1, 5, A::linear)};
  } else if (name == "resnet_ref") {
    s.layers.push_back(LayerSpec::conv_same(1, 16, 5, A::relu));
    for (int i = 0; i < 4; ++i) s.layers.push_back(LayerSpec::residual(16, 5));
    s.layers.push_back(LayerSpec::conv_same(16, 1, 1, A::linear));
  } else if (name == "dae_ref") {
    s.layers = detail::dae_layers(1);
  } else if (name == "e2car_ref") {
    // Multi-scale residual front end: 3 kernel sizes x 2 blocks deep, fused by concat + 1x1 conv.
    std::vector<std::vector<LayerSpec>> branches;
    for (std::size_t k : {3, 5, 7}) branches.push_back({LayerSpec::residual(16, k), LayerSpec::residual(16, k)});
    s.layers = {LayerSpec::conv_same(1, 16, 3, A::relu), LayerSpec::branch_concat(std::move(branches)),
                LayerSpec::conv_same(48, 16, 1, A::relu)};
    auto dae = detail::dae_layers(16);
    s.layers.insert(s.layers.end(), dae.begin(), dae.end());
  } else {
    std::string known;
    for (const auto& n : reference_names()) known += (known.empty() ? "" : ", ") + n;
    throw InputError("unknown reference model '" + std::string(name) + "' (known: " + known + ")");
  }
  return s;
}

inline bool is_reference_name(std::string_view name) {
  for (const auto& n : reference_names()) {
    if (n == name) return true;
  }
  return false;
}

}  // namespace eegdn
