#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "eegdn/error.hpp"
#include "eegdn/model_spec.hpp"
#include "eegdn/ops.hpp"
#include "eegdn/tensor.hpp"

namespace eegdn {

template <class T>
struct ParamEntry {
  Tensor<T> weights;
  Tensor<T> bias;
};

/// Parameters of every convolution, indexed by depth-first conv slot (see conv_slots()).
template <class T>
struct ParamStore {
  std::vector<ParamEntry<T>> entries;

  std::size_t size() const noexcept { return entries.size(); }

  std::size_t parameter_count() const noexcept {
    std::size_t n = 0;
    for (const auto& e : entries) n += e.weights.size() + e.bias.size();
    return n;
  }

  ParamStore zeros_like() const {
    ParamStore z;
    z.entries.reserve(entries.size());
    for (const auto& e : entries) z.entries.push_back({Tensor<T>(e.weights.shape()), Tensor<T>(e.bias.shape())});
    return z;
  }

  /// Flat view used by optimizers and gradient checks: weights of slot 0, bias of slot 0, weights of slot 1, ...
  template <class F>
  void for_each_tensor(F&& f) {
    for (auto& e : entries) {
      f(e.weights);
      f(e.bias);
    }
  }
  template <class F>
  void for_each_tensor(F&& f) const {
    for (const auto& e : entries) {
      f(e.weights);
      f(e.bias);
    }
  }

  T& flat(std::size_t index) {
    for (auto& e : entries) {
      if (index < e.weights.size()) return e.weights[index];
      index -= e.weights.size();
      if (index < e.bias.size()) return e.bias[index];
      index -= e.bias.size();
    }
    throw InputError("parameter index out of range");
  }
  T flat(std::size_t index) const { return const_cast<ParamStore*>(this)->flat(index); }

  template <class U>
  ParamStore<U> cast() const {
    ParamStore<U> out;
    for (const auto& e : entries) out.entries.push_back({e.weights.template cast<U>(), e.bias.template cast<U>()});
    return out;
  }

  friend bool operator==(const ParamStore& a, const ParamStore& b) {
    if (a.entries.size() != b.entries.size()) return false;
    for (std::size_t i = 0; i < a.entries.size(); ++i) {
      if (!(a.entries[i].weights == b.entries[i].weights) || !(a.entries[i].bias == b.entries[i].bias)) return false;
    }
    return true;
  }
};

/// Checks that `store` holds one correctly shaped entry per conv slot of `spec`.
template <class T>
void check_params(const ModelSpec& spec, const ParamStore<T>& store) {
  const auto slots = conv_slots(spec);
  if (slots.size() != store.size()) {
    throw ShapeError("model '" + spec.name + "' has " + std::to_string(slots.size()) +
                         " parameterized layers, parameter store has " + std::to_string(store.size()),
                     "layer count");
  }
  for (std::size_t i = 0; i < slots.size(); ++i) {
    const Shape ws = weight_shape(slots[i]);
    const Shape bs{slots[i].out_channels};
    if (store.entries[i].weights.shape() != ws || store.entries[i].bias.shape() != bs) {
      throw ShapeError("layer " + std::to_string(i) + ": expected weights " + shape_str(ws) + " bias " +
                           shape_str(bs) + ", found weights " + shape_str(store.entries[i].weights.shape()) +
                           " bias " + shape_str(store.entries[i].bias.shape()),
                       "layer " + std::to_string(i));
    }
  }
}

/// He-normal weights (std = sqrt(2 / fan_in)), zero biases. Sampled in double so
/// that float and double models built from one seed agree to rounding.
template <class T>
ParamStore<T> init_params(const ModelSpec& spec) {
  std::mt19937_64 rng(spec.seed);
  ParamStore<T> store;
  for (const auto& g : conv_slots(spec)) {
    const Shape ws = weight_shape(g);
    const double fan_in = static_cast<double>(shape_numel(ws) / g.out_channels);
    std::normal_distribution<double> nd(0.0, std::sqrt(2.0 / fan_in));
    Tensor<T> w(ws);
    for (auto& v : w.data()) v = static_cast<T>(nd(rng));
    store.entries.push_back({std::move(w), Tensor<T>({g.out_channels})});
  }
  return store;
}

namespace detail {

enum class OpCode { conv, act, pool, upsample, add, concat };

struct Instr {
  OpCode op = OpCode::conv;
  std::vector<std::size_t> in;
  std::size_t out = 0;
  std::size_t slot = 0;
  ConvGeometry geometry{};
  ActivationKind act = ActivationKind::linear;
  PoolKind pool_kind = PoolKind::max;
  PoolGeometry pool_geometry{};
  std::vector<std::size_t> factor{};
};

struct Program {
  std::vector<Instr> code;
  std::size_t n_values = 1;  // value 0 is the model input
};

class Lowering {
 public:
  Program run(const ModelSpec& spec) {
    prog_ = {};
    const std::size_t out = lower(spec.layers, 0);
    // Output is the last value produced; make sure an empty graph still has one.
    if (prog_.code.empty() || prog_.code.back().out != out) {
      Instr id;
      id.op = OpCode::act;
      id.act = ActivationKind::linear;
      id.in = {out};
      id.out = fresh();
      prog_.code.push_back(id);
    }
    return std::move(prog_);
  }

 private:
  std::size_t fresh() { return prog_.n_values++; }

  std::size_t emit_conv(std::size_t x, const ConvGeometry& g, ActivationKind act) {
    Instr i;
    i.op = OpCode::conv;
    i.in = {x};
    i.out = fresh();
    i.slot = slot_++;
    i.geometry = g;
    i.act = act;
    prog_.code.push_back(i);
    return i.out;
  }

  std::size_t emit_simple(OpCode op, std::vector<std::size_t> in) {
    Instr i;
    i.op = op;
    i.in = std::move(in);
    i.out = fresh();
    prog_.code.push_back(i);
    return i.out;
  }

  std::size_t lower(const std::vector<LayerSpec>& layers, std::size_t x) {
    for (const auto& l : layers) {
      switch (l.kind) {
        case LayerKind::conv:
          x = emit_conv(x, l.geometry, l.activation);
          break;
        case LayerKind::residual_block: {
          // conv -> relu -> conv -> add(skip) -> relu
          const std::size_t h = emit_conv(x, l.geometry, ActivationKind::relu);
          const std::size_t f = emit_conv(h, l.geometry, ActivationKind::linear);
          const std::size_t s = emit_simple(OpCode::add, {x, f});
          x = emit_simple(OpCode::act, {s});
          prog_.code.back().act = ActivationKind::relu;
          break;
        }
        case LayerKind::activation:
          x = emit_simple(OpCode::act, {x});
          prog_.code.back().act = l.activation;
          break;
        case LayerKind::pool:
          x = emit_simple(OpCode::pool, {x});
          prog_.code.back().pool_kind = l.pool_kind;
          prog_.code.back().pool_geometry = l.pool_geometry;
          break;
        case LayerKind::upsample:
          x = emit_simple(OpCode::upsample, {x});
          prog_.code.back().factor = l.factor;
          break;
        case LayerKind::branch_concat: {
          std::vector<std::size_t> outs;
          for (const auto& br : l.branches) outs.push_back(lower(br, x));
          x = emit_simple(OpCode::concat, std::move(outs));
          break;
        }
      }
    }
    return x;
  }

  Program prog_;
  std::size_t slot_ = 0;
};

template <class T>
void accumulate(Tensor<T>& dst, Tensor<T>&& g) {
  if (dst.empty()) {
    dst = std::move(g);
    return;
  }
  auto d = dst.data();
  auto s = g.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
}

}  // namespace detail

/// Every intermediate value of one forward pass; value 0 is the input.
template <class T>
struct Trace {
  std::vector<Tensor<T>> values;
  const Tensor<T>& output() const { return values.back(); }
};

template <class T>
struct Gradients {
  ParamStore<T> params;
  Tensor<T> input;
};

/// An executable network: a validated ModelSpec plus its parameters.
///
/// forward() is const and re-entrant. Parameters are only mutated through
/// params_mut(), which training uses under exclusive access.
template <class T>
class Model {
 public:
  explicit Model(ModelSpec spec) : Model(spec, init_params<T>(spec)) {}

  Model(ModelSpec spec, ParamStore<T> params) : spec_(std::move(spec)), params_(std::move(params)) {
    validate_spec(spec_);
    check_params(spec_, params_);
    program_ = detail::Lowering{}.run(spec_);
  }

  const ModelSpec& spec() const noexcept { return spec_; }
  const ParamStore<T>& params() const noexcept { return params_; }
  ParamStore<T>& params_mut() noexcept { return params_; }
  std::size_t parameter_count() const noexcept { return params_.parameter_count(); }
  const Shape& input_shape() const noexcept { return spec_.input_shape; }

  Tensor<T> forward(const Tensor<T>& input) const { return forward_trace(input).values.back(); }

  Trace<T> forward_trace(const Tensor<T>& input) const {
    if (input.shape() != spec_.input_shape) {
      throw ShapeError("model '" + spec_.name + "' expects input " + shape_str(spec_.input_shape) + ", got " +
                           shape_str(input.shape()),
                       "input");
    }
    Trace<T> tr;
    tr.values.resize(program_.n_values);
    tr.values[0] = input;
    for (const auto& ins : program_.code) tr.values[ins.out] = exec(ins, tr.values);
    return tr;
  }

  /// Reverse-mode pass given dLoss/dOutput for a recorded trace.
  Gradients<T> backward(const Trace<T>& tr, const Tensor<T>& grad_output) const {
    if (grad_output.shape() != tr.output().shape()) {
      throw ShapeError("backward: gradient shape " + shape_str(grad_output.shape()) + " differs from output " +
                           shape_str(tr.output().shape()),
                       "output");
    }
    Gradients<T> g{params_.zeros_like(), {}};
    backward_into(tr, grad_output, g.params, &g.input);
    return g;
  }

  /// As backward(), accumulating parameter gradients into `acc` (input gradient optional).
  void backward_into(const Trace<T>& tr, const Tensor<T>& grad_output, ParamStore<T>& acc,
                     Tensor<T>* grad_input = nullptr) const {
    std::vector<Tensor<T>> grads(program_.n_values);
    grads.back() = grad_output;
    const auto& v = tr.values;
    for (auto it = program_.code.rbegin(); it != program_.code.rend(); ++it) {
      const auto& ins = *it;
      if (grads[ins.out].empty()) continue;
      Tensor<T> g = std::move(grads[ins.out]);
      switch (ins.op) {
        case detail::OpCode::conv: {
          g = activation_backward(v[ins.out], std::move(g), ins.act);
          const auto& p = params_.entries[ins.slot];
          auto cg = ins.geometry.spatial_rank() == 1 ? conv1d_backward(v[ins.in[0]], p.weights, g, ins.geometry)
                                                     : conv2d_backward(v[ins.in[0]], p.weights, g, ins.geometry);
          detail::accumulate(acc.entries[ins.slot].weights, std::move(cg.weights));
          detail::accumulate(acc.entries[ins.slot].bias, std::move(cg.bias));
          detail::accumulate(grads[ins.in[0]], std::move(cg.input));
          break;
        }
        case detail::OpCode::act:
          detail::accumulate(grads[ins.in[0]], activation_backward(v[ins.out], std::move(g), ins.act));
          break;
        case detail::OpCode::pool:
          detail::accumulate(grads[ins.in[0]], pool_backward(v[ins.in[0]], g, ins.pool_kind, ins.pool_geometry));
          break;
        case detail::OpCode::upsample:
          detail::accumulate(grads[ins.in[0]], upsample_backward(v[ins.in[0]], g, ins.factor));
          break;
        case detail::OpCode::add: {
          Tensor<T> copy = g;
          detail::accumulate(grads[ins.in[0]], std::move(copy));
          detail::accumulate(grads[ins.in[1]], std::move(g));
          break;
        }
        case detail::OpCode::concat: {
          std::size_t off = 0;
          for (auto src : ins.in) {
            Tensor<T> part(v[src].shape());
            std::copy(g.data().begin() + static_cast<std::ptrdiff_t>(off),
                      g.data().begin() + static_cast<std::ptrdiff_t>(off + part.size()), part.data().begin());
            off += part.size();
            detail::accumulate(grads[src], std::move(part));
          }
          break;
        }
      }
    }
    if (grad_input) {
      *grad_input = grads[0].empty() ? Tensor<T>(v[0].shape()) : std::move(grads[0]);
    }
  }

  /// Sign pattern of every ReLU and the argmax of every max-pool window. Two
  /// parameter settings with equal patterns lie in the same smooth region.
  std::vector<std::uint8_t> activation_pattern(const Trace<T>& tr) const {
    std::vector<std::uint8_t> pat;
    for (const auto& ins : program_.code) {
      if ((ins.op == detail::OpCode::conv || ins.op == detail::OpCode::act) && ins.act == ActivationKind::relu) {
        for (auto x : tr.values[ins.out].data()) pat.push_back(x > T{0});
      } else if (ins.op == detail::OpCode::pool && ins.pool_kind == PoolKind::max) {
        // Equality of pooled outputs with the window entries identifies the argmax.
        const auto& in = tr.values[ins.in[0]];
        Tensor<T> ones(tr.values[ins.out].shape(), T{1});
        auto routed = pool_backward(in, ones, PoolKind::max, ins.pool_geometry);
        for (auto x : routed.data()) pat.push_back(x > T{0});
      }
    }
    return pat;
  }

 private:
  Tensor<T> exec(const detail::Instr& ins, const std::vector<Tensor<T>>& v) const {
    switch (ins.op) {
      case detail::OpCode::conv: {
        const auto& p = params_.entries[ins.slot];
        auto y = ins.geometry.spatial_rank() == 1 ? conv1d(v[ins.in[0]], p.weights, p.bias, ins.geometry)
                                                  : conv2d(v[ins.in[0]], p.weights, p.bias, ins.geometry);
        return activation(std::move(y), ins.act);
      }
      case detail::OpCode::act:
        return activation(v[ins.in[0]], ins.act);
      case detail::OpCode::pool:
        return pool(v[ins.in[0]], ins.pool_kind, ins.pool_geometry);
      case detail::OpCode::upsample:
        return upsample(v[ins.in[0]], ins.factor);
      case detail::OpCode::add:
        return add(v[ins.in[0]], v[ins.in[1]]);
      case detail::OpCode::concat: {
        std::vector<const Tensor<T>*> parts;
        for (auto i : ins.in) parts.push_back(&v[i]);
        return concat_channels(parts);
      }
    }
    throw Error("unreachable opcode");
  }

  ModelSpec spec_;
  ParamStore<T> params_;
  detail::Program program_;
};

/// Validates the spec and initializes parameters from spec.seed.
template <class T = float>
Model<T> build(const ModelSpec& spec) {
  return Model<T>(spec);
}

}  // namespace eegdn
