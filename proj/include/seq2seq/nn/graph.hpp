#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <unordered_map>
#include <utility>
#include <vector>

#include "seq2seq/nn/tensor.hpp"

namespace seq2seq::nn {

// Trainable tensor with gradient accumulator and Adam moments.
template <typename T>
struct Param {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
  Tensor<T> adam_m, adam_v;
  bool trainable = true;

  Param() = default;
  Param(std::string n, Tensor<T> v) : name(std::move(n)), value(std::move(v)) {}

  void zero_grad() {
    if (!grad.empty()) std::fill(grad.data.begin(), grad.data.end(), T(0));
  }
  void ensure_grad() {
    if (grad.empty()) grad = Tensor<T>::zeros(value.shape);
  }
};

template <typename T>
class Tape;

// Handle to a node on a tape. Handles stay valid as the tape grows, but the
// reference returned by value() can be invalidated by the next op call; copy
// the tensor before building further if it must outlive that.
template <typename T>
struct Val {
  Tape<T>* tape = nullptr;
  int id = -1;

  bool valid() const { return tape != nullptr && id >= 0; }
  const Tensor<T>& value() const;
  T scalar() const { return value().data.at(0); }
};

// Reverse-mode tape. Nodes are appended in topological order; backward walks
// the tape in reverse. The same Param used twice resolves to one leaf node, so
// weight sharing accumulates gradients through a single identity.
template <typename T>
class Tape {
 public:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;  // allocated on first accumulation
    std::function<void(Tape&)> backprop;
    Param<T>* param = nullptr;
    bool needs_grad = false;
  };

  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

  bool grad_enabled() const { return grad_enabled_; }

  int add_node(Tensor<T> v, bool needs_grad, std::function<void(Tape&)> backprop) {
    Node n;
    n.value = std::move(v);
    n.needs_grad = needs_grad && grad_enabled_;
    if (n.needs_grad) n.backprop = std::move(backprop);
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
  }

  Val<T> constant(Tensor<T> v) { return {this, add_node(std::move(v), false, nullptr)}; }

  Val<T> leaf(Param<T>& p) {
    auto it = param_nodes_.find(&p);
    if (it != param_nodes_.end()) return {this, it->second};
    int id = add_node(p.value, p.trainable, nullptr);
    if (nodes_[id].needs_grad) nodes_[id].param = &p;
    param_nodes_.emplace(&p, id);
    return {this, id};
  }

  Node& node(int id) { return nodes_[static_cast<std::size_t>(id)]; }
  const Node& node(int id) const { return nodes_[static_cast<std::size_t>(id)]; }

  Tensor<T>& grad_of(int id) {
    Node& n = node(id);
    if (n.grad.empty()) n.grad = Tensor<T>::zeros(n.value.shape);
    return n.grad;
  }

  bool has_grad(int id) const { return !node(id).grad.empty(); }

  // Backpropagate from a scalar node (seed gradient 1).
  void backward(Val<T> loss) {
    if (!grad_enabled_) throw ShapeError("backward on a no-grad tape");
    if (loss.value().numel() != 1) throw ShapeError("backward expects a scalar loss");
    grad_of(loss.id).data[0] = T(1);
    for (int i = loss.id; i >= 0; --i) {
      Node& n = nodes_[static_cast<std::size_t>(i)];
      if (!n.needs_grad || n.grad.empty()) continue;
      if (n.param != nullptr) {
        n.param->ensure_grad();
        for (std::size_t k = 0; k < n.grad.data.size(); ++k)
          n.param->grad.data[k] += n.grad.data[k];
      }
      if (n.backprop) n.backprop(*this);
    }
  }

  std::size_t size() const { return nodes_.size(); }

  // Drop every node gradient so a second backward pass on this tape starts
  // clean. Param gradients are left alone; zero those separately.
  void clear_grads() {
    for (Node& n : nodes_) n.grad = Tensor<T>();
  }

 private:
  std::vector<Node> nodes_;
  std::unordered_map<const Param<T>*, int> param_nodes_;
  bool grad_enabled_;
};

template <typename T>
const Tensor<T>& Val<T>::value() const {
  return tape->node(id).value;
}

namespace detail {

template <typename T>
bool wants_grad(std::initializer_list<Val<T>> ins) {
  for (const Val<T>& v : ins)
    if (v.tape->node(v.id).needs_grad) return true;
  return false;
}

template <typename T>
void accum(Tape<T>& t, int id, const Tensor<T>& delta) {
  if (!t.node(id).needs_grad) return;
  Tensor<T>& g = t.grad_of(id);
  for (std::size_t i = 0; i < g.data.size(); ++i) g.data[i] += delta.data[i];
}

}  // namespace detail

// ---- elementwise ----

template <typename T>
Val<T> add(Val<T> a, Val<T> b) {
  Tape<T>& t = *a.tape;
  const Tensor<T>&av = a.value(), &bv = b.value();
  if (!av.same_shape(bv)) throw ShapeError("add: shape mismatch " + av.shape_str() + " vs " + bv.shape_str());
  Tensor<T> out = av;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += bv.data[i];
  int aid = a.id, bid = b.id;
  int id = t.add_node(std::move(out), detail::wants_grad<T>({a, b}), nullptr);
  if (t.node(id).needs_grad)
    t.node(id).backprop = [id, aid, bid](Tape<T>& tp) {
      const Tensor<T>& g = tp.grad_of(id);
      detail::accum(tp, aid, g);
      detail::accum(tp, bid, g);
    };
  return {&t, id};
}

template <typename T>
Val<T> sub(Val<T> a, Val<T> b) {
  Tape<T>& t = *a.tape;
  const Tensor<T>&av = a.value(), &bv = b.value();
  if (!av.same_shape(bv)) throw ShapeError("sub: shape mismatch");
  Tensor<T> out = av;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] -= bv.data[i];
  int aid = a.id, bid = b.id;
  int id = t.add_node(std::move(out), detail::wants_grad<T>({a, b}), nullptr);
  if (t.node(id).needs_grad)
    t.node(id).backprop = [id, aid, bid](Tape<T>& tp) {
      const Tensor<T>& g = tp.grad_of(id);
      detail::accum(tp, aid, g);
      if (tp.node(bid).needs_grad) {
        Tensor<T>& gb = tp.grad_of(bid);
        for (std::size_t i = 0; i < gb.data.size(); ++i) gb.data[i] -= g.data[i];
      }
    };
  return {&t, id};
}

template <typename T>
Val<T> mul(Val<T> a, Val<T> b) {
  Tape<T>& t = *a.tape;
  const Tensor<T>&av = a.value(), &bv = b.value();
  if (!av.same_shape(bv)) throw ShapeError("mul: shape mismatch");
  Tensor<T> out = av;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] *= bv.data[i];
  int aid = a.id, bid = b.id;
  int id = t.add_node(std::move(out), detail::wants_grad<T>({a, b}), nullptr);
  if (t.node(id).needs_grad)
    t.node(id).backprop = [id, aid, bid](Tape<T>& tp) {
      const Tensor<T>& g = tp.grad_of(id);
      const Tensor<T>&av2 = tp.node(aid).value, &bv2 = tp.node(bid).value;
      if (tp.node(aid).needs_grad) {
        Tensor<T>& ga = tp.grad_of(aid);
        for (std::size_t i = 0; i < ga.data.size(); ++i) ga.data[i] += g.data[i] * bv2.data[i];
      }
      if (tp.node(bid).needs_grad) {
        Tensor<T>& gb = tp.grad_of(bid);
        for (std::size_t i = 0; i < gb.data.size(); ++i) gb.data[i] += g.data[i] * av2.data[i];
      }
    };
  return {&t, id};
}

template <typename T>
Val<T> scale(Val<T> a, T c) {
  Tape<T>& t = *a.tape;
  Tensor<T> out = a.value();
  for (T& v : out.data) v *= c;
  int aid = a.id;
  int id = t.add_node(std::move(out), detail::wants_grad<T>({a}), nullptr);
  if (t.node(id).needs_grad)
    t.node(id).backprop = [id, aid, c](Tape<T>& tp) {
      const Tensor<T>& g = tp.grad_of(id);
      if (tp.node(aid).needs_grad) {
        Tensor<T>& ga = tp.grad_of(aid);
        for (std::size_t i = 0; i < ga.data.size(); ++i) ga.data[i] += c * g.data[i];
      }
    };
  return {&t, id};
}

template <typename T>
Val<T> detach(Val<T> a) {
  return a.tape->constant(a.value());
}

// ---- activations ----

template <typename T>
Val<T> relu(Val<T> a) {
  Tape<T>& t = *a.tape;
  Tensor<T> out = a.value();
  for (T& v : out.data) v = v > T(0) ? v : T(0);
  int aid = a.id;
  int id = t.add_node(std::move(out), detail::wants_grad<T>({a}), nullptr);
  if (t.node(id).needs_grad)
    t.node(id).backprop = [id, aid](Tape<T>& tp) {
      const Tensor<T>& g = tp.grad_of(id);
      const Tensor<T>& x = tp.node(aid).value;
      Tensor<T>& ga = tp.grad_of(aid);
      for (std::size_t i = 0; i < ga.data.size(); ++i)
        if (x.data[i] > T(0)) ga.data[i] += g.data[i];
    };
  return {&t, id};
}

template <typename T>
Val<T> leaky_relu(Val<T> a, T slope) {
  Tape<T>& t = *a.tape;
  Tensor<T> out = a.value();
  for (T& v : out.data) v = v > T(0) ? v : slope * v;
  int aid = a.id;
  int id = t.add_node(std::move(out), detail::wants_grad<T>({a}), nullptr);
  if (t.node(id).needs_grad)
    t.node(id).backprop = [id, aid, slope](Tape<T>& tp) {
      const Tensor<T>& g = tp.grad_of(id);
      const Tensor<T>& x = tp.node(aid).value;
      Tensor<T>& ga = tp.grad_of(aid);
      for (std::size_t i = 0; i < ga.data.size(); ++i)
        ga.data[i] += (x.data[i] > T(0) ? T(1) : slope) * g.data[i];
    };
  return {&t, id};
}

template <typename T>
Val<T> sigmoid(Val<T> a) {
  Tape<T>& t = *a.tape;
  Tensor<T> out = a.value();
  for (T& v : out.data) v = T(1) / (T(1) + std::exp(-v));
  int aid = a.id;
  int id = t.add_node(std::move(out), detail::wants_grad<T>({a}), nullptr);
  if (t.node(id).needs_grad)
    t.node(id).backprop = [id, aid](Tape<T>& tp) {
      const Tensor<T>& g = tp.grad_of(id);
      const Tensor<T>& y = tp.node(id).value;
      Tensor<T>& ga = tp.grad_of(aid);
      for (std::size_t i = 0; i < ga.data.size(); ++i)
        ga.data[i] += g.data[i] * y.data[i] * (T(1) - y.data[i]);
    };
  return {&t, id};
}

template <typename T>
Val<T> tanh_op(Val<T> a) {
  Tape<T>& t = *a.tape;
  Tensor<T> out = a.value();
  for (T& v : out.data) v = std::tanh(v);
  int aid = a.id;
  int id = t.add_node(std::move(out), detail::wants_grad<T>({a}), nullptr);
  if (t.node(id).needs_grad)
    t.node(id).backprop = [id, aid](Tape<T>& tp) {
      const Tensor<T>& g = tp.grad_of(id);
      const Tensor<T>& y = tp.node(id).value;
      Tensor<T>& ga = tp.grad_of(aid);
      for (std::size_t i = 0; i < ga.data.size(); ++i)
        ga.data[i] += g.data[i] * (T(1) - y.data[i] * y.data[i]);
    };
  return {&t, id};
}

// ---- shape ops ----

template <typename T>
Val<T> reshape(Val<T> a, std::vector<int> shape) {
  Tape<T>& t = *a.tape;
  Tensor<T> out = a.value().reshaped(shape);
  int aid = a.id;
  int id = t.add_node(std::move(out), detail::wants_grad<T>({a}), nullptr);
  if (t.node(id).needs_grad)
    t.node(id).backprop = [id, aid](Tape<T>& tp) {
      const Tensor<T>& g = tp.grad_of(id);
      if (tp.node(aid).needs_grad) {
        Tensor<T>& ga = tp.grad_of(aid);
        for (std::size_t i = 0; i < ga.data.size(); ++i) ga.data[i] += g.data[i];
      }
    };
  return {&t, id};
}

// concatenate along channel axis, inputs (N,C_i,H,W)
template <typename T>
Val<T> concat_channels(Val<T> a, Val<T> b) {
  Tape<T>& t = *a.tape;
  const Tensor<T>&av = a.value(), &bv = b.value();
  if (av.ndim() != 4 || bv.ndim() != 4) throw ShapeError("concat_channels expects 4D");
  if (av.dim(0) != bv.dim(0) || av.dim(2) != bv.dim(2) || av.dim(3) != bv.dim(3))
    throw ShapeError("concat_channels: incompatible shapes");
  int n = av.dim(0), ca = av.dim(1), cb = bv.dim(1), h = av.dim(2), w = av.dim(3);
  Tensor<T> out({n, ca + cb, h, w});
  std::size_t plane = static_cast<std::size_t>(h) * w;
  for (int ni = 0; ni < n; ++ni) {
    std::copy_n(av.ptr() + static_cast<std::size_t>(ni) * ca * plane, ca * plane,
                out.ptr() + static_cast<std::size_t>(ni) * (ca + cb) * plane);
    std::copy_n(bv.ptr() + static_cast<std::size_t>(ni) * cb * plane, cb * plane,
                out.ptr() + (static_cast<std::size_t>(ni) * (ca + cb) + ca) * plane);
  }
  int aid = a.id, bid = b.id;
  int id = t.add_node(std::move(out), detail::wants_grad<T>({a, b}), nullptr);
  if (t.node(id).needs_grad)
    t.node(id).backprop = [id, aid, bid, n, ca, cb, plane](Tape<T>& tp) {
      const Tensor<T>& g = tp.grad_of(id);
      for (int ni = 0; ni < n; ++ni) {
        if (tp.node(aid).needs_grad) {
          Tensor<T>& ga = tp.grad_of(aid);
          const T* src = g.ptr() + static_cast<std::size_t>(ni) * (ca + cb) * plane;
          T* dst = ga.ptr() + static_cast<std::size_t>(ni) * ca * plane;
          for (std::size_t i = 0; i < static_cast<std::size_t>(ca) * plane; ++i) dst[i] += src[i];
        }
        if (tp.node(bid).needs_grad) {
          Tensor<T>& gb = tp.grad_of(bid);
          const T* src = g.ptr() + (static_cast<std::size_t>(ni) * (ca + cb) + ca) * plane;
          T* dst = gb.ptr() + static_cast<std::size_t>(ni) * cb * plane;
          for (std::size_t i = 0; i < static_cast<std::size_t>(cb) * plane; ++i) dst[i] += src[i];
        }
      }
    };
  return {&t, id};
}

// channels [from, to) of a 4D tensor
template <typename T>
Val<T> slice_channels(Val<T> a, int from, int to) {
  Tape<T>& t = *a.tape;
  const Tensor<T>& av = a.value();
  if (av.ndim() != 4) throw ShapeError("slice_channels expects 4D");
  int n = av.dim(0), c = av.dim(1), h = av.dim(2), w = av.dim(3);
  if (from < 0 || to > c || from >= to) throw ShapeError("slice_channels: bad range");
  int cs = to - from;
  std::size_t plane = static_cast<std::size_t>(h) * w;
  Tensor<T> out({n, cs, h, w});
  for (int ni = 0; ni < n; ++ni)
    std::copy_n(av.ptr() + (static_cast<std::size_t>(ni) * c + from) * plane, cs * plane,
                out.ptr() + static_cast<std::size_t>(ni) * cs * plane);
  int aid = a.id;
  int id = t.add_node(std::move(out), detail::wants_grad<T>({a}), nullptr);
  if (t.node(id).needs_grad)
    t.node(id).backprop = [id, aid, n, c, from, cs, plane](Tape<T>& tp) {
      const Tensor<T>& g = tp.grad_of(id);
      Tensor<T>& ga = tp.grad_of(aid);
      for (int ni = 0; ni < n; ++ni) {
        const T* src = g.ptr() + static_cast<std::size_t>(ni) * cs * plane;
        T* dst = ga.ptr() + (static_cast<std::size_t>(ni) * c + from) * plane;
        for (std::size_t i = 0; i < static_cast<std::size_t>(cs) * plane; ++i) dst[i] += src[i];
      }
    };
  return {&t, id};
}

// nearest-neighbour 2x upsample, (N,C,H,W) -> (N,C,2H,2W)
template <typename T>
Val<T> upsample2x(Val<T> a) {
  Tape<T>& t = *a.tape;
  const Tensor<T>& av = a.value();
  if (av.ndim() != 4) throw ShapeError("upsample2x expects 4D");
  int n = av.dim(0), c = av.dim(1), h = av.dim(2), w = av.dim(3);
  Tensor<T> out({n, c, 2 * h, 2 * w});
  for (int nc = 0; nc < n * c; ++nc) {
    const T* src = av.ptr() + static_cast<std::size_t>(nc) * h * w;
    T* dst = out.ptr() + static_cast<std::size_t>(nc) * 4 * h * w;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        T v = src[y * w + x];
        dst[(2 * y) * 2 * w + 2 * x] = v;
        dst[(2 * y) * 2 * w + 2 * x + 1] = v;
        dst[(2 * y + 1) * 2 * w + 2 * x] = v;
        dst[(2 * y + 1) * 2 * w + 2 * x + 1] = v;
      }
  }
  int aid = a.id;
  int id = t.add_node(std::move(out), detail::wants_grad<T>({a}), nullptr);
  if (t.node(id).needs_grad)
    t.node(id).backprop = [id, aid, n, c, h, w](Tape<T>& tp) {
      const Tensor<T>& g = tp.grad_of(id);
      Tensor<T>& ga = tp.grad_of(aid);
      for (int nc = 0; nc < n * c; ++nc) {
        const T* src = g.ptr() + static_cast<std::size_t>(nc) * 4 * h * w;
        T* dst = ga.ptr() + static_cast<std::size_t>(nc) * h * w;
        for (int y = 0; y < h; ++y)
          for (int x = 0; x < w; ++x)
            dst[y * w + x] += src[(2 * y) * 2 * w + 2 * x] + src[(2 * y) * 2 * w + 2 * x + 1] +
                              src[(2 * y + 1) * 2 * w + 2 * x] + src[(2 * y + 1) * 2 * w + 2 * x + 1];
      }
    };
  return {&t, id};
}

// ---- linear algebra ----

// x (N,I) * w (O,I)^T + b (O) -> (N,O)
template <typename T>
Val<T> linear(Val<T> x, Val<T> w, Val<T> b) {
  Tape<T>& t = *x.tape;
  const Tensor<T>&xv = x.value(), &wv = w.value(), &bv = b.value();
  if (xv.ndim() != 2 || wv.ndim() != 2 || xv.dim(1) != wv.dim(1))
    throw ShapeError("linear: shape mismatch");
  int n = xv.dim(0), in = xv.dim(1), out_dim = wv.dim(0);
  if (bv.numel() != out_dim) throw ShapeError("linear: bias size");
  Tensor<T> out({n, out_dim});
  for (int i = 0; i < n; ++i)
    for (int o = 0; o < out_dim; ++o) {
      double acc = bv.data[o];
      const T* xr = xv.ptr() + static_cast<std::size_t>(i) * in;
      const T* wr = wv.ptr() + static_cast<std::size_t>(o) * in;
      for (int k = 0; k < in; ++k) acc += static_cast<double>(xr[k]) * wr[k];
      out.data[static_cast<std::size_t>(i) * out_dim + o] = static_cast<T>(acc);
    }
  int xid = x.id, wid = w.id, bid = b.id;
  int id = t.add_node(std::move(out), detail::wants_grad<T>({x, w, b}), nullptr);
  if (t.node(id).needs_grad)
    t.node(id).backprop = [id, xid, wid, bid, n, in, out_dim](Tape<T>& tp) {
      const Tensor<T>& g = tp.grad_of(id);
      const Tensor<T>&xv2 = tp.node(xid).value, &wv2 = tp.node(wid).value;
      if (tp.node(xid).needs_grad) {
        Tensor<T>& gx = tp.grad_of(xid);
        for (int i = 0; i < n; ++i)
          for (int k = 0; k < in; ++k) {
            double acc = 0;
            for (int o = 0; o < out_dim; ++o)
              acc += static_cast<double>(g.data[static_cast<std::size_t>(i) * out_dim + o]) *
                     wv2.data[static_cast<std::size_t>(o) * in + k];
            gx.data[static_cast<std::size_t>(i) * in + k] += static_cast<T>(acc);
          }
      }
      if (tp.node(wid).needs_grad) {
        Tensor<T>& gw = tp.grad_of(wid);
        for (int o = 0; o < out_dim; ++o)
          for (int k = 0; k < in; ++k) {
            double acc = 0;
            for (int i = 0; i < n; ++i)
              acc += static_cast<double>(g.data[static_cast<std::size_t>(i) * out_dim + o]) *
                     xv2.data[static_cast<std::size_t>(i) * in + k];
            gw.data[static_cast<std::size_t>(o) * in + k] += static_cast<T>(acc);
          }
      }
      if (tp.node(bid).needs_grad) {
        Tensor<T>& gb = tp.grad_of(bid);
        for (int o = 0; o < out_dim; ++o) {
          double acc = 0;
          for (int i = 0; i < n; ++i) acc += g.data[static_cast<std::size_t>(i) * out_dim + o];
          gb.data[o] += static_cast<T>(acc);
        }
      }
    };
  return {&t, id};
}

// m (R,C) * v (C) -> (R); the weight-bank contraction
template <typename T>
Val<T> matvec(Val<T> m, Val<T> v) {
  Tape<T>& t = *m.tape;
  const Tensor<T>&mv = m.value(), &vv = v.value();
  if (mv.ndim() != 2 || vv.numel() != mv.dim(1)) throw ShapeError("matvec: shape mismatch");
  int rows = mv.dim(0), cols = mv.dim(1);
  Tensor<T> out({rows});
  for (int r = 0; r < rows; ++r) {
    double acc = 0;
    const T* mr = mv.ptr() + static_cast<std::size_t>(r) * cols;
    for (int c = 0; c < cols; ++c) acc += static_cast<double>(mr[c]) * vv.data[c];
    out.data[r] = static_cast<T>(acc);
  }
  int mid = m.id, vid = v.id;
  int id = t.add_node(std::move(out), detail::wants_grad<T>({m, v}), nullptr);
  if (t.node(id).needs_grad)
    t.node(id).backprop = [id, mid, vid, rows, cols](Tape<T>& tp) {
      const Tensor<T>& g = tp.grad_of(id);
      const Tensor<T>&mv2 = tp.node(mid).value, &vv2 = tp.node(vid).value;
      if (tp.node(mid).needs_grad) {
        Tensor<T>& gm = tp.grad_of(mid);
        for (int r = 0; r < rows; ++r) {
          T gr = g.data[r];
          T* row = gm.ptr() + static_cast<std::size_t>(r) * cols;
          for (int c = 0; c < cols; ++c) row[c] += gr * vv2.data[c];
        }
      }
      if (tp.node(vid).needs_grad) {
        Tensor<T>& gv = tp.grad_of(vid);
        for (int c = 0; c < cols; ++c) {
          double acc = 0;
          for (int r = 0; r < rows; ++r)
            acc += static_cast<double>(g.data[r]) * mv2.data[static_cast<std::size_t>(r) * cols + c];
          gv.data[c] += static_cast<T>(acc);
        }
      }
    };
  return {&t, id};
}

// ---- normalization ----

// per-(n,c) normalization over H,W with learned per-channel affine
template <typename T>
Val<T> instance_norm(Val<T> x, Val<T> gamma, Val<T> beta, T eps = T(1e-5)) {
  Tape<T>& t = *x.tape;
  const Tensor<T>& xv = x.value();
  if (xv.ndim() != 4) throw ShapeError("instance_norm expects 4D");
  int n = xv.dim(0), c = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
  const Tensor<T>&gv = gamma.value(), &bv = beta.value();
  if (gv.numel() != c || bv.numel() != c) throw ShapeError("instance_norm: affine size");
  std::size_t m = static_cast<std::size_t>(h) * w;
  Tensor<T> out(xv.shape);
  // cache per-(n,c) mean and inverse stddev for backward
  auto stats = std::make_shared<std::vector<T>>(static_cast<std::size_t>(n) * c * 2);
  for (int nc = 0; nc < n * c; ++nc) {
    const T* src = xv.ptr() + nc * m;
    double mean = 0;
    for (std::size_t i = 0; i < m; ++i) mean += src[i];
    mean /= static_cast<double>(m);
    double var = 0;
    for (std::size_t i = 0; i < m; ++i) {
      double d = src[i] - mean;
      var += d * d;
    }
    var /= static_cast<double>(m);
    T inv_std = static_cast<T>(1.0 / std::sqrt(var + static_cast<double>(eps)));
    (*stats)[2 * nc] = static_cast<T>(mean);
    (*stats)[2 * nc + 1] = inv_std;
    int ch = nc % c;
    T* dst = out.ptr() + nc * m;
    for (std::size_t i = 0; i < m; ++i)
      dst[i] = gv.data[ch] * (src[i] - static_cast<T>(mean)) * inv_std + bv.data[ch];
  }
  int xid = x.id, gid = gamma.id, bid = beta.id;
  int id = t.add_node(std::move(out), detail::wants_grad<T>({x, gamma, beta}), nullptr);
  if (t.node(id).needs_grad)
    t.node(id).backprop = [id, xid, gid, bid, n, c, m, stats](Tape<T>& tp) {
      const Tensor<T>& g = tp.grad_of(id);
      const Tensor<T>& xv2 = tp.node(xid).value;
      const Tensor<T>& gv2 = tp.node(gid).value;
      bool need_x = tp.node(xid).needs_grad;
      bool need_g = tp.node(gid).needs_grad;
      bool need_b = tp.node(bid).needs_grad;
      for (int nc = 0; nc < n * c; ++nc) {
        int ch = nc % c;
        T mean = (*stats)[2 * nc], inv_std = (*stats)[2 * nc + 1];
        const T* src = xv2.ptr() + nc * m;
        const T* go = g.ptr() + nc * m;
        if (need_g || need_b) {
          double sg = 0, sb = 0;
          for (std::size_t i = 0; i < m; ++i) {
            sb += go[i];
            sg += static_cast<double>(go[i]) * (src[i] - mean) * inv_std;
          }
          if (need_g) tp.grad_of(gid).data[ch] += static_cast<T>(sg);
          if (need_b) tp.grad_of(bid).data[ch] += static_cast<T>(sb);
        }
        if (need_x) {
          // dL/dx = gamma*inv_std * (dy - mean(dy) - xhat * mean(dy*xhat))
          double sum_dy = 0, sum_dyx = 0;
          for (std::size_t i = 0; i < m; ++i) {
            double xh = (src[i] - mean) * inv_std;
            sum_dy += go[i];
            sum_dyx += go[i] * xh;
          }
          double mdy = sum_dy / static_cast<double>(m);
          double mdyx = sum_dyx / static_cast<double>(m);
          T* gx = tp.grad_of(xid).ptr() + nc * m;
          T gam = gv2.data[ch];
          for (std::size_t i = 0; i < m; ++i) {
            double xh = (src[i] - mean) * inv_std;
            gx[i] += static_cast<T>(gam * inv_std * (go[i] - mdy - xh * mdyx));
          }
        }
      }
    };
  return {&t, id};
}

// ---- reductions / losses ----

template <typename T>
Val<T> mean_all(Val<T> a) {
  Tape<T>& t = *a.tape;
  Tensor<T> out = Tensor<T>::scalar(static_cast<T>(a.value().mean()));
  int aid = a.id;
  long long n = a.value().numel();
  int id = t.add_node(std::move(out), detail::wants_grad<T>({a}), nullptr);
  if (t.node(id).needs_grad)
    t.node(id).backprop = [id, aid, n](Tape<T>& tp) {
      T g = tp.grad_of(id).data[0] / static_cast<T>(n);
      Tensor<T>& ga = tp.grad_of(aid);
      for (T& v : ga.data) v += g;
    };
  return {&t, id};
}

// mean |a - b|
template <typename T>
Val<T> mean_abs_diff(Val<T> a, Val<T> b) {
  Tape<T>& t = *a.tape;
  const Tensor<T>&av = a.value(), &bv = b.value();
  if (!av.same_shape(bv)) throw ShapeError("mean_abs_diff: shape mismatch");
  long long n = av.numel();
  double acc = 0;
  for (std::size_t i = 0; i < av.data.size(); ++i)
    acc += std::abs(static_cast<double>(av.data[i]) - static_cast<double>(bv.data[i]));
  Tensor<T> out = Tensor<T>::scalar(static_cast<T>(acc / static_cast<double>(n)));
  int aid = a.id, bid = b.id;
  int id = t.add_node(std::move(out), detail::wants_grad<T>({a, b}), nullptr);
  if (t.node(id).needs_grad)
    t.node(id).backprop = [id, aid, bid, n](Tape<T>& tp) {
      T g = tp.grad_of(id).data[0] / static_cast<T>(n);
      const Tensor<T>&av2 = tp.node(aid).value, &bv2 = tp.node(bid).value;
      bool na = tp.node(aid).needs_grad, nb = tp.node(bid).needs_grad;
      for (std::size_t i = 0; i < av2.data.size(); ++i) {
        T d = av2.data[i] - bv2.data[i];
        T s = d > T(0) ? g : (d < T(0) ? -g : T(0));
        if (na) tp.grad_of(aid).data[i] += s;
        if (nb) tp.grad_of(bid).data[i] -= s;
      }
    };
  return {&t, id};
}

// mean (a - b)^2
template <typename T>
Val<T> mean_sq_diff(Val<T> a, Val<T> b) {
  Tape<T>& t = *a.tape;
  const Tensor<T>&av = a.value(), &bv = b.value();
  if (!av.same_shape(bv)) throw ShapeError("mean_sq_diff: shape mismatch");
  long long n = av.numel();
  double acc = 0;
  for (std::size_t i = 0; i < av.data.size(); ++i) {
    double d = static_cast<double>(av.data[i]) - static_cast<double>(bv.data[i]);
    acc += d * d;
  }
  Tensor<T> out = Tensor<T>::scalar(static_cast<T>(acc / static_cast<double>(n)));
  int aid = a.id, bid = b.id;
  int id = t.add_node(std::move(out), detail::wants_grad<T>({a, b}), nullptr);
  if (t.node(id).needs_grad)
    t.node(id).backprop = [id, aid, bid, n](Tape<T>& tp) {
      T g = tp.grad_of(id).data[0] * T(2) / static_cast<T>(n);
      const Tensor<T>&av2 = tp.node(aid).value, &bv2 = tp.node(bid).value;
      bool na = tp.node(aid).needs_grad, nb = tp.node(bid).needs_grad;
      for (std::size_t i = 0; i < av2.data.size(); ++i) {
        T d = (av2.data[i] - bv2.data[i]) * g;
        if (na) tp.grad_of(aid).data[i] += d;
        if (nb) tp.grad_of(bid).data[i] -= d;
      }
    };
  return {&t, id};
}

// elementwise average of k same-shape values
template <typename T>
Val<T> average(const std::vector<Val<T>>& vals) {
  if (vals.empty()) throw ShapeError("average of nothing");
  if (vals.size() == 1) return vals[0];
  Tape<T>& t = *vals[0].tape;
  Tensor<T> out = vals[0].value();
  for (std::size_t k = 1; k < vals.size(); ++k) {
    const Tensor<T>& v = vals[k].value();
    if (!v.same_shape(out)) throw ShapeError("average: shape mismatch");
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += v.data[i];
  }
  T inv = T(1) / static_cast<T>(vals.size());
  for (T& v : out.data) v *= inv;
  bool ng = false;
  for (const Val<T>& v : vals) ng = ng || t.node(v.id).needs_grad;
  std::vector<int> ids;
  for (const Val<T>& v : vals) ids.push_back(v.id);
  int id = t.add_node(std::move(out), ng, nullptr);
  if (t.node(id).needs_grad)
    t.node(id).backprop = [id, ids, inv](Tape<T>& tp) {
      const Tensor<T>& g = tp.grad_of(id);
      for (int pid : ids) {
        if (!tp.node(pid).needs_grad) continue;
        Tensor<T>& gp = tp.grad_of(pid);
        for (std::size_t i = 0; i < gp.data.size(); ++i) gp.data[i] += inv * g.data[i];
      }
    };
  return {&t, id};
}

// (N,C,H,W) -> (N,C)
template <typename T>
Val<T> global_mean_hw(Val<T> a) {
  Tape<T>& t = *a.tape;
  const Tensor<T>& av = a.value();
  if (av.ndim() != 4) throw ShapeError("global_mean_hw expects 4D");
  int n = av.dim(0), c = av.dim(1);
  std::size_t m = static_cast<std::size_t>(av.dim(2)) * av.dim(3);
  Tensor<T> out({n, c});
  for (int nc = 0; nc < n * c; ++nc) {
    double acc = 0;
    const T* src = av.ptr() + nc * m;
    for (std::size_t i = 0; i < m; ++i) acc += src[i];
    out.data[nc] = static_cast<T>(acc / static_cast<double>(m));
  }
  int aid = a.id;
  int id = t.add_node(std::move(out), detail::wants_grad<T>({a}), nullptr);
  if (t.node(id).needs_grad)
    t.node(id).backprop = [id, aid, n, c, m](Tape<T>& tp) {
      const Tensor<T>& g = tp.grad_of(id);
      Tensor<T>& ga = tp.grad_of(aid);
      for (int nc = 0; nc < n * c; ++nc) {
        T gv = g.data[nc] / static_cast<T>(m);
        T* dst = ga.ptr() + nc * m;
        for (std::size_t i = 0; i < m; ++i) dst[i] += gv;
      }
    };
  return {&t, id};
}

// (N,C,H,W) -> (N,C), max over the spatial plane; the gradient flows to the
// first maximal element of each plane
template <typename T>
Val<T> global_max_hw(Val<T> a) {
  Tape<T>& t = *a.tape;
  const Tensor<T>& av = a.value();
  if (av.ndim() != 4) throw ShapeError("global_max_hw expects 4D");
  int n = av.dim(0), c = av.dim(1);
  std::size_t m = static_cast<std::size_t>(av.dim(2)) * av.dim(3);
  Tensor<T> out({n, c});
  auto argmax = std::make_shared<std::vector<std::size_t>>(static_cast<std::size_t>(n) * c);
  for (int nc = 0; nc < n * c; ++nc) {
    const T* src = av.ptr() + nc * m;
    std::size_t best = 0;
    for (std::size_t i = 1; i < m; ++i)
      if (src[i] > src[best]) best = i;
    (*argmax)[static_cast<std::size_t>(nc)] = best;
    out.data[nc] = src[best];
  }
  int aid = a.id;
  int id = t.add_node(std::move(out), detail::wants_grad<T>({a}), nullptr);
  if (t.node(id).needs_grad)
    t.node(id).backprop = [id, aid, n, c, m, argmax](Tape<T>& tp) {
      const Tensor<T>& g = tp.grad_of(id);
      Tensor<T>& ga = tp.grad_of(aid);
      for (int nc = 0; nc < n * c; ++nc)
        ga.ptr()[nc * m + (*argmax)[static_cast<std::size_t>(nc)]] += g.data[nc];
    };
  return {&t, id};
}

// mean cross-entropy over a batch of logits (N,K)
template <typename T>
Val<T> softmax_cross_entropy(Val<T> logits, const std::vector<int>& labels) {
  Tape<T>& t = *logits.tape;
  const Tensor<T>& lv = logits.value();
  if (lv.ndim() != 2 || static_cast<std::size_t>(lv.dim(0)) != labels.size())
    throw ShapeError("softmax_cross_entropy: shape mismatch");
  int n = lv.dim(0), k = lv.dim(1);
  auto probs = std::make_shared<Tensor<T>>(std::vector<int>{n, k});
  double loss = 0;
  for (int i = 0; i < n; ++i) {
    const T* row = lv.ptr() + static_cast<std::size_t>(i) * k;
    T mx = row[0];
    for (int j = 1; j < k; ++j) mx = std::max(mx, row[j]);
    double z = 0;
    for (int j = 0; j < k; ++j) z += std::exp(static_cast<double>(row[j] - mx));
    double logz = std::log(z) + static_cast<double>(mx);
    int y = labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= k) throw ShapeError("softmax_cross_entropy: label out of range");
    loss += logz - static_cast<double>(row[y]);
    for (int j = 0; j < k; ++j)
      probs->data[static_cast<std::size_t>(i) * k + j] =
          static_cast<T>(std::exp(static_cast<double>(row[j]) - logz));
  }
  Tensor<T> out = Tensor<T>::scalar(static_cast<T>(loss / n));
  int lid = logits.id;
  auto labels_copy = std::make_shared<std::vector<int>>(labels);
  int id = t.add_node(std::move(out), detail::wants_grad<T>({logits}), nullptr);
  if (t.node(id).needs_grad)
    t.node(id).backprop = [id, lid, n, k, probs, labels_copy](Tape<T>& tp) {
      T g = tp.grad_of(id).data[0] / static_cast<T>(n);
      Tensor<T>& gl = tp.grad_of(lid);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < k; ++j) {
          T p = probs->data[static_cast<std::size_t>(i) * k + j];
          T target = (j == (*labels_copy)[static_cast<std::size_t>(i)]) ? T(1) : T(0);
          gl.data[static_cast<std::size_t>(i) * k + j] += g * (p - target);
        }
    };
  return {&t, id};
}

}  // namespace seq2seq::nn
