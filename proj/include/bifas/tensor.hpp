// Copyright 2026 The bifas Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

namespace bifas {

using Shape = std::vector<std::size_t>;

struct TensorError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream oss;
  oss << "[";
  for (std::size_t i = 0; i < s.size(); ++i) oss << (i ? "," : "") << s[i];
  oss << "]";
  return oss.str();
}

namespace detail {

template <typename T>
struct TensorNode {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;  // empty until backward() reaches this node
  bool is_param = false;
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::function<void(TensorNode&)> backward_fn;

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), T(0));
  }
};

}  // namespace detail

// Dense row-major tensor with reverse-mode gradients. A TensorT is a cheap
// handle onto a shared node; ops record the graph as they run, backward()
// walks it once in reverse topological order. Gradients accumulate
// additively, so a tensor used twice receives the sum of both paths.
template <typename T>
class TensorT {
 public:
  using Node = detail::TensorNode<T>;

  TensorT() = default;
  explicit TensorT(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static TensorT zeros(Shape shape) {
    auto n = std::make_shared<Node>();
    n->value.assign(shape_numel(shape), T(0));
    n->shape = std::move(shape);
    return TensorT(std::move(n));
  }

  static TensorT full(Shape shape, T v) {
    auto t = zeros(std::move(shape));
    for (T& x : t.node_->value) x = v;
    return t;
  }

  static TensorT from_data(Shape shape, std::vector<T> data) {
    if (shape_numel(shape) != data.size())
      throw TensorError("from_data: shape " + shape_str(shape) + " needs " +
                        std::to_string(shape_numel(shape)) + " values, got " +
                        std::to_string(data.size()));
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->value = std::move(data);
    return TensorT(std::move(n));
  }

  static TensorT scalar(T v) { return full({}, v); }

  // Graph-recording constructor used by every op.
  static TensorT make_op(Shape shape, std::vector<T> value,
                         std::vector<TensorT> parents,
                         std::function<void(Node&)> backward_fn) {
    if (shape_numel(shape) != value.size())
      throw TensorError("make_op: value size does not match shape");
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->value = std::move(value);
    n->parents.reserve(parents.size());
    for (auto& p : parents) n->parents.push_back(p.node_);
    n->backward_fn = std::move(backward_fn);
    return TensorT(std::move(n));
  }

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  std::size_t numel() const { return node_->value.size(); }
  std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
  std::size_t ndim() const { return node_->shape.size(); }

  std::span<T> values() { return node_->value; }
  std::span<const T> values() const { return node_->value; }
  std::span<T> grad() {
    node_->ensure_grad();
    return node_->grad;
  }
  std::span<const T> grad() const {
    node_->ensure_grad();
    return node_->grad;
  }
  bool has_grad() const { return !node_->grad.empty(); }

  T item() const {
    if (numel() != 1)
      throw TensorError("item: tensor " + shape_str(shape()) + " is not scalar");
    return node_->value[0];
  }

  // 4-D convenience accessor, NCHW.
  T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
    const Shape& s = node_->shape;
    return node_->value[((n * s[1] + c) * s[2] + h) * s[3] + w];
  }
  T at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
    const Shape& s = node_->shape;
    return node_->value[((n * s[1] + c) * s[2] + h) * s[3] + w];
  }

  bool is_param() const { return node_->is_param; }
  void set_param(bool p) { node_->is_param = p; }

  void zero_grad() {
    if (node_) node_->grad.assign(node_->value.size(), T(0));
  }

  std::shared_ptr<Node> node() const { return node_; }

  TensorT detached_copy() const {
    return from_data(node_->shape, node_->value);
  }

  // Reverse-mode sweep from a scalar. Seeds this node's grad with +1 and
  // propagates through every recorded intermediate down to the leaves.
  void backward() const {
    if (!node_) throw TensorError("backward: undefined tensor");
    if (numel() != 1)
      throw TensorError("backward: loss must be scalar, got " + shape_str(shape()));

    std::vector<Node*> order;  // parents before children
    std::unordered_set<Node*> visited;
    struct Frame {
      Node* n;
      std::size_t next;
    };
    std::vector<Frame> stack;
    stack.push_back({node_.get(), 0});
    visited.insert(node_.get());
    while (!stack.empty()) {
      Frame& f = stack.back();
      if (f.next < f.n->parents.size()) {
        Node* p = f.n->parents[f.next++].get();
        if (visited.insert(p).second) stack.push_back({p, 0});
      } else {
        order.push_back(f.n);
        stack.pop_back();
      }
    }
    for (Node* n : order) n->ensure_grad();
    node_->grad[0] += T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      if ((*it)->backward_fn) (*it)->backward_fn(**it);
    }
  }

 private:
  std::shared_ptr<Node> node_;
};

using Tensor = TensorT<float>;

namespace detail {

template <typename T>
inline void check_same_shape(const TensorT<T>& a, const TensorT<T>& b, const char* op) {
  if (a.shape() != b.shape())
    throw TensorError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                      " vs " + shape_str(b.shape()));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise ops and reductions
// ---------------------------------------------------------------------------

template <typename T>
TensorT<T> add(const TensorT<T>& a, const TensorT<T>& b) {
  detail::check_same_shape(a, b, "add");
  std::vector<T> out(a.numel());
  auto av = a.values(), bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  return TensorT<T>::make_op(a.shape(), std::move(out), {a, b},
                             [](typename TensorT<T>::Node& self) {
                               auto& pa = *self.parents[0];
                               auto& pb = *self.parents[1];
                               pa.ensure_grad();
                               pb.ensure_grad();
                               for (std::size_t i = 0; i < self.grad.size(); ++i) {
                                 pa.grad[i] += self.grad[i];
                                 pb.grad[i] += self.grad[i];
                               }
                             });
}

template <typename T>
TensorT<T> sub(const TensorT<T>& a, const TensorT<T>& b) {
  detail::check_same_shape(a, b, "sub");
  std::vector<T> out(a.numel());
  auto av = a.values(), bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
  return TensorT<T>::make_op(a.shape(), std::move(out), {a, b},
                             [](typename TensorT<T>::Node& self) {
                               auto& pa = *self.parents[0];
                               auto& pb = *self.parents[1];
                               pa.ensure_grad();
                               pb.ensure_grad();
                               for (std::size_t i = 0; i < self.grad.size(); ++i) {
                                 pa.grad[i] += self.grad[i];
                                 pb.grad[i] -= self.grad[i];
                               }
                             });
}

template <typename T>
TensorT<T> mul(const TensorT<T>& a, const TensorT<T>& b) {
  detail::check_same_shape(a, b, "mul");
  std::vector<T> out(a.numel());
  auto av = a.values(), bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  return TensorT<T>::make_op(a.shape(), std::move(out), {a, b},
                             [](typename TensorT<T>::Node& self) {
                               auto& pa = *self.parents[0];
                               auto& pb = *self.parents[1];
                               pa.ensure_grad();
                               pb.ensure_grad();
                               for (std::size_t i = 0; i < self.grad.size(); ++i) {
                                 pa.grad[i] += self.grad[i] * pb.value[i];
                                 pb.grad[i] += self.grad[i] * pa.value[i];
                               }
                             });
}

template <typename T>
TensorT<T> scale(const TensorT<T>& a, T c) {
  std::vector<T> out(a.numel());
  auto av = a.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * c;
  return TensorT<T>::make_op(a.shape(), std::move(out), {a},
                             [c](typename TensorT<T>::Node& self) {
                               auto& pa = *self.parents[0];
                               pa.ensure_grad();
                               for (std::size_t i = 0; i < self.grad.size(); ++i)
                                 pa.grad[i] += c * self.grad[i];
                             });
}

template <typename T>
TensorT<T> relu(const TensorT<T>& a) {
  std::vector<T> out(a.numel());
  auto av = a.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] > T(0) ? av[i] : T(0);
  return TensorT<T>::make_op(a.shape(), std::move(out), {a},
                             [](typename TensorT<T>::Node& self) {
                               auto& pa = *self.parents[0];
                               pa.ensure_grad();
                               for (std::size_t i = 0; i < self.grad.size(); ++i)
                                 if (pa.value[i] > T(0)) pa.grad[i] += self.grad[i];
                             });
}

template <typename T>
TensorT<T> sigmoid(const TensorT<T>& a) {
  std::vector<T> out(a.numel());
  auto av = a.values();
  for (std::size_t i = 0; i < out.size(); ++i) {
    const T x = av[i];
    if (x >= T(0)) {
      out[i] = T(1) / (T(1) + std::exp(-x));
    } else {
      const T e = std::exp(x);
      out[i] = e / (T(1) + e);
    }
  }
  return TensorT<T>::make_op(a.shape(), std::move(out), {a},
                             [](typename TensorT<T>::Node& self) {
                               auto& pa = *self.parents[0];
                               pa.ensure_grad();
                               for (std::size_t i = 0; i < self.grad.size(); ++i) {
                                 const T y = self.value[i];
                                 pa.grad[i] += self.grad[i] * y * (T(1) - y);
                               }
                             });
}

template <typename T>
TensorT<T> sum(const TensorT<T>& a) {
  T acc = 0;
  for (T v : a.values()) acc += v;
  return TensorT<T>::make_op({}, {acc}, {a},
                             [](typename TensorT<T>::Node& self) {
                               auto& pa = *self.parents[0];
                               pa.ensure_grad();
                               const T g = self.grad[0];
                               for (std::size_t i = 0; i < pa.grad.size(); ++i)
                                 pa.grad[i] += g;
                             });
}

template <typename T>
TensorT<T> mean(const TensorT<T>& a) {
  if (a.numel() == 0) throw TensorError("mean: empty tensor");
  T acc = 0;
  for (T v : a.values()) acc += v;
  const T inv_n = T(1) / static_cast<T>(a.numel());
  return TensorT<T>::make_op({}, {acc * inv_n}, {a},
                             [inv_n](typename TensorT<T>::Node& self) {
                               auto& pa = *self.parents[0];
                               pa.ensure_grad();
                               const T g = self.grad[0] * inv_n;
                               for (std::size_t i = 0; i < pa.grad.size(); ++i)
                                 pa.grad[i] += g;
                             });
}

// ---------------------------------------------------------------------------
// Structured NCHW ops
// ---------------------------------------------------------------------------

// 3x3-style "same" convolution spec: stride 1, zero padding of kernel/2.
struct ConvSpec {
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t kernel = 3;
  std::size_t stride = 1;
  std::size_t padding = 1;

  static ConvSpec same(std::size_t in, std::size_t out, std::size_t k = 3) {
    return ConvSpec{in, out, k, 1, k / 2};
  }

  void validate() const {
    if (kernel % 2 == 0) throw TensorError("ConvSpec: kernel must be odd");
    if (stride != 1) throw TensorError("ConvSpec: stride must be 1");
    if (padding != kernel / 2) throw TensorError("ConvSpec: padding must be kernel/2");
    if (in_channels == 0 || out_channels == 0)
      throw TensorError("ConvSpec: channel counts must be positive");
  }
};

// Zero-padded same-size convolution, differentiable w.r.t. input, weight
// and bias. weight [C',C,k,k], bias [C'].
template <typename T>
TensorT<T> conv2d(const TensorT<T>& x, const ConvSpec& spec, const TensorT<T>& weight,
                  const TensorT<T>& bias) {
  spec.validate();
  if (x.ndim() != 4)
    throw TensorError("conv2d: input must be 4-D NCHW, got " + shape_str(x.shape()));
  if (x.dim(1) != spec.in_channels)
    throw TensorError("conv2d: input has " + std::to_string(x.dim(1)) +
                      " channels, spec expects " + std::to_string(spec.in_channels));
  const Shape wshape{spec.out_channels, spec.in_channels, spec.kernel, spec.kernel};
  if (weight.shape() != wshape)
    throw TensorError("conv2d: weight shape " + shape_str(weight.shape()) +
                      ", expected " + shape_str(wshape));
  if (bias.shape() != Shape{spec.out_channels})
    throw TensorError("conv2d: bias shape " + shape_str(bias.shape()) + ", expected [" +
                      std::to_string(spec.out_channels) + "]");

  const std::ptrdiff_t N = static_cast<std::ptrdiff_t>(x.dim(0));
  const std::ptrdiff_t Ci = static_cast<std::ptrdiff_t>(spec.in_channels);
  const std::ptrdiff_t Co = static_cast<std::ptrdiff_t>(spec.out_channels);
  const std::ptrdiff_t H = static_cast<std::ptrdiff_t>(x.dim(2));
  const std::ptrdiff_t W = static_cast<std::ptrdiff_t>(x.dim(3));
  const std::ptrdiff_t k = static_cast<std::ptrdiff_t>(spec.kernel);
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(spec.padding);
  const std::ptrdiff_t HW = H * W;

  std::vector<T> out(static_cast<std::size_t>(N * Co * HW));
  const T* xv = x.values().data();
  const T* wv = weight.values().data();
  const T* bv = bias.values().data();

  for (std::ptrdiff_t n = 0; n < N; ++n) {
    for (std::ptrdiff_t co = 0; co < Co; ++co) {
      T* out_plane = out.data() + (n * Co + co) * HW;
      const T b = bv[co];
      for (std::ptrdiff_t i = 0; i < HW; ++i) out_plane[i] = b;
      for (std::ptrdiff_t ci = 0; ci < Ci; ++ci) {
        const T* in_plane = xv + (n * Ci + ci) * HW;
        const T* wk = wv + ((co * Ci + ci) * k) * k;
        for (std::ptrdiff_t kh = 0; kh < k; ++kh) {
          const std::ptrdiff_t dy = kh - pad;
          const std::ptrdiff_t oh0 = dy < 0 ? -dy : 0;
          const std::ptrdiff_t oh1 = H < H - dy ? H : H - dy;
          for (std::ptrdiff_t kw = 0; kw < k; ++kw) {
            const std::ptrdiff_t dx = kw - pad;
            const std::ptrdiff_t ow0 = dx < 0 ? -dx : 0;
            const std::ptrdiff_t ow1 = W < W - dx ? W : W - dx;
            const T w = wk[kh * k + kw];
            for (std::ptrdiff_t oh = oh0; oh < oh1; ++oh) {
              const T* in_row = in_plane + (oh + dy) * W + dx;
              T* out_row = out_plane + oh * W;
              for (std::ptrdiff_t ow = ow0; ow < ow1; ++ow) out_row[ow] += w * in_row[ow];
            }
          }
        }
      }
    }
  }

  Shape out_shape{static_cast<std::size_t>(N), static_cast<std::size_t>(Co),
                  static_cast<std::size_t>(H), static_cast<std::size_t>(W)};
  auto backward = [N, Ci, Co, H, W, k, pad, HW](typename TensorT<T>::Node& self) {
    auto& px = *self.parents[0];
    auto& pw = *self.parents[1];
    auto& pb = *self.parents[2];
    px.ensure_grad();
    pw.ensure_grad();
    pb.ensure_grad();
    const T* g = self.grad.data();
    const T* xv = px.value.data();
    const T* wv = pw.value.data();

    // d_input: correlation of grad with the kernel flipped in both axes.
    for (std::ptrdiff_t n = 0; n < N; ++n) {
      for (std::ptrdiff_t ci = 0; ci < Ci; ++ci) {
        T* din_plane = px.grad.data() + (n * Ci + ci) * HW;
        for (std::ptrdiff_t co = 0; co < Co; ++co) {
          const T* g_plane = g + (n * Co + co) * HW;
          const T* wk = wv + ((co * Ci + ci) * k) * k;
          for (std::ptrdiff_t kh = 0; kh < k; ++kh) {
            const std::ptrdiff_t dy = kh - pad;
            const std::ptrdiff_t ih0 = dy > 0 ? dy : 0;
            const std::ptrdiff_t ih1 = H + dy < H ? H + dy : H;
            for (std::ptrdiff_t kw = 0; kw < k; ++kw) {
              const std::ptrdiff_t dx = kw - pad;
              const std::ptrdiff_t iw0 = dx > 0 ? dx : 0;
              const std::ptrdiff_t iw1 = W + dx < W ? W + dx : W;
              const T w = wk[kh * k + kw];
              for (std::ptrdiff_t ih = ih0; ih < ih1; ++ih) {
                const T* g_row = g_plane + (ih - dy) * W - dx;
                T* din_row = din_plane + ih * W;
                for (std::ptrdiff_t iw = iw0; iw < iw1; ++iw) din_row[iw] += w * g_row[iw];
              }
            }
          }
        }
      }
    }

    // d_weight and d_bias.
    for (std::ptrdiff_t co = 0; co < Co; ++co) {
      T bacc = 0;
      for (std::ptrdiff_t n = 0; n < N; ++n) {
        const T* g_plane = g + (n * Co + co) * HW;
        for (std::ptrdiff_t i = 0; i < HW; ++i) bacc += g_plane[i];
      }
      pb.grad[co] += bacc;
      for (std::ptrdiff_t ci = 0; ci < Ci; ++ci) {
        T* dwk = pw.grad.data() + ((co * Ci + ci) * k) * k;
        for (std::ptrdiff_t kh = 0; kh < k; ++kh) {
          const std::ptrdiff_t dy = kh - pad;
          const std::ptrdiff_t oh0 = dy < 0 ? -dy : 0;
          const std::ptrdiff_t oh1 = H < H - dy ? H : H - dy;
          for (std::ptrdiff_t kw = 0; kw < k; ++kw) {
            const std::ptrdiff_t dx = kw - pad;
            const std::ptrdiff_t ow0 = dx < 0 ? -dx : 0;
            const std::ptrdiff_t ow1 = W < W - dx ? W : W - dx;
            T acc = 0;
            for (std::ptrdiff_t n = 0; n < N; ++n) {
              const T* g_plane = g + (n * Co + co) * HW;
              const T* in_plane = xv + (n * Ci + ci) * HW;
              for (std::ptrdiff_t oh = oh0; oh < oh1; ++oh) {
                const T* g_row = g_plane + oh * W;
                const T* in_row = in_plane + (oh + dy) * W + dx;
                for (std::ptrdiff_t ow = ow0; ow < ow1; ++ow) acc += g_row[ow] * in_row[ow];
              }
            }
            dwk[kh * k + kw] += acc;
          }
        }
      }
    }
  };
  return TensorT<T>::make_op(std::move(out_shape), std::move(out), {x, weight, bias},
                             std::move(backward));
}

// 2x2 non-overlapping max pool; gradient routes to the argmax, first
// occurrence in scan order on ties.
template <typename T>
TensorT<T> maxpool2(const TensorT<T>& x) {
  if (x.ndim() != 4)
    throw TensorError("maxpool2: input must be 4-D NCHW, got " + shape_str(x.shape()));
  const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (H % 2 != 0 || W % 2 != 0)
    throw TensorError("maxpool2: spatial dims must be even, got " + shape_str(x.shape()));
  const std::size_t Ho = H / 2, Wo = W / 2;
  std::vector<T> out(N * C * Ho * Wo);
  auto argmax = std::make_shared<std::vector<std::uint32_t>>(out.size());
  const T* xv = x.values().data();
  std::size_t o = 0;
  for (std::size_t nc = 0; nc < N * C; ++nc) {
    const T* plane = xv + nc * H * W;
    for (std::size_t oh = 0; oh < Ho; ++oh) {
      for (std::size_t ow = 0; ow < Wo; ++ow, ++o) {
        const std::size_t base = (2 * oh) * W + 2 * ow;
        std::size_t best = base;
        T bv = plane[base];
        const std::size_t cand[3] = {base + 1, base + W, base + W + 1};
        for (std::size_t idx : cand) {
          if (plane[idx] > bv) {
            bv = plane[idx];
            best = idx;
          }
        }
        out[o] = bv;
        (*argmax)[o] = static_cast<std::uint32_t>(nc * H * W + best);
      }
    }
  }
  return TensorT<T>::make_op({N, C, Ho, Wo}, std::move(out), {x},
                             [argmax](typename TensorT<T>::Node& self) {
                               auto& pa = *self.parents[0];
                               pa.ensure_grad();
                               for (std::size_t i = 0; i < self.grad.size(); ++i)
                                 pa.grad[(*argmax)[i]] += self.grad[i];
                             });
}

// Non-overlapping f x f average pool.
template <typename T>
TensorT<T> avgpool(const TensorT<T>& x, std::size_t factor) {
  if (x.ndim() != 4)
    throw TensorError("avgpool: input must be 4-D NCHW, got " + shape_str(x.shape()));
  if (factor == 0) throw TensorError("avgpool: factor must be positive");
  if (factor == 1) return scale(x, T(1));
  const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (H % factor != 0 || W % factor != 0)
    throw TensorError("avgpool: dims " + shape_str(x.shape()) + " not divisible by " +
                      std::to_string(factor));
  const std::size_t Ho = H / factor, Wo = W / factor;
  const T inv = T(1) / static_cast<T>(factor * factor);
  std::vector<T> out(N * C * Ho * Wo);
  const T* xv = x.values().data();
  std::size_t o = 0;
  for (std::size_t nc = 0; nc < N * C; ++nc) {
    const T* plane = xv + nc * H * W;
    for (std::size_t oh = 0; oh < Ho; ++oh) {
      for (std::size_t ow = 0; ow < Wo; ++ow, ++o) {
        T acc = 0;
        for (std::size_t fy = 0; fy < factor; ++fy)
          for (std::size_t fx = 0; fx < factor; ++fx)
            acc += plane[(oh * factor + fy) * W + ow * factor + fx];
        out[o] = acc * inv;
      }
    }
  }
  return TensorT<T>::make_op(
      {N, C, Ho, Wo}, std::move(out), {x},
      [factor, inv, H, W, Ho, Wo](typename TensorT<T>::Node& self) {
        auto& pa = *self.parents[0];
        pa.ensure_grad();
        std::size_t o = 0;
        const std::size_t planes = self.grad.size() / (Ho * Wo);
        for (std::size_t nc = 0; nc < planes; ++nc) {
          T* gplane = pa.grad.data() + nc * H * W;
          for (std::size_t oh = 0; oh < Ho; ++oh) {
            for (std::size_t ow = 0; ow < Wo; ++ow, ++o) {
              const T g = self.grad[o] * inv;
              for (std::size_t fy = 0; fy < factor; ++fy)
                for (std::size_t fx = 0; fx < factor; ++fx)
                  gplane[(oh * factor + fy) * W + ow * factor + fx] += g;
            }
          }
        }
      });
}

// Softmax over the channel axis, independently per spatial location.
template <typename T>
TensorT<T> softmax_channel(const TensorT<T>& x) {
  if (x.ndim() != 4)
    throw TensorError("softmax_channel: input must be 4-D NCHW, got " +
                      shape_str(x.shape()));
  const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t HW = H * W;
  std::vector<T> out(x.numel());
  const T* xv = x.values().data();
  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t s = 0; s < HW; ++s) {
      const std::size_t base = n * C * HW + s;
      T m = xv[base];
      for (std::size_t c = 1; c < C; ++c) m = std::max(m, xv[base + c * HW]);
      T z = 0;
      for (std::size_t c = 0; c < C; ++c) {
        const T e = std::exp(xv[base + c * HW] - m);
        out[base + c * HW] = e;
        z += e;
      }
      const T inv = T(1) / z;
      for (std::size_t c = 0; c < C; ++c) out[base + c * HW] *= inv;
    }
  }
  return TensorT<T>::make_op(
      x.shape(), std::move(out), {x},
      [N, C, HW](typename TensorT<T>::Node& self) {
        auto& pa = *self.parents[0];
        pa.ensure_grad();
        for (std::size_t n = 0; n < N; ++n) {
          for (std::size_t s = 0; s < HW; ++s) {
            const std::size_t base = n * C * HW + s;
            T dot = 0;
            for (std::size_t c = 0; c < C; ++c)
              dot += self.grad[base + c * HW] * self.value[base + c * HW];
            for (std::size_t c = 0; c < C; ++c) {
              const T y = self.value[base + c * HW];
              pa.grad[base + c * HW] += y * (self.grad[base + c * HW] - dot);
            }
          }
        }
      });
}

// Concatenate along the channel axis.
template <typename T>
TensorT<T> concat_channels(const std::vector<TensorT<T>>& parts) {
  if (parts.empty()) throw TensorError("concat_channels: no inputs");
  const std::size_t N = parts[0].dim(0), H = parts[0].dim(2), W = parts[0].dim(3);
  std::size_t Ctot = 0;
  for (const auto& p : parts) {
    if (p.ndim() != 4 || p.dim(0) != N || p.dim(2) != H || p.dim(3) != W)
      throw TensorError("concat_channels: incompatible shape " + shape_str(p.shape()));
    Ctot += p.dim(1);
  }
  const std::size_t HW = H * W;
  std::vector<T> out(N * Ctot * HW);
  std::vector<std::size_t> channels;
  std::size_t coff = 0;
  for (const auto& p : parts) {
    const std::size_t C = p.dim(1);
    channels.push_back(C);
    const T* pv = p.values().data();
    for (std::size_t n = 0; n < N; ++n) {
      std::copy(pv + n * C * HW, pv + (n + 1) * C * HW,
                out.data() + (n * Ctot + coff) * HW);
    }
    coff += C;
  }
  return TensorT<T>::make_op(
      {N, Ctot, H, W}, std::move(out), parts,
      [N, Ctot, HW, channels](typename TensorT<T>::Node& self) {
        std::size_t coff = 0;
        for (std::size_t pi = 0; pi < self.parents.size(); ++pi) {
          auto& pp = *self.parents[pi];
          pp.ensure_grad();
          const std::size_t C = channels[pi];
          for (std::size_t n = 0; n < N; ++n) {
            const T* g = self.grad.data() + (n * Ctot + coff) * HW;
            T* pg = pp.grad.data() + n * C * HW;
            for (std::size_t i = 0; i < C * HW; ++i) pg[i] += g[i];
          }
          coff += C;
        }
      });
}

}  // namespace bifas
