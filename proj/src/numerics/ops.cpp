#include "wsgic/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>

#include "wsgic/errors.hpp"

namespace wsgic {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapC = Eigen::Map<const RowMat<T>>;
template <typename T>
using Map = Eigen::Map<RowMat<T>>;

template <typename T>
MapC<T> view(const Node<T>& n, std::size_t rows, std::size_t cols) {
  return MapC<T>(n.data.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

template <typename T>
Map<T> grad_view(Node<T>& n, std::size_t rows, std::size_t cols) {
  return Map<T>(n.grad_buffer(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

Shape with_cols(const Shape& s, std::size_t cols) {
  Shape out = s.empty() ? Shape{1} : s;
  out.back() = cols;
  return out;
}

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeMismatch(std::string(op) + ": " + shape_str(a.shape()) + " vs " +
                        shape_str(b.shape()));
  }
}

template <typename T>
int resolve_axis(const Tensor<T>&, int axis) {
  if (axis == -1) return 1;
  if (axis != 0 && axis != 1) throw ShapeMismatch("axis must be 0, 1 or -1");
  return axis;
}

// Applies f elementwise and backpropagates g'(x, y) * dy.
template <typename T, typename F, typename D>
Tensor<T> unary(const Tensor<T>& x, F f, D dfdx) {
  std::vector<T> out(x.numel());
  auto in = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(in[i]);
  return make_result<T>(x.shape(), std::move(out), {x}, [dfdx](Node<T>& self) {
    Node<T>& p = *self.parents[0];
    if (!p.requires_grad) return;
    T* g = p.grad_buffer();
    for (std::size_t i = 0; i < self.data.size(); ++i) {
      g[i] += self.grad[i] * dfdx(p.data[i], self.data[i]);
    }
  });
}

}  // namespace

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (b.rank() != 2 || a.cols() != b.shape()[0]) {
    throw ShapeMismatch("matmul: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  std::vector<T> out(m * n);
  Map<T>(out.data(), m, n).noalias() = view(*a.node(), m, k) * view(*b.node(), k, n);
  return make_result<T>(with_cols(a.shape(), n), std::move(out), {a, b},
                        [m, k, n](Node<T>& self) {
                          Node<T>& pa = *self.parents[0];
                          Node<T>& pb = *self.parents[1];
                          MapC<T> g(self.grad.data(), m, n);
                          if (pa.requires_grad) {
                            grad_view(pa, m, k).noalias() += g * view(pb, k, n).transpose();
                          }
                          if (pb.requires_grad) {
                            grad_view(pb, k, n).noalias() += view(pa, m, k).transpose() * g;
                          }
                        });
}

template <typename T>
Tensor<T> matmul_nt(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.cols() != b.cols()) {
    throw ShapeMismatch("matmul_nt: " + shape_str(a.shape()) + " x " + shape_str(b.shape()) + "^T");
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  std::vector<T> out(m * n);
  Map<T>(out.data(), m, n).noalias() = view(*a.node(), m, k) * view(*b.node(), n, k).transpose();
  return make_result<T>(Shape{m, n}, std::move(out), {a, b}, [m, k, n](Node<T>& self) {
    Node<T>& pa = *self.parents[0];
    Node<T>& pb = *self.parents[1];
    MapC<T> g(self.grad.data(), m, n);
    if (pa.requires_grad) grad_view(pa, m, k).noalias() += g * view(pb, n, k);
    if (pb.requires_grad) grad_view(pb, n, k).noalias() += g.transpose() * view(pa, m, k);
  });
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() == b.shape()) {
    std::vector<T> out(a.numel());
    auto x = a.data(), y = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + y[i];
    return make_result<T>(a.shape(), std::move(out), {a, b}, [](Node<T>& self) {
      for (auto& parent : self.parents) {
        if (!parent->requires_grad) continue;
        T* g = parent->grad_buffer();
        for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
      }
    });
  }
  if (b.numel() != a.cols()) {
    throw ShapeMismatch("add: cannot broadcast " + shape_str(b.shape()) + " onto " +
                        shape_str(a.shape()));
  }
  const std::size_t rows = a.rows(), cols = a.cols();
  std::vector<T> out(a.numel());
  auto x = a.data(), y = b.data();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = x[r * cols + c] + y[c];
  }
  return make_result<T>(a.shape(), std::move(out), {a, b}, [rows, cols](Node<T>& self) {
    Node<T>& pa = *self.parents[0];
    Node<T>& pb = *self.parents[1];
    if (pa.requires_grad) {
      T* g = pa.grad_buffer();
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    }
    if (pb.requires_grad) {
      T* g = pb.grad_buffer();
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) g[c] += self.grad[r * cols + c];
      }
    }
  });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "mul");
  std::vector<T> out(a.numel());
  auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * y[i];
  return make_result<T>(a.shape(), std::move(out), {a, b}, [](Node<T>& self) {
    Node<T>& pa = *self.parents[0];
    Node<T>& pb = *self.parents[1];
    if (pa.requires_grad) {
      T* g = pa.grad_buffer();
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * pb.data[i];
    }
    if (pb.requires_grad) {
      T* g = pb.grad_buffer();
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * pa.data[i];
    }
  });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  return unary<T>(
      a, [factor](T v) { return v * factor; }, [factor](T, T) { return factor; });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  return unary<T>(
      x, [](T v) { return v > T(0) ? v : T(0); }, [](T v, T) { return v > T(0) ? T(1) : T(0); });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  return unary<T>(
      x,
      [](T v) {
        if (v >= T(0)) return T(1) / (T(1) + std::exp(-v));
        T e = std::exp(v);
        return e / (T(1) + e);
      },
      [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Tensor<T> tanh(const Tensor<T>& x) {
  return unary<T>(
      x, [](T v) { return std::tanh(v); }, [](T, T y) { return T(1) - y * y; });
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& x, int axis) {
  axis = resolve_axis(x, axis);
  const std::size_t rows = x.rows(), cols = x.cols();
  // Iterate over "lanes": a lane is one softmax slice with a stride.
  const std::size_t lanes = axis == 1 ? rows : cols;
  const std::size_t len = axis == 1 ? cols : rows;
  const std::size_t stride = axis == 1 ? 1 : cols;
  auto lane_start = [=](std::size_t lane) { return axis == 1 ? lane * cols : lane; };

  std::vector<T> out(x.numel());
  auto in = x.data();
  for (std::size_t lane = 0; lane < lanes; ++lane) {
    const std::size_t s = lane_start(lane);
    T mx = in[s];
    for (std::size_t j = 1; j < len; ++j) mx = std::max(mx, in[s + j * stride]);
    T total = 0;
    for (std::size_t j = 0; j < len; ++j) {
      T e = std::exp(in[s + j * stride] - mx);
      out[s + j * stride] = e;
      total += e;
    }
    for (std::size_t j = 0; j < len; ++j) out[s + j * stride] /= total;
  }
  return make_result<T>(x.shape(), std::move(out), {x}, [=](Node<T>& self) {
    Node<T>& p = *self.parents[0];
    if (!p.requires_grad) return;
    T* g = p.grad_buffer();
    for (std::size_t lane = 0; lane < lanes; ++lane) {
      const std::size_t s = lane_start(lane);
      T dot = 0;
      for (std::size_t j = 0; j < len; ++j) dot += self.grad[s + j * stride] * self.data[s + j * stride];
      for (std::size_t j = 0; j < len; ++j) {
        const std::size_t i = s + j * stride;
        g[i] += self.data[i] * (self.grad[i] - dot);
      }
    }
  });
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias, T eps) {
  const std::size_t rows = x.rows(), d = x.cols();
  if (gain.numel() != d || bias.numel() != d) {
    throw ShapeMismatch("layer_norm: gain/bias must have " + std::to_string(d) + " entries");
  }
  std::vector<T> out(x.numel());
  auto xhat = std::make_shared<std::vector<T>>(x.numel());
  auto inv_std = std::make_shared<std::vector<T>>(rows);
  auto in = x.data(), gn = gain.data(), bs = bias.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = in.data() + r * d;
    T mean = 0;
    for (std::size_t c = 0; c < d; ++c) mean += row[c];
    mean /= T(d);
    T var = 0;
    for (std::size_t c = 0; c < d; ++c) var += (row[c] - mean) * (row[c] - mean);
    var /= T(d);
    const T is = T(1) / std::sqrt(var + eps);
    (*inv_std)[r] = is;
    for (std::size_t c = 0; c < d; ++c) {
      const T h = (row[c] - mean) * is;
      (*xhat)[r * d + c] = h;
      out[r * d + c] = gn[c] * h + bs[c];
    }
  }
  return make_result<T>(x.shape(), std::move(out), {x, gain, bias},
                        [rows, d, xhat, inv_std](Node<T>& self) {
                          Node<T>& px = *self.parents[0];
                          Node<T>& pg = *self.parents[1];
                          Node<T>& pb = *self.parents[2];
                          const T* dy = self.grad.data();
                          if (pg.requires_grad) {
                            T* g = pg.grad_buffer();
                            for (std::size_t i = 0; i < rows * d; ++i) g[i % d] += dy[i] * (*xhat)[i];
                          }
                          if (pb.requires_grad) {
                            T* g = pb.grad_buffer();
                            for (std::size_t i = 0; i < rows * d; ++i) g[i % d] += dy[i];
                          }
                          if (!px.requires_grad) return;
                          T* g = px.grad_buffer();
                          for (std::size_t r = 0; r < rows; ++r) {
                            T mean_dh = 0, mean_dh_h = 0;
                            for (std::size_t c = 0; c < d; ++c) {
                              const T dh = dy[r * d + c] * pg.data[c];
                              mean_dh += dh;
                              mean_dh_h += dh * (*xhat)[r * d + c];
                            }
                            mean_dh /= T(d);
                            mean_dh_h /= T(d);
                            for (std::size_t c = 0; c < d; ++c) {
                              const T dh = dy[r * d + c] * pg.data[c];
                              g[r * d + c] += (*inv_std)[r] *
                                              (dh - mean_dh - (*xhat)[r * d + c] * mean_dh_h);
                            }
                          }
                        });
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, int axis) {
  if (parts.empty()) throw ShapeMismatch("concat of nothing");
  if (axis != 0 && axis != 1) throw ShapeMismatch("concat axis must be 0 or 1");
  if (axis == 0) {
    const std::size_t cols = parts[0].cols();
    std::size_t rows = 0;
    for (const auto& p : parts) {
      if (p.cols() != cols) throw ShapeMismatch("concat rows: column counts differ");
      rows += p.rows();
    }
    std::vector<T> out;
    out.reserve(rows * cols);
    for (const auto& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
    return make_result<T>(Shape{rows, cols}, std::move(out), parts, [](Node<T>& self) {
      std::size_t offset = 0;
      for (auto& parent : self.parents) {
        const std::size_t n = parent->data.size();
        if (parent->requires_grad) {
          T* g = parent->grad_buffer();
          for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[offset + i];
        }
        offset += n;
      }
    });
  }
  const std::size_t rows = parts[0].rows();
  std::size_t cols = 0;
  std::vector<std::size_t> widths;
  for (const auto& p : parts) {
    if (p.rows() != rows) throw ShapeMismatch("concat cols: row counts differ");
    widths.push_back(p.cols());
    cols += p.cols();
  }
  std::vector<T> out(rows * cols);
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t w = p.cols();
    auto src = p.data();
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy_n(src.begin() + r * w, w, out.begin() + r * cols + offset);
    }
    offset += w;
  }
  return make_result<T>(Shape{rows, cols}, std::move(out), parts,
                        [rows, cols, widths](Node<T>& self) {
                          std::size_t offset = 0;
                          for (std::size_t k = 0; k < self.parents.size(); ++k) {
                            Node<T>& parent = *self.parents[k];
                            const std::size_t w = widths[k];
                            if (parent.requires_grad) {
                              T* g = parent.grad_buffer();
                              for (std::size_t r = 0; r < rows; ++r) {
                                for (std::size_t c = 0; c < w; ++c) {
                                  g[r * w + c] += self.grad[r * cols + offset + c];
                                }
                              }
                            }
                            offset += w;
                          }
                        });
}

template <typename T>
Tensor<T> slice_rows(const Tensor<T>& x, std::size_t begin, std::size_t end) {
  if (begin >= end || end > x.rows()) throw ShapeMismatch("slice_rows out of range");
  const std::size_t cols = x.cols();
  auto src = x.data();
  std::vector<T> out(src.begin() + begin * cols, src.begin() + end * cols);
  return make_result<T>(Shape{end - begin, cols}, std::move(out), {x},
                        [begin, cols](Node<T>& self) {
                          Node<T>& p = *self.parents[0];
                          if (!p.requires_grad) return;
                          T* g = p.grad_buffer() + begin * cols;
                          for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
                        });
}

template <typename T>
Tensor<T> slice_cols(const Tensor<T>& x, std::size_t begin, std::size_t end) {
  if (begin >= end || end > x.cols()) throw ShapeMismatch("slice_cols out of range");
  const std::size_t rows = x.rows(), cols = x.cols(), w = end - begin;
  auto src = x.data();
  std::vector<T> out(rows * w);
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(src.begin() + r * cols + begin, w, out.begin() + r * w);
  }
  return make_result<T>(Shape{rows, w}, std::move(out), {x},
                        [rows, cols, w, begin](Node<T>& self) {
                          Node<T>& p = *self.parents[0];
                          if (!p.requires_grad) return;
                          T* g = p.grad_buffer();
                          for (std::size_t r = 0; r < rows; ++r) {
                            for (std::size_t c = 0; c < w; ++c) {
                              g[r * cols + begin + c] += self.grad[r * w + c];
                            }
                          }
                        });
}

template <typename T>
Tensor<T> mean_pool(const Tensor<T>& x) {
  const std::size_t rows = x.rows(), cols = x.cols();
  std::vector<T> out(cols, T(0));
  auto src = x.data();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) out[c] += src[r * cols + c];
  }
  for (auto& v : out) v /= T(rows);
  return make_result<T>(Shape{1, cols}, std::move(out), {x}, [rows, cols](Node<T>& self) {
    Node<T>& p = *self.parents[0];
    if (!p.requires_grad) return;
    T* g = p.grad_buffer();
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) g[r * cols + c] += self.grad[c] / T(rows);
    }
  });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  T total = 0;
  for (T v : x.data()) total += v;
  return make_result<T>(Shape{}, {total}, {x}, [](Node<T>& self) {
    Node<T>& p = *self.parents[0];
    if (!p.requires_grad) return;
    T* g = p.grad_buffer();
    for (std::size_t i = 0; i < p.data.size(); ++i) g[i] += self.grad[0];
  });
}

template <typename T>
Tensor<T> embedding_lookup(const Tensor<T>& table, std::span<const int> ids) {
  const std::size_t vocab = table.rows(), dim = table.cols();
  if (ids.empty()) throw ShapeMismatch("embedding_lookup with no ids");
  std::vector<int> idx(ids.begin(), ids.end());
  std::vector<T> out(idx.size() * dim);
  auto src = table.data();
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || static_cast<std::size_t>(idx[i]) >= vocab) {
      throw ShapeMismatch("embedding id " + std::to_string(idx[i]) + " outside table of " +
                          std::to_string(vocab));
    }
    std::copy_n(src.begin() + idx[i] * dim, dim, out.begin() + i * dim);
  }
  return make_result<T>(Shape{idx.size(), dim}, std::move(out), {table},
                        [idx, dim](Node<T>& self) {
                          Node<T>& p = *self.parents[0];
                          if (!p.requires_grad) return;
                          T* g = p.grad_buffer();
                          for (std::size_t i = 0; i < idx.size(); ++i) {
                            for (std::size_t c = 0; c < dim; ++c) {
                              g[idx[i] * dim + c] += self.grad[i * dim + c];
                            }
                          }
                        });
}

template <typename T>
Tensor<T> cross_entropy_from_logits(const Tensor<T>& logits, std::span<const int> targets,
                                    int ignore_index) {
  const std::size_t rows = logits.rows(), cols = logits.cols();
  if (targets.size() != rows) {
    throw LengthMismatch("cross_entropy: " + std::to_string(rows) + " logit rows vs " +
                         std::to_string(targets.size()) + " targets");
  }
  std::vector<int> tgt(targets.begin(), targets.end());
  auto probs = std::make_shared<std::vector<T>>(rows * cols);
  auto src = logits.data();
  T total = 0;
  std::size_t counted = 0;
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = src.data() + r * cols;
    T mx = row[0];
    for (std::size_t c = 1; c < cols; ++c) mx = std::max(mx, row[c]);
    T z = 0;
    for (std::size_t c = 0; c < cols; ++c) z += std::exp(row[c] - mx);
    const T log_z = mx + std::log(z);
    for (std::size_t c = 0; c < cols; ++c) (*probs)[r * cols + c] = std::exp(row[c] - log_z);
    if (tgt[r] == ignore_index) continue;
    if (tgt[r] < 0 || static_cast<std::size_t>(tgt[r]) >= cols) {
      throw ShapeMismatch("cross_entropy target " + std::to_string(tgt[r]) + " out of range");
    }
    total += log_z - row[tgt[r]];
    ++counted;
  }
  const T denom = counted == 0 ? T(1) : T(counted);
  return make_result<T>(Shape{}, {total / denom}, {logits},
                        [rows, cols, tgt, probs, denom, ignore_index](Node<T>& self) {
                          Node<T>& p = *self.parents[0];
                          if (!p.requires_grad) return;
                          T* g = p.grad_buffer();
                          const T dy = self.grad[0] / denom;
                          for (std::size_t r = 0; r < rows; ++r) {
                            if (tgt[r] == ignore_index) continue;
                            for (std::size_t c = 0; c < cols; ++c) {
                              const T onehot = static_cast<int>(c) == tgt[r] ? T(1) : T(0);
                              g[r * cols + c] += dy * ((*probs)[r * cols + c] - onehot);
                            }
                          }
                        });
}

template <typename T>
Tensor<T> sigmoid_bce(const Tensor<T>& logits, std::span<const T> targets) {
  if (targets.size() != logits.numel()) {
    throw ShapeMismatch("sigmoid_bce: " + std::to_string(logits.numel()) + " logits vs " +
                        std::to_string(targets.size()) + " targets");
  }
  std::vector<T> z(targets.begin(), targets.end());
  T total = 0;
  auto x = logits.data();
  for (std::size_t i = 0; i < z.size(); ++i) {
    total += std::max(x[i], T(0)) - x[i] * z[i] + std::log1p(std::exp(-std::abs(x[i])));
  }
  return make_result<T>(Shape{}, {total}, {logits}, [z](Node<T>& self) {
    Node<T>& p = *self.parents[0];
    if (!p.requires_grad) return;
    T* g = p.grad_buffer();
    for (std::size_t i = 0; i < z.size(); ++i) {
      const T v = p.data[i];
      const T s = v >= T(0) ? T(1) / (T(1) + std::exp(-v)) : std::exp(v) / (T(1) + std::exp(v));
      g[i] += self.grad[0] * (s - z[i]);
    }
  });
}

template <typename T>
Tensor<T> detach(const Tensor<T>& x) {
  return Tensor<T>::from(x.shape(), std::vector<T>(x.data().begin(), x.data().end()), false);
}

#define WSGIC_INSTANTIATE(T)                                                                  \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                              \
  template Tensor<T> matmul_nt(const Tensor<T>&, const Tensor<T>&);                           \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                 \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                 \
  template Tensor<T> scale(const Tensor<T>&, T);                                              \
  template Tensor<T> relu(const Tensor<T>&);                                                  \
  template Tensor<T> sigmoid(const Tensor<T>&);                                               \
  template Tensor<T> tanh(const Tensor<T>&);                                                  \
  template Tensor<T> softmax(const Tensor<T>&, int);                                          \
  template Tensor<T> layer_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, T);     \
  template Tensor<T> concat(const std::vector<Tensor<T>>&, int);                              \
  template Tensor<T> slice_rows(const Tensor<T>&, std::size_t, std::size_t);                  \
  template Tensor<T> slice_cols(const Tensor<T>&, std::size_t, std::size_t);                  \
  template Tensor<T> mean_pool(const Tensor<T>&);                                             \
  template Tensor<T> sum(const Tensor<T>&);                                                   \
  template Tensor<T> embedding_lookup(const Tensor<T>&, std::span<const int>);                \
  template Tensor<T> cross_entropy_from_logits(const Tensor<T>&, std::span<const int>, int);  \
  template Tensor<T> sigmoid_bce(const Tensor<T>&, std::span<const T>);                       \
  template Tensor<T> detach(const Tensor<T>&);

WSGIC_INSTANTIATE(float)
WSGIC_INSTANTIATE(double)

#undef WSGIC_INSTANTIATE

}  // namespace wsgic
