#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <utility>
#include <vector>

#include "rfl/tensor.hpp"

namespace rfl {

// Reverse-mode tape over small dense tensors. Ops evaluate eagerly and push
// a backward closure; backward() runs the closures in reverse creation order.
template <typename T>
class Tape {
 public:
  using Id = int;

  Id leaf(Tensor<T> v, bool needs_grad = false) {
    return push(std::move(v), needs_grad, nullptr);
  }

  Id constant(Tensor<T> v) { return leaf(std::move(v), false); }

  const Tensor<T>& val(Id id) const { return nodes_[id].value; }
  Tensor<T>& grad(Id id) { return nodes_[id].grad; }
  bool needs_grad(Id id) const { return nodes_[id].needs_grad; }

  // ---- ops ------------------------------------------------------------

  // x[L,n] * w[n,m] + b[m]
  Id linear(Id x, Id w, Id b) {
    const auto& xv = val(x);
    const auto& wv = val(w);
    const auto& bv = val(b);
    check(xv.shape.size() == 2 && wv.shape.size() == 2 && bv.shape.size() == 1,
          "linear expects [L,n], [n,m], [m]");
    const int L = xv.dim(0), n = xv.dim(1), m = wv.dim(1);
    check(wv.dim(0) == n && bv.dim(0) == m, "linear shape mismatch");
    Tensor<T> y({L, m});
    for (int i = 0; i < L; ++i) {
      for (int j = 0; j < m; ++j) y.data[i * m + j] = bv.data[j];
    }
    matmul_acc(xv.ptr(), wv.ptr(), y.ptr(), L, n, m);
    const bool ng = needs_grad(x) || needs_grad(w) || needs_grad(b);
    return push(std::move(y), ng, [=](Tape& t, Id out) {
      const auto& gy = t.grad(out);
      if (t.needs_grad(x)) {
        matmul_bt_acc(gy.ptr(), t.val(w).ptr(), t.grad(x).ptr(), L, m, n);
      }
      if (t.needs_grad(w)) {
        matmul_at_acc(t.val(x).ptr(), gy.ptr(), t.grad(w).ptr(), L, n, m);
      }
      if (t.needs_grad(b)) {
        auto& gb = t.grad(b);
        for (int i = 0; i < L; ++i) {
          for (int j = 0; j < m; ++j) gb.data[j] += gy.data[i * m + j];
        }
      }
    });
  }

  Id add(Id a, Id b) {
    const auto& av = val(a);
    const auto& bv = val(b);
    check(av.shape == bv.shape, "add shape mismatch");
    Tensor<T> y = av;
    for (std::size_t i = 0; i < y.size(); ++i) y.data[i] += bv.data[i];
    const bool ng = needs_grad(a) || needs_grad(b);
    return push(std::move(y), ng, [=](Tape& t, Id out) {
      const auto& gy = t.grad(out);
      if (t.needs_grad(a)) {
        auto& ga = t.grad(a);
        for (std::size_t i = 0; i < gy.size(); ++i) ga.data[i] += gy.data[i];
      }
      if (t.needs_grad(b)) {
        auto& gb = t.grad(b);
        for (std::size_t i = 0; i < gy.size(); ++i) gb.data[i] += gy.data[i];
      }
    });
  }

  Id scale(Id x, T c) {
    Tensor<T> y = val(x);
    for (auto& v : y.data) v *= c;
    return push(std::move(y), needs_grad(x), [=](Tape& t, Id out) {
      if (!t.needs_grad(x)) return;
      const auto& gy = t.grad(out);
      auto& gx = t.grad(x);
      for (std::size_t i = 0; i < gy.size(); ++i) gx.data[i] += c * gy.data[i];
    });
  }

  // Per-row layer normalization with learned gain/bias.
  Id layer_norm(Id x, Id gain, Id bias, T eps = T(1e-5)) {
    const auto& xv = val(x);
    check(xv.shape.size() == 2, "layer_norm expects [L,d]");
    const int L = xv.dim(0), d = xv.dim(1);
    check(val(gain).shape == std::vector<int>{d} &&
              val(bias).shape == std::vector<int>{d},
          "layer_norm gain/bias must be [d]");
    auto xhat = std::make_shared<std::vector<T>>(xv.size());
    auto inv_std = std::make_shared<std::vector<T>>(L);
    Tensor<T> y({L, d});
    const auto& gv = val(gain);
    const auto& bv = val(bias);
    for (int i = 0; i < L; ++i) {
      const T* row = xv.ptr() + static_cast<std::size_t>(i) * d;
      T mu = T(0);
      for (int j = 0; j < d; ++j) mu += row[j];
      mu /= T(d);
      T var = T(0);
      for (int j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
      var /= T(d);
      const T is = T(1) / std::sqrt(var + eps);
      (*inv_std)[i] = is;
      for (int j = 0; j < d; ++j) {
        const T xh = (row[j] - mu) * is;
        (*xhat)[static_cast<std::size_t>(i) * d + j] = xh;
        y.data[static_cast<std::size_t>(i) * d + j] = gv.data[j] * xh + bv.data[j];
      }
    }
    const bool ng = needs_grad(x) || needs_grad(gain) || needs_grad(bias);
    return push(std::move(y), ng, [=](Tape& t, Id out) {
      const auto& gy = t.grad(out);
      const auto& gv2 = t.val(gain);
      if (t.needs_grad(gain) || t.needs_grad(bias)) {
        for (int i = 0; i < L; ++i) {
          for (int j = 0; j < d; ++j) {
            const std::size_t idx = static_cast<std::size_t>(i) * d + j;
            if (t.needs_grad(gain)) t.grad(gain).data[j] += gy.data[idx] * (*xhat)[idx];
            if (t.needs_grad(bias)) t.grad(bias).data[j] += gy.data[idx];
          }
        }
      }
      if (t.needs_grad(x)) {
        auto& gx = t.grad(x);
        for (int i = 0; i < L; ++i) {
          const std::size_t base = static_cast<std::size_t>(i) * d;
          T sum_dxh = T(0), sum_dxh_xh = T(0);
          for (int j = 0; j < d; ++j) {
            const T dxh = gy.data[base + j] * gv2.data[j];
            sum_dxh += dxh;
            sum_dxh_xh += dxh * (*xhat)[base + j];
          }
          const T m1 = sum_dxh / T(d);
          const T m2 = sum_dxh_xh / T(d);
          for (int j = 0; j < d; ++j) {
            const T dxh = gy.data[base + j] * gv2.data[j];
            gx.data[base + j] +=
                (*inv_std)[i] * (dxh - m1 - (*xhat)[base + j] * m2);
          }
        }
      }
    });
  }

  Id gelu(Id x) {
    const auto& xv = val(x);
    Tensor<T> y = xv;
    for (auto& v : y.data) {
      v = T(0.5) * v * (T(1) + std::erf(v / std::sqrt(T(2))));
    }
    return push(std::move(y), needs_grad(x), [=](Tape& t, Id out) {
      if (!t.needs_grad(x)) return;
      const auto& gy = t.grad(out);
      const auto& xv2 = t.val(x);
      auto& gx = t.grad(x);
      const T inv_sqrt2pi = T(1) / std::sqrt(T(2) * T(M_PI));
      for (std::size_t i = 0; i < gy.size(); ++i) {
        const T v = xv2.data[i];
        const T cdf = T(0.5) * (T(1) + std::erf(v / std::sqrt(T(2))));
        const T pdf = inv_sqrt2pi * std::exp(T(-0.5) * v * v);
        gx.data[i] += gy.data[i] * (cdf + v * pdf);
      }
    });
  }

  Id sigmoid(Id x) {
    Tensor<T> y = val(x);
    for (auto& v : y.data) v = T(1) / (T(1) + std::exp(-v));
    auto cached = std::make_shared<std::vector<T>>(y.data);
    return push(std::move(y), needs_grad(x), [=](Tape& t, Id out) {
      if (!t.needs_grad(x)) return;
      const auto& gy = t.grad(out);
      auto& gx = t.grad(x);
      for (std::size_t i = 0; i < gy.size(); ++i) {
        const T s = (*cached)[i];
        gx.data[i] += gy.data[i] * s * (T(1) - s);
      }
    });
  }

  // Multi-head scaled dot-product attention over contiguous head column
  // blocks. q is [Lq,d], k and v are [Lk,d], d divisible by n_heads.
  // weights_out, when given, receives a copy of the softmax rows laid out as
  // [head][query][key].
  Id attention(Id q, Id k, Id v, int n_heads,
               std::vector<double>* weights_out = nullptr) {
    const auto& qv = val(q);
    const auto& kv = val(k);
    const auto& vv = val(v);
    check(qv.shape.size() == 2 && kv.shape.size() == 2 && vv.shape.size() == 2,
          "attention expects 2-d inputs");
    const int lq = qv.dim(0), d = qv.dim(1), lk = kv.dim(0);
    check(kv.dim(1) == d && vv.dim(0) == lk && vv.dim(1) == d,
          "attention shape mismatch");
    check(d % n_heads == 0, "embed dim not divisible by head count");
    const int dh = d / n_heads;
    const T sc = T(1) / std::sqrt(static_cast<T>(dh));

    auto attn = std::make_shared<std::vector<T>>(
        static_cast<std::size_t>(n_heads) * lq * lk);
    Tensor<T> y({lq, d});
    for (int h = 0; h < n_heads; ++h) {
      const int off = h * dh;
      for (int i = 0; i < lq; ++i) {
        T* arow = attn->data() + (static_cast<std::size_t>(h) * lq + i) * lk;
        const T* qrow = qv.ptr() + static_cast<std::size_t>(i) * d + off;
        T mx = -std::numeric_limits<T>::infinity();
        for (int j = 0; j < lk; ++j) {
          const T* krow = kv.ptr() + static_cast<std::size_t>(j) * d + off;
          T s = T(0);
          for (int p = 0; p < dh; ++p) s += qrow[p] * krow[p];
          s *= sc;
          arow[j] = s;
          if (s > mx) mx = s;
        }
        T z = T(0);
        for (int j = 0; j < lk; ++j) {
          arow[j] = std::exp(arow[j] - mx);
          z += arow[j];
        }
        T* yrow = y.ptr() + static_cast<std::size_t>(i) * d + off;
        for (int j = 0; j < lk; ++j) {
          arow[j] /= z;
          const T* vrow = vv.ptr() + static_cast<std::size_t>(j) * d + off;
          for (int p = 0; p < dh; ++p) yrow[p] += arow[j] * vrow[p];
        }
      }
    }
    if (weights_out) {
      weights_out->assign(attn->begin(), attn->end());
    }
    const bool ng = needs_grad(q) || needs_grad(k) || needs_grad(v);
    return push(std::move(y), ng, [=](Tape& t, Id out) {
      const auto& gy = t.grad(out);
      const auto& qv2 = t.val(q);
      const auto& kv2 = t.val(k);
      const auto& vv2 = t.val(v);
      std::vector<T> ds(static_cast<std::size_t>(lk));
      for (int h = 0; h < n_heads; ++h) {
        const int off = h * dh;
        for (int i = 0; i < lq; ++i) {
          const T* arow = attn->data() + (static_cast<std::size_t>(h) * lq + i) * lk;
          const T* gyrow = gy.ptr() + static_cast<std::size_t>(i) * d + off;
          // dA_ij = gy_i . v_j ; softmax backward then chain into q, k, v.
          T dot_acc = T(0);
          for (int j = 0; j < lk; ++j) {
            const T* vrow = vv2.ptr() + static_cast<std::size_t>(j) * d + off;
            T da = T(0);
            for (int p = 0; p < dh; ++p) da += gyrow[p] * vrow[p];
            ds[j] = da;
            dot_acc += arow[j] * da;
          }
          for (int j = 0; j < lk; ++j) {
            const T dsij = arow[j] * (ds[j] - dot_acc) * sc;
            if (t.needs_grad(v)) {
              T* gvrow = t.grad(v).ptr() + static_cast<std::size_t>(j) * d + off;
              for (int p = 0; p < dh; ++p) gvrow[p] += arow[j] * gyrow[p];
            }
            if (t.needs_grad(q)) {
              const T* krow = kv2.ptr() + static_cast<std::size_t>(j) * d + off;
              T* gqrow = t.grad(q).ptr() + static_cast<std::size_t>(i) * d + off;
              for (int p = 0; p < dh; ++p) gqrow[p] += dsij * krow[p];
            }
            if (t.needs_grad(k)) {
              const T* qrow = qv2.ptr() + static_cast<std::size_t>(i) * d + off;
              T* gkrow = t.grad(k).ptr() + static_cast<std::size_t>(j) * d + off;
              for (int p = 0; p < dh; ++p) gkrow[p] += dsij * qrow[p];
            }
          }
        }
      }
    });
  }

  Id concat_cols(Id a, Id b) {
    const auto& av = val(a);
    const auto& bv = val(b);
    check(av.shape.size() == 2 && bv.shape.size() == 2 && av.dim(0) == bv.dim(0),
          "concat_cols expects matching row counts");
    const int L = av.dim(0), da = av.dim(1), db = bv.dim(1);
    Tensor<T> y({L, da + db});
    for (int i = 0; i < L; ++i) {
      for (int j = 0; j < da; ++j) y.data[i * (da + db) + j] = av.data[i * da + j];
      for (int j = 0; j < db; ++j) {
        y.data[i * (da + db) + da + j] = bv.data[i * db + j];
      }
    }
    const bool ng = needs_grad(a) || needs_grad(b);
    return push(std::move(y), ng, [=](Tape& t, Id out) {
      const auto& gy = t.grad(out);
      for (int i = 0; i < L; ++i) {
        if (t.needs_grad(a)) {
          for (int j = 0; j < da; ++j) {
            t.grad(a).data[i * da + j] += gy.data[i * (da + db) + j];
          }
        }
        if (t.needs_grad(b)) {
          for (int j = 0; j < db; ++j) {
            t.grad(b).data[i * db + j] += gy.data[i * (da + db) + da + j];
          }
        }
      }
    });
  }

  Id concat_rows(Id a, Id b) {
    const auto& av = val(a);
    const auto& bv = val(b);
    check(av.shape.size() == 2 && bv.shape.size() == 2 && av.dim(1) == bv.dim(1),
          "concat_rows expects matching column counts");
    const int la = av.dim(0), lb = bv.dim(0), d = av.dim(1);
    Tensor<T> y({la + lb, d});
    std::copy(av.data.begin(), av.data.end(), y.data.begin());
    std::copy(bv.data.begin(), bv.data.end(),
              y.data.begin() + static_cast<std::size_t>(la) * d);
    const bool ng = needs_grad(a) || needs_grad(b);
    return push(std::move(y), ng, [=](Tape& t, Id out) {
      const auto& gy = t.grad(out);
      if (t.needs_grad(a)) {
        auto& ga = t.grad(a);
        for (std::size_t i = 0; i < ga.size(); ++i) ga.data[i] += gy.data[i];
      }
      if (t.needs_grad(b)) {
        auto& gb = t.grad(b);
        const std::size_t off = static_cast<std::size_t>(la) * d;
        for (std::size_t i = 0; i < gb.size(); ++i) gb.data[i] += gy.data[off + i];
      }
    });
  }

  Id slice_rows(Id x, int r0, int r1) {
    const auto& xv = val(x);
    check(xv.shape.size() == 2 && 0 <= r0 && r0 < r1 && r1 <= xv.dim(0),
          "slice_rows bounds");
    const int d = xv.dim(1);
    Tensor<T> y({r1 - r0, d});
    std::copy(xv.data.begin() + static_cast<std::size_t>(r0) * d,
              xv.data.begin() + static_cast<std::size_t>(r1) * d,
              y.data.begin());
    return push(std::move(y), needs_grad(x), [=](Tape& t, Id out) {
      if (!t.needs_grad(x)) return;
      const auto& gy = t.grad(out);
      auto& gx = t.grad(x);
      const std::size_t off = static_cast<std::size_t>(r0) * d;
      for (std::size_t i = 0; i < gy.size(); ++i) gx.data[off + i] += gy.data[i];
    });
  }

  Id mean_rows(Id x) {
    const auto& xv = val(x);
    check(xv.shape.size() == 2, "mean_rows expects [L,d]");
    const int L = xv.dim(0), d = xv.dim(1);
    Tensor<T> y({1, d});
    for (int i = 0; i < L; ++i) {
      for (int j = 0; j < d; ++j) y.data[j] += xv.data[i * d + j];
    }
    for (auto& v : y.data) v /= T(L);
    return push(std::move(y), needs_grad(x), [=](Tape& t, Id out) {
      if (!t.needs_grad(x)) return;
      const auto& gy = t.grad(out);
      auto& gx = t.grad(x);
      for (int i = 0; i < L; ++i) {
        for (int j = 0; j < d; ++j) gx.data[i * d + j] += gy.data[j] / T(L);
      }
    });
  }

  Id tile_rows(Id x, int copies) {
    const auto& xv = val(x);
    check(xv.shape.size() == 2 && xv.dim(0) == 1, "tile_rows expects [1,d]");
    const int d = xv.dim(1);
    Tensor<T> y({copies, d});
    for (int i = 0; i < copies; ++i) {
      std::copy(xv.data.begin(), xv.data.end(),
                y.data.begin() + static_cast<std::size_t>(i) * d);
    }
    return push(std::move(y), needs_grad(x), [=](Tape& t, Id out) {
      if (!t.needs_grad(x)) return;
      const auto& gy = t.grad(out);
      auto& gx = t.grad(x);
      for (int i = 0; i < copies; ++i) {
        for (int j = 0; j < d; ++j) gx.data[j] += gy.data[i * d + j];
      }
    });
  }

  // [gh*gw, d] token sequence -> [d, gh, gw] channel-major grid.
  Id tokens_to_grid(Id x, int gh, int gw) {
    const auto& xv = val(x);
    check(xv.shape.size() == 2 && xv.dim(0) == gh * gw, "tokens_to_grid shape");
    const int d = xv.dim(1);
    Tensor<T> y({d, gh, gw});
    for (int l = 0; l < gh * gw; ++l) {
      for (int c = 0; c < d; ++c) {
        y.data[static_cast<std::size_t>(c) * gh * gw + l] = xv.data[l * d + c];
      }
    }
    return push(std::move(y), needs_grad(x), [=](Tape& t, Id out) {
      if (!t.needs_grad(x)) return;
      const auto& gy = t.grad(out);
      auto& gx = t.grad(x);
      for (int l = 0; l < gh * gw; ++l) {
        for (int c = 0; c < d; ++c) {
          gx.data[l * d + c] += gy.data[static_cast<std::size_t>(c) * gh * gw + l];
        }
      }
    });
  }

  Id upsample2(Id x) {
    const auto& xv = val(x);
    check(xv.shape.size() == 3, "upsample2 expects [C,H,W]");
    const int c = xv.dim(0), h = xv.dim(1), w = xv.dim(2);
    Tensor<T> y({c, 2 * h, 2 * w});
    for (int ch = 0; ch < c; ++ch) {
      for (int i = 0; i < h; ++i) {
        for (int j = 0; j < w; ++j) {
          const T v = xv.data[(static_cast<std::size_t>(ch) * h + i) * w + j];
          const std::size_t base =
              (static_cast<std::size_t>(ch) * 2 * h + 2 * i) * 2 * w + 2 * j;
          y.data[base] = v;
          y.data[base + 1] = v;
          y.data[base + 2 * w] = v;
          y.data[base + 2 * w + 1] = v;
        }
      }
    }
    return push(std::move(y), needs_grad(x), [=](Tape& t, Id out) {
      if (!t.needs_grad(x)) return;
      const auto& gy = t.grad(out);
      auto& gx = t.grad(x);
      for (int ch = 0; ch < c; ++ch) {
        for (int i = 0; i < h; ++i) {
          for (int j = 0; j < w; ++j) {
            const std::size_t base =
                (static_cast<std::size_t>(ch) * 2 * h + 2 * i) * 2 * w + 2 * j;
            gx.data[(static_cast<std::size_t>(ch) * h + i) * w + j] +=
                gy.data[base] + gy.data[base + 1] + gy.data[base + 2 * w] +
                gy.data[base + 2 * w + 1];
          }
        }
      }
    });
  }

  // 3x3 convolution, stride 1, zero padding 1.
  Id conv3x3(Id x, Id w, Id b) {
    const auto& xv = val(x);
    const auto& wv = val(w);
    const auto& bv = val(b);
    check(xv.shape.size() == 3 && wv.shape.size() == 4 && bv.shape.size() == 1,
          "conv3x3 expects [C,H,W], [Co,C,3,3], [Co]");
    const int ci = xv.dim(0), h = xv.dim(1), ww = xv.dim(2);
    const int co = wv.dim(0);
    check(wv.dim(1) == ci && wv.dim(2) == 3 && wv.dim(3) == 3 && bv.dim(0) == co,
          "conv3x3 shape mismatch");
    Tensor<T> y({co, h, ww});
    for (int o = 0; o < co; ++o) {
      for (std::size_t i = 0; i < static_cast<std::size_t>(h) * ww; ++i) {
        y.data[static_cast<std::size_t>(o) * h * ww + i] = bv.data[o];
      }
      for (int c = 0; c < ci; ++c) {
        const T* kern = wv.ptr() + (static_cast<std::size_t>(o) * ci + c) * 9;
        const T* xin = xv.ptr() + static_cast<std::size_t>(c) * h * ww;
        T* yout = y.ptr() + static_cast<std::size_t>(o) * h * ww;
        for (int i = 0; i < h; ++i) {
          for (int u = -1; u <= 1; ++u) {
            const int si = i + u;
            if (si < 0 || si >= h) continue;
            const T* xrow = xin + static_cast<std::size_t>(si) * ww;
            T* yrow = yout + static_cast<std::size_t>(i) * ww;
            for (int v = -1; v <= 1; ++v) {
              const T kv = kern[(u + 1) * 3 + (v + 1)];
              if (kv == T(0)) continue;
              const int j0 = std::max(0, -v);
              const int j1 = std::min(ww, ww - v);
              for (int j = j0; j < j1; ++j) yrow[j] += kv * xrow[j + v];
            }
          }
        }
      }
    }
    const bool ng = needs_grad(x) || needs_grad(w) || needs_grad(b);
    return push(std::move(y), ng, [=](Tape& t, Id out) {
      const auto& gy = t.grad(out);
      const auto& xv2 = t.val(x);
      const auto& wv2 = t.val(w);
      for (int o = 0; o < co; ++o) {
        const T* gyp = gy.ptr() + static_cast<std::size_t>(o) * h * ww;
        if (t.needs_grad(b)) {
          T acc = T(0);
          for (std::size_t i = 0; i < static_cast<std::size_t>(h) * ww; ++i) {
            acc += gyp[i];
          }
          t.grad(b).data[o] += acc;
        }
        for (int c = 0; c < ci; ++c) {
          const T* kern = wv2.ptr() + (static_cast<std::size_t>(o) * ci + c) * 9;
          const T* xin = xv2.ptr() + static_cast<std::size_t>(c) * h * ww;
          T* gw = t.needs_grad(w)
                      ? t.grad(w).ptr() + (static_cast<std::size_t>(o) * ci + c) * 9
                      : nullptr;
          T* gx = t.needs_grad(x)
                      ? t.grad(x).ptr() + static_cast<std::size_t>(c) * h * ww
                      : nullptr;
          for (int i = 0; i < h; ++i) {
            const T* gyrow = gyp + static_cast<std::size_t>(i) * ww;
            for (int u = -1; u <= 1; ++u) {
              const int si = i + u;
              if (si < 0 || si >= h) continue;
              for (int v = -1; v <= 1; ++v) {
                const int j0 = std::max(0, -v);
                const int j1 = std::min(ww, ww - v);
                const int ki = (u + 1) * 3 + (v + 1);
                if (gw) {
                  T acc = T(0);
                  const T* xrow = xin + static_cast<std::size_t>(si) * ww;
                  for (int j = j0; j < j1; ++j) acc += gyrow[j] * xrow[j + v];
                  gw[ki] += acc;
                }
                if (gx) {
                  const T kv = kern[ki];
                  T* gxrow = gx + static_cast<std::size_t>(si) * ww;
                  for (int j = j0; j < j1; ++j) gxrow[j + v] += kv * gyrow[j];
                }
              }
            }
          }
        }
      }
    });
  }

  // Mean squared error against a constant target, optionally restricted by a
  // 0/1 mask (mean over the masked count).
  Id mse_to(Id x, std::shared_ptr<const std::vector<T>> target,
            std::shared_ptr<const std::vector<T>> mask = nullptr) {
    const auto& xv = val(x);
    check(xv.size() == target->size(), "mse target size mismatch");
    T denom;
    if (mask) {
      check(mask->size() == xv.size(), "mse mask size mismatch");
      T cnt = T(0);
      for (auto m : *mask) cnt += m;
      denom = cnt > T(0) ? cnt : T(1);
    } else {
      denom = static_cast<T>(xv.size());
    }
    T acc = T(0);
    for (std::size_t i = 0; i < xv.size(); ++i) {
      const T d = xv.data[i] - (*target)[i];
      acc += (mask ? (*mask)[i] : T(1)) * d * d;
    }
    Tensor<T> y({1});
    y.data[0] = acc / denom;
    return push(std::move(y), needs_grad(x), [=](Tape& t, Id out) {
      if (!t.needs_grad(x)) return;
      const T g = t.grad(out).data[0];
      const auto& xv2 = t.val(x);
      auto& gx = t.grad(x);
      for (std::size_t i = 0; i < xv2.size(); ++i) {
        const T m = mask ? (*mask)[i] : T(1);
        gx.data[i] += g * T(2) * m * (xv2.data[i] - (*target)[i]) / denom;
      }
    });
  }

  // ---- backward --------------------------------------------------------

  void backward(Id loss) {
    check(val(loss).size() == 1, "backward expects a scalar loss");
    for (Id i = 0; i <= loss; ++i) {
      auto& n = nodes_[i];
      if (n.needs_grad) {
        n.grad = Tensor<T>(n.value.shape);
      }
    }
    nodes_[loss].grad.data[0] = T(1);
    for (Id i = loss; i >= 0; --i) {
      auto& n = nodes_[i];
      if (n.needs_grad && n.back) n.back(*this, i);
    }
  }

  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    bool needs_grad = false;
    std::function<void(Tape&, Id)> back;
  };

  static void check(bool ok, const char* msg) {
    if (!ok) throw ShapeError(msg);
  }

  Id push(Tensor<T> v, bool needs_grad, std::function<void(Tape&, Id)> back) {
    Node n;
    n.value = std::move(v);
    n.needs_grad = needs_grad;
    n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return static_cast<Id>(nodes_.size() - 1);
  }

  std::vector<Node> nodes_;
};

}  // namespace rfl
