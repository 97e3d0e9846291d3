#include "handtraj/nn/tape.hpp"

#include <cmath>
#include <algorithm>
#include <limits>
#include <memory>

#include "handtraj/kernels/gemm.hpp"

namespace handtraj::nn {

using kernels::Backend;

namespace {

void check(bool ok, const char* op, const std::string& detail) {
  if (!ok) throw ShapeMismatch(std::string(op) + ": " + detail);
}

template <typename Real>
std::string shp(const Matrix<Real>& m) {
  return shape_str(m.rows, m.cols);
}

}  // namespace

template <typename Real>
Var Tape<Real>::push(Mat value, bool needs_grad) {
  Node n;
  n.value = std::move(value);
  n.needs_grad = needs_grad;
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size() - 1)};
}

template <typename Real>
const Matrix<Real>& Tape<Real>::value(Var v) const {
  const Node& n = nodes_[v.id];
  return n.ref ? *n.ref : n.value;
}

template <typename Real>
Matrix<Real>& Tape<Real>::g(Var v) {
  Node& n = nodes_[v.id];
  if (n.grad.size() == 0) {
    const Mat& val = value(v);
    n.grad = Mat(val.rows, val.cols);
  }
  return n.grad;
}

template <typename Real>
Var Tape<Real>::constant(Mat m) {
  return push(std::move(m), false);
}

template <typename Real>
Var Tape<Real>::input(Mat m) {
  return push(std::move(m), true);
}

template <typename Real>
Var Tape<Real>::param(std::size_t index) {
  if (params_ == nullptr || index >= params_->size()) throw ShapeMismatch("tape: unknown parameter");
  Node n;
  n.ref = &(*params_)[index];
  n.param = static_cast<int>(index);
  n.needs_grad = true;
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size() - 1)};
}

template <typename Real>
Var Tape<Real>::matmul(Var a, Var b) {
  const Mat& A = value(a);
  const Mat& B = value(b);
  check(A.cols == B.rows, "matmul", shp(A) + " x " + shp(B));
  Mat C(A.rows, B.cols);
  kernels::gemm_nn<Real>(A.rows, B.cols, A.cols, A.span(), B.span(), C.span(), Backend::kSerial);
  Var out = push(std::move(C), needs(a) || needs(b));
  nodes_[out.id].backward = [this, a, b, out] {
    const Mat& A = value(a);
    const Mat& B = value(b);
    const Mat& dC = nodes_[out.id].grad;
    if (needs(a)) kernels::gemm_nt<Real>(A.rows, A.cols, B.cols, dC.span(), B.span(), g(a).span(), Backend::kSerial);
    if (needs(b)) kernels::gemm_tn<Real>(B.rows, B.cols, A.rows, A.span(), dC.span(), g(b).span(), Backend::kSerial);
  };
  return out;
}

template <typename Real>
Var Tape<Real>::linear(Var x, Var w, Var b) {
  const Mat& X = value(x);
  const Mat& W = value(w);
  const Mat& B = value(b);
  check(X.cols == W.rows && B.rows == 1 && B.cols == W.cols, "linear", shp(X) + " x " + shp(W) + " + " + shp(B));
  Mat C(X.rows, W.cols);
  for (std::size_t r = 0; r < C.rows; ++r) std::copy(B.data.begin(), B.data.end(), C.row(r));
  kernels::gemm_nn<Real>(X.rows, W.cols, X.cols, X.span(), W.span(), C.span(), Backend::kSerial);
  Var out = push(std::move(C), needs(x) || needs(w) || needs(b));
  nodes_[out.id].backward = [this, x, w, b, out] {
    const Mat& X = value(x);
    const Mat& W = value(w);
    const Mat& dC = nodes_[out.id].grad;
    if (needs(x)) kernels::gemm_nt<Real>(X.rows, X.cols, W.cols, dC.span(), W.span(), g(x).span(), Backend::kSerial);
    if (needs(w)) kernels::gemm_tn<Real>(W.rows, W.cols, X.rows, X.span(), dC.span(), g(w).span(), Backend::kSerial);
    if (needs(b)) {
      Mat& dB = g(b);
      for (std::size_t r = 0; r < dC.rows; ++r) {
        const Real* src = dC.row(r);
        for (std::size_t c = 0; c < dC.cols; ++c) dB.data[c] += src[c];
      }
    }
  };
  return out;
}

template <typename Real>
Var Tape<Real>::left_matmul_const(const Mat& p, Var v) {
  const Mat& V = value(v);
  check(p.cols == V.rows, "left_matmul_const", shp(p) + " x " + shp(V));
  Mat C(p.rows, V.cols);
  kernels::gemm_nn<Real>(p.rows, V.cols, p.cols, p.span(), V.span(), C.span(), Backend::kSerial);
  Var out = push(std::move(C), needs(v));
  auto P = std::make_shared<Mat>(p);
  nodes_[out.id].backward = [this, P, v, out] {
    if (!needs(v)) return;
    const Mat& dC = nodes_[out.id].grad;
    kernels::gemm_tn<Real>(P->cols, dC.cols, P->rows, P->span(), dC.span(), g(v).span(), Backend::kSerial);
  };
  return out;
}

template <typename Real>
Var Tape<Real>::add(Var a, Var b) {
  const Mat& A = value(a);
  const Mat& B = value(b);
  check(A.same_shape(B), "add", shp(A) + " + " + shp(B));
  Mat C = A;
  for (std::size_t i = 0; i < C.size(); ++i) C.data[i] += B.data[i];
  Var out = push(std::move(C), needs(a) || needs(b));
  nodes_[out.id].backward = [this, a, b, out] {
    const Mat& dC = nodes_[out.id].grad;
    for (Var v : {a, b}) {
      if (!needs(v)) continue;
      Mat& d = g(v);
      for (std::size_t i = 0; i < d.size(); ++i) d.data[i] += dC.data[i];
    }
  };
  return out;
}

template <typename Real>
Var Tape<Real>::sub(Var a, Var b) {
  return add(a, scale(b, Real(-1)));
}

template <typename Real>
Var Tape<Real>::mul(Var a, Var b) {
  const Mat& A = value(a);
  const Mat& B = value(b);
  check(A.same_shape(B), "mul", shp(A) + " * " + shp(B));
  Mat C = A;
  for (std::size_t i = 0; i < C.size(); ++i) C.data[i] *= B.data[i];
  Var out = push(std::move(C), needs(a) || needs(b));
  nodes_[out.id].backward = [this, a, b, out] {
    const Mat& dC = nodes_[out.id].grad;
    const Mat& A = value(a);
    const Mat& B = value(b);
    if (needs(a)) {
      Mat& d = g(a);
      for (std::size_t i = 0; i < d.size(); ++i) d.data[i] += dC.data[i] * B.data[i];
    }
    if (needs(b)) {
      Mat& d = g(b);
      for (std::size_t i = 0; i < d.size(); ++i) d.data[i] += dC.data[i] * A.data[i];
    }
  };
  return out;
}

template <typename Real>
Var Tape<Real>::scale(Var a, Real s) {
  Mat C = value(a);
  for (auto& x : C.data) x *= s;
  Var out = push(std::move(C), needs(a));
  nodes_[out.id].backward = [this, a, s, out] {
    if (!needs(a)) return;
    const Mat& dC = nodes_[out.id].grad;
    Mat& d = g(a);
    for (std::size_t i = 0; i < d.size(); ++i) d.data[i] += s * dC.data[i];
  };
  return out;
}

template <typename Real>
Var Tape<Real>::add_row(Var x, Var b) {
  const Mat& X = value(x);
  const Mat& B = value(b);
  check(B.rows == 1 && B.cols == X.cols, "add_row", shp(X) + " + " + shp(B));
  Mat C = X;
  for (std::size_t r = 0; r < C.rows; ++r)
    for (std::size_t c = 0; c < C.cols; ++c) C(r, c) += B.data[c];
  Var out = push(std::move(C), needs(x) || needs(b));
  nodes_[out.id].backward = [this, x, b, out] {
    const Mat& dC = nodes_[out.id].grad;
    if (needs(x)) {
      Mat& d = g(x);
      for (std::size_t i = 0; i < d.size(); ++i) d.data[i] += dC.data[i];
    }
    if (needs(b)) {
      Mat& d = g(b);
      for (std::size_t r = 0; r < dC.rows; ++r)
        for (std::size_t c = 0; c < dC.cols; ++c) d.data[c] += dC(r, c);
    }
  };
  return out;
}

template <typename Real>
Var Tape<Real>::gelu(Var a) {
  const Real k = static_cast<Real>(0.7978845608028654);  // sqrt(2/pi)
  const Real c3 = static_cast<Real>(0.044715);
  Mat Y = value(a);
  for (auto& x : Y.data) x = Real(0.5) * x * (Real(1) + std::tanh(k * (x + c3 * x * x * x)));
  Var out = push(std::move(Y), needs(a));
  nodes_[out.id].backward = [this, a, out, k, c3] {
    if (!needs(a)) return;
    const Mat& X = value(a);
    const Mat& dY = nodes_[out.id].grad;
    Mat& d = g(a);
    for (std::size_t i = 0; i < d.size(); ++i) {
      const Real x = X.data[i];
      const Real t = std::tanh(k * (x + c3 * x * x * x));
      const Real dydx = Real(0.5) * (Real(1) + t) + Real(0.5) * x * (Real(1) - t * t) * k * (Real(1) + Real(3) * c3 * x * x);
      d.data[i] += dY.data[i] * dydx;
    }
  };
  return out;
}

template <typename Real>
Var Tape<Real>::sigmoid(Var a) {
  Mat Y = value(a);
  for (auto& x : Y.data) x = Real(1) / (Real(1) + std::exp(-x));
  Var out = push(std::move(Y), needs(a));
  nodes_[out.id].backward = [this, a, out] {
    if (!needs(a)) return;
    const Mat& Yv = nodes_[out.id].value;
    const Mat& dY = nodes_[out.id].grad;
    Mat& d = g(a);
    for (std::size_t i = 0; i < d.size(); ++i) d.data[i] += dY.data[i] * Yv.data[i] * (Real(1) - Yv.data[i]);
  };
  return out;
}

template <typename Real>
Var Tape<Real>::exp(Var a) {
  Mat Y = value(a);
  for (auto& x : Y.data) x = std::exp(x);
  Var out = push(std::move(Y), needs(a));
  nodes_[out.id].backward = [this, a, out] {
    if (!needs(a)) return;
    const Mat& Yv = nodes_[out.id].value;
    const Mat& dY = nodes_[out.id].grad;
    Mat& d = g(a);
    for (std::size_t i = 0; i < d.size(); ++i) d.data[i] += dY.data[i] * Yv.data[i];
  };
  return out;
}

template <typename Real>
Var Tape<Real>::layer_norm(Var x, Var gamma, Var beta, Real eps) {
  const Mat& X = value(x);
  const Mat& G = value(gamma);
  const Mat& B = value(beta);
  check(G.rows == 1 && G.cols == X.cols && B.same_shape(G), "layer_norm", shp(X) + " with " + shp(G));
  const std::size_t n = X.cols;
  auto xhat = std::make_shared<Mat>(X.rows, n);
  auto rstd = std::make_shared<std::vector<Real>>(X.rows);
  Mat Y(X.rows, n);
  for (std::size_t r = 0; r < X.rows; ++r) {
    const Real* xr = X.row(r);
    Real mean = 0;
    for (std::size_t c = 0; c < n; ++c) mean += xr[c];
    mean /= static_cast<Real>(n);
    Real var = 0;
    for (std::size_t c = 0; c < n; ++c) var += (xr[c] - mean) * (xr[c] - mean);
    var /= static_cast<Real>(n);
    const Real rs = Real(1) / std::sqrt(var + eps);
    (*rstd)[r] = rs;
    for (std::size_t c = 0; c < n; ++c) {
      const Real h = (xr[c] - mean) * rs;
      (*xhat)(r, c) = h;
      Y(r, c) = h * G.data[c] + B.data[c];
    }
  }
  Var out = push(std::move(Y), needs(x) || needs(gamma) || needs(beta));
  nodes_[out.id].backward = [this, x, gamma, beta, out, xhat, rstd, n] {
    const Mat& dY = nodes_[out.id].grad;
    const Mat& G = value(gamma);
    if (needs(gamma) || needs(beta)) {
      for (std::size_t r = 0; r < dY.rows; ++r) {
        for (std::size_t c = 0; c < n; ++c) {
          if (needs(gamma)) g(gamma).data[c] += dY(r, c) * (*xhat)(r, c);
          if (needs(beta)) g(beta).data[c] += dY(r, c);
        }
      }
    }
    if (!needs(x)) return;
    Mat& dX = g(x);
    std::vector<Real> dh(n);
    for (std::size_t r = 0; r < dY.rows; ++r) {
      Real mean_dh = 0, mean_dh_h = 0;
      for (std::size_t c = 0; c < n; ++c) {
        dh[c] = dY(r, c) * G.data[c];
        mean_dh += dh[c];
        mean_dh_h += dh[c] * (*xhat)(r, c);
      }
      mean_dh /= static_cast<Real>(n);
      mean_dh_h /= static_cast<Real>(n);
      for (std::size_t c = 0; c < n; ++c) {
        dX(r, c) += (*rstd)[r] * (dh[c] - mean_dh - (*xhat)(r, c) * mean_dh_h);
      }
    }
  };
  return out;
}

template <typename Real>
Var Tape<Real>::causal_attention(Var qkv, std::size_t heads) {
  const Mat& QKV = value(qkv);
  check(QKV.cols % 3 == 0 && (QKV.cols / 3) % heads == 0, "causal_attention", shp(QKV));
  const std::size_t L = QKV.rows, d = QKV.cols / 3, dh = d / heads;
  const Real inv = Real(1) / std::sqrt(static_cast<Real>(dh));
  // Attention weights per head, row i holding columns 0..i.
  auto probs = std::make_shared<std::vector<Mat>>(heads, Mat(L, L));
  Mat O(L, d);
  for (std::size_t h = 0; h < heads; ++h) {
    Mat& P = (*probs)[h];
    const std::size_t qo = h * dh, ko = d + h * dh, vo = 2 * d + h * dh;
    for (std::size_t i = 0; i < L; ++i) {
      const Real* q = QKV.row(i) + qo;
      Real mx = -std::numeric_limits<Real>::infinity();
      for (std::size_t j = 0; j <= i; ++j) {
        const Real s = kernels::dot(q, QKV.row(j) + ko, dh) * inv;
        P(i, j) = s;
        mx = std::max(mx, s);
      }
      Real z = 0;
      for (std::size_t j = 0; j <= i; ++j) {
        P(i, j) = std::exp(P(i, j) - mx);
        z += P(i, j);
      }
      Real* o = O.row(i) + h * dh;
      for (std::size_t j = 0; j <= i; ++j) {
        P(i, j) /= z;
        const Real pij = P(i, j);
        const Real* v = QKV.row(j) + vo;
        for (std::size_t c = 0; c < dh; ++c) o[c] += pij * v[c];
      }
    }
  }
  Var out = push(std::move(O), needs(qkv));
  nodes_[out.id].backward = [this, qkv, out, probs, heads, L, d, dh, inv] {
    if (!needs(qkv)) return;
    const Mat& QKV = value(qkv);
    const Mat& dO = nodes_[out.id].grad;
    Mat& dQKV = g(qkv);
    std::vector<Real> dp(L);
    for (std::size_t h = 0; h < heads; ++h) {
      const Mat& P = (*probs)[h];
      const std::size_t qo = h * dh, ko = d + h * dh, vo = 2 * d + h * dh;
      for (std::size_t i = 0; i < L; ++i) {
        const Real* dout = dO.row(i) + h * dh;
        Real rowdot = 0;
        for (std::size_t j = 0; j <= i; ++j) {
          dp[j] = kernels::dot(dout, QKV.row(j) + vo, dh);
          rowdot += dp[j] * P(i, j);
          Real* dv = dQKV.row(j) + vo;
          const Real pij = P(i, j);
          for (std::size_t c = 0; c < dh; ++c) dv[c] += pij * dout[c];
        }
        Real* dq = dQKV.row(i) + qo;
        const Real* q = QKV.row(i) + qo;
        for (std::size_t j = 0; j <= i; ++j) {
          const Real ds = P(i, j) * (dp[j] - rowdot) * inv;
          const Real* k = QKV.row(j) + ko;
          Real* dk = dQKV.row(j) + ko;
          for (std::size_t c = 0; c < dh; ++c) {
            dq[c] += ds * k[c];
            dk[c] += ds * q[c];
          }
        }
      }
    }
  };
  return out;
}

template <typename Real>
Var Tape<Real>::gather_rows(Var table, std::span<const int> rows) {
  const Mat& T = value(table);
  Mat C(rows.size(), T.cols);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    check(rows[i] >= 0 && static_cast<std::size_t>(rows[i]) < T.rows, "gather_rows", "row out of range");
    std::copy(T.row(rows[i]), T.row(rows[i]) + T.cols, C.row(i));
  }
  Var out = push(std::move(C), needs(table));
  auto idx = std::make_shared<std::vector<int>>(rows.begin(), rows.end());
  nodes_[out.id].backward = [this, table, out, idx] {
    if (!needs(table)) return;
    const Mat& dC = nodes_[out.id].grad;
    Mat& dT = g(table);
    for (std::size_t i = 0; i < idx->size(); ++i) {
      Real* dst = dT.row((*idx)[i]);
      const Real* src = dC.row(i);
      for (std::size_t c = 0; c < dC.cols; ++c) dst[c] += src[c];
    }
  };
  return out;
}

template <typename Real>
Var Tape<Real>::concat_rows(std::span<const Var> parts) {
  check(!parts.empty(), "concat_rows", "no parts");
  const std::size_t cols = value(parts[0]).cols;
  std::size_t rows = 0;
  bool any = false;
  for (Var p : parts) {
    check(value(p).cols == cols, "concat_rows", "column mismatch " + shp(value(p)));
    rows += value(p).rows;
    any = any || needs(p);
  }
  Mat C(rows, cols);
  std::size_t r = 0;
  for (Var p : parts) {
    const Mat& P = value(p);
    std::copy(P.data.begin(), P.data.end(), C.row(r));
    r += P.rows;
  }
  Var out = push(std::move(C), any);
  auto ps = std::make_shared<std::vector<Var>>(parts.begin(), parts.end());
  nodes_[out.id].backward = [this, ps, out] {
    const Mat& dC = nodes_[out.id].grad;
    std::size_t r = 0;
    for (Var p : *ps) {
      const std::size_t n = value(p).rows;
      if (needs(p)) {
        Mat& d = g(p);
        for (std::size_t i = 0; i < d.size(); ++i) d.data[i] += dC.data[r * dC.cols + i];
      }
      r += n;
    }
  };
  return out;
}

template <typename Real>
Var Tape<Real>::concat_cols(Var a, Var b) {
  const Mat& A = value(a);
  const Mat& B = value(b);
  check(A.rows == B.rows, "concat_cols", shp(A) + " | " + shp(B));
  Mat C(A.rows, A.cols + B.cols);
  for (std::size_t r = 0; r < A.rows; ++r) {
    std::copy(A.row(r), A.row(r) + A.cols, C.row(r));
    std::copy(B.row(r), B.row(r) + B.cols, C.row(r) + A.cols);
  }
  Var out = push(std::move(C), needs(a) || needs(b));
  nodes_[out.id].backward = [this, a, b, out] {
    const Mat& dC = nodes_[out.id].grad;
    const std::size_t ac = value(a).cols, bc = value(b).cols;
    for (std::size_t r = 0; r < dC.rows; ++r) {
      if (needs(a)) {
        Real* d = g(a).row(r);
        for (std::size_t c = 0; c < ac; ++c) d[c] += dC(r, c);
      }
      if (needs(b)) {
        Real* d = g(b).row(r);
        for (std::size_t c = 0; c < bc; ++c) d[c] += dC(r, ac + c);
      }
    }
  };
  return out;
}

template <typename Real>
Var Tape<Real>::slice_cols(Var a, std::size_t c0, std::size_t c1) {
  const Mat& A = value(a);
  check(c0 < c1 && c1 <= A.cols, "slice_cols", shp(A));
  Mat C(A.rows, c1 - c0);
  for (std::size_t r = 0; r < A.rows; ++r) std::copy(A.row(r) + c0, A.row(r) + c1, C.row(r));
  Var out = push(std::move(C), needs(a));
  nodes_[out.id].backward = [this, a, c0, out] {
    if (!needs(a)) return;
    const Mat& dC = nodes_[out.id].grad;
    Mat& d = g(a);
    for (std::size_t r = 0; r < dC.rows; ++r)
      for (std::size_t c = 0; c < dC.cols; ++c) d(r, c0 + c) += dC(r, c);
  };
  return out;
}

template <typename Real>
Var Tape<Real>::scatter_add_rows(Var x, Var src, std::span<const int> rows) {
  const Mat& X = value(x);
  const Mat& S = value(src);
  check(S.rows == rows.size() && S.cols == X.cols, "scatter_add_rows", shp(X) + " <- " + shp(S));
  Mat C = X;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    check(rows[i] >= 0 && static_cast<std::size_t>(rows[i]) < X.rows, "scatter_add_rows", "row out of range");
    Real* dst = C.row(rows[i]);
    for (std::size_t c = 0; c < X.cols; ++c) dst[c] += S(i, c);
  }
  Var out = push(std::move(C), needs(x) || needs(src));
  auto idx = std::make_shared<std::vector<int>>(rows.begin(), rows.end());
  nodes_[out.id].backward = [this, x, src, out, idx] {
    const Mat& dC = nodes_[out.id].grad;
    if (needs(x)) {
      Mat& d = g(x);
      for (std::size_t i = 0; i < d.size(); ++i) d.data[i] += dC.data[i];
    }
    if (needs(src)) {
      Mat& d = g(src);
      for (std::size_t i = 0; i < idx->size(); ++i)
        for (std::size_t c = 0; c < d.cols; ++c) d(i, c) += dC((*idx)[i], c);
    }
  };
  return out;
}

template <typename Real>
Var Tape<Real>::patch_embed(const Mat& patches, std::size_t positions, Var w, Var b) {
  const Mat& W = value(w);
  const Mat& B = value(b);
  const std::size_t P = patches.cols, D = W.cols;
  check(positions > 0 && patches.rows % positions == 0 && W.rows == positions * P && B.rows == positions &&
            B.cols == D,
        "patch_embed", shp(patches) + " with " + shp(W) + ", " + shp(B));
  const std::size_t T = patches.rows / positions;
  // Per-position input blocks (T x P).
  auto blocks = std::make_shared<std::vector<Mat>>(positions, Mat(T, P));
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t m = 0; m < positions; ++m)
      std::copy(patches.row(t * positions + m), patches.row(t * positions + m) + P, (*blocks)[m].row(t));
  Mat C(T * positions, D);
  Mat tmp(T, D);
  for (std::size_t m = 0; m < positions; ++m) {
    for (std::size_t t = 0; t < T; ++t) std::copy(B.row(m), B.row(m) + D, tmp.row(t));
    kernels::gemm_nn<Real>(T, D, P, (*blocks)[m].span(), std::span<const Real>(W.row(m * P), P * D), tmp.span(),
                           Backend::kSerial);
    for (std::size_t t = 0; t < T; ++t) std::copy(tmp.row(t), tmp.row(t) + D, C.row(t * positions + m));
  }
  Var out = push(std::move(C), needs(w) || needs(b));
  nodes_[out.id].backward = [this, w, b, out, blocks, positions, T, P, D] {
    const Mat& dC = nodes_[out.id].grad;
    Mat dm(T, D);
    for (std::size_t m = 0; m < positions; ++m) {
      for (std::size_t t = 0; t < T; ++t) std::copy(dC.row(t * positions + m), dC.row(t * positions + m) + D, dm.row(t));
      if (needs(w)) {
        kernels::gemm_tn<Real>(P, D, T, (*blocks)[m].span(), dm.span(), std::span<Real>(g(w).row(m * P), P * D),
                               Backend::kSerial);
      }
      if (needs(b)) {
        Real* db = g(b).row(m);
        for (std::size_t t = 0; t < T; ++t)
          for (std::size_t c = 0; c < D; ++c) db[c] += dm(t, c);
      }
    }
  };
  return out;
}

template <typename Real>
Var Tape<Real>::sum(Var a) {
  Real s = 0;
  for (Real x : value(a).data) s += x;
  Var out = push(Mat(1, 1, s), needs(a));
  nodes_[out.id].backward = [this, a, out] {
    if (!needs(a)) return;
    const Real go = nodes_[out.id].grad.data[0];
    for (auto& x : g(a).data) x += go;
  };
  return out;
}

template <typename Real>
Var Tape<Real>::cross_entropy(Var logits, std::span<const int> targets) {
  const Mat& X = value(logits);
  check(X.rows == targets.size(), "cross_entropy", shp(X) + " vs " + std::to_string(targets.size()) + " targets");
  auto probs = std::make_shared<Mat>(X.rows, X.cols);
  Real loss = 0;
  for (std::size_t r = 0; r < X.rows; ++r) {
    check(targets[r] >= 0 && static_cast<std::size_t>(targets[r]) < X.cols, "cross_entropy", "target out of range");
    const Real* x = X.row(r);
    const Real mx = *std::max_element(x, x + X.cols);
    Real z = 0;
    for (std::size_t c = 0; c < X.cols; ++c) {
      const Real e = std::exp(x[c] - mx);
      (*probs)(r, c) = e;
      z += e;
    }
    for (std::size_t c = 0; c < X.cols; ++c) (*probs)(r, c) /= z;
    loss += std::log(z) + mx - x[targets[r]];
  }
  Var out = push(Mat(1, 1, loss), needs(logits));
  auto tg = std::make_shared<std::vector<int>>(targets.begin(), targets.end());
  nodes_[out.id].backward = [this, logits, out, probs, tg] {
    if (!needs(logits)) return;
    const Real go = nodes_[out.id].grad.data[0];
    Mat& d = g(logits);
    for (std::size_t r = 0; r < d.rows; ++r) {
      for (std::size_t c = 0; c < d.cols; ++c) d(r, c) += go * (*probs)(r, c);
      d(r, (*tg)[r]) -= go;
    }
  };
  return out;
}

template <typename Real>
Var Tape<Real>::masked_sq_error(Var a, const Mat& target, const Mat& mask) {
  const Mat& A = value(a);
  check(A.same_shape(target) && A.same_shape(mask), "masked_sq_error", shp(A));
  Real s = 0;
  for (std::size_t i = 0; i < A.size(); ++i) {
    const Real e = A.data[i] - target.data[i];
    s += mask.data[i] * e * e;
  }
  Var out = push(Mat(1, 1, s), needs(a));
  auto t = std::make_shared<Mat>(target);
  auto m = std::make_shared<Mat>(mask);
  nodes_[out.id].backward = [this, a, out, t, m] {
    if (!needs(a)) return;
    const Real go = nodes_[out.id].grad.data[0];
    const Mat& A = value(a);
    Mat& d = g(a);
    for (std::size_t i = 0; i < d.size(); ++i) d.data[i] += go * Real(2) * m->data[i] * (A.data[i] - t->data[i]);
  };
  return out;
}

template <typename Real>
Var Tape<Real>::kl_standard_normal(Var mu, Var logsig) {
  const Mat& M = value(mu);
  const Mat& S = value(logsig);
  check(M.same_shape(S), "kl_standard_normal", shp(M) + " vs " + shp(S));
  Real s = 0;
  for (std::size_t i = 0; i < M.size(); ++i) {
    const Real ls = S.data[i];
    s += Real(0.5) * (M.data[i] * M.data[i] + std::exp(Real(2) * ls) - Real(1) - Real(2) * ls);
  }
  Var out = push(Mat(1, 1, s), needs(mu) || needs(logsig));
  nodes_[out.id].backward = [this, mu, logsig, out] {
    const Real go = nodes_[out.id].grad.data[0];
    const Mat& M = value(mu);
    const Mat& S = value(logsig);
    if (needs(mu)) {
      Mat& d = g(mu);
      for (std::size_t i = 0; i < d.size(); ++i) d.data[i] += go * M.data[i];
    }
    if (needs(logsig)) {
      Mat& d = g(logsig);
      for (std::size_t i = 0; i < d.size(); ++i) d.data[i] += go * (std::exp(Real(2) * S.data[i]) - Real(1));
    }
  };
  return out;
}

template <typename Real>
Var Tape<Real>::bce_with_logits(Var logits, const Mat& target, const Mat& mask) {
  const Mat& X = value(logits);
  check(X.same_shape(target) && X.same_shape(mask), "bce_with_logits", shp(X));
  Real s = 0;
  for (std::size_t i = 0; i < X.size(); ++i) {
    const Real x = X.data[i];
    s += mask.data[i] * (std::max(x, Real(0)) - x * target.data[i] + std::log1p(std::exp(-std::abs(x))));
  }
  Var out = push(Mat(1, 1, s), needs(logits));
  auto t = std::make_shared<Mat>(target);
  auto m = std::make_shared<Mat>(mask);
  nodes_[out.id].backward = [this, logits, out, t, m] {
    if (!needs(logits)) return;
    const Real go = nodes_[out.id].grad.data[0];
    const Mat& X = value(logits);
    Mat& d = g(logits);
    for (std::size_t i = 0; i < d.size(); ++i) {
      const Real sg = Real(1) / (Real(1) + std::exp(-X.data[i]));
      d.data[i] += go * m->data[i] * (sg - t->data[i]);
    }
  };
  return out;
}

template <typename Real>
void Tape<Real>::backward(Var loss, Grads<Real>* grads) {
  check(value(loss).size() == 1, "backward", "loss must be 1 x 1");
  if (!needs(loss)) return;
  g(loss).data[0] = Real(1);
  for (int i = loss.id; i >= 0; --i) {
    Node& n = nodes_[i];
    if (!n.needs_grad || n.grad.size() == 0) continue;
    if (n.param >= 0) {
      if (grads) {
        Mat& dst = (*grads)[n.param];
        for (std::size_t k = 0; k < dst.size(); ++k) dst.data[k] += n.grad.data[k];
      }
    } else if (n.backward) {
      n.backward();
    }
  }
}

template class Tape<float>;
template class Tape<double>;

}  // namespace handtraj::nn
