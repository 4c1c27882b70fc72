#include "warpcore/nn/ops.hpp"

#include <Eigen/Core>
#include <cmath>
#include <string>

#include "warpcore/error.hpp"

namespace warpcore::nn {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRow = Eigen::Map<RowMat>;
using CMapRow = Eigen::Map<const RowMat>;

void require(bool cond, const std::string& what) {
  if (!cond) throw Error(ErrorKind::kShapeMismatch, what);
}

void require_chw(const Tensor& t, const char* op) {
  require(t.rank() == 3, std::string(op) + ": expected [C,H,W], got " + shape_string(t.shape()));
}

// Geometry of a same-size convolution.
struct ConvGeom {
  int ci, co, h, w, kh, kw;
  int k() const { return ci * kh * kw; }
  int hw() const { return h * w; }
};

ConvGeom conv_geom(const Tensor& x, const Tensor& w, const Tensor& b, const char* op) {
  require_chw(x, op);
  require(w.rank() == 4, std::string(op) + ": weight must be [Co,Ci,kh,kw]");
  require(w.dim(1) == x.dim(0), std::string(op) + ": input channels " + shape_string(x.shape()) +
                                    " vs weight " + shape_string(w.shape()));
  require(w.dim(2) % 2 == 1 && w.dim(3) % 2 == 1, std::string(op) + ": kernel must be odd");
  require(b.rank() == 1 && b.dim(0) == w.dim(0), std::string(op) + ": bias must be [Co]");
  return {x.dim(0), w.dim(0), x.dim(1), x.dim(2), w.dim(2), w.dim(3)};
}

// col[(c*kh + i)*kw + j, y*W + x] = x[c, y + i - ph, x + j - pw] (0 outside).
std::vector<double> im2col(const double* x, const ConvGeom& g) {
  const int ph = g.kh / 2, pw = g.kw / 2;
  std::vector<double> col(static_cast<std::size_t>(g.k()) * g.hw(), 0.0);
  for (int c = 0; c < g.ci; ++c) {
    for (int i = 0; i < g.kh; ++i) {
      for (int j = 0; j < g.kw; ++j) {
        double* row = col.data() + (static_cast<std::size_t>(c * g.kh + i) * g.kw + j) * g.hw();
        for (int y = 0; y < g.h; ++y) {
          const int sy = y + i - ph;
          if (sy < 0 || sy >= g.h) continue;
          const double* src = x + (static_cast<std::size_t>(c) * g.h + sy) * g.w;
          double* dst = row + static_cast<std::size_t>(y) * g.w;
          const int x0 = std::max(0, pw - j);
          const int x1 = std::min(g.w, g.w + pw - j);
          for (int xx = x0; xx < x1; ++xx) dst[xx] = src[xx + j - pw];
        }
      }
    }
  }
  return col;
}

void col2im_add(const double* col, const ConvGeom& g, double* dx) {
  const int ph = g.kh / 2, pw = g.kw / 2;
  for (int c = 0; c < g.ci; ++c) {
    for (int i = 0; i < g.kh; ++i) {
      for (int j = 0; j < g.kw; ++j) {
        const double* row = col + (static_cast<std::size_t>(c * g.kh + i) * g.kw + j) * g.hw();
        for (int y = 0; y < g.h; ++y) {
          const int sy = y + i - ph;
          if (sy < 0 || sy >= g.h) continue;
          double* dst = dx + (static_cast<std::size_t>(c) * g.h + sy) * g.w;
          const double* src = row + static_cast<std::size_t>(y) * g.w;
          const int x0 = std::max(0, pw - j);
          const int x1 = std::min(g.w, g.w + pw - j);
          for (int xx = x0; xx < x1; ++xx) dst[xx + j - pw] += src[xx];
        }
      }
    }
  }
}

// out = W * col (no bias). For 1x1 kernels the input itself is the column matrix.
Tensor conv_forward(const double* x_data, std::shared_ptr<std::vector<double>>& col,
                    const Tensor& w, const ConvGeom& g) {
  Tensor out({g.co, g.h, g.w});
  const double* cols = x_data;
  if (g.kh != 1 || g.kw != 1) {
    col = std::make_shared<std::vector<double>>(im2col(x_data, g));
    cols = col->data();
  }
  MapRow(out.data(), g.co, g.hw()).noalias() =
      CMapRow(w.data(), g.co, g.k()) * CMapRow(cols, g.k(), g.hw());
  return out;
}

void add_bias(Tensor& out, const Tensor& b, const ConvGeom& g) {
  for (int o = 0; o < g.co; ++o) {
    double* row = out.data() + static_cast<std::size_t>(o) * g.hw();
    for (int p = 0; p < g.hw(); ++p) row[p] += b[o];
  }
}

// Given dL/d(W*col) as [Co, HW], accumulates into dW and d(input).
void conv_backward(Graph& gr, Var x, Var w, const double* dout, const double* x_cols,
                   const ConvGeom& g, bool one_by_one, const std::vector<double>* input_scale) {
  const CMapRow dY(dout, g.co, g.hw());
  if (gr.requires_grad(w)) {
    MapRow(gr.grad(w).data(), g.co, g.k()).noalias() += dY * CMapRow(x_cols, g.k(), g.hw()).transpose();
  }
  if (gr.requires_grad(x)) {
    const Tensor& wt = gr.value(w);
    RowMat dcol = CMapRow(wt.data(), g.co, g.k()).transpose() * dY;
    std::vector<double> dx_local;
    double* dx = gr.grad(x).data();
    if (input_scale) {
      dx_local.assign(static_cast<std::size_t>(g.ci) * g.hw(), 0.0);
      dx = dx_local.data();
    }
    if (one_by_one) {
      for (std::size_t i = 0; i < static_cast<std::size_t>(g.ci) * g.hw(); ++i) dx[i] += dcol.data()[i];
    } else {
      col2im_add(dcol.data(), g, dx);
    }
    if (input_scale) {
      double* gx = gr.grad(x).data();
      for (int c = 0; c < g.ci; ++c) {
        for (int p = 0; p < g.hw(); ++p) {
          gx[static_cast<std::size_t>(c) * g.hw() + p] += dx[static_cast<std::size_t>(c) * g.hw() + p] * (*input_scale)[p];
        }
      }
    }
  }
}

}  // namespace

Tensor to_tensor(const Plane& p) {
  return Tensor({p.channels(), p.height(), p.width()}, p.data());
}

Plane to_plane(const Tensor& t) {
  require_chw(t, "to_plane");
  return Plane(t.dim(0), t.dim(1), t.dim(2), t.storage());
}

Var conv2d(Graph& g, Var x, Var w, Var b) {
  const ConvGeom geom = conv_geom(g.value(x), g.value(w), g.value(b), "conv2d");
  std::shared_ptr<std::vector<double>> col;
  Tensor out = conv_forward(g.value(x).data(), col, g.value(w), geom);
  add_bias(out, g.value(b), geom);
  return g.record(std::move(out), {x, w, b}, [x, w, b, geom, col](Graph& gr, int self) {
    const double* dout = gr.grad(self).data();
    if (gr.requires_grad(b)) {
      auto db = gr.grad(b);
      for (int o = 0; o < geom.co; ++o) {
        const double* row = dout + static_cast<std::size_t>(o) * geom.hw();
        double s = 0.0;
        for (int p = 0; p < geom.hw(); ++p) s += row[p];
        db[o] += s;
      }
    }
    const bool one = geom.kh == 1 && geom.kw == 1;
    const double* cols = one ? gr.value(x).data() : col->data();
    conv_backward(gr, x, w, dout, cols, geom, one, nullptr);
  });
}

PConvResult pconv2d(Graph& g, Var x, const Mask& m, Var w, Var b) {
  const ConvGeom geom = conv_geom(g.value(x), g.value(w), g.value(b), "pconv2d");
  require(m.height() == geom.h && m.width() == geom.w, "pconv2d: mask size");

  auto mask_f = std::make_shared<std::vector<double>>(static_cast<std::size_t>(geom.hw()));
  for (int p = 0; p < geom.hw(); ++p) (*mask_f)[p] = m[p] ? 1.0 : 0.0;

  // ratio = taps inside the image / valid taps.
  auto ratio = std::make_shared<std::vector<double>>(static_cast<std::size_t>(geom.hw()), 0.0);
  PConvResult res{Var{}, Mask(geom.h, geom.w)};
  const int ph = geom.kh / 2, pw = geom.kw / 2;
  for (int y = 0; y < geom.h; ++y) {
    for (int xx = 0; xx < geom.w; ++xx) {
      int inside = 0, valid = 0;
      for (int i = -ph; i <= ph; ++i) {
        for (int j = -pw; j <= pw; ++j) {
          const int sy = y + i, sx = xx + j;
          if (sy < 0 || sy >= geom.h || sx < 0 || sx >= geom.w) continue;
          ++inside;
          valid += m.at(sy, sx) ? 1 : 0;
        }
      }
      if (valid > 0) {
        (*ratio)[static_cast<std::size_t>(y) * geom.w + xx] =
            static_cast<double>(inside) / static_cast<double>(valid);
        res.mask.at(y, xx) = 1;
      }
    }
  }

  const Tensor& xv = g.value(x);
  auto masked = std::make_shared<std::vector<double>>(xv.storage());
  for (int c = 0; c < geom.ci; ++c) {
    for (int p = 0; p < geom.hw(); ++p) (*masked)[static_cast<std::size_t>(c) * geom.hw() + p] *= (*mask_f)[p];
  }
  std::shared_ptr<std::vector<double>> col;
  Tensor out = conv_forward(masked->data(), col, g.value(w), geom);
  const Tensor& bv = g.value(b);
  for (int o = 0; o < geom.co; ++o) {
    double* row = out.data() + static_cast<std::size_t>(o) * geom.hw();
    for (int p = 0; p < geom.hw(); ++p) row[p] = (*ratio)[p] != 0.0 ? row[p] * (*ratio)[p] + bv[o] : 0.0;
  }

  res.out = g.record(std::move(out), {x, w, b},
                     [x, w, b, geom, col, masked, ratio, mask_f](Graph& gr, int self) {
    const double* dout = gr.grad(self).data();
    std::vector<double> draw(static_cast<std::size_t>(geom.co) * geom.hw());
    for (int o = 0; o < geom.co; ++o) {
      for (int p = 0; p < geom.hw(); ++p) {
        const std::size_t i = static_cast<std::size_t>(o) * geom.hw() + p;
        draw[i] = dout[i] * (*ratio)[p];
      }
    }
    if (gr.requires_grad(b)) {
      auto db = gr.grad(b);
      for (int o = 0; o < geom.co; ++o) {
        double s = 0.0;
        for (int p = 0; p < geom.hw(); ++p) {
          if ((*ratio)[p] != 0.0) s += dout[static_cast<std::size_t>(o) * geom.hw() + p];
        }
        db[o] += s;
      }
    }
    const bool one = geom.kh == 1 && geom.kw == 1;
    conv_backward(gr, x, w, draw.data(), one ? masked->data() : col->data(), geom, one, mask_f.get());
  });
  return res;
}

Var fc(Graph& g, Var x, Var w, Var b) {
  const Tensor& xv = g.value(x);
  const Tensor& wv = g.value(w);
  const Tensor& bv = g.value(b);
  require(xv.rank() == 1 && wv.rank() == 2 && wv.dim(1) == xv.dim(0) && bv.rank() == 1 &&
              bv.dim(0) == wv.dim(0),
          "fc: shapes " + shape_string(xv.shape()) + " " + shape_string(wv.shape()) + " " +
              shape_string(bv.shape()));
  const int n_in = wv.dim(1), n_out = wv.dim(0);
  Tensor out({n_out});
  for (int o = 0; o < n_out; ++o) {
    double s = 0.0;
    for (int i = 0; i < n_in; ++i) s += wv[static_cast<std::size_t>(o) * n_in + i] * xv[i];
    out[o] = s + bv[o];
  }
  return g.record(std::move(out), {x, w, b}, [x, w, b, n_in, n_out](Graph& gr, int self) {
    const auto dy = gr.grad(self);
    if (gr.requires_grad(b)) {
      auto db = gr.grad(b);
      for (int o = 0; o < n_out; ++o) db[o] += dy[o];
    }
    if (gr.requires_grad(w)) {
      auto dw = gr.grad(w);
      const Tensor& xv = gr.value(x);
      for (int o = 0; o < n_out; ++o) {
        for (int i = 0; i < n_in; ++i) dw[static_cast<std::size_t>(o) * n_in + i] += dy[o] * xv[i];
      }
    }
    if (gr.requires_grad(x)) {
      auto dx = gr.grad(x);
      const Tensor& wv = gr.value(w);
      for (int o = 0; o < n_out; ++o) {
        for (int i = 0; i < n_in; ++i) dx[i] += dy[o] * wv[static_cast<std::size_t>(o) * n_in + i];
      }
    }
  });
}

Var linear(Graph& g, Var x, Var w, Var b) {
  const Tensor& xv = g.value(x);
  const Tensor& wv = g.value(w);
  const Tensor& bv = g.value(b);
  require(xv.rank() == 2 && wv.rank() == 2 && wv.dim(1) == xv.dim(1) && bv.rank() == 1 &&
              bv.dim(0) == wv.dim(0),
          "linear: shapes " + shape_string(xv.shape()) + " " + shape_string(wv.shape()));
  const int n = xv.dim(0), n_in = wv.dim(1), n_out = wv.dim(0);
  Tensor out({n, n_out});
  MapRow y(out.data(), n, n_out);
  y.noalias() = CMapRow(xv.data(), n, n_in) * CMapRow(wv.data(), n_out, n_in).transpose();
  y.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(bv.data(), n_out);
  return g.record(std::move(out), {x, w, b}, [x, w, b, n, n_in, n_out](Graph& gr, int self) {
    const CMapRow dy(gr.grad(self).data(), n, n_out);
    if (gr.requires_grad(b)) {
      // Plain row-order loop: Eigen's vectorized reduction order depends on
      // buffer alignment, which would break bitwise reproducibility.
      auto db = gr.grad(b);
      for (int r = 0; r < n; ++r)
        for (int o = 0; o < n_out; ++o) db[o] += dy(r, o);
    }
    if (gr.requires_grad(w)) {
      MapRow(gr.grad(w).data(), n_out, n_in).noalias() +=
          dy.transpose() * CMapRow(gr.value(x).data(), n, n_in);
    }
    if (gr.requires_grad(x)) {
      MapRow(gr.grad(x).data(), n, n_in).noalias() += dy * CMapRow(gr.value(w).data(), n_out, n_in);
    }
  });
}

Var leaky_relu(Graph& g, Var x, double slope) {
  const Tensor& xv = g.value(x);
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = xv[i] > 0.0 ? xv[i] : slope * xv[i];
  return g.record(std::move(out), {x}, [x, slope](Graph& gr, int self) {
    const auto dy = gr.grad(self);
    const Tensor& xv = gr.value(x);
    auto dx = gr.grad(x);
    for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += xv[i] > 0.0 ? dy[i] : slope * dy[i];
  });
}

Var relu(Graph& g, Var x) { return leaky_relu(g, x, 0.0); }

Var add(Graph& g, Var a, Var b) {
  const Tensor& av = g.value(a);
  const Tensor& bv = g.value(b);
  require(av.shape() == bv.shape(),
          "add: " + shape_string(av.shape()) + " vs " + shape_string(bv.shape()));
  Tensor out(av.shape());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] + bv[i];
  return g.record(std::move(out), {a, b}, [a, b](Graph& gr, int self) {
    const auto dy = gr.grad(self);
    for (Var v : {a, b}) {
      if (!gr.requires_grad(v)) continue;
      auto dv = gr.grad(v);
      for (std::size_t i = 0; i < dy.size(); ++i) dv[i] += dy[i];
    }
  });
}

Var scale(Graph& g, Var x, double s) {
  const Tensor& xv = g.value(x);
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = s * xv[i];
  return g.record(std::move(out), {x}, [x, s](Graph& gr, int self) {
    const auto dy = gr.grad(self);
    auto dx = gr.grad(x);
    for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += s * dy[i];
  });
}

namespace {

// Index map shared by depth_to_space and its inverse: deep[i] <-> wide[map[i]].
std::vector<std::size_t> shuffle_map(int c, int h, int w, int s) {
  std::vector<std::size_t> map(static_cast<std::size_t>(c) * s * s * h * w);
  const int ow = w * s, oh = h * s;
  std::size_t i = 0;
  for (int cc = 0; cc < c; ++cc) {
    for (int dy = 0; dy < s; ++dy) {
      for (int dx = 0; dx < s; ++dx) {
        for (int y = 0; y < h; ++y) {
          for (int x = 0; x < w; ++x) {
            map[i++] = (static_cast<std::size_t>(cc) * oh + (y * s + dy)) * ow + (x * s + dx);
          }
        }
      }
    }
  }
  return map;
}

}  // namespace

Var depth_to_space(Graph& g, Var x, int s) {
  const Tensor& xv = g.value(x);
  require_chw(xv, "depth_to_space");
  require(s >= 1 && xv.dim(0) % (s * s) == 0, "depth_to_space: channels not divisible by s^2");
  const int c = xv.dim(0) / (s * s), h = xv.dim(1), w = xv.dim(2);
  auto map = std::make_shared<std::vector<std::size_t>>(shuffle_map(c, h, w, s));
  Tensor out({c, h * s, w * s});
  for (std::size_t i = 0; i < map->size(); ++i) out[(*map)[i]] = xv[i];
  return g.record(std::move(out), {x}, [x, map](Graph& gr, int self) {
    const auto dy = gr.grad(self);
    auto dx = gr.grad(x);
    for (std::size_t i = 0; i < map->size(); ++i) dx[i] += dy[(*map)[i]];
  });
}

Var space_to_depth(Graph& g, Var x, int s) {
  const Tensor& xv = g.value(x);
  require_chw(xv, "space_to_depth");
  require(s >= 1 && xv.dim(1) % s == 0 && xv.dim(2) % s == 0,
          "space_to_depth: spatial size not divisible by s");
  const int c = xv.dim(0), h = xv.dim(1) / s, w = xv.dim(2) / s;
  auto map = std::make_shared<std::vector<std::size_t>>(shuffle_map(c, h, w, s));
  Tensor out({c * s * s, h, w});
  for (std::size_t i = 0; i < map->size(); ++i) out[i] = xv[(*map)[i]];
  return g.record(std::move(out), {x}, [x, map](Graph& gr, int self) {
    const auto dy = gr.grad(self);
    auto dx = gr.grad(x);
    for (std::size_t i = 0; i < map->size(); ++i) dx[(*map)[i]] += dy[i];
  });
}

Var concat_channels(Graph& g, const std::vector<Var>& xs) {
  require(!xs.empty(), "concat_channels: no inputs");
  const Tensor& first = g.value(xs.front());
  require_chw(first, "concat_channels");
  int channels = 0;
  for (Var v : xs) {
    const Tensor& t = g.value(v);
    require_chw(t, "concat_channels");
    require(t.dim(1) == first.dim(1) && t.dim(2) == first.dim(2), "concat_channels: spatial size");
    channels += t.dim(0);
  }
  Tensor out({channels, first.dim(1), first.dim(2)});
  std::size_t at = 0;
  for (Var v : xs) {
    const Tensor& t = g.value(v);
    std::copy(t.storage().begin(), t.storage().end(), out.storage().begin() + static_cast<std::ptrdiff_t>(at));
    at += t.size();
  }
  return g.record(std::move(out), xs, [xs](Graph& gr, int self) {
    const auto dy = gr.grad(self);
    std::size_t at = 0;
    for (Var v : xs) {
      const std::size_t n = gr.value(v).size();
      if (gr.requires_grad(v)) {
        auto dv = gr.grad(v);
        for (std::size_t i = 0; i < n; ++i) dv[i] += dy[at + i];
      }
      at += n;
    }
  });
}

Var channel_slice(Graph& g, Var x, int first, int count) {
  const Tensor& xv = g.value(x);
  require_chw(xv, "channel_slice");
  require(first >= 0 && count > 0 && first + count <= xv.dim(0), "channel_slice: range");
  const std::size_t plane = static_cast<std::size_t>(xv.dim(1)) * xv.dim(2);
  Tensor out({count, xv.dim(1), xv.dim(2)});
  std::copy_n(xv.data() + first * plane, count * plane, out.data());
  return g.record(std::move(out), {x}, [x, first, plane](Graph& gr, int self) {
    const auto dy = gr.grad(self);
    auto dx = gr.grad(x);
    for (std::size_t i = 0; i < dy.size(); ++i) dx[first * plane + i] += dy[i];
  });
}

Var apply_mask(Graph& g, Var x, const Mask& m) {
  const Tensor& xv = g.value(x);
  require_chw(xv, "apply_mask");
  require(m.height() == xv.dim(1) && m.width() == xv.dim(2), "apply_mask: mask size");
  auto keep = std::make_shared<std::vector<std::uint8_t>>(m.data());
  const std::size_t plane = keep->size();
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = (*keep)[i % plane] ? xv[i] : 0.0;
  return g.record(std::move(out), {x}, [x, keep, plane](Graph& gr, int self) {
    const auto dy = gr.grad(self);
    auto dx = gr.grad(x);
    for (std::size_t i = 0; i < dy.size(); ++i) {
      if ((*keep)[i % plane]) dx[i] += dy[i];
    }
  });
}

Var broadcast_mul(Graph& g, Var w, Var x) {
  const Tensor& wv = g.value(w);
  const Tensor& xv = g.value(x);
  require_chw(xv, "broadcast_mul");
  require(wv.rank() == 3 && wv.dim(0) == 1 && wv.dim(1) == xv.dim(1) && wv.dim(2) == xv.dim(2),
          "broadcast_mul: weight must be [1,H,W]");
  const std::size_t plane = wv.size();
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = wv[i % plane] * xv[i];
  return g.record(std::move(out), {w, x}, [w, x, plane](Graph& gr, int self) {
    const auto dy = gr.grad(self);
    const Tensor& wv = gr.value(w);
    const Tensor& xv = gr.value(x);
    if (gr.requires_grad(w)) {
      auto dw = gr.grad(w);
      for (std::size_t i = 0; i < dy.size(); ++i) dw[i % plane] += dy[i] * xv[i];
    }
    if (gr.requires_grad(x)) {
      auto dx = gr.grad(x);
      for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i] * wv[i % plane];
    }
  });
}

Var sum(Graph& g, Var x) {
  const Tensor& xv = g.value(x);
  double s = 0.0;
  for (double v : xv.values()) s += v;
  return g.record(Tensor::scalar(s), {x}, [x](Graph& gr, int self) {
    const double dy = gr.grad(self)[0];
    for (double& d : gr.grad(x)) d += dy;
  });
}

Var dot(Graph& g, Var x, const Tensor& r) {
  const Tensor& xv = g.value(x);
  require(xv.size() == r.size(), "dot: size mismatch");
  auto coeff = std::make_shared<Tensor>(r);
  double s = 0.0;
  for (std::size_t i = 0; i < xv.size(); ++i) s += r[i] * xv[i];
  return g.record(Tensor::scalar(s), {x}, [x, coeff](Graph& gr, int self) {
    const double dy = gr.grad(self)[0];
    auto dx = gr.grad(x);
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dy * (*coeff)[i];
  });
}

Var square_sum(Graph& g, Var x) {
  const Tensor& xv = g.value(x);
  double s = 0.0;
  for (double v : xv.values()) s += v * v;
  return g.record(Tensor::scalar(s), {x}, [x](Graph& gr, int self) {
    const double dy = gr.grad(self)[0];
    const Tensor& xv = gr.value(x);
    auto dx = gr.grad(x);
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += 2.0 * dy * xv[i];
  });
}

Var mean(Graph& g, const std::vector<Var>& scalars) {
  require(!scalars.empty(), "mean: no inputs");
  double s = 0.0;
  for (Var v : scalars) {
    require(g.value(v).size() == 1, "mean: inputs must be scalars");
    s += g.value(v)[0];
  }
  const double inv = 1.0 / static_cast<double>(scalars.size());
  return g.record(Tensor::scalar(s * inv), scalars, [scalars, inv](Graph& gr, int self) {
    const double dy = gr.grad(self)[0];
    for (Var v : scalars) {
      if (gr.requires_grad(v)) gr.grad(v)[0] += dy * inv;
    }
  });
}

Var masked_l1(Graph& g, Var pred, const Tensor& target, const Mask& m) {
  const Tensor& pv = g.value(pred);
  require_chw(pv, "masked_l1");
  require(target.shape() == pv.shape(), "masked_l1: target shape");
  require(m.height() == pv.dim(1) && m.width() == pv.dim(2), "masked_l1: mask size");
  const std::size_t valid = m.count();
  if (valid == 0) throw Error(ErrorKind::kEmptyMask, "masked_l1 with an empty mask");
  const std::size_t plane = m.size();
  const double norm = 1.0 / (static_cast<double>(valid) * pv.dim(0));

  auto sign = std::make_shared<std::vector<double>>(pv.size(), 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < pv.size(); ++i) {
    if (!m[i % plane]) continue;
    const double d = pv[i] - target[i];
    total += std::abs(d);
    (*sign)[i] = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
  }
  return g.record(Tensor::scalar(total * norm), {pred}, [pred, sign, norm](Graph& gr, int self) {
    const double dy = gr.grad(self)[0] * norm;
    auto dp = gr.grad(pred);
    for (std::size_t i = 0; i < dp.size(); ++i) dp[i] += dy * (*sign)[i];
  });
}

Var window_gather(Graph& g, Var feat, Var kernels, std::shared_ptr<const WindowPlan> plan) {
  const Tensor& fv = g.value(feat);
  const Tensor& kv = g.value(kernels);
  require_chw(fv, "window_gather");
  require(fv.dim(1) == plan->src.height && fv.dim(2) == plan->src.width,
          "window_gather: feature size does not match plan");
  const int channels = fv.dim(0);
  const std::size_t n = plan->pixels.size();
  require(kv.rank() == 2 && static_cast<std::size_t>(kv.dim(0)) == n &&
              (kv.dim(1) == kWindowTaps || kv.dim(1) == channels * kWindowTaps),
          "window_gather: kernels must be [P, 9] or [P, C*9], got " + shape_string(kv.shape()));
  const bool depthwise = kv.dim(1) != kWindowTaps || channels == 1;
  const int kstride = kv.dim(1);
  const std::size_t src_area = static_cast<std::size_t>(plan->src.width) * plan->src.height;
  const std::size_t dst_area = static_cast<std::size_t>(plan->dst.width) * plan->dst.height;

  Tensor out({channels, plan->dst.height, plan->dst.width});
  for (std::size_t p = 0; p < n; ++p) {
    const auto& taps = plan->taps[p];
    const double* krow = kv.data() + p * kstride;
    for (int c = 0; c < channels; ++c) {
      const double* k = krow + (depthwise ? c * kWindowTaps : 0);
      const double* f = fv.data() + c * src_area;
      double acc = 0.0;
      for (int t = 0; t < kWindowTaps; ++t) acc += k[t] * f[taps[t]];
      out[c * dst_area + plan->pixels[p]] = acc;
    }
  }
  return g.record(std::move(out), {feat, kernels},
                  [feat, kernels, plan, channels, depthwise, kstride, src_area, dst_area](Graph& gr,
                                                                                         int self) {
    const auto dy = gr.grad(self);
    const Tensor& fv = gr.value(feat);
    const Tensor& kv = gr.value(kernels);
    const bool want_f = gr.requires_grad(feat);
    const bool want_k = gr.requires_grad(kernels);
    double* df = want_f ? gr.grad(feat).data() : nullptr;
    double* dk = want_k ? gr.grad(kernels).data() : nullptr;
    for (std::size_t p = 0; p < plan->pixels.size(); ++p) {
      const auto& taps = plan->taps[p];
      for (int c = 0; c < channels; ++c) {
        const double g_out = dy[c * dst_area + plan->pixels[p]];
        if (g_out == 0.0) continue;
        const std::size_t koff = p * kstride + (depthwise ? c * kWindowTaps : 0);
        const double* f = fv.data() + c * src_area;
        for (int t = 0; t < kWindowTaps; ++t) {
          if (dk) dk[koff + t] += g_out * f[taps[t]];
          if (df) df[c * src_area + taps[t]] += g_out * kv[koff + t];
        }
      }
    }
  });
}

}  // namespace warpcore::nn
