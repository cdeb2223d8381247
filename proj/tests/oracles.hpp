#pragma once

// Independent reference implementations used only by tests. None of these
// call into the permutation, filter-bank or convolution code they check.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "gatt/group.hpp"
#include "gatt/tensor.hpp"

namespace oracle {

using gatt::Shape;
using gatt::Tensor;

// Four nested loops, literally out(y) = sum_c sum_x f_c(x) psi_c(x - y).
inline Tensor<double> conv2d(const Tensor<double>& in, const Tensor<double>& w, bool same, std::size_t stride) {
  const long n = in.extent(0), c = in.extent(1), ny = in.extent(2), nx = in.extent(3);
  const long o = w.extent(0), k = w.extent(2);
  const long pad = same ? k / 2 : 0;
  const long oy = same ? (ny + stride - 1) / stride : (ny - k) / stride + 1;
  const long ox = same ? (nx + stride - 1) / stride : (nx - k) / stride + 1;
  Tensor<double> out({std::size_t(n), std::size_t(o), std::size_t(oy), std::size_t(ox)});
  for (long b = 0; b < n; ++b)
    for (long q = 0; q < o; ++q)
      for (long y = 0; y < oy; ++y)
        for (long x = 0; x < ox; ++x) {
          double acc = 0;
          for (long ch = 0; ch < c; ++ch)
            for (long a = 0; a < k; ++a)
              for (long d = 0; d < k; ++d) {
                const long iy = y * long(stride) + a - pad, ix = x * long(stride) + d - pad;
                if (iy < 0 || iy >= ny || ix < 0 || ix >= nx) continue;
                acc += in(b, ch, iy, ix) * w(q, ch, a, d);
              }
          out(b, q, y, x) = acc;
        }
  return out;
}

// Real-valued orthogonal matrix of a group element, rebuilt from its rotation
// angle and mirror flag rather than from the library's tables.
struct Ortho {
  double m[2][2];
};

inline Ortho element_matrix(gatt::GroupName name, std::size_t h) {
  const std::size_t rotations = name == gatt::GroupName::C1 ? 1 : name == gatt::GroupName::C2 ? 2 : 4;
  const double step = 2.0 * M_PI / double(rotations);
  const double theta = step * double(h % rotations);
  const bool mirrored = h >= rotations;
  Ortho r{{{std::cos(theta), -std::sin(theta)}, {std::sin(theta), std::cos(theta)}}};
  if (!mirrored) return r;
  // m r with m = diag(-1, 1)
  return Ortho{{{-r.m[0][0], -r.m[0][1]}, {r.m[1][0], r.m[1][1]}}};
}

// Plane transform out(p) = in(h^-1 p) about the plane centre, using the
// transpose of the real rotation matrix as the inverse.
inline std::vector<double> rotate_plane(gatt::GroupName name, std::size_t h, const std::vector<double>& plane,
                                        std::size_t n) {
  const Ortho a = element_matrix(name, h);
  std::vector<double> out(n * n);
  const double c = (double(n) - 1.0) / 2.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const double u = double(j) - c, v = c - double(i);
      const double su = a.m[0][0] * u + a.m[1][0] * v;  // transpose
      const double sv = a.m[0][1] * u + a.m[1][1] * v;
      const long sj = std::lround(su + c), si = std::lround(c - sv);
      out[i * n + j] = plane[std::size_t(si) * n + std::size_t(sj)];
    }
  return out;
}

// Literal double sum out(x, h) = sum_{x~, h~, c} f_c(x~, h~) psi_c(g^-1 g~), g = (x, h),
// evaluated with the affine-group product. Grid point (row, col) is (u, v) = (col, -row);
// kernel displacement (du, dv) sits at kernel (row, col) = (r - dv, r + du). Zero padding.
inline Tensor<double> group_conv_direct(const gatt::FiniteGroup& grp, const Tensor<double>& f,
                                        const Tensor<double>& psi) {
  const std::size_t n = f.extent(0), c = f.extent(1), hin = f.extent(2), ny = f.extent(3), nx = f.extent(4);
  const std::size_t o = psi.extent(0), k = psi.extent(3);
  const long r = long(k) / 2;
  const std::size_t nh = grp.order();
  Tensor<double> out({n, o, nh, ny, nx});
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t q = 0; q < o; ++q)
      for (std::size_t h = 0; h < nh; ++h)
        for (std::size_t y = 0; y < ny; ++y)
          for (std::size_t x = 0; x < nx; ++x) {
            const gatt::AffineElement g{{long(x), -long(y)}, h};
            const gatt::AffineElement gi = gatt::invert_affine(grp, g);
            double acc = 0;
            for (std::size_t ch = 0; ch < c; ++ch)
              for (std::size_t ht = 0; ht < hin; ++ht)
                for (std::size_t yt = 0; yt < ny; ++yt)
                  for (std::size_t xt = 0; xt < nx; ++xt) {
                    const gatt::AffineElement gt{{long(xt), -long(yt)}, hin == 1 ? 0 : ht};
                    const gatt::AffineElement d = gatt::compose_affine(grp, gi, gt);
                    const long kr = r - d.x[1], kc = r + d.x[0];
                    if (kr < 0 || kc < 0 || kr >= long(k) || kc >= long(k)) continue;
                    const std::size_t kh = hin == 1 ? 0 : d.h;
                    acc += f(b, ch, ht, yt, xt) * psi(q, ch, kh, std::size_t(kr), std::size_t(kc));
                  }
            out(b, q, h, y, x) = acc;
          }
  return out;
}

// Relabelling law of maps under g-bar = (0, hb): the value at index pair (h, h~) and
// pixel p of the transformed map equals the original at (hb^-1 h, hb^-1 h~) and hb^-1 p.
// Indices are taken from the affine inverse/compose operations; pixels use rotate_plane's
// real-matrix construction. `group_axes` lists group-valued axes; the last two axes are spatial
// when `spatial` is set.
inline Tensor<double> relabel(const gatt::FiniteGroup& grp, std::size_t hb, const Tensor<double>& t,
                              const std::vector<std::size_t>& group_axes, bool spatial) {
  const Shape& s = t.shape();
  const std::size_t rank = s.size();
  const gatt::AffineElement gbi = gatt::invert_affine(grp, {{0, 0}, hb});
  Tensor<double> out(s);
  const std::size_t plane = spatial ? s[rank - 2] * s[rank - 1] : 1;
  const std::size_t lead = spatial ? rank - 2 : rank;
  std::vector<std::size_t> idx(lead, 0);
  const std::size_t outer = t.size() / plane;
  auto strides = gatt::strides_of(s);
  for (std::size_t ob = 0; ob < outer; ++ob) {
    std::size_t src = 0;
    for (std::size_t ax = 0; ax < lead; ++ax) {
      std::size_t v = idx[ax];
      for (std::size_t g : group_axes)
        if (g == ax && s[ax] > 1) v = gatt::compose_affine(grp, gbi, {{0, 0}, v}).h;
      src += v * strides[ax];
    }
    if (spatial) {
      const std::size_t n = s[rank - 1];
      std::vector<double> p(t.data().begin() + long(src), t.data().begin() + long(src + plane));
      auto q = rotate_plane(grp.name(), hb, p, n);
      std::copy(q.begin(), q.end(), out.data().begin() + long(ob * plane));
    } else {
      out[ob] = t[src];
    }
    for (std::size_t ax = lead; ax-- > 0;) {
      if (++idx[ax] < s[ax]) break;
      idx[ax] = 0;
    }
  }
  return out;
}

inline void put_be32(std::vector<unsigned char>& b, std::uint32_t v) {
  b.push_back((v >> 24) & 0xff);
  b.push_back((v >> 16) & 0xff);
  b.push_back((v >> 8) & 0xff);
  b.push_back(v & 0xff);
}

inline void write_bytes(const std::string& path, const std::vector<unsigned char>& bytes) {
  std::ofstream out(path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
}

// Minimal P5 reader: header tokens, single whitespace, then raw bytes.
struct Pgm {
  std::size_t width = 0, height = 0, maxval = 0;
  std::vector<unsigned char> pixels;
};

inline Pgm read_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  Pgm p;
  std::string magic;
  in >> magic >> p.width >> p.height >> p.maxval;
  in.get();
  p.pixels.resize(p.width * p.height);
  in.read(reinterpret_cast<char*>(p.pixels.data()), std::streamsize(p.pixels.size()));
  if (magic != "P5" || !in) p.pixels.clear();
  return p;
}

}  // namespace oracle
