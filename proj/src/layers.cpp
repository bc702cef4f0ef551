// SPDX-License-Identifier: Apache-2.0
#include "domaingame/layers.hpp"

#include <cstring>

#include <Eigen/Core>

namespace domaingame::inline DOMAINGAME_ABI::nn {

namespace {

using Mat = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<Mat>;
using CMapMat = Eigen::Map<const Mat>;

MapMat as_mat(Tensor& t, Eigen::Index rows, Eigen::Index cols) { return MapMat(t.data(), rows, cols); }
CMapMat as_mat(const Tensor& t, Eigen::Index rows, Eigen::Index cols) { return CMapMat(t.data(), rows, cols); }

struct ConvGeom {
    int cin, n, h, w, k, stride, pad, ho, wo;
    Eigen::Index rows() const { return static_cast<Eigen::Index>(cin) * k * k; }
    Eigen::Index cols() const { return static_cast<Eigen::Index>(n) * ho * wo; }
};

// Eigen's vectorised reductions split at the first aligned address, so their
// summation order depends on where the buffer landed. Fixed order instead.
Real row_sum(const Tensor& t, int row, Eigen::Index cols)
{
    const Real* p = t.data() + static_cast<std::size_t>(row) * static_cast<std::size_t>(cols);
    Real acc = 0;
    for (Eigen::Index i = 0; i < cols; ++i) acc += p[i];
    return acc;
}

ConvGeom conv_geom(const std::vector<int>& in_shape, int k, int stride)
{
    if (in_shape.size() != 4) throw ShapeError("conv2d expects {C,N,H,W}, got " + shape_string(in_shape));
    ConvGeom g{in_shape[0], in_shape[1], in_shape[2], in_shape[3], k, stride, k / 2, 0, 0};
    g.ho = (g.h + 2 * g.pad - k) / stride + 1;
    g.wo = (g.w + 2 * g.pad - k) / stride + 1;
    return g;
}

void im2col(const Tensor& x, const ConvGeom& g, Tensor& col)
{
    col = Tensor({static_cast<int>(g.rows()), static_cast<int>(g.cols())});
    Real* out = col.data();
    const Real* in = x.data();
    for (int c = 0; c < g.cin; ++c) {
        for (int ky = 0; ky < g.k; ++ky) {
            for (int kx = 0; kx < g.k; ++kx) {
                for (int n = 0; n < g.n; ++n) {
                    const Real* plane = in + (static_cast<std::size_t>(c) * g.n + n) * g.h * g.w;
                    for (int oy = 0; oy < g.ho; ++oy) {
                        const int iy = oy * g.stride + ky - g.pad;
                        if (iy < 0 || iy >= g.h) {
                            std::memset(out, 0, sizeof(Real) * static_cast<std::size_t>(g.wo));
                            out += g.wo;
                            continue;
                        }
                        const Real* row = plane + static_cast<std::size_t>(iy) * g.w;
                        for (int ox = 0; ox < g.wo; ++ox) {
                            const int ix = ox * g.stride + kx - g.pad;
                            *out++ = (ix >= 0 && ix < g.w) ? row[ix] : Real(0);
                        }
                    }
                }
            }
        }
    }
}

void col2im(const Tensor& col, const ConvGeom& g, Tensor& dx)
{
    const Real* src = col.data();
    Real* out = dx.data();
    for (int c = 0; c < g.cin; ++c) {
        for (int ky = 0; ky < g.k; ++ky) {
            for (int kx = 0; kx < g.k; ++kx) {
                for (int n = 0; n < g.n; ++n) {
                    Real* plane = out + (static_cast<std::size_t>(c) * g.n + n) * g.h * g.w;
                    for (int oy = 0; oy < g.ho; ++oy) {
                        const int iy = oy * g.stride + ky - g.pad;
                        if (iy < 0 || iy >= g.h) {
                            src += g.wo;
                            continue;
                        }
                        Real* row = plane + static_cast<std::size_t>(iy) * g.w;
                        for (int ox = 0; ox < g.wo; ++ox) {
                            const int ix = ox * g.stride + kx - g.pad;
                            if (ix >= 0 && ix < g.w) row[ix] += *src;
                            ++src;
                        }
                    }
                }
            }
        }
    }
}

} // namespace

std::size_t ParamSet::add(std::string name, std::vector<int> shape)
{
    names.push_back(std::move(name));
    tensors.emplace_back(std::move(shape));
    return tensors.size() - 1;
}

std::size_t ParamSet::parameter_count() const
{
    std::size_t n = 0;
    for (const auto& t : tensors) n += t.size();
    return n;
}

ParamSet ParamSet::zeros_like() const
{
    ParamSet out;
    out.names = names;
    for (const auto& t : tensors) out.tensors.emplace_back(t.shape());
    return out;
}

void ParamSet::set_zero()
{
    for (auto& t : tensors) t.fill(Real(0));
}

std::uint64_t ParamSet::hash() const
{
    std::uint64_t h = 1469598103934665603ULL;
    auto feed = [&h](const void* p, std::size_t n) {
        const auto* b = static_cast<const unsigned char*>(p);
        for (std::size_t i = 0; i < n; ++i) {
            h ^= b[i];
            h *= 1099511628211ULL;
        }
    };
    for (std::size_t i = 0; i < tensors.size(); ++i) {
        feed(names[i].data(), names[i].size());
        feed(tensors[i].shape().data(), tensors[i].shape().size() * sizeof(int));
        feed(tensors[i].data(), tensors[i].size() * sizeof(Real));
    }
    return h;
}

Tensor conv2d(const Tensor& weight, const Tensor& bias, const Tensor& x, int stride, ConvCache* cache)
{
    const int cout = weight.dim(0);
    const int k = weight.dim(2);
    const auto g = conv_geom(x.shape(), k, stride);
    if (weight.dim(1) != g.cin) {
        throw ShapeError("conv2d: weight expects " + std::to_string(weight.dim(1)) + " input channels, got " +
                         std::to_string(g.cin));
    }
    Tensor out({cout, g.n, g.ho, g.wo});
    auto y = as_mat(out, cout, g.cols());
    const auto wm = as_mat(weight, cout, g.rows());
    const bool pointwise = (k == 1 && stride == 1);
    if (pointwise) {
        y.noalias() = wm * as_mat(x, g.rows(), g.cols());
        if (cache) {
            cache->in_shape = x.shape();
            cache->col = x;
        }
    } else {
        Tensor local;
        Tensor& col = cache ? cache->col : local;
        im2col(x, g, col);
        y.noalias() = wm * as_mat(col, g.rows(), g.cols());
        if (cache) cache->in_shape = x.shape();
    }
    for (int c = 0; c < cout; ++c) y.row(c).array() += bias[static_cast<std::size_t>(c)];
    return out;
}

Tensor conv2d_backward(const Tensor& weight, int stride, const ConvCache& cache, const Tensor& dy, Tensor& dweight,
                       Tensor& dbias, bool need_dx)
{
    const int cout = weight.dim(0);
    const int k = weight.dim(2);
    const auto g = conv_geom(cache.in_shape, k, stride);
    const auto dym = as_mat(dy, cout, g.cols());
    const auto colm = as_mat(cache.col, g.rows(), g.cols());
    as_mat(dweight, cout, g.rows()).noalias() += dym * colm.transpose();
    for (int c = 0; c < cout; ++c) dbias[static_cast<std::size_t>(c)] += row_sum(dy, c, g.cols());
    if (!need_dx) return {};

    Tensor dx(cache.in_shape);
    const auto wm = as_mat(weight, cout, g.rows());
    if (k == 1 && stride == 1) {
        as_mat(dx, g.rows(), g.cols()).noalias() = wm.transpose() * dym;
    } else {
        Tensor dcol({static_cast<int>(g.rows()), static_cast<int>(g.cols())});
        as_mat(dcol, g.rows(), g.cols()).noalias() = wm.transpose() * dym;
        col2im(dcol, g, dx);
    }
    return dx;
}

Tensor conv_transpose2x2(const Tensor& weight, const Tensor& bias, const Tensor& x)
{
    const int cin = x.dim(0), n = x.dim(1), h = x.dim(2), w = x.dim(3);
    const int cout = weight.dim(1);
    if (weight.dim(0) != cin) throw ShapeError("conv_transpose2x2: input channel mismatch");
    const Eigen::Index p = static_cast<Eigen::Index>(n) * h * w;
    Mat tmp = as_mat(weight, cin, cout * 4).transpose() * as_mat(x, cin, p);
    Tensor out({cout, n, 2 * h, 2 * w});
    for (int co = 0; co < cout; ++co) {
        const Real b = bias[static_cast<std::size_t>(co)];
        for (int d = 0; d < 4; ++d) {
            const int dy = d / 2, dx = d % 2;
            const Real* src = tmp.data() + static_cast<std::size_t>(co * 4 + d) * p;
            for (int s = 0; s < n; ++s) {
                Real* plane = out.data() + (static_cast<std::size_t>(co) * n + s) * 4 * h * w;
                for (int y = 0; y < h; ++y) {
                    Real* row = plane + static_cast<std::size_t>(2 * y + dy) * 2 * w;
                    for (int xx = 0; xx < w; ++xx) row[2 * xx + dx] = *src++ + b;
                }
            }
        }
    }
    return out;
}

Tensor conv_transpose2x2_backward(const Tensor& weight, const Tensor& x, const Tensor& dy, Tensor& dweight,
                                  Tensor& dbias)
{
    const int cin = x.dim(0), n = x.dim(1), h = x.dim(2), w = x.dim(3);
    const int cout = weight.dim(1);
    const Eigen::Index p = static_cast<Eigen::Index>(n) * h * w;
    Mat dtmp(cout * 4, p);
    for (int co = 0; co < cout; ++co) {
        Real bsum = 0;
        for (int d = 0; d < 4; ++d) {
            const int oy = d / 2, ox = d % 2;
            Real* dst = dtmp.data() + static_cast<std::size_t>(co * 4 + d) * p;
            for (int s = 0; s < n; ++s) {
                const Real* plane = dy.data() + (static_cast<std::size_t>(co) * n + s) * 4 * h * w;
                for (int y = 0; y < h; ++y) {
                    const Real* row = plane + static_cast<std::size_t>(2 * y + oy) * 2 * w;
                    for (int xx = 0; xx < w; ++xx) {
                        const Real v = row[2 * xx + ox];
                        *dst++ = v;
                        bsum += v;
                    }
                }
            }
        }
        dbias[static_cast<std::size_t>(co)] += bsum;
    }
    const auto xm = as_mat(x, cin, p);
    as_mat(dweight, cin, cout * 4).noalias() += xm * dtmp.transpose();
    Tensor dx(x.shape());
    as_mat(dx, cin, p).noalias() = as_mat(weight, cin, cout * 4) * dtmp;
    return dx;
}

void leaky_relu_inplace(Tensor& x)
{
    for (auto& v : x.values()) v = v > Real(0) ? v : v * kLeakySlope;
}

void leaky_relu_backward_inplace(const Tensor& y, Tensor& dy)
{
    const Real* yp = y.data();
    Real* dp = dy.data();
    for (std::size_t i = 0; i < dy.size(); ++i) {
        if (!(yp[i] > Real(0))) dp[i] *= kLeakySlope;
    }
}

Tensor global_avg_pool(const Tensor& x)
{
    const int c = x.dim(0), n = x.dim(1);
    const std::size_t hw = static_cast<std::size_t>(x.dim(2)) * static_cast<std::size_t>(x.dim(3));
    Tensor out({c, n});
    for (std::size_t i = 0; i < out.size(); ++i) {
        const Real* p = x.data() + i * hw;
        double s = 0;
        for (std::size_t k = 0; k < hw; ++k) s += p[k];
        out[i] = static_cast<Real>(s / static_cast<double>(hw));
    }
    return out;
}

Tensor global_avg_pool_backward(const std::vector<int>& in_shape, const Tensor& dy)
{
    Tensor dx(in_shape);
    const std::size_t hw = static_cast<std::size_t>(in_shape[2]) * static_cast<std::size_t>(in_shape[3]);
    const Real inv = Real(1) / static_cast<Real>(hw);
    for (std::size_t i = 0; i < dy.size(); ++i) {
        Real* p = dx.data() + i * hw;
        const Real v = dy[i] * inv;
        for (std::size_t k = 0; k < hw; ++k) p[k] = v;
    }
    return dx;
}

Tensor linear(const Tensor& weight, const Tensor& bias, const Tensor& x)
{
    const int out_dim = weight.dim(0), in_dim = weight.dim(1), n = x.dim(1);
    if (x.dim(0) != in_dim) throw ShapeError("linear: input dimension mismatch");
    Tensor out({out_dim, n});
    auto y = as_mat(out, out_dim, n);
    y.noalias() = as_mat(weight, out_dim, in_dim) * as_mat(x, in_dim, n);
    for (int o = 0; o < out_dim; ++o) y.row(o).array() += bias[static_cast<std::size_t>(o)];
    return out;
}

Tensor linear_backward(const Tensor& weight, const Tensor& x, const Tensor& dy, Tensor& dweight, Tensor& dbias)
{
    const int out_dim = weight.dim(0), in_dim = weight.dim(1), n = x.dim(1);
    const auto dym = as_mat(dy, out_dim, n);
    as_mat(dweight, out_dim, in_dim).noalias() += dym * as_mat(x, in_dim, n).transpose();
    for (int o = 0; o < out_dim; ++o) dbias[static_cast<std::size_t>(o)] += row_sum(dy, o, n);
    Tensor dx({in_dim, n});
    as_mat(dx, in_dim, n).noalias() = as_mat(weight, out_dim, in_dim).transpose() * dym;
    return dx;
}

Tensor film(const Tensor& x, const Tensor& scale, const Tensor& shift)
{
    Tensor out(x.shape());
    const std::size_t hw = static_cast<std::size_t>(x.dim(2)) * static_cast<std::size_t>(x.dim(3));
    for (std::size_t i = 0; i < scale.size(); ++i) {
        const Real a = Real(1) + scale[i];
        const Real b = shift[i];
        const Real* src = x.data() + i * hw;
        Real* dst = out.data() + i * hw;
        for (std::size_t k = 0; k < hw; ++k) dst[k] = src[k] * a + b;
    }
    return out;
}

Tensor film_backward(const Tensor& x, const Tensor& scale, const Tensor& dy, Tensor& dscale, Tensor& dshift)
{
    Tensor dx(x.shape());
    dscale = Tensor(scale.shape());
    dshift = Tensor(scale.shape());
    const std::size_t hw = static_cast<std::size_t>(x.dim(2)) * static_cast<std::size_t>(x.dim(3));
    for (std::size_t i = 0; i < scale.size(); ++i) {
        const Real a = Real(1) + scale[i];
        const Real* src = x.data() + i * hw;
        const Real* g = dy.data() + i * hw;
        Real* dst = dx.data() + i * hw;
        Real ds = 0, db = 0;
        for (std::size_t k = 0; k < hw; ++k) {
            dst[k] = g[k] * a;
            ds += g[k] * src[k];
            db += g[k];
        }
        dscale[i] = ds;
        dshift[i] = db;
    }
    return dx;
}

void add_inplace(Tensor& a, const Tensor& b)
{
    if (a.shape() != b.shape()) throw ShapeError("add: " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
    Real* p = a.data();
    const Real* q = b.data();
    for (std::size_t i = 0; i < a.size(); ++i) p[i] += q[i];
}

Tensor take_sample(const Tensor& batch, int n)
{
    const int c = batch.dim(0), count = batch.dim(1), h = batch.dim(2), w = batch.dim(3);
    const std::size_t hw = static_cast<std::size_t>(h) * static_cast<std::size_t>(w);
    Tensor out({c, h, w});
    for (int ch = 0; ch < c; ++ch) {
        std::memcpy(out.data() + static_cast<std::size_t>(ch) * hw,
                    batch.data() + (static_cast<std::size_t>(ch) * count + n) * hw, hw * sizeof(Real));
    }
    return out;
}

void put_sample(Tensor& batch, int n, const Tensor& sample)
{
    const int c = batch.dim(0), count = batch.dim(1);
    const std::size_t hw = static_cast<std::size_t>(batch.dim(2)) * static_cast<std::size_t>(batch.dim(3));
    require_shape(sample.shape(), {c, batch.dim(2), batch.dim(3)}, "put_sample");
    for (int ch = 0; ch < c; ++ch) {
        std::memcpy(batch.data() + (static_cast<std::size_t>(ch) * count + n) * hw,
                    sample.data() + static_cast<std::size_t>(ch) * hw, hw * sizeof(Real));
    }
}

Tensor stack_samples(const std::vector<const Tensor*>& samples)
{
    if (samples.empty()) throw ShapeError("stack_samples: empty list");
    const auto& s0 = samples.front()->shape();
    if (s0.size() != 3) throw ShapeError("stack_samples expects {C,H,W}, got " + shape_string(s0));
    Tensor out({s0[0], static_cast<int>(samples.size()), s0[1], s0[2]});
    for (std::size_t i = 0; i < samples.size(); ++i) put_sample(out, static_cast<int>(i), *samples[i]);
    return out;
}

namespace {

std::size_t inner_size(const Tensor& t)
{
    std::size_t n = 1;
    for (int i = 2; i < t.rank(); ++i) n *= static_cast<std::size_t>(t.dim(i));
    return n;
}

} // namespace

Tensor slice_samples(const Tensor& batch, int begin, int count)
{
    if (batch.rank() < 2 || begin < 0 || count < 0 || begin + count > batch.dim(1)) {
        throw ShapeError("slice_samples: range [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                         ") outside batch " + shape_string(batch.shape()));
    }
    auto shape = batch.shape();
    shape[1] = count;
    Tensor out(shape);
    const std::size_t inner = inner_size(batch), c = static_cast<std::size_t>(batch.dim(0));
    const std::size_t total = static_cast<std::size_t>(batch.dim(1));
    for (std::size_t ch = 0; ch < c; ++ch) {
        std::memcpy(out.data() + ch * static_cast<std::size_t>(count) * inner,
                    batch.data() + (ch * total + static_cast<std::size_t>(begin)) * inner,
                    static_cast<std::size_t>(count) * inner * sizeof(Real));
    }
    return out;
}

void add_slice(Tensor& batch, int begin, const Tensor& part)
{
    auto expect = batch.shape();
    if (expect.size() < 2) throw ShapeError("add_slice: batch must have rank >= 2");
    expect[1] = part.rank() >= 2 ? part.dim(1) : -1;
    require_shape(part.shape(), expect, "add_slice");
    const int count = part.dim(1);
    if (begin < 0 || begin + count > batch.dim(1)) throw ShapeError("add_slice: range outside batch");
    const std::size_t inner = inner_size(batch), c = static_cast<std::size_t>(batch.dim(0));
    const std::size_t total = static_cast<std::size_t>(batch.dim(1));
    const std::size_t run = static_cast<std::size_t>(count) * inner;
    for (std::size_t ch = 0; ch < c; ++ch) {
        Real* dst = batch.data() + (ch * total + static_cast<std::size_t>(begin)) * inner;
        const Real* src = part.data() + ch * run;
        for (std::size_t k = 0; k < run; ++k) dst[k] += src[k];
    }
}

} // namespace domaingame::nn
