#pragma once

#include <algorithm>
#include <cmath>
#include <utility>

#include "voxsyn/rng.hpp"
#include "voxsyn/tensor.hpp"

// Low-level kernels on (B, C, D, H, W) tensors. Every forward has a matching
// backward; gradients accumulate into parameter-grad tensors and input grads
// are returned by value.

namespace voxsyn::ops {

struct ConvGeom {
    Index k = 3, stride = 1, pad = 1;
    // floor semantics; exact halving along the U-Net path is enforced by the
    // backbone's spatial validation
    Index out_extent(Index n) const { return (n + 2 * pad - k) / stride + 1; }
};

// im2col buffer capped around 32 MB of doubles; larger volumes are processed
// in chunks of output positions.
inline constexpr Index kConvChunkElems = Index(1) << 22;

template <typename S>
void im2col_chunk(const TensorT<S>& x, Index b, const ConvGeom& g, Index n0, Index nc,
                  Index oh, Index ow,
                  Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>& col) {
    const Index C = x.dim(1), D = x.dim(2), H = x.dim(3), W = x.dim(4);
    col.setZero();
    Index row = 0;
    for (Index c = 0; c < C; ++c) {
        for (Index kd = 0; kd < g.k; ++kd) {
            for (Index kh = 0; kh < g.k; ++kh) {
                for (Index kw = 0; kw < g.k; ++kw, ++row) {
                    for (Index n = 0; n < nc; ++n) {
                        const Index p = n0 + n;
                        const Index z = (p / (oh * ow)) * g.stride + kd - g.pad;
                        const Index y = ((p / ow) % oh) * g.stride + kh - g.pad;
                        const Index xw = (p % ow) * g.stride + kw - g.pad;
                        if (z < 0 || z >= D || y < 0 || y >= H || xw < 0 || xw >= W) continue;
                        col(row, n) = x(b, c, z, y, xw);
                    }
                }
            }
        }
    }
}

template <typename S>
void col2im_add_chunk(TensorT<S>& dx, Index b, const ConvGeom& g, Index n0, Index nc,
                      Index oh, Index ow,
                      const Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>& dcol) {
    const Index C = dx.dim(1), D = dx.dim(2), H = dx.dim(3), W = dx.dim(4);
    Index row = 0;
    for (Index c = 0; c < C; ++c) {
        for (Index kd = 0; kd < g.k; ++kd) {
            for (Index kh = 0; kh < g.k; ++kh) {
                for (Index kw = 0; kw < g.k; ++kw, ++row) {
                    for (Index n = 0; n < nc; ++n) {
                        const Index p = n0 + n;
                        const Index z = (p / (oh * ow)) * g.stride + kd - g.pad;
                        const Index y = ((p / ow) % oh) * g.stride + kh - g.pad;
                        const Index xw = (p % ow) * g.stride + kw - g.pad;
                        if (z < 0 || z >= D || y < 0 || y >= H || xw < 0 || xw >= W) continue;
                        dx(b, c, z, y, xw) += dcol(row, n);
                    }
                }
            }
        }
    }
}

// x: (B, Cin, D, H, W), w: (Cout, Cin, k, k, k), bias: (Cout) -> (B, Cout, oD, oH, oW)
template <typename S>
TensorT<S> conv3d_forward(const TensorT<S>& x, const TensorT<S>& w, const TensorT<S>& bias,
                          const ConvGeom& g) {
    const Index B = x.dim(0), Cin = x.dim(1), D = x.dim(2), H = x.dim(3), W = x.dim(4);
    const Index Cout = w.dim(0);
    if (w.dim(1) != Cin)
        throw ShapeError("conv3d: input channels " + std::to_string(Cin) + " != kernel channels " +
                         std::to_string(w.dim(1)));
    const Index od = g.out_extent(D), oh = g.out_extent(H), ow = g.out_extent(W);
    if (od < 1 || oh < 1 || ow < 1)
        throw ShapeError("conv3d: input " + x.shape_str() + " too small for kernel " +
                         std::to_string(g.k));
    const Index N = od * oh * ow;
    const Index K = Cin * g.k * g.k * g.k;
    TensorT<S> out({B, Cout, od, oh, ow});

    using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    auto wmat = w.matrix(Cout, K);
    const Index chunk = std::max<Index>(1, std::min(N, kConvChunkElems / std::max<Index>(1, K)));
    Mat col(K, chunk);
    for (Index b = 0; b < B; ++b) {
        auto ymat = Eigen::Map<Mat>(out.data() + b * Cout * N, Cout, N);
        for (Index n0 = 0; n0 < N; n0 += chunk) {
            const Index nc = std::min(chunk, N - n0);
            im2col_chunk(x, b, g, n0, nc, oh, ow, col);
            ymat.middleCols(n0, nc).noalias() = wmat * col.leftCols(nc);
        }
        for (Index c = 0; c < Cout; ++c) ymat.row(c).array() += bias[c];
    }
    return out;
}

// Accumulates dw/db; returns dx.
template <typename S>
TensorT<S> conv3d_backward(const TensorT<S>& x, const TensorT<S>& w, const TensorT<S>& dy,
                           const ConvGeom& g, TensorT<S>& dw, TensorT<S>& db) {
    const Index B = x.dim(0), Cin = x.dim(1);
    const Index Cout = w.dim(0);
    const Index od = dy.dim(2), oh = dy.dim(3), ow = dy.dim(4);
    const Index N = od * oh * ow;
    const Index K = Cin * g.k * g.k * g.k;
    TensorT<S> dx = TensorT<S>::zeros(x.dims());

    using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    auto wmat = w.matrix(Cout, K);
    auto dwmat = dw.matrix(Cout, K);
    const Index chunk = std::max<Index>(1, std::min(N, kConvChunkElems / std::max<Index>(1, K)));
    Mat col(K, chunk), dcol(K, chunk);
    for (Index b = 0; b < B; ++b) {
        auto dymat = Eigen::Map<const Mat>(dy.data() + b * Cout * N, Cout, N);
        for (Index n0 = 0; n0 < N; n0 += chunk) {
            const Index nc = std::min(chunk, N - n0);
            im2col_chunk(x, b, g, n0, nc, oh, ow, col);
            dwmat.noalias() += dymat.middleCols(n0, nc) * col.leftCols(nc).transpose();
            dcol.leftCols(nc).noalias() = wmat.transpose() * dymat.middleCols(n0, nc);
            col2im_add_chunk(dx, b, g, n0, nc, oh, ow, dcol);
        }
        for (Index c = 0; c < Cout; ++c) db[c] += dymat.row(c).sum();
    }
    return dx;
}

// x: (N, in), w: (out, in), b: (out) -> (N, out)
template <typename S>
TensorT<S> linear_forward(const TensorT<S>& x, const TensorT<S>& w, const TensorT<S>& b) {
    const Index N = x.dim(0), in = x.dim(1), out = w.dim(0);
    if (w.dim(1) != in)
        throw ShapeError("linear: input dim " + std::to_string(in) + " != weight dim " +
                         std::to_string(w.dim(1)));
    TensorT<S> y({N, out});
    y.matrix(N, out).noalias() = x.matrix(N, in) * w.matrix(out, in).transpose();
    for (Index i = 0; i < N; ++i)
        for (Index j = 0; j < out; ++j) y(i, j) += b[j];
    return y;
}

template <typename S>
TensorT<S> linear_backward(const TensorT<S>& x, const TensorT<S>& w, const TensorT<S>& dy,
                           TensorT<S>& dw, TensorT<S>& db) {
    const Index N = x.dim(0), in = x.dim(1), out = w.dim(0);
    dw.matrix(out, in).noalias() += dy.matrix(N, out).transpose() * x.matrix(N, in);
    for (Index i = 0; i < N; ++i)
        for (Index j = 0; j < out; ++j) db[j] += dy(i, j);
    TensorT<S> dx({N, in});
    dx.matrix(N, in).noalias() = dy.matrix(N, out) * w.matrix(out, in);
    return dx;
}

template <typename S>
struct GroupNormCacheT {
    TensorT<S> mean;
    TensorT<S> invstd;
};

template <typename S>
TensorT<S> groupnorm_forward(const TensorT<S>& x, const TensorT<S>& gamma, const TensorT<S>& beta,
                             Index groups, S eps, GroupNormCacheT<S>& cache) {
    const Index B = x.dim(0), C = x.dim(1);
    const Index spatial = x.size() / (B * C);
    if (C % groups != 0)
        throw ShapeError("groupnorm: channels " + std::to_string(C) + " not divisible by groups " +
                         std::to_string(groups));
    const Index cpg = C / groups;
    const Index m = cpg * spatial;
    cache.mean.resize({B, groups});
    cache.invstd.resize({B, groups});
    TensorT<S> y(x.dims());
    for (Index b = 0; b < B; ++b) {
        for (Index gi = 0; gi < groups; ++gi) {
            const S* px = x.data() + (b * C + gi * cpg) * spatial;
            Eigen::Map<const Eigen::Array<S, Eigen::Dynamic, 1>> xa(px, m);
            const S mean = xa.mean();
            const S var = (xa - mean).square().sum() / static_cast<S>(m);
            const S invstd = S(1) / std::sqrt(var + eps);
            cache.mean(b, gi) = mean;
            cache.invstd(b, gi) = invstd;
            for (Index cc = 0; cc < cpg; ++cc) {
                const Index c = gi * cpg + cc;
                const S* pxc = x.data() + (b * C + c) * spatial;
                S* pyc = y.data() + (b * C + c) * spatial;
                const S a = gamma[c] * invstd;
                const S d = beta[c] - a * mean;
                for (Index i = 0; i < spatial; ++i) pyc[i] = a * pxc[i] + d;
            }
        }
    }
    return y;
}

template <typename S>
TensorT<S> groupnorm_backward(const TensorT<S>& x, const TensorT<S>& gamma, const TensorT<S>& dy,
                              Index groups, const GroupNormCacheT<S>& cache, TensorT<S>& dgamma,
                              TensorT<S>& dbeta) {
    const Index B = x.dim(0), C = x.dim(1);
    const Index spatial = x.size() / (B * C);
    const Index cpg = C / groups;
    const Index m = cpg * spatial;
    TensorT<S> dx(x.dims());
    for (Index b = 0; b < B; ++b) {
        for (Index gi = 0; gi < groups; ++gi) {
            const S mean = cache.mean(b, gi);
            const S invstd = cache.invstd(b, gi);
            // First pass: per-channel reductions and group-level sums.
            S sum_dxhat = 0, sum_dxhat_xhat = 0;
            for (Index cc = 0; cc < cpg; ++cc) {
                const Index c = gi * cpg + cc;
                const S* pxc = x.data() + (b * C + c) * spatial;
                const S* pdyc = dy.data() + (b * C + c) * spatial;
                S dg = 0, dbta = 0, s1 = 0, s2 = 0;
                for (Index i = 0; i < spatial; ++i) {
                    const S xhat = (pxc[i] - mean) * invstd;
                    dg += pdyc[i] * xhat;
                    dbta += pdyc[i];
                    const S dxhat = pdyc[i] * gamma[c];
                    s1 += dxhat;
                    s2 += dxhat * xhat;
                }
                dgamma[c] += dg;
                dbeta[c] += dbta;
                sum_dxhat += s1;
                sum_dxhat_xhat += s2;
            }
            const S inv_m = S(1) / static_cast<S>(m);
            for (Index cc = 0; cc < cpg; ++cc) {
                const Index c = gi * cpg + cc;
                const S* pxc = x.data() + (b * C + c) * spatial;
                const S* pdyc = dy.data() + (b * C + c) * spatial;
                S* pdxc = dx.data() + (b * C + c) * spatial;
                for (Index i = 0; i < spatial; ++i) {
                    const S xhat = (pxc[i] - mean) * invstd;
                    const S dxhat = pdyc[i] * gamma[c];
                    pdxc[i] = invstd * (dxhat - inv_m * sum_dxhat - xhat * inv_m * sum_dxhat_xhat);
                }
            }
        }
    }
    return dx;
}

template <typename S>
TensorT<S> silu_forward(const TensorT<S>& x) {
    TensorT<S> y(x.dims());
    const S* px = x.data();
    S* py = y.data();
    for (Index i = 0; i < x.size(); ++i) {
        const S sig = S(1) / (S(1) + std::exp(-px[i]));
        py[i] = px[i] * sig;
    }
    return y;
}

template <typename S>
TensorT<S> silu_backward(const TensorT<S>& x, const TensorT<S>& dy) {
    TensorT<S> dx(x.dims());
    const S* px = x.data();
    const S* pdy = dy.data();
    S* pdx = dx.data();
    for (Index i = 0; i < x.size(); ++i) {
        const S sig = S(1) / (S(1) + std::exp(-px[i]));
        pdx[i] = pdy[i] * sig * (S(1) + px[i] * (S(1) - sig));
    }
    return dx;
}

template <typename S>
TensorT<S> leaky_relu_forward(const TensorT<S>& x, S slope) {
    TensorT<S> y(x.dims());
    for (Index i = 0; i < x.size(); ++i) y[i] = x[i] >= 0 ? x[i] : slope * x[i];
    return y;
}

template <typename S>
TensorT<S> leaky_relu_backward(const TensorT<S>& x, const TensorT<S>& dy, S slope) {
    TensorT<S> dx(x.dims());
    for (Index i = 0; i < x.size(); ++i) dx[i] = x[i] >= 0 ? dy[i] : slope * dy[i];
    return dx;
}

template <typename S>
TensorT<S> tanh_forward(const TensorT<S>& x) {
    TensorT<S> y(x.dims());
    for (Index i = 0; i < x.size(); ++i) y[i] = std::tanh(x[i]);
    return y;
}

// Uses the cached output: d tanh = 1 - y^2.
template <typename S>
TensorT<S> tanh_backward(const TensorT<S>& y, const TensorT<S>& dy) {
    TensorT<S> dx(y.dims());
    for (Index i = 0; i < y.size(); ++i) dx[i] = dy[i] * (S(1) - y[i] * y[i]);
    return dx;
}

// Nearest-neighbour x2 upsampling along (D, H, W).
template <typename S>
TensorT<S> upsample2_forward(const TensorT<S>& x) {
    const Index B = x.dim(0), C = x.dim(1), D = x.dim(2), H = x.dim(3), W = x.dim(4);
    TensorT<S> y({B, C, D * 2, H * 2, W * 2});
    for (Index b = 0; b < B; ++b)
        for (Index c = 0; c < C; ++c)
            for (Index z = 0; z < D * 2; ++z)
                for (Index h = 0; h < H * 2; ++h)
                    for (Index w = 0; w < W * 2; ++w)
                        y(b, c, z, h, w) = x(b, c, z / 2, h / 2, w / 2);
    return y;
}

template <typename S>
TensorT<S> upsample2_backward(const TensorT<S>& dy) {
    const Index B = dy.dim(0), C = dy.dim(1), D = dy.dim(2) / 2, H = dy.dim(3) / 2,
                W = dy.dim(4) / 2;
    TensorT<S> dx = TensorT<S>::zeros({B, C, D, H, W});
    for (Index b = 0; b < B; ++b)
        for (Index c = 0; c < C; ++c)
            for (Index z = 0; z < D * 2; ++z)
                for (Index h = 0; h < H * 2; ++h)
                    for (Index w = 0; w < W * 2; ++w)
                        dx(b, c, z / 2, h / 2, w / 2) += dy(b, c, z, h, w);
    return dx;
}

// Row-wise softmax on (B, N); exp(x - max) then normalize.
template <typename S>
TensorT<S> softmax_rows(const TensorT<S>& logits) {
    const Index B = logits.dim(0), N = logits.dim(1);
    TensorT<S> w(logits.dims());
    for (Index b = 0; b < B; ++b) {
        const S* pl = logits.data() + b * N;
        S* pw = w.data() + b * N;
        S mx = pl[0];
        for (Index i = 1; i < N; ++i) mx = std::max(mx, pl[i]);
        S sum = 0;
        for (Index i = 0; i < N; ++i) {
            pw[i] = std::exp(pl[i] - mx);
            sum += pw[i];
        }
        for (Index i = 0; i < N; ++i) pw[i] /= sum;
    }
    return w;
}

template <typename S>
TensorT<S> softmax_rows_backward(const TensorT<S>& w, const TensorT<S>& dw) {
    const Index B = w.dim(0), N = w.dim(1);
    TensorT<S> dl(w.dims());
    for (Index b = 0; b < B; ++b) {
        const S* pw = w.data() + b * N;
        const S* pd = dw.data() + b * N;
        S dot = 0;
        for (Index i = 0; i < N; ++i) dot += pw[i] * pd[i];
        S* pl = dl.data() + b * N;
        for (Index i = 0; i < N; ++i) pl[i] = pw[i] * (pd[i] - dot);
    }
    return dl;
}

// Concatenate along the channel axis.
template <typename S>
TensorT<S> concat_channels(const TensorT<S>& a, const TensorT<S>& b) {
    const Index B = a.dim(0), Ca = a.dim(1), Cb = b.dim(1);
    for (int i : {2, 3, 4})
        if (a.dim(i) != b.dim(i))
            throw ShapeError("concat: spatial mismatch " + a.shape_str() + " vs " + b.shape_str());
    if (b.dim(0) != B) throw ShapeError("concat: batch mismatch");
    const Index spatial = a.dim(2) * a.dim(3) * a.dim(4);
    TensorT<S> y({B, Ca + Cb, a.dim(2), a.dim(3), a.dim(4)});
    for (Index bb = 0; bb < B; ++bb) {
        std::copy(a.data() + bb * Ca * spatial, a.data() + (bb + 1) * Ca * spatial,
                  y.data() + bb * (Ca + Cb) * spatial);
        std::copy(b.data() + bb * Cb * spatial, b.data() + (bb + 1) * Cb * spatial,
                  y.data() + bb * (Ca + Cb) * spatial + Ca * spatial);
    }
    return y;
}

template <typename S>
std::pair<TensorT<S>, TensorT<S>> split_channels(const TensorT<S>& y, Index Ca) {
    const Index B = y.dim(0), C = y.dim(1), Cb = C - Ca;
    const Index spatial = y.dim(2) * y.dim(3) * y.dim(4);
    TensorT<S> a({B, Ca, y.dim(2), y.dim(3), y.dim(4)});
    TensorT<S> b({B, Cb, y.dim(2), y.dim(3), y.dim(4)});
    for (Index bb = 0; bb < B; ++bb) {
        std::copy(y.data() + bb * C * spatial, y.data() + bb * C * spatial + Ca * spatial,
                  a.data() + bb * Ca * spatial);
        std::copy(y.data() + bb * C * spatial + Ca * spatial, y.data() + (bb + 1) * C * spatial,
                  b.data() + bb * Cb * spatial);
    }
    return {std::move(a), std::move(b)};
}

// mask: (B, D, H, W) integer labels -> (B, K, D, H, W) one-hot.
template <typename S>
TensorT<S> one_hot(const TensorT<int>& mask, Index num_classes) {
    const Index B = mask.dim(0), D = mask.dim(1), H = mask.dim(2), W = mask.dim(3);
    TensorT<S> y = TensorT<S>::zeros({B, num_classes, D, H, W});
    for (Index b = 0; b < B; ++b)
        for (Index z = 0; z < D; ++z)
            for (Index h = 0; h < H; ++h)
                for (Index w = 0; w < W; ++w) {
                    const int k = mask(b, z, h, w);
                    if (k < 0 || k >= num_classes)
                        throw ValidationError("one_hot: label " + std::to_string(k) +
                                              " outside [0," + std::to_string(num_classes) + ")");
                    y(b, k, z, h, w) = S(1);
                }
    return y;
}

// Sinusoidal position features of an integer timestep, length dim (even).
template <typename S>
TensorT<S> timestep_embedding(const std::vector<long>& ts, Index dim) {
    const Index half = dim / 2;
    TensorT<S> e({static_cast<Index>(ts.size()), dim});
    for (size_t b = 0; b < ts.size(); ++b) {
        for (Index i = 0; i < half; ++i) {
            const S freq = std::exp(-std::log(S(10000)) * static_cast<S>(i) /
                                    static_cast<S>(std::max<Index>(1, half - 1)));
            const S a = static_cast<S>(ts[b]) * freq;
            e(static_cast<Index>(b), i) = std::cos(a);
            e(static_cast<Index>(b), half + i) = std::sin(a);
        }
    }
    return e;
}

// Mean-squared error; dpred = 2 (pred - target) / n.
template <typename S>
S mse_loss(const TensorT<S>& pred, const TensorT<S>& target, TensorT<S>* dpred = nullptr) {
    check_same_shape(pred, target, "mse_loss");
    const Index n = pred.size();
    S loss = 0;
    if (dpred) dpred->resize(pred.dims());
    for (Index i = 0; i < n; ++i) {
        const S d = pred[i] - target[i];
        loss += d * d;
        if (dpred) (*dpred)[i] = S(2) * d / static_cast<S>(n);
    }
    return loss / static_cast<S>(n);
}

// Scalar-target MSE for score grids (least-squares GAN objective).
template <typename S>
S mse_to_constant(const TensorT<S>& pred, S target, TensorT<S>* dpred = nullptr) {
    const Index n = pred.size();
    S loss = 0;
    if (dpred) dpred->resize(pred.dims());
    for (Index i = 0; i < n; ++i) {
        const S d = pred[i] - target;
        loss += d * d;
        if (dpred) (*dpred)[i] = S(2) * d / static_cast<S>(n);
    }
    return loss / static_cast<S>(n);
}

template <typename S>
S l1_loss(const TensorT<S>& pred, const TensorT<S>& target, TensorT<S>* dpred = nullptr) {
    check_same_shape(pred, target, "l1_loss");
    const Index n = pred.size();
    S loss = 0;
    if (dpred) dpred->resize(pred.dims());
    for (Index i = 0; i < n; ++i) {
        const S d = pred[i] - target[i];
        loss += std::abs(d);
        if (dpred) (*dpred)[i] = (d > 0 ? S(1) : (d < 0 ? S(-1) : S(0))) / static_cast<S>(n);
    }
    return loss / static_cast<S>(n);
}

template <typename S>
void fill_gaussian(TensorT<S>& t, Rng& rng, S scale = S(1)) {
    for (Index i = 0; i < t.size(); ++i) t[i] = scale * static_cast<S>(rng.gaussian());
}

}  // namespace voxsyn::ops
