#include "hsdnet/engine.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace hsdnet {

namespace {

void require_rank(const Tensor& t, int rank, const char* what) {
    if (t.rank() != rank) {
        throw std::runtime_error(std::string(what) + ": expected rank " + std::to_string(rank) +
                                 ", got shape " + shape_string(t.shape));
    }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad) {
    require_rank(x, 4, "conv2d input");
    require_rank(w, 4, "conv2d filter");
    const int n = x.shape[0], in_c = x.shape[1], h = x.shape[2], wd = x.shape[3];
    const int out_c = w.shape[0], kh = w.shape[2], kw = w.shape[3];
    if (w.shape[1] != in_c) {
        throw std::runtime_error("conv2d channel mismatch: input has " + std::to_string(in_c) +
                                 " channels, filter expects " + std::to_string(w.shape[1]));
    }
    if (b.rank() != 1 || b.shape[0] != out_c) {
        throw std::runtime_error("conv2d bias shape must be (" + std::to_string(out_c) + ")");
    }
    if (stride <= 0 || pad < 0) {
        throw std::runtime_error("conv2d: stride must be positive, padding non-negative");
    }
    const int out_h = (h + 2 * pad - kh) / stride + 1;
    const int out_w = (wd + 2 * pad - kw) / stride + 1;
    if (out_h <= 0 || out_w <= 0) {
        throw std::runtime_error("conv2d output would be empty for input " + shape_string(x.shape));
    }

    Tensor y({n, out_c, out_h, out_w});
    const double* xp = x.ptr();
    const double* wp = w.ptr();
    double* yp = y.ptr();

    const std::int64_t x_cs = static_cast<std::int64_t>(h) * wd;
    const std::int64_t x_ns = static_cast<std::int64_t>(in_c) * x_cs;
    const std::int64_t y_cs = static_cast<std::int64_t>(out_h) * out_w;
    const std::int64_t y_ns = static_cast<std::int64_t>(out_c) * y_cs;
    const std::int64_t w_cs = static_cast<std::int64_t>(kh) * kw;
    const std::int64_t w_os = static_cast<std::int64_t>(in_c) * w_cs;

    for (int bi = 0; bi < n; ++bi) {
        for (int co = 0; co < out_c; ++co) {
            double* yrow = yp + bi * y_ns + co * y_cs;
            const double bias = b.data[static_cast<std::size_t>(co)];
            for (std::int64_t i = 0; i < y_cs; ++i) yrow[i] = bias;
            for (int ci = 0; ci < in_c; ++ci) {
                const double* xch = xp + bi * x_ns + ci * x_cs;
                const double* wch = wp + co * w_os + ci * w_cs;
                for (int r = 0; r < kh; ++r) {
                    for (int s = 0; s < kw; ++s) {
                        const double wv = wch[r * kw + s];
                        if (wv == 0.0) continue;
                        for (int oh = 0; oh < out_h; ++oh) {
                            const int ih = oh * stride - pad + r;
                            if (ih < 0 || ih >= h) continue;
                            double* yo = yrow + static_cast<std::int64_t>(oh) * out_w;
                            const double* xi = xch + static_cast<std::int64_t>(ih) * wd;
                            // clip the ow range so iw = ow*stride - pad + s stays in bounds
                            int ow0 = 0;
                            while (ow0 < out_w && ow0 * stride - pad + s < 0) ++ow0;
                            int ow1 = out_w;
                            while (ow1 > ow0 && (ow1 - 1) * stride - pad + s >= wd) --ow1;
                            if (stride == 1) {
                                const double* xs = xi + (ow0 - pad + s);
                                for (int ow = ow0; ow < ow1; ++ow) {
                                    yo[ow] += wv * xs[ow - ow0];
                                }
                            } else {
                                for (int ow = ow0; ow < ow1; ++ow) {
                                    yo[ow] += wv * xi[ow * stride - pad + s];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    return y;
}

void conv2d_backward(const Tensor& x, const Tensor& w, const Tensor& gy, int stride, int pad,
                     Tensor* gx, Tensor* gw, Tensor* gb) {
    const int n = x.shape[0], in_c = x.shape[1], h = x.shape[2], wd = x.shape[3];
    const int out_c = w.shape[0], kh = w.shape[2], kw = w.shape[3];
    const int out_h = gy.shape[2], out_w = gy.shape[3];
    if (gy.shape[0] != n || gy.shape[1] != out_c) {
        throw std::runtime_error("conv2d_backward: output gradient shape mismatch");
    }

    if (gx) *gx = Tensor::zeros(x.shape);
    if (gw) *gw = Tensor::zeros(w.shape);
    if (gb) *gb = Tensor::zeros({out_c});

    const double* xp = x.ptr();
    const double* wp = w.ptr();
    const double* gp = gy.ptr();

    const std::int64_t x_cs = static_cast<std::int64_t>(h) * wd;
    const std::int64_t x_ns = static_cast<std::int64_t>(in_c) * x_cs;
    const std::int64_t y_cs = static_cast<std::int64_t>(out_h) * out_w;
    const std::int64_t y_ns = static_cast<std::int64_t>(out_c) * y_cs;
    const std::int64_t w_cs = static_cast<std::int64_t>(kh) * kw;
    const std::int64_t w_os = static_cast<std::int64_t>(in_c) * w_cs;

    for (int bi = 0; bi < n; ++bi) {
        for (int co = 0; co < out_c; ++co) {
            const double* grow = gp + bi * y_ns + co * y_cs;
            if (gb) {
                double acc = 0.0;
                for (std::int64_t i = 0; i < y_cs; ++i) acc += grow[i];
                gb->data[static_cast<std::size_t>(co)] += acc;
            }
            for (int ci = 0; ci < in_c; ++ci) {
                const double* xch = xp + bi * x_ns + ci * x_cs;
                double* gxch = gx ? gx->ptr() + bi * x_ns + ci * x_cs : nullptr;
                const double* wch = wp + co * w_os + ci * w_cs;
                double* gwch = gw ? gw->ptr() + co * w_os + ci * w_cs : nullptr;
                for (int r = 0; r < kh; ++r) {
                    for (int s = 0; s < kw; ++s) {
                        const double wv = wch[r * kw + s];
                        double wacc = 0.0;
                        for (int oh = 0; oh < out_h; ++oh) {
                            const int ih = oh * stride - pad + r;
                            if (ih < 0 || ih >= h) continue;
                            const double* go = grow + static_cast<std::int64_t>(oh) * out_w;
                            const double* xi = xch + static_cast<std::int64_t>(ih) * wd;
                            double* gxi = gxch ? gxch + static_cast<std::int64_t>(ih) * wd : nullptr;
                            int ow0 = 0;
                            while (ow0 < out_w && ow0 * stride - pad + s < 0) ++ow0;
                            int ow1 = out_w;
                            while (ow1 > ow0 && (ow1 - 1) * stride - pad + s >= wd) --ow1;
                            for (int ow = ow0; ow < ow1; ++ow) {
                                const int iw = ow * stride - pad + s;
                                const double g = go[ow];
                                if (gw) wacc += g * xi[iw];
                                if (gxi) gxi[iw] += g * wv;
                            }
                        }
                        if (gwch) gwch[r * kw + s] += wacc;
                    }
                }
            }
        }
    }
}

Tensor relu(const Tensor& x) {
    Tensor y = x;
    for (double& v : y.data) v = v > 0.0 ? v : 0.0;
    return y;
}

Tensor relu_backward(const Tensor& x, const Tensor& gy) {
    if (!x.same_shape(gy)) {
        throw std::runtime_error("relu_backward: shape mismatch");
    }
    Tensor gx = gy;
    for (std::size_t i = 0; i < gx.data.size(); ++i) {
        if (x.data[i] <= 0.0) gx.data[i] = 0.0;
    }
    return gx;
}

Tensor maxpool2x2(const Tensor& x) {
    require_rank(x, 4, "maxpool2x2 input");
    const int n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3];
    if (h % 2 != 0 || w % 2 != 0) {
        throw std::runtime_error("maxpool2x2 requires even spatial extents, got " + shape_string(x.shape));
    }
    Tensor y({n, c, h / 2, w / 2});
    const double* xp = x.ptr();
    double* yp = y.ptr();
    const std::int64_t planes = static_cast<std::int64_t>(n) * c;
    for (std::int64_t p = 0; p < planes; ++p) {
        const double* xi = xp + p * h * w;
        double* yo = yp + p * (h / 2) * (w / 2);
        for (int oh = 0; oh < h / 2; ++oh) {
            for (int ow = 0; ow < w / 2; ++ow) {
                const double* cell = xi + (2 * oh) * w + 2 * ow;
                double m = cell[0];
                if (cell[1] > m) m = cell[1];
                if (cell[w] > m) m = cell[w];
                if (cell[w + 1] > m) m = cell[w + 1];
                yo[oh * (w / 2) + ow] = m;
            }
        }
    }
    return y;
}

Tensor maxpool2x2_backward(const Tensor& x, const Tensor& gy) {
    const int n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3];
    if (gy.shape != std::vector<int>{n, c, h / 2, w / 2}) {
        throw std::runtime_error("maxpool2x2_backward: gradient shape mismatch");
    }
    Tensor gx = Tensor::zeros(x.shape);
    const double* xp = x.ptr();
    const double* gp = gy.ptr();
    double* gxp = gx.ptr();
    const std::int64_t planes = static_cast<std::int64_t>(n) * c;
    for (std::int64_t p = 0; p < planes; ++p) {
        const double* xi = xp + p * h * w;
        const double* gyo = gp + p * (h / 2) * (w / 2);
        double* gxi = gxp + p * h * w;
        for (int oh = 0; oh < h / 2; ++oh) {
            for (int ow = 0; ow < w / 2; ++ow) {
                const std::int64_t base = static_cast<std::int64_t>(2 * oh) * w + 2 * ow;
                // winner is the first maximum in window scan order
                int win = 0;
                double m = xi[base];
                if (xi[base + 1] > m) { m = xi[base + 1]; win = 1; }
                if (xi[base + w] > m) { m = xi[base + w]; win = 2; }
                if (xi[base + w + 1] > m) { m = xi[base + w + 1]; win = 3; }
                const std::int64_t off = base + (win / 2) * w + (win % 2);
                gxi[off] += gyo[oh * (w / 2) + ow];
            }
        }
    }
    return gx;
}

Tensor global_avg_pool(const Tensor& x) {
    require_rank(x, 4, "global_avg_pool input");
    const int n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3];
    Tensor y({n, c});
    const double inv = 1.0 / (static_cast<double>(h) * w);
    const double* xp = x.ptr();
    for (int bi = 0; bi < n; ++bi) {
        for (int ci = 0; ci < c; ++ci) {
            const double* plane = xp + (static_cast<std::int64_t>(bi) * c + ci) * h * w;
            double acc = 0.0;
            for (int i = 0; i < h * w; ++i) acc += plane[i];
            y.data[static_cast<std::size_t>(bi) * c + ci] = acc * inv;
        }
    }
    return y;
}

Tensor global_avg_pool_backward(const Tensor& x, const Tensor& gy) {
    const int n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3];
    if (gy.shape != std::vector<int>{n, c}) {
        throw std::runtime_error("global_avg_pool_backward: gradient shape mismatch");
    }
    Tensor gx(x.shape);
    const double inv = 1.0 / (static_cast<double>(h) * w);
    for (int bi = 0; bi < n; ++bi) {
        for (int ci = 0; ci < c; ++ci) {
            const double g = gy.data[static_cast<std::size_t>(bi) * c + ci] * inv;
            double* plane = gx.ptr() + (static_cast<std::int64_t>(bi) * c + ci) * h * w;
            for (int i = 0; i < h * w; ++i) plane[i] = g;
        }
    }
    return gx;
}

Tensor dense(const Tensor& x, const Tensor& w, const Tensor& b) {
    require_rank(x, 2, "dense input");
    require_rank(w, 2, "dense weight");
    const int n = x.shape[0], in = x.shape[1];
    const int out = w.shape[0];
    if (w.shape[1] != in) {
        throw std::runtime_error("dense: input width " + std::to_string(in) +
                                 " does not match weight " + shape_string(w.shape));
    }
    if (b.rank() != 1 || b.shape[0] != out) {
        throw std::runtime_error("dense bias shape must be (" + std::to_string(out) + ")");
    }
    Tensor y({n, out});
    for (int bi = 0; bi < n; ++bi) {
        const double* xi = x.ptr() + static_cast<std::int64_t>(bi) * in;
        double* yo = y.ptr() + static_cast<std::int64_t>(bi) * out;
        for (int o = 0; o < out; ++o) {
            const double* wrow = w.ptr() + static_cast<std::int64_t>(o) * in;
            double acc = b.data[static_cast<std::size_t>(o)];
            for (int i = 0; i < in; ++i) acc += wrow[i] * xi[i];
            yo[o] = acc;
        }
    }
    return y;
}

void dense_backward(const Tensor& x, const Tensor& w, const Tensor& gy,
                    Tensor* gx, Tensor* gw, Tensor* gb) {
    const int n = x.shape[0], in = x.shape[1], out = w.shape[0];
    if (gy.shape != std::vector<int>{n, out}) {
        throw std::runtime_error("dense_backward: gradient shape mismatch");
    }
    if (gx) *gx = Tensor::zeros(x.shape);
    if (gw) *gw = Tensor::zeros(w.shape);
    if (gb) *gb = Tensor::zeros({out});
    for (int bi = 0; bi < n; ++bi) {
        const double* xi = x.ptr() + static_cast<std::int64_t>(bi) * in;
        const double* gyo = gy.ptr() + static_cast<std::int64_t>(bi) * out;
        for (int o = 0; o < out; ++o) {
            const double g = gyo[o];
            if (gb) gb->data[static_cast<std::size_t>(o)] += g;
            const double* wrow = w.ptr() + static_cast<std::int64_t>(o) * in;
            double* gwrow = gw ? gw->ptr() + static_cast<std::int64_t>(o) * in : nullptr;
            double* gxi = gx ? gx->ptr() + static_cast<std::int64_t>(bi) * in : nullptr;
            for (int i = 0; i < in; ++i) {
                if (gwrow) gwrow[i] += g * xi[i];
                if (gxi) gxi[i] += g * wrow[i];
            }
        }
    }
}

Tensor softmax_rows(const Tensor& z) {
    require_rank(z, 2, "softmax input");
    const int n = z.shape[0], c = z.shape[1];
    Tensor p({n, c});
    for (int bi = 0; bi < n; ++bi) {
        const double* zi = z.ptr() + static_cast<std::int64_t>(bi) * c;
        double* po = p.ptr() + static_cast<std::int64_t>(bi) * c;
        double m = zi[0];
        for (int j = 1; j < c; ++j) m = std::max(m, zi[j]);
        double sum = 0.0;
        for (int j = 0; j < c; ++j) {
            po[j] = std::exp(zi[j] - m);
            sum += po[j];
        }
        const double inv = 1.0 / sum;
        for (int j = 0; j < c; ++j) po[j] *= inv;
    }
    return p;
}

Tensor softmax_backward(const Tensor& p, const Tensor& gp) {
    if (!p.same_shape(gp)) {
        throw std::runtime_error("softmax_backward: shape mismatch");
    }
    const int n = p.shape[0], c = p.shape[1];
    Tensor gz({n, c});
    for (int bi = 0; bi < n; ++bi) {
        const double* pi = p.ptr() + static_cast<std::int64_t>(bi) * c;
        const double* gi = gp.ptr() + static_cast<std::int64_t>(bi) * c;
        double* go = gz.ptr() + static_cast<std::int64_t>(bi) * c;
        double dot = 0.0;
        for (int j = 0; j < c; ++j) dot += gi[j] * pi[j];
        for (int j = 0; j < c; ++j) go[j] = pi[j] * (gi[j] - dot);
    }
    return gz;
}

Tensor scale_channels(const Tensor& x, const std::vector<double>& s) {
    require_rank(x, 4, "scale_channels input");
    const int n = x.shape[0], c = x.shape[1];
    if (static_cast<int>(s.size()) != c) {
        throw std::runtime_error("scale_channels: expected " + std::to_string(c) + " scales, got " +
                                 std::to_string(s.size()));
    }
    const std::int64_t plane = static_cast<std::int64_t>(x.shape[2]) * x.shape[3];
    Tensor y = x;
    for (int bi = 0; bi < n; ++bi) {
        for (int ci = 0; ci < c; ++ci) {
            double* row = y.ptr() + (static_cast<std::int64_t>(bi) * c + ci) * plane;
            const double sv = s[static_cast<std::size_t>(ci)];
            for (std::int64_t i = 0; i < plane; ++i) row[i] *= sv;
        }
    }
    return y;
}

std::vector<double> scale_channels_grad(const Tensor& x, const Tensor& gy) {
    if (!x.same_shape(gy)) {
        throw std::runtime_error("scale_channels_grad: shape mismatch");
    }
    const int n = x.shape[0], c = x.shape[1];
    const std::int64_t plane = static_cast<std::int64_t>(x.shape[2]) * x.shape[3];
    std::vector<double> gs(static_cast<std::size_t>(c), 0.0);
    for (int bi = 0; bi < n; ++bi) {
        for (int ci = 0; ci < c; ++ci) {
            const double* xr = x.ptr() + (static_cast<std::int64_t>(bi) * c + ci) * plane;
            const double* gr = gy.ptr() + (static_cast<std::int64_t>(bi) * c + ci) * plane;
            double acc = 0.0;
            for (std::int64_t i = 0; i < plane; ++i) acc += xr[i] * gr[i];
            gs[static_cast<std::size_t>(ci)] += acc;
        }
    }
    return gs;
}

Tensor scale_channels_backward_input(const Tensor& gy, const std::vector<double>& s) {
    return scale_channels(gy, s);
}

Tensor channel_affine(const Tensor& x, const Tensor& s, const Tensor& t) {
    require_rank(x, 4, "channel_affine input");
    const int n = x.shape[0], c = x.shape[1];
    if (s.shape != std::vector<int>{c} || t.shape != std::vector<int>{c}) {
        throw std::runtime_error("channel_affine: scale/shift must have shape (" + std::to_string(c) + ")");
    }
    const std::int64_t plane = static_cast<std::int64_t>(x.shape[2]) * x.shape[3];
    Tensor y(x.shape);
    for (int bi = 0; bi < n; ++bi) {
        for (int ci = 0; ci < c; ++ci) {
            const double* xr = x.ptr() + (static_cast<std::int64_t>(bi) * c + ci) * plane;
            double* yr = y.ptr() + (static_cast<std::int64_t>(bi) * c + ci) * plane;
            const double sv = s.data[static_cast<std::size_t>(ci)];
            const double tv = t.data[static_cast<std::size_t>(ci)];
            for (std::int64_t i = 0; i < plane; ++i) yr[i] = sv * xr[i] + tv;
        }
    }
    return y;
}

void channel_affine_backward(const Tensor& x, const Tensor& s, const Tensor& gy,
                             Tensor* gx, Tensor* gs, Tensor* gt) {
    const int n = x.shape[0], c = x.shape[1];
    const std::int64_t plane = static_cast<std::int64_t>(x.shape[2]) * x.shape[3];
    if (gx) *gx = Tensor(x.shape);
    if (gs) *gs = Tensor::zeros({c});
    if (gt) *gt = Tensor::zeros({c});
    for (int bi = 0; bi < n; ++bi) {
        for (int ci = 0; ci < c; ++ci) {
            const double* xr = x.ptr() + (static_cast<std::int64_t>(bi) * c + ci) * plane;
            const double* gr = gy.ptr() + (static_cast<std::int64_t>(bi) * c + ci) * plane;
            const double sv = s.data[static_cast<std::size_t>(ci)];
            double sacc = 0.0, tacc = 0.0;
            double* gxr = gx ? gx->ptr() + (static_cast<std::int64_t>(bi) * c + ci) * plane : nullptr;
            for (std::int64_t i = 0; i < plane; ++i) {
                sacc += gr[i] * xr[i];
                tacc += gr[i];
                if (gxr) gxr[i] = gr[i] * sv;
            }
            if (gs) gs->data[static_cast<std::size_t>(ci)] += sacc;
            if (gt) gt->data[static_cast<std::size_t>(ci)] += tacc;
        }
    }
}

}  // namespace hsdnet
