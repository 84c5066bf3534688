#include "gbrs/ops.hpp"

#include "gbrs/errors.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

namespace gbrs::ops {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

Graph& graph_of(Var a) {
    if (!a.valid()) throw ContractError("operation on an unbound Var");
    return *a.graph();
}

Graph& graph_of(Var a, Var b) {
    Graph& g = graph_of(a);
    if (b.graph() != &g) throw ContractError("operands belong to different graphs");
    return g;
}

void require_rank(const Tensor& t, std::size_t rank, const char* what) {
    if (t.rank() != rank) {
        throw DimensionError(std::string(what) + ": expected rank " + std::to_string(rank) +
                             ", got shape " + shape_to_string(t.shape()));
    }
}

// ---------------------------------------------------------------- conv2d

struct ConvGeometry {
    std::size_t n, cin, h, w, cout, k, stride, pad, ho, wo;
    std::size_t patch() const { return cin * k * k; }
    std::size_t pixels() const { return ho * wo; }
    bool pointwise() const { return k == 1 && stride == 1 && pad == 0; }
};

void im2col(const double* x, const ConvGeometry& g, double* cols) {
    const std::size_t pixels = g.pixels();
    for (std::size_t c = 0; c < g.cin; ++c) {
        for (std::size_t ki = 0; ki < g.k; ++ki) {
            for (std::size_t kj = 0; kj < g.k; ++kj) {
                double* row = cols + ((c * g.k + ki) * g.k + kj) * pixels;
                for (std::size_t oh = 0; oh < g.ho; ++oh) {
                    const long ih = static_cast<long>(oh * g.stride + ki) - static_cast<long>(g.pad);
                    double* out = row + oh * g.wo;
                    if (ih < 0 || ih >= static_cast<long>(g.h)) {
                        std::fill(out, out + g.wo, 0.0);
                        continue;
                    }
                    const double* in = x + (c * g.h + static_cast<std::size_t>(ih)) * g.w;
                    for (std::size_t ow = 0; ow < g.wo; ++ow) {
                        const long iw =
                            static_cast<long>(ow * g.stride + kj) - static_cast<long>(g.pad);
                        out[ow] = (iw < 0 || iw >= static_cast<long>(g.w))
                                      ? 0.0
                                      : in[static_cast<std::size_t>(iw)];
                    }
                }
            }
        }
    }
}

void col2im_accumulate(const double* cols, const ConvGeometry& g, double* dx) {
    const std::size_t pixels = g.pixels();
    for (std::size_t c = 0; c < g.cin; ++c) {
        for (std::size_t ki = 0; ki < g.k; ++ki) {
            for (std::size_t kj = 0; kj < g.k; ++kj) {
                const double* row = cols + ((c * g.k + ki) * g.k + kj) * pixels;
                for (std::size_t oh = 0; oh < g.ho; ++oh) {
                    const long ih = static_cast<long>(oh * g.stride + ki) - static_cast<long>(g.pad);
                    if (ih < 0 || ih >= static_cast<long>(g.h)) continue;
                    double* out = dx + (c * g.h + static_cast<std::size_t>(ih)) * g.w;
                    const double* in = row + oh * g.wo;
                    for (std::size_t ow = 0; ow < g.wo; ++ow) {
                        const long iw =
                            static_cast<long>(ow * g.stride + kj) - static_cast<long>(g.pad);
                        if (iw < 0 || iw >= static_cast<long>(g.w)) continue;
                        out[static_cast<std::size_t>(iw)] += in[ow];
                    }
                }
            }
        }
    }
}

// ------------------------------------------------------------ broadcasting

struct BroadcastPlan {
    bool same = false;
    std::array<std::size_t, 4> dims{1, 1, 1, 1};     // iteration space (shape of a as 4-d)
    std::array<std::size_t, 4> b_strides{0, 0, 0, 0}; // 0 on broadcast axes
};

BroadcastPlan plan_broadcast(const Tensor& a, const Tensor& b) {
    BroadcastPlan plan;
    if (a.shape() == b.shape()) {
        plan.same = true;
        return plan;
    }
    if (b.numel() == 1) {
        plan.dims = {1, 1, 1, a.numel()};
        return plan;
    }
    auto mismatch = [&](const std::string& axis) {
        return DimensionError("elementwise: cannot broadcast " + shape_to_string(b.shape()) +
                              " against " + shape_to_string(a.shape()) + " (axis " + axis + ")");
    };
    if (a.rank() != 4) throw mismatch("rank");
    const std::size_t n = a.dim(0), c = a.dim(1), h = a.dim(2), w = a.dim(3);
    plan.dims = {n, c, h, w};
    if (b.rank() == 1) {
        if (b.dim(0) != c) throw mismatch("C");
        plan.b_strides = {0, 1, 0, 0};
    } else if (b.rank() == 2) {
        if (b.dim(0) != h) throw mismatch("H");
        if (b.dim(1) != w) throw mismatch("W");
        plan.b_strides = {0, 0, w, 1};
    } else if (b.rank() == 4) {
        const char* names[4] = {"N", "C", "H", "W"};
        std::size_t stride = 1;
        for (std::size_t axis = 4; axis-- > 0;) {
            const std::size_t bd = b.dim(axis);
            if (bd == plan.dims[axis]) {
                plan.b_strides[axis] = stride;
            } else if (bd == 1) {
                plan.b_strides[axis] = 0;
            } else {
                throw mismatch(names[axis]);
            }
            stride *= bd;
        }
    } else {
        throw mismatch("rank");
    }
    return plan;
}

template <typename Fn>
void for_each_broadcast(const BroadcastPlan& plan, Fn&& fn) {
    std::size_t ai = 0;
    for (std::size_t n = 0; n < plan.dims[0]; ++n) {
        for (std::size_t c = 0; c < plan.dims[1]; ++c) {
            for (std::size_t h = 0; h < plan.dims[2]; ++h) {
                const std::size_t base =
                    n * plan.b_strides[0] + c * plan.b_strides[1] + h * plan.b_strides[2];
                for (std::size_t w = 0; w < plan.dims[3]; ++w, ++ai) {
                    fn(ai, base + w * plan.b_strides[3]);
                }
            }
        }
    }
}

template <typename Forward, typename Derivative>
Var unary(std::string_view name, Var x, Forward forward, Derivative derivative) {
    Graph& g = graph_of(x);
    const Tensor& in = x.value();
    Tensor out(in.shape());
    for (std::size_t i = 0; i < in.numel(); ++i) out[i] = forward(in[i]);
    const std::size_t xid = x.id();
    return g.record(name, {xid}, std::move(out), [xid, derivative](Graph& graph, std::size_t self) {
        const Tensor& gy = graph.grad(self);
        const Tensor& xv = graph.value(xid);
        const Tensor& yv = graph.value(self);
        Tensor& gx = graph.grad_buffer(xid);
        for (std::size_t i = 0; i < gx.numel(); ++i) gx[i] += gy[i] * derivative(xv[i], yv[i]);
    });
}

double stable_softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

double stable_sigmoid(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

} // namespace

Var conv2d(Var input, Var weight, Var bias, std::size_t stride, std::size_t padding) {
    Graph& g = graph_of(input, weight);
    if (bias.graph() != &g) throw ContractError("conv2d: bias belongs to another graph");
    const Tensor& x = input.value();
    const Tensor& wt = weight.value();
    const Tensor& bt = bias.value();
    require_rank(x, 4, "conv2d input");
    require_rank(wt, 4, "conv2d weight");
    if (wt.dim(1) != x.dim(1)) {
        throw DimensionError("conv2d: weight expects " + std::to_string(wt.dim(1)) +
                             " input channels, input has " + std::to_string(x.dim(1)) +
                             " (axis C)");
    }
    if (wt.dim(2) != wt.dim(3)) throw DimensionError("conv2d: kernel must be square (axis k)");
    if (wt.dim(2) % 2 == 0) throw ContractError("conv2d: kernel size must be odd");
    if (stride == 0) throw ContractError("conv2d: stride must be positive");
    if (bt.rank() != 1 || bt.dim(0) != wt.dim(0)) {
        throw DimensionError("conv2d: bias shape " + shape_to_string(bt.shape()) +
                             " does not match output channels " + std::to_string(wt.dim(0)) +
                             " (axis Cout)");
    }
    ConvGeometry geo{};
    geo.n = x.dim(0);
    geo.cin = x.dim(1);
    geo.h = x.dim(2);
    geo.w = x.dim(3);
    geo.cout = wt.dim(0);
    geo.k = wt.dim(2);
    geo.stride = stride;
    geo.pad = padding;
    if (geo.h + 2 * padding < geo.k) throw DimensionError("conv2d: input too small (axis H)");
    if (geo.w + 2 * padding < geo.k) throw DimensionError("conv2d: input too small (axis W)");
    geo.ho = (geo.h + 2 * padding - geo.k) / stride + 1;
    geo.wo = (geo.w + 2 * padding - geo.k) / stride + 1;

    Tensor out(Shape{geo.n, geo.cout, geo.ho, geo.wo});
    AlignedBuffer cols(geo.pointwise() ? 0 : geo.patch() * geo.pixels());
    ConstMatrixMap wmat(wt.data().data(), static_cast<Eigen::Index>(geo.cout),
                        static_cast<Eigen::Index>(geo.patch()));
    for (std::size_t n = 0; n < geo.n; ++n) {
        const double* xn = x.data().data() + n * geo.cin * geo.h * geo.w;
        const double* colptr = xn;
        if (!geo.pointwise()) {
            im2col(xn, geo, cols.data());
            colptr = cols.data();
        }
        ConstMatrixMap cmat(colptr, static_cast<Eigen::Index>(geo.patch()),
                            static_cast<Eigen::Index>(geo.pixels()));
        MatrixMap omat(out.data().data() + n * geo.cout * geo.pixels(),
                       static_cast<Eigen::Index>(geo.cout), static_cast<Eigen::Index>(geo.pixels()));
        omat.noalias() = wmat * cmat;
        for (std::size_t co = 0; co < geo.cout; ++co) omat.row(static_cast<Eigen::Index>(co)).array() += bt[co];
    }

    const std::size_t xid = input.id(), wid = weight.id(), bid = bias.id();
    return g.record("conv2d", {xid, wid, bid}, std::move(out),
                    [xid, wid, bid, geo](Graph& graph, std::size_t self) {
        const Tensor& gy = graph.grad(self);
        const Tensor& xv = graph.value(xid);
        const Tensor& wv = graph.value(wid);
        const bool need_x = graph.requires_grad(xid);
        const bool need_w = graph.requires_grad(wid);
        const bool need_b = graph.requires_grad(bid);
        const auto cout = static_cast<Eigen::Index>(geo.cout);
        const auto patch = static_cast<Eigen::Index>(geo.patch());
        const auto pixels = static_cast<Eigen::Index>(geo.pixels());
        ConstMatrixMap wmat(wv.data().data(), cout, patch);
        AlignedBuffer cols(geo.pointwise() ? 0 : geo.patch() * geo.pixels());
        RowMatrix dcols;
        for (std::size_t n = 0; n < geo.n; ++n) {
            ConstMatrixMap gmat(gy.data().data() + n * geo.cout * geo.pixels(), cout, pixels);
            if (need_b) {
                Tensor& gb = graph.grad_buffer(bid);
                for (std::size_t co = 0; co < geo.cout; ++co) {
                    gb[co] += gmat.row(static_cast<Eigen::Index>(co)).sum();
                }
            }
            const double* xn = xv.data().data() + n * geo.cin * geo.h * geo.w;
            if (need_w) {
                const double* colptr = xn;
                if (!geo.pointwise()) {
                    im2col(xn, geo, cols.data());
                    colptr = cols.data();
                }
                ConstMatrixMap cmat(colptr, patch, pixels);
                MatrixMap gw(graph.grad_buffer(wid).data().data(), cout, patch);
                gw.noalias() += gmat * cmat.transpose();
            }
            if (need_x) {
                double* gx = graph.grad_buffer(xid).data().data() + n * geo.cin * geo.h * geo.w;
                if (geo.pointwise()) {
                    MatrixMap gxmat(gx, patch, pixels);
                    gxmat.noalias() += wmat.transpose() * gmat;
                } else {
                    dcols.noalias() = wmat.transpose() * gmat;
                    col2im_accumulate(dcols.data(), geo, gx);
                }
            }
        }
    });
}

Var elementwise(ElementwiseKind kind, Var a, Var b) {
    Graph& g = graph_of(a, b);
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    const BroadcastPlan plan = plan_broadcast(av, bv);
    Tensor out(av.shape());
    auto apply = [kind](double x, double y) {
        switch (kind) {
        case ElementwiseKind::add: return x + y;
        case ElementwiseKind::sub: return x - y;
        case ElementwiseKind::mul: return x * y;
        }
        return 0.0;
    };
    if (plan.same) {
        for (std::size_t i = 0; i < av.numel(); ++i) out[i] = apply(av[i], bv[i]);
    } else {
        for_each_broadcast(plan, [&](std::size_t ai, std::size_t bi) { out[ai] = apply(av[ai], bv[bi]); });
    }
    static constexpr std::string_view names[] = {"add", "sub", "mul"};
    const std::size_t aid = a.id(), bid = b.id();
    return g.record(names[static_cast<int>(kind)], {aid, bid}, std::move(out),
                    [aid, bid, kind, plan](Graph& graph, std::size_t self) {
        const Tensor& gy = graph.grad(self);
        const bool need_a = graph.requires_grad(aid);
        const bool need_b = graph.requires_grad(bid);
        const Tensor& av = graph.value(aid);
        const Tensor& bv = graph.value(bid);
        Tensor* ga = need_a ? &graph.grad_buffer(aid) : nullptr;
        Tensor* gb = need_b ? &graph.grad_buffer(bid) : nullptr;
        auto step = [&](std::size_t ai, std::size_t bi) {
            const double gyv = gy[ai];
            switch (kind) {
            case ElementwiseKind::add:
                if (ga) (*ga)[ai] += gyv;
                if (gb) (*gb)[bi] += gyv;
                break;
            case ElementwiseKind::sub:
                if (ga) (*ga)[ai] += gyv;
                if (gb) (*gb)[bi] -= gyv;
                break;
            case ElementwiseKind::mul:
                if (ga) (*ga)[ai] += gyv * bv[bi];
                if (gb) (*gb)[bi] += gyv * av[ai];
                break;
            }
        };
        if (plan.same) {
            for (std::size_t i = 0; i < gy.numel(); ++i) step(i, i);
        } else {
            for_each_broadcast(plan, step);
        }
    });
}

Var add(Var a, Var b) {
    if (a.value().numel() < b.value().numel()) std::swap(a, b);
    return elementwise(ElementwiseKind::add, a, b);
}

Var sub(Var a, Var b) {
    if (a.value().numel() < b.value().numel()) return scale(elementwise(ElementwiseKind::sub, b, a), -1.0);
    return elementwise(ElementwiseKind::sub, a, b);
}

Var mul(Var a, Var b) {
    if (a.value().numel() < b.value().numel()) std::swap(a, b);
    return elementwise(ElementwiseKind::mul, a, b);
}

Var activation(ActivationKind kind, Var x) {
    switch (kind) {
    case ActivationKind::relu:
        return unary("relu", x, [](double v) { return v > 0.0 ? v : 0.0; },
                     [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
    case ActivationKind::sigmoid:
        return unary("sigmoid", x, stable_sigmoid, [](double, double y) { return y * (1.0 - y); });
    case ActivationKind::softplus:
        return unary("softplus", x, stable_softplus, [](double v, double) { return stable_sigmoid(v); });
    }
    throw ContractError("unknown activation");
}

Var relu(Var x) { return activation(ActivationKind::relu, x); }
Var sigmoid(Var x) { return activation(ActivationKind::sigmoid, x); }
Var softplus(Var x) { return activation(ActivationKind::softplus, x); }

Var log(Var x) {
    return unary("log", x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Var abs(Var x) {
    return unary("abs", x, [](double v) { return std::abs(v); },
                 [](double v, double) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

Var square(Var x) {
    return unary("square", x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

Var scale(Var x, double factor) {
    return unary("scale", x, [factor](double v) { return v * factor; },
                 [factor](double, double) { return factor; });
}

Var add_scalar(Var x, double offset) {
    return unary("add_scalar", x, [offset](double v) { return v + offset; },
                 [](double, double) { return 1.0; });
}

Var channel_log_softmax(Var x) {
    Graph& g = graph_of(x);
    const Tensor& in = x.value();
    require_rank(in, 4, "channel_log_softmax");
    const std::size_t n = in.dim(0), c = in.dim(1), hw = in.dim(2) * in.dim(3);
    if (c < 2) throw ContractError("channel_log_softmax: need at least 2 channels");
    Tensor out(in.shape());
    for (std::size_t b = 0; b < n; ++b) {
        const double* src = in.data().data() + b * c * hw;
        double* dst = out.data().data() + b * c * hw;
        for (std::size_t p = 0; p < hw; ++p) {
            double peak = src[p];
            for (std::size_t k = 1; k < c; ++k) peak = std::max(peak, src[k * hw + p]);
            double total = 0.0;
            for (std::size_t k = 0; k < c; ++k) total += std::exp(src[k * hw + p] - peak);
            const double lse = peak + std::log(total);
            for (std::size_t k = 0; k < c; ++k) dst[k * hw + p] = src[k * hw + p] - lse;
        }
    }
    const std::size_t xid = x.id();
    return g.record("channel_log_softmax", {xid}, std::move(out),
                    [xid, n, c, hw](Graph& graph, std::size_t self) {
        const Tensor& gy = graph.grad(self);
        const Tensor& y = graph.value(self);
        Tensor& gx = graph.grad_buffer(xid);
        for (std::size_t b = 0; b < n; ++b) {
            const std::size_t off = b * c * hw;
            for (std::size_t p = 0; p < hw; ++p) {
                double gsum = 0.0;
                for (std::size_t k = 0; k < c; ++k) gsum += gy[off + k * hw + p];
                for (std::size_t k = 0; k < c; ++k) {
                    const std::size_t i = off + k * hw + p;
                    gx[i] += gy[i] - std::exp(y[i]) * gsum;
                }
            }
        }
    });
}

namespace {

struct AxisTaps {
    std::vector<std::size_t> lo, hi;
    std::vector<double> frac; // weight of `hi`
};

AxisTaps bilinear_taps(std::size_t in, std::size_t factor) {
    AxisTaps taps;
    const std::size_t out = in * factor;
    taps.lo.resize(out);
    taps.hi.resize(out);
    taps.frac.resize(out);
    for (std::size_t o = 0; o < out; ++o) {
        double src = (static_cast<double>(o) + 0.5) / static_cast<double>(factor) - 0.5;
        if (src < 0.0) src = 0.0;
        auto lo = static_cast<std::size_t>(std::floor(src));
        if (lo > in - 1) lo = in - 1;
        taps.lo[o] = lo;
        taps.hi[o] = std::min(lo + 1, in - 1);
        taps.frac[o] = src - static_cast<double>(lo);
    }
    return taps;
}

} // namespace

Var upsample_bilinear(Var x, std::size_t factor) {
    Graph& g = graph_of(x);
    const Tensor& in = x.value();
    require_rank(in, 4, "upsample_bilinear");
    if (factor != 2 && factor != 4) throw ContractError("upsample_bilinear: factor must be 2 or 4");
    const std::size_t planes = in.dim(0) * in.dim(1), h = in.dim(2), w = in.dim(3);
    const std::size_t ho = h * factor, wo = w * factor;
    const AxisTaps ty = bilinear_taps(h, factor), tx = bilinear_taps(w, factor);
    Tensor out(Shape{in.dim(0), in.dim(1), ho, wo});
    for (std::size_t p = 0; p < planes; ++p) {
        const double* src = in.data().data() + p * h * w;
        double* dst = out.data().data() + p * ho * wo;
        for (std::size_t oy = 0; oy < ho; ++oy) {
            const double* r0 = src + ty.lo[oy] * w;
            const double* r1 = src + ty.hi[oy] * w;
            const double fy = ty.frac[oy];
            for (std::size_t ox = 0; ox < wo; ++ox) {
                const double fx = tx.frac[ox];
                const double top = (1.0 - fx) * r0[tx.lo[ox]] + fx * r0[tx.hi[ox]];
                const double bottom = (1.0 - fx) * r1[tx.lo[ox]] + fx * r1[tx.hi[ox]];
                dst[oy * wo + ox] = (1.0 - fy) * top + fy * bottom;
            }
        }
    }
    const std::size_t xid = x.id();
    return g.record("upsample_bilinear", {xid}, std::move(out),
                    [xid, planes, h, w, ho, wo, ty, tx](Graph& graph, std::size_t self) {
        const Tensor& gy = graph.grad(self);
        Tensor& gx = graph.grad_buffer(xid);
        for (std::size_t p = 0; p < planes; ++p) {
            const double* src = gy.data().data() + p * ho * wo;
            double* dst = gx.data().data() + p * h * w;
            for (std::size_t oy = 0; oy < ho; ++oy) {
                double* r0 = dst + ty.lo[oy] * w;
                double* r1 = dst + ty.hi[oy] * w;
                const double fy = ty.frac[oy];
                for (std::size_t ox = 0; ox < wo; ++ox) {
                    const double gv = src[oy * wo + ox];
                    const double fx = tx.frac[ox];
                    r0[tx.lo[ox]] += (1.0 - fy) * (1.0 - fx) * gv;
                    r0[tx.hi[ox]] += (1.0 - fy) * fx * gv;
                    r1[tx.lo[ox]] += fy * (1.0 - fx) * gv;
                    r1[tx.hi[ox]] += fy * fx * gv;
                }
            }
        }
    });
}

Var sum(Var x) {
    Graph& g = graph_of(x);
    double total = 0.0;
    for (double v : x.value().data()) total += v;
    const std::size_t xid = x.id();
    return g.record("sum", {xid}, Tensor::scalar(total), [xid](Graph& graph, std::size_t self) {
        const double gv = graph.grad(self)[0];
        Tensor& gx = graph.grad_buffer(xid);
        for (std::size_t i = 0; i < gx.numel(); ++i) gx[i] += gv;
    });
}

Var mean(Var x) {
    const auto n = static_cast<double>(x.value().numel());
    if (n == 0) throw ContractError("mean of an empty tensor");
    return scale(sum(x), 1.0 / n);
}

Var gather(Var x, std::span<const std::size_t> indices) {
    Graph& g = graph_of(x);
    const Tensor& in = x.value();
    std::vector<std::size_t> idx(indices.begin(), indices.end());
    Tensor out(Shape{idx.size()});
    for (std::size_t i = 0; i < idx.size(); ++i) {
        if (idx[i] >= in.numel()) {
            throw DimensionError("gather: index " + std::to_string(idx[i]) + " outside tensor of " +
                                 std::to_string(in.numel()) + " elements");
        }
        out[i] = in[idx[i]];
    }
    const std::size_t xid = x.id();
    return g.record("gather", {xid}, std::move(out), [xid, idx](Graph& graph, std::size_t self) {
        const Tensor& gy = graph.grad(self);
        Tensor& gx = graph.grad_buffer(xid);
        for (std::size_t i = 0; i < idx.size(); ++i) gx[idx[i]] += gy[i];
    });
}

Var gather_channels(Var x, std::span<const std::size_t> channels) {
    Graph& g = graph_of(x);
    const Tensor& in = x.value();
    require_rank(in, 4, "gather_channels");
    const std::size_t n = in.dim(0), c = in.dim(1), hw = in.dim(2) * in.dim(3);
    std::vector<std::size_t> chans(channels.begin(), channels.end());
    for (auto ch : chans) {
        if (ch >= c) throw DimensionError("gather_channels: channel index out of range (axis C)");
    }
    const std::size_t k = chans.size();
    Tensor out(Shape{n, k, in.dim(2), in.dim(3)});
    for (std::size_t b = 0; b < n; ++b) {
        for (std::size_t j = 0; j < k; ++j) {
            const double* src = in.data().data() + (b * c + chans[j]) * hw;
            std::copy(src, src + hw, out.data().data() + (b * k + j) * hw);
        }
    }
    const std::size_t xid = x.id();
    return g.record("gather_channels", {xid}, std::move(out),
                    [xid, chans, n, c, k, hw](Graph& graph, std::size_t self) {
        const Tensor& gy = graph.grad(self);
        Tensor& gx = graph.grad_buffer(xid);
        for (std::size_t b = 0; b < n; ++b) {
            for (std::size_t j = 0; j < k; ++j) {
                const double* src = gy.data().data() + (b * k + j) * hw;
                double* dst = gx.data().data() + (b * c + chans[j]) * hw;
                for (std::size_t p = 0; p < hw; ++p) dst[p] += src[p];
            }
        }
    });
}

Var scatter_channels(Var base, Var replacement, std::span<const std::size_t> channels) {
    Graph& g = graph_of(base, replacement);
    const Tensor& bv = base.value();
    const Tensor& rv = replacement.value();
    require_rank(bv, 4, "scatter_channels base");
    require_rank(rv, 4, "scatter_channels replacement");
    std::vector<std::size_t> chans(channels.begin(), channels.end());
    const std::size_t n = bv.dim(0), c = bv.dim(1), hw = bv.dim(2) * bv.dim(3), k = chans.size();
    if (rv.dim(0) != n) throw DimensionError("scatter_channels: batch mismatch (axis N)");
    if (rv.dim(1) != k) throw DimensionError("scatter_channels: replacement channel count (axis C)");
    if (rv.dim(2) != bv.dim(2)) throw DimensionError("scatter_channels: height mismatch (axis H)");
    if (rv.dim(3) != bv.dim(3)) throw DimensionError("scatter_channels: width mismatch (axis W)");
    std::vector<char> replaced(c, 0);
    for (auto ch : chans) {
        if (ch >= c) throw DimensionError("scatter_channels: channel index out of range (axis C)");
        if (replaced[ch]) throw ContractError("scatter_channels: duplicate channel index");
        replaced[ch] = 1;
    }
    Tensor out = bv;
    for (std::size_t b = 0; b < n; ++b) {
        for (std::size_t j = 0; j < k; ++j) {
            const double* src = rv.data().data() + (b * k + j) * hw;
            std::copy(src, src + hw, out.data().data() + (b * c + chans[j]) * hw);
        }
    }
    const std::size_t bid = base.id(), rid = replacement.id();
    return g.record("scatter_channels", {bid, rid}, std::move(out),
                    [bid, rid, chans, replaced, n, c, k, hw](Graph& graph, std::size_t self) {
        const Tensor& gy = graph.grad(self);
        if (graph.requires_grad(bid)) {
            Tensor& gb = graph.grad_buffer(bid);
            for (std::size_t b = 0; b < n; ++b) {
                for (std::size_t ch = 0; ch < c; ++ch) {
                    if (replaced[ch]) continue;
                    const std::size_t off = (b * c + ch) * hw;
                    for (std::size_t p = 0; p < hw; ++p) gb[off + p] += gy[off + p];
                }
            }
        }
        if (graph.requires_grad(rid)) {
            Tensor& gr = graph.grad_buffer(rid);
            for (std::size_t b = 0; b < n; ++b) {
                for (std::size_t j = 0; j < k; ++j) {
                    const double* src = gy.data().data() + (b * c + chans[j]) * hw;
                    double* dst = gr.data().data() + (b * k + j) * hw;
                    for (std::size_t p = 0; p < hw; ++p) dst[p] += src[p];
                }
            }
        }
    });
}

Var channel_weighted_map(Var map, Var channel_weights) {
    Graph& g = graph_of(map, channel_weights);
    const Tensor& mv = map.value();
    const Tensor& wv = channel_weights.value();
    require_rank(mv, 2, "channel_weighted_map map");
    require_rank(wv, 1, "channel_weighted_map weights");
    const std::size_t c = wv.dim(0), hw = mv.numel();
    Tensor out(Shape{1, c, mv.dim(0), mv.dim(1)});
    for (std::size_t k = 0; k < c; ++k) {
        for (std::size_t p = 0; p < hw; ++p) out[k * hw + p] = mv[p] * wv[k];
    }
    const std::size_t mid = map.id(), wid = channel_weights.id();
    return g.record("channel_weighted_map", {mid, wid}, std::move(out),
                    [mid, wid, c, hw](Graph& graph, std::size_t self) {
        const Tensor& gy = graph.grad(self);
        const Tensor& mv = graph.value(mid);
        const Tensor& wv = graph.value(wid);
        if (graph.requires_grad(mid)) {
            Tensor& gm = graph.grad_buffer(mid);
            for (std::size_t k = 0; k < c; ++k) {
                for (std::size_t p = 0; p < hw; ++p) gm[p] += gy[k * hw + p] * wv[k];
            }
        }
        if (graph.requires_grad(wid)) {
            Tensor& gw = graph.grad_buffer(wid);
            for (std::size_t k = 0; k < c; ++k) {
                double acc = 0.0;
                for (std::size_t p = 0; p < hw; ++p) acc += gy[k * hw + p] * mv[p];
                gw[k] += acc;
            }
        }
    });
}

Var reshape(Var x, Shape shape) {
    Graph& g = graph_of(x);
    Tensor out = x.value().reshaped(std::move(shape));
    const std::size_t xid = x.id();
    return g.record("reshape", {xid}, std::move(out), [xid](Graph& graph, std::size_t self) {
        const Tensor& gy = graph.grad(self);
        Tensor& gx = graph.grad_buffer(xid);
        for (std::size_t i = 0; i < gx.numel(); ++i) gx[i] += gy[i];
    });
}

} // namespace gbrs::ops
