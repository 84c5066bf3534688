#include "gbrs/gbrs_layers.hpp"

#include "gbrs/errors.hpp"
#include "gbrs/ops.hpp"

#include <algorithm>
#include <numeric>

namespace gbrs {

namespace {

void expect_channels(const char* layer, const char* name, Var m, Var t) {
    if (m.value().rank() != 4) throw DimensionError(std::string(layer) + ": feature map must be [N,C,H,W]");
    if (t.value().numel() != m.value().dim(1)) {
        throw DimensionError(std::string(layer) + ": " + name + " has " + std::to_string(t.value().numel()) +
                             " entries for " + std::to_string(m.value().dim(1)) + " channels (axis C)");
    }
}

void expect_map(const char* layer, Var m, Var b_m) {
    const Shape& s = m.value().shape();
    if (b_m.value().shape() != Shape{s[2], s[3]}) {
        throw DimensionError(std::string(layer) + ": bias map " + shape_to_string(b_m.value().shape()) +
                             " does not match feature map " + shape_to_string(s) + " (axes H,W)");
    }
}

Var bias_map(Var b_m, Var w_c) { return ops::channel_weighted_map(b_m, w_c); }

} // namespace

std::string_view to_string(GbrsKind kind) {
    switch (kind) {
    case GbrsKind::sb: return "sb";
    case GbrsKind::bmsb: return "bmsb";
    case GbrsKind::bmsb_m: return "bmsb-m";
    case GbrsKind::bmconv: return "bmconv";
    }
    return "?";
}

GbrsKind parse_gbrs_kind(std::string_view text) {
    if (text == "sb") return GbrsKind::sb;
    if (text == "bmsb") return GbrsKind::bmsb;
    if (text == "bmsb-m" || text == "bmsb_m") return GbrsKind::bmsb_m;
    if (text == "bmconv") return GbrsKind::bmconv;
    throw InputError("unknown layer kind '" + std::string(text) + "'");
}

std::vector<Tensor*> GbrsParams::tensors() {
    switch (kind) {
    case GbrsKind::sb: return {&s, &b};
    case GbrsKind::bmsb: return {&s, &b, &b_m, &w_c};
    case GbrsKind::bmsb_m: return {&s, &b, &b_m, &w_c, &w};
    case GbrsKind::bmconv: return {&b_m, &w_c, &w_conv, &b_conv};
    }
    return {};
}

std::vector<const Tensor*> GbrsParams::tensors() const {
    auto ptrs = const_cast<GbrsParams*>(this)->tensors();
    return {ptrs.begin(), ptrs.end()};
}

std::vector<std::string> GbrsParams::tensor_names() const {
    switch (kind) {
    case GbrsKind::sb: return {"s", "b"};
    case GbrsKind::bmsb: return {"s", "b", "b_m", "w_c"};
    case GbrsKind::bmsb_m: return {"s", "b", "b_m", "w_c", "w"};
    case GbrsKind::bmconv: return {"b_m", "w_c", "w_conv", "b_conv"};
    }
    return {};
}

GbrsParams identity_params(GbrsKind kind, std::size_t channels, std::size_t height, std::size_t width,
                           std::vector<std::size_t> channel_subset) {
    GbrsParams p;
    p.kind = kind;
    if (!channel_subset.empty()) {
        for (std::size_t i = 0; i < channel_subset.size(); ++i) {
            if (channel_subset[i] >= channels || (i > 0 && channel_subset[i] <= channel_subset[i - 1])) {
                throw ContractError("channel subset must be sorted, distinct and < C");
            }
        }
        channels = channel_subset.size();
    }
    p.channel_subset = std::move(channel_subset);
    if (kind != GbrsKind::bmconv) {
        p.s = Tensor(Shape{channels}, 1.0);
        p.b = Tensor(Shape{channels}, 0.0);
    }
    if (kind != GbrsKind::sb) {
        p.b_m = Tensor(Shape{height, width}, 0.0);
        p.w_c = Tensor(Shape{channels}, 1.0);
    }
    if (kind == GbrsKind::bmsb_m) p.w = Tensor(Shape{1}, 0.5);
    if (kind == GbrsKind::bmconv) {
        p.w_conv = Tensor(Shape{channels, channels, 1, 1}, 0.0);
        for (std::size_t c = 0; c < channels; ++c) p.w_conv[c * channels + c] = 1.0;
        p.b_conv = Tensor(Shape{channels}, 0.0);
    }
    return p;
}

Var apply_sb(Var m, Var s, Var b) {
    expect_channels("sb", "s", m, s);
    expect_channels("sb", "b", m, b);
    return ops::add(ops::mul(m, s), b);
}

Var apply_bmsb(Var m, Var s, Var b, Var b_m, Var w_c) {
    expect_channels("bmsb", "s", m, s);
    expect_channels("bmsb", "b", m, b);
    expect_channels("bmsb", "w_c", m, w_c);
    expect_map("bmsb", m, b_m);
    return ops::add(ops::mul(ops::add(m, bias_map(b_m, w_c)), s), b);
}

Var apply_bmsb_m(Var m, Var s, Var b, Var b_m, Var w_c, Var w) {
    expect_channels("bmsb-m", "s", m, s);
    expect_channels("bmsb-m", "b", m, b);
    expect_channels("bmsb-m", "w_c", m, w_c);
    expect_map("bmsb-m", m, b_m);
    if (w.value().numel() != 1) throw DimensionError("bmsb-m: w must be a scalar");
    const Var global = ops::add(ops::mul(m, s), b);
    const Var local = ops::add(m, bias_map(b_m, w_c));
    return ops::add(ops::mul(global, w), ops::mul(local, ops::add_scalar(ops::scale(w, -1.0), 1.0)));
}

Var apply_bmconv(Var m, Var b_m, Var w_c, Var w_conv, Var b_conv, double beta) {
    const Shape& ws = w_conv.value().shape();
    if (ws.size() != 4 || ws[0] != ws[1] || ws[2] != 1 || ws[3] != 1) {
        throw ContractError("bmconv: w_conv must be a square [C,C,1,1] kernel, got " + shape_to_string(ws));
    }
    expect_channels("bmconv", "w_c", m, w_c);
    expect_channels("bmconv", "b_conv", m, b_conv);
    expect_map("bmconv", m, b_m);
    if (ws[0] != m.value().dim(1)) throw DimensionError("bmconv: w_conv does not match the channel count (axis C)");
    return ops::conv2d(ops::add(m, ops::scale(bias_map(b_m, w_c), beta)), w_conv, b_conv, 1, 0);
}

Var apply_gbrs(Var m, const GbrsParams& p, std::span<const Var> vars) {
    if (vars.size() != p.tensor_names().size()) throw ContractError("apply_gbrs: wrong number of bound tensors");
    auto body = [&](Var x) {
        switch (p.kind) {
        case GbrsKind::sb: return apply_sb(x, vars[0], vars[1]);
        case GbrsKind::bmsb: return apply_bmsb(x, vars[0], vars[1], vars[2], vars[3]);
        case GbrsKind::bmsb_m: return apply_bmsb_m(x, vars[0], vars[1], vars[2], vars[3], vars[4]);
        case GbrsKind::bmconv: return apply_bmconv(x, vars[0], vars[1], vars[2], vars[3], p.beta);
        }
        throw ContractError("unknown layer kind");
    };
    if (p.channel_subset.empty()) return body(m);
    const Var selected = ops::gather_channels(m, p.channel_subset);
    return ops::scatter_channels(m, body(selected), p.channel_subset);
}

void project_params(GbrsParams& p) {
    if (p.kind == GbrsKind::bmsb_m) p.w[0] = std::clamp(p.w[0], 0.0, 1.0);
}

std::vector<std::size_t> top_k_channels(const Tensor& m, std::size_t k) {
    if (m.rank() != 4) throw DimensionError("top_k_channels: feature map must be [N,C,H,W]");
    const std::size_t n = m.dim(0), c = m.dim(1), hw = m.dim(2) * m.dim(3);
    if (k < 1 || k > c) {
        throw InputError("top_k_channels: K=" + std::to_string(k) + " outside 1.." + std::to_string(c));
    }
    std::vector<double> means(c, 0.0);
    for (std::size_t b = 0; b < n; ++b) {
        for (std::size_t ch = 0; ch < c; ++ch) {
            const double* p = m.data().data() + (b * c + ch) * hw;
            for (std::size_t i = 0; i < hw; ++i) means[ch] += p[i];
        }
    }
    for (auto& v : means) v /= static_cast<double>(n * hw);
    std::vector<std::size_t> idx(c);
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return means[a] > means[b]; });
    idx.resize(k);
    std::sort(idx.begin(), idx.end());
    return idx;
}

std::vector<std::string> insertion_points_for_layers(std::size_t layers) {
    static const std::vector<std::string> order = {"enc8", "dec4", "dec2"};
    if (layers < 1 || layers > order.size()) {
        throw InputError("layer count must be 1, 2 or 3, got " + std::to_string(layers));
    }
    return {order.begin(), order.begin() + static_cast<std::ptrdiff_t>(layers)};
}

std::vector<Placement> make_placements(const Network& net, const BlockCache& cache, GbrsKind kind,
                                       std::size_t layers, std::size_t tcs_k) {
    std::vector<Placement> out;
    for (const auto& name : insertion_points_for_layers(layers)) {
        const std::size_t block = net.spec().insertion(name).block;
        const Tensor& fm = cache.outputs.at(block);
        std::vector<std::size_t> subset;
        if (tcs_k > 0 && name == "enc8") subset = top_k_channels(fm, tcs_k);
        out.push_back(Placement{name, identity_params(kind, fm.dim(1), fm.dim(2), fm.dim(3), std::move(subset))});
    }
    return out;
}

LayerHooks make_hooks(const Network& net, const std::vector<Placement>& placements,
                      const std::vector<std::vector<Var>>& vars) {
    if (vars.size() != placements.size()) throw ContractError("make_hooks: one binding per placement");
    LayerHooks hooks;
    for (std::size_t i = 0; i < placements.size(); ++i) {
        const std::size_t block = net.spec().insertion(placements[i].insertion_point).block;
        if (hooks.count(block)) throw ContractError("two placements at " + placements[i].insertion_point);
        const GbrsParams* p = &placements[i].params;
        const std::vector<Var>* v = &vars[i];
        hooks[block] = [p, v](Var m) { return apply_gbrs(m, *p, *v); };
    }
    return hooks;
}

} // namespace gbrs
