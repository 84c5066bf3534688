#pragma once

#include "gbrs/graph.hpp"
#include "gbrs/network.hpp"

#include <span>
#include <string>
#include <vector>

namespace gbrs {

enum class GbrsKind { sb, bmsb, bmsb_m, bmconv };

std::string_view to_string(GbrsKind kind); // "sb", "bmsb", "bmsb-m", "bmconv"
GbrsKind parse_gbrs_kind(std::string_view text);

inline constexpr double kBmconvBeta = 10.0;

/// Auxiliary parameters of one spliced layer. Tensors a kind does not use
/// are left empty. With a channel subset, C is the subset size.
struct GbrsParams {
    GbrsKind kind = GbrsKind::sb;
    Tensor s;      // [C]
    Tensor b;      // [C]
    Tensor b_m;    // [H,W]
    Tensor w_c;    // [C]
    Tensor w;      // [1], bmsb_m
    Tensor w_conv; // [C,C,1,1], bmconv
    Tensor b_conv; // [C], bmconv
    double beta = kBmconvBeta;
    std::vector<std::size_t> channel_subset;

    /// Pointers to the tensors this kind trains, in a fixed order.
    std::vector<Tensor*> tensors();
    std::vector<const Tensor*> tensors() const;
    std::vector<std::string> tensor_names() const;
};

/// Identity-initialised parameters for a C x H x W feature map.
GbrsParams identity_params(GbrsKind kind, std::size_t channels, std::size_t height, std::size_t width,
                           std::vector<std::size_t> channel_subset = {});

Var apply_sb(Var m, Var s, Var b);
Var apply_bmsb(Var m, Var s, Var b, Var b_m, Var w_c);
Var apply_bmsb_m(Var m, Var s, Var b, Var b_m, Var w_c, Var w);
Var apply_bmconv(Var m, Var b_m, Var w_c, Var w_conv, Var b_conv, double beta = kBmconvBeta);

/// Applies the layer described by `p`, whose tensors are bound to `vars`
/// (same order as p.tensors()). Under a channel subset only those channels
/// pass through the layer.
Var apply_gbrs(Var m, const GbrsParams& p, std::span<const Var> vars);

/// Keeps bmsb_m's w inside [0, 1].
void project_params(GbrsParams& p);

/// The K channels with the largest spatial mean, sorted ascending; ties
/// prefer the lower index.
std::vector<std::size_t> top_k_channels(const Tensor& m, std::size_t k);

struct Placement {
    std::string insertion_point;
    GbrsParams params;
};

/// Insertion points used by 1, 2 or 3 layers: enc8, then dec4, then dec2.
std::vector<std::string> insertion_points_for_layers(std::size_t layers);

/// Identity placements sized from the block outputs in `cache`. `tcs_k` > 0
/// restricts the enc8 placement to its top-k channels.
std::vector<Placement> make_placements(const Network& net, const BlockCache& cache, GbrsKind kind,
                                       std::size_t layers, std::size_t tcs_k = 0);

/// Hooks splicing `placements` into `net`; vars[i] binds placements[i].
LayerHooks make_hooks(const Network& net, const std::vector<Placement>& placements,
                      const std::vector<std::vector<Var>>& vars);

} // namespace gbrs
