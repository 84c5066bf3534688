#pragma once

#include "gbrs/graph.hpp"
#include "gbrs/tensor.hpp"

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace gbrs {

enum class Task { interactive_seg, semantic_seg, matting, depth };

std::string_view to_string(Task task);
Task parse_task(std::string_view text);

/// Number of semantic classes (background + five shape classes).
inline constexpr std::size_t kNumClasses = 6;

enum class BlockKind { conv, relu, sigmoid, softplus_floor, upsample, add };

std::string_view to_string(BlockKind kind);

/// One step of the network. Inputs reference earlier blocks; -1 is the network input.
struct Block {
    BlockKind kind = BlockKind::relu;
    std::string name;
    std::vector<int> inputs;
    std::size_t in_channels = 0;
    std::size_t out_channels = 0;
    std::size_t kernel = 0;
    std::size_t stride = 1;
    std::size_t padding = 0;
    std::size_t factor = 0; // upsample factor
};

struct InsertionPoint {
    std::string name;
    std::size_t block = 0; // G-BRS layer wraps this block's output
};

struct NetworkSpec {
    Task task = Task::interactive_seg;
    std::size_t in_channels = 0;
    std::size_t out_channels = 0;
    std::vector<Block> blocks;
    std::vector<InsertionPoint> insertion_points;
    double interaction_clip = 255.0;
    double depth_floor = 0.1;

    const InsertionPoint& insertion(std::string_view name) const;

    /// Structured key=value text stored in checkpoint headers.
    std::string to_text() const;
    static NetworkSpec from_text(std::string_view text);

    bool operator==(const NetworkSpec&) const;
};

/// Per-block output transform, used to splice G-BRS layers.
using LayerHooks = std::map<std::size_t, std::function<Var(Var)>>;

/// Pre-hook outputs of a bare forward pass. Blocks whose value cannot be
/// affected by hooks or by a trainable input are read from here instead of
/// being recomputed.
struct BlockCache {
    std::vector<Tensor> outputs;
};

class Network {
  public:
    Network() = default;
    Network(NetworkSpec spec, std::vector<std::string> names, std::vector<Tensor> weights);

    const NetworkSpec& spec() const { return spec_; }
    Task task() const { return spec_.task; }

    const std::vector<std::string>& weight_names() const { return names_; }
    const std::vector<Tensor>& weights() const { return weights_; }
    std::vector<Tensor>& weights() { return weights_; }
    std::size_t parameter_count() const;

    /// FNV-1a over names, shapes and raw payload bytes.
    std::uint64_t weight_hash() const;

    /// Builds the forward graph. `trainable` binds weights as parameters
    /// (training); otherwise weights are constants created on first use.
    Var forward(Graph& g, Var input, const LayerHooks& hooks = {}, const BlockCache* cache = nullptr,
                std::vector<Var>* bound_weights = nullptr, bool trainable = false) const;

    /// Bare forward pass; optionally returns every block's output.
    Tensor evaluate(const Tensor& input, BlockCache* cache = nullptr) const;

    /// Output shape of `block` for an input of the given spatial size.
    Shape block_shape(std::size_t block, std::size_t height, std::size_t width) const;

  private:
    NetworkSpec spec_;
    std::vector<std::string> names_;
    std::vector<Tensor> weights_;
    std::vector<std::pair<int, int>> block_weights_; // (weight index, bias index) per block, -1 if none
};

/// Desk-scale encoder-decoder: three stride-2 conv blocks (16, 32, 64
/// channels), two upsampling decoder stages with lateral skips and a task
/// head. Insertion points: enc8, dec4, dec2.
Network build_network(Task task, std::uint64_t seed);

std::size_t network_input_channels(Task task);
std::size_t network_output_channels(Task task);

} // namespace gbrs
