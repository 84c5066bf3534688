#include "gbrs/network.hpp"

#include "gbrs/errors.hpp"
#include "gbrs/ops.hpp"
#include "gbrs/rng.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <sstream>

namespace gbrs {

namespace {

constexpr std::pair<Task, std::string_view> kTaskNames[] = {
    {Task::interactive_seg, "interactive_seg"},
    {Task::semantic_seg, "semantic_seg"},
    {Task::matting, "matting"},
    {Task::depth, "depth"},
};

constexpr std::pair<BlockKind, std::string_view> kBlockNames[] = {
    {BlockKind::conv, "conv"},         {BlockKind::relu, "relu"},
    {BlockKind::sigmoid, "sigmoid"},   {BlockKind::softplus_floor, "softplus_floor"},
    {BlockKind::upsample, "upsample"}, {BlockKind::add, "add"},
};

BlockKind parse_block_kind(std::string_view text) {
    for (auto [kind, name] : kBlockNames) {
        if (name == text) return kind;
    }
    throw LoadError("unknown block kind '" + std::string(text) + "'");
}

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::vector<std::string_view> split(std::string_view text, char sep) {
    std::vector<std::string_view> parts;
    std::size_t start = 0;
    while (start <= text.size()) {
        const std::size_t end = text.find(sep, start);
        const std::size_t stop = end == std::string_view::npos ? text.size() : end;
        if (stop > start) parts.push_back(text.substr(start, stop - start));
        if (end == std::string_view::npos) break;
        start = end + 1;
    }
    return parts;
}

template <typename T>
T parse_number(std::string_view text) {
    T value{};
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc() || ptr != text.data() + text.size()) {
        throw LoadError("bad number '" + std::string(text) + "' in network header");
    }
    return value;
}

double parse_double(std::string_view text) {
    std::string s(text);
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (end != s.c_str() + s.size()) throw LoadError("bad number '" + s + "' in network header");
    return v;
}

} // namespace

std::string_view to_string(Task task) {
    for (auto [t, name] : kTaskNames) {
        if (t == task) return name;
    }
    return "unknown";
}

Task parse_task(std::string_view text) {
    for (auto [t, name] : kTaskNames) {
        if (name == text) return t;
    }
    if (text == "interactive-seg") return Task::interactive_seg;
    if (text == "semantic-seg") return Task::semantic_seg;
    throw InputError("unknown task '" + std::string(text) + "'");
}

std::string_view to_string(BlockKind kind) {
    for (auto [k, name] : kBlockNames) {
        if (k == kind) return name;
    }
    return "unknown";
}

std::size_t network_input_channels(Task task) {
    switch (task) {
    case Task::interactive_seg: return 5;
    case Task::matting: return 4;
    default: return 3;
    }
}

std::size_t network_output_channels(Task task) { return task == Task::semantic_seg ? kNumClasses : 1; }

const InsertionPoint& NetworkSpec::insertion(std::string_view name) const {
    for (const auto& p : insertion_points) {
        if (p.name == name) return p;
    }
    throw InputError("unknown insertion point '" + std::string(name) + "'");
}

std::string NetworkSpec::to_text() const {
    std::ostringstream out;
    out << "task=" << to_string(task) << '\n';
    out << "in_channels=" << in_channels << '\n';
    out << "out_channels=" << out_channels << '\n';
    out << "interaction_clip=" << format_double(interaction_clip) << '\n';
    out << "depth_floor=" << format_double(depth_floor) << '\n';
    for (const auto& b : blocks) {
        out << "block=" << to_string(b.kind) << " name=" << b.name << " inputs=";
        for (std::size_t i = 0; i < b.inputs.size(); ++i) out << (i ? "," : "") << b.inputs[i];
        out << " cin=" << b.in_channels << " cout=" << b.out_channels << " k=" << b.kernel
            << " s=" << b.stride << " p=" << b.padding << " f=" << b.factor << '\n';
    }
    for (const auto& p : insertion_points) out << "insertion=" << p.name << ' ' << p.block << '\n';
    return out.str();
}

NetworkSpec NetworkSpec::from_text(std::string_view text) {
    NetworkSpec spec;
    bool have_task = false;
    for (std::string_view line : split(text, '\n')) {
        const std::size_t eq = line.find('=');
        if (eq == std::string_view::npos) throw LoadError("malformed header line: " + std::string(line));
        const std::string_view key = line.substr(0, eq);
        const std::string_view value = line.substr(eq + 1);
        if (key == "task") {
            spec.task = parse_task(value);
            have_task = true;
        } else if (key == "in_channels") {
            spec.in_channels = parse_number<std::size_t>(value);
        } else if (key == "out_channels") {
            spec.out_channels = parse_number<std::size_t>(value);
        } else if (key == "interaction_clip") {
            spec.interaction_clip = parse_double(value);
        } else if (key == "depth_floor") {
            spec.depth_floor = parse_double(value);
        } else if (key == "block") {
            auto fields = split(value, ' ');
            if (fields.empty()) throw LoadError("empty block line");
            Block b;
            b.kind = parse_block_kind(fields[0]);
            for (std::size_t i = 1; i < fields.size(); ++i) {
                const std::size_t feq = fields[i].find('=');
                if (feq == std::string_view::npos) throw LoadError("malformed block field");
                const auto fk = fields[i].substr(0, feq);
                const auto fv = fields[i].substr(feq + 1);
                if (fk == "name") b.name = std::string(fv);
                else if (fk == "inputs") {
                    for (auto part : split(fv, ',')) b.inputs.push_back(parse_number<int>(part));
                } else if (fk == "cin") b.in_channels = parse_number<std::size_t>(fv);
                else if (fk == "cout") b.out_channels = parse_number<std::size_t>(fv);
                else if (fk == "k") b.kernel = parse_number<std::size_t>(fv);
                else if (fk == "s") b.stride = parse_number<std::size_t>(fv);
                else if (fk == "p") b.padding = parse_number<std::size_t>(fv);
                else if (fk == "f") b.factor = parse_number<std::size_t>(fv);
                else throw LoadError("unknown block field '" + std::string(fk) + "'");
            }
            for (int in : b.inputs) {
                if (in < -1 || in >= static_cast<int>(spec.blocks.size())) {
                    throw LoadError("block '" + b.name + "' references a later block");
                }
            }
            spec.blocks.push_back(std::move(b));
        } else if (key == "insertion") {
            auto fields = split(value, ' ');
            if (fields.size() != 2) throw LoadError("malformed insertion line");
            spec.insertion_points.push_back({std::string(fields[0]), parse_number<std::size_t>(fields[1])});
        } else {
            throw LoadError("unknown header key '" + std::string(key) + "'");
        }
    }
    if (!have_task || spec.blocks.empty()) throw LoadError("network header lacks task or blocks");
    for (const auto& p : spec.insertion_points) {
        if (p.block >= spec.blocks.size()) throw LoadError("insertion point outside the block list");
    }
    return spec;
}

bool NetworkSpec::operator==(const NetworkSpec& other) const { return to_text() == other.to_text(); }

Network::Network(NetworkSpec spec, std::vector<std::string> names, std::vector<Tensor> weights)
    : spec_(std::move(spec)), names_(std::move(names)), weights_(std::move(weights)) {
    if (names_.size() != weights_.size()) throw ContractError("weight names and tensors differ in count");
    auto find = [&](const std::string& name) -> int {
        for (std::size_t i = 0; i < names_.size(); ++i) {
            if (names_[i] == name) return static_cast<int>(i);
        }
        throw LoadError("missing weight '" + name + "'");
    };
    for (const auto& b : spec_.blocks) {
        if (b.kind == BlockKind::conv) {
            const int w = find(b.name + ".weight");
            const int bias = find(b.name + ".bias");
            const Shape expect{b.out_channels, b.in_channels, b.kernel, b.kernel};
            if (weights_[w].shape() != expect) {
                throw LoadError("weight '" + b.name + ".weight' has shape " +
                                shape_to_string(weights_[w].shape()) + ", expected " + shape_to_string(expect));
            }
            if (weights_[bias].shape() != Shape{b.out_channels}) {
                throw LoadError("weight '" + b.name + ".bias' has the wrong shape");
            }
            block_weights_.emplace_back(w, bias);
        } else {
            block_weights_.emplace_back(-1, -1);
        }
    }
}

std::size_t Network::parameter_count() const {
    std::size_t total = 0;
    for (const auto& w : weights_) total += w.numel();
    return total;
}

std::uint64_t Network::weight_hash() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto feed = [&h](const void* data, std::size_t n) {
        const auto* p = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < n; ++i) {
            h ^= p[i];
            h *= 0x100000001b3ULL;
        }
    };
    for (std::size_t i = 0; i < weights_.size(); ++i) {
        feed(names_[i].data(), names_[i].size());
        for (auto d : weights_[i].shape()) feed(&d, sizeof d);
        feed(weights_[i].data().data(), weights_[i].numel() * sizeof(double));
    }
    return h;
}

Var Network::forward(Graph& g, Var input, const LayerHooks& hooks, const BlockCache* cache,
                     std::vector<Var>* bound_weights, bool trainable) const {
    const std::size_t nb = spec_.blocks.size();
    if (input.value().rank() != 4 || input.value().dim(1) != spec_.in_channels) {
        throw DimensionError("network input must be [N," + std::to_string(spec_.in_channels) +
                             ",H,W], got " + shape_to_string(input.value().shape()) + " (axis C)");
    }
    if (cache && cache->outputs.size() != nb) throw ContractError("block cache does not match network");
    std::vector<Var> wvars(weights_.size());
    if (trainable) {
        for (std::size_t i = 0; i < weights_.size(); ++i) wvars[i] = g.parameter(weights_[i]);
    }
    auto weight = [&](int idx) {
        if (!wvars[idx].valid()) wvars[idx] = g.constant(weights_[idx]);
        return wvars[idx];
    };
    const bool input_clean = !input.requires_grad();
    std::vector<Var> out(nb);
    std::vector<char> clean(nb, 0);
    auto fetch = [&](int j) -> Var {
        if (j < 0) return input;
        if (!out[j].valid()) out[j] = g.constant(cache->outputs[j]);
        return out[j];
    };
    for (std::size_t i = 0; i < nb; ++i) {
        const Block& b = spec_.blocks[i];
        const auto hook = hooks.find(i);
        bool pre_clean = cache != nullptr && !trainable;
        for (int in : b.inputs) pre_clean = pre_clean && (in < 0 ? input_clean : clean[in] != 0);
        if (pre_clean) {
            if (hook != hooks.end()) {
                out[i] = hook->second(g.constant(cache->outputs[i]));
            } else {
                clean[i] = 1;
            }
            continue;
        }
        Var y;
        switch (b.kind) {
        case BlockKind::conv:
            y = ops::conv2d(fetch(b.inputs[0]), weight(block_weights_[i].first), weight(block_weights_[i].second),
                            b.stride, b.padding);
            break;
        case BlockKind::relu: y = ops::relu(fetch(b.inputs[0])); break;
        case BlockKind::sigmoid: y = ops::sigmoid(fetch(b.inputs[0])); break;
        case BlockKind::softplus_floor:
            y = ops::add_scalar(ops::softplus(fetch(b.inputs[0])), spec_.depth_floor);
            break;
        case BlockKind::upsample: y = ops::upsample_bilinear(fetch(b.inputs[0]), b.factor); break;
        case BlockKind::add: y = ops::add(fetch(b.inputs[0]), fetch(b.inputs[1])); break;
        }
        out[i] = hook != hooks.end() ? hook->second(y) : y;
    }
    if (bound_weights) *bound_weights = wvars;
    return fetch(static_cast<int>(nb) - 1);
}

Tensor Network::evaluate(const Tensor& input, BlockCache* cache) const {
    Graph g;
    if (!cache) return forward(g, g.constant(input)).value();
    // Hooks that pass values through unchanged expose every pre-hook output.
    LayerHooks taps;
    std::vector<Var> seen(spec_.blocks.size());
    for (std::size_t i = 0; i < spec_.blocks.size(); ++i) {
        taps[i] = [&seen, i](Var v) {
            seen[i] = v;
            return v;
        };
    }
    Tensor result = forward(g, g.constant(input), taps).value();
    cache->outputs.clear();
    for (auto& v : seen) cache->outputs.push_back(v.value());
    return result;
}

Shape Network::block_shape(std::size_t block, std::size_t height, std::size_t width) const {
    BlockCache cache;
    evaluate(Tensor(Shape{1, spec_.in_channels, height, width}), &cache);
    return cache.outputs.at(block).shape();
}

Network build_network(Task task, std::uint64_t seed) {
    NetworkSpec spec;
    spec.task = task;
    spec.in_channels = network_input_channels(task);
    spec.out_channels = network_output_channels(task);

    auto conv = [&](std::string name, int input, std::size_t cin, std::size_t cout, std::size_t k, std::size_t s) {
        Block b;
        b.kind = BlockKind::conv;
        b.name = std::move(name);
        b.inputs = {input};
        b.in_channels = cin;
        b.out_channels = cout;
        b.kernel = k;
        b.stride = s;
        b.padding = k / 2;
        spec.blocks.push_back(b);
        return static_cast<int>(spec.blocks.size()) - 1;
    };
    auto unary = [&](BlockKind kind, std::string name, int input, std::size_t factor = 0) {
        Block b;
        b.kind = kind;
        b.name = std::move(name);
        b.inputs = {input};
        b.factor = factor;
        spec.blocks.push_back(b);
        return static_cast<int>(spec.blocks.size()) - 1;
    };
    auto sum = [&](std::string name, int a, int c) {
        Block b;
        b.kind = BlockKind::add;
        b.name = std::move(name);
        b.inputs = {a, c};
        spec.blocks.push_back(b);
        return static_cast<int>(spec.blocks.size()) - 1;
    };

    const int e1 = unary(BlockKind::relu, "enc1.relu", conv("enc1.conv", -1, spec.in_channels, 16, 3, 2));
    const int e2 = unary(BlockKind::relu, "enc2.relu", conv("enc2.conv", e1, 16, 32, 3, 2));
    const int e3 = unary(BlockKind::relu, "enc3.relu", conv("enc3.conv", e2, 32, 64, 3, 2));
    const int d4up = unary(BlockKind::upsample, "dec4.up", conv("dec4.conv", e3, 64, 32, 3, 1), 2);
    const int d4 = unary(BlockKind::relu, "dec4.relu", sum("dec4.add", d4up, conv("dec4.lateral", e2, 32, 32, 1, 1)));
    const int d2up = unary(BlockKind::upsample, "dec2.up", conv("dec2.conv", d4, 32, 16, 3, 1), 2);
    const int d2 = unary(BlockKind::relu, "dec2.relu", sum("dec2.add", d2up, conv("dec2.lateral", e1, 16, 16, 1, 1)));
    int head = unary(BlockKind::upsample, "head.up", conv("head.conv", d2, 16, spec.out_channels, 3, 1), 2);
    if (task == Task::matting) head = unary(BlockKind::sigmoid, "head.sigmoid", head);
    if (task == Task::depth) unary(BlockKind::softplus_floor, "head.softplus", head);

    spec.insertion_points = {{"enc8", static_cast<std::size_t>(e3)},
                             {"dec4", static_cast<std::size_t>(d4)},
                             {"dec2", static_cast<std::size_t>(d2)}};

    Rng rng = Rng::derive(seed, static_cast<std::uint64_t>(task));
    std::vector<std::string> names;
    std::vector<Tensor> weights;
    for (const auto& b : spec.blocks) {
        if (b.kind != BlockKind::conv) continue;
        const bool is_head = b.name == "head.conv";
        const double fan_in = static_cast<double>(b.in_channels * b.kernel * b.kernel);
        const double stddev = is_head ? std::sqrt(1.0 / fan_in) : std::sqrt(2.0 / fan_in);
        Tensor w(Shape{b.out_channels, b.in_channels, b.kernel, b.kernel});
        for (auto& v : w.data()) v = stddev * rng.normal();
        // Start the depth head near the middle of the depth range.
        Tensor bias(Shape{b.out_channels}, is_head && task == Task::depth ? 3.0 : 0.0);
        names.push_back(b.name + ".weight");
        weights.push_back(std::move(w));
        names.push_back(b.name + ".bias");
        weights.push_back(std::move(bias));
    }
    return Network(std::move(spec), std::move(names), std::move(weights));
}

} // namespace gbrs
