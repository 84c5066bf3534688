#include "gbrs/session.hpp"

#include "gbrs/binary_io.hpp"
#include "gbrs/errors.hpp"
#include "gbrs/network_input.hpp"
#include "gbrs/objectives.hpp"
#include "gbrs/ops.hpp"

#include <chrono>
#include <cmath>
#include <cstring>
#include <sstream>

namespace gbrs {

namespace {

constexpr std::uint32_t kSnapshotVersion = 1;

std::vector<std::uint8_t> argmax_classes(const Tensor& logits) {
    const std::size_t c = logits.dim(1), hw = logits.dim(2) * logits.dim(3);
    std::vector<std::uint8_t> out(hw, 0);
    for (std::size_t i = 0; i < hw; ++i) {
        std::size_t best = 0;
        for (std::size_t k = 1; k < c; ++k) {
            if (logits[k * hw + i] > logits[best * hw + i]) best = k;
        }
        out[i] = static_cast<std::uint8_t>(best);
    }
    return out;
}

std::string fmt(double v) {
    std::ostringstream ss;
    ss.precision(17);
    ss << v;
    return ss.str();
}

struct Fnv {
    std::uint64_t h = 1469598103934665603ULL;
    void feed(const void* p, std::size_t n) {
        const auto* c = static_cast<const unsigned char*>(p);
        for (std::size_t i = 0; i < n; ++i) h = (h ^ c[i]) * 1099511628211ULL;
    }
    void tensor(const Tensor& t) {
        for (auto d : t.shape()) feed(&d, sizeof d);
        feed(t.data().data(), t.numel() * sizeof(double));
    }
};

} // namespace

std::string_view to_string(Mode mode) {
    switch (mode) {
    case Mode::gbrs: return "gbrs";
    case Mode::rgb_brs: return "rgb-brs";
    case Mode::distmap_brs: return "distmap-brs";
    }
    return "?";
}

Mode parse_mode(std::string_view text) {
    if (text == "gbrs") return Mode::gbrs;
    if (text == "rgb-brs" || text == "rgb_brs") return Mode::rgb_brs;
    if (text == "distmap-brs" || text == "distmap_brs") return Mode::distmap_brs;
    throw InputError("unknown mode '" + std::string(text) + "'");
}

double default_lambda(Task task) {
    switch (task) {
    case Task::interactive_seg: return 100.0;
    case Task::semantic_seg: return 10.0;
    case Task::matting: return 1000.0;
    case Task::depth: return 0.1;
    }
    return 0.0;
}

std::size_t default_tcs_k(Task task) { return task == Task::depth ? 32 : 0; }

std::string SessionOptions::to_text() const {
    std::ostringstream ss;
    ss << "mode=" << to_string(mode) << "\n"
       << "kind=" << to_string(kind) << "\n"
       << "layers=" << layers << "\n"
       << "tcs_k=" << tcs_k << "\n"
       << "iterations=" << config.iterations << "\n"
       << "lr=" << fmt(config.lr) << "\n"
       << "lambda_c=" << fmt(config.lambda_c) << "\n"
       << "lambda_stroke=" << fmt(config.lambda_stroke) << "\n"
       << "use_consistency=" << (config.use_consistency ? 1 : 0) << "\n"
       << "inertial_lambda=" << fmt(config.inertial_lambda) << "\n"
       << "early_stop_threshold=" << fmt(config.early_stop_threshold) << "\n"
       << "beta1=" << fmt(config.beta1) << "\n"
       << "beta2=" << fmt(config.beta2) << "\n"
       << "eps=" << fmt(config.eps) << "\n"
       << "epsilon_push=" << fmt(config.epsilon_push) << "\n";
    return ss.str();
}

SessionOptions SessionOptions::from_text(std::string_view text) {
    SessionOptions o;
    std::istringstream in{std::string(text)};
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw LoadError("session options: malformed line '" + line + "'");
        const std::string key = line.substr(0, eq), value = line.substr(eq + 1);
        try {
            if (key == "mode") o.mode = parse_mode(value);
            else if (key == "kind") o.kind = parse_gbrs_kind(value);
            else if (key == "layers") o.layers = std::stoul(value);
            else if (key == "tcs_k") o.tcs_k = std::stoi(value);
            else if (key == "iterations") o.config.iterations = std::stoul(value);
            else if (key == "lr") o.config.lr = std::stod(value);
            else if (key == "lambda_c") o.config.lambda_c = std::stod(value);
            else if (key == "lambda_stroke") o.config.lambda_stroke = std::stod(value);
            else if (key == "use_consistency") o.config.use_consistency = value == "1";
            else if (key == "inertial_lambda") o.config.inertial_lambda = std::stod(value);
            else if (key == "early_stop_threshold") o.config.early_stop_threshold = std::stod(value);
            else if (key == "beta1") o.config.beta1 = std::stod(value);
            else if (key == "beta2") o.config.beta2 = std::stod(value);
            else if (key == "eps") o.config.eps = std::stod(value);
            else if (key == "epsilon_push") o.config.epsilon_push = std::stod(value);
            else throw LoadError("session options: unknown key '" + key + "'");
        } catch (const std::logic_error&) {
            throw LoadError("session options: bad value for '" + key + "'");
        } catch (const InputError& e) {
            throw LoadError(std::string("session options: ") + e.what());
        }
    }
    return o;
}

// Losses for one refinement round, evaluated on the current forward pass.
struct Session::Objective {
    std::function<Var(Var pred)> fit;
    std::function<Var(Var pred)> consistency; // may be empty
    std::function<bool(const Tensor& pred)> satisfied; // early-stop test, may be empty
};

Session Session::create(std::shared_ptr<const Network> net, Task task, const Tensor& image, const Tensor* trimap,
                        SessionOptions options) {
    if (!net) throw ContractError("session needs a network");
    if (net->task() != task) {
        throw LoadError("checkpoint was trained for " + std::string(to_string(net->task())) + ", not " +
                        std::string(to_string(task)));
    }
    if (options.mode == Mode::distmap_brs && task != Task::interactive_seg) {
        throw ModeError("distmap-brs needs interaction maps; only interactive_seg has them");
    }
    RefinementConfig& cfg = options.config;
    if (cfg.iterations < 1) throw ContractError("iterations must be at least 1");
    if (cfg.lr < 0.0) cfg.lr = default_lr(task, options.mode, options.kind, options.layers);
    if (cfg.lambda_c < 0.0) cfg.lambda_c = default_lambda(task);
    if (options.tcs_k < 0) options.tcs_k = static_cast<int>(default_tcs_k(task));
    insertion_points_for_layers(options.layers);

    Session s;
    s.net_ = std::move(net);
    s.options_ = options;
    s.image_ = image;
    if (trimap) s.trimap_ = *trimap;
    if (task == Task::matting && s.trimap_.empty()) throw InputError("matting sessions need a trimap");
    s.rebuild_input();
    s.height_ = image.dim(1);
    s.width_ = image.dim(2);

    if (options.mode == Mode::gbrs) {
        s.placements_ = make_placements(*s.net_, s.cache_, options.kind, options.layers,
                                        static_cast<std::size_t>(options.tcs_k));
    } else {
        s.residual_channels_ = options.mode == Mode::rgb_brs ? std::vector<std::size_t>{0, 1, 2}
                                                             : std::vector<std::size_t>{3, 4};
        s.residual_ = Tensor(Shape{1, s.residual_channels_.size(), s.height_, s.width_});
    }
    for (Tensor* p : s.param_ptrs()) s.initial_params_.push_back(*p);
    if (s.task() == Task::semantic_seg) s.state_.finetune.assign(s.height_ * s.width_, static_cast<int>(kNumClasses));
    s.state_.pred_current = s.predict();
    s.state_.pred_prev = s.state_.pred_current;
    return s;
}

std::vector<Tensor*> Session::param_ptrs() {
    std::vector<Tensor*> out;
    if (options_.mode == Mode::gbrs) {
        for (auto& p : placements_) {
            for (Tensor* t : p.params.tensors()) out.push_back(t);
        }
    } else {
        out.push_back(&residual_);
    }
    return out;
}

std::vector<Tensor> Session::trainable_parameters() const {
    std::vector<Tensor> out;
    for (Tensor* t : const_cast<Session*>(this)->param_ptrs()) out.push_back(*t);
    return out;
}

std::vector<std::string> Session::parameter_names() const {
    std::vector<std::string> out;
    if (options_.mode != Mode::gbrs) return {std::string(to_string(options_.mode)) + ".residual"};
    for (const auto& p : placements_) {
        for (const auto& n : p.params.tensor_names()) out.push_back(p.insertion_point + "." + n);
    }
    return out;
}

void Session::store_params(State& s) const { s.params = trainable_parameters(); }

void Session::load_params(const State& s) {
    auto ptrs = param_ptrs();
    for (std::size_t i = 0; i < ptrs.size(); ++i) *ptrs[i] = s.params[i];
}

void Session::rebuild_input() {
    const Tensor* trimap = trimap_.empty() ? nullptr : &trimap_;
    input_ = build_network_input(net_->spec(), image_, trimap, state_.clicks);
    net_->evaluate(input_, &cache_);
}

Var Session::forward(Graph& g, bool trainable, std::vector<Var>& bound) const {
    bound.clear();
    auto bind = [&](const Tensor& t) {
        const Var v = trainable ? g.parameter(t) : g.constant(t);
        bound.push_back(v);
        return v;
    };
    if (options_.mode == Mode::gbrs) {
        std::vector<std::vector<Var>> vars;
        for (const auto& p : placements_) {
            std::vector<Var> vs;
            for (const Tensor* t : p.params.tensors()) vs.push_back(bind(*t));
            vars.push_back(std::move(vs));
        }
        const LayerHooks hooks = make_hooks(*net_, placements_, vars);
        return net_->forward(g, g.constant(input_), hooks, &cache_);
    }
    const Var base = g.constant(input_);
    const Var shifted = ops::add(ops::gather_channels(base, residual_channels_), bind(residual_));
    return net_->forward(g, ops::scatter_channels(base, shifted, residual_channels_), {}, &cache_);
}

Tensor Session::predict() {
    Graph g;
    std::vector<Var> bound;
    Tensor out = forward(g, false, bound).value();
    if (!out.all_finite()) throw NumericError("prediction is not finite");
    return out;
}

void Session::check_click(const Click& c) const {
    if (c.u < 0 || c.v < 0 || static_cast<std::size_t>(c.u) >= height_ || static_cast<std::size_t>(c.v) >= width_) {
        throw InputError("click (" + std::to_string(c.u) + "," + std::to_string(c.v) + ") outside the " +
                         std::to_string(height_) + "x" + std::to_string(width_) + " image");
    }
    if (!(c.radius > 0.0) || !std::isfinite(c.radius)) throw InputError("click radius must be positive");
    if (!std::isfinite(c.label)) throw InputError("click label must be finite");
}

RefinementReport Session::optimize(const Objective& objective, std::size_t max_steps, bool early_stop) {
    const auto start = std::chrono::steady_clock::now();
    const RefinementConfig& cfg = options_.config;
    RefinementReport report;
    report.lr = cfg.lr;
    report.beta1 = cfg.beta1;
    report.beta2 = cfg.beta2;
    report.eps = cfg.eps;

    Adam adam(AdamConfig{cfg.lr, cfg.beta1, cfg.beta2, cfg.eps});
    adam.state() = std::move(state_.adam);
    std::vector<Tensor*> params = param_ptrs();

    for (std::size_t step = 0;; ++step) {
        const bool last = step == max_steps;
        Graph g;
        std::vector<Var> bound;
        const Var pred = forward(g, !last, bound);
        const Var fit = objective.fit(pred);
        Var total = fit;
        double c_value = 0.0;
        if (objective.consistency) {
            const Var c = objective.consistency(pred);
            c_value = c.value().item();
            total = ops::add(total, c);
        }
        if (cfg.inertial_lambda > 0.0) total = ops::add(total, loss_inertial(bound, initial_params_, cfg.inertial_lambda));
        report.loss_r.push_back(fit.value().item());
        report.loss_c.push_back(c_value);
        report.loss_total.push_back(total.value().item());
        if (!std::isfinite(report.loss_total.back()) || !pred.value().all_finite()) {
            throw NumericError("refinement produced a non-finite value at step " + std::to_string(step));
        }
        const bool stop = early_stop && objective.satisfied && objective.satisfied(pred.value());
        if (last || stop) {
            state_.pred_current = pred.value();
            report.early_stopped = stop && !last;
            break;
        }
        g.backward(total);
        std::vector<Tensor> grads;
        for (auto& v : bound) grads.push_back(v.grad());
        adam.step(params, grads);
        for (auto& p : placements_) project_params(p.params);
        ++report.iterations;
    }
    state_.adam = std::move(adam.state());
    report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return report;
}

RefinementReport Session::add_click(const Click& click) {
    check_click(click);
    const Task t = task();
    if (t == Task::interactive_seg && click.label != 1.0 && click.label != -1.0) {
        throw InputError("interactive_seg click label must be +1 or -1");
    }
    if (t == Task::semantic_seg &&
        (click.label < 0 || click.label >= double(kNumClasses) || click.label != std::floor(click.label))) {
        throw InputError("class id must be an integer in 0.." + std::to_string(kNumClasses - 1));
    }
    if (t == Task::matting && (click.label < 0.0 || click.label > 1.0)) throw InputError("alpha label outside [0,1]");
    if (t == Task::depth && click.label <= 0.0) throw InputError("depth label must be positive");

    State saved = state_;
    store_params(saved);
    history_.push_back(saved);
    try {
        state_.clicks.push_back(click);
        if (t == Task::interactive_seg) {
            rebuild_input();
            state_.pred_current = predict();
        }
        state_.pred_prev = state_.pred_current;

        const RefinementConfig& cfg = options_.config;
        const Tensor& prev = state_.pred_prev;
        const std::vector<Click>& clicks = state_.clicks;
        Objective obj;
        std::vector<std::uint8_t> prev_classes, ignore;
        Tensor mask;
        switch (t) {
        case Task::interactive_seg:
            obj.fit = [&](Var p) { return loss_click_binary(p, clicks); };
            mask = build_attention_mask(MaskKind::binary_disk, click, height_, width_);
            obj.satisfied = [&](const Tensor& p) {
                double worst = 0.0;
                for (const auto& c : clicks) {
                    worst = std::max(worst, std::abs(c.label - p[static_cast<std::size_t>(c.u) * width_ + c.v]));
                }
                return worst < cfg.early_stop_threshold;
            };
            break;
        case Task::semantic_seg:
            obj.fit = [&](Var p) { return loss_click_ce(p, clicks); };
            prev_classes = argmax_classes(prev);
            ignore.assign(height_ * width_, 0);
            for (auto i : disk_pixels(click.u, click.v, click.radius, height_, width_)) ignore[i] = 1;
            break;
        case Task::matting:
            obj.fit = [&](Var p) { return loss_click_value(p, clicks, Reduction::mean); };
            mask = build_attention_mask(MaskKind::inverse_gaussian, click, height_, width_);
            break;
        case Task::depth:
            obj.fit = [&](Var p) { return loss_click_value(p, clicks, Reduction::sum); };
            mask = build_attention_mask(MaskKind::inverse_gaussian, click, height_, width_);
            break;
        }
        if (cfg.use_consistency) {
            if (t == Task::semantic_seg) {
                obj.consistency = [&](Var p) { return loss_consistency_ce(p, prev_classes, ignore, cfg.lambda_c); };
            } else {
                obj.consistency = [&](Var p) { return loss_consistency_mse(p, prev, mask, cfg.lambda_c); };
            }
        }
        return optimize(obj, cfg.iterations, t == Task::interactive_seg);
    } catch (...) {
        undo();
        throw;
    }
}

RefinementReport Session::push(const Click& click, PushDirection direction) {
    if (task() != Task::matting && task() != Task::depth) {
        throw ModeError("push mode needs a matting or depth session, not " + std::string(to_string(task())));
    }
    Click c = click;
    c.label = 0.0;
    check_click(c);
    State saved = state_;
    store_params(saved);
    history_.push_back(saved);
    try {
        state_.pred_prev = state_.pred_current;
        const Tensor& prev = state_.pred_prev;
        const double eps = options_.config.epsilon_push;
        Objective obj;
        obj.fit = [&](Var p) { return loss_push(p, prev, c, direction, eps); };
        return optimize(obj, 1, false);
    } catch (...) {
        undo();
        throw;
    }
}

RefinementReport Session::apply_stroke(std::span<const StrokePoint> stroke) {
    if (task() != Task::semantic_seg) {
        throw ModeError("strokes need a semantic_seg session, not " + std::string(to_string(task())));
    }
    if (stroke.empty()) throw ContractError("stroke has no points");
    for (const auto& p : stroke) {
        check_click(Click{p.u, p.v, p.radius, 0.0});
        if (p.class_id < 0 || p.class_id >= static_cast<int>(kNumClasses)) {
            throw InputError("stroke class " + std::to_string(p.class_id) + " outside 0.." +
                             std::to_string(kNumClasses - 1));
        }
    }
    State saved = state_;
    store_params(saved);
    history_.push_back(saved);
    try {
        std::vector<std::uint8_t> ignore(height_ * width_, 0);
        for (const auto& p : stroke) {
            for (auto i : disk_pixels(p.u, p.v, p.radius, height_, width_)) {
                state_.finetune[i] = p.class_id;
                ignore[i] = 1;
            }
        }
        state_.pred_prev = state_.pred_current;
        const std::vector<std::uint8_t> prev_classes = argmax_classes(state_.pred_prev);
        const RefinementConfig& cfg = options_.config;
        const std::vector<int>& finetune = state_.finetune;
        Objective obj;
        obj.fit = [&](Var p) { return loss_stroke_ce(p, finetune); };
        if (cfg.use_consistency) {
            obj.consistency = [&](Var p) { return loss_consistency_ce(p, prev_classes, ignore, cfg.lambda_stroke); };
        }
        return optimize(obj, cfg.iterations, false);
    } catch (...) {
        undo();
        throw;
    }
}

void Session::undo() {
    if (history_.empty()) throw ContractError("nothing to undo");
    State s = std::move(history_.back());
    history_.pop_back();
    load_params(s);
    const bool clicks_changed = s.clicks != state_.clicks;
    s.params.clear();
    state_ = std::move(s);
    if (task() == Task::interactive_seg && clicks_changed) rebuild_input();
}

std::uint64_t Session::state_hash() const {
    Fnv f;
    for (const auto& t : trainable_parameters()) f.tensor(t);
    f.feed(&state_.adam.step, sizeof state_.adam.step);
    for (const auto& t : state_.adam.m) f.tensor(t);
    for (const auto& t : state_.adam.v) f.tensor(t);
    for (const auto& c : state_.clicks) {
        f.feed(&c.u, sizeof c.u);
        f.feed(&c.v, sizeof c.v);
        f.feed(&c.radius, sizeof c.radius);
        f.feed(&c.label, sizeof c.label);
    }
    if (!state_.finetune.empty()) f.feed(state_.finetune.data(), state_.finetune.size() * sizeof(int));
    f.tensor(state_.pred_current);
    f.tensor(state_.pred_prev);
    return f.h;
}

std::string Session::snapshot() const {
    ByteWriter w;
    w.bytes("GBSS");
    w.u32(kSnapshotVersion);
    w.string(options_.to_text());
    w.u64(net_->weight_hash());
    w.tensor(image_);
    w.u32(trimap_.empty() ? 0 : 1);
    if (!trimap_.empty()) w.tensor(trimap_);
    w.u32(static_cast<std::uint32_t>(state_.clicks.size()));
    for (const auto& c : state_.clicks) {
        w.u32(static_cast<std::uint32_t>(c.u));
        w.u32(static_cast<std::uint32_t>(c.v));
        w.f64(c.radius);
        w.f64(c.label);
    }
    w.u32(static_cast<std::uint32_t>(state_.finetune.size()));
    for (int v : state_.finetune) w.u32(static_cast<std::uint32_t>(v));
    w.u32(static_cast<std::uint32_t>(placements_.size()));
    for (const auto& p : placements_) {
        w.string(p.insertion_point);
        w.u32(static_cast<std::uint32_t>(p.params.channel_subset.size()));
        for (auto c : p.params.channel_subset) w.u64(c);
    }
    const auto names = parameter_names();
    const auto params = trainable_parameters();
    w.u32(static_cast<std::uint32_t>(params.size()));
    for (std::size_t i = 0; i < params.size(); ++i) {
        w.string(names[i]);
        w.tensor(params[i]);
    }
    w.u64(state_.adam.step);
    w.u32(static_cast<std::uint32_t>(state_.adam.m.size()));
    for (std::size_t i = 0; i < state_.adam.m.size(); ++i) {
        w.tensor(state_.adam.m[i]);
        w.tensor(state_.adam.v[i]);
    }
    w.tensor(state_.pred_current);
    w.tensor(state_.pred_prev);
    return w.buffer();
}

Session Session::restore(std::shared_ptr<const Network> net, std::string_view blob) {
    if (!net) throw ContractError("restore needs a network");
    ByteReader r(blob, "session snapshot");
    if (r.bytes(4) != "GBSS") r.fail("bad magic");
    const std::uint32_t version = r.u32();
    if (version != kSnapshotVersion) r.fail("unsupported version " + std::to_string(version));
    const SessionOptions options = SessionOptions::from_text(r.string());
    if (r.u64() != net->weight_hash()) r.fail("snapshot was taken with a different network");
    const Tensor image = r.tensor();
    Tensor trimap;
    if (r.u32() != 0) trimap = r.tensor();

    Session s;
    try {
        s = create(net, net->task(), image, trimap.empty() ? nullptr : &trimap, options);
    } catch (const Error& e) {
        r.fail(std::string("cannot rebuild session: ") + e.what());
    }
    const std::uint32_t nclicks = r.u32();
    for (std::uint32_t i = 0; i < nclicks; ++i) {
        Click c;
        c.u = static_cast<int>(r.u32());
        c.v = static_cast<int>(r.u32());
        c.radius = r.f64();
        c.label = r.f64();
        s.state_.clicks.push_back(c);
    }
    const std::uint32_t nfine = r.u32();
    if (nfine != s.state_.finetune.size()) r.fail("finetune mask size mismatch");
    for (auto& v : s.state_.finetune) v = static_cast<int>(r.u32());
    const std::uint32_t nplace = r.u32();
    if (nplace != s.placements_.size()) r.fail("placement count mismatch");
    for (auto& p : s.placements_) {
        if (r.string() != p.insertion_point) r.fail("placement mismatch");
        const std::uint32_t k = r.u32();
        std::vector<std::size_t> subset(k);
        for (auto& c : subset) c = r.u64();
        if (subset != p.params.channel_subset) {
            // The stored selection wins; it came from the original first pass.
            const std::size_t block = net->spec().insertion(p.insertion_point).block;
            const Tensor& fm = s.cache_.outputs.at(block);
            try {
                p.params = identity_params(p.params.kind, fm.dim(1), fm.dim(2), fm.dim(3), subset);
            } catch (const Error& e) {
                r.fail(e.what());
            }
        }
    }
    auto ptrs = s.param_ptrs();
    const auto names = s.parameter_names();
    if (r.u32() != ptrs.size()) r.fail("parameter count mismatch");
    for (std::size_t i = 0; i < ptrs.size(); ++i) {
        if (r.string() != names[i]) r.fail("parameter name mismatch");
        Tensor t = r.tensor();
        if (t.shape() != ptrs[i]->shape()) r.fail("parameter '" + names[i] + "' has the wrong shape");
        *ptrs[i] = std::move(t);
    }
    s.state_.adam.step = r.u64();
    const std::uint32_t nmom = r.u32();
    if (nmom != 0 && nmom != ptrs.size()) r.fail("optimizer moment count mismatch");
    for (std::uint32_t i = 0; i < nmom; ++i) {
        s.state_.adam.m.push_back(r.tensor());
        s.state_.adam.v.push_back(r.tensor());
        if (s.state_.adam.m.back().shape() != ptrs[i]->shape() || s.state_.adam.v.back().shape() != ptrs[i]->shape()) {
            r.fail("optimizer moment shape mismatch");
        }
    }
    Tensor current = r.tensor();
    Tensor prev = r.tensor();
    if (!r.at_end()) r.fail("trailing bytes");
    if (current.shape() != s.state_.pred_current.shape() || prev.shape() != current.shape()) {
        r.fail("prediction shape mismatch");
    }
    s.state_.pred_current = std::move(current);
    s.state_.pred_prev = std::move(prev);
    if (s.task() == Task::interactive_seg && !s.state_.clicks.empty()) s.rebuild_input();
    return s;
}

} // namespace gbrs
