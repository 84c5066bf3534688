// Acceptance run: one PASS/FAIL line per criterion. Needs the trained
// checkpoints (gbrs train) for the criteria that refine real predictions.

#define DOCTEST_CONFIG_IMPLEMENT
#include "doctest.h"

#include "gbrs/benchmark.hpp"
#include "gbrs/checkpoint.hpp"
#include "gbrs/distance_transform.hpp"
#include "gbrs/experiment.hpp"
#include "gbrs/objectives.hpp"
#include "support/gradcheck.hpp"
#include "support/oracles.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

using namespace gbrs;
using namespace gbrs::testing;
namespace fs = std::filesystem;

namespace {

const GbrsKind kKinds[] = {GbrsKind::sb, GbrsKind::bmsb, GbrsKind::bmsb_m, GbrsKind::bmconv};
const Task kTasks[] = {Task::interactive_seg, Task::semantic_seg, Task::matting, Task::depth};

struct Outcome {
    bool pass = false;
    std::string detail;
};

struct Args {
    fs::path checkpoints = "checkpoints";
    fs::path out = "acceptance_out";
    fs::path waiver;
    std::vector<std::string> only;
};

std::string fmt(double v, int precision = 4) {
    std::ostringstream s;
    s.precision(precision);
    s << v;
    return s.str();
}

std::shared_ptr<const Network> load(const Args& args, Task task) {
    const fs::path path = args.checkpoints / (std::string(to_string(task)) + ".ckpt");
    return std::make_shared<const Network>(load_checkpoint(path.string()));
}

// ---- identity insertion

Outcome identity_insertion(const Args& args) {
    std::mt19937_64 rng(41);
    double worst_bmconv = 0.0;
    std::size_t runs = 0, inexact = 0;
    for (Task task : kTasks) {
        auto net = load(args, task);
        for (int i = 0; i < 20; ++i) {
            const Tensor x = random_tensor({1, network_input_channels(task), 64, 64}, rng, 0.0, 1.0);
            const Tensor bare = net->evaluate(x);
            for (const std::string& point : insertion_points_for_layers(3)) {
                const std::size_t block = net->spec().insertion(point).block;
                const Shape s = net->block_shape(block, 64, 64);
                for (GbrsKind kind : kKinds) {
                    const GbrsParams p = identity_params(kind, s[1], s[2], s[3]);
                    Graph g;
                    std::vector<Var> vars;
                    for (const Tensor* t : p.tensors()) vars.push_back(g.constant(*t));
                    const LayerHooks hooks{{block, [&](Var m) { return apply_gbrs(m, p, vars); }}};
                    const Tensor out = net->forward(g, g.constant(x), hooks).value();
                    ++runs;
                    if (kind == GbrsKind::bmconv) {
                        worst_bmconv = std::max(worst_bmconv, max_abs_diff(out, bare));
                    } else if (!out.identical(bare)) {
                        ++inexact;
                    }
                }
            }
        }
    }
    return {worst_bmconv <= 1e-12 && inexact == 0,
            std::to_string(runs) + " spliced passes, bmconv max diff " + fmt(worst_bmconv) + ", " +
                std::to_string(inexact) + " non-bitwise sb/bmsb/bmsb-m"};
}

// ---- gradient suite

using SeededCheck = std::function<GradCheckResult(std::mt19937_64&)>;

GradCheckResult unary(std::mt19937_64& rng, Shape shape, const std::function<Var(Var)>& op, double lo = -1.0,
                      double hi = 1.0) {
    const Tensor x = random_tensor(shape, rng, lo, hi);
    const Tensor proj = projection_weights(op(Graph().constant(x)).shape(), rng);
    return check_gradients({x}, [&](Graph& g, const std::vector<Var>& p) { return project(g, op(p[0]), proj); });
}

GradCheckResult binary(std::mt19937_64& rng, ops::ElementwiseKind kind, Shape a, Shape b) {
    const Tensor proj = projection_weights(a, rng);
    return check_gradients({random_tensor(a, rng), random_tensor(b, rng)}, [&](Graph& g, const std::vector<Var>& p) {
        return project(g, ops::elementwise(kind, p[0], p[1]), proj);
    });
}

GbrsParams random_params(GbrsKind kind, std::size_t c, std::size_t h, std::size_t w, std::mt19937_64& rng,
                         std::vector<std::size_t> subset) {
    GbrsParams p = identity_params(kind, c, h, w, std::move(subset));
    for (Tensor* t : p.tensors()) *t = random_tensor(t->shape(), rng, -0.5, 0.5);
    if (kind == GbrsKind::bmsb_m) p.w[0] = std::uniform_real_distribution<double>(0.1, 0.9)(rng);
    return p;
}

std::vector<std::pair<std::string, SeededCheck>> gradient_checks() {
    using K = ops::ElementwiseKind;
    std::vector<std::pair<std::string, SeededCheck>> checks;
    for (auto [stride, pad] : {std::pair{1, 1}, {2, 1}, {1, 0}}) {
        checks.emplace_back("conv2d s" + std::to_string(stride) + " p" + std::to_string(pad),
                            [stride, pad](std::mt19937_64& rng) {
                                const Tensor x = random_tensor({1, 2, 5, 5}, rng);
                                const Tensor w = random_tensor({3, 2, 3, 3}, rng), b = random_tensor({3}, rng);
                                Graph probe;
                                const Tensor proj = projection_weights(
                                    ops::conv2d(probe.constant(x), probe.constant(w), probe.constant(b), stride, pad)
                                        .shape(),
                                    rng);
                                return check_gradients({x, w, b}, [&](Graph& g, const std::vector<Var>& p) {
                                    return project(g, ops::conv2d(p[0], p[1], p[2], stride, pad), proj);
                                });
                            });
    }
    for (auto [name, kind] : {std::pair{"add", K::add}, {"sub", K::sub}, {"mul", K::mul}}) {
        checks.emplace_back(std::string(name) + " same shape",
                            [kind](std::mt19937_64& rng) { return binary(rng, kind, {1, 3, 4, 4}, {1, 3, 4, 4}); });
        checks.emplace_back(std::string(name) + " per channel",
                            [kind](std::mt19937_64& rng) { return binary(rng, kind, {1, 3, 4, 4}, {3}); });
        checks.emplace_back(std::string(name) + " per position",
                            [kind](std::mt19937_64& rng) { return binary(rng, kind, {1, 3, 4, 4}, {4, 4}); });
        checks.emplace_back(std::string(name) + " scalar",
                            [kind](std::mt19937_64& rng) { return binary(rng, kind, {1, 3, 4, 4}, {}); });
    }
    const Shape s{1, 3, 4, 4};
    checks.emplace_back("relu", [s](auto& rng) { return unary(rng, s, ops::relu); });
    checks.emplace_back("sigmoid", [s](auto& rng) { return unary(rng, s, ops::sigmoid); });
    checks.emplace_back("softplus", [s](auto& rng) { return unary(rng, s, ops::softplus); });
    checks.emplace_back("log", [s](auto& rng) { return unary(rng, s, ops::log, 0.5, 2.0); });
    checks.emplace_back("abs", [s](auto& rng) { return unary(rng, s, ops::abs); });
    checks.emplace_back("square", [s](auto& rng) { return unary(rng, s, ops::square); });
    checks.emplace_back("scale", [s](auto& rng) { return unary(rng, s, [](Var x) { return ops::scale(x, -1.7); }); });
    checks.emplace_back("add_scalar",
                        [s](auto& rng) { return unary(rng, s, [](Var x) { return ops::add_scalar(x, 0.3); }); });
    checks.emplace_back("channel_log_softmax", [s](auto& rng) { return unary(rng, s, ops::channel_log_softmax, -2, 2); });
    checks.emplace_back("upsample_bilinear x2",
                        [s](auto& rng) { return unary(rng, s, [](Var x) { return ops::upsample_bilinear(x, 2); }); });
    checks.emplace_back("upsample_bilinear x4",
                        [](auto& rng) { return unary(rng, {1, 2, 3, 3}, [](Var x) { return ops::upsample_bilinear(x, 4); }); });
    checks.emplace_back("sum", [s](auto& rng) { return unary(rng, s, ops::sum); });
    checks.emplace_back("mean", [s](auto& rng) { return unary(rng, s, ops::mean); });
    checks.emplace_back("gather", [](auto& rng) {
        const std::vector<std::size_t> picks{3, 0, 7, 3};
        return unary(rng, {2, 2, 2}, [&](Var x) { return ops::gather(x, picks); });
    });
    checks.emplace_back("gather_channels", [s](auto& rng) {
        const std::vector<std::size_t> chans{2, 0};
        return unary(rng, s, [&](Var x) { return ops::gather_channels(x, chans); });
    });
    checks.emplace_back("scatter_channels", [](auto& rng) {
        const std::vector<std::size_t> chans{2, 0};
        const Tensor proj = projection_weights({1, 4, 3, 3}, rng);
        return check_gradients({random_tensor({1, 4, 3, 3}, rng), random_tensor({1, 2, 3, 3}, rng)},
                               [&](Graph& g, const std::vector<Var>& p) {
                                   return project(g, ops::scatter_channels(p[0], p[1], chans), proj);
                               });
    });
    checks.emplace_back("channel_weighted_map", [](auto& rng) {
        const Tensor proj = projection_weights({1, 3, 2, 4}, rng);
        return check_gradients({random_tensor({2, 4}, rng), random_tensor({3}, rng)},
                               [&](Graph& g, const std::vector<Var>& p) {
                                   return project(g, ops::channel_weighted_map(p[0], p[1]), proj);
                               });
    });
    checks.emplace_back("reshape", [s](auto& rng) {
        return unary(rng, s, [](Var x) { return ops::sigmoid(ops::reshape(x, Shape{3, 16})); });
    });

    for (GbrsKind kind : kKinds) {
        for (bool tcs : {false, true}) {
            checks.emplace_back(std::string("layer ") + std::string(to_string(kind)) + (tcs ? " tcs" : ""),
                                [kind, tcs](std::mt19937_64& rng) {
                                    std::vector<std::size_t> subset;
                                    if (tcs) subset = {0, 2, 3};
                                    const GbrsParams p = random_params(kind, 5, 3, 4, rng, subset);
                                    std::vector<Tensor> params{random_tensor({1, 5, 3, 4}, rng)};
                                    for (const Tensor* t : p.tensors()) params.push_back(*t);
                                    const Tensor r = projection_weights({1, 5, 3, 4}, rng);
                                    return check_gradients(params, [&](Graph& g, const std::vector<Var>& v) {
                                        const std::vector<Var> layer(v.begin() + 1, v.end());
                                        return project(g, apply_gbrs(v[0], p, layer), r);
                                    });
                                });
        }
    }

    // Losses. Inputs are drawn per seed; the click sets stay fixed.
    auto loss = [&](std::string name, Shape shape, std::function<Var(Var, std::mt19937_64&)> build) {
        checks.emplace_back("loss " + name, [shape, build](std::mt19937_64& rng) {
            // Draw the loss inputs first so the build sees the same ones on every evaluation.
            std::mt19937_64 fixed(rng());
            const Tensor x = random_tensor(shape, rng, -1.5, 1.5);
            return check_gradients({x}, [&](Graph&, const std::vector<Var>& p) {
                std::mt19937_64 again = fixed;
                return build(p[0], again);
            });
        });
    };
    const std::vector<Click> bin{{0, 1, 1, 1}, {2, 2, 1, -1}, {1, 3, 1, 1}};
    const std::vector<Click> cls{{0, 1, 1, 2}, {2, 2, 1, 0}};
    const std::vector<Click> val{{0, 1, 1, 0.3}, {2, 2, 1, 0.9}};
    loss("click_binary", {1, 1, 3, 4}, [bin](Var x, auto&) { return loss_click_binary(x, bin); });
    loss("consistency_mse", {1, 1, 3, 4}, [](Var x, auto& rng) {
        const Tensor prev = random_tensor({1, 1, 3, 4}, rng);
        return loss_consistency_mse(x, prev, random_tensor({3, 4}, rng, 0, 1), 3.0);
    });
    loss("click_ce", {1, 4, 3, 4}, [cls](Var x, auto&) { return loss_click_ce(x, cls); });
    loss("consistency_ce", {1, 4, 3, 4}, [](Var x, auto& rng) {
        std::vector<std::uint8_t> prev(12), ignore(12);
        for (std::size_t i = 0; i < 12; ++i) {
            prev[i] = std::uint8_t(rng() % 4);
            ignore[i] = std::uint8_t(rng() % 3 == 0);
        }
        return loss_consistency_ce(x, prev, ignore, 2.0);
    });
    loss("stroke_ce", {1, 4, 3, 4}, [](Var x, auto& rng) {
        std::vector<int> stroke(12, 4);
        for (int i = 0; i < 3; ++i) stroke[rng() % 12] = int(rng() % 4);
        return loss_stroke_ce(x, stroke);
    });
    loss("click_value mean", {1, 1, 3, 4}, [val](Var x, auto&) { return loss_click_value(x, val, Reduction::mean); });
    loss("click_value sum", {1, 1, 3, 4}, [val](Var x, auto&) { return loss_click_value(x, val, Reduction::sum); });
    for (auto dir : {PushDirection::up, PushDirection::down}) {
        loss(dir == PushDirection::up ? "push up" : "push down", {1, 1, 3, 4}, [val, dir](Var x, auto& rng) {
            return loss_push(x, random_tensor({1, 1, 3, 4}, rng), val[0], dir);
        });
    }
    checks.emplace_back("loss inertial", [](std::mt19937_64& rng) {
        const std::vector<Tensor> initial{random_tensor({5}, rng), random_tensor({2, 2}, rng)};
        return check_gradients({random_tensor({5}, rng), random_tensor({2, 2}, rng)},
                               [&](Graph&, const std::vector<Var>& v) { return loss_inertial(v, initial, 0.7); });
    });
    return checks;
}

Outcome gradient_suite(const Args&) {
    const auto checks = gradient_checks();
    double worst = 0.0;
    std::string worst_name;
    std::size_t entries = 0;
    for (const auto& [name, check] : checks) {
        for (std::uint64_t seed = 0; seed < 20; ++seed) {
            std::mt19937_64 rng(1000 + seed);
            const GradCheckResult r = check(rng);
            entries += r.checked;
            if (r.max_rel_error > worst) {
                worst = r.max_rel_error;
                worst_name = name + " seed " + std::to_string(seed) + " " + r.worst;
            }
        }
    }
    return {worst < 1e-5, std::to_string(checks.size()) + " checks x 20 seeds, " + std::to_string(entries) +
                              " entries, worst rel " + fmt(worst) + (worst_name.empty() ? "" : " (" + worst_name + ")")};
}

// ---- oracle equivalence

bool same_click(const Click& a, const Click& b) {
    return a.u == b.u && a.v == b.v && a.radius == b.radius && a.label == b.label;
}

Outcome oracle_equivalence(const Args&) {
    constexpr int kInstances = 1000;
    std::mt19937_64 rng(77);
    std::size_t dt = 0, otsu = 0, cls = 0, reg = 0, topk = 0;
    for (int t = 0; t < kInstances; ++t) {
        const int h = 1 + int(rng() % 32), w = 1 + int(rng() % 32);
        std::bernoulli_distribution bit(0.3 + 0.65 * double(rng() % 100) / 100.0);
        std::vector<std::uint8_t> mask(h * w);
        for (auto& m : mask) m = bit(rng);
        dt += distance_transform(mask, h, w) == oracle::distance_transform(mask, h, w);

        // Mixtures, plus coarse values so histogram ties occur.
        std::vector<double> v(2 + rng() % 1023);
        std::normal_distribution<double> a(0.0, 1.0), b(1.0 + double(rng() % 400) / 100.0, 0.5);
        for (std::size_t i = 0; i < v.size(); ++i) v[i] = t % 3 == 0 ? double(rng() % 7) : i % 3 ? a(rng) : b(rng);
        v[0] = 0.0;
        v[1] = 1.0;
        otsu += otsu_threshold(v).bin == oracle::otsu_bin(v);

        const int ch = 4 + int(rng() % 29), cw = 4 + int(rng() % 29);
        auto gt = oracle::random_blobs(ch, cw, rng);
        auto pred = oracle::random_blobs(ch, cw, rng);
        const bool is_binary = t % 2 == 0;
        if (!is_binary) {
            for (auto& g : gt) g = g ? std::uint8_t(1 + rng() % 5) : 0;
            for (auto& p : pred) p = p ? std::uint8_t(1 + rng() % 5) : 0;
        }
        const GeneratedClick got = generate_click_classification(pred, gt, ch, cw, is_binary);
        const auto ref = oracle::click_classification(pred, gt, ch, cw, is_binary);
        cls += got.converged == !ref.has_value() && (!ref || same_click(got.click, *ref));

        std::vector<double> gr(ch * cw), pr(ch * cw);
        std::uniform_real_distribution<double> noise(-0.05, 0.05);
        auto blob = oracle::random_blobs(ch, cw, rng);
        for (int i = 0; i < ch * cw; ++i) {
            gr[i] = 1.0 + 0.1 * (i % 7);
            pr[i] = gr[i] + noise(rng) + (blob[i] ? (t % 4 < 2 ? 0.8 : -0.8) : 0.0);
        }
        const int k = 1 + 2 * int(rng() % 8);
        const GeneratedClick rgot = generate_click_regression(pr, gr, {}, ch, cw, 1e-6, k);
        const auto rref = oracle::click_regression(pr, gr, ch, cw, 1e-6, k);
        reg += rgot.converged == !rref.has_value() && (!rref || same_click(rgot.click, *rref));

        const std::size_t c = 1 + rng() % 64;
        Tensor m({1, c, 1 + rng() % 4, 1 + rng() % 4});
        for (auto& x : m.data()) x = t % 2 ? double(rng() % 3) : noise(rng);
        const std::size_t kk = 1 + rng() % c;
        topk += top_k_channels(m, kk) == oracle::top_k(m, kk);
    }
    const bool pass = dt == kInstances && otsu == kInstances && cls == kInstances && reg == kInstances &&
                      topk == kInstances;
    auto n = [](std::size_t x) { return std::to_string(x); };
    return {pass, "matches of " + n(kInstances) + ": distance transform " + n(dt) + ", otsu " + n(otsu) +
                      ", classification clicks " + n(cls) + ", regression clicks " + n(reg) + ", top-k " + n(topk)};
}

// ---- refinement efficacy and localization

struct Runs {
    std::map<Task, BenchmarkResult> bmconv;
    std::map<Task, BenchmarkResult> sb;
};

BenchmarkResult bench(const Args& args, Task task, GbrsKind kind, const std::vector<Sample>& eval) {
    BenchmarkConfig config;
    config.options.kind = kind;
    config.options.layers = 1;
    config.clicks = 20;
    return run_benchmark(load(args, task), eval, config);
}

bool better_or_equal(Task task, double a, double b) {
    return metric_direction(task) == Direction::higher_better ? a >= b : a <= b;
}

Outcome efficacy(const Args& args, Runs& runs) {
    const auto eval = experiment::eval_set();
    bool pass = true;
    std::string detail;
    for (Task task : kTasks) {
        const BenchmarkResult& r = runs.bmconv[task] = bench(args, task, GbrsKind::bmconv, eval);
        const auto& s = r.mean_series;
        const double initial = s.front(), final = s.back();
        const double gain = metric_direction(task) == Direction::higher_better ? (final - initial) / std::abs(initial)
                                                                               : (initial - final) / std::abs(initial);
        std::size_t monotone = 0;
        for (std::size_t k = 1; k < s.size(); ++k) monotone += better_or_equal(task, s[k], s[k - 1]);
        const double frac = double(monotone) / double(s.size() - 1);
        const bool ok = gain >= 0.10 && frac >= 0.90 && r.records.size() == eval.size();
        pass = pass && ok;
        detail += std::string(detail.empty() ? "" : "; ") + std::string(to_string(task)) + " " +
                  primary_metric_name(task) + " " + fmt(initial) + "->" + fmt(final) + " (" +
                  (initial == 0.0 ? std::string("from zero") : fmt(100 * gain, 3) + "%") + ", " + std::to_string(monotone) + "/" + std::to_string(s.size() - 1) +
                  " steps)";
    }
    return {pass, detail};
}

Outcome localization(const Args& args, Runs& runs) {
    const auto eval = experiment::eval_set();
    fs::create_directories(args.out);
    std::ofstream report(args.out / "localization.csv");
    report << "task,kind,metric,auc,initial,final\n";
    bool pass = true;
    std::string detail;
    for (Task task : {Task::interactive_seg, Task::matting}) {
        if (!runs.bmconv.count(task)) runs.bmconv[task] = bench(args, task, GbrsKind::bmconv, eval);
        runs.sb[task] = bench(args, task, GbrsKind::sb, eval);
        for (auto* m : {&runs.bmconv, &runs.sb}) {
            const BenchmarkResult& r = m->at(task);
            report << to_string(task) << ',' << to_string(r.config.options.kind) << ',' << primary_metric_name(task)
                   << ',' << fmt(r.all.auc, 10) << ',' << fmt(r.all.initial, 10) << ',' << fmt(r.all.final, 10)
                   << '\n';
        }
        const double a = runs.bmconv[task].all.auc, b = runs.sb[task].all.auc;
        pass = pass && better_or_equal(task, a, b);
        detail += std::string(detail.empty() ? "" : "; ") + std::string(to_string(task)) + " AUC bmconv " + fmt(a) +
                  " vs sb " + fmt(b);
    }
    detail += "; report " + (args.out / "localization.csv").string();
    return {pass, detail};
}

// ---- consistency loss effect

double mean_change_outside(const Tensor& before, const Tensor& after, const Click& c, std::size_t h, std::size_t w) {
    std::vector<std::uint8_t> inside(h * w, 0);
    for (std::size_t i : disk_pixels(c.u, c.v, c.radius, h, w)) inside[i] = 1;
    double total = 0.0;
    std::size_t n = 0;
    const std::size_t channels = before.numel() / (h * w);
    for (std::size_t ch = 0; ch < channels; ++ch) {
        for (std::size_t i = 0; i < h * w; ++i) {
            if (inside[i]) continue;
            total += std::abs(after[ch * h * w + i] - before[ch * h * w + i]);
            ++n;
        }
    }
    return n ? total / double(n) : 0.0;
}

Outcome consistency_effect(const Args& args) {
    constexpr std::size_t kPairs = 100;
    constexpr std::size_t kMaxInstances = 10000;
    const Task task = Task::interactive_seg;
    auto net = load(args, task);
    std::size_t pairs = 0, smaller = 0, scanned = 0;
    // A case is a simulated first click where the term can act at all: the fit
    // loss is nonzero and the run without it takes at least two steps. At step
    // one the prediction still equals the previous one, so the consistency
    // gradient is zero and both arms take the same step. Selection only looks
    // at the arm without the term.
    for (; scanned < kMaxInstances && pairs < kPairs; ++scanned) {
        const Sample s = generate_sample(experiment::kImageSize, experiment::kEvalSeed, scanned, DatasetStyle::shifted);
        SessionOptions on, off;
        off.config.lambda_c = 0.0;
        Session b = Session::create(net, task, s.image, &s.trimap, off);
        const GeneratedClick click = next_click(task, b.prediction(), s);
        if (click.converged) continue;
        const RefinementReport rb = b.add_click(click.click);
        if (!(rb.loss_r.front() > 0.0) || rb.iterations < 2) continue;
        Session a = Session::create(net, task, s.image, &s.trimap, on);
        a.add_click(click.click);
        ++pairs;
        smaller += mean_change_outside(a.previous_prediction(), a.prediction(), click.click, s.height, s.width) <
                   mean_change_outside(b.previous_prediction(), b.prediction(), click.click, s.height, s.width);
    }
    return {pairs == kPairs && smaller >= 80,
            std::to_string(smaller) + "/" + std::to_string(pairs) +
                " pairs change less outside the click disk with the consistency term (" + std::to_string(scanned) +
                " instances scanned)"};
}

// ---- early stopping

std::shared_ptr<const Network> constant_head(double bias) {
    Network net = build_network(Task::interactive_seg, experiment::kNetworkSeed);
    for (std::size_t i = 0; i < net.weights().size(); ++i) {
        if (net.weight_names()[i] == "head.conv.weight") {
            for (auto& v : net.weights()[i].data()) v *= 1e-3;
        } else if (net.weight_names()[i] == "head.conv.bias") {
            net.weights()[i].fill(bias);
        }
    }
    return std::make_shared<const Network>(std::move(net));
}

Outcome early_stopping(const Args&) {
    std::mt19937_64 rng(8);
    const auto samples = experiment::eval_set(20);
    std::size_t satisfied_ok = 0, satisfied = 0, violated_ok = 0, violated = 0;
    for (const Sample& s : samples) {
        for (double sign : {1.0, -1.0}) {
            // Logits of about +-1 sit on the label, so every click of that sign clears the threshold.
            auto net = constant_head(sign);
            Session session = Session::create(net, Task::interactive_seg, s.image, nullptr, {});
            for (int k = 0; k < 3; ++k) {
                const Click c{int(rng() % 64), int(rng() % 64), 1.0 + double(rng() % 6), sign};
                const RefinementReport r = session.add_click(c);
                ++satisfied;
                satisfied_ok += r.iterations == 0 && r.early_stopped;
            }
            Session fresh = Session::create(net, Task::interactive_seg, s.image, nullptr, {});
            const RefinementReport r = fresh.add_click(Click{int(rng() % 64), int(rng() % 64), 3.0, -sign});
            ++violated;
            violated_ok += r.iterations >= 1;
        }
    }
    return {satisfied_ok == satisfied && violated_ok == violated,
            std::to_string(satisfied_ok) + "/" + std::to_string(satisfied) + " satisfied clicks ran 0 iterations, " +
                std::to_string(violated_ok) + "/" + std::to_string(violated) + " violating clicks ran >= 1"};
}

// ---- determinism and undo

Outcome determinism_undo(const Args& args) {
    bool pass = true;
    std::string detail;
    for (Task task : {Task::interactive_seg, Task::matting}) {
        auto net = load(args, task);
        const Sample s = experiment::eval_set(1).front();
        std::mt19937_64 rng(21);
        std::vector<Click> recorded;
        for (int k = 0; k < 20; ++k) {
            const std::size_t u = rng() % 64, v = rng() % 64;
            const double label = task == Task::matting ? s.gt_alpha[u * 64 + v] : s.gt_binary[u * 64 + v] ? 1.0 : -1.0;
            recorded.push_back(Click{int(u), int(v), 2.0 + double(rng() % 6), label});
        }
        Session first = Session::create(net, task, s.image, &s.trimap, {});
        std::vector<std::uint64_t> hashes{first.state_hash()};
        std::vector<Tensor> preds{first.prediction()};
        for (const Click& c : recorded) {
            first.add_click(c);
            hashes.push_back(first.state_hash());
            preds.push_back(first.prediction());
        }
        Session replay = Session::create(net, task, s.image, &s.trimap, {});
        for (const Click& c : recorded) replay.add_click(c);
        const bool same = replay.prediction().identical(first.prediction()) && replay.state_hash() == hashes.back();

        std::size_t undo_ok = 0;
        for (std::size_t k = 1; k <= recorded.size(); ++k) {
            Session copy = first;
            for (std::size_t i = 0; i < k; ++i) copy.undo();
            undo_ok += copy.state_hash() == hashes[recorded.size() - k] &&
                       copy.prediction().identical(preds[recorded.size() - k]);
        }
        pass = pass && same && undo_ok == recorded.size();
        detail += std::string(detail.empty() ? "" : "; ") + std::string(to_string(task)) + " replay " +
                  (same ? "bitwise" : "differs") + ", undo x k exact for " + std::to_string(undo_ok) + "/20";
    }
    return {pass, detail};
}

// ---- worked examples from the unit suites

Outcome unit_values(const Args& args) {
    setenv("GBRS_CHECKPOINTS", args.checkpoints.c_str(), 1);
    doctest::Context context;
    context.setOption("minimal", true);
    context.setOption("no-version", true);
    const int failed = context.run();
    return {failed == 0, failed == 0 ? "unit, service and trained-network suites pass"
                                     : "doctest reported failures (see above)"};
}

struct Criterion {
    std::string name;
    double budget_seconds; // 0: no budget
    std::function<Outcome()> run;
    bool soft = false;
};

} // namespace

int main(int argc, char** argv) {
    Args args;
    CLI::App app{"Acceptance run: one PASS/FAIL line per criterion"};
    app.add_option("--checkpoints", args.checkpoints, "Directory holding {task}.ckpt");
    app.add_option("--out", args.out, "Directory for generated reports");
    app.add_option("--waiver", args.waiver, "Waiver document for the soft localization criterion");
    app.add_option("--only", args.only, "Run only these criteria");
    CLI11_PARSE(app, argc, argv);

    Runs runs;
    const std::vector<Criterion> criteria{
        {"identity_insertion", 10, [&] { return identity_insertion(args); }},
        {"gradient_suite", 60, [&] { return gradient_suite(args); }},
        {"oracle_equivalence", 60, [&] { return oracle_equivalence(args); }},
        {"refinement_efficacy", 1200, [&] { return efficacy(args, runs); }},
        {"localization", 0, [&] { return localization(args, runs); }, true},
        {"consistency_effect", 0, [&] { return consistency_effect(args); }},
        {"early_stopping", 0, [&] { return early_stopping(args); }},
        {"determinism_undo", 0, [&] { return determinism_undo(args); }},
        {"unit_values", 0, [&] { return unit_values(args); }},
    };

    bool all = true;
    for (const Criterion& c : criteria) {
        if (!args.only.empty() && std::find(args.only.begin(), args.only.end(), c.name) == args.only.end()) continue;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("error: ") + e.what()};
        }
        const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (c.budget_seconds > 0 && seconds >= c.budget_seconds) {
            o.pass = false;
            o.detail += "; over the " + fmt(c.budget_seconds) + " s budget";
        }
        std::string note;
        if (!o.pass && c.soft) {
            const bool waived = !args.waiver.empty() && fs::exists(args.waiver);
            note = waived ? " [soft, waived: " + args.waiver.string() + "]" : " [soft, no waiver file]";
            if (!waived) all = false;
        } else if (!o.pass) {
            all = false;
        }
        std::cout << (o.pass ? "PASS " : "FAIL ") << c.name << " (" << fmt(seconds, 3) << " s): " << o.detail << note
                  << std::endl;
    }
    return all ? 0 : 1;
}
