#include "doctest.h"

#include "gbrs/dataset.hpp"
#include "gbrs/errors.hpp"
#include "gbrs/network_input.hpp"
#include "gbrs/session.hpp"

#include <cmath>
#include <memory>
#include <random>

using namespace gbrs;

namespace {

std::shared_ptr<const Network> net_for(Task task, std::uint64_t seed = 7) {
    return std::make_shared<const Network>(build_network(task, seed));
}

// Head replaced by a near-constant output so the prediction is known in advance.
std::shared_ptr<const Network> constant_head(Task task, double bias, double weight_scale) {
    Network net = build_network(task, 7);
    for (std::size_t i = 0; i < net.weights().size(); ++i) {
        if (net.weight_names()[i] == "head.conv.weight") {
            for (auto& v : net.weights()[i].data()) v *= weight_scale;
        } else if (net.weight_names()[i] == "head.conv.bias") {
            net.weights()[i].fill(0.0);
            net.weights()[i][0] = bias;
        }
    }
    return std::make_shared<const Network>(std::move(net));
}

Session open(std::shared_ptr<const Network> net, const Sample& s, SessionOptions options = {}) {
    return Session::create(net, net->task(), s.image, &s.trimap, options);
}

const Sample& sample() {
    static const Sample s = generate_sample(64, 3, 0);
    return s;
}

} // namespace

TEST_CASE("fresh sessions reproduce the bare network output") {
    for (Task t : {Task::interactive_seg, Task::semantic_seg, Task::matting, Task::depth}) {
        auto net = net_for(t);
        Tensor bare = net->evaluate(build_network_input(net->spec(), sample().image, &sample().trimap));
        for (GbrsKind k : {GbrsKind::sb, GbrsKind::bmsb, GbrsKind::bmsb_m, GbrsKind::bmconv}) {
            SessionOptions o;
            o.kind = k;
            o.layers = 3;
            Session s = open(net, sample(), o);
            CHECK(max_abs_diff(s.prediction(), bare) <= 1e-12);
            CHECK(s.previous_prediction().identical(s.prediction()));
        }
        SessionOptions rgb;
        rgb.mode = Mode::rgb_brs;
        Session r = open(net, sample(), rgb);
        CHECK(r.prediction().identical(bare));
        auto params = r.trainable_parameters();
        REQUIRE(params.size() == 1);
        CHECK(params[0].shape() == Shape{1, 3, 64, 64});
        for (double v : params[0].data()) CHECK(v == 0.0);
    }
}

TEST_CASE("session creation contracts") {
    auto depth = net_for(Task::depth);
    SessionOptions dm;
    dm.mode = Mode::distmap_brs;
    CHECK_THROWS_AS(open(depth, sample(), dm), ModeError);
    CHECK_THROWS_AS(Session::create(depth, Task::matting, sample().image, &sample().trimap, {}), LoadError);
    auto mat = net_for(Task::matting);
    CHECK_THROWS_AS(Session::create(mat, Task::matting, sample().image, nullptr, {}), InputError);
    Session d = Session::create(net_for(Task::interactive_seg), Task::interactive_seg, sample().image, nullptr, dm);
    CHECK(d.trainable_parameters()[0].shape() == Shape{1, 2, 64, 64});
}

TEST_CASE("one sb placement on 64 channels trains 128 scalars") {
    SessionOptions o;
    o.kind = GbrsKind::sb;
    Session s = open(net_for(Task::semantic_seg), sample(), o);
    auto params = s.trainable_parameters();
    CHECK(params.size() == 2);
    CHECK(params[0].numel() + params[1].numel() == 128);
    CHECK(s.parameter_names() == std::vector<std::string>{"enc8.s", "enc8.b"});
}

TEST_CASE("depth sessions select 32 channels at enc8 by default") {
    Session s = open(net_for(Task::depth), sample());
    CHECK(s.placements()[0].params.channel_subset.size() == 32);
    SessionOptions off;
    off.tcs_k = 0;
    CHECK(open(net_for(Task::depth), sample(), off).placements()[0].params.channel_subset.empty());
}

TEST_CASE("two sessions on the same inputs agree") {
    auto net = net_for(Task::matting);
    Session a = open(net, sample());
    Session b = open(net, sample());
    CHECK(a.prediction().identical(b.prediction()));
    CHECK(a.state_hash() == b.state_hash());
}

TEST_CASE("early stopping when every click already meets the threshold") {
    auto net = constant_head(Task::interactive_seg, 1.0, 1e-3);
    Session s = open(net, sample());
    RefinementReport r = s.add_click(Click{20, 20, 5, 1.0});
    CHECK(r.iterations == 0);
    CHECK(r.early_stopped);
    CHECK(r.loss_r.size() == 1);
    RefinementReport r2 = s.add_click(Click{40, 40, 5, -1.0});
    CHECK(r2.iterations >= 1);
}

TEST_CASE("refinement lowers the click loss on a mislabeled pixel") {
    for (std::uint64_t seed : {1, 2, 3}) {
        auto net = net_for(Task::interactive_seg, seed);
        Session s = open(net, sample());
        const double p = s.prediction()[32 * 64 + 32];
        RefinementReport r = s.add_click(Click{32, 32, 5, p > 0 ? -1.0 : 1.0});
        CHECK(r.loss_r.size() == r.iterations + 1);
        CHECK(r.loss_total.size() == r.iterations + 1);
        CHECK(r.loss_r.back() <= r.loss_r.front());
    }
}

TEST_CASE("lr zero freezes the parameters") {
    SessionOptions o;
    o.config.lr = 0.0;
    auto net = net_for(Task::depth);
    Session s = open(net, sample(), o);
    Tensor before = s.prediction();
    RefinementReport r = s.add_click(Click{10, 10, 4, 2.0});
    CHECK(r.lr == 0.0);
    CHECK(s.prediction().identical(before));
}

TEST_CASE("up push raises the clicked value") {
    auto net = net_for(Task::depth);
    Session s = open(net, sample());
    std::mt19937_64 rng(9);
    int raised = 0, total = 0;
    for (int i = 0; i < 100; ++i) {
        int u = 4 + int(rng() % 56), v = 4 + int(rng() % 56);
        const double before = s.prediction()[u * 64 + v];
        s.push(Click{u, v, 4, 0}, PushDirection::up);
        raised += s.prediction()[u * 64 + v] > before;
        ++total;
        s.undo();
    }
    CHECK(raised >= 95);
}

TEST_CASE("push then undo restores the state bitwise") {
    Session s = open(net_for(Task::matting), sample());
    s.add_click(Click{30, 30, 5, 1.0});
    const auto hash = s.state_hash();
    const Tensor pred = s.prediction();
    s.push(Click{30, 31, 5, 0}, PushDirection::down);
    CHECK(s.state_hash() != hash);
    CHECK(s.clicks().size() == 1);
    s.undo();
    CHECK(s.state_hash() == hash);
    CHECK(s.prediction().identical(pred));
}

TEST_CASE("push and stroke are task specific") {
    Session seg = open(net_for(Task::semantic_seg), sample());
    CHECK_THROWS_AS(seg.push(Click{1, 1, 2, 0}, PushDirection::up), ModeError);
    Session mat = open(net_for(Task::matting), sample());
    std::vector<StrokePoint> stroke{{5, 5, 2, 1}};
    CHECK_THROWS_AS(mat.apply_stroke(stroke), ModeError);
    CHECK(mat.history_depth() == 0);
}

TEST_CASE("invalid clicks leave no trace") {
    Session s = open(net_for(Task::interactive_seg), sample());
    const auto hash = s.state_hash();
    CHECK_THROWS_AS(s.add_click(Click{64, 0, 5, 1}), InputError);
    CHECK_THROWS_AS(s.add_click(Click{3, 3, 5, 0.5}), InputError);
    CHECK_THROWS_AS(s.add_click(Click{3, 3, 0, 1}), InputError);
    CHECK(s.state_hash() == hash);
    CHECK(s.history_depth() == 0);
    Session seg = open(net_for(Task::semantic_seg), sample());
    CHECK_THROWS_AS(seg.add_click(Click{3, 3, 2, 6}), InputError);
    std::vector<StrokePoint> bad{{3, 3, 2, 9}};
    CHECK_THROWS_AS(seg.apply_stroke(bad), InputError);
}

TEST_CASE("stroke on confident correct pixels changes nothing there") {
    auto net = constant_head(Task::semantic_seg, 30.0, 1e-3);
    Session s = open(net, sample());
    std::vector<StrokePoint> stroke{{10, 10, 3, 0}, {12, 14, 3, 0}};
    RefinementReport r = s.apply_stroke(stroke);
    CHECK(r.loss_r.front() < 1e-9);
    for (std::size_t i = 0; i < 64 * 64; ++i) {
        std::size_t best = 0;
        for (std::size_t c = 1; c < kNumClasses; ++c) {
            if (s.prediction()[c * 4096 + i] > s.prediction()[best * 4096 + i]) best = c;
        }
        CHECK(best == 0);
    }
}

TEST_CASE("single-pixel stroke matches a single click of the same class") {
    SessionOptions o;
    o.config.lambda_c = 10.0;
    o.config.lambda_stroke = 10.0;
    auto net = net_for(Task::semantic_seg);
    Session a = open(net, sample(), o);
    Session b = open(net, sample(), o);
    a.add_click(Click{20, 21, 0.5, 3});
    std::vector<StrokePoint> stroke{{20, 21, 0.5, 3}};
    b.apply_stroke(stroke);
    CHECK(max_abs_diff(a.prediction(), b.prediction()) <= 1e-12);
}

TEST_CASE("overlapping strokes keep the later class") {
    Session s = open(net_for(Task::semantic_seg), sample());
    std::vector<StrokePoint> first{{20, 20, 3, 1}};
    std::vector<StrokePoint> second{{20, 22, 3, 4}};
    s.apply_stroke(first);
    s.apply_stroke(second);
    CHECK(s.finetune_mask()[20 * 64 + 21] == 4);
    CHECK(s.finetune_mask()[20 * 64 + 18] == 1);
    CHECK(s.finetune_mask()[0] == int(kNumClasses));
}

TEST_CASE("undo restores earlier states") {
    Session s = open(net_for(Task::interactive_seg), sample());
    CHECK_THROWS_AS(s.undo(), ContractError);
    const auto h0 = s.state_hash();
    const Tensor p0 = s.prediction();
    s.add_click(Click{30, 30, 5, 1});
    const auto h1 = s.state_hash();
    s.add_click(Click{10, 50, 5, -1});
    s.undo();
    CHECK(s.state_hash() == h1);
    s.undo();
    CHECK(s.state_hash() == h0);
    CHECK(s.prediction().identical(p0));
    CHECK(s.clicks().empty());
    CHECK(s.adam_state().step == 0);
}

TEST_CASE("restore then refine matches refining directly") {
    for (Task t : {Task::interactive_seg, Task::semantic_seg, Task::matting, Task::depth}) {
        auto net = net_for(t);
        Session a = open(net, sample());
        const double label = t == Task::interactive_seg ? 1.0 : t == Task::semantic_seg ? 2.0 : t == Task::matting ? 0.7 : 3.0;
        a.add_click(Click{30, 30, 5, label});
        Session b = Session::restore(net, a.snapshot());
        CHECK(b.state_hash() == a.state_hash());
        CHECK(b.snapshot() == a.snapshot());
        a.add_click(Click{12, 40, 5, t == Task::interactive_seg ? -1.0 : label});
        b.add_click(Click{12, 40, 5, t == Task::interactive_seg ? -1.0 : label});
        CHECK(a.prediction().identical(b.prediction()));
        CHECK(a.state_hash() == b.state_hash());
    }
}

TEST_CASE("corrupt snapshots are rejected") {
    auto net = net_for(Task::matting);
    Session a = open(net, sample());
    a.add_click(Click{30, 30, 5, 0.5});
    const std::string blob = a.snapshot();
    CHECK_THROWS_AS(Session::restore(net, blob.substr(0, blob.size() / 2)), LoadError);
    CHECK_THROWS_AS(Session::restore(net, blob + "!"), LoadError);
    std::string magic = blob;
    magic[1] = 'x';
    CHECK_THROWS_AS(Session::restore(net, magic), LoadError);
    CHECK_THROWS_AS(Session::restore(net_for(Task::matting, 8), blob), LoadError);
}

TEST_CASE("snapshot size tracks the refinement parameters") {
    auto net = net_for(Task::semantic_seg);
    SessionOptions sb, conv;
    sb.kind = GbrsKind::sb;
    conv.kind = GbrsKind::bmconv;
    Session a = open(net, sample(), sb);
    Session b = open(net, sample(), conv);
    a.add_click(Click{30, 30, 5, 1});
    b.add_click(Click{30, 30, 5, 1});
    auto scalars = [](const Session& s) {
        std::size_t n = 0;
        for (const auto& t : s.trainable_parameters()) n += t.numel();
        return n;
    };
    // Parameters plus two Adam moments, 8 bytes each; everything else is shared.
    const long long diff = static_cast<long long>(b.snapshot().size()) - static_cast<long long>(a.snapshot().size());
    const long long param_diff = 24LL * (static_cast<long long>(scalars(b)) - static_cast<long long>(scalars(a)));
    CHECK(std::llabs(diff - param_diff) < 512);
    // Bounded by image, trimap, predictions and parameter state; network weights never enter.
    const std::size_t payload = 8 * (b.image().numel() + 64 * 64 + 2 * b.prediction().numel() + 3 * scalars(b));
    CHECK(b.snapshot().size() < payload + 64 * 64 * 4 + 4096);
}

TEST_CASE("session options text round trip") {
    SessionOptions o;
    o.mode = Mode::rgb_brs;
    o.kind = GbrsKind::bmsb_m;
    o.layers = 2;
    o.tcs_k = 5;
    o.config.lr = 0.0123;
    o.config.use_consistency = false;
    SessionOptions back = SessionOptions::from_text(o.to_text());
    CHECK(back.to_text() == o.to_text());
    CHECK_THROWS_AS(SessionOptions::from_text("bogus=1\n"), LoadError);
}
