#include "gbrs/benchmark.hpp"

#include "gbrs/click_generation.hpp"
#include "gbrs/errors.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <sstream>

namespace gbrs {

namespace {

std::vector<std::uint8_t> binary_mask(const Tensor& logits) {
    std::vector<std::uint8_t> out(logits.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = logits[i] > 0.0;
    return out;
}

std::vector<std::uint8_t> class_map(const Tensor& logits) {
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

BenchmarkSummary summarize(const BenchmarkResult& r, const std::vector<std::size_t>& ids) {
    BenchmarkSummary s;
    double spc_total = 0.0;
    std::size_t spc_count = 0;
    for (auto id : ids) {
        const EvalRecord& e = r.records[id];
        if (e.failed) continue;
        ++s.count;
        s.auc += e.auc;
        s.best += e.best;
        s.initial += e.series.front();
        s.final += e.series.back();
        for (double t : e.spc) {
            spc_total += t;
            ++spc_count;
        }
    }
    if (s.count) {
        const double n = static_cast<double>(s.count);
        s.auc /= n;
        s.best /= n;
        s.initial /= n;
        s.final /= n;
    }
    s.spc = spc_count ? spc_total / static_cast<double>(spc_count) : 0.0;
    return s;
}

std::string num(double v) {
    std::ostringstream ss;
    ss << std::setprecision(10) << v;
    return ss.str();
}

} // namespace

Direction metric_direction(Task task) {
    return task == Task::matting ? Direction::lower_better : Direction::higher_better;
}

std::string primary_metric_name(Task task) {
    switch (task) {
    case Task::interactive_seg: return "iou";
    case Task::semantic_seg: return "miou";
    case Task::matting: return "mse";
    case Task::depth: return "delta1";
    }
    return "?";
}

std::vector<std::string> metric_columns(Task task) {
    switch (task) {
    case Task::interactive_seg: return {"iou"};
    case Task::semantic_seg: return {"miou", "pixel_acc"};
    case Task::matting: return {"mse", "sad_k", "grad", "conn"};
    case Task::depth: return {"delta1", "delta2", "delta3", "abs_rel", "sq_rel", "rmse", "rmse_log"};
    }
    return {};
}

std::vector<double> evaluate_prediction(Task task, const Tensor& pred, const Sample& s) {
    switch (task) {
    case Task::interactive_seg: return {metric_iou(binary_mask(pred), s.gt_binary)};
    case Task::semantic_seg: {
        const auto cls = class_map(pred);
        return {metric_miou(cls, s.gt_classes), metric_pixel_accuracy(cls, s.gt_classes)};
    }
    case Task::matting: {
        const auto m = metric_matting(pred.data(), s.gt_alpha.data(), s.height, s.width);
        return {m.mse, m.sad / 1000.0, m.grad, m.conn};
    }
    case Task::depth: {
        const auto m = metric_depth(pred.data(), s.gt_depth.data());
        return {m.delta1, m.delta2, m.delta3, m.abs_rel, m.sq_rel, m.rmse, m.rmse_log};
    }
    }
    return {};
}

GeneratedClick next_click(Task task, const Tensor& pred, const Sample& s, double tolerance, std::size_t dilation) {
    switch (task) {
    case Task::interactive_seg:
        return generate_click_classification(binary_mask(pred), s.gt_binary, s.height, s.width, true);
    case Task::semantic_seg:
        return generate_click_classification(class_map(pred), s.gt_classes, s.height, s.width, false);
    case Task::matting:
        return generate_click_regression(pred.data(), s.gt_alpha.data(), {}, s.height, s.width, tolerance, dilation);
    case Task::depth:
        return generate_click_regression(pred.data(), s.gt_depth.data(), {}, s.height, s.width, tolerance, dilation);
    }
    return {};
}

std::uint64_t BenchmarkResult::config_hash() const {
    const std::string text = config.options.to_text() + "clicks=" + std::to_string(config.clicks) +
                             "\ntolerance=" + num(config.regression_tolerance) +
                             "\ndilation=" + std::to_string(config.regression_dilation) + "\ntask=" +
                             std::string(to_string(task)) + "\n";
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : text) h = (h ^ c) * 1099511628211ULL;
    return h;
}

std::string BenchmarkResult::per_click_csv() const {
    std::ostringstream ss;
    ss << "# config_hash=" << std::hex << config_hash() << std::dec << " task=" << to_string(task)
       << " mode=" << to_string(config.options.mode) << " kind=" << to_string(config.options.kind)
       << " layers=" << config.options.layers << " lr=" << num(config.options.config.lr) << "\n";
    ss << "# auc_rule=trapezoid over clicks 0..N divided by N; series padded with the last value after convergence;"
          " sad_k = SAD / 1000\n";
    ss << "instance_id,click_index";
    for (const auto& c : metric_columns(task)) ss << "," << c;
    ss << ",spc_seconds\n";
    for (const auto& r : records) {
        if (r.failed) {
            ss << r.instance << ",failed,\"" << r.error << "\"\n";
            continue;
        }
        for (std::size_t k = 0; k < r.metrics.size(); ++k) {
            ss << r.instance << "," << k;
            for (double v : r.metrics[k]) ss << "," << num(v);
            ss << "," << (k == 0 ? std::string("0") : num(r.spc[k - 1])) << "\n";
        }
    }
    return ss.str();
}

std::string BenchmarkResult::aggregate_csv() const {
    std::ostringstream ss;
    ss << "# config_hash=" << std::hex << config_hash() << std::dec << " task=" << to_string(task)
       << " metric=" << primary_metric_name(task)
       << (metric_direction(task) == Direction::higher_better ? " (higher is better)" : " (lower is better)") << "\n";
    ss << "# auc_rule=trapezoid over clicks 0..N divided by N; bottom = ceil(n/10) worst initial scores\n";
    ss << "scope,instances,auc,best,initial,final,spc_seconds\n";
    auto row = [&](const char* name, const BenchmarkSummary& s) {
        ss << name << "," << s.count << "," << num(s.auc) << "," << num(s.best) << "," << num(s.initial) << ","
           << num(s.final) << "," << num(s.spc) << "\n";
    };
    row("all", all);
    row("bottom10", bottom);
    ss << "click_index,mean_" << primary_metric_name(task) << "\n";
    for (std::size_t k = 0; k < mean_series.size(); ++k) ss << k << "," << num(mean_series[k]) << "\n";
    return ss.str();
}

BenchmarkResult run_benchmark(std::shared_ptr<const Network> net, const std::vector<Sample>& eval_set,
                              const BenchmarkConfig& config, const InstanceCallback& on_instance) {
    if (eval_set.empty()) throw ContractError("evaluation set is empty");
    if (config.clicks < 1) throw ContractError("benchmark needs at least one click");
    const Task task = net->task();
    const Direction dir = metric_direction(task);
    BenchmarkResult result;
    result.task = task;
    result.config = config;

    for (std::size_t id = 0; id < eval_set.size(); ++id) {
        const Sample& s = eval_set[id];
        EvalRecord rec;
        rec.instance = id;
        try {
            Session session = Session::create(net, task, s.image, &s.trimap, config.options);
            if (id == 0) result.config.options = session.options();
            rec.metrics.push_back(evaluate_prediction(task, session.prediction(), s));
            for (std::size_t k = 0; k < config.clicks; ++k) {
                const GeneratedClick gc = next_click(task, session.prediction(), s, config.regression_tolerance,
                                                     config.regression_dilation);
                if (gc.converged) {
                    rec.converged = true;
                    break;
                }
                const auto t0 = std::chrono::steady_clock::now();
                session.add_click(gc.click);
                rec.spc.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
                rec.metrics.push_back(evaluate_prediction(task, session.prediction(), s));
            }
            rec.clicks_used = rec.metrics.size() - 1;
            for (const auto& m : rec.metrics) rec.series.push_back(m[0]);
            while (rec.series.size() < config.clicks + 1) rec.series.push_back(rec.series.back());
            rec.auc = auc_over_clicks(rec.series);
            rec.best = dir == Direction::higher_better ? *std::max_element(rec.series.begin(), rec.series.end())
                                                       : *std::min_element(rec.series.begin(), rec.series.end());
        } catch (const Error& e) {
            rec.failed = true;
            rec.error = e.what();
        }
        if (on_instance) on_instance(rec);
        result.records.push_back(std::move(rec));
    }

    std::vector<std::size_t> ok;
    for (std::size_t i = 0; i < result.records.size(); ++i) {
        if (!result.records[i].failed) ok.push_back(i);
    }
    result.mean_series.assign(config.clicks + 1, 0.0);
    for (auto i : ok) {
        for (std::size_t k = 0; k <= config.clicks; ++k) result.mean_series[k] += result.records[i].series[k];
    }
    for (auto& v : result.mean_series) v /= ok.empty() ? 1.0 : static_cast<double>(ok.size());

    std::vector<std::size_t> ranked = ok;
    std::stable_sort(ranked.begin(), ranked.end(), [&](std::size_t a, std::size_t b) {
        const double ia = result.records[a].series.front(), ib = result.records[b].series.front();
        return dir == Direction::higher_better ? ia < ib : ia > ib;
    });
    ranked.resize(std::min(ranked.size(), (ok.size() + 9) / 10));
    std::sort(ranked.begin(), ranked.end());
    result.bottom_ids = ranked;
    result.all = summarize(result, ok);
    result.bottom = summarize(result, ranked);
    return result;
}

std::vector<double> default_lr_grid() {
    std::vector<double> grid;
    for (int k = 0; k < 10; ++k) grid.push_back(0.1 * std::pow(0.5, k));
    return grid;
}

SweepResult lr_sweep(const std::function<double(double)>& evaluate, Direction direction, std::vector<double> grid) {
    if (grid.empty()) throw ContractError("lr grid is empty");
    SweepResult out;
    std::sort(grid.begin(), grid.end());
    out.grid = grid;
    bool have = false;
    for (double lr : grid) {
        const double score = evaluate(lr);
        out.scores.push_back(score);
        const bool better = !have || (direction == Direction::higher_better ? score > out.best_score
                                                                            : score < out.best_score);
        if (better) {
            out.best_lr = lr;
            out.best_score = score;
            have = true;
        }
    }
    return out;
}

SweepResult lr_sweep(std::shared_ptr<const Network> net, const std::vector<Sample>& subset,
                     const BenchmarkConfig& config, std::vector<double> grid) {
    if (subset.empty()) throw ContractError("sweep subset is empty");
    const Direction dir = metric_direction(net->task());
    return lr_sweep(
        [&](double lr) {
            BenchmarkConfig c = config;
            c.options.config.lr = lr;
            return run_benchmark(net, subset, c).all.auc;
        },
        dir, std::move(grid));
}

} // namespace gbrs
