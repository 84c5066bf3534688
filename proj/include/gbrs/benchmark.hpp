#pragma once

#include "gbrs/click_generation.hpp"
#include "gbrs/dataset.hpp"
#include "gbrs/metrics.hpp"
#include "gbrs/session.hpp"

#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace gbrs {

struct BenchmarkConfig {
    SessionOptions options;
    std::size_t clicks = 20;
    double regression_tolerance = 1e-6;
    std::size_t regression_dilation = 15;
};

/// Primary metric per task: IoU, mIoU, MSE (lower is better), delta1.
Direction metric_direction(Task task);
std::string primary_metric_name(Task task);

/// Metric columns reported per click for a task.
std::vector<std::string> metric_columns(Task task);

/// All metric columns for a prediction ([1,C,H,W] network output) against a sample.
std::vector<double> evaluate_prediction(Task task, const Tensor& pred, const Sample& sample);

/// Simulated click for the current prediction.
GeneratedClick next_click(Task task, const Tensor& pred, const Sample& sample, double regression_tolerance = 1e-6,
                          std::size_t regression_dilation = 15);

struct EvalRecord {
    std::size_t instance = 0;
    std::vector<std::vector<double>> metrics; // per click 0..n, columns of metric_columns
    std::vector<double> series;               // primary metric, padded to clicks + 1 entries
    std::vector<double> spc;                  // seconds per click
    std::size_t clicks_used = 0;
    bool converged = false;
    double auc = 0.0;
    double best = 0.0;
    bool failed = false;
    std::string error;
};

struct BenchmarkSummary {
    std::size_t count = 0;
    double auc = 0.0;
    double best = 0.0;
    double initial = 0.0;
    double final = 0.0;
    double spc = 0.0;
};

struct BenchmarkResult {
    Task task = Task::interactive_seg;
    BenchmarkConfig config;
    std::vector<EvalRecord> records;
    std::vector<double> mean_series;
    BenchmarkSummary all;
    BenchmarkSummary bottom;             // ceil(n/10) instances with the worst initial score
    std::vector<std::size_t> bottom_ids;

    std::uint64_t config_hash() const;
    std::string per_click_csv() const;
    std::string aggregate_csv() const;
};

/// Instance observer, called after each instance finishes.
using InstanceCallback = std::function<void(const EvalRecord&)>;

BenchmarkResult run_benchmark(std::shared_ptr<const Network> net, const std::vector<Sample>& eval_set,
                              const BenchmarkConfig& config, const InstanceCallback& on_instance = {});

/// 0.1 * 0.5^k for k = 0..9.
std::vector<double> default_lr_grid();

struct SweepResult {
    std::vector<double> grid;
    std::vector<double> scores;
    double best_lr = 0.0;
    double best_score = 0.0;
};

/// Scores each lr with `evaluate` and keeps the best (max for higher_better,
/// min otherwise); ties go to the smaller lr.
SweepResult lr_sweep(const std::function<double(double)>& evaluate, Direction direction,
                     std::vector<double> grid = default_lr_grid());

/// Sweep scored by the mean AUC of run_benchmark.
SweepResult lr_sweep(std::shared_ptr<const Network> net, const std::vector<Sample>& subset,
                     const BenchmarkConfig& config, std::vector<double> grid = default_lr_grid());

} // namespace gbrs
