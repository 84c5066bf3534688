#pragma once

#include "gbrs/adam.hpp"
#include "gbrs/click.hpp"
#include "gbrs/gbrs_layers.hpp"
#include "gbrs/network.hpp"

#include <memory>
#include <span>
#include <string>
#include <vector>

namespace gbrs {

enum class Mode { gbrs, rgb_brs, distmap_brs };

std::string_view to_string(Mode mode); // "gbrs", "rgb-brs", "distmap-brs"
Mode parse_mode(std::string_view text);

struct RefinementConfig {
    std::size_t iterations = 20;
    double lr = -1.0;       // < 0: default_lr for the session's configuration; 0 freezes the parameters
    double lambda_c = -1.0; // < 0: default_lambda for the task
    double lambda_stroke = 1.0;
    bool use_consistency = true;
    double inertial_lambda = 0.0; // > 0 adds lambda * sum ||p - p0||^2
    double early_stop_threshold = 0.8;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double epsilon_push = 0.1;
};

/// Consistency weight per task: 100, 10, 1000, 0.1.
double default_lambda(Task task);

/// Learning rate from the sweep table for (task, mode, kind, layers).
double default_lr(Task task, Mode mode, GbrsKind kind, std::size_t layers);

/// Channels kept by top-k selection by default: 32 for depth, none otherwise.
std::size_t default_tcs_k(Task task);

struct SessionOptions {
    Mode mode = Mode::gbrs;
    GbrsKind kind = GbrsKind::bmconv;
    std::size_t layers = 1;
    int tcs_k = -1; // -1: default_tcs_k, 0: off
    RefinementConfig config;

    std::string to_text() const;
    static SessionOptions from_text(std::string_view text);
};

/// Loss entries hold one value per forward pass: entry k is measured after
/// k optimizer steps, so each vector has iterations + 1 entries.
struct RefinementReport {
    std::vector<double> loss_r;
    std::vector<double> loss_c;
    std::vector<double> loss_total;
    std::size_t iterations = 0;
    bool early_stopped = false;
    double seconds = 0.0;
    double lr = 0.0;
    double beta1 = 0.0;
    double beta2 = 0.0;
    double eps = 0.0;
};

/// One image under refinement. The network is shared and never modified;
/// operations run strictly in sequence.
class Session {
  public:
    /// Throws LoadError if the network was trained for another task and
    /// ModeError if the mode does not fit the task.
    static Session create(std::shared_ptr<const Network> net, Task task, const Tensor& image,
                          const Tensor* trimap, SessionOptions options);

    RefinementReport add_click(const Click& click);
    RefinementReport push(const Click& click, PushDirection direction);
    RefinementReport apply_stroke(std::span<const StrokePoint> stroke);
    void undo();

    std::string snapshot() const;
    static Session restore(std::shared_ptr<const Network> net, std::string_view blob);

    const Network& network() const { return *net_; }
    Task task() const { return net_->task(); }
    const SessionOptions& options() const { return options_; }
    const Tensor& image() const { return image_; }
    const std::vector<Click>& clicks() const { return state_.clicks; }
    const std::vector<Placement>& placements() const { return placements_; }
    const std::vector<int>& finetune_mask() const { return state_.finetune; }
    const AdamState& adam_state() const { return state_.adam; }
    std::size_t history_depth() const { return history_.size(); }

    /// [1,C,H,W] network output under the current parameters.
    const Tensor& prediction() const { return state_.pred_current; }
    const Tensor& previous_prediction() const { return state_.pred_prev; }

    /// Copies of the tensors the optimizer updates (G-BRS tensors, or the
    /// input residual for rgb_brs / distmap_brs).
    std::vector<Tensor> trainable_parameters() const;
    std::vector<std::string> parameter_names() const;

    /// FNV-1a over parameters, optimizer state, clicks, finetune mask and predictions.
    std::uint64_t state_hash() const;

  private:
    struct State {
        std::vector<Tensor> params;
        AdamState adam;
        std::vector<Click> clicks;
        std::vector<int> finetune;
        Tensor pred_current;
        Tensor pred_prev;
    };

    Session() = default;

    std::vector<Tensor*> param_ptrs();
    void store_params(State& s) const;
    void load_params(const State& s);
    void rebuild_input();
    Tensor predict();
    Var forward(Graph& g, bool trainable, std::vector<Var>& bound) const;

    struct Objective;
    RefinementReport optimize(const Objective& objective, std::size_t max_steps, bool early_stop);
    void check_click(const Click& click) const;

    std::shared_ptr<const Network> net_;
    SessionOptions options_;
    Tensor image_;
    Tensor trimap_;
    std::size_t height_ = 0;
    std::size_t width_ = 0;
    std::vector<Placement> placements_;
    Tensor residual_;
    std::vector<std::size_t> residual_channels_;
    std::vector<Tensor> initial_params_;
    Tensor input_;
    BlockCache cache_;
    State state_;
    std::vector<State> history_;
};

} // namespace gbrs
