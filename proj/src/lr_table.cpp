#include "gbrs/session.hpp"

#include <array>

namespace gbrs {

namespace {

struct LrEntry {
    Task task;
    GbrsKind kind;
    std::size_t layers;
    double lr;
};

// Best AUC from `gbrs sweep` (grid 0.1 * 0.5^k) on the sweep subset:
// 8 shifted scenes, seed 5, 10 clicks. Disjoint from the eval set.
constexpr std::array kGbrsTable = {
    LrEntry{Task::interactive_seg, GbrsKind::sb, 1, 0.025},
    LrEntry{Task::interactive_seg, GbrsKind::sb, 2, 0.025},
    LrEntry{Task::interactive_seg, GbrsKind::sb, 3, 0.025},
    LrEntry{Task::interactive_seg, GbrsKind::bmsb, 1, 0.0125},
    LrEntry{Task::interactive_seg, GbrsKind::bmsb, 2, 0.025},
    LrEntry{Task::interactive_seg, GbrsKind::bmsb, 3, 0.00625},
    LrEntry{Task::interactive_seg, GbrsKind::bmsb_m, 1, 0.05},
    LrEntry{Task::interactive_seg, GbrsKind::bmsb_m, 2, 0.0125},
    LrEntry{Task::interactive_seg, GbrsKind::bmsb_m, 3, 0.0125},
    LrEntry{Task::interactive_seg, GbrsKind::bmconv, 1, 0.0015625},
    LrEntry{Task::interactive_seg, GbrsKind::bmconv, 2, 0.000390625},
    LrEntry{Task::interactive_seg, GbrsKind::bmconv, 3, 0.000390625},
    LrEntry{Task::semantic_seg, GbrsKind::sb, 1, 0.025},
    LrEntry{Task::semantic_seg, GbrsKind::sb, 2, 0.00625},
    LrEntry{Task::semantic_seg, GbrsKind::sb, 3, 0.00625},
    LrEntry{Task::semantic_seg, GbrsKind::bmsb, 1, 0.00625},
    LrEntry{Task::semantic_seg, GbrsKind::bmsb, 2, 0.003125},
    LrEntry{Task::semantic_seg, GbrsKind::bmsb, 3, 0.003125},
    LrEntry{Task::semantic_seg, GbrsKind::bmsb_m, 1, 0.025},
    LrEntry{Task::semantic_seg, GbrsKind::bmsb_m, 2, 0.00625},
    LrEntry{Task::semantic_seg, GbrsKind::bmsb_m, 3, 0.00625},
    LrEntry{Task::semantic_seg, GbrsKind::bmconv, 1, 0.00078125},
    LrEntry{Task::semantic_seg, GbrsKind::bmconv, 2, 0.000390625},
    LrEntry{Task::semantic_seg, GbrsKind::bmconv, 3, 0.000390625},
    LrEntry{Task::matting, GbrsKind::sb, 1, 0.025},
    LrEntry{Task::matting, GbrsKind::sb, 2, 0.0125},
    LrEntry{Task::matting, GbrsKind::sb, 3, 0.025},
    LrEntry{Task::matting, GbrsKind::bmsb, 1, 0.003125},
    LrEntry{Task::matting, GbrsKind::bmsb, 2, 0.00078125},
    LrEntry{Task::matting, GbrsKind::bmsb, 3, 0.00078125},
    LrEntry{Task::matting, GbrsKind::bmsb_m, 1, 0.00625},
    LrEntry{Task::matting, GbrsKind::bmsb_m, 2, 0.0015625},
    LrEntry{Task::matting, GbrsKind::bmsb_m, 3, 0.0015625},
    LrEntry{Task::matting, GbrsKind::bmconv, 1, 0.00078125},
    LrEntry{Task::matting, GbrsKind::bmconv, 2, 0.0001953125},
    LrEntry{Task::matting, GbrsKind::bmconv, 3, 0.0001953125},
    LrEntry{Task::depth, GbrsKind::sb, 1, 0.0125},
    LrEntry{Task::depth, GbrsKind::sb, 2, 0.025},
    LrEntry{Task::depth, GbrsKind::sb, 3, 0.00625},
    LrEntry{Task::depth, GbrsKind::bmsb, 1, 0.00625},
    LrEntry{Task::depth, GbrsKind::bmsb, 2, 0.00625},
    LrEntry{Task::depth, GbrsKind::bmsb, 3, 0.00625},
    LrEntry{Task::depth, GbrsKind::bmsb_m, 1, 0.0125},
    LrEntry{Task::depth, GbrsKind::bmsb_m, 2, 0.0125},
    LrEntry{Task::depth, GbrsKind::bmsb_m, 3, 0.00625},
    LrEntry{Task::depth, GbrsKind::bmconv, 1, 0.003125},
    LrEntry{Task::depth, GbrsKind::bmconv, 2, 0.00078125},
    LrEntry{Task::depth, GbrsKind::bmconv, 3, 0.00078125},
};

struct ResidualEntry {
    Task task;
    Mode mode;
    double lr;
};

constexpr std::array kResidualTable = {
    ResidualEntry{Task::interactive_seg, Mode::rgb_brs, 0.003125},
    ResidualEntry{Task::semantic_seg, Mode::rgb_brs, 0.0001953125},
    ResidualEntry{Task::matting, Mode::rgb_brs, 0.0001953125},
    ResidualEntry{Task::depth, Mode::rgb_brs, 0.0001953125},
    ResidualEntry{Task::interactive_seg, Mode::distmap_brs, 0.05},
};

} // namespace

double default_lr(Task task, Mode mode, GbrsKind kind, std::size_t layers) {
    if (mode != Mode::gbrs) {
        for (const auto& e : kResidualTable) {
            if (e.task == task && e.mode == mode) return e.lr;
        }
        return 0.0125;
    }
    for (const auto& e : kGbrsTable) {
        if (e.task == task && e.kind == kind && e.layers == layers) return e.lr;
    }
    return 0.025;
}

} // namespace gbrs
