#pragma once

#include "loss/group_loss.hpp"

#include <cstdint>
#include <functional>
#include <vector>

namespace groupreg {

// One resolution level of the schedule. downsample_levels halves the grid
// that many times; step_size is the adaptive-moment step in mm.
struct StageConfig {
    int downsample_levels = 0;
    int max_iterations = 100;
    double step_size = 0.5;
};

// Everything that drives a run. Two runs with identical config and inputs
// produce bitwise-identical results.
struct RegistrationConfig {
    double lambda = 0.1;
    int window_radius = 4;
    int squaring_steps = 7;
    std::vector<StageConfig> stages;

    // Adaptive-moment constants.
    double first_moment_decay = 0.9;
    double second_moment_decay = 0.999;
    double adam_epsilon = 1e-8;

    // Stop a stage when the relative best-loss improvement over the last
    // `convergence_window` iterations falls below `convergence_tolerance`.
    double convergence_tolerance = 1e-5;
    int convergence_window = 10;

    // Recorded for provenance; the optimizer itself draws no random numbers.
    std::uint64_t seed = 0;

    LossSettings loss_settings() const
    {
        return LossSettings{lambda, window_radius, squaring_steps};
    }
};

// Two stages, coarse (half resolution) then fine.
RegistrationConfig default_config();

// Throws InvalidArgument naming the offending field.
void validate_config(const RegistrationConfig& cfg);

// v_i <- v_i - (1/n) sum_j v_j, with an order-canonical sum so the result
// is exactly permutation-equivariant. Pairwise differences are untouched.
std::vector<VectorVolume> center_velocities(std::vector<VectorVolume> velocities);

struct IterationRecord {
    int iteration = 0;   // 1-based within the stage
    double loss = 0.0;   // loss evaluated at this iterate
    double best_loss = 0.0; // running minimum (the accepted trace)
};

struct StageTrace {
    std::vector<IterationRecord> records;
    int iterations = 0;
    bool converged = false;
};

// Called after every evaluation with (stage index, iteration, breakdown).
using ProgressFn = std::function<void(int, int, const LossBreakdown&)>;

struct StageResult {
    std::vector<VectorVolume> velocities; // best-loss iterate
    StageTrace trace;
    LossBreakdown best;
};

// One stage of first-order optimization: evaluate loss + gradient,
// adaptive-moment update with bias correction, re-center, repeat until
// max_iterations or convergence; the best-loss iterate is returned.
// `base` velocities (if any) are added before exponentiation, matching
// the residual refinement scheme. An empty common mask aborts with an
// error carrying the iterate index.
StageResult register_stage(const Group& group, std::vector<VectorVolume> init,
                           const RegistrationConfig& cfg, const StageConfig& stage,
                           const std::vector<VectorVolume>* base = nullptr,
                           int stage_index = 0, const ProgressFn& progress = {});

struct RegistrationResult {
    std::vector<VectorVolume> velocities;        // fine grid, mm, sum to zero
    std::vector<DisplacementField> displacements; // exp(v_i) on the fine grid
    std::vector<StageTrace> stage_traces;
    std::vector<int> iteration_counts;
    LossBreakdown final_loss; // evaluated on the fine grid after all stages
    double wall_seconds = 0.0;
};

// Full schedule: each stage optimizes on its own resolution; the running
// total velocity is upsampled to the next stage's grid and passed as the
// base, so later stages refine a residual while always warping the
// original images exactly once through exp(base + v).
RegistrationResult register_multistage(const Group& group, const RegistrationConfig& cfg,
                                       const ProgressFn& progress = {});

} // namespace groupreg
