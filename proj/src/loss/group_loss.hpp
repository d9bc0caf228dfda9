#pragma once

#include "core/volume.hpp"
#include "transform/svf.hpp"

#include <optional>
#include <vector>

namespace groupreg {

// The n co-registered time-points being jointly aligned. Labels are
// optional and only used by evaluation.
struct GroupMember {
    Volume image;
    Mask mask;
    std::optional<Volume> labels;
};

struct Group {
    std::vector<GroupMember> members;

    int size() const { return static_cast<int>(members.size()); }
    const GridInfo& grid() const { return members.front().image.grid; }
};

// Validates n >= 2 and the common-grid contract.
void validate_group(const Group& g);

struct LossBreakdown {
    double total = 0.0;
    double similarity_term = 0.0;
    double regularizer_term = 0.0;
    std::size_t masked_voxel_count = 0;
};

// Voxelwise arithmetic mean of warped images. Summation over members is
// order-canonical, so the result is exactly permutation invariant.
Volume mean_image(const std::vector<Volume>& warped);

// Voxelwise intersection of the member masks. An empty intersection is a
// valid result; callers decide whether that is an error.
Mask common_mask(const std::vector<Mask>& warped_masks);

// Mean over masked voxels of the windowed Pearson correlation of a and b
// (box window of the given radius, edge-truncated, variance floor 1e-5
// on each local variance).
double lncc(const Volume& a, const Volume& b, const Mask& mask, int window_radius);

// Same computation, also producing d(lncc)/da and d(lncc)/db.
struct LnccResult {
    double value = 0.0;
    Volume grad_a;
    Volume grad_b;
};
LnccResult lncc_with_gradient(const Volume& a, const Volume& b, const Mask& mask, int window_radius);

// Diffusion regularizer: mean over voxels of the squared Frobenius norm
// of the mm-scaled spatial gradient of v.
double velocity_regularizer(const VectorVolume& v);
// Value plus dR/dv.
double velocity_regularizer_with_gradient(const VectorVolume& v, VectorVolume& grad);

// Settings the loss needs; a subset of the full registration config.
struct LossSettings {
    double lambda = 1.0;
    int window_radius = 4;
    int squaring_steps = 7;
};

// Everything the optimizer wants back from one evaluation of the
// objective at the current velocities.
struct LossEvaluation {
    LossBreakdown breakdown;
    std::vector<DisplacementField> displacements;
    std::vector<Volume> warped_images;
    Volume mean;
    Mask region; // the common mask H actually used
    std::vector<VectorVolume> gradients; // empty unless requested
};

// Evaluates the groupwise objective
//   total = -(1/n) sum_i lncc(I_i o T_i, mean; H) + lambda (1/n) sum_i R(v_i)
// with T_i = exp(base_i + v_i) and H = intersection of the warped member
// masks (or `fixed_region` when provided; the gradient always treats H
// as a constant of the iterate).
//
// `base` (optional) holds per-member velocities that are added to the
// optimized ones before exponentiation; this is how a later stage
// refines an upsampled earlier stage without re-interpolating images.
// When gradients are requested they are exact for the evaluated
// discrete objective, including the chain through the warped mean image
// and through every scaling-and-squaring step.
LossEvaluation evaluate_group_loss(const Group& group,
                                   const std::vector<VectorVolume>& velocities,
                                   const LossSettings& settings,
                                   bool with_gradient,
                                   const std::vector<VectorVolume>* base = nullptr,
                                   const Mask* fixed_region = nullptr);

// Convenience wrappers matching the two classic entry points.
LossBreakdown total_loss(const Group& group, const std::vector<VectorVolume>& velocities,
                         const LossSettings& settings);
std::vector<VectorVolume> loss_gradient(const Group& group,
                                        const std::vector<VectorVolume>& velocities,
                                        const LossSettings& settings);

} // namespace groupreg
