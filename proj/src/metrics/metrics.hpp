#pragma once

#include "loss/group_loss.hpp"
#include "transform/svf.hpp"

#include <string>
#include <vector>

namespace groupreg {

// 2|A n B| / (|A| + |B|) for the voxel sets carrying class_id (labels are
// integer-coded, matched by rounding). Both sets empty -> 1.0.
double dice(const Volume& a, const Volume& b, int class_id);

// Mean of dice over all n(n-1)/2 unordered pairs.
double group_dice(const std::vector<Volume>& warped_labels, int class_id);

// Mean over masked voxels of the local structural similarity map: 7^3 box
// window (edge-truncated, population statistics), K1 = 0.01, K2 = 0.03,
// dynamic range = max - min over the union of both images inside the mask.
// Both images constant -> 1.0 by convention.
double ssim_masked(const Volume& a, const Volume& b, const Mask& mask);

// Mean over masked voxels of ||(1/n) sum_i u_i(x)||_2 in mm: the norm of
// the mean deformation, which is zero exactly when the group is centered.
double centrality(const std::vector<DisplacementField>& fields, const Mask& mask);

// The other reading of "average norm": mean over members of the masked
// mean of ||u_i(x)||. Nonzero even for perfectly centered groups; reported
// alongside for comparison, never used in acceptance bands.
double centrality_mean_norm(const std::vector<DisplacementField>& fields, const Mask& mask);

struct Smoothness {
    double folding_percent = 0.0; // % of masked voxels with J <= 0
    double jacobian_sd = 0.0;     // population SD of J over masked voxels
};
Smoothness smoothness(const JacobianMap& jac, const Mask& mask);

// Two-sided exact Wilcoxon signed-rank test on paired samples (lengths
// equal, 2..25). Zero differences are dropped, ties mid-ranked,
// statistic = min(W+, W-), p = fraction of the 2^m sign assignments whose
// min-rank-sum is <= the observed one. All differences zero -> error.
struct WilcoxonResult {
    double statistic = 0.0;
    double p_value = 1.0;
};
WilcoxonResult wilcoxon_signed_rank(const std::vector<double>& x, const std::vector<double>& y);

// One group's evaluation battery, everything restricted to the region H.
// Fields that lack their inputs (no labels / no images) are NaN.
struct MetricsReport {
    std::string group_id = "group";
    int n_members = 0;
    double dice_csf = 0.0;
    double dice_gm = 0.0;
    double dice_wm = 0.0;
    double dice_tumor = 0.0;
    double mean_ssim = 0.0;
    double centrality_mm = 0.0;
    double centrality_mean_norm_mm = 0.0;
    double folding_percent = 0.0;
    double jacobian_sd = 0.0;
    std::size_t masked_voxels = 0;
};

// Core battery on prepared inputs: per-class group_dice of the warped
// labels (voxels outside `region` excluded), mean ssim_masked of each
// warped image against their mean, centrality of the fields, smoothness
// of each field's Jacobian (averaged over members).
MetricsReport evaluate_group(const std::vector<DisplacementField>& fields, const Mask& region,
                             const std::vector<Volume>* warped_images,
                             const std::vector<Volume>* warped_labels);

// Convenience wrapper: warps the group's images, masks and labels with
// the given fields, takes H as the intersection of the warped masks.
MetricsReport evaluate_group(const Group& group, const std::vector<DisplacementField>& fields);

// CSV with a fixed, documented column order; one row per report plus a
// "mean" aggregate row when there are several. Values at full precision.
std::string metrics_csv(const std::vector<MetricsReport>& rows);

// Human-readable one-group table.
std::string metrics_text(const MetricsReport& r);

} // namespace groupreg
