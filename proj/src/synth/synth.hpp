#pragma once

#include "loss/group_loss.hpp"
#include "transform/svf.hpp"

#include <cstdint>

namespace groupreg {

// Label codes used by the phantom.
enum PhantomClass : int {
    kBackground = 0,
    kCsf = 1,
    kGreyMatter = 2,
    kWhiteMatter = 3,
    kTumor = 4,
};

struct Phantom {
    Volume image;  // intensity bands per class, smoothed, plus noise
    Volume labels; // crisp integer codes 0..4
    Mask head;     // everything that is not background
    std::array<double, 3> tumor_center_mm{};
    double tumor_radius_mm = 0.0;
};

// Concentric lumpy ellipsoids (CSF core, WM, GM, CSF rim) with an
// off-center tumor blob. Intensities are class means on a 0..1000-ish
// scale with additive Gaussian noise of sigma = 1% of the intensity
// range, so every class pair stays >= 5 noise SDs apart. Deterministic
// in (dims, spacing, seed).
Phantom make_phantom(std::array<int, 3> dims, std::array<double, 3> spacing,
                     std::uint64_t seed);

// White noise per component, Gaussian-smoothed (sigma in mm), rescaled so
// the maximum voxel norm equals amplitude_mm. With `support`, the field
// is tapered to zero outside the mask's smoothed margin before rescaling.
VectorVolume random_smooth_velocity(const GridInfo& grid, double amplitude_mm,
                                    double smoothness_sigma_mm, std::uint64_t seed,
                                    const Mask* support = nullptr);

struct SyntheticGroup {
    Group group;                              // images, masks, labels per member
    std::vector<VectorVolume> true_velocities; // generative fields, sum to zero
    Phantom phantom;                           // the clean pre-deformation scene
};

struct GroupParams {
    int n = 3;
    double amplitude_mm = 6.0;
    double tumor_growth_mm = 0.0;   // radial mass-effect spread across members
    double intensity_shift = 0.0;   // tumor shift, fraction of intensity range
    std::uint64_t seed = 1;
};

// n members: n-1 random smooth velocities plus their negative sum, so the
// set is centered and the phantom itself is the true mean space. Tumor
// growth enters as a centered per-member radial expansion folded into the
// true velocities; the intensity shift alters tumor voxels before
// warping (non-correspondence). Member masks are the warped head minus
// the member's warped tumor (dilated by one voxel). Fails loudly if any
// generated transform folds.
SyntheticGroup make_group(const Phantom& phantom, const GroupParams& params);

} // namespace groupreg
