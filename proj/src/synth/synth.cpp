#include "synth/synth.hpp"

#include "core/parallel.hpp"
#include "core/rng.hpp"

#include <algorithm>
#include <cmath>

namespace groupreg {

namespace {

// Class mean intensities, loosely FLAIR-like. The scale matters: local
// variances must sit far above the similarity metric's variance floor.
constexpr double kClassMean[5] = {20.0, 120.0, 620.0, 420.0, 870.0};
constexpr double kIntensityRange = 850.0; // max - min of the class means
constexpr double kNoiseSigma = 0.01 * kIntensityRange;

std::vector<double> serial_gaussians(SplitMix64& rng, std::size_t n)
{
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i)
        out[i] = rng.next_gaussian();
    return out;
}

Mask dilate_once(const Mask& m)
{
    const auto& g = m.grid;
    Mask out(g);
    const int nx = g.dims[0], ny = g.dims[1], nz = g.dims[2];
    parallel_for(static_cast<std::size_t>(nz), [&](std::size_t zb, std::size_t ze) {
        for (std::size_t zi = zb; zi < ze; ++zi) {
            int z = static_cast<int>(zi);
            for (int y = 0; y < ny; ++y) {
                for (int x = 0; x < nx; ++x) {
                    std::uint8_t v = 0;
                    for (int dz = -1; dz <= 1 && !v; ++dz) {
                        int zc = std::clamp(z + dz, 0, nz - 1);
                        for (int dy = -1; dy <= 1 && !v; ++dy) {
                            int yc = std::clamp(y + dy, 0, ny - 1);
                            for (int dx = -1; dx <= 1; ++dx) {
                                int xc = std::clamp(x + dx, 0, nx - 1);
                                if (m.data[g.index(xc, yc, zc)]) {
                                    v = 1;
                                    break;
                                }
                            }
                        }
                    }
                    out.data[g.index(x, y, z)] = v;
                }
            }
        }
    });
    return out;
}

} // namespace

Phantom make_phantom(std::array<int, 3> dims, std::array<double, 3> spacing,
                     std::uint64_t seed)
{
    GridInfo g = make_grid(dims, spacing);
    for (int a = 0; a < 3; ++a) {
        if (dims[a] < 8)
            throw InvalidArgument("make_phantom: dims must be >= 8 per axis");
    }
    const std::size_t n = g.voxels();

    double center[3], semi[3];
    for (int a = 0; a < 3; ++a) {
        center[a] = 0.5 * (dims[a] - 1) * spacing[a];
        semi[a] = 0.42 * (dims[a] - 1) * spacing[a];
    }
    const double min_semi = std::min({semi[0], semi[1], semi[2]});

    // Lumps on the shell radii so the shape has angular structure.
    SplitMix64 root(seed);
    SplitMix64 bump_rng = root.fork(1);
    constexpr int kBumps = 6;
    double bump_amp[kBumps], bump_pos[kBumps][3];
    const double bump_sigma = 0.30 * min_semi;
    for (int k = 0; k < kBumps; ++k) {
        bump_amp[k] = (bump_rng.next_uniform() * 2.0 - 1.0) * 0.08;
        for (int a = 0; a < 3; ++a)
            bump_pos[k][a] = center[a] + (bump_rng.next_uniform() * 2.0 - 1.0) * 0.6 * semi[a];
    }

    Phantom ph;
    ph.tumor_radius_mm = 0.20 * min_semi;
    ph.tumor_center_mm = {center[0] + 0.34 * semi[0], center[1] + 0.12 * semi[1],
                          center[2] - 0.20 * semi[2]};

    Volume class_mean(g);
    ph.labels = Volume(g);
    ph.head = Mask(g);
    parallel_for(static_cast<std::size_t>(dims[2]), [&](std::size_t zb, std::size_t ze) {
        for (std::size_t zi = zb; zi < ze; ++zi) {
            int z = static_cast<int>(zi);
            double pz = z * spacing[2];
            for (int y = 0; y < dims[1]; ++y) {
                double py = y * spacing[1];
                for (int x = 0; x < dims[0]; ++x) {
                    double px = x * spacing[0];
                    double rx = (px - center[0]) / semi[0];
                    double ry = (py - center[1]) / semi[1];
                    double rz = (pz - center[2]) / semi[2];
                    double rho = std::sqrt(rx * rx + ry * ry + rz * rz);
                    for (int k = 0; k < kBumps; ++k) {
                        double dx = px - bump_pos[k][0];
                        double dy = py - bump_pos[k][1];
                        double dz = pz - bump_pos[k][2];
                        rho += bump_amp[k] *
                               std::exp(-(dx * dx + dy * dy + dz * dz) /
                                        (2.0 * bump_sigma * bump_sigma));
                    }
                    int cls = kBackground;
                    if (rho <= 0.32)
                        cls = kCsf;
                    else if (rho <= 0.62)
                        cls = kWhiteMatter;
                    else if (rho <= 0.90)
                        cls = kGreyMatter;
                    else if (rho <= 1.0)
                        cls = kCsf; // cortical rim
                    if (cls != kBackground) {
                        double tx = px - ph.tumor_center_mm[0];
                        double ty = py - ph.tumor_center_mm[1];
                        double tz = pz - ph.tumor_center_mm[2];
                        if (tx * tx + ty * ty + tz * tz <=
                            ph.tumor_radius_mm * ph.tumor_radius_mm)
                            cls = kTumor;
                    }
                    std::size_t i = g.index(x, y, z);
                    ph.labels.data[i] = cls;
                    ph.head.data[i] = cls != kBackground;
                    class_mean.data[i] = kClassMean[cls];
                }
            }
        }
    });

    // Soft tissue boundaries, then a low-amplitude smooth texture inside
    // the head (gives the local correlation something to lock onto away
    // from boundaries), then the acquisition noise.
    const double blur = 1.2 * std::max({spacing[0], spacing[1], spacing[2]});
    Volume img = gaussian_smooth(class_mean, {blur, blur, blur});

    SplitMix64 texture_rng = root.fork(2);
    Volume texture(g, serial_gaussians(texture_rng, n));
    texture = gaussian_smooth(texture, {5.0, 5.0, 5.0});
    double tmax = 0.0;
    for (double v : texture.data)
        tmax = std::max(tmax, std::abs(v));
    if (tmax > 0.0) {
        for (std::size_t i = 0; i < n; ++i) {
            if (ph.head.data[i])
                img.data[i] *= 1.0 + 0.05 * texture.data[i] / tmax;
        }
    }

    SplitMix64 noise_rng = root.fork(3);
    std::vector<double> noise = serial_gaussians(noise_rng, n);
    for (std::size_t i = 0; i < n; ++i)
        img.data[i] += kNoiseSigma * noise[i];

    ph.image = std::move(img);
    return ph;
}

VectorVolume random_smooth_velocity(const GridInfo& grid, double amplitude_mm,
                                    double smoothness_sigma_mm, std::uint64_t seed,
                                    const Mask* support)
{
    validate_grid(grid);
    if (amplitude_mm < 0.0)
        throw InvalidArgument("random_smooth_velocity: amplitude must be >= 0");
    if (!(smoothness_sigma_mm > 0.0))
        throw InvalidArgument("random_smooth_velocity: sigma must be > 0");

    VectorVolume field(grid);
    if (amplitude_mm == 0.0)
        return field;

    const std::size_t n = grid.voxels();
    SplitMix64 rng(seed);
    const std::array<double, 3> sig = {smoothness_sigma_mm, smoothness_sigma_mm,
                                       smoothness_sigma_mm};
    for (int a = 0; a < 3; ++a) {
        Volume comp(grid, serial_gaussians(rng, n));
        comp = gaussian_smooth(comp, sig);
        field.comp[a] = std::move(comp.data);
    }

    if (support) {
        require_same_grid(support->grid, grid, "random_smooth_velocity");
        Volume soft = gaussian_smooth(mask_to_volume(*support), sig);
        for (std::size_t i = 0; i < n; ++i) {
            double t = std::clamp((soft.data[i] - 0.05) / 0.90, 0.0, 1.0);
            for (int a = 0; a < 3; ++a)
                field.comp[a][i] *= t;
        }
    }

    double max_norm = field.max_norm();
    if (max_norm == 0.0)
        return field;
    const double scale = amplitude_mm / max_norm;
    for (int a = 0; a < 3; ++a) {
        for (double& v : field.comp[a])
            v *= scale;
    }
    return field;
}

SyntheticGroup make_group(const Phantom& phantom, const GroupParams& params)
{
    const int n = params.n;
    if (n < 2)
        throw InvalidArgument("make_group: n must be >= 2");
    if (params.amplitude_mm < 0.0)
        throw InvalidArgument("make_group: amplitude must be >= 0");
    if (params.tumor_growth_mm < 0.0)
        throw InvalidArgument("make_group: tumor_growth must be >= 0");
    if (params.intensity_shift < 0.0 || params.intensity_shift > 1.0)
        throw InvalidArgument("make_group: intensity_shift must be in [0, 1]");
    const GridInfo& g = phantom.image.grid;
    const std::size_t nvox = g.voxels();

    SyntheticGroup out;
    out.phantom = phantom;

    // n-1 independent draws plus their negative sum: exactly centered.
    const double sigma = std::max(8.0, 1.2 * params.amplitude_mm);
    SplitMix64 root(params.seed);
    out.true_velocities.reserve(n);
    VectorVolume last(g);
    for (int i = 0; i < n - 1; ++i) {
        VectorVolume v = random_smooth_velocity(g, params.amplitude_mm, sigma,
                                                root.next_u64(), &phantom.head);
        for (int a = 0; a < 3; ++a) {
            for (std::size_t j = 0; j < nvox; ++j)
                last.comp[a][j] -= v.comp[a][j];
        }
        out.true_velocities.push_back(std::move(v));
    }
    out.true_velocities.push_back(std::move(last));

    // Tumor mass effect: centered radial expansion around the mean
    // time-point; scale g_i per member, sum_i g_i = 0. The pull-back
    // samples toward the tumor center for positive g_i, which grows the
    // tumor in that member.
    if (params.tumor_growth_mm > 0.0) {
        const double r = phantom.tumor_radius_mm;
        for (int i = 0; i < n; ++i) {
            double gi = params.tumor_growth_mm *
                        (static_cast<double>(i) / (n - 1) - 0.5);
            if (gi == 0.0)
                continue;
            auto& v = out.true_velocities[i];
            parallel_for(static_cast<std::size_t>(g.dims[2]), [&](std::size_t zb, std::size_t ze) {
                for (std::size_t zi = zb; zi < ze; ++zi) {
                    int z = static_cast<int>(zi);
                    double pz = z * g.spacing[2] - phantom.tumor_center_mm[2];
                    for (int y = 0; y < g.dims[1]; ++y) {
                        double py = y * g.spacing[1] - phantom.tumor_center_mm[1];
                        for (int x = 0; x < g.dims[0]; ++x) {
                            double px = x * g.spacing[0] - phantom.tumor_center_mm[0];
                            double d = std::sqrt(px * px + py * py + pz * pz);
                            double t = d / r;
                            // t * exp((1 - t^2)/2): unit peak on the tumor
                            // shell, smooth at the center, fast decay.
                            double profile = t * std::exp(0.5 * (1.0 - t * t));
                            double f = d > 0.0 ? -gi * profile / d : 0.0;
                            std::size_t j = g.index(x, y, z);
                            v.comp[0][j] += f * px;
                            v.comp[1][j] += f * py;
                            v.comp[2][j] += f * pz;
                        }
                    }
                }
            });
        }
    }

    // Per-member tumor intensity trend (non-correspondence): applied to
    // the clean phantom before warping, so it lives exactly in the
    // (masked-out) tumor voxels.
    out.group.members.resize(n);
    for (int i = 0; i < n; ++i) {
        DisplacementField u = exponentiate(out.true_velocities[i], 7);
        JacobianMap jac = jacobian_determinant(u);
        double jmin = jac.det.data[0];
        for (double j : jac.det.data)
            jmin = std::min(jmin, j);
        if (jmin <= 0.0)
            throw InvalidArgument(
                "make_group: generated transform folds (min Jacobian " +
                std::to_string(jmin) +
                "); amplitude or tumor_growth exceeds the fold-free bound");

        Volume source = phantom.image;
        double tau = params.intensity_shift * kIntensityRange *
                     (static_cast<double>(i) / (n - 1));
        if (tau != 0.0) {
            for (std::size_t j = 0; j < nvox; ++j) {
                if (std::llround(phantom.labels.data[j]) == kTumor)
                    source.data[j] += tau;
            }
        }

        GroupMember& m = out.group.members[i];
        m.image = warp(source, u);
        m.labels = warp_labels(phantom.labels, u);
        Mask head_i = warp_mask(phantom.head, u);
        Mask tumor_i(g);
        for (std::size_t j = 0; j < nvox; ++j)
            tumor_i.data[j] = std::llround(m.labels->data[j]) == kTumor;
        Mask excluded = dilate_once(tumor_i);
        m.mask = Mask(g);
        for (std::size_t j = 0; j < nvox; ++j)
            m.mask.data[j] = head_i.data[j] && !excluded.data[j];
        if (m.mask.count() == 0)
            throw NumericFailure("make_group: member mask is empty");
    }
    return out;
}

} // namespace groupreg
