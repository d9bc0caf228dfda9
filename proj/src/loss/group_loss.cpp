#include "loss/group_loss.hpp"

#include "core/boxsum.hpp"
#include "core/parallel.hpp"

#include <algorithm>
#include <cmath>

namespace groupreg {

namespace {

constexpr double kVarianceFloor = 1e-5;

// Local first/second-moment statistics for one image pair over the mask.
struct WindowStats {
    std::vector<double> sum_a, sum_b, sum_aa, sum_bb, sum_ab;
};

WindowStats window_stats(const Volume& a, const Volume& b, int radius)
{
    const auto& g = a.grid;
    const std::size_t n = g.voxels();
    std::vector<double> aa(n), bb(n), ab(n);
    parallel_for(n, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i) {
            aa[i] = a.data[i] * a.data[i];
            bb[i] = b.data[i] * b.data[i];
            ab[i] = a.data[i] * b.data[i];
        }
    });
    WindowStats s;
    s.sum_a = box_sum(g, a.data, radius);
    s.sum_b = box_sum(g, b.data, radius);
    s.sum_aa = box_sum(g, aa, radius);
    s.sum_bb = box_sum(g, bb, radius);
    s.sum_ab = box_sum(g, ab, radius);
    return s;
}

void validate_lncc_inputs(const Volume& a, const Volume& b, const Mask& mask, int window_radius)
{
    require_same_grid(a.grid, b.grid, "lncc");
    require_same_grid(a.grid, mask.grid, "lncc");
    if (window_radius < 1)
        throw InvalidArgument("lncc: window_radius must be >= 1");
    if (mask.count() == 0)
        throw EmptyMask("lncc: empty mask, no similarity support");
}

} // namespace

void validate_group(const Group& g)
{
    if (g.size() < 2)
        throw InvalidArgument("group: needs at least 2 members");
    const GridInfo& grid = g.grid();
    for (const auto& m : g.members) {
        require_same_grid(m.image.grid, grid, "group");
        require_same_grid(m.mask.grid, grid, "group");
        if (m.labels)
            require_same_grid(m.labels->grid, grid, "group");
    }
}

Volume mean_image(const std::vector<Volume>& warped)
{
    if (warped.size() < 2)
        throw InvalidArgument("mean_image: needs at least 2 volumes");
    const GridInfo& g = warped.front().grid;
    for (const auto& w : warped)
        require_same_grid(w.grid, g, "mean_image");
    const int n = static_cast<int>(warped.size());
    Volume out(g);
    parallel_for(g.voxels(), [&](std::size_t lo, std::size_t hi) {
        std::vector<double> vals(n);
        for (std::size_t i = lo; i < hi; ++i) {
            for (int m = 0; m < n; ++m)
                vals[m] = warped[m].data[i];
            out.data[i] = symmetric_sum(vals.data(), n) / n;
        }
    });
    return out;
}

Mask common_mask(const std::vector<Mask>& warped_masks)
{
    if (warped_masks.size() < 2)
        throw InvalidArgument("common_mask: needs at least 2 masks");
    const GridInfo& g = warped_masks.front().grid;
    for (const auto& m : warped_masks)
        require_same_grid(m.grid, g, "common_mask");
    Mask out(g, 1);
    for (const auto& m : warped_masks) {
        for (std::size_t i = 0; i < out.data.size(); ++i)
            out.data[i] &= m.data[i];
    }
    return out;
}

double lncc(const Volume& a, const Volume& b, const Mask& mask, int window_radius)
{
    validate_lncc_inputs(a, b, mask, window_radius);
    const auto& g = a.grid;
    WindowStats s = window_stats(a, b, window_radius);

    const std::size_t m_count = mask.count();
    const int nx = g.dims[0], ny = g.dims[1], nz = g.dims[2];
    double sum_r = parallel_sum(g.voxels(), [&](std::size_t lo, std::size_t hi) {
        double acc = 0.0;
        for (std::size_t i = lo; i < hi; ++i) {
            if (!mask.data[i])
                continue;
            int x = static_cast<int>(i % nx);
            int y = static_cast<int>((i / nx) % ny);
            int z = static_cast<int>(i / (static_cast<std::size_t>(nx) * ny));
            double cnt = static_cast<double>(axis_window_count(x, nx, window_radius)) *
                         axis_window_count(y, ny, window_radius) *
                         axis_window_count(z, nz, window_radius);
            double mu_a = s.sum_a[i] / cnt;
            double mu_b = s.sum_b[i] / cnt;
            double var_a = s.sum_aa[i] / cnt - mu_a * mu_a + kVarianceFloor;
            double var_b = s.sum_bb[i] / cnt - mu_b * mu_b + kVarianceFloor;
            double cov = s.sum_ab[i] / cnt - mu_a * mu_b;
            acc += cov / std::sqrt(var_a * var_b);
        }
        return acc;
    });
    return sum_r / static_cast<double>(m_count);
}

LnccResult lncc_with_gradient(const Volume& a, const Volume& b, const Mask& mask, int window_radius)
{
    validate_lncc_inputs(a, b, mask, window_radius);
    const auto& g = a.grid;
    const std::size_t n = g.voxels();
    WindowStats s = window_stats(a, b, window_radius);

    const double inv_m = 1.0 / static_cast<double>(mask.count());
    const int nx = g.dims[0], ny = g.dims[1], nz = g.dims[2];

    // Per-center coefficient fields for the adjoint box sums:
    //   d r(c)/d a_j = p(c) (b_j - mu_b) - qa(c) (a_j - mu_a), j in N(c)
    //   d r(c)/d b_j = p(c) (a_j - mu_a) - qb(c) (b_j - mu_b)
    // with p = 1/(N_c sqrt(AB)), qa = p C/A, qb = p C/B; all scaled by
    // 1/M for the mean over masked centers.
    std::vector<double> p(n, 0.0), p_mu_a(n, 0.0), p_mu_b(n, 0.0);
    std::vector<double> qa(n, 0.0), qa_mu_a(n, 0.0), qb(n, 0.0), qb_mu_b(n, 0.0);
    std::vector<double> r_field(n, 0.0);

    parallel_for(n, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i) {
            if (!mask.data[i])
                continue;
            int x = static_cast<int>(i % nx);
            int y = static_cast<int>((i / nx) % ny);
            int z = static_cast<int>(i / (static_cast<std::size_t>(nx) * ny));
            double cnt = static_cast<double>(axis_window_count(x, nx, window_radius)) *
                         axis_window_count(y, ny, window_radius) *
                         axis_window_count(z, nz, window_radius);
            double mu_a = s.sum_a[i] / cnt;
            double mu_b = s.sum_b[i] / cnt;
            double va = s.sum_aa[i] / cnt - mu_a * mu_a + kVarianceFloor;
            double vb = s.sum_bb[i] / cnt - mu_b * mu_b + kVarianceFloor;
            double cov = s.sum_ab[i] / cnt - mu_a * mu_b;
            double denom = std::sqrt(va * vb);
            r_field[i] = cov / denom;
            double pc = inv_m / (cnt * denom);
            p[i] = pc;
            p_mu_a[i] = pc * mu_a;
            p_mu_b[i] = pc * mu_b;
            double qac = pc * cov / va;
            double qbc = pc * cov / vb;
            qa[i] = qac;
            qa_mu_a[i] = qac * mu_a;
            qb[i] = qbc;
            qb_mu_b[i] = qbc * mu_b;
        }
    });

    LnccResult out;
    out.value = parallel_sum(n, [&](std::size_t lo, std::size_t hi) {
                    double acc = 0.0;
                    for (std::size_t i = lo; i < hi; ++i)
                        acc += r_field[i];
                    return acc;
                }) *
                inv_m;

    auto box_p = box_sum(g, p, window_radius);
    auto box_p_mu_a = box_sum(g, p_mu_a, window_radius);
    auto box_p_mu_b = box_sum(g, p_mu_b, window_radius);
    auto box_qa = box_sum(g, qa, window_radius);
    auto box_qa_mu_a = box_sum(g, qa_mu_a, window_radius);
    auto box_qb = box_sum(g, qb, window_radius);
    auto box_qb_mu_b = box_sum(g, qb_mu_b, window_radius);

    out.grad_a = Volume(g);
    out.grad_b = Volume(g);
    parallel_for(n, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t j = lo; j < hi; ++j) {
            out.grad_a.data[j] = b.data[j] * box_p[j] - box_p_mu_b[j] -
                                 a.data[j] * box_qa[j] + box_qa_mu_a[j];
            out.grad_b.data[j] = a.data[j] * box_p[j] - box_p_mu_a[j] -
                                 b.data[j] * box_qb[j] + box_qb_mu_b[j];
        }
    });
    return out;
}

namespace {

// Forward difference operator along `axis`, mm-scaled central differences
// with one-sided stencils at the faces, and its transpose. Lines are
// independent in both directions.
void axis_diff(const GridInfo& g, const std::vector<double>& in,
               std::vector<double>& out, int axis)
{
    const int n = g.dims[axis];
    const double s = g.spacing[axis];
    const std::ptrdiff_t stride =
        axis == 0 ? 1
                  : (axis == 1 ? g.dims[0]
                               : static_cast<std::ptrdiff_t>(g.dims[0]) * g.dims[1]);
    const int nu = axis == 0 ? g.dims[1] : g.dims[0];
    const int nv = axis == 2 ? g.dims[1] : g.dims[2];
    const std::size_t lines = static_cast<std::size_t>(nu) * nv;
    parallel_for(lines, [&](std::size_t lb, std::size_t le) {
        for (std::size_t line = lb; line < le; ++line) {
            int u = static_cast<int>(line % nu);
            int v = static_cast<int>(line / nu);
            std::size_t base;
            if (axis == 0)
                base = g.index(0, u, v);
            else if (axis == 1)
                base = g.index(u, 0, v);
            else
                base = g.index(u, v, 0);
            out[base] = (in[base + stride] - in[base]) / s;
            for (int i = 1; i < n - 1; ++i)
                out[base + i * stride] =
                    (in[base + (i + 1) * stride] - in[base + (i - 1) * stride]) / (2.0 * s);
            out[base + (n - 1) * stride] =
                (in[base + (n - 1) * stride] - in[base + (n - 2) * stride]) / s;
        }
    });
}

void axis_diff_adjoint_accumulate(const GridInfo& g, const std::vector<double>& gin,
                                  std::vector<double>& gout, int axis, double scale)
{
    const int n = g.dims[axis];
    const double s = g.spacing[axis];
    const std::ptrdiff_t stride =
        axis == 0 ? 1
                  : (axis == 1 ? g.dims[0]
                               : static_cast<std::ptrdiff_t>(g.dims[0]) * g.dims[1]);
    const int nu = axis == 0 ? g.dims[1] : g.dims[0];
    const int nv = axis == 2 ? g.dims[1] : g.dims[2];
    const std::size_t lines = static_cast<std::size_t>(nu) * nv;
    parallel_for(lines, [&](std::size_t lb, std::size_t le) {
        for (std::size_t line = lb; line < le; ++line) {
            int u = static_cast<int>(line % nu);
            int v = static_cast<int>(line / nu);
            std::size_t base;
            if (axis == 0)
                base = g.index(0, u, v);
            else if (axis == 1)
                base = g.index(u, 0, v);
            else
                base = g.index(u, v, 0);
            // face stencils
            gout[base] += scale * (-gin[base] / s);
            gout[base + stride] += scale * (gin[base] / s);
            gout[base + (n - 1) * stride] += scale * (gin[base + (n - 1) * stride] / s);
            gout[base + (n - 2) * stride] += scale * (-gin[base + (n - 1) * stride] / s);
            // interior stencils
            for (int i = 1; i < n - 1; ++i) {
                double gi = scale * gin[base + i * stride] / (2.0 * s);
                gout[base + (i + 1) * stride] += gi;
                gout[base + (i - 1) * stride] -= gi;
            }
        }
    });
}

} // namespace

double velocity_regularizer(const VectorVolume& v)
{
    const auto& g = v.grid;
    for (int a = 0; a < 3; ++a) {
        if (g.dims[a] < 2)
            throw InvalidArgument("regularizer: every axis must have size >= 2");
    }
    const std::size_t n = g.voxels();
    std::vector<double> d(n);
    double total = 0.0;
    for (int a = 0; a < 3; ++a) {
        for (int b = 0; b < 3; ++b) {
            axis_diff(g, v.comp[a], d, b);
            total += parallel_sum(n, [&](std::size_t lo, std::size_t hi) {
                double acc = 0.0;
                for (std::size_t i = lo; i < hi; ++i)
                    acc += d[i] * d[i];
                return acc;
            });
        }
    }
    return total / static_cast<double>(n);
}

double velocity_regularizer_with_gradient(const VectorVolume& v, VectorVolume& grad)
{
    const auto& g = v.grid;
    for (int a = 0; a < 3; ++a) {
        if (g.dims[a] < 2)
            throw InvalidArgument("regularizer: every axis must have size >= 2");
    }
    grad = VectorVolume(g);
    const std::size_t n = g.voxels();
    const double inv_n = 1.0 / static_cast<double>(n);
    std::vector<double> d(n);
    double total = 0.0;
    for (int a = 0; a < 3; ++a) {
        for (int b = 0; b < 3; ++b) {
            axis_diff(g, v.comp[a], d, b);
            total += parallel_sum(n, [&](std::size_t lo, std::size_t hi) {
                double acc = 0.0;
                for (std::size_t i = lo; i < hi; ++i)
                    acc += d[i] * d[i];
                return acc;
            });
            axis_diff_adjoint_accumulate(g, d, grad.comp[a], b, 2.0 * inv_n);
        }
    }
    return total * inv_n;
}

LossEvaluation evaluate_group_loss(const Group& group,
                                   const std::vector<VectorVolume>& velocities,
                                   const LossSettings& settings,
                                   bool with_gradient,
                                   const std::vector<VectorVolume>* base,
                                   const Mask* fixed_region)
{
    validate_group(group);
    const int n = group.size();
    if (static_cast<int>(velocities.size()) != n)
        throw InvalidArgument("total_loss: one velocity field per group member required");
    const GridInfo& g = group.grid();
    for (const auto& v : velocities)
        require_same_grid(v.grid, g, "total_loss");
    if (base) {
        if (static_cast<int>(base->size()) != n)
            throw InvalidArgument("total_loss: base velocity count mismatch");
        for (const auto& v : *base)
            require_same_grid(v.grid, g, "total_loss");
    }

    LossEvaluation ev;

    // Effective velocities, exponentials, warps.
    std::vector<VectorVolume> effective(n);
    std::vector<ExponentialTrace> traces(n);
    for (int i = 0; i < n; ++i) {
        if (base) {
            VectorVolume w(g);
            for (int a = 0; a < 3; ++a) {
                const auto& bb = (*base)[i].comp[a];
                const auto& vv = velocities[i].comp[a];
                for (std::size_t j = 0; j < w.comp[a].size(); ++j)
                    w.comp[a][j] = bb[j] + vv[j];
            }
            effective[i] = std::move(w);
        } else {
            effective[i] = velocities[i];
        }
        traces[i] = exponentiate_trace(effective[i], settings.squaring_steps);
        ev.displacements.emplace_back(traces[i].result());
        ev.warped_images.push_back(warp(group.members[i].image, ev.displacements.back()));
    }

    ev.mean = mean_image(ev.warped_images);

    if (fixed_region) {
        require_same_grid(fixed_region->grid, g, "total_loss");
        ev.region = *fixed_region;
    } else {
        std::vector<Mask> warped_masks;
        warped_masks.reserve(n);
        for (int i = 0; i < n; ++i)
            warped_masks.push_back(warp_mask(group.members[i].mask, ev.displacements[i]));
        ev.region = common_mask(warped_masks);
    }
    if (ev.region.count() == 0)
        throw EmptyMask("total_loss: common mask is empty, member masks do not overlap");

    std::vector<double> lncc_values(n), reg_values(n);
    std::vector<LnccResult> lncc_grads;
    std::vector<VectorVolume> reg_grads;
    if (with_gradient) {
        lncc_grads.resize(n);
        reg_grads.resize(n);
    }
    for (int i = 0; i < n; ++i) {
        if (with_gradient) {
            lncc_grads[i] = lncc_with_gradient(ev.warped_images[i], ev.mean, ev.region,
                                               settings.window_radius);
            lncc_values[i] = lncc_grads[i].value;
            reg_values[i] = velocity_regularizer_with_gradient(effective[i], reg_grads[i]);
        } else {
            lncc_values[i] = lncc(ev.warped_images[i], ev.mean, ev.region, settings.window_radius);
            reg_values[i] = velocity_regularizer(effective[i]);
        }
    }

    ev.breakdown.similarity_term = symmetric_sum(lncc_values.data(), n) / n;
    ev.breakdown.regularizer_term = symmetric_sum(reg_values.data(), n) / n;
    ev.breakdown.total =
        -ev.breakdown.similarity_term + settings.lambda * ev.breakdown.regularizer_term;
    ev.breakdown.masked_voxel_count = ev.region.count();

    if (!with_gradient)
        return ev;

    // dTotal/d mean, summed over the members' b-sides in canonical order.
    const std::size_t nvox = g.voxels();
    Volume grad_mean(g);
    parallel_for(nvox, [&](std::size_t lo, std::size_t hi) {
        std::vector<double> vals(n);
        for (std::size_t j = lo; j < hi; ++j) {
            for (int i = 0; i < n; ++i)
                vals[i] = lncc_grads[i].grad_b.data[j];
            grad_mean.data[j] = symmetric_sum(vals.data(), n);
        }
    });

    const double inv_n = 1.0 / n;
    ev.gradients.resize(n);
    for (int i = 0; i < n; ++i) {
        // dTotal/dW_i = -(1/n) grad_a_i - (1/n^2) sum_j grad_b_j
        Volume grad_warped(g);
        parallel_for(nvox, [&](std::size_t lo, std::size_t hi) {
            for (std::size_t j = lo; j < hi; ++j) {
                grad_warped.data[j] = -inv_n * lncc_grads[i].grad_a.data[j] -
                                      inv_n * inv_n * grad_mean.data[j];
            }
        });
        VectorVolume grad_u =
            warp_adjoint(group.members[i].image, traces[i].result(), grad_warped);
        VectorVolume grad_v = exponentiate_adjoint(traces[i], grad_u);
        const double reg_scale = settings.lambda * inv_n;
        for (int a = 0; a < 3; ++a) {
            for (std::size_t j = 0; j < nvox; ++j)
                grad_v.comp[a][j] += reg_scale * reg_grads[i].comp[a][j];
        }
        ev.gradients[i] = std::move(grad_v);
    }
    return ev;
}

LossBreakdown total_loss(const Group& group, const std::vector<VectorVolume>& velocities,
                         const LossSettings& settings)
{
    return evaluate_group_loss(group, velocities, settings, false).breakdown;
}

std::vector<VectorVolume> loss_gradient(const Group& group,
                                        const std::vector<VectorVolume>& velocities,
                                        const LossSettings& settings)
{
    return evaluate_group_loss(group, velocities, settings, true).gradients;
}

} // namespace groupreg
