#include "transform/svf.hpp"

#include "core/parallel.hpp"

#include <algorithm>
#include <cmath>

namespace groupreg {

namespace {

// One self-composition step w(x) = u(x) + u(x + u(x)), positions in voxel
// coordinates, displacements in mm.
VectorVolume self_compose(const VectorVolume& u)
{
    const auto& g = u.grid;
    VectorVolume w(g);
    const double inv_s[3] = {1.0 / g.spacing[0], 1.0 / g.spacing[1], 1.0 / g.spacing[2]};
    parallel_for(static_cast<std::size_t>(g.dims[2]), [&](std::size_t zb, std::size_t ze) {
        for (std::size_t zi = zb; zi < ze; ++zi) {
            int z = static_cast<int>(zi);
            for (int y = 0; y < g.dims[1]; ++y) {
                for (int x = 0; x < g.dims[0]; ++x) {
                    std::size_t i = g.index(x, y, z);
                    double px = x + u.comp[0][i] * inv_s[0];
                    double py = y + u.comp[1][i] * inv_s[1];
                    double pz = z + u.comp[2][i] * inv_s[2];
                    auto s = sample_vector(u, px, py, pz);
                    w.comp[0][i] = u.comp[0][i] + s[0];
                    w.comp[1][i] = u.comp[1][i] + s[1];
                    w.comp[2][i] = u.comp[2][i] + s[2];
                }
            }
        }
    });
    return w;
}

} // namespace

ExponentialTrace exponentiate_trace(const VectorVolume& v, int squaring_steps)
{
    if (squaring_steps < 1)
        throw InvalidArgument("exponentiate: squaring_steps must be >= 1");
    ExponentialTrace trace;
    trace.steps = squaring_steps;
    trace.levels.reserve(squaring_steps + 1);

    const double scale = std::ldexp(1.0, -squaring_steps); // 2^-S
    VectorVolume u0(v.grid);
    for (int a = 0; a < 3; ++a) {
        for (std::size_t i = 0; i < v.comp[a].size(); ++i)
            u0.comp[a][i] = v.comp[a][i] * scale;
    }
    trace.levels.push_back(std::move(u0));
    for (int k = 0; k < squaring_steps; ++k)
        trace.levels.push_back(self_compose(trace.levels.back()));
    return trace;
}

DisplacementField exponentiate(const VectorVolume& v, int squaring_steps)
{
    auto trace = exponentiate_trace(v, squaring_steps);
    return DisplacementField(std::move(trace.levels.back()));
}

DisplacementField compose(const DisplacementField& outer, const DisplacementField& inner)
{
    require_same_grid(outer.grid(), inner.grid(), "compose");
    const auto& g = inner.grid();
    VectorVolume w(g);
    const double inv_s[3] = {1.0 / g.spacing[0], 1.0 / g.spacing[1], 1.0 / g.spacing[2]};
    parallel_for(static_cast<std::size_t>(g.dims[2]), [&](std::size_t zb, std::size_t ze) {
        for (std::size_t zi = zb; zi < ze; ++zi) {
            int z = static_cast<int>(zi);
            for (int y = 0; y < g.dims[1]; ++y) {
                for (int x = 0; x < g.dims[0]; ++x) {
                    std::size_t i = g.index(x, y, z);
                    double px = x + inner.u.comp[0][i] * inv_s[0];
                    double py = y + inner.u.comp[1][i] * inv_s[1];
                    double pz = z + inner.u.comp[2][i] * inv_s[2];
                    auto s = sample_vector(outer.u, px, py, pz);
                    w.comp[0][i] = inner.u.comp[0][i] + s[0];
                    w.comp[1][i] = inner.u.comp[1][i] + s[1];
                    w.comp[2][i] = inner.u.comp[2][i] + s[2];
                }
            }
        }
    });
    return DisplacementField(std::move(w));
}

Volume warp(const Volume& img, const DisplacementField& u)
{
    require_same_grid(img.grid, u.grid(), "warp");
    const auto& g = img.grid;
    Volume out(g);
    const double inv_s[3] = {1.0 / g.spacing[0], 1.0 / g.spacing[1], 1.0 / g.spacing[2]};
    parallel_for(static_cast<std::size_t>(g.dims[2]), [&](std::size_t zb, std::size_t ze) {
        for (std::size_t zi = zb; zi < ze; ++zi) {
            int z = static_cast<int>(zi);
            for (int y = 0; y < g.dims[1]; ++y) {
                for (int x = 0; x < g.dims[0]; ++x) {
                    std::size_t i = g.index(x, y, z);
                    out.data[i] = sample_trilinear(img,
                                                   x + u.u.comp[0][i] * inv_s[0],
                                                   y + u.u.comp[1][i] * inv_s[1],
                                                   z + u.u.comp[2][i] * inv_s[2]);
                }
            }
        }
    });
    return out;
}

Mask warp_mask(const Mask& mask, const DisplacementField& u)
{
    Volume soft = warp(mask_to_volume(mask), u);
    Mask out(mask.grid);
    for (std::size_t i = 0; i < soft.data.size(); ++i)
        out.data[i] = soft.data[i] >= 0.5 ? 1 : 0;
    return out;
}

Volume warp_labels(const Volume& labels, const DisplacementField& u)
{
    require_same_grid(labels.grid, u.grid(), "warp_labels");
    const auto& g = labels.grid;
    const int nx = g.dims[0], ny = g.dims[1], nz = g.dims[2];
    Volume out(g);
    const double inv_s[3] = {1.0 / g.spacing[0], 1.0 / g.spacing[1], 1.0 / g.spacing[2]};
    parallel_for(static_cast<std::size_t>(nz), [&](std::size_t zb, std::size_t ze) {
        for (std::size_t zi = zb; zi < ze; ++zi) {
            int z = static_cast<int>(zi);
            for (int y = 0; y < ny; ++y) {
                for (int x = 0; x < nx; ++x) {
                    std::size_t i = g.index(x, y, z);
                    double p[3] = {x + u.u.comp[0][i] * inv_s[0],
                                   y + u.u.comp[1][i] * inv_s[1],
                                   z + u.u.comp[2][i] * inv_s[2]};
                    int i0[3];
                    double f[3];
                    for (int b = 0; b < 3; ++b) {
                        double pc = std::clamp(p[b], 0.0, static_cast<double>(g.dims[b] - 1));
                        double fl = std::floor(pc);
                        int base = static_cast<int>(fl);
                        if (base > g.dims[b] - 2)
                            base = std::max(0, g.dims[b] - 2);
                        i0[b] = base;
                        f[b] = pc - base;
                    }
                    const double wx[2] = {1.0 - f[0], f[0]};
                    const double wy[2] = {1.0 - f[1], f[1]};
                    const double wz[2] = {1.0 - f[2], f[2]};
                    // Accumulate trilinear weight per distinct neighbor label,
                    // then take the heaviest; equivalent to interpolating each
                    // class indicator and taking the argmax.
                    double lab[8];
                    double wgt[8];
                    int k = 0;
                    for (int dz = 0; dz < 2; ++dz) {
                        int zc = std::min(i0[2] + dz, nz - 1);
                        for (int dy = 0; dy < 2; ++dy) {
                            int yc = std::min(i0[1] + dy, ny - 1);
                            double wzy = wz[dz] * wy[dy];
                            for (int dx = 0; dx < 2; ++dx) {
                                double w = wzy * wx[dx];
                                double l = labels.data[g.index(std::min(i0[0] + dx, nx - 1), yc, zc)];
                                int slot = -1;
                                for (int q = 0; q < k; ++q) {
                                    if (lab[q] == l) {
                                        slot = q;
                                        break;
                                    }
                                }
                                if (slot < 0) {
                                    slot = k++;
                                    lab[slot] = l;
                                    wgt[slot] = 0.0;
                                }
                                wgt[slot] += w;
                            }
                        }
                    }
                    int pick = 0;
                    for (int q = 1; q < k; ++q) {
                        if (wgt[q] > wgt[pick] ||
                            (wgt[q] == wgt[pick] && lab[q] < lab[pick]))
                            pick = q;
                    }
                    out.data[i] = lab[pick];
                }
            }
        }
    });
    return out;
}

JacobianMap jacobianmap_impl(const VectorVolume& u)
{
    const auto& g = u.grid;
    for (int a = 0; a < 3; ++a) {
        if (g.dims[a] < 2)
            throw InvalidArgument("jacobian_determinant: every axis must have size >= 2");
    }
    JacobianMap jm;
    jm.det = Volume(g);
    parallel_for(static_cast<std::size_t>(g.dims[2]), [&](std::size_t zb, std::size_t ze) {
        for (std::size_t zi = zb; zi < ze; ++zi) {
            int z = static_cast<int>(zi);
            for (int y = 0; y < g.dims[1]; ++y) {
                for (int x = 0; x < g.dims[0]; ++x) {
                    double J[3][3];
                    int idx[3] = {x, y, z};
                    for (int b = 0; b < 3; ++b) {
                        int lo = idx[b] - 1, hi = idx[b] + 1;
                        double denom = 2.0 * g.spacing[b];
                        if (lo < 0) {
                            lo = 0;
                            denom = g.spacing[b];
                        }
                        if (hi > g.dims[b] - 1) {
                            hi = g.dims[b] - 1;
                            denom = g.spacing[b];
                        }
                        int ph[3] = {x, y, z}, pl[3] = {x, y, z};
                        ph[b] = hi;
                        pl[b] = lo;
                        std::size_t ih = g.index(ph[0], ph[1], ph[2]);
                        std::size_t il = g.index(pl[0], pl[1], pl[2]);
                        for (int a = 0; a < 3; ++a)
                            J[a][b] = (u.comp[a][ih] - u.comp[a][il]) / denom;
                    }
                    for (int a = 0; a < 3; ++a)
                        J[a][a] += 1.0;
                    double det = J[0][0] * (J[1][1] * J[2][2] - J[1][2] * J[2][1]) -
                                 J[0][1] * (J[1][0] * J[2][2] - J[1][2] * J[2][0]) +
                                 J[0][2] * (J[1][0] * J[2][1] - J[1][1] * J[2][0]);
                    jm.det.data[g.index(x, y, z)] = det;
                }
            }
        }
    });
    return jm;
}

JacobianMap jacobian_determinant(const DisplacementField& u)
{
    return jacobianmap_impl(u.u);
}

// Adjoint of w = u + u(x + u(x)). Three contributions per voxel x with
// incoming gradient G(x):
//   1. the direct term:            dL/du(x)       += G(x)
//   2. the sample-position term:   dL/du(x)       += (1/s) J^T G(x)
//   3. the sampled-values term:    dL/du(nodes y) += trilinear splat of G(x)
// where J = d(interp u)/d(position) at y = x + u(x)/s. The splat pass is
// kept serial: scattered adds must land in a fixed order to stay bitwise
// deterministic.
static VectorVolume self_compose_adjoint(const VectorVolume& u, const VectorVolume& grad_w)
{
    const auto& g = u.grid;
    VectorVolume grad_u(g);
    const double inv_s[3] = {1.0 / g.spacing[0], 1.0 / g.spacing[1], 1.0 / g.spacing[2]};
    const int nx = g.dims[0], ny = g.dims[1], nz = g.dims[2];

    // Terms 1 and 2 are per-voxel maps.
    parallel_for(static_cast<std::size_t>(nz), [&](std::size_t zb, std::size_t ze) {
        for (std::size_t zi = zb; zi < ze; ++zi) {
            int z = static_cast<int>(zi);
            for (int y = 0; y < ny; ++y) {
                for (int x = 0; x < nx; ++x) {
                    std::size_t i = g.index(x, y, z);
                    double px = x + u.comp[0][i] * inv_s[0];
                    double py = y + u.comp[1][i] * inv_s[1];
                    double pz = z + u.comp[2][i] * inv_s[2];
                    auto s = sample_vector_grad(u, px, py, pz);
                    double gx = grad_w.comp[0][i];
                    double gy = grad_w.comp[1][i];
                    double gz = grad_w.comp[2][i];
                    for (int b = 0; b < 3; ++b) {
                        double jt = s.jac[0][b] * gx + s.jac[1][b] * gy + s.jac[2][b] * gz;
                        grad_u.comp[b][i] = grad_w.comp[b][i] + jt * inv_s[b];
                    }
                }
            }
        }
    });

    // Term 3: splat G(x) with trilinear weights onto the nodes around y.
    for (int z = 0; z < nz; ++z) {
        for (int y = 0; y < ny; ++y) {
            for (int x = 0; x < nx; ++x) {
                std::size_t i = g.index(x, y, z);
                double p[3] = {x + u.comp[0][i] * inv_s[0],
                               y + u.comp[1][i] * inv_s[1],
                               z + u.comp[2][i] * inv_s[2]};
                int i0[3];
                double f[3];
                for (int b = 0; b < 3; ++b) {
                    double pc = std::clamp(p[b], 0.0, static_cast<double>(g.dims[b] - 1));
                    double fl = std::floor(pc);
                    int base = static_cast<int>(fl);
                    if (base > g.dims[b] - 2)
                        base = std::max(0, g.dims[b] - 2);
                    i0[b] = base;
                    f[b] = pc - base;
                }
                const double wx[2] = {1.0 - f[0], f[0]};
                const double wy[2] = {1.0 - f[1], f[1]};
                const double wz[2] = {1.0 - f[2], f[2]};
                for (int dz = 0; dz < 2; ++dz) {
                    int zc = std::min(i0[2] + dz, nz - 1);
                    for (int dy = 0; dy < 2; ++dy) {
                        int yc = std::min(i0[1] + dy, ny - 1);
                        double wzy = wz[dz] * wy[dy];
                        for (int dx = 0; dx < 2; ++dx) {
                            double w = wzy * wx[dx];
                            if (w == 0.0)
                                continue;
                            std::size_t j = g.index(std::min(i0[0] + dx, nx - 1), yc, zc);
                            grad_u.comp[0][j] += w * grad_w.comp[0][i];
                            grad_u.comp[1][j] += w * grad_w.comp[1][i];
                            grad_u.comp[2][j] += w * grad_w.comp[2][i];
                        }
                    }
                }
            }
        }
    }
    return grad_u;
}

VectorVolume exponentiate_adjoint(const ExponentialTrace& trace, const VectorVolume& grad_exp)
{
    require_same_grid(trace.result().grid, grad_exp.grid, "exponentiate_adjoint");
    VectorVolume grad = grad_exp;
    for (int k = trace.steps - 1; k >= 0; --k)
        grad = self_compose_adjoint(trace.levels[k], grad);
    const double scale = std::ldexp(1.0, -trace.steps);
    for (int a = 0; a < 3; ++a) {
        for (double& v : grad.comp[a])
            v *= scale;
    }
    return grad;
}

VectorVolume warp_adjoint(const Volume& img, const VectorVolume& u, const Volume& grad_out)
{
    require_same_grid(img.grid, u.grid, "warp_adjoint");
    require_same_grid(img.grid, grad_out.grid, "warp_adjoint");
    const auto& g = img.grid;
    VectorVolume grad_u(g);
    const double inv_s[3] = {1.0 / g.spacing[0], 1.0 / g.spacing[1], 1.0 / g.spacing[2]};
    parallel_for(static_cast<std::size_t>(g.dims[2]), [&](std::size_t zb, std::size_t ze) {
        for (std::size_t zi = zb; zi < ze; ++zi) {
            int z = static_cast<int>(zi);
            for (int y = 0; y < g.dims[1]; ++y) {
                for (int x = 0; x < g.dims[0]; ++x) {
                    std::size_t i = g.index(x, y, z);
                    auto s = sample_trilinear_grad(img,
                                                   x + u.comp[0][i] * inv_s[0],
                                                   y + u.comp[1][i] * inv_s[1],
                                                   z + u.comp[2][i] * inv_s[2]);
                    double go = grad_out.data[i];
                    grad_u.comp[0][i] = go * s.dpos[0] * inv_s[0];
                    grad_u.comp[1][i] = go * s.dpos[1] * inv_s[1];
                    grad_u.comp[2][i] = go * s.dpos[2] * inv_s[2];
                }
            }
        }
    });
    return grad_u;
}

} // namespace groupreg
