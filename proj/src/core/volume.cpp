#include "core/volume.hpp"

#include "core/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace groupreg {

namespace {

double clampd(double v, double lo, double hi)
{
    return v < lo ? lo : (v > hi ? hi : v);
}

// 1-D neighbourhood for clamped trilinear sampling along one axis:
// integer base node i0 with i0+1 valid (or pinned at the face), the
// fractional weight, and whether the coordinate was clamped (derivative
// along that axis is then zero).
struct AxisSample {
    int i0;
    double frac;
    bool clamped;
};

AxisSample axis_sample(double p, int n)
{
    AxisSample s;
    s.clamped = false;
    if (p <= 0.0) {
        s.i0 = 0;
        s.frac = 0.0;
        s.clamped = p < 0.0;
        return s;
    }
    if (p >= n - 1) {
        // land on the corner with zero fraction so sampling at the exact
        // upper boundary is a plain lookup, bitwise equal to the stored value
        s.i0 = std::max(0, n - 1);
        s.frac = 0.0;
        s.clamped = p > n - 1;
        return s;
    }
    double fl = std::floor(p);
    s.i0 = static_cast<int>(fl);
    s.frac = p - fl;
    return s;
}

void require_point_finite(double px, double py, double pz)
{
    if (!std::isfinite(px) || !std::isfinite(py) || !std::isfinite(pz))
        throw InvalidArgument("sample_trilinear: non-finite sample point");
}

// Discrete Gaussian kernel on a spacing-s lattice, normalized to sum 1.
std::vector<double> gaussian_kernel(double sigma_mm, double spacing)
{
    if (sigma_mm < 0.0)
        throw InvalidArgument("gaussian_smooth: negative sigma");
    if (sigma_mm == 0.0)
        return {1.0};
    int radius = static_cast<int>(std::ceil(3.0 * sigma_mm / spacing));
    std::vector<double> k(2 * radius + 1);
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        double d = i * spacing;
        k[i + radius] = std::exp(-0.5 * d * d / (sigma_mm * sigma_mm));
        sum += k[i + radius];
    }
    for (double& w : k)
        w /= sum;
    return k;
}

// Convolve along one axis with edge replication. Lines are independent,
// so the parallel loop is bitwise deterministic.
void convolve_axis(const GridInfo& g, const std::vector<double>& in,
                   std::vector<double>& out, int axis, const std::vector<double>& kernel)
{
    if (kernel.size() == 1) {
        out = in;
        return;
    }
    const int radius = static_cast<int>(kernel.size() / 2);
    const int n = g.dims[axis];
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
            for (int i = 0; i < n; ++i) {
                double acc = 0.0;
                for (int k = -radius; k <= radius; ++k) {
                    int j = std::clamp(i + k, 0, n - 1);
                    acc += kernel[k + radius] * in[base + j * stride];
                }
                out[base + i * stride] = acc;
            }
        }
    });
}

} // namespace

GridInfo make_grid(std::array<int, 3> dims, std::array<double, 3> spacing)
{
    GridInfo g;
    g.dims = dims;
    g.spacing = spacing;
    g.affine = {spacing[0], 0, 0, 0,
                0, spacing[1], 0, 0,
                0, 0, spacing[2], 0,
                0, 0, 0, 1};
    validate_grid(g);
    return g;
}

void validate_grid(const GridInfo& g)
{
    for (int a = 0; a < 3; ++a) {
        if (g.dims[a] < 1)
            throw InvalidArgument("grid: dims must be >= 1");
        if (!(g.spacing[a] > 0.0) || !std::isfinite(g.spacing[a]))
            throw InvalidArgument("grid: spacing must be strictly positive");
    }
}

bool same_grid(const GridInfo& a, const GridInfo& b)
{
    for (int i = 0; i < 3; ++i) {
        if (a.dims[i] != b.dims[i])
            return false;
        double rel = std::abs(a.spacing[i] - b.spacing[i]) /
                     std::max(a.spacing[i], b.spacing[i]);
        if (rel > 1e-6)
            return false;
    }
    return true;
}

void require_same_grid(const GridInfo& a, const GridInfo& b, const char* what)
{
    if (!same_grid(a, b))
        throw GridMismatch(std::string(what) + ": inputs are not on a common grid");
}

void require_finite(const std::vector<double>& v, const char* what)
{
    for (double x : v) {
        if (!std::isfinite(x))
            throw InvalidArgument(std::string(what) + ": non-finite value");
    }
}

Volume::Volume(GridInfo g, std::vector<double> values)
    : grid(g), data(std::move(values))
{
    validate_grid(grid);
    if (data.size() != grid.voxels())
        throw InvalidArgument("Volume: data length does not match dims");
    require_finite(data, "Volume");
}

Volume::Volume(GridInfo g, double fill)
    : grid(g), data(grid.voxels(), fill)
{
    validate_grid(grid);
    if (!std::isfinite(fill))
        throw InvalidArgument("Volume: non-finite fill value");
}

Mask::Mask(GridInfo g, std::vector<std::uint8_t> values)
    : grid(g), data(std::move(values))
{
    validate_grid(grid);
    if (data.size() != grid.voxels())
        throw InvalidArgument("Mask: data length does not match dims");
    for (std::uint8_t v : data) {
        if (v > 1)
            throw InvalidArgument("Mask: values must be 0 or 1");
    }
}

Mask::Mask(GridInfo g, std::uint8_t fill)
    : grid(g), data(grid.voxels(), fill)
{
    validate_grid(grid);
    if (fill > 1)
        throw InvalidArgument("Mask: values must be 0 or 1");
}

std::size_t Mask::count() const
{
    std::size_t c = 0;
    for (std::uint8_t v : data)
        c += v;
    return c;
}

VectorVolume::VectorVolume(GridInfo g)
    : grid(g)
{
    validate_grid(grid);
    for (auto& c : comp)
        c.assign(grid.voxels(), 0.0);
}

VectorVolume::VectorVolume(GridInfo g, std::array<std::vector<double>, 3> values)
    : grid(g), comp(std::move(values))
{
    validate_grid(grid);
    for (auto& c : comp) {
        if (c.size() != grid.voxels())
            throw InvalidArgument("VectorVolume: component length does not match dims");
        require_finite(c, "VectorVolume");
    }
}

double VectorVolume::max_norm() const
{
    double m = 0.0;
    for (std::size_t i = 0; i < comp[0].size(); ++i) {
        double n2 = comp[0][i] * comp[0][i] + comp[1][i] * comp[1][i] +
                    comp[2][i] * comp[2][i];
        m = std::max(m, n2);
    }
    return std::sqrt(m);
}

double sample_trilinear(const Volume& vol, double px, double py, double pz)
{
    require_point_finite(px, py, pz);
    const auto& g = vol.grid;
    AxisSample sx = axis_sample(px, g.dims[0]);
    AxisSample sy = axis_sample(py, g.dims[1]);
    AxisSample sz = axis_sample(pz, g.dims[2]);
    const int x1 = std::min(sx.i0 + 1, g.dims[0] - 1);
    const int y1 = std::min(sy.i0 + 1, g.dims[1] - 1);
    const int z1 = std::min(sz.i0 + 1, g.dims[2] - 1);
    const double fx = sx.frac, fy = sy.frac, fz = sz.frac;

    double c000 = vol.at(sx.i0, sy.i0, sz.i0);
    double c100 = vol.at(x1, sy.i0, sz.i0);
    double c010 = vol.at(sx.i0, y1, sz.i0);
    double c110 = vol.at(x1, y1, sz.i0);
    double c001 = vol.at(sx.i0, sy.i0, z1);
    double c101 = vol.at(x1, sy.i0, z1);
    double c011 = vol.at(sx.i0, y1, z1);
    double c111 = vol.at(x1, y1, z1);

    double c00 = c000 + fx * (c100 - c000);
    double c10 = c010 + fx * (c110 - c010);
    double c01 = c001 + fx * (c101 - c001);
    double c11 = c011 + fx * (c111 - c011);
    double c0 = c00 + fy * (c10 - c00);
    double c1 = c01 + fy * (c11 - c01);
    return c0 + fz * (c1 - c0);
}

SampleGrad sample_trilinear_grad(const Volume& vol, double px, double py, double pz)
{
    require_point_finite(px, py, pz);
    const auto& g = vol.grid;
    AxisSample sx = axis_sample(px, g.dims[0]);
    AxisSample sy = axis_sample(py, g.dims[1]);
    AxisSample sz = axis_sample(pz, g.dims[2]);
    const int x1 = std::min(sx.i0 + 1, g.dims[0] - 1);
    const int y1 = std::min(sy.i0 + 1, g.dims[1] - 1);
    const int z1 = std::min(sz.i0 + 1, g.dims[2] - 1);
    const double fx = sx.frac, fy = sy.frac, fz = sz.frac;

    double c000 = vol.at(sx.i0, sy.i0, sz.i0);
    double c100 = vol.at(x1, sy.i0, sz.i0);
    double c010 = vol.at(sx.i0, y1, sz.i0);
    double c110 = vol.at(x1, y1, sz.i0);
    double c001 = vol.at(sx.i0, sy.i0, z1);
    double c101 = vol.at(x1, sy.i0, z1);
    double c011 = vol.at(sx.i0, y1, z1);
    double c111 = vol.at(x1, y1, z1);

    double c00 = c000 + fx * (c100 - c000);
    double c10 = c010 + fx * (c110 - c010);
    double c01 = c001 + fx * (c101 - c001);
    double c11 = c011 + fx * (c111 - c011);
    double c0 = c00 + fy * (c10 - c00);
    double c1 = c01 + fy * (c11 - c01);

    SampleGrad out;
    out.value = c0 + fz * (c1 - c0);

    // d/dx: interpolate the x-differences over y,z.
    double dx00 = c100 - c000;
    double dx10 = c110 - c010;
    double dx01 = c101 - c001;
    double dx11 = c111 - c011;
    double dx0 = dx00 + fy * (dx10 - dx00);
    double dx1 = dx01 + fy * (dx11 - dx01);
    out.dpos[0] = sx.clamped ? 0.0 : dx0 + fz * (dx1 - dx0);

    double dy0 = c10 - c00;
    double dy1 = c11 - c01;
    out.dpos[1] = sy.clamped ? 0.0 : dy0 + fz * (dy1 - dy0);

    out.dpos[2] = sz.clamped ? 0.0 : c1 - c0;
    return out;
}

std::array<double, 3> sample_vector(const VectorVolume& f, double px, double py, double pz)
{
    require_point_finite(px, py, pz);
    const auto& g = f.grid;
    AxisSample sx = axis_sample(px, g.dims[0]);
    AxisSample sy = axis_sample(py, g.dims[1]);
    AxisSample sz = axis_sample(pz, g.dims[2]);
    const int x1 = std::min(sx.i0 + 1, g.dims[0] - 1);
    const int y1 = std::min(sy.i0 + 1, g.dims[1] - 1);
    const int z1 = std::min(sz.i0 + 1, g.dims[2] - 1);
    const double fx = sx.frac, fy = sy.frac, fz = sz.frac;

    std::size_t i000 = g.index(sx.i0, sy.i0, sz.i0);
    std::size_t i100 = g.index(x1, sy.i0, sz.i0);
    std::size_t i010 = g.index(sx.i0, y1, sz.i0);
    std::size_t i110 = g.index(x1, y1, sz.i0);
    std::size_t i001 = g.index(sx.i0, sy.i0, z1);
    std::size_t i101 = g.index(x1, sy.i0, z1);
    std::size_t i011 = g.index(sx.i0, y1, z1);
    std::size_t i111 = g.index(x1, y1, z1);

    std::array<double, 3> out;
    for (int a = 0; a < 3; ++a) {
        const auto& d = f.comp[a];
        double c00 = d[i000] + fx * (d[i100] - d[i000]);
        double c10 = d[i010] + fx * (d[i110] - d[i010]);
        double c01 = d[i001] + fx * (d[i101] - d[i001]);
        double c11 = d[i011] + fx * (d[i111] - d[i011]);
        double c0 = c00 + fy * (c10 - c00);
        double c1 = c01 + fy * (c11 - c01);
        out[a] = c0 + fz * (c1 - c0);
    }
    return out;
}

VectorSample sample_vector_grad(const VectorVolume& f, double px, double py, double pz)
{
    require_point_finite(px, py, pz);
    const auto& g = f.grid;
    AxisSample sx = axis_sample(px, g.dims[0]);
    AxisSample sy = axis_sample(py, g.dims[1]);
    AxisSample sz = axis_sample(pz, g.dims[2]);
    const int x1 = std::min(sx.i0 + 1, g.dims[0] - 1);
    const int y1 = std::min(sy.i0 + 1, g.dims[1] - 1);
    const int z1 = std::min(sz.i0 + 1, g.dims[2] - 1);
    const double fx = sx.frac, fy = sy.frac, fz = sz.frac;

    std::size_t i000 = g.index(sx.i0, sy.i0, sz.i0);
    std::size_t i100 = g.index(x1, sy.i0, sz.i0);
    std::size_t i010 = g.index(sx.i0, y1, sz.i0);
    std::size_t i110 = g.index(x1, y1, sz.i0);
    std::size_t i001 = g.index(sx.i0, sy.i0, z1);
    std::size_t i101 = g.index(x1, sy.i0, z1);
    std::size_t i011 = g.index(sx.i0, y1, z1);
    std::size_t i111 = g.index(x1, y1, z1);

    VectorSample out;
    for (int a = 0; a < 3; ++a) {
        const auto& d = f.comp[a];
        double c000 = d[i000], c100 = d[i100], c010 = d[i010], c110 = d[i110];
        double c001 = d[i001], c101 = d[i101], c011 = d[i011], c111 = d[i111];
        double c00 = c000 + fx * (c100 - c000);
        double c10 = c010 + fx * (c110 - c010);
        double c01 = c001 + fx * (c101 - c001);
        double c11 = c011 + fx * (c111 - c011);
        double c0 = c00 + fy * (c10 - c00);
        double c1 = c01 + fy * (c11 - c01);
        out.value[a] = c0 + fz * (c1 - c0);

        double dx00 = c100 - c000;
        double dx10 = c110 - c010;
        double dx01 = c101 - c001;
        double dx11 = c111 - c011;
        double dx0 = dx00 + fy * (dx10 - dx00);
        double dx1 = dx01 + fy * (dx11 - dx01);
        out.jac[a][0] = sx.clamped ? 0.0 : dx0 + fz * (dx1 - dx0);

        double dy0 = c10 - c00;
        double dy1 = c11 - c01;
        out.jac[a][1] = sy.clamped ? 0.0 : dy0 + fz * (dy1 - dy0);

        out.jac[a][2] = sz.clamped ? 0.0 : c1 - c0;
    }
    return out;
}

VectorVolume gradient_central(const Volume& vol)
{
    const auto& g = vol.grid;
    for (int a = 0; a < 3; ++a) {
        if (g.dims[a] < 2)
            throw InvalidArgument("gradient_central: every axis must have size >= 2");
    }
    VectorVolume grad(g);
    const int nx = g.dims[0], ny = g.dims[1], nz = g.dims[2];
    parallel_for(static_cast<std::size_t>(nz), [&](std::size_t zb, std::size_t ze) {
        for (std::size_t zi = zb; zi < ze; ++zi) {
            int z = static_cast<int>(zi);
            for (int y = 0; y < ny; ++y) {
                for (int x = 0; x < nx; ++x) {
                    std::size_t i = g.index(x, y, z);
                    // x axis
                    if (x == 0)
                        grad.comp[0][i] = (vol.at(1, y, z) - vol.at(0, y, z)) / g.spacing[0];
                    else if (x == nx - 1)
                        grad.comp[0][i] = (vol.at(nx - 1, y, z) - vol.at(nx - 2, y, z)) / g.spacing[0];
                    else
                        grad.comp[0][i] = (vol.at(x + 1, y, z) - vol.at(x - 1, y, z)) / (2.0 * g.spacing[0]);
                    // y axis
                    if (y == 0)
                        grad.comp[1][i] = (vol.at(x, 1, z) - vol.at(x, 0, z)) / g.spacing[1];
                    else if (y == ny - 1)
                        grad.comp[1][i] = (vol.at(x, ny - 1, z) - vol.at(x, ny - 2, z)) / g.spacing[1];
                    else
                        grad.comp[1][i] = (vol.at(x, y + 1, z) - vol.at(x, y - 1, z)) / (2.0 * g.spacing[1]);
                    // z axis
                    if (z == 0)
                        grad.comp[2][i] = (vol.at(x, y, 1) - vol.at(x, y, 0)) / g.spacing[2];
                    else if (z == nz - 1)
                        grad.comp[2][i] = (vol.at(x, y, nz - 1) - vol.at(x, y, nz - 2)) / g.spacing[2];
                    else
                        grad.comp[2][i] = (vol.at(x, y, z + 1) - vol.at(x, y, z - 1)) / (2.0 * g.spacing[2]);
                }
            }
        }
    });
    return grad;
}

Volume gaussian_smooth(const Volume& vol, std::array<double, 3> sigma_mm)
{
    Volume out = vol;
    std::vector<double> tmp(vol.data.size());
    for (int axis = 0; axis < 3; ++axis) {
        auto kernel = gaussian_kernel(sigma_mm[axis], vol.grid.spacing[axis]);
        if (kernel.size() == 1)
            continue;
        convolve_axis(vol.grid, out.data, tmp, axis, kernel);
        out.data.swap(tmp);
    }
    return out;
}

Volume downsample2(const Volume& vol)
{
    const auto& g = vol.grid;
    for (int a = 0; a < 3; ++a) {
        if (g.dims[a] < 2)
            throw InvalidArgument("downsample2: every axis must have size >= 2");
    }
    Volume smooth = gaussian_smooth(vol, {g.spacing[0], g.spacing[1], g.spacing[2]});

    GridInfo cg;
    for (int a = 0; a < 3; ++a) {
        cg.dims[a] = (g.dims[a] + 1) / 2;
        cg.spacing[a] = 2.0 * g.spacing[a];
    }
    // Voxel j of the coarse grid sits on fine voxel 2j: affine columns double.
    cg.affine = g.affine;
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c)
            cg.affine[r * 4 + c] *= 2.0;

    Volume out(cg);
    parallel_for(static_cast<std::size_t>(cg.dims[2]), [&](std::size_t zb, std::size_t ze) {
        for (std::size_t z = zb; z < ze; ++z) {
            for (int y = 0; y < cg.dims[1]; ++y) {
                for (int x = 0; x < cg.dims[0]; ++x) {
                    out.at(x, y, static_cast<int>(z)) =
                        smooth.at(2 * x, 2 * y, 2 * static_cast<int>(z));
                }
            }
        }
    });
    return out;
}

Mask downsample2_mask(const Mask& mask)
{
    Volume coarse = downsample2(mask_to_volume(mask));
    Mask out(coarse.grid);
    for (std::size_t i = 0; i < coarse.data.size(); ++i)
        out.data[i] = coarse.data[i] >= 0.5 ? 1 : 0;
    return out;
}

VectorVolume upsample_to(const VectorVolume& field, const GridInfo& target)
{
    validate_grid(target);
    const auto& sg = field.grid;
    for (int a = 0; a < 3; ++a) {
        double extent_src = sg.dims[a] * sg.spacing[a];
        double extent_dst = target.dims[a] * target.spacing[a];
        if (std::abs(extent_src - extent_dst) > sg.spacing[a] + 1e-9)
            throw InvalidArgument("upsample_to: physical extents differ by more than one source voxel");
    }
    VectorVolume out(target);
    const double rx = target.spacing[0] / sg.spacing[0];
    const double ry = target.spacing[1] / sg.spacing[1];
    const double rz = target.spacing[2] / sg.spacing[2];
    parallel_for(static_cast<std::size_t>(target.dims[2]), [&](std::size_t zb, std::size_t ze) {
        for (std::size_t zi = zb; zi < ze; ++zi) {
            int z = static_cast<int>(zi);
            for (int y = 0; y < target.dims[1]; ++y) {
                for (int x = 0; x < target.dims[0]; ++x) {
                    auto v = sample_vector(field, x * rx, y * ry, z * rz);
                    std::size_t i = out.grid.index(x, y, z);
                    out.comp[0][i] = v[0];
                    out.comp[1][i] = v[1];
                    out.comp[2][i] = v[2];
                }
            }
        }
    });
    return out;
}

Volume mask_to_volume(const Mask& m)
{
    Volume out(m.grid);
    for (std::size_t i = 0; i < m.data.size(); ++i)
        out.data[i] = m.data[i];
    return out;
}

} // namespace groupreg
