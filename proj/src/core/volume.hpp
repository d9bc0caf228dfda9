#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace groupreg {

// Error hierarchy shared by all modules. The C API maps these onto its
// status codes; internally we throw.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct InvalidArgument : Error {
    using Error::Error;
};
struct GridMismatch : Error {
    using Error::Error;
};
struct EmptyMask : Error {
    using Error::Error;
};
struct NumericFailure : Error {
    using Error::Error;
};
struct IoFailure : Error {
    using Error::Error;
};

// Grid metadata shared by scalar volumes, masks and vector fields.
// Index order is x-fastest: flat index = x + nx*(y + ny*z).
// `affine` is the 4x4 voxel-to-world matrix, row-major. Compute kernels
// only use `spacing`; the affine is carried for file round-trips.
struct GridInfo {
    std::array<int, 3> dims{0, 0, 0};
    std::array<double, 3> spacing{1.0, 1.0, 1.0};
    std::array<double, 16> affine{};

    std::size_t voxels() const
    {
        return static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
    }
    std::size_t index(int x, int y, int z) const
    {
        return static_cast<std::size_t>(x) +
               static_cast<std::size_t>(dims[0]) *
                   (static_cast<std::size_t>(y) +
                    static_cast<std::size_t>(dims[1]) * z);
    }
};

// Axis-aligned affine: diag(spacing) with zero origin.
GridInfo make_grid(std::array<int, 3> dims, std::array<double, 3> spacing);

bool same_grid(const GridInfo& a, const GridInfo& b);
void require_same_grid(const GridInfo& a, const GridInfo& b, const char* what);

// 3-D scalar volume, 64-bit values.
struct Volume {
    GridInfo grid;
    std::vector<double> data;

    Volume() = default;
    // Validating constructors: reject non-finite values and bad metadata.
    Volume(GridInfo g, std::vector<double> values);
    explicit Volume(GridInfo g, double fill = 0.0);

    double& at(int x, int y, int z) { return data[grid.index(x, y, z)]; }
    double at(int x, int y, int z) const { return data[grid.index(x, y, z)]; }
};

// Binary mask on the same grid contract as Volume, values in {0,1}.
struct Mask {
    GridInfo grid;
    std::vector<std::uint8_t> data;

    Mask() = default;
    Mask(GridInfo g, std::vector<std::uint8_t> values);
    explicit Mask(GridInfo g, std::uint8_t fill = 0);

    std::size_t count() const;
};

// 3-component vector field, planar storage, components in physical mm.
struct VectorVolume {
    GridInfo grid;
    std::array<std::vector<double>, 3> comp;

    VectorVolume() = default;
    explicit VectorVolume(GridInfo g);
    VectorVolume(GridInfo g, std::array<std::vector<double>, 3> values);

    double max_norm() const;
};

void validate_grid(const GridInfo& g);
void require_finite(const std::vector<double>& v, const char* what);

// Trilinear sampling at a continuous voxel coordinate; coordinates are
// clamped to the grid (edge replication). Throws on non-finite points.
double sample_trilinear(const Volume& vol, double px, double py, double pz);

// Sample value plus derivative with respect to the (unclamped) voxel
// coordinate. The derivative is the exact derivative of the clamped
// trilinear interpolant: zero along axes where the point is clamped.
struct SampleGrad {
    double value;
    std::array<double, 3> dpos;
};
SampleGrad sample_trilinear_grad(const Volume& vol, double px, double py, double pz);

// Vector-field sampling: value (mm) and Jacobian d(value_a)/d(pos_b)
// in mm per voxel coordinate.
struct VectorSample {
    std::array<double, 3> value;
    std::array<std::array<double, 3>, 3> jac;
};
std::array<double, 3> sample_vector(const VectorVolume& f, double px, double py, double pz);
VectorSample sample_vector_grad(const VectorVolume& f, double px, double py, double pz);

// Central differences scaled by 1/spacing; one-sided at the faces.
// Requires every axis >= 2.
VectorVolume gradient_central(const Volume& vol);

// Separable discrete Gaussian, kernel radius ceil(3*sigma/spacing) per
// axis, edge-replicated borders. sigma 0 along an axis skips that axis.
Volume gaussian_smooth(const Volume& vol, std::array<double, 3> sigma_mm);

// Gaussian pre-smooth (sigma = 1 fine voxel per axis) then decimation by
// two. dims become ceil(d/2), spacing doubles.
Volume downsample2(const Volume& vol);
Mask downsample2_mask(const Mask& mask);

// Trilinear resampling of each component onto the target grid. Values are
// in mm so no magnitude rescaling happens. Grids must share their origin
// and agree in physical extent within one source voxel per axis.
VectorVolume upsample_to(const VectorVolume& field, const GridInfo& target);

Volume mask_to_volume(const Mask& m);

} // namespace groupreg
