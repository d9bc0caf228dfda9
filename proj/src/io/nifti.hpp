#pragma once

#include "core/volume.hpp"

#include <string>

namespace groupreg {

// Reader failure modes get their own types so callers (and tests) can
// tell a wrong-format file from a damaged one.
struct BadMagic : IoFailure {
    using IoFailure::IoFailure;
};
struct UnsupportedDatatype : IoFailure {
    using IoFailure::IoFailure;
};
struct UnsupportedDimensionality : IoFailure {
    using IoFailure::IoFailure;
};
struct TruncatedFile : IoFailure {
    using IoFailure::IoFailure;
};

enum class NiftiDatatype : int {
    kUint8 = 2,
    kInt16 = 4,
    kInt32 = 8,
    kFloat32 = 16,
    kFloat64 = 64,
};

// Decoded NIfTI-1 payload: a scalar volume or a 3-component vector field
// (5th dimension of size 3, displacement convention, mm).
struct NiftiData {
    bool is_vector = false;
    Volume volume;
    VectorVolume field;
};

// Single-file NIfTI-1, plain or gzip (.nii / .nii.gz), either byte order.
// Slope/intercept scaling is applied; spacing comes from pixdim, the
// affine from the sform (fallback qform, then diagonal pixdim).
NiftiData read_nifti(const std::string& path);

// Convenience wrappers that insist on the expected shape.
Volume read_volume(const std::string& path);
VectorVolume read_field(const std::string& path);
// Scalar volume thresholded at "nonzero" into a binary mask.
Mask read_mask(const std::string& path);

// Writers produce single-file NIfTI-1, gzip-compressed when the path
// ends in ".gz". No slope/intercept autoscaling: values are cast to the
// requested datatype (rounded and clamped for the integer types).
void write_volume(const std::string& path, const Volume& vol,
                  NiftiDatatype datatype = NiftiDatatype::kFloat32);
void write_field(const std::string& path, const VectorVolume& field,
                 NiftiDatatype datatype = NiftiDatatype::kFloat32);
void write_mask(const std::string& path, const Mask& mask);

} // namespace groupreg
