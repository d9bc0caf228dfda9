#pragma once

#include "core/volume.hpp"

#include <vector>

namespace groupreg {

// Displacement field u (mm) defining T(x) = x + u(x) in physical
// coordinates. Wrapped so velocities and displacements cannot be mixed
// up at call sites.
struct DisplacementField {
    VectorVolume u;

    DisplacementField() = default;
    explicit DisplacementField(VectorVolume field) : u(std::move(field)) {}
    const GridInfo& grid() const { return u.grid; }
};

// Per-voxel determinant of dT/dx (dimensionless).
struct JacobianMap {
    Volume det;
};

// Scaling and squaring: u0 = v / 2^S, then S self-compositions.
DisplacementField exponentiate(const VectorVolume& v, int squaring_steps);

// (T_outer o T_inner)(x) = x + u_inner(x) + u_outer(x + u_inner(x)).
DisplacementField compose(const DisplacementField& outer, const DisplacementField& inner);

// Pull-back warp: out(x) = img(x + u(x)), trilinear, clamped.
Volume warp(const Volume& img, const DisplacementField& u);

// Trilinear-warp the {0,1} field, then threshold at >= 0.5.
Mask warp_mask(const Mask& mask, const DisplacementField& u);

// Warp an integer-coded label map: per voxel, argmax of the trilinearly
// interpolated per-class indicators (ties broken toward the smaller id).
// Never invents a class that is absent from the 8 source neighbors.
Volume warp_labels(const Volume& labels, const DisplacementField& u);

// J_T = det(I + du/dx), du/dx by mm-scaled central differences
// (one-sided at the faces), so it also applies to ingested fields.
JacobianMap jacobian_determinant(const DisplacementField& u);

// ---- reverse-mode support -------------------------------------------------
//
// The group loss needs exact gradients with respect to the velocity. The
// forward pass keeps all intermediate squaring levels; the backward pass
// walks them in reverse applying the adjoint of one self-composition per
// step.

// levels[0] = v / 2^S, levels[k+1] = levels[k] o levels[k], levels[S] = exp(v).
struct ExponentialTrace {
    std::vector<VectorVolume> levels;
    int steps = 0;

    const VectorVolume& result() const { return levels.back(); }
};

ExponentialTrace exponentiate_trace(const VectorVolume& v, int squaring_steps);

// Adjoint of the full scaling-and-squaring recursion: maps dL/d exp(v)
// to dL/dv.
VectorVolume exponentiate_adjoint(const ExponentialTrace& trace, const VectorVolume& grad_exp);

// Adjoint of warp with respect to the displacement: given g = dL/dout,
// returns dL/du (mm^-1 scale handled internally).
VectorVolume warp_adjoint(const Volume& img, const VectorVolume& u, const Volume& grad_out);

} // namespace groupreg
