//! The span of the post-measurement vectors and its isomorphism onto the
//! two-qubit space.

use super::propositions::{measured_vectors, MeasuredVectors};
use super::{Diagnostics, IsomorphismSummary, Refusal, Stage};
use crate::device::DeviceRealization;
use crate::ideal::{ideal_projector, ideal_vector, phi_plus, AnglePair};
use crate::stats::table_order;
use crate::tensor::{kron, orthonormal_basis, ComplexMatrix, StateVector};

/// Orthonormal basis of the span of the 36 post-measurement vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct SpanBasis {
    pub dim: usize,
    pub basis: Vec<StateVector>,
    /// `dim × 36`, column `k` holds the coordinates of the `k`-th vector in
    /// table order.
    pub coords: ComplexMatrix,
    pub anchor: AnglePair,
    /// Worst distance between a measured vector and its reconstruction from
    /// the coordinates.
    pub reconstruction: f64,
}

pub fn build_span_basis(vectors: &MeasuredVectors, anchor: AnglePair, threshold: f64) -> SpanBasis {
    let (basis, coords) = orthonormal_basis(vectors.as_slice(), threshold).expect("vectors share one dimension");
    let dim = basis.len();
    let reconstruction = vectors
        .as_slice()
        .iter()
        .enumerate()
        .map(|(k, v)| {
            let rebuilt = basis
                .iter()
                .enumerate()
                .fold(StateVector::zeros(v.dim()), |acc, (r, e)| acc.add(&e.scale(coords[(r, k)])));
            rebuilt.distance(v)
        })
        .fold(0.0, f64::max);
    SpanBasis { dim, basis, coords, anchor, reconstruction }
}

/// The map `U` sending the span onto `C² ⊗ C²`.
#[derive(Debug, Clone, PartialEq)]
pub struct InnerIsomorphism {
    pub anchor: AnglePair,
    /// `4 × N` on full-space coordinates.
    pub map: ComplexMatrix,
    /// `4 × dim(S)` on span coordinates.
    pub coords: ComplexMatrix,
    pub span: SpanBasis,
    /// Worst `‖(Π_a⊗Π_b)φ − U†(P_a⊗P_b)Uφ‖` over basis vectors of the span.
    pub residual_a1: f64,
    /// `‖Uψ − Φ⁺‖`
    pub residual_a2: f64,
    /// `‖U†U − I‖_op` on the span.
    pub unitarity: f64,
}

impl InnerIsomorphism {
    pub fn summary(&self) -> IsomorphismSummary {
        IsomorphismSummary {
            anchor: self.anchor,
            residual_a1: self.residual_a1,
            residual_a2: self.residual_a2,
            unitarity: self.unitarity,
        }
    }

    /// `U` applied to a full-space vector.
    pub fn apply(&self, v: &StateVector) -> StateVector {
        self.map.apply(v).expect("vector in the device space")
    }
}

/// Builds `U` from the normalized vectors of the `anchor` quadruple and
/// checks conditions A1 and A2.
pub fn build_inner_isomorphism(
    d: &DeviceRealization,
    anchor: AnglePair,
    tol: f64,
) -> Result<InnerIsomorphism, Refusal> {
    let vectors = measured_vectors(d);
    let span = build_span_basis(&vectors, anchor, super::Tolerances::default().span_rank);
    if span.dim != 4 {
        let message = format!("span of the 36 post-measurement vectors has rank {}, expected 4", span.dim);
        return Err(Refusal::new(
            Stage::Span,
            Diagnostics::Span { rank: span.dim, reconstruction: span.reconstruction, message },
        ));
    }
    isomorphism_from_span(d, &vectors, span, tol)
}

pub(super) fn isomorphism_from_span(
    d: &DeviceRealization,
    vectors: &MeasuredVectors,
    span: SpanBasis,
    tol: f64,
) -> Result<InnerIsomorphism, Refusal> {
    let anchor = span.anchor;
    let refuse = |message: String, a1: f64, a2: f64, unitarity: f64| {
        Refusal::new(
            Stage::Isomorphism,
            Diagnostics::Isomorphism { anchor, residual_a1: a1, residual_a2: a2, unitarity, message },
        )
    };
    if !anchor.is_mixed() {
        return Err(refuse(format!("anchor {anchor} has equal angles"), f64::NAN, f64::NAN, f64::NAN));
    }

    let n = d.psi.dim();
    let mut map = ComplexMatrix::zeros(4, n);
    for (&(a, b), v) in anchor.settings().iter().zip(vectors.quadruple(anchor)) {
        let Ok(v_hat) = v.to_normalized() else {
            return Err(refuse(format!("anchor vector ({a}, {b}) vanishes"), f64::NAN, f64::NAN, f64::NAN));
        };
        let u_hat = ideal_vector(a, b).to_normalized().expect("mixed-angle ideal vectors are nonzero");
        map = map.add(&ComplexMatrix::outer(u_hat.amplitudes(), v_hat.amplitudes())).expect("4 x N");
    }

    let basis_matrix = ComplexMatrix::from_columns(&span.basis, n).expect("basis in the device space");
    let coords = map.matmul(&basis_matrix).expect("4 x dim");
    let gram = coords.adjoint().matmul(&coords).expect("square");
    let unitarity = gram.sub(&ComplexMatrix::identity(span.dim)).expect("square").op_norm();

    let map_adj = map.adjoint();
    let mut residual_a1 = 0.0f64;
    for (a, b) in table_order() {
        let ideal = kron(&ideal_projector(a), &ideal_projector(b)).expect("4x4");
        for phi in &span.basis {
            let device_side = d.apply_a(a, &d.apply_b(b, phi));
            let pulled = map_adj.apply(&ideal.apply(&map.apply(phi).expect("N")).expect("4")).expect("4");
            residual_a1 = residual_a1.max(device_side.distance(&pulled));
        }
    }
    let residual_a2 = map.apply(&d.psi).expect("N").distance(&phi_plus());

    if residual_a1 > tol || residual_a2 > tol || unitarity > tol {
        return Err(refuse(
            format!(
                "isomorphism residuals A1 {residual_a1:.3e}, A2 {residual_a2:.3e}, U†U−I {unitarity:.3e} exceed {tol:.1e}"
            ),
            residual_a1,
            residual_a2,
            unitarity,
        ));
    }
    Ok(InnerIsomorphism { anchor, map, coords, span, residual_a1, residual_a2, unitarity })
}

/// Worst `‖U₁v − U₂v‖` over the 36 post-measurement vectors.
pub fn isomorphism_agreement(u1: &InnerIsomorphism, u2: &InnerIsomorphism, vectors: &MeasuredVectors) -> f64 {
    vectors.as_slice().iter().map(|v| u1.apply(v).distance(&u2.apply(v))).fold(0.0, f64::max)
}
