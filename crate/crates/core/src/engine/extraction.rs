//! Extraction of the local isometries from the device's own operators and
//! verification of the certified conditions.
//!
//! On each side a fresh ancilla qubit is the slow factor and the device
//! space the fast factor. With `P` the support projector of the reduced
//! state and `P̂_a = P Π_a P`, the extended NOT is `N̂ = √2(P̂_{(+,0)} −
//! P̂_{(−,0)})` and the swap is `N→ · N←` with
//!
//! ```text
//! N← = I ⊗ P̂_{(0,0)} + N ⊗ P̂_{(0,1)}
//! N→ = P_{(0,0)} ⊗ P + P_{(0,1)} ⊗ N̂
//! ```
//!
//! where `N` and `P_{(0,x)}` are the ideal qubit operators. The ancilla
//! starts in `|0⟩`, so the isometry is the first block column of the swap.

use serde::{Deserialize, Serialize};

use super::isomorphism::InnerIsomorphism;
use super::{Diagnostics, PropositionReport, Refusal, Stage, Tolerances};
use crate::device::DeviceRealization;
use crate::error::Result;
use crate::ideal::{ideal_projector, phi_plus, Angle, Setting};
use crate::stats::{compare_tables, joint_probability_unchecked, DeviationReport, ProbabilityTable, TableProvenance};
use crate::tensor::{
    apply_local, equal_on_support, kron, orthonormal_basis, permute_factors, projector_rank, re, reduced_density,
    support_projector, BipartiteShape, ComplexMatrix, Side, StateVector, DEFAULT_THRESHOLD,
};

fn ket(bit: usize) -> StateVector {
    StateVector::basis(2, bit)
}

/// The ideal NOT `√2(P_{(+,0)} − P_{(−,0)})`.
fn ideal_not() -> ComplexMatrix {
    ideal_projector(Setting::new(Angle::Plus, 0))
        .sub(&ideal_projector(Setting::new(Angle::Minus, 0)))
        .expect("2x2")
        .scale(re(std::f64::consts::SQRT_2))
}

/// The ideal two-CNOT product on `C²_ancilla ⊗ C²_qubit`, written as the
/// permutation `|a, s⟩ ↦ |a ⊕ s, a⟩`. On `|0, s⟩` it is the swap.
pub fn ideal_two_cnot() -> ComplexMatrix {
    ComplexMatrix::from_fn(4, 4, |r, col| {
        let (a, s) = (col / 2, col % 2);
        if r == (a ^ s) * 2 + a {
            re(1.0)
        } else {
            re(0.0)
        }
    })
}

/// Everything built from one side's operators.
struct SideParts {
    support: ComplexMatrix,
    hats: Vec<ComplexMatrix>,
    not: ComplexMatrix,
    swap: ComplexMatrix,
    uhat: ComplexMatrix,
}

impl SideParts {
    fn hat(&self, s: Setting) -> &ComplexMatrix {
        &self.hats[s.index()]
    }
}

fn side_parts(d: &DeviceRealization, side: Side, threshold: f64) -> Result<SideParts> {
    let n = d.shape.dim(side);
    let rho = reduced_density(&d.psi, d.shape, side)?;
    let support = support_projector(&rho, threshold)?;
    let fam = d.family(side);
    let hats: Vec<ComplexMatrix> = Setting::ALL
        .iter()
        .map(|&s| ComplexMatrix::product(&[&support, fam.get(s), &support]))
        .collect::<Result<_>>()?;
    let hat = |s: Setting| &hats[s.index()];
    let not =
        hat(Setting::new(Angle::Plus, 0)).sub(hat(Setting::new(Angle::Minus, 0)))?.scale(re(std::f64::consts::SQRT_2));

    let p00 = ideal_projector(Setting::new(Angle::Zero, 0));
    let p01 = ideal_projector(Setting::new(Angle::Zero, 1));
    let backward = kron(&ComplexMatrix::identity(2), hat(Setting::new(Angle::Zero, 0)))?
        .add(&kron(&ideal_not(), hat(Setting::new(Angle::Zero, 1)))?)?;
    let forward = kron(&p00, &support)?.add(&kron(&p01, &not)?)?;
    let swap = forward.matmul(&backward)?;
    let uhat = swap.block(0, 0, 2 * n, n).matmul(&support)?;
    Ok(SideParts { support, hats, not, swap, uhat })
}

/// `N̂` on the full side space, supported on the reduced-state support.
pub fn extended_not(d: &DeviceRealization, side: Side) -> Result<ComplexMatrix> {
    Ok(side_parts(d, side, DEFAULT_THRESHOLD)?.not)
}

/// The swap `N→ · N←` on `C² ⊗ (side space)`, ancilla slow.
pub fn swap_operator(d: &DeviceRealization, side: Side) -> Result<ComplexMatrix> {
    Ok(side_parts(d, side, DEFAULT_THRESHOLD)?.swap)
}

/// `(swap ⊗ I)(|a⟩⊗φ)` in the order (ancilla, A-space, B-space).
fn device_swap_image(
    swap: &ComplexMatrix,
    phi: &StateVector,
    shape: BipartiteShape,
    side: Side,
    a: usize,
) -> Result<StateVector> {
    let (da, db) = (shape.dim_a, shape.dim_b);
    match side {
        Side::A => {
            let v = ket(a).tensor(phi);
            Ok(apply_local(swap, &v, BipartiteShape::new(2 * da, db)?, Side::A)?.0)
        }
        Side::B => {
            let v = permute_factors(&phi.tensor(&ket(a)), &[da, db, 2], &[0, 2, 1])?;
            let (w, _) = apply_local(swap, &v, BipartiteShape::new(da, 2 * db)?, Side::B)?;
            permute_factors(&w, &[da, 2, db], &[1, 0, 2])
        }
    }
}

/// `(I ⊗ U†)(swap_ideal ⊗ I)(I ⊗ U)(|a⟩⊗φ)` in the same order.
fn ideal_swap_image(iso: &InnerIsomorphism, phi: &StateVector, side: Side, a: usize) -> Result<StateVector> {
    let two_cnot = ideal_two_cnot();
    let w = ket(a).tensor(&iso.apply(phi));
    let swapped = match side {
        Side::A => apply_local(&two_cnot, &w, BipartiteShape::new(4, 2)?, Side::A)?.0,
        Side::B => {
            let moved = permute_factors(&w, &[2, 2, 2], &[1, 0, 2])?;
            let (out, _) = apply_local(&two_cnot, &moved, BipartiteShape::new(2, 4)?, Side::B)?;
            permute_factors(&out, &[2, 2, 2], &[1, 0, 2])?
        }
    };
    Ok(apply_local(&iso.map.adjoint(), &swapped, BipartiteShape::new(2, 4)?, Side::B)?.0)
}

fn swap_identity_from_parts(
    d: &DeviceRealization,
    iso: &InnerIsomorphism,
    parts: &SideParts,
    side: Side,
) -> Result<f64> {
    let mut worst = 0.0f64;
    for phi in &iso.span.basis {
        for a in 0..2 {
            let lhs = device_swap_image(&parts.swap, phi, d.shape, side, a)?;
            let rhs = ideal_swap_image(iso, phi, side, a)?;
            worst = worst.max(lhs.distance(&rhs));
        }
    }
    Ok(worst)
}

/// Worst `‖(swap ⊗ I)(|a⟩⊗φ) − (I⊗U†)(swap_ideal ⊗ I)(I⊗U)(|a⟩⊗φ)‖` over
/// basis vectors `φ` of the span and `a ∈ {0, 1}`.
pub fn swap_identity_residual(d: &DeviceRealization, iso: &InnerIsomorphism, side: Side) -> Result<f64> {
    swap_identity_from_parts(d, iso, &side_parts(d, side, DEFAULT_THRESHOLD)?, side)
}

fn pullback_from_parts(d: &DeviceRealization, iso: &InnerIsomorphism, parts: &SideParts, side: Side) -> Result<f64> {
    let n = d.shape.dim(side);
    let id = ComplexMatrix::identity(n);
    let mut worst = 0.0f64;
    for s in Setting::ALL {
        let pulled = ComplexMatrix::product(&[&parts.uhat.adjoint(), &kron(&ideal_projector(s), &id)?, &parts.uhat])?;
        for phi in &iso.span.basis {
            let lhs = apply_local(parts.hat(s), phi, d.shape, side)?.0;
            let rhs = apply_local(&pulled, phi, d.shape, side)?.0;
            worst = worst.max(lhs.distance(&rhs));
        }
    }
    Ok(worst)
}

/// Worst `‖(P̂_a ⊗ I)φ − (Û†(P_a ⊗ I)Û ⊗ I)φ‖` over basis vectors of the span
/// and the six settings of `side`.
pub fn pullback_residual(d: &DeviceRealization, iso: &InnerIsomorphism, side: Side) -> Result<f64> {
    pullback_from_parts(d, iso, &side_parts(d, side, DEFAULT_THRESHOLD)?, side)
}

/// Residuals of the three certified conditions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CertificateResiduals {
    /// Worst `‖Û_A P̂_a Û_A† − (P_a ⊗ I)Q_A‖_op`, `Q_A` the image projector.
    pub cond1: f64,
    pub cond1_worst: Setting,
    pub cond2: f64,
    pub cond2_worst: Setting,
    /// `‖(Û_A ⊗ Û_B)ψ − Φ⁺ ⊗ Ψ_E‖`
    #[serde(deserialize_with = "crate::serde_nan::f64_or_nan")]
    pub cond3: f64,
}

/// Side conditions measured during extraction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtractionChecks {
    /// `‖Û†Û − P‖_op`
    pub isometry_a: f64,
    pub isometry_b: f64,
    /// `‖(N̂² − I)P‖_op`
    pub not_square_a: f64,
    pub not_square_b: f64,
    /// `‖(I⊗P)(S†S)(I⊗P) − I⊗P‖_op` for the swap `S`.
    pub swap_unitarity_a: f64,
    pub swap_unitarity_b: f64,
    pub swap_identity_a: f64,
    pub swap_identity_b: f64,
    pub pullback_a: f64,
    pub pullback_b: f64,
    pub support_rank_a: usize,
    pub support_rank_b: usize,
    pub image_rank_a: usize,
    pub image_rank_b: usize,
}

/// The positive verdict.
#[derive(Debug, Clone)]
pub struct SelfTestCertificate {
    /// `2·dim_A × dim_A`, maps the support into `C² ⊗ C^{dim_A}` (qubit slow).
    pub uhat_a: ComplexMatrix,
    pub uhat_b: ComplexMatrix,
    pub support_a: ComplexMatrix,
    pub support_b: ComplexMatrix,
    /// `Ψ_E = U†|00⟩` in the coordinates of the device space.
    pub garbage_state: StateVector,
    pub garbage_shape: BipartiteShape,
    /// Rank of the garbage state's reduced density matrix on each side.
    pub dim_e_a: usize,
    pub dim_e_b: usize,
    pub residuals: CertificateResiduals,
    pub checks: ExtractionChecks,
    pub gate: DeviationReport,
    pub propositions: Option<PropositionReport>,
    pub isomorphism: InnerIsomorphism,
    pub tolerances: Tolerances,
}

impl SelfTestCertificate {
    pub fn uhat(&self, side: Side) -> &ComplexMatrix {
        match side {
            Side::A => &self.uhat_a,
            Side::B => &self.uhat_b,
        }
    }

    /// `(Û_A ⊗ Û_B)v` with factors reordered to (A, B, A-space, B-space).
    pub fn extract(&self, v: &StateVector) -> Result<StateVector> {
        let shape = self.garbage_shape;
        let (half, half_shape) = apply_local(&self.uhat_a, v, shape, Side::A)?;
        let (full, _) = apply_local(&self.uhat_b, &half, half_shape, Side::B)?;
        permute_factors(&full, &[2, shape.dim_a, 2, shape.dim_b], &[0, 2, 1, 3])
    }
}

fn image_projector(uhat: &ComplexMatrix, threshold: f64) -> Result<(ComplexMatrix, usize)> {
    let cols: Vec<StateVector> = (0..uhat.cols()).map(|j| uhat.column(j)).collect();
    let (basis, _) = orthonormal_basis(&cols, threshold)?;
    let mut q = ComplexMatrix::zeros(uhat.rows(), uhat.rows());
    for b in &basis {
        q = q.add(&b.projector())?;
    }
    Ok((q, basis.len()))
}

fn condition_on_image(parts: &SideParts, threshold: f64) -> Result<(f64, Setting, usize)> {
    let n = parts.support.rows();
    let (q, rank) = image_projector(&parts.uhat, threshold)?;
    let id = ComplexMatrix::identity(n);
    let mut worst = (0.0f64, Setting::ALL[0]);
    for s in Setting::ALL {
        let pushed = ComplexMatrix::product(&[&parts.uhat, parts.hat(s), &parts.uhat.adjoint()])?;
        let target = kron(&ideal_projector(s), &id)?.matmul(&q)?;
        let r = pushed.sub(&target)?.op_norm();
        if r > worst.0 {
            worst = (r, s);
        }
    }
    Ok((worst.0, worst.1, rank))
}

struct SideChecks {
    isometry: f64,
    not_square: f64,
    swap_unitarity: f64,
    swap_identity: f64,
    pullback: f64,
    support_rank: usize,
}

fn side_checks(
    d: &DeviceRealization,
    iso: &InnerIsomorphism,
    parts: &SideParts,
    side: Side,
    tol: f64,
) -> Result<SideChecks> {
    let n = d.shape.dim(side);
    let isometry = parts.uhat.adjoint().matmul(&parts.uhat)?.sub(&parts.support)?.op_norm();
    let not_sq = parts.not.matmul(&parts.not)?;
    let not_square = equal_on_support(&not_sq, &ComplexMatrix::identity(n), &d.psi, d.shape, side, tol)?.residual;
    let ext_support = kron(&ComplexMatrix::identity(2), &parts.support)?;
    let swap_unitarity = ComplexMatrix::product(&[&ext_support, &parts.swap.adjoint(), &parts.swap, &ext_support])?
        .sub(&ext_support)?
        .op_norm();
    Ok(SideChecks {
        isometry,
        not_square,
        swap_unitarity,
        swap_identity: swap_identity_from_parts(d, iso, parts, side)?,
        pullback: pullback_from_parts(d, iso, parts, side)?,
        support_rank: projector_rank(&parts.support),
    })
}

fn extraction_refusal(e: crate::Error) -> Refusal {
    Refusal::new(Stage::Extraction, Diagnostics::Extraction { message: e.to_string(), checks: None })
}

/// Builds both isometries and the garbage state and checks the three
/// certified conditions against `tol.certification`.
pub fn extract_certificate(
    d: &DeviceRealization,
    iso: &InnerIsomorphism,
    tol: &Tolerances,
) -> std::result::Result<SelfTestCertificate, Refusal> {
    let cert_tol = tol.certification;
    let parts_a = side_parts(d, Side::A, tol.support).map_err(extraction_refusal)?;
    let parts_b = side_parts(d, Side::B, tol.support).map_err(extraction_refusal)?;
    let ca = side_checks(d, iso, &parts_a, Side::A, cert_tol).map_err(extraction_refusal)?;
    let cb = side_checks(d, iso, &parts_b, Side::B, cert_tol).map_err(extraction_refusal)?;

    let (cond1, cond1_worst, image_rank_a) = condition_on_image(&parts_a, tol.span_rank).map_err(extraction_refusal)?;
    let (cond2, cond2_worst, image_rank_b) = condition_on_image(&parts_b, tol.span_rank).map_err(extraction_refusal)?;

    let checks = ExtractionChecks {
        isometry_a: ca.isometry,
        isometry_b: cb.isometry,
        not_square_a: ca.not_square,
        not_square_b: cb.not_square,
        swap_unitarity_a: ca.swap_unitarity,
        swap_unitarity_b: cb.swap_unitarity,
        swap_identity_a: ca.swap_identity,
        swap_identity_b: cb.swap_identity,
        pullback_a: ca.pullback,
        pullback_b: cb.pullback,
        support_rank_a: ca.support_rank,
        support_rank_b: cb.support_rank,
        image_rank_a,
        image_rank_b,
    };
    if checks.isometry_a > cert_tol || checks.isometry_b > cert_tol {
        return Err(Refusal::new(
            Stage::Extraction,
            Diagnostics::Extraction {
                message: format!(
                    "extracted maps are not isometric on the supports ({:.3e}, {:.3e} > {cert_tol:.1e})",
                    checks.isometry_a, checks.isometry_b
                ),
                checks: Some(checks),
            },
        ));
    }

    let garbage_state = StateVector::new(iso.map.row(0).iter().map(|z| z.conj()).collect());
    let garbage_rank = |side| -> Result<usize> {
        let rho = reduced_density(&garbage_state, d.shape, side)?;
        Ok(projector_rank(&support_projector(&rho, tol.support)?))
    };
    let dim_e_a = garbage_rank(Side::A).map_err(extraction_refusal)?;
    let dim_e_b = garbage_rank(Side::B).map_err(extraction_refusal)?;

    let table = ProbabilityTable::from_fn(TableProvenance::Device("device".into()), |a, b| {
        joint_probability_unchecked(d, a, b)
    });
    let gate = compare_tables(&table, &ProbabilityTable::ideal(), tol.gate);

    let mut cert = SelfTestCertificate {
        uhat_a: parts_a.uhat,
        uhat_b: parts_b.uhat,
        support_a: parts_a.support,
        support_b: parts_b.support,
        garbage_state,
        garbage_shape: d.shape,
        dim_e_a,
        dim_e_b,
        residuals: CertificateResiduals { cond1, cond1_worst, cond2, cond2_worst, cond3: f64::NAN },
        checks,
        gate,
        propositions: None,
        isomorphism: iso.clone(),
        tolerances: *tol,
    };
    let extracted = cert.extract(&d.psi).map_err(extraction_refusal)?;
    cert.residuals.cond3 = extracted.distance(&phi_plus().tensor(&cert.garbage_state));

    let r = cert.residuals;
    let failed: Vec<String> = [("cond1", r.cond1), ("cond2", r.cond2), ("cond3", r.cond3)]
        .into_iter()
        .filter(|(_, v)| v.is_nan() || *v > cert_tol)
        .map(|(name, v)| format!("{name} = {v:.3e}"))
        .collect();
    if !failed.is_empty() {
        return Err(Refusal::new(Stage::Verification, Diagnostics::Verification { residuals: r, failed }));
    }
    Ok(cert)
}
