//! The object under test and generators for it.
//!
//! A [`DeviceRealization`] is a pure joint state together with one
//! two-outcome projective measurement per angle on each side. Side-A
//! operators act as `P ⊗ I` and side-B operators as `I ⊗ P`, so operators on
//! opposite sides commute by construction.

use std::collections::BTreeMap;
use std::fmt;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ideal::{ideal_projector, phi_plus, Angle, Setting};
use crate::random::{
    gaussian_matrix, gaussian_vector, orthonormalize_columns, random_hermitian, random_isometry, random_state,
    random_unitary, rng_from_seed, unitary_from_generator,
};
use crate::tensor::{
    apply_local, hermitian_eigen, hermitian_function, kron, re, reduced_density, support_projector, BipartiteShape,
    ComplexMatrix, Side, StateVector, DEFAULT_THRESHOLD, ONE,
};

/// Tolerance for the Hermitian, idempotent and completeness checks.
pub const FAMILY_TOL: f64 = 1e-10;

/// Tolerance on `‖psi‖ = 1`.
pub const STATE_NORM_TOL: f64 = 1e-12;

/// Default bound on each side's dimension for generated devices.
pub const DEFAULT_MAX_SIDE_DIM: usize = 64;

/// One two-outcome projective measurement per angle on a single side.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectorFamily {
    side_dim: usize,
    // indexed by Angle::index(), then outcome
    projectors: [[ComplexMatrix; 2]; 3],
}

impl ProjectorFamily {
    /// Checks shapes only; the projector invariants are reported by
    /// [`validate_device`].
    pub fn new(side_dim: usize, projectors: [[ComplexMatrix; 2]; 3]) -> Result<Self> {
        for (k, pair) in projectors.iter().enumerate() {
            for (x, p) in pair.iter().enumerate() {
                if p.rows() != side_dim || p.cols() != side_dim {
                    return Err(Error::Dimension(format!(
                        "projector ({}, {}) is {}x{}, expected {}x{}",
                        Angle::ALL[k].tag(),
                        x,
                        p.rows(),
                        p.cols(),
                        side_dim,
                        side_dim
                    )));
                }
            }
        }
        Ok(ProjectorFamily { side_dim, projectors })
    }

    /// Builds the family from the outcome-0 projectors, completing each with
    /// `I − P0`.
    pub fn from_outcome_zero(side_dim: usize, p0: [ComplexMatrix; 3]) -> Result<Self> {
        let id = ComplexMatrix::identity(side_dim);
        let mut pairs = Vec::with_capacity(3);
        for p in p0 {
            let p1 = id.sub(&p)?;
            pairs.push([p, p1]);
        }
        let projectors: [[ComplexMatrix; 2]; 3] = pairs.try_into().expect("three angles");
        ProjectorFamily::new(side_dim, projectors)
    }

    pub fn ideal() -> Self {
        let projectors = Angle::ALL.map(|a| [ideal_projector(Setting::new(a, 0)), ideal_projector(Setting::new(a, 1))]);
        ProjectorFamily { side_dim: 2, projectors }
    }

    pub fn side_dim(&self) -> usize {
        self.side_dim
    }

    pub fn get(&self, s: Setting) -> &ComplexMatrix {
        &self.projectors[s.angle.index()][s.outcome as usize]
    }

    pub fn pair(&self, angle: Angle) -> &[ComplexMatrix; 2] {
        &self.projectors[angle.index()]
    }

    pub fn map(&self, f: impl Fn(Setting, &ComplexMatrix) -> ComplexMatrix) -> Self {
        let projectors =
            Angle::ALL.map(|a| [0u8, 1].map(|x| f(Setting::new(a, x), &self.projectors[a.index()][x as usize])));
        let side_dim = projectors[0][0].rows();
        ProjectorFamily { side_dim, projectors }
    }
}

/// Where a device came from. Carried through serialization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub generator: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub parameters: BTreeMap<String, serde_json::Value>,
}

impl Provenance {
    pub fn new(generator: impl Into<String>, seed: Option<u64>) -> Self {
        Provenance { generator: generator.into(), seed, parameters: BTreeMap::new() }
    }

    pub fn with(mut self, key: &str, value: impl Into<serde_json::Value>) -> Self {
        self.parameters.insert(key.to_string(), value.into());
        self
    }
}

/// A bipartite state with a projector family on each side.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviceRealization {
    pub shape: BipartiteShape,
    pub psi: StateVector,
    pub fam_a: ProjectorFamily,
    pub fam_b: ProjectorFamily,
    pub provenance: Option<Provenance>,
}

impl DeviceRealization {
    /// Checks that the pieces fit together dimensionally. Use
    /// [`validate_device`] for the numerical invariants.
    pub fn new(
        shape: BipartiteShape,
        psi: StateVector,
        fam_a: ProjectorFamily,
        fam_b: ProjectorFamily,
        provenance: Option<Provenance>,
    ) -> Result<Self> {
        if psi.dim() != shape.joint_dim() {
            return Err(Error::Dimension(format!(
                "state of dimension {} for a {}x{} device",
                psi.dim(),
                shape.dim_a,
                shape.dim_b
            )));
        }
        if fam_a.side_dim() != shape.dim_a || fam_b.side_dim() != shape.dim_b {
            return Err(Error::Dimension(format!(
                "families of dimension ({}, {}) for a {}x{} device",
                fam_a.side_dim(),
                fam_b.side_dim(),
                shape.dim_a,
                shape.dim_b
            )));
        }
        Ok(DeviceRealization { shape, psi, fam_a, fam_b, provenance })
    }

    pub fn family(&self, side: Side) -> &ProjectorFamily {
        match side {
            Side::A => &self.fam_a,
            Side::B => &self.fam_b,
        }
    }

    /// `(Π_a ⊗ I)v`
    pub fn apply_a(&self, a: Setting, v: &StateVector) -> StateVector {
        apply_local(self.fam_a.get(a), v, self.shape, Side::A).expect("shape checked at construction").0
    }

    /// `(I ⊗ Π_b)v`
    pub fn apply_b(&self, b: Setting, v: &StateVector) -> StateVector {
        apply_local(self.fam_b.get(b), v, self.shape, Side::B).expect("shape checked at construction").0
    }

    pub fn apply(&self, side: Side, s: Setting, v: &StateVector) -> StateVector {
        match side {
            Side::A => self.apply_a(s, v),
            Side::B => self.apply_b(s, v),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    NotHermitian,
    NotIdempotent,
    Incomplete,
    NotNormalized,
    NonFinite,
}

/// One failed invariant, with the offending norm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    /// `"A"`, `"B"` or `"state"`.
    pub family: String,
    pub angle: Option<Angle>,
    pub outcome: Option<u8>,
    pub kind: ViolationKind,
    #[serde(deserialize_with = "crate::serde_nan::f64_or_nan")]
    pub norm: f64,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let what = match self.kind {
            ViolationKind::NotHermitian => "projector is not Hermitian",
            ViolationKind::NotIdempotent => "projector is not idempotent",
            ViolationKind::Incomplete => "P0 + P1 differs from the identity",
            ViolationKind::NotNormalized => "state is not normalized",
            ViolationKind::NonFinite => "non-finite entries",
        };
        write!(f, "{}", self.family)?;
        if let Some(a) = self.angle {
            write!(f, " angle {}", a.tag())?;
        }
        if let Some(x) = self.outcome {
            write!(f, " outcome {x}")?;
        }
        write!(f, ": {what} (norm {:.3e})", self.norm)
    }
}

fn family_violations(name: &str, fam: &ProjectorFamily, out: &mut Vec<Violation>) {
    let id = ComplexMatrix::identity(fam.side_dim());
    for angle in Angle::ALL {
        let [p0, p1] = fam.pair(angle);
        for (x, p) in [(0u8, p0), (1, p1)] {
            let mut push = |kind, norm| {
                out.push(Violation { family: name.to_string(), angle: Some(angle), outcome: Some(x), kind, norm })
            };
            if !p.is_finite() {
                push(ViolationKind::NonFinite, f64::NAN);
                continue;
            }
            let herm = p.hermiticity_defect();
            if herm > FAMILY_TOL {
                push(ViolationKind::NotHermitian, herm);
            }
            let idem = p.matmul(p).expect("square").max_abs_diff(p);
            if idem > FAMILY_TOL {
                push(ViolationKind::NotIdempotent, idem);
            }
        }
        let complete = p0.add(p1).expect("same shape").max_abs_diff(&id);
        if complete > FAMILY_TOL {
            out.push(Violation {
                family: name.to_string(),
                angle: Some(angle),
                outcome: None,
                kind: ViolationKind::Incomplete,
                norm: complete,
            });
        }
    }
}

/// Every broken invariant of `d`; empty iff the device is well formed.
pub fn validate_device(d: &DeviceRealization) -> Vec<Violation> {
    let mut out = Vec::new();
    let amps_finite = d.psi.amplitudes().iter().all(|z| z.re.is_finite() && z.im.is_finite());
    if !amps_finite {
        out.push(Violation {
            family: "state".into(),
            angle: None,
            outcome: None,
            kind: ViolationKind::NonFinite,
            norm: f64::NAN,
        });
    } else {
        let dev = (d.psi.norm() - 1.0).abs();
        if dev > STATE_NORM_TOL {
            out.push(Violation {
                family: "state".into(),
                angle: None,
                outcome: None,
                kind: ViolationKind::NotNormalized,
                norm: dev,
            });
        }
    }
    family_violations("A", &d.fam_a, &mut out);
    family_violations("B", &d.fam_b, &mut out);
    out
}

/// The ideal qubit pair: Φ⁺ with the ideal projectors on both sides.
pub fn embed_ideal() -> DeviceRealization {
    DeviceRealization {
        shape: BipartiteShape { dim_a: 2, dim_b: 2 },
        psi: phi_plus(),
        fam_a: ProjectorFamily::ideal(),
        fam_b: ProjectorFamily::ideal(),
        provenance: Some(Provenance::new("ideal", None)),
    }
}

/// Parameters of [`scramble`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScrambleParams {
    pub garbage_a: usize,
    pub garbage_b: usize,
    pub pad_a: usize,
    pub pad_b: usize,
}

impl ScrambleParams {
    pub fn new(garbage_a: usize, garbage_b: usize, pad_a: usize, pad_b: usize) -> Self {
        ScrambleParams { garbage_a, garbage_b, pad_a, pad_b }
    }

    pub fn dim_a(&self) -> usize {
        2 * self.garbage_a + self.pad_a
    }

    pub fn dim_b(&self) -> usize {
        2 * self.garbage_b + self.pad_b
    }
}

/// A scrambled device together with the hidden pieces it was built from.
#[derive(Debug, Clone)]
pub struct ScrambledDevice {
    pub device: DeviceRealization,
    /// `W_A : C² ⊗ C^{g_A} → C^{dim_A}`, qubit slow.
    pub iso_a: ComplexMatrix,
    pub iso_b: ComplexMatrix,
    /// Junk projectors on the complement of `range(W)`, per angle and outcome.
    pub junk_a: [[ComplexMatrix; 2]; 3],
    pub junk_b: [[ComplexMatrix; 2]; 3],
    /// `Ψ_E ∈ C^{g_A} ⊗ C^{g_B}`.
    pub garbage: StateVector,
}

/// Φ⁺ ⊗ Ψ_E with factors regrouped from `(A, B, E_A, E_B)` to
/// `(A, E_A), (B, E_B)`.
///
/// Bijection: the amplitude at `((q_a·g_A + e_a)·2g_B) + (q_b·g_B + e_b)`
/// is `Φ⁺[q_a, q_b] · Ψ_E[e_a, e_b]`.
pub fn regroup_bell_with_garbage(garbage: &StateVector, g_a: usize, g_b: usize) -> StateVector {
    let phi = phi_plus();
    let mut amps = vec![crate::tensor::ZERO; 4 * g_a * g_b];
    for qa in 0..2 {
        for qb in 0..2 {
            let p = phi[qa * 2 + qb];
            for ea in 0..g_a {
                for eb in 0..g_b {
                    let row = qa * g_a + ea;
                    let col = qb * g_b + eb;
                    amps[row * (2 * g_b) + col] = p * garbage[ea * g_b + eb];
                }
            }
        }
    }
    StateVector::new(amps)
}

/// Random splitting of the complement of `range(w)` into two projectors for
/// each angle.
fn junk_projectors(rng: &mut ChaCha8Rng, w: &ComplexMatrix) -> Result<[[ComplexMatrix; 2]; 3]> {
    let n = w.rows();
    let pad = n - w.cols();
    let range = w.matmul(&w.adjoint())?;
    let comp_proj = ComplexMatrix::identity(n).sub(&range)?;
    let complement = if pad == 0 {
        ComplexMatrix::zeros(n, 0)
    } else {
        let g = gaussian_matrix(rng, n, pad);
        orthonormalize_columns(&comp_proj.matmul(&g)?)
    };
    let mut out = Vec::with_capacity(3);
    for _ in Angle::ALL {
        if pad == 0 {
            out.push([ComplexMatrix::zeros(n, n), ComplexMatrix::zeros(n, n)]);
            continue;
        }
        let v = random_unitary(rng, pad);
        let rank = rng.random_range(0..=pad);
        let kv = complement.matmul(&v)?;
        let mut q0 = ComplexMatrix::zeros(n, n);
        for k in 0..rank {
            let col = kv.column(k);
            q0 = q0.add(&col.projector())?;
        }
        let q1 = comp_proj.sub(&q0)?;
        out.push([q0, q1]);
    }
    Ok(out.try_into().expect("three angles"))
}

fn scrambled_family(iso: &ComplexMatrix, g: usize, junk: &[[ComplexMatrix; 2]; 3]) -> Result<ProjectorFamily> {
    let id_g = ComplexMatrix::identity(g);
    let mut pairs = Vec::with_capacity(3);
    for angle in Angle::ALL {
        let mut pair = Vec::with_capacity(2);
        for x in 0..2u8 {
            let logical = kron(&ideal_projector(Setting::new(angle, x)), &id_g)?;
            let p = ComplexMatrix::product(&[iso, &logical, &iso.adjoint()])?;
            pair.push(p.add(&junk[angle.index()][x as usize])?);
        }
        pairs.push(<[ComplexMatrix; 2]>::try_from(pair).expect("two outcomes"));
    }
    ProjectorFamily::new(iso.rows(), pairs.try_into().expect("three angles"))
}

/// [`scramble_parts`] with the default side-dimension cap.
pub fn scramble(params: ScrambleParams, seed: u64) -> Result<DeviceRealization> {
    Ok(scramble_parts(params, seed, DEFAULT_MAX_SIDE_DIM)?.device)
}

/// Ideal device hidden behind random local isometries, with a random
/// garbage state and junk measurement blocks outside the isometry ranges.
///
/// The result reproduces the ideal statistics exactly (up to rounding).
pub fn scramble_parts(params: ScrambleParams, seed: u64, max_side_dim: usize) -> Result<ScrambledDevice> {
    let ScrambleParams { garbage_a: ga, garbage_b: gb, .. } = params;
    if ga == 0 || gb == 0 {
        return Err(Error::Domain("garbage dimensions must be at least 1".into()));
    }
    let (da, db) = (params.dim_a(), params.dim_b());
    for (what, value) in [("dim_a", da), ("dim_b", db)] {
        if value > max_side_dim {
            return Err(Error::Size { what, value, limit: max_side_dim });
        }
    }
    let mut rng = rng_from_seed(seed);
    let garbage = random_state(&mut rng, ga * gb);
    let iso_a = random_isometry(&mut rng, da, 2 * ga);
    let iso_b = random_isometry(&mut rng, db, 2 * gb);
    let junk_a = junk_projectors(&mut rng, &iso_a)?;
    let junk_b = junk_projectors(&mut rng, &iso_b)?;

    let logical_shape = BipartiteShape::new(2 * ga, 2 * gb)?;
    let regrouped = regroup_bell_with_garbage(&garbage, ga, gb);
    let (half, half_shape) = apply_local(&iso_a, &regrouped, logical_shape, Side::A)?;
    let (psi, shape) = apply_local(&iso_b, &half, half_shape, Side::B)?;
    let psi = psi.to_normalized()?;

    let fam_a = scrambled_family(&iso_a, ga, &junk_a)?;
    let fam_b = scrambled_family(&iso_b, gb, &junk_b)?;
    let provenance = Provenance::new("scrambled", Some(seed))
        .with("garbage_a", ga)
        .with("garbage_b", gb)
        .with("pad_a", params.pad_a)
        .with("pad_b", params.pad_b);
    let device = DeviceRealization::new(shape, psi, fam_a, fam_b, Some(provenance))?;
    Ok(ScrambledDevice { device, iso_a, iso_b, junk_a, junk_b, garbage })
}

/// Kind of deviation applied by [`perturb`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbKind {
    AngleTilt,
    StatePerturb,
}

impl PerturbKind {
    pub fn name(self) -> &'static str {
        match self {
            PerturbKind::AngleTilt => "angle_tilt",
            PerturbKind::StatePerturb => "state_perturb",
        }
    }
}

/// Rotation generator for one angle of side A: the commutator of its
/// outcome-0 projector with that of the next angle, compressed to the
/// support of the state. For a qubit in the ideal configuration this is
/// proportional to the real-plane rotation generator.
fn tilt_generator(
    d: &DeviceRealization,
    support: &ComplexMatrix,
    angle: Angle,
    rng: &mut ChaCha8Rng,
) -> Result<ComplexMatrix> {
    let (next, _) = angle.cyclic_partners();
    let p = d.fam_a.get(Setting::new(angle, 0));
    let q = d.fam_a.get(Setting::new(next, 0));
    let comm = p.matmul(q)?.sub(&q.matmul(p)?)?.scale(crate::tensor::c(0.0, 1.0));
    for g in [ComplexMatrix::product(&[support, &comm, support])?, comm] {
        let n = g.op_norm();
        if n > 1e-12 {
            return Ok(g.scale(re(1.0 / n)));
        }
    }
    Ok(random_hermitian(rng, d.shape.dim_a))
}

/// Moves a device away from the ideal statistics by at most `epsilon`.
///
/// `AngleTilt` rotates every side-A measurement basis by a seeded offset
/// `δ` with `ε/2 ≤ |δ| ≤ ε`; `StatePerturb` adds a seeded Gaussian vector of
/// norm `ε` to the state and renormalizes. The output stays a valid
/// pure-state projective device.
pub fn perturb(d: &DeviceRealization, kind: PerturbKind, epsilon: f64, seed: u64) -> Result<DeviceRealization> {
    if !epsilon.is_finite() || epsilon < 0.0 {
        return Err(Error::Domain(format!("epsilon must be a finite non-negative number, got {epsilon}")));
    }
    let mut rng = rng_from_seed(seed);
    let mut out = d.clone();
    match kind {
        PerturbKind::AngleTilt => {
            let rho = reduced_density(&d.psi, d.shape, Side::A)?;
            let support = support_projector(&rho, DEFAULT_THRESHOLD)?;
            let mut rotations = Vec::with_capacity(3);
            for angle in Angle::ALL {
                let magnitude = epsilon * rng.random_range(0.5..=1.0);
                let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                let g = tilt_generator(d, &support, angle, &mut rng)?;
                rotations.push(unitary_from_generator(&g, sign * magnitude));
            }
            out.fam_a = d.fam_a.map(|s, p| {
                let r = &rotations[s.angle.index()];
                ComplexMatrix::product(&[r, p, &r.adjoint()]).expect("square")
            });
        }
        PerturbKind::StatePerturb => {
            let g = gaussian_vector(&mut rng, d.psi.dim());
            let scale = if epsilon == 0.0 { 0.0 } else { epsilon / g.norm() };
            out.psi = d.psi.add(&g.scale(re(scale))).to_normalized()?;
        }
    }
    let base = d.provenance.as_ref().map_or("custom", |p| p.generator.as_str());
    out.provenance = Some(
        Provenance::new(format!("{base}+{}", kind.name()), Some(seed))
            .with("epsilon", epsilon)
            .with("kind", kind.name()),
    );
    Ok(out)
}

/// Two-outcome POVM per angle on one side.
#[derive(Debug, Clone, PartialEq)]
pub struct PovmFamily {
    side_dim: usize,
    effects: [[ComplexMatrix; 2]; 3],
}

impl PovmFamily {
    pub fn new(side_dim: usize, effects: [[ComplexMatrix; 2]; 3]) -> Result<Self> {
        for pair in &effects {
            for e in pair {
                if e.rows() != side_dim || e.cols() != side_dim {
                    return Err(Error::Dimension(format!(
                        "effect is {}x{}, expected {}x{}",
                        e.rows(),
                        e.cols(),
                        side_dim,
                        side_dim
                    )));
                }
            }
        }
        Ok(PovmFamily { side_dim, effects })
    }

    /// Random family with `E1 = I − E0`.
    pub fn random(side_dim: usize, seed: u64) -> Self {
        let mut rng = rng_from_seed(seed);
        let id = ComplexMatrix::identity(side_dim);
        let effects = Angle::ALL.map(|_| {
            let e0 = crate::random::random_effect(&mut rng, side_dim);
            let e1 = id.sub(&e0).expect("square");
            [e0, e1]
        });
        PovmFamily { side_dim, effects }
    }

    pub fn side_dim(&self) -> usize {
        self.side_dim
    }

    pub fn get(&self, s: Setting) -> &ComplexMatrix {
        &self.effects[s.angle.index()][s.outcome as usize]
    }

    /// Human-readable list of broken invariants.
    pub fn violations(&self) -> Vec<String> {
        let id = ComplexMatrix::identity(self.side_dim);
        let mut out = Vec::new();
        for angle in Angle::ALL {
            let [e0, e1] = &self.effects[angle.index()];
            for (x, e) in [(0, e0), (1, e1)] {
                let herm = e.hermiticity_defect();
                if herm > FAMILY_TOL {
                    out.push(format!("effect ({}, {x}) is not Hermitian ({herm:.3e})", angle.tag()));
                    continue;
                }
                let (vals, _) = hermitian_eigen(e).expect("square");
                let lo = vals.first().copied().unwrap_or(0.0);
                let hi = vals.last().copied().unwrap_or(0.0);
                if lo < -FAMILY_TOL || hi > 1.0 + FAMILY_TOL {
                    out.push(format!(
                        "effect ({}, {x}) has eigenvalues outside [0, 1] ({lo:.3e}, {hi:.3e})",
                        angle.tag()
                    ));
                }
            }
            let complete = e0.add(e1).expect("same shape").max_abs_diff(&id);
            if complete > FAMILY_TOL {
                out.push(format!("effects at angle {} do not sum to I ({complete:.3e})", angle.tag()));
            }
        }
        out
    }
}

/// Projective dilation of a two-outcome POVM family with one ancilla qubit
/// as the fast factor, prepared in `|0⟩`.
///
/// With `A = √E0` and `B = √(I − E0)`, the unitary
/// `V = A⊗|0⟩⟨0| + B⊗|1⟩⟨0| − B⊗|0⟩⟨1| + A⊗|1⟩⟨1|` sends `ψ⊗|0⟩` to
/// `Aψ⊗|0⟩ + Bψ⊗|1⟩`, and `P0 = V†(I ⊗ |0⟩⟨0|)V`, `P1 = I − P0`. Then
/// `tr(P_x (ρ ⊗ |0⟩⟨0|)) = tr(E_x ρ)` for every `ρ`.
pub fn naimark_dilate(f: &PovmFamily) -> Result<ProjectorFamily> {
    let problems = f.violations();
    if !problems.is_empty() {
        return Err(Error::Validation(problems.join("; ")));
    }
    let n = f.side_dim();
    let id = ComplexMatrix::identity(n);
    let ket = |r: usize, cl: usize| {
        let mut m = ComplexMatrix::zeros(2, 2);
        m[(r, cl)] = ONE;
        m
    };
    let keep0 = kron(&id, &ket(0, 0))?;
    let mut p0s = Vec::with_capacity(3);
    for angle in Angle::ALL {
        let e0 = f.get(Setting::new(angle, 0));
        let a = hermitian_function(e0, |x| re(x.clamp(0.0, 1.0).sqrt()))?;
        let b = hermitian_function(e0, |x| re((1.0 - x).clamp(0.0, 1.0).sqrt()))?;
        let v = kron(&a, &ket(0, 0))?
            .add(&kron(&b, &ket(1, 0))?)?
            .sub(&kron(&b, &ket(0, 1))?)?
            .add(&kron(&a, &ket(1, 1))?)?;
        let p0 = ComplexMatrix::product(&[&v.adjoint(), &keep0, &v])?;
        // symmetrize away rounding
        let p0 = p0.add(&p0.adjoint())?.scale(re(0.5));
        p0s.push(p0);
    }
    ProjectorFamily::from_outcome_zero(2 * n, p0s.try_into().expect("three angles"))
}
