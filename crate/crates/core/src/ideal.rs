//! The reference configuration: a Bell pair measured in real bases at
//! angles −π/8, 0 and π/8 on each side.

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, FRAC_PI_8};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{kron, re, BipartiteShape, ComplexMatrix, StateVector, ZERO};

/// One of the three measurement angles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Angle {
    Minus,
    Zero,
    Plus,
}

impl Angle {
    pub const ALL: [Angle; 3] = [Angle::Minus, Angle::Zero, Angle::Plus];

    pub fn radians(self) -> f64 {
        match self {
            Angle::Minus => -FRAC_PI_8,
            Angle::Zero => 0.0,
            Angle::Plus => FRAC_PI_8,
        }
    }

    pub fn index(self) -> usize {
        match self {
            Angle::Minus => 0,
            Angle::Zero => 1,
            Angle::Plus => 2,
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            Angle::Minus => "minus",
            Angle::Zero => "zero",
            Angle::Plus => "plus",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Angle> {
        Angle::ALL.into_iter().find(|a| a.tag() == tag)
    }

    /// `(α, γ)` such that `(α, γ, β)` is the cyclic permutation of
    /// `(−π/8, 0, π/8)` ending in `β = self`.
    pub fn cyclic_partners(self) -> (Angle, Angle) {
        match self {
            Angle::Plus => (Angle::Minus, Angle::Zero),
            Angle::Minus => (Angle::Zero, Angle::Plus),
            Angle::Zero => (Angle::Plus, Angle::Minus),
        }
    }
}

impl fmt::Display for Angle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Angle::Minus => "-pi/8",
            Angle::Zero => "0",
            Angle::Plus => "+pi/8",
        })
    }
}

/// A measurement angle together with an outcome bit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Setting {
    pub angle: Angle,
    pub outcome: u8,
}

impl Setting {
    /// Canonical enumeration order.
    pub const ALL: [Setting; 6] = [
        Setting { angle: Angle::Minus, outcome: 0 },
        Setting { angle: Angle::Minus, outcome: 1 },
        Setting { angle: Angle::Zero, outcome: 0 },
        Setting { angle: Angle::Zero, outcome: 1 },
        Setting { angle: Angle::Plus, outcome: 0 },
        Setting { angle: Angle::Plus, outcome: 1 },
    ];

    pub fn new(angle: Angle, outcome: u8) -> Self {
        assert!(outcome < 2, "outcome must be a bit");
        Setting { angle, outcome }
    }

    pub fn index(self) -> usize {
        self.angle.index() * 2 + self.outcome as usize
    }

    /// Angle of the basis vector `|θ⟩ = cos θ|0⟩ + sin θ|1⟩` selected by
    /// this setting.
    pub fn theta(self) -> f64 {
        self.angle.radians() + self.outcome as f64 * FRAC_PI_2
    }
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.angle, self.outcome)
    }
}

/// An ordered pair of angles `(α, β)`, α on side A and β on side B.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AnglePair {
    pub a: Angle,
    pub b: Angle,
}

impl AnglePair {
    pub fn new(a: Angle, b: Angle) -> Self {
        AnglePair { a, b }
    }

    pub fn is_mixed(self) -> bool {
        self.a != self.b
    }

    /// The six pairs with distinct angles.
    pub fn mixed() -> Vec<AnglePair> {
        Angle::ALL
            .iter()
            .flat_map(|&a| Angle::ALL.iter().map(move |&b| AnglePair::new(a, b)))
            .filter(|p| p.is_mixed())
            .collect()
    }

    /// The four `(a, b)` settings for outcomes ordered (0,0),(0,1),(1,0),(1,1).
    pub fn settings(self) -> [(Setting, Setting); 4] {
        [(0, 0), (0, 1), (1, 0), (1, 1)].map(|(x, y)| (Setting::new(self.a, x), Setting::new(self.b, y)))
    }
}

impl fmt::Display for AnglePair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.a, self.b)
    }
}

pub fn qubit_shape() -> BipartiteShape {
    BipartiteShape { dim_a: 2, dim_b: 2 }
}

/// `|θ⟩⟨θ|` for the basis vector selected by `s`.
pub fn ideal_projector(s: Setting) -> ComplexMatrix {
    let (sin, cos) = s.theta().sin_cos();
    ComplexMatrix::from_real_rows(&[&[cos * cos, cos * sin], &[sin * cos, sin * sin]])
}

/// `|θ⟩` for the basis vector selected by `s`.
pub fn ideal_basis_state(s: Setting) -> StateVector {
    let (sin, cos) = s.theta().sin_cos();
    StateVector::normalized(vec![re(cos), re(sin)]).expect("unit vector")
}

/// `(|00⟩ + |11⟩)/√2`, slow-A order.
pub fn phi_plus() -> StateVector {
    StateVector::normalized(vec![re(FRAC_1_SQRT_2), ZERO, ZERO, re(FRAC_1_SQRT_2)]).expect("unit vector")
}

/// `(P_a ⊗ P_b)Φ⁺`
pub fn ideal_vector(a: Setting, b: Setting) -> StateVector {
    let op = kron(&ideal_projector(a), &ideal_projector(b)).expect("4x4");
    op.apply(&phi_plus()).expect("4-dim")
}

/// `‖(P_a ⊗ P_b)Φ⁺‖²`
pub fn ideal_probability(a: Setting, b: Setting) -> f64 {
    ideal_vector(a, b).norm_sqr()
}

/// Change of coordinates between two quadruples of post-measurement
/// vectors.
///
/// Column `(x,y)` holds the coordinates of the from-vector `(x,y)` in the
/// target quadruple, rows indexed by the target outcome pair `(x',y')`.
/// Outcome pairs are ordered (0,0),(0,1),(1,0),(1,1). With this layout
/// composition reads `T(a→c) = T(b→c) · T(a→b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferMatrix {
    pub from: AnglePair,
    pub to: AnglePair,
    pub entries: ComplexMatrix,
}

impl TransferMatrix {
    /// Coefficient of target `(x',y')` in from-vector `(x,y)`.
    pub fn coefficient(&self, from_xy: (u8, u8), to_xy: (u8, u8)) -> crate::tensor::C64 {
        let col = (from_xy.0 * 2 + from_xy.1) as usize;
        let row = (to_xy.0 * 2 + to_xy.1) as usize;
        self.entries[(row, col)]
    }
}

/// Coordinates of each `from` vector in the mutually orthogonal `to`
/// vectors, plus the worst reconstruction residual.
pub fn solve_in_orthogonal_basis(from: &[StateVector], to: &[StateVector]) -> Result<(ComplexMatrix, f64)> {
    let mut coeffs = ComplexMatrix::zeros(to.len(), from.len());
    for (k, t) in to.iter().enumerate() {
        let n2 = t.norm_sqr();
        if n2 == 0.0 {
            return Err(Error::Domain(format!("target vector {k} vanishes")));
        }
        for (i, f) in from.iter().enumerate() {
            coeffs[(k, i)] = t.inner(f) / n2;
        }
    }
    let residual = from
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let rebuilt = to
                .iter()
                .enumerate()
                .fold(StateVector::zeros(f.dim()), |acc, (k, t)| acc.add(&t.scale(coeffs[(k, i)])));
            rebuilt.distance(f)
        })
        .fold(0.0, f64::max);
    Ok((coeffs, residual))
}

/// Unique coefficients expressing the ideal quadruple of `from` in the ideal
/// quadruple of `to`.
pub fn ideal_transfer_matrix(from: AnglePair, to: AnglePair) -> Result<TransferMatrix> {
    for p in [from, to] {
        if !p.is_mixed() {
            return Err(Error::Domain(format!(
                "angle pair {p} has equal angles; its post-measurement vectors are degenerate"
            )));
        }
    }
    let src: Vec<StateVector> = from.settings().iter().map(|&(a, b)| ideal_vector(a, b)).collect();
    let dst: Vec<StateVector> = to.settings().iter().map(|&(a, b)| ideal_vector(a, b)).collect();
    let (entries, residual) = solve_in_orthogonal_basis(&src, &dst)?;
    if residual > 1e-12 {
        return Err(Error::Domain(format!("transfer {from} -> {to} reconstructs with residual {residual:.3e}")));
    }
    Ok(TransferMatrix { from, to, entries })
}

/// `(P_{(α,0)} − P_{(γ,0)})P_{(β,z)}Φ⁺` for the cyclic `(α, γ, β)`.
pub fn ideal_d_vector(beta: Angle, z: u8) -> StateVector {
    let (alpha, gamma) = beta.cyclic_partners();
    let b = Setting::new(beta, z);
    ideal_vector(Setting::new(alpha, 0), b).sub(&ideal_vector(Setting::new(gamma, 0), b))
}

/// Squared lengths of the two ideal d-vectors for `beta`.
pub fn ideal_d_lengths(beta: Angle) -> (f64, f64) {
    (ideal_d_vector(beta, 0).norm_sqr(), ideal_d_vector(beta, 1).norm_sqr())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{partial_trace, Side};

    const HALF_SIN2_PI8: f64 = 0.073_223_304_703_363_12;

    #[test]
    fn angle_radians_are_exact() {
        assert_eq!(Angle::Plus.radians(), std::f64::consts::FRAC_PI_8);
        assert_eq!(Angle::Minus.radians(), -std::f64::consts::FRAC_PI_8);
        assert_eq!(Angle::Zero.radians(), 0.0);
    }

    #[test]
    fn settings_enumerate_in_canonical_order() {
        for (k, s) in Setting::ALL.iter().enumerate() {
            assert_eq!(s.index(), k);
        }
    }

    #[test]
    fn projector_examples() {
        let z0 = ideal_projector(Setting::new(Angle::Zero, 0));
        assert!(z0.max_abs_diff(&ComplexMatrix::from_real_rows(&[&[1.0, 0.0], &[0.0, 0.0]])) < 1e-16);
        let z1 = ideal_projector(Setting::new(Angle::Zero, 1));
        assert!(z1.max_abs_diff(&ComplexMatrix::from_real_rows(&[&[0.0, 0.0], &[0.0, 1.0]])) < 1e-16);
        let p0 = ideal_projector(Setting::new(Angle::Plus, 0));
        let expected = ComplexMatrix::from_real_rows(&[&[0.853_553_4, 0.353_553_4], &[0.353_553_4, 0.146_446_6]]);
        assert!(p0.max_abs_diff(&expected) < 1e-7);
    }

    #[test]
    fn projectors_are_complete_and_idempotent() {
        for angle in Angle::ALL {
            let p0 = ideal_projector(Setting::new(angle, 0));
            let p1 = ideal_projector(Setting::new(angle, 1));
            assert!(p0.add(&p1).unwrap().max_abs_diff(&ComplexMatrix::identity(2)) < 1e-15);
            assert!(p0.matmul(&p0).unwrap().max_abs_diff(&p0) < 1e-15);
            assert!(p0.is_hermitian(0.0));
        }
    }

    #[test]
    fn phi_plus_amplitudes() {
        let phi = phi_plus();
        let h = FRAC_1_SQRT_2;
        assert_eq!(phi.amplitudes(), &[re(h), ZERO, ZERO, re(h)]);
        assert!((phi.norm() - 1.0).abs() < 1e-15);
        let red = partial_trace(&phi.projector(), qubit_shape(), Side::B).unwrap();
        assert!(red.max_abs_diff(&ComplexMatrix::identity(2).scale(re(0.5))) < 1e-15);
    }

    #[test]
    fn probability_examples() {
        let p = ideal_probability(Setting::new(Angle::Zero, 0), Setting::new(Angle::Zero, 1));
        assert!(p.abs() < 1e-16);
        let p = ideal_probability(Setting::new(Angle::Minus, 0), Setting::new(Angle::Plus, 0));
        assert!((p - 0.25).abs() < 1e-15);
        let p = ideal_probability(Setting::new(Angle::Zero, 0), Setting::new(Angle::Plus, 0));
        assert!((p - 0.426_776_7).abs() < 1e-7);
    }

    #[test]
    fn probability_matches_closed_form() {
        for a in Setting::ALL {
            for b in Setting::ALL {
                let closed = 0.5 * (a.theta() - b.theta()).cos().powi(2);
                assert!((ideal_probability(a, b) - closed).abs() < 1e-14, "{a} {b}");
            }
        }
    }

    #[test]
    fn tables_are_normalized_with_flat_marginals() {
        for alpha in Angle::ALL {
            for beta in Angle::ALL {
                let pair = AnglePair::new(alpha, beta);
                let total: f64 = pair.settings().iter().map(|&(a, b)| ideal_probability(a, b)).sum();
                assert!((total - 1.0).abs() < 1e-14);
                for x in 0..2 {
                    let m: f64 = (0..2).map(|y| ideal_probability(Setting::new(alpha, x), Setting::new(beta, y))).sum();
                    assert!((m - 0.5).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn transfer_to_self_is_identity() {
        for p in AnglePair::mixed() {
            let t = ideal_transfer_matrix(p, p).unwrap();
            assert!(t.entries.max_abs_diff(&ComplexMatrix::identity(4)) < 1e-14);
        }
    }

    #[test]
    fn transfer_keeping_b_fixed_is_block_diagonal() {
        let t =
            ideal_transfer_matrix(AnglePair::new(Angle::Minus, Angle::Plus), AnglePair::new(Angle::Zero, Angle::Plus))
                .unwrap();
        for x in 0..2 {
            for y in 0..2 {
                for xp in 0..2 {
                    for yp in 0..2 {
                        if y != yp {
                            assert!(t.coefficient((x, y), (xp, yp)).norm() < 1e-14);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn general_transfer_is_dense_and_exact() {
        let from = AnglePair::new(Angle::Minus, Angle::Plus);
        let to = AnglePair::new(Angle::Plus, Angle::Minus);
        let t = ideal_transfer_matrix(from, to).unwrap();
        assert!(t.entries.entries().iter().all(|z| z.norm() > 1e-3));
        // oracle: rebuild each source vector from the explicit target vectors
        for (i, &(a, b)) in from.settings().iter().enumerate() {
            let mut rebuilt = StateVector::zeros(4);
            for (k, &(ap, bp)) in to.settings().iter().enumerate() {
                rebuilt = rebuilt.add(&ideal_vector(ap, bp).scale(t.entries[(k, i)]));
            }
            assert!(rebuilt.distance(&ideal_vector(a, b)) < 1e-12);
        }
    }

    #[test]
    fn transfer_composes() {
        let pairs = AnglePair::mixed();
        for &p1 in &pairs {
            for &p2 in &pairs {
                for &p3 in &pairs {
                    let direct = ideal_transfer_matrix(p1, p3).unwrap().entries;
                    let t12 = ideal_transfer_matrix(p1, p2).unwrap().entries;
                    let t23 = ideal_transfer_matrix(p2, p3).unwrap().entries;
                    assert!(t23.matmul(&t12).unwrap().max_abs_diff(&direct) < 1e-10);
                }
            }
        }
    }

    #[test]
    fn transfer_rejects_equal_angles() {
        let same = AnglePair::new(Angle::Zero, Angle::Zero);
        let mixed = AnglePair::new(Angle::Zero, Angle::Plus);
        assert!(matches!(ideal_transfer_matrix(same, mixed), Err(Error::Domain(_))));
        assert!(matches!(ideal_transfer_matrix(mixed, same), Err(Error::Domain(_))));
    }

    #[test]
    fn d_lengths_match_direct_oracle() {
        // oracle: the d-vector in closed form, (1/√2)(cos(α−β)|α⟩ − cos(γ−β)|γ⟩)⊗|β⟩
        // for z = 0 and the sine analogue for z = 1
        for beta in Angle::ALL {
            let (alpha, gamma) = beta.cyclic_partners();
            let (a, g, b) = (alpha.radians(), gamma.radians(), beta.radians());
            let len = |ca: f64, cg: f64| 0.5 * (ca * ca + cg * cg - 2.0 * ca * cg * (a - g).cos());
            let oracle0 = len((a - b).cos(), (g - b).cos());
            let oracle1 = len((a - b).sin(), (g - b).sin());
            let (d0, d1) = ideal_d_lengths(beta);
            assert!((d0 - oracle0).abs() < 1e-15);
            assert!((d1 - oracle1).abs() < 1e-15);
            // the two partner angles are π/8 apart for β = ±π/8 and π/4 apart
            // for β = 0, so each d-length is sin²(α−γ)/2
            let expected = if beta == Angle::Zero { 0.25 } else { HALF_SIN2_PI8 };
            assert!((d0 - expected).abs() < 1e-14, "{beta}: {d0}");
            assert!((d1 - expected).abs() < 1e-14, "{beta}: {d1}");
            assert!((d0 + d1 - (a - g).sin().powi(2)).abs() < 1e-14);
            // the sum is the squared length of (P_(α,0) − P_(γ,0))Φ⁺
            let diff = ideal_projector(Setting::new(alpha, 0)).sub(&ideal_projector(Setting::new(gamma, 0))).unwrap();
            let whole = kron(&diff, &ComplexMatrix::identity(2)).unwrap().apply(&phi_plus()).unwrap();
            assert!((whole.norm_sqr() - (d0 + d1)).abs() < 1e-15);
            // the two d-vectors are orthogonal
            assert!(ideal_d_vector(beta, 0).inner(&ideal_d_vector(beta, 1)).norm() < 1e-15);
        }
    }
}
