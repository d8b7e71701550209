//! Post-measurement vectors and the three structural propositions they
//! satisfy on devices with the ideal statistics.

use serde::{Deserialize, Serialize};

use crate::device::DeviceRealization;
use crate::ideal::{ideal_d_lengths, ideal_probability, ideal_transfer_matrix, Angle, AnglePair, Setting};
use crate::stats::{slot, table_order};
use crate::tensor::StateVector;

/// `(Π_a ⊗ Π_b)ψ` for all 36 pairs, unnormalized, in table order.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasuredVectors {
    vectors: Vec<StateVector>,
}

impl MeasuredVectors {
    pub fn get(&self, a: Setting, b: Setting) -> &StateVector {
        &self.vectors[slot(a, b)]
    }

    pub fn iter(&self) -> impl Iterator<Item = ((Setting, Setting), &StateVector)> {
        table_order().zip(self.vectors.iter())
    }

    pub fn as_slice(&self) -> &[StateVector] {
        &self.vectors
    }

    /// The four vectors of an angle pair, outcomes ordered (0,0),(0,1),(1,0),(1,1).
    pub fn quadruple(&self, pair: AnglePair) -> [&StateVector; 4] {
        pair.settings().map(|(a, b)| self.get(a, b))
    }
}

pub fn measured_vectors(d: &DeviceRealization) -> MeasuredVectors {
    let vectors = table_order().map(|(a, b)| d.apply_a(a, &d.apply_b(b, &d.psi))).collect();
    MeasuredVectors { vectors }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prop1Check {
    pub residual: f64,
    pub worst: Setting,
    pub tolerance: f64,
    pub pass: bool,
}

/// One-sided measurement of `a` already determines the other side's
/// outcome: `Π_a^A ψ`, `Π_a^B ψ` and `Π_a^A Π_a^B ψ` coincide.
pub fn check_prop1(d: &DeviceRealization, tol: f64) -> Prop1Check {
    let mut residual = 0.0f64;
    let mut worst = Setting::ALL[0];
    for a in Setting::ALL {
        let on_a = d.apply_a(a, &d.psi);
        let on_b = d.apply_b(a, &d.psi);
        let ab = d.apply_a(a, &on_b);
        let ba = d.apply_b(a, &on_a);
        let vs = [&ab, &ba, &on_a, &on_b];
        for i in 0..vs.len() {
            for j in i + 1..vs.len() {
                let r = vs[i].distance(vs[j]);
                if r > residual {
                    residual = r;
                    worst = a;
                }
            }
        }
    }
    Prop1Check { residual, worst, tolerance: tol, pass: residual <= tol }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prop2Check {
    /// Worst `|⟨v_i, v_j⟩|` within one mixed-angle quadruple.
    pub orthogonality: f64,
    /// Worst `|‖v‖² − p(a,b)|`.
    pub length: f64,
    pub residual: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Each mixed-angle quadruple is orthogonal with the ideal squared lengths.
pub fn check_prop2(d: &DeviceRealization, tol: f64) -> Prop2Check {
    prop2_from_vectors(&measured_vectors(d), tol)
}

pub(super) fn prop2_from_vectors(v: &MeasuredVectors, tol: f64) -> Prop2Check {
    let mut orthogonality = 0.0f64;
    let mut length = 0.0f64;
    for pair in AnglePair::mixed() {
        let settings = pair.settings();
        let quad = v.quadruple(pair);
        for i in 0..4 {
            let (a, b) = settings[i];
            length = length.max((quad[i].norm_sqr() - ideal_probability(a, b)).abs());
            for j in i + 1..4 {
                orthogonality = orthogonality.max(quad[i].inner(quad[j]).norm());
            }
        }
    }
    let residual = orthogonality.max(length);
    Prop2Check { orthogonality, length, residual, tolerance: tol, pass: residual <= tol }
}

/// Observed and ideal squared length of one d-vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DLength {
    pub beta: Angle,
    pub z: u8,
    pub observed: f64,
    pub ideal: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prop3Check {
    pub d_lengths: Vec<DLength>,
    /// Worst `|‖d‖² − ‖d_ideal‖²|`.
    pub d_length: f64,
    /// Worst reconstruction residual of one quadruple from another through
    /// the ideal transfer coefficients.
    pub transfer: f64,
    pub residual: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// The ideal change of coordinates between any two mixed-angle quadruples
/// also holds for the device vectors.
pub fn check_prop3(d: &DeviceRealization, tol: f64) -> Prop3Check {
    prop3_from_vectors(d, &measured_vectors(d), tol)
}

/// `(Π_{(α,0)} − Π_{(γ,0)}) Π_{(β,z)} ψ` on side A for the cyclic `(α, γ, β)`.
fn d_vector(d: &DeviceRealization, beta: Angle, z: u8) -> StateVector {
    let (alpha, gamma) = beta.cyclic_partners();
    let post = d.apply_b(Setting::new(beta, z), &d.psi);
    d.apply_a(Setting::new(alpha, 0), &post).sub(&d.apply_a(Setting::new(gamma, 0), &post))
}

pub(super) fn prop3_from_vectors(d: &DeviceRealization, v: &MeasuredVectors, tol: f64) -> Prop3Check {
    let mut d_lengths = Vec::with_capacity(6);
    for beta in Angle::ALL {
        let (i0, i1) = ideal_d_lengths(beta);
        for (z, ideal) in [(0u8, i0), (1, i1)] {
            d_lengths.push(DLength { beta, z, observed: d_vector(d, beta, z).norm_sqr(), ideal });
        }
    }
    let d_length = d_lengths.iter().map(|l| (l.observed - l.ideal).abs()).fold(0.0, f64::max);

    let mut transfer = 0.0f64;
    for from in AnglePair::mixed() {
        for to in AnglePair::mixed() {
            if from == to {
                continue;
            }
            let t = ideal_transfer_matrix(from, to).expect("mixed pairs");
            let src = v.quadruple(from);
            let dst = v.quadruple(to);
            for (k, f) in src.iter().enumerate() {
                let rebuilt = dst
                    .iter()
                    .enumerate()
                    .fold(StateVector::zeros(f.dim()), |acc, (r, w)| acc.add(&w.scale(t.entries[(r, k)])));
                transfer = transfer.max(rebuilt.distance(f));
            }
        }
    }
    let residual = d_length.max(transfer);
    Prop3Check { d_lengths, d_length, transfer, residual, tolerance: tol, pass: residual <= tol }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropositionReport {
    pub prop1: Prop1Check,
    pub prop2: Prop2Check,
    pub prop3: Prop3Check,
}

impl PropositionReport {
    pub fn pass(&self) -> bool {
        self.prop1.pass && self.prop2.pass && self.prop3.pass
    }
}
