//! Joint outcome probabilities of a device and their comparison with the
//! ideal table.

use serde::{Deserialize, Serialize};

use crate::device::{validate_device, DeviceRealization};
use crate::error::{Error, Result};
use crate::ideal::{ideal_probability, Angle, Setting};

/// Default gate tolerance on `max |p̃(a,b) − p(a,b)|`.
pub const DEFAULT_GATE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "id", rename_all = "snake_case")]
pub enum TableProvenance {
    Ideal,
    Device(String),
}

/// The 36 probabilities `p(a, b)`, indexed by `(angle_a, angle_b, x, y)` in
/// canonical angle order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityTable {
    entries: Vec<f64>,
    pub provenance: TableProvenance,
}

pub(crate) fn slot(a: Setting, b: Setting) -> usize {
    ((a.angle.index() * 3 + b.angle.index()) * 2 + a.outcome as usize) * 2 + b.outcome as usize
}

/// All 36 `(a, b)` pairs in table order.
pub fn table_order() -> impl Iterator<Item = (Setting, Setting)> {
    Angle::ALL.into_iter().flat_map(|aa| {
        Angle::ALL.into_iter().flat_map(move |ab| {
            [(0u8, 0u8), (0, 1), (1, 0), (1, 1)]
                .into_iter()
                .map(move |(x, y)| (Setting::new(aa, x), Setting::new(ab, y)))
        })
    })
}

impl ProbabilityTable {
    pub fn from_fn(provenance: TableProvenance, mut f: impl FnMut(Setting, Setting) -> f64) -> Self {
        let entries = table_order().map(|(a, b)| f(a, b)).collect();
        ProbabilityTable { entries, provenance }
    }

    /// Builds a table from raw values in table order.
    pub fn from_values(provenance: TableProvenance, values: Vec<f64>) -> Result<Self> {
        if values.len() != 36 {
            return Err(Error::Dimension(format!("a probability table has 36 entries, got {}", values.len())));
        }
        Ok(ProbabilityTable { entries: values, provenance })
    }

    pub fn ideal() -> Self {
        Self::from_fn(TableProvenance::Ideal, ideal_probability)
    }

    pub fn get(&self, a: Setting, b: Setting) -> f64 {
        self.entries[slot(a, b)]
    }

    pub fn set(&mut self, a: Setting, b: Setting, p: f64) {
        self.entries[slot(a, b)] = p;
    }

    pub fn values(&self) -> &[f64] {
        &self.entries
    }

    /// Worst `|Σ_{x,y} p − 1|` over the nine angle pairs.
    pub fn normalization_defect(&self) -> f64 {
        self.entries.chunks(4).map(|c| (c.iter().sum::<f64>() - 1.0).abs()).fold(0.0, f64::max)
    }
}

/// `‖(Π_a ⊗ Π_b)ψ‖²` without validating the device.
pub(crate) fn joint_probability_unchecked(d: &DeviceRealization, a: Setting, b: Setting) -> f64 {
    d.apply_a(a, &d.apply_b(b, &d.psi)).norm_sqr()
}

fn ensure_valid(d: &DeviceRealization) -> Result<()> {
    let violations = validate_device(d);
    if violations.is_empty() {
        Ok(())
    } else {
        Err(Error::Validation(violations.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; ")))
    }
}

/// `p̃(a, b) = ‖(Π_a ⊗ I)(I ⊗ Π_b)ψ‖²`.
pub fn joint_probability(d: &DeviceRealization, a: Setting, b: Setting) -> Result<f64> {
    ensure_valid(d)?;
    Ok(joint_probability_unchecked(d, a, b))
}

pub fn probability_table(d: &DeviceRealization) -> Result<ProbabilityTable> {
    ensure_valid(d)?;
    let id = d.provenance.as_ref().map_or_else(|| "device".to_string(), |p| p.generator.clone());
    Ok(ProbabilityTable::from_fn(TableProvenance::Device(id), |a, b| joint_probability_unchecked(d, a, b)))
}

/// Entry-by-entry comparison of a device table with a reference table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationReport {
    pub max_abs_deviation: f64,
    pub worst_entry: (Setting, Setting),
    /// `real − ideal` in table order.
    pub per_entry: Vec<f64>,
    pub tolerance: f64,
    pub pass: bool,
}

pub fn compare_tables(real: &ProbabilityTable, ideal: &ProbabilityTable, tol: f64) -> DeviationReport {
    let per_entry: Vec<f64> = real.values().iter().zip(ideal.values()).map(|(r, i)| r - i).collect();
    let (worst_idx, max_abs_deviation) = per_entry
        .iter()
        .enumerate()
        .map(|(k, d)| (k, d.abs()))
        .fold((0, 0.0f64), |best, cur| if cur.1 > best.1 { cur } else { best });
    let worst_entry = table_order().nth(worst_idx).expect("36 entries");
    DeviationReport { max_abs_deviation, worst_entry, per_entry, tolerance: tol, pass: max_abs_deviation <= tol }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoSignalling {
    pub ok: bool,
    pub max_violation: f64,
}

/// Checks that each side's outcome marginals do not depend on the other
/// side's angle.
pub fn no_signalling_check(t: &ProbabilityTable, tol: f64) -> NoSignalling {
    let mut worst = 0.0f64;
    for own in Angle::ALL {
        for x in 0..2u8 {
            let s = Setting::new(own, x);
            let marg_a: Vec<f64> =
                Angle::ALL.iter().map(|&other| (0..2).map(|y| t.get(s, Setting::new(other, y))).sum()).collect();
            let marg_b: Vec<f64> =
                Angle::ALL.iter().map(|&other| (0..2).map(|y| t.get(Setting::new(other, y), s)).sum()).collect();
            for m in [marg_a, marg_b] {
                let hi = m.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let lo = m.iter().copied().fold(f64::INFINITY, f64::min);
                worst = worst.max(hi - lo);
            }
        }
    }
    NoSignalling { ok: worst <= tol, max_violation: worst }
}
