//! After side A measures in one of the two key bases, the extracted state
//! is the ideal collapsed pair times the same garbage state.

use serde::{Deserialize, Serialize};

use super::SelfTestCertificate;
use crate::device::DeviceRealization;
use crate::error::{Error, Result};
use crate::ideal::{ideal_basis_state, Angle, Setting};
use crate::tensor::{StateVector, ZERO};

#[derive(Debug, Clone, PartialEq)]
pub struct CollapseCheck {
    pub setting: Setting,
    /// `1 − |⟨θθ ⊗ Ψ_E, ψ_out⟩|²`
    pub infidelity: f64,
    /// `(⟨θθ| ⊗ I)ψ_out`, the garbage state left after the collapse.
    pub garbage: StateVector,
    pub pass: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollapseSummary {
    pub setting: Setting,
    pub infidelity: f64,
    pub pass: bool,
}

impl CollapseCheck {
    pub fn summary(&self) -> CollapseSummary {
        CollapseSummary { setting: self.setting, infidelity: self.infidelity, pass: self.pass }
    }
}

pub fn bb84_collapse_check(
    d: &DeviceRealization,
    cert: &SelfTestCertificate,
    alpha: Angle,
    x: u8,
    tol: f64,
) -> Result<CollapseCheck> {
    if alpha == Angle::Zero {
        return Err(Error::Domain("key bases are the minus and plus angles".into()));
    }
    if x > 1 {
        return Err(Error::Domain(format!("outcome must be 0 or 1, got {x}")));
    }
    let setting = Setting::new(alpha, x);
    let post = d.apply_a(setting, &d.psi);
    if post.norm_sqr() <= 1e-24 {
        return Err(Error::Domain(format!("outcome {setting} has probability zero")));
    }
    let post = post.to_normalized()?;
    let out = cert.extract(&post)?;

    let theta = ideal_basis_state(setting);
    let pair = theta.tensor(&theta);
    let n = cert.garbage_state.dim();
    let mut garbage = vec![ZERO; n];
    for (k, p) in pair.amplitudes().iter().enumerate() {
        for (g, o) in garbage.iter_mut().zip(&out.amplitudes()[k * n..(k + 1) * n]) {
            *g += p.conj() * o;
        }
    }
    let garbage = StateVector::new(garbage);
    let target = pair.tensor(&cert.garbage_state);
    let infidelity = (1.0 - target.inner(&out).norm_sqr()).max(0.0);
    Ok(CollapseCheck { setting, infidelity, garbage, pass: infidelity <= tol })
}
