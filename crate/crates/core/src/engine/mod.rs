//! The self-test pipeline.
//!
//! A device is first checked against the ideal statistics. If it passes,
//! the 36 post-measurement vectors are shown to span a four-dimensional
//! space carrying the ideal geometry, an inner-product isomorphism onto the
//! two-qubit space is built, and the local isometries are extracted with
//! the device's own measurement operators. The certificate records the
//! residuals of the three conclusions: each side's measurements become the
//! ideal ones tensored with the identity, and the state becomes
//! `Φ⁺ ⊗ Ψ_E`.

#![allow(clippy::result_large_err)]

mod collapse;
mod extraction;
mod isomorphism;
mod propositions;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use collapse::{bb84_collapse_check, CollapseCheck, CollapseSummary};
pub use extraction::{
    extended_not, extract_certificate, ideal_two_cnot, pullback_residual, swap_identity_residual, swap_operator,
    CertificateResiduals, ExtractionChecks, SelfTestCertificate,
};
pub use isomorphism::{build_inner_isomorphism, build_span_basis, isomorphism_agreement, InnerIsomorphism, SpanBasis};
pub use propositions::{
    check_prop1, check_prop2, check_prop3, measured_vectors, DLength, MeasuredVectors, Prop1Check, Prop2Check,
    Prop3Check, PropositionReport,
};

use crate::device::{validate_device, DeviceRealization, Violation};
use crate::ideal::{Angle, AnglePair};
use crate::stats::{compare_tables, joint_probability_unchecked, DeviationReport, ProbabilityTable, TableProvenance};

/// Numerical thresholds of the pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Bound on `max |p̃(a,b) − p(a,b)|`.
    pub gate: f64,
    /// Bound on the proposition residuals.
    pub propositions: f64,
    /// Bound on the A1/A2 residuals and on `U†U − I`.
    pub isomorphism: f64,
    /// Bound on the isometry defects and on the three certified conditions.
    pub certification: f64,
    /// Relative singular-value threshold deciding the rank of the span.
    pub span_rank: f64,
    /// Relative eigenvalue threshold for reduced-state supports.
    pub support: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            gate: 1e-9,
            propositions: 1e-9,
            isomorphism: 1e-9,
            certification: 1e-8,
            span_rank: 1e-8,
            support: crate::tensor::DEFAULT_THRESHOLD,
        }
    }
}

/// The pipeline stage at which a device was refused.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Validation,
    Stats,
    Span,
    Propositions,
    Isomorphism,
    Extraction,
    Verification,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Validation => "validation",
            Stage::Stats => "stats",
            Stage::Span => "span",
            Stage::Propositions => "propositions",
            Stage::Isomorphism => "isomorphism",
            Stage::Extraction => "extraction",
            Stage::Verification => "verification",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// What the failing stage measured.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Diagnostics {
    InvalidDevice {
        violations: Vec<Violation>,
    },
    Gate {
        report: DeviationReport,
    },
    Span {
        rank: usize,
        reconstruction: f64,
        message: String,
    },
    Propositions {
        report: PropositionReport,
    },
    Isomorphism {
        anchor: AnglePair,
        #[serde(deserialize_with = "crate::serde_nan::f64_or_nan")]
        residual_a1: f64,
        #[serde(deserialize_with = "crate::serde_nan::f64_or_nan")]
        residual_a2: f64,
        #[serde(deserialize_with = "crate::serde_nan::f64_or_nan")]
        unitarity: f64,
        message: String,
    },
    Extraction {
        message: String,
        checks: Option<ExtractionChecks>,
    },
    Verification {
        residuals: CertificateResiduals,
        failed: Vec<String>,
    },
}

/// Quantities measured before the pipeline stopped.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub gate: Option<DeviationReport>,
    pub span_rank: Option<usize>,
    pub propositions: Option<PropositionReport>,
    pub isomorphism: Option<IsomorphismSummary>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IsomorphismSummary {
    pub anchor: AnglePair,
    pub residual_a1: f64,
    pub residual_a2: f64,
    pub unitarity: f64,
}

/// A negative verdict: the first failing stage and its diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Refusal {
    pub stage: Stage,
    pub diagnostics: Diagnostics,
    pub record: StageRecord,
}

impl Refusal {
    pub fn new(stage: Stage, diagnostics: Diagnostics) -> Self {
        Refusal { stage, diagnostics, record: StageRecord::default() }
    }

    fn with_record(mut self, record: &StageRecord) -> Self {
        self.record = record.clone();
        self
    }
}

impl fmt::Display for Refusal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "refused at {} stage: ", self.stage)?;
        match &self.diagnostics {
            Diagnostics::InvalidDevice { violations } => write!(f, "{} invariant violation(s)", violations.len()),
            Diagnostics::Gate { report } => write!(
                f,
                "max deviation {:.3e} at ({}, {}) exceeds {:.1e}",
                report.max_abs_deviation, report.worst_entry.0, report.worst_entry.1, report.tolerance
            ),
            Diagnostics::Span { message, .. }
            | Diagnostics::Isomorphism { message, .. }
            | Diagnostics::Extraction { message, .. } => f.write_str(message),
            Diagnostics::Propositions { report } => write!(
                f,
                "proposition residuals {:.3e} / {:.3e} / {:.3e} exceed {:.1e}",
                report.prop1.residual, report.prop2.residual, report.prop3.residual, report.prop1.tolerance
            ),
            Diagnostics::Verification { failed, .. } => write!(f, "{} not within tolerance", failed.join(", ")),
        }
    }
}

/// Default anchor of the inner isomorphism.
pub const DEFAULT_ANCHOR: AnglePair = AnglePair { a: Angle::Zero, b: Angle::Plus };

/// Runs the whole pipeline with the default anchor.
pub fn self_test(d: &DeviceRealization, tol: &Tolerances) -> Result<SelfTestCertificate, Refusal> {
    self_test_with_anchor(d, tol, DEFAULT_ANCHOR)
}

pub fn self_test_with_anchor(
    d: &DeviceRealization,
    tol: &Tolerances,
    anchor: AnglePair,
) -> Result<SelfTestCertificate, Refusal> {
    let mut record = StageRecord::default();

    let violations = validate_device(d);
    if !violations.is_empty() {
        return Err(Refusal::new(Stage::Validation, Diagnostics::InvalidDevice { violations }));
    }

    let table = device_table(d);
    let gate = compare_tables(&table, &ProbabilityTable::ideal(), tol.gate);
    record.gate = Some(gate.clone());
    if !gate.pass {
        return Err(Refusal::new(Stage::Stats, Diagnostics::Gate { report: gate }).with_record(&record));
    }

    let vectors = measured_vectors(d);
    let span = build_span_basis(&vectors, anchor, tol.span_rank);
    record.span_rank = Some(span.dim);
    if span.dim != 4 || span.reconstruction > tol.gate {
        let message = format!(
            "span of the 36 post-measurement vectors has rank {} (reconstruction residual {:.3e}); rank 4 is required",
            span.dim, span.reconstruction
        );
        return Err(Refusal::new(
            Stage::Span,
            Diagnostics::Span { rank: span.dim, reconstruction: span.reconstruction, message },
        )
        .with_record(&record));
    }

    let props = PropositionReport {
        prop1: check_prop1(d, tol.propositions),
        prop2: propositions::prop2_from_vectors(&vectors, tol.propositions),
        prop3: propositions::prop3_from_vectors(d, &vectors, tol.propositions),
    };
    record.propositions = Some(props.clone());
    if !props.pass() {
        return Err(Refusal::new(Stage::Propositions, Diagnostics::Propositions { report: props }).with_record(&record));
    }

    let iso =
        isomorphism::isomorphism_from_span(d, &vectors, span, tol.isomorphism).map_err(|r| r.with_record(&record))?;
    record.isomorphism = Some(iso.summary());

    let mut cert = extract_certificate(d, &iso, tol).map_err(|r| r.with_record(&record))?;
    cert.propositions = Some(props);
    Ok(cert)
}

/// Probability table of a device that has already been validated.
fn device_table(d: &DeviceRealization) -> ProbabilityTable {
    let id = d.provenance.as_ref().map_or_else(|| "device".to_string(), |p| p.generator.clone());
    ProbabilityTable::from_fn(TableProvenance::Device(id), |a, b| joint_probability_unchecked(d, a, b))
}
