//! Device files and self-test reports.
//!
//! Complex numbers are `[re, im]` pairs. Floats are written in the shortest
//! decimal form that parses back to the same `f64`, so a parse → write →
//! parse cycle is the identity on every payload.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::device::{validate_device, DeviceRealization, ProjectorFamily, Provenance, Violation, DEFAULT_MAX_SIDE_DIM};
use crate::engine::{
    bb84_collapse_check, CertificateResiduals, CollapseSummary, Diagnostics, ExtractionChecks, IsomorphismSummary,
    PropositionReport, Refusal, SelfTestCertificate, Stage, Tolerances,
};
use crate::ideal::{ideal_probability, Angle, Setting};
use crate::stats::{table_order, DeviationReport};
use crate::tensor::{c, BipartiteShape, ComplexMatrix, StateVector, C64};

pub const DEVICE_SCHEMA_VERSION: u32 = 1;
pub const REPORT_SCHEMA_VERSION: u32 = 1;
pub const TOOL_NAME: &str = "selftest";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Failure to turn a file into a valid device. All variants are input
/// errors.
#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },

    #[error("{path}: {source}")]
    Write { path: PathBuf, source: std::io::Error },

    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),

    #[error("unsupported schema version {found} (supported: {supported})")]
    Schema { found: u32, supported: u32 },

    #[error("{0}")]
    Shape(String),

    #[error("device dimension {what} = {value} exceeds the cap of {limit}")]
    TooLarge { what: &'static str, value: usize, limit: usize },

    #[error("invalid device: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Violation>),
}

type Complex = [f64; 2];
type Matrix = Vec<Vec<Complex>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilyFile {
    pub minus: [Matrix; 2],
    pub zero: [Matrix; 2],
    pub plus: [Matrix; 2],
}

/// On-disk form of a [`DeviceRealization`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceFile {
    pub schema_version: u32,
    pub dim_a: usize,
    pub dim_b: usize,
    /// Slow-A order: index `i_a · dim_b + i_b`.
    pub psi: Vec<Complex>,
    pub fam_a: FamilyFile,
    pub fam_b: FamilyFile,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
}

fn pair(z: C64) -> Complex {
    [z.re, z.im]
}

fn matrix_to_file(m: &ComplexMatrix) -> Matrix {
    (0..m.rows()).map(|i| m.row(i).iter().map(|&z| pair(z)).collect()).collect()
}

fn family_to_file(f: &ProjectorFamily) -> FamilyFile {
    let get = |a: Angle| [0u8, 1].map(|x| matrix_to_file(f.get(Setting::new(a, x))));
    FamilyFile { minus: get(Angle::Minus), zero: get(Angle::Zero), plus: get(Angle::Plus) }
}

impl DeviceFile {
    pub fn from_device(d: &DeviceRealization) -> Self {
        DeviceFile {
            schema_version: DEVICE_SCHEMA_VERSION,
            dim_a: d.shape.dim_a,
            dim_b: d.shape.dim_b,
            psi: d.psi.amplitudes().iter().map(|&z| pair(z)).collect(),
            fam_a: family_to_file(&d.fam_a),
            fam_b: family_to_file(&d.fam_b),
            provenance: d.provenance.clone(),
        }
    }

    /// Checks the schema and the shapes, then builds the device. The
    /// numerical invariants are not checked here.
    pub fn to_device(&self, max_side_dim: usize) -> Result<DeviceRealization, IoError> {
        if self.schema_version != DEVICE_SCHEMA_VERSION {
            return Err(IoError::Schema { found: self.schema_version, supported: DEVICE_SCHEMA_VERSION });
        }
        for (what, value) in [("dim_a", self.dim_a), ("dim_b", self.dim_b)] {
            if value == 0 {
                return Err(IoError::Shape(format!("{what} must be at least 1")));
            }
            if value > max_side_dim {
                return Err(IoError::TooLarge { what, value, limit: max_side_dim });
            }
        }
        let shape = BipartiteShape::new(self.dim_a, self.dim_b).map_err(|e| IoError::Shape(e.to_string()))?;
        if self.psi.len() != shape.joint_dim() {
            return Err(IoError::Shape(format!(
                "psi has {} amplitudes, expected {} = {} x {}",
                self.psi.len(),
                shape.joint_dim(),
                self.dim_a,
                self.dim_b
            )));
        }
        let amps: Vec<C64> = self.psi.iter().map(|&[r, i]| c(r, i)).collect();
        // an off-norm state is kept and reported by validation
        let psi = StateVector::normalized(amps.clone()).unwrap_or_else(|_| StateVector::new(amps));
        let fam_a = family_from_file(&self.fam_a, self.dim_a, "fam_a")?;
        let fam_b = family_from_file(&self.fam_b, self.dim_b, "fam_b")?;
        DeviceRealization::new(shape, psi, fam_a, fam_b, self.provenance.clone())
            .map_err(|e| IoError::Shape(e.to_string()))
    }
}

fn matrix_from_file(m: &Matrix, n: usize, label: &str) -> Result<ComplexMatrix, IoError> {
    if m.len() != n || m.iter().any(|row| row.len() != n) {
        return Err(IoError::Shape(format!("{label} is not {n}x{n}")));
    }
    let data = m.iter().flatten().map(|&[r, i]| c(r, i)).collect();
    ComplexMatrix::new(n, n, data).map_err(|e| IoError::Shape(e.to_string()))
}

fn family_from_file(f: &FamilyFile, n: usize, name: &str) -> Result<ProjectorFamily, IoError> {
    let mut pairs = Vec::with_capacity(3);
    for (angle, mats) in [(Angle::Minus, &f.minus), (Angle::Zero, &f.zero), (Angle::Plus, &f.plus)] {
        let p0 = matrix_from_file(&mats[0], n, &format!("{name}.{}[0]", angle.tag()))?;
        let p1 = matrix_from_file(&mats[1], n, &format!("{name}.{}[1]", angle.tag()))?;
        pairs.push([p0, p1]);
    }
    ProjectorFamily::new(n, pairs.try_into().expect("three angles")).map_err(|e| IoError::Shape(e.to_string()))
}

pub fn device_to_json(d: &DeviceRealization) -> String {
    serde_json::to_string_pretty(&DeviceFile::from_device(d)).expect("finite payload serializes")
}

/// Parses and validates a device; every broken invariant is reported.
pub fn device_from_json(text: &str, max_side_dim: usize) -> Result<DeviceRealization, IoError> {
    let file: DeviceFile = serde_json::from_str(text)?;
    let d = file.to_device(max_side_dim)?;
    let violations = validate_device(&d);
    if !violations.is_empty() {
        return Err(IoError::Invalid(violations));
    }
    Ok(d)
}

pub fn parse_device(path: &Path) -> Result<DeviceRealization, IoError> {
    parse_device_with_cap(path, DEFAULT_MAX_SIDE_DIM)
}

pub fn parse_device_with_cap(path: &Path, max_side_dim: usize) -> Result<DeviceRealization, IoError> {
    let text = fs::read_to_string(path).map_err(|source| IoError::Read { path: path.to_path_buf(), source })?;
    device_from_json(&text, max_side_dim)
}

pub fn write_device(d: &DeviceRealization, path: &Path) -> Result<(), IoError> {
    let mut text = device_to_json(d);
    text.push('\n');
    fs::write(path, text).map_err(|source| IoError::Write { path: path.to_path_buf(), source })
}

/// One entry of the gate section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateEntry {
    pub a: Setting,
    pub b: Setting,
    pub device: f64,
    pub ideal: f64,
    pub deviation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateSection {
    pub max_abs_deviation: f64,
    pub worst_entry: (Setting, Setting),
    pub tolerance: f64,
    pub pass: bool,
    pub entries: Vec<GateEntry>,
}

impl GateSection {
    pub fn from_report(r: &DeviationReport) -> Self {
        let entries = table_order()
            .zip(&r.per_entry)
            .map(|((a, b), &dev)| {
                let ideal = ideal_probability(a, b);
                GateEntry { a, b, device: ideal + dev, ideal, deviation: dev }
            })
            .collect();
        GateSection {
            max_abs_deviation: r.max_abs_deviation,
            worst_entry: r.worst_entry,
            tolerance: r.tolerance,
            pass: r.pass,
            entries,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateSection {
    pub residuals: CertificateResiduals,
    pub checks: ExtractionChecks,
    pub dim_e_a: usize,
    pub dim_e_b: usize,
    pub collapse: Vec<CollapseSummary>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Certified,
    Refused,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub status: Status,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage: Option<Stage>,
    pub message: String,
}

/// Machine-readable result of one self-test run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub schema_version: u32,
    pub tool: String,
    pub tool_version: String,
    /// RFC 3339; the only field that differs between identical runs.
    pub timestamp: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
    pub dim_a: usize,
    pub dim_b: usize,
    pub tolerances: Tolerances,
    pub verdict: Verdict,
    pub gate: Option<GateSection>,
    pub span_rank: Option<usize>,
    pub propositions: Option<PropositionReport>,
    pub isomorphism: Option<IsomorphismSummary>,
    pub certificate: Option<CertificateSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<Diagnostics>,
}

pub fn now_rfc3339() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

/// Collects a run's outcome into a report.
pub fn build_report(
    d: &DeviceRealization,
    input: Option<&str>,
    tol: &Tolerances,
    outcome: &Result<SelfTestCertificate, Refusal>,
    timestamp: String,
) -> ReportFile {
    let mut report = ReportFile {
        schema_version: REPORT_SCHEMA_VERSION,
        tool: TOOL_NAME.into(),
        tool_version: TOOL_VERSION.into(),
        timestamp,
        input: input.map(str::to_string),
        provenance: d.provenance.clone(),
        dim_a: d.shape.dim_a,
        dim_b: d.shape.dim_b,
        tolerances: *tol,
        verdict: Verdict { status: Status::Certified, stage: None, message: String::new() },
        gate: None,
        span_rank: None,
        propositions: None,
        isomorphism: None,
        certificate: None,
        diagnostics: None,
    };
    match outcome {
        Ok(cert) => {
            report.verdict.message = "certified: the device is the ideal Bell pair up to local isometries".into();
            report.gate = Some(GateSection::from_report(&cert.gate));
            report.span_rank = Some(cert.isomorphism.span.dim);
            report.propositions = cert.propositions.clone();
            report.isomorphism = Some(cert.isomorphism.summary());
            let collapse = [Angle::Minus, Angle::Plus]
                .into_iter()
                .flat_map(|alpha| [0u8, 1].map(move |x| (alpha, x)))
                .filter_map(|(alpha, x)| bb84_collapse_check(d, cert, alpha, x, tol.certification).ok())
                .map(|c| c.summary())
                .collect();
            report.certificate = Some(CertificateSection {
                residuals: cert.residuals,
                checks: cert.checks,
                dim_e_a: cert.dim_e_a,
                dim_e_b: cert.dim_e_b,
                collapse,
            });
        }
        Err(refusal) => {
            report.verdict =
                Verdict { status: Status::Refused, stage: Some(refusal.stage), message: refusal.to_string() };
            report.gate = refusal.record.gate.as_ref().map(GateSection::from_report);
            report.span_rank = refusal.record.span_rank;
            report.propositions = refusal.record.propositions.clone();
            report.isomorphism = refusal.record.isomorphism;
            report.diagnostics = Some(refusal.diagnostics.clone());
        }
    }
    report
}

impl ReportFile {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, IoError> {
        Ok(serde_json::from_str(text)?)
    }

    /// JSON with the timestamp blanked, for byte comparisons between runs.
    pub fn to_json_without_timestamp(&self) -> String {
        let mut copy = self.clone();
        copy.timestamp = String::new();
        copy.to_json()
    }

    /// Whether the verdict agrees with the recorded residuals and
    /// tolerances.
    pub fn is_consistent(&self) -> bool {
        let t = &self.tolerances;
        let gate_ok = self.gate.as_ref().map(|g| g.max_abs_deviation <= t.gate);
        match (self.verdict.status, self.verdict.stage) {
            (Status::Certified, None) => {
                let Some(cert) = &self.certificate else { return false };
                let r = &cert.residuals;
                gate_ok == Some(true)
                    && self.span_rank == Some(4)
                    && self.propositions.as_ref().is_some_and(|p| p.pass())
                    && self.isomorphism.is_some_and(|i| {
                        i.residual_a1 <= t.isomorphism && i.residual_a2 <= t.isomorphism && i.unitarity <= t.isomorphism
                    })
                    && r.cond1 <= t.certification
                    && r.cond2 <= t.certification
                    && r.cond3 <= t.certification
            }
            (Status::Refused, Some(Stage::Validation)) => self.gate.is_none(),
            (Status::Refused, Some(Stage::Stats)) => gate_ok == Some(false),
            (Status::Refused, Some(Stage::Span)) => gate_ok == Some(true) && self.span_rank.is_some(),
            (Status::Refused, Some(Stage::Propositions)) => {
                gate_ok == Some(true) && self.propositions.as_ref().is_some_and(|p| !p.pass())
            }
            (Status::Refused, Some(_)) => gate_ok == Some(true) && self.certificate.is_none(),
            _ => false,
        }
    }
}

fn fmt_setting(s: Setting) -> String {
    format!("{}/{}", s.angle.tag(), s.outcome)
}

/// Human-readable rendering of a report.
pub fn render_text(r: &ReportFile) -> String {
    let mut out = String::new();
    let verdict = match (r.verdict.status, r.verdict.stage) {
        (Status::Certified, _) => "CERTIFIED".to_string(),
        (Status::Refused, Some(stage)) => format!("REFUSED ({stage})"),
        (Status::Refused, None) => "REFUSED".to_string(),
    };
    let _ = writeln!(out, "{} {} self-test report", r.tool, r.tool_version);
    if let Some(input) = &r.input {
        let _ = writeln!(out, "input:        {input}");
    }
    if let Some(p) = &r.provenance {
        let seed = p.seed.map_or_else(String::new, |s| format!(" seed {s}"));
        let _ = writeln!(out, "provenance:   {}{seed}", p.generator);
    }
    let _ = writeln!(out, "dimensions:   {} x {}", r.dim_a, r.dim_b);
    let _ = writeln!(out, "verdict:      {verdict}");
    let _ = writeln!(out, "              {}", r.verdict.message);
    let t = &r.tolerances;
    let _ = writeln!(
        out,
        "tolerances:   gate {:.1e}, propositions {:.1e}, isomorphism {:.1e}, certification {:.1e}",
        t.gate, t.propositions, t.isomorphism, t.certification
    );
    if let Some(g) = &r.gate {
        let _ = writeln!(
            out,
            "gate:         max |p - p_ideal| = {:.3e} at ({}, {})",
            g.max_abs_deviation,
            fmt_setting(g.worst_entry.0),
            fmt_setting(g.worst_entry.1)
        );
    }
    if let Some(rank) = r.span_rank {
        let _ = writeln!(out, "span rank:    {rank}");
    }
    if let Some(p) = &r.propositions {
        let _ = writeln!(
            out,
            "propositions: prop1 {:.3e}, prop2 {:.3e}, prop3 {:.3e} (d-lengths {:.3e}, transfer {:.3e})",
            p.prop1.residual, p.prop2.residual, p.prop3.residual, p.prop3.d_length, p.prop3.transfer
        );
    }
    if let Some(i) = &r.isomorphism {
        let _ = writeln!(
            out,
            "isomorphism:  anchor {}, A1 {:.3e}, A2 {:.3e}, U†U-I {:.3e}",
            i.anchor, i.residual_a1, i.residual_a2, i.unitarity
        );
    }
    if let Some(c) = &r.certificate {
        let res = &c.residuals;
        let _ =
            writeln!(out, "certificate:  cond1 {:.3e}, cond2 {:.3e}, cond3 {:.3e}", res.cond1, res.cond2, res.cond3);
        let _ = writeln!(out, "garbage:      dim E_A = {}, dim E_B = {}", c.dim_e_a, c.dim_e_b);
        let k = &c.checks;
        let _ = writeln!(
            out,
            "isometries:   A {:.3e}, B {:.3e}; swap identity A {:.3e}, B {:.3e}",
            k.isometry_a, k.isometry_b, k.swap_identity_a, k.swap_identity_b
        );
        for col in &c.collapse {
            let _ = writeln!(out, "collapse:     {} infidelity {:.3e}", fmt_setting(col.setting), col.infidelity);
        }
    }
    if let Some(Diagnostics::InvalidDevice { violations }) = &r.diagnostics {
        for v in violations {
            let _ = writeln!(out, "violation:    {v}");
        }
    }
    out
}

/// The probability table of a device next to the ideal one.
pub fn render_table(gate: &GateSection) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:<10} {:<10} {:>22} {:>22} {:>12}", "a", "b", "device", "ideal", "deviation");
    for e in &gate.entries {
        let mark = if (e.a, e.b) == gate.worst_entry { "  <- worst" } else { "" };
        let _ = writeln!(
            out,
            "{:<10} {:<10} {:>22.17} {:>22.17} {:>12.3e}{mark}",
            fmt_setting(e.a),
            fmt_setting(e.b),
            e.device,
            e.ideal,
            e.deviation
        );
    }
    let _ = writeln!(out, "max |deviation| = {:.3e}", gate.max_abs_deviation);
    out
}
