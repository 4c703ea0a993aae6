use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use serde::Serialize;
use tailwalk_core::bounds::{choose_r, lundberg, BoundInputs, BoundTable, LundbergBaseline};
use tailwalk_core::potential::{
    certify_sub, certify_super, geometric_grid, longtail_ratio, sstar_ratio, subexp_ratio,
    CERT_QUAD_TOL,
};
use tailwalk_core::sim::{
    empirical_drift_check, iglehart_residual, lindley_tail, sample_cycles, spill, CycleSummary,
    DriftCheckReport, IglehartCheck, LindleyEstimate, TauStats,
};
use tailwalk_core::{
    CertificateKind, Error as CoreError, IncrementModel, MartingaleCertificate, TailPotential,
};

use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::output::{
    certificate_failure_name, certificate_name, drift_check_name, margins_name, num, opt,
    read_json, write_csv, write_json,
};

pub const LINDLEY_JSON: &str = "lindley.json";
pub const LINDLEY_CSV: &str = "lindley.csv";
pub const TAU_STATS_JSON: &str = "tau_stats.json";
pub const MTAU_CSV: &str = "mtau.csv";
pub const CYCLES_BIN: &str = "cycles.bin";
pub const IGLEHART_CSV: &str = "iglehart.csv";
pub const SIMULATE_SUMMARY: &str = "simulate_summary.json";
pub const BOUNDS_CSV: &str = "bounds.csv";
pub const BOUNDS_PROVENANCE: &str = "bounds_provenance.json";
pub const DIAGNOSE_CSV: &str = "diagnose.csv";

const KINDS: [CertificateKind; 2] = [CertificateKind::Sub, CertificateKind::Super];

/// Record left in place of a certificate that could not be issued.
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct CertificationFailure {
    pub kind: CertificateKind,
    pub epsilon: f64,
    pub t: f64,
    pub margin: f64,
    pub message: String,
}

fn remove_if_present(path: &Path) -> Result<(), CliError> {
    match fs::remove_file(path) {
        Err(e) if e.kind() != std::io::ErrorKind::NotFound => Err(e.into()),
        _ => Ok(()),
    }
}

fn margin_rows(curve: &[tailwalk_core::DriftReport]) -> Vec<Vec<String>> {
    curve
        .iter()
        .map(|r| {
            vec![
                num(r.t),
                num(r.margin),
                num(r.drift_value),
                num(r.potential_value),
            ]
        })
        .collect()
}

const MARGIN_HEADER: [&str; 4] = ["t", "margin", "drift_value", "potential_value"];

// Margin curve over the whole nominal range, written when certification fails.
fn diagnostic_curve(
    model: &IncrementModel,
    kind: CertificateKind,
    epsilon: f64,
    points: usize,
    t_max: f64,
) -> Result<Vec<tailwalk_core::DriftReport>, CliError> {
    let m = model.with_quad_tol(model.quad_tol().min(CERT_QUAD_TOL))?;
    let a = m.tail_moments().a;
    let c = match kind {
        CertificateKind::Sub => a + epsilon,
        CertificateKind::Super => a - epsilon,
    };
    let pot = TailPotential::new(m, c)?;
    let lo = pot.r_c() + 1e-2 * (1.0 + pot.r_c());
    Ok(geometric_grid(lo, t_max.max(2.0 * lo), points)
        .into_iter()
        .filter_map(|t| pot.drift_report(kind, t).ok())
        .collect())
}

pub fn cmd_certify(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    let block = cfg.certify_block()?;
    let model = &cfg.model;
    let mut written = Vec::new();
    let mut failures = Vec::new();
    for &eps in &block.epsilons {
        for kind in KINDS {
            let cert_path = out.join(certificate_name(kind, eps));
            let fail_path = out.join(certificate_failure_name(kind, eps));
            let margin_path = out.join(margins_name(kind, eps));
            let result = match kind {
                CertificateKind::Sub => certify_sub(model, eps, &block.grid),
                CertificateKind::Super => certify_super(model, eps, &block.grid),
            };
            match result {
                Ok(cert) => {
                    remove_if_present(&fail_path)?;
                    written.push(write_json(&cert_path, &cert)?);
                    written.push(write_csv(&margin_path, &MARGIN_HEADER, margin_rows(&cert.curve))?);
                }
                Err(CoreError::CertificationFailed { t, margin }) => {
                    remove_if_present(&cert_path)?;
                    let t_max = block.grid.t_max.unwrap_or(t.max(1e3));
                    let curve = diagnostic_curve(model, kind, eps, block.grid.points, t_max)?;
                    written.push(write_csv(&margin_path, &MARGIN_HEADER, margin_rows(&curve))?);
                    let failure = CertificationFailure {
                        kind,
                        epsilon: eps,
                        t,
                        margin,
                        message: format!("{kind} drift inequality fails at t = {t} (margin {margin:e})"),
                    };
                    written.push(write_json(&fail_path, &failure)?);
                    failures.push(failure.message);
                }
                Err(e) => return Err(e.into()),
            }
        }
    }
    if failures.is_empty() {
        Ok(written)
    } else {
        Err(CliError::Certification(failures.join("; ")))
    }
}

#[derive(Debug, Clone, Serialize)]
struct DriftCheckSummary {
    file: String,
    kind: CertificateKind,
    epsilon: f64,
    states: usize,
    draws: u64,
    violations: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
struct SimulateSummary {
    seed: u64,
    tau_stats: TauStats,
    truncation_fraction: f64,
    wald_within_ci: bool,
    wald_relative: f64,
    iglehart: Vec<IglehartCheck>,
    iglehart_pass: bool,
    drift_checks: Vec<DriftCheckSummary>,
    drift_check_note: Option<String>,
}

/// Certificates for `model` present in `out`, ordered by file name.
fn certificates_in(out: &Path, model: &IncrementModel) -> Result<Vec<MartingaleCertificate>, CliError> {
    let mut names: Vec<String> = fs::read_dir(out)?
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n.starts_with("certificate_") && n.ends_with(".json") && !n.ends_with(".failed.json"))
        .collect();
    names.sort();
    let mut certs = Vec::new();
    for n in names {
        let cert: MartingaleCertificate = read_json(&out.join(&n))?;
        if cert.check(model, cert.kind).is_ok() {
            certs.push(cert);
        }
    }
    Ok(certs)
}

pub fn cmd_simulate(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    let s = cfg.simulate_block()?;
    let model = &cfg.model;
    let seed = s
        .seed
        .ok_or_else(|| CliError::Config("simulate.seed is required".into()))?;
    let mut written = Vec::new();

    let lindley = lindley_tail(model, &s.x_grid, s.steps, s.burn_in, s.replicas, seed)?;
    written.push(write_json(&out.join(LINDLEY_JSON), &lindley)?);
    written.push(write_csv(
        &out.join(LINDLEY_CSV),
        &["x", "p_hat", "ci_halfwidth"],
        (0..lindley.x_grid.len()).map(|i| {
            vec![
                num(lindley.x_grid[i]),
                num(lindley.p_hat[i]),
                num(lindley.ci_halfwidth[i]),
            ]
        }),
    )?);

    let mtau_x = s.mtau_x.clone().unwrap_or_else(|| s.x_grid.clone());
    let summary = CycleSummary::collect(model, s.cycles, s.n_cap, seed, &mtau_x);
    let tau = summary.tau_stats()?;
    written.push(write_json(&out.join(TAU_STATS_JSON), &tau)?);
    written.push(write_csv(
        &out.join(MTAU_CSV),
        &["x", "p_hat", "ci_halfwidth", "asymptotic", "ratio"],
        mtau_x.iter().enumerate().map(|(i, &x)| {
            let (p, hw) = summary.mtau_tail(i);
            let asym = tau.tau_mean * model.tail(x);
            vec![num(x), num(p), num(hw), num(asym), num(p / asym)]
        }),
    )?);

    let kept = sample_cycles(model, s.spill_cycles, s.n_cap, seed);
    let path = out.join(CYCLES_BIN);
    spill::write_cycles(BufWriter::new(File::create(&path)?), &kept)?;
    written.push(path);

    let iglehart = s
        .iglehart_x
        .iter()
        .map(|&x| iglehart_residual(&lindley, &kept, x))
        .collect::<Result<Vec<_>, _>>()?;
    written.push(write_csv(
        &out.join(IGLEHART_CSV),
        &["x", "p_m", "p_mtau", "correction", "residual", "ci", "pass"],
        iglehart.iter().map(|c| {
            vec![
                num(c.x),
                num(c.p_m),
                num(c.p_mtau),
                num(c.correction),
                num(c.residual),
                num(c.ci),
                c.passes().to_string(),
            ]
        }),
    )?);

    let certs = certificates_in(out, model)?;
    let mut drift_checks = Vec::new();
    for cert in &certs {
        let report = empirical_drift_check(model, cert, s.drift_states, s.drift_draws, seed)?;
        let name = drift_check_name(cert.kind, cert.epsilon);
        written.push(write_drift_check(&out.join(&name), &report)?);
        drift_checks.push(DriftCheckSummary {
            file: name,
            kind: cert.kind,
            epsilon: cert.epsilon,
            states: report.rows.len(),
            draws: report.draws,
            violations: report.violations(),
        });
    }
    let drift_check_note = certs
        .is_empty()
        .then(|| "no certificates in the output directory; drift check skipped".to_string());

    let summary = SimulateSummary {
        seed,
        tau_stats: tau,
        truncation_fraction: tau.truncation_fraction(),
        wald_within_ci: tau.wald_within_ci(),
        wald_relative: tau.wald_residual / (model.tail_moments().a * tau.tau_mean),
        iglehart_pass: iglehart.iter().all(IglehartCheck::passes),
        iglehart,
        drift_checks,
        drift_check_note,
    };
    written.push(write_json(&out.join(SIMULATE_SUMMARY), &summary)?);

    let mut problems = Vec::new();
    if let Err(e) = tau.check_truncation() {
        problems.push(e.to_string());
    }
    for d in &summary.drift_checks {
        if !d.violations.is_empty() {
            problems.push(format!(
                "{} drift (eps {}) violated at t = {:?}",
                d.kind, d.epsilon, d.violations
            ));
        }
    }
    if problems.is_empty() {
        Ok(written)
    } else {
        Err(CliError::Check(problems.join("; ")))
    }
}

fn write_drift_check(path: &Path, report: &DriftCheckReport) -> Result<PathBuf, CliError> {
    write_csv(
        path,
        &[
            "t",
            "mc_mean",
            "std_error",
            "quadrature",
            "potential",
            "z_margin",
            "z_quadrature",
            "violation",
        ],
        report.rows.iter().map(|r| {
            vec![
                num(r.t),
                num(r.mc_mean),
                num(r.std_error),
                num(r.quadrature),
                num(r.potential),
                num(r.z_margin),
                num(r.z_quadrature),
                r.violation.to_string(),
            ]
        }),
    )
}

enum CertInput {
    Present(MartingaleCertificate),
    Failed,
}

fn load_certificate(
    out: &Path,
    model: &IncrementModel,
    kind: CertificateKind,
    epsilon: f64,
) -> Result<CertInput, CliError> {
    let path = out.join(certificate_name(kind, epsilon));
    if path.exists() {
        let cert: MartingaleCertificate = read_json(&path)?;
        cert.check(model, kind).map_err(|e| {
            CliError::Dependency(format!("{}: {e}", path.display()))
        })?;
        return Ok(CertInput::Present(cert));
    }
    if out.join(certificate_failure_name(kind, epsilon)).exists() {
        return Ok(CertInput::Failed);
    }
    Err(CliError::Dependency(format!(
        "{} not found (run `certify` with epsilon {epsilon} first)",
        path.display()
    )))
}

fn require(out: &Path, name: &str, producer: &str) -> Result<PathBuf, CliError> {
    let p = out.join(name);
    if p.exists() {
        Ok(p)
    } else {
        Err(CliError::Dependency(format!(
            "{} not found (run `{producer}` first)",
            p.display()
        )))
    }
}

#[derive(Debug, Clone, Serialize)]
struct BoundsProvenanceFile<'a> {
    #[serde(flatten)]
    table: &'a tailwalk_core::bounds::BoundProvenance,
    ci_level: f64,
    sub_certificate: Option<String>,
    super_certificate: Option<String>,
    lundberg: Option<LundbergBaseline>,
    notes: Vec<String>,
}

pub fn cmd_bounds(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    let b = cfg.bounds_block()?;
    let model = &cfg.model;
    let sub = load_certificate(out, model, CertificateKind::Sub, b.epsilon)?;
    let sup = load_certificate(out, model, CertificateKind::Super, b.epsilon)?;
    let tau: TauStats = read_json(&require(out, TAU_STATS_JSON, "simulate")?)?;
    let cycles_path = require(out, CYCLES_BIN, "simulate")?;
    let cycles = spill::read_cycles(BufReader::new(File::open(&cycles_path)?)).map_err(|e| {
        CliError::Dependency(format!("{} is unreadable: {e}", cycles_path.display()))
    })?;
    let stau: Vec<f64> = cycles.iter().filter(|c| !c.truncated).map(|c| c.s_tau).collect();
    if stau.is_empty() {
        return Err(CliError::Dependency(format!(
            "{} holds no complete cycles",
            cycles_path.display()
        )));
    }

    let mut notes = Vec::new();
    let sub_cert = match &sub {
        CertInput::Present(c) => Some(c),
        CertInput::Failed => {
            notes.push("sub certification failed; lower bounds omitted".to_string());
            None
        }
    };
    let sup_cert = match &sup {
        CertInput::Present(c) => Some(c),
        CertInput::Failed => {
            notes.push("super certification failed; upper bounds omitted".to_string());
            None
        }
    };

    let mut r = None;
    let r_source = format!("smallest r with one-sided {} Lindley upper bound <= F_s(R)/(a-eps)", b.ci_level);
    if let Some(cert) = sup_cert {
        let lindley: LindleyEstimate = read_json(&require(out, LINDLEY_JSON, "simulate")?)?;
        let grid = b.r_grid.clone().unwrap_or_else(|| {
            lindley.x_grid.iter().copied().filter(|&x| x >= 0.0).collect()
        });
        match choose_r(model, cert, &grid, lindley.one_sided_upper(b.ci_level)) {
            Ok(v) => r = Some(v),
            Err(CoreError::SearchExhausted { cap }) => {
                notes.push(format!("no admissible r up to {cap}; upper bounds omitted"));
            }
            Err(e) => return Err(e.into()),
        }
    }

    let baseline = match lundberg(model, Some(&stau)) {
        Ok(l) => Some(l),
        Err(CoreError::NoExponent(_)) | Err(CoreError::NoRoot(_)) => None,
        Err(e) => return Err(e.into()),
    };

    let inputs = BoundInputs {
        model,
        sub: sub_cert,
        sup: sup_cert,
        r: r.map(|v| (v, r_source.as_str())),
        tau: Some(&tau),
        stau: Some(&stau),
        lundberg: baseline.as_ref(),
    };
    let table = BoundTable::build(&inputs, &b.x_grid)?;

    let mut header = vec![
        "x",
        "lower_M",
        "upper_M",
        "fkz_lower",
        "asymp_M",
        "lower_Mtau",
        "upper_Mtau",
        "asymp_Mtau",
    ];
    if baseline.is_some() {
        header.extend(["h0", "doob"]);
    }
    header.push("reasons");
    let rows = table.rows.iter().map(|row| {
        let mut v = vec![
            num(row.x),
            opt(row.lower_m),
            opt(row.upper_m),
            opt(row.fkz_lower),
            opt(row.asymp_m),
            opt(row.lower_mtau),
            opt(row.upper_mtau),
            opt(row.asymp_mtau),
        ];
        if let Some(l) = &baseline {
            v.push(num(l.h0));
            v.push(opt(row.doob));
        }
        v.push(row.reasons.join(";"));
        v
    });
    let mut written = vec![write_csv(&out.join(BOUNDS_CSV), &header, rows)?];
    let prov = BoundsProvenanceFile {
        table: &table.provenance,
        ci_level: b.ci_level,
        sub_certificate: sub_cert.map(|_| certificate_name(CertificateKind::Sub, b.epsilon)),
        super_certificate: sup_cert.map(|_| certificate_name(CertificateKind::Super, b.epsilon)),
        lundberg: baseline,
        notes,
    };
    written.push(write_json(&out.join(BOUNDS_PROVENANCE), &prov)?);
    Ok(written)
}

pub fn cmd_diagnose(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    let d = cfg.diagnose_block()?;
    let model = &cfg.model;
    let a_plus = model.tail_moments().a_plus;
    let mut rows = Vec::new();
    let mut trimmed = Vec::new();
    for &t in &d.t_grid {
        let row = (|| -> Result<Vec<String>, CoreError> {
            let s = sstar_ratio(t, model)?;
            let e = subexp_ratio(t, model)?;
            let l = longtail_ratio(t, d.longtail_y, model)?;
            Ok(vec![
                num(t),
                num(s),
                num(2.0 * a_plus),
                num(e),
                num(1.0),
                num(1.0 + e),
                num(2.0),
                num(l),
                num(1.0),
            ])
        })();
        match row {
            Ok(r) => rows.push(r),
            Err(CoreError::Domain(_)) => trimmed.push(t),
            Err(e) => return Err(e.into()),
        }
    }
    if !trimmed.is_empty() {
        eprintln!(
            "warning: {} t value(s) from {} upward trimmed: tail underflows",
            trimmed.len(),
            trimmed[0]
        );
    }
    if rows.is_empty() {
        return Err(CliError::Config("every t in diagnose.t_grid underflows".into()));
    }
    Ok(vec![write_csv(
        &out.join(DIAGNOSE_CSV),
        &[
            "t",
            "sstar_ratio",
            "sstar_reference",
            "subexp_ratio",
            "subexp_reference",
            "convolution_ratio",
            "convolution_reference",
            "longtail_ratio",
            "longtail_reference",
        ],
        rows,
    )?])
}
