//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::sync::OnceLock;
use std::time::Instant;

use tailwalk_cli::{run, Cli, Command};
use tailwalk_core::bounds::{
    choose_r, fkz_lower_bound, lower_bound_m, lundberg, overshoot_deficit, upper_bound_m,
};
use tailwalk_core::potential::{
    certify_sub, certify_super, drift_hat, potential_g_hat, sstar_ratio, threshold_r,
};
use tailwalk_core::quadrature::Quadrature;
use tailwalk_core::sim::{
    iglehart_residual, lindley_tail, sample_cycles, tau_stats, CycleSummary, LindleyEstimate,
};
use tailwalk_core::stats::{z_one_sided, z_two_sided, Running};
use tailwalk_core::{
    Error, GridSpec, IncrementModel, MartingaleCertificate, RngStream,
};

type Outcome = Result<String, String>;

fn ensure(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn pareto() -> IncrementModel {
    IncrementModel::canonical_pareto()
}

fn certificates() -> &'static (MartingaleCertificate, MartingaleCertificate) {
    static C: OnceLock<(MartingaleCertificate, MartingaleCertificate)> = OnceLock::new();
    C.get_or_init(|| {
        let m = pareto();
        (
            certify_sub(&m, 0.5, &GridSpec::default()).unwrap(),
            certify_super(&m, 0.5, &GridSpec::default()).unwrap(),
        )
    })
}

fn lindley_grid() -> Vec<f64> {
    (0..=400).map(|i| i as f64 * 0.25).collect()
}

/// 32 replicas × 10⁶ steps, burn-in 10⁴.
fn pareto_lindley() -> &'static LindleyEstimate {
    static L: OnceLock<LindleyEstimate> = OnceLock::new();
    L.get_or_init(|| lindley_tail(&pareto(), &lindley_grid(), 1_000_000, 10_000, 32, 2024).unwrap())
}

fn criterion_1() -> Outcome {
    let m = pareto();
    let start = Instant::now();
    let sub = certify_sub(&m, 0.5, &GridSpec::default()).map_err(|e| e.to_string())?;
    let sup = certify_super(&m, 0.5, &GridSpec::default()).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed().as_secs_f64();
    let mut worst = f64::INFINITY;
    for c in [&sub, &sup] {
        if c.t_max != 1e3 || c.curve.first().map(|r| r.t) != Some(c.r) {
            return Err(format!("{} grid is not [R, 1e3]", c.kind));
        }
        for r in &c.curve {
            worst = worst.min(r.margin);
        }
    }
    ensure(
        worst >= -1e-9 && elapsed < 60.0,
        format!(
            "R_sub = {:.4}, R_super = {:.4}, min margin {worst:.3e}, {elapsed:.2} s",
            sub.r, sup.r
        ),
    )
}

// Independent route: integrate Ĝ_c(t − z) f(z) over the support directly,
// with z = inf + s² to tame any edge singularity.
fn density_quadrature(c: f64, t: f64, m: &IncrementModel) -> f64 {
    let q = Quadrature::with_rel_tol(1e-11);
    let lo = m.support_inf();
    let edge = t - threshold_r(c, m).unwrap();
    let body = q
        .integrate(
            |s| {
                let z = lo + s * s;
                potential_g_hat(c, t - z, m).unwrap() * m.density(z) * 2.0 * s
            },
            0.0,
            (edge - lo).sqrt(),
        )
        .unwrap()
        .value;
    body + c * m.tail(edge)
}

fn criterion_2() -> Outcome {
    let m = pareto();
    let mut pick = RngStream::new(77, 0);
    let mut worst_z = 0.0f64;
    let mut worst_rel = 0.0f64;
    for i in 0..20 {
        let c = 0.01 + 1.99 * pick.open01();
        let t = threshold_r(c, &m).unwrap() + 0.1 + 29.9 * pick.open01();
        let got = drift_hat(c, t, &m).map_err(|e| e.to_string())?;

        let mut rng = RngStream::new(78, i);
        let mut acc = Running::new();
        for _ in 0..10_000_000u64 {
            acc.push(potential_g_hat(c, t - m.sample(&mut rng), &m).unwrap());
        }
        let z = (acc.mean() - got) / acc.std_error();
        let rel = ((got - density_quadrature(c, t, &m)) / got).abs();
        worst_z = worst_z.max(z.abs());
        worst_rel = worst_rel.max(rel);
    }
    ensure(
        worst_z <= 3.0 && worst_rel <= 1e-7,
        format!("max |z| vs MC = {worst_z:.2}, max rel. error vs quadrature = {worst_rel:.2e}"),
    )
}

fn chosen_r() -> Result<f64, String> {
    let (_, sup) = certificates();
    let l = pareto_lindley();
    choose_r(&pareto(), sup, &lindley_grid(), l.one_sided_upper(0.99)).map_err(|e| e.to_string())
}

fn criterion_3() -> Outcome {
    let m = pareto();
    let (sub, sup) = certificates();
    let l = pareto_lindley();
    let r = chosen_r()?;
    let mut lines = vec![format!("R+r = {:.3}", sup.r + r)];
    let mut ok = true;
    for x in [10.0, 15.0, 20.0] {
        if x <= sup.r + r {
            return Err(format!("x = {x} outside the valid domain (R+r = {})", sup.r + r));
        }
        let i = l.index_of(x).unwrap();
        let (p, hw) = (l.p_hat[i], l.ci_halfwidth[i]);
        let lo = lower_bound_m(&m, sub, x).unwrap();
        let hi = upper_bound_m(&m, sup, r, x).unwrap();
        let fkz = fkz_lower_bound(&m, x).unwrap();
        let inside = lo <= p && p <= hi;
        let above_fkz = p >= fkz * (1.0 - hw / p);
        ok &= inside && above_fkz;
        lines.push(format!("x={x}: {lo:.3e} <= {p:.3e} (±{hw:.1e}) <= {hi:.3e}, fkz {fkz:.3e}"));
    }
    ensure(ok, lines.join("; "))
}

fn criterion_4() -> Outcome {
    let m = pareto();
    let l = pareto_lindley();
    let mut ratios = Vec::new();
    for x in [5.0, 10.0, 20.0] {
        let i = l.index_of(x).unwrap();
        let scale = m.tail_moments().a / m.integrated_tail(x).unwrap();
        ratios.push((x, l.p_hat[i] * scale, l.ci_halfwidth[i] * scale));
    }
    let at20 = ratios[2].1;
    // |ratio − 1| nonincreasing in x, up to the CI half-widths
    let trend = ratios
        .windows(2)
        .all(|w| (w[1].1 - 1.0).abs() - w[1].2 <= (w[0].1 - 1.0).abs() + w[0].2);
    let detail = ratios
        .iter()
        .map(|(x, r, h)| format!("x={x}: {r:.3}±{h:.3}"))
        .collect::<Vec<_>>()
        .join(", ");
    ensure((0.7..=1.3).contains(&at20) && trend, detail)
}

fn criterion_5() -> Outcome {
    let m = pareto();
    let s = CycleSummary::collect(&m, 10_000_000, 10_000_000, 515, &[15.0]);
    let tau = s.tau_stats().map_err(|e| e.to_string())?;
    let (p, hw) = s.mtau_tail(0);
    let ratio = p / (tau.tau_mean * m.tail(15.0));
    let rel = tau.wald_residual / (m.tail_moments().a * tau.tau_mean);
    ensure(
        (0.85..=1.15).contains(&ratio) && tau.wald_within_ci() && rel < 0.01,
        format!(
            "P(M_tau>15) = {p:.3e}±{hw:.1e}, ratio {ratio:.3}; Wald residual {:.2e} (CI {:.2e}, rel {rel:.1e})",
            tau.wald_residual, tau.wald_ci
        ),
    )
}

fn criterion_6() -> Outcome {
    let m = pareto();
    let cycles = sample_cycles(&m, 1_000_000, 10_000_000, 616);
    let stats = tau_stats(&cycles, &m).map_err(|e| e.to_string())?;
    let stau: Vec<f64> = cycles.iter().filter(|c| !c.truncated).map(|c| c.s_tau).collect();
    let x = 50.0;
    let lhs = overshoot_deficit(&m, &stau, x).map_err(|e| e.to_string())? / m.tail(x);
    let target = m.tail_moments().a * stats.tau_mean;
    let rel = (lhs - target).abs() / target;
    ensure(rel <= 0.1, format!("{lhs:.4} vs a·E tau = {target:.4} (rel {rel:.3})"))
}

fn criterion_7() -> Outcome {
    let e = IncrementModel::exp_shift(1.0, 2.0).unwrap();
    let l = lundberg(&e, None).map_err(|e| e.to_string())?;
    // independent bisection on 1 − h = e^{−2h} over (0, 1)
    let f = |h: f64| (1.0 - h) - (-2.0 * h).exp();
    let (mut lo, mut hi) = (0.5, 0.999);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let h_bis = 0.5 * (lo + hi);
    let est = lindley_tail(&e, &[1.0, 3.0, 5.0], 1_000_000, 10_000, 32, 707).unwrap();
    let scale = z_one_sided(0.99) / z_two_sided(0.99);
    let doob_ok = est
        .x_grid
        .iter()
        .enumerate()
        .all(|(i, &x)| est.p_hat[i] - scale * est.ci_halfwidth[i] <= l.doob(x));
    let pareto_err = matches!(lundberg(&pareto(), None), Err(Error::NoExponent(_)));
    ensure(
        l.residual < 1e-12 && (l.h0 - h_bis).abs() < 1e-10 && (l.h0 - 0.7968).abs() < 1e-4 && doob_ok && pareto_err,
        format!(
            "h0 = {:.6} (bisection {h_bis:.6}), residual {:.1e}; P(M>x) at 1,3,5: {:.4}, {:.4}, {:.4} vs doob {:.4}, {:.4}, {:.4}; Pareto no-exponent: {pareto_err}",
            l.h0,
            l.residual,
            est.p_hat[0],
            est.p_hat[1],
            est.p_hat[2],
            l.doob(1.0),
            l.doob(3.0),
            l.doob(5.0)
        ),
    )
}

fn criterion_8() -> Outcome {
    let p = sstar_ratio(500.0, &pareto()).map_err(|e| e.to_string())?;
    let e = sstar_ratio(50.0, &IncrementModel::exp_shift(1.0, 2.0).unwrap()).map_err(|e| e.to_string())?;
    ensure(
        (p - 0.16).abs() <= 0.016 && e > 0.32,
        format!("Pareto S*(500) = {p:.4}; ExpShift S*(50) = {e:.3}"),
    )
}

fn criterion_9() -> Outcome {
    let m = pareto();
    let cycles = sample_cycles(&m, 1_000_000, 10_000_000, 909);
    let c = iglehart_residual(pareto_lindley(), &cycles, 5.0).map_err(|e| e.to_string())?;
    ensure(
        c.passes(),
        format!(
            "P(M>5) = {:.5}, P(M_tau>5) = {:.5}, correction {:.5}, residual {:.2e} (CI {:.2e})",
            c.p_m, c.p_mtau, c.correction, c.residual, c.ci
        ),
    )
}

fn run_pipeline(config: &Path, out: &Path) -> Result<(), String> {
    for command in [Command::Certify, Command::Simulate, Command::Bounds, Command::Diagnose] {
        let cli = Cli {
            command,
            config: config.to_path_buf(),
            out: out.to_path_buf(),
            threads: None,
            seed: None,
        };
        run(&cli).map_err(|e| format!("{}: {e}", command.name()))?;
    }
    Ok(())
}

fn criterion_10() -> Outcome {
    let config = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/canonical_pareto.json");
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    run_pipeline(&config, &a)?;
    run_pipeline(&config, &b)?;
    let mut names: Vec<String> = fs::read_dir(&a)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| !n.starts_with("metadata_"))
        .collect();
    names.sort();
    let differing: Vec<&String> = names
        .iter()
        .filter(|n| fs::read(a.join(n)).ok() != fs::read(b.join(n)).ok())
        .collect();
    let csvs = names.iter().filter(|n| n.ends_with(".csv")).count();
    ensure(
        differing.is_empty() && csvs >= 10,
        format!("{} files ({csvs} CSV) compared, differing: {differing:?}", names.len()),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("certification soundness", criterion_1),
        ("drift operator oracle", criterion_2),
        ("sandwich containment", criterion_3),
        ("integrated-tail asymptotic ratio", criterion_4),
        ("cycle-maximum asymptotic and Wald identity", criterion_5),
        ("cycle identity at x = 50", criterion_6),
        ("light-tail Lundberg baseline", criterion_7),
        ("S* diagnostic", criterion_8),
        ("last-exit decomposition at x = 5", criterion_9),
        ("byte-identical pipeline rerun", criterion_10),
    ];
    // failures are reported per criterion, not as a panic trace
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(d) => println!("PASS [{}] {name}: {d} ({secs:.1} s)", i + 1),
            Err(d) => {
                failed += 1;
                println!("FAIL [{}] {name}: {d} ({secs:.1} s)", i + 1)
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

