//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails.

use std::path::Path;
use std::time::Instant;

use clap::Parser;
use fsc_cli::commands;
use fsc_cli::output::{payload, ResultRow};
use fsc_cli::{Cli, ExperimentConfig};
use fsc_core::dp::{value_iteration, DpParams};
use fsc_core::mc::{directed_info_rate, Source};
use fsc_core::oracle;
use fsc_core::{ChannelSpec, InputConstraint};

const ORACLE_SEED: u64 = 2024;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn binary_entropy(p: f64) -> f64 {
    -(p * p.log2() + (1.0 - p) * (1.0 - p).log2())
}

/// `log2` of the Perron root of the golden-mean shift adjacency matrix, by
/// power iteration.
fn golden_mean_capacity() -> f64 {
    let a = [[1.0, 1.0], [1.0, 0.0]];
    let mut x = [1.0f64, 1.0];
    let mut lambda = 0.0;
    for _ in 0..200 {
        let y = [a[0][0] * x[0] + a[0][1] * x[1], a[1][0] * x[0] + a[1][1] * x[1]];
        lambda = y[0].hypot(y[1]) / x[0].hypot(x[1]);
        x = [y[0] / y[0].hypot(y[1]), y[1] / y[0].hypot(y[1])];
    }
    lambda.log2()
}

fn bsc_anchor() -> Result<Outcome, Box<dyn std::error::Error>> {
    let target = 1.0 - binary_entropy(0.1);
    let bsc = ChannelSpec::bsc(0.1)?;
    let sol = value_iteration(&bsc, &DpParams::new(0, 0, 0, 1.0, 0.01, 30))?;
    let est = directed_info_rate(&bsc, &Source::Table(sol.table.clone()), 0, 0, 1_000_000, 1000, 1)?;
    let pass = (sol.sigma - target).abs() < 0.01 && (est.mean - target).abs() < 0.01;
    Ok(outcome(pass, format!("target {target:.6}, sigma {:.6}, rate {:.6} (se {:.1e})", sol.sigma, est.mean, est.std_error)))
}

fn noiseless_anchor() -> Result<Outcome, Box<dyn std::error::Error>> {
    let target = golden_mean_capacity();
    let ch = ChannelSpec::gilbert_elliott(0.3, 0.3, 0.0, 0.0)?.with_constraint(InputConstraint::rll_1_inf())?;
    let sol = value_iteration(&ch, &DpParams::new(1, 1, 1, 0.05, 0.02, 50))?;
    let est = directed_info_rate(&ch, &Source::Table(sol.table.clone()), 1, 1, 1_000_000, 1000, 1)?;
    let pass = (est.mean - target).abs() < 0.01;
    Ok(outcome(
        pass,
        format!("target {target:.6}, rate {:.6} (se {:.1e}); DP sigma {:.4} for reference", est.mean, est.std_error, sol.sigma),
    ))
}

fn config(text: &str) -> Result<ExperimentConfig, Box<dyn std::error::Error>> {
    Ok(ExperimentConfig::from_toml_str(text)?)
}

fn rate_of(rows: &[ResultRow], u: usize, v: usize) -> (f64, f64) {
    let r = rows.iter().find(|r| r.u == Some(u) && r.v == Some(v)).expect("bound row present");
    (r.rate_bits.unwrap_or(f64::NAN), r.std_err.unwrap_or(f64::NAN))
}

fn nesting(out: &Path) -> Result<Outcome, Box<dyn std::error::Error>> {
    let mut cfg = config(include_str!("../../../configs/ge_sweep.toml"))?;
    cfg.sweep.as_mut().expect("sweep section").values = vec![0.3];
    let (rows, _) = commands::sweep(&cfg, out)?;
    let bounds = [(2, 2), (1, 1), (0, 1), (0, 0)];
    let rates: Vec<(f64, f64)> = bounds.iter().map(|&(u, v)| rate_of(&rows, u, v)).collect();
    let lower = rows.iter().find(|r| r.u.is_none()).expect("lower bound row");
    let (rl, sl) = (lower.rate_bits.unwrap_or(f64::NAN), lower.std_err.unwrap_or(f64::NAN));
    let ordered = rates.windows(2).all(|w| w[0].0 <= w[1].0 + 3.0 * w[0].1.max(w[1].1));
    let small_se = rates.iter().chain([&(rl, sl)]).all(|r| r.1 <= 0.002);
    let sandwich = rl <= rates[0].0 + 3.0 * rates[0].1.max(sl);
    let listing: Vec<String> = bounds.iter().zip(&rates).map(|((u, v), (r, _))| format!("I({u},{v}) {r:.4}")).collect();
    Ok(outcome(
        ordered && small_se && sandwich,
        format!("{}, lower {rl:.4}; max se {:.1e}", listing.join(" <= "), rates.iter().map(|r| r.1).fold(sl, f64::max)),
    ))
}

fn quantizer(out: &Path) -> Result<Outcome, Box<dyn std::error::Error>> {
    let cfg = config(include_str!("../../../configs/quantizer.toml"))?;
    let rows = commands::quantizer_study(&cfg, out)?;
    let mut pass = true;
    let mut parts = Vec::new();
    for eps in [0.1, 0.3, 0.5] {
        let at = |d: f64| {
            let r = rows.iter().find(|r| r.eps_b == Some(eps) && r.delta == Some(d)).expect("quantizer row");
            (r.rate_bits.unwrap_or(f64::NAN), r.std_err.unwrap_or(f64::NAN))
        };
        let (r2, r1, r05) = (at(0.2), at(0.1), at(0.05));
        let monotone = r1.0 >= r2.0 - 3.0 * r1.1.max(r2.1) && r05.0 >= r1.0 - 3.0 * r05.1.max(r1.1);
        let gap = (r1.0 - r05.0).abs();
        pass &= monotone && gap < 0.01;
        parts.push(format!("eps_b {eps}: {:.4} {:.4} {:.4} gap {gap:.4}", r2.0, r1.0, r05.0));
    }
    Ok(outcome(pass, parts.join("; ")))
}

fn window_identity() -> Result<Outcome, Box<dyn std::error::Error>> {
    let (terms, conds) = oracle::window_identity_gap(ORACLE_SEED, 20, 6)?;
    Ok(outcome(terms < 1e-12 && conds < 1e-12, format!("max term gap {terms:.2e}, max conditional gap {conds:.2e}")))
}

fn factorization() -> Result<Outcome, Box<dyn std::error::Error>> {
    let gap = oracle::factorization_gap(ORACLE_SEED, 10, 6)?;
    Ok(outcome(gap < 1e-12, format!("max gap {gap:.2e} over 10 instances")))
}

fn filter() -> Result<Outcome, Box<dyn std::error::Error>> {
    let gap = oracle::filter_identity_gap(ORACLE_SEED, 6, 6, false)?;
    let control = oracle::filter_identity_gap(ORACLE_SEED, 3, 4, true)?;
    Ok(outcome(gap < 1e-10 && control > 1e-3, format!("max gap {gap:.2e}; corrupted kernel gives {control:.2e}")))
}

fn calibration() -> Result<Outcome, Box<dyn std::error::Error>> {
    let cal = oracle::mc_calibration(ORACLE_SEED, 40, 8, 200)?;
    // confirm the exact values against full enumeration, one instance per shape
    let mut worst: f64 = 0.0;
    for k in 0..oracle::CALIBRATION_SHAPES.len() {
        let (ch, src, shape, _) = oracle::calibration_instance(ORACLE_SEED, k)?;
        let brute = oracle::directed_info_terms(&ch, &src, shape.1, 8, false, 1 << 28)?.truncated_total() / 8.0;
        worst = worst.max((brute - cal.details[k].0).abs());
    }
    Ok(outcome(
        cal.fraction() >= 0.95 && worst < 1e-12,
        format!("{}/{} within 3 se; exact value vs enumeration {worst:.1e}", cal.within, cal.instances),
    ))
}

fn determinism(out: &Path) -> Result<Outcome, Box<dyn std::error::Error>> {
    let cfg_path = out.join("det.toml");
    std::fs::write(
        &cfg_path,
        r#"
[channel]
model = "gilbert_elliott"
p_bg = 0.3
p_gb = 0.3
eps_g = 0.001
eps_b = 0.3
constraint = "rll_1_inf"

[bounds]
triples = [[1, 1, 1], [0, 1, 1]]
delta = [0.1, 0.5]
eta = [0.2, 0.5]

[dp]
n_iter = 10

[mc]
n = 20000
seed = 11

[sweep]
parameter = "eps_b"
values = [0.1, 0.4, 0.7]

[lower_bound]
order = 1
step = 0.05
n_search = 5000
"#,
    )?;
    let mut payloads = Vec::new();
    for threads in [1, 4, 8] {
        let dir = out.join(format!("t{threads}"));
        let cli = Cli::try_parse_from([
            "fscb",
            "sweep",
            "--config",
            cfg_path.to_str().expect("utf-8 path"),
            "--out",
            dir.to_str().expect("utf-8 path"),
            "--threads",
            &threads.to_string(),
        ])?;
        fsc_cli::run(&cli)?;
        payloads.push(payload(&std::fs::read_to_string(dir.join("sweep.csv"))?));
    }
    let same = payloads.windows(2).all(|w| w[0] == w[1]);
    Ok(outcome(same, format!("{} payload lines identical across 1, 4 and 8 threads: {same}", payloads[0].lines().count())))
}

fn main() {
    // the harness passes filter arguments; a plain `cargo test` passes none
    let args: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let tmp = tempfile::tempdir().expect("temporary directory");
    type Check<'a> = Box<dyn Fn() -> Result<Outcome, Box<dyn std::error::Error>> + 'a>;
    let root = tmp.path();
    let checks: Vec<(&str, Check)> = vec![
        ("1 bsc anchor", Box::new(bsc_anchor)),
        ("2 noiseless rll anchor", Box::new(noiseless_anchor)),
        ("3 bound nesting", Box::new(|| nesting(&root.join("nesting")))),
        ("4 quantizer study", Box::new(|| quantizer(&root.join("quantizer")))),
        ("5 window identity", Box::new(window_identity)),
        ("6 state/output factorization", Box::new(factorization)),
        ("7 filter vs enumeration", Box::new(filter)),
        ("8 monte carlo calibration", Box::new(calibration)),
        ("9 thread determinism", Box::new(|| determinism(root))),
    ];
    let mut failed = 0;
    for (name, check) in &checks {
        if !args.is_empty() && !args.iter().any(|a| name.contains(a.as_str())) {
            continue;
        }
        let t0 = Instant::now();
        let (verdict, detail) = match check() {
            Ok(o) => (if o.pass { "PASS" } else { "FAIL" }, o.detail),
            Err(e) => ("FAIL", format!("error: {e}")),
        };
        if verdict == "FAIL" {
            failed += 1;
        }
        println!("criterion {name}: {verdict} ({detail}) [{:.1} s]", t0.elapsed().as_secs_f64());
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
