//! Subcommand implementations. Each returns the rows it wrote.

use std::path::{Path, PathBuf};
use std::time::Instant;

use fsc_core::dp::{binomial, value_iteration, DpSolution, PolicyCandidates, PolicyTable};
use fsc_core::mc::{directed_info_rate, markov_lower_bound, LowerBoundParams, RateEstimate, Source};
use fsc_core::{oracle, ChannelSpec, ContextSpace};
use rayon::prelude::*;

use crate::config::{BoundSpec, ExperimentConfig};
use crate::error::CliError;
use crate::output::{write_csv, ResultRow};

fn policy_path(out: &Path, b: &BoundSpec) -> PathBuf {
    out.join(format!("policy_u{}_v{}_m{}.txt", b.u, b.v, b.m))
}

fn elapsed_ms(t0: Instant) -> u128 {
    t0.elapsed().as_millis()
}

/// Row skeleton for a bound on a channel with the given `eps_b`.
fn bound_row(cfg: &ExperimentConfig, eps_b: Option<f64>, b: &BoundSpec, n_iter: usize) -> ResultRow {
    ResultRow {
        model: cfg.model_label(),
        eps_b,
        u: Some(b.u),
        v: Some(b.v),
        m: Some(b.m),
        delta: Some(b.delta),
        eta: Some(b.eta),
        n_iter: Some(n_iter),
        ..Default::default()
    }
}

fn with_rate(mut row: ResultRow, est: &RateEstimate, n: usize) -> ResultRow {
    row.n_mc = Some(n);
    row.seed = Some(est.seed);
    row.rate_bits = Some(est.mean);
    row.std_err = Some(est.std_error);
    row
}

fn with_dp(mut row: ResultRow, sol: &DpSolution) -> ResultRow {
    row.sigma_dp = Some(sol.sigma);
    row.sigma_span = Some(sol.span);
    row
}

fn solve(cfg: &ExperimentConfig, channel: &ChannelSpec, b: &BoundSpec) -> Result<DpSolution, CliError> {
    Ok(value_iteration(channel, &cfg.dp_params(b)?)?)
}

fn evaluate_table(cfg: &ExperimentConfig, channel: &ChannelSpec, table: PolicyTable, seed: u64) -> Result<RateEstimate, CliError> {
    let (u, v) = (table.meta().u, table.meta().v);
    Ok(directed_info_rate(channel, &Source::Table(table), u, v, cfg.mc_n(), cfg.burn_in(), seed)?)
}

/// Optimizes every configured bound, saves the policy files and writes
/// `optimize.csv`.
pub fn optimize(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<ResultRow>, CliError> {
    let channel = cfg.channel()?;
    std::fs::create_dir_all(out)?;
    let mut rows = Vec::new();
    for b in cfg.bounds()? {
        let t0 = Instant::now();
        let sol = solve(cfg, &channel, &b)?;
        sol.table.save(&policy_path(out, &b))?;
        let row = with_dp(bound_row(cfg, cfg.channel.eps_b, &b, sol.table.meta().n_iter), &sol);
        rows.push(ResultRow { wall_ms: elapsed_ms(t0), ..row });
    }
    write_csv(&out.join("optimize.csv"), &rows)?;
    Ok(rows)
}

/// Estimates the rate of each policy file for every configured seed and
/// writes `evaluate.csv`. Without explicit files, the ones written by
/// [`optimize`] for the configured bounds are used.
pub fn evaluate(cfg: &ExperimentConfig, out: &Path, policies: &[PathBuf]) -> Result<Vec<ResultRow>, CliError> {
    let channel = cfg.channel()?;
    let paths: Vec<PathBuf> = if policies.is_empty() {
        cfg.bounds()?.iter().map(|b| policy_path(out, b)).collect()
    } else {
        policies.to_vec()
    };
    let digest = channel.digest();
    let mut rows = Vec::new();
    for path in &paths {
        let table = PolicyTable::load(path)?;
        if table.meta().channel_digest != digest {
            return Err(CliError::DigestMismatch {
                path: path.display().to_string(),
                expected: digest,
                found: table.meta().channel_digest.clone(),
            });
        }
        let meta = table.meta().clone();
        let b = BoundSpec { u: meta.u, v: meta.v, m: meta.m, delta: meta.delta(), eta: meta.eta() };
        for seed in cfg.seeds() {
            let t0 = Instant::now();
            let est = evaluate_table(cfg, &channel, table.clone(), seed)?;
            let mut row = with_rate(bound_row(cfg, cfg.channel.eps_b, &b, meta.n_iter), &est, cfg.mc_n());
            row.sigma_dp = Some(meta.sigma);
            row.sigma_span = Some(meta.span);
            row.wall_ms = elapsed_ms(t0);
            rows.push(row);
        }
    }
    write_csv(&out.join("evaluate.csv"), &rows)?;
    Ok(rows)
}

/// Rows of a sweep point and its ordering warnings.
type PointRows = (Vec<ResultRow>, Vec<String>);

fn sweep_point(cfg: &ExperimentConfig, parameter: &str, value: f64) -> Result<PointRows, CliError> {
    let channel = cfg.channel_with(parameter, value)?;
    let eps_b = if parameter == "eps_b" { Some(value) } else { cfg.channel.eps_b };
    let mut rows = Vec::new();
    for b in cfg.bounds()? {
        let t0 = Instant::now();
        let sol = solve(cfg, &channel, &b)?;
        let n_iter = sol.table.meta().n_iter;
        let est = evaluate_table(cfg, &channel, sol.table.clone(), cfg.seed())?;
        let row = with_rate(with_dp(bound_row(cfg, eps_b, &b, n_iter), &sol), &est, cfg.mc_n());
        rows.push(ResultRow { wall_ms: elapsed_ms(t0), ..row });
    }
    if let Some(lb) = &cfg.lower_bound {
        let t0 = Instant::now();
        let params = LowerBoundParams {
            order: lb.order,
            step: lb.step,
            n: cfg.mc_n(),
            n_search: lb.n_search.unwrap_or((cfg.mc_n() / 10).max(1)),
            burn_in: cfg.burn_in(),
            seed: cfg.seed(),
            budget: cfg.dp.policy_budget.unwrap_or(fsc_core::dp::DEFAULT_POLICY_BUDGET),
        };
        let best = markov_lower_bound(&channel, &params)?;
        let row = ResultRow {
            model: format!("{}/markov{}", cfg.model_label(), lb.order),
            eps_b,
            eta: Some(lb.step),
            ..Default::default()
        };
        rows.push(ResultRow { wall_ms: elapsed_ms(t0), ..with_rate(row, &best.estimate, cfg.mc_n()) });
    }
    let warnings = ordering_warnings(&rows, value);
    Ok((rows, warnings))
}

/// Nesting and sandwich checks between the rows of one sweep point.
fn ordering_warnings(rows: &[ResultRow], value: f64) -> Vec<String> {
    let mut out = Vec::new();
    let rate = |r: &ResultRow| (r.rate_bits.unwrap_or(f64::NAN), r.std_err.unwrap_or(0.0));
    let find = |u: usize, v: usize| rows.iter().find(|r| r.u == Some(u) && r.v == Some(v));
    for v in 0..4 {
        let pairs = [((v + 1, v + 1), (v, v)), ((0, v + 1), (0, v))];
        for ((ua, va), (ub, vb)) in pairs {
            if let (Some(a), Some(b)) = (find(ua, va), find(ub, vb)) {
                let ((ra, sa), (rb, sb)) = (rate(a), rate(b));
                if ra > rb + 3.0 * sa.max(sb) {
                    out.push(format!("at {value}: I({ua},{va}) = {ra:.5} exceeds I({ub},{vb}) = {rb:.5}"));
                }
            }
        }
    }
    if let Some(lb) = rows.iter().find(|r| r.u.is_none()) {
        let (rl, sl) = rate(lb);
        for r in rows.iter().filter(|r| r.u.is_some() && r.u == r.v) {
            let (ru, su) = rate(r);
            if rl > ru + 3.0 * su.max(sl) {
                out.push(format!("at {value}: lower bound {rl:.5} exceeds I({0},{0}) = {ru:.5}", r.u.unwrap_or(0)));
            }
        }
    }
    out
}

/// Optimizes and evaluates every bound at each sweep value; writes
/// `sweep.csv` in sweep order. Ordering violations are returned as warnings.
pub fn sweep(cfg: &ExperimentConfig, out: &Path) -> Result<(Vec<ResultRow>, Vec<String>), CliError> {
    let sw = cfg
        .sweep
        .as_ref()
        .ok_or(crate::error::ConfigError::Missing("sweep"))?;
    let points: Vec<Result<PointRows, CliError>> =
        sw.values.par_iter().map(|&x| sweep_point(cfg, &sw.parameter, x)).collect();
    let mut rows = Vec::new();
    let mut warnings = Vec::new();
    for p in points {
        let (r, w) = p?;
        rows.extend(r);
        warnings.extend(w);
    }
    write_csv(&out.join("sweep.csv"), &rows)?;
    Ok((rows, warnings))
}

/// Rate of the `(1,1,1)` bound against the grid step, for each `eps_b`;
/// writes `quantizer.csv`.
pub fn quantizer_study(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<ResultRow>, CliError> {
    let q = cfg
        .quantizer
        .as_ref()
        .ok_or(crate::error::ConfigError::Missing("quantizer"))?;
    let eps_list = q.eps_b.clone().unwrap_or_else(|| cfg.channel.eps_b.into_iter().collect());
    let eta = cfg.dp.eta.ok_or(crate::error::ConfigError::Missing("dp.eta"))?;
    let jobs: Vec<(Option<f64>, f64)> = if eps_list.is_empty() {
        q.deltas.iter().map(|&d| (None, d)).collect()
    } else {
        eps_list.iter().flat_map(|&e| q.deltas.iter().map(move |&d| (Some(e), d))).collect()
    };
    let rows: Vec<Result<ResultRow, CliError>> = jobs
        .par_iter()
        .map(|&(eps, delta)| {
            let t0 = Instant::now();
            let channel = match eps {
                Some(e) => cfg.channel_with("eps_b", e)?,
                None => cfg.channel()?,
            };
            let b = BoundSpec { u: 1, v: 1, m: 1, delta, eta };
            let sol = solve(cfg, &channel, &b)?;
            let n_iter = sol.table.meta().n_iter;
            let est = evaluate_table(cfg, &channel, sol.table.clone(), cfg.seed())?;
            let row = with_rate(with_dp(bound_row(cfg, eps.or(cfg.channel.eps_b), &b, n_iter), &sol), &est, cfg.mc_n());
            Ok(ResultRow { wall_ms: elapsed_ms(t0), ..row })
        })
        .collect();
    let rows = rows.into_iter().collect::<Result<Vec<_>, _>>()?;
    write_csv(&out.join("quantizer.csv"), &rows)?;
    Ok(rows)
}

/// Runs the enumeration oracles and writes `oracle_report.txt`. With
/// `inject_fault`, the filter check runs against a corrupted kernel as if it
/// were an identity, which must fail.
pub fn oracle_check(seed: u64, out: &Path, inject_fault: bool) -> Result<oracle::OracleReport, CliError> {
    let mut report = oracle::run_all(seed)?;
    if inject_fault {
        report.checks.push(oracle::OracleCheck {
            name: "belief filter (injected fault)".into(),
            deviation: oracle::filter_identity_gap(seed, 3, 4, true)?,
            tolerance: 1e-10,
            negative_control: false,
        });
    }
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("oracle_report.txt"), report.to_table())?;
    Ok(report)
}

/// Human-readable summary of the channel and the size of each configured
/// optimization.
pub fn info(cfg: &ExperimentConfig) -> Result<String, CliError> {
    let channel = cfg.channel()?;
    let mut s = String::new();
    s.push_str(&format!("model        {}\n", cfg.model_label()));
    s.push_str(&format!("digest       {}\n", channel.digest()));
    s.push_str(&format!(
        "alphabets    states {} inputs {} outputs {}\n",
        channel.num_states(),
        channel.num_inputs(),
        channel.num_outputs()
    ));
    s.push_str(&format!("constraint   {}\n", channel.constraint().name()));
    let pi = channel.stationary_state_dist();
    s.push_str(&format!("stationary   {pi:?}\n"));
    for b in cfg.bounds()? {
        let space = ContextSpace::new(&channel, b.u, b.v, b.m)?;
        let k = (1.0 / b.delta).round() as u64;
        let dim = space.admissible_count() as u64;
        let points = binomial(k + dim - 1, dim - 1);
        let params = cfg.dp_params(&b)?;
        let cands = match PolicyCandidates::new(&space, b.eta, params.policy_budget) {
            Ok(c) => c.count().to_string(),
            Err(e) => e.to_string(),
        };
        s.push_str(&format!(
            "bound ({},{},{})  delta {} eta {}  contexts {} admissible {}  grid points {}{}  policy candidates {}\n",
            b.u,
            b.v,
            b.m,
            b.delta,
            b.eta,
            space.size(),
            dim,
            points,
            if points > params.grid_budget as u128 { " (over budget)" } else { "" },
            cands
        ));
    }
    Ok(s)
}
