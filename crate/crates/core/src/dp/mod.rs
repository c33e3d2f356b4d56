//! Quantized value iteration over the belief simplex.

mod grid;
mod policy;
mod table;

use rayon::prelude::*;

pub use grid::{binomial, quantize, units_per_one, SimplexGrid, DEFAULT_GRID_BUDGET};
pub use policy::{PolicyCandidates, DEFAULT_POLICY_BUDGET};
pub(crate) use policy::input_laws;
pub use table::{PolicyMeta, PolicyTable};

use crate::belief::PolicyRow;
use crate::channel::ChannelSpec;
use crate::context::{ContextSpace, CONTEXT_ORDERING_VERSION};
use crate::error::Result;
use policy::{BackupModel, PointModel, Successor};

/// Leaves cached across iterations when their total count stays below this.
const LEAF_CACHE_LIMIT: usize = 8_000_000;

/// Inputs of one value-iteration run.
#[derive(Debug, Clone, PartialEq)]
pub struct DpParams {
    pub u: usize,
    pub v: usize,
    pub m: usize,
    pub delta: f64,
    pub eta: f64,
    pub n_iter: usize,
    pub grid_budget: u64,
    pub policy_budget: u64,
}

impl DpParams {
    pub fn new(u: usize, v: usize, m: usize, delta: f64, eta: f64, n_iter: usize) -> Self {
        Self {
            u,
            v,
            m,
            delta,
            eta,
            n_iter,
            grid_budget: DEFAULT_GRID_BUDGET,
            policy_budget: DEFAULT_POLICY_BUDGET,
        }
    }
}

/// Reward-to-go `J_k` over the grid, in bits.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardToGo {
    pub values: Vec<f64>,
    pub iteration: usize,
}

/// Result of [`value_iteration`].
#[derive(Debug, Clone)]
pub struct DpSolution {
    pub table: PolicyTable,
    /// `J_n`.
    pub reward: RewardToGo,
    /// `J_{n-1}`.
    pub previous: RewardToGo,
    /// Midpoint of the range of `J_n - J_{n-1}`.
    pub sigma: f64,
    /// Width of that range.
    pub span: f64,
    /// Span after each iteration `k = 1..=n`.
    pub span_history: Vec<f64>,
    /// One more backup against `J_n` under the extracted rows.
    pub next_values: Vec<f64>,
}

#[inline]
fn leaf_value(phi: f64, succ: &[Successor], j: &[f64]) -> f64 {
    let mut v = phi;
    for s in succ {
        v += s.prob * j[s.index as usize];
    }
    v
}

/// One Bellman backup at grid point `point`: best value and row, ties to the
/// lowest candidate index.
pub fn bellman_backup(
    channel: &ChannelSpec,
    space: &ContextSpace,
    grid: &SimplexGrid,
    candidates: &PolicyCandidates,
    j_prev: &[f64],
    point: usize,
) -> (f64, PolicyRow) {
    let model = BackupModel::new(channel, space, grid, candidates);
    let pm = model.point(&grid.point(point));
    let (value, digits) = best_leaf(&model, &pm, j_prev);
    (value, candidates.row_from_digits(space, &digits))
}

fn best_leaf(model: &BackupModel<'_>, pm: &PointModel, j: &[f64]) -> (f64, Vec<usize>) {
    let mut best = f64::NEG_INFINITY;
    let mut best_digits = Vec::new();
    model.visit(pm, |digits, phi, succ| {
        let v = leaf_value(phi, succ, j);
        if v > best {
            best = v;
            best_digits = digits.to_vec();
        }
    });
    (best, model.full_digits(pm, &best_digits))
}

struct LeafCache {
    phi: Vec<f64>,
    /// `num_outputs` slots per leaf; absent outputs have probability zero.
    succ: Vec<Successor>,
}

impl LeafCache {
    fn build(model: &BackupModel<'_>, pm: &PointModel, ny: usize) -> Self {
        let mut phi = Vec::with_capacity(pm.leaf_count());
        let mut succ = Vec::with_capacity(pm.leaf_count() * ny);
        model.visit(pm, |_, p, s| {
            phi.push(p);
            succ.extend_from_slice(s);
            succ.extend(std::iter::repeat_n(Successor::default(), ny - s.len()));
        });
        Self { phi, succ }
    }

    fn best(&self, ny: usize, j: &[f64]) -> f64 {
        let mut best = f64::NEG_INFINITY;
        for (phi, succ) in self.phi.iter().zip(self.succ.chunks(ny)) {
            let n = succ.iter().take_while(|s| s.prob > 0.0).count();
            let v = leaf_value(*phi, &succ[..n], j);
            if v > best {
                best = v;
            }
        }
        best
    }
}

/// Runs `n_iter` backups from `J_0 = 0` and extracts the policy with one
/// more backup against `J_n`.
///
/// Work is spread over the current rayon pool; results do not depend on its
/// size.
pub fn value_iteration(channel: &ChannelSpec, params: &DpParams) -> Result<DpSolution> {
    let space = ContextSpace::new(channel, params.u, params.v, params.m)?;
    let grid = SimplexGrid::new(space.admissible(), params.delta, params.grid_budget)?;
    let candidates = PolicyCandidates::new(&space, params.eta, params.policy_budget)?;
    let model = BackupModel::new(channel, &space, &grid, &candidates);
    let ny = channel.num_outputs();

    let points: Vec<PointModel> = (0..grid.len()).into_par_iter().map(|i| model.point(&grid.point(i))).collect();
    let total_leaves: usize = points.iter().map(|p| p.leaf_count()).sum();
    let cache: Option<Vec<LeafCache>> = (total_leaves <= LEAF_CACHE_LIMIT)
        .then(|| points.par_iter().map(|pm| LeafCache::build(&model, pm, ny)).collect());

    let mut j_prev = vec![0.0; grid.len()];
    let mut j = j_prev.clone();
    let mut span_history = Vec::with_capacity(params.n_iter);
    for _ in 0..params.n_iter {
        let next: Vec<f64> = match &cache {
            Some(c) => c.par_iter().map(|lc| lc.best(ny, &j)).collect(),
            None => points.par_iter().map(|pm| best_leaf(&model, pm, &j).0).collect(),
        };
        j_prev = std::mem::replace(&mut j, next);
        span_history.push(diff_range(&j, &j_prev).1);
    }
    let (sigma, span) = diff_range(&j, &j_prev);
    let sigma = if params.n_iter == 0 { 0.0 } else { sigma };

    let extracted: Vec<(f64, Vec<usize>)> = points.par_iter().map(|pm| best_leaf(&model, pm, &j)).collect();
    let next_values = extracted.iter().map(|(v, _)| *v).collect();
    let rows = extracted.iter().map(|(_, d)| candidates.row_from_digits(&space, d)).collect();
    let meta = PolicyMeta {
        channel_digest: channel.digest(),
        u: params.u,
        v: params.v,
        m: params.m,
        delta_units: grid.units(),
        eta_units: units_per_one(params.eta, "eta")?,
        n_iter: params.n_iter,
        num_inputs: channel.num_inputs(),
        admissible: space.admissible().to_vec(),
        ordering_version: CONTEXT_ORDERING_VERSION,
        sigma,
        span,
    };
    let table = PolicyTable::new(meta, grid, rows)?;
    Ok(DpSolution {
        table,
        reward: RewardToGo { values: j, iteration: params.n_iter },
        previous: RewardToGo { values: j_prev, iteration: params.n_iter.saturating_sub(1) },
        sigma,
        span,
        span_history,
        next_values,
    })
}

/// Midpoint and width of the range of `a - b`.
fn diff_range(a: &[f64], b: &[f64]) -> (f64, f64) {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for (x, y) in a.iter().zip(b) {
        let d = x - y;
        lo = lo.min(d);
        hi = hi.max(d);
    }
    (0.5 * (lo + hi), hi - lo)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::InputConstraint;
    use crate::info::h2;

    #[test]
    fn bsc_anchor() {
        let bsc = ChannelSpec::bsc(0.1).unwrap();
        let sol = value_iteration(&bsc, &DpParams::new(0, 0, 0, 0.5, 0.01, 30)).unwrap();
        assert!((sol.sigma - (1.0 - h2(0.1))).abs() < 0.005, "sigma {}", sol.sigma);
        let p1 = sol.table.row(0).prob(0, 1);
        assert!((p1 - 0.5).abs() <= 0.01 + 1e-12);
    }

    #[test]
    fn myopic_first_step() {
        let ge = ChannelSpec::gilbert_elliott(0.3, 0.3, 0.05, 0.4)
            .unwrap()
            .with_constraint(InputConstraint::rll_1_inf())
            .unwrap();
        let space = ContextSpace::new(&ge, 1, 1, 1).unwrap();
        let grid = SimplexGrid::new(space.admissible(), 0.25, DEFAULT_GRID_BUDGET).unwrap();
        let cands = PolicyCandidates::new(&space, 0.25, DEFAULT_POLICY_BUDGET).unwrap();
        let zero = vec![0.0; grid.len()];
        for p in [0, 7, grid.len() - 1] {
            let (value, row) = bellman_backup(&ge, &space, &grid, &cands, &zero, p);
            let alpha = grid.point(p);
            let direct = crate::info::stage_reward(&ge, &space, &alpha, &row);
            assert!((value - direct).abs() < 1e-12);
            for c in 0..cands.count() {
                let r = cands.row(&space, c);
                assert!(crate::info::stage_reward(&ge, &space, &alpha, &r) <= value + 1e-12);
            }
        }
    }

    #[test]
    fn degenerate_channel_ties_to_row_zero() {
        let flat = ChannelSpec::from_flat(2, 2, 2, vec![0.5; 4], vec![0.5; 8], InputConstraint::unconstrained(2)).unwrap();
        let space = ContextSpace::new(&flat, 1, 1, 1).unwrap();
        let grid = SimplexGrid::new(space.admissible(), 0.5, DEFAULT_GRID_BUDGET).unwrap();
        let cands = PolicyCandidates::new(&space, 0.5, DEFAULT_POLICY_BUDGET).unwrap();
        let j: Vec<f64> = (0..grid.len()).map(|i| i as f64 * 0.1).collect();
        let (value, row) = bellman_backup(&flat, &space, &grid, &cands, &j, 3);
        assert_eq!(row, cands.row(&space, 0));
        assert!(value >= 0.0);
    }

    #[test]
    fn value_iteration_invariants() {
        let ge = ChannelSpec::gilbert_elliott(0.3, 0.3, 0.001, 0.5)
            .unwrap()
            .with_constraint(InputConstraint::rll_1_inf())
            .unwrap();
        let sol = value_iteration(&ge, &DpParams::new(1, 1, 1, 0.2, 0.2, 15)).unwrap();
        for (a, b) in sol.reward.values.iter().zip(&sol.previous.values) {
            assert!(a >= b);
        }
        for (nx, j) in sol.next_values.iter().zip(&sol.reward.values) {
            assert!((nx - (j + sol.sigma)).abs() <= sol.span / 2.0 + 1e-9);
        }
        assert_eq!(sol.table.len(), binomial(8, 3) as usize);
    }

    #[test]
    fn policy_file_round_trip() {
        let ge = ChannelSpec::gilbert_elliott(0.3, 0.3, 0.001, 0.5)
            .unwrap()
            .with_constraint(InputConstraint::rll_1_inf())
            .unwrap();
        let sol = value_iteration(&ge, &DpParams::new(0, 1, 1, 0.5, 0.25, 5)).unwrap();
        let text = sol.table.to_text();
        let back = PolicyTable::from_text(&text).unwrap();
        assert_eq!(back.meta(), sol.table.meta());
        for i in 0..back.len() {
            assert_eq!(back.row(i), sol.table.row(i));
        }
        assert_eq!(back.to_text(), text);
        assert!(PolicyTable::from_text(&text.replace("ordering 1", "ordering 9")).is_err());
    }
}
