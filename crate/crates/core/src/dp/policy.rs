//! Candidate policy rows on the eta-grid and the per-belief backup model.

use crate::belief::PolicyRow;
use crate::channel::ChannelSpec;
use crate::context::ContextSpace;
use crate::dp::grid::{binomial, quantize_into, units_per_one, SimplexGrid};
use crate::error::{Error, Result};
use crate::info::{OutputWindowKernel, WindowLayout};

/// Default cap on the number of joint candidates.
pub const DEFAULT_POLICY_BUDGET: u64 = 1_000_000;

/// Cartesian product of eta-grid input laws over the free contexts.
///
/// A context is free when it is admissible and allows more than one input.
/// Candidate indices are mixed-radix with the first free context most
/// significant.
#[derive(Debug, Clone)]
pub struct PolicyCandidates {
    num_inputs: usize,
    /// Default law for every context (option 0 for free ones).
    base: Vec<f64>,
    free: Vec<usize>,
    /// `options[k]` lists the laws (length |X|) available to `free[k]`.
    options: Vec<Vec<Vec<f64>>>,
    count: u128,
}

impl PolicyCandidates {
    pub fn new(space: &ContextSpace, eta: f64, budget: u64) -> Result<Self> {
        let units = units_per_one(eta, "eta")?;
        let nx = space.num_inputs();
        let mut base = vec![0.0; space.size() * nx];
        let mut free = Vec::new();
        let mut options = Vec::new();
        let mut count: u128 = 1;
        for ctx in 0..space.size() {
            let allowed = space.allowed_inputs(ctx);
            let laws = if allowed.len() > 1 && space.is_admissible(ctx) {
                let laws = input_laws(nx, allowed, units);
                count = count.saturating_mul(laws.len() as u128);
                free.push(ctx);
                laws
            } else {
                let mut law = vec![0.0; nx];
                law[allowed[0]] = 1.0;
                vec![law]
            };
            base[ctx * nx..(ctx + 1) * nx].copy_from_slice(&laws[0]);
            if allowed.len() > 1 && space.is_admissible(ctx) {
                options.push(laws);
            }
        }
        if count > budget as u128 {
            return Err(Error::PolicySpaceTooLarge { count, budget });
        }
        Ok(Self { num_inputs: nx, base, free, options, count })
    }

    pub fn count(&self) -> u128 {
        self.count
    }

    pub fn free_contexts(&self) -> &[usize] {
        &self.free
    }

    pub fn options(&self, k: usize) -> &[Vec<f64>] {
        &self.options[k]
    }

    /// Row for per-free-context option digits.
    pub fn row_from_digits(&self, space: &ContextSpace, digits: &[usize]) -> PolicyRow {
        let nx = self.num_inputs;
        let mut probs = self.base.clone();
        for (k, (&ctx, &d)) in self.free.iter().zip(digits).enumerate() {
            probs[ctx * nx..(ctx + 1) * nx].copy_from_slice(&self.options[k][d]);
        }
        PolicyRow::new(space, probs).expect("candidate rows are valid by construction")
    }

    /// Row for a mixed-radix candidate index.
    pub fn row(&self, space: &ContextSpace, mut index: u128) -> PolicyRow {
        let mut digits = vec![0; self.free.len()];
        for k in (0..self.free.len()).rev() {
            let radix = self.options[k].len() as u128;
            digits[k] = (index % radix) as usize;
            index /= radix;
        }
        self.row_from_digits(space, &digits)
    }

    /// Mixed-radix index of option digits.
    pub fn index_of(&self, digits: &[usize]) -> u128 {
        digits.iter().zip(&self.options).fold(0u128, |acc, (&d, opts)| acc * opts.len() as u128 + d as u128)
    }
}

/// Eta-grid laws over `allowed`, ordered so that for binary inputs the
/// probability of the last allowed input rises from 0 to 1.
pub(crate) fn input_laws(nx: usize, allowed: &[usize], units: u32) -> Vec<Vec<f64>> {
    let parts = allowed.len();
    let mut comps = Vec::with_capacity(binomial(units as u64 + parts as u64 - 1, parts as u64 - 1) as usize);
    let mut current = vec![0u32; parts];
    fn rec(current: &mut [u32], pos: usize, remaining: u32, out: &mut Vec<Vec<u32>>) {
        if pos + 1 == current.len() {
            current[pos] = remaining;
            out.push(current.to_vec());
            return;
        }
        for n in 0..=remaining {
            current[pos] = n;
            rec(current, pos + 1, remaining - n, out);
        }
    }
    rec(&mut current, 0, units, &mut comps);
    comps.reverse();
    comps
        .into_iter()
        .map(|c| {
            let mut law = vec![0.0; nx];
            for (&x, &n) in allowed.iter().zip(&c) {
                law[x] = n as f64 / units as f64;
            }
            law
        })
        .collect()
}

/// Outcome of one leaf: stage reward and, per delayed output with positive
/// probability, `(probability, successor grid index)`.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct Successor {
    pub prob: f64,
    pub index: u32,
}

/// Everything about the controlled system that does not depend on the
/// belief: kernels, layouts and index maps.
#[derive(Debug)]
pub(crate) struct BackupModel<'a> {
    pub channel: &'a ChannelSpec,
    pub space: &'a ContextSpace,
    pub grid: &'a SimplexGrid,
    pub candidates: &'a PolicyCandidates,
    kernel: OutputWindowKernel,
    layout: WindowLayout,
    /// `H(Y_t | Y_{t-u}^{t-1})` per kernel row; used when `u == v`.
    kernel_entropy: Vec<f64>,
    /// Position of a context among admissible ones.
    adm_pos: Vec<usize>,
    linear: bool,
    num_outputs: usize,
    reward_len: usize,
    vec_len: usize,
}

impl<'a> BackupModel<'a> {
    pub fn new(
        channel: &'a ChannelSpec,
        space: &'a ContextSpace,
        grid: &'a SimplexGrid,
        candidates: &'a PolicyCandidates,
    ) -> Self {
        let kernel = OutputWindowKernel::new(channel, space.u());
        let layout = WindowLayout::new(space);
        let rows = channel.num_inputs().pow(space.u() as u32 + 1) * channel.num_states();
        let kernel_entropy = (0..rows).map(|i| kernel.row_conditional_entropy(i)).collect();
        let mut adm_pos = vec![usize::MAX; space.size()];
        for (pos, &ctx) in grid.admissible_index().iter().enumerate() {
            adm_pos[ctx] = pos;
        }
        let linear = space.u() == space.v();
        let reward_len = if linear { 1 + kernel.ywin_size() } else { layout.num_a * kernel.ywin_size() };
        let num_outputs = channel.num_outputs();
        let vec_len = reward_len + num_outputs * grid.admissible_index().len();
        Self {
            channel,
            space,
            grid,
            candidates,
            kernel,
            layout,
            kernel_entropy,
            adm_pos,
            linear,
            num_outputs,
            reward_len,
            vec_len,
        }
    }

    /// Adds the contribution of context `ctx` choosing input law `law`,
    /// scaled by the belief mass `mass`.
    fn accumulate(&self, ctx: usize, mass: f64, law: &[f64], acc: &mut [f64]) {
        let nx = self.space.num_inputs();
        let ywin = self.kernel.ywin_size();
        let madm = self.grid.admissible_index().len();
        let s_prev = self.space.latest_state(ctx);
        for &x in self.space.allowed_inputs(ctx) {
            let w = mass * law[x];
            if w == 0.0 {
                continue;
            }
            let atom = ctx * nx + x;
            let krow = self.layout.kernel_index[atom];
            if self.linear {
                acc[0] += w * self.kernel_entropy[krow];
                for (d, &l) in acc[1..1 + ywin].iter_mut().zip(self.kernel.row(krow)) {
                    *d += w * l;
                }
            } else {
                let a = self.layout.a_index[atom];
                for (d, &l) in acc[a * ywin..(a + 1) * ywin].iter_mut().zip(self.kernel.row(krow)) {
                    *d += w * l;
                }
            }
            let trans = &mut acc[self.reward_len..];
            let x_at = self.space.delayed_input(ctx, x);
            let wrow = self.channel.w_row(x_at, s_prev);
            for s in 0..self.space.num_states() {
                let ps = w * self.channel.p(s_prev, s);
                if ps == 0.0 {
                    continue;
                }
                let pos = self.adm_pos[self.space.successor(ctx, x, s)];
                for (y, &wy) in wrow.iter().enumerate() {
                    trans[y * madm + pos] += ps * wy;
                }
            }
        }
    }

    /// Stage reward in bits from an accumulated vector.
    fn reward(&self, acc: &[f64]) -> f64 {
        let ny = self.num_outputs;
        let ywin = self.kernel.ywin_size();
        if self.linear {
            let cond = conditional_entropy(&acc[1..1 + ywin], ny);
            (cond - acc[0]).max(0.0)
        } else {
            joint_conditional_mi(&acc[..self.reward_len], ywin, ny)
        }
    }

    /// Precomputes option contributions at one belief.
    pub fn point(&self, alpha: &[f64]) -> PointModel {
        let mut base = vec![0.0; self.vec_len];
        for (ctx, &a) in alpha.iter().enumerate() {
            if a > 0.0 && !self.candidates.free.contains(&ctx) {
                let nx = self.space.num_inputs();
                self.accumulate(ctx, a, &self.candidates.base[ctx * nx..(ctx + 1) * nx], &mut base);
            }
        }
        let mut active = Vec::new();
        let mut contributions = Vec::new();
        for (k, &ctx) in self.candidates.free.iter().enumerate() {
            if alpha[ctx] == 0.0 {
                continue;
            }
            let opts = &self.candidates.options[k];
            let mut block = vec![0.0; opts.len() * self.vec_len];
            for (o, law) in opts.iter().enumerate() {
                self.accumulate(ctx, alpha[ctx], law, &mut block[o * self.vec_len..(o + 1) * self.vec_len]);
            }
            active.push((k, opts.len()));
            contributions.push(block);
        }
        PointModel { base, active, contributions }
    }

    /// Visits every candidate at `point` in increasing index order.
    ///
    /// The callback gets the option digits of the active (positive-mass)
    /// free contexts, the stage reward and the successors.
    pub fn visit<F: FnMut(&[usize], f64, &[Successor])>(&self, point: &PointModel, mut f: F) {
        let depth = point.active.len();
        let mut stack = vec![0.0; (depth + 1) * self.vec_len];
        stack[..self.vec_len].copy_from_slice(&point.base);
        let mut digits = vec![0usize; depth];
        let madm = self.grid.admissible_index().len();
        let mut scratch = LeafScratch {
            units: vec![0; madm],
            rem: vec![0.0; madm],
            succ: vec![Successor::default(); self.num_outputs],
        };
        self.descend(point, 0, &mut stack, &mut digits, &mut scratch, &mut f);
    }

    fn descend<F: FnMut(&[usize], f64, &[Successor])>(
        &self,
        point: &PointModel,
        level: usize,
        stack: &mut [f64],
        digits: &mut [usize],
        scratch: &mut LeafScratch,
        f: &mut F,
    ) {
        let len = self.vec_len;
        if level == point.active.len() {
            let acc = &stack[level * len..(level + 1) * len];
            let phi = self.reward(acc);
            let n = self.successors(&acc[self.reward_len..], scratch);
            f(digits, phi, &scratch.succ[..n]);
            return;
        }
        let (_, radix) = point.active[level];
        for o in 0..radix {
            let (lo, hi) = stack.split_at_mut((level + 1) * len);
            let parent = &lo[level * len..];
            let child = &mut hi[..len];
            let contrib = &point.contributions[level][o * len..(o + 1) * len];
            for ((c, &p), &q) in child.iter_mut().zip(parent).zip(contrib) {
                *c = p + q;
            }
            digits[level] = o;
            self.descend(point, level + 1, stack, digits, scratch, f);
        }
    }

    fn successors(&self, trans: &[f64], scratch: &mut LeafScratch) -> usize {
        let madm = self.grid.admissible_index().len();
        let units = self.grid.units();
        let mut n = 0;
        for slice in trans.chunks(madm) {
            let prob: f64 = slice.iter().sum();
            if prob <= 0.0 {
                continue;
            }
            quantize_into(slice, units as f64 / prob, units, &mut scratch.units, &mut scratch.rem);
            scratch.succ[n] = Successor { prob, index: self.grid.rank_units(&scratch.units) as u32 };
            n += 1;
        }
        n
    }

    /// Expands active digits into digits over all free contexts (inactive
    /// ones pinned to option 0).
    pub fn full_digits(&self, point: &PointModel, active_digits: &[usize]) -> Vec<usize> {
        let mut full = vec![0; self.candidates.free.len()];
        for (&(k, _), &d) in point.active.iter().zip(active_digits) {
            full[k] = d;
        }
        full
    }
}

struct LeafScratch {
    units: Vec<i64>,
    rem: Vec<f64>,
    succ: Vec<Successor>,
}

/// Per-belief option contributions.
#[derive(Debug, Clone)]
pub(crate) struct PointModel {
    base: Vec<f64>,
    /// `(free-context slot, number of options)` for contexts with positive mass.
    active: Vec<(usize, usize)>,
    contributions: Vec<Vec<f64>>,
}

impl PointModel {
    pub fn leaf_count(&self) -> usize {
        self.active.iter().map(|&(_, r)| r).product()
    }
}

/// `H(Y_t | Y_{t-u}^{t-1})` from an unnormalized window law.
fn conditional_entropy(yw: &[f64], ny: usize) -> f64 {
    let mut h = 0.0;
    for chunk in yw.chunks(ny) {
        let total: f64 = chunk.iter().sum();
        if total > 0.0 {
            for &q in chunk {
                if q > 0.0 {
                    h += q * (total / q).log2();
                }
            }
        }
    }
    h
}

/// `I(A; Y_t | Y_{t-u}^{t-1})` from a dense `(a, ywin)` table.
fn joint_conditional_mi(table: &[f64], ywin: usize, ny: usize) -> f64 {
    let mut q_yw = vec![0.0; ywin];
    for row in table.chunks(ywin) {
        for (acc, &q) in q_yw.iter_mut().zip(row) {
            *acc += q;
        }
    }
    let mut mi = conditional_entropy(&q_yw, ny);
    for row in table.chunks(ywin) {
        mi -= conditional_entropy(row, ny);
    }
    mi.max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::belief::alpha_init;
    use crate::channel::InputConstraint;
    use crate::info::stage_reward;

    #[test]
    fn candidate_examples() {
        let bsc = ChannelSpec::bsc(0.1).unwrap();
        let sp = ContextSpace::new(&bsc, 0, 0, 0).unwrap();
        let c = PolicyCandidates::new(&sp, 0.5, DEFAULT_POLICY_BUDGET).unwrap();
        assert_eq!(c.count(), 3);
        let p1: Vec<f64> = (0..3).map(|i| c.row(&sp, i).prob(0, 1)).collect();
        assert_eq!(p1, vec![0.0, 0.5, 1.0]);

        let ge = ChannelSpec::gilbert_elliott(0.3, 0.3, 0.001, 0.5)
            .unwrap()
            .with_constraint(InputConstraint::rll_1_inf())
            .unwrap();
        let sp = ContextSpace::new(&ge, 1, 1, 1).unwrap();
        let c = PolicyCandidates::new(&sp, 0.1, DEFAULT_POLICY_BUDGET).unwrap();
        assert_eq!(c.count(), 121);
        assert_eq!(c.free_contexts().len(), 2);
        let row = c.row(&sp, 57);
        let ctx_after_one = sp.encode(&[1], &[0]).unwrap();
        assert_eq!(row.row(ctx_after_one), &[1.0, 0.0]);
        assert_eq!(c.index_of(&[5, 2]), 57);
        assert!(matches!(
            PolicyCandidates::new(&sp, 0.01, 1000),
            Err(Error::PolicySpaceTooLarge { count: 10201, budget: 1000 })
        ));
    }

    #[test]
    fn leaf_reward_matches_stage_reward() {
        let ge = ChannelSpec::gilbert_elliott(0.2, 0.4, 0.05, 0.3)
            .unwrap()
            .with_constraint(InputConstraint::rll_1_inf())
            .unwrap();
        for (u, v, m) in [(0, 0, 1), (1, 1, 1), (0, 1, 1), (2, 2, 2)] {
            let sp = ContextSpace::new(&ge, u, v, m).unwrap();
            let grid = SimplexGrid::new(sp.admissible(), 0.5, 1_000_000).unwrap();
            let cands = PolicyCandidates::new(&sp, 0.5, 1_000_000).unwrap();
            let model = BackupModel::new(&ge, &sp, &grid, &cands);
            let alpha = alpha_init(&ge, &sp);
            let point = model.point(&alpha);
            let mut seen = 0;
            model.visit(&point, |digits, phi, succ| {
                let row = cands.row_from_digits(&sp, &model.full_digits(&point, digits));
                let direct = stage_reward(&ge, &sp, &alpha, &row);
                assert!((phi - direct).abs() < 1e-12, "({u},{v},{m}): {phi} vs {direct}");
                let total: f64 = succ.iter().map(|s| s.prob).sum();
                assert!((total - 1.0).abs() < 1e-12);
                seen += 1;
            });
            assert_eq!(seen, point.leaf_count());
            assert_eq!(seen as u128, cands.count());
        }
    }
}
