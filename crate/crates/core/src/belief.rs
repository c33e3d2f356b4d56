//! Forward (BCJR) recursion for the transmitter's a-posteriori belief.
//!
//! `alpha_{t-1}(l) = Pr(context_{t-1} = l | y^{t-u-1})`. One step appends the
//! new input and the state `s_{t-u}` to the context and conditions on the
//! delayed output `y_{t-u}`.

use std::ops::Deref;

use crate::channel::ChannelSpec;
use crate::context::ContextSpace;
use crate::error::{Error, Result};

/// Observations below this mass are treated as structurally impossible.
pub const IMPOSSIBLE_MASS: f64 = 1e-300;

/// Belief over contexts; a point on the simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct AlphaVector(Vec<f64>);

impl AlphaVector {
    /// Wraps raw values without checks.
    pub fn from_vec(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn is_on_simplex(&self, tol: f64) -> bool {
        self.0.iter().all(|&a| (0.0..=1.0 + tol).contains(&a)) && (self.0.iter().sum::<f64>() - 1.0).abs() <= tol
    }
}

impl Deref for AlphaVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// Input distributions for every context at one belief point.
///
/// Row `l` is `probs[l * |X| .. (l + 1) * |X|]`; inputs forbidden by the
/// constraint carry exactly zero.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyRow {
    num_inputs: usize,
    probs: Vec<f64>,
}

impl PolicyRow {
    /// Validates sums and constraint zeros.
    pub fn new(space: &ContextSpace, probs: Vec<f64>) -> Result<Self> {
        let nx = space.num_inputs();
        if probs.len() != space.size() * nx {
            return Err(Error::DimensionMismatch(format!(
                "policy row has {} entries, expected {}",
                probs.len(),
                space.size() * nx
            )));
        }
        for (ctx, chunk) in probs.chunks(nx).enumerate() {
            let sum: f64 = chunk.iter().sum();
            if (sum - 1.0).abs() > 1e-12 || chunk.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
                return Err(Error::NonStochasticRow { what: "policy row", row: ctx, sum });
            }
            let allowed = space.allowed_inputs(ctx);
            if chunk.iter().enumerate().any(|(x, &p)| p != 0.0 && !allowed.contains(&x)) {
                return Err(Error::InvalidParameters(format!(
                    "policy row for context {ctx} puts mass on a forbidden input"
                )));
            }
        }
        Ok(Self { num_inputs: nx, probs })
    }

    /// Uniform over the admissible inputs of every context (the i.u.d. source
    /// when unconstrained).
    pub fn uniform(space: &ContextSpace) -> Self {
        let nx = space.num_inputs();
        let mut probs = vec![0.0; space.size() * nx];
        for ctx in 0..space.size() {
            let allowed = space.allowed_inputs(ctx);
            for &x in allowed {
                probs[ctx * nx + x] = 1.0 / allowed.len() as f64;
            }
        }
        Self { num_inputs: nx, probs }
    }

    /// Same input law in every context, restricted and renormalized to the
    /// allowed inputs.
    pub fn context_free(space: &ContextSpace, law: &[f64]) -> Result<Self> {
        let nx = space.num_inputs();
        let mut probs = vec![0.0; space.size() * nx];
        for ctx in 0..space.size() {
            let allowed = space.allowed_inputs(ctx);
            let total: f64 = allowed.iter().map(|&x| law[x]).sum();
            for &x in allowed {
                probs[ctx * nx + x] = if total > 0.0 { law[x] / total } else { 1.0 / allowed.len() as f64 };
            }
        }
        Self::new(space, probs)
    }

    pub(crate) fn from_parts(num_inputs: usize, probs: Vec<f64>) -> Self {
        Self { num_inputs, probs }
    }

    #[inline]
    pub fn prob(&self, ctx: usize, x: usize) -> f64 {
        self.probs[ctx * self.num_inputs + x]
    }

    #[inline]
    pub fn row(&self, ctx: usize) -> &[f64] {
        &self.probs[ctx * self.num_inputs..(ctx + 1) * self.num_inputs]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.probs
    }

    pub fn num_inputs(&self) -> usize {
        self.num_inputs
    }
}

/// Initial belief: uniform over admissible input windows times the
/// stationary law of the state window.
pub fn alpha_init(channel: &ChannelSpec, space: &ContextSpace) -> AlphaVector {
    let pi = channel.stationary_state_dist();
    let mut values = vec![0.0; space.size()];
    for (ctx, slot) in values.iter_mut().enumerate() {
        if !space.is_admissible(ctx) {
            continue;
        }
        let ss = &space.step_info(ctx).ss;
        let mut p = pi[ss[0]];
        for pair in ss.windows(2) {
            p *= channel.p(pair[0], pair[1]);
        }
        *slot = p;
    }
    normalize(&mut values);
    AlphaVector(values)
}

/// Joint table `T[l' * |Y| + y]` of the next context and the delayed output.
pub fn transition_weights(
    channel: &ChannelSpec,
    space: &ContextSpace,
    alpha: &[f64],
    row: &PolicyRow,
) -> Vec<f64> {
    let ny = channel.num_outputs();
    let ns = channel.num_states();
    let mut table = vec![0.0; space.size() * ny];
    for (ctx, &a) in alpha.iter().enumerate() {
        if a == 0.0 {
            continue;
        }
        let s_prev = space.latest_state(ctx);
        for &x in space.allowed_inputs(ctx) {
            let px = a * row.prob(ctx, x);
            if px == 0.0 {
                continue;
            }
            let x_at = space.delayed_input(ctx, x);
            let w = channel.w_row(x_at, s_prev);
            for s in 0..ns {
                let ps = px * channel.p(s_prev, s);
                if ps == 0.0 {
                    continue;
                }
                let base = space.successor(ctx, x, s) * ny;
                for (y, &wy) in w.iter().enumerate() {
                    table[base + y] += ps * wy;
                }
            }
        }
    }
    table
}

/// `Pr(y_{t-u} | alpha, policy)`.
pub fn disturbance_dist(channel: &ChannelSpec, space: &ContextSpace, alpha: &[f64], row: &PolicyRow) -> Vec<f64> {
    let ny = channel.num_outputs();
    let table = transition_weights(channel, space, alpha, row);
    let mut out = vec![0.0; ny];
    for chunk in table.chunks(ny) {
        for (y, &t) in chunk.iter().enumerate() {
            out[y] += t;
        }
    }
    out
}

/// One BCJR step conditioned on the observed delayed output.
pub fn alpha_update(
    channel: &ChannelSpec,
    space: &ContextSpace,
    alpha: &[f64],
    row: &PolicyRow,
    y_observed: usize,
) -> Result<AlphaVector> {
    let ny = channel.num_outputs();
    if y_observed >= ny {
        return Err(Error::LetterOutOfRange { letter: y_observed, size: ny });
    }
    let table = transition_weights(channel, space, alpha, row);
    let mut next: Vec<f64> = table.chunks(ny).map(|c| c[y_observed]).collect();
    let total: f64 = next.iter().sum();
    if total < IMPOSSIBLE_MASS {
        return Err(Error::ImpossibleObservation);
    }
    next.iter_mut().for_each(|v| *v /= total);
    Ok(AlphaVector(next))
}

/// One step without an observation (used while `t - u < 1`).
pub fn alpha_predict(channel: &ChannelSpec, space: &ContextSpace, alpha: &[f64], row: &PolicyRow) -> AlphaVector {
    let ny = channel.num_outputs();
    let table = transition_weights(channel, space, alpha, row);
    let mut next: Vec<f64> = table.chunks(ny).map(|c| c.iter().sum()).collect();
    normalize(&mut next);
    AlphaVector(next)
}

pub(crate) fn normalize(values: &mut [f64]) {
    let total: f64 = values.iter().sum();
    if total > 0.0 {
        values.iter_mut().for_each(|v| *v /= total);
    }
}
