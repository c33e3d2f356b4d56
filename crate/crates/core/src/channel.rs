//! Non-controllable finite-state channels.
//!
//! A channel is described by a state transition matrix `P[s_prev][s]`, an
//! output kernel `W[x][s_prev][y]` and a hard input constraint. The joint law
//! of one channel use factors as `Pr(y, s | x, s_prev) = W[x][s_prev][y] * P[s_prev][s]`:
//! the state evolves freely, independent of inputs and outputs.

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;

use crate::error::{Error, Result};

const STOCHASTIC_TOL: f64 = 1e-12;

/// Deterministic input constraint with finite memory.
///
/// `allowed(history, next)` looks at the last `memory` inputs. With
/// `memory == 0` every input is always admissible.
#[derive(Debug, Clone, PartialEq)]
pub struct InputConstraint {
    name: String,
    memory: usize,
    num_inputs: usize,
    /// Indexed by `history_code * num_inputs + next`, most recent input least significant.
    mask: Vec<bool>,
}

impl InputConstraint {
    pub fn unconstrained(num_inputs: usize) -> Self {
        Self { name: "none".into(), memory: 0, num_inputs, mask: vec![true; num_inputs] }
    }

    /// Binary RLL(1,inf): no two consecutive ones.
    pub fn rll_1_inf() -> Self {
        // history 0 -> {0,1}; history 1 -> {0}
        Self { name: "rll_1_inf".into(), memory: 1, num_inputs: 2, mask: vec![true, true, true, false] }
    }

    /// Looks a constraint up in the registry ("none", "rll_1_inf").
    pub fn from_name(name: &str, num_inputs: usize) -> Result<Self> {
        match name {
            "none" => Ok(Self::unconstrained(num_inputs)),
            "rll_1_inf" => {
                if num_inputs != 2 {
                    return Err(Error::DimensionMismatch(format!(
                        "rll_1_inf needs a binary input alphabet, got {num_inputs}"
                    )));
                }
                Ok(Self::rll_1_inf())
            }
            other => Err(Error::UnknownConstraint(other.to_string())),
        }
    }

    /// Builds a constraint from an explicit mask.
    pub fn from_mask(name: &str, memory: usize, num_inputs: usize, mask: Vec<bool>) -> Result<Self> {
        let expected = num_inputs.pow(memory as u32) * num_inputs;
        if mask.len() != expected {
            return Err(Error::DimensionMismatch(format!(
                "constraint mask has {} entries, expected {expected}",
                mask.len()
            )));
        }
        Ok(Self { name: name.to_string(), memory, num_inputs, mask })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn memory(&self) -> usize {
        self.memory
    }

    pub fn num_inputs(&self) -> usize {
        self.num_inputs
    }

    /// `history` holds at least the last `memory` inputs, oldest first.
    pub fn allowed(&self, history: &[usize], next: usize) -> bool {
        if self.memory == 0 {
            return true;
        }
        let tail = &history[history.len() - self.memory..];
        let code = tail.iter().fold(0, |acc, &x| acc * self.num_inputs + x);
        self.mask[code * self.num_inputs + next]
    }

    /// True when every transition inside `window` respects the constraint.
    pub fn window_admissible(&self, window: &[usize]) -> bool {
        if self.memory == 0 {
            return true;
        }
        (self.memory..window.len()).all(|j| self.allowed(&window[j - self.memory..j], window[j]))
    }

    fn check_no_dead_end(&self) -> Result<()> {
        let histories = self.num_inputs.pow(self.memory as u32);
        for code in 0..histories {
            let hist = decode_digits(code, self.num_inputs, self.memory);
            if !self.window_admissible(&hist) {
                continue;
            }
            if !(0..self.num_inputs).any(|x| self.allowed(&hist, x)) {
                return Err(Error::DeadEndConstraint { history: hist });
            }
        }
        Ok(())
    }
}

/// Digits of `code` in base `base`, most significant first, `len` digits.
pub(crate) fn decode_digits(mut code: usize, base: usize, len: usize) -> Vec<usize> {
    let mut out = vec![0; len];
    for slot in out.iter_mut().rev() {
        *slot = code % base;
        code /= base;
    }
    out
}

/// Validated non-controllable finite-state channel. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSpec {
    num_states: usize,
    num_inputs: usize,
    num_outputs: usize,
    /// Row-major `P[s_prev][s]`.
    state_transition: Vec<f64>,
    /// `W[x][s_prev][y]`, flattened.
    output_kernel: Vec<f64>,
    constraint: InputConstraint,
}

impl ChannelSpec {
    /// Validates and builds a channel from nested matrices.
    pub fn new_fsc(
        state_transition: &[Vec<f64>],
        output_kernel: &[Vec<Vec<f64>>],
        constraint: InputConstraint,
    ) -> Result<Self> {
        let num_states = state_transition.len();
        let num_inputs = output_kernel.len();
        if num_states == 0 || num_inputs == 0 {
            return Err(Error::DimensionMismatch("empty state or input alphabet".into()));
        }
        let num_outputs = output_kernel
            .first()
            .and_then(|per_state| per_state.first())
            .map(|row| row.len())
            .unwrap_or(0);
        let mut p = Vec::with_capacity(num_states * num_states);
        for row in state_transition {
            if row.len() != num_states {
                return Err(Error::DimensionMismatch(format!(
                    "state transition row has {} entries, expected {num_states}",
                    row.len()
                )));
            }
            p.extend_from_slice(row);
        }
        let mut w = Vec::with_capacity(num_inputs * num_states * num_outputs);
        for per_state in output_kernel {
            if per_state.len() != num_states {
                return Err(Error::DimensionMismatch(format!(
                    "output kernel has {} state slices, expected {num_states}",
                    per_state.len()
                )));
            }
            for row in per_state {
                if row.len() != num_outputs {
                    return Err(Error::DimensionMismatch("ragged output kernel".into()));
                }
                w.extend_from_slice(row);
            }
        }
        Self::from_flat(num_states, num_inputs, num_outputs, p, w, constraint)
    }

    /// Builds a channel from row-major flat arrays.
    pub fn from_flat(
        num_states: usize,
        num_inputs: usize,
        num_outputs: usize,
        state_transition: Vec<f64>,
        output_kernel: Vec<f64>,
        constraint: InputConstraint,
    ) -> Result<Self> {
        if num_states == 0 || num_inputs == 0 || num_outputs == 0 {
            return Err(Error::DimensionMismatch("alphabet sizes must be positive".into()));
        }
        if state_transition.len() != num_states * num_states {
            return Err(Error::DimensionMismatch(format!(
                "state transition has {} entries, expected {}",
                state_transition.len(),
                num_states * num_states
            )));
        }
        if output_kernel.len() != num_inputs * num_states * num_outputs {
            return Err(Error::DimensionMismatch(format!(
                "output kernel has {} entries, expected {}",
                output_kernel.len(),
                num_inputs * num_states * num_outputs
            )));
        }
        if constraint.num_inputs() != num_inputs {
            return Err(Error::DimensionMismatch(format!(
                "constraint is over {} inputs, channel has {num_inputs}",
                constraint.num_inputs()
            )));
        }
        check_rows("state_transition", &state_transition, num_states)?;
        check_rows("output_kernel", &output_kernel, num_outputs)?;
        let spec = Self {
            num_states,
            num_inputs,
            num_outputs,
            state_transition,
            output_kernel,
            constraint,
        };
        if !spec.is_irreducible() {
            return Err(Error::Reducible);
        }
        spec.constraint.check_no_dead_end()?;
        Ok(spec)
    }

    /// Two-state Gilbert-Elliott channel (state 0 = good, 1 = bad), binary in/out, unconstrained.
    pub fn gilbert_elliott(p_b_given_g: f64, p_g_given_b: f64, eps_g: f64, eps_b: f64) -> Result<Self> {
        for (name, value) in [
            ("p_b_given_g", p_b_given_g),
            ("p_g_given_b", p_g_given_b),
            ("eps_g", eps_g),
            ("eps_b", eps_b),
        ] {
            if !(0.0..=1.0).contains(&value) {
                return Err(Error::ParameterOutOfRange { name, value });
            }
        }
        let p = vec![1.0 - p_b_given_g, p_b_given_g, p_g_given_b, 1.0 - p_g_given_b];
        let mut w = Vec::with_capacity(8);
        for x in 0..2 {
            for eps in [eps_g, eps_b] {
                for y in 0..2 {
                    w.push(if y == x { 1.0 - eps } else { eps });
                }
            }
        }
        Self::from_flat(2, 2, 2, p, w, InputConstraint::unconstrained(2))
    }

    /// Memoryless channel with a single state and the given `W[x][y]`.
    pub fn memoryless(kernel: &[Vec<f64>]) -> Result<Self> {
        let nested: Vec<Vec<Vec<f64>>> = kernel.iter().map(|row| vec![row.clone()]).collect();
        Self::new_fsc(&[vec![1.0]], &nested, InputConstraint::unconstrained(kernel.len()))
    }

    /// Single-state binary symmetric channel.
    pub fn bsc(eps: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&eps) {
            return Err(Error::ParameterOutOfRange { name: "eps", value: eps });
        }
        Self::memoryless(&[vec![1.0 - eps, eps], vec![eps, 1.0 - eps]])
    }

    /// Same channel with a different input constraint.
    pub fn with_constraint(mut self, constraint: InputConstraint) -> Result<Self> {
        if constraint.num_inputs() != self.num_inputs {
            return Err(Error::DimensionMismatch(format!(
                "constraint is over {} inputs, channel has {}",
                constraint.num_inputs(),
                self.num_inputs
            )));
        }
        constraint.check_no_dead_end()?;
        self.constraint = constraint;
        Ok(self)
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_inputs(&self) -> usize {
        self.num_inputs
    }

    pub fn num_outputs(&self) -> usize {
        self.num_outputs
    }

    pub fn constraint(&self) -> &InputConstraint {
        &self.constraint
    }

    /// `Pr(s_t = s | s_{t-1} = s_prev)`.
    #[inline]
    pub fn p(&self, s_prev: usize, s: usize) -> f64 {
        self.state_transition[s_prev * self.num_states + s]
    }

    /// `Pr(y_t = y | x_t = x, s_{t-1} = s_prev)`.
    #[inline]
    pub fn w(&self, x: usize, s_prev: usize, y: usize) -> f64 {
        self.output_kernel[(x * self.num_states + s_prev) * self.num_outputs + y]
    }

    /// Output distribution `W[x][s_prev][.]`.
    #[inline]
    pub fn w_row(&self, x: usize, s_prev: usize) -> &[f64] {
        let start = (x * self.num_states + s_prev) * self.num_outputs;
        &self.output_kernel[start..start + self.num_outputs]
    }

    /// Row `P[s_prev][.]`.
    #[inline]
    pub fn p_row(&self, s_prev: usize) -> &[f64] {
        &self.state_transition[s_prev * self.num_states..(s_prev + 1) * self.num_states]
    }

    pub fn state_transition(&self) -> &[f64] {
        &self.state_transition
    }

    pub fn output_kernel(&self) -> &[f64] {
        &self.output_kernel
    }

    /// Joint law of `(y, s)` after one use: entry `y * |S| + s`.
    pub fn joint_kernel(&self, x: usize, s_prev: usize) -> Result<Vec<f64>> {
        if x >= self.num_inputs {
            return Err(Error::IndexOutOfRange { index: x, limit: self.num_inputs });
        }
        if s_prev >= self.num_states {
            return Err(Error::IndexOutOfRange { index: s_prev, limit: self.num_states });
        }
        let mut out = Vec::with_capacity(self.num_outputs * self.num_states);
        for y in 0..self.num_outputs {
            for s in 0..self.num_states {
                out.push(self.w(x, s_prev, y) * self.p(s_prev, s));
            }
        }
        Ok(out)
    }

    /// Samples `(y, s)` given `(s_prev, x)`.
    pub fn step<R: Rng + ?Sized>(&self, s_prev: usize, x: usize, rng: &mut R) -> (usize, usize) {
        let y = sample_index(self.w_row(x, s_prev), rng.gen::<f64>());
        let s = sample_index(self.p_row(s_prev), rng.gen::<f64>());
        (y, s)
    }

    /// Stationary law of the state chain by lazy power iteration.
    pub fn stationary_state_dist(&self) -> Vec<f64> {
        let n = self.num_states;
        let mut pi = vec![1.0 / n as f64; n];
        let mut next = vec![0.0; n];
        for _ in 0..10_000_000 {
            // (P + I) / 2 has the same stationary law and is aperiodic
            for (s, slot) in next.iter_mut().enumerate() {
                *slot = 0.5 * pi[s];
            }
            for s_prev in 0..n {
                let mass = 0.5 * pi[s_prev];
                for (s, slot) in next.iter_mut().enumerate() {
                    *slot += mass * self.p(s_prev, s);
                }
            }
            let total: f64 = next.iter().sum();
            next.iter_mut().for_each(|v| *v /= total);
            std::mem::swap(&mut pi, &mut next);
            if self.stationary_residual(&pi) < 1e-13 {
                break;
            }
        }
        pi
    }

    /// `max_s |(pi P)(s) - pi(s)|`.
    pub fn stationary_residual(&self, pi: &[f64]) -> f64 {
        (0..self.num_states)
            .map(|s| {
                let flowed: f64 = (0..self.num_states).map(|sp| pi[sp] * self.p(sp, s)).sum();
                (flowed - pi[s]).abs()
            })
            .fold(0.0, f64::max)
    }

    fn is_irreducible(&self) -> bool {
        let n = self.num_states;
        let reach = |forward: bool| {
            let mut seen = vec![false; n];
            let mut stack = vec![0usize];
            seen[0] = true;
            while let Some(a) = stack.pop() {
                for b in 0..n {
                    let positive = if forward { self.p(a, b) > 0.0 } else { self.p(b, a) > 0.0 };
                    if positive && !seen[b] {
                        seen[b] = true;
                        stack.push(b);
                    }
                }
            }
            seen.into_iter().all(|v| v)
        };
        reach(true) && reach(false)
    }

    /// Canonical decimal serialization used for the digest.
    pub fn canonical_text(&self) -> String {
        let join = |v: &[f64]| v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(",");
        format!(
            "S={};X={};Y={};P={};W={};constraint={}",
            self.num_states,
            self.num_inputs,
            self.num_outputs,
            join(&self.state_transition),
            join(&self.output_kernel),
            self.constraint.name()
        )
    }

    /// Hex SHA-256 of [`Self::canonical_text`].
    pub fn digest(&self) -> String {
        let hash = Sha256::digest(self.canonical_text().as_bytes());
        hash.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Parses a channel definition file.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: ChannelFile = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        file.into_spec()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn to_file(&self) -> ChannelFile {
        ChannelFile {
            num_states: self.num_states,
            num_inputs: self.num_inputs,
            num_outputs: self.num_outputs,
            state_transition: self.state_transition.clone(),
            output_kernel: self.output_kernel.clone(),
            constraint: self.constraint.name().to_string(),
        }
    }
}

/// On-disk channel definition: matrices row-major, constraint by registry name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelFile {
    pub num_states: usize,
    pub num_inputs: usize,
    pub num_outputs: usize,
    /// `P[s_prev][s]`, row-major.
    pub state_transition: Vec<f64>,
    /// `W[x][s_prev][y]`, row-major.
    pub output_kernel: Vec<f64>,
    #[serde(default = "default_constraint")]
    pub constraint: String,
}

fn default_constraint() -> String {
    "none".into()
}

impl ChannelFile {
    pub fn into_spec(self) -> Result<ChannelSpec> {
        let constraint = InputConstraint::from_name(&self.constraint, self.num_inputs)?;
        ChannelSpec::from_flat(
            self.num_states,
            self.num_inputs,
            self.num_outputs,
            self.state_transition,
            self.output_kernel,
            constraint,
        )
    }
}

fn check_rows(what: &'static str, values: &[f64], row_len: usize) -> Result<()> {
    for (row, chunk) in values.chunks(row_len).enumerate() {
        let sum: f64 = chunk.iter().sum();
        let in_range = chunk.iter().all(|v| (0.0..=1.0).contains(v));
        if !in_range || (sum - 1.0).abs() > STOCHASTIC_TOL {
            return Err(Error::NonStochasticRow { what, row, sum });
        }
    }
    Ok(())
}

/// Inverse-CDF draw from a probability vector given a uniform variate in [0, 1).
#[inline]
pub fn sample_index(probs: &[f64], u01: f64) -> usize {
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last_positive = i;
            if u01 < acc {
                return i;
            }
        }
    }
    last_positive
}
