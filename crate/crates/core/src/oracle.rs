//! Brute-force enumeration of short trajectories.
//!
//! Every quantity here is computed from the exact joint law of the
//! prehistory and `(x_t, s_t, y_t)` for `t = 1..N`, by summing over all
//! trajectories. The results serve as ground truth for the filter, the
//! window identities and the Monte Carlo estimator.

use std::cell::RefCell;
use std::collections::HashMap;
use std::rc::Rc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::belief::{alpha_init, alpha_predict, alpha_update, AlphaVector, PolicyRow};
use crate::channel::{ChannelSpec, InputConstraint};
use crate::context::{ContextSpace, CONTEXT_ORDERING_VERSION};
use crate::dp::{PolicyMeta, PolicyTable, SimplexGrid, DEFAULT_GRID_BUDGET};
use crate::error::{Error, Result};
use crate::info::plogp;
use crate::mc::{PreparedSource, ReceiverLayout, Source};

/// Default cap on enumerated trajectories.
pub const DEFAULT_ENUMERATION_BUDGET: u64 = 100_000_000;
/// Cap on dense table entries per time step.
const TABLE_BUDGET: u64 = 1 << 26;

/// Histories at one node of the enumeration tree.
#[derive(Debug, Clone, Default)]
pub struct History {
    /// `x_{1-m}..x_t`.
    pub xs: Vec<usize>,
    /// `s_{1-L}..s_t`.
    pub ss: Vec<usize>,
    /// `y_1..y_t`.
    pub ys: Vec<usize>,
    /// Prehistory lengths `(m, L)`.
    pub pre: (usize, usize),
}

impl History {
    pub fn t(&self) -> usize {
        self.ys.len()
    }

    /// `x_tau` for `tau >= 1 - m`.
    pub fn x(&self, tau: isize) -> usize {
        self.xs[(tau + self.pre.0 as isize - 1) as usize]
    }

    /// `s_tau` for `tau >= 1 - L`.
    pub fn s(&self, tau: isize) -> usize {
        self.ss[(tau + self.pre.1 as isize - 1) as usize]
    }
}

/// Depth-first enumerator of all trajectories of a source on a channel.
///
/// The transmitter's belief (for table sources) is updated with `model`,
/// which normally equals `channel`; a different `model` gives a negative
/// control.
pub struct Enumerator<'a> {
    channel: &'a ChannelSpec,
    model: &'a ChannelSpec,
    source: PreparedSource<'a>,
    layout: ReceiverLayout,
    horizon: usize,
    beliefs: RefCell<HashMap<(usize, u64), Rc<AlphaVector>>>,
}

impl<'a> Enumerator<'a> {
    pub fn new(channel: &'a ChannelSpec, source: &'a Source, v: usize, horizon: usize, budget: u64) -> Result<Self> {
        Self::with_model(channel, channel, source, v, horizon, budget)
    }

    pub fn with_model(
        channel: &'a ChannelSpec,
        model: &'a ChannelSpec,
        source: &'a Source,
        v: usize,
        horizon: usize,
        budget: u64,
    ) -> Result<Self> {
        let source = PreparedSource::new(channel, source)?;
        let layout = ReceiverLayout::new(channel, source.space(), v)?;
        let branch = (channel.num_inputs() * channel.num_states() * channel.num_outputs()) as u128;
        let count = (layout.space.admissible_count() as u128).saturating_mul(branch.saturating_pow(horizon as u32));
        if count > budget as u128 {
            return Err(Error::EnumerationTooLarge { count, budget });
        }
        Ok(Self { channel, model, source, layout, horizon, beliefs: RefCell::new(HashMap::new()) })
    }

    /// Prehistory lengths `(m, L)`.
    pub fn prehistory(&self) -> (usize, usize) {
        (self.layout.space.m(), self.layout.space.state_window_len())
    }

    /// Calls `visit(history, probability, alpha_t)` at every node of depth
    /// `1..=horizon`, where `alpha_t` is the transmitter belief after step `t`.
    pub fn run<F: FnMut(&History, f64, Option<&AlphaVector>)>(&self, mut visit: F) -> Result<()> {
        let init = alpha_init(self.channel, &self.layout.space);
        let alpha0 = self.source.uses_belief().then(|| alpha_init(self.model, self.source.space()));
        for (r, &p) in init.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            let (xs, ss) = self.layout.space.decode(r)?;
            let pre = (xs.len(), ss.len());
            let mut hist = History { xs, ss, ys: Vec::new(), pre };
            self.descend(r, p, alpha0.as_ref(), &mut hist, &mut visit)?;
        }
        Ok(())
    }

    fn descend<F: FnMut(&History, f64, Option<&AlphaVector>)>(
        &self,
        r: usize,
        prob: f64,
        alpha: Option<&AlphaVector>,
        hist: &mut History,
        visit: &mut F,
    ) -> Result<()> {
        let t = hist.t();
        if t == self.horizon {
            return Ok(());
        }
        let row = self.source.row(alpha.map_or(&[][..], |a| &a[..]));
        let src = self.layout.source_ctx[r];
        let s_prev = self.layout.space.latest_state(r);
        for x in 0..self.channel.num_inputs() {
            let px = prob * row.prob(src, x);
            if px == 0.0 {
                continue;
            }
            for y in 0..self.channel.num_outputs() {
                let py = px * self.channel.w(x, s_prev, y);
                if py == 0.0 {
                    continue;
                }
                hist.xs.push(x);
                hist.ys.push(y);
                let next_alpha = match alpha {
                    Some(a) => Some(self.next_belief(a, row, &hist.ys)?),
                    None => None,
                };
                for s in 0..self.channel.num_states() {
                    let ps = py * self.channel.p(s_prev, s);
                    if ps == 0.0 {
                        continue;
                    }
                    hist.ss.push(s);
                    visit(hist, ps, next_alpha.as_deref());
                    self.descend(self.layout.space.successor(r, x, s), ps, next_alpha.as_deref(), hist, visit)?;
                    hist.ss.pop();
                }
                hist.xs.pop();
                hist.ys.pop();
            }
        }
        Ok(())
    }

    /// Belief after the step that produced `ys`; it depends on the outputs
    /// only, so it is memoized by the visible output prefix.
    fn next_belief(&self, alpha: &AlphaVector, row: &PolicyRow, ys: &[usize]) -> Result<Rc<AlphaVector>> {
        let sp = self.source.space();
        let t = ys.len();
        let seen = t.saturating_sub(sp.u());
        let key = (t, Key::new().extend(&ys[..seen], self.channel.num_outputs()).code);
        if let Some(a) = self.beliefs.borrow().get(&key) {
            return Ok(Rc::clone(a));
        }
        let next = if seen > 0 {
            alpha_update(self.model, sp, alpha, row, ys[seen - 1])?
        } else {
            alpha_predict(self.model, sp, alpha, row)
        };
        let next = Rc::new(next);
        self.beliefs.borrow_mut().insert(key, Rc::clone(&next));
        Ok(next)
    }
}

/// Mixed-radix key of a digit sequence.
#[derive(Debug, Clone, Copy, Default)]
struct Key {
    code: u64,
    size: u64,
}

impl Key {
    fn new() -> Self {
        Self { code: 0, size: 1 }
    }

    fn push(mut self, digit: usize, base: usize) -> Self {
        self.code = self.code * base as u64 + digit as u64;
        self.size *= base as u64;
        self
    }

    fn extend(self, digits: &[usize], base: usize) -> Self {
        digits.iter().fold(self, |k, &d| k.push(d, base))
    }
}

/// Conditional table `Pr(outcome | key)` accumulated from joint masses.
#[derive(Debug, Default)]
struct CondTable {
    outcomes: usize,
    joint: Vec<f64>,
}

impl CondTable {
    fn add(&mut self, key: Key, outcome: usize, outcomes: usize, mass: f64) -> Result<()> {
        if self.joint.is_empty() {
            let entries = key.size.saturating_mul(outcomes as u64);
            if entries > TABLE_BUDGET {
                return Err(Error::EnumerationTooLarge { count: entries as u128, budget: TABLE_BUDGET });
            }
            self.outcomes = outcomes;
            self.joint = vec![0.0; entries as usize];
        }
        self.joint[key.code as usize * outcomes + outcome] += mass;
        Ok(())
    }

    /// Conditional law given `key`, or `None` at zero mass.
    fn conditional(&self, key: Key) -> Option<Vec<f64>> {
        let row = &self.joint[key.code as usize * self.outcomes..(key.code as usize + 1) * self.outcomes];
        let total: f64 = row.iter().sum();
        (total > 0.0).then(|| row.iter().map(|q| q / total).collect())
    }

    /// Largest difference between the conditional laws at `key` here and at
    /// `other_key` in `other`; zero when either has no mass.
    fn row_gap(&self, key: Key, other: &CondTable, other_key: Key) -> f64 {
        let n = self.outcomes;
        let a = &self.joint[key.code as usize * n..(key.code as usize + 1) * n];
        let b = &other.joint[other_key.code as usize * n..(other_key.code as usize + 1) * n];
        let (ta, tb): (f64, f64) = (a.iter().sum(), b.iter().sum());
        if ta <= 0.0 || tb <= 0.0 {
            return 0.0;
        }
        a.iter().zip(b).fold(0.0, |g, (x, y)| g.max((x / ta - y / tb).abs()))
    }

    /// `H(outcome | key)` in bits.
    fn conditional_entropy(&self) -> f64 {
        let mut h = 0.0;
        for row in self.joint.chunks(self.outcomes.max(1)) {
            let total: f64 = row.iter().sum();
            if total > 0.0 {
                h += row.iter().map(|&q| plogp(q)).sum::<f64>() - plogp(total);
            }
        }
        h
    }
}

/// Per-step directed-information terms from exhaustive enumeration.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectedInfoTerms {
    /// `I(X_{t-v}^t, S_{t-v-1}; Y_t | Y^{t-1})`.
    pub truncated: Vec<f64>,
    /// `I(X^t, S^{t-v-1}; Y_t | Y^{t-1})` with the prehistory included; empty
    /// unless requested.
    pub full: Vec<f64>,
    /// Largest gap between the full-history and window conditionals of `Y_t`
    /// over positive-probability histories; zero unless requested.
    pub max_conditional_gap: f64,
}

impl DirectedInfoTerms {
    pub fn truncated_total(&self) -> f64 {
        self.truncated.iter().sum()
    }

    pub fn full_total(&self) -> f64 {
        self.full.iter().sum()
    }
}

fn full_key(h: &History, t: usize, v: usize, nx: usize, ns: usize, ny: usize) -> Key {
    let (m, l) = h.pre;
    let n_states = t + l - v - 1;
    Key::new().extend(&h.xs[..m + t], nx).extend(&h.ss[..n_states], ns).extend(&h.ys[..t - 1], ny)
}

fn window_key(h: &History, t: usize, v: usize, nx: usize, ns: usize, ny: usize) -> Key {
    let ti = t as isize;
    let (m, _) = h.pre;
    let lo = t + m - v - 1;
    Key::new()
        .extend(&h.xs[lo..m + t], nx)
        .push(h.s(ti - v as isize - 1), ns)
        .extend(&h.ys[..t - 1], ny)
}

/// Exact per-step terms over `n` steps; `with_full` adds the full-history
/// conditioning and the per-history comparison.
pub fn directed_info_terms(
    channel: &ChannelSpec,
    source: &Source,
    v: usize,
    n: usize,
    with_full: bool,
    budget: u64,
) -> Result<DirectedInfoTerms> {
    let en = Enumerator::new(channel, source, v, n, budget)?;
    let (nx, ns, ny) = (channel.num_inputs(), channel.num_states(), channel.num_outputs());
    let mut trunc: Vec<CondTable> = (0..n).map(|_| CondTable::default()).collect();
    let mut full: Vec<CondTable> = (0..n).map(|_| CondTable::default()).collect();
    let mut marg: Vec<CondTable> = (0..n).map(|_| CondTable::default()).collect();
    let mut err = None;
    en.run(|h, p, _| {
        let t = h.t();
        let y = h.ys[t - 1];
        let mut go = || -> Result<()> {
            trunc[t - 1].add(window_key(h, t, v, nx, ns, ny), y, ny, p)?;
            marg[t - 1].add(Key::new().extend(&h.ys[..t - 1], ny), y, ny, p)?;
            if with_full {
                full[t - 1].add(full_key(h, t, v, nx, ns, ny), y, ny, p)?;
            }
            Ok(())
        };
        if let Err(e) = go() {
            err.get_or_insert(e);
        }
    })?;
    if let Some(e) = err {
        return Err(e);
    }
    let h_y: Vec<f64> = marg.iter().map(|m| m.conditional_entropy()).collect();
    let truncated = trunc.iter().zip(&h_y).map(|(tb, hy)| (hy - tb.conditional_entropy()).max(0.0)).collect();
    let mut out = DirectedInfoTerms { truncated, full: Vec::new(), max_conditional_gap: 0.0 };
    if with_full {
        out.full = full.iter().zip(&h_y).map(|(tb, hy)| (hy - tb.conditional_entropy()).max(0.0)).collect();
        let mut gap: f64 = 0.0;
        let mut seen: Vec<Vec<bool>> = full.iter().map(|f| vec![false; f.joint.len() / ny]).collect();
        en.run(|h, _, _| {
            let t = h.t();
            let fk = full_key(h, t, v, nx, ns, ny);
            if std::mem::replace(&mut seen[t - 1][fk.code as usize], true) {
                return;
            }
            gap = gap.max(full[t - 1].row_gap(fk, &trunc[t - 1], window_key(h, t, v, nx, ns, ny)));
        })?;
        out.max_conditional_gap = gap;
    }
    Ok(out)
}

/// Same truncated terms as [`directed_info_terms`], computed by an exact
/// forward recursion over output prefixes that carries the joint mass of each
/// prefix with the recent inputs and states. Linear in the number of output
/// prefixes rather than in the number of trajectories.
pub fn forward_directed_info_terms(channel: &ChannelSpec, source: &Source, v: usize, n: usize) -> Result<Vec<f64>> {
    let prepared = PreparedSource::new(channel, source)?;
    let sp = prepared.space();
    let (su, sv, sm) = (sp.u(), sp.v(), sp.m());
    let (nx, ns, ny) = (channel.num_inputs(), channel.num_states(), channel.num_outputs());
    let branch = (ny as u128).saturating_pow(n as u32);
    if branch > TABLE_BUDGET as u128 {
        return Err(Error::EnumerationTooLarge { count: branch, budget: TABLE_BUDGET });
    }
    let (m_e, top) = (sm.max(v), sv.max(v));
    let len = top + 1;
    let space = ContextSpace::new(channel, 0, top, m_e)?;
    let num_a = nx.pow(v as u32 + 1) * ns;
    // per context: source context, s_{t-1}, and the key prefix of a
    let mut src = Vec::with_capacity(space.size());
    let mut s_last = Vec::with_capacity(space.size());
    let mut a_base = Vec::with_capacity(space.size());
    for r in 0..space.size() {
        let (xs, ss) = space.decode(r)?;
        src.push(sp.encode(&xs[m_e - sm..], &ss[len - sv - 1..len - su])?);
        s_last.push(ss[len - 1]);
        a_base.push((Key::new().extend(&xs[m_e - v..], nx).code as usize, ss[len - v - 1]));
    }
    struct Node {
        mass: Vec<f64>,
        alpha: Option<AlphaVector>,
        ys: Vec<usize>,
    }
    let alpha0 = prepared.uses_belief().then(|| alpha_init(channel, sp));
    let mut nodes = vec![Node { mass: alpha_init(channel, &space).into_inner(), alpha: alpha0, ys: Vec::new() }];
    let mut terms = Vec::with_capacity(n);
    let mut joint = vec![0.0; num_a * ny];
    for _ in 0..n {
        let mut next_nodes = Vec::with_capacity(nodes.len() * ny);
        let mut term = 0.0;
        for node in &nodes {
            let row = prepared.row(node.alpha.as_deref().map_or(&[][..], |a| a));
            joint.iter_mut().for_each(|q| *q = 0.0);
            let mut children = vec![vec![0.0; space.size()]; ny];
            for (r, &mr) in node.mass.iter().enumerate() {
                if mr == 0.0 {
                    continue;
                }
                let sprev = s_last[r];
                for x in 0..nx {
                    let px = mr * row.prob(src[r], x);
                    if px == 0.0 {
                        continue;
                    }
                    let a = (a_base[r].0 * nx + x) * ns + a_base[r].1;
                    for y in 0..ny {
                        let py = px * channel.w(x, sprev, y);
                        joint[a * ny + y] += py;
                        for s in 0..ns {
                            children[y][space.successor(r, x, s)] += py * channel.p(sprev, s);
                        }
                    }
                }
            }
            // H(Y_t | prefix) - H(Y_t | A, prefix), weighted by the prefix mass
            let mut h_y = 0.0;
            let mut h_ya = 0.0;
            for y in 0..ny {
                h_y += plogp((0..num_a).map(|a| joint[a * ny + y]).sum());
            }
            for chunk in joint.chunks(ny) {
                h_ya += chunk.iter().map(|&q| plogp(q)).sum::<f64>() - plogp(chunk.iter().sum());
            }
            h_y -= plogp(node.mass.iter().sum());
            term += h_y - h_ya;
            for (y, mass) in children.into_iter().enumerate() {
                if mass.iter().all(|&q| q == 0.0) {
                    continue;
                }
                let mut ys = node.ys.clone();
                ys.push(y);
                let alpha = match &node.alpha {
                    Some(a) => {
                        let seen = ys.len().saturating_sub(su);
                        Some(if seen > 0 {
                            alpha_update(channel, sp, a, row, ys[seen - 1])?
                        } else {
                            alpha_predict(channel, sp, a, row)
                        })
                    }
                    None => None,
                };
                next_nodes.push(Node { mass, alpha, ys });
            }
        }
        terms.push(term.max(0.0));
        nodes = next_nodes;
    }
    Ok(terms)
}

/// Exact `sum_{t=1}^n I(X_{t-v}^t, S_{t-v-1}; Y_t | Y^{t-1})` in bits.
pub fn exact_directed_info(channel: &ChannelSpec, source: &Source, u: usize, v: usize, n: usize) -> Result<f64> {
    let (su, sv, sm) = source.shape();
    if u > v || (matches!(source, Source::Table(_)) && (su, sv) != (u, v)) {
        return Err(Error::DelayMismatch { src_u: su, src_v: sv, src_m: sm, u, v });
    }
    Ok(directed_info_terms(channel, source, v, n, false, DEFAULT_ENUMERATION_BUDGET)?.truncated_total())
}

/// Largest deviation of `Pr(y_t, s_t | x^{t+u}, s^{t-1}, y^{t-1})` from the
/// channel kernel `Pr(y_t, s_t | x_t, s_{t-1})` over positive-probability
/// histories, for `t + u <= n`.
pub fn state_output_factorization_gap(channel: &ChannelSpec, source: &Source, n: usize, budget: u64) -> Result<f64> {
    let (u, _, _) = source.shape();
    let en = Enumerator::new(channel, source, 0, n, budget)?;
    let (nx, ns, ny) = (channel.num_inputs(), channel.num_states(), channel.num_outputs());
    // tables[t-1]: key (x^{t+u}, s^{t-1}, y^{t-1}), outcome (y_t, s_t)
    let mut tables: Vec<CondTable> = (0..n).map(|_| CondTable::default()).collect();
    let mut kernel_of: Vec<HashMap<u64, (usize, usize)>> = vec![HashMap::new(); n];
    let mut err = None;
    en.run(|h, p, _| {
        let depth = h.t();
        if depth <= u {
            return;
        }
        let t = depth - u;
        let (m, l) = h.pre;
        let key = Key::new()
            .extend(&h.xs[..m + depth], nx)
            .extend(&h.ss[..l + t - 1], ns)
            .extend(&h.ys[..t - 1], ny);
        let outcome = h.ys[t - 1] * ns + h.s(t as isize);
        if let Err(e) = tables[t - 1].add(key, outcome, ny * ns, p) {
            err.get_or_insert(e);
        }
        kernel_of[t - 1].insert(key.code, (h.x(t as isize), h.s(t as isize - 1)));
    })?;
    if let Some(e) = err {
        return Err(e);
    }
    let mut gap: f64 = 0.0;
    for (tb, kmap) in tables.iter().zip(&kernel_of) {
        for (&code, &(x, s_prev)) in kmap {
            let key = Key { code, size: 0 };
            if let Some(cond) = tb.conditional(key) {
                let kernel = channel.joint_kernel(x, s_prev)?;
                for (a, b) in cond.iter().zip(&kernel) {
                    gap = gap.max((a - b).abs());
                }
            }
        }
    }
    Ok(gap)
}

/// Largest deviation between the sequentially updated transmitter belief
/// `alpha_t` and the enumerated posterior `Pr(context_t | y^{t-u})`, over all
/// output histories reached within `n` steps.
///
/// `model` is the channel the filter believes in; pass the true channel for
/// the identity check.
pub fn filter_gap(channel: &ChannelSpec, model: &ChannelSpec, source: &Source, n: usize, budget: u64) -> Result<f64> {
    let en = Enumerator::with_model(channel, model, source, 0, n, budget)?;
    let sp = PreparedSource::new(channel, source)?;
    let space = sp.space().clone();
    let u = space.u();
    let ny = channel.num_outputs();
    let size = space.size();
    // y-prefix (length, code) -> (joint masses over contexts, filter belief)
    let mut joint: HashMap<(usize, u64), Vec<f64>> = HashMap::new();
    let mut beliefs: HashMap<(usize, u64), Vec<f64>> = HashMap::new();
    let mut err = None;
    en.run(|h, p, alpha| {
        let t = h.t();
        if t < u {
            return;
        }
        let (m, l) = h.pre;
        // context after step t: inputs x_{t-m_s+1}..x_t, states s_{t-v}..s_{t-u}
        let ms = space.m();
        let xs = &h.xs[m + t - ms..m + t];
        let ti = t as isize;
        let ss: Vec<usize> = (ti - space.v() as isize..=ti - u as isize).map(|tau| h.s(tau)).collect();
        let _ = l;
        let ctx = match space.encode(xs, &ss) {
            Ok(c) => c,
            Err(e) => {
                err.get_or_insert(e);
                return;
            }
        };
        let prefix = Key::new().extend(&h.ys[..t - u], ny);
        let id = (t, prefix.code);
        joint.entry(id).or_insert_with(|| vec![0.0; size])[ctx] += p;
        if let Some(a) = alpha {
            beliefs.entry(id).or_insert_with(|| a.to_vec());
        }
    })?;
    if let Some(e) = err {
        return Err(e);
    }
    let mut gap: f64 = 0.0;
    for (id, masses) in &joint {
        let total: f64 = masses.iter().sum();
        let belief = beliefs.get(id).ok_or_else(|| Error::InvalidParameters("filter check needs a belief-driven source".into()))?;
        for (q, a) in masses.iter().zip(belief) {
            gap = gap.max((q / total - a).abs());
        }
    }
    Ok(gap)
}

/// Channel with `S` states and uniformly drawn, renormalized rows bounded
/// away from zero.
pub fn random_channel<R: Rng>(rng: &mut R, states: usize, inputs: usize, outputs: usize) -> Result<ChannelSpec> {
    let mut draw = |n: usize| -> Vec<f64> {
        let w: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..1.0)).collect();
        let total: f64 = w.iter().sum();
        w.into_iter().map(|x| x / total).collect()
    };
    let p: Vec<f64> = (0..states).flat_map(|_| draw(states)).collect();
    let w: Vec<f64> = (0..inputs * states).flat_map(|_| draw(outputs)).collect();
    ChannelSpec::from_flat(states, inputs, outputs, p, w, InputConstraint::unconstrained(inputs))
}

/// Random row over the allowed inputs of every context.
pub fn random_row<R: Rng>(rng: &mut R, space: &ContextSpace) -> Result<PolicyRow> {
    let nx = space.num_inputs();
    let mut probs = vec![0.0; space.size() * nx];
    for ctx in 0..space.size() {
        let allowed = space.allowed_inputs(ctx);
        let w: Vec<f64> = allowed.iter().map(|_| rng.gen_range(0.05..1.0)).collect();
        let total: f64 = w.iter().sum();
        for (&x, wi) in allowed.iter().zip(w) {
            probs[ctx * nx + x] = wi / total;
        }
    }
    PolicyRow::new(space, probs)
}

/// Belief-driven source with an independent random row at every point of a
/// grid of step `delta`.
pub fn random_table_source<R: Rng>(
    rng: &mut R,
    channel: &ChannelSpec,
    (u, v, m): (usize, usize, usize),
    delta: f64,
) -> Result<Source> {
    let space = ContextSpace::new(channel, u, v, m)?;
    let grid = SimplexGrid::new(space.admissible(), delta, DEFAULT_GRID_BUDGET)?;
    let rows = (0..grid.len()).map(|_| random_row(rng, &space)).collect::<Result<Vec<_>>>()?;
    let meta = PolicyMeta {
        channel_digest: channel.digest(),
        u,
        v,
        m,
        delta_units: grid.units(),
        eta_units: 0,
        n_iter: 0,
        num_inputs: channel.num_inputs(),
        admissible: space.admissible().to_vec(),
        ordering_version: CONTEXT_ORDERING_VERSION,
        sigma: 0.0,
        span: 0.0,
    };
    Ok(Source::Table(PolicyTable::new(meta, grid, rows)?))
}

/// Fixed random source of the given shape.
pub fn random_fixed_source<R: Rng>(rng: &mut R, channel: &ChannelSpec, (u, v, m): (usize, usize, usize)) -> Result<Source> {
    let space = ContextSpace::new(channel, u, v, m)?;
    let row = random_row(rng, &space)?;
    Ok(Source::fixed(&space, &row))
}

/// One line of an oracle report.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleCheck {
    pub name: String,
    /// Worst observed deviation (or, for calibration, the failure fraction).
    pub deviation: f64,
    pub tolerance: f64,
    /// Negative controls pass when the deviation exceeds the tolerance.
    pub negative_control: bool,
}

impl OracleCheck {
    pub fn passed(&self) -> bool {
        if self.negative_control {
            self.deviation > self.tolerance
        } else {
            self.deviation <= self.tolerance
        }
    }
}

/// Collected oracle checks.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct OracleReport {
    pub checks: Vec<OracleCheck>,
}

impl OracleReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(OracleCheck::passed)
    }

    /// Fixed-width table, one row per check.
    pub fn to_table(&self) -> String {
        let mut out = format!("{:<34} {:>12} {:>12}  result\n", "check", "deviation", "tolerance");
        for c in &self.checks {
            let verdict = match (c.passed(), c.negative_control) {
                (true, false) => "pass",
                (true, true) => "pass (detected)",
                (false, false) => "FAIL",
                (false, true) => "FAIL (undetected)",
            };
            out.push_str(&format!("{:<34} {:>12.3e} {:>12.3e}  {verdict}\n", c.name, c.deviation, c.tolerance));
        }
        out
    }
}

/// Source shapes exercised by the window-identity check.
const IDENTITY_SHAPES: [(usize, usize, usize); 4] = [(0, 0, 1), (1, 1, 1), (0, 1, 1), (2, 2, 2)];

/// Full-history versus window conditioning on random two-state channels and
/// random sources, over `seeds` instances of length `n`. Returns the largest
/// per-step gap in the information terms and the largest per-history gap in
/// the conditional output laws.
pub fn window_identity_gap(seed: u64, seeds: usize, n: usize) -> Result<(f64, f64)> {
    let (mut term_gap, mut cond_gap) = (0.0f64, 0.0f64);
    for k in 0..seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(k as u64));
        let channel = random_channel(&mut rng, 2, 2, 2)?;
        let shape = IDENTITY_SHAPES[k % IDENTITY_SHAPES.len()];
        let source = if k % 2 == 0 {
            random_table_source(&mut rng, &channel, shape, 0.5)?
        } else {
            random_fixed_source(&mut rng, &channel, shape)?
        };
        let terms = directed_info_terms(&channel, &source, shape.1, n, true, DEFAULT_ENUMERATION_BUDGET)?;
        for (a, b) in terms.truncated.iter().zip(&terms.full) {
            term_gap = term_gap.max((a - b).abs());
        }
        cond_gap = cond_gap.max(terms.max_conditional_gap);
    }
    Ok((term_gap, cond_gap))
}

/// Factorization gap for belief-driven and fixed sources with one step of
/// output delay, over `seeds` random instances of length `n`.
pub fn factorization_gap(seed: u64, seeds: usize, n: usize) -> Result<f64> {
    let mut gap = 0.0f64;
    for k in 0..seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(k as u64));
        let channel = random_channel(&mut rng, 2, 2, 2)?;
        let source = if k % 2 == 0 {
            random_table_source(&mut rng, &channel, (1, 1, 1), 0.5)?
        } else {
            random_fixed_source(&mut rng, &channel, (1, 1, 1))?
        };
        gap = gap.max(state_output_factorization_gap(&channel, &source, n, DEFAULT_ENUMERATION_BUDGET)?);
    }
    Ok(gap)
}

/// Filter gap over all output histories of length up to `n` for random
/// belief-driven sources. With `corrupt`, the filter runs on a perturbed
/// copy of the channel.
pub fn filter_identity_gap(seed: u64, seeds: usize, n: usize, corrupt: bool) -> Result<f64> {
    const SHAPES: [(usize, usize, usize); 3] = [(0, 0, 1), (1, 1, 1), (0, 1, 1)];
    let mut gap = 0.0f64;
    for k in 0..seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(k as u64));
        let channel = random_channel(&mut rng, 2, 2, 2)?;
        let shape = SHAPES[k % SHAPES.len()];
        let source = random_table_source(&mut rng, &channel, shape, 0.5)?;
        let model = if corrupt { perturbed(&channel)? } else { channel.clone() };
        let g = filter_gap(&channel, &model, &source, n + shape.0, DEFAULT_ENUMERATION_BUDGET)?;
        gap = gap.max(g);
    }
    Ok(gap)
}

/// Same channel with output rows mixed toward uniform.
fn perturbed(channel: &ChannelSpec) -> Result<ChannelSpec> {
    let ny = channel.num_outputs() as f64;
    let w: Vec<f64> = channel.output_kernel().iter().map(|&q| 0.7 * q + 0.3 / ny).collect();
    ChannelSpec::from_flat(
        channel.num_states(),
        channel.num_inputs(),
        channel.num_outputs(),
        channel.state_transition().to_vec(),
        w,
        channel.constraint().clone(),
    )
}

/// Outcome of the Monte Carlo calibration check.
#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub instances: usize,
    /// Instances whose estimate lies within three standard errors of the
    /// exact per-step value.
    pub within: usize,
    /// `(exact / n, estimate, std_error)` per instance.
    pub details: Vec<(f64, f64, f64)>,
}

impl Calibration {
    pub fn fraction(&self) -> f64 {
        self.within as f64 / self.instances as f64
    }
}

/// Channel, source, source shape `(u, v, m)` and Monte Carlo seed.
pub type CalibrationInstance = (ChannelSpec, Source, (usize, usize, usize), u64);

/// Source shapes cycled through by the calibration instances.
pub const CALIBRATION_SHAPES: [(usize, usize, usize); 4] = [(0, 0, 0), (0, 0, 1), (1, 1, 1), (0, 1, 1)];

/// The `k`-th calibration instance: a random two-state channel, a fixed
/// random source of shape `CALIBRATION_SHAPES[k % 4]`, and a seed for the
/// Monte Carlo run.
pub fn calibration_instance(seed: u64, k: usize) -> Result<CalibrationInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(k as u64));
    let channel = random_channel(&mut rng, 2, 2, 2)?;
    let shape = CALIBRATION_SHAPES[k % CALIBRATION_SHAPES.len()];
    let source = random_fixed_source(&mut rng, &channel, shape)?;
    Ok((channel, source, shape, rng.gen()))
}

/// Finite-horizon Monte Carlo against the exact per-step value on random
/// instances of length `n`. The exact value comes from
/// [`forward_directed_info_terms`], which agrees with full enumeration.
pub fn mc_calibration(seed: u64, instances: usize, n: usize, trials: usize) -> Result<Calibration> {
    let mut details = Vec::with_capacity(instances);
    let mut within = 0;
    for k in 0..instances {
        let (channel, source, shape, mc_seed) = calibration_instance(seed, k)?;
        let exact = forward_directed_info_terms(&channel, &source, shape.1, n)?.iter().sum::<f64>() / n as f64;
        let est = crate::mc::finite_horizon_rate(&channel, &source, shape.0, shape.1, n, trials, mc_seed)?;
        if (est.mean - exact).abs() <= 3.0 * est.std_error {
            within += 1;
        }
        details.push((exact, est.mean, est.std_error));
    }
    Ok(Calibration { instances, within, details })
}

/// Runs every oracle check at its default size.
pub fn run_all(seed: u64) -> Result<OracleReport> {
    let mut checks = Vec::new();
    let (term_gap, cond_gap) = window_identity_gap(seed, 20, 6)?;
    checks.push(OracleCheck { name: "window identity (terms)".into(), deviation: term_gap, tolerance: 1e-12, negative_control: false });
    checks.push(OracleCheck { name: "window identity (conditionals)".into(), deviation: cond_gap, tolerance: 1e-12, negative_control: false });
    checks.push(OracleCheck {
        name: "state/output factorization".into(),
        deviation: factorization_gap(seed, 10, 6)?,
        tolerance: 1e-12,
        negative_control: false,
    });
    checks.push(OracleCheck {
        name: "belief filter".into(),
        deviation: filter_identity_gap(seed, 6, 6, false)?,
        tolerance: 1e-10,
        negative_control: false,
    });
    checks.push(OracleCheck {
        name: "belief filter, corrupted kernel".into(),
        deviation: filter_identity_gap(seed, 3, 4, true)?,
        tolerance: 1e-3,
        negative_control: true,
    });
    let cal = mc_calibration(seed, 40, 8, 200)?;
    checks.push(OracleCheck {
        name: "monte carlo calibration (miss rate)".into(),
        deviation: 1.0 - cal.fraction(),
        tolerance: 0.05,
        negative_control: false,
    });
    Ok(OracleReport { checks })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::info::h2;

    #[test]
    fn single_step_bsc() {
        let bsc = ChannelSpec::bsc(0.1).unwrap();
        let di = exact_directed_info(&bsc, &Source::iud(&bsc).unwrap(), 0, 0, 1).unwrap();
        assert!((di - (1.0 - h2(0.1))).abs() < 1e-12);
        assert!((di - 0.531004).abs() < 1e-6);
    }

    #[test]
    fn constant_output_has_no_information() {
        let stuck = ChannelSpec::from_flat(
            2,
            2,
            2,
            vec![0.6, 0.4, 0.2, 0.8],
            vec![1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0],
            InputConstraint::unconstrained(2),
        )
        .unwrap();
        for n in 1..5 {
            assert_eq!(exact_directed_info(&stuck, &Source::iud(&stuck).unwrap(), 1, 1, n).unwrap(), 0.0);
        }
    }

    #[test]
    fn budget_is_enforced() {
        let ge = ChannelSpec::gilbert_elliott(0.3, 0.3, 0.1, 0.2).unwrap();
        let err = directed_info_terms(&ge, &Source::iud(&ge).unwrap(), 1, 13, false, DEFAULT_ENUMERATION_BUDGET);
        assert!(matches!(err, Err(Error::EnumerationTooLarge { .. })));
    }

    #[test]
    fn memoryless_terms_match_closed_form() {
        let bsc = ChannelSpec::bsc(0.2).unwrap();
        let src = Source::iud(&bsc).unwrap();
        let terms = directed_info_terms(&bsc, &src, 0, 4, true, DEFAULT_ENUMERATION_BUDGET).unwrap();
        for (a, b) in terms.truncated.iter().zip(&terms.full) {
            assert!((a - (1.0 - h2(0.2))).abs() < 1e-12);
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn forward_recursion_matches_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for (k, shape) in [(0, 0, 0), (0, 0, 1), (1, 1, 1), (0, 1, 1), (2, 2, 2)].into_iter().enumerate() {
            let ch = random_channel(&mut rng, 2, 2, 2).unwrap();
            let src = if k % 2 == 0 {
                random_table_source(&mut rng, &ch, shape, 0.5).unwrap()
            } else {
                random_fixed_source(&mut rng, &ch, shape).unwrap()
            };
            let fwd = forward_directed_info_terms(&ch, &src, shape.1, 5).unwrap();
            let brute = directed_info_terms(&ch, &src, shape.1, 5, false, DEFAULT_ENUMERATION_BUDGET).unwrap();
            for (a, b) in fwd.iter().zip(&brute.truncated) {
                assert!((a - b).abs() < 1e-12, "{shape:?}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn fixed_source_factorization() {
        let ge = ChannelSpec::gilbert_elliott(0.25, 0.4, 0.1, 0.3).unwrap();
        let space = ContextSpace::new(&ge, 1, 1, 1).unwrap();
        let row = PolicyRow::new(&space, vec![0.3, 0.7, 0.6, 0.4, 0.9, 0.1, 0.2, 0.8]).unwrap();
        let gap = state_output_factorization_gap(&ge, &Source::fixed(&space, &row), 5, DEFAULT_ENUMERATION_BUDGET).unwrap();
        assert!(gap < 1e-12, "{gap}");
    }
}
