//! Stage reward and window-conditional output probabilities, in bits.

use crate::belief::PolicyRow;
use crate::channel::ChannelSpec;
use crate::context::ContextSpace;
use crate::error::{Error, Result};

/// `-p log2 p` with the `0 log 0 = 0` convention.
#[inline]
pub fn plogp(p: f64) -> f64 {
    if p > 0.0 {
        -p * p.log2()
    } else {
        0.0
    }
}

/// Shannon entropy in bits of an unnormalized-safe probability vector.
pub fn entropy_bits(p: &[f64]) -> f64 {
    p.iter().map(|&q| plogp(q)).sum()
}

/// Binary entropy function.
pub fn h2(p: f64) -> f64 {
    plogp(p) + plogp(1.0 - p)
}

/// Mixed-radix code of a symbol sequence, most recent (last) symbol least
/// significant.
#[inline]
pub(crate) fn seq_code(symbols: &[usize], base: usize) -> usize {
    symbols.iter().fold(0, |acc, &s| acc * base + s)
}

/// `Pr(y-window | x-window, s_boundary)` by a forward pass over the
/// intermediate state path.
pub fn tail_output_prob(channel: &ChannelSpec, xs: &[usize], s_boundary: usize, ys: &[usize]) -> f64 {
    assert_eq!(xs.len(), ys.len(), "input and output windows must be aligned");
    let ns = channel.num_states();
    let mut f = vec![0.0; ns];
    f[s_boundary] = 1.0;
    let mut next = vec![0.0; ns];
    for (&x, &y) in xs.iter().zip(ys) {
        next.iter_mut().for_each(|v| *v = 0.0);
        for (s, &fs) in f.iter().enumerate() {
            let g = fs * channel.w(x, s, y);
            if g == 0.0 {
                continue;
            }
            for (s2, n) in next.iter_mut().enumerate() {
                *n += g * channel.p(s, s2);
            }
        }
        std::mem::swap(&mut f, &mut next);
    }
    f.iter().sum()
}

/// Output-window law `Pr(y_{t-u}^t | x_{t-u}^t, s_{t-u-1})`, tabulated for
/// every input window and boundary state.
#[derive(Debug, Clone)]
pub struct OutputWindowKernel {
    window: usize,
    num_outputs: usize,
    ywin_size: usize,
    table: Vec<f64>,
}

impl OutputWindowKernel {
    /// Kernel for windows of `u + 1` symbols.
    pub fn new(channel: &ChannelSpec, u: usize) -> Self {
        let (nx, ns, ny) = (channel.num_inputs(), channel.num_states(), channel.num_outputs());
        let window = u + 1;
        let xwin_size = nx.pow(window as u32);
        let ywin_size = ny.pow(window as u32);
        let mut table = Vec::with_capacity(xwin_size * ns * ywin_size);
        for xcode in 0..xwin_size {
            let xs = crate::channel::decode_digits(xcode, nx, window);
            for s in 0..ns {
                for ycode in 0..ywin_size {
                    let ys = crate::channel::decode_digits(ycode, ny, window);
                    table.push(tail_output_prob(channel, &xs, s, &ys));
                }
            }
        }
        Self { window, num_outputs: ny, ywin_size, table }
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn ywin_size(&self) -> usize {
        self.ywin_size
    }

    pub fn num_outputs(&self) -> usize {
        self.num_outputs
    }

    /// Row indexed by `xcode * |S| + s_boundary`.
    #[inline]
    pub fn row(&self, index: usize) -> &[f64] {
        &self.table[index * self.ywin_size..(index + 1) * self.ywin_size]
    }

    /// `H(Y_t | Y_{t-u}^{t-1})` under one row, in bits.
    pub fn row_conditional_entropy(&self, index: usize) -> f64 {
        let row = self.row(index);
        let ny = self.num_outputs;
        let mut h = 0.0;
        for prefix in row.chunks(ny) {
            let pp: f64 = prefix.iter().sum();
            if pp > 0.0 {
                h += prefix.iter().map(|&q| if q > 0.0 { q * (pp / q).log2() } else { 0.0 }).sum::<f64>();
            }
        }
        h
    }
}

/// For each `(context, next input)` pair, where its mass lands in the window
/// joint and which output-window kernel row applies.
#[derive(Debug, Clone)]
pub struct WindowLayout {
    /// `a = (x_{t-v}^t, s_{t-v-1})` coded input-major.
    pub a_index: Vec<usize>,
    /// `(x_{t-u}^t, s_{t-u-1})` row of the output-window kernel.
    pub kernel_index: Vec<usize>,
    pub num_a: usize,
}

impl WindowLayout {
    pub fn new(space: &ContextSpace) -> Self {
        let (nx, ns) = (space.num_inputs(), space.num_states());
        let (u, v, m) = (space.u(), space.v(), space.m());
        let mut a_index = Vec::with_capacity(space.size() * nx);
        let mut kernel_index = Vec::with_capacity(space.size() * nx);
        for ctx in 0..space.size() {
            let info = space.step_info(ctx);
            for x in 0..nx {
                let mut ext = info.xs.clone();
                ext.push(x);
                let a_x = seq_code(&ext[m - v..], nx);
                a_index.push(a_x * ns + info.ss[0]);
                let k_x = seq_code(&ext[m - u..], nx);
                kernel_index.push(k_x * ns + info.ss[info.ss.len() - 1]);
            }
        }
        Self { a_index, kernel_index, num_a: nx.pow(v as u32 + 1) * ns }
    }
}

/// Joint law of `a = (x_{t-v}^t, s_{t-v-1})` and the output window
/// `y_{t-u}^t` given the belief and the policy row.
#[derive(Debug, Clone)]
pub struct WindowJoint {
    num_a: usize,
    ywin_size: usize,
    num_outputs: usize,
    table: Vec<f64>,
}

impl WindowJoint {
    #[inline]
    pub fn get(&self, a: usize, ywin: usize) -> f64 {
        self.table[a * self.ywin_size + ywin]
    }

    pub fn num_a(&self) -> usize {
        self.num_a
    }

    pub fn ywin_size(&self) -> usize {
        self.ywin_size
    }

    pub fn total_mass(&self) -> f64 {
        self.table.iter().sum()
    }

    /// Marginal of the oldest output `y_{t-u}`.
    pub fn oldest_output_marginal(&self) -> Vec<f64> {
        let ny = self.num_outputs;
        let stride = self.ywin_size / ny;
        let mut out = vec![0.0; ny];
        for row in self.table.chunks(self.ywin_size) {
            for (yw, &q) in row.iter().enumerate() {
                out[yw / stride] += q;
            }
        }
        out
    }

    /// `I(A; Y_t | Y_{t-u}^{t-1})` in bits.
    pub fn conditional_mi(&self) -> f64 {
        let ny = self.num_outputs;
        let mut q_yw = vec![0.0; self.ywin_size];
        for row in self.table.chunks(self.ywin_size) {
            for (acc, &q) in q_yw.iter_mut().zip(row) {
                *acc += q;
            }
        }
        let q_yp: Vec<f64> = q_yw.chunks(ny).map(|c| c.iter().sum()).collect();
        let mut mi = 0.0;
        for row in self.table.chunks(self.ywin_size) {
            for (p_idx, chunk) in row.chunks(ny).enumerate() {
                let q_ayp: f64 = chunk.iter().sum();
                for (yt, &q) in chunk.iter().enumerate() {
                    if q > 0.0 {
                        let yw = p_idx * ny + yt;
                        mi += q * ((q * q_yp[p_idx]) / (q_ayp * q_yw[yw])).log2();
                    }
                }
            }
        }
        mi.max(0.0)
    }
}

/// Assembles the window joint from the belief and the policy row.
pub fn window_joint(channel: &ChannelSpec, space: &ContextSpace, alpha: &[f64], row: &PolicyRow) -> WindowJoint {
    let kernel = OutputWindowKernel::new(channel, space.u());
    let layout = WindowLayout::new(space);
    window_joint_with(space, &kernel, &layout, alpha, row)
}

/// [`window_joint`] with precomputed kernel and layout.
pub fn window_joint_with(
    space: &ContextSpace,
    kernel: &OutputWindowKernel,
    layout: &WindowLayout,
    alpha: &[f64],
    row: &PolicyRow,
) -> WindowJoint {
    let nx = space.num_inputs();
    let ywin_size = kernel.ywin_size();
    let mut table = vec![0.0; layout.num_a * ywin_size];
    for (ctx, &a) in alpha.iter().enumerate() {
        if a == 0.0 {
            continue;
        }
        for &x in space.allowed_inputs(ctx) {
            let w = a * row.prob(ctx, x);
            if w == 0.0 {
                continue;
            }
            let atom = ctx * nx + x;
            let dst = &mut table[layout.a_index[atom] * ywin_size..(layout.a_index[atom] + 1) * ywin_size];
            for (d, &l) in dst.iter_mut().zip(kernel.row(layout.kernel_index[atom])) {
                *d += w * l;
            }
        }
    }
    WindowJoint { num_a: layout.num_a, ywin_size, num_outputs: kernel.num_outputs(), table }
}

/// Stage reward `I(X_{t-v}^t, S_{t-v-1}; Y_t | Y_{t-u}^{t-1}, alpha)` in bits.
pub fn stage_reward(channel: &ChannelSpec, space: &ContextSpace, alpha: &[f64], row: &PolicyRow) -> f64 {
    window_joint(channel, space, alpha, row).conditional_mi()
}

/// `Pr(s_{t-1} | s_{t-v-1}, x_{t-v}^{t-1}, y_{t-v}^{t-1})`; the channel alone
/// determines it.
pub fn window_state_posterior(channel: &ChannelSpec, s_oldest: usize, xs: &[usize], ys: &[usize]) -> Result<Vec<f64>> {
    if xs.len() != ys.len() {
        return Err(Error::WindowLengthMismatch { expected: xs.len(), got: ys.len() });
    }
    let ns = channel.num_states();
    if s_oldest >= ns {
        return Err(Error::LetterOutOfRange { letter: s_oldest, size: ns });
    }
    let mut f = vec![0.0; ns];
    f[s_oldest] = 1.0;
    for (&x, &y) in xs.iter().zip(ys) {
        let mut next = vec![0.0; ns];
        for (s, &fs) in f.iter().enumerate() {
            let g = fs * channel.w(x, s, y);
            if g > 0.0 {
                for (s2, n) in next.iter_mut().enumerate() {
                    *n += g * channel.p(s, s2);
                }
            }
        }
        let total: f64 = next.iter().sum();
        if total < crate::belief::IMPOSSIBLE_MASS {
            return Err(Error::ImpossibleObservation);
        }
        next.iter_mut().for_each(|v| *v /= total);
        f = next;
    }
    Ok(f)
}

/// `Pr(y_t | x_{t-v}^t, s_{t-v-1}, y_{t-v}^{t-1})` from the channel alone.
///
/// `xs` has length `v + 1` (ending with `x_t`), `ys` has length `v`.
pub fn truncated_term_prob(channel: &ChannelSpec, s_oldest: usize, xs: &[usize], ys: &[usize]) -> Result<Vec<f64>> {
    let (x_t, past) = xs.split_last().ok_or(Error::WindowLengthMismatch { expected: 1, got: 0 })?;
    let post = window_state_posterior(channel, s_oldest, past, ys)?;
    let mut out = vec![0.0; channel.num_outputs()];
    for (s, &ps) in post.iter().enumerate() {
        for (o, &w) in out.iter_mut().zip(channel.w_row(*x_t, s)) {
            *o += ps * w;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::belief::{alpha_init, disturbance_dist, normalize};
    use crate::channel::InputConstraint;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_row(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        let mut v: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..1.0)).collect();
        normalize(&mut v);
        v
    }

    fn random_channel(rng: &mut ChaCha8Rng) -> ChannelSpec {
        let p = vec![random_row(rng, 2), random_row(rng, 2)];
        let w = vec![vec![random_row(rng, 2), random_row(rng, 2)], vec![random_row(rng, 2), random_row(rng, 2)]];
        ChannelSpec::new_fsc(&p, &w, InputConstraint::unconstrained(2)).unwrap()
    }

    fn random_instance(seed: u64, u: usize, v: usize) -> (ChannelSpec, ContextSpace, Vec<f64>, PolicyRow) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ch = random_channel(&mut rng);
        let sp = ContextSpace::new(&ch, u, v, v).unwrap();
        let alpha = random_row(&mut rng, sp.size());
        let probs: Vec<f64> = (0..sp.size()).flat_map(|_| random_row(&mut rng, 2)).collect();
        let row = PolicyRow::new(&sp, probs).unwrap();
        (ch, sp, alpha, row)
    }

    #[test]
    fn tail_prob_examples() {
        let ge = ChannelSpec::gilbert_elliott(0.3, 0.3, 0.001, 0.5).unwrap();
        assert_eq!(tail_output_prob(&ge, &[], 1, &[]), 1.0);
        let clean = ChannelSpec::gilbert_elliott(0.3, 0.3, 0.0, 0.0).unwrap();
        assert_eq!(tail_output_prob(&clean, &[1], 0, &[1]), 1.0);
        assert_eq!(tail_output_prob(&clean, &[1], 0, &[0]), 0.0);
        for s0 in 0..2 {
            for ys in [[0, 0], [0, 1], [1, 0], [1, 1]] {
                let xs = [1, 0];
                let mut brute = 0.0;
                for s1 in 0..2 {
                    brute += ge.w(xs[0], s0, ys[0]) * ge.p(s0, s1) * ge.w(xs[1], s1, ys[1]);
                }
                assert!((tail_output_prob(&ge, &xs, s0, &ys) - brute).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn reward_examples() {
        let bsc0 = ChannelSpec::bsc(0.0).unwrap();
        let sp = ContextSpace::new(&bsc0, 0, 0, 0).unwrap();
        let row = PolicyRow::uniform(&sp);
        assert!((stage_reward(&bsc0, &sp, &alpha_init(&bsc0, &sp), &row) - 1.0).abs() < 1e-12);

        let bsc = ChannelSpec::bsc(0.1).unwrap();
        let phi = stage_reward(&bsc, &sp, &alpha_init(&bsc, &sp), &row);
        assert!((phi - (1.0 - h2(0.1))).abs() < 1e-12);
        assert!((phi - 0.531004).abs() < 1e-6);

        let flat = ChannelSpec::from_flat(2, 2, 2, vec![0.5; 4], vec![0.5; 8], InputConstraint::unconstrained(2)).unwrap();
        let sp = ContextSpace::new(&flat, 1, 1, 1).unwrap();
        assert_eq!(stage_reward(&flat, &sp, &alpha_init(&flat, &sp), &PolicyRow::uniform(&sp)), 0.0);
    }

    #[test]
    fn single_state_joint_collapses() {
        let bsc = ChannelSpec::bsc(0.2).unwrap();
        let sp = ContextSpace::new(&bsc, 0, 0, 0).unwrap();
        let row = PolicyRow::context_free(&sp, &[0.3, 0.7]).unwrap();
        let j = window_joint(&bsc, &sp, &alpha_init(&bsc, &sp), &row);
        for x in 0..2 {
            for y in 0..2 {
                assert!((j.get(x, y) - row.prob(0, x) * bsc.w(x, 0, y)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn posterior_examples() {
        let ge = ChannelSpec::gilbert_elliott(0.3, 0.3, 0.001, 0.5).unwrap();
        assert_eq!(window_state_posterior(&ge, 1, &[], &[]).unwrap(), vec![0.0, 1.0]);
        assert_eq!(truncated_term_prob(&ge, 1, &[0], &[]).unwrap(), ge.w_row(0, 1).to_vec());

        // y = s_prev reveals the state.
        let reveal = ChannelSpec::from_flat(
            2,
            1,
            2,
            vec![0.4, 0.6, 0.7, 0.3],
            vec![1.0, 0.0, 0.0, 1.0],
            InputConstraint::unconstrained(1),
        )
        .unwrap();
        let post = window_state_posterior(&reveal, 0, &[0, 0], &[0, 1]).unwrap();
        // y_{t-1} = 1 reveals s_{t-2} = 1; s_{t-1} is then P[1][.]
        assert!((post[0] - 0.7).abs() < 1e-15);

        for s0 in 0..2 {
            for code in 0..16 {
                let xs = [code & 1, (code >> 1) & 1];
                let ys = [(code >> 2) & 1, (code >> 3) & 1];
                let mut brute = [0.0; 2];
                for s1 in 0..2 {
                    for s2 in 0..2 {
                        brute[s2] += ge.w(xs[0], s0, ys[0]) * ge.p(s0, s1) * ge.w(xs[1], s1, ys[1]) * ge.p(s1, s2);
                    }
                }
                let total = brute[0] + brute[1];
                let post = window_state_posterior(&ge, s0, &xs, &ys).unwrap();
                assert!((post[0] - brute[0] / total).abs() < 1e-14);
            }
        }
        let clean = ChannelSpec::gilbert_elliott(0.3, 0.3, 0.0, 0.0).unwrap();
        assert_eq!(window_state_posterior(&clean, 0, &[0], &[1]), Err(Error::ImpossibleObservation));
    }

    #[test]
    fn output_kernel_rows_sum_to_one() {
        let ge = ChannelSpec::gilbert_elliott(0.3, 0.3, 0.001, 0.5).unwrap();
        for u in 0..3 {
            let k = OutputWindowKernel::new(&ge, u);
            for i in 0..(2usize.pow(u as u32 + 1) * 2) {
                assert!((k.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn joint_mass_and_marginal() {
        for seed in 0..200 {
            let u = (seed % 3) as usize;
            let v = u + (seed / 3 % 2) as usize;
            let (ch, sp, alpha, row) = random_instance(seed, u, v);
            let j = window_joint(&ch, &sp, &alpha, &row);
            assert!((j.total_mass() - 1.0).abs() < 1e-10);
            let d = disturbance_dist(&ch, &sp, &alpha, &row);
            let m = j.oldest_output_marginal();
            for y in 0..2 {
                assert!((d[y] - m[y]).abs() < 1e-12);
            }
        }
    }

    proptest! {
        #[test]
        fn reward_is_bounded(seed in any::<u64>(), u in 0usize..3, extra in 0usize..2) {
            let (ch, sp, alpha, row) = random_instance(seed, u, u + extra);
            let phi = stage_reward(&ch, &sp, &alpha, &row);
            prop_assert!((0.0..=1.0 + 1e-12).contains(&phi));
        }

        #[test]
        fn truncated_prob_sums_to_one(seed in any::<u64>(), v in 0usize..4, bits in any::<u32>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let ch = random_channel(&mut rng);
            let xs: Vec<usize> = (0..=v).map(|i| (bits >> i) as usize & 1).collect();
            let ys: Vec<usize> = (0..v).map(|i| (bits >> (i + 8)) as usize & 1).collect();
            let p = truncated_term_prob(&ch, (bits >> 20) as usize & 1, &xs, &ys).unwrap();
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}
