//! Uniform simplex grid over the admissible contexts and the quantizer
//! that maps beliefs onto it.

use crate::error::{Error, Result};

/// Default cap on the number of grid points.
pub const DEFAULT_GRID_BUDGET: u64 = 10_000_000;

/// Resolves `1 / step` to an integer, rejecting steps that do not divide one.
pub fn units_per_one(step: f64, name: &'static str) -> Result<u32> {
    if !(step > 0.0 && step <= 1.0) {
        return Err(Error::ParameterOutOfRange { name, value: step });
    }
    let k = (1.0 / step).round();
    if (k * step - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidParameters(format!("1/{name} must be an integer, got {name} = {step}")));
    }
    Ok(k as u32)
}

/// Binomial coefficient in `u128`, saturating.
pub fn binomial(n: u64, k: u64) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = match acc.checked_mul((n - i) as u128) {
            Some(v) => v / (i as u128 + 1),
            None => return u128::MAX,
        };
    }
    acc
}

/// Rounds each admissible coordinate of `alpha * units` half-down, then
/// repairs the sum with the largest-remainder rule (ties to the lowest index).
///
/// `scale` multiplies every entry before rounding, which lets callers pass an
/// unnormalized vector together with `units / total`.
pub(crate) fn quantize_into(values: &[f64], scale: f64, units: u32, out: &mut [i64], rem: &mut [f64]) {
    let mut sum: i64 = 0;
    for ((o, r), &a) in out.iter_mut().zip(rem.iter_mut()).zip(values) {
        let target = a * scale;
        let n = (target - 0.5).ceil().max(0.0) as i64;
        *o = n;
        *r = target - n as f64;
        sum += n;
    }
    let k = units as i64;
    while sum < k {
        let mut best = 0;
        for i in 1..out.len() {
            if rem[i] > rem[best] {
                best = i;
            }
        }
        out[best] += 1;
        rem[best] -= 1.0;
        sum += 1;
    }
    while sum > k {
        let mut best = usize::MAX;
        for i in 0..out.len() {
            if out[i] > 0 && (best == usize::MAX || rem[i] < rem[best]) {
                best = i;
            }
        }
        out[best] -= 1;
        rem[best] += 1.0;
        sum -= 1;
    }
}

/// Quantizes `alpha` to the grid of step `delta`. Coordinates outside
/// `admissible` (when given) stay zero.
pub fn quantize(alpha: &[f64], delta: f64, admissible: Option<&[bool]>) -> Result<Vec<f64>> {
    let units = units_per_one(delta, "delta")?;
    let idx: Vec<usize> = (0..alpha.len()).filter(|&i| admissible.is_none_or(|a| a[i])).collect();
    let vals: Vec<f64> = idx.iter().map(|&i| alpha[i]).collect();
    let mut n = vec![0; idx.len()];
    let mut rem = vec![0.0; idx.len()];
    quantize_into(&vals, units as f64, units, &mut n, &mut rem);
    let mut out = vec![0.0; alpha.len()];
    for (&i, &ni) in idx.iter().zip(&n) {
        out[i] = ni as f64 / units as f64;
    }
    Ok(out)
}

/// All compositions of `units` into the admissible coordinates, in
/// lexicographic order of the integer coordinates.
#[derive(Debug, Clone)]
pub struct SimplexGrid {
    dim: usize,
    units: u32,
    admissible_index: Vec<usize>,
    points: Vec<u16>,
    /// `counts[p * (units + 1) + r]` = number of compositions of `r` into `p` parts.
    counts: Vec<usize>,
}

impl SimplexGrid {
    /// Grid over a space of `admissible.len()` contexts, zero on inadmissible ones.
    pub fn new(admissible: &[bool], delta: f64, budget: u64) -> Result<Self> {
        let units = units_per_one(delta, "delta")?;
        let admissible_index: Vec<usize> = (0..admissible.len()).filter(|&i| admissible[i]).collect();
        let parts = admissible_index.len();
        if parts == 0 {
            return Err(Error::InvalidParameters("grid needs at least one admissible context".into()));
        }
        let count = binomial(units as u64 + parts as u64 - 1, parts as u64 - 1);
        if count > budget as u128 {
            return Err(Error::GridTooLarge { count, budget });
        }
        if units > u16::MAX as u32 {
            return Err(Error::InvalidParameters(format!("delta too small: {delta}")));
        }
        let stride = units as usize + 1;
        let mut counts = vec![0usize; (parts + 1) * stride];
        for p in 1..=parts {
            for r in 0..stride {
                counts[p * stride + r] = binomial((r + p - 1) as u64, (p - 1) as u64) as usize;
            }
        }
        let mut points = Vec::with_capacity(count as usize * parts);
        let mut current = vec![0u16; parts];
        enumerate_compositions(&mut current, 0, units as u16, &mut points);
        Ok(Self { dim: admissible.len(), units, admissible_index, points, counts })
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.admissible_index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Full context dimension M.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `1 / delta`.
    pub fn units(&self) -> u32 {
        self.units
    }

    pub fn delta(&self) -> f64 {
        1.0 / self.units as f64
    }

    pub fn admissible_index(&self) -> &[usize] {
        &self.admissible_index
    }

    /// Integer coordinates of point `i` over the admissible contexts.
    pub fn point_units(&self, i: usize) -> &[u16] {
        let p = self.admissible_index.len();
        &self.points[i * p..(i + 1) * p]
    }

    /// Point `i` as a full length-M belief.
    pub fn point(&self, i: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for (&ctx, &n) in self.admissible_index.iter().zip(self.point_units(i)) {
            out[ctx] = n as f64 / self.units as f64;
        }
        out
    }

    /// Lexicographic rank of integer coordinates that sum to `units`.
    #[inline]
    pub fn rank_units(&self, n: &[i64]) -> usize {
        let stride = self.units as usize + 1;
        let parts = n.len();
        let mut rank = 0;
        let mut remaining = self.units as usize;
        for (i, &ni) in n.iter().enumerate().take(parts - 1) {
            let p = parts - i;
            let ni = ni as usize;
            rank += self.counts[p * stride + remaining] - self.counts[p * stride + remaining - ni];
            remaining -= ni;
        }
        rank
    }

    /// Quantizes a full-length belief and returns its grid index.
    pub fn locate(&self, alpha: &[f64]) -> usize {
        let vals: Vec<f64> = self.admissible_index.iter().map(|&i| alpha[i]).collect();
        let mut n = vec![0; vals.len()];
        let mut rem = vec![0.0; vals.len()];
        quantize_into(&vals, self.units as f64, self.units, &mut n, &mut rem);
        self.rank_units(&n)
    }
}

fn enumerate_compositions(current: &mut [u16], pos: usize, remaining: u16, out: &mut Vec<u16>) {
    if pos + 1 == current.len() {
        current[pos] = remaining;
        out.extend_from_slice(current);
        return;
    }
    for n in 0..=remaining {
        current[pos] = n;
        enumerate_compositions(current, pos + 1, remaining - n, out);
    }
}
