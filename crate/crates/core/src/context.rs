//! Flat indexing of composite contexts `(input window, state window)`.
//!
//! The transmitter's context before emitting `x_t` is the input window
//! `x_{t-m}..x_{t-1}` together with the state window `s_{t-v-1}..s_{t-u-1}`
//! (length `w = v - u + 1`). Index ordering (frozen, version 1): input window
//! major, state window minor, and within each window the most recent symbol
//! is least significant.

use crate::channel::{decode_digits, ChannelSpec, InputConstraint};
use crate::error::{Error, Result};

/// Ordering version written into policy files.
pub const CONTEXT_ORDERING_VERSION: u32 = 1;

/// Bijection between `(input window, state window)` pairs and `0..size`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WindowCodec {
    num_inputs: usize,
    num_states: usize,
    input_len: usize,
    state_len: usize,
    input_codes: usize,
    state_codes: usize,
}

impl WindowCodec {
    pub fn new(num_inputs: usize, num_states: usize, input_len: usize, state_len: usize) -> Self {
        let input_codes = num_inputs.pow(input_len as u32);
        let state_codes = num_states.pow(state_len as u32);
        Self { num_inputs, num_states, input_len, state_len, input_codes, state_codes }
    }

    pub fn size(&self) -> usize {
        self.input_codes * self.state_codes
    }

    pub fn input_len(&self) -> usize {
        self.input_len
    }

    pub fn state_len(&self) -> usize {
        self.state_len
    }

    pub fn encode(&self, xs: &[usize], ss: &[usize]) -> Result<usize> {
        if xs.len() != self.input_len {
            return Err(Error::WindowLengthMismatch { expected: self.input_len, got: xs.len() });
        }
        if ss.len() != self.state_len {
            return Err(Error::WindowLengthMismatch { expected: self.state_len, got: ss.len() });
        }
        let mut xc = 0;
        for &x in xs {
            if x >= self.num_inputs {
                return Err(Error::LetterOutOfRange { letter: x, size: self.num_inputs });
            }
            xc = xc * self.num_inputs + x;
        }
        let mut sc = 0;
        for &s in ss {
            if s >= self.num_states {
                return Err(Error::LetterOutOfRange { letter: s, size: self.num_states });
            }
            sc = sc * self.num_states + s;
        }
        Ok(xc * self.state_codes + sc)
    }

    pub fn decode(&self, index: usize) -> Result<(Vec<usize>, Vec<usize>)> {
        if index >= self.size() {
            return Err(Error::IndexOutOfRange { index, limit: self.size() });
        }
        Ok((
            decode_digits(index / self.state_codes, self.num_inputs, self.input_len),
            decode_digits(index % self.state_codes, self.num_states, self.state_len),
        ))
    }

    /// Appends `new_x` to the input window and, when given, `new_s` to the
    /// state window, dropping the oldest symbols.
    pub fn shift(&self, index: usize, new_x: usize, new_s: Option<usize>) -> Result<usize> {
        if index >= self.size() {
            return Err(Error::IndexOutOfRange { index, limit: self.size() });
        }
        if new_x >= self.num_inputs {
            return Err(Error::LetterOutOfRange { letter: new_x, size: self.num_inputs });
        }
        let xc = index / self.state_codes;
        let sc = index % self.state_codes;
        let xc = (xc * self.num_inputs + new_x) % self.input_codes;
        let sc = match new_s {
            Some(s) if s >= self.num_states => {
                return Err(Error::LetterOutOfRange { letter: s, size: self.num_states })
            }
            Some(s) => (sc * self.num_states + s) % self.state_codes,
            None => sc,
        };
        Ok(xc * self.state_codes + sc)
    }
}

/// Precomputed one-step structure of a context: where it goes after
/// appending an input and a state.
#[derive(Debug, Clone)]
pub(crate) struct ContextStep {
    /// Input window, oldest first (length m).
    pub xs: Vec<usize>,
    /// State window `s_{t-v-1}..s_{t-u-1}`.
    pub ss: Vec<usize>,
    /// Allowed next inputs under the constraint.
    pub allowed: Vec<usize>,
    /// `succ[x * |S| + s]`: context after appending input `x` and state `s`.
    pub succ: Vec<usize>,
}

/// Context space for a `(u, v, m)` source: delay `u` for feedback and state
/// information, rate window `v`, input memory `m`.
#[derive(Debug, Clone)]
pub struct ContextSpace {
    codec: WindowCodec,
    u: usize,
    v: usize,
    m: usize,
    num_inputs: usize,
    num_states: usize,
    admissible: Vec<bool>,
    steps: Vec<ContextStep>,
}

impl ContextSpace {
    /// Requires `u <= v <= m` and `m >= constraint memory`.
    pub fn new(channel: &ChannelSpec, u: usize, v: usize, m: usize) -> Result<Self> {
        Self::with_alphabets(channel.num_inputs(), channel.num_states(), channel.constraint(), u, v, m)
    }

    pub fn with_alphabets(
        num_inputs: usize,
        num_states: usize,
        constraint: &InputConstraint,
        u: usize,
        v: usize,
        m: usize,
    ) -> Result<Self> {
        if u > v {
            return Err(Error::InvalidParameters(format!("u = {u} exceeds v = {v}")));
        }
        if v > m {
            return Err(Error::InvalidParameters(format!("v = {v} exceeds m = {m}")));
        }
        if m < constraint.memory() {
            return Err(Error::InvalidParameters(format!(
                "input memory m = {m} is shorter than the constraint memory {}",
                constraint.memory()
            )));
        }
        let codec = WindowCodec::new(num_inputs, num_states, m, v - u + 1);
        let size = codec.size();
        let mut admissible = Vec::with_capacity(size);
        let mut steps = Vec::with_capacity(size);
        for idx in 0..size {
            let (xs, ss) = codec.decode(idx)?;
            admissible.push(constraint.window_admissible(&xs));
            let allowed: Vec<usize> = (0..num_inputs).filter(|&x| constraint.allowed(&xs, x)).collect();
            let mut succ = Vec::with_capacity(num_inputs * num_states);
            for x in 0..num_inputs {
                for s in 0..num_states {
                    succ.push(codec.shift(idx, x, Some(s))?);
                }
            }
            steps.push(ContextStep { xs, ss, allowed, succ });
        }
        if !admissible.iter().any(|&a| a) {
            return Err(Error::InvalidParameters("no admissible context".into()));
        }
        Ok(Self { codec, u, v, m, num_inputs, num_states, admissible, steps })
    }

    pub fn size(&self) -> usize {
        self.codec.size()
    }

    pub fn u(&self) -> usize {
        self.u
    }

    pub fn v(&self) -> usize {
        self.v
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn state_window_len(&self) -> usize {
        self.codec.state_len()
    }

    pub fn num_inputs(&self) -> usize {
        self.num_inputs
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn codec(&self) -> &WindowCodec {
        &self.codec
    }

    pub fn is_admissible(&self, index: usize) -> bool {
        self.admissible[index]
    }

    pub fn admissible(&self) -> &[bool] {
        &self.admissible
    }

    pub fn admissible_count(&self) -> usize {
        self.admissible.iter().filter(|&&a| a).count()
    }

    pub fn encode(&self, xs: &[usize], ss: &[usize]) -> Result<usize> {
        self.codec.encode(xs, ss)
    }

    pub fn decode(&self, index: usize) -> Result<(Vec<usize>, Vec<usize>)> {
        self.codec.decode(index)
    }

    pub fn shift(&self, index: usize, new_x: usize, new_s: Option<usize>) -> Result<usize> {
        self.codec.shift(index, new_x, new_s)
    }

    /// Inputs the constraint allows after context `index`.
    pub fn allowed_inputs(&self, index: usize) -> &[usize] {
        &self.steps[index].allowed
    }

    pub(crate) fn step_info(&self, index: usize) -> &ContextStep {
        &self.steps[index]
    }

    /// Successor context after appending `x` and `s`.
    #[inline]
    pub fn successor(&self, index: usize, x: usize, s: usize) -> usize {
        self.steps[index].succ[x * self.num_states + s]
    }

    /// Input `x_{t-u}` read from the extended window `(x_{t-m}..x_{t-1}, x_new)`.
    #[inline]
    pub fn delayed_input(&self, index: usize, x_new: usize) -> usize {
        if self.u == 0 {
            x_new
        } else {
            self.steps[index].xs[self.m - self.u]
        }
    }

    /// State `s_{t-u-1}`, the most recent state in the window.
    #[inline]
    pub fn latest_state(&self, index: usize) -> usize {
        *self.steps[index].ss.last().expect("state window is never empty")
    }

    /// State `s_{t-v-1}`, the oldest state in the window.
    #[inline]
    pub fn oldest_state(&self, index: usize) -> usize {
        self.steps[index].ss[0]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn space(m: usize, u: usize, v: usize, constraint: &InputConstraint) -> ContextSpace {
        ContextSpace::with_alphabets(2, 2, constraint, u, v, m).unwrap()
    }

    #[test]
    fn encode_follows_documented_order() {
        let none = InputConstraint::unconstrained(2);
        let sp = space(1, 1, 1, &none);
        assert_eq!(sp.size(), 4);
        assert_eq!(sp.encode(&[1], &[1]).unwrap(), 3);
        assert_eq!(sp.encode(&[0], &[0]).unwrap(), 0);
        assert_eq!(sp.decode(2).unwrap(), (vec![1], vec![0]));
        assert!(matches!(sp.decode(4), Err(Error::IndexOutOfRange { .. })));
        assert!(matches!(sp.encode(&[0, 1], &[0]), Err(Error::WindowLengthMismatch { .. })));
        assert!(matches!(sp.encode(&[2], &[0]), Err(Error::LetterOutOfRange { .. })));
        let sp = space(2, 2, 2, &none);
        assert_eq!(sp.size(), 8);
    }

    #[test]
    fn exhaustive_round_trip() {
        let none = InputConstraint::unconstrained(2);
        for (m, u, v) in [(0, 0, 0), (1, 0, 1), (2, 0, 2), (2, 1, 2), (3, 1, 2)] {
            let sp = space(m, u, v, &none);
            for idx in 0..sp.size() {
                let (xs, ss) = sp.decode(idx).unwrap();
                assert_eq!(sp.encode(&xs, &ss).unwrap(), idx);
            }
        }
    }

    #[test]
    fn shift_semantics() {
        let none = InputConstraint::unconstrained(2);
        let sp = space(1, 1, 1, &none);
        let from = sp.encode(&[0], &[0]).unwrap();
        assert_eq!(sp.shift(from, 1, Some(1)).unwrap(), sp.encode(&[1], &[1]).unwrap());
        let sp = space(2, 2, 2, &none);
        let from = sp.encode(&[0, 1], &[0]).unwrap();
        assert_eq!(sp.shift(from, 0, Some(1)).unwrap(), sp.encode(&[1, 0], &[1]).unwrap());
        assert!(matches!(sp.shift(from, 5, None), Err(Error::LetterOutOfRange { .. })));
    }

    #[test]
    fn rll_admissibility() {
        let rll = InputConstraint::rll_1_inf();
        let sp = space(2, 2, 2, &rll);
        let into_11 = sp.shift(sp.encode(&[0, 1], &[0]).unwrap(), 1, Some(0)).unwrap();
        assert!(!sp.is_admissible(into_11));
        let windows: Vec<Vec<usize>> =
            (0..sp.size()).filter(|&i| sp.is_admissible(i)).map(|i| sp.decode(i).unwrap().0).collect();
        assert_eq!(sp.admissible_count(), 3 * 2);
        assert!(windows.iter().all(|w| w != &vec![1, 1]));
        let sp1 = space(1, 1, 1, &rll);
        assert_eq!(sp1.admissible_count(), 4);
        assert_eq!(sp1.allowed_inputs(sp1.encode(&[1], &[0]).unwrap()), &[0]);
        assert_eq!(sp1.allowed_inputs(sp1.encode(&[0], &[1]).unwrap()), &[0, 1]);
    }

    #[test]
    fn rejects_bad_delays() {
        let none = InputConstraint::unconstrained(2);
        assert!(ContextSpace::with_alphabets(2, 2, &none, 2, 1, 2).is_err());
        assert!(ContextSpace::with_alphabets(2, 2, &none, 0, 2, 1).is_err());
        let rll = InputConstraint::rll_1_inf();
        assert!(ContextSpace::with_alphabets(2, 2, &rll, 0, 0, 0).is_err());
    }

    #[test]
    fn window_accessors() {
        let none = InputConstraint::unconstrained(2);
        let sp = space(2, 0, 1, &none);
        // states s_{t-2}, s_{t-1}
        let idx = sp.encode(&[1, 0], &[1, 0]).unwrap();
        assert_eq!(sp.oldest_state(idx), 1);
        assert_eq!(sp.latest_state(idx), 0);
        assert_eq!(sp.delayed_input(idx, 1), 1);
        let sp = space(2, 2, 2, &none);
        let idx = sp.encode(&[1, 0], &[0]).unwrap();
        assert_eq!(sp.delayed_input(idx, 0), 1);
    }

    proptest! {
        #[test]
        fn codec_bijection(m in 0usize..4, w in 1usize..4, nx in 1usize..4, ns in 1usize..4, seed in any::<usize>()) {
            let codec = WindowCodec::new(nx, ns, m, w);
            let idx = seed % codec.size();
            let (xs, ss) = codec.decode(idx).unwrap();
            prop_assert_eq!(codec.encode(&xs, &ss).unwrap(), idx);
            prop_assert_eq!(codec.size(), nx.pow(m as u32) * ns.pow(w as u32));
        }
    }
}
