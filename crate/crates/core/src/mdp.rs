//! Finite average-cost MDPs with sparse transitions, and relative value
//! iteration over them.

use crate::error::{Error, Result};

const ROW_SUM_TOL: f64 = 1e-9;

/// One allowable action of a state: its cost and sparse successor row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Choice {
    pub action: u32,
    pub cost: f64,
    start: usize,
    end: usize,
}

/// Enumerated states, per-state action sets, sparse transitions and costs.
///
/// Rows are stored contiguously; a state's choices are sorted by action id.
#[derive(Debug, Clone)]
pub struct FiniteMdp {
    state_offsets: Vec<usize>,
    choices: Vec<Choice>,
    entries: Vec<(u32, f64)>,
}

/// Incremental constructor for [`FiniteMdp`].
#[derive(Debug, Clone)]
pub struct MdpBuilder {
    rows: Vec<Vec<(u32, f64, Vec<(u32, f64)>)>>,
}

impl MdpBuilder {
    pub fn new(num_states: usize) -> Self {
        MdpBuilder { rows: vec![Vec::new(); num_states] }
    }

    /// Adds action `action` to `state` with the given cost and successor row.
    pub fn add<I>(&mut self, state: usize, action: u32, cost: f64, transitions: I) -> &mut Self
    where
        I: IntoIterator<Item = (usize, f64)>,
    {
        let row = transitions.into_iter().map(|(s, p)| (s as u32, p)).collect();
        self.rows[state].push((action, cost, row));
        self
    }

    pub fn build(self) -> Result<FiniteMdp> {
        let n = self.rows.len();
        if n == 0 {
            return Err(Error::Validation("MDP has no states".into()));
        }
        let mut state_offsets = Vec::with_capacity(n + 1);
        let mut choices = Vec::new();
        let mut entries = Vec::new();
        for (s, mut row) in self.rows.into_iter().enumerate() {
            state_offsets.push(choices.len());
            if row.is_empty() {
                return Err(Error::Validation(format!("state {s} has no allowable action")));
            }
            row.sort_by_key(|(a, _, _)| *a);
            if row.windows(2).any(|w| w[0].0 == w[1].0) {
                return Err(Error::Validation(format!("state {s} lists an action twice")));
            }
            for (action, cost, trans) in row {
                if !cost.is_finite() {
                    return Err(Error::Validation(format!("state {s} action {action}: cost {cost}")));
                }
                let mut total = 0.0;
                for &(next, p) in &trans {
                    if next as usize >= n {
                        return Err(Error::Validation(format!(
                            "state {s} action {action}: successor {next} out of range"
                        )));
                    }
                    if !(p.is_finite() && p >= 0.0) {
                        return Err(Error::Validation(format!(
                            "state {s} action {action}: negative probability {p}"
                        )));
                    }
                    total += p;
                }
                if (total - 1.0).abs() > ROW_SUM_TOL {
                    return Err(Error::Validation(format!(
                        "state {s} action {action}: row sums to {total}"
                    )));
                }
                let start = entries.len();
                entries.extend(trans.into_iter().filter(|&(_, p)| p > 0.0));
                choices.push(Choice { action, cost, start, end: entries.len() });
            }
        }
        state_offsets.push(choices.len());
        Ok(FiniteMdp { state_offsets, choices, entries })
    }
}

impl FiniteMdp {
    pub fn num_states(&self) -> usize {
        self.state_offsets.len() - 1
    }

    pub fn choices(&self, state: usize) -> &[Choice] {
        &self.choices[self.state_offsets[state]..self.state_offsets[state + 1]]
    }

    pub fn transitions(&self, choice: &Choice) -> &[(u32, f64)] {
        &self.entries[choice.start..choice.end]
    }

    /// Total number of stored (state, action, successor) entries.
    pub fn num_entries(&self) -> usize {
        self.entries.len()
    }

    pub fn choice_for(&self, state: usize, action: u32) -> Option<&Choice> {
        self.choices(state).iter().find(|c| c.action == action)
    }

    #[inline]
    fn q_value(&self, choice: &Choice, h: &[f64]) -> f64 {
        let mut acc = choice.cost;
        for &(next, p) in &self.entries[choice.start..choice.end] {
            acc += p * h[next as usize];
        }
        acc
    }

    /// Greedy action and its Q-value; near-ties go to the lowest action id.
    fn greedy(&self, state: usize, h: &[f64]) -> (u32, f64) {
        let mut best = (u32::MAX, f64::INFINITY);
        for c in self.choices(state) {
            let q = self.q_value(c, h);
            if q < best.1 - 1e-12 * (1.0 + best.1.abs()) || best.0 == u32::MAX {
                best = (c.action, q);
            }
        }
        best
    }
}

/// Stopping rule and reference state for [`relative_value_iteration`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RviOptions {
    /// Span seminorm threshold on successive value differences.
    pub tol: f64,
    pub max_iters: usize,
    pub ref_state: usize,
    /// Weight `tau` of the aperiodicity transform `tau*I + (1-tau)*P`.
    /// Zero runs the plain iteration; periodic chains need `tau > 0`.
    pub aperiodicity: f64,
}

impl Default for RviOptions {
    fn default() -> Self {
        RviOptions { tol: 1e-6, max_iters: 100_000, ref_state: 0, aperiodicity: 0.0 }
    }
}

/// Output of relative value iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct RviSolution {
    /// Optimal average cost per stage.
    pub gain: f64,
    /// Relative values, zero at the reference state.
    pub bias: Vec<f64>,
    /// Greedy action per state.
    pub policy: Vec<u32>,
    pub iterations: usize,
    pub final_span: f64,
    /// Multiplications performed by one sweep over the sparse rows.
    pub work_per_iteration: u64,
}

/// Relative value iteration for a unichain average-cost MDP.
pub fn relative_value_iteration(mdp: &FiniteMdp, opts: &RviOptions) -> Result<RviSolution> {
    let n = mdp.num_states();
    if opts.ref_state >= n {
        return Err(Error::Validation(format!("reference state {} out of range", opts.ref_state)));
    }
    if !(opts.tol > 0.0) || opts.max_iters == 0 {
        return Err(Error::Validation("tolerance and iteration limit must be positive".into()));
    }
    if !(0.0..1.0).contains(&opts.aperiodicity) {
        return Err(Error::Validation("aperiodicity must be in [0, 1)".into()));
    }
    let tau = opts.aperiodicity;
    let mut v = vec![0.0; n];
    let mut v_new = vec![0.0; n];
    let mut h = vec![0.0; n];
    let mut span = f64::INFINITY;

    for iter in 1..=opts.max_iters {
        let mut work = 0u64;
        for (s, out) in v_new.iter_mut().enumerate() {
            let mut best = f64::INFINITY;
            for c in mdp.choices(s) {
                work += (c.end - c.start) as u64;
                let mut q = mdp.q_value(c, &h);
                if tau > 0.0 {
                    // c + tau*h(s) + (1-tau)*sum p h
                    q = c.cost + tau * h[s] + (1.0 - tau) * (q - c.cost);
                }
                if q < best {
                    best = q;
                }
            }
            *out = best;
        }
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for (a, b) in v_new.iter().zip(&v) {
            let d = a - b;
            lo = lo.min(d);
            hi = hi.max(d);
        }
        span = hi - lo;
        std::mem::swap(&mut v, &mut v_new);
        let anchor = v[opts.ref_state];
        for (hs, vs) in h.iter_mut().zip(&v) {
            *hs = vs - anchor;
        }
        if span < opts.tol {
            let gain = v[opts.ref_state];
            let bias: Vec<f64> = h.iter().map(|x| x * (1.0 - tau)).collect();
            let policy = (0..n).map(|s| mdp.greedy(s, &bias).0).collect();
            return Ok(RviSolution {
                gain,
                bias,
                policy,
                iterations: iter,
                final_span: span,
                work_per_iteration: work,
            });
        }
    }
    Err(Error::IterationLimit { iterations: opts.max_iters, span })
}

/// `max_s |min_a (c + sum p h) - g - h(s)|` for a candidate solution.
pub fn bellman_residual(mdp: &FiniteMdp, gain: f64, bias: &[f64]) -> f64 {
    (0..mdp.num_states())
        .map(|s| (mdp.greedy(s, bias).1 - gain - bias[s]).abs())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_state_self_loop() {
        let mut b = MdpBuilder::new(1);
        b.add(0, 0, 2.5, [(0, 1.0)]);
        let mdp = b.build().unwrap();
        let sol = relative_value_iteration(&mdp, &RviOptions::default()).unwrap();
        assert!((sol.gain - 2.5).abs() < 1e-12);
        assert_eq!(sol.bias, vec![0.0]);
        assert_eq!(sol.policy, vec![0]);
    }

    #[test]
    fn deterministic_two_cycle_needs_aperiodicity() {
        let mut b = MdpBuilder::new(2);
        b.add(0, 0, 1.0, [(1, 1.0)]);
        b.add(1, 0, 3.0, [(0, 1.0)]);
        let mdp = b.build().unwrap();
        let plain = RviOptions { max_iters: 1000, ..RviOptions::default() };
        assert!(matches!(
            relative_value_iteration(&mdp, &plain),
            Err(Error::IterationLimit { .. })
        ));
        let opts = RviOptions { aperiodicity: 0.5, ..RviOptions::default() };
        let sol = relative_value_iteration(&mdp, &opts).unwrap();
        // g + h0 = 1 + h1, g + h1 = 3 + h0, h0 = 0  =>  g = 2, h1 = 1.
        assert!((sol.gain - 2.0).abs() < 1e-6);
        assert!((sol.bias[1] - sol.bias[0] - 1.0).abs() < 1e-6);
        assert!(bellman_residual(&mdp, sol.gain, &sol.bias) < 1e-5);
    }

    #[test]
    fn picks_cheaper_action_and_breaks_ties_low() {
        let mut b = MdpBuilder::new(2);
        b.add(0, 1, 1.0, [(0, 0.5), (1, 0.5)]);
        b.add(0, 0, 1.0, [(0, 0.5), (1, 0.5)]);
        b.add(1, 0, 5.0, [(0, 1.0)]);
        b.add(1, 1, 2.0, [(0, 1.0)]);
        let mdp = b.build().unwrap();
        let sol = relative_value_iteration(&mdp, &RviOptions::default()).unwrap();
        assert_eq!(sol.policy, vec![0, 1]);
        assert!(sol.final_span < 1e-6);
    }

    #[test]
    fn validation_errors() {
        let mut b = MdpBuilder::new(2);
        b.add(0, 0, 1.0, [(0, 0.7)]);
        b.add(1, 0, 1.0, [(0, 1.0)]);
        assert!(matches!(b.build(), Err(Error::Validation(_))));

        let mut b = MdpBuilder::new(2);
        b.add(0, 0, 1.0, [(2, 1.0)]);
        b.add(1, 0, 1.0, [(0, 1.0)]);
        assert!(b.build().is_err());

        let mut b = MdpBuilder::new(2);
        b.add(0, 0, 1.0, [(0, 1.0)]);
        assert!(b.build().is_err(), "state without actions");

        let mut b = MdpBuilder::new(1);
        b.add(0, 0, 1.0, [(0, 1.5), (0, -0.5)]);
        assert!(b.build().is_err());

        let mut b = MdpBuilder::new(1);
        b.add(0, 0, 1.0, [(0, 1.0)]);
        let mdp = b.build().unwrap();
        let bad_ref = RviOptions { ref_state: 3, ..RviOptions::default() };
        assert!(relative_value_iteration(&mdp, &bad_ref).is_err());
    }
}
