//! Independent oracles shared by the integration tests.

#![allow(dead_code)]

use pbsi_core::energy::EnergyModel;
use pbsi_core::mdp::FiniteMdp;
use pbsi_core::params::SensorParams;

pub fn bernoulli_sensor(eta: f64, xi: f64, p: f64) -> SensorParams {
    SensorParams::with_defaults(eta, xi, EnergyModel::bernoulli(p).unwrap())
}

/// Solves `A x = b` in place by Gaussian elimination with partial pivoting.
pub fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        assert!(a[pivot][col].abs() > 1e-12, "singular system at column {col}");
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x
}

/// Exact gain and bias (`h[reference] = 0`) of a stationary policy on a
/// unichain MDP, from `g + h(s) = c(s) + sum_s' P(s, s') h(s')`.
pub fn evaluate_policy(mdp: &FiniteMdp, policy: &[u32], reference: usize) -> (f64, Vec<f64>) {
    let n = mdp.num_states();
    // Unknowns: h(0..n) with h(reference) replaced by g.
    let mut a = vec![vec![0.0; n]; n];
    let mut b = vec![0.0; n];
    for s in 0..n {
        let c = mdp.choice_for(s, policy[s]).expect("policy action not allowed");
        b[s] = c.cost;
        a[s][reference] += 1.0;
        if s != reference {
            a[s][s] += 1.0;
        }
        for &(next, p) in mdp.transitions(c) {
            let next = next as usize;
            if next != reference {
                a[s][next] -= p;
            }
        }
    }
    let x = solve_dense(a, b);
    let gain = x[reference];
    let mut h = x;
    h[reference] = 0.0;
    (gain, h)
}

/// Largest improvement any single action offers over the policy's own
/// evaluation; nonpositive (up to rounding) iff the policy is optimal.
pub fn max_improvement(mdp: &FiniteMdp, gain: f64, h: &[f64]) -> f64 {
    let mut worst = f64::NEG_INFINITY;
    for s in 0..mdp.num_states() {
        for c in mdp.choices(s) {
            let q: f64 = c.cost + mdp.transitions(c).iter().map(|&(t, p)| p * h[t as usize]).sum::<f64>();
            worst = worst.max(gain + h[s] - q);
        }
    }
    worst
}
