//! Stationary average-age solver for piecewise-linear stochastic hybrid
//! systems (SHS) with a finite discrete state space.
//!
//! The hybrid state is a discrete Markov state `q(t)` together with a
//! continuous age row `x(t)`. In state `q` the row grows as `ẋ = b_q` with a
//! binary drift vector `b_q`; a transition `l` fires at rate `λ_l` from its
//! source state and jumps the row to `x A_l` for a binary reset matrix `A_l`.
//! For an ergodic chain with stationary distribution `π`, the stationary
//! correlation rows `v_q = lim E[x(t)·1{q(t)=q}]` satisfy one linear balance
//! equation per state,
//!
//! ```text
//! v_q · (sum of outgoing rates)  =  b_q π_q  +  Σ_incoming λ_l v_{q_l} A_l,
//! ```
//!
//! and the average age of the tracked process is `Σ_q v_q[0]`.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Balance-equation residual accepted for a stationary distribution.
pub const BALANCE_TOL: f64 = 1e-12;
/// Per-equation residual accepted for the age balance system.
pub const AGE_RESIDUAL_TOL: f64 = 1e-10;
/// Entries of a valid solution may dip this far below zero from round-off;
/// anything lower signals that no non-negative solution exists.
pub const NEGATIVE_ENTRY_TOL: f64 = -1e-9;
/// Largest system the dense LU backend accepts.
pub const MAX_DENSE_UNKNOWNS: usize = 5000;

#[derive(Debug, Error)]
pub enum ShsError {
    #[error("transition {transition}: reset map is not a binary {dim}x{dim} matrix")]
    NonBinaryReset { transition: usize, dim: usize },
    #[error("transition {transition}: rate {rate} is not strictly positive")]
    NonPositiveRate { transition: usize, rate: f64 },
    #[error("transition {transition} references state {state} outside 0..{num_states}")]
    DanglingState {
        transition: usize,
        state: usize,
        num_states: usize,
    },
    #[error("state {state} is unreachable from state 0")]
    UnreachableState { state: usize },
    #[error("state {state}: drift vector is not a binary row of length {dim}")]
    NonBinaryDrift { state: usize, dim: usize },
    #[error("balance equations have no unique stationary solution: {0}")]
    NotErgodic(String),
    #[error("age balance system has no non-negative solution: {0}")]
    UnstableSystem(String),
    #[error("system has {unknowns} unknowns, dense backend is limited to {limit}")]
    TooLarge { unknowns: usize, limit: usize },
}

/// One directed transition of the discrete chain. Self-loops and parallel
/// transitions between the same state pair are both allowed.
#[derive(Debug, Clone)]
pub struct Transition {
    pub from_state: usize,
    pub to_state: usize,
    /// Firing rate (events per unit time) while in `from_state`.
    pub rate: f64,
    /// Binary reset map applied as `x' = x A` when the transition fires;
    /// `reset[i][j]` is the (i, j) entry.
    pub reset: Vec<Vec<u8>>,
}

/// A finite-state AoI stochastic hybrid system.
#[derive(Debug, Clone)]
pub struct ShsSpec {
    /// Discrete states are labeled `0..num_states`.
    pub num_states: usize,
    /// Length of the continuous age row.
    pub age_dim: usize,
    pub transitions: Vec<Transition>,
    /// Per-state binary drift rows, `drifts[q][j] = 1` iff `x_j` grows at
    /// unit rate in state `q`.
    pub drifts: Vec<Vec<u8>>,
}

/// Stationary solution of an AoI SHS.
#[derive(Debug, Clone)]
pub struct AgeSolution {
    /// Stationary distribution of the discrete chain.
    pub stationary: Vec<f64>,
    /// Per-state correlation rows `v_q`, each of length `age_dim`.
    pub correlations: Vec<Vec<f64>>,
    /// `Σ_q correlations[q][0]`, the average age.
    pub average_age: f64,
}

/// Sums the first component of each correlation row, which is the average
/// age of the tracked process.
pub fn average_age(correlations: &[Vec<f64>]) -> f64 {
    correlations.iter().map(|row| row[0]).sum()
}

impl ShsSpec {
    /// Checks the structural invariants: states in range, strictly positive
    /// rates, binary reset maps of shape `age_dim × age_dim`, binary drift
    /// rows, and every state reachable from state 0.
    pub fn validate(&self) -> Result<(), ShsError> {
        for (q, drift) in self.drifts.iter().enumerate() {
            if drift.len() != self.age_dim || drift.iter().any(|&b| b > 1) {
                return Err(ShsError::NonBinaryDrift {
                    state: q,
                    dim: self.age_dim,
                });
            }
        }
        if self.drifts.len() != self.num_states {
            return Err(ShsError::NonBinaryDrift {
                state: self.drifts.len(),
                dim: self.age_dim,
            });
        }
        for (l, t) in self.transitions.iter().enumerate() {
            for state in [t.from_state, t.to_state] {
                if state >= self.num_states {
                    return Err(ShsError::DanglingState {
                        transition: l,
                        state,
                        num_states: self.num_states,
                    });
                }
            }
            if !(t.rate > 0.0) || !t.rate.is_finite() {
                return Err(ShsError::NonPositiveRate {
                    transition: l,
                    rate: t.rate,
                });
            }
            let binary = t.reset.len() == self.age_dim
                && t.reset
                    .iter()
                    .all(|row| row.len() == self.age_dim && row.iter().all(|&e| e <= 1));
            if !binary {
                return Err(ShsError::NonBinaryReset {
                    transition: l,
                    dim: self.age_dim,
                });
            }
        }
        self.check_reachability()
    }

    fn check_reachability(&self) -> Result<(), ShsError> {
        let mut seen = vec![false; self.num_states];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(q) = stack.pop() {
            for t in self.transitions.iter().filter(|t| t.from_state == q) {
                if !seen[t.to_state] {
                    seen[t.to_state] = true;
                    stack.push(t.to_state);
                }
            }
        }
        match seen.iter().position(|&s| !s) {
            Some(state) => Err(ShsError::UnreachableState { state }),
            None => Ok(()),
        }
    }

    /// Total rate out of state `q` (self-loops included).
    fn outgoing_rate(&self, q: usize) -> f64 {
        self.transitions
            .iter()
            .filter(|t| t.from_state == q)
            .map(|t| t.rate)
            .sum()
    }

    /// Solves the global balance equations together with normalization and
    /// returns the unique stationary distribution of the discrete chain.
    pub fn stationary_distribution(&self) -> Result<Vec<f64>, ShsError> {
        self.validate()?;
        let n = self.num_states;
        if n > MAX_DENSE_UNKNOWNS {
            return Err(ShsError::TooLarge {
                unknowns: n,
                limit: MAX_DENSE_UNKNOWNS,
            });
        }

        // Row q: pi_q * (rate out of q) - sum of incoming rate * pi_source.
        // The last row is replaced by the normalization constraint.
        let mut m = DMatrix::<f64>::zeros(n, n);
        for q in 0..n {
            m[(q, q)] = self.outgoing_rate(q);
        }
        for t in &self.transitions {
            m[(t.to_state, t.from_state)] -= t.rate;
        }
        for q in 0..n {
            m[(n - 1, q)] = 1.0;
        }
        let mut b = DVector::<f64>::zeros(n);
        b[n - 1] = 1.0;

        let pi = m
            .lu()
            .solve(&b)
            .ok_or_else(|| ShsError::NotErgodic("singular balance system".into()))?;

        let mut pi: Vec<f64> = pi.iter().copied().collect();
        for p in pi.iter_mut() {
            if *p < 0.0 {
                if *p < -BALANCE_TOL {
                    return Err(ShsError::NotErgodic(format!(
                        "negative stationary probability {p}"
                    )));
                }
                *p = 0.0;
            }
        }
        let residual = balance_residual(self, &pi);
        let norm_err = (pi.iter().sum::<f64>() - 1.0).abs();
        if residual > BALANCE_TOL || norm_err > BALANCE_TOL {
            return Err(ShsError::NotErgodic(format!(
                "balance residual {residual:.3e}, normalization error {norm_err:.3e}"
            )));
        }
        Ok(pi)
    }

    /// Solves the stationary age balance equations for the correlation rows
    /// `v_q` and the average age, given the stationary distribution `pi`.
    ///
    /// Fails with [`ShsError::UnstableSystem`] when the linear system is
    /// singular, leaves a residual above [`AGE_RESIDUAL_TOL`], or produces
    /// entries below [`NEGATIVE_ENTRY_TOL`] — all signs that no non-negative
    /// stationary solution exists.
    pub fn solve_age(&self, pi: &[f64]) -> Result<AgeSolution, ShsError> {
        assert_eq!(pi.len(), self.num_states, "pi length must match num_states");
        let n = self.num_states;
        let d = self.age_dim;
        let unknowns = n * d;
        if unknowns > MAX_DENSE_UNKNOWNS {
            return Err(ShsError::TooLarge {
                unknowns,
                limit: MAX_DENSE_UNKNOWNS,
            });
        }

        // Unknown (q, j) lives at index q*d + j. Row (q, j): outgoing-rate
        // term on the diagonal, incoming transitions contribute
        // -rate * A[i][j] on column (source, i).
        let mut m = DMatrix::<f64>::zeros(unknowns, unknowns);
        let mut b = DVector::<f64>::zeros(unknowns);
        for q in 0..n {
            let out = self.outgoing_rate(q);
            for j in 0..d {
                m[(q * d + j, q * d + j)] += out;
                b[q * d + j] = f64::from(self.drifts[q][j]) * pi[q];
            }
        }
        for t in &self.transitions {
            for i in 0..d {
                for j in 0..d {
                    if t.reset[i][j] == 1 {
                        m[(t.to_state * d + j, t.from_state * d + i)] -= t.rate;
                    }
                }
            }
        }

        let x = m
            .lu()
            .solve(&b)
            .ok_or_else(|| ShsError::UnstableSystem("singular age system".into()))?;

        let correlations: Vec<Vec<f64>> = (0..n)
            .map(|q| x.as_slice()[q * d..(q + 1) * d].to_vec())
            .collect();

        let worst = correlations
            .iter()
            .flatten()
            .copied()
            .fold(f64::INFINITY, f64::min);
        if worst < NEGATIVE_ENTRY_TOL {
            return Err(ShsError::UnstableSystem(format!(
                "solution entry {worst:.3e} below tolerance"
            )));
        }
        let residual = age_residual(self, pi, &correlations);
        if residual > AGE_RESIDUAL_TOL {
            return Err(ShsError::UnstableSystem(format!(
                "age equation residual {residual:.3e}"
            )));
        }

        let average_age = average_age(&correlations);
        Ok(AgeSolution {
            stationary: pi.to_vec(),
            correlations,
            average_age,
        })
    }
}

/// Largest absolute balance-equation residual of `pi`, recomputed directly
/// from the transition list.
pub fn balance_residual(spec: &ShsSpec, pi: &[f64]) -> f64 {
    let mut worst = 0.0f64;
    for q in 0..spec.num_states {
        let mut r = pi[q] * spec.outgoing_rate(q);
        for t in spec.transitions.iter().filter(|t| t.to_state == q) {
            r -= t.rate * pi[t.from_state];
        }
        worst = worst.max(r.abs());
    }
    worst
}

/// Largest absolute age-equation residual of the correlation rows `v`,
/// recomputed directly from the transition list.
pub fn age_residual(spec: &ShsSpec, pi: &[f64], v: &[Vec<f64>]) -> f64 {
    let d = spec.age_dim;
    let mut worst = 0.0f64;
    for q in 0..spec.num_states {
        let out = spec.outgoing_rate(q);
        for j in 0..d {
            let mut r = v[q][j] * out - f64::from(spec.drifts[q][j]) * pi[q];
            for t in spec.transitions.iter().filter(|t| t.to_state == q) {
                let mut inflow = 0.0;
                for i in 0..d {
                    if t.reset[i][j] == 1 {
                        inflow += v[t.from_state][i];
                    }
                }
                r -= t.rate * inflow;
            }
            worst = worst.max(r.abs());
        }
    }
    worst
}
