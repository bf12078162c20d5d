//! Multi-source M/M/1/m blocking model.
//!
//! One source with offered load `rho_source` shares a single exponential
//! server (rate `mu`) with competing Poisson traffic of load `rho_other`;
//! arrivals that find `m` updates already in the system are discarded. The
//! discrete state is the number of updates in the system and the age row
//! tracks, in each occupied queue position, the value to which the monitor
//! age will be reset when that position's update completes service.
//!
//! The average age of the focal source in the blocking system is computed by
//! two independent routes: [`age_blocking`] builds the hybrid-system
//! description ([`build_shs`]) and hands it to the generic solver, while
//! [`age_blocking_recursive`] telescopes the per-state balance equations into
//! an O(m) coefficient recursion. [`age_limit`] drives the recursion through
//! a doubling schedule in `m` to extract the infinite-queue age.

use crate::shs::{AgeSolution, ShsError, ShsSpec, Transition};
use thiserror::Error;

/// Largest buffer size the recursion accepts. Expansion coefficients grow
/// geometrically with base at most `1 + rho`, so for loads up to `rho = 1`
/// they stay within f64 range up to this cap.
pub const MAX_RECURSION_BUFFER: usize = 900;

#[derive(Debug, Error)]
pub enum Mm1Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("expansion coefficients left f64 range at k = {0}")]
    Overflow(usize),
    #[error("total load {0} is not below 1, the infinite-queue age diverges")]
    Unstable(f64),
    #[error("age did not converge to relative tolerance {tol} within buffer cap {cap}")]
    NoConvergence { tol: f64, cap: usize },
    #[error(transparent)]
    Shs(#[from] ShsError),
}

/// Parameters of the blocking system.
#[derive(Debug, Clone, Copy)]
pub struct Mm1Params {
    /// Service rate.
    pub mu: f64,
    /// Offered load of the focal source.
    pub rho_source: f64,
    /// Aggregate offered load of all competing sources.
    pub rho_other: f64,
    /// Buffer size: at most `m` updates in the system.
    pub m: usize,
}

impl Mm1Params {
    pub fn new(mu: f64, rho_source: f64, rho_other: f64, m: usize) -> Result<Self, Mm1Error> {
        let ok = mu.is_finite()
            && mu > 0.0
            && rho_source.is_finite()
            && rho_source > 0.0
            && rho_other.is_finite()
            && rho_other >= 0.0
            && m >= 1;
        if !ok {
            return Err(Mm1Error::InvalidParams(format!(
                "mu={mu}, rho_source={rho_source}, rho_other={rho_other}, m={m}"
            )));
        }
        Ok(Self {
            mu,
            rho_source,
            rho_other,
            m,
        })
    }

    /// Total offered load.
    pub fn rho(&self) -> f64 {
        self.rho_source + self.rho_other
    }

    pub fn lambda_source(&self) -> f64 {
        self.rho_source * self.mu
    }

    pub fn lambda_other(&self) -> f64 {
        self.rho_other * self.mu
    }

    /// Total arrival rate.
    pub fn lambda(&self) -> f64 {
        self.rho() * self.mu
    }
}

/// Expansion of the diagonal correlation entry `v_{k,k}` in terms of
/// `v_{0,0}`: `v_{k,k} = slope * v_{0,0} - offset`, together with the
/// underlying coefficients `c_{j,k}` for `1 <= j <= k`.
#[derive(Debug, Clone)]
pub struct CoeffTable {
    pub k: usize,
    /// `coeffs[j - 1]` holds `c_{j,k}`; empty for `k = 0`.
    pub coeffs: Vec<f64>,
    /// Multiplier of `v_{0,0}` (1 at `k = 0`, `rho` at `k = 1`).
    pub slope: f64,
    /// Constant part (0 at `k = 0`, `pi_0 / mu` at `k = 1`).
    pub offset: f64,
}

/// Builds the (m+1)-state hybrid-system description of the blocking queue.
///
/// For each state `k < m` there are two arrival transitions into `k + 1`:
/// an arrival of the focal source starts a fresh age component at zero,
/// while a competing arrival duplicates the last tracked component (its
/// departure must not change the monitor age). Each state `k + 1` has a
/// departure transition into `k` that left-shifts the row: the component in
/// service becomes the new monitor age. Zero-rate transitions (a source
/// with zero load) never fire and are omitted. In state `k` the first
/// `k + 1` components grow at unit rate.
pub fn build_shs(params: &Mm1Params) -> ShsSpec {
    let m = params.m;
    let dim = m + 1;
    let mut transitions = Vec::with_capacity(3 * m);

    for k in 0..m {
        let into = k + 1;
        // Identity on the components already tracked in state k.
        let mut own = vec![vec![0u8; dim]; dim];
        for i in 0..into {
            own[i][i] = 1;
        }
        let mut other = own.clone();
        other[into - 1][into] = 1;

        if params.lambda_source() > 0.0 {
            transitions.push(Transition {
                from_state: k,
                to_state: into,
                rate: params.lambda_source(),
                reset: own,
            });
        }
        if params.lambda_other() > 0.0 {
            transitions.push(Transition {
                from_state: k,
                to_state: into,
                rate: params.lambda_other(),
                reset: other,
            });
        }

        // Departure k+1 -> k: left shift of the k+2 tracked components.
        let mut depart = vec![vec![0u8; dim]; dim];
        for i in 1..=k + 1 {
            depart[i][i - 1] = 1;
        }
        transitions.push(Transition {
            from_state: k + 1,
            to_state: k,
            rate: params.mu,
            reset: depart,
        });
    }

    let drifts = (0..=m)
        .map(|k| {
            let mut row = vec![0u8; dim];
            for entry in row.iter_mut().take(k + 1) {
                *entry = 1;
            }
            row
        })
        .collect();

    ShsSpec {
        num_states: m + 1,
        age_dim: dim,
        transitions,
        drifts,
    }
}

/// Stationary occupancy distribution of the M/M/1/m queue at total load
/// `rho`: proportional to `rho^k`, uniform at `rho = 1`.
pub fn stationary_distribution(rho: f64, m: usize) -> Vec<f64> {
    assert!(rho >= 0.0 && m >= 1, "need rho >= 0 and m >= 1");
    if rho == 1.0 {
        return vec![1.0 / (m + 1) as f64; m + 1];
    }
    // Anchor the geometric weights at whichever end is largest so they
    // never overflow.
    let weights: Vec<f64> = if rho < 1.0 {
        (0..=m).map(|k| rho.powi(k as i32)).collect()
    } else {
        (0..=m).map(|k| rho.powi(k as i32 - m as i32)).collect()
    };
    let total: f64 = weights.iter().sum();
    weights.into_iter().map(|w| w / total).collect()
}

/// Coefficients of the expansion `v_{k,k} = slope * v_{0,0} - offset`.
///
/// The `c_{j,k}` satisfy the backward recursion
/// `c_{j,k} = (1 + rho) c_{j+1,k} - rho_other * c_{j+2,k}` seeded with
/// `c_{k,k} = 1` and `c_{k+1,k} = 0`; then `slope = c_{1,k} rho -
/// c_{2,k} rho_other` and `offset = sum_j c_{j,k} pi_{j-1} / mu`.
pub fn coeff_table(params: &Mm1Params, k: usize) -> CoeffTable {
    assert!(k <= params.m, "need k <= m");
    let rho = params.rho();
    let pi = stationary_distribution(rho, params.m);

    // coeffs[j - 1] = c_{j,k}; filled from j = k down to 1.
    let mut coeffs = vec![0.0f64; k];
    if k >= 1 {
        coeffs[k - 1] = 1.0;
    }
    for j in (1..k).rev() {
        let c1 = coeffs[j]; // c_{j+1,k}
        let c2 = if j + 1 < k { coeffs[j + 1] } else { 0.0 }; // c_{j+2,k}
        coeffs[j - 1] = (1.0 + rho) * c1 - params.rho_other * c2;
    }

    let (slope, offset) = if k == 0 {
        (1.0, 0.0)
    } else {
        let c1 = coeffs[0];
        let c2 = if k >= 2 { coeffs[1] } else { 0.0 };
        let slope = c1 * rho - c2 * params.rho_other;
        let offset = (1..=k).map(|j| coeffs[j - 1] * pi[j - 1]).sum::<f64>() / params.mu;
        (slope, offset)
    };

    CoeffTable {
        k,
        coeffs,
        slope,
        offset,
    }
}

/// Forward O(m) recursion for the expansion pairs `(e_k, f_k)` with
/// `v_{k,k} = e_k v_{0,0} - f_k`, for `k = 0..len`. Both sequences obey
/// `y_k = (1 + rho) y_{k-1} - rho_other * y_{k-2}` with the `f` sequence
/// picking up an extra `pi_{k-1} / mu` each step.
fn expansion_pairs(params: &Mm1Params, pi: &[f64], len: usize) -> Result<Vec<(f64, f64)>, Mm1Error> {
    let rho = params.rho();
    let mut pairs = Vec::with_capacity(len);
    let (mut e_prev2, mut f_prev2) = (1.0f64, 0.0f64);
    if len >= 1 {
        pairs.push((e_prev2, f_prev2));
    }
    let (mut e_prev, mut f_prev) = (rho, pi[0] / params.mu);
    if len >= 2 {
        pairs.push((e_prev, f_prev));
    }
    for k in 2..len {
        let e = (1.0 + rho) * e_prev - params.rho_other * e_prev2;
        let f = (1.0 + rho) * f_prev - params.rho_other * f_prev2 + pi[k - 1] / params.mu;
        if !e.is_finite() || !f.is_finite() {
            return Err(Mm1Error::Overflow(k));
        }
        pairs.push((e, f));
        (e_prev2, f_prev2) = (e_prev, f_prev);
        (e_prev, f_prev) = (e, f);
    }
    Ok(pairs)
}

/// Average age of the focal source in the blocking system, via the generic
/// hybrid-system engine. Intended for moderate buffers (the CLI caps this
/// route at m = 50); use [`age_blocking_recursive`] for large `m`.
pub fn age_blocking(params: &Mm1Params) -> Result<f64, Mm1Error> {
    Ok(age_blocking_solution(params)?.average_age)
}

/// Full stationary solution of the blocking system from the generic engine,
/// exposing the correlation rows alongside the average age.
pub fn age_blocking_solution(params: &Mm1Params) -> Result<AgeSolution, Mm1Error> {
    let spec = build_shs(params);
    let pi = spec.stationary_distribution()?;
    Ok(spec.solve_age(&pi)?)
}

/// Average age of the focal source in the blocking system, via the O(m)
/// telescoped recursion.
///
/// The diagonal entries sum to `1/lambda_source`, which pins down `v_{0,0}`
/// through the expansion pairs; the remaining first-column entries telescope
/// into occupancy moments:
///
/// ```text
/// age = v_{0,0} + (1/mu) * sum_k (k+1) pi_k + (lambda_other/mu) / lambda_source
/// ```
pub fn age_blocking_recursive(params: &Mm1Params) -> Result<f64, Mm1Error> {
    if params.m > MAX_RECURSION_BUFFER {
        return Err(Mm1Error::InvalidParams(format!(
            "m={} exceeds recursion cap {MAX_RECURSION_BUFFER}",
            params.m
        )));
    }
    let pi = stationary_distribution(params.rho(), params.m);
    let pairs = expansion_pairs(params, &pi, params.m)?;

    let sum_e: f64 = pairs.iter().map(|p| p.0).sum();
    let sum_f: f64 = pairs.iter().map(|p| p.1).sum();
    if !sum_e.is_finite() || !sum_f.is_finite() {
        return Err(Mm1Error::Overflow(params.m));
    }
    let v00 = (1.0 / params.lambda_source() + sum_f) / sum_e;

    let occupancy_moment: f64 = pi
        .iter()
        .enumerate()
        .map(|(k, p)| (k + 1) as f64 * p)
        .sum();
    Ok(v00 + occupancy_moment / params.mu + params.rho_other / params.lambda_source())
}

/// Infinite-queue average age of the focal source, as the limit of the
/// blocking-system age under a doubling buffer schedule (m = 32, 64, ...).
///
/// Returns the first value whose doubled-buffer successor agrees within
/// relative `tol`. Requires total load below 1.
pub fn age_limit(mu: f64, rho_source: f64, rho_other: f64, tol: f64) -> Result<f64, Mm1Error> {
    if !(tol > 0.0) {
        return Err(Mm1Error::InvalidParams(format!("tol={tol} must be > 0")));
    }
    let rho = rho_source + rho_other;
    if rho >= 1.0 {
        return Err(Mm1Error::Unstable(rho));
    }

    let mut m = 32usize;
    let mut age = age_blocking_recursive(&Mm1Params::new(mu, rho_source, rho_other, m)?)?;
    while 2 * m <= MAX_RECURSION_BUFFER {
        let next = age_blocking_recursive(&Mm1Params::new(mu, rho_source, rho_other, 2 * m)?)?;
        if (next - age).abs() < tol * age {
            return Ok(age);
        }
        m *= 2;
        age = next;
    }
    Err(Mm1Error::NoConvergence {
        tol,
        cap: MAX_RECURSION_BUFFER,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shs;

    fn assert_close(got: f64, want: f64, tol: f64) {
        assert!(
            (got - want).abs() <= tol,
            "got {got}, want {want} (tol {tol})"
        );
    }

    /// Hand-solved m = 1 age from the three balance equations:
    /// v00 = 1/lambda_source, v10 = (pi_1 + lambda/lambda_source)/mu.
    fn hand_age_m1(params: &Mm1Params) -> f64 {
        let rho = params.rho();
        let pi1 = rho / (1.0 + rho);
        1.0 / params.lambda_source() + (pi1 + params.lambda() / params.lambda_source()) / params.mu
    }

    #[test]
    fn params_rejects_bad_values() {
        assert!(Mm1Params::new(0.0, 0.5, 0.5, 1).is_err());
        assert!(Mm1Params::new(1.0, 0.0, 0.5, 1).is_err());
        assert!(Mm1Params::new(1.0, 0.5, -0.1, 1).is_err());
        assert!(Mm1Params::new(1.0, 0.5, 0.5, 0).is_err());
        assert!(Mm1Params::new(1.0, 0.5, 0.5, 1).is_ok());
    }

    #[test]
    fn build_m2_has_six_transitions() {
        let params = Mm1Params::new(1.0, 0.5, 0.5, 2).unwrap();
        let spec = build_shs(&params);
        assert_eq!(spec.transitions.len(), 6);
        assert_eq!(spec.num_states, 3);
        assert_eq!(spec.age_dim, 3);
        spec.validate().unwrap();
    }

    #[test]
    fn build_reset_maps_are_square_binary() {
        for m in [1usize, 3, 7] {
            let params = Mm1Params::new(2.0, 0.3, 0.4, m).unwrap();
            let spec = build_shs(&params);
            spec.validate().unwrap();
            for t in &spec.transitions {
                assert_eq!(t.reset.len(), m + 1);
                assert!(t.reset.iter().all(|row| row.len() == m + 1));
            }
        }
    }

    #[test]
    fn build_single_source_m1_age() {
        let params = Mm1Params::new(1.0, 1.0, 0.0, 1).unwrap();
        let spec = build_shs(&params);
        // The zero-rate competing-arrival transitions are omitted.
        assert_eq!(spec.transitions.len(), 2);
        let age = age_blocking(&params).unwrap();
        assert_close(age, 2.5, 1e-12);
    }

    #[test]
    fn stationary_matches_closed_form() {
        let pi = stationary_distribution(0.5, 1);
        assert_close(pi[0], 2.0 / 3.0, 1e-15);
        assert_close(pi[1], 1.0 / 3.0, 1e-15);

        let pi = stationary_distribution(0.5, 2);
        assert_close(pi[0], 4.0 / 7.0, 1e-15);
        assert_close(pi[1], 2.0 / 7.0, 1e-15);
        assert_close(pi[2], 1.0 / 7.0, 1e-15);

        let pi = stationary_distribution(1.0, 3);
        for p in &pi {
            assert_close(*p, 0.25, 1e-15);
        }
    }

    #[test]
    fn stationary_handles_overload() {
        let pi = stationary_distribution(1.5, 400);
        assert!((pi.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(pi.iter().all(|p| p.is_finite() && *p >= 0.0));
        // Mass concentrates at the full end.
        assert!(pi[400] > pi[0]);
    }

    #[test]
    fn stationary_agrees_with_generic_solver() {
        for (rho_source, rho_other, m) in [(0.25, 0.25, 4), (0.3, 0.0, 3), (0.6, 0.7, 5)] {
            let params = Mm1Params::new(1.0, rho_source, rho_other, m).unwrap();
            let spec = build_shs(&params);
            let from_solver = spec.stationary_distribution().unwrap();
            let closed = stationary_distribution(params.rho(), m);
            for (a, b) in from_solver.iter().zip(&closed) {
                assert_close(*a, *b, 1e-12);
            }
        }
    }

    #[test]
    fn coeff_seeds_and_first_steps() {
        let params = Mm1Params::new(1.0, 0.3, 0.2, 8).unwrap();
        let rho = params.rho();
        let pi = stationary_distribution(rho, params.m);

        let t0 = coeff_table(&params, 0);
        assert_eq!(t0.slope, 1.0);
        assert_eq!(t0.offset, 0.0);

        let t1 = coeff_table(&params, 1);
        assert_close(t1.slope, rho, 1e-15);
        assert_close(t1.offset, pi[0] / params.mu, 1e-15);

        for k in 1..=params.m {
            let t = coeff_table(&params, k);
            // c_{k,k} = 1 always; one step back gives 1 + rho, two steps
            // give (1 + rho)^2 - rho_other.
            assert_eq!(t.coeffs[k - 1], 1.0);
            if k >= 2 {
                assert_close(t.coeffs[k - 2], 1.0 + rho, 1e-13);
            }
            if k >= 3 {
                assert_close(
                    t.coeffs[k - 3],
                    (1.0 + rho) * (1.0 + rho) - params.rho_other,
                    1e-13,
                );
            }
        }
    }

    #[test]
    fn coeff_table_matches_forward_recursion() {
        // The O(k^2) per-k table and the O(m) forward recursion compute the
        // same expansion pairs.
        let params = Mm1Params::new(1.3, 0.35, 0.25, 12).unwrap();
        let pi = stationary_distribution(params.rho(), params.m);
        let pairs = expansion_pairs(&params, &pi, params.m).unwrap();
        for (k, (e, f)) in pairs.iter().enumerate() {
            let t = coeff_table(&params, k);
            assert_close(t.slope, *e, 1e-12 * e.abs().max(1.0));
            assert_close(t.offset, *f, 1e-12 * f.abs().max(1.0));
        }
    }

    #[test]
    fn blocking_age_hand_solved_anchor() {
        let params = Mm1Params::new(1.0, 0.5, 0.5, 1).unwrap();
        assert_close(age_blocking(&params).unwrap(), 4.5, 1e-12);
        assert_close(age_blocking_recursive(&params).unwrap(), 4.5, 1e-12);
        assert_close(hand_age_m1(&params), 4.5, 1e-15);
    }

    #[test]
    fn blocking_age_hand_solved_general_m1() {
        for (mu, rho_source, rho_other) in [(1.0, 0.25, 0.5), (2.0, 0.4, 0.1), (0.7, 0.9, 0.6)] {
            let params = Mm1Params::new(mu, rho_source, rho_other, 1).unwrap();
            let want = hand_age_m1(&params);
            assert_close(age_blocking(&params).unwrap(), want, 1e-12);
            assert_close(age_blocking_recursive(&params).unwrap(), want, 1e-12);
        }
    }

    #[test]
    fn routes_agree_on_samples() {
        for (rho_source, rho_other, m) in [(0.25, 0.25, 7), (0.1, 0.6, 12), (0.45, 0.45, 20)] {
            let params = Mm1Params::new(1.0, rho_source, rho_other, m).unwrap();
            let generic = age_blocking(&params).unwrap();
            let recursive = age_blocking_recursive(&params).unwrap();
            assert_close(generic, recursive, 1e-9);
        }
    }

    #[test]
    fn recursion_reconstructs_diagonal_sum() {
        // The solved v00 must reproduce sum_k v_{k,k} = 1/lambda_source.
        // The expansion pairs grow geometrically, so the term-by-term
        // reconstruction only resolves the identity to 1e-12 while
        // e_k * v00 stays a few orders below 1/ulp; m = 12 leaves ample
        // headroom at rho = 1.
        let params = Mm1Params::new(1.0, 0.5, 0.5, 12).unwrap();
        let pi = stationary_distribution(params.rho(), params.m);
        let pairs = expansion_pairs(&params, &pi, params.m).unwrap();
        let sum_e: f64 = pairs.iter().map(|p| p.0).sum();
        let sum_f: f64 = pairs.iter().map(|p| p.1).sum();
        let v00 = (1.0 / params.lambda_source() + sum_f) / sum_e;
        let diag_sum: f64 = pairs.iter().map(|(e, f)| e * v00 - f).sum();
        assert_close(diag_sum, 1.0 / params.lambda_source(), 1e-12);
    }

    #[test]
    fn recursive_age_approaches_limit_value() {
        // At rho_source = rho_other = 0.25 the limit age is 5.618033988749895.
        let params = Mm1Params::new(1.0, 0.25, 0.25, 200).unwrap();
        let age = age_blocking_recursive(&params).unwrap();
        assert_close(age, 5.618033988749895, 1e-7);
    }

    #[test]
    fn limit_matches_frozen_values() {
        let age = age_limit(1.0, 0.25, 0.25, 1e-9).unwrap();
        assert_close(age, 5.618033988749895, 1e-7);

        // Single-source limit: (1/mu)(1 + 1/rho + rho^2/(1-rho)).
        let age = age_limit(1.0, 0.5, 0.0, 1e-9).unwrap();
        assert_close(age, 3.5, 1e-7);
    }

    #[test]
    fn limit_rejects_overload() {
        assert!(matches!(
            age_limit(1.0, 0.51, 0.5, 1e-9),
            Err(Mm1Error::Unstable(_))
        ));
        assert!(matches!(
            age_limit(1.0, 0.5, 0.5, 1e-9),
            Err(Mm1Error::Unstable(_))
        ));
    }

    #[test]
    fn limit_reports_no_convergence_near_saturation() {
        assert!(matches!(
            age_limit(1.0, 0.4995, 0.4995, 1e-12),
            Err(Mm1Error::NoConvergence { .. })
        ));
    }

    #[test]
    fn recursion_overflow_is_reported() {
        // At rho = 6 the coefficients grow like 7^k and leave f64 range
        // long before k = 900.
        let params = Mm1Params::new(1.0, 3.0, 3.0, 900).unwrap();
        assert!(matches!(
            age_blocking_recursive(&params),
            Err(Mm1Error::Overflow(_))
        ));
    }

    #[test]
    fn recursion_rejects_buffer_above_cap() {
        let params = Mm1Params::new(1.0, 0.25, 0.25, 901).unwrap();
        assert!(matches!(
            age_blocking_recursive(&params),
            Err(Mm1Error::InvalidParams(_))
        ));
    }

    #[test]
    fn generic_solution_satisfies_age_equations() {
        let params = Mm1Params::new(1.0, 0.3, 0.4, 6).unwrap();
        let spec = build_shs(&params);
        let pi = spec.stationary_distribution().unwrap();
        let sol = spec.solve_age(&pi).unwrap();
        assert!(shs::age_residual(&spec, &pi, &sol.correlations) < shs::AGE_RESIDUAL_TOL);
        // Components beyond a state's occupancy stay exactly at zero.
        for (k, row) in sol.correlations.iter().enumerate() {
            for &v in &row[k + 1..] {
                assert!(v.abs() < 1e-12, "irrelevant component {v} in state {k}");
            }
        }
    }
}
