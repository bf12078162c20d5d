//! Closed-form average age of a source sharing an FCFS M/M/1 queue.
//!
//! With total offered load `rho < 1` and competing load `rho_other`, the
//! age of the focal source depends on the smaller root of
//! `rho_other * E^2 - (1 + rho) * E + 1 = 0`, computed here in the
//! cancellation-free conjugate form `E = 2 / (1 + rho + sqrt(disc))`. The
//! root is the geometric rate at which queue-position age correlations decay
//! and lies in `[1/(1+rho), 1]`.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ClosedFormError {
    #[error("out of domain: {0}")]
    OutOfDomain(String),
}

/// Below this competing load the root is evaluated by its analytic limit
/// `1 / (1 + rho)`.
const VANISHING_LOAD: f64 = 1e-12;

fn check_loads(rho: f64, rho_other: f64) -> Result<(), ClosedFormError> {
    let ok = rho.is_finite() && rho_other.is_finite() && (0.0..1.0).contains(&rho)
        && (0.0..=rho).contains(&rho_other);
    if ok {
        Ok(())
    } else {
        Err(ClosedFormError::OutOfDomain(format!(
            "need 0 <= rho_other <= rho < 1, got rho={rho}, rho_other={rho_other}"
        )))
    }
}

/// Smaller root of `rho_other * E^2 - (1 + rho) * E + 1 = 0`.
///
/// Equals `1` exactly when the focal source carries no load
/// (`rho_other == rho`) and `1 / (1 + rho)` in the vanishing-competition
/// limit.
pub fn decay_root(rho: f64, rho_other: f64) -> Result<f64, ClosedFormError> {
    check_loads(rho, rho_other)?;
    if rho_other <= VANISHING_LOAD {
        return Ok(1.0 / (1.0 + rho));
    }
    if rho_other == rho {
        return Ok(1.0);
    }
    let mut disc = (1.0 + rho) * (1.0 + rho) - 4.0 * rho_other;
    // Analytically disc >= (1 - rho)^2 > 0; a tiny negative value can only
    // be round-off.
    if disc < 0.0 && disc > -1e-15 {
        disc = 0.0;
    }
    // The root is at most 1; cap round-off at the boundary.
    Ok((2.0 / (1.0 + rho + disc.sqrt())).min(1.0))
}

/// Average age of the focal source at the monitor, for service rate `mu`,
/// focal load `rho_source` and competing load `rho_other`.
pub fn average_age_source(
    mu: f64,
    rho_source: f64,
    rho_other: f64,
) -> Result<f64, ClosedFormError> {
    if !(mu.is_finite() && mu > 0.0) {
        return Err(ClosedFormError::OutOfDomain(format!(
            "need mu > 0, got {mu}"
        )));
    }
    if !(rho_source > 0.0) {
        return Err(ClosedFormError::OutOfDomain(format!(
            "need rho_source > 0, got {rho_source}"
        )));
    }
    let rho = rho_source + rho_other;
    let root = decay_root(rho, rho_other)?;
    let bracket = (1.0 - rho) / ((rho - rho_other * root) * (1.0 - rho * root))
        + 1.0 / (1.0 - rho)
        + rho_other / rho_source;
    Ok(bracket / mu)
}

/// Average age of a lone source at load `rho`:
/// `(1/mu) (1 + 1/rho + rho^2 / (1 - rho))`.
pub fn single_source_age(mu: f64, rho: f64) -> Result<f64, ClosedFormError> {
    if !(mu.is_finite() && mu > 0.0) {
        return Err(ClosedFormError::OutOfDomain(format!(
            "need mu > 0, got {mu}"
        )));
    }
    if !(rho.is_finite() && rho > 0.0 && rho < 1.0) {
        return Err(ClosedFormError::OutOfDomain(format!(
            "need 0 < rho < 1, got {rho}"
        )));
    }
    Ok((1.0 + 1.0 / rho + rho * rho / (1.0 - rho)) / mu)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_close(got: f64, want: f64, tol: f64) {
        assert!(
            (got - want).abs() <= tol,
            "got {got}, want {want} (tol {tol})"
        );
    }

    #[test]
    fn root_vanishing_competition() {
        assert_close(decay_root(0.5, 0.0).unwrap(), 2.0 / 3.0, 1e-15);
        assert_close(decay_root(0.5, 1e-13).unwrap(), 2.0 / 3.0, 1e-12);
    }

    #[test]
    fn root_quarter_competition() {
        // Smaller root of 0.25 E^2 - 1.5 E + 1 = 0.
        assert_close(decay_root(0.5, 0.25).unwrap(), 0.7639320225002103, 1e-15);
    }

    #[test]
    fn root_is_one_for_idle_source() {
        for rho in [0.1, 0.3, 0.6, 0.9] {
            assert_eq!(decay_root(rho, rho).unwrap(), 1.0);
        }
    }

    #[test]
    fn root_satisfies_quadratic() {
        for rho_other in [0.05, 0.2, 0.4] {
            for rho_source in [0.05, 0.3, 0.5] {
                let rho = rho_source + rho_other;
                let e = decay_root(rho, rho_other).unwrap();
                let residual = rho_other * e * e - (1.0 + rho) * e + 1.0;
                assert!(residual.abs() < 1e-12, "residual {residual}");
                assert!((1.0 / (1.0 + rho)..=1.0).contains(&e));
            }
        }
    }

    #[test]
    fn root_domain_errors() {
        assert!(decay_root(1.0, 0.5).is_err());
        assert!(decay_root(0.5, 0.6).is_err());
        assert!(decay_root(-0.1, 0.0).is_err());
        assert!(decay_root(0.5, -0.1).is_err());
    }

    #[test]
    fn age_two_symmetric_sources() {
        assert_close(
            average_age_source(1.0, 0.25, 0.25).unwrap(),
            5.618033988749895,
            1e-12,
        );
        // Rates only enter through 1/mu.
        assert_close(
            average_age_source(2.0, 0.25, 0.25).unwrap(),
            5.618033988749895 / 2.0,
            1e-12,
        );
    }

    #[test]
    fn age_single_source_limit() {
        assert_close(average_age_source(1.0, 0.5, 0.0).unwrap(), 3.5, 1e-12);
        assert_close(single_source_age(1.0, 0.5).unwrap(), 3.5, 1e-15);
        assert_close(single_source_age(2.0, 0.5).unwrap(), 1.75, 1e-15);
    }

    #[test]
    fn age_diverges_toward_saturation() {
        assert!(single_source_age(1.0, 0.999999).unwrap() > 1e5);
    }

    #[test]
    fn age_domain_errors() {
        assert!(average_age_source(1.0, 0.6, 0.6).is_err());
        assert!(average_age_source(0.0, 0.3, 0.3).is_err());
        assert!(average_age_source(1.0, 0.0, 0.3).is_err());
        assert!(single_source_age(1.0, 1.0).is_err());
        assert!(single_source_age(1.0, 0.0).is_err());
    }
}
