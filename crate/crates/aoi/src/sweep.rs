//! Grid evaluation for figure-style CSV data.
//!
//! Sweep points are independent, so they are evaluated data-parallel with
//! rayon when the `parallel` feature (default) is on, and sequentially
//! otherwise. Row order and per-point simulation seeds depend only on the
//! grid, never on scheduling, so output is identical either way.

use crate::closed_form;
use crate::sim::{simulate, Buffer, SimConfig, SimError};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Applies `f` to every item, in parallel when the `parallel` feature is
/// enabled. Results keep item order.
pub fn map<T: Sync, U: Send>(items: &[T], f: impl Fn(&T) -> U + Send + Sync) -> Vec<U> {
    #[cfg(feature = "parallel")]
    {
        map_par(items, f)
    }
    #[cfg(not(feature = "parallel"))]
    {
        map_seq(items, f)
    }
}

/// Sequential evaluation, always available.
pub fn map_seq<T, U>(items: &[T], f: impl Fn(&T) -> U) -> Vec<U> {
    items.iter().map(f).collect()
}

#[cfg(feature = "parallel")]
pub fn map_par<T: Sync, U: Send>(items: &[T], f: impl Fn(&T) -> U + Send + Sync) -> Vec<U> {
    items.par_iter().map(f).collect()
}

/// Evenly spaced grid from `start` to `stop` inclusive, snapped to 12
/// decimals so grid values print cleanly.
pub fn grid(start: f64, stop: f64, step: f64) -> Vec<f64> {
    assert!(step > 0.0 && stop >= start, "need step > 0 and stop >= start");
    let count = ((stop - start) / step + 1e-9).floor() as usize;
    (0..=count)
        .map(|i| {
            let v = start + i as f64 * step;
            (v * 1e12).round() / 1e12
        })
        .collect()
}

/// Stable per-point seed: a SplitMix64 finalizer over the base seed and the
/// point's position in the full grid, so a row's simulation stream does not
/// depend on which other rows are feasible or on evaluation order.
fn point_seed(base: u64, index: u64) -> u64 {
    let mut z = base ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// One row of the load-sweep comparison: closed-form age of source 1 next
/// to its simulated estimate.
#[derive(Debug, Clone)]
pub struct Fig4Row {
    pub rho1: f64,
    pub rho2: f64,
    pub delta1_closed: f64,
    pub delta1_sim: f64,
    pub delta1_sim_se: f64,
}

/// Sweeps source-1 load over `rho1_values` for each competing load in
/// `rho2_values`, evaluating the closed form and a simulation per feasible
/// point. Returns the rows in grid order plus the count of infeasible
/// points skipped (total load at or above 1).
pub fn fig4_rows(
    mu: f64,
    rho2_values: &[f64],
    rho1_values: &[f64],
    events: u64,
    seed: u64,
) -> Result<(Vec<Fig4Row>, usize), SimError> {
    let mut points = Vec::new();
    let mut skipped = 0usize;
    let mut index = 0u64;
    for &rho2 in rho2_values {
        for &rho1 in rho1_values {
            if rho1 > 0.0 && rho2 >= 0.0 && rho1 + rho2 < 1.0 {
                points.push((rho1, rho2, point_seed(seed, index)));
            } else {
                skipped += 1;
            }
            index += 1;
        }
    }

    let rows = map(&points, |&(rho1, rho2, seed)| -> Result<Fig4Row, SimError> {
        let delta1_closed = closed_form::average_age_source(mu, rho1, rho2)
            .expect("feasible point is in the closed-form domain");
        // A zero competing load degenerates to a single-source run.
        let lambdas = if rho2 > 0.0 {
            vec![rho1 * mu, rho2 * mu]
        } else {
            vec![rho1 * mu]
        };
        let est = simulate(&SimConfig::new(mu, lambdas, Buffer::Infinite, events, seed))?;
        Ok(Fig4Row {
            rho1,
            rho2,
            delta1_closed,
            delta1_sim: est.mean_age[0],
            delta1_sim_se: est.age_se[0],
        })
    });
    let rows = rows.into_iter().collect::<Result<Vec<_>, _>>()?;
    Ok((rows, skipped))
}

/// One row of the age-contour sweep over load splits.
#[derive(Debug, Clone)]
pub struct ContourRow {
    pub rho1: f64,
    pub rho2: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub sum: f64,
}

/// Evaluates both sources' closed-form ages over total loads
/// `rho_values` split as `rho1 = split * rho`. Points where either source
/// load vanishes or the total reaches 1 are skipped and counted.
pub fn contour_rows(
    mu: f64,
    rho_values: &[f64],
    split_values: &[f64],
) -> (Vec<ContourRow>, usize) {
    let mut points = Vec::new();
    let mut skipped = 0usize;
    for &rho in rho_values {
        for &split in split_values {
            let rho1 = (split * rho * 1e12).round() / 1e12;
            let rho2 = ((rho - rho1) * 1e12).round() / 1e12;
            if rho < 1.0 && rho1 > 0.0 && rho2 > 0.0 {
                points.push((rho1, rho2));
            } else {
                skipped += 1;
            }
        }
    }
    let rows = map(&points, |&(rho1, rho2)| {
        let delta1 = closed_form::average_age_source(mu, rho1, rho2)
            .expect("feasible point is in the closed-form domain");
        let delta2 = closed_form::average_age_source(mu, rho2, rho1)
            .expect("feasible point is in the closed-form domain");
        ContourRow {
            rho1,
            rho2,
            delta1,
            delta2,
            sum: delta1 + delta2,
        }
    });
    (rows, skipped)
}
