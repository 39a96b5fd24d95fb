use ndarray::{s, Array3, ArrayView3, Axis, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::sim::Trajectory;

/// Velocities and accelerations of a `T x n x d` position record.
///
/// Interior steps use central differences, `(x[t+1] - x[t-1]) / 2dt` and
/// `(x[t+1] - 2x[t] + x[t-1]) / dt^2`. The endpoints use the second-order
/// one-sided velocity stencil `(-3x[0] + 4x[1] - x[2]) / 2dt` (mirrored at
/// the end) and the acceleration of the nearest three points. All stencils
/// are exact on quadratics.
pub fn finite_difference_kinematics(
    positions: ArrayView3<f64>,
    dt: f64,
) -> Result<(Array3<f64>, Array3<f64>)> {
    let t = positions.shape()[0];
    if t < 3 {
        return Err(Error::data(format!("finite differences need at least 3 steps, got {t}")));
    }
    if !(dt > 0.0) {
        return Err(Error::config("time step must be positive"));
    }
    let mut vel = Array3::zeros(positions.raw_dim());
    let mut acc = Array3::zeros(positions.raw_dim());
    let x = |k: usize| positions.index_axis(Axis(0), k);
    for k in 1..t - 1 {
        Zip::from(vel.index_axis_mut(Axis(0), k))
            .and(x(k + 1))
            .and(x(k - 1))
            .for_each(|v, &p, &m| *v = (p - m) / (2.0 * dt));
        Zip::from(acc.index_axis_mut(Axis(0), k))
            .and(x(k + 1))
            .and(x(k))
            .and(x(k - 1))
            .for_each(|a, &p, &c, &m| *a = (p - 2.0 * c + m) / (dt * dt));
    }
    Zip::from(vel.index_axis_mut(Axis(0), 0))
        .and(x(0))
        .and(x(1))
        .and(x(2))
        .for_each(|v, &a, &b, &c| *v = (-3.0 * a + 4.0 * b - c) / (2.0 * dt));
    Zip::from(vel.index_axis_mut(Axis(0), t - 1))
        .and(x(t - 1))
        .and(x(t - 2))
        .and(x(t - 3))
        .for_each(|v, &a, &b, &c| *v = (3.0 * a - 4.0 * b + c) / (2.0 * dt));
    let first = acc.index_axis(Axis(0), 1).to_owned();
    acc.index_axis_mut(Axis(0), 0).assign(&first);
    let last = acc.index_axis(Axis(0), t - 2).to_owned();
    acc.index_axis_mut(Axis(0), t - 1).assign(&last);
    Ok((vel, acc))
}

/// Add white noise `beta * N(0, 1)` to every position coordinate at every
/// step and recompute velocities and accelerations by finite differences.
///
/// Pair labels stay those of the clean trajectory (they are evaluation
/// ground truth), so they are materialized first. Periodic positions are
/// unwrapped before differencing and wrapped again afterwards. `beta = 0`
/// returns the trajectory unchanged.
pub fn corrupt_positions(traj: &Trajectory, beta: f64, seed: u64) -> Result<Trajectory> {
    if !(beta >= 0.0) {
        return Err(Error::config(format!("noise amplitude must be non-negative, got {beta}")));
    }
    if beta == 0.0 {
        return Ok(traj.clone());
    }
    let mut out = traj.clone();
    out.materialize_labels()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = traj.positions.clone();
    let box_length = traj.interaction().box_length();
    if let Some(l) = box_length {
        unwrap_in_time(&mut x, l);
    }
    x.mapv_inplace(|c| c + beta * rng.sample::<f64, _>(StandardNormal));
    let (v, a) = finite_difference_kinematics(x.view(), traj.header.dt)?;
    if let Some(l) = box_length {
        x.mapv_inplace(|c| c.rem_euclid(l));
    }
    out.positions = x;
    out.velocities = v;
    out.accelerations = a;
    Ok(out)
}

/// Make each coordinate continuous in time by undoing box wraps.
fn unwrap_in_time(x: &mut Array3<f64>, box_length: f64) {
    for t in 1..x.shape()[0] {
        let prev = x.index_axis(Axis(0), t - 1).to_owned();
        Zip::from(x.index_axis_mut(Axis(0), t))
            .and(&prev)
            .for_each(|c, &p| {
                let d = *c - p;
                *c = p + d - box_length * (d / box_length).round();
            });
    }
}

/// Mean of `|noisy - clean| / |clean|` over all components with a non-zero
/// clean value.
pub fn noise_level(clean: ArrayView3<f64>, noisy: ArrayView3<f64>) -> Result<f64> {
    if clean.shape() != noisy.shape() {
        return Err(Error::data("noise level needs arrays of equal shape"));
    }
    let (sum, count) = clean
        .iter()
        .zip(noisy.iter())
        .filter(|(a, _)| **a != 0.0)
        .fold((0.0, 0usize), |(s, c), (a, b)| (s + ((b - a) / a).abs(), c + 1));
    if count == 0 {
        return Err(Error::UndefinedMetric(
            "noise level undefined: every clean component is zero".into(),
        ));
    }
    Ok(sum / count as f64)
}

/// The interior steps `1..T-1` of a `T x n x d` array, where central
/// differences apply.
pub fn interior(a: &Array3<f64>) -> ArrayView3<'_, f64> {
    let t = a.shape()[0];
    a.slice(s![1..t.saturating_sub(1), .., ..])
}
