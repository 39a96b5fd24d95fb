use ndarray::{Array2, Array3, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{StandardNormal, Uniform};

use super::law::ForceLaw;
use super::trajectory::{
    evaluate_configuration, EdgeLabels, Interaction, ParticleState, Trajectory, TrajectoryHeader,
};
use crate::error::{Error, Result};

pub const DEFAULT_DT: f64 = 0.01;

/// Internal velocity-Verlet steps per recorded interval for the analytic
/// laws. The spring potential has a kink at zero separation, and close
/// passages at the full recording interval break the energy bound.
pub const DEFAULT_SUBSTEPS: usize = 10;

/// Random initial conditions: `ln m ~ U(-1, 1)`, `q ~ U(-1, 1)`, positions
/// and velocities standard normal per coordinate.
pub fn sample_initial_system(n_particles: usize, dim: usize, seed: u64) -> Result<Vec<ParticleState>> {
    if n_particles < 1 {
        return Err(Error::config("need at least one particle"));
    }
    if !(2..=3).contains(&dim) {
        return Err(Error::config(format!("dimension must be 2 or 3, got {dim}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = Uniform::new_inclusive(-1.0f64, 1.0).unwrap();
    Ok((0..n_particles)
        .map(|_| {
            let mass = rng.sample(unit).exp();
            let charge = rng.sample(unit);
            let position = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
            let velocity = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
            ParticleState {
                position,
                velocity,
                mass,
                charge,
            }
        })
        .collect())
}

/// Velocity-Verlet integration under `law`, recording `n_steps` snapshots
/// spaced `dt` apart (the initial state included) together with exact
/// accelerations and per-edge labels.
pub fn simulate(
    system: &[ParticleState],
    law: ForceLaw,
    n_steps: usize,
    dt: f64,
    seed: u64,
) -> Result<Trajectory> {
    simulate_substeps(system, law, n_steps, dt, DEFAULT_SUBSTEPS, seed)
}

/// [`simulate`] with an explicit number of integrator steps per recorded
/// interval.
pub fn simulate_substeps(
    system: &[ParticleState],
    law: ForceLaw,
    n_steps: usize,
    dt: f64,
    substeps: usize,
    seed: u64,
) -> Result<Trajectory> {
    law.validate()?;
    integrate(
        system,
        Interaction::Analytic { law },
        Schedule {
            n_steps,
            dt,
            substeps,
        },
        seed,
        None,
        true,
    )
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct Schedule {
    pub n_steps: usize,
    pub dt: f64,
    pub substeps: usize,
}

pub(crate) fn integrate(
    system: &[ParticleState],
    interaction: Interaction,
    schedule: Schedule,
    seed: u64,
    units: Option<[String; 3]>,
    store_labels: bool,
) -> Result<Trajectory> {
    let Schedule {
        n_steps,
        dt,
        substeps,
    } = schedule;
    let n = system.len();
    if n == 0 || n_steps == 0 || substeps == 0 {
        return Err(Error::config("empty system, zero steps or zero substeps"));
    }
    if !(dt > 0.0) {
        return Err(Error::config("time step must be positive"));
    }
    let h = dt / substeps as f64;
    let d = system[0].position.len();
    if system
        .iter()
        .any(|p| p.position.len() != d || p.velocity.len() != d || !(p.mass > 0.0))
    {
        return Err(Error::config("inconsistent particle dimensions or non-positive mass"));
    }
    let masses: Vec<f64> = system.iter().map(|p| p.mass).collect();
    let charges: Vec<f64> = system.iter().map(|p| p.charge).collect();
    let mut x = Array2::from_shape_fn((n, d), |(i, k)| system[i].position[k]);
    let mut v = Array2::from_shape_fn((n, d), |(i, k)| system[i].velocity[k]);
    let box_length = interaction.box_length();
    if let Some(l) = box_length {
        wrap(&mut x, l);
    }

    let mut positions = Array3::zeros((n_steps, n, d));
    let mut velocities = Array3::zeros((n_steps, n, d));
    let mut accelerations = Array3::zeros((n_steps, n, d));
    let mut labels: Vec<EdgeLabels> = Vec::new();

    let (lab0, mut a) = evaluate_configuration(&interaction, x.view(), &masses, &charges)?;
    let mut lab = Some(lab0);
    for t in 0..n_steps {
        positions.index_axis_mut(Axis(0), t).assign(&x);
        velocities.index_axis_mut(Axis(0), t).assign(&v);
        accelerations.index_axis_mut(Axis(0), t).assign(&a);
        if store_labels {
            labels.extend(lab.take());
        }
        if t + 1 == n_steps {
            break;
        }
        for _ in 0..substeps {
            x.scaled_add(h, &v);
            x.scaled_add(0.5 * h * h, &a);
            if let Some(l) = box_length {
                wrap(&mut x, l);
            }
            let (next_lab, next_a) =
                evaluate_configuration(&interaction, x.view(), &masses, &charges).map_err(
                    |e| match e {
                        Error::Singularity { .. } => Error::Diverged { step: t + 1 },
                        other => other,
                    },
                )?;
            v.scaled_add(0.5 * h, &a);
            v.scaled_add(0.5 * h, &next_a);
            if x.iter().chain(v.iter()).chain(next_a.iter()).any(|c| !c.is_finite()) {
                return Err(Error::Diverged { step: t + 1 });
            }
            lab = Some(next_lab);
            a = next_a;
        }
    }

    Ok(Trajectory {
        header: TrajectoryHeader {
            interaction,
            dim: d,
            n_particles: n,
            n_steps,
            dt,
            substeps,
            seed,
            units,
        },
        masses,
        charges,
        positions,
        velocities,
        accelerations,
        labels: store_labels.then_some(labels),
    })
}

/// Wrap coordinates into `[0, box)`.
pub(crate) fn wrap(x: &mut Array2<f64>, box_length: f64) {
    x.mapv_inplace(|c| {
        let w = c.rem_euclid(box_length);
        // rem_euclid can round up to exactly box_length for tiny negatives.
        if w >= box_length {
            0.0
        } else {
            w
        }
    });
}
