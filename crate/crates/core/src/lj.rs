//! Lennard-Jones argon in a periodic cubic box.
//!
//! Internal units are angstrom, picosecond and dalton, so energies come out
//! in Da A^2 / ps^2. Conversions to the reporting units (meV, meV/A) live in
//! [`units`].

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::{integrate, ParticleState, Schedule, Trajectory};

pub mod units {
    //! Physical constants (exact SI definitions) and derived conversions.

    /// Unified atomic mass unit in kg.
    pub const DALTON_KG: f64 = 1.660_539_066_60e-27;
    /// Elementary charge in C (exact).
    pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;
    /// Avogadro constant in 1/mol (exact).
    pub const AVOGADRO: f64 = 6.022_140_76e23;
    /// Boltzmann constant in J/K (exact).
    pub const BOLTZMANN_SI: f64 = 1.380_649e-23;
    /// Thermochemical calorie in J.
    pub const CALORIE_J: f64 = 4.184;

    /// One internal energy unit (Da A^2 / ps^2) in joules.
    pub const INTERNAL_ENERGY_J: f64 = DALTON_KG * 1e-20 / 1e-24;

    /// meV per internal energy unit.
    pub fn energy_to_mev(e: f64) -> f64 {
        e * INTERNAL_ENERGY_J / (ELEMENTARY_CHARGE * 1e-3)
    }

    pub fn mev_to_energy(mev: f64) -> f64 {
        mev * (ELEMENTARY_CHARGE * 1e-3) / INTERNAL_ENERGY_J
    }

    /// Force in Da A / ps^2 to meV / A.
    pub fn force_to_mev_per_angstrom(f: f64) -> f64 {
        energy_to_mev(f)
    }

    pub fn kcal_per_mol_to_energy(kcal: f64) -> f64 {
        kcal * 1e3 * CALORIE_J / AVOGADRO / INTERNAL_ENERGY_J
    }

    pub fn energy_to_kcal_per_mol(e: f64) -> f64 {
        e * INTERNAL_ENERGY_J * AVOGADRO / (1e3 * CALORIE_J)
    }

    /// Boltzmann constant in Da A^2 / (ps^2 K).
    pub fn boltzmann() -> f64 {
        BOLTZMANN_SI / INTERNAL_ENERGY_J
    }
}

/// Pair-potential constants plus the periodic box, in internal units.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LjParams {
    pub epsilon: f64,
    pub sigma: f64,
    pub cutoff: f64,
    pub box_length: f64,
}

impl LjParams {
    /// Force on the receiver into `out` given `r_sender - r_receiver`.
    pub fn evaluate_displacement(&self, displacement: &[f64], out: &mut [f64]) -> Option<f64> {
        let r = displacement.iter().map(|x| x * x).sum::<f64>().sqrt();
        let (v, f) = lj_pair(r, self.epsilon, self.sigma, self.cutoff).ok()?;
        // -f along the unit vector towards the sender: repulsive for f > 0.
        let scale = -f / r;
        for (o, d) in out.iter_mut().zip(displacement) {
            *o = scale * d;
        }
        Some(v)
    }
}

/// Experiment description for the argon system.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LjSpec {
    pub n_atoms: usize,
    /// A
    pub box_length: f64,
    /// kcal/mol
    pub epsilon_kcal_mol: f64,
    /// A
    pub sigma: f64,
    /// Multiple of sigma.
    pub cutoff_sigmas: f64,
    /// Da
    pub mass: f64,
    /// K
    pub temperature: f64,
    pub n_steps: usize,
    pub n_runs: usize,
    /// ps
    pub dt: f64,
}

impl Default for LjSpec {
    fn default() -> Self {
        Self {
            n_atoms: 258,
            box_length: 27.27,
            epsilon_kcal_mol: 0.238,
            sigma: 3.4,
            cutoff_sigmas: 3.0,
            mass: 39.9,
            temperature: 100.0,
            n_steps: 1000,
            n_runs: 10,
            dt: 0.002,
        }
    }
}

impl LjSpec {
    pub fn params(&self) -> LjParams {
        LjParams {
            epsilon: units::kcal_per_mol_to_energy(self.epsilon_kcal_mol),
            sigma: self.sigma,
            cutoff: self.cutoff_sigmas * self.sigma,
            box_length: self.box_length,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.params();
        if self.n_atoms < 2 || !(self.dt > 0.0) || !(self.temperature > 0.0) || !(self.mass > 0.0)
        {
            return Err(Error::config("invalid LJ spec"));
        }
        if p.cutoff >= p.box_length / 2.0 {
            return Err(Error::config(format!(
                "cutoff {} must be below half the box length {}",
                p.cutoff, p.box_length
            )));
        }
        Ok(())
    }
}

/// `r_j - r_i` with each component wrapped into `(-L/2, L/2]`.
pub fn minimum_image(ri: &[f64], rj: &[f64], box_length: f64) -> Vec<f64> {
    let mut out = vec![0.0; ri.len()];
    minimum_image_into(ri, rj, box_length, &mut out);
    out
}

pub fn minimum_image_into(ri: &[f64], rj: &[f64], box_length: f64, out: &mut [f64]) {
    for ((o, a), b) in out.iter_mut().zip(ri).zip(rj) {
        let d = b - a;
        *o = d - box_length * (d / box_length - 0.5).ceil();
    }
}

/// Truncated LJ potential `4 eps ((s/r)^12 - (s/r)^6)` and `-dV/dr`, both
/// zero at and beyond `cutoff`.
pub fn lj_pair(r: f64, epsilon: f64, sigma: f64, cutoff: f64) -> Result<(f64, f64)> {
    if !(r > 0.0) {
        return Err(Error::Singularity { i: 0, j: 1 });
    }
    if r >= cutoff {
        return Ok((0.0, 0.0));
    }
    let s6 = (sigma / r).powi(6);
    let s12 = s6 * s6;
    Ok((4.0 * epsilon * (s12 - s6), 24.0 * epsilon * (2.0 * s12 - s6) / r))
}

/// Components drawn from `N(0, k_B T / m)`, then the centre-of-mass
/// velocity removed.
pub fn maxwell_boltzmann_velocities(
    temperature: f64,
    masses: &[f64],
    dim: usize,
    seed: u64,
) -> Result<Array2<f64>> {
    if !(temperature > 0.0) {
        return Err(Error::config("temperature must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let kt = units::boltzmann() * temperature;
    let mut v = Array2::zeros((masses.len(), dim));
    for (mut row, &m) in v.rows_mut().into_iter().zip(masses) {
        let normal = Normal::new(0.0, (kt / m).sqrt()).unwrap();
        row.iter_mut().for_each(|c| *c = rng.sample(normal));
    }
    let total_mass: f64 = masses.iter().sum();
    for k in 0..dim {
        let p: f64 = v.column(k).iter().zip(masses).map(|(c, m)| c * m).sum();
        let vcm = p / total_mass;
        v.column_mut(k).mapv_inplace(|c| c - vcm);
    }
    Ok(v)
}

/// `n` atoms on randomly chosen sites of the smallest cubic lattice that
/// fits them, each displaced by up to `jitter` per coordinate.
pub fn perturbed_lattice(n: usize, box_length: f64, jitter: f64, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let per_side = (1..).find(|m: &usize| m * m * m >= n).unwrap();
    let spacing = box_length / per_side as f64;
    let mut sites: Vec<[usize; 3]> = (0..per_side)
        .flat_map(|a| (0..per_side).flat_map(move |b| (0..per_side).map(move |c| [a, b, c])))
        .collect();
    sites.shuffle(&mut rng);
    let shake = Uniform::new_inclusive(-jitter, jitter).unwrap();
    let mut x = Array2::zeros((n, 3));
    for (mut row, site) in x.rows_mut().into_iter().zip(&sites) {
        for k in 0..3 {
            let c = (site[k] as f64 + 0.5) * spacing + rng.sample(shake);
            row[k] = c.rem_euclid(box_length);
        }
    }
    x
}

/// One NVE run: lattice start, Maxwell-Boltzmann velocities, velocity
/// Verlet with wrapped positions. Pair labels are not stored; they are
/// recomputed from positions when asked for.
pub fn simulate_lj(spec: &LjSpec, seed: u64) -> Result<Trajectory> {
    spec.validate()?;
    let params = spec.params();
    let masses = vec![spec.mass; spec.n_atoms];
    let x = perturbed_lattice(spec.n_atoms, spec.box_length, 0.1, seed);
    let v = maxwell_boltzmann_velocities(spec.temperature, &masses, 3, seed.wrapping_add(1))?;
    let system: Vec<ParticleState> = (0..spec.n_atoms)
        .map(|i| ParticleState {
            position: x.row(i).to_vec(),
            velocity: v.row(i).to_vec(),
            mass: spec.mass,
            charge: 0.0,
        })
        .collect();
    integrate(
        &system,
        crate::sim::Interaction::LennardJones { params },
        Schedule {
            n_steps: spec.n_steps,
            dt: spec.dt,
            substeps: 1,
        },
        seed,
        Some(["angstrom".into(), "ps".into(), "dalton".into()]),
        false,
    )
}

/// `spec.n_runs` independent runs with seeds `base_seed, base_seed + 1, ...`.
pub fn simulate_lj_runs(spec: &LjSpec, base_seed: u64) -> Result<Vec<Trajectory>> {
    (0..spec.n_runs as u64)
        .map(|k| simulate_lj(spec, base_seed + k))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn minimum_image_examples() {
        assert_eq!(minimum_image(&[1.0], &[9.0], 10.0), vec![-2.0]);
        assert_eq!(minimum_image(&[2.0], &[5.0], 10.0), vec![3.0]);
        assert_eq!(minimum_image(&[0.0], &[5.0], 10.0), vec![5.0]);
        assert_eq!(minimum_image(&[5.0], &[0.0], 10.0), vec![5.0]);
    }

    #[test]
    fn lj_reference_points() {
        let (eps, sigma) = (0.7, 3.4);
        let cut = 3.0 * sigma;
        let (v, _) = lj_pair(sigma, eps, sigma, cut).unwrap();
        assert_eq!(v, 0.0);
        let rmin = 2f64.powf(1.0 / 6.0) * sigma;
        let (v, f) = lj_pair(rmin, eps, sigma, cut).unwrap();
        assert_relative_eq!(v, -eps, max_relative = 1e-14);
        assert!(f.abs() < 1e-14);
        assert_eq!(lj_pair(cut, eps, sigma, cut).unwrap(), (0.0, 0.0));
        assert!(lj_pair(0.0, eps, sigma, cut).is_err());
    }

    #[test]
    fn lj_force_matches_finite_difference() {
        let (eps, sigma) = (0.238, 3.4);
        let cut = 3.0 * sigma;
        let h = 1e-6;
        for &r in &[3.1, 3.6, 3.9, 4.7, 6.3, 9.9] {
            let (_, f) = lj_pair(r, eps, sigma, cut).unwrap();
            let vp = lj_pair(r + h, eps, sigma, cut).unwrap().0;
            let vm = lj_pair(r - h, eps, sigma, cut).unwrap().0;
            let fd = -(vp - vm) / (2.0 * h);
            assert_relative_eq!(f, fd, max_relative = 1e-8);
        }
    }

    #[test]
    fn unit_conversions() {
        // Independently: 1 kcal/mol = 43.364 meV, 1 Da A^2/ps^2 = 10 J/mol.
        assert_relative_eq!(
            units::energy_to_mev(units::kcal_per_mol_to_energy(1.0)),
            43.364_104,
            max_relative = 1e-6
        );
        assert_relative_eq!(units::kcal_per_mol_to_energy(1.0), 418.4, max_relative = 1e-6);
        assert_relative_eq!(units::boltzmann(), 0.831_446_26, max_relative = 1e-6);
        for &x in &[1e-3, 0.238, 17.0, 4.2e4] {
            let back = units::mev_to_energy(units::energy_to_mev(x));
            assert!(((back - x) / x).abs() <= 1e-12);
            let back = units::energy_to_kcal_per_mol(units::kcal_per_mol_to_energy(x));
            assert!(((back - x) / x).abs() <= 1e-12);
        }
    }

    #[test]
    fn default_spec_is_valid() {
        let spec = LjSpec::default();
        spec.validate().unwrap();
        assert_relative_eq!(spec.params().cutoff, 10.2, max_relative = 1e-12);
        let bad = LjSpec {
            box_length: 20.0,
            ..LjSpec::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn maxwell_boltzmann_statistics() {
        let masses = vec![39.9; 258];
        let v = maxwell_boltzmann_velocities(100.0, &masses, 3, 4).unwrap();
        for k in 0..3 {
            let p: f64 = v.column(k).iter().map(|c| c * 39.9).sum();
            assert!(p.abs() <= 1e-12 * 258.0);
        }
        let expected = units::boltzmann() * 100.0 / 39.9;
        let var = v.iter().map(|c| c * c).sum::<f64>() / v.len() as f64;
        assert!((var / expected - 1.0).abs() < 0.10, "{var} vs {expected}");
        assert_eq!(v, maxwell_boltzmann_velocities(100.0, &masses, 3, 4).unwrap());
    }

    #[test]
    fn lattice_has_no_overlaps() {
        let x = perturbed_lattice(258, 27.27, 0.1, 3);
        let mut min = f64::INFINITY;
        for i in 0..258 {
            for j in 0..i {
                let ri = x.row(i).to_vec();
                let rj = x.row(j).to_vec();
                let d = minimum_image(&ri, &rj, 27.27);
                min = min.min(d.iter().map(|c| c * c).sum::<f64>().sqrt());
            }
        }
        assert!(min > 3.5, "closest pair {min}");
        assert!(x.iter().all(|&c| (0.0..27.27).contains(&c)));
    }
}
