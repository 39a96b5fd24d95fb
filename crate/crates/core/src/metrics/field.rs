use std::f64::consts::PI;
use std::io::Write;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::FeatureLayout;
use crate::model::{Model, Pairwise};
use crate::sim::{Body, Interaction, ParticleState};

/// Angle in `[0, pi]` between two vectors. Zero when both vanish, NaN when
/// only one does.
pub fn angle_error(a: &[f64], b: &[f64]) -> f64 {
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    match (na == 0.0, nb == 0.0) {
        (true, true) => return 0.0,
        (true, false) | (false, true) => return f64::NAN,
        _ => {}
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    if a.len() == 2 {
        let cross = a[0] * b[1] - a[1] * b[0];
        cross.atan2(dot).abs()
    } else {
        (dot / (na * nb)).clamp(-1.0, 1.0).acos()
    }
}

/// Regular grid in the x-y plane.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub x_range: [f64; 2],
    pub y_range: [f64; 2],
    pub nx: usize,
    pub ny: usize,
    /// Cells closer than this to the fixed particle are skipped.
    pub exclusion: f64,
}

impl GridSpec {
    pub fn square(half_width: f64, n: usize) -> Self {
        Self {
            x_range: [-half_width, half_width],
            y_range: [-half_width, half_width],
            nx: n,
            ny: n,
            exclusion: crate::sim::DEFAULT_SOFTENING,
        }
    }

    fn coord(range: [f64; 2], n: usize, k: usize) -> f64 {
        if n == 1 {
            0.5 * (range[0] + range[1])
        } else {
            range[0] + (range[1] - range[0]) * k as f64 / (n - 1) as f64
        }
    }
}

/// The fixed particle and a template for the moving one; the moving
/// particle's x and y are overwritten by each grid cell.
#[derive(Clone, Debug, PartialEq)]
pub struct Probe {
    pub fixed: ParticleState,
    pub moving: ParticleState,
}

impl Probe {
    /// Two resting unit-mass, unit-charge particles with the fixed one at
    /// the origin.
    pub fn at_origin(dim: usize) -> Self {
        let p = ParticleState {
            position: vec![0.0; dim],
            velocity: vec![0.0; dim],
            mass: 1.0,
            charge: 1.0,
        };
        Self {
            fixed: p.clone(),
            moving: p,
        }
    }
}

/// Anything that maps edge inputs to pair forces.
pub trait PairFunction {
    fn pairwise(&self, inputs: &Array2<f64>, layout: &FeatureLayout) -> Result<Pairwise>;
}

impl PairFunction for Model {
    fn pairwise(&self, inputs: &Array2<f64>, layout: &FeatureLayout) -> Result<Pairwise> {
        self.layout.check_compatible(layout)?;
        self.evaluate_edges(inputs)
    }
}

impl PairFunction for Interaction {
    fn pairwise(&self, inputs: &Array2<f64>, layout: &FeatureLayout) -> Result<Pairwise> {
        let d = layout.dim;
        let nw = layout.node_width();
        let mut forces = Array2::zeros((inputs.nrows(), d));
        let mut potentials = Vec::with_capacity(inputs.nrows());
        let charge_col = layout.with_charge.then_some(2 * d);
        for (e, row) in inputs.rows().into_iter().enumerate() {
            let row = row.to_vec();
            let body = |off: usize| Body {
                position: &row[off..off + d],
                mass: row[off + layout.mass_col()],
                charge: charge_col.map_or(0.0, |c| row[off + c]),
            };
            let (a, b) = (body(0), body(nw));
            let mut disp = vec![0.0; d];
            match layout.displacement_cols() {
                Some(cols) => disp.copy_from_slice(&row[cols]),
                None => self.displacement(a.position, b.position, &mut disp),
            }
            let mut out = vec![0.0; d];
            let p = self
                .evaluate(&disp, &a, &b, &mut out)
                .ok_or(Error::Singularity { i: e, j: e })?;
            forces.row_mut(e).assign(&ndarray::ArrayView1::from(&out));
            potentials.push(p);
        }
        Ok(Pairwise {
            forces,
            potentials: Some(potentials),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldCell {
    pub x: f64,
    pub y: f64,
    pub skipped: bool,
    /// Force on the moving particle from the fixed one.
    pub force: Vec<f64>,
    pub true_force: Vec<f64>,
    pub potential: Option<f64>,
    pub true_potential: Option<f64>,
    pub magnitude_error: f64,
    pub angle_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldGrid {
    pub spec: GridSpec,
    /// Row-major with `x` varying fastest.
    pub cells: Vec<FieldCell>,
}

impl FieldGrid {
    pub fn cell(&self, ix: usize, iy: usize) -> &FieldCell {
        &self.cells[iy * self.spec.nx + ix]
    }

    /// `x,y,fx,fy,[fz,]p,true_fx,...,magnitude_error,angle_error,skipped`;
    /// skipped cells leave every value empty.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let d = self.cells.iter().map(|c| c.true_force.len()).max().unwrap_or(2);
        let axes = ["x", "y", "z"];
        let mut header = vec!["x".to_string(), "y".to_string()];
        for prefix in ["", "true_"] {
            header.extend(axes[..d].iter().map(|a| format!("{prefix}f{a}")));
            header.push(format!("{prefix}p"));
        }
        header.extend(["magnitude_error", "angle_error", "skipped"].map(String::from));
        writeln!(w, "{}", header.join(","))?;
        let opt = |p: Option<f64>| p.map(|v| format!("{v:e}")).unwrap_or_default();
        for c in &self.cells {
            let mut row = vec![format!("{:e}", c.x), format!("{:e}", c.y)];
            if c.skipped {
                row.extend(std::iter::repeat_n(String::new(), 2 * d + 4));
                row.push("1".into());
            } else {
                for (f, p) in [(&c.force, c.potential), (&c.true_force, c.true_potential)] {
                    row.extend(f.iter().map(|v| format!("{v:e}")));
                    row.push(opt(p));
                }
                row.push(format!("{:e}", c.magnitude_error));
                row.push(format!("{:e}", c.angle_error));
                row.push("0".into());
            }
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

fn node_features(p: &ParticleState, layout: &FeatureLayout) -> Vec<f64> {
    let mut eta = p.position.clone();
    eta.extend(&p.velocity);
    if layout.with_charge {
        eta.push(p.charge);
    }
    eta.push(p.mass);
    eta
}

/// Pair forces (and potentials) of `model` on a moving particle placed at
/// every grid cell, compared with `truth`.
pub fn render_field(
    model: &dyn PairFunction,
    truth: &Interaction,
    layout: &FeatureLayout,
    probe: &Probe,
    grid: &GridSpec,
) -> Result<FieldGrid> {
    let d = layout.dim;
    if d < 2 || probe.fixed.position.len() != d || probe.moving.position.len() != d {
        return Err(Error::config("field rendering needs matching particles in 2 or 3 dimensions"));
    }
    if grid.nx == 0 || grid.ny == 0 {
        return Err(Error::config("empty field grid"));
    }
    let mut cells = Vec::with_capacity(grid.nx * grid.ny);
    let mut rows = Vec::new();
    let mut live = Vec::new();
    let fixed_eta = node_features(&probe.fixed, layout);
    for iy in 0..grid.ny {
        for ix in 0..grid.nx {
            let x = GridSpec::coord(grid.x_range, grid.nx, ix);
            let y = GridSpec::coord(grid.y_range, grid.ny, iy);
            let mut moving = probe.moving.clone();
            moving.position[0] = x;
            moving.position[1] = y;
            let mut disp = vec![0.0; d];
            truth.displacement(&moving.position, &probe.fixed.position, &mut disp);
            let r = disp.iter().map(|v| v * v).sum::<f64>().sqrt();
            let skipped = r < grid.exclusion;
            if !skipped {
                let mut row = node_features(&moving, layout);
                row.extend(&fixed_eta);
                if layout.with_displacement {
                    row.extend(&disp);
                }
                rows.extend(row);
                live.push(cells.len());
            }
            cells.push(FieldCell {
                x,
                y,
                skipped,
                force: Vec::new(),
                true_force: Vec::new(),
                potential: None,
                true_potential: None,
                magnitude_error: f64::NAN,
                angle_error: f64::NAN,
            });
        }
    }
    if !live.is_empty() {
        let inputs = Array2::from_shape_vec((live.len(), layout.edge_width()), rows)
            .map_err(|e| Error::Invariant(e.to_string()))?;
        let pred = model.pairwise(&inputs, layout)?;
        let exact = truth.pairwise(&inputs, layout)?;
        for (k, &c) in live.iter().enumerate() {
            let cell = &mut cells[c];
            cell.force = pred.forces.row(k).to_vec();
            cell.true_force = exact.forces.row(k).to_vec();
            cell.potential = pred.potentials.as_ref().map(|p| p[k]);
            cell.true_potential = exact.potentials.as_ref().map(|p| p[k]);
            let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
            cell.magnitude_error = (norm(&cell.force) - norm(&cell.true_force)).abs();
            cell.angle_error = angle_error(&cell.force, &cell.true_force);
            debug_assert!(cell.angle_error.is_nan() || (0.0..=PI).contains(&cell.angle_error));
        }
    }
    Ok(FieldGrid {
        spec: grid.clone(),
        cells,
    })
}
