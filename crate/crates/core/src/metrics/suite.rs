use std::collections::BTreeMap;

use ndarray::{Array2, ArrayView2};

use super::predictor::Predictor;
use super::report::{MetricsReport, ReportMeta};
use crate::error::{Error, Result};
use crate::graph::{snapshot_for_edges, GraphDataset, GraphSnapshot};

/// Recursive pairwise summation.
fn pairwise_sum(x: &[f64]) -> f64 {
    if x.len() <= 16 {
        x.iter().sum()
    } else {
        let (a, b) = x.split_at(x.len() / 2);
        pairwise_sum(a) + pairwise_sum(b)
    }
}

fn mean(x: &[f64]) -> f64 {
    pairwise_sum(x) / x.len() as f64
}

/// Mean over rows of the l1 distance between two arrays.
fn row_l1(pred: ArrayView2<f64>, truth: ArrayView2<f64>) -> Result<f64> {
    if pred.dim() != truth.dim() {
        return Err(Error::data(format!(
            "shape mismatch {:?} vs {:?}",
            pred.dim(),
            truth.dim()
        )));
    }
    if pred.nrows() == 0 {
        return Ok(0.0);
    }
    let per_row: Vec<f64> = pred
        .rows()
        .into_iter()
        .zip(truth.rows())
        .map(|(p, t)| p.iter().zip(t).map(|(a, b)| (a - b).abs()).sum())
        .collect();
    Ok(mean(&per_row))
}

fn over_steps(pred: &[ArrayView2<f64>], truth: &[ArrayView2<f64>]) -> Result<f64> {
    if pred.len() != truth.len() || pred.is_empty() {
        return Err(Error::data("need the same non-zero number of steps"));
    }
    let per_step = pred
        .iter()
        .zip(truth)
        .map(|(p, t)| row_l1(*p, *t))
        .collect::<Result<Vec<_>>>()?;
    Ok(mean(&per_step))
}

/// `1/|T| sum_t 1/|E_t| sum_e |pred_e - truth_e|_1` over per-step `E_t x c`
/// arrays.
pub fn mae_inter(pred: &[ArrayView2<f64>], truth: &[ArrayView2<f64>]) -> Result<f64> {
    over_steps(pred, truth)
}

/// The same average over per-step `n x c` particle arrays.
pub fn mae_part(pred: &[ArrayView2<f64>], truth: &[ArrayView2<f64>]) -> Result<f64> {
    over_steps(pred, truth)
}

fn column(v: &[f64]) -> Array2<f64> {
    Array2::from_shape_vec((v.len(), 1), v.to_vec()).unwrap()
}

/// Per-edge sums `q_e + s * q_rev(e)`.
fn with_reverse(q: &Array2<f64>, reverse: &[usize], s: f64) -> Array2<f64> {
    let mut out = q.clone();
    for (e, &r) in reverse.iter().enumerate() {
        let mut row = out.row_mut(e);
        row.scaled_add(s, &q.row(r));
    }
    out
}

/// Sum of incoming per-edge rows for every receiver.
fn node_sums(q: &Array2<f64>, snap: &GraphSnapshot) -> Array2<f64> {
    let mut out = Array2::zeros((snap.n_nodes(), q.ncols()));
    for (row, &i) in q.rows().into_iter().zip(&snap.edges.receivers) {
        let mut dst = out.row_mut(i);
        dst += &row;
    }
    out
}

/// Collects per-step values of every metric and of its normalizer.
#[derive(Default)]
struct Acc {
    values: BTreeMap<&'static str, Vec<f64>>,
    scales: BTreeMap<&'static str, Vec<f64>>,
}

impl Acc {
    fn push(&mut self, key: &'static str, pred: &Array2<f64>, truth: &Array2<f64>) -> Result<()> {
        self.values
            .entry(key)
            .or_default()
            .push(row_l1(pred.view(), truth.view())?);
        Ok(())
    }

    fn push_scale(&mut self, key: &'static str, truth: &Array2<f64>) -> Result<()> {
        let zero = Array2::zeros(truth.raw_dim());
        self.scales
            .entry(key)
            .or_default()
            .push(row_l1(zero.view(), truth.view())?);
        Ok(())
    }

    fn finish(self, meta: ReportMeta) -> MetricsReport {
        let mut values = BTreeMap::new();
        for (k, v) in &self.values {
            let m = mean(v);
            values.insert(k.to_string(), m);
            if let Some(s) = self.scales.get(k) {
                let denom = mean(s);
                if denom > 0.0 {
                    values.insert(format!("rel_{k}"), m / denom);
                }
            }
        }
        MetricsReport { meta, values }
    }
}

fn meta(predictor: &dyn Predictor, dataset: &GraphDataset, steps: &[usize], suite: &str) -> ReportMeta {
    ReportMeta {
        model: predictor.name(),
        dataset: format!(
            "{}-{}d-n{}",
            dataset.trajectory.interaction().name(),
            dataset.trajectory.dim(),
            dataset.trajectory.n_particles()
        ),
        suite: suite.into(),
        n_steps: steps.len(),
        seed: dataset.trajectory.header.seed,
    }
}

fn force_metrics(acc: &mut Acc, snap: &GraphSnapshot, forces: &Array2<f64>, accel: Option<&Array2<f64>>) -> Result<()> {
    if let Some(a) = accel {
        acc.push("mae_acc", a, &snap.targets)?;
        acc.push_scale("mae_acc", &snap.targets)?;
    }
    let truth = &snap.truth.forces;
    acc.push("mae_ef", forces, truth)?;
    acc.push_scale("mae_ef", truth)?;
    let net_truth = node_sums(truth, snap);
    acc.push("mae_nf", &node_sums(forces, snap), &net_truth)?;
    acc.push_scale("mae_nf", &net_truth)?;
    let asym = with_reverse(forces, &snap.reverse, 1.0);
    acc.push("mae_symm_f", &asym, &Array2::zeros(asym.raw_dim()))?;
    acc.push_scale("mae_symm_f", truth)?;
    Ok(())
}

/// Acceleration, edge-force, net-force and force-antisymmetry errors over
/// `steps`. Relative variants divide by the same average taken of the
/// ground truth (edge forces for the antisymmetry error).
pub fn force_suite(predictor: &dyn Predictor, dataset: &GraphDataset, steps: &[usize]) -> Result<MetricsReport> {
    if steps.is_empty() {
        return Err(Error::data("no steps to evaluate"));
    }
    let mut acc = Acc::default();
    for &t in steps {
        let snap = dataset.snapshot(t)?;
        let out = predictor.predict_step(&snap)?;
        force_metrics(&mut acc, &snap, &out.forces, out.accelerations.as_ref())?;
    }
    Ok(acc.finish(meta(predictor, dataset, steps, "force")))
}

/// Potential-increment errors against the configuration at
/// `reference_step`, potential antisymmetry, and the force metrics of the
/// derivative forces.
pub fn potential_suite(
    predictor: &dyn Predictor,
    dataset: &GraphDataset,
    steps: &[usize],
    reference_step: usize,
) -> Result<MetricsReport> {
    if steps.is_empty() {
        return Err(Error::data("no steps to evaluate"));
    }
    if reference_step >= dataset.n_steps() {
        return Err(Error::data(format!(
            "reference step {reference_step} outside dataset of {} steps",
            dataset.n_steps()
        )));
    }
    let mut acc = Acc::default();
    let mut cached: Option<(crate::sim::EdgeList, Array2<f64>, Array2<f64>)> = None;
    for &t in steps {
        let snap = dataset.snapshot(t)?;
        let out = predictor.predict_step(&snap)?;
        let p_hat = column(out.potentials.as_deref().ok_or_else(|| {
            Error::config(format!("{} does not predict potentials", predictor.name()))
        })?);
        let p = column(&snap.truth.potentials);

        if cached.as_ref().is_none_or(|(edges, _, _)| *edges != snap.edges) {
            let reference = snapshot_for_edges(&dataset.trajectory, reference_step, snap.edges.clone())?;
            let ref_out = predictor.predict_step(&reference)?;
            let ref_hat = column(ref_out.potentials.as_deref().unwrap_or_default());
            cached = Some((snap.edges.clone(), ref_hat, column(&reference.truth.potentials)));
        }
        let (_, ref_hat, ref_true) = cached.as_ref().unwrap();
        if ref_hat.dim() != p_hat.dim() {
            return Err(Error::data("reference prediction has the wrong shape"));
        }
        let dp_hat = &p_hat - ref_hat;
        let dp = &p - ref_true;
        acc.push("mae_dep", &dp_hat, &dp)?;
        acc.push_scale("mae_dep", &dp)?;
        let dnp = node_sums(&dp, &snap);
        acc.push("mae_dnp", &node_sums(&dp_hat, &snap), &dnp)?;
        acc.push_scale("mae_dnp", &dnp)?;
        let asym = with_reverse(&p_hat, &snap.reverse, -1.0);
        acc.push("mae_symm_p", &asym, &Array2::zeros(asym.raw_dim()))?;
        acc.push_scale("mae_symm_p", &p)?;
        force_metrics(&mut acc, &snap, &out.forces, out.accelerations.as_ref())?;
    }
    Ok(acc.finish(meta(predictor, dataset, steps, "potential")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn mae_examples() {
        let a = array![[1.0]];
        let z = array![[0.0]];
        assert_eq!(mae_inter(&[a.view()], &[a.view()]).unwrap(), 0.0);
        assert_eq!(mae_inter(&[a.view()], &[z.view()]).unwrap(), 1.0);
        let p = array![[1.0, 0.0], [0.0, 1.0]];
        let t = Array2::zeros((2, 2));
        assert_eq!(mae_inter(&[p.view()], &[t.view()]).unwrap(), 1.0);
        assert_eq!(mae_part(&[p.view()], &[t.view()]).unwrap(), 1.0);
        assert_eq!(mae_part(&[a.view()], &[z.view()]).unwrap(), 1.0);
        assert!(mae_inter(&[p.view()], &[a.view()]).is_err());
        // Two steps average per step, not per row.
        let three = array![[3.0], [3.0], [3.0]];
        let zeros3 = Array2::zeros((3, 1));
        assert_eq!(
            mae_inter(&[a.view(), three.view()], &[z.view(), zeros3.view()]).unwrap(),
            2.0
        );
    }

    #[test]
    fn pairwise_sum_matches_naive() {
        let x: Vec<f64> = (0..1000).map(|i| i as f64 * 0.5).collect();
        assert_eq!(pairwise_sum(&x), x.iter().sum::<f64>());
    }
}
