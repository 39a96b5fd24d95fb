use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionStats {
    pub count: usize,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
}

/// Statistics of `P_hat - P` inside (`r < threshold`) and outside the
/// threshold. An empty region is `None`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OffsetStats {
    pub inner: Option<RegionStats>,
    pub outer: Option<RegionStats>,
}

fn stats(x: &[f64]) -> Option<RegionStats> {
    if x.is_empty() {
        return None;
    }
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Some(RegionStats {
        count: x.len(),
        mean,
        std: var.sqrt(),
    })
}

pub fn discontinuity_offset_stats(
    predicted: &[f64],
    truth: &[f64],
    distances: &[f64],
    threshold: f64,
) -> Result<OffsetStats> {
    if predicted.len() != truth.len() || truth.len() != distances.len() {
        return Err(Error::data("offset statistics need equally long inputs"));
    }
    let (mut inner, mut outer) = (Vec::new(), Vec::new());
    for ((p, t), r) in predicted.iter().zip(truth).zip(distances) {
        if *r < threshold {
            inner.push(p - t);
        } else {
            outer.push(p - t);
        }
    }
    Ok(OffsetStats {
        inner: stats(&inner),
        outer: stats(&outer),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn offset_examples() {
        let truth = [0.0, 0.0, 0.5, 1.5];
        let r = [0.5, 1.9, 2.0, 3.0];
        let same = discontinuity_offset_stats(&truth, &truth, &r, 2.0).unwrap();
        for s in [same.inner.unwrap(), same.outer.unwrap()] {
            assert_eq!((s.mean, s.std), (0.0, 0.0));
        }
        let shifted: Vec<f64> = truth.iter().map(|p| p + 1.0).collect();
        let all = discontinuity_offset_stats(&shifted, &truth, &r, 2.0).unwrap();
        assert_eq!((all.inner.unwrap().mean, all.outer.unwrap().mean), (1.0, 1.0));
        assert_eq!((all.inner.unwrap().std, all.outer.unwrap().std), (0.0, 0.0));
        let part: Vec<f64> = truth
            .iter()
            .zip(&r)
            .map(|(p, d)| if *d < 2.0 { p + 1.0 } else { *p })
            .collect();
        let s = discontinuity_offset_stats(&part, &truth, &r, 2.0).unwrap();
        assert_eq!((s.inner.unwrap().mean, s.outer.unwrap().mean), (1.0, 0.0));
        assert_eq!((s.inner.unwrap().count, s.outer.unwrap().count), (2, 2));
        let empty = discontinuity_offset_stats(&truth, &truth, &r, 0.1).unwrap();
        assert!(empty.inner.is_none());
    }
}
