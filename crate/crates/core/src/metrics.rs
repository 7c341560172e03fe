//! Quantitative evaluation: PSNR/RMSE over grids, Chamfer and Hausdorff
//! distances between point sets (streamlines as polyline point sets), and
//! positional error of matched critical points.

use crate::field::GridVectorField;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("fields live on different domains: {0}")]
    DomainMismatch(String),
    #[error("ground truth has zero dynamic range")]
    ZeroRange,
    #[error("point set is empty")]
    EmptySet,
    #[error("ground-truth critical point set is empty")]
    EmptyTruth,
}

/// Root mean squared error over all nodes and components.
pub fn rmse(pred: &GridVectorField, truth: &GridVectorField) -> Result<f64, MetricError> {
    if pred.domain() != truth.domain() || pred.components() != truth.components() {
        return Err(MetricError::DomainMismatch(
            "prediction and truth grids differ".into(),
        ));
    }
    let sse: f64 = pred
        .data()
        .iter()
        .zip(truth.data())
        .map(|(p, t)| (p - t) * (p - t))
        .sum();
    Ok((sse / pred.data().len() as f64).sqrt())
}

/// `20 * log10(range / rmse)` where `range` is the ground truth's dynamic
/// range over all components jointly. A perfect reconstruction reports
/// `f64::INFINITY`.
pub fn psnr(pred: &GridVectorField, truth: &GridVectorField) -> Result<f64, MetricError> {
    let e = rmse(pred, truth)?;
    let lo = truth.data().iter().copied().fold(f64::INFINITY, f64::min);
    let hi = truth
        .data()
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let range = hi - lo;
    if range <= 0.0 {
        return Err(MetricError::ZeroRange);
    }
    if e == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(20.0 * (range / e).log10())
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn min_dist_to(point: &[f64], set: &[Vec<f64>]) -> f64 {
    set.iter()
        .map(|q| euclid(point, q))
        .fold(f64::INFINITY, f64::min)
}

/// Symmetric Chamfer distance:
/// `0.5 * (mean_a min_b ||a-b|| + mean_b min_a ||a-b||)`.
pub fn chamfer(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<f64, MetricError> {
    if a.is_empty() || b.is_empty() {
        return Err(MetricError::EmptySet);
    }
    let ab: f64 = a.iter().map(|p| min_dist_to(p, b)).sum::<f64>() / a.len() as f64;
    let ba: f64 = b.iter().map(|q| min_dist_to(q, a)).sum::<f64>() / b.len() as f64;
    Ok(0.5 * (ab + ba))
}

/// Symmetric Hausdorff distance: worst nearest-neighbor distance in either
/// direction.
pub fn hausdorff(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<f64, MetricError> {
    if a.is_empty() || b.is_empty() {
        return Err(MetricError::EmptySet);
    }
    let ab = a
        .iter()
        .map(|p| min_dist_to(p, b))
        .fold(f64::NEG_INFINITY, f64::max);
    let ba = b
        .iter()
        .map(|q| min_dist_to(q, a))
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(ab.max(ba))
}

/// Result of matching predicted critical points against ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalPointMatch {
    /// RMSE over matched pairs; absent when nothing matched.
    pub rmse: Option<f64>,
    pub matched: usize,
    pub missed: usize,
    pub spurious: usize,
}

/// Positional error of predicted critical points under a minimum-total-
/// distance one-to-one assignment (exhaustive for up to 10 points per side,
/// greedy nearest-pair beyond). Pairs farther apart than `match_radius`
/// count as a miss plus a spurious detection instead of a match.
pub fn critical_point_rmse(
    pred: &[Vec<f64>],
    truth: &[Vec<f64>],
    match_radius: f64,
) -> Result<CriticalPointMatch, MetricError> {
    if truth.is_empty() {
        return Err(MetricError::EmptyTruth);
    }
    let pairs = if pred.is_empty() {
        Vec::new()
    } else if pred.len() <= 10 && truth.len() <= 10 {
        exhaustive_assignment(pred, truth)
    } else {
        greedy_assignment(pred, truth)
    };
    let matched: Vec<f64> = pairs
        .iter()
        .filter(|(_, _, d)| *d <= match_radius)
        .map(|(_, _, d)| *d)
        .collect();
    let rmse = if matched.is_empty() {
        None
    } else {
        Some((matched.iter().map(|d| d * d).sum::<f64>() / matched.len() as f64).sqrt())
    };
    Ok(CriticalPointMatch {
        rmse,
        matched: matched.len(),
        missed: truth.len() - matched.len(),
        spurious: pred.len() - matched.len(),
    })
}

/// Minimum-total-distance assignment of the smaller set into the larger by
/// recursive search with branch-and-bound. Returns (pred_idx, truth_idx, dist).
fn exhaustive_assignment(pred: &[Vec<f64>], truth: &[Vec<f64>]) -> Vec<(usize, usize, f64)> {
    let np = pred.len();
    let nt = truth.len();
    let dist: Vec<Vec<f64>> = pred
        .iter()
        .map(|p| truth.iter().map(|t| euclid(p, t)).collect())
        .collect();
    // assign each pred to a distinct truth (or symmetric) over the smaller side
    let pred_is_small = np <= nt;
    let (small, large) = if pred_is_small { (np, nt) } else { (nt, np) };
    let d = |s: usize, l: usize| {
        if pred_is_small {
            dist[s][l]
        } else {
            dist[l][s]
        }
    };
    let mut best_total = f64::INFINITY;
    let mut best: Vec<usize> = Vec::new();
    let mut current: Vec<usize> = Vec::with_capacity(small);
    let mut used = vec![false; large];

    fn search(
        s: usize,
        small: usize,
        large: usize,
        total: f64,
        d: &dyn Fn(usize, usize) -> f64,
        used: &mut Vec<bool>,
        current: &mut Vec<usize>,
        best_total: &mut f64,
        best: &mut Vec<usize>,
    ) {
        if total >= *best_total {
            return;
        }
        if s == small {
            *best_total = total;
            *best = current.clone();
            return;
        }
        for l in 0..large {
            if used[l] {
                continue;
            }
            used[l] = true;
            current.push(l);
            search(s + 1, small, large, total + d(s, l), d, used, current, best_total, best);
            current.pop();
            used[l] = false;
        }
    }
    search(
        0,
        small,
        large,
        0.0,
        &d,
        &mut used,
        &mut current,
        &mut best_total,
        &mut best,
    );
    best.iter()
        .enumerate()
        .map(|(s, &l)| {
            if pred_is_small {
                (s, l, dist[s][l])
            } else {
                (l, s, dist[l][s])
            }
        })
        .collect()
}

/// Repeatedly match the globally closest (pred, truth) pair.
fn greedy_assignment(pred: &[Vec<f64>], truth: &[Vec<f64>]) -> Vec<(usize, usize, f64)> {
    let mut pairs = Vec::new();
    let mut pred_used = vec![false; pred.len()];
    let mut truth_used = vec![false; truth.len()];
    loop {
        let mut best: Option<(usize, usize, f64)> = None;
        for (i, p) in pred.iter().enumerate() {
            if pred_used[i] {
                continue;
            }
            for (j, t) in truth.iter().enumerate() {
                if truth_used[j] {
                    continue;
                }
                let d = euclid(p, t);
                if best.map_or(true, |(_, _, bd)| d < bd) {
                    best = Some((i, j, d));
                }
            }
        }
        match best {
            Some((i, j, d)) => {
                pred_used[i] = true;
                truth_used[j] = true;
                pairs.push((i, j, d));
            }
            None => return pairs,
        }
    }
}

/// Named scalar results plus the configuration that produced them.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricReport {
    /// Configuration context (method, m, members, p_test, ...), in insertion
    /// order.
    pub context: Vec<(String, String)>,
    /// Metric values in insertion order. Non-finite values are allowed only
    /// as the explicit +inf of a perfect PSNR.
    pub values: Vec<(String, f64)>,
}

impl MetricReport {
    pub fn with_context<I, K, V>(context: I) -> Self
    where
        I: IntoIterator<Item = (K, V)>,
        K: Into<String>,
        V: Into<String>,
    {
        Self {
            context: context
                .into_iter()
                .map(|(k, v)| (k.into(), v.into()))
                .collect(),
            values: Vec::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, value: f64) {
        self.values.push((name.into(), value));
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.values
            .iter()
            .find(|(k, _)| k == name)
            .map(|(_, v)| *v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{DomainSpec, GridVectorField};

    fn grid(values: &[[f64; 2]]) -> GridVectorField {
        let n = values.len();
        assert!(n == 4);
        let d = DomainSpec::new(vec![2, 2], vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        GridVectorField::new(d, 2, values.iter().flatten().copied().collect()).unwrap()
    }

    #[test]
    fn rmse_basics() {
        let a = grid(&[[1.0, 0.0], [0.0, 0.0], [0.0, 0.0], [0.0, 0.0]]);
        let b = grid(&[[0.0, 0.0]; 4]);
        assert_eq!(rmse(&a, &a).unwrap(), 0.0);
        // single nonzero error of 1 over 8 entries
        assert!((rmse(&a, &b).unwrap() - (1.0f64 / 8.0).sqrt()).abs() < 1e-15);
        assert!((rmse(&a, &b).unwrap() - rmse(&b, &a).unwrap()).abs() == 0.0);
    }

    #[test]
    fn rmse_two_errors_formula() {
        // errors {0, 2} over two values -> sqrt(4/2) = sqrt(2)
        let a = grid(&[[0.0, 0.0], [2.0, 0.0], [0.0, 0.0], [0.0, 0.0]]);
        let b = grid(&[[0.0, 0.0]; 4]);
        // restrict to the u component by keeping v identical
        let got = rmse(&a, &b).unwrap();
        assert!((got - (4.0f64 / 8.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn psnr_formula_and_sentinel() {
        let truth = grid(&[[0.0, 0.0], [1.0, 0.0], [0.5, 0.0], [0.25, 0.0]]);
        assert_eq!(psnr(&truth, &truth).unwrap(), f64::INFINITY);

        // rmse 0.1 against range 1 -> 20 dB
        let mut shifted_data: Vec<f64> = truth.data().to_vec();
        for v in &mut shifted_data {
            *v += 0.1;
        }
        let shifted =
            GridVectorField::new(truth.domain().clone(), 2, shifted_data).unwrap();
        assert!((psnr(&shifted, &truth).unwrap() - 20.0).abs() < 1e-12);

        let constant = grid(&[[1.0, 1.0]; 4]);
        assert!(matches!(psnr(&truth, &constant), Err(MetricError::ZeroRange)));
    }

    #[test]
    fn chamfer_and_hausdorff_singletons() {
        let a = vec![vec![0.0, 0.0]];
        let b = vec![vec![3.0, 4.0]];
        assert_eq!(chamfer(&a, &b).unwrap(), 5.0);
        assert_eq!(hausdorff(&a, &b).unwrap(), 5.0);
        assert_eq!(chamfer(&a, &a).unwrap(), 0.0);
        assert_eq!(hausdorff(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn chamfer_asymmetric_sets_follow_formula() {
        let a = vec![vec![0.0, 0.0], vec![1.0, 0.0]];
        let b = vec![vec![0.0, 0.0]];
        assert!((chamfer(&a, &b).unwrap() - 0.25).abs() < 1e-15);
        assert_eq!(hausdorff(&a, &b).unwrap(), 1.0);
    }

    #[test]
    fn empty_sets_are_rejected() {
        let a = vec![vec![0.0, 0.0]];
        assert!(matches!(chamfer(&a, &[]), Err(MetricError::EmptySet)));
        assert!(matches!(hausdorff(&[], &a), Err(MetricError::EmptySet)));
    }

    #[test]
    fn critical_point_match_identity_any_order() {
        let truth = vec![vec![0.0, 0.0], vec![1.0, 1.0], vec![-0.5, 0.25]];
        let mut pred = truth.clone();
        pred.reverse();
        let m = critical_point_rmse(&pred, &truth, 0.1).unwrap();
        assert_eq!(m.rmse, Some(0.0));
        assert_eq!((m.missed, m.spurious), (0, 0));
    }

    #[test]
    fn critical_point_match_single_offset() {
        let truth = vec![vec![0.0, 0.0]];
        let pred = vec![vec![0.3, 0.4]];
        let m = critical_point_rmse(&pred, &truth, 0.5).unwrap();
        assert!((m.rmse.unwrap() - 0.5).abs() < 1e-15);
        // tighter radius: the pair no longer matches
        let m2 = critical_point_rmse(&pred, &truth, 0.4).unwrap();
        assert_eq!(m2.rmse, None);
        assert_eq!((m2.missed, m2.spurious), (1, 1));
    }

    #[test]
    fn critical_point_match_handles_missing_predictions() {
        let truth = vec![vec![0.0, 0.0]];
        let m = critical_point_rmse(&[], &truth, 1.0).unwrap();
        assert_eq!(m.rmse, None);
        assert_eq!((m.missed, m.spurious), (1, 0));
        assert!(matches!(
            critical_point_rmse(&truth, &[], 1.0),
            Err(MetricError::EmptyTruth)
        ));
    }

    #[test]
    fn assignment_prefers_minimum_total_distance() {
        // greedy would pair pred0 with truth0 (0.4) and force pred1 far away;
        // the optimal assignment crosses over
        let truth = vec![vec![0.0, 0.0], vec![1.0, 0.0]];
        let pred = vec![vec![0.4, 0.0], vec![-0.1, 0.0]];
        let m = critical_point_rmse(&pred, &truth, 2.0).unwrap();
        // optimal: pred0->truth1 (0.6), pred1->truth0 (0.1)
        let expect = ((0.6f64.powi(2) + 0.1f64.powi(2)) / 2.0).sqrt();
        assert!((m.rmse.unwrap() - expect).abs() < 1e-12);
    }

    #[test]
    fn report_roundtrips_values() {
        let mut r = MetricReport::with_context([("method", "mcdropout"), ("m", "100")]);
        r.push("psnr_db", 52.3);
        r.push("rmse", 0.01);
        assert_eq!(r.get("psnr_db"), Some(52.3));
        assert_eq!(r.get("nope"), None);
    }
}
