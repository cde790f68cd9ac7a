//! Post-run analytics over description lengths.

use crate::error::{arg_err, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub label: String,
    pub description_length: f64,
    pub total_flops: u64,
    /// Cumulative next-step loss after each example.
    pub cumulative: Vec<f64>,
}

impl RunSummary {
    pub fn new(label: impl Into<String>, total_flops: u64, cumulative: Vec<f64>) -> Self {
        Self {
            label: label.into(),
            description_length: cumulative.last().copied().unwrap_or(0.0),
            total_flops,
            cumulative,
        }
    }
}

/// Model posterior under a uniform prior, from description lengths in nats.
#[derive(Debug, Clone, PartialEq)]
pub struct Posterior {
    pub log_probs: Vec<f64>,
}

impl Posterior {
    pub fn probs(&self) -> Vec<f64> {
        self.log_probs.iter().map(|l| l.exp()).collect()
    }
}

/// `p_i = exp(-L_i) / sum_j exp(-L_j)`, computed in log space.
pub fn model_posterior(lengths: &[f64]) -> Result<Posterior> {
    if lengths.is_empty() {
        return arg_err("no description lengths given");
    }
    if lengths.iter().any(|l| !l.is_finite()) {
        return arg_err("description lengths must be finite");
    }
    let min = lengths.iter().copied().fold(f64::INFINITY, f64::min);
    let log_z = lengths.iter().map(|l| (min - l).exp()).sum::<f64>().ln();
    Ok(Posterior {
        log_probs: lengths.iter().map(|l| min - l - log_z).collect(),
    })
}

/// `cumulative(run) - cumulative(baseline)` per step.
pub fn regret_curve(run: &RunSummary, baseline: &RunSummary) -> Result<Vec<f64>> {
    if run.cumulative.len() != baseline.cumulative.len() {
        return arg_err(format!(
            "series lengths differ: {} vs {}",
            run.cumulative.len(),
            baseline.cumulative.len()
        ));
    }
    Ok(run
        .cumulative
        .iter()
        .zip(&baseline.cumulative)
        .map(|(a, b)| a - b)
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrontPoint {
    pub label: String,
    pub flops: f64,
    pub length: f64,
}

impl FrontPoint {
    pub fn new(label: impl Into<String>, flops: f64, length: f64) -> Self {
        Self {
            label: label.into(),
            flops,
            length,
        }
    }
}

/// Points not dominated in (flops, length), sorted by flops with strictly
/// decreasing length. Exact duplicates keep the first occurrence.
pub fn pareto_front(points: &[FrontPoint]) -> Result<Vec<FrontPoint>> {
    if points.is_empty() {
        return arg_err("no points given");
    }
    let mut order: Vec<usize> = (0..points.len()).collect();
    // stable: ties in (flops, length) keep input order
    order.sort_by(|&a, &b| {
        points[a]
            .flops
            .total_cmp(&points[b].flops)
            .then(points[a].length.total_cmp(&points[b].length))
    });
    let mut front: Vec<FrontPoint> = Vec::new();
    for i in order {
        let p = &points[i];
        if front.last().is_none_or(|best| p.length < best.length) {
            front.push(p.clone());
        }
    }
    Ok(front)
}


#[cfg(test)]
mod proptests {
    use super::*;
    use proptest::prelude::*;

    fn arb_points() -> impl Strategy<Value = Vec<FrontPoint>> {
        prop::collection::vec((0u32..50, 0u32..50), 1..40).prop_map(|v| {
            v.into_iter()
                .enumerate()
                .map(|(i, (f, l))| FrontPoint::new(i.to_string(), f64::from(f), f64::from(l)))
                .collect()
        })
    }

    proptest! {
        #[test]
        fn front_is_idempotent_and_undominated(points in arb_points()) {
            let front = pareto_front(&points).unwrap();
            prop_assert_eq!(&pareto_front(&front).unwrap(), &front);
            for w in front.windows(2) {
                prop_assert!(w[0].flops < w[1].flops && w[0].length > w[1].length);
            }
            for f in &front {
                for p in &points {
                    let dominates = (p.flops <= f.flops && p.length < f.length)
                        || (p.flops < f.flops && p.length <= f.length);
                    prop_assert!(!dominates);
                }
            }
        }

        #[test]
        fn posterior_in_simplex_and_regret_antisymmetric(
            lengths in prop::collection::vec(-1e3f64..1e3, 1..10),
            shift in -1e3f64..1e3,
        ) {
            let p = model_posterior(&lengths).unwrap().probs();
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(p.iter().all(|&v| (0.0..=1.0).contains(&v)));
            let shifted: Vec<f64> = lengths.iter().map(|l| l + shift).collect();
            let q = model_posterior(&shifted).unwrap().probs();
            for (a, b) in p.iter().zip(&q) {
                prop_assert!((a - b).abs() < 1e-12);
            }
            let a = RunSummary::new("a", 0, lengths.clone());
            let b = RunSummary::new("b", 0, shifted);
            let ab = regret_curve(&a, &b).unwrap();
            let ba = regret_curve(&b, &a).unwrap();
            for (x, y) in ab.iter().zip(&ba) {
                prop_assert_eq!(*x, -*y);
            }
        }
    }
}
