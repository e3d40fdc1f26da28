use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{contract, Result};
use crate::graphdata::NodeLabel;

/// Pooled decision counts. Single-label queries contribute one decision per
/// node; multi-label queries one per (node, category).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Counts {
    pub correct: usize,
    pub decisions: usize,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl Counts {
    pub fn merge(&mut self, o: &Counts) {
        self.correct += o.correct;
        self.decisions += o.decisions;
        self.tp += o.tp;
        self.fp += o.fp;
        self.fn_ += o.fn_;
    }

    pub fn accuracy(&self) -> f64 {
        if self.decisions == 0 {
            return 0.0;
        }
        self.correct as f64 / self.decisions as f64
    }

    /// `2TP / (2TP + FP + FN)`; 0 when there is nothing to score.
    pub fn micro_f1(&self) -> f64 {
        let den = 2 * self.tp + self.fp + self.fn_;
        if den == 0 {
            return 0.0;
        }
        (2 * self.tp) as f64 / den as f64
    }
}

/// Scores predictions against ground truth, pairwise.
pub fn score(pred: &[NodeLabel], truth: &[NodeLabel]) -> Result<Counts> {
    if pred.len() != truth.len() {
        return Err(contract(format!("{} predictions for {} labels", pred.len(), truth.len())));
    }
    let mut c = Counts::default();
    for (p, t) in pred.iter().zip(truth) {
        match (p, t) {
            (NodeLabel::Class(p), NodeLabel::Class(t)) => {
                c.decisions += 1;
                if p == t {
                    c.correct += 1;
                    c.tp += 1;
                } else {
                    c.fp += 1;
                    c.fn_ += 1;
                }
            }
            (NodeLabel::Multi(p), NodeLabel::Multi(t)) if p.len() == t.len() => {
                for (&p, &t) in p.iter().zip(t) {
                    c.decisions += 1;
                    c.correct += usize::from(p == t);
                    match (p, t) {
                        (true, true) => c.tp += 1,
                        (true, false) => c.fp += 1,
                        (false, true) => c.fn_ += 1,
                        (false, false) => {}
                    }
                }
            }
            _ => return Err(contract("prediction and label kinds differ")),
        }
    }
    Ok(c)
}

/// Mean and two-sided 95% Student-t half-width.
pub fn confidence_interval(values: &[f64]) -> Result<(f64, f64)> {
    let n = values.len();
    if n < 2 {
        return Err(contract(format!("confidence interval needs at least 2 values, got {n}")));
    }
    let nf = n as f64;
    // offsets from the first value keep identical inputs exact
    let v0 = values[0];
    let mean = v0 + values.iter().map(|v| v - v0).sum::<f64>() / nf;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (nf - 1.0);
    let t = StudentsT::new(0.0, 1.0, nf - 1.0)
        .expect("positive degrees of freedom")
        .inverse_cdf(0.975);
    Ok((mean, t * var.sqrt() / nf.sqrt()))
}

/// Mean ± half-width of one metric over seeds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Interval {
    pub mean: f64,
    pub half_width: f64,
}

impl Interval {
    /// A single value has half-width 0.
    pub fn of(values: &[f64]) -> Result<Self> {
        match values {
            [] => Err(contract("no values to summarize")),
            [v] => Ok(Interval { mean: *v, half_width: 0.0 }),
            _ => {
                let (mean, half_width) = confidence_interval(values)?;
                Ok(Interval { mean, half_width })
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SeedScore {
    pub seed: u64,
    pub accuracy: f64,
    pub micro_f1: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Metrics {
    pub accuracy: Interval,
    pub micro_f1: Interval,
    pub per_seed: Vec<SeedScore>,
    pub runtime_secs: f64,
}

impl Metrics {
    pub fn from_seeds(per_seed: Vec<SeedScore>, runtime_secs: f64) -> Result<Self> {
        let acc: Vec<f64> = per_seed.iter().map(|s| s.accuracy).collect();
        let f1: Vec<f64> = per_seed.iter().map(|s| s.micro_f1).collect();
        Ok(Metrics { accuracy: Interval::of(&acc)?, micro_f1: Interval::of(&f1)?, per_seed, runtime_secs })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_predictions() {
        let l = vec![NodeLabel::Class(0), NodeLabel::Class(2)];
        let c = score(&l, &l).unwrap();
        assert_eq!((c.accuracy(), c.micro_f1()), (1.0, 1.0));
    }

    #[test]
    fn single_label_f1_is_accuracy() {
        let p: Vec<_> = [0, 1, 1, 2, 0].into_iter().map(NodeLabel::Class).collect();
        let t: Vec<_> = [0, 2, 1, 0, 0].into_iter().map(NodeLabel::Class).collect();
        let c = score(&p, &t).unwrap();
        assert_eq!(c.accuracy(), 0.6);
        assert_eq!(c.micro_f1(), c.accuracy());
    }

    #[test]
    fn multi_label_f1() {
        // TP 3, FP 1, FN 2, TN 2
        let m = |v: &[u8]| NodeLabel::Multi(v.iter().map(|&b| b == 1).collect());
        let p = vec![m(&[1, 1, 0, 1]), m(&[1, 0, 0, 0])];
        let t = vec![m(&[1, 1, 1, 0]), m(&[1, 1, 0, 0])];
        let c = score(&p, &t).unwrap();
        assert_eq!((c.tp, c.fp, c.fn_), (3, 1, 2));
        assert!((c.micro_f1() - 6.0 / 9.0).abs() < 1e-15);
        assert_eq!(c.accuracy(), 5.0 / 8.0);
    }

    #[test]
    fn t_intervals() {
        assert_eq!(confidence_interval(&[0.7, 0.7, 0.7]).unwrap(), (0.7, 0.0));
        let (m, h) = confidence_interval(&[0.0, 1.0]).unwrap();
        assert_eq!(m, 0.5);
        // t(0.975, 1) = 12.7062 and s/√n = 0.5
        assert!((h - 12.706_204_736 * 0.5).abs() < 1e-6, "{h}");
        let ten: Vec<f64> = (0..10).map(f64::from).collect();
        let (_, h) = confidence_interval(&ten).unwrap();
        let s = (ten.iter().map(|v| (v - 4.5f64).powi(2)).sum::<f64>() / 9.0).sqrt();
        assert!((h / (s / 10f64.sqrt()) - 2.262_157).abs() < 1e-5);
        assert!(matches!(confidence_interval(&[1.0]), Err(crate::Error::Contract(_))));
    }

    #[test]
    fn one_seed_has_zero_width() {
        let m = Metrics::from_seeds(vec![SeedScore { seed: 3, accuracy: 0.5, micro_f1: 0.5 }], 0.0).unwrap();
        assert_eq!(m.accuracy, Interval { mean: 0.5, half_width: 0.0 });
    }
}
