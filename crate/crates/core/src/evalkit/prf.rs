use serde::{Deserialize, Serialize};

use crate::corpus::Label;

/// Precision, recall and F1.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

pub(crate) fn ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

pub(crate) fn harmonic(p: f64, r: f64) -> f64 {
    if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    }
}

impl Prf {
    pub fn new(precision: f64, recall: f64) -> Self {
        Self { precision, recall, f1: harmonic(precision, recall) }
    }

    pub fn from_fractions(p_num: f64, p_den: f64, r_num: f64, r_den: f64) -> Self {
        Self::new(ratio(p_num, p_den), ratio(r_num, r_den))
    }
}

/// True/false positive and false negative counts over non-`None` labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Counts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl Counts {
    pub fn add(&mut self, predicted: Label, gold: Label) {
        if predicted == gold {
            if !gold.is_none() {
                self.tp += 1;
            }
        } else {
            if !predicted.is_none() {
                self.fp += 1;
            }
            if !gold.is_none() {
                self.fn_ += 1;
            }
        }
    }

    pub fn merge(&mut self, other: Counts) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
    }

    pub fn prf(&self) -> Prf {
        let tp = self.tp as f64;
        Prf::from_fractions(tp, tp + self.fp as f64, tp, tp + self.fn_ as f64)
    }
}

/// Micro-averaged P/R/F1 of aligned prediction and gold label sequences of
/// one task. `None` never counts as a positive.
pub fn micro_prf(predictions: &[Label], golds: &[Label]) -> Prf {
    assert_eq!(predictions.len(), golds.len(), "predictions and golds must align");
    let mut c = Counts::default();
    for (&p, &g) in predictions.iter().zip(golds) {
        c.add(p, g);
    }
    c.prf()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use Label::*;

    #[test]
    fn identical_with_a_positive_is_perfect() {
        let g = [Before, NoneTemporal, Overlap];
        assert_eq!(micro_prf(&g, &g), Prf { precision: 1.0, recall: 1.0, f1: 1.0 });
    }

    #[test]
    fn hand_counted_half() {
        // gold: two Before; predicted: one Before right, one spurious Overlap
        // on a gold-None pair, the other Before missed
        let gold = [Before, Before, NoneTemporal];
        let pred = [Before, NoneTemporal, Overlap];
        let mut c = Counts::default();
        for (p, g) in pred.iter().zip(&gold) {
            c.add(*p, *g);
        }
        assert_eq!(c, Counts { tp: 1, fp: 1, fn_: 1 });
        assert_eq!(micro_prf(&pred, &gold), Prf { precision: 0.5, recall: 0.5, f1: 0.5 });
    }

    #[test]
    fn all_none_predictions() {
        let gold = [Cause, Precondition, NoneCausal];
        let pred = [NoneCausal; 3];
        assert_eq!(micro_prf(&pred, &gold), Prf::default());
    }

    fn temporal() -> impl Strategy<Value = Label> {
        (0usize..7).prop_map(|i| crate::corpus::Task::Temporal.labels()[i])
    }

    proptest! {
        #[test]
        fn swapping_roles_swaps_p_and_r(v in proptest::collection::vec((temporal(), temporal()), 0..40)) {
            let (p, g): (Vec<_>, Vec<_>) = v.into_iter().unzip();
            let a = micro_prf(&p, &g);
            let b = micro_prf(&g, &p);
            prop_assert_eq!(a.precision, b.recall);
            prop_assert_eq!(a.recall, b.precision);
            for x in [a.precision, a.recall, a.f1] {
                prop_assert!((0.0..=1.0).contains(&x));
            }
            if a.precision == 0.0 && a.recall == 0.0 {
                prop_assert_eq!(a.f1, 0.0);
            }
        }
    }
}
