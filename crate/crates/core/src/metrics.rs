//! Pixel classification scores and Accuracy-versus-Uncertainty.
//!
//! Predictions are thresholded at 0.5 with flood as the positive class.
//! Labelled training pixels are excluded from every tally.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{LabelMap, SparseLabels};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

/// A ratio whose denominator may be empty; empty ratios read as 0 and are
/// flagged.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ratio {
    pub value: f64,
    pub undefined: bool,
}

impl Ratio {
    fn of(num: f64, den: f64) -> Self {
        if den == 0.0 {
            Self { value: 0.0, undefined: true }
        } else {
            Self { value: num / den, undefined: false }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub precision: Ratio,
    pub recall: Ratio,
    pub f1: Ratio,
}

fn class_scores(tp: usize, fp: usize, fn_: usize) -> ClassScores {
    let precision = Ratio::of(tp as f64, (tp + fp) as f64);
    let recall = Ratio::of(tp as f64, (tp + fn_) as f64);
    let f1 = f1_score(precision.value, recall.value);
    ClassScores {
        precision,
        recall,
        f1,
    }
}

/// Harmonic mean `2PR / (P + R)`.
pub fn f1_score(precision: f64, recall: f64) -> Ratio {
    Ratio::of(2.0 * precision * recall, precision + recall)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerClass {
    pub dry: ClassScores,
    pub flood: ClassScores,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub confusion: Confusion,
    pub per_class: PerClass,
    pub macro_f1: f64,
    pub accuracy: Ratio,
}

fn check_shapes(a: &LabelMap, b: &LabelMap) -> Result<()> {
    if a.same_shape(b) {
        Ok(())
    } else {
        Err(Error::Dimensions(format!(
            "{}x{} vs {}x{}",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        )))
    }
}

pub fn confusion(pred: &LabelMap, truth: &LabelMap, exclude: &SparseLabels) -> Result<Confusion> {
    check_shapes(pred, truth)?;
    let mask = exclude.mask(pred.rows(), pred.cols());
    let mut c = Confusion::default();
    for ((&p, &t), &skip) in pred.values().iter().zip(truth.values()).zip(&mask) {
        if skip {
            continue;
        }
        match (p >= 0.5, t >= 0.5) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    Ok(c)
}

pub fn classification_report(pred: &LabelMap, truth: &LabelMap, exclude: &SparseLabels) -> Result<ClassificationReport> {
    let c = confusion(pred, truth, exclude)?;
    let flood = class_scores(c.tp, c.fp, c.fn_);
    let dry = class_scores(c.tn, c.fn_, c.fp);
    Ok(ClassificationReport {
        confusion: c,
        per_class: PerClass { dry, flood },
        macro_f1: 0.5 * (dry.f1.value + flood.f1.value),
        accuracy: Ratio::of((c.tp + c.tn) as f64, c.total() as f64),
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AvuCounts {
    pub n_ac: usize,
    pub n_au: usize,
    pub n_ic: usize,
    pub n_iu: usize,
}

impl AvuCounts {
    pub fn total(&self) -> usize {
        self.n_ac + self.n_au + self.n_ic + self.n_iu
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AvuReport {
    pub counts: AvuCounts,
    pub t_u: f64,
    pub avu_a: Ratio,
    pub avu_i: Ratio,
    pub avu: Ratio,
}

/// AvU from category counts: `AvU_A = AC / (AC + AU)`,
/// `AvU_I = IU / (IC + IU)` and their harmonic mean. When either component
/// is undefined the combined score is reported as 0 and flagged.
pub fn avu_from_counts(counts: AvuCounts, t_u: f64) -> AvuReport {
    let avu_a = Ratio::of(counts.n_ac as f64, (counts.n_ac + counts.n_au) as f64);
    let avu_i = Ratio::of(counts.n_iu as f64, (counts.n_ic + counts.n_iu) as f64);
    let avu = if avu_a.undefined || avu_i.undefined {
        Ratio { value: 0.0, undefined: true }
    } else {
        f1_score(avu_a.value, avu_i.value)
    };
    AvuReport {
        counts,
        t_u,
        avu_a,
        avu_i,
        avu,
    }
}

/// Tallies accurate/inaccurate against certain (`u < t_u`) / uncertain.
pub fn avu(
    pred: &LabelMap,
    truth: &LabelMap,
    uncertainty: &[f64],
    t_u: f64,
    exclude: &SparseLabels,
) -> Result<AvuReport> {
    check_shapes(pred, truth)?;
    if uncertainty.len() != pred.values().len() {
        return Err(Error::Length {
            expected: pred.values().len(),
            got: uncertainty.len(),
        });
    }
    if !(t_u >= 0.0) {
        return Err(Error::Config(format!("uncertainty threshold {t_u} must be >= 0")));
    }
    let mask = exclude.mask(pred.rows(), pred.cols());
    let mut counts = AvuCounts::default();
    for i in 0..mask.len() {
        if mask[i] {
            continue;
        }
        let accurate = (pred.values()[i] >= 0.5) == (truth.values()[i] >= 0.5);
        let certain = uncertainty[i] < t_u;
        match (accurate, certain) {
            (true, true) => counts.n_ac += 1,
            (true, false) => counts.n_au += 1,
            (false, true) => counts.n_ic += 1,
            (false, false) => counts.n_iu += 1,
        }
    }
    Ok(avu_from_counts(counts, t_u))
}
