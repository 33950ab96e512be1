//! Matching of fused outputs to ground truth and the error/precision/recall
//! suite. False positives add a fixed penalty to every error mean, so extra
//! boxes can never make a method look more accurate.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::scalar::Real;
use crate::types::{angle_diff, Category, FusedObject, GtFrame, GtId, GtObject};

/// Error contributed by each false positive to the corresponding mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FpPenalties {
    /// Meters; normally the association distance threshold.
    pub translation: f64,
    /// Meters.
    #[serde(default = "default_scale_penalty")]
    pub scale: f64,
    #[serde(default = "default_orientation_penalty")]
    pub orientation_deg: f64,
}

fn default_scale_penalty() -> f64 {
    1.0
}

fn default_orientation_penalty() -> f64 {
    90.0
}

impl FpPenalties {
    pub fn new(translation: f64) -> Result<Self> {
        let p = Self {
            translation,
            scale: default_scale_penalty(),
            orientation_deg: default_orientation_penalty(),
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for v in [self.translation, self.scale, self.orientation_deg] {
            if !v.is_finite() || v < 0.0 {
                return Err(invalid(format!("false-positive penalty {v} must be >= 0")));
            }
        }
        Ok(())
    }
}

/// Indices into the prediction and ground-truth lists of one frame.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MatchOutcome {
    pub tp: Vec<(usize, usize)>,
    pub fp: Vec<usize>,
    pub fn_: Vec<usize>,
}

fn center_dist<T: Real>(p: &FusedObject<T>, g: &GtObject<T>) -> T {
    p.bbox.center_distance(&g.bbox)
}

/// Identifies each prediction with the ground-truth object most of its
/// sources came from (ties go to the nearest candidate). Among predictions
/// for the same object the nearest is the true positive and the rest are
/// false positives. Predictions without usable provenance are false
/// positives; objects nobody predicted are false negatives.
pub fn match_to_gt<T: Real>(preds: &[FusedObject<T>], gt: &[GtObject<T>]) -> MatchOutcome {
    let index: BTreeMap<&GtId, usize> = gt.iter().enumerate().map(|(i, g)| (&g.gt_id, i)).collect();
    let mut claims: Vec<Vec<usize>> = vec![Vec::new(); gt.len()];
    let mut out = MatchOutcome::default();

    for (pi, p) in preds.iter().enumerate() {
        let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
        for id in p.sources.iter().filter_map(|s| s.gt_id.as_ref()) {
            if let Some(&gi) = index.get(id) {
                *counts.entry(gi).or_default() += 1;
            }
        }
        let Some(&top) = counts.values().max() else {
            out.fp.push(pi);
            continue;
        };
        let target = counts
            .iter()
            .filter(|(_, c)| **c == top)
            .map(|(gi, _)| *gi)
            .min_by(|a, b| {
                center_dist(p, &gt[*a])
                    .partial_cmp(&center_dist(p, &gt[*b]))
                    .expect("finite distance")
            })
            .expect("at least one candidate");
        claims[target].push(pi);
    }

    for (gi, cl) in claims.iter().enumerate() {
        let best = cl.iter().copied().min_by(|a, b| {
            center_dist(&preds[*a], &gt[gi])
                .partial_cmp(&center_dist(&preds[*b], &gt[gi]))
                .expect("finite distance")
                .then(a.cmp(b))
        });
        match best {
            Some(b) => {
                out.tp.push((b, gi));
                out.fp.extend(cl.iter().copied().filter(|&p| p != b));
            }
            None => out.fn_.push(gi),
        }
    }
    out.fp.sort_unstable();
    out
}

/// Running sums for one category (or for all of them).
#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct Sums {
    tp: u64,
    fp: u64,
    fn_: u64,
    translation: f64,
    scale: f64,
    orientation_deg: f64,
}

impl Sums {
    fn merge(&mut self, o: &Sums) {
        self.tp += o.tp;
        self.fp += o.fp;
        self.fn_ += o.fn_;
        self.translation += o.translation;
        self.scale += o.scale;
        self.orientation_deg += o.orientation_deg;
    }

    fn report(&self, pen: &FpPenalties) -> Metrics {
        let n = self.tp + self.fp;
        let mean = |sum: f64, penalty: f64| {
            (n > 0).then(|| (sum + self.fp as f64 * penalty) / n as f64)
        };
        let ratio = |num: u64, den: u64| if den == 0 { 1.0 } else { num as f64 / den as f64 };
        Metrics {
            mate: mean(self.translation, pen.translation),
            mase: mean(self.scale, pen.scale),
            maoe: mean(self.orientation_deg, pen.orientation_deg),
            precision: ratio(self.tp, self.tp + self.fp),
            recall: ratio(self.tp, self.tp + self.fn_),
            tp: self.tp,
            fp: self.fp,
            fn_: self.fn_,
        }
    }
}

/// Per-TP errors: 3D center distance, distance between `(l, w, h)` vectors,
/// and absolute wrapped yaw difference in degrees.
pub fn tp_errors<T: Real>(p: &FusedObject<T>, g: &GtObject<T>) -> (f64, f64, f64) {
    let t = p.bbox.center_distance(&g.bbox).as_f64();
    let s = (p.bbox.size().iter().zip(g.bbox.size()))
        .map(|(a, b)| (*a - b).powi(2))
        .sum::<T>()
        .sqrt()
        .as_f64();
    let o = angle_diff(p.bbox.theta, g.bbox.theta).abs().as_f64().to_degrees();
    (t, s, o)
}

/// Accumulates matches over many frames. Merging accumulators is exact up to
/// floating point summation order; reduce in a fixed order for reproducible
/// output.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvalAccumulator {
    total: Sums,
    per_category: BTreeMap<Category, Sums>,
}

impl EvalAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds one frame given a precomputed match.
    pub fn add<T: Real>(&mut self, preds: &[FusedObject<T>], gt: &[GtObject<T>], m: &MatchOutcome) {
        for &(pi, gi) in &m.tp {
            let (t, s, o) = tp_errors(&preds[pi], &gt[gi]);
            for sums in [&mut self.total, self.per_category.entry(gt[gi].category).or_default()] {
                sums.tp += 1;
                sums.translation += t;
                sums.scale += s;
                sums.orientation_deg += o;
            }
        }
        for &pi in &m.fp {
            self.total.fp += 1;
            self.per_category.entry(preds[pi].category).or_default().fp += 1;
        }
        for &gi in &m.fn_ {
            self.total.fn_ += 1;
            self.per_category.entry(gt[gi].category).or_default().fn_ += 1;
        }
    }

    /// Matches and adds one frame.
    pub fn add_frame<T: Real>(&mut self, preds: &[FusedObject<T>], gt: &[GtObject<T>]) {
        let m = match_to_gt(preds, gt);
        self.add(preds, gt, &m);
    }

    pub fn merge(&mut self, other: &EvalAccumulator) {
        self.total.merge(&other.total);
        for (c, s) in &other.per_category {
            self.per_category.entry(*c).or_default().merge(s);
        }
    }

    pub fn report(&self, penalties: FpPenalties) -> EvalReport {
        EvalReport {
            overall: self.total.report(&penalties),
            per_category: self
                .per_category
                .iter()
                .map(|(c, s)| (*c, s.report(&penalties)))
                .collect(),
            penalties,
        }
    }
}

/// Means are `None` when there were no predictions (neither TP nor FP).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mate: Option<f64>,
    pub mase: Option<f64>,
    pub maoe: Option<f64>,
    pub precision: f64,
    pub recall: f64,
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    #[serde(flatten)]
    pub overall: Metrics,
    pub per_category: BTreeMap<Category, Metrics>,
    pub penalties: FpPenalties,
}

fn cell(v: Option<f64>, digits: usize) -> String {
    v.map_or_else(|| "n/a".to_owned(), |x| format!("{x:.digits$}"))
}

impl EvalReport {
    pub const CSV_HEADER: &'static str = "method,noise,mATE,mASE,mAOE,precision,recall,tp,fp,fn";

    /// One CSV row: method, noise level, then the metric columns.
    pub fn csv_row(&self, method: &str, noise: &str) -> String {
        let m = &self.overall;
        let mut s = String::new();
        write!(
            s,
            "{method},{noise},{},{},{},{:.4},{:.4},{},{},{}",
            cell(m.mate, 4),
            cell(m.mase, 4),
            cell(m.maoe, 3),
            m.precision,
            m.recall,
            m.tp,
            m.fp,
            m.fn_
        )
        .expect("writing to a String cannot fail");
        s
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Matches one frame and reports it.
pub fn evaluate<T: Real>(preds: &[FusedObject<T>], gt: &[GtObject<T>], penalties: FpPenalties) -> EvalReport {
    let mut acc = EvalAccumulator::new();
    acc.add_frame(preds, gt);
    acc.report(penalties)
}

/// Evaluates a flat prediction stream against ground-truth frames, assigning
/// each prediction to the frame with the nearest timestamp.
pub fn evaluate_stream<T: Real>(
    preds: &[FusedObject<T>],
    gt: &[GtFrame<T>],
    penalties: FpPenalties,
) -> EvalReport {
    accumulate_stream(preds, gt).report(penalties)
}

/// Matching half of [`evaluate_stream`], for callers that merge many streams.
pub fn accumulate_stream<T: Real>(preds: &[FusedObject<T>], gt: &[GtFrame<T>]) -> EvalAccumulator {
    let mut per_frame: Vec<Vec<FusedObject<T>>> = vec![Vec::new(); gt.len()];
    let mut orphans = 0u64;
    for p in preds {
        let nearest = gt.iter().enumerate().min_by(|a, b| {
            (a.1.timestamp - p.timestamp)
                .abs()
                .partial_cmp(&(b.1.timestamp - p.timestamp).abs())
                .expect("finite timestamps")
        });
        match nearest {
            Some((i, _)) => per_frame[i].push(p.clone()),
            None => orphans += 1,
        }
    }
    let mut acc = EvalAccumulator::new();
    for (f, ps) in gt.iter().zip(&per_frame) {
        acc.add_frame(ps, &f.objects);
    }
    acc.total.fp += orphans;
    acc
}
