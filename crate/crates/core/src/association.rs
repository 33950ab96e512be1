//! Combined score-based association of detections across agents.
//!
//! Each candidate pair is scored on volume agreement (dimension score),
//! Mahalanobis center distance (center score) and yaw agreement
//! (orientation score). The weighted cost feeds [`solve_assignment`];
//! category mismatches and pairs beyond the distance threshold are
//! forbidden so they stay unmatched instead of being forced together.

use serde::{Deserialize, Serialize};

use crate::assignment::{solve_assignment, AssignmentResult, CostMatrix};
use crate::error::{invalid, Result};
use crate::fusion::wls_fuse;
use crate::scalar::Real;
use crate::types::{AgentId, Detection, Frame, SourceRef};

/// How the center distance threshold gates a pair.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CenterGate {
    /// Forbid when the Euclidean center distance exceeds `lambda_max` meters.
    #[default]
    Euclidean,
    /// Forbid when the Mahalanobis distance exceeds `lambda_max` (raw center
    /// score below zero).
    Mahalanobis,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct CsbaParams<T> {
    pub w_ds: T,
    pub w_cs: T,
    pub w_os: T,
    /// Distance scale of the center score, meters.
    pub lambda_max: T,
    /// Optional upper bound on an allowed pair cost.
    #[serde(default)]
    pub cost_gate: Option<T>,
    #[serde(default)]
    pub center_gate: CenterGate,
}

impl<T: Real> CsbaParams<T> {
    pub const DEFAULT_WEIGHTS: (f64, f64, f64) = (0.2, 0.5, 0.3);
    /// `lambda_max` as a multiple of the positional noise std.
    pub const LAMBDA_PER_STD: f64 = 6.0;

    pub fn new(w_ds: T, w_cs: T, w_os: T, lambda_max: T) -> Result<Self> {
        let p = Self {
            w_ds,
            w_cs,
            w_os,
            lambda_max,
            cost_gate: None,
            center_gate: CenterGate::default(),
        };
        p.validate()?;
        Ok(p)
    }

    /// Default weights with `lambda_max = 6 × std_position`.
    pub fn for_position_std(std_position: T) -> Result<Self> {
        let (a, b, c) = Self::DEFAULT_WEIGHTS;
        Self::new(
            T::lit(a),
            T::lit(b),
            T::lit(c),
            T::lit(Self::LAMBDA_PER_STD) * std_position,
        )
    }

    pub fn validate(&self) -> Result<()> {
        let w = [self.w_ds, self.w_cs, self.w_os];
        if w.iter().any(|x| !x.is_finite() || *x < T::zero()) {
            return Err(invalid("CSBA weights must be finite and non-negative"));
        }
        if w.iter().copied().sum::<T>() <= T::zero() {
            return Err(invalid("CSBA weights must not all be zero"));
        }
        if !self.lambda_max.is_finite() || self.lambda_max <= T::zero() {
            return Err(invalid(format!(
                "lambda_max must be positive, got {}",
                self.lambda_max
            )));
        }
        if let Some(g) = self.cost_gate {
            if !(g >= T::zero() && g <= T::one()) {
                return Err(invalid(format!("cost_gate {g} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

/// First-order volume standard deviation from the extent variances.
pub fn volume_sigma<T: Real>(d: &Detection<T>) -> T {
    let b = &d.bbox;
    let rel = d.cov.var_l() / (b.l * b.l) + d.cov.var_w() / (b.w * b.w) + d.cov.var_h() / (b.h * b.h);
    b.volume() * rel.sqrt()
}

/// Volume-ratio agreement in `(0, 1]`.
///
/// The ratio is always taken larger-over-smaller volume, so the score does
/// not depend on argument order. The inverse ratio reuses the ratio's
/// standard deviation.
pub fn dimension_score<T: Real>(a: &Detection<T>, b: &Detection<T>) -> Result<T> {
    let (va, vb) = (a.bbox.volume(), b.bbox.volume());
    if !(va > T::zero() && vb > T::zero()) || !va.is_finite() || !vb.is_finite() {
        return Err(invalid("dimension score needs positive finite volumes"));
    }
    let (sa, sb) = (volume_sigma(a), volume_sigma(b));
    let ((v1, s1), (v2, s2)) = if va >= vb {
        ((va, sa), (vb, sb))
    } else {
        ((vb, sb), (va, sa))
    };
    Ok(dimension_score_from_volumes(v1, s1, v2, s2))
}

/// Dimension score for explicit volumes and their standard deviations, with
/// `r = v1 / v2`.
pub fn dimension_score_from_volumes<T: Real>(v1: T, sigma1: T, v2: T, sigma2: T) -> T {
    let r = v1 / v2;
    let sigma_r = r * ((sigma1 / v1).powi(2) + (sigma2 / v2).powi(2)).sqrt();
    let z = (r - T::one()) / sigma_r;
    let z_inv = (r.recip() - T::one()) / sigma_r;
    let m = (z * z).min(z_inv * z_inv);
    if m.is_nan() {
        // Zero spread with identical volumes.
        return T::one();
    }
    (-m / T::lit(2.0)).exp()
}

/// `sqrt(Δᵀ Σ⁻¹ Δ)` for symmetric positive definite `sigma`, via Cholesky.
/// `None` if `sigma` is not positive definite.
pub fn mahalanobis_distance<T: Real>(pa: [T; 3], pb: [T; 3], sigma: [[T; 3]; 3]) -> Option<T> {
    let d = [pa[0] - pb[0], pa[1] - pb[1], pa[2] - pb[2]];
    let mut l = [[T::zero(); 3]; 3];
    for i in 0..3 {
        for j in 0..=i {
            let mut s = sigma[i][j];
            for k in 0..j {
                s -= l[i][k] * l[j][k];
            }
            if i == j {
                if !(s > T::zero()) {
                    return None;
                }
                l[i][i] = s.sqrt();
            } else {
                l[i][j] = s / l[j][j];
            }
        }
    }
    // Forward substitution: L y = d, d_M² = |y|².
    let mut y = [T::zero(); 3];
    for i in 0..3 {
        let mut s = d[i];
        for k in 0..i {
            s -= l[i][k] * y[k];
        }
        y[i] = s / l[i][i];
    }
    Some((y[0] * y[0] + y[1] * y[1] + y[2] * y[2]).sqrt())
}

fn combined_position_cov<T: Real>(a: &Detection<T>, b: &Detection<T>) -> [[T; 3]; 3] {
    let (pa, pb) = (a.cov.position_block(), b.cov.position_block());
    let mut s = pa;
    for i in 0..3 {
        for j in 0..3 {
            s[i][j] += pb[i][j];
        }
    }
    s
}

/// `1 - d_M / lambda_max` with Σ the sum of both position covariances.
/// Unbounded below; negative once the Mahalanobis distance exceeds
/// `lambda_max`.
pub fn center_score<T: Real>(a: &Detection<T>, b: &Detection<T>, lambda_max: T) -> T {
    let sigma = combined_position_cov(a, b);
    let dm = mahalanobis_distance(a.bbox.center(), b.bbox.center(), sigma)
        .expect("positive variances give a positive definite sum");
    T::one() - dm / lambda_max
}

/// `(1 + cos(θa/σa − θb/σb)) / 2`, yaws in radians.
pub fn orientation_score<T: Real>(a: &Detection<T>, b: &Detection<T>) -> T {
    let alpha_a = a.bbox.theta / a.cov.var_theta().sqrt();
    let alpha_b = b.bbox.theta / b.cov.var_theta().sqrt();
    (T::one() + (alpha_a - alpha_b).cos()) / T::lit(2.0)
}

/// Weighted association cost in `[0, 1]`, or `None` when the pair is
/// forbidden (category mismatch, beyond the distance gate, or above the
/// optional cost gate). The center score is clamped to `[0, 1]` before
/// weighting.
pub fn pair_cost<T: Real>(a: &Detection<T>, b: &Detection<T>, p: &CsbaParams<T>) -> Result<Option<T>> {
    if a.category != b.category {
        return Ok(None);
    }
    let cs = center_score(a, b, p.lambda_max);
    let gated = match p.center_gate {
        CenterGate::Euclidean => a.bbox.center_distance(&b.bbox) > p.lambda_max,
        CenterGate::Mahalanobis => cs < T::zero(),
    };
    if gated {
        return Ok(None);
    }
    let ds = dimension_score(a, b)?;
    let os = orientation_score(a, b);
    let cost = combine_scores(ds, cs.max(T::zero()).min(T::one()), os, p);
    if p.cost_gate.is_some_and(|g| cost > g) {
        return Ok(None);
    }
    Ok(Some(cost))
}

/// Weighted mean of `1 - score` over the three scores.
pub fn combine_scores<T: Real>(ds: T, cs: T, os: T, p: &CsbaParams<T>) -> T {
    let num = p.w_ds * (T::one() - ds) + p.w_cs * (T::one() - cs) + p.w_os * (T::one() - os);
    num / (p.w_ds + p.w_cs + p.w_os)
}

/// Cost matrix between two detection sets.
pub fn cost_matrix<T: Real>(
    set_a: &[Detection<T>],
    set_b: &[Detection<T>],
    p: &CsbaParams<T>,
) -> Result<CostMatrix<T>> {
    let mut cells = Vec::with_capacity(set_a.len() * set_b.len());
    for a in set_a {
        for b in set_b {
            cells.push(pair_cost(a, b, p)?);
        }
    }
    CostMatrix::from_fn(set_a.len(), set_b.len(), |i, j| cells[i * set_b.len() + j])
}

/// Associates two detection sets; rows index `set_a`, columns `set_b`.
pub fn associate_pairwise<T: Real>(
    set_a: &[Detection<T>],
    set_b: &[Detection<T>],
    p: &CsbaParams<T>,
) -> Result<AssignmentResult<T>> {
    Ok(solve_assignment(&cost_matrix(set_a, set_b, p)?))
}

/// A detection inside an association group, with its provenance.
#[derive(Debug, Clone)]
pub struct Member<'a, T> {
    pub source: SourceRef,
    pub detection: &'a Detection<T>,
}

/// Sequential pairwise association across agents in ascending id order.
///
/// Groups start as singletons of the first agent. Each following agent is
/// associated against the current groups' fused representatives; matches
/// extend a group and unmatched detections open new groups.
pub fn associate_multi<'a, T: Real>(
    agents: &[(AgentId, &'a [Detection<T>])],
    p: &CsbaParams<T>,
) -> Result<Vec<Vec<Member<'a, T>>>> {
    p.validate()?;
    let mut order: Vec<&(AgentId, &'a [Detection<T>])> = agents.iter().collect();
    order.sort_by_key(|(id, _)| *id);

    let mut groups: Vec<Vec<Member<'a, T>>> = Vec::new();
    let mut reps: Vec<Detection<T>> = Vec::new();
    for (agent, dets) in order {
        let members = dets.iter().enumerate().map(|(index, d)| Member {
            source: SourceRef {
                agent_id: *agent,
                index,
                gt_id: d.gt_id.clone(),
            },
            detection: d,
        });
        if groups.is_empty() {
            for m in members {
                reps.push(m.detection.clone());
                groups.push(vec![m]);
            }
            continue;
        }
        let result = associate_pairwise(&reps, dets, p)?;
        let mut target = vec![None; dets.len()];
        for &(g, j) in &result.matches {
            target[j] = Some(g);
        }
        for (m, t) in members.zip(target) {
            match t {
                Some(g) => groups[g].push(m),
                None => {
                    reps.push(m.detection.clone());
                    groups.push(vec![m]);
                }
            }
        }
        for &(g, _) in &result.matches {
            reps[g] = wls_fuse(&groups[g])?.as_detection();
        }
    }
    Ok(groups)
}

/// Default sliding window width, seconds.
pub const DEFAULT_WINDOW: f64 = 0.1;

/// Splits a detection stream into consecutive windows of width `delta_t`,
/// each anchored at the earliest timestamp not yet consumed. A detection at
/// exactly `anchor + delta_t` still belongs to the window.
pub fn window_group<T: Real>(mut stream: Vec<Detection<T>>, delta_t: T) -> Vec<Frame<T>> {
    stream.sort_by(|a, b| a.timestamp.partial_cmp(&b.timestamp).expect("finite timestamps"));
    let mut frames = Vec::new();
    let mut iter = stream.into_iter().peekable();
    while let Some(first) = iter.next() {
        let anchor = first.timestamp;
        let mut frame = Frame::new(anchor);
        frame.agents.entry(first.agent_id).or_default().push(first);
        while let Some(d) = iter.next_if(|d| d.timestamp - anchor <= delta_t) {
            frame.agents.entry(d.agent_id).or_default().push(d);
        }
        frames.push(frame);
    }
    frames
}
