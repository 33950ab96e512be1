//! Comparison late-fusion methods: overlap-based suppression (IoU and GIoU
//! NMS), weighted box fusion, and two distance-associated late schemes
//! (keep the box closest to its sensor, or average the associated boxes).
//!
//! Every method takes a whole frame with all agents pooled and never merges
//! boxes of different categories.

use std::collections::BTreeMap;

use crate::assignment::{solve_assignment, CostMatrix};
use crate::association::Member;
use crate::error::{invalid, Error, Result};
use crate::geometry::{giou_3d, iou_3d};
use crate::scalar::Real;
use crate::types::{angle_diff, wrap_angle, AgentId, BBox3D, Detection, Frame, FusedObject};

pub const DEFAULT_IOU_THRESHOLD: f64 = 0.5;
pub const DEFAULT_GIOU_THRESHOLD: f64 = 0.0;
pub const DEFAULT_DISTANCE_THRESHOLD: f64 = 3.0;

fn pooled<T: Real>(frame: &Frame<T>) -> Vec<Member<'_, T>> {
    frame
        .iter_sources()
        .map(|(source, detection)| Member { source, detection })
        .collect()
}

/// Stable sort by confidence, highest first.
fn by_confidence<T: Real>(members: &mut [Member<'_, T>]) {
    members.sort_by(|a, b| {
        b.detection
            .confidence
            .partial_cmp(&a.detection.confidence)
            .expect("confidence is finite")
    });
}

fn pass_through<T: Real>(m: &Member<'_, T>) -> FusedObject<T> {
    let mut f = FusedObject::singleton(m.detection, m.source.index);
    f.sources = vec![m.source.clone()];
    f
}

fn greedy_nms<T: Real>(
    frame: &Frame<T>,
    threshold: T,
    overlap: impl Fn(&BBox3D<T>, &BBox3D<T>) -> T,
) -> Vec<FusedObject<T>> {
    let mut pool = pooled(frame);
    by_confidence(&mut pool);
    let mut suppressed = vec![false; pool.len()];
    let mut kept = Vec::new();
    for i in 0..pool.len() {
        if suppressed[i] {
            continue;
        }
        let top = &pool[i];
        for j in i + 1..pool.len() {
            let other = pool[j].detection;
            if !suppressed[j]
                && other.category == top.detection.category
                && overlap(&top.detection.bbox, &other.bbox) >= threshold
            {
                suppressed[j] = true;
            }
        }
        kept.push(pass_through(top));
    }
    kept
}

/// Greedy NMS with 3D IoU as the suppression test.
pub fn nms_std_3d<T: Real>(frame: &Frame<T>, iou_thresh: T) -> Result<Vec<FusedObject<T>>> {
    if !(iou_thresh >= T::zero() && iou_thresh <= T::one()) {
        return Err(invalid(format!("iou threshold {iou_thresh} outside [0, 1]")));
    }
    Ok(greedy_nms(frame, iou_thresh, iou_3d))
}

/// Greedy NMS with 3D GIoU as the suppression test; the threshold may be
/// negative.
pub fn nms_giou_3d<T: Real>(frame: &Frame<T>, giou_thresh: T) -> Result<Vec<FusedObject<T>>> {
    if !(giou_thresh >= -T::one() && giou_thresh <= T::one()) {
        return Err(invalid(format!("giou threshold {giou_thresh} outside [-1, 1]")));
    }
    Ok(greedy_nms(frame, giou_thresh, giou_3d))
}

/// Weighted mean of all seven components with yaw rebased on the first
/// member. Covariance is the componentwise minimum of the members and the
/// confidence their plain mean.
fn weighted_mean<T: Real>(members: &[Member<'_, T>], weights: &[T]) -> Result<FusedObject<T>> {
    let first = members[0].detection;
    let a0 = first.bbox.to_array();
    let mut acc = [T::zero(); 7];
    let mut t_acc = T::zero();
    let mut w_sum = T::zero();
    let mut cov = first.cov;
    let mut conf = T::zero();
    for (m, &w) in members.iter().zip(weights) {
        let y = m.detection.bbox.to_array();
        for c in 0..7 {
            let off = if c == 6 { angle_diff(y[6], a0[6]) } else { y[c] - a0[c] };
            acc[c] += w * off;
        }
        t_acc += w * (m.detection.timestamp - first.timestamp);
        w_sum += w;
        cov = cov.min(&m.detection.cov);
        conf += m.detection.confidence;
    }
    let mut state = [T::zero(); 7];
    for c in 0..7 {
        state[c] = a0[c] + acc[c] / w_sum;
    }
    state[6] = wrap_angle(state[6]);
    Ok(FusedObject {
        bbox: BBox3D::from_array(state)?,
        cov,
        category: first.category,
        sources: members.iter().map(|m| m.source.clone()).collect(),
        timestamp: first.timestamp + t_acc / w_sum,
        confidence: conf / T::lit(members.len() as f64),
    })
}

fn confidence_weighted<T: Real>(members: &[Member<'_, T>]) -> Result<FusedObject<T>> {
    let w: Vec<T> = members.iter().map(|m| m.detection.confidence).collect();
    if w.iter().copied().sum::<T>() > T::zero() {
        weighted_mean(members, &w)
    } else {
        weighted_mean(members, &vec![T::one(); members.len()])
    }
}

/// Weighted box fusion: boxes, taken by descending confidence, join the
/// same-category cluster whose current fused box overlaps them most (IoU at
/// least `iou_thresh`), otherwise they open a new cluster. Each cluster is the
/// confidence-weighted mean of its members.
pub fn wbf_3d<T: Real>(frame: &Frame<T>, iou_thresh: T) -> Result<Vec<FusedObject<T>>> {
    if !(iou_thresh >= T::zero() && iou_thresh <= T::one()) {
        return Err(invalid(format!("iou threshold {iou_thresh} outside [0, 1]")));
    }
    let mut pool = pooled(frame);
    by_confidence(&mut pool);
    let mut clusters: Vec<Vec<Member<'_, T>>> = Vec::new();
    let mut fused: Vec<FusedObject<T>> = Vec::new();
    for m in pool {
        let mut best: Option<(usize, T)> = None;
        for (k, f) in fused.iter().enumerate() {
            if f.category != m.detection.category {
                continue;
            }
            let iou = iou_3d(&f.bbox, &m.detection.bbox);
            if iou >= iou_thresh && best.is_none_or(|(_, b)| iou > b) {
                best = Some((k, iou));
            }
        }
        match best {
            Some((k, _)) => {
                clusters[k].push(m);
                fused[k] = confidence_weighted(&clusters[k])?;
            }
            None => {
                fused.push(pass_through(&m));
                clusters.push(vec![m]);
            }
        }
    }
    Ok(fused)
}

/// Chains agents in ascending id order, matching each agent's boxes to the
/// current group representatives by center distance (optimal assignment,
/// pairs beyond `dist_thresh` or across categories forbidden).
fn distance_groups<'a, T: Real>(
    frame: &'a Frame<T>,
    dist_thresh: T,
    mut representative: impl FnMut(&[Member<'a, T>]) -> Result<Detection<T>>,
) -> Result<Vec<Vec<Member<'a, T>>>> {
    if !dist_thresh.is_finite() || dist_thresh < T::zero() {
        return Err(invalid(format!("distance threshold {dist_thresh} must be >= 0")));
    }
    let mut groups: Vec<Vec<Member<'a, T>>> = Vec::new();
    let mut reps: Vec<Detection<T>> = Vec::new();
    for (agent, dets) in &frame.agents {
        let members: Vec<Member<'a, T>> = dets
            .iter()
            .enumerate()
            .map(|(index, d)| Member {
                source: crate::types::SourceRef {
                    agent_id: *agent,
                    index,
                    gt_id: d.gt_id.clone(),
                },
                detection: d,
            })
            .collect();
        let cost = CostMatrix::from_fn(reps.len(), dets.len(), |i, j| {
            let (r, d) = (&reps[i], &dets[j]);
            let dist = r.bbox.center_distance(&d.bbox);
            (r.category == d.category && dist <= dist_thresh).then_some(dist)
        })?;
        let result = solve_assignment(&cost);
        let mut target = vec![None; dets.len()];
        for &(g, j) in &result.matches {
            target[j] = Some(g);
        }
        for (m, t) in members.into_iter().zip(target) {
            match t {
                Some(g) => groups[g].push(m),
                None => {
                    reps.push(m.detection.clone());
                    groups.push(vec![m]);
                }
            }
        }
        for &(g, _) in &result.matches {
            reps[g] = representative(&groups[g])?;
        }
    }
    Ok(groups)
}

fn nearest_to_sensor<'g, 'a, T: Real>(
    group: &'g [Member<'a, T>],
    sensors: &BTreeMap<AgentId, [T; 3]>,
) -> &'g Member<'a, T> {
    let range = |m: &Member<'a, T>| {
        let s = sensors[&m.source.agent_id];
        let c = m.detection.bbox.center();
        ((c[0] - s[0]).powi(2) + (c[1] - s[1]).powi(2) + (c[2] - s[2]).powi(2)).sqrt()
    };
    group
        .iter()
        .min_by(|a, b| range(a).partial_cmp(&range(b)).expect("finite range"))
        .expect("groups are non-empty")
}

/// Distance-associated late fusion that keeps, per group, the box nearest to
/// the sensor of the agent that reported it.
pub fn late_closest_to_sensor<T: Real>(
    frame: &Frame<T>,
    dist_thresh: T,
    sensor_positions: &BTreeMap<AgentId, [T; 3]>,
) -> Result<Vec<FusedObject<T>>> {
    if let Some(a) = frame.agents.keys().find(|a| !sensor_positions.contains_key(a)) {
        return Err(Error::Config(format!("no sensor position for agent {a}")));
    }
    let groups = distance_groups(frame, dist_thresh, |g| {
        Ok(nearest_to_sensor(g, sensor_positions).detection.clone())
    })?;
    Ok(groups
        .iter()
        .map(|g| pass_through(nearest_to_sensor(g, sensor_positions)))
        .collect())
}

/// Distance-associated late fusion that outputs the unweighted mean of each
/// group.
pub fn late_average<T: Real>(frame: &Frame<T>, dist_thresh: T) -> Result<Vec<FusedObject<T>>> {
    let mean = |g: &[Member<'_, T>]| weighted_mean(g, &vec![T::one(); g.len()]);
    let groups = distance_groups(frame, dist_thresh, |g| Ok(mean(g)?.as_detection()))?;
    groups
        .iter()
        .map(|g| if g.len() == 1 { Ok(pass_through(&g[0])) } else { mean(g) })
        .collect()
}
