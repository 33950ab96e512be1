//! Weighted-least-squares merging of associated detections.
//!
//! With diagonal covariances the estimate separates per component: each of
//! `x, y, z, l, w, h` is an inverse-variance weighted mean and its fused
//! variance is `1 / Σ 1/var`. Yaw uses the same formula in a chart centered
//! on a reference member, so the ±π seam does not split the average.

use std::cmp::Ordering;
use std::collections::HashMap;

use crate::association::{associate_multi, CsbaParams, Member};
use crate::error::{invalid, Result};
use crate::scalar::Real;
use crate::types::{angle_diff, wrap_angle, BBox3D, Detection, DiagCovariance7, Frame, FusedObject, GtId, SourceRef};

/// Fuses one association group.
///
/// A single member passes through unchanged. Otherwise members are put in a
/// canonical order first, so the result does not depend on input order; the
/// first member of that order anchors the offsets and the yaw chart. The
/// `sources` list keeps the input order.
pub fn wls_fuse<T: Real>(group: &[Member<'_, T>]) -> Result<FusedObject<T>> {
    let first = group
        .first()
        .ok_or_else(|| invalid("cannot fuse an empty group"))?;
    let category = first.detection.category;
    if group.iter().any(|m| m.detection.category != category) {
        return Err(invalid("group mixes categories"));
    }
    if group.len() == 1 {
        let mut f = FusedObject::singleton(first.detection, first.source.index);
        f.sources = vec![first.source.clone()];
        return Ok(f);
    }

    let mut order: Vec<&Detection<T>> = group.iter().map(|m| m.detection).collect();
    order.sort_by(|a, b| canonical_cmp(a, b));
    let anchor = order[0];
    let a0 = anchor.bbox.to_array();

    let mut info = [T::zero(); 7];
    let mut acc = [T::zero(); 7];
    let mut t_info = T::zero();
    let mut t_acc = T::zero();
    let mut min_var = anchor.cov.as_array();
    for d in &order {
        let y = d.bbox.to_array();
        let v = d.cov.as_array();
        let mut w_sum = T::zero();
        for c in 0..7 {
            let w = v[c].recip();
            let offset = if c == 6 { angle_diff(y[6], a0[6]) } else { y[c] - a0[c] };
            info[c] += w;
            acc[c] += w * offset;
            w_sum += w;
            if v[c] < min_var[c] {
                min_var[c] = v[c];
            }
        }
        t_info += w_sum;
        t_acc += w_sum * (d.timestamp - anchor.timestamp);
    }

    let mut state = [T::zero(); 7];
    let mut vars = [T::zero(); 7];
    for c in 0..7 {
        state[c] = a0[c] + acc[c] / info[c];
        vars[c] = info[c].recip().min(min_var[c]);
    }
    state[6] = wrap_angle(state[6]);

    let confidence = order
        .iter()
        .map(|d| d.confidence)
        .fold(T::zero(), |m, c| m.max(c));
    Ok(FusedObject {
        bbox: BBox3D::from_array(state)?,
        cov: DiagCovariance7::clamped(vars)?,
        category,
        sources: group.iter().map(|m| m.source.clone()).collect(),
        timestamp: anchor.timestamp + t_acc / t_info,
        confidence,
    })
}

/// Total order over detection states used to make fusion order-independent.
fn canonical_cmp<T: Real>(a: &Detection<T>, b: &Detection<T>) -> Ordering {
    let key = |d: &Detection<T>| {
        let mut k = d.bbox.to_array().to_vec();
        k.extend(d.cov.as_array());
        k.push(d.timestamp);
        k.push(d.confidence);
        k
    };
    key(a)
        .iter()
        .zip(key(b).iter())
        .map(|(x, y)| x.partial_cmp(y).unwrap_or(Ordering::Equal))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

/// Fuses plain detections; each source index is the detection's position in
/// `dets`.
pub fn wls_fuse_detections<T: Real>(dets: &[Detection<T>]) -> Result<FusedObject<T>> {
    let members: Vec<Member<'_, T>> = dets
        .iter()
        .enumerate()
        .map(|(index, d)| Member {
            source: SourceRef {
                agent_id: d.agent_id,
                index,
                gt_id: d.gt_id.clone(),
            },
            detection: d,
        })
        .collect();
    wls_fuse(&members)
}

/// Associates a frame across agents and fuses every group. Unmatched
/// detections come out as singletons with their own covariance.
pub fn fuse_frame<T: Real>(frame: &Frame<T>, p: &CsbaParams<T>) -> Result<Vec<FusedObject<T>>> {
    let groups = associate_multi(&frame.agent_slices(), p)?;
    groups.iter().map(|g| wls_fuse(g)).collect()
}

/// Groups detections by their ground-truth id across agents and fuses each
/// group, in order of first appearance.
pub fn gt_assoc_fuse<T: Real>(frame: &Frame<T>) -> Result<Vec<FusedObject<T>>> {
    let mut slot: HashMap<GtId, usize> = HashMap::new();
    let mut groups: Vec<Vec<Member<'_, T>>> = Vec::new();
    for (source, detection) in frame.iter_sources() {
        let id = detection.gt_id.clone().ok_or_else(|| {
            invalid(format!(
                "detection {} of agent {} has no gt_id",
                source.index, source.agent_id
            ))
        })?;
        let g = *slot.entry(id).or_insert_with(|| {
            groups.push(Vec::new());
            groups.len() - 1
        });
        groups[g].push(Member { source, detection });
    }
    groups.iter().map(|g| wls_fuse(g)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{AgentId, Category};
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn det(state: [f64; 7], vars: [f64; 7], agent: u32) -> Detection<f64> {
        Detection::new(
            BBox3D::from_array(state).unwrap(),
            DiagCovariance7::new(vars).unwrap(),
            Category::Car,
            AgentId(agent),
            0.0,
            0.7,
        )
        .unwrap()
    }

    #[test]
    fn single_member_passes_through() {
        let d = det([1.0, 2.0, 0.5, 4.0, 2.0, 1.5, 0.3], [0.3; 7], 1);
        let f = wls_fuse_detections(std::slice::from_ref(&d)).unwrap();
        assert_eq!(f.bbox, d.bbox);
        assert_eq!(f.cov, d.cov);
        assert_eq!(f.sources.len(), 1);
    }

    #[test]
    fn scalar_hand_example() {
        let mut v1 = [1.0; 7];
        let mut v2 = [1.0; 7];
        v1[0] = 1.0;
        v2[0] = 4.0;
        let a = det([0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0], v1, 1);
        let b = det([2.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0], v2, 2);
        let f = wls_fuse_detections(&[a, b]).unwrap();
        assert_relative_eq!(f.bbox.x, 0.4, epsilon = 1e-12);
        assert_relative_eq!(f.cov.var_x(), 0.8, epsilon = 1e-12);
    }

    #[test]
    fn equal_covariance_means_and_halves() {
        let a = det([0.0, 1.0, 2.0, 4.0, 2.0, 1.0, 0.2], [0.5; 7], 1);
        let b = det([1.0, 3.0, 2.5, 5.0, 2.2, 1.4, 0.4], [0.5; 7], 2);
        let f = wls_fuse_detections(&[a, b]).unwrap();
        let expect = [0.5, 2.0, 2.25, 4.5, 2.1, 1.2, 0.3];
        for (got, want) in f.bbox.to_array().iter().zip(expect) {
            assert_relative_eq!(*got, want, epsilon = 1e-12);
        }
        for v in f.cov.as_array() {
            assert_relative_eq!(v, 0.25, epsilon = 1e-12);
        }
    }

    #[test]
    fn yaw_across_seam() {
        let a = det([0.0, 0.0, 0.0, 1.0, 1.0, 1.0, PI - 0.01], [1.0; 7], 1);
        let b = det([0.0, 0.0, 0.0, 1.0, 1.0, 1.0, -PI + 0.01], [1.0; 7], 2);
        let f = wls_fuse_detections(&[a.clone(), b.clone()]).unwrap();
        assert_relative_eq!(f.bbox.theta.abs(), PI, epsilon = 1e-9);
        let g = wls_fuse_detections(&[b, a]).unwrap();
        assert_eq!(f.bbox, g.bbox);
    }

    #[test]
    fn copies_are_a_fixed_point() {
        let d = det([3.3, -1.7, 0.9, 4.4, 1.8, 1.6, -2.9], [0.21, 0.22, 0.23, 0.01, 0.02, 0.03, 0.004], 1);
        let copies = vec![d.clone(), d.clone(), d.clone()];
        let f = wls_fuse_detections(&copies).unwrap();
        assert_eq!(f.bbox, d.bbox);
        for (fv, dv) in f.cov.as_array().iter().zip(d.cov.as_array()) {
            assert_relative_eq!(*fv, dv / 3.0, max_relative = 1e-12);
        }
    }

    #[test]
    fn errors() {
        assert!(wls_fuse_detections::<f64>(&[]).is_err());
        let a = det([0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0], [1.0; 7], 1);
        let mut b = a.clone();
        b.category = Category::Bus;
        assert!(wls_fuse_detections(&[a, b]).is_err());
    }

    #[test]
    fn timestamp_weighted_by_information() {
        let mut a = det([0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0], [1.0; 7], 1);
        let mut b = det([0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0], [0.5; 7], 2);
        a.timestamp = 0.0;
        b.timestamp = 0.3;
        let f = wls_fuse_detections(&[a, b]).unwrap();
        assert_relative_eq!(f.timestamp, 0.2, epsilon = 1e-12);
    }

    #[test]
    fn gt_assoc_groups_by_id() {
        let mk = |x: f64, agent: u32, id: &str| det([x, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0], [1.0; 7], agent).with_gt_id(id);
        let frame = Frame::from_detections(
            0.0,
            vec![mk(0.0, 1, "a"), mk(10.0, 1, "b"), mk(0.2, 2, "a")],
        );
        let out = gt_assoc_fuse(&frame).unwrap();
        assert_eq!(out.len(), 2);
        assert_eq!(out[0].sources.len(), 2);
        assert_relative_eq!(out[0].bbox.x, 0.1, epsilon = 1e-12);
        assert_eq!(out[1].sources.len(), 1);

        let bare = Frame::from_detections(0.0, vec![det([0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0], [1.0; 7], 1)]);
        assert!(gt_assoc_fuse(&bare).is_err());
    }

    #[test]
    fn fuse_frame_single_agent_is_identity() {
        let p = CsbaParams::for_position_std(0.5).unwrap();
        let dets = vec![
            det([0.0, 0.0, 0.0, 4.0, 2.0, 1.5, 0.0], [0.25; 7], 1),
            det([20.0, 0.0, 0.0, 4.0, 2.0, 1.5, 0.0], [0.25; 7], 1),
        ];
        let out = fuse_frame(&Frame::from_detections(0.0, dets.clone()), &p).unwrap();
        assert_eq!(out.len(), 2);
        for (o, d) in out.iter().zip(&dets) {
            assert_eq!(o.bbox, d.bbox);
            assert_eq!(o.cov, d.cov);
        }
    }

    #[test]
    fn fuse_frame_keeps_unshared_object() {
        let p = CsbaParams::for_position_std(0.5).unwrap();
        let dets = vec![
            det([0.0, 0.0, 0.0, 4.0, 2.0, 1.5, 0.0], [0.25; 7], 1),
            det([20.0, 0.0, 0.0, 4.0, 2.0, 1.5, 0.0], [0.25; 7], 1),
            det([0.3, 0.1, 0.0, 4.1, 2.0, 1.5, 0.02], [0.25; 7], 2),
        ];
        let out = fuse_frame(&Frame::from_detections(0.0, dets), &p).unwrap();
        assert_eq!(out.len(), 2);
        assert_eq!(out[0].sources.len(), 2);
        assert_eq!(out[1].sources.len(), 1);
    }
}
