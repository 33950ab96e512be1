//! Domain types shared by association, fusion, baselines and evaluation.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::scalar::Real;

/// Smallest variance accepted by [`DiagCovariance7::clamped`], in each
/// component's natural unit (m² or rad²).
pub const VARIANCE_FLOOR: f64 = 1e-9;

/// Wraps an angle into `(-π, π]`.
pub fn normalize_yaw<T: Real>(theta: T) -> Result<T> {
    if !theta.is_finite() {
        return Err(invalid(format!("yaw must be finite, got {theta}")));
    }
    Ok(wrap_angle(theta))
}

/// Infallible variant of [`normalize_yaw`] for values already known finite.
#[inline]
pub fn wrap_angle<T: Real>(theta: T) -> T {
    let two_pi = T::TAU();
    let mut r = theta % two_pi;
    if r > T::PI() {
        r -= two_pi;
    } else if r <= -T::PI() {
        r += two_pi;
    }
    r
}

/// Minimal signed difference `a - b`, wrapped into `(-π, π]`.
#[inline]
pub fn angle_diff<T: Real>(a: T, b: T) -> T {
    wrap_angle(a - b)
}

/// 7-DoF yaw-only oriented box in the shared map frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox3D<T> {
    pub x: T,
    pub y: T,
    pub z: T,
    pub l: T,
    pub w: T,
    pub h: T,
    pub theta: T,
}

impl<T: Real> BBox3D<T> {
    /// Builds a validated box; `theta` is normalized into `(-π, π]`.
    pub fn new(x: T, y: T, z: T, l: T, w: T, h: T, theta: T) -> Result<Self> {
        let b = Self {
            x,
            y,
            z,
            l,
            w,
            h,
            theta: normalize_yaw(theta)?,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.to_array().iter().all(|v| v.is_finite()) {
            return Err(invalid("box fields must be finite"));
        }
        if self.l <= T::zero() || self.w <= T::zero() || self.h <= T::zero() {
            return Err(invalid(format!(
                "box extents must be positive, got l={} w={} h={}",
                self.l, self.w, self.h
            )));
        }
        if self.theta > T::PI() || self.theta <= -T::PI() {
            return Err(invalid(format!("yaw {} outside (-pi, pi]", self.theta)));
        }
        Ok(())
    }

    pub fn volume(&self) -> T {
        self.l * self.w * self.h
    }

    pub fn center(&self) -> [T; 3] {
        [self.x, self.y, self.z]
    }

    pub fn size(&self) -> [T; 3] {
        [self.l, self.w, self.h]
    }

    /// Components in state order `(x, y, z, l, w, h, theta)`.
    pub fn to_array(&self) -> [T; 7] {
        [self.x, self.y, self.z, self.l, self.w, self.h, self.theta]
    }

    pub fn from_array(a: [T; 7]) -> Result<Self> {
        Self::new(a[0], a[1], a[2], a[3], a[4], a[5], a[6])
    }

    pub fn center_distance(&self, other: &Self) -> T {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        let dz = self.z - other.z;
        (dx * dx + dy * dy + dz * dz).sqrt()
    }
}

/// Volume `l·w·h` of a box.
pub fn box_volume<T: Real>(b: &BBox3D<T>) -> T {
    b.volume()
}

/// Diagonal covariance over `(x, y, z, l, w, h, theta)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[T; 7]", into = "[T; 7]", bound = "T: Real")]
pub struct DiagCovariance7<T> {
    vars: [T; 7],
}

impl<T: Real> DiagCovariance7<T> {
    /// Rejects any variance that is not strictly positive and finite.
    pub fn new(vars: [T; 7]) -> Result<Self> {
        for (i, v) in vars.iter().enumerate() {
            if !v.is_finite() || *v <= T::zero() {
                return Err(invalid(format!(
                    "variance {} of component {} must be finite and > 0",
                    v, COMPONENT_NAMES[i]
                )));
            }
        }
        Ok(Self { vars })
    }

    /// Raises every variance to at least [`VARIANCE_FLOOR`]; negative or
    /// non-finite input is still rejected.
    pub fn clamped(vars: [T; 7]) -> Result<Self> {
        let floor = T::lit(VARIANCE_FLOOR);
        let mut out = vars;
        for (i, v) in out.iter_mut().enumerate() {
            if !v.is_finite() || *v < T::zero() {
                return Err(invalid(format!(
                    "variance {} of component {} must be finite and >= 0",
                    v, COMPONENT_NAMES[i]
                )));
            }
            if *v < floor {
                *v = floor;
            }
        }
        Ok(Self { vars: out })
    }

    /// Position, size and yaw standard deviations, clamped to the floor.
    pub fn from_std_devs(pos: T, size: T, yaw: T) -> Result<Self> {
        let (p, s, y) = (pos * pos, size * size, yaw * yaw);
        Self::clamped([p, p, p, s, s, s, y])
    }

    pub fn as_array(&self) -> [T; 7] {
        self.vars
    }

    pub fn get(&self, component: usize) -> T {
        self.vars[component]
    }

    pub fn var_x(&self) -> T {
        self.vars[0]
    }
    pub fn var_y(&self) -> T {
        self.vars[1]
    }
    pub fn var_z(&self) -> T {
        self.vars[2]
    }
    pub fn var_l(&self) -> T {
        self.vars[3]
    }
    pub fn var_w(&self) -> T {
        self.vars[4]
    }
    pub fn var_h(&self) -> T {
        self.vars[5]
    }
    pub fn var_theta(&self) -> T {
        self.vars[6]
    }

    /// Position block as a general 3×3 matrix.
    pub fn position_block(&self) -> [[T; 3]; 3] {
        let z = T::zero();
        [
            [self.vars[0], z, z],
            [z, self.vars[1], z],
            [z, z, self.vars[2]],
        ]
    }

    /// Componentwise minimum of two covariances.
    pub fn min(&self, other: &Self) -> Self {
        let mut vars = self.vars;
        for (v, o) in vars.iter_mut().zip(other.vars) {
            if o < *v {
                *v = o;
            }
        }
        Self { vars }
    }
}

impl<T: Real> TryFrom<[T; 7]> for DiagCovariance7<T> {
    type Error = crate::Error;

    fn try_from(vars: [T; 7]) -> Result<Self> {
        Self::new(vars)
    }
}

impl<T> From<DiagCovariance7<T>> for [T; 7] {
    fn from(c: DiagCovariance7<T>) -> Self {
        c.vars
    }
}

pub(crate) const COMPONENT_NAMES: [&str; 7] = ["x", "y", "z", "l", "w", "h", "theta"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Car,
    Truck,
    Bus,
    Pedestrian,
    Bicycle,
    Motorcycle,
    Other,
}

impl Category {
    pub const ALL: [Category; 7] = [
        Category::Car,
        Category::Truck,
        Category::Bus,
        Category::Pedestrian,
        Category::Bicycle,
        Category::Motorcycle,
        Category::Other,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Category::Car => "car",
            Category::Truck => "truck",
            Category::Bus => "bus",
            Category::Pedestrian => "pedestrian",
            Category::Bicycle => "bicycle",
            Category::Motorcycle => "motorcycle",
            Category::Other => "other",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct AgentId(pub u32);

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "A{}", self.0)
    }
}

/// Opaque ground-truth object identifier, present only in benchmark data.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GtId(pub String);

impl fmt::Display for GtId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for GtId {
    fn from(s: &str) -> Self {
        GtId(s.to_owned())
    }
}

/// One box reported by one agent.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection<T> {
    pub bbox: BBox3D<T>,
    pub cov: DiagCovariance7<T>,
    pub category: Category,
    pub agent_id: AgentId,
    pub timestamp: T,
    pub confidence: T,
    pub gt_id: Option<GtId>,
}

impl<T: Real> Detection<T> {
    pub fn new(
        bbox: BBox3D<T>,
        cov: DiagCovariance7<T>,
        category: Category,
        agent_id: AgentId,
        timestamp: T,
        confidence: T,
    ) -> Result<Self> {
        let d = Self {
            bbox,
            cov,
            category,
            agent_id,
            timestamp,
            confidence,
            gt_id: None,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn with_gt_id(mut self, gt_id: impl Into<GtId>) -> Self {
        self.gt_id = Some(gt_id.into());
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.bbox.validate()?;
        DiagCovariance7::new(self.cov.as_array())?;
        if !(self.confidence >= T::zero() && self.confidence <= T::one()) {
            return Err(invalid(format!(
                "confidence {} outside [0, 1]",
                self.confidence
            )));
        }
        if !self.timestamp.is_finite() || self.timestamp < T::zero() {
            return Err(invalid(format!(
                "timestamp {} must be finite and non-negative",
                self.timestamp
            )));
        }
        Ok(())
    }
}

impl From<String> for GtId {
    fn from(s: String) -> Self {
        GtId(s)
    }
}

/// Provenance of one detection that contributed to a fused output.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SourceRef {
    pub agent_id: AgentId,
    /// Position of the detection in its agent's list within the frame.
    pub index: usize,
    #[serde(default)]
    pub gt_id: Option<GtId>,
}

/// Output of any fusion method.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedObject<T> {
    pub bbox: BBox3D<T>,
    pub cov: DiagCovariance7<T>,
    pub category: Category,
    pub sources: Vec<SourceRef>,
    pub timestamp: T,
    pub confidence: T,
}

impl<T: Real> FusedObject<T> {
    /// Pass-through output for a detection that was not merged with anything.
    pub fn singleton(det: &Detection<T>, index: usize) -> Self {
        Self {
            bbox: det.bbox,
            cov: det.cov,
            category: det.category,
            sources: vec![SourceRef {
                agent_id: det.agent_id,
                index,
                gt_id: det.gt_id.clone(),
            }],
            timestamp: det.timestamp,
            confidence: det.confidence,
        }
    }

    /// View of the fused state as a detection, used as a group representative
    /// when chaining associations across agents.
    pub fn as_detection(&self) -> Detection<T> {
        Detection {
            bbox: self.bbox,
            cov: self.cov,
            category: self.category,
            agent_id: self.sources.first().map(|s| s.agent_id).unwrap_or_default(),
            timestamp: self.timestamp,
            confidence: self.confidence,
            gt_id: self.majority_gt_id(),
        }
    }

    /// Most frequent ground-truth id among the sources; ties resolve to the
    /// smallest id. `None` when no source carries one.
    pub fn majority_gt_id(&self) -> Option<GtId> {
        let mut counts: BTreeMap<&GtId, usize> = BTreeMap::new();
        for id in self.sources.iter().filter_map(|s| s.gt_id.as_ref()) {
            *counts.entry(id).or_default() += 1;
        }
        let best = counts.values().copied().max()?;
        counts
            .into_iter()
            .find(|(_, c)| *c == best)
            .map(|(id, _)| id.clone())
    }
}

/// Detections of all agents collected for one fusion step.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame<T> {
    pub timestamp: T,
    pub agents: BTreeMap<AgentId, Vec<Detection<T>>>,
}

impl<T: Real> Frame<T> {
    pub fn new(timestamp: T) -> Self {
        Self {
            timestamp,
            agents: BTreeMap::new(),
        }
    }

    /// Groups detections per agent, preserving their relative order.
    pub fn from_detections(timestamp: T, dets: impl IntoIterator<Item = Detection<T>>) -> Self {
        let mut frame = Self::new(timestamp);
        for d in dets {
            frame.agents.entry(d.agent_id).or_default().push(d);
        }
        frame
    }

    pub fn len(&self) -> usize {
        self.agents.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All detections with their provenance, agents in ascending id order.
    pub fn iter_sources(&self) -> impl Iterator<Item = (SourceRef, &Detection<T>)> {
        self.agents.iter().flat_map(|(agent, dets)| {
            dets.iter().enumerate().map(move |(index, d)| {
                (
                    SourceRef {
                        agent_id: *agent,
                        index,
                        gt_id: d.gt_id.clone(),
                    },
                    d,
                )
            })
        })
    }

    pub fn agent_slices(&self) -> Vec<(AgentId, &[Detection<T>])> {
        self.agents
            .iter()
            .map(|(a, d)| (*a, d.as_slice()))
            .collect()
    }
}

/// Ground-truth box with its stable identifier.
#[derive(Debug, Clone, PartialEq)]
pub struct GtObject<T> {
    pub bbox: BBox3D<T>,
    pub category: Category,
    pub gt_id: GtId,
    pub timestamp: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GtFrame<T> {
    pub timestamp: T,
    pub objects: Vec<GtObject<T>>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    #[test]
    fn normalize_yaw_examples() {
        assert_eq!(normalize_yaw(0.0f64).unwrap(), 0.0);
        assert_relative_eq!(normalize_yaw(3.0 * PI).unwrap(), PI, epsilon = 1e-12);
        assert_relative_eq!(normalize_yaw(-3.5 * PI).unwrap(), 0.5 * PI, epsilon = 1e-12);
        assert_relative_eq!(normalize_yaw(-PI).unwrap(), PI, epsilon = 1e-12);
        assert!(normalize_yaw(f64::NAN).is_err());
        assert!(normalize_yaw(f64::INFINITY).is_err());
    }

    #[test]
    fn box_volume_examples() {
        let b = |l, w, h| BBox3D::new(0.0, 0.0, 0.0, l, w, h, 0.0).unwrap();
        assert_eq!(box_volume(&b(1.0, 1.0, 1.0)), 1.0);
        assert_eq!(box_volume(&b(4.0, 2.0, 1.5)), 12.0);
        assert_eq!(box_volume(&b(2.0, 0.5, 1.0)), 1.0);
    }

    #[test]
    fn box_rejects_bad_extents() {
        assert!(BBox3D::new(0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 0.0).is_err());
        assert!(BBox3D::new(0.0, 0.0, 0.0, 1.0, -1.0, 1.0, 0.0).is_err());
        assert!(BBox3D::new(f64::NAN, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn covariance_rejects_zero_and_clamped_raises_it() {
        let mut v = [1.0f64; 7];
        v[6] = 0.0;
        assert!(DiagCovariance7::new(v).is_err());
        let c = DiagCovariance7::clamped(v).unwrap();
        assert_eq!(c.var_theta(), VARIANCE_FLOOR);
        v[2] = -1.0;
        assert!(DiagCovariance7::clamped(v).is_err());
    }

    #[test]
    fn detection_checks_confidence_and_timestamp() {
        let b = BBox3D::new(0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0).unwrap();
        let c = DiagCovariance7::new([1.0; 7]).unwrap();
        assert!(Detection::new(b, c, Category::Car, AgentId(1), 0.0, 1.0).is_ok());
        assert!(Detection::new(b, c, Category::Car, AgentId(1), 0.0, 1.5).is_err());
        assert!(Detection::new(b, c, Category::Car, AgentId(1), -0.1, 0.5).is_err());
    }

    #[test]
    fn majority_gt_id_breaks_ties_by_id() {
        let mut f = FusedObject::singleton(
            &Detection::new(
                BBox3D::new(0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0).unwrap(),
                DiagCovariance7::new([1.0; 7]).unwrap(),
                Category::Car,
                AgentId(1),
                0.0,
                1.0,
            )
            .unwrap()
            .with_gt_id("b"),
            0,
        );
        f.sources.push(SourceRef {
            agent_id: AgentId(2),
            index: 0,
            gt_id: Some("a".into()),
        });
        assert_eq!(f.majority_gt_id(), Some(GtId::from("a")));
    }

    proptest! {
        #[test]
        fn normalize_yaw_idempotent_and_congruent(t in -1e4f64..1e4) {
            let once = normalize_yaw(t).unwrap();
            prop_assert!(once > -PI && once <= PI);
            prop_assert_eq!(normalize_yaw(once).unwrap(), once);
            let k = ((t - once) / (2.0 * PI)).round();
            prop_assert!((t - once - k * 2.0 * PI).abs() < 1e-9);
        }

        #[test]
        fn volume_permutation_invariant(l in 0.01f64..20.0, w in 0.01f64..20.0, h in 0.01f64..20.0) {
            let v = |a, b, c| box_volume(&BBox3D::new(0.0, 0.0, 0.0, a, b, c, 0.0).unwrap());
            let base = v(l, w, h);
            for p in [v(l, h, w), v(w, l, h), v(w, h, l), v(h, l, w), v(h, w, l)] {
                prop_assert!((p - base).abs() <= 1e-12 * base);
            }
        }
    }
}
