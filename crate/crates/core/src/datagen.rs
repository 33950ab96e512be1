//! Pseudo-collaborative data: ground-truth scenes with constant-velocity
//! objects, and per-agent detection streams made by adding independent
//! Gaussian noise to that ground truth.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::io::{read_gt, write_detections, write_gt};
use crate::scalar::Real;
use crate::types::{
    normalize_yaw, AgentId, BBox3D, Category, Detection, DiagCovariance7, GtFrame, GtId, GtObject,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseLabel {
    Mild,
    Moderate,
    Large,
    Custom,
}

/// Per-attribute Gaussian noise standard deviations.
///
/// Yaw is held in radians; the serialized form uses degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NoiseConfigRepr", into = "NoiseConfigRepr")]
pub struct NoiseConfig {
    /// Meters, applied to each of x, y, z.
    pub std_pos: f64,
    /// Radians.
    pub std_yaw: f64,
    /// Meters, applied to each of l, w, h.
    pub std_scale: f64,
    pub label: NoiseLabel,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NoiseConfigRepr {
    std_pos: f64,
    std_yaw_deg: f64,
    std_scale: f64,
    #[serde(default = "custom")]
    label: NoiseLabel,
}

fn custom() -> NoiseLabel {
    NoiseLabel::Custom
}

impl TryFrom<NoiseConfigRepr> for NoiseConfig {
    type Error = Error;

    fn try_from(r: NoiseConfigRepr) -> Result<Self> {
        NoiseConfig::custom(r.std_pos, r.std_yaw_deg, r.std_scale).map(|mut n| {
            n.label = r.label;
            n
        })
    }
}

impl From<NoiseConfig> for NoiseConfigRepr {
    fn from(n: NoiseConfig) -> Self {
        Self {
            std_pos: n.std_pos,
            std_yaw_deg: n.std_yaw.to_degrees(),
            std_scale: n.std_scale,
            label: n.label,
        }
    }
}

impl NoiseConfig {
    /// Yaw std given in degrees.
    pub fn custom(std_pos: f64, std_yaw_deg: f64, std_scale: f64) -> Result<Self> {
        for v in [std_pos, std_yaw_deg, std_scale] {
            if !v.is_finite() || v < 0.0 {
                return Err(invalid(format!("noise std {v} must be finite and >= 0")));
            }
        }
        Ok(Self {
            std_pos,
            std_yaw: std_yaw_deg.to_radians(),
            std_scale,
            label: NoiseLabel::Custom,
        })
    }

    fn preset(label: NoiseLabel, pos: f64, yaw_deg: f64, scale: f64) -> Self {
        Self {
            std_pos: pos,
            std_yaw: yaw_deg.to_radians(),
            std_scale: scale,
            label,
        }
    }

    pub fn mild() -> Self {
        Self::preset(NoiseLabel::Mild, 0.5, 5.0, 0.1)
    }

    pub fn moderate() -> Self {
        Self::preset(NoiseLabel::Moderate, 1.5, 20.0, 0.5)
    }

    pub fn large() -> Self {
        Self::preset(NoiseLabel::Large, 3.0, 60.0, 1.0)
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "mild" => Ok(Self::mild()),
            "moderate" => Ok(Self::moderate()),
            "large" => Ok(Self::large()),
            other => Err(Error::Config(format!("unknown noise preset `{other}`"))),
        }
    }

    pub fn std_yaw_deg(&self) -> f64 {
        self.std_yaw.to_degrees()
    }

    /// Generating variances in state order, raised to the variance floor.
    pub fn covariance<T: Real>(&self) -> DiagCovariance7<T> {
        DiagCovariance7::from_std_devs(T::lit(self.std_pos), T::lit(self.std_scale), T::lit(self.std_yaw))
            .expect("validated stds")
    }
}

/// One object with constant velocity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectSpec {
    pub category: Category,
    /// Center at the first frame, meters.
    pub position: [f64; 3],
    /// Meters per second.
    #[serde(default)]
    pub velocity: [f64; 3],
    /// `(l, w, h)`, meters.
    pub size: [f64; 3],
    /// Radians.
    #[serde(default)]
    pub yaw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Population {
    Explicit { objects: Vec<ObjectSpec> },
    /// Category-plausible objects placed uniformly in the area.
    Random { count: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    #[serde(default)]
    pub scene_id: u32,
    pub n_frames: usize,
    /// Hz.
    #[serde(default = "default_frame_rate")]
    pub frame_rate: f64,
    /// Side of the square placement region centered at the origin, meters.
    #[serde(default = "default_area")]
    pub area: f64,
    #[serde(default = "default_min_separation")]
    pub min_separation: f64,
    pub population: Population,
    #[serde(default)]
    pub start_time: f64,
}

fn default_frame_rate() -> f64 {
    2.0
}

fn default_area() -> f64 {
    160.0
}

fn default_min_separation() -> f64 {
    8.0
}

/// Placement attempts per random object before giving up.
pub const PLACEMENT_RETRIES: usize = 2000;

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.frame_rate > 0.0 && self.frame_rate.is_finite()) {
            return Err(invalid("frame_rate must be positive"));
        }
        if !(self.area > 0.0 && self.area.is_finite()) {
            return Err(invalid("area must be positive"));
        }
        if !(self.min_separation > 0.0 && self.min_separation.is_finite()) {
            return Err(invalid("min_separation must be positive"));
        }
        if !(self.start_time >= 0.0 && self.start_time.is_finite()) {
            return Err(invalid("start_time must be >= 0"));
        }
        if let Population::Explicit { objects } = &self.population {
            for o in objects {
                BBox3D::new(
                    o.position[0], o.position[1], o.position[2], o.size[0], o.size[1], o.size[2], o.yaw,
                )?;
                if !o.velocity.iter().all(|v| v.is_finite()) {
                    return Err(invalid("velocity must be finite"));
                }
            }
        }
        Ok(())
    }

    pub fn frame_time(&self, k: usize) -> f64 {
        self.start_time + k as f64 / self.frame_rate
    }
}

/// Typical `(l, w, h)` per category, meters.
pub fn category_size(c: Category) -> [f64; 3] {
    match c {
        Category::Car => [4.5, 1.9, 1.7],
        Category::Truck => [7.5, 2.5, 3.0],
        Category::Bus => [11.0, 2.9, 3.4],
        Category::Pedestrian => [0.7, 0.7, 1.8],
        Category::Bicycle => [1.8, 0.6, 1.3],
        Category::Motorcycle => [2.1, 0.8, 1.5],
        Category::Other => [1.0, 1.0, 1.0],
    }
}

/// Upper bound of the sampled speed per category, m/s.
fn category_max_speed(c: Category) -> f64 {
    match c {
        Category::Car | Category::Motorcycle => 8.0,
        Category::Truck | Category::Bus => 6.0,
        Category::Bicycle => 4.0,
        Category::Pedestrian => 1.5,
        Category::Other => 0.0,
    }
}

const CATEGORY_MIX: [(Category, f64); 6] = [
    (Category::Car, 0.5),
    (Category::Truck, 0.1),
    (Category::Bus, 0.05),
    (Category::Pedestrian, 0.2),
    (Category::Bicycle, 0.075),
    (Category::Motorcycle, 0.075),
];

fn sample_category<R: Rng>(rng: &mut R) -> Category {
    let mut u: f64 = rng.random();
    for (c, p) in CATEGORY_MIX {
        if u < p {
            return c;
        }
        u -= p;
    }
    Category::Car
}

fn sample_object<R: Rng>(rng: &mut R, area: f64) -> ObjectSpec {
    let category = sample_category(rng);
    let mean = category_size(category);
    let mut size = [0.0; 3];
    for (s, m) in size.iter_mut().zip(mean) {
        *s = m * rng.random_range(0.9..1.1);
    }
    let half = area / 2.0;
    let yaw = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
    let speed = category_max_speed(category) * rng.random::<f64>();
    ObjectSpec {
        category,
        position: [rng.random_range(-half..half), rng.random_range(-half..half), size[2] / 2.0],
        velocity: [speed * yaw.cos(), speed * yaw.sin(), 0.0],
        size,
        yaw,
    }
}

fn position_at(o: &ObjectSpec, t: f64) -> [f64; 3] {
    [
        o.position[0] + o.velocity[0] * t,
        o.position[1] + o.velocity[1] * t,
        o.position[2] + o.velocity[2] * t,
    ]
}

fn separated(a: &ObjectSpec, b: &ObjectSpec, times: &[f64], min_sep: f64) -> bool {
    times.iter().all(|&t| {
        let (p, q) = (position_at(a, t), position_at(b, t));
        let d2: f64 = p.iter().zip(q).map(|(x, y)| (x - y).powi(2)).sum();
        d2 >= min_sep * min_sep
    })
}

pub fn gt_id(scene: u32, object: usize) -> GtId {
    GtId(format!("s{scene}-o{object}"))
}

/// Ground-truth frames of a scene. Deterministic in `(spec, seed)`; every
/// pair of objects keeps at least `min_separation` between centers in every
/// frame.
pub fn generate_gt<T: Real>(spec: &SceneSpec, seed: u64) -> Result<Vec<GtFrame<T>>> {
    spec.validate()?;
    let rel_times: Vec<f64> = (0..spec.n_frames).map(|k| k as f64 / spec.frame_rate).collect();
    let objects = match &spec.population {
        Population::Explicit { objects } => {
            for (i, a) in objects.iter().enumerate() {
                for b in &objects[i + 1..] {
                    if !separated(a, b, &rel_times, spec.min_separation) {
                        return Err(Error::Generation(format!(
                            "explicit objects closer than {} m",
                            spec.min_separation
                        )));
                    }
                }
            }
            objects.clone()
        }
        Population::Random { count } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut placed: Vec<ObjectSpec> = Vec::with_capacity(*count);
            for _ in 0..*count {
                let obj = (0..PLACEMENT_RETRIES)
                    .map(|_| sample_object(&mut rng, spec.area))
                    .find(|cand| {
                        placed
                            .iter()
                            .all(|o| separated(o, cand, &rel_times, spec.min_separation))
                    })
                    .ok_or_else(|| {
                        Error::Generation(format!(
                            "could not place object {} of {count} in a {} m area with {} m separation",
                            placed.len() + 1,
                            spec.area,
                            spec.min_separation
                        ))
                    })?;
                placed.push(obj);
            }
            placed
        }
    };

    let mut frames = Vec::with_capacity(spec.n_frames);
    for (k, &dt) in rel_times.iter().enumerate() {
        let t = spec.frame_time(k);
        let objs = objects
            .iter()
            .enumerate()
            .map(|(i, o)| {
                let p = position_at(o, dt);
                Ok(GtObject {
                    bbox: BBox3D::new(
                        T::lit(p[0]),
                        T::lit(p[1]),
                        T::lit(p[2]),
                        T::lit(o.size[0]),
                        T::lit(o.size[1]),
                        T::lit(o.size[2]),
                        T::lit(o.yaw),
                    )?,
                    category: o.category,
                    gt_id: gt_id(spec.scene_id, i),
                    timestamp: T::lit(t),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        frames.push(GtFrame {
            timestamp: T::lit(t),
            objects: objs,
        });
    }
    Ok(frames)
}

/// Detection-side knobs of the generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbOptions {
    /// Uniform confidence range.
    pub confidence: (f64, f64),
    /// Sliding window width; timestamps are jittered by up to half of it.
    pub delta_t: f64,
    /// Lower bound of each perturbed extent, meters.
    pub min_size: f64,
}

impl Default for PerturbOptions {
    fn default() -> Self {
        Self {
            confidence: (0.5, 1.0),
            delta_t: crate::association::DEFAULT_WINDOW,
            min_size: 0.1,
        }
    }
}

impl PerturbOptions {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.confidence;
        if !(0.0 <= lo && lo <= hi && hi <= 1.0) {
            return Err(invalid("confidence range must satisfy 0 <= lo <= hi <= 1"));
        }
        if !(self.delta_t >= 0.0 && self.delta_t.is_finite()) {
            return Err(invalid("delta_t must be >= 0"));
        }
        if !(self.min_size > 0.0 && self.min_size.is_finite()) {
            return Err(invalid("min_size must be positive"));
        }
        Ok(())
    }
}

fn normal(std: f64) -> Normal<f64> {
    Normal::new(0.0, std).expect("validated std")
}

/// Noisy detections of one ground-truth frame, drawn from `rng`. Count,
/// categories and ids are preserved.
pub fn perturb_with<T: Real, R: Rng>(
    frame: &GtFrame<T>,
    agent: AgentId,
    nc: &NoiseConfig,
    opts: &PerturbOptions,
    rng: &mut R,
) -> Result<Vec<Detection<T>>> {
    opts.validate()?;
    let (pos, yaw, scale) = (normal(nc.std_pos), normal(nc.std_yaw), normal(nc.std_scale));
    let cov = nc.covariance::<T>();
    let half = opts.delta_t / 2.0;
    let (lo, hi) = opts.confidence;
    frame
        .objects
        .iter()
        .map(|g| {
            let b = g.bbox.to_array().map(|v| v.as_f64());
            let mut n = [0.0; 7];
            for v in n.iter_mut().take(3) {
                *v = pos.sample(rng);
            }
            for v in n.iter_mut().skip(3).take(3) {
                *v = scale.sample(rng);
            }
            n[6] = yaw.sample(rng);
            let jitter = if half > 0.0 { rng.random_range(-half..=half) } else { 0.0 };
            let confidence = if hi > lo { rng.random_range(lo..=hi) } else { lo };
            let bbox = BBox3D::new(
                T::lit(b[0] + n[0]),
                T::lit(b[1] + n[1]),
                T::lit(b[2] + n[2]),
                T::lit((b[3] + n[3]).max(opts.min_size)),
                T::lit((b[4] + n[4]).max(opts.min_size)),
                T::lit((b[5] + n[5]).max(opts.min_size)),
                normalize_yaw(T::lit(b[6] + n[6]))?,
            )?;
            let t = (g.timestamp.as_f64() + jitter).max(0.0);
            Ok(Detection::new(bbox, cov, g.category, agent, T::lit(t), T::lit(confidence))?
                .with_gt_id(g.gt_id.clone()))
        })
        .collect()
}

/// [`perturb_with`] using a fresh generator seeded from `seed`.
pub fn perturb<T: Real>(
    frame: &GtFrame<T>,
    agent: AgentId,
    nc: &NoiseConfig,
    opts: &PerturbOptions,
    seed: u64,
) -> Result<Vec<Detection<T>>> {
    perturb_with(frame, agent, nc, opts, &mut ChaCha8Rng::seed_from_u64(seed))
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentStream<T> {
    pub agent_id: AgentId,
    pub noise: NoiseConfig,
    pub sensor_position: [T; 3],
    /// One detection list per ground-truth frame.
    pub frames: Vec<Vec<Detection<T>>>,
}

impl<T: Real> AgentStream<T> {
    pub fn detections(&self) -> impl Iterator<Item = &Detection<T>> {
        self.frames.iter().flatten()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    pub spec: SceneSpec,
    pub seed: u64,
    pub gt: Vec<GtFrame<T>>,
    pub agents: Vec<AgentStream<T>>,
}

/// Ground truth plus one independently perturbed stream per agent. Agents
/// get ids `1..=N` in the order of `agents`, each drawing from its own
/// sub-stream of the seed, and a sensor position uniform in the scene area.
pub fn make_pseudo_collab<T: Real>(
    spec: &SceneSpec,
    agents: &[NoiseConfig],
    opts: &PerturbOptions,
    seed: u64,
) -> Result<Dataset<T>> {
    if agents.is_empty() {
        return Err(invalid("need at least one agent noise config"));
    }
    let gt = generate_gt::<T>(spec, seed)?;
    let half = spec.area / 2.0;
    let mut streams = Vec::with_capacity(agents.len());
    for (k, nc) in agents.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(k as u64 + 1);
        let agent_id = AgentId(k as u32 + 1);
        let sensor_position = [
            T::lit(rng.random_range(-half..half)),
            T::lit(rng.random_range(-half..half)),
            T::lit(1.8),
        ];
        let frames = gt
            .iter()
            .map(|f| perturb_with(f, agent_id, nc, opts, &mut rng))
            .collect::<Result<Vec<_>>>()?;
        streams.push(AgentStream {
            agent_id,
            noise: *nc,
            sensor_position,
            frames,
        });
    }
    Ok(Dataset {
        spec: spec.clone(),
        seed,
        gt,
        agents: streams,
    })
}

/// Reads ground-truth annotations in the JSON-lines schema, grouped into
/// frames sorted by timestamp.
pub fn load_annotations<T: Real>(path: impl AsRef<Path>) -> Result<Vec<GtFrame<T>>> {
    read_gt(BufReader::new(File::open(path)?))
}

pub fn write_annotations<T: Real>(path: impl AsRef<Path>, frames: &[GtFrame<T>]) -> Result<()> {
    write_gt(BufWriter::new(File::create(path)?), frames)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestAgent {
    pub agent_id: AgentId,
    pub noise: NoiseConfig,
    pub sensor_position: [f64; 3],
    pub file: String,
}

/// Describes a dataset written by [`write_dataset`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub spec: SceneSpec,
    pub seed: u64,
    pub gt_file: String,
    pub agents: Vec<ManifestAgent>,
}

/// Writes `gt.jsonl`, one `agent_<id>.jsonl` per agent and `manifest.json`
/// into `dir`.
pub fn write_dataset<T: Real>(dir: impl AsRef<Path>, ds: &Dataset<T>) -> Result<Manifest> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let gt_file = "gt.jsonl".to_owned();
    write_annotations(dir.join(&gt_file), &ds.gt)?;
    let mut agents = Vec::new();
    for a in &ds.agents {
        let file = format!("agent_{}.jsonl", a.agent_id.0);
        let dets: Vec<Detection<T>> = a.detections().cloned().collect();
        write_detections(BufWriter::new(File::create(dir.join(&file))?), &dets)?;
        agents.push(ManifestAgent {
            agent_id: a.agent_id,
            noise: a.noise,
            sensor_position: a.sensor_position.map(|v| v.as_f64()),
            file,
        });
    }
    let manifest = Manifest {
        spec: ds.spec.clone(),
        seed: ds.seed,
        gt_file,
        agents,
    };
    let text = serde_json::to_string_pretty(&manifest).map_err(std::io::Error::from)?;
    std::fs::write(dir.join("manifest.json"), text + "\n")?;
    Ok(manifest)
}
