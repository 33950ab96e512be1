use std::collections::BTreeMap;

use coopfuse::association::window_group;
use coopfuse::datagen::{PerturbOptions, Population};
use coopfuse::{
    accumulate_stream, make_pseudo_collab, EvalAccumulator, EvalReport, SceneSpec,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{Resolved, ResolvedRow, ScenesConfig, Thresholds};
use crate::methods::{Method, MethodContext};
use crate::Result;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Cell {
    pub noise: String,
    pub method: Method,
    pub report: EvalReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentResult {
    pub seed: u64,
    pub cells: Vec<Cell>,
}

impl ExperimentResult {
    pub fn get(&self, noise: &str, method: Method) -> Option<&EvalReport> {
        self.cells
            .iter()
            .find(|c| c.noise == noise && c.method == method)
            .map(|c| &c.report)
    }
}

/// splitmix64 finalizer; spreads consecutive scene indices over the seed space.
fn mix(seed: u64, k: u64) -> u64 {
    let mut z = seed ^ k.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn scene_seed(seed: u64, scene: usize) -> u64 {
    mix(seed, scene as u64)
}

/// Scene `k` of the grid. The object count is drawn from the scene seed, so
/// every noise row sees the same ground truth.
pub fn scene_spec(cfg: &ScenesConfig, seed: u64, scene: usize) -> SceneSpec {
    let [lo, hi] = cfg.objects;
    let mut rng = ChaCha8Rng::seed_from_u64(scene_seed(seed, scene));
    SceneSpec {
        scene_id: scene as u32,
        n_frames: cfg.n_frames,
        frame_rate: cfg.frame_rate,
        area: cfg.area,
        min_separation: cfg.min_separation,
        population: Population::Random {
            count: rng.random_range(lo..=hi),
        },
        start_time: 0.0,
    }
}

/// Generates one scene for one noise row, runs every method over the
/// windowed detection stream and returns one accumulator per method.
pub fn run_scene(
    row: &ResolvedRow,
    methods: &[Method],
    thresholds: &Thresholds,
    spec: &SceneSpec,
    seed: u64,
) -> Result<Vec<EvalAccumulator>> {
    let opts = PerturbOptions {
        delta_t: thresholds.window,
        ..PerturbOptions::default()
    };
    let ds = make_pseudo_collab::<f64>(spec, &row.agents, &opts, seed)?;
    let sensors: BTreeMap<_, _> = ds.agents.iter().map(|a| (a.agent_id, a.sensor_position)).collect();
    let pooled: Vec<_> = ds.agents.iter().flat_map(|a| a.detections().cloned()).collect();
    let frames = window_group(pooled, thresholds.window);
    let ctx = MethodContext {
        thresholds,
        csba: &row.csba,
        sensors: &sensors,
    };
    methods
        .iter()
        .map(|m| {
            let mut preds = Vec::new();
            for f in &frames {
                preds.extend(m.fuse(f, &ctx)?);
            }
            Ok(accumulate_stream(&preds, &ds.gt))
        })
        .collect()
}

/// Runs the whole (noise row × method) grid. Scenes run in parallel; the
/// reduction walks them in index order so output does not depend on
/// scheduling.
pub fn run_experiment(r: &Resolved) -> Result<ExperimentResult> {
    let cfg = &r.config;
    let tasks: Vec<(usize, usize)> = (0..r.rows.len())
        .flat_map(|ri| (0..cfg.scenes.count).map(move |s| (ri, s)))
        .collect();
    let per_task: Vec<Vec<EvalAccumulator>> = tasks
        .par_iter()
        .map(|&(ri, s)| {
            let spec = scene_spec(&cfg.scenes, cfg.seed, s);
            run_scene(&r.rows[ri], &r.methods, &cfg.thresholds, &spec, scene_seed(cfg.seed, s))
        })
        .collect::<Result<_>>()?;

    let mut cells = Vec::new();
    for (ri, row) in r.rows.iter().enumerate() {
        let mut acc = vec![EvalAccumulator::new(); r.methods.len()];
        for (&(task_row, _), scene) in tasks.iter().zip(&per_task) {
            if task_row == ri {
                for (a, s) in acc.iter_mut().zip(scene) {
                    a.merge(s);
                }
            }
        }
        for (m, a) in r.methods.iter().zip(acc) {
            cells.push(Cell {
                noise: row.name.clone(),
                method: *m,
                report: a.report(row.penalties),
            });
        }
    }
    Ok(ExperimentResult { seed: cfg.seed, cells })
}
