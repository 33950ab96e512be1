//! File-level operations behind the CLI subcommands.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use coopfuse::association::window_group;
use coopfuse::datagen::{load_annotations, write_dataset, Manifest, PerturbOptions};
use coopfuse::io::{read_detections, read_fused, write_fused};
use coopfuse::{
    evaluate_stream, make_pseudo_collab, CsbaParams, EvalReport, FpPenalties, FusedObject,
    SceneSpec,
};
use serde::{Deserialize, Serialize};

use crate::config::{AgentNoise, Thresholds};
use crate::methods::{Method, MethodContext};
use crate::output::Format;
use crate::{BenchError, Result};

/// Input of `gen`: a scene plus the agents observing it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenSpec {
    pub scene: SceneSpec,
    #[serde(default = "two_mild")]
    pub agents: Vec<AgentNoise>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub perturb: PerturbOptions,
}

fn two_mild() -> Vec<AgentNoise> {
    vec![AgentNoise::Preset("mild".into()); 2]
}

/// Reads TOML, or JSON when the extension says so.
pub fn read_structured<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| BenchError::Config(format!("{}: {e}", path.display())))?;
    if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text).map_err(|e| BenchError::Config(format!("{}: {e}", path.display())))
    } else {
        toml::from_str(&text).map_err(|e| BenchError::Config(format!("{}: {e}", path.display())))
    }
}

pub fn generate(spec: &GenSpec, out: &Path) -> Result<Manifest> {
    let agents = spec.agents.iter().map(AgentNoise::resolve).collect::<Result<Vec<_>>>()?;
    let ds = make_pseudo_collab::<f64>(&spec.scene, &agents, &spec.perturb, spec.seed)?;
    Ok(write_dataset(out, &ds)?)
}

/// Fuses a dataset directory written by [`generate`] with one method.
pub fn fuse_dataset(dir: &Path, method: Method, thresholds: &Thresholds) -> Result<Vec<FusedObject<f64>>> {
    let manifest: Manifest = read_structured(&dir.join("manifest.json"))?;
    let mut pooled = Vec::new();
    let mut sensors = BTreeMap::new();
    let mut std = 0.0f64;
    for a in &manifest.agents {
        let f = File::open(dir.join(&a.file))?;
        pooled.extend(read_detections::<_, f64>(BufReader::new(f))?);
        sensors.insert(a.agent_id, a.sensor_position);
        std = std.max(a.noise.std_pos);
    }
    let csba = CsbaParams::for_position_std(std.max(1e-3))?;
    let ctx = MethodContext {
        thresholds,
        csba: &csba,
        sensors: &sensors,
    };
    let mut out = Vec::new();
    for frame in window_group(pooled, thresholds.window) {
        out.extend(method.fuse(&frame, &ctx)?);
    }
    Ok(out)
}

pub fn write_predictions(path: &Path, preds: &[FusedObject<f64>]) -> Result<()> {
    Ok(write_fused(BufWriter::new(File::create(path)?), preds)?)
}

pub fn evaluate_files(pred: &Path, gt: &Path, penalties: FpPenalties) -> Result<EvalReport> {
    let preds = read_fused::<_, f64>(BufReader::new(File::open(pred)?))?;
    let gt = load_annotations::<f64>(gt)?;
    Ok(evaluate_stream(&preds, &gt, penalties))
}

pub fn render_report(r: &EvalReport, label: &str, f: Format) -> String {
    match f {
        Format::Csv => format!("{}\n{}\n", EvalReport::CSV_HEADER, r.csv_row(label, "-")),
        Format::Json => r.to_json(),
        Format::Md => {
            let m = &r.overall;
            let cell = |v: Option<f64>| v.map_or_else(|| "n/a".to_owned(), |x| format!("{x:.3}"));
            format!(
                "| mATE (m) | mASE (m) | mAOE (deg) | Precision | Recall | TP | FP | FN |\n\
                 |---:|---:|---:|---:|---:|---:|---:|---:|\n\
                 | {} | {} | {} | {:.3} | {:.3} | {} | {} | {} |\n",
                cell(m.mate),
                cell(m.mase),
                cell(m.maoe),
                m.precision,
                m.recall,
                m.tp,
                m.fp,
                m.fn_
            )
        }
    }
}
