use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use coopfuse::EvalReport;

use crate::experiment::ExperimentResult;
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum Format {
    #[default]
    Csv,
    Md,
    Json,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Md => "md",
            Format::Json => "json",
        }
    }
}

pub fn to_csv(r: &ExperimentResult) -> String {
    let mut s = String::from(EvalReport::CSV_HEADER);
    s.push('\n');
    for c in &r.cells {
        s.push_str(&c.report.csv_row(c.method.name(), &c.noise));
        s.push('\n');
    }
    s
}

fn num(v: Option<f64>, digits: usize) -> String {
    v.map_or_else(|| "n/a".to_owned(), |x| format!("{x:.digits$}"))
}

pub fn to_markdown(r: &ExperimentResult) -> String {
    let mut s = String::new();
    s.push_str("| Noise | Method | mATE (m) | mASE (m) | mAOE (deg) | Precision | Recall |\n");
    s.push_str("|---|---|---:|---:|---:|---:|---:|\n");
    for c in &r.cells {
        let m = &c.report.overall;
        writeln!(
            s,
            "| {} | {} | {} | {} | {} | {:.2} | {:.2} |",
            c.noise,
            c.method.label(),
            num(m.mate, 2),
            num(m.mase, 2),
            num(m.maoe, 2),
            m.precision,
            m.recall
        )
        .expect("writing to a String cannot fail");
    }
    s
}

pub fn to_json(r: &ExperimentResult) -> String {
    serde_json::to_string_pretty(r).expect("result serializes")
}

pub fn render(r: &ExperimentResult, f: Format) -> String {
    match f {
        Format::Csv => to_csv(r),
        Format::Md => to_markdown(r),
        Format::Json => to_json(r),
    }
}

/// Writes `results.csv`, `results.md` and `results.json` into `dir`.
pub fn write_all(r: &ExperimentResult, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut out = Vec::new();
    for f in [Format::Csv, Format::Md, Format::Json] {
        let p = dir.join(format!("results.{}", f.extension()));
        std::fs::write(&p, render(r, f))?;
        out.push(p);
    }
    Ok(out)
}
