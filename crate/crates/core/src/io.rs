//! JSON-lines interchange: one flat record per detection, fused object or
//! ground-truth box. Angles are radians.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::types::{
    AgentId, BBox3D, Category, Detection, DiagCovariance7, FusedObject, GtFrame, GtId, GtObject,
    SourceRef,
};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, bound = "T: Real")]
struct Record<T> {
    x: T,
    y: T,
    z: T,
    l: T,
    w: T,
    h: T,
    theta: T,
    var_x: T,
    var_y: T,
    var_z: T,
    var_l: T,
    var_w: T,
    var_h: T,
    var_theta: T,
    category: Category,
    agent_id: AgentId,
    timestamp: T,
    confidence: T,
    gt_id: Option<GtId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sources: Option<Vec<SourceRef>>,
}

impl<T: Real> Record<T> {
    fn new(
        bbox: &BBox3D<T>,
        cov: &DiagCovariance7<T>,
        category: Category,
        agent_id: AgentId,
        timestamp: T,
        confidence: T,
        gt_id: Option<GtId>,
    ) -> Self {
        let v = cov.as_array();
        Self {
            x: bbox.x,
            y: bbox.y,
            z: bbox.z,
            l: bbox.l,
            w: bbox.w,
            h: bbox.h,
            theta: bbox.theta,
            var_x: v[0],
            var_y: v[1],
            var_z: v[2],
            var_l: v[3],
            var_w: v[4],
            var_h: v[5],
            var_theta: v[6],
            category,
            agent_id,
            timestamp,
            confidence,
            gt_id,
            sources: None,
        }
    }

    fn into_detection(self) -> Result<Detection<T>> {
        let bbox = BBox3D::new(
            self.x, self.y, self.z, self.l, self.w, self.h, self.theta,
        )?;
        let cov = DiagCovariance7::new([
            self.var_x,
            self.var_y,
            self.var_z,
            self.var_l,
            self.var_w,
            self.var_h,
            self.var_theta,
        ])?;
        let mut d = Detection::new(
            bbox,
            cov,
            self.category,
            self.agent_id,
            self.timestamp,
            self.confidence,
        )?;
        d.gt_id = self.gt_id;
        Ok(d)
    }
}

fn write_record<W: Write, T: Real>(w: &mut W, rec: &Record<T>) -> Result<()> {
    serde_json::to_writer(&mut *w, rec).map_err(std::io::Error::from)?;
    w.write_all(b"\n")?;
    Ok(())
}

/// Parses every non-blank line; errors carry the 1-based line number.
fn read_records<R: BufRead, T: Real>(r: R) -> Result<Vec<(usize, Record<T>)>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record<T> = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push((i + 1, rec));
    }
    Ok(out)
}

fn at_line<X>(line: usize, r: Result<X>) -> Result<X> {
    r.map_err(|e| match e {
        Error::Parse { .. } => e,
        other => Error::Parse {
            line,
            message: other.to_string(),
        },
    })
}

pub fn write_detections<W: Write, T: Real>(mut w: W, dets: &[Detection<T>]) -> Result<()> {
    for d in dets {
        let rec = Record::new(
            &d.bbox,
            &d.cov,
            d.category,
            d.agent_id,
            d.timestamp,
            d.confidence,
            d.gt_id.clone(),
        );
        write_record(&mut w, &rec)?;
    }
    Ok(())
}

pub fn read_detections<R: BufRead, T: Real>(r: R) -> Result<Vec<Detection<T>>> {
    read_records(r)?
        .into_iter()
        .map(|(line, rec)| at_line(line, rec.into_detection()))
        .collect()
}

/// Fused objects use the detection schema plus a `sources` array. The
/// record's `agent_id` is the first source's agent and `gt_id` the majority
/// vote over sources.
pub fn write_fused<W: Write, T: Real>(mut w: W, objs: &[FusedObject<T>]) -> Result<()> {
    for o in objs {
        let mut rec = Record::new(
            &o.bbox,
            &o.cov,
            o.category,
            o.sources.first().map(|s| s.agent_id).unwrap_or_default(),
            o.timestamp,
            o.confidence,
            o.majority_gt_id(),
        );
        rec.sources = Some(o.sources.clone());
        write_record(&mut w, &rec)?;
    }
    Ok(())
}

/// Reads fused objects. Plain detection lines (no `sources`) are accepted as
/// singletons whose source index is their position among that agent's lines.
pub fn read_fused<R: BufRead, T: Real>(r: R) -> Result<Vec<FusedObject<T>>> {
    let mut per_agent: BTreeMap<AgentId, usize> = BTreeMap::new();
    let mut out = Vec::new();
    for (line, mut rec) in read_records::<_, T>(r)? {
        let sources = rec.sources.take();
        let det = at_line(line, rec.into_detection())?;
        let obj = match sources {
            Some(s) if !s.is_empty() => FusedObject {
                bbox: det.bbox,
                cov: det.cov,
                category: det.category,
                sources: s,
                timestamp: det.timestamp,
                confidence: det.confidence,
            },
            Some(_) => {
                return Err(Error::Parse {
                    line,
                    message: "fused object has an empty sources array".into(),
                })
            }
            None => {
                let idx = per_agent.entry(det.agent_id).or_default();
                let o = FusedObject::singleton(&det, *idx);
                *idx += 1;
                o
            }
        };
        out.push(obj);
    }
    Ok(out)
}

/// Ground truth is written in the detection schema with agent 0, confidence 1
/// and floor variances.
pub fn write_gt<W: Write, T: Real>(mut w: W, frames: &[GtFrame<T>]) -> Result<()> {
    let cov = DiagCovariance7::clamped([T::zero(); 7])?;
    for f in frames {
        for o in &f.objects {
            let rec = Record::new(
                &o.bbox,
                &cov,
                o.category,
                AgentId(0),
                o.timestamp,
                T::one(),
                Some(o.gt_id.clone()),
            );
            write_record(&mut w, &rec)?;
        }
    }
    Ok(())
}

/// Reads ground-truth boxes grouped into frames by exact timestamp, sorted.
pub fn read_gt<R: BufRead, T: Real>(r: R) -> Result<Vec<GtFrame<T>>> {
    let mut frames: Vec<GtFrame<T>> = Vec::new();
    for (line, rec) in read_records::<_, T>(r)? {
        let det = at_line(line, rec.into_detection())?;
        let gt_id = det.gt_id.ok_or_else(|| Error::Parse {
            line,
            message: "ground-truth record without gt_id".into(),
        })?;
        let obj = GtObject {
            bbox: det.bbox,
            category: det.category,
            gt_id,
            timestamp: det.timestamp,
        };
        match frames.iter_mut().find(|f| f.timestamp == obj.timestamp) {
            Some(f) => f.objects.push(obj),
            None => frames.push(GtFrame {
                timestamp: obj.timestamp,
                objects: vec![obj],
            }),
        }
    }
    frames.sort_by(|a, b| a.timestamp.partial_cmp(&b.timestamp).expect("finite"));
    Ok(frames)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn det(x: f64, agent: u32) -> Detection<f64> {
        Detection::new(
            BBox3D::new(x, 1.0, 0.5, 4.0, 2.0, 1.5, 0.3).unwrap(),
            DiagCovariance7::new([0.25, 0.25, 0.25, 0.01, 0.01, 0.01, 0.0076]).unwrap(),
            Category::Car,
            AgentId(agent),
            0.05,
            0.8,
        )
        .unwrap()
        .with_gt_id("s0-o1")
    }

    #[test]
    fn detection_schema_field_names() {
        let mut buf = Vec::new();
        write_detections(&mut buf, &[det(1.0, 2)]).unwrap();
        let v: serde_json::Value = serde_json::from_slice(&buf).unwrap();
        let keys: Vec<_> = v.as_object().unwrap().keys().cloned().collect();
        let mut expected = vec![
            "x", "y", "z", "l", "w", "h", "theta", "var_x", "var_y", "var_z", "var_l", "var_w",
            "var_h", "var_theta", "category", "agent_id", "timestamp", "confidence", "gt_id",
        ];
        expected.sort();
        let mut keys = keys;
        keys.sort();
        assert_eq!(keys, expected);
        assert_eq!(v["category"], "car");
        assert_eq!(v["agent_id"], 2);
    }

    #[test]
    fn detections_round_trip() {
        let dets = vec![det(1.0, 1), det(-3.5, 2)];
        let mut buf = Vec::new();
        write_detections(&mut buf, &dets).unwrap();
        let back: Vec<Detection<f64>> = read_detections(buf.as_slice()).unwrap();
        assert_eq!(back, dets);
    }

    #[test]
    fn null_gt_id_accepted_for_detections() {
        let line = r#"{"x":0,"y":0,"z":0,"l":1,"w":1,"h":1,"theta":0,"var_x":1,"var_y":1,"var_z":1,"var_l":1,"var_w":1,"var_h":1,"var_theta":1,"category":"pedestrian","agent_id":1,"timestamp":0,"confidence":0.5,"gt_id":null}"#;
        let d: Vec<Detection<f64>> = read_detections(line.as_bytes()).unwrap();
        assert_eq!(d[0].gt_id, None);
        assert_eq!(d[0].category, Category::Pedestrian);
    }

    #[test]
    fn bad_line_reports_location() {
        let mut buf = Vec::new();
        write_detections(&mut buf, &[det(1.0, 1)]).unwrap();
        buf.extend_from_slice(b"{\"x\": 1}\n");
        let err = read_detections::<_, f64>(buf.as_slice()).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn invalid_values_report_location() {
        let line = r#"{"x":0,"y":0,"z":0,"l":-1,"w":1,"h":1,"theta":0,"var_x":1,"var_y":1,"var_z":1,"var_l":1,"var_w":1,"var_h":1,"var_theta":1,"category":"car","agent_id":1,"timestamp":0,"confidence":0.5,"gt_id":null}"#;
        let text = format!("\n{line}\n");
        match read_detections::<_, f64>(text.as_bytes()).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn fused_round_trip_and_plain_lines() {
        let d = det(0.0, 1);
        let mut f = FusedObject::singleton(&d, 0);
        f.sources.push(SourceRef {
            agent_id: AgentId(2),
            index: 3,
            gt_id: Some("s0-o1".into()),
        });
        let mut buf = Vec::new();
        write_fused(&mut buf, std::slice::from_ref(&f)).unwrap();
        write_detections(&mut buf, &[det(5.0, 2), det(6.0, 2)]).unwrap();
        let back: Vec<FusedObject<f64>> = read_fused(buf.as_slice()).unwrap();
        assert_eq!(back[0], f);
        assert_eq!(back[1].sources[0].index, 0);
        assert_eq!(back[2].sources[0].index, 1);
    }

    #[test]
    fn empty_input_is_empty() {
        let d: Vec<Detection<f64>> = read_detections(&b""[..]).unwrap();
        assert!(d.is_empty());
        let g: Vec<GtFrame<f64>> = read_gt(&b"\n\n"[..]).unwrap();
        assert!(g.is_empty());
    }
}
