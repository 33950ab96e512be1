use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use coopfuse::{
    fuse_frame, gt_assoc_fuse, late_average, late_closest_to_sensor, nms_giou_3d, nms_std_3d,
    wbf_3d, AgentId, CsbaParams, Frame, FusedObject,
};
use serde::{Deserialize, Serialize};

use crate::config::Thresholds;
use crate::{BenchError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    NmsStd3d,
    NmsGiou3d,
    Wbf,
    Infradet3dLate,
    DairV2xLate,
    WlsCsba,
    WlsGtAssoc,
}

/// Names that appear in the literature but have no implementation here.
const OUT_OF_SCOPE: &[&str] = &["psa", "soft_nms", "adaptive_nms", "learning_nms"];

impl Method {
    pub const ALL: [Method; 7] = [
        Method::NmsStd3d,
        Method::NmsGiou3d,
        Method::Wbf,
        Method::Infradet3dLate,
        Method::DairV2xLate,
        Method::WlsCsba,
        Method::WlsGtAssoc,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::NmsStd3d => "nms_std_3d",
            Method::NmsGiou3d => "nms_giou_3d",
            Method::Wbf => "wbf",
            Method::Infradet3dLate => "infradet3d_late",
            Method::DairV2xLate => "dair_v2x_late",
            Method::WlsCsba => "wls_csba",
            Method::WlsGtAssoc => "wls_gt_assoc",
        }
    }

    /// Table label.
    pub fn label(self) -> &'static str {
        match self {
            Method::NmsStd3d => "NMS-STD-3D",
            Method::NmsGiou3d => "GIoU-NMS-3D",
            Method::Wbf => "WBF",
            Method::Infradet3dLate => "InfraDet3D-Late",
            Method::DairV2xLate => "DAIR-V2X-Late",
            Method::WlsCsba => "WLS-3D w/ CSBA-3D",
            Method::WlsGtAssoc => "WLS-3D w/ GT-Assoc",
        }
    }

    pub fn fuse(self, frame: &Frame<f64>, ctx: &MethodContext<'_>) -> Result<Vec<FusedObject<f64>>> {
        let t = ctx.thresholds;
        let out = match self {
            Method::NmsStd3d => nms_std_3d(frame, t.iou),
            Method::NmsGiou3d => nms_giou_3d(frame, t.giou),
            Method::Wbf => wbf_3d(frame, t.iou),
            Method::Infradet3dLate => late_closest_to_sensor(frame, t.distance, ctx.sensors),
            Method::DairV2xLate => late_average(frame, t.distance),
            Method::WlsCsba => fuse_frame(frame, ctx.csba),
            Method::WlsGtAssoc => gt_assoc_fuse(frame),
        };
        Ok(out?)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace(['-', ' '], "_");
        if let Some(m) = Method::ALL.iter().find(|m| m.name() == key) {
            return Ok(*m);
        }
        if OUT_OF_SCOPE.contains(&key.as_str()) {
            return Err(BenchError::OutOfScope(s.to_owned()));
        }
        Err(BenchError::Config(format!(
            "unknown method `{s}` (known: {})",
            Method::ALL.map(|m| m.name()).join(", ")
        )))
    }
}

/// Everything a method may need beyond the frame itself.
#[derive(Debug, Clone, Copy)]
pub struct MethodContext<'a> {
    pub thresholds: &'a Thresholds,
    pub csba: &'a CsbaParams<f64>,
    pub sensors: &'a BTreeMap<AgentId, [f64; 3]>,
}
