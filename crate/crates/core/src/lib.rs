//! Late collaborative fusion of 3D object detections.
//!
//! Agents share only object-level boxes (category, position, size, yaw and
//! their uncertainties). Detections from different agents are associated by
//! a combined dimension/center/orientation score solved as a linear
//! assignment, then merged by inverse-variance weighted least squares.
//! Comparison baselines, a noisy pseudo-collaborative data generator and a
//! false-positive-aware evaluation suite are included.
//!
//! All numerics are generic over [`Real`] (`f32` or `f64`); the aliases at
//! the crate root fix the scalar to `f64`.

pub mod assignment;
pub mod association;
pub mod baselines;
pub mod datagen;
pub mod error;
pub mod fusion;
pub mod geometry;
pub mod io;
pub mod metrics;
pub mod scalar;
pub mod types;

pub use assignment::{solve_assignment, AssignCost, AssignmentResult, CostMatrix};
pub use association::{
    associate_multi, associate_pairwise, center_score, dimension_score, orientation_score,
    pair_cost, window_group, CenterGate, CsbaParams, Member,
};
pub use error::{Error, Result};
pub use baselines::{late_average, late_closest_to_sensor, nms_giou_3d, nms_std_3d, wbf_3d};
pub use datagen::{generate_gt, make_pseudo_collab, perturb, Dataset, NoiseConfig, SceneSpec};
pub use fusion::{fuse_frame, gt_assoc_fuse, wls_fuse, wls_fuse_detections};
pub use geometry::{bev_footprint, convex_intersection_area, giou_3d, iou_3d, BevPolygon};
pub use metrics::{
    accumulate_stream, evaluate, evaluate_stream, match_to_gt, EvalAccumulator, EvalReport, FpPenalties, MatchOutcome,
    Metrics,
};
pub use scalar::Real;
pub use types::{
    angle_diff, box_volume, normalize_yaw, AgentId, BBox3D, Category, Detection,
    DiagCovariance7, Frame, FusedObject, GtFrame, GtId, GtObject, SourceRef,
};

pub type Box3 = types::BBox3D<f64>;
pub type Covariance = types::DiagCovariance7<f64>;
pub type Det = types::Detection<f64>;
pub type Fused = types::FusedObject<f64>;
pub type Frame64 = types::Frame<f64>;
pub type GtFrame64 = types::GtFrame<f64>;
pub type Params = association::CsbaParams<f64>;
pub type Dataset64 = datagen::Dataset<f64>;
