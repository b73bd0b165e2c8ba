//! Geodesics, causal relations, observer families and light observations.

mod cut;
mod geodesic;
mod observer;
mod points;
mod shooting;

pub use cut::{cut_locus, first_conjugate, jacobi_determinant, CutKind, CutOptions, CutPoint};
pub use geodesic::{
    acceleration, classify, flow_monitored, flow_to, geodesic_flow, CausalClass, Control,
    FlowOptions, GeodesicPath, GeodesicState, CAUSAL_BAND,
};
pub use observer::{
    Curve, FamilyConfig, ObservationRecord, Observer, ObserverFamily, VerticalLine,
};
pub use points::{
    direction_tuples_for, earliest_light_observation_set, earliest_point, intersection_point,
    nearest_null_connection, null_connection_to_point, Intersection, IntersectionOptions, LightCone, PointSet, Ray,
    RayTuple, SampledSet, TupleOptions,
};
pub use shooting::{
    f_minus, f_minus_raw, f_plus, f_plus_raw, null_arrival, null_vector, orthonormal_frame,
    time_separation, Arrival, Frame, ShootOptions, TauOptions, TimeDir,
};

use crate::geometry::GeometryError;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CausalError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("integration failed at s = {}: {reason}", last.s)]
    Integration {
        last: GeodesicState,
        reason: String,
    },
    #[error("{what} did not converge (residual {residual:e})")]
    NoConvergence { what: &'static str, residual: f64 },
    #[error("point {x:?} lies outside the causal diamond of the observer (parameter {value})")]
    OutOfDiamond { x: [f64; 4], value: f64 },
    #[error("observer velocity is not timelike at {x:?}")]
    NotTimelike { x: [f64; 4] },
    #[error("vector is not null and future pointing")]
    NotNull,
    #[error("no null geodesic connects the points (residual {residual:e})")]
    NoNullConnection { residual: f64 },
    #[error("tuple construction failed: {0}")]
    Tuple(String),
}
