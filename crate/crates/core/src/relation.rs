//! Explicit spatiotemporal intervals: haversine distances, hour-of-week
//! slots, and the trajectory / candidate relation matrices.
//!
//! Time intervals are in hours and distances in hectometers (100 m), kept as
//! continuous values.

use alloc::vec;
use alloc::vec::Vec;

use libm::{asin, cos, sin, sqrt};
use serde::{Deserialize, Serialize};

use crate::trajectory::TrajectorySequence;

/// Mean earth radius (IUGG), kilometers.
pub const EARTH_RADIUS_KM: f64 = 6371.0088;
pub const HOURS_PER_WEEK: usize = 168;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Gps {
    pub lat: f64,
    pub lon: f64,
}

impl Gps {
    pub fn new(lat: f64, lon: f64) -> Self {
        Self { lat, lon }
    }

    pub fn is_valid(&self) -> bool {
        (-90.0..=90.0).contains(&self.lat) && (-180.0..=180.0).contains(&self.lon)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RelationError {
    #[error("location id {0} is not in the candidate table")]
    UnknownLocation(u32),
    #[error("no pair of valid check-ins to derive interval bounds from")]
    NoIntervals,
}

/// Great-circle distance in hectometers.
pub fn haversine(a: Gps, b: Gps) -> f64 {
    // Absolute differences keep the result bitwise symmetric in (a, b).
    let dlat = (a.lat - b.lat).abs().to_radians();
    let dlon = (a.lon - b.lon).abs().to_radians();
    let s_lat = sin(dlat / 2.0);
    let s_lon = sin(dlon / 2.0);
    let h = s_lat * s_lat + cos(a.lat.to_radians()) * cos(b.lat.to_radians()) * s_lon * s_lon;
    2.0 * EARTH_RADIUS_KM * 10.0 * asin(sqrt(h.clamp(0.0, 1.0)))
}

/// Hour slot in a week starting Monday 00:00 UTC, in `0..168`.
pub fn hour_of_week(timestamp: i64) -> usize {
    let days = timestamp.div_euclid(86_400);
    // 1970-01-01 was a Thursday, three days after Monday.
    let weekday = (days + 3).rem_euclid(7);
    let hour = timestamp.rem_euclid(86_400) / 3600;
    (weekday * 24 + hour) as usize
}

pub fn hours_between(a: i64, b: i64) -> f64 {
    (a - b).unsigned_abs() as f64 / 3600.0
}

/// Pairwise intervals inside one window, `n x n` row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationMatrices {
    pub n: usize,
    pub valid_len: usize,
    pub delta_t: Vec<f64>,
    pub delta_s: Vec<f64>,
}

impl RelationMatrices {
    pub fn t(&self, i: usize, j: usize) -> f64 {
        self.delta_t[i * self.n + j]
    }

    pub fn s(&self, i: usize, j: usize) -> f64 {
        self.delta_s[i * self.n + j]
    }
}

pub fn trajectory_relation(seq: &TrajectorySequence) -> RelationMatrices {
    let n = seq.n();
    let v = seq.valid_len;
    let mut delta_t = vec![0.0; n * n];
    let mut delta_s = vec![0.0; n * n];
    let e = &seq.entries;
    for i in 0..v {
        for j in i + 1..v {
            let dt = hours_between(e[i].timestamp, e[j].timestamp);
            let ds = haversine(e[i].gps, e[j].gps);
            delta_t[i * n + j] = dt;
            delta_t[j * n + i] = dt;
            delta_s[i * n + j] = ds;
            delta_s[j * n + i] = ds;
        }
    }
    RelationMatrices {
        n,
        valid_len: v,
        delta_t,
        delta_s,
    }
}

/// Intervals between each candidate location (rows) and each check-in of the
/// window (columns), `candidates x n` row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateRelation {
    pub candidates: usize,
    pub n: usize,
    pub valid_len: usize,
    pub n_t: Vec<f64>,
    pub n_s: Vec<f64>,
}

impl CandidateRelation {
    pub fn t(&self, i: usize, j: usize) -> f64 {
        self.n_t[i * self.n + j]
    }

    pub fn s(&self, i: usize, j: usize) -> f64 {
        self.n_s[i * self.n + j]
    }
}

/// `locations[id - 1]` is the GPS of candidate `id`; every location in `seq`
/// must be in the table.
pub fn candidate_relation(
    locations: &[Gps],
    seq: &TrajectorySequence,
    target_time: i64,
) -> Result<CandidateRelation, RelationError> {
    let n = seq.n();
    let v = seq.valid_len;
    let big_l = locations.len();
    for c in seq.valid() {
        if c.location_id == 0 || c.location_id as usize > big_l {
            return Err(RelationError::UnknownLocation(c.location_id));
        }
    }
    let mut time_row = vec![0.0; n];
    for (slot, c) in time_row.iter_mut().zip(seq.valid()) {
        *slot = hours_between(target_time, c.timestamp);
    }
    let mut n_t = Vec::with_capacity(big_l * n);
    let mut n_s = vec![0.0; big_l * n];
    for (i, cand) in locations.iter().enumerate() {
        n_t.extend_from_slice(&time_row);
        for (j, c) in seq.valid().iter().enumerate() {
            n_s[i * n + j] = haversine(*cand, c.gps);
        }
    }
    Ok(CandidateRelation {
        candidates: big_l,
        n,
        valid_len: v,
        n_t,
        n_s,
    })
}

/// Range of observed intervals, anchoring the interpolation embedding.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntervalBounds {
    pub t_min: f64,
    pub t_max: f64,
    pub s_min: f64,
    pub s_max: f64,
}

impl IntervalBounds {
    /// Elementwise hull of two bounds.
    pub fn union(self, other: Self) -> Self {
        Self {
            t_min: self.t_min.min(other.t_min),
            t_max: self.t_max.max(other.t_max),
            s_min: self.s_min.min(other.s_min),
            s_max: self.s_max.max(other.s_max),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct BoundsAccumulator {
    bounds: IntervalBounds,
    has_pair: bool,
}

impl Default for BoundsAccumulator {
    fn default() -> Self {
        Self {
            bounds: IntervalBounds {
                t_min: f64::INFINITY,
                t_max: f64::NEG_INFINITY,
                s_min: f64::INFINITY,
                s_max: f64::NEG_INFINITY,
            },
            has_pair: false,
        }
    }
}

impl BoundsAccumulator {
    pub(crate) fn push(&mut self, dt: f64, ds: f64, is_pair: bool) {
        let b = &mut self.bounds;
        b.t_min = b.t_min.min(dt);
        b.t_max = b.t_max.max(dt);
        b.s_min = b.s_min.min(ds);
        b.s_max = b.s_max.max(ds);
        self.has_pair |= is_pair;
    }

    pub(crate) fn finish(self) -> Result<IntervalBounds, RelationError> {
        if self.has_pair {
            Ok(self.bounds)
        } else {
            Err(RelationError::NoIntervals)
        }
    }
}

/// Min and max of every entry in the valid region of each matrix.
pub fn interval_bounds<'a, I>(relations: I) -> Result<IntervalBounds, RelationError>
where
    I: IntoIterator<Item = &'a RelationMatrices>,
{
    let mut acc = BoundsAccumulator::default();
    for r in relations {
        for i in 0..r.valid_len {
            for j in 0..r.valid_len {
                acc.push(r.t(i, j), r.s(i, j), i != j);
            }
        }
    }
    acc.finish()
}
