//! Check-in trajectories, fixed-length padding, and the per-user
//! train/validation/test split.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::relation::{self, Gps, IntervalBounds, RelationError};

/// Users with fewer check-ins than this are dropped from the split.
pub const MIN_TRAJECTORY_LEN: usize = 5;

/// One visit. Ids are dense and 1-based; an all-zero value is padding.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CheckIn {
    pub user_id: u32,
    pub location_id: u32,
    /// Seconds since the Unix epoch, UTC.
    pub timestamp: i64,
    pub gps: Gps,
}

impl CheckIn {
    pub fn is_padding(&self) -> bool {
        self.user_id == 0 && self.location_id == 0
    }
}

/// A fixed-length input window plus the check-in to predict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySequence {
    pub user_id: u32,
    /// Exactly `n` slots; slots at `valid_len..` are padding.
    pub entries: Vec<CheckIn>,
    pub valid_len: usize,
    pub label_location: u32,
    pub label_time: i64,
}

impl TrajectorySequence {
    pub fn n(&self) -> usize {
        self.entries.len()
    }

    pub fn valid(&self) -> &[CheckIn] {
        &self.entries[..self.valid_len]
    }
}

/// Keep the most recent `n` check-ins and zero-pad on the right.
///
/// The label fields are left zero; callers that know the target fill them in.
pub fn pad_truncate(input: &[CheckIn], n: usize) -> TrajectorySequence {
    assert!(n >= 1, "pad_truncate: n must be at least 1");
    let keep = &input[input.len().saturating_sub(n)..];
    let mut entries = Vec::with_capacity(n);
    entries.extend_from_slice(keep);
    entries.resize(n, CheckIn::default());
    TrajectorySequence {
        user_id: keep.first().map_or(0, |c| c.user_id),
        entries,
        valid_len: keep.len(),
        label_location: 0,
        label_time: 0,
    }
}

/// Input prefix `trajectory[..input_len]` labelled with `trajectory[input_len]`.
pub fn prefix_example(trajectory: &[CheckIn], input_len: usize, n: usize) -> TrajectorySequence {
    let label = trajectory[input_len];
    let mut seq = pad_truncate(&trajectory[..input_len], n);
    seq.user_id = label.user_id;
    seq.label_location = label.location_id;
    seq.label_time = label.timestamp;
    seq
}

#[derive(Debug, Clone, PartialEq)]
pub struct UserSplit {
    pub train: Vec<TrajectorySequence>,
    pub val: TrajectorySequence,
    pub test: TrajectorySequence,
}

/// Split one user's time-ordered trajectory of `m` check-ins.
///
/// Training uses every prefix of length `1..=m-3` (labelled by the next
/// check-in), validation the first `m-2`, test the first `m-1`. Returns
/// `None` when `m < MIN_TRAJECTORY_LEN`.
pub fn split_user(trajectory: &[CheckIn], n: usize) -> Option<UserSplit> {
    let m = trajectory.len();
    if m < MIN_TRAJECTORY_LEN {
        return None;
    }
    Some(UserSplit {
        train: (1..=m - 3).map(|len| prefix_example(trajectory, len, n)).collect(),
        val: prefix_example(trajectory, m - 2, n),
        test: prefix_example(trajectory, m - 1, n),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub num_users: usize,
    pub num_locations: usize,
    pub num_checkins: usize,
    /// GPS of location `id` at index `id - 1`.
    pub location_gps: Vec<Gps>,
}

/// Reference to an example without materializing its padded window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExampleRef {
    /// 0-based index into [`Dataset::trajectories`].
    pub user: usize,
    /// Number of leading check-ins used as input; the label is the next one.
    pub input_len: usize,
}

/// Ingested check-ins with the split applied.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub stats: DatasetStats,
    /// Trajectory of user `id` at index `id - 1`, ascending by time.
    pub trajectories: Vec<Vec<CheckIn>>,
    pub n: usize,
    pub train: Vec<ExampleRef>,
    pub val: Vec<ExampleRef>,
    pub test: Vec<ExampleRef>,
    pub dropped_users: usize,
}

impl Dataset {
    /// Apply the split protocol to every user in id order.
    pub fn build(stats: DatasetStats, trajectories: Vec<Vec<CheckIn>>, n: usize) -> Self {
        let mut train = Vec::new();
        let mut val = Vec::new();
        let mut test = Vec::new();
        let mut dropped_users = 0;
        for (user, traj) in trajectories.iter().enumerate() {
            let m = traj.len();
            if m < MIN_TRAJECTORY_LEN {
                dropped_users += 1;
                continue;
            }
            train.extend((1..=m - 3).map(|input_len| ExampleRef { user, input_len }));
            val.push(ExampleRef { user, input_len: m - 2 });
            test.push(ExampleRef { user, input_len: m - 1 });
        }
        Self {
            stats,
            trajectories,
            n,
            train,
            val,
            test,
            dropped_users,
        }
    }

    pub fn num_locations(&self) -> usize {
        self.stats.num_locations
    }

    pub fn num_users(&self) -> usize {
        self.stats.num_users
    }

    pub fn locations(&self) -> &[Gps] {
        &self.stats.location_gps
    }

    pub fn materialize(&self, ex: ExampleRef) -> TrajectorySequence {
        prefix_example(&self.trajectories[ex.user], ex.input_len, self.n)
    }

    /// Interval bounds over every training window, without building the
    /// windows one by one.
    ///
    /// Train inputs are the `n`-truncated prefixes of `traj[..m-3]`, so the
    /// pairs they cover are exactly the pairs `(i, j)` with `j - i < n` inside
    /// the first `m - 3` check-ins.
    pub fn interval_bounds(&self) -> Result<IntervalBounds, RelationError> {
        let mut acc = relation::BoundsAccumulator::default();
        for ex in &self.val {
            let traj = &self.trajectories[ex.user];
            let limit = traj.len() - 3;
            for i in 0..limit {
                for j in i..limit.min(i + self.n) {
                    let dt = relation::hours_between(traj[i].timestamp, traj[j].timestamp);
                    let ds = relation::haversine(traj[i].gps, traj[j].gps);
                    acc.push(dt, ds, i != j);
                }
            }
        }
        acc.finish()
    }
}

/// Check that the sum of `m - 3` over kept users matches the train count.
pub fn expected_train_count(trajectories: &[Vec<CheckIn>]) -> usize {
    trajectories
        .iter()
        .map(Vec::len)
        .filter(|&m| m >= MIN_TRAJECTORY_LEN)
        .map(|m| m - 3)
        .sum()
}

/// Zeroed padding window, used when a caller needs an empty sequence.
pub fn empty_sequence(n: usize) -> TrajectorySequence {
    TrajectorySequence {
        user_id: 0,
        entries: vec![CheckIn::default(); n],
        valid_len: 0,
        label_location: 0,
        label_time: 0,
    }
}
