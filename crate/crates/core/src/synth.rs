//! Synthetic check-ins with a planted weekly routine, and the exact
//! conditional distribution of the next visit under that routine.
//!
//! Every user lives at one home and works at one office. On Friday evening
//! they eat at a restaurant next to the office; on Saturday they visit the
//! mall and then eat at one of the restaurants near the mall. The two
//! restaurant clusters sit far apart, so they are related only through the
//! weekly rhythm.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use libm::cos;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::relation::{haversine, hour_of_week, Gps};
use crate::trajectory::{CheckIn, Dataset, DatasetStats};

/// 2020-01-05 00:00 UTC, a Sunday.
pub const DEFAULT_START: i64 = 1_578_182_400;
const DAY: i64 = 86_400;
const KM_PER_DEG_LAT: f64 = 111.195;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SynthError {
    #[error("invalid synthetic config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub num_users: usize,
    pub weeks: usize,
    pub homes: usize,
    pub works: usize,
    /// Restaurants in the cluster around the mall.
    pub near_mall: usize,
    /// Locations reached only by noise visits.
    pub noise_locations: usize,
    /// Probability that Friday dinner is the fixed restaurant by the office
    /// (otherwise a near-mall restaurant).
    pub friday_fixed_prob: f64,
    /// Probability that Saturday dinner is in the near-mall cluster
    /// (otherwise the fixed restaurant by the office).
    pub saturday_mall_prob: f64,
    /// Probability that a routine visit is replaced by a uniform draw over
    /// all locations.
    pub noise_rate: f64,
    /// Restaurants sit within this many hectometers of their anchor.
    pub jitter_hm: f64,
    /// Distance between the office district and the mall, kilometers.
    pub cluster_separation_km: f64,
    /// First day of the first week; must be a Sunday at 00:00 UTC.
    pub start: i64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            num_users: 50,
            weeks: 40,
            homes: 8,
            works: 4,
            near_mall: 3,
            noise_locations: 10,
            friday_fixed_prob: 1.0,
            saturday_mall_prob: 1.0,
            noise_rate: 0.1,
            jitter_hm: 3.0,
            cluster_separation_km: 15.0,
            start: DEFAULT_START,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn num_locations(&self) -> usize {
        self.homes + 2 * self.works + 1 + self.near_mall + self.noise_locations
    }

    pub fn checkins_per_user(&self) -> usize {
        self.weeks * TEMPLATE.len()
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::Config(m));
        for (name, p) in [
            ("friday_fixed_prob", self.friday_fixed_prob),
            ("saturday_mall_prob", self.saturday_mall_prob),
            ("noise_rate", self.noise_rate),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} = {p} is not a probability"));
            }
        }
        if self.num_users == 0 || self.weeks == 0 || self.homes == 0 || self.works == 0 || self.near_mall == 0 {
            return bad("users, weeks, homes, works and near_mall must be positive".into());
        }
        if !(self.jitter_hm >= 0.0 && self.jitter_hm <= 20.0) {
            return bad(format!("jitter_hm = {} must lie in [0, 20]", self.jitter_hm));
        }
        if self.cluster_separation_km < 12.0 {
            return bad(format!(
                "cluster_separation_km = {} leaves the restaurant clusters closer than 10 km",
                self.cluster_separation_km
            ));
        }
        if self.start.rem_euclid(7 * DAY) != 3 * DAY {
            return bad(format!("start = {} is not a Sunday at 00:00 UTC", self.start));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LocationKind {
    Home(usize),
    Work(usize),
    /// The fixed Friday restaurant next to office `i`.
    WorkRestaurant(usize),
    Mall,
    MallRestaurant(usize),
    Noise(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthLocation {
    pub key: String,
    pub kind: LocationKind,
    pub gps: Gps,
}

/// What a routine visit is for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Role {
    Home,
    Work,
    FridayDinner,
    Mall,
    SaturdayDinner,
}

/// One week as (days after Sunday, hour, role).
pub const TEMPLATE: [(i64, i64, Role); 19] = [
    (0, 12, Role::Home),
    (1, 7, Role::Home),
    (1, 9, Role::Work),
    (1, 19, Role::Home),
    (2, 7, Role::Home),
    (2, 9, Role::Work),
    (2, 19, Role::Home),
    (3, 7, Role::Home),
    (3, 9, Role::Work),
    (3, 19, Role::Home),
    (4, 7, Role::Home),
    (4, 9, Role::Work),
    (4, 19, Role::Home),
    (5, 7, Role::Home),
    (5, 9, Role::Work),
    (5, 19, Role::FridayDinner),
    (5, 22, Role::Home),
    (6, 11, Role::Mall),
    (6, 19, Role::SaturdayDinner),
];

/// Routine role scheduled at an hour-of-week slot, if any.
pub fn role_at(slot: usize) -> Option<Role> {
    TEMPLATE.iter().find(|(day, hour, _)| slot_of(*day, *hour) == slot).map(|t| t.2)
}

fn slot_of(days_after_sunday: i64, hour: i64) -> usize {
    // hour_of_week counts from Monday, so Sunday is the last day
    (((days_after_sunday + 6) % 7) * 24 + hour) as usize
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthLayout {
    /// Location `id` at index `id - 1`.
    pub locations: Vec<SynthLocation>,
    pub homes: usize,
    pub works: usize,
    pub near_mall: usize,
}

impl SynthLayout {
    pub fn home(&self, user: u32) -> u32 {
        ((user as usize - 1) % self.homes + 1) as u32
    }

    pub fn work(&self, user: u32) -> u32 {
        (self.homes + (user as usize - 1) % self.works + 1) as u32
    }

    pub fn work_restaurant(&self, user: u32) -> u32 {
        self.work(user) + self.works as u32
    }

    pub fn mall(&self) -> u32 {
        (self.homes + 2 * self.works + 1) as u32
    }

    pub fn mall_restaurants(&self) -> core::ops::RangeInclusive<u32> {
        let first = self.mall() + 1;
        first..=first + self.near_mall as u32 - 1
    }

    pub fn gps(&self, id: u32) -> Gps {
        self.locations[id as usize - 1].gps
    }

    /// Routine distribution of `role` for `user`, before noise.
    pub fn template(&self, config: &SynthConfig, user: u32, role: Role) -> Vec<f64> {
        let mut p = vec![0.0; self.locations.len()];
        let mall_set: Vec<u32> = self.mall_restaurants().collect();
        let mut put = |id: u32, w: f64| p[id as usize - 1] += w;
        match role {
            Role::Home => put(self.home(user), 1.0),
            Role::Work => put(self.work(user), 1.0),
            Role::Mall => put(self.mall(), 1.0),
            Role::FridayDinner => {
                put(self.work_restaurant(user), config.friday_fixed_prob);
                for &id in &mall_set {
                    put(id, (1.0 - config.friday_fixed_prob) / mall_set.len() as f64);
                }
            }
            Role::SaturdayDinner => {
                put(self.work_restaurant(user), 1.0 - config.saturday_mall_prob);
                for &id in &mall_set {
                    put(id, config.saturday_mall_prob / mall_set.len() as f64);
                }
            }
        }
        p
    }
}

fn offset(center: Gps, north_km: f64, east_km: f64) -> Gps {
    let lat = center.lat + north_km / KM_PER_DEG_LAT;
    let lon = center.lon + east_km / (KM_PER_DEG_LAT * cos(center.lat.to_radians()));
    Gps::new(lat, lon)
}

fn jittered(center: Gps, radius_km: f64, rng: &mut ChaCha8Rng) -> Gps {
    if radius_km == 0.0 {
        return center;
    }
    offset(center, rng.gen_range(-radius_km..=radius_km), rng.gen_range(-radius_km..=radius_km))
}

/// Place every location. Homes sit around the city center, offices in a
/// district to the north, the mall the same distance to the east.
pub fn layout(config: &SynthConfig) -> SynthLayout {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(0);
    let center = Gps::new(40.73, -73.99);
    let sep = config.cluster_separation_km;
    let office_district = offset(center, sep, 0.0);
    let mall_gps = jittered(offset(center, 0.0, sep), 0.5, &mut rng);
    let jitter_km = config.jitter_hm / 10.0;
    let mut locations = Vec::with_capacity(config.num_locations());
    let mut push = |kind: LocationKind, gps: Gps| {
        let key = format!("poi-{:03}", locations.len() + 1);
        locations.push(SynthLocation { key, kind, gps });
    };
    for i in 0..config.homes {
        push(LocationKind::Home(i), jittered(center, 3.0, &mut rng));
    }
    let works: Vec<Gps> = (0..config.works).map(|_| jittered(office_district, 1.0, &mut rng)).collect();
    for (i, &w) in works.iter().enumerate() {
        push(LocationKind::Work(i), w);
    }
    for (i, &w) in works.iter().enumerate() {
        push(LocationKind::WorkRestaurant(i), jittered(w, jitter_km, &mut rng));
    }
    push(LocationKind::Mall, mall_gps);
    for i in 0..config.near_mall {
        push(LocationKind::MallRestaurant(i), jittered(mall_gps, jitter_km, &mut rng));
    }
    for i in 0..config.noise_locations {
        push(LocationKind::Noise(i), jittered(center, 0.8 * sep, &mut rng));
    }
    SynthLayout { locations, homes: config.homes, works: config.works, near_mall: config.near_mall }
}

impl SynthLayout {
    /// Smallest distance between a restaurant by an office and one by the
    /// mall, in hectometers.
    pub fn restaurant_cluster_gap(&self) -> f64 {
        let mut gap = f64::INFINITY;
        for a in &self.locations {
            if let LocationKind::WorkRestaurant(_) = a.kind {
                for b in &self.locations {
                    if let LocationKind::MallRestaurant(_) = b.kind {
                        gap = gap.min(haversine(a.gps, b.gps));
                    }
                }
            }
        }
        gap
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthData {
    pub config: SynthConfig,
    pub layout: SynthLayout,
    /// Trajectory of user `id` at index `id - 1`.
    pub trajectories: Vec<Vec<CheckIn>>,
}

fn draw(p: &[f64], rng: &mut ChaCha8Rng) -> u32 {
    let mut u: f64 = rng.gen();
    for (i, &w) in p.iter().enumerate() {
        if u < w {
            return i as u32 + 1;
        }
        u -= w;
    }
    // rounding left a sliver; fall back to the last supported id
    p.iter().rposition(|&w| w > 0.0).map_or(1, |i| i as u32 + 1)
}

pub fn generate(config: &SynthConfig) -> Result<SynthData, SynthError> {
    config.validate()?;
    let layout = layout(config);
    let big_l = layout.locations.len();
    let trajectories = (1..=config.num_users as u32)
        .map(|user| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(user as u64);
            let mut out = Vec::with_capacity(config.checkins_per_user());
            for week in 0..config.weeks as i64 {
                for &(day, hour, role) in &TEMPLATE {
                    let minute: i64 = rng.gen_range(0..60);
                    let timestamp = config.start + (7 * week + day) * DAY + hour * 3600 + minute * 60;
                    let location_id = if rng.gen::<f64>() < config.noise_rate {
                        rng.gen_range(1..=big_l as u32)
                    } else {
                        draw(&layout.template(config, user, role), &mut rng)
                    };
                    out.push(CheckIn { user_id: user, location_id, timestamp, gps: layout.gps(location_id) });
                }
            }
            out
        })
        .collect();
    Ok(SynthData { config: config.clone(), layout, trajectories })
}

impl SynthData {
    pub fn num_checkins(&self) -> usize {
        self.trajectories.iter().map(Vec::len).sum()
    }

    /// Dataset over every laid-out location, visited or not.
    pub fn to_dataset(&self, n: usize) -> Dataset {
        let stats = DatasetStats {
            num_users: self.trajectories.len(),
            num_locations: self.layout.locations.len(),
            num_checkins: self.num_checkins(),
            location_gps: self.layout.locations.iter().map(|l| l.gps).collect(),
        };
        Dataset::build(stats, self.trajectories.clone(), n)
    }
}

/// True conditional distribution of the next visit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleAnswer {
    /// Probability of location `id` at index `id - 1`.
    pub probs: Vec<f64>,
}

impl OracleAnswer {
    /// Expected Recall@k of the best possible ranking.
    pub fn bayes_recall(&self, k: usize) -> f64 {
        let mut p = self.probs.clone();
        p.sort_by(|a, b| b.total_cmp(a));
        p.iter().take(k).sum()
    }
}

/// Distribution of `user`'s next visit at the hour-of-week slot of
/// `next_time`. Slots outside the routine get the pure noise prior.
pub fn oracle(config: &SynthConfig, layout: &SynthLayout, user: u32, next_time: i64) -> OracleAnswer {
    let big_l = layout.locations.len();
    let uniform = 1.0 / big_l as f64;
    let probs = match role_at(hour_of_week(next_time)) {
        None => vec![uniform; big_l],
        Some(role) => layout
            .template(config, user, role)
            .into_iter()
            .map(|p| (1.0 - config.noise_rate) * p + config.noise_rate * uniform)
            .collect(),
    };
    OracleAnswer { probs }
}
