//! Raw check-in parsing.
//!
//! A record is one line of delimited fields. A field-order descriptor names
//! the column of each field, for example `user,venue,lat,lon,time`; `_`
//! skips a column. Lines are split on tabs when the line contains one and on
//! commas otherwise.

use std::collections::HashMap;
use std::io::BufRead;
use std::str::FromStr;

use chrono::{DateTime, NaiveDateTime};
use log::warn;
use stan_core::trajectory::{CheckIn, DatasetStats};
use stan_core::Gps;

use crate::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Field {
    User,
    Venue,
    Lat,
    Lon,
    Time,
    Skip,
}

/// Column positions of the five fields a check-in needs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldOrder {
    columns: Vec<Field>,
}

impl FieldOrder {
    pub const DEFAULT: &'static str = "user,venue,lat,lon,time";
    /// Foursquare NYC/TKY dumps: user, venue, category id, category name,
    /// latitude, longitude, timezone offset, UTC time.
    pub const TSMC: &'static str = "user,venue,_,_,lat,lon,_,time";

    fn index(&self, f: Field) -> usize {
        self.columns.iter().position(|&c| c == f).expect("validated on parse")
    }

    fn width(&self) -> usize {
        self.columns.len()
    }
}

impl Default for FieldOrder {
    fn default() -> Self {
        Self::DEFAULT.parse().expect("default descriptor is valid")
    }
}

impl FromStr for FieldOrder {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        let s = match s {
            "default" => Self::DEFAULT,
            "tsmc" => Self::TSMC,
            other => other,
        };
        let mut columns = Vec::new();
        for name in s.split(',').map(str::trim) {
            columns.push(match name {
                "user" => Field::User,
                "venue" => Field::Venue,
                "lat" => Field::Lat,
                "lon" => Field::Lon,
                "time" => Field::Time,
                "_" => Field::Skip,
                _ => return Err(Error::Config(format!("unknown field {name:?} in format {s:?}"))),
            });
        }
        for f in [Field::User, Field::Venue, Field::Lat, Field::Lon, Field::Time] {
            if columns.iter().filter(|&&c| c == f).count() != 1 {
                return Err(Error::Config(format!("format {s:?} must name {f:?} exactly once")));
            }
        }
        Ok(Self { columns })
    }
}

/// Parse a timestamp as epoch seconds, RFC 3339, or the
/// `Tue Apr 03 18:00:09 +0000 2012` form used by Foursquare dumps.
pub fn parse_timestamp(s: &str) -> Option<i64> {
    let s = s.trim();
    if let Ok(secs) = s.parse::<i64>() {
        return Some(secs);
    }
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Some(t.timestamp());
    }
    if let Ok(t) = DateTime::parse_from_str(s, "%a %b %d %H:%M:%S %z %Y") {
        return Some(t.timestamp());
    }
    NaiveDateTime::parse_from_str(s, "%Y-%m-%d %H:%M:%S").ok().map(|t| t.and_utc().timestamp())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SkipCounts {
    pub blank: usize,
    /// Wrong column count or an unparseable number or time.
    pub malformed: usize,
    pub out_of_range: usize,
}

impl SkipCounts {
    pub fn total(&self) -> usize {
        self.blank + self.malformed + self.out_of_range
    }
}

/// Parsed check-ins with dense ids assigned in order of first appearance.
#[derive(Debug, Clone, PartialEq)]
pub struct Ingested {
    pub stats: DatasetStats,
    /// Trajectory of user `id` at index `id - 1`, ascending by time.
    pub trajectories: Vec<Vec<CheckIn>>,
    pub user_keys: Vec<String>,
    pub venue_keys: Vec<String>,
    pub skipped: SkipCounts,
}

fn intern(map: &mut HashMap<String, u32>, keys: &mut Vec<String>, key: &str) -> u32 {
    if let Some(&id) = map.get(key) {
        return id;
    }
    keys.push(key.to_string());
    let id = keys.len() as u32;
    map.insert(key.to_string(), id);
    id
}

pub fn parse_checkins<R: BufRead>(source: R, format: &FieldOrder) -> Result<Ingested, Error> {
    let (ui, vi, lai, loi, ti) = (
        format.index(Field::User),
        format.index(Field::Venue),
        format.index(Field::Lat),
        format.index(Field::Lon),
        format.index(Field::Time),
    );
    let mut users = HashMap::new();
    let mut venues = HashMap::new();
    let mut user_keys = Vec::new();
    let mut venue_keys = Vec::new();
    let mut gps: Vec<Gps> = Vec::new();
    let mut trajectories: Vec<Vec<CheckIn>> = Vec::new();
    let mut skipped = SkipCounts::default();
    let mut conflicts = 0usize;

    for line in source.lines() {
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            skipped.blank += 1;
            continue;
        }
        let fields: Vec<&str> = if line.contains('\t') { line.split('\t').collect() } else { line.split(',').collect() };
        if fields.len() != format.width() {
            skipped.malformed += 1;
            continue;
        }
        let (Ok(lat), Ok(lon), Some(timestamp)) =
            (fields[lai].trim().parse::<f64>(), fields[loi].trim().parse::<f64>(), parse_timestamp(fields[ti]))
        else {
            skipped.malformed += 1;
            continue;
        };
        let point = Gps::new(lat, lon);
        if !point.is_valid() {
            skipped.out_of_range += 1;
            continue;
        }
        let (user_key, venue_key) = (fields[ui].trim(), fields[vi].trim());
        if user_key.is_empty() || venue_key.is_empty() {
            skipped.malformed += 1;
            continue;
        }
        let user_id = intern(&mut users, &mut user_keys, user_key);
        let location_id = intern(&mut venues, &mut venue_keys, venue_key);
        if location_id as usize > gps.len() {
            gps.push(point);
        } else if gps[location_id as usize - 1] != point {
            conflicts += 1;
        }
        if user_id as usize > trajectories.len() {
            trajectories.push(Vec::new());
        }
        trajectories[user_id as usize - 1].push(CheckIn {
            user_id,
            location_id,
            timestamp,
            gps: gps[location_id as usize - 1],
        });
    }
    if conflicts > 0 {
        warn!("{conflicts} check-ins gave a venue different coordinates; kept the first seen");
    }
    if skipped.total() > skipped.blank {
        warn!(
            "skipped {} malformed and {} out-of-range lines",
            skipped.malformed, skipped.out_of_range
        );
    }
    if trajectories.is_empty() {
        return Err(Error::Input("no valid records".into()));
    }
    for t in &mut trajectories {
        t.sort_by_key(|c| c.timestamp);
    }
    let stats = DatasetStats {
        num_users: user_keys.len(),
        num_locations: venue_keys.len(),
        num_checkins: trajectories.iter().map(Vec::len).sum(),
        location_gps: gps,
    };
    Ok(Ingested { stats, trajectories, user_keys, venue_keys, skipped })
}
