//! Plain-text dataset file written by `ingest` and read by the other
//! commands.
//!
//! ```text
//! stan-dataset 1
//! users <U> locations <L> checkins <C>
//! loc <id> <lat> <lon> <key>
//! ...
//! user <id> <count> <key>
//! <location id> <timestamp>
//! ...
//! ```
//!
//! Coordinates use the shortest representation that parses back to the
//! same `f64`, so a write/read cycle is exact. Splits are not stored; they
//! follow from the trajectories and the window length.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use stan_core::trajectory::{CheckIn, Dataset, DatasetStats};
use stan_core::Gps;

use crate::ingest::Ingested;
use crate::Error;

const MAGIC: &str = "stan-dataset 1";

pub fn write<W: Write>(data: &Ingested, out: W) -> std::io::Result<()> {
    let mut w = BufWriter::new(out);
    writeln!(w, "{MAGIC}")?;
    let s = &data.stats;
    writeln!(w, "users {} locations {} checkins {}", s.num_users, s.num_locations, s.num_checkins)?;
    for (i, (g, key)) in s.location_gps.iter().zip(&data.venue_keys).enumerate() {
        writeln!(w, "loc {} {:?} {:?} {}", i + 1, g.lat, g.lon, key)?;
    }
    for (i, (t, key)) in data.trajectories.iter().zip(&data.user_keys).enumerate() {
        writeln!(w, "user {} {} {}", i + 1, t.len(), key)?;
        for c in t {
            writeln!(w, "{} {}", c.location_id, c.timestamp)?;
        }
    }
    w.flush()
}

pub fn save(data: &Ingested, path: &Path) -> Result<(), Error> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write(data, file).map_err(|e| Error::io(path, e))
}

fn bad(line: usize, what: &str) -> Error {
    Error::Format(format!("dataset line {line}: {what}"))
}

fn field<T: std::str::FromStr>(it: &mut std::str::SplitWhitespace<'_>, line: usize, what: &str) -> Result<T, Error> {
    it.next().and_then(|s| s.parse().ok()).ok_or_else(|| bad(line, what))
}

pub fn read<R: BufRead>(source: R) -> Result<Ingested, Error> {
    let mut lines = source.lines().enumerate().map(|(i, l)| (i + 1, l));
    let mut next = || -> Result<(usize, String), Error> {
        match lines.next() {
            Some((i, Ok(l))) => Ok((i, l)),
            Some((_, Err(e))) => Err(e.into()),
            None => Err(Error::Format("dataset file ends early".into())),
        }
    };
    let (_, magic) = next()?;
    if magic.trim() != MAGIC {
        return Err(Error::Format(format!("not a dataset file (header {magic:?})")));
    }
    let (ln, header) = next()?;
    let mut it = header.split_whitespace();
    let mut counts = [0usize; 3];
    for (slot, name) in counts.iter_mut().zip(["users", "locations", "checkins"]) {
        if it.next() != Some(name) {
            return Err(bad(ln, "expected counts header"));
        }
        *slot = field(&mut it, ln, name)?;
    }
    let [num_users, num_locations, num_checkins] = counts;
    let mut gps = Vec::with_capacity(num_locations);
    let mut venue_keys = Vec::with_capacity(num_locations);
    for id in 1..=num_locations {
        let (ln, l) = next()?;
        let mut it = l.splitn(5, ' ');
        if it.next() != Some("loc") || it.next().and_then(|s| s.parse::<usize>().ok()) != Some(id) {
            return Err(bad(ln, "expected location record"));
        }
        let lat: f64 = it.next().and_then(|s| s.parse().ok()).ok_or_else(|| bad(ln, "latitude"))?;
        let lon: f64 = it.next().and_then(|s| s.parse().ok()).ok_or_else(|| bad(ln, "longitude"))?;
        gps.push(Gps::new(lat, lon));
        venue_keys.push(it.next().unwrap_or_default().to_string());
    }
    let mut trajectories = Vec::with_capacity(num_users);
    let mut user_keys = Vec::with_capacity(num_users);
    for user_id in 1..=num_users as u32 {
        let (ln, l) = next()?;
        let mut it = l.splitn(4, ' ');
        if it.next() != Some("user") || it.next().and_then(|s| s.parse::<u32>().ok()) != Some(user_id) {
            return Err(bad(ln, "expected user record"));
        }
        let count: usize = it.next().and_then(|s| s.parse().ok()).ok_or_else(|| bad(ln, "check-in count"))?;
        user_keys.push(it.next().unwrap_or_default().to_string());
        let mut traj = Vec::with_capacity(count);
        for _ in 0..count {
            let (ln, l) = next()?;
            let mut it = l.split_whitespace();
            let location_id: u32 = field(&mut it, ln, "location id")?;
            let timestamp: i64 = field(&mut it, ln, "timestamp")?;
            if location_id == 0 || location_id as usize > num_locations {
                return Err(bad(ln, "location id out of range"));
            }
            traj.push(CheckIn { user_id, location_id, timestamp, gps: gps[location_id as usize - 1] });
        }
        trajectories.push(traj);
    }
    let total: usize = trajectories.iter().map(Vec::len).sum();
    if total != num_checkins {
        return Err(Error::Format(format!("header says {num_checkins} check-ins, found {total}")));
    }
    Ok(Ingested {
        stats: DatasetStats { num_users, num_locations, num_checkins, location_gps: gps },
        trajectories,
        user_keys,
        venue_keys,
        skipped: Default::default(),
    })
}

pub fn load(path: &Path) -> Result<Ingested, Error> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read(BufReader::new(file))
}

/// Load and split with window length `n`.
pub fn load_dataset(path: &Path, n: usize) -> Result<Dataset, Error> {
    let data = load(path)?;
    Ok(Dataset::build(data.stats, data.trajectories, n))
}
