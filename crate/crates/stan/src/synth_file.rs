//! Synthetic check-ins in the raw text format `ingest` reads.

use std::io::Write;

use chrono::{DateTime, SecondsFormat};
use serde::Serialize;
use stan_core::synth::{SynthConfig, SynthData, SynthLayout};

/// One `user,venue,lat,lon,time` line per check-in, users in id order.
pub fn write_checkins<W: Write>(data: &SynthData, mut out: W) -> std::io::Result<()> {
    for traj in &data.trajectories {
        for c in traj {
            let loc = &data.layout.locations[c.location_id as usize - 1];
            let time = DateTime::from_timestamp(c.timestamp, 0)
                .expect("synthetic timestamps are in range")
                .to_rfc3339_opts(SecondsFormat::Secs, true);
            writeln!(out, "user-{:03},{},{:?},{:?},{}", c.user_id, loc.key, loc.gps.lat, loc.gps.lon, time)?;
        }
    }
    out.flush()
}

#[derive(Serialize)]
struct Description<'a> {
    config: &'a SynthConfig,
    layout: &'a SynthLayout,
    num_checkins: usize,
}

/// Config and location layout as JSON.
pub fn describe(data: &SynthData) -> String {
    let d = Description { config: &data.config, layout: &data.layout, num_checkins: data.num_checkins() };
    serde_json::to_string_pretty(&d).expect("synthetic description serializes")
}
