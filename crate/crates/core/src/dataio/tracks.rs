//! 2D point tracks: `query,frame,u,v,visible` (pixels, visible as 0/1).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

pub const TRACK_HEADER: &str = "# query,frame,u,v,visible";

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrackObservation {
    pub frame: usize,
    pub u: f64,
    pub v: f64,
    pub visible: bool,
}

/// Per query point, observations ordered by frame.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrackTable {
    tracks: Vec<Vec<TrackObservation>>,
}

impl TrackTable {
    pub fn new(queries: usize) -> Self {
        TrackTable {
            tracks: vec![Vec::new(); queries],
        }
    }

    pub fn from_tracks(tracks: Vec<Vec<TrackObservation>>) -> Self {
        TrackTable { tracks }
    }

    pub fn queries(&self) -> usize {
        self.tracks.len()
    }

    pub fn push(&mut self, query: usize, obs: TrackObservation) {
        if query >= self.tracks.len() {
            self.tracks.resize(query + 1, Vec::new());
        }
        self.tracks[query].push(obs);
    }

    pub fn track(&self, query: usize) -> &[TrackObservation] {
        &self.tracks[query]
    }

    /// Observation of `query` at `frame`, if any.
    pub fn at(&self, query: usize, frame: usize) -> Option<&TrackObservation> {
        let t = &self.tracks[query];
        t.binary_search_by_key(&frame, |o| o.frame)
            .ok()
            .map(|k| &t[k])
    }

    /// Frames observed by any query point, ascending.
    pub fn frames(&self) -> Vec<usize> {
        let mut f: Vec<usize> = self.tracks.iter().flatten().map(|o| o.frame).collect();
        f.sort_unstable();
        f.dedup();
        f
    }

    /// Checks visible observations lie in a `width` x `height` image.
    pub fn validate(&self, width: u32, height: u32) -> Result<()> {
        for (q, t) in self.tracks.iter().enumerate() {
            for o in t.iter().filter(|o| o.visible) {
                if !(o.u >= 0.0 && o.v >= 0.0 && o.u <= (width - 1) as f64 && o.v <= (height - 1) as f64)
                {
                    return Err(Error::InvalidInput(format!(
                        "track {q} frame {}: visible point ({}, {}) outside the image",
                        o.frame, o.u, o.v
                    )));
                }
            }
        }
        Ok(())
    }
}

pub fn format_tracks(table: &TrackTable) -> String {
    let mut out = String::new();
    out.push_str(TRACK_HEADER);
    out.push('\n');
    for (q, t) in table.tracks.iter().enumerate() {
        for o in t {
            let _ = writeln!(out, "{q},{},{},{},{}", o.frame, o.u, o.v, o.visible as u8);
        }
    }
    out
}

pub fn write_tracks(path: &Path, table: &TrackTable) -> Result<()> {
    std::fs::write(path, format_tracks(table)).map_err(|e| Error::io(path, e))
}

pub fn parse_tracks(text: &str, path: &Path) -> Result<TrackTable> {
    let mut by_query: BTreeMap<usize, Vec<TrackObservation>> = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 5 {
            return Err(Error::parse(path, line_no, format!("expected 5 fields, found {}", f.len())));
        }
        let bad = |what: &str| Error::parse(path, line_no, format!("bad {what}"));
        let query: usize = f[0].parse().map_err(|_| bad("query index"))?;
        let frame: usize = f[1].parse().map_err(|_| bad("frame index"))?;
        let u: f64 = f[2].parse().map_err(|_| bad("u"))?;
        let v: f64 = f[3].parse().map_err(|_| bad("v"))?;
        let visible = match f[4] {
            "0" => false,
            "1" => true,
            _ => return Err(bad("visibility flag")),
        };
        if !(u.is_finite() && v.is_finite()) {
            return Err(bad("pixel coordinate"));
        }
        let track = by_query.entry(query).or_default();
        if track.last().is_some_and(|o| o.frame >= frame) {
            return Err(Error::InvalidInput(format!(
                "{}:{line_no}: frames of query {query} not increasing",
                path.display()
            )));
        }
        track.push(TrackObservation { frame, u, v, visible });
    }
    let n = by_query.keys().next_back().map_or(0, |&q| q + 1);
    let mut table = TrackTable::new(n);
    for (q, t) in by_query {
        table.tracks[q] = t;
    }
    Ok(table)
}

pub fn read_tracks(path: &Path) -> Result<TrackTable> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_tracks(&text, path)
}
