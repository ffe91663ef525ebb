//! Annotator overrides for absolute edges.
//!
//! One entry per line, `target,tier,weight`: target is a single absolute-edge id (its
//! frame) or an inclusive frame range `start-end`; tier is `default`, `downweighted`
//! or `removed`; weight is optional and, when present, replaces the tier's scalar.
//! Later entries take precedence where targets overlap.

use std::fmt;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const OVERRIDE_HEADER: &str = "# target,tier,weight";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tier {
    #[default]
    Default,
    Downweighted,
    Removed,
}

impl fmt::Display for Tier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Tier::Default => "default",
            Tier::Downweighted => "downweighted",
            Tier::Removed => "removed",
        })
    }
}

impl FromStr for Tier {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "default" => Ok(Tier::Default),
            "downweighted" => Ok(Tier::Downweighted),
            "removed" => Ok(Tier::Removed),
            other => Err(format!("unknown tier '{other}'")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OverrideTarget {
    /// Absolute edge of one frame.
    Edge(usize),
    /// Inclusive frame range.
    Range { start: usize, end: usize },
}

impl OverrideTarget {
    pub fn frames(&self) -> std::ops::RangeInclusive<usize> {
        match *self {
            OverrideTarget::Edge(f) => f..=f,
            OverrideTarget::Range { start, end } => start..=end,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OverrideEntry {
    pub target: OverrideTarget,
    pub tier: Tier,
    pub weight: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct OverrideFile {
    pub entries: Vec<OverrideEntry>,
}

impl OverrideFile {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Checks every target lies within `0..frame_count`.
    pub fn validate(&self, frame_count: usize) -> Result<()> {
        for e in &self.entries {
            let r = e.target.frames();
            if *r.end() >= frame_count {
                return Err(Error::InvalidInput(format!(
                    "override {}..={} outside the sequence of {frame_count} frames",
                    r.start(),
                    r.end()
                )));
            }
        }
        Ok(())
    }

    /// Effective tier and weight override for `frame`.
    pub fn resolve(&self, frame: usize) -> (Tier, Option<f64>) {
        self.entries
            .iter()
            .rev()
            .find(|e| e.target.frames().contains(&frame))
            .map_or((Tier::Default, None), |e| (e.tier, e.weight))
    }
}

pub fn format_overrides(file: &OverrideFile) -> String {
    let mut out = String::from(OVERRIDE_HEADER);
    out.push('\n');
    for e in &file.entries {
        match e.target {
            OverrideTarget::Edge(f) => {
                let _ = write!(out, "{f}");
            }
            OverrideTarget::Range { start, end } => {
                let _ = write!(out, "{start}-{end}");
            }
        }
        let _ = write!(out, ",{}", e.tier);
        out.push(',');
        if let Some(w) = e.weight {
            let _ = write!(out, "{w}");
        }
        out.push('\n');
    }
    out
}

pub fn parse_overrides(text: &str, path: &Path) -> Result<OverrideFile> {
    let mut entries = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if !(2..=3).contains(&f.len()) {
            return Err(Error::parse(path, line_no, "expected target,tier[,weight]"));
        }
        let frame = |s: &str| -> Result<usize> {
            s.parse()
                .map_err(|_| Error::parse(path, line_no, format!("bad frame '{s}'")))
        };
        let target = match f[0].split_once('-') {
            Some((a, b)) => {
                let (start, end) = (frame(a)?, frame(b)?);
                if start > end {
                    return Err(Error::parse(path, line_no, format!("empty range {start}-{end}")));
                }
                OverrideTarget::Range { start, end }
            }
            None => OverrideTarget::Edge(frame(f[0])?),
        };
        let tier: Tier = f[1].parse().map_err(|e: String| Error::parse(path, line_no, e))?;
        let weight = match f.get(2) {
            None | Some(&"") => None,
            Some(w) => {
                let w: f64 = w
                    .parse()
                    .map_err(|_| Error::parse(path, line_no, format!("bad weight '{w}'")))?;
                if !(w.is_finite() && w > 0.0) {
                    return Err(Error::parse(path, line_no, "weight must be positive"));
                }
                Some(w)
            }
        };
        entries.push(OverrideEntry { target, tier, weight });
    }
    Ok(OverrideFile { entries })
}

pub fn read_overrides(path: &Path) -> Result<OverrideFile> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_overrides(&text, path)
}

pub fn write_overrides(path: &Path, file: &OverrideFile) -> Result<()> {
    std::fs::write(path, format_overrides(file)).map_err(|e| Error::io(path, e))
}
