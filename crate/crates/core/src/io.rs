//! Configuration files, trajectory CSV and run manifests.
//!
//! The configuration format is line oriented:
//!
//! ```text
//! # comment
//! schema_version = 1
//! [kernel]
//! family = truncated
//! theta_min = 0.01
//! ```
//!
//! Keys before the first section header belong to the root section `""`.
//! Values are raw strings; typed getters parse them on demand.

use crate::error::{Error, Result};
use crate::moment_bounds::{MomentTrajectory, Provenance};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::io::{Read, Write};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Config {
    sections: BTreeMap<String, BTreeMap<String, String>>,
}

fn valid_name(s: &str) -> bool {
    !s.is_empty()
        && s.chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-' || c == '.')
}

impl Config {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Config::new();
        let mut section = String::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            let err = |msg: &str| Error::Parse {
                line: i + 1,
                msg: msg.to_string(),
            };
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| err("unterminated section header"))?
                    .trim();
                if !valid_name(name) {
                    return Err(err("invalid section name"));
                }
                section = name.to_string();
                cfg.sections.entry(section.clone()).or_default();
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| err("expected key = value"))?;
            let (k, v) = (k.trim(), v.trim());
            if !valid_name(k) {
                return Err(err("invalid key"));
            }
            if v.contains('\n') || v.starts_with('[') {
                return Err(err("invalid value"));
            }
            let sec = cfg.sections.entry(section.clone()).or_default();
            if sec.insert(k.to_string(), v.to_string()).is_some() {
                return Err(err(&format!("duplicate key {k}")));
            }
        }
        Ok(cfg)
    }

    /// Canonical text: root keys first, then sections in name order, keys sorted.
    pub fn render(&self) -> String {
        let mut out = String::new();
        if let Some(root) = self.sections.get("") {
            for (k, v) in root {
                out.push_str(&format!("{k} = {v}\n"));
            }
        }
        for (name, sec) in self.sections.iter().filter(|(n, _)| !n.is_empty()) {
            if !out.is_empty() {
                out.push('\n');
            }
            out.push_str(&format!("[{name}]\n"));
            for (k, v) in sec {
                out.push_str(&format!("{k} = {v}\n"));
            }
        }
        out
    }

    pub fn set(&mut self, section: &str, key: &str, value: impl Into<String>) -> Result<()> {
        let value = value.into();
        if !(section.is_empty() || valid_name(section))
            || !valid_name(key)
            || value.contains('\n')
            || value.trim() != value
        {
            return Err(Error::domain(format!("cannot store {section}.{key} = {value:?}")));
        }
        self.sections
            .entry(section.to_string())
            .or_default()
            .insert(key.to_string(), value);
        Ok(())
    }

    pub fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.sections.get(section)?.get(key).map(String::as_str)
    }

    pub fn has_section(&self, section: &str) -> bool {
        self.sections.contains_key(section)
    }

    pub fn get_f64(&self, section: &str, key: &str) -> Result<Option<f64>> {
        self.get(section, key)
            .map(|v| {
                v.parse::<f64>()
                    .map_err(|_| Error::domain(format!("{section}.{key}: expected a number, got {v:?}")))
            })
            .transpose()
    }

    pub fn get_u64(&self, section: &str, key: &str) -> Result<Option<u64>> {
        self.get(section, key)
            .map(|v| {
                v.parse::<u64>()
                    .map_err(|_| Error::domain(format!("{section}.{key}: expected an integer, got {v:?}")))
            })
            .transpose()
    }

    /// Comma-separated numbers.
    pub fn get_list(&self, section: &str, key: &str) -> Result<Option<Vec<f64>>> {
        self.get(section, key).map(parse_list).transpose()
    }

    pub fn schema_version(&self) -> Result<u32> {
        match self.get_u64("", "schema_version")? {
            None => Ok(SCHEMA_VERSION),
            Some(v) if v == u64::from(SCHEMA_VERSION) => Ok(SCHEMA_VERSION),
            Some(v) => Err(Error::domain(format!("unsupported schema_version {v}"))),
        }
    }
}

pub fn parse_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|x| x.trim())
        .filter(|x| !x.is_empty())
        .map(|x| {
            x.parse::<f64>()
                .map_err(|_| Error::domain(format!("expected a number, got {x:?}")))
        })
        .collect()
}

#[derive(Debug, Serialize, Deserialize)]
struct TrajectoryRow {
    t: f64,
    order: f64,
    value: f64,
    stderr: Option<f64>,
    #[serde(default)]
    ln_value: Option<f64>,
}

/// Writes columns `t, order, value, stderr, ln_value`. `value` may overflow to
/// inf for high orders; `ln_value` is always finite.
pub fn write_trajectory<W: Write>(traj: &MomentTrajectory, w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for (i, &t) in traj.times.iter().enumerate() {
        for (j, &q) in traj.orders.iter().enumerate() {
            let l = traj.ln_values[i][j];
            wr.serialize(TrajectoryRow {
                t,
                order: q,
                value: l.exp(),
                stderr: traj.stderr.as_ref().map(|s| s[i][j]),
                ln_value: Some(l),
            })
            .map_err(csv_err)?;
        }
    }
    wr.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    Error::Parse {
        line,
        msg: e.to_string(),
    }
}

/// Reads a trajectory CSV. The `ln_value` column is optional; the grid must be
/// complete (every order at every time).
pub fn read_trajectory<R: Read>(r: R, provenance: Provenance) -> Result<MomentTrajectory> {
    let mut rd = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    let mut rows: Vec<(usize, TrajectoryRow)> = Vec::new();
    for rec in rd.deserialize::<TrajectoryRow>() {
        let row = rec.map_err(csv_err)?;
        rows.push((rows.len() + 2, row));
    }
    if rows.is_empty() {
        return Err(Error::Parse {
            line: 1,
            msg: "trajectory has no rows".into(),
        });
    }
    let mut times: Vec<f64> = Vec::new();
    let mut orders: Vec<f64> = Vec::new();
    for (_, r) in &rows {
        if !times.contains(&r.t) {
            times.push(r.t);
        }
        if !orders.contains(&r.order) {
            orders.push(r.order);
        }
    }
    times.sort_by(f64::total_cmp);
    orders.sort_by(f64::total_cmp);
    let (nt, nq) = (times.len(), orders.len());
    let mut ln = vec![vec![f64::NAN; nq]; nt];
    let mut se = vec![vec![f64::NAN; nq]; nt];
    let mut seen = vec![vec![false; nq]; nt];
    let mut any_se = false;
    for (line, r) in &rows {
        let i = times.iter().position(|&x| x == r.t).expect("collected");
        let j = orders.iter().position(|&x| x == r.order).expect("collected");
        if seen[i][j] {
            return Err(Error::Parse {
                line: *line,
                msg: format!("duplicate row t={} order={}", r.t, r.order),
            });
        }
        seen[i][j] = true;
        let l = match r.ln_value {
            Some(l) => l,
            None if r.value > 0.0 => r.value.ln(),
            None => {
                return Err(Error::Parse {
                    line: *line,
                    msg: "value must be positive".into(),
                })
            }
        };
        if !l.is_finite() {
            return Err(Error::Parse {
                line: *line,
                msg: "moment is not finite".into(),
            });
        }
        ln[i][j] = l;
        if let Some(s) = r.stderr {
            any_se = true;
            se[i][j] = s;
        }
    }
    if seen.iter().flatten().any(|s| !s) {
        return Err(Error::Parse {
            line: 0,
            msg: "trajectory grid is incomplete".into(),
        });
    }
    let stderr = if any_se {
        if se.iter().flatten().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(Error::Parse {
                line: 0,
                msg: "stderr must be given for every row".into(),
            });
        }
        Some(se)
    } else {
        None
    };
    MomentTrajectory::from_ln(times, orders, ln, stderr, provenance)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputRecord {
    pub path: String,
    pub sha256: String,
}

/// Sidecar describing how an output was produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub schema_version: u32,
    pub command: String,
    pub code_version: String,
    pub seed: u64,
    /// Canonical configuration text; replaying it reproduces the outputs.
    pub config: String,
    #[serde(default)]
    pub parameters: BTreeMap<String, serde_json::Value>,
    #[serde(default)]
    pub outputs: Vec<OutputRecord>,
}

impl RunManifest {
    pub fn new(command: &str, seed: u64, config: &Config) -> Self {
        RunManifest {
            schema_version: SCHEMA_VERSION,
            command: command.to_string(),
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            config: config.render(),
            parameters: BTreeMap::new(),
            outputs: Vec::new(),
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let m: RunManifest = serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line(),
            msg: e.to_string(),
        })?;
        if m.schema_version != SCHEMA_VERSION {
            return Err(Error::Parse {
                line: 0,
                msg: format!("unsupported schema_version {}", m.schema_version),
            });
        }
        Config::parse(&m.config)?;
        Ok(m)
    }

    pub fn render(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}
