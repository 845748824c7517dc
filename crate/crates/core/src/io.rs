//! On-disk formats.
//!
//! * Environment / preset files: TOML with `goal`, `start_position`,
//!   `start_velocity`, `dt`, `horizon_T`, `[[obstacles]]` (`center`,
//!   `radius`, `margin`) and an optional `[weights.stage]` /
//!   `[weights.terminal]` pair of named maps.
//! * Weights files: the same two weight tables on their own.
//! * Trajectories: CSV, one row per time step, `step,px,py,vx,vy,ux,uy`;
//!   the final row has empty control cells.
//! * Iteration metrics: CSV with [`METRICS_HEADER`].
//!
//! Floats are written with 17 significant digits. All writes go through a
//! temporary file in the destination directory followed by a rename.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::domain::{
    Control, EnvironmentSpec, FeatureLayout, ObstacleSpec, Phase, State, Trajectory, WeightVector,
};
use crate::error::{Error, Result};
use crate::irl::IterationRecord;

pub const TRAJECTORY_HEADER: [&str; 7] = ["step", "px", "py", "vx", "vy", "ux", "uy"];
pub const SAMPLES_HEADER: [&str; 8] = ["sample", "step", "px", "py", "vx", "vy", "ux", "uy"];
pub const METRICS_HEADER: [&str; 8] = [
    "iteration",
    "alpha",
    "M1",
    "M2",
    "traj_deviation",
    "cost_gap_learned_w",
    "cost_gap_true_w",
    "wallclock_s",
];

/// 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObstacleEntry {
    pub center: [f64; 2],
    pub radius: f64,
    pub margin: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct WeightTables {
    pub stage: BTreeMap<String, f64>,
    pub terminal: BTreeMap<String, f64>,
}

/// Raw contents of an environment file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentFile {
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub version: Option<u32>,
    pub goal: [f64; 2],
    pub start_position: [f64; 2],
    pub start_velocity: [f64; 2],
    pub dt: f64,
    #[serde(rename = "horizon_T")]
    pub horizon_t: usize,
    #[serde(default)]
    pub goal_tolerance: Option<f64>,
    #[serde(default)]
    pub alternative_starts: Vec<[f64; 2]>,
    #[serde(default)]
    pub obstacles: Vec<ObstacleEntry>,
    #[serde(default)]
    pub weights: Option<WeightTables>,
}

impl EnvironmentFile {
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::parse(origin, e.message()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn environment(&self) -> Result<EnvironmentSpec> {
        EnvironmentSpec::new(
            self.goal,
            State::new(self.start_position, self.start_velocity),
            self.obstacles
                .iter()
                .map(|o| ObstacleSpec::new(o.center, o.radius, o.margin))
                .collect(),
            self.horizon_t,
            self.dt,
        )
    }

    /// Truth weights in layout order, if the file carries them.
    pub fn weights(&self, layout: FeatureLayout) -> Result<Option<WeightVector>> {
        self.weights
            .as_ref()
            .map(|t| weights_from_tables(t, layout))
            .transpose()
    }

    pub fn to_toml(&self, layout: FeatureLayout) -> Result<String> {
        let mut out = String::new();
        let f = |v: f64| format!("{v:?}");
        let pair = |p: [f64; 2]| format!("[{}, {}]", f(p[0]), f(p[1]));
        if let Some(name) = &self.name {
            writeln!(out, "name = {name:?}").unwrap();
        }
        if let Some(version) = self.version {
            writeln!(out, "version = {version}").unwrap();
        }
        writeln!(out, "goal = {}", pair(self.goal)).unwrap();
        writeln!(out, "start_position = {}", pair(self.start_position)).unwrap();
        writeln!(out, "start_velocity = {}", pair(self.start_velocity)).unwrap();
        writeln!(out, "dt = {}", f(self.dt)).unwrap();
        writeln!(out, "horizon_T = {}", self.horizon_t).unwrap();
        if let Some(tol) = self.goal_tolerance {
            writeln!(out, "goal_tolerance = {}", f(tol)).unwrap();
        }
        if !self.alternative_starts.is_empty() {
            let starts: Vec<String> = self.alternative_starts.iter().map(|&p| pair(p)).collect();
            writeln!(out, "alternative_starts = [{}]", starts.join(", ")).unwrap();
        }
        for o in &self.obstacles {
            writeln!(out, "\n[[obstacles]]").unwrap();
            writeln!(out, "center = {}", pair(o.center)).unwrap();
            writeln!(out, "radius = {}", f(o.radius)).unwrap();
            writeln!(out, "margin = {}", f(o.margin)).unwrap();
        }
        if let Some(tables) = &self.weights {
            let w = weights_from_tables(tables, layout)?;
            out.push('\n');
            out.push_str(&weights_to_toml(&w, layout));
        }
        Ok(out)
    }
}

fn weights_from_tables(tables: &WeightTables, layout: FeatureLayout) -> Result<WeightVector> {
    let ids = layout.ids();
    let mut values = Vec::with_capacity(ids.len());
    for id in &ids {
        let (table, section) = match id.phase {
            Phase::Stage => (&tables.stage, "weights.stage"),
            Phase::Terminal => (&tables.terminal, "weights.terminal"),
        };
        let name = id.short_name();
        let v = table.get(&name).copied().ok_or_else(|| {
            Error::InvalidConfig(format!("missing weight `{name}` in [{section}]"))
        })?;
        if !(v.is_finite() && v >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "weight `{section}.{name}` must be finite and nonnegative, got {v}"
            )));
        }
        values.push(v);
    }
    for (table, phase, section) in [
        (&tables.stage, Phase::Stage, "weights.stage"),
        (&tables.terminal, Phase::Terminal, "weights.terminal"),
    ] {
        for key in table.keys() {
            if !ids
                .iter()
                .any(|id| id.phase == phase && &id.short_name() == key)
            {
                return Err(Error::InvalidConfig(format!(
                    "unknown weight `{key}` in [{section}]"
                )));
            }
        }
    }
    Ok(WeightVector(values))
}

pub fn weights_to_toml(w: &WeightVector, layout: FeatureLayout) -> String {
    let mut out = String::new();
    let mut phase = None;
    for (id, v) in layout.ids().iter().zip(w.as_slice()) {
        if phase != Some(id.phase) {
            if phase.is_some() {
                out.push('\n');
            }
            let section = match id.phase {
                Phase::Stage => "[weights.stage]",
                Phase::Terminal => "[weights.terminal]",
            };
            writeln!(out, "{section}").unwrap();
            phase = Some(id.phase);
        }
        writeln!(out, "{} = {v:?}", id.short_name()).unwrap();
    }
    out
}

#[derive(Deserialize)]
struct WeightsOnly {
    weights: WeightTables,
}

pub fn parse_weights(text: &str, layout: FeatureLayout, origin: &Path) -> Result<WeightVector> {
    let parsed: WeightsOnly =
        toml::from_str(text).map_err(|e| Error::parse(origin, e.message()))?;
    weights_from_tables(&parsed.weights, layout)
}

pub fn read_weights(path: &Path, layout: FeatureLayout) -> Result<WeightVector> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_weights(&text, layout, path)
}

pub fn write_weights(path: &Path, w: &WeightVector, layout: FeatureLayout) -> Result<()> {
    if w.len() != layout.len() {
        return Err(Error::DimensionMismatch {
            expected: layout.len(),
            found: w.len(),
        });
    }
    write_atomic(path, weights_to_toml(w, layout).as_bytes())
}

/// Writes `contents` to a temporary sibling of `path` and renames it into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(path, e))?;
    tmp.write_all(contents).map_err(|e| Error::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

fn trajectory_rows(tau: &Trajectory) -> impl Iterator<Item = Vec<String>> + '_ {
    tau.states().iter().enumerate().map(move |(t, s)| {
        let mut row = vec![
            t.to_string(),
            fmt_f64(s.position.x),
            fmt_f64(s.position.y),
            fmt_f64(s.velocity.x),
            fmt_f64(s.velocity.y),
        ];
        match tau.controls().get(t) {
            Some(u) => row.extend([fmt_f64(u.force.x), fmt_f64(u.force.y)]),
            None => row.extend([String::new(), String::new()]),
        }
        row
    })
}

fn csv_bytes<I, R>(header: &[&str], rows: I) -> Result<Vec<u8>>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator,
    R::Item: AsRef<[u8]>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    let to_err = |e: csv::Error| Error::InvalidConfig(format!("csv encoding failed: {e}"));
    w.write_record(header).map_err(to_err)?;
    for row in rows {
        w.write_record(row).map_err(to_err)?;
    }
    w.into_inner()
        .map_err(|e| Error::InvalidConfig(format!("csv encoding failed: {e}")))
}

pub fn trajectory_to_csv(tau: &Trajectory) -> Result<Vec<u8>> {
    csv_bytes(&TRAJECTORY_HEADER, trajectory_rows(tau))
}

pub fn write_trajectory(path: &Path, tau: &Trajectory) -> Result<()> {
    write_atomic(path, &trajectory_to_csv(tau)?)
}

pub fn parse_trajectory(bytes: &[u8], dt: f64, origin: &Path) -> Result<Trajectory> {
    let mut reader = csv::Reader::from_reader(bytes);
    let headers = reader
        .headers()
        .map_err(|e| Error::parse(origin, e))?
        .clone();
    if headers.iter().ne(TRAJECTORY_HEADER) {
        return Err(Error::parse(
            origin,
            format!("expected header {}", TRAJECTORY_HEADER.join(",")),
        ));
    }
    let mut states = Vec::new();
    let mut controls = Vec::new();
    let mut missing_control = false;
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::parse(origin, e))?;
        let num = |i: usize| -> Result<f64> {
            record[i].trim().parse::<f64>().map_err(|e| {
                Error::parse(
                    origin,
                    format!("row {}: column {}: {e}", line + 1, TRAJECTORY_HEADER[i]),
                )
            })
        };
        if missing_control {
            return Err(Error::parse(origin, "only the final row may omit controls"));
        }
        states.push(State::new([num(1)?, num(2)?], [num(3)?, num(4)?]));
        if record[5].trim().is_empty() && record[6].trim().is_empty() {
            missing_control = true;
        } else {
            controls.push(Control::new(num(5)?, num(6)?));
        }
    }
    if !missing_control {
        return Err(Error::parse(origin, "final row must omit controls"));
    }
    Trajectory::new(states, controls, dt)
}

pub fn read_trajectory(path: &Path, dt: f64) -> Result<Trajectory> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_trajectory(&bytes, dt, path)
}

pub fn samples_to_csv(samples: &[Trajectory]) -> Result<Vec<u8>> {
    let rows = samples.iter().enumerate().flat_map(|(i, tau)| {
        trajectory_rows(tau).map(move |mut row| {
            row.insert(0, i.to_string());
            row
        })
    });
    csv_bytes(&SAMPLES_HEADER, rows)
}

/// Metrics table. Absent ground-truth gaps are left empty.
pub fn metrics_to_csv(log: &[IterationRecord]) -> Result<Vec<u8>> {
    let rows = log.iter().map(|r| {
        vec![
            r.iteration.to_string(),
            fmt_f64(r.alpha),
            fmt_f64(r.m1),
            fmt_f64(r.m2),
            fmt_f64(r.trajectory_deviation),
            fmt_f64(r.cost_gap_learned),
            r.cost_gap_true.map(fmt_f64).unwrap_or_default(),
            fmt_f64(r.wallclock_s),
        ]
    });
    csv_bytes(&METRICS_HEADER, rows)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)
        .map_err(|e| Error::InvalidConfig(format!("json encoding failed: {e}")))?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}
