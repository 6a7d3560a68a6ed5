//! Loading, validation and preprocessing of compositional trajectories.
//!
//! Trajectories come in long format, one row per `(subject, time)`:
//!
//! ```text
//! subject,time,<name_1>,...,<name_p>
//! ```
//!
//! and responses with optional time-invariant controls, one row per subject:
//!
//! ```text
//! subject,y,<control_1>,...,<control_pc>
//! ```

use std::collections::HashMap;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::basis::Domain;
use crate::error::{Error, Result};

/// Default replacement for zero counts (maximum rounding error of a count).
pub const DEFAULT_ZERO_REPLACEMENT: f64 = 0.5;

/// Tolerance on the row sum for a row to count as already normalized.
const SUM_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub time: f64,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Subject {
    pub id: String,
    /// Sorted by strictly increasing time.
    pub observations: Vec<Observation>,
}

impl Subject {
    pub fn times(&self) -> Vec<f64> {
        self.observations.iter().map(|o| o.time).collect()
    }
}

/// Per-subject trajectories on the simplex, plus response and controls.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryDataset {
    pub subjects: Vec<Subject>,
    pub response: DVector<f64>,
    /// `n x p_c`, possibly with zero columns.
    pub controls: DMatrix<f64>,
    pub domain: Domain,
    pub component_names: Vec<String>,
    pub control_names: Vec<String>,
}

/// Raw trajectory table before it is joined with responses.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryTable {
    pub component_names: Vec<String>,
    /// Subjects in order of first appearance, observations sorted by time.
    pub subjects: Vec<Subject>,
}

/// Raw response table.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseTable {
    pub control_names: Vec<String>,
    /// `(subject, y, controls)` in file order.
    pub rows: Vec<(String, f64, Vec<f64>)>,
}

/// Per-subject log-compositions `z_i(t) = log x_i(t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LogTrajectory {
    pub times: Vec<f64>,
    /// `m_i x p`
    pub values: DMatrix<f64>,
}

fn parse_err(file: &str, row: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        file: file.to_string(),
        row,
        message: message.into(),
    }
}

fn parse_number(file: &str, row: usize, column: &str, field: &str) -> Result<f64> {
    let v: f64 = field
        .trim()
        .parse()
        .map_err(|_| parse_err(file, row, format!("non-numeric value {field:?} in column {column}")))?;
    if !v.is_finite() {
        return Err(parse_err(file, row, format!("non-finite value in column {column}")));
    }
    Ok(v)
}

fn reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .flexible(false)
        .from_reader(text.as_bytes())
}

fn csv_error(file: &str, e: csv::Error) -> Error {
    let row = e.position().map(|p| p.line() as usize).unwrap_or(0);
    parse_err(file, row, e.to_string())
}

/// Parses a long-format trajectory CSV. Times are not checked against a
/// domain here; see [`assemble_dataset`].
pub fn parse_trajectory_csv(text: &str) -> Result<TrajectoryTable> {
    const FILE: &str = "trajectory csv";
    let mut rdr = reader(text);
    let header = rdr.headers().map_err(|e| csv_error(FILE, e))?.clone();
    if header.len() < 3 || &header[0] != "subject" || &header[1] != "time" {
        return Err(parse_err(
            FILE,
            1,
            "header must be `subject,time,<name_1>,...` with at least one component",
        ));
    }
    let component_names: Vec<String> = header.iter().skip(2).map(str::to_string).collect();
    let p = component_names.len();

    let mut order: Vec<String> = Vec::new();
    let mut rows: HashMap<String, Vec<(usize, Observation)>> = HashMap::new();
    for record in rdr.records() {
        let record = record.map_err(|e| csv_error(FILE, e))?;
        let row = record.position().map(|p| p.line() as usize).unwrap_or(0);
        let id = record[0].to_string();
        if id.is_empty() {
            return Err(parse_err(FILE, row, "empty subject identifier"));
        }
        let time = parse_number(FILE, row, "time", &record[1])?;
        let mut values = Vec::with_capacity(p);
        for (c, name) in component_names.iter().enumerate() {
            let v = parse_number(FILE, row, name, &record[c + 2])?;
            if v < 0.0 {
                return Err(parse_err(FILE, row, format!("negative value in column {name}")));
            }
            values.push(v);
        }
        let entry = rows.entry(id.clone()).or_insert_with(|| {
            order.push(id.clone());
            Vec::new()
        });
        entry.push((row, Observation { time, values }));
    }

    let mut subjects = Vec::with_capacity(order.len());
    for id in order {
        let mut obs = rows.remove(&id).unwrap_or_default();
        obs.sort_by(|a, b| a.1.time.total_cmp(&b.1.time));
        for w in obs.windows(2) {
            if w[0].1.time == w[1].1.time {
                let row = w[0].0.max(w[1].0);
                return Err(parse_err(
                    FILE,
                    row,
                    format!("duplicate observation for subject {id:?} at time {}", w[1].1.time),
                ));
            }
        }
        subjects.push(Subject {
            id,
            observations: obs.into_iter().map(|(_, o)| o).collect(),
        });
    }
    Ok(TrajectoryTable {
        component_names,
        subjects,
    })
}

/// Parses the per-subject response/control CSV.
pub fn parse_response_csv(text: &str) -> Result<ResponseTable> {
    const FILE: &str = "response csv";
    let mut rdr = reader(text);
    let header = rdr.headers().map_err(|e| csv_error(FILE, e))?.clone();
    if header.len() < 2 || &header[0] != "subject" || &header[1] != "y" {
        return Err(parse_err(FILE, 1, "header must be `subject,y,<control_1>,...`"));
    }
    let control_names: Vec<String> = header.iter().skip(2).map(str::to_string).collect();
    let mut seen = HashMap::new();
    let mut rows = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| csv_error(FILE, e))?;
        let row = record.position().map(|p| p.line() as usize).unwrap_or(0);
        let id = record[0].to_string();
        if id.is_empty() {
            return Err(parse_err(FILE, row, "empty subject identifier"));
        }
        if seen.insert(id.clone(), row).is_some() {
            return Err(parse_err(FILE, row, format!("duplicate subject {id:?}")));
        }
        let y = parse_number(FILE, row, "y", &record[1])?;
        let controls = control_names
            .iter()
            .enumerate()
            .map(|(c, name)| parse_number(FILE, row, name, &record[c + 2]))
            .collect::<Result<Vec<_>>>()?;
        rows.push((id, y, controls));
    }
    Ok(ResponseTable { control_names, rows })
}

/// Checks that every observation lies in `domain`.
pub fn check_domain(subjects: &[Subject], domain: Domain) -> Result<()> {
    for s in subjects {
        for o in &s.observations {
            if !domain.contains(o.time) {
                return Err(Error::invalid(format!(
                    "subject {:?}: time {} outside domain [{}, {}]",
                    s.id, o.time, domain.start, domain.end
                )));
            }
        }
    }
    Ok(())
}

/// Joins trajectories with responses. Subjects keep trajectory-file order.
pub fn assemble_dataset(
    traj: TrajectoryTable,
    resp: ResponseTable,
    domain: Domain,
) -> Result<TrajectoryDataset> {
    check_domain(&traj.subjects, domain)?;
    let mut by_id: HashMap<&str, (f64, &Vec<f64>)> = HashMap::new();
    for (id, y, c) in &resp.rows {
        by_id.insert(id.as_str(), (*y, c));
    }
    let traj_ids: HashMap<&str, usize> = traj
        .subjects
        .iter()
        .enumerate()
        .map(|(i, s)| (s.id.as_str(), i))
        .collect();
    for (row, (id, _, _)) in resp.rows.iter().enumerate() {
        match traj_ids.get(id.as_str()) {
            None => {
                return Err(Error::Parse {
                    file: "response csv".into(),
                    row: row + 2,
                    message: format!("subject {id:?} has no trajectory rows"),
                })
            }
            Some(&i) if traj.subjects[i].observations.len() < 2 => {
                return Err(Error::Parse {
                    file: "response csv".into(),
                    row: row + 2,
                    message: format!("subject {id:?} has fewer than 2 trajectory rows"),
                })
            }
            _ => {}
        }
    }
    let n = traj.subjects.len();
    let pc = resp.control_names.len();
    let mut y = DVector::zeros(n);
    let mut controls = DMatrix::zeros(n, pc);
    for (i, s) in traj.subjects.iter().enumerate() {
        let (yi, ci) = by_id
            .get(s.id.as_str())
            .ok_or_else(|| Error::invalid(format!("subject {:?} missing from response file", s.id)))?;
        y[i] = *yi;
        for (c, v) in ci.iter().enumerate() {
            controls[(i, c)] = *v;
        }
    }
    let ds = TrajectoryDataset {
        subjects: traj.subjects,
        response: y,
        controls,
        domain,
        component_names: traj.component_names,
        control_names: resp.control_names,
    };
    ds.validate()?;
    Ok(ds)
}

/// Parses both CSV texts into a dataset (no preprocessing).
pub fn parse_dataset(trajectory_csv: &str, response_csv: &str, domain: Domain) -> Result<TrajectoryDataset> {
    let traj = parse_trajectory_csv(trajectory_csv)?;
    let resp = parse_response_csv(response_csv)?;
    assemble_dataset(traj, resp, domain)
}

pub(crate) fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Loads a dataset from a trajectory CSV and a response CSV.
pub fn load_dataset(trajectory_file: &Path, response_file: &Path, domain: Domain) -> Result<TrajectoryDataset> {
    let t = read_text(trajectory_file)?;
    let r = read_text(response_file)?;
    parse_dataset(&t, &r, domain)
}

/// Replaces each zero by `zero_replacement`, then renormalizes to unit sum.
///
/// Rows that are already strictly positive and sum to one within `1e-12` are
/// left untouched, which makes the operation idempotent bit for bit.
pub fn preprocess_values(values: &mut [f64], zero_replacement: f64) -> Result<()> {
    if values.iter().any(|&v| v < 0.0 || !v.is_finite()) {
        return Err(Error::invalid("negative or non-finite composition entry"));
    }
    if values.iter().all(|&v| v == 0.0) {
        return Err(Error::invalid("observation is entirely zero"));
    }
    let has_zero = values.iter().any(|&v| v == 0.0);
    let sum: f64 = values.iter().sum();
    if !has_zero && (sum - 1.0).abs() <= SUM_TOLERANCE {
        return Ok(());
    }
    for v in values.iter_mut() {
        if *v == 0.0 {
            *v = zero_replacement;
        }
    }
    let sum: f64 = values.iter().sum();
    for v in values.iter_mut() {
        *v /= sum;
    }
    Ok(())
}

impl TrajectoryDataset {
    pub fn n(&self) -> usize {
        self.subjects.len()
    }

    pub fn p(&self) -> usize {
        self.component_names.len()
    }

    pub fn pc(&self) -> usize {
        self.controls.ncols()
    }

    /// Structural invariants: shared `p`, `m_i >= 2`, strictly increasing
    /// times inside the domain.
    pub fn validate(&self) -> Result<()> {
        let p = self.p();
        if self.response.len() != self.n() || self.controls.nrows() != self.n() {
            return Err(Error::invalid("response/control rows do not match subject count"));
        }
        for s in &self.subjects {
            if s.observations.len() < 2 {
                return Err(Error::invalid(format!(
                    "subject {:?} has {} observations, need at least 2",
                    s.id,
                    s.observations.len()
                )));
            }
            for w in s.observations.windows(2) {
                if w[1].time <= w[0].time {
                    return Err(Error::invalid(format!(
                        "subject {:?}: observation times not strictly increasing",
                        s.id
                    )));
                }
            }
            for o in &s.observations {
                if o.values.len() != p {
                    return Err(Error::invalid(format!(
                        "subject {:?}: expected {p} components, found {}",
                        s.id,
                        o.values.len()
                    )));
                }
                if !self.domain.contains(o.time) {
                    return Err(Error::OutsideDomain {
                        value: o.time,
                        start: self.domain.start,
                        end: self.domain.end,
                    });
                }
            }
        }
        Ok(())
    }

    /// Zero replacement followed by renormalization of every observation.
    pub fn preprocess(&self, zero_replacement: f64) -> Result<TrajectoryDataset> {
        if !(zero_replacement > 0.0 && zero_replacement.is_finite()) {
            return Err(Error::invalid("zero replacement must be positive"));
        }
        let mut out = self.clone();
        for s in &mut out.subjects {
            for o in &mut s.observations {
                preprocess_values(&mut o.values, zero_replacement).map_err(|e| {
                    Error::invalid(format!("subject {:?} at time {}: {e}", s.id, o.time))
                })?;
            }
        }
        Ok(out)
    }

    /// Elementwise natural log of every observation.
    pub fn log_transform(&self) -> Result<Vec<LogTrajectory>> {
        let p = self.p();
        self.subjects
            .iter()
            .map(|s| {
                let m = s.observations.len();
                let mut values = DMatrix::zeros(m, p);
                for (v, o) in s.observations.iter().enumerate() {
                    for (j, &x) in o.values.iter().enumerate() {
                        if !(x > 0.0) {
                            return Err(Error::invalid(format!(
                                "subject {:?}: non-positive entry {x} at time {}; preprocess first",
                                s.id, o.time
                            )));
                        }
                        values[(v, j)] = x.ln();
                    }
                }
                Ok(LogTrajectory {
                    times: s.times(),
                    values,
                })
            })
            .collect()
    }

    /// Dataset restricted to (possibly repeated) subject indices.
    pub fn select_subjects(&self, indices: &[usize]) -> TrajectoryDataset {
        let pc = self.pc();
        let mut controls = DMatrix::zeros(indices.len(), pc);
        let mut response = DVector::zeros(indices.len());
        let mut subjects = Vec::with_capacity(indices.len());
        for (r, &i) in indices.iter().enumerate() {
            subjects.push(self.subjects[i].clone());
            response[r] = self.response[i];
            for c in 0..pc {
                controls[(r, c)] = self.controls[(i, c)];
            }
        }
        TrajectoryDataset {
            subjects,
            response,
            controls,
            domain: self.domain,
            component_names: self.component_names.clone(),
            control_names: self.control_names.clone(),
        }
    }

    /// Reorders components: new component `j` is old component `perm[j]`.
    pub fn permute_components(&self, perm: &[usize]) -> TrajectoryDataset {
        let mut out = self.clone();
        out.component_names = perm.iter().map(|&j| self.component_names[j].clone()).collect();
        for s in &mut out.subjects {
            for o in &mut s.observations {
                o.values = perm.iter().map(|&j| o.values[j]).collect();
            }
        }
        out
    }

    /// Keeps only the listed components (values are not renormalized).
    pub fn subcomposition(&self, components: &[usize]) -> TrajectoryDataset {
        self.permute_components(components)
    }

    /// Writes the two CSV files of the external schema.
    pub fn to_csv(&self) -> (String, String) {
        let mut traj = String::from("subject,time");
        for name in &self.component_names {
            traj.push(',');
            traj.push_str(name);
        }
        traj.push('\n');
        for s in &self.subjects {
            for o in &s.observations {
                traj.push_str(&format!("{},{:e}", s.id, o.time));
                for v in &o.values {
                    traj.push_str(&format!(",{v:e}"));
                }
                traj.push('\n');
            }
        }
        let mut resp = String::from("subject,y");
        for name in &self.control_names {
            resp.push(',');
            resp.push_str(name);
        }
        resp.push('\n');
        for (i, s) in self.subjects.iter().enumerate() {
            resp.push_str(&format!("{},{:e}", s.id, self.response[i]));
            for c in 0..self.pc() {
                resp.push_str(&format!(",{:e}", self.controls[(i, c)]));
            }
            resp.push('\n');
        }
        (traj, resp)
    }
}
