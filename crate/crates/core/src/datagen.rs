//! Dataset generators for both problems and their CSV formats.
//!
//! Orders: `id,qty_a,qty_b,qty_c,deadline_day`. Jobs:
//! `id,machine_type,due_day,basement_day,panel_day`. Machine types:
//! `machine_type,phase_index,category,duration`. Every file starts with a
//! header row; column order in the file is free.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use serde::de::DeserializeOwned;
use serde::Deserialize;
use thiserror::Error;

use crate::hfs::{self, Category, HfsInstance, Job, MachineTypeSpec, Phase};
use crate::makeorbuy::Order;
use crate::rng;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DataError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("missing column {column:?}")]
    MissingColumn { column: String },
    #[error("row {row} (line {line}): {message}")]
    Row { row: usize, line: u64, message: String },
    #[error("row {row} (line {line}): unknown machine type {machine_type:?}")]
    UnknownMachineType { row: usize, line: u64, machine_type: String },
    #[error("{0}")]
    Csv(String),
}

pub const ORDER_COLUMNS: [&str; 5] = ["id", "qty_a", "qty_b", "qty_c", "deadline_day"];
pub const JOB_COLUMNS: [&str; 5] = ["id", "machine_type", "due_day", "basement_day", "panel_day"];
pub const PHASE_COLUMNS: [&str; 4] = ["machine_type", "phase_index", "category", "duration"];

fn read_rows<T: DeserializeOwned, R: Read>(reader: R, columns: &[&str]) -> Result<Vec<(usize, u64, T)>, DataError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| DataError::Csv(e.to_string()))?.clone();
    if let Some(missing) = columns.iter().find(|c| !headers.iter().any(|h| h == **c)) {
        return Err(DataError::MissingColumn { column: missing.to_string() });
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| DataError::Row { row, line: e.position().map_or(0, |p| p.line()), message: e.to_string() })?;
        let line = rec.position().map_or(0, |p| p.line());
        let value = rec.deserialize(Some(&headers)).map_err(|e| DataError::Row { row, line, message: e.to_string() })?;
        out.push((row, line, value));
    }
    Ok(out)
}

fn io_err(path: &Path, e: impl ToString) -> DataError {
    DataError::Io { path: path.display().to_string(), message: e.to_string() }
}

pub fn read_orders<R: Read>(reader: R) -> Result<Vec<Order>, DataError> {
    let rows: Vec<(usize, u64, Order)> = read_rows(reader, &ORDER_COLUMNS)?;
    rows.into_iter()
        .map(
            |(row, line, o)| {
                if o.deadline_day == 0 {
                    Err(DataError::Row { row, line, message: "deadline_day must be positive".into() })
                } else {
                    Ok(o)
                }
            },
        )
        .collect()
}

pub fn write_orders<W: Write>(writer: W, orders: &[Order]) -> Result<(), DataError> {
    let mut w = csv::Writer::from_writer(writer);
    if orders.is_empty() {
        w.write_record(ORDER_COLUMNS).map_err(|e| DataError::Csv(e.to_string()))?;
    }
    for o in orders {
        w.serialize(o).map_err(|e| DataError::Csv(e.to_string()))?;
    }
    w.flush().map_err(|e| DataError::Csv(e.to_string()))
}

pub fn load_orders(path: &Path) -> Result<Vec<Order>, DataError> {
    read_orders(File::open(path).map_err(|e| io_err(path, e))?)
}

pub fn save_orders(path: &Path, orders: &[Order]) -> Result<(), DataError> {
    write_orders(File::create(path).map_err(|e| io_err(path, e))?, orders)
}

/// Reads jobs, rejecting machine types absent from `types`.
pub fn read_jobs<R: Read>(reader: R, types: &BTreeMap<String, MachineTypeSpec>) -> Result<Vec<Job>, DataError> {
    let rows: Vec<(usize, u64, Job)> = read_rows(reader, &JOB_COLUMNS)?;
    rows.into_iter()
        .map(|(row, line, j)| {
            if !types.contains_key(&j.machine_type) {
                return Err(DataError::UnknownMachineType { row, line, machine_type: j.machine_type });
            }
            let dates = [j.due_day, j.basement_day, j.panel_day];
            if dates.iter().any(|d| !d.is_finite() || *d < 0.0) || j.due_day < j.basement_day {
                return Err(DataError::Row { row, line, message: "dates must be non-negative with due_day >= basement_day".into() });
            }
            Ok(j)
        })
        .collect()
}

pub fn write_jobs<W: Write>(writer: W, jobs: &[Job]) -> Result<(), DataError> {
    let mut w = csv::Writer::from_writer(writer);
    if jobs.is_empty() {
        w.write_record(JOB_COLUMNS).map_err(|e| DataError::Csv(e.to_string()))?;
    }
    for j in jobs {
        w.serialize(j).map_err(|e| DataError::Csv(e.to_string()))?;
    }
    w.flush().map_err(|e| DataError::Csv(e.to_string()))
}

pub fn load_jobs(path: &Path, types: &BTreeMap<String, MachineTypeSpec>) -> Result<Vec<Job>, DataError> {
    read_jobs(File::open(path).map_err(|e| io_err(path, e))?, types)
}

pub fn save_jobs(path: &Path, jobs: &[Job]) -> Result<(), DataError> {
    write_jobs(File::create(path).map_err(|e| io_err(path, e))?, jobs)
}

#[derive(Debug, Deserialize)]
struct PhaseRow {
    machine_type: String,
    phase_index: usize,
    category: Category,
    duration: f64,
}

fn phase_rows<R: Read>(reader: R) -> Result<Vec<PhaseRow>, DataError> {
    let rows: Vec<(usize, u64, PhaseRow)> = read_rows(reader, &PHASE_COLUMNS)?;
    let mut next: BTreeMap<String, usize> = BTreeMap::new();
    let mut out = Vec::with_capacity(rows.len());
    for (row, line, r) in rows {
        if !(r.duration.is_finite() && r.duration > 0.0) {
            return Err(DataError::Row { row, line, message: format!("duration {} must be positive", r.duration) });
        }
        let expected = next.entry(r.machine_type.clone()).or_insert(0);
        if r.phase_index != *expected {
            return Err(DataError::Row {
                row,
                line,
                message: format!("phase_index {} of {:?} should be {expected}", r.phase_index, r.machine_type),
            });
        }
        *expected += 1;
        out.push(r);
    }
    Ok(out)
}

/// Machine type table; phases of one type are listed in order starting at 0.
pub fn parse_phase_spec<R: Read>(reader: R) -> Result<BTreeMap<String, MachineTypeSpec>, DataError> {
    let mut table: BTreeMap<String, MachineTypeSpec> = BTreeMap::new();
    for r in phase_rows(reader)? {
        table
            .entry(r.machine_type)
            .or_insert_with(|| MachineTypeSpec { phases: Vec::new() })
            .phases
            .push(Phase { category: r.category, duration: r.duration });
    }
    Ok(table)
}

/// Machine type names in order of first appearance.
pub fn phase_spec_order<R: Read>(reader: R) -> Result<Vec<String>, DataError> {
    let mut names: Vec<String> = Vec::new();
    for r in phase_rows(reader)? {
        if !names.contains(&r.machine_type) {
            names.push(r.machine_type);
        }
    }
    Ok(names)
}

pub fn load_phase_spec(path: &Path) -> Result<BTreeMap<String, MachineTypeSpec>, DataError> {
    parse_phase_spec(File::open(path).map_err(|e| io_err(path, e))?)
}

pub const QTY_MAX: u32 = 20;
pub const DEADLINE_MIN: u32 = 800;
pub const DEADLINE_MAX: u32 = 1500;

/// `n` orders with quantities in `0..=20` and deadlines in `800..=1500`.
pub fn gen_makeorbuy(n: usize, seed: u64) -> Vec<Order> {
    let mut r = rng::stream(&[seed, 0x6d6f62]);
    (0..n)
        .map(|i| Order {
            id: i as u32 + 1,
            qty_a: r.gen_range(0..=QTY_MAX),
            qty_b: r.gen_range(0..=QTY_MAX),
            qty_c: r.gen_range(0..=QTY_MAX),
            deadline_day: r.gen_range(DEADLINE_MIN..=DEADLINE_MAX),
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HfsVariant {
    /// All machine types, arrivals in days 1..=20.
    D1,
    /// LT7 family only.
    D2,
    /// LT8 family only.
    D3,
    /// All machine types; each job falls in one of five 73-day groups.
    D4,
}

impl FromStr for HfsVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "d1" => Ok(HfsVariant::D1),
            "d2" => Ok(HfsVariant::D2),
            "d3" => Ok(HfsVariant::D3),
            "d4" => Ok(HfsVariant::D4),
            other => Err(format!("unknown variant {other:?}, expected d1, d2, d3 or d4")),
        }
    }
}

impl HfsVariant {
    pub fn machine_types(self) -> Vec<String> {
        match self {
            HfsVariant::D1 | HfsVariant::D4 => {
                phase_spec_order(include_str!("../data/machine_types.csv").as_bytes()).expect("bundled table")
            }
            HfsVariant::D2 => hfs::lt7_family(),
            HfsVariant::D3 => hfs::lt8_family(),
        }
    }
}

pub const GROUP_DAYS: u32 = 73;
pub const GROUPS: u32 = 5;
pub const DUE_SLACK_MIN: u32 = 20;
pub const DUE_SLACK_MAX: u32 = 50;

/// Arrival window `[low, high]` of group `g` (0-based) in d4.
pub fn group_window(g: u32) -> (u32, u32) {
    (g * GROUP_DAYS + 1, (g + 1) * GROUP_DAYS)
}

/// Jobs only; basement and panel days are independent draws from the
/// job's window, so the panel can arrive first.
pub fn gen_hfs_jobs(variant: HfsVariant, n: usize, seed: u64) -> Vec<Job> {
    let types = variant.machine_types();
    let mut r = rng::stream(&[seed, 0x686673]);
    (0..n)
        .map(|i| {
            let machine_type = types[r.gen_range(0..types.len())].clone();
            let (lo, hi) = match variant {
                HfsVariant::D4 => group_window(r.gen_range(0..GROUPS)),
                _ => (1, 20),
            };
            let basement = r.gen_range(lo..=hi);
            let panel = r.gen_range(lo..=hi);
            let due = basement + r.gen_range(DUE_SLACK_MIN..=DUE_SLACK_MAX);
            Job { id: i as u32 + 1, machine_type, due_day: due as f64, basement_day: basement as f64, panel_day: panel as f64 }
        })
        .collect()
}

/// Generated jobs on the default shop (capacities 5, 20 areas, 2 transport days).
pub fn gen_hfs(variant: HfsVariant, n: usize, seed: u64) -> HfsInstance {
    HfsInstance::with_defaults(gen_hfs_jobs(variant, n, seed)).expect("generated jobs use known machine types")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn orders_within_windows() {
        let orders = gen_makeorbuy(100, 1);
        assert_eq!(orders.len(), 100);
        for o in &orders {
            assert!([o.qty_a, o.qty_b, o.qty_c].iter().all(|&q| q <= QTY_MAX));
            assert!((DEADLINE_MIN..=DEADLINE_MAX).contains(&o.deadline_day));
        }
        assert_eq!(orders, gen_makeorbuy(100, 1));
        assert_ne!(orders, gen_makeorbuy(100, 2));
        assert!(gen_makeorbuy(0, 1).is_empty());
    }

    #[test]
    fn variant_families_and_windows() {
        let lt7 = hfs::lt7_family();
        assert!(gen_hfs_jobs(HfsVariant::D2, 200, 3).iter().all(|j| lt7.contains(&j.machine_type)));
        assert!(gen_hfs_jobs(HfsVariant::D3, 200, 3).iter().all(|j| j.machine_type.starts_with("LT8")));
        for j in gen_hfs_jobs(HfsVariant::D1, 500, 4) {
            assert!((1.0..=20.0).contains(&j.basement_day) && (1.0..=20.0).contains(&j.panel_day));
            assert!((20.0..=50.0).contains(&(j.due_day - j.basement_day)));
        }
        for j in gen_hfs_jobs(HfsVariant::D4, 500, 5) {
            let g = (j.basement_day as u32 - 1) / GROUP_DAYS;
            let (lo, hi) = group_window(g);
            assert!((lo as f64..=hi as f64).contains(&j.panel_day), "{j:?}");
        }
        let inst = gen_hfs(HfsVariant::D1, 10, 0);
        assert_eq!(inst.capacities(), [5, 5, 5]);
    }

    #[test]
    fn csv_round_trips() {
        let orders = gen_makeorbuy(25, 8);
        let mut buf = Vec::new();
        write_orders(&mut buf, &orders).unwrap();
        assert_eq!(read_orders(buf.as_slice()).unwrap(), orders);

        let jobs = gen_hfs_jobs(HfsVariant::D4, 25, 8);
        let mut buf = Vec::new();
        write_jobs(&mut buf, &jobs).unwrap();
        assert_eq!(read_jobs(buf.as_slice(), &hfs::default_machine_types()).unwrap(), jobs);

        let mut buf = Vec::new();
        write_orders(&mut buf, &[]).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap(), "id,qty_a,qty_b,qty_c,deadline_day\n");
        assert!(read_orders(buf.as_slice()).unwrap().is_empty());
    }

    #[test]
    fn structured_errors() {
        let err = read_orders("1,2,3,4,900\n2,1,1,1,850\n".as_bytes()).unwrap_err();
        assert!(matches!(err, DataError::MissingColumn { ref column } if column == "id"), "{err}");

        let err = read_orders("id,qty_a,qty_b,qty_c,deadline_day\n1,2,x,4,900\n".as_bytes()).unwrap_err();
        assert!(matches!(err, DataError::Row { row: 1, line: 2, .. }), "{err}");

        let mut text = String::from("id,machine_type,due_day,basement_day,panel_day\n");
        for i in 1..=6 {
            text.push_str(&format!("{i},LT7,30,5,6\n"));
        }
        text.push_str("7,LT9,30,5,6\n");
        let err = read_jobs(text.as_bytes(), &hfs::default_machine_types()).unwrap_err();
        assert!(matches!(err, DataError::UnknownMachineType { row: 7, .. }), "{err}");
        assert!(err.to_string().contains("row 7"));
    }

    #[test]
    fn phase_spec_errors() {
        let bad = "machine_type,phase_index,category,duration\nA,0,M,1\nA,2,E,1\n";
        assert!(matches!(parse_phase_spec(bad.as_bytes()), Err(DataError::Row { row: 2, .. })));
        let bad = "machine_type,phase_index,category,duration\nA,0,Q,1\n";
        assert!(matches!(parse_phase_spec(bad.as_bytes()), Err(DataError::Row { row: 1, .. })));
        let bad = "machine_type,phase_index,category,duration\nA,0,M,0\n";
        assert!(parse_phase_spec(bad.as_bytes()).is_err());
    }

    #[test]
    fn variant_parsing() {
        assert_eq!("D3".parse::<HfsVariant>(), Ok(HfsVariant::D3));
        assert!("d5".parse::<HfsVariant>().is_err());
    }
}
