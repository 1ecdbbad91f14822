//! Hybrid flow shop with resource categories M, E and R. Every job runs a
//! fixed chain of phases given by its machine type; each phase holds one
//! unit of its category, and a job occupies an assembly area from its first
//! phase start to its last phase end.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::datagen::{self, DataError};
use crate::env::{EnvError, EnvFactory, EnvSpec, Environment, Feature, Step};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Category {
    M,
    E,
    R,
}

impl Category {
    pub const ALL: [Category; 3] = [Category::M, Category::E, Category::R];

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Phase {
    pub category: Category,
    pub duration: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MachineTypeSpec {
    pub phases: Vec<Phase>,
}

impl MachineTypeSpec {
    pub fn total_duration(&self) -> f64 {
        self.phases.iter().map(|p| p.duration).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Job {
    pub id: u32,
    pub machine_type: String,
    pub due_day: f64,
    pub basement_day: f64,
    pub panel_day: f64,
}

pub const DEFAULT_CAPACITY: usize = 5;
pub const DEFAULT_ASSEMBLY_AREAS: usize = 20;
pub const DEFAULT_TRANSPORT_DAYS: f64 = 2.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HfsError {
    #[error("job {job} has unknown machine type {machine_type:?}")]
    UnknownMachineType { job: u32, machine_type: String },
    #[error("job {job}: {reason}")]
    InvalidJob { job: u32, reason: String },
    #[error("invalid instance: {0}")]
    InvalidInstance(String),
    #[error("not a permutation of 0..{0}")]
    BadPermutation(usize),
}

/// Machine types of the default table, in file order.
pub fn default_machine_types() -> BTreeMap<String, MachineTypeSpec> {
    datagen::parse_phase_spec(include_str!("../data/machine_types.csv").as_bytes()).expect("bundled machine type table is valid")
}

pub fn lt7_family() -> Vec<String> {
    family("LT7")
}

pub fn lt8_family() -> Vec<String> {
    family("LT8")
}

fn family(prefix: &str) -> Vec<String> {
    let table = datagen::phase_spec_order(include_str!("../data/machine_types.csv").as_bytes()).expect("bundled table");
    table.into_iter().filter(|t| t.starts_with(prefix)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct HfsInstance {
    jobs: Vec<Job>,
    capacities: [usize; 3],
    assembly_areas: usize,
    transport_days: f64,
    types: BTreeMap<String, MachineTypeSpec>,
    job_types: Vec<usize>,
    type_names: Vec<String>,
}

impl HfsInstance {
    pub fn new(
        jobs: Vec<Job>,
        capacities: [usize; 3],
        assembly_areas: usize,
        transport_days: f64,
        types: BTreeMap<String, MachineTypeSpec>,
    ) -> Result<Self, HfsError> {
        if capacities.contains(&0) || assembly_areas == 0 {
            return Err(HfsError::InvalidInstance("capacities and assembly areas must be at least 1".into()));
        }
        if !(transport_days.is_finite() && transport_days >= 0.0) {
            return Err(HfsError::InvalidInstance(format!("transport_days = {transport_days}")));
        }
        for (name, spec) in &types {
            if spec.phases.is_empty() {
                return Err(HfsError::InvalidInstance(format!("machine type {name:?} has no phases")));
            }
            if spec.phases.iter().any(|p| !(p.duration.is_finite() && p.duration > 0.0)) {
                return Err(HfsError::InvalidInstance(format!("machine type {name:?} has a non-positive duration")));
            }
        }
        let type_names: Vec<String> = types.keys().cloned().collect();
        let mut job_types = Vec::with_capacity(jobs.len());
        for j in &jobs {
            let dates = [j.due_day, j.basement_day, j.panel_day];
            if dates.iter().any(|d| !d.is_finite()) || j.basement_day < 0.0 || j.panel_day < 0.0 {
                return Err(HfsError::InvalidJob { job: j.id, reason: "dates must be finite and non-negative".into() });
            }
            if j.due_day < j.basement_day {
                return Err(HfsError::InvalidJob { job: j.id, reason: "due day precedes basement arrival".into() });
            }
            match type_names.binary_search(&j.machine_type) {
                Ok(t) => job_types.push(t),
                Err(_) => return Err(HfsError::UnknownMachineType { job: j.id, machine_type: j.machine_type.clone() }),
            }
        }
        Ok(HfsInstance { jobs, capacities, assembly_areas, transport_days, types, job_types, type_names })
    }

    /// Default capacities (5 per category), 20 assembly areas, 2 transport
    /// days and the bundled machine type table.
    pub fn with_defaults(jobs: Vec<Job>) -> Result<Self, HfsError> {
        Self::new(jobs, [DEFAULT_CAPACITY; 3], DEFAULT_ASSEMBLY_AREAS, DEFAULT_TRANSPORT_DAYS, default_machine_types())
    }

    pub fn jobs(&self) -> &[Job] {
        &self.jobs
    }

    pub fn capacities(&self) -> [usize; 3] {
        self.capacities
    }

    pub fn assembly_areas(&self) -> usize {
        self.assembly_areas
    }

    pub fn transport_days(&self) -> f64 {
        self.transport_days
    }

    pub fn machine_types(&self) -> &BTreeMap<String, MachineTypeSpec> {
        &self.types
    }

    /// Sorted machine type names; a job's categorical feature is its index here.
    pub fn type_names(&self) -> &[String] {
        &self.type_names
    }

    pub fn type_index(&self, job: usize) -> usize {
        self.job_types[job]
    }

    pub fn spec_of(&self, job: usize) -> &MachineTypeSpec {
        &self.types[&self.type_names[self.job_types[job]]]
    }

    /// Same instance with a different transport time.
    pub fn with_transport(&self, transport_days: f64) -> Result<Self, HfsError> {
        Self::new(self.jobs.clone(), self.capacities, self.assembly_areas, transport_days, self.types.clone())
    }

    /// Earliest start allowed for a phase by the arrival dates: the first M
    /// phase waits for the basement, the first E phase for the panel.
    pub fn release(&self, job: usize, phase: usize) -> f64 {
        let phases = &self.spec_of(job).phases;
        let cat = phases[phase].category;
        let first = phases.iter().position(|p| p.category == cat) == Some(phase);
        match (first, cat) {
            (true, Category::M) => self.jobs[job].basement_day,
            (true, Category::E) => self.jobs[job].panel_day,
            _ => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduledPhase {
    pub category: Category,
    pub start: f64,
    pub end: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    /// Phases of each job, indexed like the instance's jobs.
    pub phases: Vec<Vec<ScheduledPhase>>,
    /// Last phase end plus transport.
    pub delivery: Vec<f64>,
}

impl Schedule {
    /// Latest delivery; 0 for an empty schedule.
    pub fn makespan(&self) -> f64 {
        self.delivery.iter().copied().fold(0.0, f64::max)
    }

    /// `job_id,phase_index,category,start,end` rows with a header.
    pub fn to_csv(&self, instance: &HfsInstance) -> String {
        let mut out = String::from("job_id,phase_index,category,start,end\n");
        for (j, phases) in self.phases.iter().enumerate() {
            for (k, p) in phases.iter().enumerate() {
                out.push_str(&format!("{},{k},{},{:?},{:?}\n", instance.jobs[j].id, p.category, p.start, p.end));
            }
        }
        out
    }
}

/// Step-function usage of one resource pool.
#[derive(Debug, Clone)]
struct Profile {
    intervals: Vec<(f64, f64)>,
    capacity: usize,
}

impl Profile {
    fn new(capacity: usize) -> Self {
        Profile { intervals: Vec::new(), capacity }
    }

    /// True when one more unit is free throughout `[a, b)`.
    fn fits(&self, a: f64, b: f64) -> bool {
        let overlapping: Vec<&(f64, f64)> = self.intervals.iter().filter(|(s, e)| *s < b && *e > a).collect();
        if overlapping.len() < self.capacity {
            return true;
        }
        // Usage only rises at interval starts, so checking `a` and every
        // start inside the window covers all maxima.
        std::iter::once(a)
            .chain(overlapping.iter().map(|(s, _)| *s).filter(|&s| s > a))
            .all(|t| overlapping.iter().filter(|(s, e)| *s <= t && t < *e).count() < self.capacity)
    }

    /// Earliest `t >= lb` with one unit free on `[t, t + d)`. Feasibility
    /// only switches on at `lb` or at an interval end.
    fn earliest(&self, lb: f64, d: f64) -> f64 {
        if self.fits(lb, lb + d) {
            return lb;
        }
        let mut ends: Vec<f64> = self.intervals.iter().map(|&(_, e)| e).filter(|&e| e > lb).collect();
        ends.sort_by(f64::total_cmp);
        ends.dedup();
        ends.into_iter().find(|&t| self.fits(t, t + d)).expect("a free slot exists after the last interval")
    }

    fn ends_from(&self, lb: f64) -> impl Iterator<Item = f64> + '_ {
        self.intervals.iter().map(|&(_, e)| e).filter(move |&e| e > lb)
    }
}

/// Serial schedule generation. Jobs are placed one at a time in
/// `permutation` order; each job gets the earliest first-phase start for
/// which its chain, every phase placed as early as its category allows,
/// also fits under the assembly-area limit.
pub fn decode_list_schedule(instance: &HfsInstance, permutation: &[usize]) -> Result<Schedule, HfsError> {
    let n = instance.jobs.len();
    if !is_permutation(permutation, n) {
        return Err(HfsError::BadPermutation(n));
    }
    let mut pools: Vec<Profile> = instance.capacities.iter().map(|&c| Profile::new(c)).collect();
    let mut areas = Profile::new(instance.assembly_areas);
    let mut phases = vec![Vec::new(); n];
    let mut delivery = vec![0.0; n];

    for &j in permutation {
        let spec = instance.spec_of(j);
        let first = spec.phases[0];
        let lb = instance.release(j, 0);
        let pool = &pools[first.category.index()];
        let mut candidates: Vec<f64> = std::iter::once(lb).chain(pool.ends_from(lb)).chain(areas.ends_from(lb)).collect();
        candidates.sort_by(f64::total_cmp);
        candidates.dedup();

        let placed = candidates.into_iter().find_map(|s| {
            if !pools[first.category.index()].fits(s, s + first.duration) {
                return None;
            }
            let mut chain = vec![ScheduledPhase { category: first.category, start: s, end: s + first.duration }];
            for (k, p) in spec.phases.iter().enumerate().skip(1) {
                let lb = chain[k - 1].end.max(instance.release(j, k));
                let start = pools[p.category.index()].earliest(lb, p.duration);
                chain.push(ScheduledPhase { category: p.category, start, end: start + p.duration });
            }
            let end = chain.last().expect("at least one phase").end;
            areas.fits(s, end).then_some(chain)
        });
        let chain = placed.expect("a placement exists once all intervals have ended");
        for p in &chain {
            pools[p.category.index()].intervals.push((p.start, p.end));
        }
        let end = chain.last().expect("at least one phase").end;
        areas.intervals.push((chain[0].start, end));
        delivery[j] = end + instance.transport_days;
        phases[j] = chain;
    }
    Ok(Schedule { phases, delivery })
}

pub fn makespan(schedule: &Schedule) -> f64 {
    schedule.makespan()
}

pub fn is_permutation(p: &[usize], n: usize) -> bool {
    if p.len() != n {
        return false;
    }
    let mut seen = vec![false; n];
    p.iter().all(|&i| i < n && !std::mem::replace(&mut seen[i], true))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Constraint {
    /// Phase count, category or duration differs from the machine type.
    Shape,
    /// A phase starts before its predecessor ends.
    Precedence,
    /// A phase starts before its arrival date.
    Eligibility,
    Capacity(Category),
    AssemblyArea,
    /// Delivery is not last phase end plus transport.
    Delivery,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub job: u32,
    pub phase: Option<usize>,
    pub constraint: Constraint,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.phase {
            Some(k) => write!(f, "job {} phase {k}: {:?}", self.job, self.constraint),
            None => write!(f, "job {}: {:?}", self.job, self.constraint),
        }
    }
}

const TOLERANCE: f64 = 1e-9;

/// All constraint violations of `schedule`; empty when it is feasible.
pub fn check_feasible(instance: &HfsInstance, schedule: &Schedule) -> Vec<Violation> {
    let mut out = Vec::new();
    let n = instance.jobs.len();
    if schedule.phases.len() != n || schedule.delivery.len() != n {
        out.push(Violation { job: instance.jobs.first().map_or(0, |j| j.id), phase: None, constraint: Constraint::Shape });
        return out;
    }
    let mut usage: Vec<Vec<(f64, f64, usize)>> = vec![Vec::new(); 3];
    let mut spans = Vec::new();
    for (j, chain) in schedule.phases.iter().enumerate() {
        let id = instance.jobs[j].id;
        let spec = instance.spec_of(j);
        let shape_ok = chain.len() == spec.phases.len()
            && chain.iter().zip(&spec.phases).all(|(c, p)| c.category == p.category && (c.end - c.start - p.duration).abs() <= TOLERANCE);
        if !shape_ok {
            out.push(Violation { job: id, phase: None, constraint: Constraint::Shape });
            continue;
        }
        for (k, p) in chain.iter().enumerate() {
            if k > 0 && p.start < chain[k - 1].end - TOLERANCE {
                out.push(Violation { job: id, phase: Some(k), constraint: Constraint::Precedence });
            }
            if p.start < instance.release(j, k) - TOLERANCE {
                out.push(Violation { job: id, phase: Some(k), constraint: Constraint::Eligibility });
            }
            usage[p.category.index()].push((p.start, p.end, j));
        }
        let end = chain.last().map_or(0.0, |p| p.end);
        spans.push((chain[0].start, end, j));
        if (schedule.delivery[j] - end - instance.transport_days).abs() > TOLERANCE {
            out.push(Violation { job: id, phase: None, constraint: Constraint::Delivery });
        }
    }
    for (c, intervals) in usage.iter().enumerate() {
        for j in overloads(intervals, instance.capacities[c]) {
            let phase = schedule.phases[j].iter().position(|p| p.category.index() == c);
            out.push(Violation { job: instance.jobs[j].id, phase, constraint: Constraint::Capacity(Category::ALL[c]) });
        }
    }
    for j in overloads(&spans, instance.assembly_areas) {
        out.push(Violation { job: instance.jobs[j].id, phase: None, constraint: Constraint::AssemblyArea });
    }
    out
}

/// For each distinct start time where usage exceeds `capacity`, the last
/// job (in instance order) starting there.
fn overloads(intervals: &[(f64, f64, usize)], capacity: usize) -> Vec<usize> {
    let mut starts: Vec<f64> = intervals.iter().map(|i| i.0).collect();
    starts.sort_by(f64::total_cmp);
    starts.dedup();
    starts
        .into_iter()
        .filter(|&t| intervals.iter().filter(|(s, e, _)| *s <= t + TOLERANCE && t < *e - TOLERANCE).count() > capacity)
        .map(|t| intervals.iter().filter(|(s, _, _)| (*s - t).abs() <= TOLERANCE).map(|i| i.2).max().expect("a start"))
        .collect()
}

/// A makespan lower bound valid for every feasible schedule: the maximum
/// of per-category work over capacity, per-job release-constrained chain
/// length, and total area occupancy over the number of areas, each plus
/// transport.
pub fn lower_bounds(instance: &HfsInstance) -> f64 {
    if instance.jobs.is_empty() {
        return 0.0;
    }
    let mut work = [0.0f64; 3];
    let mut occupancy = 0.0;
    let mut chain_bound = 0.0f64;
    for j in 0..instance.jobs.len() {
        let spec = instance.spec_of(j);
        let mut t = 0.0f64;
        for (k, p) in spec.phases.iter().enumerate() {
            work[p.category.index()] += p.duration;
            t = t.max(instance.release(j, k)) + p.duration;
        }
        occupancy += spec.total_duration();
        chain_bound = chain_bound.max(t);
    }
    let work_bound = (0..3).map(|c| work[c] / instance.capacities[c] as f64).fold(0.0, f64::max);
    let area_bound = occupancy / instance.assembly_areas as f64;
    work_bound.max(chain_bound).max(area_bound) + instance.transport_days
}

/// Jobs by priority descending, then earlier due day, then input index.
pub fn priorities_to_permutation(priorities: &[usize], jobs: &[Job]) -> Vec<usize> {
    assert_eq!(priorities.len(), jobs.len(), "one priority per job");
    let mut order: Vec<usize> = (0..jobs.len()).collect();
    order.sort_by(|&a, &b| priorities[b].cmp(&priorities[a]).then(jobs[a].due_day.total_cmp(&jobs[b].due_day)).then(a.cmp(&b)));
    order
}

/// Earliest-due-date order, stable on ties.
pub fn edd_permutation(jobs: &[Job]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..jobs.len()).collect();
    order.sort_by(|&a, &b| jobs[a].due_day.total_cmp(&jobs[b].due_day));
    order
}

pub const PRIORITY_LEVELS: usize = 10;
pub const MAKESPAN_SCALE: f64 = 1000.0;

/// Assigns a priority to each job in input order; observation is
/// `(machine type, due day, basement day, panel day)`. The terminal reward
/// is minus the decoded makespan over 1000.
pub struct HfsEnv {
    spec: EnvSpec,
    instance: Arc<HfsInstance>,
    priorities: Vec<usize>,
}

fn observe(instance: &HfsInstance, j: usize) -> Vec<f64> {
    let job = &instance.jobs[j];
    vec![instance.type_index(j) as f64, job.due_day, job.basement_day, job.panel_day]
}

impl Environment for HfsEnv {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self) -> Vec<f64> {
        self.priorities.clear();
        observe(&self.instance, 0)
    }

    fn step(&mut self, action: usize) -> Step {
        self.priorities.push(action);
        let t = self.priorities.len();
        if t < self.instance.jobs.len() {
            return Step { observation: observe(&self.instance, t), reward: 0.0, done: false };
        }
        let perm = priorities_to_permutation(&self.priorities, &self.instance.jobs);
        let schedule = decode_list_schedule(&self.instance, &perm).expect("priority order is a permutation");
        Step { observation: observe(&self.instance, t - 1), reward: -schedule.makespan() / MAKESPAN_SCALE, done: true }
    }
}

#[derive(Debug, Clone)]
pub struct HfsFactory {
    spec: EnvSpec,
    instance: Arc<HfsInstance>,
}

impl HfsFactory {
    pub fn new(instance: HfsInstance) -> Result<Self, EnvError> {
        if instance.jobs.is_empty() {
            return Err(EnvError::InvalidSpec("scheduling episodes need at least one job".into()));
        }
        let range = |f: fn(&Job) -> f64| {
            let lo = instance.jobs.iter().map(f).fold(f64::INFINITY, f64::min);
            let hi = instance.jobs.iter().map(f).fold(f64::NEG_INFINITY, f64::max);
            (lo, hi)
        };
        let numeric = |name: &str, (lo, hi): (f64, f64)| Feature::numeric(name, lo, hi);
        let features = vec![
            Feature::categorical("mt", instance.type_names.clone()),
            numeric("dd", range(|j| j.due_day)),
            numeric("db", range(|j| j.basement_day)),
            numeric("de", range(|j| j.panel_day)),
        ];
        let actions = (0..PRIORITY_LEVELS).map(|p| format!("P{p}")).collect();
        let spec = EnvSpec::new(features, actions, instance.jobs.len(), false)?;
        Ok(HfsFactory { spec, instance: Arc::new(instance) })
    }

    pub fn instance(&self) -> &HfsInstance {
        &self.instance
    }
}

impl EnvFactory for HfsFactory {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn make(&self, _seed: u64) -> Box<dyn Environment> {
        Box::new(HfsEnv { spec: self.spec.clone(), instance: self.instance.clone(), priorities: Vec::new() })
    }
}

impl From<DataError> for HfsError {
    fn from(e: DataError) -> Self {
        HfsError::InvalidInstance(e.to_string())
    }
}
