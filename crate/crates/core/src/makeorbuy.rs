//! Make-or-buy supply chain: three component plants (A, B, C), one truck
//! cycling A -> B -> C -> D, and an assembly plant D. Each order is either
//! made internally or outsourced; outsourced orders are always on time but
//! cost extra.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};

use chrono::NaiveDate;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::{EnvError, EnvFactory, EnvSpec, Environment, Feature, Step};
use crate::rng::{self, SimRng};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Order {
    pub id: u32,
    pub qty_a: u32,
    pub qty_b: u32,
    pub qty_c: u32,
    /// Days after the simulation start.
    pub deadline_day: u32,
}

impl Order {
    fn quantities(&self) -> [u32; 3] {
        [self.qty_a, self.qty_b, self.qty_c]
    }
}

/// One entry per order; `true` outsources it.
pub type DecisionVector = Vec<bool>;

/// Closed range `[low, high]` in days, sampled uniformly. Serialized as a
/// two-element array.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DayRange(pub f64, pub f64);

impl DayRange {
    pub fn constant(v: f64) -> Self {
        DayRange(v, v)
    }

    fn sample(self, rng: &mut SimRng) -> f64 {
        if self.0 == self.1 {
            self.0
        } else {
            rng.gen_range(self.0..=self.1)
        }
    }

    fn valid(self) -> bool {
        self.0.is_finite() && self.1.is_finite() && 0.0 <= self.0 && self.0 <= self.1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MakeOrBuyParams {
    /// Per-unit production time at plants A, B and C.
    pub production_a: DayRange,
    pub production_b: DayRange,
    pub production_c: DayRange,
    /// Travel time of each truck leg. The lower end must be positive so an
    /// idle truck still advances the clock.
    pub travel: DayRange,
    /// Dwell at a stop where the truck loads or unloads.
    pub load_unload: DayRange,
    /// Assembly time of one order at plant D.
    pub assembly: DayRange,
    pub on_time_reward: f64,
    pub late_reward: f64,
    pub outsource_cost: f64,
    /// When true an outsourced order also counts as on time (net +70 with
    /// the default coefficients); when false it only costs.
    pub outsourced_counts_on_time: bool,
    pub start_date: NaiveDate,
}

impl Default for MakeOrBuyParams {
    fn default() -> Self {
        MakeOrBuyParams {
            production_a: DayRange(1.5, 3.0),
            production_b: DayRange(1.5, 3.0),
            production_c: DayRange(1.5, 3.0),
            travel: DayRange(0.5, 1.5),
            load_unload: DayRange(0.1, 0.3),
            assembly: DayRange(0.5, 1.5),
            on_time_reward: 100.0,
            late_reward: 50.0,
            outsource_cost: 30.0,
            outsourced_counts_on_time: true,
            start_date: NaiveDate::from_ymd_opt(2024, 6, 19).expect("valid date"),
        }
    }
}

impl MakeOrBuyParams {
    pub fn from_toml(text: &str) -> Result<Self, EnvError> {
        let p: Self = toml::from_str(text).map_err(|e| EnvError::InvalidSpec(e.to_string()))?;
        p.validate()?;
        Ok(p)
    }

    /// Every range collapsed to the given constants.
    pub fn deterministic(production: f64, travel: f64, load_unload: f64, assembly: f64) -> Self {
        MakeOrBuyParams {
            production_a: DayRange::constant(production),
            production_b: DayRange::constant(production),
            production_c: DayRange::constant(production),
            travel: DayRange::constant(travel),
            load_unload: DayRange::constant(load_unload),
            assembly: DayRange::constant(assembly),
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        let ranges = [
            ("production_a", self.production_a),
            ("production_b", self.production_b),
            ("production_c", self.production_c),
            ("travel", self.travel),
            ("load_unload", self.load_unload),
            ("assembly", self.assembly),
        ];
        for (name, r) in ranges {
            if !r.valid() {
                return Err(EnvError::InvalidSpec(format!("{name} = [{}, {}] is not a range of non-negative days", r.0, r.1)));
            }
        }
        if self.travel.0 <= 0.0 {
            return Err(EnvError::InvalidSpec("travel time must be positive".into()));
        }
        Ok(())
    }

    pub fn revenue(&self, on_time: usize, late: usize, outsourced: usize) -> f64 {
        self.on_time_reward * on_time as f64 + self.late_reward * late as f64 - self.outsource_cost * outsourced as f64
    }
}

/// `100 * on_time + 50 * late - 30 * outsourced`.
pub fn revenue(on_time: usize, late: usize, outsourced: usize) -> f64 {
    MakeOrBuyParams::default().revenue(on_time, late, outsourced)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOutcome {
    pub n_on_time: usize,
    pub n_late: usize,
    pub n_outsourced: usize,
    pub revenue: f64,
    /// Assembly completion day of each internal order; `None` when outsourced.
    pub completion_day: Vec<Option<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum EventKind {
    /// A plant finished one unit.
    UnitDone { plant: usize },
    /// Plant D finished assembling an order.
    AssemblyDone { order: usize },
    /// The truck reaches stop 0..=3 (A, B, C, D).
    TruckArrive { stop: usize },
    /// The truck leaves a stop after loading or unloading.
    TruckDepart { stop: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Event {
    time: f64,
    kind: EventKind,
    seq: u64,
}

impl Eq for Event {}

impl Ord for Event {
    // Reversed so the max-heap pops the earliest event; at equal times
    // production is settled before the truck looks at the buffers.
    fn cmp(&self, other: &Self) -> Ordering {
        other.time.total_cmp(&self.time).then_with(|| other.kind.cmp(&self.kind)).then_with(|| other.seq.cmp(&self.seq))
    }
}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

struct Queue {
    heap: BinaryHeap<Event>,
    seq: u64,
    now: f64,
}

impl Queue {
    fn schedule(&mut self, time: f64, kind: EventKind) {
        debug_assert!(time >= self.now, "event scheduled in the past");
        self.seq += 1;
        self.heap.push(Event { time, kind, seq: self.seq });
    }

    fn pop(&mut self) -> Option<Event> {
        let e = self.heap.pop()?;
        self.now = e.time;
        Some(e)
    }
}

struct Plant {
    /// Order index of each unit still to produce, in list order.
    pending: VecDeque<usize>,
    /// Finished units waiting for the truck.
    buffer: Vec<usize>,
    rng: SimRng,
    time: DayRange,
}

/// Runs the supply chain once. Outsourced orders skip production entirely.
pub fn simulate(orders: &[Order], decisions: &[bool], params: &MakeOrBuyParams, seed: u64) -> SimOutcome {
    assert_eq!(orders.len(), decisions.len(), "one decision per order");
    let n = orders.len();
    let completion = if decisions.iter().all(|&d| d) { vec![None; n] } else { run_chain(orders, decisions, params, seed) };

    let mut out = SimOutcome { n_on_time: 0, n_late: 0, n_outsourced: 0, revenue: 0.0, completion_day: completion };
    for (order, done) in orders.iter().zip(&out.completion_day) {
        match done {
            None => {
                out.n_outsourced += 1;
                if params.outsourced_counts_on_time {
                    out.n_on_time += 1;
                }
            }
            Some(day) if *day <= order.deadline_day as f64 => out.n_on_time += 1,
            Some(_) => out.n_late += 1,
        }
    }
    out.revenue = params.revenue(out.n_on_time, out.n_late, out.n_outsourced);
    out
}

fn run_chain(orders: &[Order], decisions: &[bool], params: &MakeOrBuyParams, seed: u64) -> Vec<Option<f64>> {
    let n = orders.len();
    let ranges = [params.production_a, params.production_b, params.production_c];
    let mut plants: Vec<Plant> = (0..3)
        .map(|p| Plant {
            pending: (0..n).filter(|&i| !decisions[i]).flat_map(|i| std::iter::repeat_n(i, orders[i].quantities()[p] as usize)).collect(),
            buffer: Vec::new(),
            rng: rng::stream(&[seed, p as u64]),
            time: ranges[p],
        })
        .collect();
    let mut truck_rng = rng::stream(&[seed, 3]);
    let mut assembly_rng = rng::stream(&[seed, 4]);

    // Components still missing at D, per order.
    let mut missing: Vec<u32> = (0..n).map(|i| if decisions[i] { 0 } else { orders[i].quantities().iter().sum() }).collect();
    let mut completion = vec![None; n];
    let mut remaining_units: usize = plants.iter().map(|p| p.pending.len()).sum();
    let mut open_orders = decisions.iter().filter(|&&d| !d).count();

    let mut q = Queue { heap: BinaryHeap::new(), seq: 0, now: 0.0 };
    let mut ready: VecDeque<usize> = VecDeque::new();
    let mut assembler_busy = false;
    let mut cargo: Vec<usize> = Vec::new();

    // Orders without components can be assembled at once.
    ready.extend((0..n).filter(|&i| !decisions[i] && missing[i] == 0));
    for (p, plant) in plants.iter_mut().enumerate() {
        if !plant.pending.is_empty() {
            let t = plant.time.sample(&mut plant.rng);
            q.schedule(t, EventKind::UnitDone { plant: p });
        }
    }
    if remaining_units > 0 {
        q.schedule(0.0, EventKind::TruckArrive { stop: 0 });
    }

    loop {
        if !assembler_busy {
            if let Some(i) = ready.pop_front() {
                assembler_busy = true;
                let t = q.now + params.assembly.sample(&mut assembly_rng);
                q.schedule(t, EventKind::AssemblyDone { order: i });
            }
        }
        let Some(ev) = q.pop() else { break };
        match ev.kind {
            EventKind::UnitDone { plant } => {
                let p = &mut plants[plant];
                let order = p.pending.pop_front().expect("unit was scheduled");
                p.buffer.push(order);
                if !p.pending.is_empty() {
                    let t = ev.time + p.time.sample(&mut p.rng);
                    q.schedule(t, EventKind::UnitDone { plant });
                }
            }
            EventKind::AssemblyDone { order } => {
                completion[order] = Some(ev.time);
                assembler_busy = false;
                open_orders -= 1;
                if open_orders == 0 {
                    break;
                }
            }
            EventKind::TruckArrive { stop } => {
                let has_work = if stop < 3 { !plants[stop].buffer.is_empty() } else { !cargo.is_empty() };
                if has_work {
                    if stop < 3 {
                        // Units finishing during loading wait for the next cycle.
                        cargo.append(&mut plants[stop].buffer);
                    }
                    let t = ev.time + params.load_unload.sample(&mut truck_rng);
                    q.schedule(t, EventKind::TruckDepart { stop });
                } else {
                    q.schedule(ev.time, EventKind::TruckDepart { stop });
                }
            }
            EventKind::TruckDepart { stop } => {
                if stop == 3 {
                    for order in cargo.drain(..) {
                        missing[order] -= 1;
                        remaining_units -= 1;
                        if missing[order] == 0 {
                            ready.push_back(order);
                        }
                    }
                }
                if remaining_units > 0 {
                    let t = ev.time + params.travel.sample(&mut truck_rng);
                    q.schedule(t, EventKind::TruckArrive { stop: (stop + 1) % 4 });
                }
            }
        }
    }
    completion
}

/// Processes one order per step: observation `(qty_a, qty_b, qty_c,
/// days_to_deadline)`, actions MAKE (0) and BUY (1). The only reward is the
/// terminal revenue divided by 100.
pub struct MakeOrBuyEnv {
    spec: EnvSpec,
    orders: std::sync::Arc<Vec<Order>>,
    params: MakeOrBuyParams,
    seed: u64,
    decisions: DecisionVector,
}

pub const REWARD_SCALE: f64 = 100.0;

fn observe(order: &Order) -> Vec<f64> {
    vec![order.qty_a as f64, order.qty_b as f64, order.qty_c as f64, order.deadline_day as f64]
}

impl Environment for MakeOrBuyEnv {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self) -> Vec<f64> {
        self.decisions.clear();
        observe(&self.orders[0])
    }

    fn step(&mut self, action: usize) -> Step {
        self.decisions.push(action == 1);
        let t = self.decisions.len();
        if t < self.orders.len() {
            return Step { observation: observe(&self.orders[t]), reward: 0.0, done: false };
        }
        let out = simulate(&self.orders, &self.decisions, &self.params, self.seed);
        Step { observation: observe(&self.orders[t - 1]), reward: out.revenue / REWARD_SCALE, done: true }
    }
}

/// Builds make-or-buy episodes over a fixed order list; the episode seed
/// drives the simulation's randomness.
#[derive(Debug, Clone)]
pub struct MakeOrBuyFactory {
    spec: EnvSpec,
    orders: std::sync::Arc<Vec<Order>>,
    params: MakeOrBuyParams,
}

impl MakeOrBuyFactory {
    pub fn new(orders: Vec<Order>, params: MakeOrBuyParams) -> Result<Self, EnvError> {
        if orders.is_empty() {
            return Err(EnvError::InvalidSpec("make-or-buy episodes need at least one order".into()));
        }
        params.validate()?;
        let range = |f: fn(&Order) -> u32| {
            let lo = orders.iter().map(f).min().unwrap_or(0) as f64;
            let hi = orders.iter().map(f).max().unwrap_or(0) as f64;
            (lo, hi)
        };
        let feature = |name: &str, (lo, hi): (f64, f64)| Feature::numeric(name, lo, hi);
        let features = vec![
            feature("qty_a", range(|o| o.qty_a)),
            feature("qty_b", range(|o| o.qty_b)),
            feature("qty_c", range(|o| o.qty_c)),
            feature("days_to_deadline", range(|o| o.deadline_day)),
        ];
        let stochastic =
            [params.production_a, params.production_b, params.production_c, params.travel, params.load_unload, params.assembly]
                .iter()
                .any(|r| r.0 != r.1);
        let spec = EnvSpec::new(features, vec!["MAKE".into(), "BUY".into()], orders.len(), stochastic)?;
        Ok(MakeOrBuyFactory { spec, orders: std::sync::Arc::new(orders), params })
    }

    pub fn orders(&self) -> &[Order] {
        &self.orders
    }

    pub fn params(&self) -> &MakeOrBuyParams {
        &self.params
    }
}

impl EnvFactory for MakeOrBuyFactory {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn make(&self, seed: u64) -> Box<dyn Environment> {
        Box::new(MakeOrBuyEnv {
            spec: self.spec.clone(),
            orders: self.orders.clone(),
            params: self.params.clone(),
            seed,
            decisions: Vec::with_capacity(self.orders.len()),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn order(id: u32, a: u32, b: u32, c: u32, deadline: u32) -> Order {
        Order { id, qty_a: a, qty_b: b, qty_c: c, deadline_day: deadline }
    }

    fn sample_orders(n: u32) -> Vec<Order> {
        (0..n).map(|i| order(i, i % 21, (i * 7) % 21, (i * 13) % 21, 800 + (i * 37) % 701)).collect()
    }

    #[test]
    fn revenue_formula() {
        assert_eq!(revenue(100, 0, 0), 10_000.0);
        assert_eq!(revenue(1, 1, 1), 120.0);
        assert_eq!(revenue(100, 0, 100), 7000.0);
    }

    #[test]
    fn outsourcing_everything_is_seed_independent() {
        let orders = sample_orders(100);
        for seed in 0..20 {
            let out = simulate(&orders, &[true; 100], &MakeOrBuyParams::default(), seed);
            assert_eq!(out.revenue, 7000.0);
            assert_eq!((out.n_on_time, out.n_late, out.n_outsourced), (100, 0, 100));
        }
    }

    #[test]
    fn single_order_deterministic_trace() {
        // Unit done at 1.0; truck waits at A from 0 (nothing ready), goes
        // B, C, D, A: arrives A at 4.0 via travel 1.0 per leg, loads 0.5,
        // reaches D at 4.5 + 3.0 = 7.5, unloads 0.5, assembles 2.0 -> 10.0.
        let p = MakeOrBuyParams::deterministic(1.0, 1.0, 0.5, 2.0);
        let out = simulate(&[order(0, 1, 0, 0, 10_000)], &[false], &p, 0);
        assert_eq!(out.n_on_time, 1);
        assert_eq!(out.revenue, 100.0);
        assert_eq!(out.completion_day, vec![Some(10.0)]);
    }

    #[test]
    fn deadline_is_inclusive() {
        let p = MakeOrBuyParams::deterministic(1.0, 1.0, 0.5, 2.0);
        assert_eq!(simulate(&[order(0, 1, 0, 0, 10)], &[false], &p, 0).n_on_time, 1);
        assert_eq!(simulate(&[order(0, 1, 0, 0, 9)], &[false], &p, 0).n_late, 1);
    }

    #[test]
    fn component_free_order_only_needs_assembly() {
        let p = MakeOrBuyParams::deterministic(1.0, 1.0, 0.5, 2.0);
        let out = simulate(&[order(0, 0, 0, 0, 5)], &[false], &p, 0);
        assert_eq!(out.completion_day, vec![Some(2.0)]);
    }

    #[test]
    fn outsourcing_flag_switches_interpretation() {
        let p = MakeOrBuyParams { outsourced_counts_on_time: false, ..Default::default() };
        let out = simulate(&sample_orders(10), &[true; 10], &p, 0);
        assert_eq!(out.n_on_time, 0);
        assert_eq!(out.revenue, -300.0);
    }

    #[test]
    fn determinism_and_seed_variance() {
        let orders = sample_orders(30);
        let d: Vec<bool> = (0..30).map(|i| i % 3 == 0).collect();
        let p = MakeOrBuyParams::default();
        assert_eq!(simulate(&orders, &d, &p, 9), simulate(&orders, &d, &p, 9));
        let days: Vec<f64> = (0..100).map(|s| simulate(&orders, &d, &p, s).completion_day[1].unwrap()).collect();
        let m = crate::env::mean(&days);
        let var = days.iter().map(|x| (x - m).powi(2)).sum::<f64>() / 99.0;
        assert!(var > 0.0);
    }

    #[test]
    fn completion_monotone_in_quantities_on_constant_params() {
        let p = MakeOrBuyParams::deterministic(0.7, 0.3, 0.1, 0.4);
        let base = sample_orders(8);
        let d = vec![false; 8];
        let before = simulate(&base, &d, &p, 0).completion_day;
        for i in 0..8 {
            for q in 0..3 {
                let mut more = base.clone();
                match q {
                    0 => more[i].qty_a += 3,
                    1 => more[i].qty_b += 3,
                    _ => more[i].qty_c += 3,
                }
                let after = simulate(&more, &d, &p, 0).completion_day;
                assert!(after[i].unwrap() >= before[i].unwrap(), "order {i} component {q}");
            }
        }
    }

    #[test]
    fn env_matches_simulation() {
        let orders = sample_orders(12);
        let f = MakeOrBuyFactory::new(orders.clone(), MakeOrBuyParams::default()).unwrap();
        assert_eq!(f.spec().horizon(), 12);
        let mut env = f.make(5);
        let mut obs = env.reset();
        let mut decisions = Vec::new();
        let mut total = 0.0;
        for (t, order) in orders.iter().enumerate().take(12) {
            assert_eq!(obs[3], order.deadline_day as f64);
            let a = t % 2;
            decisions.push(a == 1);
            let s = env.step(a);
            total += s.reward;
            assert_eq!(s.done, t == 11);
            obs = s.observation;
        }
        assert_eq!(total, simulate(&orders, &decisions, &MakeOrBuyParams::default(), 5).revenue / REWARD_SCALE);
    }

    #[test]
    fn params_toml_round_trip_and_validation() {
        let p = MakeOrBuyParams::default();
        let text = toml::to_string(&p).unwrap();
        assert_eq!(MakeOrBuyParams::from_toml(&text).unwrap(), p);
        assert!(MakeOrBuyParams::from_toml("travel = [0.0, 1.0]").is_err());
        assert!(MakeOrBuyParams::from_toml("assembly = [2.0, 1.0]").is_err());
        assert!(MakeOrBuyParams::from_toml("start_date = \"2025-01-01\"").unwrap().start_date.to_string() == "2025-01-01");
    }
}
