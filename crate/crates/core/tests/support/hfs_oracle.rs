//! Brute-force reference scheduler for small integer instances.
//!
//! Jobs are placed one at a time in permutation order. For each job the
//! lexicographically smallest vector of integer phase starts is found by
//! depth-first search over every time slot, checking capacities on a unit
//! time grid. Nothing here shares code with the library decoder.

#![allow(dead_code)]

use std::collections::BTreeMap;

use eldt_core::hfs::{Category, HfsInstance, Job, MachineTypeSpec, Phase};
use eldt_core::rng::SimRng;
use rand::Rng;

pub struct Oracle<'a> {
    inst: &'a HfsInstance,
    horizon: usize,
    /// usage[c][t]: units of category c busy during [t, t + 1).
    usage: Vec<Vec<usize>>,
    areas: Vec<usize>,
}

fn int(x: f64) -> usize {
    assert!(x >= 0.0 && x.fract() == 0.0, "oracle needs integer times, got {x}");
    x as usize
}

impl<'a> Oracle<'a> {
    pub fn new(inst: &'a HfsInstance) -> Self {
        let total: f64 = (0..inst.jobs().len()).map(|j| inst.spec_of(j).total_duration()).sum();
        let release = inst.jobs().iter().map(|j| j.basement_day.max(j.panel_day)).fold(0.0, f64::max);
        let horizon = int(total) + int(release) + 2;
        Oracle { inst, horizon, usage: vec![vec![0; horizon]; 3], areas: vec![0; horizon] }
    }

    fn release(&self, job: usize, k: usize) -> usize {
        let phases = &self.inst.spec_of(job).phases;
        let cat = phases[k].category;
        if phases.iter().position(|p| p.category == cat) != Some(k) {
            return 0;
        }
        let j = &self.inst.jobs()[job];
        match cat {
            Category::M => int(j.basement_day),
            Category::E => int(j.panel_day),
            Category::R => 0,
        }
    }

    fn free(&self, c: usize, from: usize, to: usize) -> bool {
        let cap = self.inst.capacities()[c];
        (from..to).all(|t| self.usage[c][t] < cap)
    }

    fn area_free(&self, from: usize, to: usize) -> bool {
        (from..to).all(|t| self.areas[t] < self.inst.assembly_areas())
    }

    fn search(&self, job: usize, k: usize, earliest: usize, first: usize, starts: &mut Vec<usize>) -> bool {
        let phases = &self.inst.spec_of(job).phases;
        if k == phases.len() {
            return true;
        }
        let d = int(phases[k].duration);
        let c = phases[k].category as usize;
        let lb = earliest.max(self.release(job, k));
        for s in lb..self.horizon - d {
            let span_start = if k == 0 { s } else { first };
            if !self.free(c, s, s + d) || !self.area_free(span_start, s + d) {
                continue;
            }
            starts.push(s);
            if self.search(job, k + 1, s + d, span_start, starts) {
                return true;
            }
            starts.pop();
        }
        false
    }

    /// Phase starts and ends of `job` after placing it.
    pub fn place(&mut self, job: usize) -> Vec<(usize, usize)> {
        let mut starts = Vec::new();
        assert!(self.search(job, 0, 0, 0, &mut starts), "horizon too short");
        let phases = &self.inst.spec_of(job).phases;
        let spans: Vec<(usize, usize)> = starts.iter().zip(phases).map(|(&s, p)| (s, s + int(p.duration))).collect();
        for (&(s, e), p) in spans.iter().zip(phases) {
            for t in s..e {
                self.usage[p.category as usize][t] += 1;
            }
        }
        for t in spans[0].0..spans.last().unwrap().1 {
            self.areas[t] += 1;
        }
        spans
    }
}

/// Per-job phase spans and makespan (latest end plus transport).
pub fn oracle_schedule(inst: &HfsInstance, perm: &[usize]) -> (Vec<Vec<(usize, usize)>>, f64) {
    let mut o = Oracle::new(inst);
    let mut spans = vec![Vec::new(); inst.jobs().len()];
    for &j in perm {
        spans[j] = o.place(j);
    }
    let last = spans.iter().map(|s| s.last().unwrap().1).max().unwrap_or(0);
    let makespan = if spans.is_empty() { 0.0 } else { last as f64 + inst.transport_days() };
    (spans, makespan)
}

/// Random small integer instance: up to `max_jobs` jobs, up to three
/// phases per machine type, capacities in 1..=max_cap.
pub fn random_instance(rng: &mut SimRng, max_jobs: usize, max_cap: usize) -> HfsInstance {
    let cats = [Category::M, Category::E, Category::R];
    let n_types = rng.gen_range(1..=3);
    let mut types = BTreeMap::new();
    for t in 0..n_types {
        let phases = (0..rng.gen_range(1..=3))
            .map(|_| Phase { category: cats[rng.gen_range(0..3)], duration: rng.gen_range(1..=4) as f64 })
            .collect();
        types.insert(format!("T{t}"), MachineTypeSpec { phases });
    }
    let jobs = (0..rng.gen_range(1..=max_jobs))
        .map(|i| {
            let db = rng.gen_range(0..=5) as f64;
            Job {
                id: i as u32 + 1,
                machine_type: format!("T{}", rng.gen_range(0..n_types)),
                due_day: db + rng.gen_range(0..=10) as f64,
                basement_day: db,
                panel_day: rng.gen_range(0..=5) as f64,
            }
        })
        .collect();
    let caps = [rng.gen_range(1..=max_cap), rng.gen_range(1..=max_cap), rng.gen_range(1..=max_cap)];
    let areas = rng.gen_range(1..=3);
    let transport = rng.gen_range(0..=2) as f64;
    HfsInstance::new(jobs, caps, areas, transport, types).expect("valid random instance")
}

/// Every permutation of `0..n` in lexicographic order.
pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    fn go(prefix: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if prefix.len() == used.len() {
            out.push(prefix.clone());
            return;
        }
        for i in 0..used.len() {
            if !used[i] {
                used[i] = true;
                prefix.push(i);
                go(prefix, used, out);
                prefix.pop();
                used[i] = false;
            }
        }
    }
    let mut out = Vec::new();
    go(&mut Vec::new(), &mut vec![false; n], &mut out);
    out
}
