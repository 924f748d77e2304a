//! Particle and spring state plus the fixed-timestep integration loop.
//!
//! A step runs in two passes. The first evaluates every spring into a
//! per-spring force buffer; the second gathers, for each mass, the
//! contributions of its incident springs in ascending spring order, adds
//! gravity, drag, external load and ground contact, and applies a
//! semi-implicit Euler update. Both passes write disjoint outputs, so the
//! parallel path produces the same bits as the sequential one.

use std::sync::atomic::{AtomicBool, Ordering};
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Vec3;

/// Default physics timestep (s).
macro_rules! step_context {
    ($state:expr) => {
        StepContext {
            gravity: $state.gravity,
            drag: $state.drag,
            dt: $state.dt,
            contact: $state.contact,
            external: &$state.external,
        }
    };
}

pub const DEFAULT_DT: f64 = 5e-5;

/// Springs shorter than this with a positive rest length have no usable axis.
pub const DEGENERATE_EPS: f64 = 1e-9;

/// Standard gravity (m/s²).
pub const STANDARD_GRAVITY: f64 = 9.81;

/// Below this many springs the parallel executor runs inline.
const PAR_MIN_LEN: usize = 512;

#[derive(Clone, Debug, PartialEq)]
pub struct MassPoint {
    pub position: Vec3,
    pub velocity: Vec3,
    pub mass: f64,
    /// Total force applied during the last step.
    pub force_accum: Vec3,
    pub fixed: bool,
}

impl MassPoint {
    pub fn new(position: Vec3, mass: f64) -> Self {
        Self {
            position,
            velocity: Vec3::zeros(),
            mass,
            force_accum: Vec3::zeros(),
            fixed: false,
        }
    }

    pub fn pinned(position: Vec3, mass: f64) -> Self {
        Self {
            fixed: true,
            ..Self::new(position, mass)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpringElement {
    pub endpoint_a: usize,
    pub endpoint_b: usize,
    pub rest_length: f64,
    pub stiffness: f64,
    pub damping: f64,
}

impl SpringElement {
    pub fn new(endpoint_a: usize, endpoint_b: usize, rest_length: f64, stiffness: f64, damping: f64) -> Self {
        Self {
            endpoint_a,
            endpoint_b,
            rest_length,
            stiffness,
            damping,
        }
    }

    pub fn current_length(&self, masses: &[MassPoint]) -> f64 {
        (masses[self.endpoint_b].position - masses[self.endpoint_a].position).norm()
    }
}

/// Penalty ground contact with capped Coulomb friction. The ground is the
/// horizontal plane `z = ground_height`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ContactModel {
    pub ground_height: f64,
    pub normal_stiffness: f64,
    pub normal_damping: f64,
    pub friction_coefficient: f64,
}

impl Default for ContactModel {
    fn default() -> Self {
        Self {
            ground_height: 0.0,
            normal_stiffness: 5e4,
            normal_damping: 10.0,
            friction_coefficient: 0.8,
        }
    }
}

impl ContactModel {
    pub fn validate(&self) -> Result<()> {
        if !self.ground_height.is_finite() {
            return Err(Error::param("ground_height", "must be finite"));
        }
        if !(self.normal_stiffness >= 0.0) || !self.normal_stiffness.is_finite() {
            return Err(Error::param("normal_stiffness", "must be finite and >= 0"));
        }
        if !(self.normal_damping >= 0.0) {
            return Err(Error::param("normal_damping", "must be >= 0"));
        }
        if !(self.friction_coefficient >= 0.0) {
            return Err(Error::param("friction_coefficient", "must be >= 0"));
        }
        Ok(())
    }

    /// Contact force on a single mass. Exactly zero at or above the ground.
    ///
    /// The tangential part opposes the horizontal velocity and is capped by
    /// both the Coulomb limit and the force that would stop the mass within
    /// one step, so `|f_t| <= mu * f_n` always holds.
    #[inline]
    pub fn force(&self, position: &Vec3, velocity: &Vec3, mass: f64, dt: f64) -> Vec3 {
        if !(position.z < self.ground_height) {
            return Vec3::zeros();
        }
        let penetration = self.ground_height - position.z;
        let normal = (self.normal_stiffness * penetration - self.normal_damping * velocity.z).max(0.0);
        let vt = Vec3::new(velocity.x, velocity.y, 0.0);
        let speed = vt.norm();
        if speed == 0.0 || normal == 0.0 {
            return Vec3::new(0.0, 0.0, normal);
        }
        let stop = mass * speed / dt;
        let tangential = (self.friction_coefficient * normal).min(stop);
        let scale = tangential / speed;
        Vec3::new(-vt.x * scale, -vt.y * scale, normal)
    }

    /// Elastic energy stored in the penalty spring.
    pub fn potential(&self, position: &Vec3) -> f64 {
        if position.z < self.ground_height {
            let p = self.ground_height - position.z;
            0.5 * self.normal_stiffness * p * p
        } else {
            0.0
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct Incident {
    spring: u32,
    negate: bool,
}

/// Compressed incidence lists: for each mass, the springs touching it in
/// ascending spring order.
#[derive(Clone, Debug, Default)]
struct Incidence {
    offsets: Vec<usize>,
    entries: Vec<Incident>,
}

impl Incidence {
    fn build(n_masses: usize, springs: &[SpringElement]) -> Self {
        let mut counts = vec![0usize; n_masses + 1];
        for s in springs {
            counts[s.endpoint_a + 1] += 1;
            counts[s.endpoint_b + 1] += 1;
        }
        for i in 0..n_masses {
            counts[i + 1] += counts[i];
        }
        let offsets = counts.clone();
        let mut cursor = counts;
        let mut entries = vec![
            Incident {
                spring: 0,
                negate: false
            };
            offsets[n_masses]
        ];
        for (idx, s) in springs.iter().enumerate() {
            entries[cursor[s.endpoint_a]] = Incident {
                spring: idx as u32,
                negate: false,
            };
            cursor[s.endpoint_a] += 1;
            entries[cursor[s.endpoint_b]] = Incident {
                spring: idx as u32,
                negate: true,
            };
            cursor[s.endpoint_b] += 1;
        }
        Self { offsets, entries }
    }

    #[inline]
    fn of(&self, mass: usize) -> &[Incident] {
        &self.entries[self.offsets[mass]..self.offsets[mass + 1]]
    }
}

/// Complete simulation state. `sim_time` is always `step_count * dt`.
#[derive(Clone, Debug)]
pub struct SimState {
    masses: Vec<MassPoint>,
    springs: Vec<SpringElement>,
    pub contact: Option<ContactModel>,
    pub gravity: Vec3,
    /// Global viscous drag per mass (N·s/m), zero by default.
    pub drag: f64,
    dt: f64,
    step_count: u64,
    sim_time: f64,
    external: Vec<Vec3>,
    incidence: Option<Incidence>,
    spring_forces: Vec<Vec3>,
}

impl SimState {
    pub fn new(dt: f64) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::param("dt", "must be finite and > 0"));
        }
        Ok(Self {
            masses: Vec::new(),
            springs: Vec::new(),
            contact: None,
            gravity: Vec3::new(0.0, 0.0, -STANDARD_GRAVITY),
            drag: 0.0,
            dt,
            step_count: 0,
            sim_time: 0.0,
            external: Vec::new(),
            incidence: None,
            spring_forces: Vec::new(),
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn sim_time(&self) -> f64 {
        self.sim_time
    }

    pub fn masses(&self) -> &[MassPoint] {
        &self.masses
    }

    pub fn masses_mut(&mut self) -> &mut [MassPoint] {
        &mut self.masses
    }

    pub fn springs(&self) -> &[SpringElement] {
        &self.springs
    }

    /// Mutable spring access. Endpoints may change, so the incidence cache is
    /// dropped.
    pub fn springs_mut(&mut self) -> &mut [SpringElement] {
        self.incidence = None;
        &mut self.springs
    }

    pub(crate) fn spring_mut_keep_topology(&mut self, index: usize) -> &mut SpringElement {
        &mut self.springs[index]
    }

    pub fn add_mass(&mut self, mass: MassPoint) -> Result<usize> {
        let index = self.masses.len();
        if !(mass.mass > 0.0) || !mass.mass.is_finite() {
            return Err(Error::InvalidMass {
                index,
                reason: format!("mass {} must be finite and > 0", mass.mass),
            });
        }
        if !mass.position.iter().all(|c| c.is_finite()) || !mass.velocity.iter().all(|c| c.is_finite()) {
            return Err(Error::InvalidMass {
                index,
                reason: "non-finite position or velocity".into(),
            });
        }
        self.masses.push(mass);
        self.incidence = None;
        Ok(index)
    }

    pub fn add_spring(&mut self, spring: SpringElement) -> Result<usize> {
        let index = self.springs.len();
        let n = self.masses.len();
        if spring.endpoint_a == spring.endpoint_b {
            return Err(Error::InvalidSpring {
                index,
                reason: "endpoints coincide".into(),
            });
        }
        if spring.endpoint_a >= n || spring.endpoint_b >= n {
            return Err(Error::InvalidSpring {
                index,
                reason: format!("endpoint out of range for {n} masses"),
            });
        }
        if !(spring.rest_length >= 0.0) || !(spring.stiffness > 0.0) || !(spring.damping >= 0.0) {
            return Err(Error::InvalidSpring {
                index,
                reason: "requires rest_length >= 0, stiffness > 0, damping >= 0".into(),
            });
        }
        self.springs.push(spring);
        self.incidence = None;
        Ok(index)
    }

    /// Adds a spring whose rest length is the current endpoint distance.
    pub fn connect(&mut self, a: usize, b: usize, stiffness: f64, damping: f64) -> Result<usize> {
        let rest = match (self.masses.get(a), self.masses.get(b)) {
            (Some(pa), Some(pb)) => (pb.position - pa.position).norm(),
            _ => 0.0,
        };
        self.add_spring(SpringElement::new(a, b, rest, stiffness, damping))
    }

    /// Constant per-mass external load, for quasi-static tests.
    pub fn set_external_force(&mut self, index: usize, force: Vec3) {
        if self.external.len() < self.masses.len() {
            self.external.resize(self.masses.len(), Vec3::zeros());
        }
        self.external[index] = force;
    }

    pub fn clear_external_forces(&mut self) {
        self.external.clear();
    }

    fn ensure_incidence(&mut self) {
        let stale = match &self.incidence {
            Some(inc) => inc.offsets.len() != self.masses.len() + 1 || inc.entries.len() != 2 * self.springs.len(),
            None => true,
        };
        if stale {
            self.incidence = Some(Incidence::build(self.masses.len(), &self.springs));
        }
        if self.spring_forces.len() != self.springs.len() {
            self.spring_forces.resize(self.springs.len(), Vec3::zeros());
        }
    }

    /// Per-spring force acting on `endpoint_a`; `endpoint_b` receives the
    /// negation. Nothing is accumulated into the masses.
    pub fn compute_spring_forces(&self) -> Result<Vec<Vec3>> {
        let mut out = vec![Vec3::zeros(); self.springs.len()];
        for (i, f) in out.iter_mut().enumerate() {
            *f = spring_force(&self.springs[i], &self.masses).map_err(|e| degenerate(e, i))?;
        }
        Ok(out)
    }

    /// Contact force for every mass (zero when contact is disabled).
    pub fn compute_contact_forces(&self) -> Vec<Vec3> {
        match &self.contact {
            Some(c) => self
                .masses
                .iter()
                .map(|m| c.force(&m.position, &m.velocity, m.mass, self.dt))
                .collect(),
            None => vec![Vec3::zeros(); self.masses.len()],
        }
    }

    /// Gathers the given per-spring forces plus gravity, drag, external load
    /// and contact, then advances velocities and positions by one step.
    pub fn accumulate_and_integrate(&mut self, spring_forces: &[Vec3]) -> Result<()> {
        if spring_forces.len() != self.springs.len() {
            return Err(Error::param(
                "spring_forces",
                format!("expected {} entries, got {}", self.springs.len(), spring_forces.len()),
            ));
        }
        self.ensure_incidence();
        let ctx = step_context!(self);
        let inc = self.incidence.as_ref().expect("incidence built");
        let mut bad = None;
        for (i, m) in self.masses.iter_mut().enumerate() {
            if !integrate_mass(i, m, inc, spring_forces, &ctx) && bad.is_none() {
                bad = Some(i);
            }
        }
        self.finish_step(bad)
    }

    /// One full physics step on the calling thread.
    pub fn step(&mut self) -> Result<()> {
        Executor::sequential().step(self)
    }

    fn finish_step(&mut self, bad: Option<usize>) -> Result<()> {
        if let Some(index) = bad {
            return Err(Error::NonFinite {
                index,
                step: self.step_count,
            });
        }
        self.step_count += 1;
        self.sim_time = self.step_count as f64 * self.dt;
        Ok(())
    }

    pub fn total_mass(&self) -> f64 {
        self.masses.iter().map(|m| m.mass).sum()
    }

    pub fn center_of_mass(&self) -> Vec3 {
        let mut acc = Vec3::zeros();
        let mut total = 0.0;
        for m in &self.masses {
            acc += m.position * m.mass;
            total += m.mass;
        }
        acc / total
    }

    pub fn linear_momentum(&self) -> Vec3 {
        self.masses
            .iter()
            .fold(Vec3::zeros(), |acc, m| acc + m.velocity * m.mass)
    }

    pub fn kinetic_energy(&self) -> f64 {
        self.masses
            .iter()
            .map(|m| 0.5 * m.mass * m.velocity.norm_squared())
            .sum()
    }

    /// Spring, gravitational and contact potential energy. Gravity is
    /// measured relative to the origin.
    pub fn potential_energy(&self) -> f64 {
        let springs: f64 = self
            .springs
            .iter()
            .map(|s| {
                let stretch = s.current_length(&self.masses) - s.rest_length;
                0.5 * s.stiffness * stretch * stretch
            })
            .sum();
        let gravity: f64 = self
            .masses
            .iter()
            .map(|m| -m.mass * self.gravity.dot(&m.position))
            .sum();
        let contact: f64 = match &self.contact {
            Some(c) => self.masses.iter().map(|m| c.potential(&m.position)).sum(),
            None => 0.0,
        };
        springs + gravity + contact
    }

    pub fn mechanical_energy(&self) -> f64 {
        self.kinetic_energy() + self.potential_energy()
    }

    pub fn positions(&self) -> Vec<Vec3> {
        self.masses.iter().map(|m| m.position).collect()
    }

    /// Applies `f` to every mass position (and nothing else). Used for
    /// placing assemblies in the world.
    pub fn transform_positions(&mut self, mut f: impl FnMut(Vec3) -> Vec3) {
        for m in &mut self.masses {
            m.position = f(m.position);
        }
    }
}

fn degenerate(length_rest: (f64, f64), index: usize) -> Error {
    Error::DegenerateSpring {
        index,
        length: length_rest.0,
        rest_length: length_rest.1,
    }
}

/// Hookean force with axial damping on `endpoint_a`. `Err((length, rest))`
/// when the axis is undefined.
#[inline]
fn spring_force(s: &SpringElement, masses: &[MassPoint]) -> std::result::Result<Vec3, (f64, f64)> {
    let a = &masses[s.endpoint_a];
    let b = &masses[s.endpoint_b];
    let d = b.position - a.position;
    let len = d.norm();
    if len < DEGENERATE_EPS {
        if s.rest_length > 0.0 {
            return Err((len, s.rest_length));
        }
        return Ok(Vec3::zeros());
    }
    let dir = d / len;
    let axial_rate = (b.velocity - a.velocity).dot(&dir);
    let magnitude = s.stiffness * (len - s.rest_length) + s.damping * axial_rate;
    Ok(dir * magnitude)
}

struct StepContext<'a> {
    gravity: Vec3,
    drag: f64,
    dt: f64,
    contact: Option<ContactModel>,
    external: &'a [Vec3],
}

/// Returns false when the new state is not finite.
#[inline]
fn integrate_mass(i: usize, m: &mut MassPoint, inc: &Incidence, forces: &[Vec3], ctx: &StepContext<'_>) -> bool {
    if m.fixed {
        m.velocity = Vec3::zeros();
        m.force_accum = Vec3::zeros();
        return m.position.iter().all(|c| c.is_finite());
    }
    let mut f = Vec3::zeros();
    for e in inc.of(i) {
        let fs = &forces[e.spring as usize];
        if e.negate {
            f -= fs;
        } else {
            f += fs;
        }
    }
    f += ctx.gravity * m.mass;
    if ctx.drag != 0.0 {
        f -= m.velocity * ctx.drag;
    }
    if let Some(ext) = ctx.external.get(i) {
        f += ext;
    }
    if let Some(c) = &ctx.contact {
        f += c.force(&m.position, &m.velocity, m.mass, ctx.dt);
    }
    m.force_accum = f;
    m.velocity += f * (ctx.dt / m.mass);
    m.position += m.velocity * ctx.dt;
    m.velocity.iter().all(|c| c.is_finite()) && m.position.iter().all(|c| c.is_finite())
}

/// Runs steps either inline or on a dedicated worker pool. Results are
/// bit-identical for every worker count.
pub struct Executor {
    pool: Option<rayon::ThreadPool>,
}

impl Executor {
    pub fn sequential() -> Self {
        Self { pool: None }
    }

    pub fn with_workers(workers: usize) -> Result<Self> {
        if workers <= 1 {
            return Ok(Self::sequential());
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::param("workers", e.to_string()))?;
        Ok(Self { pool: Some(pool) })
    }

    pub fn workers(&self) -> usize {
        self.pool.as_ref().map_or(1, |p| p.current_num_threads())
    }

    pub fn step(&self, state: &mut SimState) -> Result<()> {
        state.ensure_incidence();
        let mut forces = std::mem::take(&mut state.spring_forces);
        let result = self.step_with_buffer(state, &mut forces);
        state.spring_forces = forces;
        result
    }

    fn step_with_buffer(&self, state: &mut SimState, forces: &mut [Vec3]) -> Result<()> {
        let masses = &state.masses;
        let springs = &state.springs;
        let failed = AtomicBool::new(false);
        let eval = |(i, out): (usize, &mut Vec3)| match spring_force(&springs[i], masses) {
            Ok(f) => *out = f,
            Err(_) => failed.store(true, Ordering::Relaxed),
        };
        match &self.pool {
            Some(pool) if springs.len() >= PAR_MIN_LEN => pool.install(|| {
                forces
                    .par_iter_mut()
                    .enumerate()
                    .with_min_len(PAR_MIN_LEN / 2)
                    .for_each(eval)
            }),
            _ => forces.iter_mut().enumerate().for_each(eval),
        }
        if failed.load(Ordering::Relaxed) {
            // Report the lowest offending index regardless of scheduling.
            for (i, s) in springs.iter().enumerate() {
                if let Err(e) = spring_force(s, masses) {
                    return Err(degenerate(e, i));
                }
            }
        }

        let ctx = step_context!(state);
        let inc = state.incidence.as_ref().expect("incidence built");
        let forces: &[Vec3] = forces;
        let first_bad = match &self.pool {
            Some(pool) if springs.len() >= PAR_MIN_LEN => pool.install(|| {
                state
                    .masses
                    .par_iter_mut()
                    .enumerate()
                    .with_min_len(64)
                    .filter_map(|(i, m)| (!integrate_mass(i, m, inc, forces, &ctx)).then_some(i))
                    .min()
            }),
            _ => {
                let mut bad = None;
                for (i, m) in state.masses.iter_mut().enumerate() {
                    if !integrate_mass(i, m, inc, forces, &ctx) && bad.is_none() {
                        bad = Some(i);
                    }
                }
                bad
            }
        };
        state.finish_step(first_bad)
    }

    /// Steps `n` times, handing the state to `sink` every `stride` steps
    /// (after the step) when a stride is given.
    pub fn run(
        &self,
        state: &mut SimState,
        n: u64,
        stride: Option<u64>,
        mut sink: impl FnMut(&SimState),
    ) -> Result<()> {
        for _ in 0..n {
            self.step(state)?;
            if let Some(k) = stride {
                if k > 0 && state.step_count.is_multiple_of(k) {
                    sink(state);
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ThroughputReport {
    pub springs: usize,
    pub masses: usize,
    pub steps: u64,
    pub spring_evaluations: u64,
    pub elapsed: Duration,
    pub evaluations_per_second: f64,
    pub steps_per_second: f64,
    /// Simulated seconds per wall-clock second at the state's timestep.
    pub real_time_factor: f64,
    pub dt: f64,
    pub workers: usize,
}

/// Times `n_steps` physics steps on `state`.
pub fn throughput_benchmark(state: &mut SimState, n_steps: u64, exec: &Executor) -> Result<ThroughputReport> {
    if n_steps == 0 {
        return Err(Error::param("n_steps", "must be >= 1"));
    }
    state.ensure_incidence();
    let start = Instant::now();
    for _ in 0..n_steps {
        exec.step(state)?;
    }
    let elapsed = start.elapsed();
    Ok(ThroughputReport::from_timing(
        state.springs.len(),
        state.masses.len(),
        n_steps,
        elapsed,
        state.dt,
        exec.workers(),
    ))
}

impl ThroughputReport {
    pub fn from_timing(springs: usize, masses: usize, steps: u64, elapsed: Duration, dt: f64, workers: usize) -> Self {
        let secs = elapsed.as_secs_f64().max(f64::MIN_POSITIVE);
        let spring_evaluations = springs as u64 * steps;
        Self {
            springs,
            masses,
            steps,
            spring_evaluations,
            elapsed,
            evaluations_per_second: spring_evaluations as f64 / secs,
            steps_per_second: steps as f64 / secs,
            real_time_factor: steps as f64 * dt / secs,
            dt,
            workers,
        }
    }
}
