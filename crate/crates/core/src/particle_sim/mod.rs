//! Critical binary branching Brownian motion started from `N` particles at
//! the origin, each of mass `1/N`.
//!
//! Every step of length `dt` moves each particle by an independent
//! `N(0, dt·I)` increment, then lets it die or split in two with probability
//! `q/2` each. Children sit at the parent's post-move position. With branching
//! rate `N` the measure-valued process converges to super-Brownian motion with
//! `[M(φ)]_t = ∫₀ᵗ X_s(φ²) ds`.
//!
//! Occupation integrals `∫₀ᵗ X_s(φ) ds` are accumulated on the fly by the
//! trapezoid rule on the step grid; nothing per-step is stored.

mod config;
mod kernel;
pub mod rng;

use std::sync::Arc;

use rand::{Rng, RngCore};
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use config::{BranchingRule, Horizon, Observable, SimConfig, MAX_BRANCHING_LOAD};

use crate::error::{Error, Result};
use crate::kernel_math::SpatialPoint;
use kernel::Kernel;
use rng::StreamRng;

/// The measure `X_t = (1/N) Σ δ_{yᵢ}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticleCloud {
    pub time: f64,
    pub dim: usize,
    /// Coordinates, `dim` entries per particle.
    pub positions: Vec<f64>,
    pub mass_per_particle: f64,
}

impl ParticleCloud {
    pub fn count(&self) -> usize {
        self.positions.len() / self.dim
    }

    pub fn total_mass(&self) -> f64 {
        self.count() as f64 * self.mass_per_particle
    }

    pub fn is_extinct(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn particle(&self, i: usize) -> &[f64] {
        &self.positions[i * self.dim..(i + 1) * self.dim]
    }

    pub fn particles(&self) -> impl Iterator<Item = &[f64]> {
        self.positions.chunks_exact(self.dim)
    }

    pub fn points(&self) -> Vec<SpatialPoint> {
        self.particles()
            .map(|p| SpatialPoint::new(p).expect("cloud coordinates are finite"))
            .collect()
    }
}

/// Observable values recorded at one snapshot time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub time: f64,
    pub count: usize,
    pub mass: f64,
    /// `X_s(φ)` per observable.
    pub values: Vec<f64>,
    /// `∫₀ˢ X_r(φ) dr` per observable (`None` unless accumulated).
    pub occupation: Vec<Option<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub positions: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub config: Arc<SimConfig>,
    pub replica: u64,
    pub snapshots: Vec<Snapshot>,
    /// `∫₀ᵗ X_s(φ) ds` at the final time, per observable.
    pub occupation: Vec<Option<f64>>,
    /// `X_t(φ)` at the final time, per observable.
    pub terminal: Vec<f64>,
    pub final_time: f64,
    pub final_count: usize,
    pub extinct_at: Option<f64>,
    /// Singular evaluations that hit the distance floor.
    pub clamp_count: u64,
}

impl Trajectory {
    pub fn terminal_mass(&self) -> f64 {
        self.final_count as f64 / self.config.n_init as f64
    }

    pub fn snapshot_at(&self, time: f64) -> Option<&Snapshot> {
        let k = self.config.steps_to(time);
        self.snapshots.iter().find(|s| self.config.steps_to(s.time) == k)
    }
}

/// All particles at the origin.
pub fn init(config: &SimConfig) -> Result<ParticleCloud> {
    config.validate()?;
    Ok(ParticleCloud {
        time: 0.0,
        dim: config.dim,
        positions: vec![0.0; config.dim * config.n_init],
        mass_per_particle: 1.0 / config.n_init as f64,
    })
}

struct Branching {
    die_below: u64,
    split_below: u64,
}

impl Branching {
    fn new(q: f64) -> Self {
        let scale = 2f64.powi(64);
        Branching {
            die_below: (0.5 * q * scale) as u64,
            split_below: (q * scale) as u64,
        }
    }

    #[inline(always)]
    fn offspring(&self, u: u64) -> usize {
        if u < self.die_below {
            0
        } else if u < self.split_below {
            2
        } else {
            1
        }
    }
}

/// Moves and branches every particle in `src`, writing the offspring to
/// `dst` and adding `Σ φₖ(y)` over the new cloud into `sums[k]`.
#[allow(clippy::too_many_arguments)]
fn advance<const D: usize>(
    src: &[f64],
    dst: &mut Vec<f64>,
    sd: f64,
    branching: &Branching,
    rng: &mut StreamRng,
    kernels: &[Kernel],
    sums: &mut [f64],
    clamps: &mut u64,
) {
    dst.clear();
    sums.iter_mut().for_each(|s| *s = 0.0);
    for p in src.chunks_exact(D) {
        let mut y = [0.0; D];
        for k in 0..D {
            let z: f64 = rng.sample(StandardNormal);
            y[k] = p[k] + sd * z;
        }
        let m = branching.offspring(rng.next_u64());
        if m == 0 {
            continue;
        }
        for _ in 0..m {
            dst.extend_from_slice(&y);
        }
        for (kern, s) in kernels.iter().zip(sums.iter_mut()) {
            *s += m as f64 * kern.eval(&y, clamps);
        }
    }
}

fn advance_dyn(
    dim: usize,
    src: &[f64],
    dst: &mut Vec<f64>,
    sd: f64,
    branching: &Branching,
    rng: &mut StreamRng,
    kernels: &[Kernel],
    sums: &mut [f64],
    clamps: &mut u64,
) {
    match dim {
        2 => advance::<2>(src, dst, sd, branching, rng, kernels, sums, clamps),
        _ => advance::<3>(src, dst, sd, branching, rng, kernels, sums, clamps),
    }
}

fn integral_dyn(dim: usize, positions: &[f64], kern: &Kernel, clamps: &mut u64) -> f64 {
    fn go<const D: usize>(positions: &[f64], kern: &Kernel, clamps: &mut u64) -> f64 {
        positions
            .chunks_exact(D)
            .map(|p| {
                let y: [f64; D] = p.try_into().expect("chunk length");
                kern.eval(&y, clamps)
            })
            .sum()
    }
    match dim {
        2 => go::<2>(positions, kern, clamps),
        _ => go::<3>(positions, kern, clamps),
    }
}

/// One step of the particle system.
pub fn step(cloud: &ParticleCloud, config: &SimConfig, rng: &mut StreamRng) -> Result<ParticleCloud> {
    if cloud.dim != config.dim {
        return Err(Error::Usage("cloud and config dimensions differ".into()));
    }
    let mut dst = Vec::with_capacity(cloud.positions.len() + cloud.positions.len() / 4);
    let mut clamps = 0;
    advance_dyn(
        cloud.dim,
        &cloud.positions,
        &mut dst,
        config.dt.sqrt(),
        &Branching::new(config.branching_probability()),
        rng,
        &[],
        &mut [],
        &mut clamps,
    );
    Ok(ParticleCloud {
        time: cloud.time + config.dt,
        dim: cloud.dim,
        positions: dst,
        mass_per_particle: cloud.mass_per_particle,
    })
}

/// Runs replica `replica` of `config` on the stream derived from its seed.
pub fn simulate_replica(config: &Arc<SimConfig>, replica: u64) -> Result<Trajectory> {
    let mut cloud = init(config)?;
    let mut rng = rng::stream(config.seed, replica);
    let dim = config.dim;
    let n = config.n_init as f64;
    let dt = config.dt;
    let sd = dt.sqrt();
    let branching = Branching::new(config.branching_probability());
    let kernels: Vec<Kernel> = config.observables.iter().map(|o| Kernel::compile(&o.function)).collect();
    let occ_index: Vec<usize> = (0..kernels.len()).filter(|&k| config.observables[k].occupation).collect();
    let occ_kernels: Vec<Kernel> = occ_index.iter().map(|&k| kernels[k]).collect();
    let mut clamps = 0u64;

    let mut prev: Vec<f64> = occ_kernels
        .iter()
        .map(|k| integral_dyn(dim, &cloud.positions, k, &mut clamps) / n)
        .collect();
    let mut acc = vec![0.0; occ_kernels.len()];
    let mut sums = vec![0.0; occ_kernels.len()];

    let limit = config.horizon.limit();
    let last_step: Option<u64> = limit.is_finite().then(|| config.steps_to(limit));
    let snap_steps: Vec<u64> = config.snapshot_times.iter().map(|&s| config.steps_to(s)).collect();
    let mut snapshots = Vec::with_capacity(snap_steps.len());
    let mut next_snap = 0usize;
    let mut buffer = Vec::with_capacity(cloud.positions.len() * 2);
    let mut k: u64 = 0;
    let mut extinct_at = None;

    let occupation_vec = |acc: &[f64]| -> Vec<Option<f64>> {
        let mut out = vec![None; kernels.len()];
        for (j, &i) in occ_index.iter().enumerate() {
            out[i] = Some(acc[j]);
        }
        out
    };

    loop {
        while next_snap < snap_steps.len() && snap_steps[next_snap] == k {
            let values = kernels
                .iter()
                .map(|kern| integral_dyn(dim, &cloud.positions, kern, &mut clamps) / n)
                .collect();
            snapshots.push(Snapshot {
                time: k as f64 * dt,
                count: cloud.count(),
                mass: cloud.count() as f64 / n,
                values,
                occupation: occupation_vec(&acc),
                positions: config.keep_positions.then(|| cloud.positions.clone()),
            });
            next_snap += 1;
        }
        if cloud.is_extinct() || Some(k) == last_step {
            break;
        }
        advance_dyn(dim, &cloud.positions, &mut buffer, sd, &branching, &mut rng, &occ_kernels, &mut sums, &mut clamps);
        std::mem::swap(&mut cloud.positions, &mut buffer);
        k += 1;
        cloud.time = k as f64 * dt;
        for j in 0..acc.len() {
            let cur = sums[j] / n;
            acc[j] += 0.5 * dt * (prev[j] + cur);
            prev[j] = cur;
        }
        if cloud.is_extinct() {
            extinct_at = Some(cloud.time);
        }
    }
    // Snapshots after extinction record the zero measure.
    while next_snap < snap_steps.len() {
        snapshots.push(Snapshot {
            time: snap_steps[next_snap] as f64 * dt,
            count: 0,
            mass: 0.0,
            values: vec![0.0; kernels.len()],
            occupation: occupation_vec(&acc),
            positions: config.keep_positions.then(Vec::new),
        });
        next_snap += 1;
    }
    let terminal = kernels
        .iter()
        .map(|kern| integral_dyn(dim, &cloud.positions, kern, &mut clamps) / n)
        .collect();
    Ok(Trajectory {
        config: Arc::clone(config),
        replica,
        snapshots,
        occupation: occupation_vec(&acc),
        terminal,
        final_time: cloud.time,
        final_count: cloud.count(),
        extinct_at,
        clamp_count: clamps,
    })
}

/// Replica 0 of `config`.
pub fn simulate(config: &SimConfig) -> Result<Trajectory> {
    simulate_replica(&Arc::new(config.clone()), 0)
}

/// Replicas `0..replicas`, run on `threads` workers and returned in replica
/// order. The result does not depend on `threads`.
pub fn simulate_ensemble(config: &SimConfig, replicas: usize, threads: usize) -> Result<Vec<Trajectory>> {
    config.validate()?;
    if replicas == 0 {
        return Err(Error::Config("need at least one replica".into()));
    }
    let config = Arc::new(config.clone());
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    pool.install(|| {
        (0..replicas as u64)
            .into_par_iter()
            .map(|r| simulate_replica(&config, r))
            .collect()
    })
}

/// `(1/N) Σ φ(yᵢ)` for a compiled kernel, with singular evaluations clamped.
pub(crate) fn cloud_integral(cloud: &ParticleCloud, f: &crate::TestFunction, clamps: &mut u64) -> f64 {
    integral_dyn(cloud.dim, &cloud.positions, &Kernel::compile(f), clamps) * cloud.mass_per_particle
}
