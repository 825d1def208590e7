//! The discrete patch chain: binomial reproduction inside each patch
//! followed by the deterministic exchange step, on either the embedded
//! 1/N-step clock or the exponential-wait jump clock.

use std::io::Write;

use rand::{Rng, SeedableRng, TryRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{exchange_in_place, Corner, ModelSpec, StateVec};

// ── Random streams ────────────────────────────────────────────────────────

/// Deterministic per-replicate random stream.
///
/// The draw sequence is a pure function of (master_seed, replicate_id):
/// the master seed is expanded into a cipher key and the replicate id
/// selects an independent stream, so replicates can run on any worker in
/// any order without changing their draws.
#[derive(Clone, Debug)]
pub struct RandomStream {
    master_seed: u64,
    replicate_id: u64,
    rng: ChaCha8Rng,
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RandomStream {
    pub fn new(master_seed: u64, replicate_id: u64) -> Self {
        let mut s = master_seed;
        let mut key = [0u8; 32];
        for chunk in key.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut s).to_le_bytes());
        }
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(replicate_id);
        RandomStream {
            master_seed,
            replicate_id,
            rng,
        }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn replicate_id(&self) -> u64 {
        self.replicate_id
    }

    /// Number of 32-bit words drawn so far.
    pub fn counter(&self) -> u128 {
        self.rng.get_word_pos()
    }
}

// The blanket impl of `Rng` covers any infallible `TryRng`.
impl TryRng for RandomStream {
    type Error = std::convert::Infallible;

    fn try_next_u32(&mut self) -> std::result::Result<u32, Self::Error> {
        Ok(self.rng.next_u32())
    }

    fn try_next_u64(&mut self) -> std::result::Result<u64, Self::Error> {
        Ok(self.rng.next_u64())
    }

    fn try_fill_bytes(&mut self, dst: &mut [u8]) -> std::result::Result<(), Self::Error> {
        self.rng.fill_bytes(dst);
        Ok(())
    }
}

// ── Chain configuration ───────────────────────────────────────────────────

/// Time parametrisation of the chain.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Clock {
    /// Step k happens at time k/N.
    Embedded,
    /// Steps happen after independent Exp(N) waiting times.
    Poissonized,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ChainConfig {
    /// Population scale N; must be admissible for the model.
    pub n: u64,
    pub clock: Clock,
}

// ── Hitting targets ───────────────────────────────────────────────────────

/// Sets whose first hitting time a simulation records.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "set", rename_all = "kebab-case")]
pub enum TargetSet {
    Corner0,
    Corner1,
    /// Low-mass wedge: dbar(x) < alpha, strict.
    Delta0 { alpha: f64 },
    /// Mirrored wedge: dbar(1 - x) < alpha, strict.
    Delta1 { alpha: f64 },
}

impl TargetSet {
    pub fn label(&self) -> String {
        match self {
            TargetSet::Corner0 => "corner-0".into(),
            TargetSet::Corner1 => "corner-1".into(),
            TargetSet::Delta0 { alpha } => format!("delta-0(alpha={alpha})"),
            TargetSet::Delta1 { alpha } => format!("delta-1(alpha={alpha})"),
        }
    }

    /// Membership test; the wedge comparisons are exact inequalities.
    pub fn contains(&self, spec: &ModelSpec, x: &StateVec) -> bool {
        match self {
            TargetSet::Corner0 => x.is_corner0(),
            TargetSet::Corner1 => x.is_corner1(),
            TargetSet::Delta0 { alpha } => spec.distortions().dbar(x.as_slice()) < *alpha,
            TargetSet::Delta1 { alpha } => {
                spec.distortions().dbar(x.mirrored().as_slice()) < *alpha
            }
        }
    }
}

/// First hit of one target set; `time` is None when the path was censored
/// at the horizon without entering the set.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HittingRecord {
    pub target: TargetSet,
    pub time: Option<f64>,
}

// ── Trajectories ──────────────────────────────────────────────────────────

/// A recorded path with one hitting record per requested target.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<StateVec>,
    pub hits: Vec<HittingRecord>,
}

impl Trajectory {
    /// Writes the path as delimited text: a `t, x_1, ..., x_m` table
    /// followed by one `target, time, censored` record per target.
    pub fn write_csv(&self, mut w: impl Write) -> Result<()> {
        let m = self.states.first().map(|s| s.dim()).unwrap_or(0);
        write!(w, "t")?;
        for i in 1..=m {
            write!(w, ",x_{i}")?;
        }
        writeln!(w)?;
        for (t, x) in self.times.iter().zip(&self.states) {
            write!(w, "{t}")?;
            for v in x.as_slice() {
                write!(w, ",{v}")?;
            }
            writeln!(w)?;
        }
        if !self.hits.is_empty() {
            writeln!(w, "target,time,censored")?;
            for h in &self.hits {
                match h.time {
                    Some(t) => writeln!(w, "{},{},false", h.target.label(), t)?,
                    None => writeln!(w, "{},,true", h.target.label())?,
                }
            }
        }
        Ok(())
    }
}

// ── Chain dynamics ────────────────────────────────────────────────────────

/// Samples k_i ~ Binomial(N_i, x_i) in place and stores k_i / N_i.
/// The binomial draws are exact (inversion for small means, exact
/// rejection otherwise); no normal approximation is involved.
fn reproduce_in_place(x: &mut [f64], sizes: &[u64], rng: &mut impl Rng) {
    for (v, &n_i) in x.iter_mut().zip(sizes) {
        let k = if *v <= 0.0 {
            0
        } else if *v >= 1.0 {
            n_i
        } else {
            Binomial::new(n_i, *v)
                .expect("population size and fraction are checked")
                .sample(rng)
        };
        *v = k as f64 / n_i as f64;
    }
}

/// One reproduction pass: each patch resamples its composition.
pub fn wf_reproduce(
    spec: &ModelSpec,
    n: u64,
    x: &StateVec,
    stream: &mut RandomStream,
) -> Result<StateVec> {
    let sizes = spec.patch_sizes(n)?;
    let mut coords = x.as_slice().to_vec();
    reproduce_in_place(&mut coords, &sizes, stream);
    StateVec::new(coords)
}

/// One full chain transition: reproduction inside every patch, then the
/// deterministic exchange map.
pub fn chain_step(
    spec: &ModelSpec,
    n: u64,
    x: &StateVec,
    stream: &mut RandomStream,
) -> Result<StateVec> {
    let y = wf_reproduce(spec, n, x, stream)?;
    crate::model::exchange_eval(spec, n, &y)
}

/// Total weighted particle count sum_i N_i x_i; the exchange map preserves
/// it exactly and reproduction preserves it in expectation.
pub fn conserved_mass(spec: &ModelSpec, n: u64, x: &StateVec) -> Result<f64> {
    let sizes = spec.patch_sizes(n)?;
    Ok(sizes
        .iter()
        .zip(x.as_slice())
        .map(|(&s, &v)| s as f64 * v)
        .sum())
}

fn next_time(t: f64, cfg: &ChainConfig, step: u64, rng: &mut impl Rng) -> f64 {
    match cfg.clock {
        Clock::Embedded => (step + 1) as f64 / cfg.n as f64,
        Clock::Poissonized => {
            let wait: f64 = Exp::new(cfg.n as f64).expect("rate is positive").sample(rng);
            t + wait
        }
    }
}

/// Runs the chain until `t_max` or absorption, recording every state and
/// the first hit of each target. Absorbing corners are exact lattice
/// events, so the recording stops once one is reached.
pub fn simulate_chain(
    spec: &ModelSpec,
    cfg: &ChainConfig,
    x0: &StateVec,
    t_max: f64,
    targets: &[TargetSet],
    stream: &mut RandomStream,
) -> Result<Trajectory> {
    if !(t_max > 0.0) {
        return Err(Error::Config(format!("t_max = {t_max} must be positive")));
    }
    let sizes = spec.patch_sizes(cfg.n)?;
    let mut state = x0.as_slice().to_vec();
    let mut b = vec![0.0; spec.m()];
    let mut hit_times: Vec<Option<f64>> = vec![None; targets.len()];
    let mut times = vec![0.0];
    let mut states = vec![x0.clone()];
    record_hits(spec, targets, &states[0], 0.0, &mut hit_times);

    let mut t = 0.0;
    let mut step = 0u64;
    let mut absorbed = states[0].is_corner0() || states[0].is_corner1();
    while !absorbed {
        let t_next = next_time(t, cfg, step, stream);
        if t_next > t_max {
            break;
        }
        reproduce_in_place(&mut state, &sizes, stream);
        exchange_in_place(spec, cfg.n, &mut state, &mut b);
        t = t_next;
        step += 1;
        let snapshot = StateVec::new(state.clone())?;
        record_hits(spec, targets, &snapshot, t, &mut hit_times);
        absorbed = snapshot.is_corner0() || snapshot.is_corner1();
        times.push(t);
        states.push(snapshot);
    }

    let hits = targets
        .iter()
        .zip(hit_times)
        .map(|(&target, time)| HittingRecord { target, time })
        .collect();
    Ok(Trajectory {
        times,
        states,
        hits,
    })
}

fn record_hits(
    spec: &ModelSpec,
    targets: &[TargetSet],
    x: &StateVec,
    t: f64,
    hit_times: &mut [Option<f64>],
) {
    for (i, target) in targets.iter().enumerate() {
        if hit_times[i].is_none() && target.contains(spec, x) {
            hit_times[i] = Some(t);
        }
    }
}

/// States of one chain path at the requested times (nondecreasing order)
/// without recording the path itself. Absorbed paths stay at the corner.
pub fn chain_states_at(
    spec: &ModelSpec,
    cfg: &ChainConfig,
    x0: &StateVec,
    times: &[f64],
    stream: &mut RandomStream,
) -> Result<Vec<StateVec>> {
    if times.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::Config("observation times must be nondecreasing".into()));
    }
    let sizes = spec.patch_sizes(cfg.n)?;
    let mut state = x0.as_slice().to_vec();
    let mut b = vec![0.0; spec.m()];
    let mut out = Vec::with_capacity(times.len());
    let mut t = 0.0;
    let mut step = 0u64;
    let mut absorbed: Option<Corner> = corner_of(&state);
    for &t_obs in times {
        if !(t_obs >= 0.0) {
            return Err(Error::Config(format!("observation time {t_obs} invalid")));
        }
        while absorbed.is_none() {
            // The state at t_obs is the one before the first jump past it.
            let t_next = next_time(t, cfg, step, stream);
            if t_next > t_obs {
                break;
            }
            reproduce_in_place(&mut state, &sizes, stream);
            exchange_in_place(spec, cfg.n, &mut state, &mut b);
            t = t_next;
            step += 1;
            absorbed = corner_of(&state);
        }
        out.push(StateVec::new(state.clone())?);
        // Under the embedded clock the loop above leaves `t` at the last
        // step not past t_obs, which is exactly floor(t_obs * N) steps.
    }
    Ok(out)
}

pub(crate) fn corner_of(x: &[f64]) -> Option<Corner> {
    if x.iter().all(|&v| v == 0.0) {
        Some(Corner::Zero)
    } else if x.iter().all(|&v| v == 1.0) {
        Some(Corner::One)
    } else {
        None
    }
}
