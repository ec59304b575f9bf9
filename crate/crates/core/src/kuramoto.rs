//! Phase-oscillator inference with second-harmonic injection locking.
//!
//! Each pixel is an oscillator with phase `theta_i`. The phases evolve as
//!
//! ```text
//! d theta_i / dt = -eps sin(2 theta_i) - sum_j w_ij sin(theta_i - theta_j)
//! ```
//!
//! The `sin(2 theta)` pump pulls every phase toward 0 or pi, which decode
//! to spins +1 and -1 through the sign of `cos(theta)`.

use std::f64::consts::{PI, TAU};

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::data::BipolarImage;
use crate::energy::{dot, EnergyReport};
use crate::error::{Error, Result};
use crate::hebbian::NormalizedTensor;

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseState {
    pub theta: Vec<f64>,
    pub t: f64,
}

impl PhaseState {
    pub fn new(theta: Vec<f64>) -> Self {
        Self { theta, t: 0.0 }
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    /// `cos(theta_i)` for every oscillator.
    pub fn cosines(&self) -> Vec<f64> {
        self.theta.iter().map(|t| t.cos()).collect()
    }
}

/// Spin +1 at phase 0, spin -1 at phase pi.
pub fn encode(s: &BipolarImage) -> PhaseState {
    PhaseState::new(
        s.spins()
            .iter()
            .map(|&x| if x > 0 { 0.0 } else { PI })
            .collect(),
    )
}

/// `s_i = +1` where `cos(theta_i) >= 0`, else -1.
pub fn decode(state: &PhaseState) -> BipolarImage {
    BipolarImage::from_bits(state.theta.iter().map(|t| t.cos() >= 0.0), None)
}

fn wrap(theta: f64) -> f64 {
    let w = theta.rem_euclid(TAU);
    // rem_euclid can round up to exactly TAU for tiny negative inputs
    if w >= TAU {
        0.0
    } else {
        w
    }
}

/// Coupling matrix in dense, compressed-row or low-rank form.
#[derive(Debug, Clone, PartialEq)]
pub struct Coupling {
    pixels: usize,
    repr: Repr,
    max_row_abs: f64,
}

#[derive(Debug, Clone, PartialEq)]
enum Repr {
    Dense(Vec<f64>),
    Sparse {
        row_ptr: Vec<usize>,
        cols: Vec<u32>,
        vals: Vec<f64>,
    },
    /// `W = sum_r f_r f_r^T - diag(d)`.
    LowRank {
        factors: Vec<Vec<f64>>,
        diag: Vec<f64>,
    },
}

impl Coupling {
    /// From a row-major `P x P` matrix; the diagonal must be zero.
    pub fn from_dense(pixels: usize, weights: &[f64]) -> Result<Self> {
        if weights.len() != pixels * pixels {
            return Err(Error::Shape(format!(
                "{} weights for {pixels} oscillators",
                weights.len()
            )));
        }
        if let Some(i) = (0..pixels).find(|&i| weights[i * pixels + i] != 0.0) {
            return Err(Error::Param(format!("nonzero self-coupling at oscillator {i}")));
        }
        let max_row_abs = weights
            .chunks_exact(pixels.max(1))
            .map(|row| row.iter().map(|w| w.abs()).sum::<f64>())
            .fold(0.0, f64::max);
        let nnz = weights.iter().filter(|&&w| w != 0.0).count();
        let repr = if 2 * nnz < pixels * pixels {
            let mut row_ptr = Vec::with_capacity(pixels + 1);
            let mut cols = Vec::with_capacity(nnz);
            let mut vals = Vec::with_capacity(nnz);
            row_ptr.push(0);
            for row in weights.chunks_exact(pixels) {
                for (j, &w) in row.iter().enumerate() {
                    if w != 0.0 {
                        cols.push(j as u32);
                        vals.push(w);
                    }
                }
                row_ptr.push(cols.len());
            }
            Repr::Sparse {
                row_ptr,
                cols,
                vals,
            }
        } else {
            Repr::Dense(weights.to_vec())
        };
        Ok(Self {
            pixels,
            repr,
            max_row_abs,
        })
    }

    /// Sum of outer products `f f^T` over `factors`, with the diagonal removed.
    pub fn low_rank(factors: Vec<Vec<f64>>) -> Result<Self> {
        let pixels = factors.first().ok_or(Error::Empty("low-rank factors"))?.len();
        if factors.iter().any(|f| f.len() != pixels) {
            return Err(Error::Shape("low-rank factors differ in length".into()));
        }
        let diag: Vec<f64> = (0..pixels)
            .map(|i| factors.iter().map(|f| f[i] * f[i]).sum())
            .collect();
        let max_row_abs = (0..pixels)
            .map(|i| {
                (0..pixels)
                    .filter(|&j| j != i)
                    .map(|j| factors.iter().map(|f| f[i] * f[j]).sum::<f64>().abs())
                    .sum::<f64>()
            })
            .fold(0.0, f64::max);
        Ok(Self {
            pixels,
            repr: Repr::LowRank { factors, diag },
            max_row_abs,
        })
    }

    /// Row-major dense copy.
    pub fn to_dense(&self) -> Vec<f64> {
        let p = self.pixels;
        let mut out = vec![0.0; p * p];
        let mut e = vec![0.0; p];
        let (mut col, mut scratch) = (vec![0.0; p], vec![0.0; p]);
        for j in 0..p {
            e[j] = 1.0;
            self.matvec2(&e, &e, &mut col, &mut scratch);
            for i in 0..p {
                out[i * p + j] = col[i];
            }
            e[j] = 0.0;
        }
        out
    }

    pub fn pixels(&self) -> usize {
        self.pixels
    }

    /// Largest row sum of `|w_ij|`; sets the default pump strength and step.
    pub fn max_row_abs(&self) -> f64 {
        self.max_row_abs
    }

    pub fn nnz(&self) -> usize {
        match &self.repr {
            Repr::Dense(w) => w.iter().filter(|&&x| x != 0.0).count(),
            Repr::Sparse { vals, .. } => vals.len(),
            Repr::LowRank { .. } => self.to_dense().iter().filter(|&&x| x != 0.0).count(),
        }
    }

    pub fn is_sparse(&self) -> bool {
        matches!(self.repr, Repr::Sparse { .. })
    }

    /// Writes `W a` and `W b` into the output slices.
    fn matvec2(&self, a: &[f64], b: &[f64], wa: &mut [f64], wb: &mut [f64]) {
        match &self.repr {
            Repr::Dense(w) => {
                for (i, row) in w.chunks_exact(self.pixels).enumerate() {
                    (wa[i], wb[i]) = dot2(row, a, b);
                }
            }
            Repr::Sparse {
                row_ptr,
                cols,
                vals,
            } => {
                for i in 0..self.pixels {
                    let (mut sa, mut sb) = (0.0, 0.0);
                    for idx in row_ptr[i]..row_ptr[i + 1] {
                        let j = cols[idx] as usize;
                        sa += vals[idx] * a[j];
                        sb += vals[idx] * b[j];
                    }
                    wa[i] = sa;
                    wb[i] = sb;
                }
            }
            Repr::LowRank { factors, diag } => {
                for i in 0..self.pixels {
                    wa[i] = -diag[i] * a[i];
                    wb[i] = -diag[i] * b[i];
                }
                for f in factors {
                    let (fa, fb) = dot2(f, a, b);
                    for i in 0..self.pixels {
                        wa[i] += f[i] * fa;
                        wb[i] += f[i] * fb;
                    }
                }
            }
        }
    }

    /// Writes `W x` into `out`.
    pub fn matvec(&self, x: &[f64], out: &mut [f64]) {
        match &self.repr {
            Repr::Dense(w) => {
                for (o, row) in out.iter_mut().zip(w.chunks_exact(self.pixels)) {
                    *o = dot(row, x);
                }
            }
            Repr::Sparse {
                row_ptr,
                cols,
                vals,
            } => {
                for (i, o) in out.iter_mut().enumerate() {
                    *o = (row_ptr[i]..row_ptr[i + 1])
                        .map(|idx| vals[idx] * x[cols[idx] as usize])
                        .sum();
                }
            }
            Repr::LowRank { .. } => {
                let mut scratch = vec![0.0; self.pixels];
                self.matvec2(x, x, out, &mut scratch);
            }
        }
    }

    /// `-sum_{i,j} w_ij s_i s_j`, summed row by row.
    pub fn ising_energy(&self, spins: &[f64]) -> f64 {
        let mut ws = vec![0.0; self.pixels];
        self.matvec(spins, &mut ws);
        -ws.iter().zip(spins).map(|(w, s)| s * w).sum::<f64>()
    }
}

/// Scratch buffers for derivative evaluation.
struct Workspace {
    cos: Vec<f64>,
    sin: Vec<f64>,
    wcos: Vec<f64>,
    wsin: Vec<f64>,
}

impl Workspace {
    fn new(p: usize) -> Self {
        Self {
            cos: vec![0.0; p],
            sin: vec![0.0; p],
            wcos: vec![0.0; p],
            wsin: vec![0.0; p],
        }
    }

    /// Uses `sum_j w_ij sin(ti - tj) = sin ti (W cos)_i - cos ti (W sin)_i`.
    fn derivative(&mut self, theta: &[f64], coupling: &Coupling, epsilon: f64, out: &mut [f64]) {
        for (i, &t) in theta.iter().enumerate() {
            let (s, c) = t.sin_cos();
            self.sin[i] = s;
            self.cos[i] = c;
        }
        coupling.matvec2(&self.cos, &self.sin, &mut self.wcos, &mut self.wsin);
        for i in 0..theta.len() {
            let (s, c) = (self.sin[i], self.cos[i]);
            let pump = 2.0 * s * c;
            out[i] = -epsilon * pump - (s * self.wcos[i] - c * self.wsin[i]);
        }
    }
}

/// `(dot(w, a), dot(w, b))` in one pass over `w`, same summation order.
fn dot2(w: &[f64], a: &[f64], b: &[f64]) -> (f64, f64) {
    let (mut sa, mut sb) = ([0.0f64; 4], [0.0f64; 4]);
    let (wc, ac, bc) = (w.chunks_exact(4), a.chunks_exact(4), b.chunks_exact(4));
    let (wt, at, bt) = (wc.remainder(), ac.remainder(), bc.remainder());
    for ((w, a), b) in wc.zip(ac).zip(bc) {
        for l in 0..4 {
            sa[l] += w[l] * a[l];
            sb[l] += w[l] * b[l];
        }
    }
    let (mut ta, mut tb) = (0.0, 0.0);
    for ((w, a), b) in wt.iter().zip(at).zip(bt) {
        ta += w * a;
        tb += w * b;
    }
    ((sa[0] + sa[1]) + (sa[2] + sa[3]) + ta, (sb[0] + sb[1]) + (sb[2] + sb[3]) + tb)
}

fn check_finite(theta: &[f64]) -> Result<()> {
    match theta.iter().position(|t| !t.is_finite()) {
        Some(index) => Err(Error::NonFinite { index }),
        None => Ok(()),
    }
}

/// Phase velocities at `state`.
pub fn rhs(state: &PhaseState, coupling: &Coupling, epsilon: f64) -> Result<Vec<f64>> {
    if state.len() != coupling.pixels {
        return Err(Error::Shape(format!(
            "{} phases for {} oscillators",
            state.len(),
            coupling.pixels
        )));
    }
    check_finite(&state.theta)?;
    let mut out = vec![0.0; state.len()];
    Workspace::new(state.len()).derivative(&state.theta, coupling, epsilon, &mut out);
    Ok(out)
}

/// Concrete integration settings for one coupling matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct KuramotoConfig {
    pub epsilon: f64,
    pub dt: f64,
    pub max_steps: usize,
    /// Converged once every `|d theta / dt|` is below this.
    pub conv_tol: f64,
    pub check_every: usize,
    pub sample_every: usize,
    /// Half-width of the uniform kick applied to phases starting exactly at 0 or pi.
    pub jitter: f64,
    pub seed: u64,
    pub record_phases: bool,
}

impl KuramotoConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Param(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::Param(format!("epsilon must be >= 0, got {}", self.epsilon)));
        }
        if !(self.conv_tol > 0.0) {
            return Err(Error::Param(format!("conv_tol must be positive, got {}", self.conv_tol)));
        }
        if self.max_steps == 0 || self.check_every == 0 || self.sample_every == 0 {
            return Err(Error::Param("step counts must be positive".into()));
        }
        if !(self.jitter >= 0.0) {
            return Err(Error::Param(format!("jitter must be >= 0, got {}", self.jitter)));
        }
        Ok(())
    }
}

/// Step policy relative to coupling strength.
///
/// For a coupling whose largest absolute row sum is `R`:
/// `epsilon = eps_scale * R` and `dt = dt_scale / (R + epsilon)`.
#[derive(Debug, Clone, PartialEq)]
pub struct KuramotoParams {
    pub eps_scale: f64,
    pub dt_scale: f64,
    pub conv_tol: f64,
    pub max_steps: usize,
    pub check_every: usize,
    pub sample_every: usize,
    pub jitter: f64,
    pub seed: u64,
    pub record_phases: bool,
}

impl Default for KuramotoParams {
    fn default() -> Self {
        Self {
            eps_scale: DEFAULT_EPS_SCALE,
            dt_scale: DEFAULT_DT_SCALE,
            conv_tol: 1e-4,
            max_steps: 100_000,
            check_every: 10,
            sample_every: 10,
            jitter: 1e-3,
            seed: 0,
            record_phases: false,
        }
    }
}

/// Default SHIL strength relative to the largest absolute row sum. Weak
/// enough that a corrupted pattern can roll over to the stored one.
pub const DEFAULT_EPS_SCALE: f64 = 0.05;
/// SHIL strength used when classifying: strong locking keeps the state near
/// the input so the class energies are compared at (almost) the same point.
pub const CLASSIFY_EPS_SCALE: f64 = 1.0;
pub const DEFAULT_DT_SCALE: f64 = 1.0;

impl KuramotoParams {
    /// Defaults for energy-based classification.
    pub fn classification() -> Self {
        Self {
            eps_scale: CLASSIFY_EPS_SCALE,
            ..Self::default()
        }
    }

    pub fn config_for(&self, coupling: &Coupling) -> KuramotoConfig {
        let r = coupling.max_row_abs();
        let epsilon = self.eps_scale * r;
        let denom = r + epsilon;
        KuramotoConfig {
            epsilon,
            dt: if denom > 0.0 { self.dt_scale / denom } else { self.dt_scale },
            max_steps: self.max_steps,
            conv_tol: self.conv_tol,
            check_every: self.check_every,
            sample_every: self.sample_every,
            jitter: self.jitter,
            seed: self.seed,
            record_phases: self.record_phases,
        }
    }
}

/// Sampled history of one integration.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trace {
    pub steps: Vec<usize>,
    pub times: Vec<f64>,
    /// Ising energy of the decoded spins at each sample.
    pub energies: Vec<f64>,
    pub phases: Option<Vec<Vec<f64>>>,
    pub converged: bool,
    pub steps_used: usize,
}

impl Trace {
    fn record(&mut self, step: usize, state: &PhaseState, coupling: &Coupling, keep_phases: bool) {
        let spins = decode(state).to_f64();
        self.steps.push(step);
        self.times.push(state.t);
        self.energies.push(coupling.ising_energy(&spins));
        if keep_phases {
            self.phases.get_or_insert_with(Vec::new).push(state.theta.clone());
        }
    }

    pub fn final_energy(&self) -> Option<f64> {
        self.energies.last().copied()
    }
}

struct Rk4 {
    ws: Workspace,
    k: [Vec<f64>; 4],
    tmp: Vec<f64>,
}

impl Rk4 {
    fn new(p: usize) -> Self {
        Self {
            ws: Workspace::new(p),
            k: [vec![0.0; p], vec![0.0; p], vec![0.0; p], vec![0.0; p]],
            tmp: vec![0.0; p],
        }
    }

    /// Derivative at the current state into `k[0]`; returns its max
    /// magnitude, or NaN if any component is not finite.
    fn first_stage(&mut self, state: &PhaseState, coupling: &Coupling, epsilon: f64) -> f64 {
        self.ws.derivative(&state.theta, coupling, epsilon, &mut self.k[0]);
        if self.k[0].iter().any(|d| !d.is_finite()) {
            return f64::NAN;
        }
        self.k[0].iter().fold(0.0, |m, d| m.max(d.abs()))
    }

    /// Completes a step whose first stage is already in `k[0]`.
    fn finish(&mut self, state: &mut PhaseState, coupling: &Coupling, epsilon: f64, dt: f64) {
        let th = &state.theta;
        for (stage, h) in [(1, 0.5 * dt), (2, 0.5 * dt), (3, dt)] {
            for i in 0..th.len() {
                self.tmp[i] = th[i] + h * self.k[stage - 1][i];
            }
            let rest = &mut self.k[stage..];
            self.ws.derivative(&self.tmp, coupling, epsilon, &mut rest[0]);
        }
        for i in 0..state.theta.len() {
            let incr = self.k[0][i] + 2.0 * self.k[1][i] + 2.0 * self.k[2][i] + self.k[3][i];
            state.theta[i] = wrap(state.theta[i] + dt / 6.0 * incr);
        }
        state.t += dt;
    }
}

/// One classical fourth-order Runge-Kutta step, phases wrapped into [0, 2 pi).
pub fn step_rk4(state: &PhaseState, coupling: &Coupling, config: &KuramotoConfig) -> Result<PhaseState> {
    config.validate()?;
    check_finite(&state.theta)?;
    let mut rk = Rk4::new(state.len());
    let mut next = state.clone();
    rk.first_stage(&next, coupling, config.epsilon);
    rk.finish(&mut next, coupling, config.epsilon, config.dt);
    if check_finite(&next.theta).is_err() {
        return Err(Error::Diverged {
            step: (state.t / config.dt).round() as usize,
            trace: Box::default(),
        });
    }
    Ok(next)
}

/// Seeded random spin flips applied before encoding.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Noise {
    pub fraction: f64,
    pub seed: u64,
}

/// Flips a seeded random subset of `floor(fraction * P)` spins.
pub fn add_noise(s: &BipolarImage, noise: Noise) -> Result<BipolarImage> {
    if !(0.0..0.5).contains(&noise.fraction) {
        return Err(Error::Param(format!(
            "flip fraction {} outside [0, 0.5)",
            noise.fraction
        )));
    }
    let p = s.len();
    let count = (noise.fraction * p as f64).floor() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    let mut idx = sample(&mut rng, p, count).into_vec();
    idx.sort_unstable();
    let mut out = s.clone();
    out.flip(&idx);
    Ok(out)
}

/// Phases starting exactly at 0 or pi get a seeded uniform kick in `[-jitter, jitter]`.
fn jitter_binary_phases(state: &mut PhaseState, jitter: f64, seed: u64) {
    if jitter == 0.0 {
        return;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for t in state.theta.iter_mut() {
        let kick: f64 = rng.gen_range(-jitter..=jitter);
        if *t == 0.0 || *t == PI {
            *t = wrap(*t + kick);
        }
    }
}

#[derive(Debug, Clone)]
pub enum Start<'a> {
    Image(&'a BipolarImage),
    Phases(PhaseState),
}

/// Integrates until every phase velocity is below `conv_tol` or `max_steps` is hit.
///
/// Starting from an image, optional noise flips spins first, and phases at
/// exactly 0 or pi receive the configured jitter.
pub fn run(
    start: Start<'_>,
    coupling: &Coupling,
    config: &KuramotoConfig,
    noise: Option<Noise>,
) -> Result<(PhaseState, Trace)> {
    config.validate()?;
    let mut state = match start {
        Start::Image(img) => {
            let img = match noise {
                Some(n) => add_noise(img, n)?,
                None => img.clone(),
            };
            let mut st = encode(&img);
            jitter_binary_phases(&mut st, config.jitter, config.seed);
            st
        }
        Start::Phases(st) => st,
    };
    if state.len() != coupling.pixels {
        return Err(Error::Shape(format!(
            "{} phases for {} oscillators",
            state.len(),
            coupling.pixels
        )));
    }
    check_finite(&state.theta)?;

    let mut trace = Trace::default();
    trace.record(0, &state, coupling, config.record_phases);
    let mut rk = Rk4::new(state.len());
    let mut step = 0;
    loop {
        let speed = rk.first_stage(&state, coupling, config.epsilon);
        if !speed.is_finite() {
            trace.steps_used = step;
            return Err(Error::Diverged {
                step,
                trace: Box::new(trace),
            });
        }
        if step % config.check_every == 0 && speed < config.conv_tol {
            trace.converged = true;
            break;
        }
        if step == config.max_steps {
            break;
        }
        rk.finish(&mut state, coupling, config.epsilon, config.dt);
        step += 1;
        if check_finite(&state.theta).is_err() {
            trace.steps_used = step;
            return Err(Error::Diverged {
                step,
                trace: Box::new(trace),
            });
        }
        if step % config.sample_every == 0 {
            trace.record(step, &state, coupling, config.record_phases);
        }
    }
    if trace.steps.last() != Some(&step) {
        trace.record(step, &state, coupling, config.record_phases);
    }
    trace.steps_used = step;
    Ok((state, trace))
}

/// Runs the dynamics under every class tensor and picks the class whose
/// decoded final state has the lowest Ising energy.
pub fn classify_kuramoto(
    s: &BipolarImage,
    model: &NormalizedTensor,
    params: &KuramotoParams,
) -> Result<EnergyReport> {
    let couplings = class_couplings(model)?;
    classify_with_couplings(s, &couplings, params)
}

pub fn class_couplings(model: &NormalizedTensor) -> Result<Vec<Coupling>> {
    (0..model.n_classes)
        .map(|k| Coupling::from_dense(model.pixels, model.class(k)))
        .collect()
}

pub fn classify_with_couplings(
    s: &BipolarImage,
    couplings: &[Coupling],
    params: &KuramotoParams,
) -> Result<EnergyReport> {
    let energies = couplings
        .par_iter()
        .enumerate()
        .map(|(class, c)| {
            let config = params.config_for(c);
            run(Start::Image(s), c, &config, None)
                .map(|(_, trace)| trace.final_energy().unwrap_or(0.0))
                .map_err(|e| Error::InClass {
                    class,
                    source: Box::new(e),
                })
        })
        .collect::<Result<Vec<_>>>()?;
    EnergyReport::from_energies(energies)
}

/// Keeps the `ceil(keep_fraction * M)` strongest oscillator pairs, where M
/// counts pairs `i < j` with a nonzero entry in either direction.
///
/// A pair is scored by `max(|w_ij|, |w_ji|)` and kept or dropped as a unit,
/// so symmetric input stays symmetric. Ties go to the lexicographically
/// smaller `(i, j)`.
pub fn sparsify_coupling(weights: &[f64], pixels: usize, keep_fraction: f64) -> Result<Vec<f64>> {
    if weights.len() != pixels * pixels {
        return Err(Error::Shape(format!(
            "{} weights for {pixels} oscillators",
            weights.len()
        )));
    }
    if !(keep_fraction > 0.0 && keep_fraction <= 1.0) {
        return Err(Error::Param(format!(
            "keep fraction {keep_fraction} outside (0, 1]"
        )));
    }
    let mut pairs: Vec<(f64, u32, u32)> = Vec::new();
    for i in 0..pixels {
        for j in i + 1..pixels {
            let score = weights[i * pixels + j].abs().max(weights[j * pixels + i].abs());
            if score > 0.0 {
                pairs.push((score, i as u32, j as u32));
            }
        }
    }
    let keep = ((keep_fraction * pairs.len() as f64).ceil() as usize).min(pairs.len());
    let order = |a: &(f64, u32, u32), b: &(f64, u32, u32)| {
        b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2))
    };
    if keep < pairs.len() {
        pairs.select_nth_unstable_by(keep, order);
        pairs.truncate(keep);
    }
    let mut out = vec![0.0; weights.len()];
    for (_, i, j) in pairs {
        let (i, j) = (i as usize, j as usize);
        out[i * pixels + j] = weights[i * pixels + j];
        out[j * pixels + i] = weights[j * pixels + i];
    }
    Ok(out)
}

/// Applies [`sparsify_coupling`] to every class of a model.
pub fn sparsify_model_coupling(model: &NormalizedTensor, keep_fraction: f64) -> Result<NormalizedTensor> {
    let mut out = model.clone();
    for k in 0..model.n_classes {
        let pruned = sparsify_coupling(model.class(k), model.pixels, keep_fraction)?;
        out.class_mut(k).copy_from_slice(&pruned);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lcg(seed: u64) -> impl FnMut() -> f64 {
        let mut x = seed.wrapping_add(0x9E37_79B9_7F4A_7C15);
        move || {
            x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (x >> 11) as f64 / (1u64 << 53) as f64
        }
    }

    fn random_symmetric(p: usize, seed: u64, density: f64) -> Vec<f64> {
        let mut r = lcg(seed);
        let mut w = vec![0.0; p * p];
        for i in 0..p {
            for j in i + 1..p {
                if r() < density {
                    let v = 2.0 * r() - 1.0;
                    w[i * p + j] = v;
                    w[j * p + i] = v;
                }
            }
        }
        w
    }

    fn config(epsilon: f64, dt: f64) -> KuramotoConfig {
        KuramotoConfig {
            epsilon,
            dt,
            max_steps: 100_000,
            conv_tol: 1e-6,
            check_every: 10,
            sample_every: 1,
            jitter: 1e-3,
            seed: 0,
            record_phases: false,
        }
    }

    /// Direct double loop over phase differences.
    fn rhs_oracle(theta: &[f64], w: &[f64], eps: f64) -> Vec<f64> {
        let p = theta.len();
        (0..p)
            .map(|i| {
                let coupling: f64 = (0..p).map(|j| w[i * p + j] * (theta[i] - theta[j]).sin()).sum();
                -eps * (2.0 * theta[i]).sin() - coupling
            })
            .collect()
    }

    #[test]
    fn rhs_matches_oracle_for_every_layout() {
        for (seed, density) in [(1, 1.0), (2, 0.2), (3, 0.05)] {
            let p = 9;
            let w = random_symmetric(p, seed, density);
            let c = Coupling::from_dense(p, &w).unwrap();
            assert_eq!(c.is_sparse(), density < 0.5);
            let mut r = lcg(seed + 10);
            let theta: Vec<f64> = (0..p).map(|_| TAU * r()).collect();
            let got = rhs(&PhaseState::new(theta.clone()), &c, 0.7).unwrap();
            for (a, b) in got.iter().zip(rhs_oracle(&theta, &w, 0.7)) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn low_rank_matches_explicit_matrix() {
        let f = vec![vec![1.0, -1.0, 1.0, 1.0], vec![1.0, 1.0, -1.0, 1.0]];
        let c = Coupling::low_rank(f.clone()).unwrap();
        let mut w = vec![0.0; 16];
        for i in 0..4 {
            for j in 0..4 {
                if i != j {
                    w[i * 4 + j] = f[0][i] * f[0][j] + f[1][i] * f[1][j];
                }
            }
        }
        assert_eq!(c.to_dense(), w);
        assert_eq!(c.max_row_abs(), Coupling::from_dense(4, &w).unwrap().max_row_abs());
        let theta = vec![0.3, 2.0, 4.1, 5.9];
        let got = rhs(&PhaseState::new(theta.clone()), &c, 0.4).unwrap();
        for (a, b) in got.iter().zip(rhs_oracle(&theta, &w, 0.4)) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn self_coupling_rejected() {
        assert!(Coupling::from_dense(2, &[1.0, 0.0, 0.0, 0.0]).is_err());
        assert!(Coupling::from_dense(2, &[0.0, 1.0, 1.0]).is_err());
    }

    #[test]
    fn binary_phases_are_fixed_points() {
        let p = 32;
        let w = random_symmetric(p, 5, 1.0);
        let c = Coupling::from_dense(p, &w).unwrap();
        let mut r = lcg(6);
        for _ in 0..20 {
            let s = BipolarImage::from_bits((0..p).map(|_| r() < 0.5), None);
            let d = rhs(&encode(&s), &c, c.max_row_abs()).unwrap();
            let norm = d.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!(norm < 1e-12, "residual {norm}");
        }
    }

    #[test]
    fn encode_decode_identity() {
        let mut r = lcg(11);
        for n in 0..1000 {
            let s = BipolarImage::from_bits((0..1 + n % 40).map(|_| r() < 0.5), None);
            assert_eq!(decode(&encode(&s)).spins(), s.spins());
        }
    }

    #[test]
    fn decode_follows_cosine_sign() {
        // cos(pi/2) rounds to +6e-17, so it sits on the +1 side
        let st = PhaseState::new(vec![PI / 2.0, 1.0, 2.0, PI, 5.0]);
        assert_eq!(decode(&st).spins(), &[1, 1, -1, -1, 1]);
    }

    #[test]
    fn wrap_stays_in_range() {
        for x in [-1e-18, -TAU, TAU, 7.0 * PI, -0.5, 0.0] {
            let w = wrap(x);
            assert!((0.0..TAU).contains(&w), "{x} -> {w}");
        }
    }

    /// Angular distance, insensitive to wrapping.
    fn ang(a: &[f64], b: &[f64]) -> f64 {
        a.iter()
            .zip(b)
            .map(|(x, y)| {
                let d = (x - y).rem_euclid(TAU);
                d.min(TAU - d)
            })
            .fold(0.0, f64::max)
    }

    fn integrate(start: &PhaseState, c: &Coupling, eps: f64, dt: f64, steps: usize) -> Vec<f64> {
        let cfg = config(eps, dt);
        let mut st = start.clone();
        for _ in 0..steps {
            st = step_rk4(&st, c, &cfg).unwrap();
        }
        st.theta
    }

    #[test]
    fn rk4_is_fourth_order() {
        let p = 6;
        let w = random_symmetric(p, 21, 1.0);
        let c = Coupling::from_dense(p, &w).unwrap();
        let mut r = lcg(22);
        let start = PhaseState::new((0..p).map(|_| TAU * r()).collect());
        let (t_end, dt) = (0.8, 0.05);
        let n = (t_end / dt) as usize;
        let reference = integrate(&start, &c, 0.5, dt / 64.0, n * 64);
        let e1 = ang(&integrate(&start, &c, 0.5, dt, n), &reference);
        let e2 = ang(&integrate(&start, &c, 0.5, dt / 2.0, 2 * n), &reference);
        let factor = e1 / e2;
        assert!((12.0..=20.0).contains(&factor), "order factor {factor}");
    }

    #[test]
    fn noise_flips_exact_count_reproducibly() {
        let s = BipolarImage::from_bits((0..100).map(|i| i % 3 == 0), None);
        let n = Noise { fraction: 0.1, seed: 4 };
        let a = add_noise(&s, n).unwrap();
        let diff = a.spins().iter().zip(s.spins()).filter(|(x, y)| x != y).count();
        assert_eq!(diff, 10);
        assert_eq!(add_noise(&s, n).unwrap(), a);
        assert_ne!(add_noise(&s, Noise { seed: 5, ..n }).unwrap(), a);
        assert!(add_noise(&s, Noise { fraction: 0.5, seed: 0 }).is_err());
        assert!(add_noise(&s, Noise { fraction: -0.1, seed: 0 }).is_err());
    }

    #[test]
    fn jitter_only_moves_binary_phases() {
        let mut st = PhaseState::new(vec![0.0, PI, 1.0, 0.0]);
        jitter_binary_phases(&mut st, 1e-3, 9);
        assert!(st.theta[0] != 0.0 && ang(&st.theta[..1], &[0.0]) <= 1e-3);
        assert!(st.theta[1] != PI && ang(&st.theta[1..2], &[PI]) <= 1e-3);
        assert_eq!(st.theta[2], 1.0);
    }

    #[test]
    fn single_pattern_recovery() {
        let p = 40;
        let xi: Vec<f64> = (0..p).map(|i| if (i * 7) % 5 < 2 { 1.0 } else { -1.0 }).collect();
        let c = Coupling::low_rank(vec![xi.clone()]).unwrap();
        let params = KuramotoParams::default();
        let cfg = params.config_for(&c);
        let target = BipolarImage::from_bits(xi.iter().map(|&x| x > 0.0), None);
        let (st, trace) = run(Start::Image(&target), &c, &cfg, Some(Noise { fraction: 0.2, seed: 1 })).unwrap();
        assert!(trace.converged);
        let got = decode(&st);
        let neg: Vec<i8> = target.spins().iter().map(|s| -s).collect();
        assert!(got.spins() == target.spins() || got.spins() == neg.as_slice());
        for pair in trace.energies.windows(2) {
            assert!(pair[1] <= pair[0] + 1e-6 * p as f64);
        }
        assert_eq!(trace.steps[0], 0);
        assert_eq!(*trace.steps.last().unwrap(), trace.steps_used);
    }

    #[test]
    fn non_finite_coupling_diverges() {
        let mut w = vec![0.0; 9];
        w[1] = f64::NAN;
        let c = Coupling::from_dense(3, &w).unwrap();
        let s = BipolarImage::from_bits([true, false, true], None);
        match run(Start::Image(&s), &c, &config(0.1, 0.01), None) {
            Err(Error::Diverged { step, .. }) => assert_eq!(step, 0),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn non_finite_start_rejected() {
        let c = Coupling::from_dense(2, &[0.0, 1.0, 1.0, 0.0]).unwrap();
        let st = PhaseState::new(vec![0.0, f64::INFINITY]);
        assert!(matches!(
            run(Start::Phases(st), &c, &config(0.1, 0.01), None),
            Err(Error::NonFinite { index: 1 })
        ));
    }

    #[test]
    fn bad_config_rejected() {
        let c = Coupling::from_dense(2, &[0.0, 1.0, 1.0, 0.0]).unwrap();
        let s = BipolarImage::from_bits([true, false], None);
        for cfg in [config(0.1, 0.0), config(-1.0, 0.1), KuramotoConfig { check_every: 0, ..config(0.1, 0.1) }] {
            assert!(matches!(run(Start::Image(&s), &c, &cfg, None), Err(Error::Param(_))));
        }
    }

    #[test]
    fn pair_pruning_keeps_ceiling_fraction() {
        let p = 10;
        let w = random_symmetric(p, 31, 0.8);
        let m = (0..p).flat_map(|i| (i + 1..p).map(move |j| (i, j))).filter(|&(i, j)| w[i * p + j] != 0.0).count();
        for rho in [0.1, 0.24, 0.5, 1.0] {
            let out = sparsify_coupling(&w, p, rho).unwrap();
            let kept = (0..p).flat_map(|i| (i + 1..p).map(move |j| (i, j))).filter(|&(i, j)| out[i * p + j] != 0.0).count();
            assert_eq!(kept, (rho * m as f64).ceil() as usize);
            for i in 0..p {
                for j in 0..p {
                    assert_eq!(out[i * p + j], out[j * p + i]);
                    assert!(out[i * p + j] == 0.0 || out[i * p + j] == w[i * p + j]);
                }
            }
            // every kept pair is at least as strong as every dropped one
            let kept_min = out.iter().filter(|x| **x != 0.0).map(|x| x.abs()).fold(f64::MAX, f64::min);
            let dropped_max = w.iter().zip(&out).filter(|(_, o)| **o == 0.0).map(|(x, _)| x.abs()).fold(0.0, f64::max);
            assert!(kept_min >= dropped_max);
        }
        assert_eq!(sparsify_coupling(&w, p, 1.0).unwrap(), w);
        assert!(sparsify_coupling(&w, p, 0.0).is_err());
        assert!(sparsify_coupling(&w, p, 1.5).is_err());
    }

    #[test]
    fn asymmetric_pairs_kept_as_units() {
        let w = vec![0.0, 5.0, 0.1, 0.0, 0.0, 0.2, 0.0, 3.0, 0.0];
        let out = sparsify_coupling(&w, 3, 0.5).unwrap();
        // pair scores: (0,1) = 5, (0,2) = 0.1, (1,2) = 3; keep ceil(1.5) = 2
        assert_eq!(out, vec![0.0, 5.0, 0.0, 0.0, 0.0, 0.2, 0.0, 3.0, 0.0]);
    }

    #[test]
    fn step_policy_follows_row_sum() {
        let c = Coupling::from_dense(3, &[0.0, 2.0, -1.0, 2.0, 0.0, 0.5, -1.0, 0.5, 0.0]).unwrap();
        let cfg = KuramotoParams { eps_scale: 0.5, dt_scale: 0.1, ..Default::default() }.config_for(&c);
        assert_eq!(cfg.epsilon, 1.5);
        assert!((cfg.dt - 0.1 / 4.5).abs() < 1e-15);
    }
}
