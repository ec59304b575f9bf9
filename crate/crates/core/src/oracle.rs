//! Discrete Hopfield reference dynamics for small networks.
//!
//! Everything here is brute force and single-threaded; it exists to check
//! the energy classifier and the oscillator dynamics on instances small
//! enough to enumerate.

use crate::energy::ising_energy;
use crate::error::{Error, Result};

pub const MAX_ORACLE_PIXELS: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteState {
    pub spins: Vec<i8>,
    /// Sweep order; a permutation of `0..P`.
    pub order: Vec<usize>,
    pub thresholds: Vec<f64>,
}

impl DiscreteState {
    /// Identity sweep order and zero thresholds.
    pub fn new(spins: Vec<i8>) -> Self {
        let p = spins.len();
        Self {
            spins,
            order: (0..p).collect(),
            thresholds: vec![0.0; p],
        }
    }

    pub fn with_order(mut self, order: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; self.spins.len()];
        if order.len() != seen.len() {
            return Err(Error::Param("sweep order has the wrong length".into()));
        }
        for &i in &order {
            if i >= seen.len() || std::mem::replace(&mut seen[i], true) {
                return Err(Error::Param(format!("sweep order is not a permutation at {i}")));
            }
        }
        self.order = order;
        Ok(self)
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.spins.iter().map(|&s| f64::from(s)).collect()
    }

    /// `-1/2 sum w_ij s_i s_j + sum theta_i s_i`.
    pub fn classical_energy(&self, weights: &[f64]) -> Result<f64> {
        let s = self.to_f64();
        let bias: f64 = self.thresholds.iter().zip(&s).map(|(t, x)| t * x).sum();
        Ok(0.5 * ising_energy(weights, &s)? + bias)
    }
}

fn local_field(weights: &[f64], spins: &[i8], i: usize) -> f64 {
    let p = spins.len();
    weights[i * p..(i + 1) * p]
        .iter()
        .zip(spins)
        .map(|(w, &s)| w * f64::from(s))
        .sum()
}

fn check_symmetric(weights: &[f64], p: usize) -> Result<()> {
    if weights.len() != p * p {
        return Err(Error::Shape(format!("{} weights for {p} spins", weights.len())));
    }
    for i in 0..p {
        if weights[i * p + i] != 0.0 {
            return Err(Error::Param(format!("nonzero diagonal at {i}")));
        }
        for j in 0..i {
            if weights[i * p + j] != weights[j * p + i] {
                return Err(Error::Param(format!("asymmetric weights at ({i}, {j})")));
            }
        }
    }
    Ok(())
}

/// Asynchronous sign updates in the stored order until a full sweep changes nothing.
pub fn async_relax(init: &DiscreteState, weights: &[f64]) -> Result<DiscreteState> {
    let p = init.spins.len();
    check_symmetric(weights, p)?;
    let mut state = init.clone();
    loop {
        let mut changed = false;
        for &i in &init.order {
            let h = local_field(weights, &state.spins, i) - state.thresholds[i];
            let next = if h >= 0.0 { 1 } else { -1 };
            if next != state.spins[i] {
                state.spins[i] = next;
                changed = true;
            }
        }
        if !changed {
            return Ok(state);
        }
    }
}

/// Global minimizer of `-sum w_ij s_i s_j` by enumeration.
///
/// States are visited in lexicographic order with +1 before -1, so ties
/// resolve to the state that is +1 at the earliest differing position.
pub fn exhaustive_min_energy(weights: &[f64]) -> Result<(Vec<i8>, f64)> {
    let p = (weights.len() as f64).sqrt() as usize;
    if p * p != weights.len() {
        return Err(Error::Shape(format!("{} weights is not square", weights.len())));
    }
    if p > MAX_ORACLE_PIXELS {
        return Err(Error::OracleSize(p));
    }
    let mut best: Option<(Vec<i8>, f64)> = None;
    let mut spins = vec![0.0; p];
    for code in 0u32..(1u32 << p) {
        for (i, s) in spins.iter_mut().enumerate() {
            *s = if code >> (p - 1 - i) & 1 == 1 { -1.0 } else { 1.0 };
        }
        let e = ising_energy(weights, &spins)?;
        if best.as_ref().map_or(true, |(_, b)| e < *b) {
            best = Some((spins.iter().map(|&s| s as i8).collect(), e));
        }
    }
    best.ok_or(Error::Empty("oracle weights"))
}
