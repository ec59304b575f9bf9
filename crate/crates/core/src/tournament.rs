//! Ten-class decisions from a cascade of two-class oscillator matches.
//!
//! Each match runs the phase dynamics under a two-pattern Hopfield matrix and
//! awards the win to the prototype closest (by cosine) to the final phases.

use std::collections::HashMap;

use rayon::prelude::*;

use crate::data::{BipolarImage, Prototype};
use crate::energy::{dot, labels_of};
use crate::error::{Error, Result};
use crate::kuramoto::{run, Coupling, KuramotoParams, Start, Trace};

/// Hopfield matrix storing two class prototypes.
#[derive(Debug, Clone, PartialEq)]
pub struct PairModel {
    pub class_a: usize,
    pub class_b: usize,
    pub pixels: usize,
    /// Row-major, symmetric, zero diagonal.
    pub weights: Vec<f64>,
    factors: [Vec<f64>; 2],
}

impl PairModel {
    /// Multiplies every weight by `factor > 0`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        if !(factor > 0.0 && factor.is_finite()) {
            return Err(Error::Param(format!("scale factor {factor} must be positive")));
        }
        let root = factor.sqrt();
        let [fa, fb] = &self.factors;
        Ok(Self {
            weights: self.weights.iter().map(|w| w * factor).collect(),
            factors: [
                fa.iter().map(|x| x * root).collect(),
                fb.iter().map(|x| x * root).collect(),
            ],
            ..self.clone()
        })
    }

    /// Rank-two coupling equal to `weights`, cheap to apply.
    pub fn coupling(&self) -> Result<Coupling> {
        Coupling::low_rank(self.factors.to_vec())
    }

    /// The prototypes as unit-free `±1` vectors (a, b).
    pub fn prototypes(&self) -> [Vec<f64>; 2] {
        let norm = |f: &Vec<f64>| {
            let s = f.first().map_or(1.0, |x| x.abs());
            f.iter().map(|x| x / s).collect()
        };
        [norm(&self.factors[0]), norm(&self.factors[1])]
    }
}

/// `xi_a xi_a^T + xi_b xi_b^T` with the diagonal zeroed.
pub fn build_pair_model(a: &Prototype, b: &Prototype) -> Result<PairModel> {
    let p = a.spins.len();
    if b.spins.len() != p {
        return Err(Error::Shape(format!(
            "prototype sizes differ: {p} vs {}",
            b.spins.len()
        )));
    }
    if p == 0 {
        return Err(Error::Empty("prototype"));
    }
    let (xa, xb) = (a.to_f64(), b.to_f64());
    let mut weights = vec![0.0; p * p];
    for i in 0..p {
        for j in 0..p {
            if i != j {
                weights[i * p + j] = xa[i] * xa[j] + xb[i] * xb[j];
            }
        }
    }
    Ok(PairModel {
        class_a: a.class_id,
        class_b: b.class_id,
        pixels: p,
        weights,
        factors: [xa, xb],
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    pub class_a: usize,
    pub class_b: usize,
    pub winner: usize,
    pub similarity_a: f64,
    pub similarity_b: f64,
    pub trace: Trace,
}

/// Cosine similarity; zero when either vector vanishes.
pub fn cosine(x: &[f64], y: &[f64]) -> f64 {
    let (nx, ny) = (dot(x, x).sqrt(), dot(y, y).sqrt());
    if nx == 0.0 || ny == 0.0 {
        0.0
    } else {
        dot(x, y) / (nx * ny)
    }
}

fn play(
    s: &BipolarImage,
    classes: (usize, usize),
    protos: (&[f64], &[f64]),
    coupling: &Coupling,
    params: &KuramotoParams,
) -> Result<MatchResult> {
    if s.len() != coupling.pixels() {
        return Err(Error::Shape(format!(
            "image has {} pixels, pair model {}",
            s.len(),
            coupling.pixels()
        )));
    }
    let config = params.config_for(coupling);
    let (state, trace) = run(Start::Image(s), coupling, &config, None)?;
    let c = state.cosines();
    let similarity_a = cosine(&c, protos.0);
    let similarity_b = cosine(&c, protos.1);
    let winner = if similarity_b > similarity_a {
        classes.1
    } else {
        classes.0
    };
    Ok(MatchResult {
        class_a: classes.0,
        class_b: classes.1,
        winner,
        similarity_a,
        similarity_b,
        trace,
    })
}

/// Integrates from `s` under the pair model; the prototype with the higher
/// cosine similarity to the final `cos(theta)` wins, ties to `class_a`.
pub fn pairwise_match(s: &BipolarImage, pm: &PairModel, params: &KuramotoParams) -> Result<MatchResult> {
    let coupling = pm.coupling()?;
    let [xa, xb] = pm.prototypes();
    play(s, (pm.class_a, pm.class_b), (&xa, &xb), &coupling, params)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TournamentResult {
    pub winner: usize,
    pub rounds: Vec<MatchResult>,
}

/// Prototypes plus the pair couplings between them, built once and reused
/// across test images.
#[derive(Debug, Clone)]
pub struct Tournament {
    protos: Vec<Vec<f64>>,
    classes: Vec<usize>,
    order: Vec<usize>,
    couplings: HashMap<(usize, usize), Coupling>,
    params: KuramotoParams,
}

impl Tournament {
    /// `order` lists positions into `prototypes`; the first entry is the
    /// opening champion. Defaults to every prototype in slice order.
    pub fn new(prototypes: &[Prototype], order: Option<&[usize]>, params: KuramotoParams) -> Result<Self> {
        if prototypes.len() < 2 {
            return Err(Error::Param(format!(
                "a tournament needs at least 2 prototypes, got {}",
                prototypes.len()
            )));
        }
        let p = prototypes[0].spins.len();
        if let Some(bad) = prototypes.iter().find(|q| q.spins.len() != p) {
            return Err(Error::Shape(format!(
                "prototype {} has {} pixels, expected {p}",
                bad.class_id,
                bad.spins.len()
            )));
        }
        let order = match order {
            Some(o) => {
                let mut seen = vec![false; prototypes.len()];
                for &i in o {
                    if i >= prototypes.len() || std::mem::replace(&mut seen[i], true) {
                        return Err(Error::Param(format!("bad or repeated entry {i} in match order")));
                    }
                }
                if o.len() < 2 {
                    return Err(Error::Param("match order needs at least 2 entries".into()));
                }
                o.to_vec()
            }
            None => (0..prototypes.len()).collect(),
        };
        let protos: Vec<Vec<f64>> = prototypes.iter().map(Prototype::to_f64).collect();
        let mut couplings = HashMap::new();
        let champions = order.iter().copied();
        for (n, &b) in order.iter().enumerate().skip(1) {
            for a in champions.clone().take(n) {
                let key = (a.min(b), a.max(b));
                if !couplings.contains_key(&key) {
                    let c = Coupling::low_rank(vec![protos[key.0].clone(), protos[key.1].clone()])?;
                    couplings.insert(key, c);
                }
            }
        }
        Ok(Self {
            protos,
            classes: prototypes.iter().map(|q| q.class_id).collect(),
            order,
            couplings,
            params,
        })
    }

    /// Champion persists until beaten; challengers enter in `order`.
    pub fn run(&self, s: &BipolarImage) -> Result<TournamentResult> {
        let mut champ = self.order[0];
        let mut rounds = Vec::with_capacity(self.order.len() - 1);
        for &challenger in &self.order[1..] {
            let coupling = &self.couplings[&(champ.min(challenger), champ.max(challenger))];
            let m = play(
                s,
                (self.classes[champ], self.classes[challenger]),
                (&self.protos[champ], &self.protos[challenger]),
                coupling,
                &self.params,
            )?;
            if m.winner != self.classes[champ] {
                champ = challenger;
            }
            rounds.push(m);
        }
        Ok(TournamentResult {
            winner: self.classes[champ],
            rounds,
        })
    }

    /// Runs every image independently in parallel.
    pub fn run_all(&self, images: &[BipolarImage]) -> Result<Vec<TournamentResult>> {
        images.par_iter().map(|s| self.run(s)).collect()
    }

    /// Accuracy over labeled images.
    pub fn accuracy(&self, images: &[BipolarImage]) -> Result<f64> {
        let n_classes = self.classes.iter().max().map_or(0, |m| m + 1);
        let labels = labels_of(images, n_classes)?;
        if labels.is_empty() {
            return Err(Error::Empty("test set"));
        }
        let results = self.run_all(images)?;
        let hits = results.iter().zip(&labels).filter(|(r, &y)| r.winner == y).count();
        Ok(hits as f64 / labels.len() as f64)
    }
}

/// Single-elimination over all prototypes in ascending order (or `order`).
pub fn run_tournament(
    s: &BipolarImage,
    prototypes: &[Prototype],
    params: &KuramotoParams,
    order: Option<&[usize]>,
) -> Result<TournamentResult> {
    Tournament::new(prototypes, order, params.clone())?.run(s)
}
