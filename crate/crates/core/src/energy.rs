//! Ising-energy scoring and argmin classification.

use rayon::prelude::*;

use crate::data::BipolarImage;
use crate::error::{Error, Result};
use crate::hebbian::NormalizedTensor;
use crate::kuramoto::class_couplings;

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyReport {
    pub energies: Vec<f64>,
    pub predicted: usize,
    /// Second-lowest minus lowest energy; zero on a tie.
    pub margin: f64,
}

impl EnergyReport {
    pub fn from_energies(energies: Vec<f64>) -> Result<Self> {
        if energies.is_empty() {
            return Err(Error::Empty("energies"));
        }
        let (predicted, lowest) = argmin(&energies);
        let second = energies
            .iter()
            .enumerate()
            .filter(|&(k, _)| k != predicted)
            .map(|(_, &e)| e)
            .fold(f64::INFINITY, f64::min);
        let margin = if second.is_finite() { second - lowest } else { 0.0 };
        Ok(Self {
            energies,
            predicted,
            margin,
        })
    }
}

/// Index and value of the minimum; the first index wins ties.
pub fn argmin(values: &[f64]) -> (usize, f64) {
    values
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |(bk, bv), (k, &v)| {
            if v < bv {
                (k, v)
            } else {
                (bk, bv)
            }
        })
}

/// `-sum_{i,j} w_ij s_i s_j` over all ordered pairs, on a row-major `P x P` matrix.
pub fn ising_energy(weights: &[f64], spins: &[f64]) -> Result<f64> {
    let p = spins.len();
    if weights.len() != p * p {
        return Err(Error::Shape(format!(
            "{} weights for {p} spins",
            weights.len()
        )));
    }
    Ok(-weights
        .chunks_exact(p)
        .zip(spins)
        .map(|(row, &si)| si * dot(row, spins))
        .sum::<f64>())
}

pub fn energy(weights: &[f64], s: &BipolarImage) -> Result<f64> {
    ising_energy(weights, &s.to_f64())
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        for l in 0..4 {
            acc[l] += a[4 * c + l] * b[4 * c + l];
        }
    }
    let mut tail = 0.0;
    for i in 4 * chunks..a.len() {
        tail += a[i] * b[i];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

pub fn classify(s: &BipolarImage, model: &NormalizedTensor) -> Result<EnergyReport> {
    if model.n_classes < 2 {
        return Err(Error::Param("classification needs at least 2 classes".into()));
    }
    if s.len() != model.pixels {
        return Err(Error::Shape(format!(
            "image has {} pixels, model expects {}",
            s.len(),
            model.pixels
        )));
    }
    let spins = s.to_f64();
    let energies = (0..model.n_classes)
        .map(|k| ising_energy(model.class(k), &spins))
        .collect::<Result<Vec<_>>>()?;
    EnergyReport::from_energies(energies)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub n_classes: usize,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<u64>>,
    pub reports: Vec<EnergyReport>,
}

impl Evaluation {
    pub fn total(&self) -> u64 {
        self.confusion.iter().flatten().sum()
    }

    pub fn correct(&self) -> u64 {
        (0..self.n_classes).map(|k| self.confusion[k][k]).sum()
    }

    pub fn accuracy(&self) -> f64 {
        self.correct() as f64 / self.total() as f64
    }

    /// Accuracy within each true class; `NaN` for classes with no support.
    pub fn per_class_accuracy(&self) -> Vec<f64> {
        self.confusion
            .iter()
            .enumerate()
            .map(|(k, row)| row[k] as f64 / row.iter().sum::<u64>() as f64)
            .collect()
    }
}

/// Builds an evaluation from (true label, report) pairs in input order.
pub fn tally(n_classes: usize, labels: &[usize], reports: Vec<EnergyReport>) -> Result<Evaluation> {
    if reports.is_empty() {
        return Err(Error::Empty("test set"));
    }
    let mut confusion = vec![vec![0u64; n_classes]; n_classes];
    for (&truth, r) in labels.iter().zip(&reports) {
        confusion[truth][r.predicted] += 1;
    }
    Ok(Evaluation {
        n_classes,
        confusion,
        reports,
    })
}

pub fn evaluate(images: &[BipolarImage], model: &NormalizedTensor) -> Result<Evaluation> {
    if images.is_empty() {
        return Err(Error::Empty("test set"));
    }
    if model.n_classes < 2 {
        return Err(Error::Param("classification needs at least 2 classes".into()));
    }
    let labels = labels_of(images, model.n_classes)?;
    // Pruned classes are far cheaper in compressed-row form.
    let couplings = class_couplings(model)?;
    let reports = images
        .par_iter()
        .enumerate()
        .map(|(index, img)| {
            if img.len() != model.pixels {
                return Err(Error::Shape(format!(
                    "image {index} has {} pixels, model expects {}",
                    img.len(),
                    model.pixels
                )));
            }
            let spins = img.to_f64();
            EnergyReport::from_energies(couplings.iter().map(|c| c.ising_energy(&spins)).collect())
        })
        .collect::<Result<Vec<_>>>()?;
    tally(model.n_classes, &labels, reports)
}

pub(crate) fn labels_of(images: &[BipolarImage], n_classes: usize) -> Result<Vec<usize>> {
    images
        .iter()
        .enumerate()
        .map(|(index, img)| {
            let label = img.label.ok_or(Error::Unlabeled { index })?;
            if label >= n_classes {
                return Err(Error::LabelRange {
                    index,
                    label,
                    n_classes,
                });
            }
            Ok(label)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_weights() {
        assert_eq!(ising_energy(&[0.0; 4], &[1.0, -1.0]).unwrap(), 0.0);
    }

    #[test]
    fn agreement_lowers_energy() {
        let w = [0.0, 1.0, 1.0, 0.0];
        assert_eq!(ising_energy(&w, &[1.0, 1.0]).unwrap(), -2.0);
        assert_eq!(ising_energy(&w, &[1.0, -1.0]).unwrap(), 2.0);
    }

    #[test]
    fn shape_mismatch() {
        assert!(matches!(ising_energy(&[0.0; 3], &[1.0, 1.0]), Err(Error::Shape(_))));
    }

    #[test]
    fn tie_goes_to_lowest_class() {
        let r = EnergyReport::from_energies(vec![1.0, -3.0, -3.0]).unwrap();
        assert_eq!(r.predicted, 1);
        assert_eq!(r.margin, 0.0);
    }

    #[test]
    fn stored_image_wins() {
        let s = BipolarImage::new(vec![1, -1, 1, 1], Some(0)).unwrap();
        let p = 4;
        let mut w = vec![0.0; 2 * p * p];
        let sf = s.to_f64();
        for i in 0..p {
            for j in 0..p {
                if i != j {
                    w[i * p + j] = sf[i] * sf[j];
                }
            }
        }
        let model = NormalizedTensor::new(2, p, crate::hebbian::NormMode::None, w).unwrap();
        let r = classify(&s, &model).unwrap();
        assert_eq!(r.predicted, 0);
        assert_eq!(r.energies, vec![-12.0, 0.0]);
    }

    #[test]
    fn empty_test_set() {
        let model = NormalizedTensor::new(2, 2, crate::hebbian::NormMode::None, vec![0.0; 8]).unwrap();
        assert!(matches!(evaluate(&[], &model), Err(Error::Empty(_))));
    }
}
