//! Per-class Hebbian accumulation, normalization and per-pixel pruning.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::data::BipolarImage;
use crate::error::{Error, Result};

/// Raw per-class accumulators `w[k][i][j] = sum p_i p_j` over class-k images.
///
/// Stored as exact integers; every class matrix is symmetric with a zero diagonal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassWeightTensor {
    n_classes: usize,
    pixels: usize,
    weights: Vec<i64>,
    counts: Vec<u64>,
}

impl ClassWeightTensor {
    pub fn zeros(n_classes: usize, pixels: usize) -> Self {
        Self {
            n_classes,
            pixels,
            weights: vec![0; n_classes * pixels * pixels],
            counts: vec![0; n_classes],
        }
    }

    pub fn from_parts(n_classes: usize, pixels: usize, weights: Vec<i64>, counts: Vec<u64>) -> Result<Self> {
        if weights.len() != n_classes * pixels * pixels || counts.len() != n_classes {
            return Err(Error::Shape(format!(
                "{} weights and {} counts for {n_classes} classes of {pixels} pixels",
                weights.len(),
                counts.len()
            )));
        }
        Ok(Self {
            n_classes,
            pixels,
            weights,
            counts,
        })
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn pixels(&self) -> usize {
        self.pixels
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn class(&self, k: usize) -> &[i64] {
        let n = self.pixels * self.pixels;
        &self.weights[k * n..(k + 1) * n]
    }

    pub fn get(&self, k: usize, i: usize, j: usize) -> i64 {
        self.weights[(k * self.pixels + i) * self.pixels + j]
    }

    /// Adds another accumulator built from a disjoint batch.
    pub fn merge(&mut self, other: &ClassWeightTensor) -> Result<()> {
        if self.n_classes != other.n_classes || self.pixels != other.pixels {
            return Err(Error::Shape(format!(
                "cannot merge {}x{} into {}x{}",
                other.n_classes, other.pixels, self.n_classes, self.pixels
            )));
        }
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            *a += b;
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        Ok(())
    }

    /// Converts to floating point, optionally dividing class k by its image count.
    pub fn to_f64(&self, balance: bool) -> Vec<f64> {
        let n = self.pixels * self.pixels;
        let mut out: Vec<f64> = self.weights.iter().map(|&w| w as f64).collect();
        if balance {
            for (k, chunk) in out.chunks_mut(n).enumerate() {
                let c = self.counts[k].max(1) as f64;
                chunk.iter_mut().for_each(|w| *w /= c);
            }
        }
        out
    }
}

/// Hebbian accumulation of labeled images into per-class outer-product sums.
///
/// Uses co-activation counts: with `c_ij` the number of images where pixels
/// i and j are both +1, `sum p_i p_j = n - 2 (c_ii + c_jj - 2 c_ij)`.
pub fn accumulate(images: &[BipolarImage], n_classes: usize) -> Result<ClassWeightTensor> {
    let pixels = images.first().ok_or(Error::Empty("training images"))?.len();
    let mut by_class: Vec<Vec<Vec<u32>>> = vec![Vec::new(); n_classes];
    for (index, img) in images.iter().enumerate() {
        let label = img.label.ok_or(Error::Unlabeled { index })?;
        if label >= n_classes {
            return Err(Error::LabelRange {
                index,
                label,
                n_classes,
            });
        }
        if img.len() != pixels {
            return Err(Error::Shape(format!(
                "image {index} has {} pixels, expected {pixels}",
                img.len()
            )));
        }
        let on: Vec<u32> = img
            .spins()
            .iter()
            .enumerate()
            .filter(|(_, &s)| s > 0)
            .map(|(i, _)| i as u32)
            .collect();
        by_class[label].push(on);
    }

    let per_class: Vec<Vec<i64>> = by_class
        .par_iter()
        .map(|members| class_accumulator(members, pixels))
        .collect();

    let mut out = ClassWeightTensor::zeros(n_classes, pixels);
    let n = pixels * pixels;
    for (k, w) in per_class.into_iter().enumerate() {
        out.weights[k * n..(k + 1) * n].copy_from_slice(&w);
        out.counts[k] = by_class[k].len() as u64;
    }
    Ok(out)
}

fn class_accumulator(members: &[Vec<u32>], pixels: usize) -> Vec<i64> {
    let mut co = vec![0u32; pixels * pixels];
    for on in members {
        for &i in on {
            let row = &mut co[i as usize * pixels..(i as usize + 1) * pixels];
            for &j in on {
                row[j as usize] += 1;
            }
        }
    }
    let n = members.len() as i64;
    let mut w = vec![0i64; pixels * pixels];
    for i in 0..pixels {
        let cii = i64::from(co[i * pixels + i]);
        for j in 0..pixels {
            if i == j {
                continue;
            }
            let cjj = i64::from(co[j * pixels + j]);
            let cij = i64::from(co[i * pixels + j]);
            w[i * pixels + j] = n - 2 * (cii + cjj - 2 * cij);
        }
    }
    w
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NormMode {
    None,
    Class,
    Pixel,
    Both,
}

impl NormMode {
    pub const ALL: [NormMode; 4] = [NormMode::None, NormMode::Pixel, NormMode::Class, NormMode::Both];

    pub fn code(self) -> u8 {
        match self {
            NormMode::None => 0,
            NormMode::Class => 1,
            NormMode::Pixel => 2,
            NormMode::Both => 3,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(NormMode::None),
            1 => Some(NormMode::Class),
            2 => Some(NormMode::Pixel),
            3 => Some(NormMode::Both),
            _ => None,
        }
    }
}

impl fmt::Display for NormMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NormMode::None => "none",
            NormMode::Class => "class",
            NormMode::Pixel => "pixel",
            NormMode::Both => "both",
        })
    }
}

impl FromStr for NormMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(NormMode::None),
            "class" => Ok(NormMode::Class),
            "pixel" => Ok(NormMode::Pixel),
            "both" => Ok(NormMode::Both),
            _ => Err(Error::Param(format!("unknown norm mode {s:?}"))),
        }
    }
}

/// A real-valued `n_classes x P x P` model. Diagonals are zero; symmetry is not required.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedTensor {
    pub n_classes: usize,
    pub pixels: usize,
    pub norm_mode: NormMode,
    pub weights: Vec<f64>,
}

impl NormalizedTensor {
    pub fn new(n_classes: usize, pixels: usize, norm_mode: NormMode, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != n_classes * pixels * pixels {
            return Err(Error::Shape(format!(
                "{} weights for {n_classes} classes of {pixels} pixels",
                weights.len()
            )));
        }
        Ok(Self {
            n_classes,
            pixels,
            norm_mode,
            weights,
        })
    }

    pub fn class(&self, k: usize) -> &[f64] {
        let n = self.pixels * self.pixels;
        &self.weights[k * n..(k + 1) * n]
    }

    pub fn class_mut(&mut self, k: usize) -> &mut [f64] {
        let n = self.pixels * self.pixels;
        &mut self.weights[k * n..(k + 1) * n]
    }

    pub fn row(&self, k: usize, i: usize) -> &[f64] {
        let start = (k * self.pixels + i) * self.pixels;
        &self.weights[start..start + self.pixels]
    }

    pub fn get(&self, k: usize, i: usize, j: usize) -> f64 {
        self.weights[(k * self.pixels + i) * self.pixels + j]
    }

    /// Multiplies every class matrix by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        out.weights.iter_mut().for_each(|w| *w *= factor);
        out
    }
}

/// Normalizes accumulated similarities.
///
/// With `balance`, class k is first divided by its image count so every
/// entry is a mean pixel-pair product in [-1, 1].
pub fn normalize(t: &ClassWeightTensor, mode: NormMode, balance: bool) -> Result<NormalizedTensor> {
    let (n_classes, pixels) = (t.n_classes, t.pixels);
    if pixels < 2 {
        return Err(Error::Param("normalization needs at least 2 pixels".into()));
    }
    if matches!(mode, NormMode::Class | NormMode::Both) && n_classes < 2 {
        return Err(Error::Param("class normalization needs at least 2 classes".into()));
    }
    let mut out = NormalizedTensor::new(n_classes, pixels, mode, t.to_f64(balance))?;
    match mode {
        NormMode::None => {}
        NormMode::Class => normalize_classes(&mut out),
        NormMode::Pixel => normalize_pixels(&mut out),
        NormMode::Both => {
            normalize_classes(&mut out);
            normalize_pixels(&mut out);
        }
    }
    Ok(out)
}

/// z-scores `values` in place; zero spread maps every value to zero.
fn zscore(values: &mut [f64]) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    if std > 0.0 {
        values.iter_mut().for_each(|v| *v = (*v - mean) / std);
    } else {
        values.iter_mut().for_each(|v| *v = 0.0);
    }
}

/// Scales each (i, j) fibre across classes to unit Euclidean norm.
fn normalize_classes(t: &mut NormalizedTensor) {
    let (n_classes, pixels) = (t.n_classes, t.pixels);
    let n = pixels * pixels;
    for idx in 0..n {
        let norm = (0..n_classes)
            .map(|k| t.weights[k * n + idx].powi(2))
            .sum::<f64>()
            .sqrt();
        for k in 0..n_classes {
            let w = &mut t.weights[k * n + idx];
            *w = if norm > 0.0 { *w / norm } else { 0.0 };
        }
    }
}

/// z-scores, for every class k and pixel j, the off-diagonal entries `w[k][.][j]`.
fn normalize_pixels(t: &mut NormalizedTensor) {
    let pixels = t.pixels;
    t.weights
        .par_chunks_mut(pixels * pixels)
        .for_each(|class| {
            let mut column = vec![0.0; pixels - 1];
            for j in 0..pixels {
                let rows = (0..pixels).filter(|&i| i != j);
                for (c, i) in column.iter_mut().zip(rows.clone()) {
                    *c = class[i * pixels + j];
                }
                zscore(&mut column);
                for (c, i) in column.iter().zip(rows) {
                    class[i * pixels + j] = *c;
                }
            }
        });
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SparseMode {
    /// Half the budget nearest +1, half nearest -1.
    Top,
    /// Largest absolute values.
    TopAbs,
}

impl SparseMode {
    pub fn code(self) -> u8 {
        match self {
            SparseMode::Top => 1,
            SparseMode::TopAbs => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            1 => Some(SparseMode::Top),
            2 => Some(SparseMode::TopAbs),
            _ => None,
        }
    }
}

impl fmt::Display for SparseMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SparseMode::Top => "top",
            SparseMode::TopAbs => "topabs",
        })
    }
}

impl FromStr for SparseMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "top" => Ok(SparseMode::Top),
            "topabs" => Ok(SparseMode::TopAbs),
            _ => Err(Error::Param(format!("unknown sparse mode {s:?}"))),
        }
    }
}

/// Retained connections: `keep(k, i)` lists, in ascending order, the pixels
/// j that pixel i stays connected to in class k.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SparseMask {
    pub n_classes: usize,
    pub pixels: usize,
    pub mode: SparseMode,
    pub n2: usize,
    keep: Vec<Vec<u32>>,
}

impl SparseMask {
    pub fn from_lists(
        n_classes: usize,
        pixels: usize,
        mode: SparseMode,
        n2: usize,
        keep: Vec<Vec<u32>>,
    ) -> Result<Self> {
        if keep.len() != n_classes * pixels {
            return Err(Error::Shape(format!(
                "{} index lists for {n_classes} classes of {pixels} pixels",
                keep.len()
            )));
        }
        for (row, list) in keep.iter().enumerate() {
            let i = row % pixels;
            let sorted = list.windows(2).all(|w| w[0] < w[1]);
            if !sorted || list.iter().any(|&j| j as usize == i || j as usize >= pixels) {
                return Err(Error::Model(format!("invalid index list for row {row}")));
            }
        }
        Ok(Self {
            n_classes,
            pixels,
            mode,
            n2,
            keep,
        })
    }

    pub fn keep(&self, k: usize, i: usize) -> &[u32] {
        &self.keep[k * self.pixels + i]
    }

    pub fn lists(&self) -> &[Vec<u32>] {
        &self.keep
    }

    /// Number of retained entries in class k.
    pub fn retained(&self, k: usize) -> usize {
        (0..self.pixels).map(|i| self.keep(k, i).len()).sum()
    }
}

/// Keeps, for every class and pixel, its `n2` most informative connections.
pub fn sparsify(t: &NormalizedTensor, mode: SparseMode, n2: usize) -> Result<SparseMask> {
    let pixels = t.pixels;
    if n2 == 0 || n2 >= pixels {
        return Err(Error::Param(format!(
            "n2 = {n2} outside [1, {}]",
            pixels - 1
        )));
    }
    if mode == SparseMode::Top && n2 % 2 != 0 {
        return Err(Error::Param(format!("top mode needs an even n2, got {n2}")));
    }
    let keep: Vec<Vec<u32>> = (0..t.n_classes * pixels)
        .into_par_iter()
        .map(|row_index| {
            let i = row_index % pixels;
            let row = t.row(row_index / pixels, i);
            let mut kept = match mode {
                SparseMode::TopAbs => select_row(row, i, n2, |w| -w.abs()),
                SparseMode::Top => select_top(row, i, n2),
            };
            kept.sort_unstable();
            kept
        })
        .collect();
    SparseMask::from_lists(t.n_classes, pixels, mode, n2, keep)
}

/// The `n` off-diagonal indices with the smallest `key`, ties to lower index.
fn select_row(row: &[f64], i: usize, n: usize, key: impl Fn(f64) -> f64) -> Vec<u32> {
    let mut cand: Vec<(f64, u32)> = row
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(j, &w)| (key(w), j as u32))
        .collect();
    let order = |a: &(f64, u32), b: &(f64, u32)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if n < cand.len() {
        cand.select_nth_unstable_by(n, order);
        cand.truncate(n);
    }
    cand.sort_unstable_by(order);
    cand.into_iter().map(|(_, j)| j).collect()
}

fn select_top(row: &[f64], i: usize, n2: usize) -> Vec<u32> {
    let half = n2 / 2;
    let near_plus = select_row(row, i, half, |w| (w - 1.0).abs());
    let near_minus = select_row(row, i, half, |w| (w + 1.0).abs());
    let mut taken = vec![false; row.len()];
    let mut kept = Vec::with_capacity(n2);
    for j in near_plus.into_iter().chain(near_minus) {
        if !taken[j as usize] {
            taken[j as usize] = true;
            kept.push(j);
        }
    }
    if kept.len() < n2 {
        for j in select_row(row, i, row.len() - 1, |w| -w.abs()) {
            if kept.len() == n2 {
                break;
            }
            if !taken[j as usize] {
                taken[j as usize] = true;
                kept.push(j);
            }
        }
    }
    kept
}

/// Zeroes every entry not retained by `m`.
pub fn apply_mask(t: &NormalizedTensor, m: &SparseMask) -> Result<NormalizedTensor> {
    if t.n_classes != m.n_classes || t.pixels != m.pixels {
        return Err(Error::Shape(format!(
            "mask {}x{} does not fit tensor {}x{}",
            m.n_classes, m.pixels, t.n_classes, t.pixels
        )));
    }
    let pixels = t.pixels;
    let mut out = NormalizedTensor::new(t.n_classes, pixels, t.norm_mode, vec![0.0; t.weights.len()])?;
    for (row_index, list) in m.lists().iter().enumerate() {
        let base = row_index * pixels;
        for &j in list {
            out.weights[base + j as usize] = t.weights[base + j as usize];
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn img(spins: &[i8], label: usize) -> BipolarImage {
        BipolarImage::new(spins.to_vec(), Some(label)).unwrap()
    }

    /// Straight sum of outer products, diagonal zero.
    fn naive(images: &[BipolarImage], n_classes: usize) -> Vec<i64> {
        let p = images[0].len();
        let mut w = vec![0i64; n_classes * p * p];
        for s in images {
            let k = s.label.unwrap();
            for i in 0..p {
                for j in 0..p {
                    if i != j {
                        w[k * p * p + i * p + j] += i64::from(s.spins()[i] * s.spins()[j]);
                    }
                }
            }
        }
        w
    }

    #[test]
    fn single_pattern_outer_product() {
        let t = accumulate(&[img(&[1, 1, -1], 0)], 1).unwrap();
        let expect = [0, 1, -1, 1, 0, -1, -1, -1, 0];
        assert_eq!(t.class(0), &expect);
        assert_eq!(t.counts(), &[1]);
    }

    #[test]
    fn matches_naive_sum() {
        let images = vec![
            img(&[1, -1, 1, 1], 0),
            img(&[-1, -1, 1, -1], 1),
            img(&[1, 1, 1, -1], 0),
            img(&[-1, 1, -1, 1], 2),
            img(&[1, -1, -1, -1], 1),
        ];
        let t = accumulate(&images, 3).unwrap();
        assert_eq!(t.weights, naive(&images, 3));
        assert_eq!(t.counts(), &[2, 2, 1]);
    }

    #[test]
    fn accumulate_rejects_bad_labels() {
        assert!(matches!(
            accumulate(&[img(&[1, 1], 4)], 3),
            Err(Error::LabelRange { label: 4, .. })
        ));
        let unlabeled = BipolarImage::new(vec![1, 1], None).unwrap();
        assert!(matches!(accumulate(&[unlabeled], 3), Err(Error::Unlabeled { index: 0 })));
        assert!(accumulate(&[], 3).is_err());
    }

    #[test]
    fn merge_equals_joint_accumulation() {
        let a = vec![img(&[1, -1, 1], 0), img(&[-1, -1, 1], 1)];
        let b = vec![img(&[1, 1, 1], 1), img(&[1, -1, -1], 0)];
        let mut left = accumulate(&a, 2).unwrap();
        left.merge(&accumulate(&b, 2).unwrap()).unwrap();
        let all: Vec<_> = a.into_iter().chain(b).collect();
        assert_eq!(left, accumulate(&all, 2).unwrap());
    }

    fn tensor(n_classes: usize, p: usize, seed: u64) -> ClassWeightTensor {
        let mut x = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        let mut w = vec![0i64; n_classes * p * p];
        for k in 0..n_classes {
            for i in 0..p {
                for j in 0..p {
                    if i != j {
                        x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                        w[k * p * p + i * p + j] = ((x >> 33) % 41) as i64 - 20;
                    }
                }
            }
        }
        ClassWeightTensor::from_parts(n_classes, p, w, vec![3; n_classes]).unwrap()
    }

    /// Two-pass reference, written independently of the production loops.
    fn reference(t: &ClassWeightTensor, mode: NormMode) -> Vec<f64> {
        let (c, p) = (t.n_classes(), t.pixels());
        let mut w = t.to_f64(false);
        let at = |k: usize, i: usize, j: usize| k * p * p + i * p + j;
        if matches!(mode, NormMode::Class | NormMode::Both) {
            for i in 0..p {
                for j in 0..p {
                    let n: f64 = (0..c).map(|k| w[at(k, i, j)] * w[at(k, i, j)]).sum::<f64>().sqrt();
                    for k in 0..c {
                        w[at(k, i, j)] = if n > 0.0 { w[at(k, i, j)] / n } else { 0.0 };
                    }
                }
            }
        }
        if matches!(mode, NormMode::Pixel | NormMode::Both) {
            for k in 0..c {
                for j in 0..p {
                    let vals: Vec<f64> = (0..p).filter(|&i| i != j).map(|i| w[at(k, i, j)]).collect();
                    let m = vals.iter().sum::<f64>() / vals.len() as f64;
                    let sd = (vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / vals.len() as f64).sqrt();
                    for i in (0..p).filter(|&i| i != j) {
                        w[at(k, i, j)] = if sd > 0.0 { (w[at(k, i, j)] - m) / sd } else { 0.0 };
                    }
                }
            }
        }
        w
    }

    #[test]
    fn normalization_matches_reference() {
        for seed in 0..5 {
            let t = tensor(3, 6, seed);
            for mode in NormMode::ALL {
                let got = normalize(&t, mode, false).unwrap();
                let want = reference(&t, mode);
                for (a, b) in got.weights.iter().zip(&want) {
                    assert!((a - b).abs() < 1e-12, "{mode}: {a} vs {b}");
                }
                for k in 0..3 {
                    for i in 0..6 {
                        assert_eq!(got.get(k, i, i), 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn constant_column_maps_to_zero() {
        let w = vec![0, 2, 2, 2, 0, 2, 2, 2, 0];
        let t = ClassWeightTensor::from_parts(1, 3, w, vec![1]).unwrap();
        let n = normalize(&t, NormMode::Pixel, false).unwrap();
        assert!(n.weights.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn mode_names_round_trip() {
        for m in NormMode::ALL {
            assert_eq!(m.to_string().parse::<NormMode>().unwrap(), m);
            assert_eq!(NormMode::from_code(m.code()), Some(m));
        }
        for m in [SparseMode::Top, SparseMode::TopAbs] {
            assert_eq!(m.to_string().parse::<SparseMode>().unwrap(), m);
        }
        assert!("dim3".parse::<NormMode>().is_err());
    }

    /// Full stable sort of the row by key, then index.
    fn sorted_pick(row: &[f64], i: usize, n: usize, key: impl Fn(f64) -> f64) -> Vec<u32> {
        let mut idx: Vec<usize> = (0..row.len()).filter(|&j| j != i).collect();
        idx.sort_by(|&a, &b| key(row[a]).total_cmp(&key(row[b])).then(a.cmp(&b)));
        let mut out: Vec<u32> = idx[..n].iter().map(|&j| j as u32).collect();
        out.sort_unstable();
        out
    }

    #[test]
    fn topabs_matches_full_sort() {
        let t = normalize(&tensor(2, 9, 7), NormMode::Both, false).unwrap();
        for n2 in 1..8 {
            let m = sparsify(&t, SparseMode::TopAbs, n2).unwrap();
            for k in 0..2 {
                for i in 0..9 {
                    assert_eq!(m.keep(k, i), sorted_pick(t.row(k, i), i, n2, |w| -w.abs()));
                }
            }
        }
    }

    #[test]
    fn topabs_ties_prefer_lower_index() {
        let w = vec![0.0, 1.0, -1.0, 1.0, 1.0, 0.0, 0.5, 0.5, 1.0, 0.5, 0.0, 0.5, 1.0, 0.5, 0.5, 0.0];
        let t = NormalizedTensor::new(1, 4, NormMode::None, w).unwrap();
        let m = sparsify(&t, SparseMode::TopAbs, 2).unwrap();
        assert_eq!(m.keep(0, 0), &[1, 2]);
        assert_eq!(m.keep(0, 2), &[0, 1]);
    }

    #[test]
    fn top_splits_budget_between_signs() {
        let row = vec![0.0, 0.9, 1.2, -0.8, -3.0, 0.1];
        let mut w = vec![0.0; 36];
        w[..6].copy_from_slice(&row);
        let t = NormalizedTensor::new(1, 6, NormMode::None, w).unwrap();
        let m = sparsify(&t, SparseMode::Top, 2).unwrap();
        // nearest +1 is 0.9, nearest -1 is -0.8
        assert_eq!(m.keep(0, 0), &[1, 3]);
        let m = sparsify(&t, SparseMode::Top, 4).unwrap();
        assert_eq!(m.keep(0, 0), &[1, 2, 3, 5]);
    }

    #[test]
    fn sparsify_rejects_bad_budgets() {
        let t = normalize(&tensor(2, 5, 1), NormMode::Both, false).unwrap();
        assert!(sparsify(&t, SparseMode::TopAbs, 0).is_err());
        assert!(sparsify(&t, SparseMode::TopAbs, 5).is_err());
        assert!(sparsify(&t, SparseMode::Top, 3).is_err());
    }

    #[test]
    fn saturated_mask_is_identity() {
        let t = normalize(&tensor(2, 6, 3), NormMode::Both, false).unwrap();
        let m = sparsify(&t, SparseMode::TopAbs, 5).unwrap();
        assert_eq!(apply_mask(&t, &m).unwrap().weights, t.weights);
    }

    #[test]
    fn masking_is_idempotent() {
        let t = normalize(&tensor(3, 8, 4), NormMode::Both, false).unwrap();
        let m = sparsify(&t, SparseMode::TopAbs, 3).unwrap();
        let once = apply_mask(&t, &m).unwrap();
        assert_eq!(apply_mask(&once, &m).unwrap(), once);
        for k in 0..3 {
            assert_eq!(m.retained(k), 8 * 3);
            for i in 0..8 {
                assert_eq!(once.row(k, i).iter().filter(|&&x| x != 0.0).count(), 3);
            }
        }
    }
}
