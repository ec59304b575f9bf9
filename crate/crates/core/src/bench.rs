//! Accuracy sweeps and their CSV/SVG reports.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::data::{write_file, BipolarImage};
use crate::energy::{evaluate, labels_of, tally, Evaluation};
use crate::error::{Error, Result};
use crate::hebbian::{apply_mask, normalize, sparsify, ClassWeightTensor, NormMode, SparseMode};
use crate::kuramoto::{class_couplings, classify_with_couplings, sparsify_model_coupling, KuramotoParams};

pub const TABLE2_N2: [usize; 8] = [10, 16, 28, 56, 64, 84, 128, 256];
pub const FIG8_KEEP: [f64; 7] = [0.05, 0.09, 0.13, 0.24, 0.4, 0.7, 1.0];
pub const DEFAULT_SUBSET: usize = 1000;

#[derive(Debug, Clone, PartialEq)]
pub enum SweepVar {
    /// Every `(n2, mode)` combination.
    N2 { values: Vec<usize>, modes: Vec<SparseMode> },
    Norm(Vec<NormMode>),
    /// Fraction of oscillator pairs kept.
    KeepFraction(Vec<f64>),
}

impl SweepVar {
    fn len(&self) -> usize {
        match self {
            SweepVar::N2 { values, modes } => values.len() * modes.len(),
            SweepVar::Norm(v) => v.len(),
            SweepVar::KeepFraction(v) => v.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub name: String,
    pub var: SweepVar,
    /// Held fixed unless it is the swept variable.
    pub norm: NormMode,
    pub sparse: SparseMode,
    pub n2: usize,
    pub balance: bool,
    /// `None` evaluates every test image.
    pub subset: Option<usize>,
    pub seed: u64,
    pub kuramoto: KuramotoParams,
}

impl SweepSpec {
    fn base(name: &str, var: SweepVar) -> Self {
        Self {
            name: name.into(),
            var,
            norm: NormMode::Both,
            sparse: SparseMode::TopAbs,
            n2: 84,
            balance: false,
            subset: None,
            seed: 0,
            kuramoto: KuramotoParams::classification(),
        }
    }

    /// Neighbour count against accuracy for both selection rules.
    pub fn table2() -> Self {
        Self::base(
            "table2",
            SweepVar::N2 {
                values: TABLE2_N2.to_vec(),
                modes: vec![SparseMode::Top, SparseMode::TopAbs],
            },
        )
    }

    /// Normalization ablation at 84 neighbours, TopABS.
    pub fn table4() -> Self {
        Self::base("table4", SweepVar::Norm(NormMode::ALL.to_vec()))
    }

    /// Oscillator classification against pair-pruning fraction.
    pub fn fig8(subset: Option<usize>, seed: u64) -> Self {
        Self {
            subset,
            seed,
            ..Self::base("fig8", SweepVar::KeepFraction(FIG8_KEEP.to_vec()))
        }
    }

    pub fn validate(&self, test_len: usize) -> Result<()> {
        if self.var.len() == 0 {
            return Err(Error::Param(format!("sweep '{}' has no points", self.name)));
        }
        if let Some(n) = self.subset {
            if n == 0 || n > test_len {
                return Err(Error::Param(format!(
                    "subset size {n} outside 1..={test_len}"
                )));
            }
        }
        Ok(())
    }
}

/// One evaluated sweep point.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub sweep: String,
    /// Curve this point belongs to in the plot.
    pub series: String,
    /// Swept value as printed.
    pub value: String,
    pub norm: NormMode,
    pub sparse: Option<SparseMode>,
    pub n2: Option<usize>,
    pub keep_fraction: Option<f64>,
    pub kuramoto: Option<KuramotoParams>,
    pub balance: bool,
    pub subset_size: usize,
    pub seed: u64,
    pub accuracy: f64,
    pub per_class: Vec<f64>,
    pub wall_time_s: f64,
    /// Seconds since the Unix epoch when the point finished.
    pub timestamp: u64,
}

fn now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}

/// Seeded subset whose per-class counts follow the full set's proportions
/// (largest remainder, ties to the lower class). Indices come back sorted.
pub fn stratified_subset(images: &[BipolarImage], n: usize, seed: u64) -> Result<Vec<usize>> {
    if n > images.len() {
        return Err(Error::Param(format!(
            "subset of {n} from {} images",
            images.len()
        )));
    }
    let labels = labels_of(images, usize::MAX)?;
    let n_classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut members = vec![Vec::new(); n_classes];
    for (i, &y) in labels.iter().enumerate() {
        members[y].push(i);
    }
    let total = images.len() as u128;
    let mut quota: Vec<usize> = members
        .iter()
        .map(|m| (m.len() as u128 * n as u128 / total.max(1)) as usize)
        .collect();
    let mut rem: Vec<(u128, usize)> = members
        .iter()
        .enumerate()
        .map(|(k, m)| ((m.len() as u128 * n as u128) % total.max(1), k))
        .collect();
    rem.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    let short = n - quota.iter().sum::<usize>();
    for &(_, k) in rem.iter().take(short) {
        quota[k] += 1;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    for (m, &q) in members.iter().zip(&quota) {
        out.extend(sample(&mut rng, m.len(), q).into_iter().map(|i| m[i]));
    }
    out.sort_unstable();
    Ok(out)
}

fn test_set(test: &[BipolarImage], spec: &SweepSpec) -> Result<Vec<BipolarImage>> {
    spec.validate(test.len())?;
    Ok(match spec.subset {
        Some(n) if n < test.len() => stratified_subset(test, n, spec.seed)?
            .into_iter()
            .map(|i| test[i].clone())
            .collect(),
        _ => test.to_vec(),
    })
}

struct Point {
    series: String,
    value: String,
    norm: NormMode,
    sparse: Option<SparseMode>,
    n2: Option<usize>,
    keep_fraction: Option<f64>,
}

fn record(spec: &SweepSpec, pt: Point, eval: &Evaluation, started: Instant, subset_size: usize) -> RunRecord {
    RunRecord {
        sweep: spec.name.clone(),
        series: pt.series,
        value: pt.value,
        norm: pt.norm,
        sparse: pt.sparse,
        n2: pt.n2,
        keep_fraction: pt.keep_fraction,
        kuramoto: pt.keep_fraction.map(|_| spec.kuramoto.clone()),
        balance: spec.balance,
        subset_size,
        seed: spec.seed,
        accuracy: eval.accuracy(),
        per_class: eval.per_class_accuracy(),
        wall_time_s: started.elapsed().as_secs_f64(),
        timestamp: now(),
    }
}

/// Normalize, keep the `n2` strongest neighbours per row, evaluate; one
/// record per `(n2, mode)`.
pub fn sweep_sparsity_discrete(
    acc: &ClassWeightTensor,
    test: &[BipolarImage],
    spec: &SweepSpec,
) -> Result<Vec<RunRecord>> {
    let SweepVar::N2 { values, modes } = &spec.var else {
        return Err(Error::Param("discrete sparsity sweep needs an n2 list".into()));
    };
    let test = test_set(test, spec)?;
    let model = normalize(acc, spec.norm, spec.balance)?;
    let cells: Vec<(SparseMode, usize)> = modes
        .iter()
        .flat_map(|&m| values.iter().map(move |&n2| (m, n2)))
        .collect();
    cells
        .par_iter()
        .map(|&(mode, n2)| {
            let started = Instant::now();
            let mask = sparsify(&model, mode, n2)?;
            let eval = evaluate(&test, &apply_mask(&model, &mask)?)?;
            let pt = Point {
                series: mode.to_string(),
                value: n2.to_string(),
                norm: spec.norm,
                sparse: Some(mode),
                n2: Some(n2),
                keep_fraction: None,
            };
            Ok(record(spec, pt, &eval, started, test.len()))
        })
        .collect()
}

/// Each normalization mode at the sweep's fixed sparsity.
pub fn sweep_norm_ablation(
    acc: &ClassWeightTensor,
    test: &[BipolarImage],
    spec: &SweepSpec,
) -> Result<Vec<RunRecord>> {
    let SweepVar::Norm(modes) = &spec.var else {
        return Err(Error::Param("normalization sweep needs a mode list".into()));
    };
    let test = test_set(test, spec)?;
    modes
        .par_iter()
        .map(|&norm| {
            let started = Instant::now();
            let model = normalize(acc, norm, spec.balance)?;
            let mask = sparsify(&model, spec.sparse, spec.n2)?;
            let eval = evaluate(&test, &apply_mask(&model, &mask)?)?;
            let pt = Point {
                series: format!("{}-{}", spec.sparse, spec.n2),
                value: norm.to_string(),
                norm,
                sparse: Some(spec.sparse),
                n2: Some(spec.n2),
                keep_fraction: None,
            };
            Ok(record(spec, pt, &eval, started, test.len()))
        })
        .collect()
}

/// Prune oscillator pairs to each keep fraction, then classify by running
/// the phase dynamics under every class.
pub fn sweep_sparsity_kuramoto(
    acc: &ClassWeightTensor,
    test: &[BipolarImage],
    spec: &SweepSpec,
) -> Result<Vec<RunRecord>> {
    let SweepVar::KeepFraction(fracs) = &spec.var else {
        return Err(Error::Param("oscillator sweep needs a keep-fraction list".into()));
    };
    let test = test_set(test, spec)?;
    let model = normalize(acc, spec.norm, spec.balance)?;
    let labels = labels_of(&test, model.n_classes)?;
    // Points run one after another; each already saturates the pool.
    let mut out = Vec::with_capacity(fracs.len());
    for &rho in fracs {
        let started = Instant::now();
        let pruned = sparsify_model_coupling(&model, rho)?;
        let couplings = class_couplings(&pruned)?;
        let reports = test
            .par_iter()
            .map(|s| classify_with_couplings(s, &couplings, &spec.kuramoto))
            .collect::<Result<Vec<_>>>()?;
        let eval = tally(model.n_classes, &labels, reports)?;
        let pt = Point {
            series: "kuramoto".into(),
            value: rho.to_string(),
            norm: spec.norm,
            sparse: None,
            n2: None,
            keep_fraction: Some(rho),
        };
        out.push(record(spec, pt, &eval, started, test.len()));
    }
    Ok(out)
}

/// Dispatches on the sweep variable.
pub fn run_sweep(acc: &ClassWeightTensor, test: &[BipolarImage], spec: &SweepSpec) -> Result<Vec<RunRecord>> {
    match spec.var {
        SweepVar::N2 { .. } => sweep_sparsity_discrete(acc, test, spec),
        SweepVar::Norm(_) => sweep_norm_ablation(acc, test, spec),
        SweepVar::KeepFraction(_) => sweep_sparsity_kuramoto(acc, test, spec),
    }
}

fn opt<T: ToString>(x: &Option<T>) -> String {
    x.as_ref().map(T::to_string).unwrap_or_default()
}

fn to_csv(header: Vec<String>, rows: Vec<Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in std::iter::once(header).chain(rows) {
        w.write_record(&row).expect("writing to memory");
    }
    String::from_utf8(w.into_inner().expect("writing to memory")).expect("fields are UTF-8")
}

/// Results table. Holds only values that are reproducible from the
/// configuration, so identical runs give identical bytes.
pub fn records_csv(records: &[RunRecord]) -> String {
    let n_classes = records.iter().map(|r| r.per_class.len()).max().unwrap_or(0);
    let mut header: Vec<String> = [
        "sweep", "series", "value", "norm", "sparse", "n2", "keep_fraction", "eps_scale", "dt_scale", "balance",
        "subset_size", "seed", "accuracy",
    ]
    .map(String::from)
    .to_vec();
    header.extend((0..n_classes).map(|k| format!("acc_class_{k}")));
    let rows = records
        .iter()
        .map(|r| {
            let mut row = vec![
                r.sweep.clone(),
                r.series.clone(),
                r.value.clone(),
                r.norm.to_string(),
                opt(&r.sparse),
                opt(&r.n2),
                opt(&r.keep_fraction),
                opt(&r.kuramoto.as_ref().map(|k| k.eps_scale)),
                opt(&r.kuramoto.as_ref().map(|k| k.dt_scale)),
                r.balance.to_string(),
                r.subset_size.to_string(),
                r.seed.to_string(),
                r.accuracy.to_string(),
            ];
            row.extend((0..n_classes).map(|k| opt(&r.per_class.get(k))));
            row
        })
        .collect();
    to_csv(header, rows)
}

/// Wall time and finish time per record, kept apart from the results.
pub fn timing_csv(records: &[RunRecord]) -> String {
    let header = ["sweep", "series", "value", "wall_time_s", "timestamp"].map(String::from).to_vec();
    let rows = records
        .iter()
        .map(|r| {
            vec![
                r.sweep.clone(),
                r.series.clone(),
                r.value.clone(),
                format!("{:.3}", r.wall_time_s),
                r.timestamp.to_string(),
            ]
        })
        .collect();
    to_csv(header, rows)
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

/// Accuracy against the swept value, one polyline per series. Numeric values
/// get a linear axis; anything else is spaced evenly in first-seen order.
pub fn plot_svg(records: &[RunRecord]) -> Result<String> {
    if records.is_empty() {
        return Err(Error::Empty("records"));
    }
    let (w, h) = (640.0, 420.0);
    let (left, right, top, bottom) = (70.0, 150.0, 40.0, 60.0);
    let (pw, ph) = (w - left - right, h - top - bottom);

    let numeric: Option<Vec<f64>> = records.iter().map(|r| r.value.parse::<f64>().ok()).collect();
    let mut categories: Vec<&str> = Vec::new();
    for r in records {
        if !categories.contains(&r.value.as_str()) {
            categories.push(&r.value);
        }
    }
    let xs: Vec<f64> = match &numeric {
        Some(v) => v.clone(),
        None => records
            .iter()
            .map(|r| categories.iter().position(|c| *c == r.value).unwrap() as f64)
            .collect(),
    };
    let (mut x0, mut x1) = xs.iter().fold((f64::MAX, f64::MIN), |(a, b), &x| (a.min(x), b.max(x)));
    if x1 - x0 < 1e-12 {
        x0 -= 0.5;
        x1 += 0.5;
    }
    let ys: Vec<f64> = records.iter().map(|r| 100.0 * r.accuracy).collect();
    let (mut y0, mut y1) = ys.iter().fold((f64::MAX, f64::MIN), |(a, b), &y| (a.min(y), b.max(y)));
    let pad = ((y1 - y0) * 0.1).max(1.0);
    y0 = (y0 - pad).max(0.0).floor();
    y1 = (y1 + pad).min(100.0).ceil();
    let sx = |x: f64| left + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| top + (1.0 - (y - y0) / (y1 - y0)) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
        left + pw / 2.0,
        esc(&records[0].sweep)
    );
    let _ = writeln!(
        s,
        r#"<path d="M{left},{top} V{} H{}" fill="none" stroke="black"/>"#,
        top + ph,
        left + pw
    );
    for t in 0..=5 {
        let y = y0 + (y1 - y0) * t as f64 / 5.0;
        let py = sy(y);
        let _ = writeln!(
            s,
            r##"<line x1="{}" y1="{py:.1}" x2="{left}" y2="{py:.1}" stroke="black"/><line x1="{left}" y1="{py:.1}" x2="{}" y2="{py:.1}" stroke="#ddd"/><text x="{}" y="{:.1}" text-anchor="end">{y:.1}</text>"##,
            left - 5.0,
            left + pw,
            left - 8.0,
            py + 4.0
        );
    }
    let ticks: Vec<(f64, String)> = match &numeric {
        Some(_) => {
            let mut t: Vec<(f64, String)> = Vec::new();
            for (x, r) in xs.iter().zip(records) {
                if !t.iter().any(|(v, _)| v == x) {
                    t.push((*x, r.value.clone()));
                }
            }
            t
        }
        None => categories.iter().enumerate().map(|(i, c)| (i as f64, c.to_string())).collect(),
    };
    for (x, label) in &ticks {
        let px = sx(*x);
        let _ = writeln!(
            s,
            r#"<line x1="{px:.1}" y1="{}" x2="{px:.1}" y2="{}" stroke="black"/><text x="{px:.1}" y="{}" text-anchor="middle">{}</text>"#,
            top + ph,
            top + ph + 5.0,
            top + ph + 20.0,
            esc(label)
        );
    }
    let xlabel = match (&records[0].n2, &records[0].keep_fraction) {
        (_, Some(_)) => "fraction of oscillator pairs kept",
        _ if numeric.is_some() => "neighbours kept per pixel (n2)",
        _ => "normalization",
    };
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">{xlabel}</text>"#,
        left + pw / 2.0,
        h - 15.0
    );
    let _ = writeln!(
        s,
        r#"<text transform="translate(20,{}) rotate(-90)" text-anchor="middle">accuracy (%)</text>"#,
        top + ph / 2.0
    );

    let mut series: Vec<&str> = Vec::new();
    for r in records {
        if !series.contains(&r.series.as_str()) {
            series.push(&r.series);
        }
    }
    for (n, name) in series.iter().enumerate() {
        let colour = PALETTE[n % PALETTE.len()];
        let mut pts: Vec<(f64, f64)> = records
            .iter()
            .enumerate()
            .filter(|(_, r)| r.series == *name)
            .map(|(i, _)| (sx(xs[i]), sy(ys[i])))
            .collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        let coords: Vec<String> = pts.iter().map(|(x, y)| format!("{x:.1},{y:.1}")).collect();
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="{colour}" stroke-width="2"/>"#,
            coords.join(" ")
        );
        for (x, y) in &pts {
            let _ = writeln!(s, r#"<circle cx="{x:.1}" cy="{y:.1}" r="3" fill="{colour}"/>"#);
        }
        let ly = top + 10.0 + 18.0 * n as f64;
        let _ = writeln!(
            s,
            r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{colour}" stroke-width="2"/><text x="{}" y="{}">{}</text>"#,
            left + pw + 15.0,
            left + pw + 35.0,
            left + pw + 40.0,
            ly + 4.0,
            esc(name)
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

/// Writes `<name>.csv`, `<name>_timing.csv` and `<name>.svg` under `dir`.
pub fn emit_report(records: &[RunRecord], dir: impl AsRef<Path>, name: &str) -> Result<Vec<PathBuf>> {
    if records.is_empty() {
        return Err(Error::Empty("records"));
    }
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let files = [
        (dir.join(format!("{name}.csv")), records_csv(records)),
        (dir.join(format!("{name}_timing.csv")), timing_csv(records)),
        (dir.join(format!("{name}.svg")), plot_svg(records)?),
    ];
    let mut out = Vec::new();
    for (path, body) in files {
        write_file(&path, body.as_bytes())?;
        out.push(path);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hebbian::accumulate;
    use rand::Rng;

    /// Three noisy class templates on 16 pixels.
    fn synthetic(n: usize, seed: u64) -> Vec<BipolarImage> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                let k = if i % 7 == 0 { 2 } else { i % 2 };
                let bits: Vec<bool> = (0..16)
                    .map(|j| ((j / 4 + k) % 3 == 0) ^ (rng.gen::<f64>() < 0.1))
                    .collect();
                BipolarImage::from_bits(bits, Some(k))
            })
            .collect()
    }

    #[test]
    fn stratified_subset_follows_proportions() {
        let images = synthetic(700, 1);
        let idx = stratified_subset(&images, 70, 9).unwrap();
        assert_eq!(idx.len(), 70);
        assert!(idx.windows(2).all(|w| w[0] < w[1]));
        let mut counts = [0usize; 3];
        for &i in &idx {
            counts[images[i].label.unwrap()] += 1;
        }
        assert_eq!(counts, [30, 30, 10]);
        assert_eq!(stratified_subset(&images, 70, 9).unwrap(), idx);
        assert_ne!(stratified_subset(&images, 70, 10).unwrap(), idx);
        assert!(stratified_subset(&images, 701, 0).is_err());
    }

    #[test]
    fn subset_remainders_go_to_largest_fraction() {
        let images = synthetic(14, 2); // 6, 6, 2
        let idx = stratified_subset(&images, 5, 0).unwrap();
        let mut counts = [0usize; 3];
        for &i in &idx {
            counts[images[i].label.unwrap()] += 1;
        }
        // exact shares 2.14, 2.14, 0.71
        assert_eq!(counts, [2, 2, 1]);
    }

    #[test]
    fn neighbour_grid_cardinality_and_saturation() {
        let train = synthetic(300, 3);
        let test = synthetic(60, 4);
        let acc = accumulate(&train, 3).unwrap();
        let spec = SweepSpec {
            var: SweepVar::N2 {
                values: vec![2, 4, 8, 14],
                modes: vec![SparseMode::Top, SparseMode::TopAbs],
            },
            ..SweepSpec::table2()
        };
        let recs = sweep_sparsity_discrete(&acc, &test, &spec).unwrap();
        assert_eq!(recs.len(), 8);
        assert_eq!(recs[0].series, "top");
        assert_eq!(recs[7].value, "14");

        let spec = SweepSpec {
            var: SweepVar::N2 {
                values: vec![15],
                modes: vec![SparseMode::TopAbs],
            },
            ..SweepSpec::table2()
        };
        let full = evaluate(&test, &normalize(&acc, NormMode::Both, false).unwrap()).unwrap();
        let rec = &sweep_sparsity_discrete(&acc, &test, &spec).unwrap()[0];
        assert_eq!(rec.accuracy, full.accuracy());
        assert!((0.0..=1.0).contains(&rec.accuracy));
    }

    #[test]
    fn sweeps_are_reproducible() {
        let train = synthetic(200, 5);
        let test = synthetic(40, 6);
        let acc = accumulate(&train, 3).unwrap();
        let spec = SweepSpec {
            n2: 6,
            ..SweepSpec::table4()
        };
        let a = records_csv(&sweep_norm_ablation(&acc, &test, &spec).unwrap());
        let b = records_csv(&sweep_norm_ablation(&acc, &test, &spec).unwrap());
        assert_eq!(a, b);
        assert_eq!(a.lines().count(), 5);

        let spec = SweepSpec {
            var: SweepVar::KeepFraction(vec![0.3, 1.0]),
            ..SweepSpec::fig8(Some(21), 3)
        };
        let r1 = sweep_sparsity_kuramoto(&acc, &test, &spec).unwrap();
        let r2 = sweep_sparsity_kuramoto(&acc, &test, &spec).unwrap();
        assert_eq!(records_csv(&r1), records_csv(&r2));
        assert!(r1.iter().all(|r| r.subset_size == 21));
    }

    #[test]
    fn invalid_specs_rejected() {
        let acc = accumulate(&synthetic(30, 7), 3).unwrap();
        let test = synthetic(10, 8);
        let empty = SweepSpec {
            var: SweepVar::Norm(vec![]),
            ..SweepSpec::table4()
        };
        assert!(sweep_norm_ablation(&acc, &test, &empty).is_err());
        let too_big = SweepSpec::fig8(Some(11), 0);
        assert!(sweep_sparsity_kuramoto(&acc, &test, &too_big).is_err());
        assert!(sweep_sparsity_discrete(&acc, &test, &SweepSpec::table4()).is_err());
    }

    fn rec(series: &str, value: &str, accuracy: f64) -> RunRecord {
        RunRecord {
            sweep: "t".into(),
            series: series.into(),
            value: value.into(),
            norm: NormMode::Both,
            sparse: None,
            n2: None,
            keep_fraction: None,
            kuramoto: None,
            balance: false,
            subset_size: 10,
            seed: 0,
            accuracy,
            per_class: vec![accuracy, 1.0],
            wall_time_s: 0.5,
            timestamp: 1,
        }
    }

    #[test]
    fn report_files() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(emit_report(&[], dir.path(), "x"), Err(Error::Empty(_))));
        let recs = vec![rec("a", "1", 0.5), rec("a", "2", 0.75), rec("b", "1", 0.6)];
        let files = emit_report(&recs, dir.path().join("sub"), "x").unwrap();
        assert_eq!(files.len(), 3);
        let csv = std::fs::read_to_string(&files[0]).unwrap();
        assert_eq!(csv.lines().count(), 4);
        assert!(csv.lines().nth(1).unwrap().ends_with(",0.5,0.5,1"));
        let svg = std::fs::read_to_string(&files[2]).unwrap();
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert_eq!(svg.matches("<circle").count(), 3);
    }

    #[test]
    fn categorical_axis() {
        let recs = vec![rec("s", "none", 0.1), rec("s", "pixel", 0.7), rec("s", "both", 0.8)];
        let svg = plot_svg(&recs).unwrap();
        assert!(svg.contains(">pixel<") && svg.contains(">normalization<"));
    }

    #[test]
    fn unwritable_report_path() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("plain");
        std::fs::write(&file, b"x").unwrap();
        assert!(emit_report(&[rec("a", "1", 0.5)], &file, "r").is_err());
    }
}
