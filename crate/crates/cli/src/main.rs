use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, ensure, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use oscnet::bench::{emit_report, run_sweep, SweepSpec, DEFAULT_SUBSET};
use oscnet::data::{
    encode_pgm, encode_prototypes, load_prototypes, write_file, BipolarImage, Dataset, Prototype, Split,
    DATA_DIR_ENV, DEFAULT_THRESHOLD,
};
use oscnet::energy::{evaluate, tally, Evaluation};
use oscnet::hebbian::{accumulate, normalize, sparsify, NormMode, SparseMode};
use oscnet::kuramoto::{
    add_noise, class_couplings, classify_with_couplings, decode, run, Coupling, KuramotoParams, Noise, Start, Trace,
};
use oscnet::model_io::{load_model, save_model, Model};
use oscnet::tournament::{build_pair_model, Tournament};

#[derive(Parser)]
#[command(name = "oscnet", version, about = "Hebbian Hopfield classifiers with oscillator inference")]
struct Cli {
    /// Directory holding the four MNIST IDX files.
    #[arg(long, global = true, env = DATA_DIR_ENV, default_value = "data/mnist")]
    data_dir: PathBuf,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Accumulate, normalize and optionally prune per-class weights.
    Train(TrainArgs),
    /// Classify a labeled set and write per-image energies.
    Eval(EvalArgs),
    /// Integrate the oscillator network for one image under one class.
    Simulate(SimulateArgs),
    /// Denoise a corrupted pattern with a two-prototype network.
    Recover(RecoverArgs),
    /// Ten-class decisions by cascaded two-class matches.
    Tournament(TournamentArgs),
    /// Accuracy sweeps with CSV and SVG reports.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct DataArgs {
    /// IDX image file (defaults to the split inside --data-dir).
    #[arg(long)]
    images: Option<PathBuf>,
    /// IDX label file (defaults to the split inside --data-dir).
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Pixels at or above this byte value become +1.
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    threshold: u8,
}

impl DataArgs {
    fn load(&self, data_dir: &Path, split: Split, n_classes: usize) -> Result<Dataset> {
        let (img, lab) = split.file_names();
        let images = self.images.clone().unwrap_or_else(|| data_dir.join(img));
        let labels = self.labels.clone().unwrap_or_else(|| data_dir.join(lab));
        Dataset::load(&images, &labels, self.threshold, n_classes)
            .with_context(|| format!("loading {} / {}", images.display(), labels.display()))
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SparseArg {
    None,
    Top,
    Topabs,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value_t = 10)]
    classes: usize,
    /// none, class, pixel or both.
    #[arg(long, default_value = "both")]
    norm: NormMode,
    #[arg(long, value_enum, default_value_t = SparseArg::None)]
    sparse: SparseArg,
    /// Connections kept per pixel when pruning.
    #[arg(long, default_value_t = 84)]
    n2: usize,
    /// Divide each class by its image count before normalizing.
    #[arg(long)]
    balance: bool,
    #[arg(long)]
    out: PathBuf,
    /// Also write the class prototypes as an IDX image file.
    #[arg(long)]
    protos_out: Option<PathBuf>,
}

#[derive(Args)]
struct DynamicsArgs {
    /// Injection strength relative to the largest absolute row sum.
    #[arg(long)]
    eps_scale: Option<f64>,
    /// Step size times (row sum + injection strength).
    #[arg(long)]
    dt_scale: Option<f64>,
    #[arg(long)]
    max_steps: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl DynamicsArgs {
    fn params(&self, mut base: KuramotoParams) -> KuramotoParams {
        if let Some(e) = self.eps_scale {
            base.eps_scale = e;
        }
        if let Some(d) = self.dt_scale {
            base.dt_scale = d;
        }
        if let Some(m) = self.max_steps {
            base.max_steps = m;
        }
        base.seed = self.seed;
        base
    }
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    /// Only the first N images.
    #[arg(long)]
    limit: Option<usize>,
    /// Relax each image with the oscillator dynamics before scoring.
    #[arg(long)]
    kuramoto: bool,
    #[command(flatten)]
    dynamics: DynamicsArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    image_index: usize,
    /// Class network to run under (defaults to the image's label).
    #[arg(long)]
    class: Option<usize>,
    /// Fraction of spins flipped before encoding.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[command(flatten)]
    dynamics: DynamicsArgs,
    #[arg(long)]
    trace: PathBuf,
    /// Record every phase at each sample.
    #[arg(long)]
    full_trace: bool,
}

#[derive(Args)]
struct ProtoArgs {
    /// Prototype IDX file from `train --protos-out`; computed from the
    /// training split when omitted.
    #[arg(long)]
    protos: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    train_threshold: u8,
    #[arg(long, default_value_t = 10)]
    classes: usize,
}

impl ProtoArgs {
    fn load(&self, data_dir: &Path) -> Result<(usize, usize, Vec<Prototype>)> {
        match &self.protos {
            Some(p) => load_prototypes(p).with_context(|| format!("loading prototypes {}", p.display())),
            None => {
                let train = Dataset::load_split(data_dir, Split::Train, self.train_threshold, self.classes)
                    .with_context(|| format!("loading training split from {}", data_dir.display()))?;
                Ok((train.rows, train.cols, train.prototypes(self.classes)?))
            }
        }
    }
}

#[derive(Args)]
struct RecoverArgs {
    #[command(flatten)]
    protos: ProtoArgs,
    /// The two stored classes, e.g. `0,1`.
    #[arg(long, value_delimiter = ',', default_values_t = [0, 1])]
    pair: Vec<usize>,
    /// Corrupt the prototype of this class (defaults to the first of --pair).
    #[arg(long, conflicts_with = "image_index")]
    digit: Option<usize>,
    /// Start from this test image instead of a prototype.
    #[arg(long)]
    image_index: Option<usize>,
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value_t = 0.1)]
    noise: f64,
    #[command(flatten)]
    dynamics: DynamicsArgs,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct TournamentArgs {
    #[command(flatten)]
    protos: ProtoArgs,
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    limit: Option<usize>,
    /// Match order as prototype indices; the first is the opening champion.
    #[arg(long, value_delimiter = ',')]
    order: Option<Vec<usize>>,
    #[command(flatten)]
    dynamics: DynamicsArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum SweepKind {
    Table2,
    Table4,
    Fig8,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(value_enum)]
    kind: SweepKind,
    /// Raw (unnormalized, unpruned) model from `train --norm none`.
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    out: PathBuf,
    /// Use every test image for the oscillator sweep.
    #[arg(long)]
    full: bool,
    #[arg(long, default_value_t = DEFAULT_SUBSET)]
    subset: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let dir = cli.data_dir.as_path();
    match cli.cmd {
        Cmd::Train(a) => train(dir, a),
        Cmd::Eval(a) => eval(dir, a),
        Cmd::Simulate(a) => simulate(dir, a),
        Cmd::Recover(a) => recover(dir, a),
        Cmd::Tournament(a) => tournament(dir, a),
        Cmd::Sweep(a) => sweep(dir, a),
    }
}

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))
}

fn limited(images: &[BipolarImage], limit: Option<usize>) -> &[BipolarImage] {
    &images[..limit.unwrap_or(images.len()).min(images.len())]
}

fn train(dir: &Path, a: TrainArgs) -> Result<()> {
    let started = Instant::now();
    let data = a.data.load(dir, Split::Train, a.classes)?;
    let acc = accumulate(&data.images, a.classes)?;
    let model = if a.norm == NormMode::None && matches!(a.sparse, SparseArg::None) && !a.balance {
        Model::raw(&acc)
    } else {
        let tensor = normalize(&acc, a.norm, a.balance)?;
        let mask = match a.sparse {
            SparseArg::None => None,
            SparseArg::Top => Some(sparsify(&tensor, SparseMode::Top, a.n2)?),
            SparseArg::Topabs => Some(sparsify(&tensor, SparseMode::TopAbs, a.n2)?),
        };
        Model {
            tensor,
            mask,
            counts: acc.counts().to_vec(),
        }
    };
    save_model(&model, &a.out)?;
    if let Some(p) = &a.protos_out {
        write_file(p, &encode_prototypes(data.rows, data.cols, &data.prototypes(a.classes)?)?)?;
    }
    println!(
        "trained on {} images ({} classes, {} pixels) in {:.1}s -> {}",
        data.len(),
        a.classes,
        data.pixels(),
        started.elapsed().as_secs_f64(),
        a.out.display()
    );
    Ok(())
}

fn print_summary(eval: &Evaluation) {
    println!("accuracy {:.2}% ({}/{})", 100.0 * eval.accuracy(), eval.correct(), eval.total());
    let per: Vec<String> = eval
        .per_class_accuracy()
        .iter()
        .enumerate()
        .map(|(k, a)| format!("{k}:{:.1}", 100.0 * a))
        .collect();
    println!("per class {}", per.join(" "));
}

fn eval(dir: &Path, a: EvalArgs) -> Result<()> {
    let model = load_model(&a.model)?.effective()?;
    let data = a.data.load(dir, Split::Test, model.n_classes)?;
    let images = limited(&data.images, a.limit);
    let result = if a.kuramoto {
        let params = a.dynamics.params(KuramotoParams::classification());
        let couplings = class_couplings(&model)?;
        let reports = images
            .iter()
            .map(|s| classify_with_couplings(s, &couplings, &params))
            .collect::<oscnet::Result<Vec<_>>>()?;
        let labels: Vec<usize> = images.iter().map(|s| s.label.expect("loaded with labels")).collect();
        tally(model.n_classes, &labels, reports)?
    } else {
        evaluate(images, &model)?
    };
    let mut w = csv_writer(&a.out)?;
    let mut header = vec!["image_index".to_string(), "true_label".into(), "predicted".into()];
    header.extend((0..model.n_classes).map(|k| format!("energy_{k}")));
    header.push("margin".into());
    w.write_record(&header)?;
    for (i, (img, r)) in images.iter().zip(&result.reports).enumerate() {
        let mut row = vec![i.to_string(), img.label.map(|l| l.to_string()).unwrap_or_default(), r.predicted.to_string()];
        row.extend(r.energies.iter().map(f64::to_string));
        row.push(r.margin.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    print_summary(&result);
    Ok(())
}

fn write_trace(path: &Path, trace: &Trace) -> Result<()> {
    let mut w = csv_writer(path)?;
    let p = trace.phases.as_ref().and_then(|ph| ph.first()).map_or(0, Vec::len);
    let mut header = vec!["step".to_string(), "t".into(), "energy".into()];
    header.extend((0..p).map(|i| format!("theta_{i}")));
    w.write_record(&header)?;
    for n in 0..trace.steps.len() {
        let mut row = vec![trace.steps[n].to_string(), trace.times[n].to_string(), trace.energies[n].to_string()];
        if let Some(ph) = &trace.phases {
            row.extend(ph[n].iter().map(f64::to_string));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn hamming(a: &BipolarImage, b: &BipolarImage) -> usize {
    a.spins().iter().zip(b.spins()).filter(|(x, y)| x != y).count()
}

fn simulate(dir: &Path, a: SimulateArgs) -> Result<()> {
    let model = load_model(&a.model)?.effective()?;
    let data = a.data.load(dir, Split::Test, model.n_classes)?;
    let img = data
        .images
        .get(a.image_index)
        .with_context(|| format!("image index {} out of range ({} images)", a.image_index, data.len()))?;
    let class = a.class.or(img.label).context("no class given and the image is unlabeled")?;
    ensure!(class < model.n_classes, "class {class} not in model ({} classes)", model.n_classes);
    let coupling = Coupling::from_dense(model.pixels, model.class(class))?;
    let mut params = a.dynamics.params(KuramotoParams::classification());
    params.record_phases = a.full_trace;
    let config = params.config_for(&coupling);
    let noise = (a.noise > 0.0).then_some(Noise {
        fraction: a.noise,
        seed: a.dynamics.seed,
    });
    let (state, trace) = run(Start::Image(img), &coupling, &config, noise)?;
    write_trace(&a.trace, &trace)?;
    let out = decode(&state);
    println!(
        "class {class}: {} after {} steps (t = {:.4}), energy {:.4} -> {:.4}, {} spins differ from the clean image",
        if trace.converged { "converged" } else { "stopped" },
        trace.steps_used,
        state.t,
        trace.energies[0],
        trace.final_energy().unwrap_or(f64::NAN),
        hamming(&out, img)
    );
    Ok(())
}

fn recover(dir: &Path, a: RecoverArgs) -> Result<()> {
    ensure!(a.pair.len() == 2, "--pair takes exactly two classes, got {:?}", a.pair);
    let (rows, cols, protos) = a.protos.load(dir)?;
    let find = |k: usize| {
        protos
            .iter()
            .find(|p| p.class_id == k)
            .with_context(|| format!("no prototype for class {k}"))
    };
    let (pa, pb) = (find(a.pair[0])?, find(a.pair[1])?);
    let pm = build_pair_model(pa, pb)?;
    let coupling = pm.coupling()?;
    let clean = match a.image_index {
        Some(i) => {
            let data = a.data.load(dir, Split::Test, a.protos.classes)?;
            data.images.get(i).cloned().with_context(|| format!("image index {i} out of range"))?
        }
        None => find(a.digit.unwrap_or(a.pair[0]))?.to_image(),
    };
    let noisy = add_noise(
        &clean,
        Noise {
            fraction: a.noise,
            seed: a.dynamics.seed,
        },
    )?;
    let params = a.dynamics.params(KuramotoParams::default());
    let (state, trace) = run(Start::Image(&noisy), &coupling, &params.config_for(&coupling), None)?;
    let after = decode(&state);
    std::fs::create_dir_all(&a.out_dir).with_context(|| format!("creating {}", a.out_dir.display()))?;
    let files = [("clean.pgm", &clean), ("before.pgm", &noisy), ("after.pgm", &after)];
    for (name, img) in files {
        write_file(a.out_dir.join(name), &encode_pgm(img, rows, cols)?)?;
    }
    write_trace(&a.out_dir.join("trace.csv"), &trace)?;
    println!(
        "{} flipped spins -> {} after {} steps ({}); distance to {} = {}, to {} = {}",
        hamming(&noisy, &clean),
        hamming(&after, &clean),
        trace.steps_used,
        if trace.converged { "converged" } else { "not converged" },
        pa.class_id,
        hamming(&after, &pa.to_image()),
        pb.class_id,
        hamming(&after, &pb.to_image())
    );
    Ok(())
}

fn tournament(dir: &Path, a: TournamentArgs) -> Result<()> {
    let (_, _, protos) = a.protos.load(dir)?;
    let data = a.data.load(dir, Split::Test, protos.len())?;
    let images = limited(&data.images, a.limit);
    ensure!(!images.is_empty(), "no test images");
    let params = a.dynamics.params(KuramotoParams::default());
    let t = Tournament::new(&protos, a.order.as_deref(), params)?;
    let results = t.run_all(images)?;
    let rounds = results[0].rounds.len();
    let mut w = csv_writer(&a.out)?;
    let mut header = vec!["image_index".to_string(), "true_label".into()];
    header.extend((1..=rounds).map(|r| format!("round_{r}_winner")));
    header.push("predicted".into());
    w.write_record(&header)?;
    let mut correct = 0;
    for (i, (img, r)) in images.iter().zip(&results).enumerate() {
        correct += usize::from(img.label == Some(r.winner));
        let mut row = vec![i.to_string(), img.label.map(|l| l.to_string()).unwrap_or_default()];
        row.extend(r.rounds.iter().map(|m| m.winner.to_string()));
        row.push(r.winner.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    println!(
        "tournament accuracy {:.2}% ({correct}/{})",
        100.0 * correct as f64 / images.len() as f64,
        images.len()
    );
    Ok(())
}

fn sweep(dir: &Path, a: SweepArgs) -> Result<()> {
    let acc = load_model(&a.model)?
        .to_accumulator()
        .context("sweeps start from a raw model (train --norm none --sparse none)")?;
    let data = a.data.load(dir, Split::Test, acc.n_classes())?;
    let (spec, name) = match a.kind {
        SweepKind::Table2 => (SweepSpec::table2(), "table2"),
        SweepKind::Table4 => (SweepSpec::table4(), "table4"),
        SweepKind::Fig8 => (SweepSpec::fig8((!a.full).then_some(a.subset), a.seed), "fig8"),
    };
    let spec = SweepSpec { seed: a.seed, ..spec };
    if matches!(a.kind, SweepKind::Fig8) && !a.full && a.subset > data.len() {
        bail!("subset {} larger than the test set ({})", a.subset, data.len());
    }
    let records = run_sweep(&acc, &data.images, &spec)?;
    for r in &records {
        println!("{:<8} {:>6}  {:6.2}%  ({:.1}s)", r.series, r.value, 100.0 * r.accuracy, r.wall_time_s);
    }
    for f in emit_report(&records, &a.out, name)? {
        println!("wrote {}", f.display());
    }
    Ok(())
}
