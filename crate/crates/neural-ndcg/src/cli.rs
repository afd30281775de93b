//! Command-line interface.
//!
//! Five subcommands: `train` (run a config file), `evaluate` (NDCG of a
//! checkpoint on a data file), `sort-demo` (the relaxed-sorting showcase
//! table), `sweep` (surrogate-vs-metric curves over a score grid), and
//! `gradcheck` (finite-difference validation of the loss gradients).
//!
//! Every run starts by printing its resolved settings, including the seed
//! where randomness is involved, so console output alone reproduces a run.
//! Errors surface as a single line on stderr with a nonzero exit code.

use std::fmt::Write as _;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{grad_check, Array};
use crate::data;
use crate::error::{Error, Result};
use crate::fmt::format_significant;
use crate::loss::{self, LossConfig, LossKind};
use crate::metrics::{ndcg_at_k, RankCutoff, RelevanceVector};
use crate::sorting::{exact_permutation_matrix, neural_sort};
use crate::train::{self, load_checkpoint, TrainConfig};
use crate::DEFAULT_SEED;

/// Documents of the sorting showcase: scores with their graded labels.
pub const DEMO_SCORES: [f64; 6] = [0.5, 0.2, 0.1, 0.01, 0.65, 0.3];
pub const DEMO_LABELS: [u32; 6] = [4, 2, 1, 0, 4, 3];
pub const DEMO_TEMPERATURES: [f64; 3] = [1.0, 0.1, 0.01];

/// Entries of the showcase table are displayed at five significant digits,
/// and each row's sum is the sum of the displayed entries, so the printed
/// numbers are self-consistent.
pub const DEMO_ENTRY_DIGITS: usize = 5;

#[derive(Parser)]
#[command(
    name = "neural-ndcg",
    version,
    about = "Differentiable learning-to-rank: train, evaluate, and inspect ranking losses"
)]
pub struct Cli {
    /// Significant digits for printed numbers and CSV values.
    #[arg(long, global = true, default_value_t = 6)]
    pub precision: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Train a model from a TOML config file.
    Train {
        /// Path to the config.
        #[arg(long)]
        config: PathBuf,
    },
    /// Mean NDCG of a saved model on a data file.
    Evaluate {
        /// Model checkpoint (JSON) written by `train`.
        #[arg(long)]
        model: PathBuf,
        /// Data file in the ranking format (optionally gzipped).
        #[arg(long)]
        data: PathBuf,
        /// Comma-separated rank cutoffs, e.g. 5,10,max.
        #[arg(long, default_value = "5,10,max")]
        k: String,
        /// Also write the results as CSV (metric,k,value).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Show relaxed sorting at work on a fixed six-document example.
    SortDemo {
        /// Also write the table as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Trace the surrogate and the exact metric while one score slides
    /// across a grid.
    Sweep {
        /// Which single-score slide to run.
        #[arg(long)]
        figure: Figure,
        /// Comma-separated temperatures (default 1).
        #[arg(long)]
        tau: Option<String>,
        /// Grid as lo:hi:count (defaults depend on the figure).
        #[arg(long, allow_hyphen_values = true)]
        grid: Option<String>,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare autodiff gradients against central finite differences on
    /// random instances.
    Gradcheck {
        /// Loss to check (any differentiable kind).
        #[arg(long)]
        loss: String,
        /// Documents per random instance.
        #[arg(long, default_value_t = 8)]
        n: usize,
        /// Number of random instances.
        #[arg(long, default_value_t = 10)]
        trials: usize,
        /// Temperature for the sorting-relaxation losses.
        #[arg(long, default_value_t = 1.0)]
        tau: f64,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
    },
}

/// The two single-score slides.
#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Figure {
    /// Labels [2,1,0,0,0], scores [4,1,0,0,x]: NDCG is piecewise constant
    /// in x while the surrogate moves smoothly.
    Fig1,
    /// Labels [1,2,3,4,5], scores [1,2,3,4,x]: x slides through the pack.
    Fig2,
}

impl Figure {
    fn labels(self) -> Vec<u32> {
        match self {
            Figure::Fig1 => vec![2, 1, 0, 0, 0],
            Figure::Fig2 => vec![1, 2, 3, 4, 5],
        }
    }

    fn base_scores(self) -> Vec<f64> {
        match self {
            Figure::Fig1 => vec![4.0, 1.0, 0.0, 0.0, 0.0],
            Figure::Fig2 => vec![1.0, 2.0, 3.0, 4.0, 0.0],
        }
    }

    fn default_grid(self) -> Grid {
        match self {
            Figure::Fig1 => Grid {
                lo: -1.0,
                hi: 5.0,
                count: 500,
            },
            Figure::Fig2 => Grid {
                lo: -5.0,
                hi: 10.0,
                count: 500,
            },
        }
    }

    fn name(self) -> &'static str {
        match self {
            Figure::Fig1 => "fig1",
            Figure::Fig2 => "fig2",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

impl Grid {
    pub fn parse(text: &str) -> Result<Self> {
        let parts: Vec<&str> = text.split(':').collect();
        let err = || Error::invalid(format!("grid {text:?} is not lo:hi:count"));
        if parts.len() != 3 {
            return Err(err());
        }
        let lo: f64 = parts[0].parse().map_err(|_| err())?;
        let hi: f64 = parts[1].parse().map_err(|_| err())?;
        let count: usize = parts[2].parse().map_err(|_| err())?;
        if !lo.is_finite() || !hi.is_finite() || hi <= lo {
            return Err(Error::invalid(format!(
                "grid {text:?} needs finite lo < hi"
            )));
        }
        if count < 2 {
            return Err(Error::invalid("grid needs at least two points"));
        }
        Ok(Self { lo, hi, count })
    }

    pub fn points(&self) -> impl Iterator<Item = f64> + '_ {
        let step = (self.hi - self.lo) / (self.count - 1) as f64;
        (0..self.count).map(move |i| self.lo + step * i as f64)
    }
}

fn parse_cutoffs(text: &str) -> Result<Vec<RankCutoff>> {
    let ks: Result<Vec<RankCutoff>> = text.split(',').map(|t| t.trim().parse()).collect();
    let ks = ks?;
    if ks.is_empty() {
        return Err(Error::invalid("no rank cutoffs given"));
    }
    Ok(ks)
}

fn parse_taus(text: &str) -> Result<Vec<f64>> {
    let taus: std::result::Result<Vec<f64>, _> =
        text.split(',').map(|t| t.trim().parse::<f64>()).collect();
    let taus = taus.map_err(|_| Error::invalid(format!("temperatures {text:?} must be numbers")))?;
    if taus.is_empty() || taus.iter().any(|&t| !(t > 0.0) || !t.is_finite()) {
        return Err(Error::invalid("temperatures must be positive numbers"));
    }
    Ok(taus)
}

/// Entry point: parse arguments and dispatch.
pub fn run() -> Result<()> {
    let cli = Cli::parse();
    if cli.precision < 1 || cli.precision > 17 {
        return Err(Error::invalid("precision must be between 1 and 17"));
    }
    match cli.command {
        Command::Train { config } => run_train(&config, cli.precision),
        Command::Evaluate {
            model,
            data,
            k,
            out,
        } => run_evaluate(&model, &data, &k, out.as_deref(), cli.precision),
        Command::SortDemo { csv } => run_sort_demo(csv.as_deref()),
        Command::Sweep {
            figure,
            tau,
            grid,
            out,
        } => run_sweep(figure, tau.as_deref(), grid.as_deref(), &out, cli.precision),
        Command::Gradcheck {
            loss,
            n,
            trials,
            tau,
            seed,
        } => run_gradcheck(&loss, n, trials, tau, seed, cli.precision),
    }
}

fn run_train(config_path: &std::path::Path, precision: usize) -> Result<()> {
    let config = TrainConfig::load(config_path)?;
    let resolved = toml::to_string_pretty(&config)
        .map_err(|e| Error::Config(format!("cannot render config: {e}")))?;
    println!("resolved configuration ({}):", config_path.display());
    for line in resolved.lines() {
        println!("  {line}");
    }
    println!("  # output activation resolves to {:?}", config.resolved_activation());
    println!("seed = {}", config.seed);

    let artifacts = train::train(&config)?;
    for r in &artifacts.outcome.history {
        println!(
            "epoch {:>3}/{}  loss {:>12}  valid ndcg@5 {}  ndcg@10 {}  ndcg@max {}  lr {}  ({:.3}s)",
            r.epoch,
            config.epochs,
            format_significant(r.loss, precision),
            format_significant(r.ndcg_at_5, precision),
            format_significant(r.ndcg_at_10, precision),
            format_significant(r.ndcg_at_max, precision),
            format_significant(r.lr, precision),
            r.seconds
        );
    }
    println!(
        "best epoch {} with validation ndcg@5 {}",
        artifacts.outcome.best_epoch,
        format_significant(artifacts.outcome.best_valid_ndcg_at_5, precision)
    );
    if let Some(test) = &artifacts.test_ndcg {
        for (k, v) in test {
            println!("test ndcg@{k} = {}", format_significant(*v, precision));
        }
    }
    println!("model -> {}", artifacts.model_path.display());
    println!("history -> {}", artifacts.history_path.display());
    Ok(())
}

fn run_evaluate(
    model: &std::path::Path,
    data_path: &std::path::Path,
    k_text: &str,
    out: Option<&std::path::Path>,
    precision: usize,
) -> Result<()> {
    let ks = parse_cutoffs(k_text)?;
    println!("resolved configuration:");
    println!("  model = {}", model.display());
    println!("  data = {}", data_path.display());
    println!(
        "  k = {}",
        ks.iter().map(|k| k.to_string()).collect::<Vec<_>>().join(",")
    );
    println!("  precision = {precision}");
    println!("seed: not used (evaluation is deterministic)");

    let (params, stats) = load_checkpoint::<f64>(model)?;
    let mut dataset = data::read_letor::<f64>(data_path)?;
    data::widen_features(&mut dataset, stats.feature_count())?;
    stats.apply(&mut dataset)?;
    let mut csv = String::from("metric,k,value\n");
    for k in &ks {
        let value = train::mean_ndcg(&params, &dataset, *k)?;
        println!("ndcg@{k} = {}", format_significant(value, precision));
        writeln!(csv, "ndcg,{k},{}", format_significant(value, precision))
            .expect("string write");
    }
    if let Some(path) = out {
        crate::error::io_context(std::fs::write(path, csv), path)?;
        println!("metrics -> {}", path.display());
    }
    Ok(())
}

/// Quasi-sorted relevance row for one temperature: the relaxed permutation
/// applied to the label vector. The raw relaxation is shown (no Sinkhorn
/// scaling), so row sums drift from Σy at high temperature — that drift is
/// part of what the table demonstrates.
pub fn demo_row(tau: f64) -> Result<Vec<f64>> {
    let labels: Vec<f64> = DEMO_LABELS.iter().map(|&l| l as f64).collect();
    let relaxed = neural_sort(&DEMO_SCORES, tau)?;
    Ok(relaxed
        .matrix()
        .matmul(&Array::col(&labels)?)
        .data()
        .to_vec())
}

fn displayed_row(values: &[f64]) -> (Vec<String>, f64, String) {
    let cells: Vec<String> = values
        .iter()
        .map(|&v| format_significant(v, DEMO_ENTRY_DIGITS))
        .collect();
    let sum: f64 = cells
        .iter()
        .map(|c| c.parse::<f64>().expect("formatted number"))
        .sum();
    let mut sum_text = format_significant(sum, 10);
    if sum_text.contains('.') {
        sum_text = sum_text
            .trim_end_matches('0')
            .trim_end_matches('.')
            .to_string();
    }
    (cells, sum, sum_text)
}

fn run_sort_demo(csv: Option<&std::path::Path>) -> Result<()> {
    println!("resolved configuration:");
    println!("  scores = {DEMO_SCORES:?}");
    println!("  labels = {DEMO_LABELS:?}");
    println!("  temperatures = {DEMO_TEMPERATURES:?}");
    println!(
        "  display = {DEMO_ENTRY_DIGITS} significant digits; sums run over the displayed entries"
    );
    println!("seed: not used (deterministic)");
    println!();
    println!("relevance labels carried to sorted positions by the relaxation:");

    let mut table: Vec<(String, Vec<String>, String)> = Vec::new();
    for &tau in &DEMO_TEMPERATURES {
        let (cells, _, sum_text) = displayed_row(&demo_row(tau)?);
        table.push((format!("{tau}"), cells, sum_text));
    }
    let labels: Vec<f64> = DEMO_LABELS.iter().map(|&l| l as f64).collect();
    let exact = exact_permutation_matrix(&DEMO_SCORES)?.matmul(&Array::col(&labels)?);
    let (cells, _, sum_text) = displayed_row(exact.data());
    table.push(("exact".into(), cells, sum_text));

    let mut header = vec!["tau".to_string()];
    header.extend((1..=DEMO_SCORES.len()).map(|i| format!("pos{i}")));
    header.push("sum".into());
    let mut rows: Vec<Vec<String>> = vec![header];
    for (tau, cells, sum) in &table {
        let mut row = vec![tau.clone()];
        row.extend(cells.iter().cloned());
        row.push(sum.clone());
        rows.push(row);
    }
    let widths: Vec<usize> = (0..rows[0].len())
        .map(|c| rows.iter().map(|r| r[c].len()).max().unwrap_or(0))
        .collect();
    for row in &rows {
        let line: Vec<String> = row
            .iter()
            .zip(&widths)
            .map(|(cell, w)| format!("{cell:>w$}"))
            .collect();
        println!("{}", line.join("  "));
    }

    if let Some(path) = csv {
        let mut text = String::from("tau,pos1,pos2,pos3,pos4,pos5,pos6,sum\n");
        for (tau, cells, sum) in &table {
            writeln!(text, "{tau},{},{sum}", cells.join(",")).expect("string write");
        }
        crate::error::io_context(std::fs::write(path, text), path)?;
        println!("table -> {}", path.display());
    }
    Ok(())
}

fn run_sweep(
    figure: Figure,
    tau_text: Option<&str>,
    grid_text: Option<&str>,
    out: &std::path::Path,
    precision: usize,
) -> Result<()> {
    let taus = match tau_text {
        Some(t) => parse_taus(t)?,
        None => vec![1.0],
    };
    let grid = match grid_text {
        Some(g) => Grid::parse(g)?,
        None => figure.default_grid(),
    };
    println!("resolved configuration:");
    println!("  figure = {}", figure.name());
    println!("  labels = {:?}", figure.labels());
    println!("  scores = {:?} with the last entry sweeping", figure.base_scores());
    println!("  tau = {taus:?}");
    println!("  grid = {}:{}:{}", grid.lo, grid.hi, grid.count);
    println!("  precision = {precision}");
    println!("seed: not used (deterministic)");

    let labels = RelevanceVector::from_labels(figure.labels());
    let mut scores = figure.base_scores();
    let slide = scores.len() - 1;
    let mut csv = String::from("x,ndcg,neural_ndcg_scaled,neural_ndcg_unscaled,tau\n");
    for &tau in &taus {
        for x in grid.points() {
            scores[slide] = x;
            let ndcg = ndcg_at_k(&scores, &labels, RankCutoff::Max)?;
            let scaled =
                loss::neural_ndcg_surrogate(&scores, &labels, tau, RankCutoff::Max, true)?;
            let unscaled =
                loss::neural_ndcg_surrogate(&scores, &labels, tau, RankCutoff::Max, false)?;
            writeln!(
                csv,
                "{},{},{},{},{}",
                format_significant(x, precision),
                format_significant(ndcg, precision),
                format_significant(scaled, precision),
                format_significant(unscaled, precision),
                tau
            )
            .expect("string write");
        }
    }
    crate::error::io_context(std::fs::write(out, csv), out)?;
    println!(
        "wrote {} rows -> {}",
        taus.len() * grid.count,
        out.display()
    );
    Ok(())
}

fn run_gradcheck(
    loss_text: &str,
    n: usize,
    trials: usize,
    tau: f64,
    seed: u64,
    precision: usize,
) -> Result<()> {
    let kind: LossKind = loss_text.parse()?;
    if kind == LossKind::Lambdarank {
        return Err(Error::invalid(
            "lambdarank has no scalar loss to differentiate; its gradients \
             are checked against the swap oracle in the test suite",
        ));
    }
    if n < 2 || trials == 0 {
        return Err(Error::invalid("gradcheck needs n >= 2 and trials >= 1"));
    }
    println!("resolved configuration:");
    println!("  loss = {kind}");
    println!("  n = {n} documents per instance");
    println!("  trials = {trials}");
    println!("  tau = {tau}");
    println!("  precision = {precision}");
    println!("seed = {seed}");

    let mut config = LossConfig::new(kind);
    config.temperature = tau;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for trial in 1..=trials {
        let (scores, labels) = random_checkable_instance(&mut rng, n, kind);
        let x = Array::col(&scores)?;
        let err = grad_check(
            |tape, node| {
                let y = RelevanceVector::from_labels(labels.clone());
                crate::loss::loss_node(tape, node, &y, &config)
            },
            &x,
            1e-5,
        )?;
        worst = worst.max(err);
        println!(
            "trial {trial:>3}: max relative gradient error {}",
            format_significant(err, precision)
        );
    }
    println!(
        "worst over {trials} trials: {}",
        format_significant(worst, precision)
    );
    const THRESHOLD: f64 = 1e-4;
    if worst < THRESHOLD {
        println!("gradcheck PASS (threshold {THRESHOLD})");
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "gradcheck FAIL: worst error {worst:e} is at or above {THRESHOLD:e}"
        )))
    }
}

fn random_checkable_instance(
    rng: &mut ChaCha8Rng,
    n: usize,
    kind: LossKind,
) -> (Vec<f64>, Vec<u32>) {
    loop {
        let scores: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..=2.0)).collect();
        let labels: Vec<u32> = (0..n).map(|_| rng.gen_range(0..=4)).collect();
        let has_gap = labels.iter().any(|&l| l != labels[0]);
        let nonempty = labels.iter().any(|&l| l > 0);
        let applicable = match kind {
            LossKind::Ranknet => has_gap,
            // All-equal labels make the doubly stochastic smooth surrogate
            // exactly constant in the scores; its true-zero gradient cannot
            // be resolved by relative finite differences, so such instances
            // are redrawn.
            LossKind::NeuralNdcg | LossKind::NeuralNdcgT => nonempty && has_gap,
            LossKind::Listnet | LossKind::Listmle | LossKind::Rmse => true,
            _ => nonempty,
        };
        // Well-separated scores keep finite differences away from the
        // non-smooth points of the exact-sort-based losses.
        let separated = (0..n).all(|i| {
            (0..n).all(|j| i == j || (scores[i] - scores[j]).abs() > 1e-3)
        });
        if applicable && separated {
            return (scores, labels);
        }
    }
}
