//! `octic` command-line tool.
//!
//! Exit codes: 0 success, 1 a property check failed, 2 usage or I/O error.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use octic::analysis::{
    bench_mlp, count_block_flops, count_model_flops, intensity_crossover, preset, arithmetic_intensity,
    BenchOptions, FourierCost, IntensityModel, ModelShape, PRESETS, PUBLISHED_RATIOS,
};
use octic::check::{run_checks, CheckOptions, Fault, Residual, Scope};
use octic::config::{hash_text, RunConfig};
use octic::data::{kernel_images, load_manifest, synthetic_shapes, write_pgm, Sample};
use octic::group::{fourier_matrix, GroupElement, ORDER};
use octic::model::{build_model, init_threads_from_env, train_demo, Model};
use octic::{OcticError, Result};

/// Allowed gap between computed and published whole-model ratios.
const TABLE_TOL: f64 = 0.25;
const ISO_LABELS: [&str; ORDER] = ["A1", "A2", "B1", "B2", "E11", "E12", "E21", "E22"];

#[derive(Parser)]
#[command(name = "octic", version, about = "D8-equivariant ViT kernels: checks, cost models, training")]
struct Cli {
    /// Line-delimited JSON instead of a table.
    #[arg(long, global = true, conflicts_with = "csv")]
    json: bool,
    /// CSV instead of a table.
    #[arg(long, global = true)]
    csv: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum FaultArg {
    ESign,
    UnsharedE,
}

#[derive(Subcommand)]
enum Command {
    /// Run the equivariance and algebra property suites.
    Check {
        #[arg(long, default_value = "all")]
        scope: Scope,
        /// Random inputs per layer.
        #[arg(long, default_value_t = 100)]
        inputs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Inject a known defect (the suites should then fail).
        #[arg(long, hide = true)]
        inject: Option<FaultArg>,
    },
    /// Count MACs of a model shape against its plain-ViT counterpart.
    Flops {
        /// Preset (vit-l, vit-h, vit-g, vit-e, vit-22b) or "all".
        #[arg(long, conflicts_with = "config")]
        shape: Option<String>,
        /// Model config file.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "butterfly")]
        fourier: FourierCost,
        /// Per-layer counts.
        #[arg(long)]
        breakdown: bool,
        /// Block-level ratios at these widths (comma separated).
        #[arg(long, value_delimiter = ',')]
        block_widths: Vec<usize>,
        /// Tokens for --block-widths.
        #[arg(long, default_value_t = 257)]
        tokens: usize,
    },
    /// Arithmetic intensity of a linear layer, octic against dense.
    Intensity {
        #[arg(long = "B", default_value_t = 196.0)]
        b: f64,
        /// Single width instead of a sweep.
        #[arg(long = "C")]
        c: Option<f64>,
        /// Bytes per element.
        #[arg(long = "P", default_value_t = 2.0)]
        p: f64,
        /// Output width as a multiple of C.
        #[arg(long = "F-ratio", default_value_t = 4.0)]
        f_ratio: f64,
        /// Sweep range LO:HI.
        #[arg(long = "sweep-C", default_value = "256:8192")]
        sweep: String,
        /// Sweep points, log-spaced.
        #[arg(long, default_value_t = 16)]
        points: usize,
    },
    /// Time dense against octic MLP forward passes.
    Bench {
        /// Widths (comma separated).
        #[arg(long = "C", value_delimiter = ',', default_values_t = [256usize, 512, 1024, 2048])]
        c: Vec<usize>,
        #[arg(long, default_value_t = 30)]
        trials: usize,
        #[arg(long, default_value_t = 10)]
        warmup: usize,
        #[arg(long, default_value_t = 32)]
        tokens: usize,
        /// Thread counts (default: 1 and the available parallelism).
        #[arg(long, value_delimiter = ',')]
        threads: Vec<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train a model on the synthetic task or a Netpbm manifest.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        /// `path,label` manifest of training images.
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Manifest of evaluation images.
        #[arg(long)]
        eval_manifest: Option<PathBuf>,
        #[arg(long)]
        steps: Option<usize>,
        /// Seeds the model and the minibatch sampler.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "metrics.csv")]
        metrics: PathBuf,
        #[arg(long, default_value = "model.ckpt")]
        checkpoint: PathBuf,
    },
    /// Print the Fourier matrix Q_reg.
    Fourier {
        /// Emit CSV at full precision.
        #[arg(long)]
        dump: bool,
    },
    /// Write the patch-embedding kernels of a checkpoint as PGM images.
    DumpFilters {
        checkpoint: PathBuf,
        #[arg(long, default_value = "filters")]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Format {
    Table,
    Csv,
    Json,
}

/// A report cell: display text plus its JSON value.
struct Cell(String, Value);

fn text(s: impl Into<String>) -> Cell {
    let s = s.into();
    Cell(s.clone(), Value::String(s))
}

fn int(v: impl Into<u64> + Copy) -> Cell {
    Cell(v.into().to_string(), json!(v.into()))
}

fn sci(v: f64) -> Cell {
    Cell(format!("{v:.3e}"), json!(v))
}

fn fixed(v: f64, digits: usize) -> Cell {
    Cell(format!("{v:.digits$}"), json!(v))
}

fn none() -> Cell {
    Cell("-".into(), Value::Null)
}

struct Out {
    format: Format,
}

impl Out {
    /// Seed, version and config hash, first in every report.
    fn header(&self, command: &str, seed: u64, hash: &str) {
        let version = env!("CARGO_PKG_VERSION");
        match self.format {
            Format::Json => println!(
                "{}",
                json!({"type": "header", "command": command, "version": version, "seed": seed, "config_hash": hash})
            ),
            _ => println!("# octic {version} {command} seed={seed} config={hash}"),
        }
    }

    fn note(&self, kind: &str, message: &str, fields: Value) {
        match self.format {
            Format::Json => {
                let mut v = json!({"type": kind, "message": message});
                if let (Some(o), Value::Object(extra)) = (v.as_object_mut(), fields) {
                    o.extend(extra);
                }
                println!("{v}");
            }
            Format::Csv => println!("# {message}"),
            Format::Table => println!("{message}"),
        }
    }

    fn table(&self, kind: &str, cols: &[&str], rows: &[Vec<Cell>]) {
        match self.format {
            Format::Json => {
                for row in rows {
                    let mut o = serde_json::Map::new();
                    o.insert("type".into(), json!(kind));
                    for (c, cell) in cols.iter().zip(row) {
                        o.insert((*c).into(), cell.1.clone());
                    }
                    println!("{}", Value::Object(o));
                }
            }
            Format::Csv => {
                println!("{}", cols.join(","));
                for row in rows {
                    let cells: Vec<String> = row.iter().map(|c| csv_field(&c.0)).collect();
                    println!("{}", cells.join(","));
                }
            }
            Format::Table => {
                let mut widths: Vec<usize> = cols.iter().map(|c| c.chars().count()).collect();
                for row in rows {
                    for (w, cell) in widths.iter_mut().zip(row) {
                        *w = (*w).max(cell.0.chars().count());
                    }
                }
                let line = |cells: Vec<&str>| {
                    let padded: Vec<String> = cells.iter().zip(&widths).map(|(c, &w)| format!("{c:>w$}")).collect();
                    println!("{}", padded.join("  "));
                };
                line(cols.to_vec());
                for row in rows {
                    line(row.iter().map(|c| c.0.as_str()).collect());
                }
            }
        }
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let out = Out {
        format: if cli.json {
            Format::Json
        } else if cli.csv {
            Format::Csv
        } else {
            Format::Table
        },
    };
    let result = init_threads_from_env().and_then(|_| run(cli.command, &out));
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

/// Runs one command; `Ok(false)` means a property failed.
fn run(command: Command, out: &Out) -> Result<bool> {
    match command {
        Command::Check {
            scope,
            inputs,
            seed,
            inject,
        } => cmd_check(out, scope, inputs, seed, inject),
        Command::Flops {
            shape,
            config,
            fourier,
            breakdown,
            block_widths,
            tokens,
        } => cmd_flops(out, shape, config, fourier, breakdown, &block_widths, tokens),
        Command::Intensity {
            b,
            c,
            p,
            f_ratio,
            sweep,
            points,
        } => cmd_intensity(out, b, c, p, f_ratio, &sweep, points),
        Command::Bench {
            c,
            trials,
            warmup,
            tokens,
            threads,
            seed,
        } => cmd_bench(out, &c, trials, warmup, tokens, threads, seed),
        Command::Train {
            config,
            manifest,
            eval_manifest,
            steps,
            seed,
            metrics,
            checkpoint,
        } => cmd_train(out, config, manifest, eval_manifest, steps, seed, &metrics, &checkpoint),
        Command::Fourier { dump } => cmd_fourier(out, dump),
        Command::DumpFilters { checkpoint, out: dir } => cmd_dump_filters(out, &checkpoint, &dir),
    }
}

fn cmd_check(out: &Out, scope: Scope, inputs: usize, seed: u64, inject: Option<FaultArg>) -> Result<bool> {
    let fault = match inject {
        None => Fault::None,
        Some(FaultArg::ESign) => Fault::ESignFlip,
        Some(FaultArg::UnsharedE) => Fault::UnsharedE,
    };
    out.header(
        "check",
        seed,
        &hash_text(&format!("check scope={scope} inputs={inputs} seed={seed} fault={fault:?}")),
    );
    let t = Instant::now();
    let rows = run_checks(scope, &CheckOptions { inputs, seed, fault })?;
    let mut cols = vec!["suite", "check"];
    let names: Vec<String> = GroupElement::ALL.iter().map(|g| g.to_string()).collect();
    cols.extend(names.iter().map(String::as_str));
    cols.extend(["worst", "tol", "status"]);
    let cells: Vec<Vec<Cell>> = rows
        .iter()
        .map(|r| {
            let mut row = vec![text(r.suite.to_string()), text(r.name.clone())];
            match r.residual {
                Residual::PerElement(v) => row.extend(v.into_iter().map(sci)),
                Residual::Scalar(_) => row.extend((0..ORDER).map(|_| none())),
            }
            row.push(sci(r.worst()));
            row.push(sci(r.tol));
            row.push(text(if r.passed() { "PASS" } else { "FAIL" }));
            row
        })
        .collect();
    out.table("check", &cols, &cells);
    let failed = rows.iter().filter(|r| !r.passed()).count();
    out.note(
        "summary",
        &format!(
            "{} of {} checks passed in {:.2} s",
            rows.len() - failed,
            rows.len(),
            t.elapsed().as_secs_f64()
        ),
        json!({"passed": rows.len() - failed, "failed": failed}),
    );
    Ok(failed == 0)
}

fn cmd_flops(
    out: &Out,
    shape: Option<String>,
    config: Option<PathBuf>,
    fourier: FourierCost,
    breakdown: bool,
    block_widths: &[usize],
    tokens: usize,
) -> Result<bool> {
    let shapes: Vec<(ModelShape, Option<f64>)> = match (&shape, &config) {
        (_, Some(path)) => vec![(ModelShape::from(&RunConfig::load(path)?.model), None)],
        (Some(name), None) if name != "all" => {
            let s = preset(name)?;
            let published = PRESETS.iter().position(|p| p.0 == s.name).map(|i| PUBLISHED_RATIOS[i]);
            vec![(s, published)]
        }
        _ => PRESETS
            .iter()
            .zip(PUBLISHED_RATIOS)
            .map(|(p, r)| preset(p.0).map(|s| (s, Some(r))))
            .collect::<Result<_>>()?,
    };
    let ident = format!(
        "flops shapes={:?} fourier={fourier} widths={block_widths:?} tokens={tokens}",
        shapes.iter().map(|s| format!("{:?}", s.0)).collect::<Vec<_>>()
    );
    out.header("flops", 0, &hash_text(&ident));
    out.note(
        "convention",
        &format!(
            "MACs; matmul = linear + attention products; Fourier transforms: {fourier}; \
             published whole-model ratios compared at ±{TABLE_TOL}"
        ),
        json!({"fourier": fourier.to_string(), "tolerance": TABLE_TOL}),
    );
    let mut ok = true;
    let mut rows = Vec::new();
    let mut details = Vec::new();
    for (s, published) in &shapes {
        let cmp = count_model_flops(s, fourier)?;
        let ratio = cmp.matmul_ratio();
        let within = published.map(|p| (ratio - p).abs() <= TABLE_TOL);
        ok &= within.unwrap_or(true);
        rows.push(vec![
            text(s.name.clone()),
            text(s.family.to_string()),
            int(s.tokens() as u64),
            fixed(cmp.standard.matmul() as f64 / 1e9, 2),
            fixed(cmp.octic.matmul() as f64 / 1e9, 2),
            fixed(cmp.linear_ratio(), 3),
            fixed(ratio, 3),
            fixed(cmp.total_ratio(), 3),
            published.map_or_else(none, |p| fixed(p, 2)),
            within.map_or_else(none, |w| text(if w { "yes" } else { "no" })),
        ]);
        details.push((s.name.clone(), cmp));
    }
    out.table(
        "flops",
        &[
            "shape",
            "family",
            "tokens",
            "standard_gmacs",
            "octic_gmacs",
            "linear_ratio",
            "matmul_ratio",
            "total_ratio",
            "published",
            "within_tol",
        ],
        &rows,
    );
    if breakdown {
        for (name, cmp) in &details {
            let rows: Vec<Vec<Cell>> = cmp
                .octic
                .layers
                .iter()
                .map(|l| {
                    let std = cmp.standard.layers.iter().find(|s| s.name == l.name).map(|s| s.macs);
                    vec![
                        text(name.clone()),
                        text(l.name.clone()),
                        text(format!("{:?}", l.class).to_lowercase()),
                        std.map_or_else(none, int),
                        int(l.macs),
                    ]
                })
                .collect();
            out.table("layer", &["shape", "layer", "class", "standard_macs", "octic_macs"], &rows);
        }
    }
    if !block_widths.is_empty() {
        let mut rows = Vec::new();
        for &c in block_widths {
            let heads = (c / 64).max(1);
            let cmp = count_block_flops(c, heads, tokens)?;
            rows.push(vec![
                int(c as u64),
                int(tokens as u64),
                fixed(cmp.matmul_ratio(), 3),
                fixed(cmp.total_ratio(), 3),
            ]);
        }
        out.table("block", &["width", "tokens", "matmul_ratio", "total_ratio"], &rows);
    }
    Ok(ok)
}

fn parse_range(s: &str) -> Result<(f64, f64)> {
    let bad = || OcticError::InvalidConfig(format!("sweep range '{s}' is not LO:HI with 0 < LO < HI"));
    let (lo, hi) = s.split_once(':').ok_or_else(bad)?;
    let lo: f64 = lo.trim().parse().map_err(|_| bad())?;
    let hi: f64 = hi.trim().parse().map_err(|_| bad())?;
    if !(lo > 0.0 && hi > lo) {
        return Err(bad());
    }
    Ok((lo, hi))
}

fn cmd_intensity(out: &Out, b: f64, c: Option<f64>, p: f64, f_ratio: f64, sweep: &str, points: usize) -> Result<bool> {
    if !(b > 0.0 && p > 0.0 && f_ratio > 0.0) {
        return Err(OcticError::InvalidConfig("B, P and F-ratio must be positive".into()));
    }
    let (lo, hi) = parse_range(sweep)?;
    out.header(
        "intensity",
        0,
        &hash_text(&format!("intensity B={b} C={c:?} P={p} F={f_ratio} sweep={lo}:{hi} points={points}")),
    );
    let widths: Vec<f64> = match c {
        Some(c) => vec![c],
        None => {
            let n = points.max(2);
            (0..n).map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64)).collect()
        }
    };
    let rows: Vec<Vec<Cell>> = widths
        .iter()
        .map(|&c| {
            let m = IntensityModel { b, c, f: f_ratio * c, p };
            let (s, o) = (arithmetic_intensity(&m, false), arithmetic_intensity(&m, true));
            vec![fixed(c, 1), fixed(s, 3), fixed(o, 3), fixed(o / s, 4)]
        })
        .collect();
    out.table("intensity", &["C", "standard", "octic", "octic_over_standard"], &rows);
    match intensity_crossover(b, p, f_ratio, lo, hi) {
        Ok(x) => out.note(
            "crossover",
            &format!(
                "octic intensity exceeds standard above C* = {:.3} (intensity {:.3}, residual {:.1e}, {} bisection steps)",
                x.c, x.standard, x.residual, x.iterations
            ),
            json!({"c": x.c, "intensity": x.standard, "residual": x.residual, "iterations": x.iterations}),
        ),
        Err(e) => out.note("crossover", &format!("no crossover in {lo}:{hi}: {e}"), json!({"c": null})),
    }
    Ok(true)
}

fn cmd_bench(
    out: &Out,
    widths: &[usize],
    trials: usize,
    warmup: usize,
    tokens: usize,
    threads: Vec<usize>,
    seed: u64,
) -> Result<bool> {
    let threads = if threads.is_empty() {
        let mut t = vec![1];
        let avail = rayon::current_num_threads();
        if avail > 1 {
            t.push(avail);
        }
        t
    } else {
        threads
    };
    out.header(
        "bench",
        seed,
        &hash_text(&format!(
            "bench C={widths:?} trials={trials} warmup={warmup} tokens={tokens} threads={threads:?}"
        )),
    );
    let mut rows = Vec::new();
    for &c in widths {
        for &t in &threads {
            let r = bench_mlp(&BenchOptions {
                c,
                tokens,
                warmup,
                trials,
                threads: t,
                seed,
            })?;
            rows.push(vec![
                int(c as u64),
                int(t as u64),
                int(tokens as u64),
                int(trials as u64),
                fixed(r.standard.mean_us, 1),
                fixed(r.standard.std_us, 1),
                fixed(r.standard.median_of_means_us, 1),
                fixed(r.octic.mean_us, 1),
                fixed(r.octic.std_us, 1),
                fixed(r.octic.median_of_means_us, 1),
                fixed(r.standard.median_of_means_us / r.octic.median_of_means_us, 2),
                fixed(r.mac_ratio, 3),
            ]);
        }
    }
    out.table(
        "bench",
        &[
            "C",
            "threads",
            "tokens",
            "trials",
            "standard_mean_us",
            "standard_std_us",
            "standard_mom_us",
            "octic_mean_us",
            "octic_std_us",
            "octic_mom_us",
            "speedup",
            "mac_ratio",
        ],
        &rows,
    );
    Ok(true)
}

#[allow(clippy::too_many_arguments)]
fn cmd_train(
    out: &Out,
    config: Option<PathBuf>,
    manifest: Option<PathBuf>,
    eval_manifest: Option<PathBuf>,
    steps: Option<usize>,
    seed: Option<u64>,
    metrics: &Path,
    checkpoint: &Path,
) -> Result<bool> {
    let mut cfg = match &config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if manifest.is_some() {
        cfg.data.manifest = manifest;
    }
    if eval_manifest.is_some() {
        cfg.data.eval_manifest = eval_manifest;
    }
    if let Some(s) = steps {
        cfg.train.steps = s;
    }
    if let Some(s) = seed {
        cfg.model.seed = s;
        cfg.train.seed = s;
    }
    let hash = cfg.hash();
    out.header("train", cfg.model.seed, &hash);

    let m = cfg.model.image;
    let train: Vec<Sample> = match &cfg.data.manifest {
        Some(p) => load_manifest(p)?,
        None => synthetic_shapes(cfg.data.train_size, m, cfg.data.train_seed),
    };
    let eval: Vec<Sample> = match (&cfg.data.eval_manifest, &cfg.data.manifest) {
        (Some(p), _) => load_manifest(p)?,
        (None, Some(_)) => train.clone(),
        (None, None) => synthetic_shapes(cfg.data.eval_size, m, cfg.data.eval_seed),
    };
    for (img, label) in train.iter().chain(&eval) {
        if img.m != m {
            return Err(OcticError::InvalidConfig(format!(
                "image of size {} does not match model.image = {m}",
                img.m
            )));
        }
        if *label >= cfg.model.classes {
            return Err(OcticError::InvalidConfig(format!(
                "label {label} is out of range for {} classes",
                cfg.model.classes
            )));
        }
    }

    let mut model = build_model(&cfg.model)?;
    let mut csv = BufWriter::new(fs::File::create(metrics).map_err(OcticError::at(metrics))?);
    writeln!(
        csv,
        "# octic {} train seed={} config={hash}",
        env!("CARGO_PKG_VERSION"),
        cfg.model.seed
    )?;
    writeln!(csv, "step,loss,acc,rot_acc,rot_acc_minus_acc")?;
    let mut io_err = None;
    let cols = ["step", "loss", "acc", "rot_acc", "rot_acc_minus_acc"];
    if out.format == Format::Table {
        println!("{:>6}  {:>12}  {:>8}  {:>8}  {:>17}", cols[0], cols[1], cols[2], cols[3], cols[4]);
    } else if out.format == Format::Csv {
        println!("{}", cols.join(","));
    }
    let report = train_demo(&mut model, &train, &eval, &cfg.train, |r| {
        let gap = r.rot_acc - r.acc;
        if let Err(e) = writeln!(csv, "{},{:.9},{:.6},{:.6},{:.6}", r.step, r.loss, r.acc, r.rot_acc, gap) {
            io_err.get_or_insert(e);
        }
        match out.format {
            Format::Json => println!(
                "{}",
                json!({"type": "metrics", "step": r.step, "loss": r.loss, "acc": r.acc, "rot_acc": r.rot_acc, "rot_acc_minus_acc": gap})
            ),
            Format::Csv => println!("{},{:.9},{:.6},{:.6},{:.6}", r.step, r.loss, r.acc, r.rot_acc, gap),
            Format::Table => println!(
                "{:>6}  {:>12.6}  {:>8.4}  {:>8.4}  {:>17.4}",
                r.step, r.loss, r.acc, r.rot_acc, gap
            ),
        }
    })?;
    if let Some(e) = io_err {
        return Err(e.into());
    }
    csv.flush()?;
    model.save(checkpoint)?;
    let ev = report.final_eval;
    out.note(
        "final",
        &format!(
            "final acc {:.4}, transformed acc {:.4}, max logit shift {:.3e}; metrics {}, checkpoint {}",
            ev.acc,
            ev.rot_acc,
            ev.max_logit_shift,
            metrics.display(),
            checkpoint.display()
        ),
        json!({"acc": ev.acc, "rot_acc": ev.rot_acc, "max_logit_shift": ev.max_logit_shift,
               "metrics": metrics.display().to_string(), "checkpoint": checkpoint.display().to_string()}),
    );
    Ok(true)
}

fn cmd_fourier(out: &Out, dump: bool) -> Result<bool> {
    let q = fourier_matrix();
    let mut cols = vec!["slot", "element"];
    cols.extend(ISO_LABELS);
    if dump {
        // full precision, always CSV
        println!("{}", cols.join(","));
        for (g, row) in GroupElement::ALL.iter().zip(q) {
            let vals: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
            println!("{},{g},{}", g.index(), vals.join(","));
        }
        return Ok(true);
    }
    out.header("fourier", 0, &hash_text("fourier"));
    let rows: Vec<Vec<Cell>> = GroupElement::ALL
        .iter()
        .zip(q)
        .map(|(g, row)| {
            let mut r = vec![int(g.index() as u64), text(g.to_string())];
            r.extend(row.iter().map(|&v| fixed(v, 6)));
            r
        })
        .collect();
    out.table("fourier", &cols, &rows);
    Ok(true)
}

fn cmd_dump_filters(out: &Out, checkpoint: &Path, dir: &Path) -> Result<bool> {
    let bytes = fs::read(checkpoint).map_err(OcticError::at(checkpoint))?;
    let model = Model::load(checkpoint)?;
    out.header("dump-filters", model.cfg.seed, &hex_sha(&bytes));
    let p = model.embed.patch;
    let images = kernel_images(&model.embed.weight, p, model.embed.octic)?;
    fs::create_dir_all(dir).map_err(OcticError::at(dir))?;
    for (name, pixels) in &images {
        write_pgm(&dir.join(format!("{name}.pgm")), p, p, pixels)?;
    }
    out.note(
        "dump",
        &format!(
            "wrote {} images of {p}x{p} ({} kernels x 3 channels) to {}",
            images.len(),
            model.embed.weight.rows(),
            dir.display()
        ),
        json!({"files": images.len(), "kernels": model.embed.weight.rows(), "dir": dir.display().to_string()}),
    );
    Ok(true)
}

fn hex_sha(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    hex::encode(Sha256::digest(bytes))
}
