//! The subcommands. Each writes its resolved config next to its outputs.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;

use bpc::coreset::{load_coreset, save_coreset};
use bpc::distill::{distill_with, StepMetrics};
use bpc::energy::EnergySpec;
use bpc::eval::{cross_architecture_grid, cross_loss_grid, evaluate_coreset, random_baseline, render_comparison, EvalReport};
use bpc::models::ModelSpec;
use bpc::trajectory::{record_trajectory, Buffer};
use bpc::{Buffer64, LabeledDataset64, SyntheticSet64};

use crate::config::{describe_distill, ModelConfig, RunConfig};
use crate::dataset::{has_test_split, load_splits, load_test, load_train};
use crate::CliError;

pub const CORESET_FILE: &str = "coreset.bpcs";
pub const PARTIAL_CORESET_FILE: &str = "coreset.partial.bpcs";
pub const METRICS_FILE: &str = "metrics.tsv";
pub const CHECKPOINT_DIR: &str = "checkpoints";
pub const REPORT_FILE: &str = "report.txt";
pub const REPORT_TSV: &str = "report.tsv";

fn io<T>(r: std::io::Result<T>) -> Result<T, CliError> {
    r.map_err(|e| CliError::Core(e.into()))
}

fn model_spec(cfg: &RunConfig, input_shape: &[usize], classes: usize) -> Result<ModelSpec, CliError> {
    let spec = cfg.model.spec(input_shape, classes);
    spec.validate()?;
    Ok(spec)
}

/// Records `cfg.buffer.trajectories` runs with `loss` into `dir`, printing
/// one summary line each. Recording runs in parallel; saving is in seed
/// order so ids and files do not depend on scheduling.
fn record_buffer(
    cfg: &RunConfig,
    train: &LabeledDataset64,
    test: Option<&LabeledDataset64>,
    spec: &ModelSpec,
    loss: &EnergySpec,
    dir: &Path,
) -> Result<Buffer64, CliError> {
    let mut buf = Buffer::create(dir)?;
    let trajectories = (0..cfg.buffer.trajectories)
        .into_par_iter()
        .map(|i| {
            let mut t = record_trajectory(train, spec, loss, &cfg.buffer.train, cfg.trajectory_seed(i))?;
            if let Some(test) = test {
                t.measure_test(test)?;
            }
            Ok(t)
        })
        .collect::<bpc::Result<Vec<_>>>()?;
    for t in trajectories {
        let (seed, train_acc, test_acc) = (t.seed, t.train_accuracy, t.test_accuracy);
        let epochs = t.epochs();
        let id = buf.save_trajectory(t)?;
        let test_acc = test_acc.map(|a| format!("{a:.4}")).unwrap_or_else(|| "-".into());
        println!("{id}\tseed={seed}\tepochs={epochs}\tloss={loss}\ttrain_acc={train_acc:.4}\ttest_acc={test_acc}");
    }
    Ok(buf)
}

pub fn buffer(cfg: &RunConfig) -> Result<(), CliError> {
    let train = load_train(&cfg.data)?;
    let test = if has_test_split(&cfg.data) {
        Some(load_test(&cfg.data, train.norm())?)
    } else {
        None
    };
    let spec = model_spec(cfg, train.input_shape(), train.classes())?;
    let buf = record_buffer(cfg, &train, test.as_ref(), &spec, &cfg.buffer.loss, &cfg.buffer.dir)?;
    cfg.write_snapshot(&cfg.buffer.dir)?;
    println!("buffer\t{}\t{} trajectories", cfg.buffer.dir.display(), buf.len());
    Ok(())
}

pub fn distill(cfg: &RunConfig) -> Result<(), CliError> {
    let train = load_train(&cfg.data)?;
    let spec = model_spec(cfg, train.input_shape(), train.classes())?;
    let buf = Buffer64::open(&cfg.buffer.dir)?;
    let dir = &cfg.distill_dir;
    let checkpoints = dir.join(CHECKPOINT_DIR);
    io(fs::create_dir_all(&checkpoints))?;
    cfg.write_snapshot(dir)?;
    eprintln!("distill\t{}", describe_distill(&cfg.distill));

    let mut metrics = BufWriter::new(io(File::create(dir.join(METRICS_FILE)))?);
    io(writeln!(metrics, "{}", StepMetrics::TSV_HEADER).and_then(|_| metrics.flush()))?;
    let every = cfg.distill.log_every;
    let mut sink_error: Option<CliError> = None;
    let result = distill_with(&train, &buf, &cfg.distill, &spec, |m, set| {
        if sink_error.is_some() {
            return;
        }
        let done = m.iteration + 1;
        let mut write = || -> Result<(), CliError> {
            io(writeln!(metrics, "{}", m.tsv()).and_then(|_| metrics.flush()))?;
            if done % every == 0 {
                save_coreset(checkpoints.join(format!("iter-{done:06}.bpcs")), set)?;
                eprintln!(
                    "iter {done}\tloss={:.6}\te_plus={:.6}\te_minus={:.6}\tgrad_norm={:.6}",
                    m.loss, m.e_plus, m.e_minus, m.grad_norm
                );
            }
            Ok(())
        };
        if let Err(e) = write() {
            sink_error = Some(e);
        }
    });
    if let Some(e) = sink_error {
        return Err(e);
    }
    match result {
        Ok(out) => {
            let path = dir.join(CORESET_FILE);
            save_coreset(&path, &out.set)?;
            let last = out.history.last().expect("at least one iteration");
            println!(
                "coreset\t{}\titerations={}\tloss={:.6}\tgrad_norm={:.6}",
                path.display(),
                out.history.len(),
                last.loss,
                last.grad_norm
            );
            Ok(())
        }
        Err(aborted) => {
            eprintln!("{aborted}");
            if let Some(set) = &aborted.set {
                save_coreset(dir.join(PARTIAL_CORESET_FILE), set)?;
            }
            Err(CliError::Core(aborted.error))
        }
    }
}

fn load_set(cfg: &RunConfig) -> Result<SyntheticSet64, CliError> {
    Ok(load_coreset(&cfg.eval.coreset)?)
}

fn write_reports(dir: &Path, reports: &[&EvalReport]) -> Result<(), CliError> {
    let blocks: Vec<String> = reports.iter().map(|r| r.to_block()).collect();
    io(fs::write(dir.join(REPORT_FILE), blocks.join("\n")))?;
    let mut tsv = format!("{}\n", EvalReport::TSV_HEADER);
    for r in reports {
        tsv.push_str(&r.tsv_rows());
    }
    io(fs::write(dir.join(REPORT_TSV), tsv))
}

fn summary(r: &EvalReport) -> String {
    format!(
        "{}\t{}\tmean={:.4}\tstd={:.4}\tseeds={}",
        r.label,
        r.spec.kind,
        r.mean,
        r.std,
        r.accuracies.len()
    )
}

pub fn eval(cfg: &RunConfig) -> Result<(), CliError> {
    let set = load_set(cfg)?;
    let test = load_test(&cfg.data, &set.provenance.norm)?;
    let spec = model_spec(cfg, set.input_shape(), set.classes())?;
    let report = evaluate_coreset("distilled", &set, &spec, &test, &cfg.eval.eval)?;
    let dir = cfg.out.join("eval");
    cfg.write_snapshot(&dir)?;
    write_reports(&dir, &[&report])?;
    println!("{}", summary(&report));
    Ok(())
}

pub fn compare(cfg: &RunConfig) -> Result<(), CliError> {
    let set = load_set(cfg)?;
    let (train, test) = load_splits(&cfg.data)?;
    if train.norm() != &set.provenance.norm {
        return Err(CliError::config("the coreset was built with different normalization than this dataset"));
    }
    let spec = model_spec(cfg, set.input_shape(), set.classes())?;
    let distilled = evaluate_coreset("distilled", &set, &spec, &test, &cfg.eval.eval)?;
    let random = random_baseline(&train, set.ipc(), &spec, &test, &cfg.eval.eval)?;
    let dir = cfg.out.join("compare");
    cfg.write_snapshot(&dir)?;
    write_reports(&dir, &[&distilled, &random])?;
    print!("{}", render_comparison(&[distilled, random]));
    Ok(())
}

pub fn cross_arch(cfg: &RunConfig) -> Result<(), CliError> {
    let set = load_set(cfg)?;
    let test = load_test(&cfg.data, &set.provenance.norm)?;
    let specs = cfg
        .eval
        .archs
        .iter()
        .map(|&arch| {
            let spec = ModelConfig { arch, widths: Vec::new() }.spec(set.input_shape(), set.classes());
            spec.validate()?;
            Ok(spec)
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let cells = cross_architecture_grid(&set, &specs, &test, &cfg.eval.eval)?;
    let dir = cfg.out.join("cross-arch");
    cfg.write_snapshot(&dir)?;
    write_reports(&dir, &cells.iter().map(|c| &c.report).collect::<Vec<_>>())?;
    let chance = 1.0 / set.classes() as f64;
    println!("arch\tmean\tstd\tsource\tabove_chance");
    for c in &cells {
        println!(
            "{}\t{:.4}\t{:.4}\t{}\t{:+.4}",
            c.report.spec.kind,
            c.report.mean,
            c.report.std,
            if c.is_source { "yes" } else { "no" },
            c.report.mean - chance
        );
    }
    Ok(())
}

pub fn cross_loss(cfg: &RunConfig) -> Result<(), CliError> {
    let (train, test) = load_splits(&cfg.data)?;
    let spec = model_spec(cfg, train.input_shape(), train.classes())?;
    let dir = cfg.out.join("cross-loss");
    let mut buffers = Vec::new();
    for loss in &cfg.eval.losses {
        let bdir = dir.join(format!("buffer-{}", loss.to_string().replace(':', "-")));
        buffers.push((*loss, record_buffer(cfg, &train, Some(&test), &spec, loss, &bdir)?));
    }
    let refs: Vec<(EnergySpec, &Buffer64)> = buffers.iter().map(|(l, b)| (*l, b)).collect();
    let grid = cross_loss_grid(&train, &refs, &cfg.eval.losses, &cfg.distill, &spec, &test, &cfg.eval.eval)?;
    cfg.write_snapshot(&dir)?;
    write_reports(&dir, &grid.cells.iter().flatten().collect::<Vec<_>>())?;
    let rendered = grid.render();
    io(fs::write(dir.join("grid.tsv"), &rendered))?;
    print!("{rendered}");
    let holds = grid.diagonal_mean() >= grid.off_diagonal_mean();
    println!("diagonal_at_least_off_diagonal\t{}", if holds { "yes" } else { "no" });
    Ok(())
}
