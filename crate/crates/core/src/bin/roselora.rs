use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use roselora::analysis::empirical_bound_sweep;
use roselora::harness::checkpoint::{config_digest, load_checkpoint, save_checkpoint};
use roselora::harness::config::{presets, BoundConfig, ExperimentConfig};
use roselora::harness::report::{write_bound_sweep, write_rows, write_steps};
use roselora::harness::{adapt, run_data_scaling, run_edit_experiment, run_finetune, TaskBundle};
use roselora::pruner::keep_count;
use roselora::{Error, LoraMlp, Mlp, Result, TrainState};

#[derive(Parser)]
#[command(name = "roselora", version, about = "Sparse low-rank adaptation experiments")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML experiment config; a bundled preset is used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config's top-level seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Base checkpoint to write (`pretrain`) or read (everything else).
    #[arg(long)]
    checkpoint: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Pre-train the frozen base network and save it.
    Pretrain(Common),
    /// Train a sparse adapter on the adaptation split.
    Train(Common),
    /// Fact-editing run, sparse vs dense adapter.
    Edit(Common),
    /// Fine-tune and measure retention on the pre-training split.
    Forgetting(Common),
    /// Accuracy versus fraction of adaptation data used.
    DataScaling(Common),
    /// Empirical product-sparsity sweep against the lower bound.
    AnalyzeBound(Common),
    /// Evaluate a trained adapter checkpoint.
    Eval(Common),
}

fn load_config(c: &Common, preset: fn() -> ExperimentConfig) -> Result<ExperimentConfig> {
    let cfg = match &c.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => preset(),
    };
    Ok(match c.seed {
        Some(s) => cfg.with_seed(s),
        None => cfg,
    })
}

fn prepare(c: &Common, cfg: &ExperimentConfig) -> Result<(TaskBundle, Mlp)> {
    match &c.checkpoint {
        Some(p) => {
            let base = load_checkpoint(p)?.state.model.base();
            let task = cfg.generate_task()?;
            if base.input_dim() != task.features() || base.output_dim() != task.num_classes() {
                return Err(Error::Config(format!(
                    "checkpoint {} does not fit the task ({} features, {} classes)",
                    p.display(),
                    task.features(),
                    task.num_classes()
                )));
            }
            Ok((task, base))
        }
        None => cfg.prepare(),
    }
}

fn setup(out: &Path, cfg: &ExperimentConfig) -> Result<()> {
    fs::create_dir_all(out)?;
    fs::write(out.join("config.toml"), cfg.to_toml_string())?;
    Ok(())
}

#[derive(Serialize)]
struct Summary<'a> {
    method: &'a str,
    metric: &'a str,
    value: f64,
}

fn row<'a>(method: &'a str, metric: &'a str, value: f64) -> Summary<'a> {
    Summary { method, metric, value }
}

fn pretrain_cmd(c: &Common) -> Result<()> {
    let cfg = load_config(c, presets::finetune)?;
    setup(&c.out, &cfg)?;
    let (task, base) = cfg.prepare()?;
    let acc = match task.pretrain.inputs() {
        Some(x) => base.accuracy(&x, task.pretrain.labels())?,
        None => 1.0,
    };
    let model = LoraMlp::from_base(&base, cfg.adapter.rank, cfg.seed)?;
    let state = TrainState::new(model, cfg.train.beta)?;
    let path = c.checkpoint.clone().unwrap_or_else(|| c.out.join("base.ckpt"));
    save_checkpoint(&path, &state, &config_digest(&cfg))?;
    write_rows(c.out.join("pretrain.csv"), &[row("base", "pretrain_accuracy", acc)])?;
    println!("pretrain accuracy {acc:.4}, saved {}", path.display());
    Ok(())
}

fn train_cmd(c: &Common) -> Result<()> {
    let cfg = load_config(c, presets::finetune)?;
    setup(&c.out, &cfg)?;
    let (task, base) = prepare(c, &cfg)?;
    let run = cfg.adapt_run()?;
    let result = adapt(&base, &task.adapt, &run)?;
    write_steps(c.out.join("steps.csv"), &result.reports)?;
    let path = c.out.join("adapter.ckpt");
    save_checkpoint(&path, &result.state, &config_digest(&cfg))?;
    let acc = match task.adapt_eval.inputs() {
        Some(x) => result.state.model.accuracy(&x, task.adapt_eval.labels())?,
        None => 1.0,
    };
    let sparsity = result.state.model.delta_sparsity();
    write_rows(
        c.out.join("train.csv"),
        &[
            row("roselora", "adapt_accuracy", acc),
            row("roselora", "delta_sparsity", sparsity),
        ],
    )?;
    println!(
        "adapt accuracy {acc:.4}, update sparsity {sparsity:.4}, saved {}",
        path.display()
    );
    Ok(())
}

fn edit_cmd(c: &Common) -> Result<()> {
    let cfg = load_config(c, presets::edit)?;
    setup(&c.out, &cfg)?;
    let (task, base) = prepare(c, &cfg)?;
    let run = cfg.adapt_run()?;
    let sparse = run_edit_experiment(&task, &base, &run)?;
    let dense = run_edit_experiment(&task, &base, &run.dense_baseline())?;
    write_steps(c.out.join("steps.csv"), &sparse.run.reports)?;
    write_steps(c.out.join("steps_dense.csv"), &dense.run.reports)?;
    let rows = [
        row("roselora", "edit_success", sparse.metrics.edit_success),
        row("roselora", "locality", sparse.metrics.locality),
        row("lora", "edit_success", dense.metrics.edit_success),
        row("lora", "locality", dense.metrics.locality),
    ];
    write_rows(c.out.join("edit.csv"), &rows)?;
    for r in &rows {
        println!("{:<9} {:<13} {:.4}", r.method, r.metric, r.value);
    }
    Ok(())
}

fn forgetting_cmd(c: &Common) -> Result<()> {
    let cfg = load_config(c, presets::finetune)?;
    setup(&c.out, &cfg)?;
    let (task, base) = prepare(c, &cfg)?;
    let run = cfg.adapt_run()?;
    let sparse = run_finetune(&task, &base, &run)?;
    let dense = run_finetune(&task, &base, &run.dense_baseline())?;
    write_steps(c.out.join("steps.csv"), &sparse.run.reports)?;
    write_steps(c.out.join("steps_dense.csv"), &dense.run.reports)?;
    let rows = [
        row("base", "adapt_accuracy", sparse.metrics.base_adapt_accuracy),
        row("roselora", "adapt_accuracy", sparse.metrics.adapt_accuracy),
        row("roselora", "retention", sparse.metrics.retention),
        row("lora", "adapt_accuracy", dense.metrics.adapt_accuracy),
        row("lora", "retention", dense.metrics.retention),
    ];
    write_rows(c.out.join("forgetting.csv"), &rows)?;
    for r in &rows {
        println!("{:<9} {:<15} {:.4}", r.method, r.metric, r.value);
    }
    Ok(())
}

fn scaling_cmd(c: &Common) -> Result<()> {
    let cfg = load_config(c, presets::finetune)?;
    setup(&c.out, &cfg)?;
    let (task, base) = prepare(c, &cfg)?;
    let fractions = cfg.scaling.clone().unwrap_or_default().fractions;
    let rows = run_data_scaling(&task, &base, &cfg.adapt_run()?, &fractions)?;
    write_rows(c.out.join("scaling.csv"), &rows)?;
    println!("fraction  n_train  lora    roselora");
    for r in &rows {
        println!(
            "{:<9} {:<8} {:.4}  {:.4}",
            r.fraction, r.n_train, r.lora_accuracy, r.roselora_accuracy
        );
    }
    Ok(())
}

fn bound_cmd(c: &Common) -> Result<()> {
    let cfg = load_config(c, presets::bound)?;
    setup(&c.out, &cfg)?;
    let b: BoundConfig = cfg.bound.clone().unwrap_or_default();
    let rows = empirical_bound_sweep(&b.grid, b.rank, b.d1, b.d2, b.trials, cfg.seed)?;
    write_bound_sweep(c.out.join("bound.csv"), &rows)?;
    let violations = rows
        .iter()
        .filter(|r| r.min_product_sparsity < r.theoretical_bound)
        .count();
    println!("{} grid cells, {} below the bound", rows.len(), violations);
    Ok(())
}

#[derive(Serialize)]
struct BudgetRow {
    layer: usize,
    factor: &'static str,
    index: usize,
    nonzeros: usize,
    budget: usize,
}

fn eval_cmd(c: &Common) -> Result<()> {
    let path = c
        .checkpoint
        .as_ref()
        .ok_or_else(|| Error::Config("eval needs --checkpoint".into()))?;
    let ckpt = load_checkpoint(path)?;
    // The budget and evaluation task come from the config the adapter was trained with.
    let cfg = load_config(c, presets::finetune)?;
    fs::create_dir_all(&c.out)?;
    let keep = cfg.train_config()?.schedule.final_keep();
    let model = &ckpt.state.model;

    let mut budget = Vec::new();
    for (l, layer) in model.layers().iter().enumerate() {
        let (d1, d2) = layer.dims();
        for (i, nnz) in layer.a_row_nnz().into_iter().enumerate() {
            budget.push(BudgetRow {
                layer: l,
                factor: "a_row",
                index: i,
                nonzeros: nnz,
                budget: keep_count(keep, d2),
            });
        }
        for (j, nnz) in layer.b_col_nnz().into_iter().enumerate() {
            budget.push(BudgetRow {
                layer: l,
                factor: "b_col",
                index: j,
                nonzeros: nnz,
                budget: keep_count(keep, d1),
            });
        }
    }
    write_rows(c.out.join("budget.csv"), &budget)?;
    let over = budget.iter().filter(|r| r.nonzeros > r.budget).count();

    let task = cfg.generate_task()?;
    let mut rows = vec![row("checkpoint", "delta_sparsity", model.delta_sparsity())];
    if model.base().input_dim() == task.features() && model.base().output_dim() == task.num_classes() {
        if let Some(x) = task.adapt_eval.inputs() {
            rows.push(row(
                "checkpoint",
                "adapt_accuracy",
                model.accuracy(&x, task.adapt_eval.labels())?,
            ));
        }
        if let Some(x) = task.locality.inputs() {
            let base = model.base().predict(&x)?;
            let now = model.predict(&x)?;
            rows.push(row("checkpoint", "locality", roselora::model::accuracy(&now, &base)));
        }
    }
    write_rows(c.out.join("eval.csv"), &rows)?;
    for r in &rows {
        println!("{:<15} {:.4}", r.metric, r.value);
    }
    println!(
        "step {}, {} of {} rows/columns over budget",
        ckpt.state.step,
        over,
        budget.len()
    );
    if over > 0 {
        return Err(Error::Contract(format!("{over} rows/columns exceed the keep budget")));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match &cli.cmd {
        Command::Pretrain(c) => pretrain_cmd(c),
        Command::Train(c) => train_cmd(c),
        Command::Edit(c) => edit_cmd(c),
        Command::Forgetting(c) => forgetting_cmd(c),
        Command::DataScaling(c) => scaling_cmd(c),
        Command::AnalyzeBound(c) => bound_cmd(c),
        Command::Eval(c) => eval_cmd(c),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
