//! Experiment runner: evolve networks from scratch, adapt and transfer them
//! onto new datasets, generate synthetic tasks, and inspect genome files.
//! Every run writes its resolved configuration, a per-insertion convergence
//! CSV and the best genome next to each other so results can be re-derived.

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use evorn::data::{load_dir, split, synthesize, Normalizer, SynthSpec, TimeSeriesSet};
use evorn::evolution::{run, EvolveConfig, RunResult};
use evorn::genome::{Genome, NodeKind};
use evorn::trainer::TrainConfig;
use evorn::transfer::{adapt, Strategy, SurgeryReport, TransferSpec, WeightInit};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::fs;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(name = "evorn", version, about = "Neuroevolution of recurrent networks with structure transfer")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evolve networks from scratch on a dataset.
    Evolve(EvolveCmd),
    /// Adapt a previously evolved genome to a new dataset and evolve on.
    Transfer(TransferCmd),
    /// Print structure and statistics of a genome file.
    Inspect { genome: PathBuf },
    /// Generate a synthetic multi-channel dataset with manifests.
    SynthData(SynthCmd),
}

#[derive(Args)]
struct DataArgs {
    /// Directory of CSV series (header row of channel names).
    #[arg(long)]
    data: PathBuf,
    /// Input channel manifest (one name per line); defaults to
    /// <data>/inputs.txt.
    #[arg(long)]
    inputs: Option<PathBuf>,
    /// Output channel manifest; defaults to <data>/outputs.txt.
    #[arg(long)]
    outputs: Option<PathBuf>,
    /// Series used for training (default: all but the validation split).
    #[arg(long)]
    train_series: Option<usize>,
    /// Series held out for validation (default: a quarter, at least one).
    #[arg(long)]
    valid_series: Option<usize>,
}

#[derive(Args)]
struct EngineArgs {
    #[arg(long, default_value_t = 1000)]
    max_genomes: usize,
    #[arg(long, default_value_t = 4)]
    islands: usize,
    #[arg(long, default_value_t = 10)]
    capacity: usize,
    #[arg(long, default_value_t = 0.70)]
    mutation_rate: f64,
    #[arg(long, default_value_t = 0.20)]
    intra_rate: f64,
    #[arg(long, default_value_t = 0.10)]
    inter_rate: f64,
    #[arg(long, default_value_t = 4)]
    epochs: usize,
    #[arg(long, default_value_t = 0.001)]
    learning_rate: f64,
    #[arg(long, default_value_t = 0.9)]
    momentum: f64,
    #[arg(long, default_value_t = 1.0)]
    clip_threshold: f64,
    #[arg(long, default_value_t = 0.05)]
    boost_threshold: f64,
    /// Inputs at t predict outputs at t + offset.
    #[arg(long, default_value_t = 1)]
    prediction_offset: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    workers: usize,
}

impl EngineArgs {
    fn evolve_config(&self) -> EvolveConfig {
        EvolveConfig {
            n_islands: self.islands,
            island_capacity: self.capacity,
            mutation_rate: self.mutation_rate,
            intra_island_crossover_rate: self.intra_rate,
            inter_island_crossover_rate: self.inter_rate,
            max_genomes: self.max_genomes,
            seed: self.seed,
            ..Default::default()
        }
    }

    fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            learning_rate: self.learning_rate,
            momentum: self.momentum,
            clip_threshold: self.clip_threshold,
            boost_threshold: self.boost_threshold,
            prediction_offset: self.prediction_offset,
            ..Default::default()
        }
    }
}

#[derive(Args)]
struct EvolveCmd {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    engine: EngineArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum StrategyArg {
    Astl,
    Nastl,
    AstlPlusNastl,
}

impl From<StrategyArg> for Strategy {
    fn from(value: StrategyArg) -> Strategy {
        match value {
            StrategyArg::Astl => Strategy::Astl,
            StrategyArg::Nastl => Strategy::Nastl,
            StrategyArg::AstlPlusNastl => Strategy::AstlPlusNastl,
        }
    }
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum WeightInitArg {
    Uniform,
    Epigenetic,
}

impl From<WeightInitArg> for WeightInit {
    fn from(value: WeightInitArg) -> WeightInit {
        match value {
            WeightInitArg::Uniform => WeightInit::Uniform,
            WeightInitArg::Epigenetic => WeightInit::Epigenetic,
        }
    }
}

#[derive(Args)]
struct TransferCmd {
    /// Previously evolved genome to adapt.
    #[arg(long)]
    seed_genome: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    engine: EngineArgs,
    #[arg(long, conflicts_with = "all_arms", required_unless_present = "all_arms")]
    strategy: Option<StrategyArg>,
    #[arg(long, conflicts_with = "all_arms", required_unless_present = "all_arms")]
    weight_init: Option<WeightInitArg>,
    /// Run all six strategy/weight-init combinations into out/<arm>/.
    #[arg(long)]
    all_arms: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SynthCmd {
    /// JSON task spec to start from (flags below override it).
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    channels: Option<usize>,
    #[arg(long)]
    series: Option<usize>,
    #[arg(long)]
    length: Option<usize>,
    #[arg(long)]
    coupling: Option<f64>,
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output channels, comma separated (default: the last channel).
    #[arg(long, value_delimiter = ',')]
    outputs: Vec<String>,
    #[arg(long)]
    out: PathBuf,
}

fn main() {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Evolve(cmd) => cmd_evolve(cmd),
        Command::Transfer(cmd) => cmd_transfer(cmd),
        Command::Inspect { genome } => cmd_inspect(&genome),
        Command::SynthData(cmd) => cmd_synth_data(cmd),
    };
    if let Err(err) = outcome {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}

fn read_manifest(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("cannot read parameter manifest {}", path.display()))?;
    let params: Vec<String> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(String::from)
        .collect();
    if params.is_empty() {
        bail!("parameter manifest {} is empty", path.display());
    }
    Ok(params)
}

struct LoadedData {
    train: TimeSeriesSet,
    valid: TimeSeriesSet,
    inputs: Vec<String>,
    outputs: Vec<String>,
    n_train: usize,
    n_valid: usize,
}

fn load_data(args: &DataArgs) -> Result<LoadedData> {
    if !args.data.is_dir() {
        bail!("data directory {} does not exist", args.data.display());
    }
    let set = load_dir(&args.data)?;
    let total = set.series.len();
    let n_valid = args.valid_series.unwrap_or_else(|| (total / 4).max(1));
    let n_train = args.train_series.unwrap_or_else(|| total.saturating_sub(n_valid));
    let (mut train, mut valid) = split(set, n_train, n_valid)?;
    train.validate()?;
    valid.validate()?;

    let normalizer = Normalizer::fit(&train);
    normalizer.apply(&mut train);
    normalizer.apply(&mut valid);

    let inputs_path = args.inputs.clone().unwrap_or_else(|| args.data.join("inputs.txt"));
    let outputs_path = args.outputs.clone().unwrap_or_else(|| args.data.join("outputs.txt"));
    let inputs = read_manifest(&inputs_path)?;
    let outputs = read_manifest(&outputs_path)?;
    for param in inputs.iter().chain(outputs.iter()) {
        if train.channel_index(param).is_none() {
            bail!("manifest channel {param} is not present in the dataset");
        }
    }

    Ok(LoadedData { train, valid, inputs, outputs, n_train, n_valid })
}

#[derive(Serialize)]
struct ResolvedConfig<'a> {
    command: &'a str,
    data_dir: &'a Path,
    out_dir: &'a Path,
    input_params: &'a [String],
    output_params: &'a [String],
    train_series: usize,
    valid_series: usize,
    workers: usize,
    evolve: &'a EvolveConfig,
    train: &'a TrainConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    transfer: Option<&'a TransferSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed_genome: Option<&'a Path>,
}

fn write_run_outputs(
    out_dir: &Path,
    config_json: &ResolvedConfig,
    result: &RunResult,
    surgery: Option<&SurgeryReport>,
) -> Result<()> {
    fs::create_dir_all(out_dir)?;
    fs::write(out_dir.join("config.json"), serde_json::to_vec_pretty(config_json)?)?;

    let mut csv = String::from("inserted_count,best_validation_mse,island_id,genome_id\n");
    for row in &result.log {
        csv.push_str(&format!("{},{},{},{}\n", row.inserted, row.best_mse, row.island, row.genome_id));
    }
    fs::write(out_dir.join("convergence.csv"), csv)?;
    fs::write(out_dir.join("best_genome.json"), result.best.to_json()?)?;
    if let Some(report) = surgery {
        fs::write(out_dir.join("surgery_report.txt"), report.to_string())?;
    }
    Ok(())
}

fn cmd_evolve(cmd: EvolveCmd) -> Result<()> {
    let data = load_data(&cmd.data)?;
    let evolve_config = cmd.engine.evolve_config();
    let train_config = cmd.engine.train_config();

    let mut rng = ChaCha8Rng::seed_from_u64(evolve_config.seed);
    let seed_genome = Genome::minimal(&data.inputs, &data.outputs, &mut rng)?;

    let result = run(
        &evolve_config,
        &train_config,
        &data.train,
        &data.valid,
        vec![seed_genome],
        cmd.engine.workers,
    )?;

    let resolved = ResolvedConfig {
        command: "evolve",
        data_dir: &cmd.data.data,
        out_dir: &cmd.out,
        input_params: &data.inputs,
        output_params: &data.outputs,
        train_series: data.n_train,
        valid_series: data.n_valid,
        workers: cmd.engine.workers,
        evolve: &evolve_config,
        train: &train_config,
        transfer: None,
        seed_genome: None,
    };
    write_run_outputs(&cmd.out, &resolved, &result, None)?;
    println!(
        "evolved {} genomes; best validation MSE {}",
        result.log.len(),
        result.best.fitness.unwrap_or(f64::INFINITY)
    );
    Ok(())
}

fn transfer_arm(
    cmd: &TransferCmd,
    data: &LoadedData,
    seed: &Genome,
    spec: &TransferSpec,
    arm_seed: u64,
    out_dir: &Path,
) -> Result<()> {
    let mut evolve_config = cmd.engine.evolve_config();
    evolve_config.seed = arm_seed;
    let train_config = cmd.engine.train_config();

    let mut rng = ChaCha8Rng::seed_from_u64(arm_seed);
    let (adapted, report) = adapt(seed.clone(), spec, &mut rng)?;
    fs::create_dir_all(out_dir)?;
    fs::write(out_dir.join("adapted_genome.json"), adapted.to_json()?)?;

    let result = run(
        &evolve_config,
        &train_config,
        &data.train,
        &data.valid,
        vec![adapted],
        cmd.engine.workers,
    )?;

    let resolved = ResolvedConfig {
        command: "transfer",
        data_dir: &cmd.data.data,
        out_dir,
        input_params: &data.inputs,
        output_params: &data.outputs,
        train_series: data.n_train,
        valid_series: data.n_valid,
        workers: cmd.engine.workers,
        evolve: &evolve_config,
        train: &train_config,
        transfer: Some(spec),
        seed_genome: Some(&cmd.seed_genome),
    };
    write_run_outputs(out_dir, &resolved, &result, Some(&report))?;
    println!(
        "{}: adapted (+{} in, -{} in, +{} out, -{} out), best validation MSE {}",
        out_dir.display(),
        report.inputs_added.len(),
        report.inputs_removed.len(),
        report.outputs_added.len(),
        report.outputs_removed.len(),
        result.best.fitness.unwrap_or(f64::INFINITY)
    );
    Ok(())
}

fn cmd_transfer(cmd: TransferCmd) -> Result<()> {
    let data = load_data(&cmd.data)?;
    let bytes = fs::read(&cmd.seed_genome)
        .with_context(|| format!("cannot read seed genome {}", cmd.seed_genome.display()))?;
    let seed = Genome::from_json(&bytes)?;

    if cmd.all_arms {
        let arms: [(&str, Strategy, WeightInit); 6] = [
            ("astl_uniform", Strategy::Astl, WeightInit::Uniform),
            ("astl_epi", Strategy::Astl, WeightInit::Epigenetic),
            ("nastl_uniform", Strategy::Nastl, WeightInit::Uniform),
            ("nastl_epi", Strategy::Nastl, WeightInit::Epigenetic),
            ("astl_nastl_uniform", Strategy::AstlPlusNastl, WeightInit::Uniform),
            ("astl_nastl_epi", Strategy::AstlPlusNastl, WeightInit::Epigenetic),
        ];
        for (idx, (name, strategy, weight_init)) in arms.into_iter().enumerate() {
            let spec = TransferSpec {
                target_input_params: data.inputs.clone(),
                target_output_params: data.outputs.clone(),
                strategy,
                weight_init,
            };
            let arm_seed = cmd.engine.seed.wrapping_add(idx as u64);
            transfer_arm(&cmd, &data, &seed, &spec, arm_seed, &cmd.out.join(name))?;
        }
    } else {
        let spec = TransferSpec {
            target_input_params: data.inputs.clone(),
            target_output_params: data.outputs.clone(),
            strategy: cmd.strategy.expect("clap enforces").into(),
            weight_init: cmd.weight_init.expect("clap enforces").into(),
        };
        transfer_arm(&cmd, &data, &seed, &spec, cmd.engine.seed, &cmd.out)?;
    }
    Ok(())
}

fn cmd_inspect(path: &Path) -> Result<()> {
    let bytes =
        fs::read(path).with_context(|| format!("cannot read genome {}", path.display()))?;
    let mut genome = Genome::from_json(&bytes)?;
    genome.mark_reachability();

    let count = |kind: NodeKind, enabled: bool| {
        genome.nodes.iter().filter(|n| n.kind == kind && n.enabled == enabled).count()
    };
    println!("genome {} (format v{})", path.display(), genome.format_version);
    println!(
        "fitness: {}",
        genome.fitness.map_or("untrained".to_string(), |f| f.to_string())
    );
    println!(
        "nodes: {} total ({} inputs, {} outputs, {} hidden enabled, {} hidden disabled)",
        genome.nodes.len(),
        count(NodeKind::Input, true),
        count(NodeKind::Output, true),
        count(NodeKind::Hidden, true),
        count(NodeKind::Hidden, false),
    );
    for cell in evorn::cells::CellType::ALL {
        let n = genome
            .hidden_nodes()
            .filter(|node| node.enabled && node.cell_type == cell)
            .count();
        if n > 0 {
            println!("  {cell:?}: {n}");
        }
    }
    let enabled_edges = genome.edges.iter().filter(|e| e.enabled).count();
    let recurrent = genome.edges.iter().filter(|e| e.enabled && e.recurrent).count();
    println!(
        "edges: {} total ({} enabled, {} of them recurrent, {} disabled)",
        genome.edges.len(),
        enabled_edges,
        recurrent,
        genome.edges.len() - enabled_edges,
    );
    let vestigial_nodes = genome
        .nodes
        .iter()
        .filter(|n| !n.enabled || !(n.forward_reachable && n.backward_reachable))
        .count();
    let vestigial_edges = genome
        .edges
        .iter()
        .filter(|e| !e.enabled || !(e.forward_reachable && e.backward_reachable))
        .count();
    println!("vestigial: {vestigial_nodes} nodes, {vestigial_edges} edges");
    match genome.network_stats() {
        Ok(stats) => println!(
            "stats: mu_w={:.6} sigma_w={:.6} mu_o={:.3} sigma_o={:.3} mu_i={:.3} sigma_i={:.3}",
            stats.mu_w, stats.sigma_w, stats.mu_o, stats.sigma_o, stats.mu_i, stats.sigma_i
        ),
        Err(_) => println!("stats: no enabled weights"),
    }
    Ok(())
}

fn cmd_synth_data(cmd: SynthCmd) -> Result<()> {
    let mut spec = match &cmd.spec {
        Some(path) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("cannot read synth spec {}", path.display()))?;
            serde_json::from_str(&text)
                .with_context(|| format!("invalid synth spec {}", path.display()))?
        }
        None => SynthSpec::default(),
    };
    if let Some(v) = cmd.channels {
        spec.channels = v;
    }
    if let Some(v) = cmd.series {
        spec.series = v;
    }
    if let Some(v) = cmd.length {
        spec.length = v;
    }
    if let Some(v) = cmd.coupling {
        spec.coupling = v;
    }
    if let Some(v) = cmd.noise {
        spec.noise = v;
    }
    if let Some(v) = cmd.seed {
        spec.seed = v;
    }
    let set = synthesize(&spec)?;

    let outputs = if cmd.outputs.is_empty() {
        vec![set.schema.last().unwrap().clone()]
    } else {
        for name in &cmd.outputs {
            if !set.schema.contains(name) {
                bail!("output channel {name} does not exist (channels: {})", set.schema.join(","));
            }
        }
        cmd.outputs.clone()
    };

    fs::create_dir_all(&cmd.out)?;
    for series in &set.series {
        let mut csv = set.schema.join(",");
        csv.push('\n');
        for t in 0..series.len() {
            let row: Vec<String> = series.channels.iter().map(|c| c[t].to_string()).collect();
            csv.push_str(&row.join(","));
            csv.push('\n');
        }
        fs::write(cmd.out.join(format!("{}.csv", series.name)), csv)?;
    }
    fs::write(cmd.out.join("inputs.txt"), set.schema.join("\n") + "\n")?;
    fs::write(cmd.out.join("outputs.txt"), outputs.join("\n") + "\n")?;
    fs::write(cmd.out.join("synth_spec.json"), serde_json::to_vec_pretty(&spec)?)?;
    println!(
        "wrote {} series of {} steps x {} channels to {}",
        set.series.len(),
        spec.length,
        spec.channels,
        cmd.out.display()
    );
    Ok(())
}
