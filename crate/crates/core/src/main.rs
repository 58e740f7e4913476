use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use gft::accounting::{model_bits, EnergyConstants, ParamCounts};
use gft::arch::parse_arch;
use gft::checkpoint::Checkpoint;
use gft::config::{parse_override, RunConfig};
use gft::data::{gen_separable, DatasetSpec};
use gft::hardness::{
    brute_force_sat, brute_force_separator, parse_dimacs, random_cnf, reduce, reduce_with_multiplicity,
    verify_equivalence, SeparabilityInstance,
};
use gft::metrics::{write_metrics, write_summary};
use gft::trainer::{evaluate, train};
use gft::{build_network, BitWidth, Error, LayerKind, LayerSpec, LossKind, Result};

#[derive(Parser)]
#[command(name = "gft", version, about = "Gradient-free training of quantized networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train from a config file; writes metrics, summary, checkpoint and resolved config.
    Train {
        config: PathBuf,
        /// Override a config key, e.g. `--set k0=0.5`. Repeatable.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Accuracy and mean loss of a checkpoint on a dataset.
    Eval {
        checkpoint: PathBuf,
        /// `mnist:<dir>`, `mnist-test:<dir>` or `synthetic:<d>,<n>,<margin>,<seed>`.
        dataset: String,
        #[arg(long, default_value = "softmax_xent")]
        loss: String,
    },
    /// Optimizer-step energy and storage for a configuration, without training.
    Energy(EnergyArgs),
    /// 3-SAT to ±1-separability experiments.
    Hardness {
        #[command(subcommand)]
        action: HardnessAction,
    },
    /// Write synthetic data.
    GenData {
        #[command(subcommand)]
        kind: GenKind,
    },
}

#[derive(Args)]
struct EnergyArgs {
    /// Architecture string such as `784-256q2-10`.
    #[arg(long, conflicts_with_all = ["fp_params", "q_params"])]
    arch: Option<String>,
    /// Full-precision parameter count (instead of --arch).
    #[arg(long)]
    fp_params: Option<u64>,
    /// Quantized parameter count (instead of --arch), at --bits.
    #[arg(long)]
    q_params: Option<u64>,
    /// Bit width for --q-params, or for every quantized layer of --arch.
    #[arg(long)]
    bits: Option<u8>,
    #[arg(long, default_value_t = 1)]
    steps: u64,
    #[arg(long)]
    adamw_pj: Option<f64>,
    #[arg(long)]
    gft_ternary_pj: Option<f64>,
    #[arg(long)]
    gft_multibit_pj: Option<f64>,
}

#[derive(Subcommand)]
enum HardnessAction {
    /// Reduce a DIMACS formula to a separability instance (CSV).
    Reduce {
        cnf: PathBuf,
        /// Output CSV; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Encode repeated variables by net occurrence count.
        #[arg(long)]
        allow_repeats: bool,
    },
    /// Brute-force both problems.
    Decide { cnf: PathBuf },
    /// Check that both deciders agree; exits 3 if they do not.
    Verify { cnf: PathBuf },
}

#[derive(Subcommand)]
enum GenKind {
    /// Linearly separable points labelled by a planted ±1 vector (CSV, label ±1 last).
    Separable {
        #[arg(long)]
        d: usize,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0.0)]
        margin: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Random 3-CNF over distinct variables per clause (DIMACS).
    Cnf {
        #[arg(long)]
        vars: usize,
        #[arg(long)]
        clauses: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

const DISAGREEMENT_EXIT: u8 = 3;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(command: Command) -> Result<ExitCode> {
    match command {
        Command::Train { config, overrides } => cmd_train(&config, &overrides),
        Command::Eval { checkpoint, dataset, loss } => cmd_eval(&checkpoint, &dataset, &loss),
        Command::Energy(args) => cmd_energy(&args),
        Command::Hardness { action } => cmd_hardness(action),
        Command::GenData { kind } => cmd_gen(kind),
    }
}

fn cmd_train(path: &Path, overrides: &[String]) -> Result<ExitCode> {
    let text = fs::read_to_string(path)?;
    let overrides = overrides.iter().map(|s| parse_override(s)).collect::<Result<Vec<_>>>()?;
    let cfg = RunConfig::parse_with_overrides(&text, &overrides)?;
    let dataset = cfg.dataset.load()?;
    let eval = cfg.eval_dataset.as_ref().map(DatasetSpec::load).transpose()?;
    let train_cfg = cfg.train_config(dataset.len());
    fs::create_dir_all(&cfg.out_dir)?;
    fs::write(cfg.out_dir.join("config.resolved"), cfg.to_resolved(train_cfg.iterations))?;

    let network = build_network(&cfg.arch, train_cfg.seed)?;
    let outcome = train(&train_cfg, network, &dataset, eval.as_ref())?;
    let state = &outcome.state;
    fs::write(cfg.out_dir.join("metrics.csv"), write_metrics(&state.history))?;
    let summary = write_summary(state, outcome.final_eval.as_ref());
    fs::write(cfg.out_dir.join("summary.txt"), &summary)?;
    Checkpoint {
        seed: train_cfg.seed,
        iteration: state.t,
        network: state.network.clone(),
        optimizer: state.optimizer.clone(),
    }
    .save(&cfg.out_dir.join("checkpoint.bin"))?;
    print!("{summary}");
    Ok(ExitCode::SUCCESS)
}

fn cmd_eval(path: &Path, dataset: &str, loss: &str) -> Result<ExitCode> {
    let ck = Checkpoint::load(path)?;
    let ds = dataset.parse::<DatasetSpec>()?.load()?;
    let e = evaluate(&ck.network, &ds, loss.parse::<LossKind>()?)?;
    println!("accuracy = {}", e.accuracy);
    println!("mean_loss = {}", e.mean_loss);
    println!("correct = {}", e.correct);
    println!("total = {}", e.total);
    Ok(ExitCode::SUCCESS)
}

fn cmd_energy(args: &EnergyArgs) -> Result<ExitCode> {
    let mut c = EnergyConstants::default();
    if let Some(v) = args.adamw_pj {
        c.adamw_pj_per_param = v;
    }
    if let Some(v) = args.gft_ternary_pj {
        c.gft_ternary_pj_per_param = v;
    }
    if let Some(v) = args.gft_multibit_pj {
        c.gft_multibit_pj_per_param = v;
    }
    c.validate()?;
    let bits = args.bits.map(BitWidth::new).transpose()?;
    let specs: Vec<LayerSpec> = match &args.arch {
        Some(a) => {
            let mut specs = parse_arch(a)?;
            if let Some(b) = bits {
                for s in specs.iter_mut().filter(|s| s.is_quantized()) {
                    s.kind = LayerKind::Quantized(b);
                }
            }
            specs
        }
        None => {
            if args.fp_params.is_none() && args.q_params.is_none() {
                return Err(Error::Validation("give --arch or --fp-params/--q-params".into()));
            }
            let q_kind = LayerKind::Quantized(bits.unwrap_or(BitWidth::TERNARY));
            [(args.fp_params, LayerKind::FullPrecision), (args.q_params, q_kind)]
                .into_iter()
                .filter_map(|(n, kind)| n.map(|n| flat_spec(n, kind)))
                .collect()
        }
    };
    let counts = ParamCounts::of(&specs);
    let per_step = counts.step_energy(&c)?;
    let total_params = counts.total();
    let baseline_per_step = c.adamw_pj_per_param * total_params as f64;
    let steps = args.steps as f64;
    println!("fp_params = {}", counts.full_precision);
    println!("quantized_params = {}", counts.quantized_total());
    println!("steps = {}", args.steps);
    println!("model_bits = {}", model_bits(&specs));
    println!("fp32_model_bits = {}", total_params * 32);
    println!("step_energy_pj = {per_step}");
    println!("total_energy_pj = {}", per_step * steps);
    println!("total_energy_j = {}", per_step * steps * 1e-12);
    println!("adamw_step_energy_pj = {baseline_per_step}");
    println!("adamw_total_energy_pj = {}", baseline_per_step * steps);
    if total_params > 0 {
        println!("ratio_vs_adamw = {}", per_step / baseline_per_step);
    } else {
        println!("ratio_vs_adamw = n/a");
    }
    Ok(ExitCode::SUCCESS)
}

/// A single `1 x n` layer carrying `n` parameters.
fn flat_spec(n: u64, kind: LayerKind) -> LayerSpec {
    LayerSpec {
        d_in: 1,
        d_out: n as usize,
        kind,
        activation: gft::Activation::Identity,
    }
}

fn read_cnf(path: &Path) -> Result<gft::hardness::CnfFormula> {
    parse_dimacs(&fs::read_to_string(path)?)
}

fn cmd_hardness(action: HardnessAction) -> Result<ExitCode> {
    match action {
        HardnessAction::Reduce { cnf, out, allow_repeats } => {
            let f = read_cnf(&cnf)?;
            let inst = if allow_repeats { reduce_with_multiplicity(&f)? } else { reduce(&f)? };
            match out {
                Some(p) => fs::write(p, inst.to_csv())?,
                None => print!("{}", inst.to_csv()),
            }
        }
        HardnessAction::Decide { cnf } => {
            let f = read_cnf(&cnf)?;
            let sat = brute_force_sat(&f)?;
            let sep = brute_force_separator(&reduce(&f)?)?;
            println!("satisfiable = {}", sat.is_some());
            println!("separable = {}", sep.is_some());
        }
        HardnessAction::Verify { cnf } => {
            let report = verify_equivalence(&read_cnf(&cnf)?)?;
            print!("{}", report.to_key_values());
            if !report.agree() {
                return Ok(ExitCode::from(DISAGREEMENT_EXIT));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_gen(kind: GenKind) -> Result<ExitCode> {
    match kind {
        GenKind::Separable { d, n, margin, seed, out } => {
            let data = gen_separable(d, n, margin, seed)?;
            let inst = SeparabilityInstance::from_dataset(&data.dataset)?;
            fs::write(out, inst.to_csv())?;
            let w: Vec<String> = data.planted.iter().map(i8::to_string).collect();
            println!("planted = {}", w.join(","));
        }
        GenKind::Cnf { vars, clauses, seed, out } => {
            fs::write(out, random_cnf(vars, clauses, seed)?.to_dimacs())?;
        }
    }
    Ok(ExitCode::SUCCESS)
}
