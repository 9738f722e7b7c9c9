//! `duetlite` command line. Exit codes: 0 success, 1 configuration error,
//! 2 protocol or homomorphic-evaluation failure.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use duetlite_ckks::codec::{serialize_context, serialize_eval_keys, serialize_keyset};
use duetlite_ckks::keygen;
use duetlite_node::transport::TransportKind;

use crate::error::{he, DuetError, Result};
use crate::flow::{compare_splits, run_flow, FlowConfig, Seeds};
use crate::he::{rotation_steps, segment_context};
use crate::model::{gen_weights, required_depth, split_model, Layer, Model64, SplitPoint};
use crate::report::{emit_comparison, emit_flow, format_size, render_csv, OutputFormat};
use crate::selftest;

#[derive(Parser, Debug)]
#[command(name = "duetlite", version, about = "Split CNN inference over CKKS between a data owner and a data scientist")]
struct Cli {
    /// Seed for node identities, key generation and encryption.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the private inference flow on one or more images.
    Infer {
        #[command(flatten)]
        flow: FlowArgs,
        #[arg(long, value_parser = parse_split, default_value = "conv2")]
        split_point: SplitPoint,
        #[arg(long, default_value_t = 0)]
        image_index: usize,
        #[arg(long, default_value_t = 1)]
        image_count: usize,
    },
    /// Run both split points on the same images and compare them.
    Compare {
        #[command(flatten)]
        flow: FlowArgs,
        /// Number of images, starting at --image-index.
        #[arg(long, default_value_t = 20)]
        images: usize,
        #[arg(long, default_value_t = 0)]
        image_index: usize,
        /// Timings are medians over this many passes.
        #[arg(long, default_value_t = 3)]
        repeats: usize,
    },
    /// Protocol and HE property suites.
    Selftest {
        /// Run every suite at a tenth of its trial count.
        #[arg(long)]
        quick: bool,
        #[arg(long, default_value_t = 8192)]
        poly_degree: usize,
    },
    /// Generate the key set for a split and report its sizes.
    Keys {
        #[arg(long, value_parser = parse_split, default_value = "conv2")]
        split_point: SplitPoint,
        #[arg(long, default_value_t = 8192)]
        poly_degree: usize,
        #[arg(long, default_value_t = 26)]
        scale_bits: u32,
        /// Also write the full key set, secret included, to this file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate or inspect DLW1 weight files.
    Weights {
        #[command(subcommand)]
        action: WeightsAction,
    },
}

#[derive(Subcommand, Debug)]
enum WeightsAction {
    /// Write Gaussian weights for the given seed.
    Generate {
        #[arg(long, default_value_t = 0)]
        weight_seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the layers of a weights file.
    Inspect { path: PathBuf },
}

#[derive(Args, Debug)]
struct FlowArgs {
    #[arg(long, default_value_t = 0)]
    weight_seed: u64,
    /// DLW1 weights file; overrides --weight-seed.
    #[arg(long)]
    weights: Option<PathBuf>,
    /// Directory with t10k-* or sample-* IDX files [default: $DUETLITE_MNIST_DIR or data/mnist-sample].
    #[arg(long)]
    mnist_dir: Option<PathBuf>,
    #[arg(long, value_parser = parse_transport, default_value = "in_memory")]
    transport: TransportKind,
    #[arg(long, value_enum, default_value_t = OutputFormat::Table)]
    output: OutputFormat,
    #[arg(long, default_value_t = 8192)]
    poly_degree: usize,
    #[arg(long, default_value_t = 26)]
    scale_bits: u32,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_split(s: &str) -> std::result::Result<SplitPoint, String> {
    s.parse::<SplitPoint>().map_err(|e| e.to_string())
}

fn parse_transport(s: &str) -> std::result::Result<TransportKind, String> {
    s.parse()
}

impl FlowArgs {
    fn config(&self, seed: u64, split_point: SplitPoint, image_index: usize, image_count: usize) -> FlowConfig {
        FlowConfig {
            split_point,
            poly_degree: self.poly_degree,
            scale_bits: self.scale_bits,
            seed,
            weight_seed: self.weight_seed,
            image_index,
            image_count,
            transport: self.transport,
            output: self.output,
            mnist_dir: self.mnist_dir.clone(),
            weights_path: self.weights.clone(),
        }
    }
}

fn emit(out: &Option<PathBuf>, text: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| DuetError::io(p, e)),
        None => {
            let mut s = std::io::stdout().lock();
            s.write_all(text.as_bytes()).map_err(|e| DuetError::io("<stdout>", e))
        }
    }
}

fn check_params(poly_degree: usize, scale_bits: u32) -> Result<()> {
    if !poly_degree.is_power_of_two() || !(8..=32768).contains(&poly_degree) {
        return Err(DuetError::Config(format!("poly degree {poly_degree} must be a power of two in 8..=32768")));
    }
    if !(20..=40).contains(&scale_bits) {
        return Err(DuetError::Config(format!("scale bits {scale_bits} outside 20..=40")));
    }
    Ok(())
}

fn infer(cfg: &FlowConfig, out: &Option<PathBuf>) -> Result<()> {
    check_params(cfg.poly_degree, cfg.scale_bits)?;
    let reports = run_flow(cfg)?;
    let text = match cfg.output {
        OutputFormat::Json if reports.len() == 1 => emit_flow(&reports[0], OutputFormat::Json),
        OutputFormat::Json => serde_json::to_string_pretty(&reports).expect("reports serialize") + "\n",
        OutputFormat::Csv => render_csv(
            &reports
                .iter()
                .map(|r| (r.config.split_point, r.rows.as_slice()))
                .collect::<Vec<_>>(),
        ),
        OutputFormat::Table => reports.iter().map(|r| emit_flow(r, OutputFormat::Table)).collect::<Vec<_>>().join("\n"),
    };
    emit(out, &text)
}

fn keys(seed: u64, split: SplitPoint, poly_degree: usize, scale_bits: u32, out: &Option<PathBuf>) -> Result<()> {
    check_params(poly_degree, scale_bits)?;
    let split = split_model(&gen_weights(0), split)?;
    let shapes = split.server_shapes();
    let ctx = segment_context(&shapes, poly_degree, scale_bits)?;
    let steps = rotation_steps(&shapes, ctx.slot_count())?;
    let t = Instant::now();
    let keys = keygen(&ctx, &steps, Seeds::derive(seed).keygen).map_err(he("key generation"))?;
    let elapsed = t.elapsed();
    let mut text = format!(
        "depth {} chain {:?} = {} bits (+{}-bit special prime), N = {}\n",
        required_depth(&shapes)?,
        ctx.chain_bit_lengths(),
        ctx.total_modulus_bits(),
        duetlite_ckks::context::SPECIAL_PRIME_BITS,
        ctx.poly_degree()
    );
    text += &format!("rotation steps {steps:?}\n");
    text += &format!("context        {}\n", format_size(serialize_context(&ctx).len()));
    text += &format!("evaluation keys {} (generated in {:.1} ms)\n", format_size(serialize_eval_keys(&ctx, &keys.eval).len()), elapsed.as_secs_f64() * 1e3);
    if let Some(p) = out {
        let bytes = serialize_keyset(&ctx, &keys);
        std::fs::write(p, &bytes).map_err(|e| DuetError::io(p, e))?;
        text += &format!("wrote full key set ({}) to {}\n", format_size(bytes.len()), p.display());
    }
    emit(&None, &text)
}

fn weights(action: &WeightsAction) -> Result<()> {
    match action {
        WeightsAction::Generate { weight_seed, out } => {
            let m = gen_weights(*weight_seed);
            m.save(out)?;
            emit(&None, &format!("wrote {} parameters to {}\n", m.parameter_count(), out.display()))
        }
        WeightsAction::Inspect { path } => {
            let m = Model64::load(path)?;
            let mut text = String::new();
            for l in &m.layers {
                let detail = match &l.layer {
                    Layer::Conv(c) => format!(
                        "conv {}->{} {k}x{k} stride {} pad {}",
                        c.in_channels,
                        c.out_channels,
                        c.stride,
                        c.padding,
                        k = c.kernel
                    ),
                    Layer::Dense(d) => format!("fc {}->{}", d.weights.cols(), d.weights.rows()),
                    Layer::Square => "square".into(),
                    Layer::Flatten => "flatten".into(),
                };
                text += &format!("{:<18} {detail}\n", l.name);
            }
            text += &format!("{} parameters\n", m.parameter_count());
            emit(&None, &text)
        }
    }
}

fn selftest(quick: bool, poly_degree: usize) -> Result<bool> {
    check_params(poly_degree, 26)?;
    let mut ok = true;
    for (name, check) in selftest::run_all(if quick { 0.1 } else { 1.0 }, poly_degree) {
        match check {
            Ok(msg) => println!("PASS {name}: {msg}"),
            Err(msg) => {
                ok = false;
                println!("FAIL {name}: {msg}");
            }
        }
    }
    Ok(ok)
}

fn run(cli: Cli) -> Result<i32> {
    match &cli.command {
        Command::Infer {
            flow,
            split_point,
            image_index,
            image_count,
        } => infer(&flow.config(cli.seed, *split_point, *image_index, *image_count), &flow.out)?,
        Command::Compare {
            flow,
            images,
            image_index,
            repeats,
        } => {
            let cfg = flow.config(cli.seed, SplitPoint::Conv2, *image_index, *images);
            check_params(cfg.poly_degree, cfg.scale_bits)?;
            let report = compare_splits(&cfg, *repeats)?;
            emit(&flow.out, &emit_comparison(&report, cfg.output))?;
        }
        Command::Selftest { quick, poly_degree } => {
            if !selftest(*quick, *poly_degree)? {
                return Ok(2);
            }
        }
        Command::Keys {
            split_point,
            poly_degree,
            scale_bits,
            out,
        } => keys(cli.seed, *split_point, *poly_degree, *scale_bits, out)?,
        Command::Weights { action } => weights(action)?,
    }
    Ok(0)
}

/// Parses `args` (program name first) and runs the command.
pub fn cli_main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
