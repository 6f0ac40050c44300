mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::Usage;
use config::RunConfig;

const PRECEDENCE: &str = "\
Configuration precedence: command-line flags > --config file > built-in defaults.
The config file is one JSON object whose keys match the long flag names
(snake_case, e.g. \"tail_radius\", \"l\": [8]). A meta.json sidecar from an
earlier run is accepted too, which reruns that configuration.

Each run writes to <out>/<subcommand>-<hash>, where the hash covers the fully
resolved configuration. Exit codes: 0 ok, 1 failed check, 2 invalid input,
3 kernel, 4 green, 5 banach, 6 decomp, 7 fitting, 8 io.";

#[derive(Parser)]
#[command(name = "spreadout", version, about = "Spread-out lattice kernels, Green functions and deconvolution checks", after_help = PRECEDENCE)]
struct Cli {
    /// JSON config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Root directory for run outputs.
    #[arg(long, global = true, default_value = "runs")]
    out: PathBuf,
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build kernels and report moments, envelope and symbol extremes.
    Kernel(KernelArgs),
    /// Evaluate a Green function of delta - mu D.
    Green(GreenArgs),
    /// Leading-order decomposition and remainder for a synthetic model.
    Decomp(ModelArgs),
    /// Neumann inversion and reduction of a synthetic h.
    Deconv(DeconvArgs),
    /// Bootstrap function over a z grid.
    Bootstrap(BootstrapArgs),
    /// Run the acceptance criteria.
    VerifyAll(VerifyArgs),
}

#[derive(Args, Clone, Default)]
struct KernelFlags {
    #[arg(long)]
    d: Option<usize>,
    /// uniform, tent or table.
    #[arg(long)]
    profile: Option<String>,
    /// Profile table (JSON) for --profile table.
    #[arg(long)]
    table: Option<PathBuf>,
    /// Spread-out range; comma separated for several.
    #[arg(long = "L", value_delimiter = ',')]
    l: Option<Vec<usize>>,
}

impl KernelFlags {
    fn apply(&self, c: &mut RunConfig) {
        c.overlay(&RunConfig { d: self.d, profile: self.profile.clone(), table: self.table.clone(), l: self.l.clone(), ..Default::default() });
    }
}

#[derive(Args)]
struct KernelArgs {
    #[command(flatten)]
    k: KernelFlags,
}

#[derive(Args)]
struct GreenArgs {
    #[command(flatten)]
    k: KernelFlags,
    /// Use the nearest-neighbour walk.
    #[arg(long)]
    nn: bool,
    #[arg(long)]
    mu: Option<f64>,
    /// axis:lo..hi, box:R or list:x1,..;y1,..
    #[arg(long)]
    points: Option<String>,
    /// decomposed, spectrum or series.
    #[arg(long)]
    method: Option<String>,
    /// Torus grid sizes, increasing.
    #[arg(long, value_delimiter = ',')]
    ns: Option<Vec<usize>>,
}

#[derive(Args)]
struct PiFlags {
    /// Sets beta0 and beta1 together.
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    beta0: Option<f64>,
    #[arg(long)]
    beta1: Option<f64>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    tail_radius: Option<usize>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    ns: Option<Vec<usize>>,
}

impl PiFlags {
    fn apply(&self, c: &mut RunConfig) {
        let mut o = RunConfig {
            beta: self.beta,
            beta0: self.beta0,
            beta1: self.beta1,
            rho: self.rho,
            tail_radius: self.tail_radius,
            epsilon: self.epsilon,
            ns: self.ns.clone(),
            ..Default::default()
        };
        if self.beta.is_some() {
            o.beta0 = o.beta0.or(self.beta);
            o.beta1 = o.beta1.or(self.beta);
        }
        c.overlay(&o);
    }
}

#[derive(Args)]
struct ModelArgs {
    #[command(flatten)]
    k: KernelFlags,
    #[command(flatten)]
    pi: PiFlags,
    /// Defaults to z_c.
    #[arg(long)]
    z: Option<f64>,
    #[arg(long)]
    points: Option<String>,
}

#[derive(Args)]
struct DeconvArgs {
    #[command(flatten)]
    k: KernelFlags,
    #[arg(long)]
    beta0: Option<f64>,
    #[arg(long)]
    beta1: Option<f64>,
    /// Tail decay beyond d.
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long)]
    tail_radius: Option<usize>,
    #[arg(long)]
    zeta: Option<f64>,
    /// Truncation radius of the series.
    #[arg(long)]
    radius: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    z: Option<f64>,
}

#[derive(Args)]
struct BootstrapArgs {
    #[command(flatten)]
    k: KernelFlags,
    #[command(flatten)]
    pi: PiFlags,
    /// lo:hi:count; either end may be zc.
    #[arg(long)]
    zgrid: Option<String>,
    #[arg(long)]
    box_radius: Option<usize>,
    /// L values for K_S.
    #[arg(long = "ks-L", value_delimiter = ',')]
    ks_l: Option<Vec<usize>>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Reduced grids and loosened tolerances.
    #[arg(long)]
    fast: bool,
    /// Criterion ids to run.
    #[arg(long, value_delimiter = ',')]
    only: Option<Vec<usize>>,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Kernel(_) => "kernel",
            Command::Green(_) => "green",
            Command::Decomp(_) => "decomp",
            Command::Deconv(_) => "deconv",
            Command::Bootstrap(_) => "bootstrap",
            Command::VerifyAll(_) => "verify-all",
        }
    }

    fn flags(&self) -> RunConfig {
        let mut c = RunConfig::default();
        match self {
            Command::Kernel(a) => a.k.apply(&mut c),
            Command::Green(a) => {
                a.k.apply(&mut c);
                c.overlay(&RunConfig {
                    nn: a.nn.then_some(true),
                    mu: a.mu,
                    points: a.points.clone(),
                    method: a.method.clone(),
                    ns: a.ns.clone(),
                    ..Default::default()
                });
            }
            Command::Decomp(a) => {
                a.k.apply(&mut c);
                a.pi.apply(&mut c);
                c.overlay(&RunConfig { z: a.z, points: a.points.clone(), ..Default::default() });
            }
            Command::Deconv(a) => {
                a.k.apply(&mut c);
                c.overlay(&RunConfig {
                    beta0: a.beta0,
                    beta1: a.beta1,
                    theta: a.theta,
                    tail_radius: a.tail_radius,
                    zeta: a.zeta,
                    radius: a.radius,
                    tol: a.tol,
                    z: a.z,
                    ..Default::default()
                });
            }
            Command::Bootstrap(a) => {
                a.k.apply(&mut c);
                a.pi.apply(&mut c);
                c.overlay(&RunConfig {
                    zgrid: a.zgrid.clone(),
                    box_radius: a.box_radius,
                    ks_l: a.ks_l.clone(),
                    ..Default::default()
                });
            }
            Command::VerifyAll(a) => c.overlay(&RunConfig { fast: a.fast.then_some(true), only: a.only.clone(), ..Default::default() }),
        }
        c
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<Usage>().is_some() {
        return 2;
    }
    if let Some(e) = err.downcast_ref::<spreadout::Error>() {
        return match e.family() {
            "validation" => 2,
            "kernel" => 3,
            "green" => 4,
            "banach" => 5,
            "decomp" => 6,
            "fitting" => 7,
            _ => 8,
        };
    }
    if err.downcast_ref::<std::io::Error>().is_some() {
        return 8;
    }
    1
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    let mut cfg = match &cli.config {
        Some(p) => config::load(p).map_err(|e| Usage(format!("{e:#}")))?,
        None => RunConfig::default(),
    };
    cfg.overlay(&cli.command.flags());
    if cli.seed.is_some() {
        cfg.seed = cli.seed;
    }
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Usage("--threads must be at least 1".into()).into());
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let out = cli.out.as_path();
    let outcome = match cli.command {
        Command::Kernel(_) => commands::kernel(&mut cfg, out),
        Command::Green(_) => commands::green(&mut cfg, out),
        Command::Decomp(_) => commands::decomp(&mut cfg, out),
        Command::Deconv(_) => commands::deconv(&mut cfg, out),
        Command::Bootstrap(_) => commands::bootstrap(&mut cfg, out),
        Command::VerifyAll(_) => commands::verify_all(&mut cfg, out),
    }?;
    println!("wrote {}", outcome.dir.display());
    Ok(outcome.ok)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let name = cli.command.name();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("spreadout {name}: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
