//! `metric-cubature`: partitions, cubature rules, decay verification and
//! constants from the command line.
//!
//! Every JSON artifact embeds the resolved configuration. Failures print a
//! single JSON error record on stderr and exit with 2 (configuration or
//! input) or 3 (numerical).

mod config;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use metric_cubature::discretizer::{build_euclidean, build_plain, build_signed, monte_carlo, CubatureRule, DensityField, NormKind, RuleMethod};
use metric_cubature::error_harness::{
    bound_constants, compare_methods, decay_experiment, euclidean_experiment, DecayConfig, EuclidConfig,
};
use metric_cubature::function_classes::{basis_for, KernelProfile};
use metric_cubature::geometry::{sample_uniform, SpaceSpec, WeightedPointCloud};
use metric_cubature::moment_match::CompressMethod;
use metric_cubature::net_partition::besicovitch::NxPolicy;
use metric_cubature::net_partition::{partition_space, PartitionParams};
use metric_cubature::seeds;

const THREADS_ENV: &str = "METRIC_CUBATURE_THREADS";
const SUBCOMMANDS: [&str; 4] = ["partition", "cubature", "verify", "constants"];

/// Seed stream tags.
const CLOUD_TAG: u64 = 0xc10d;
const RULE_TAG: u64 = 0x7b1e;

#[derive(Parser, Debug)]
#[command(name = "metric-cubature", version, about = "Equal-measure partitions and moment-matched cubature")]
struct Cli {
    /// Worker threads (default: $METRIC_CUBATURE_THREADS, else all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Split a fine cloud into N cells of equal mass and small diameter.
    #[command(args_override_self = true)]
    Partition(PartitionArgs),
    /// Build a cubature rule.
    #[command(args_override_self = true)]
    Cubature(CubatureArgs),
    /// Measure sup errors across N and fit decay slopes.
    #[command(args_override_self = true)]
    Verify(VerifyArgs),
    /// Print the theoretical constants.
    #[command(args_override_self = true)]
    Constants(ConstantsArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize)]
#[serde(rename_all = "snake_case")]
enum SpaceName {
    Sphere,
    Ball,
}

#[derive(Args, Debug, Clone, Serialize)]
struct SpaceArgs {
    #[arg(long, value_enum, default_value = "sphere")]
    space: SpaceName,
    /// Intrinsic dimension (S^d or the ball in R^d).
    #[arg(long, default_value_t = 2)]
    d: usize,
    /// Ball radius.
    #[arg(long, default_value_t = 1.0)]
    radius: f64,
}

impl SpaceArgs {
    fn spec(&self) -> metric_cubature::Result<SpaceSpec> {
        match self.space {
            SpaceName::Sphere => SpaceSpec::sphere(self.d),
            SpaceName::Ball => SpaceSpec::ball(self.d, self.radius),
        }
    }
}

#[derive(Args, Debug, Clone, Serialize)]
struct CloudArgs {
    /// Size of the uniform fine cloud standing in for the measure.
    #[arg(long, default_value_t = 20_000)]
    fine: usize,
    /// Read the cloud from a CSV file instead of sampling it.
    #[arg(long)]
    cloud: Option<PathBuf>,
    #[arg(long = "master-seed", alias = "seed", default_value_t = 7)]
    master_seed: u64,
}

impl CloudArgs {
    fn load(&self, space: &SpaceSpec) -> metric_cubature::Result<WeightedPointCloud> {
        match &self.cloud {
            Some(path) => {
                let cloud = WeightedPointCloud::read_csv(File::open(path)?)?;
                if cloud.space.kind != space.kind {
                    return Err(input(format!(
                        "cloud file holds a {} cloud, the command asks for {}",
                        cloud.space.label(),
                        space.label()
                    )));
                }
                Ok(cloud)
            }
            None => sample_uniform(space, self.fine, seeds::derive(self.master_seed, &[CLOUD_TAG])),
        }
    }
}

#[derive(Args, Debug, Clone, Serialize)]
struct PartitionArgs {
    #[command(flatten)]
    space: SpaceArgs,
    #[command(flatten)]
    cloud: CloudArgs,
    /// Number of cells.
    #[arg(long = "N")]
    #[serde(rename = "N")]
    n: usize,
    /// Net radius (default: derived from N and the space).
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long, default_value = "part.json")]
    out: PathBuf,
    /// Also write the cloud as CSV.
    #[arg(long = "cloud-out")]
    cloud_out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Serialize)]
struct RuleArgs {
    /// Profile degree n0 (basis degree n0 on the sphere, 2 n0 on the ball).
    #[arg(long, default_value_t = 1)]
    degree: usize,
    /// Density: const, zero, const:<c> or sign:<k>.
    #[arg(long, default_value = "const")]
    density: String,
    /// Per-cell compression: caratheodory or nnls.
    #[arg(long, default_value = "caratheodory", value_parser = parse_compress)]
    compress: CompressChoice,
    /// Covering multiplicity policy for the ball: adaptive or fixed:<nx>.
    #[arg(long, default_value = "adaptive", value_parser = parse_policy)]
    policy: PolicyChoice,
}

#[derive(Args, Debug, Clone, Serialize)]
struct CubatureArgs {
    #[command(flatten)]
    space: SpaceArgs,
    #[command(flatten)]
    cloud: CloudArgs,
    #[command(flatten)]
    rule: RuleArgs,
    /// Number of cells (node budget for the euclidean and mc methods).
    #[arg(long = "N")]
    #[serde(rename = "N")]
    n: usize,
    /// plain, signed, euclidean or mc.
    #[arg(long, default_value = "plain", value_parser = parse_method)]
    method: MethodChoice,
    /// Profile to record with the rule (optional).
    #[arg(long)]
    phi: Option<String>,
    #[arg(long, default_value = "rule.json")]
    out: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize)]
struct VerifyArgs {
    #[command(flatten)]
    space: SpaceArgs,
    #[command(flatten)]
    rule: RuleArgs,
    /// Profile: abs, linear, const, const:<c> or poly:knots=..;coeffs=..
    #[arg(long, default_value = "abs")]
    phi: String,
    #[arg(long, value_delimiter = ',', default_value = "plain,mc", value_parser = parse_method)]
    methods: Vec<MethodChoice>,
    #[arg(long = "N", value_delimiter = ',', required = true)]
    #[serde(rename = "N")]
    n: Vec<usize>,
    #[arg(long, default_value_t = 20)]
    seeds: usize,
    #[arg(long = "master-seed", alias = "seed", default_value_t = 7)]
    master_seed: u64,
    /// Fine cloud size per N (default: 50 on the sphere, 20 for the euclidean method).
    #[arg(long = "fine-factor")]
    fine_factor: Option<usize>,
    /// Minimum fine cloud size for the euclidean method.
    #[arg(long = "fine-min", default_value_t = 20_000)]
    fine_min: usize,
    #[arg(long = "eval-cap", default_value_t = 20_000)]
    eval_cap: usize,
    #[arg(long = "eval-per-n", default_value_t = 50)]
    eval_per_n: usize,
    #[arg(long, default_value = "report.json")]
    out: PathBuf,
    /// Also write one CSV row per (method, N, seed).
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Serialize)]
struct ConstantsArgs {
    #[arg(long)]
    d: usize,
    /// Number of profile pieces.
    #[arg(long = "l", default_value_t = 2)]
    ell: usize,
    /// Regularity exponent (default: d).
    #[arg(long)]
    beta: Option<f64>,
    /// Evaluate the bound at these N.
    #[arg(long = "N", value_delimiter = ',')]
    #[serde(rename = "N")]
    n: Vec<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, Serialize)]
#[serde(transparent)]
struct CompressChoice(CompressMethod);

#[derive(Debug, Clone, Copy, Serialize)]
#[serde(transparent)]
struct PolicyChoice(NxPolicy);

#[derive(Debug, Clone, Copy, Serialize)]
#[serde(transparent)]
struct MethodChoice(RuleMethod);

fn parse_compress(s: &str) -> Result<CompressChoice, String> {
    s.parse().map(CompressChoice).map_err(|e: metric_cubature::Error| e.to_string())
}

fn parse_policy(s: &str) -> Result<PolicyChoice, String> {
    s.parse().map(PolicyChoice).map_err(|e: metric_cubature::Error| e.to_string())
}

fn parse_method(s: &str) -> Result<MethodChoice, String> {
    s.parse().map(MethodChoice).map_err(|e: metric_cubature::Error| e.to_string())
}

/// A failure with its exit code.
struct Failure {
    code: u8,
    kind: &'static str,
    module: String,
    message: String,
}

impl From<metric_cubature::Error> for Failure {
    fn from(e: metric_cubature::Error) -> Self {
        use metric_cubature::Error as E;
        let (code, kind) = match &e {
            E::InvalidInput { .. } => (2, "invalid_input"),
            E::DimensionMismatch { .. } => (2, "dimension_mismatch"),
            E::Io(_) => (2, "io"),
            E::Numerical { .. } => (3, "numerical"),
        };
        Failure {
            code,
            kind,
            module: e.module().to_string(),
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        metric_cubature::Error::from(e).into()
    }
}

fn input(message: impl Into<String>) -> metric_cubature::Error {
    metric_cubature::Error::InvalidInput {
        module: "cli",
        message: message.into(),
    }
}

fn schema(message: impl Into<String>) -> Failure {
    Failure {
        code: 2,
        kind: "config",
        module: "cli".to_string(),
        message: message.into(),
    }
}

/// Opens an output file up front so unwritable paths fail before any work.
fn create(path: &PathBuf) -> Result<BufWriter<File>, Failure> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| schema(format!("cannot write {}: {e}", path.display())))
}

fn write_json<T: Serialize>(mut out: BufWriter<File>, value: &T) -> Result<(), Failure> {
    serde_json::to_writer_pretty(&mut out, value).map_err(metric_cubature::Error::from)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

fn run_partition(a: &PartitionArgs) -> Result<(), Failure> {
    if a.n == 0 {
        return Err(schema("N must be >= 1"));
    }
    if a.cloud.cloud.is_none() && a.cloud.fine < a.n {
        return Err(schema("fine must be >= N"));
    }
    let out = create(&a.out)?;
    let cloud_out = a.cloud_out.as_ref().map(create).transpose()?;
    let space = a.space.spec()?;
    let cloud = a.cloud.load(&space)?;
    println!("cloud: {} points on {}", cloud.len(), space.label());
    let mut params = PartitionParams::new(a.n);
    params.delta = a.delta;
    let part = partition_space(&cloud, &params)?;
    println!(
        "partition: {} cells, delta {:.6}, max diameter {:.6}, max mass deviation {:.3e}",
        part.cells.len(),
        part.delta,
        part.max_diameter(),
        part.max_mass_deviation()
    );
    if let Some(w) = cloud_out {
        cloud.write_csv(w)?;
    }
    write_json(out, &json!({ "command": "partition", "config": a, "partition": part }))
}

fn density_norm(method: RuleMethod) -> NormKind {
    match method {
        RuleMethod::Euclidean => NormKind::L1Normalized,
        _ => NormKind::SupNormalized,
    }
}

fn run_cubature(a: &CubatureArgs) -> Result<(), Failure> {
    if a.n == 0 {
        return Err(schema("N must be >= 1"));
    }
    let out = create(&a.out)?;
    let space = a.space.spec()?;
    let cloud = a.cloud.load(&space)?;
    println!("cloud: {} points on {}", cloud.len(), space.label());
    let method = a.method.0;
    let g = DensityField::parse(&a.rule.density, &cloud, density_norm(method))?;
    let basis = basis_for(&space, a.rule.degree)?;
    let seed = seeds::derive(a.cloud.master_seed, &[RULE_TAG]);
    let compress = a.rule.compress.0;
    let constant_one = g.values.iter().all(|&v| v == 1.0);
    let mut rule: CubatureRule = match method {
        RuleMethod::Plain => {
            if !constant_one {
                return Err(schema("the plain rule needs density const; use --method signed"));
            }
            let part = partition_space(&cloud, &PartitionParams::new(a.n))?;
            println!("partition: {} cells, max diameter {:.6}", part.cells.len(), part.max_diameter());
            build_plain(&part, &cloud, &basis, seed, compress)?
        }
        RuleMethod::Signed => build_signed(&cloud, &g, a.n, &basis, seed, compress)?.rule,
        RuleMethod::Euclidean => build_euclidean(&cloud, &g, a.n, &basis, a.rule.policy.0, seed, compress)?,
        RuleMethod::MonteCarlo => monte_carlo(&cloud, (!constant_one).then_some(&g), a.n, seed)?,
    };
    if let Some(phi) = &a.phi {
        rule = rule.with_profile(&KernelProfile::parse(phi, &space)?);
    }
    println!(
        "cubature: {:?} rule with {} nodes, r = {}, weight sum {:.12}",
        method,
        rule.len(),
        basis.r,
        rule.weight_sum()
    );
    write_json(out, &json!({ "command": "cubature", "config": a, "rule": rule }))
}

fn run_verify(a: &VerifyArgs) -> Result<(), Failure> {
    if a.n.is_empty() || a.n.contains(&0) {
        return Err(schema("N values must be >= 1"));
    }
    if a.n.windows(2).any(|w| w[0] >= w[1]) {
        return Err(schema("N values must be strictly increasing"));
    }
    if a.seeds == 0 {
        return Err(schema("seeds must be >= 1"));
    }
    let out = create(&a.out)?;
    let csv_out = a.csv.as_ref().map(create).transpose()?;
    let space = a.space.spec()?;
    let methods: Vec<RuleMethod> = a.methods.iter().map(|m| m.0).collect();
    if methods.contains(&RuleMethod::Euclidean) {
        if methods.len() != 1 {
            return Err(schema("the euclidean method runs on its own"));
        }
        let mut cfg = EuclidConfig::new(space, &a.phi, a.n.clone());
        cfg.density = a.rule.density.clone();
        cfg.degree = a.rule.degree;
        cfg.seeds = a.seeds;
        cfg.master_seed = a.master_seed;
        cfg.policy = a.rule.policy.0;
        cfg.fine_min = a.fine_min;
        if let Some(f) = a.fine_factor {
            cfg.fine_factor = f;
        }
        cfg.eval_cap = a.eval_cap;
        cfg.eval_per_n = a.eval_per_n;
        cfg.compress = a.rule.compress.0;
        let report = euclidean_experiment(&cfg)?;
        for (i, n) in report.n_values.iter().enumerate() {
            println!(
                "verify: n = {n}, cells {}, median sup error {:.3e}",
                report.cells[i], report.series.median[i]
            );
        }
        if let Some(fit) = &report.series.fit {
            println!("verify: euclidean slope {:.3} [{:.3}, {:.3}]", fit.slope, fit.ci95[0], fit.ci95[1]);
        }
        println!("verify: max moment error {:.3e}", report.max_moment_error);
        if let Some(w) = csv_out {
            metric_cubature::error_harness::write_rows_csv(&report.rows, w)?;
        }
        return write_json(out, &json!({ "command": "verify", "config": a, "report": report }));
    }
    let mut cfg = DecayConfig::new(space, &a.phi, a.n.clone());
    cfg.density = a.rule.density.clone();
    cfg.degree = a.rule.degree;
    cfg.seeds = a.seeds;
    cfg.methods = methods;
    cfg.master_seed = a.master_seed;
    if let Some(f) = a.fine_factor {
        cfg.fine_factor = f;
    }
    cfg.eval_cap = a.eval_cap;
    cfg.eval_per_n = a.eval_per_n;
    cfg.compress = a.rule.compress.0;
    let report = if a.n.len() == 1 {
        compare_methods(&cfg)?
    } else {
        decay_experiment(&cfg)?
    };
    for s in &report.series {
        let medians: Vec<String> = s.median.iter().map(|m| format!("{m:.3e}")).collect();
        println!("verify: {:?} median sup errors [{}]", s.method, medians.join(", "));
        match &s.fit {
            Some(fit) => println!(
                "verify: {:?} slope {:.3} [{:.3}, {:.3}], R^2 {:.4}",
                s.method, fit.slope, fit.ci95[0], fit.ci95[1], fit.r_squared
            ),
            None if s.at_floor => println!("verify: {:?} errors at the exactness floor, no slope fitted", s.method),
            None => {}
        }
    }
    if let Some(w) = csv_out {
        report.write_csv(w)?;
    }
    write_json(out, &json!({ "command": "verify", "config": a, "report": report }))
}

fn run_constants(a: &ConstantsArgs) -> Result<(), Failure> {
    if a.d == 0 || a.ell == 0 {
        return Err(schema("d and l must be >= 1"));
    }
    let beta = a.beta.unwrap_or(a.d as f64);
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(schema("beta must be positive"));
    }
    if a.n.contains(&0) {
        return Err(schema("N values must be >= 1"));
    }
    let out = a.out.as_ref().map(create).transpose()?;
    let c = bound_constants(a.d, a.ell, beta);
    println!("c1 = {:.6}", c.c1);
    println!("c2 = {:.6}", c.c2);
    println!("c3 = {:.6e}", c.c3);
    println!("45 c3 = {:.6e}", c.signed_factor);
    println!("7e6 sqrt(l) d^(3/4) = {:.6e}", c.sphere_prefactor);
    println!("chain 45 c3 <= 7e6 sqrt(l) d^(3/4): {}", c.chain_holds());
    let bounds: Vec<(usize, f64)> = a.n.iter().map(|&n| (n, c.bound(n))).collect();
    for (n, b) in &bounds {
        println!("bound(N = {n}) = {b:.6e}");
    }
    if let Some(w) = out {
        write_json(w, &json!({ "command": "constants", "config": a, "constants": c, "bounds": bounds }))?;
    }
    Ok(())
}

fn init_threads(flag: Option<usize>) -> Result<(), Failure> {
    let n = match flag {
        Some(n) => Some(n),
        None => match std::env::var(THREADS_ENV) {
            Ok(v) => Some(
                v.trim()
                    .parse::<usize>()
                    .map_err(|e| schema(format!("{THREADS_ENV}={v:?}: {e}")))?,
            ),
            Err(_) => None,
        },
    };
    if let Some(n) = n {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| schema(format!("thread pool: {e}")))?;
    }
    Ok(())
}

fn run() -> Result<(), Failure> {
    let args = config::expand_args(std::env::args().collect(), &SUBCOMMANDS).map_err(|e| schema(e.to_string()))?;
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return Ok(());
        }
        Err(e) => return Err(schema(e.to_string().trim().to_string())),
    };
    init_threads(cli.threads)?;
    match &cli.command {
        Command::Partition(a) => run_partition(a),
        Command::Cubature(a) => run_cubature(a),
        Command::Verify(a) => run_verify(a),
        Command::Constants(a) => run_constants(a),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let record = json!({
                "error": {
                    "kind": f.kind,
                    "module": f.module,
                    "message": f.message,
                    "exit_code": f.code,
                }
            });
            eprintln!("{record}");
            ExitCode::from(f.code)
        }
    }
}
