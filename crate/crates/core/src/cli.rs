//! Command-line entry point.
//!
//! Settings resolve as: command-line flag, then `--config` TOML file, then
//! the bundle manifest (role set only), then built-in defaults. The default
//! output directory can also come from `HEADSIEVE_OUT`.
//!
//! Exit status: 0 success, 1 usage error, 2 data or validation error,
//! 3 internal failure.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::analysis::{self, Correction, RoleAssignmentMatrix};
use crate::bundle::{self, Bundle};
use crate::report::{self, MosaicStyle};
use crate::score::{self, RoleSamples};
use crate::sieve::{RoleId, RoleSpec, DEFAULT_WINDOW};
use crate::stats;
use crate::synth::{self, PlantSpec, SynthConfig};

pub const OUT_ENV: &str = "HEADSIEVE_OUT";
const DEFAULT_OUT: &str = "headsieve-out";
const DEFAULT_ALPHA: f64 = 0.05;
const DEFAULT_BANDS: usize = 3;
const DEFAULT_BINS: usize = 20;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Internal(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Data(m) => write!(f, "error: {m}"),
            CliError::Internal(m) => write!(f, "internal error: {m}"),
        }
    }
}

fn data<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Data(e.to_string())
}

fn internal<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Internal(e.to_string())
}

#[derive(Parser, Debug)]
#[command(
    name = "headsieve",
    version,
    about = "Assign functional roles to attention heads with sieve bias scores and hypothesis tests"
)]
struct Cli {
    /// TOML file with default settings (flags take precedence)
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Cap on worker threads; results do not depend on it
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Load and validate a bundle
    Validate(BundleArgs),
    /// Write the raw per-sequence score matrix as scores.csv
    Scores(AnalysisArgs),
    /// Print the smallest integer above the pooled mean score
    SuggestTau(AnalysisArgs),
    /// Test every head for every role; writes assignments.json/csv, histograms.json
    Classify(AnalysisArgs),
    /// Role overlap, Venn counts and score correlations
    Overlap(AnalysisArgs),
    /// Per-layer role distribution and the layer mosaic
    Layers(AnalysisArgs),
    /// Mean score change per layer band between two checkpoints
    Delta(DeltaArgs),
    /// Generate a synthetic bundle with planted roles
    Synth(SynthArgs),
    /// Run classify, overlap and layers (and delta with --after)
    Report(ReportArgs),
}

#[derive(Args, Debug, Clone, Default)]
struct BundleArgs {
    /// Bundle directory
    #[arg(long)]
    bundle: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Default)]
struct AnalysisArgs {
    #[command(flatten)]
    bundle: BundleArgs,
    /// Comma-separated roles (e.g. local,syntactic,nsubj,cls)
    #[arg(long, value_delimiter = ',')]
    roles: Option<Vec<RoleId>>,
    /// Local sieve radius
    #[arg(long)]
    window: Option<usize>,
    /// Score threshold; suggested from the data when omitted
    #[arg(long)]
    tau: Option<f64>,
    /// Significance level
    #[arg(long)]
    alpha: Option<f64>,
    /// Divide alpha by the number of tests
    #[arg(long)]
    bonferroni: bool,
    /// Histogram bin count
    #[arg(long)]
    bins: Option<usize>,
    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Default)]
struct DeltaArgs {
    #[command(flatten)]
    analysis: AnalysisArgs,
    /// Bundle before fine-tuning (alias of --bundle)
    #[arg(long)]
    before: Option<PathBuf>,
    /// Bundle after fine-tuning
    #[arg(long)]
    after: Option<PathBuf>,
    /// Number of contiguous layer bands
    #[arg(long)]
    bands: Option<usize>,
}

#[derive(Args, Debug, Clone, Default)]
struct ReportArgs {
    #[command(flatten)]
    analysis: AnalysisArgs,
    /// Optional second checkpoint for the delta report
    #[arg(long)]
    after: Option<PathBuf>,
    #[arg(long)]
    bands: Option<usize>,
}

#[derive(Args, Debug, Clone, Default)]
struct SynthArgs {
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    heads: Option<usize>,
    /// Tokens per sequence, delimiters included
    #[arg(long = "len")]
    seq_len: Option<usize>,
    /// Number of sequences
    #[arg(long = "n")]
    n_sequences: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// JSON list of plants: {"layer","head","role","mass"|"bias","noise"}
    #[arg(long)]
    plants: Option<PathBuf>,
    /// 1 or 2 segments per sequence
    #[arg(long)]
    segments: Option<u8>,
    /// Jitter of unplanted rows
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    model_id: Option<String>,
    /// Output bundle directory
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Contents of a `--config` file.
#[derive(Debug, Default, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub bundle: Option<PathBuf>,
    pub before: Option<PathBuf>,
    pub after: Option<PathBuf>,
    pub roles: Option<Vec<RoleId>>,
    pub window: Option<usize>,
    pub tau: Option<f64>,
    pub alpha: Option<f64>,
    pub bonferroni: Option<bool>,
    pub bins: Option<usize>,
    pub bands: Option<usize>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub layers: Option<usize>,
    pub heads: Option<usize>,
    pub len: Option<usize>,
    pub n: Option<usize>,
    pub plants: Option<PathBuf>,
    pub segments: Option<u8>,
    pub noise: Option<f64>,
}

/// Fully resolved analysis settings.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub bundle: Option<PathBuf>,
    pub roles: Option<Vec<RoleId>>,
    pub window: usize,
    pub tau: Option<f64>,
    pub alpha: f64,
    pub correction: Correction,
    pub bins: usize,
    pub bands: usize,
    pub out: PathBuf,
}

impl RunConfig {
    fn resolve(args: &AnalysisArgs, cfg: &ConfigFile) -> Result<Self, CliError> {
        let out = args
            .out
            .clone()
            .or_else(|| cfg.out.clone())
            .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
        let run = RunConfig {
            bundle: args.bundle.bundle.clone().or_else(|| cfg.bundle.clone()),
            roles: args.roles.clone().or_else(|| cfg.roles.clone()),
            window: args.window.or(cfg.window).unwrap_or(DEFAULT_WINDOW),
            tau: args.tau.or(cfg.tau),
            alpha: args.alpha.or(cfg.alpha).unwrap_or(DEFAULT_ALPHA),
            correction: if args.bonferroni || cfg.bonferroni.unwrap_or(false) {
                Correction::Bonferroni
            } else {
                Correction::None
            },
            bins: args.bins.or(cfg.bins).unwrap_or(DEFAULT_BINS),
            bands: cfg.bands.unwrap_or(DEFAULT_BANDS),
            out,
        };
        if run.window == 0 {
            return Err(CliError::Usage("--window must be at least 1".into()));
        }
        if !(run.alpha > 0.0 && run.alpha < 1.0) {
            return Err(CliError::Usage("--alpha must lie in (0, 1)".into()));
        }
        if run.tau.is_some_and(|t| !(t > 0.0 && t.is_finite())) {
            return Err(CliError::Usage("--tau must be positive".into()));
        }
        if run.bins < 2 {
            return Err(CliError::Usage("--bins must be at least 2".into()));
        }
        Ok(run)
    }

    fn bundle_path(&self) -> Result<&Path, CliError> {
        self.bundle
            .as_deref()
            .ok_or_else(|| CliError::Usage("no bundle given (--bundle or config `bundle`)".into()))
    }

    /// Role specs: explicit roles, else the bundle's stored config, else defaults.
    pub fn role_specs(&self, bundle: &Bundle) -> Vec<RoleSpec> {
        match (&self.roles, &bundle.roles) {
            (Some(roles), _) => roles
                .iter()
                .map(|r| RoleSpec::new(r.clone(), self.window))
                .collect(),
            (None, Some(specs)) => specs.clone(),
            (None, None) => RoleSpec::defaults(self.window),
        }
    }
}

/// Runs the CLI and returns the process exit status.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let outcome = std::panic::catch_unwind(|| execute(cli));
    match outcome {
        Ok(Ok(())) => 0,
        Ok(Err(e)) => {
            eprintln!("{e}");
            e.exit_code()
        }
        Err(_) => {
            eprintln!("internal error: unexpected panic");
            3
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<ConfigFile, CliError> {
    let Some(path) = path else {
        return Ok(ConfigFile::default());
    };
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let cfg = load_config(cli.config.as_deref())?;
    if let Some(n) = cli.threads.or(cfg.threads) {
        if n == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        // a second call in the same process (tests) keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    match cli.command {
        Command::Validate(args) => validate(&args, &cfg),
        Command::Scores(args) => scores(&RunConfig::resolve(&args, &cfg)?),
        Command::SuggestTau(args) => suggest_tau(&RunConfig::resolve(&args, &cfg)?),
        Command::Classify(args) => {
            let run = RunConfig::resolve(&args, &cfg)?;
            let ctx = Context::load(&run)?;
            write_classify(&run, &ctx)
        }
        Command::Overlap(args) => {
            let run = RunConfig::resolve(&args, &cfg)?;
            let ctx = Context::load(&run)?;
            write_overlap(&run, &ctx)
        }
        Command::Layers(args) => {
            let run = RunConfig::resolve(&args, &cfg)?;
            let ctx = Context::load(&run)?;
            write_layers(&run, &ctx)
        }
        Command::Delta(args) => {
            let mut run = RunConfig::resolve(&args.analysis, &cfg)?;
            run.bundle = args
                .before
                .clone()
                .or(run.bundle)
                .or_else(|| cfg.before.clone());
            run.bands = args.bands.unwrap_or(run.bands);
            let after = args
                .after
                .clone()
                .or_else(|| cfg.after.clone())
                .ok_or_else(|| CliError::Usage("delta needs --after".into()))?;
            delta(&run, &after)
        }
        Command::Synth(args) => synth_cmd(&args, &cfg),
        Command::Report(args) => {
            let mut run = RunConfig::resolve(&args.analysis, &cfg)?;
            run.bands = args.bands.unwrap_or(run.bands);
            let ctx = Context::load(&run)?;
            write_classify(&run, &ctx)?;
            write_overlap(&run, &ctx)?;
            write_layers(&run, &ctx)?;
            if let Some(after) = args.after.clone().or_else(|| cfg.after.clone()) {
                delta(&run, &after)?;
            }
            Ok(())
        }
    }
}

fn load(path: &Path) -> Result<Bundle, CliError> {
    bundle::load_bundle(path).map_err(data)
}

fn write_out(dir: &Path, name: &str, contents: &str) -> Result<(), CliError> {
    fs::create_dir_all(dir)
        .map_err(|e| CliError::Data(format!("creating {}: {e}", dir.display())))?;
    let path = dir.join(name);
    fs::write(&path, contents)
        .map_err(|e| CliError::Data(format!("writing {}: {e}", path.display())))
}

fn validate(args: &BundleArgs, cfg: &ConfigFile) -> Result<(), CliError> {
    let path = args
        .bundle
        .clone()
        .or_else(|| cfg.bundle.clone())
        .ok_or_else(|| CliError::Usage("no bundle given".into()))?;
    let b = load(&path)?;
    println!(
        "ok: {} sequences, {} layers x {} heads, model {}",
        b.sequences.len(),
        b.layers,
        b.heads,
        b.model_id
    );
    Ok(())
}

fn role_samples(run: &RunConfig, bundle: &Bundle) -> RoleSamples {
    let specs = run.role_specs(bundle);
    let samples = score::role_samples(bundle, &specs);
    for role in &samples.ineligible {
        eprintln!("note: role {role} has no eligible sequence; skipped");
    }
    samples
}

fn scores(run: &RunConfig) -> Result<(), CliError> {
    let bundle = load(run.bundle_path()?)?;
    let samples = role_samples(run, &bundle);
    write_out(&run.out, "scores.csv", &report::scores_csv(&samples))
}

fn pooled_tau(samples: &RoleSamples) -> Result<i64, CliError> {
    stats::suggest_tau(&samples.pooled_scores()).map_err(data)
}

fn suggest_tau(run: &RunConfig) -> Result<(), CliError> {
    let bundle = load(run.bundle_path()?)?;
    let samples = role_samples(run, &bundle);
    println!("{}", pooled_tau(&samples)?);
    Ok(())
}

/// Everything derived from one bundle that the analysis commands share.
struct Context {
    bundle: Bundle,
    samples: RoleSamples,
    matrix: RoleAssignmentMatrix,
}

impl Context {
    fn load(run: &RunConfig) -> Result<Self, CliError> {
        let bundle = load(run.bundle_path()?)?;
        let samples = role_samples(run, &bundle);
        if samples.roles.is_empty() {
            return Err(CliError::Data("no role has an eligible sequence".into()));
        }
        let tau = match run.tau {
            Some(t) => t,
            None => pooled_tau(&samples)? as f64,
        };
        let matrix =
            analysis::classify_heads(&samples, tau, run.alpha, run.correction).map_err(data)?;
        Ok(Context {
            bundle,
            samples,
            matrix,
        })
    }
}

#[derive(Serialize)]
struct RunSummary<'a> {
    model_id: &'a str,
    layers: usize,
    heads: usize,
    sequences: usize,
    tau: f64,
    alpha: f64,
    correction: Correction,
    roles: &'a [RoleId],
    ineligible_roles: &'a [RoleId],
}

fn write_classify(run: &RunConfig, ctx: &Context) -> Result<(), CliError> {
    let m = &ctx.matrix;
    write_out(&run.out, "assignments.json", &report::assignments_json(m))?;
    write_out(&run.out, "assignments.csv", &report::assignments_csv(m))?;
    let hist = report::emit_histograms(
        &ctx.samples.pooled_scores(),
        &report::all_results(m),
        run.bins,
    )
    .map_err(internal)?;
    write_out(&run.out, "histograms.json", &report::to_json(&hist))?;
    let summary = RunSummary {
        model_id: &ctx.bundle.model_id,
        layers: m.layers,
        heads: m.heads,
        sequences: ctx.bundle.sequences.len(),
        tau: m.tau,
        alpha: m.alpha,
        correction: m.correction,
        roles: &m.roles,
        ineligible_roles: &ctx.samples.ineligible,
    };
    write_out(&run.out, "run.json", &report::to_json(&summary))?;
    let assigned = report::assignment_records(m)
        .iter()
        .filter(|r| r.assigned)
        .count();
    println!(
        "classified {} heads x {} roles at tau = {}, alpha = {}: {assigned} assignments",
        m.layers * m.heads,
        m.roles.len(),
        m.tau,
        m.alpha
    );
    Ok(())
}

/// Role pairs reported by `overlap`: every pair of tested coarse roles, then
/// the directional local / syntactic-label pairs.
fn overlap_pairs(tested: &[RoleId]) -> Vec<(RoleId, RoleId)> {
    let coarse: Vec<RoleId> = RoleId::coarse_roles()
        .into_iter()
        .filter(|r| tested.contains(r))
        .collect();
    let mut pairs = Vec::new();
    for (i, a) in coarse.iter().enumerate() {
        for b in &coarse[i + 1..] {
            pairs.push((a.clone(), b.clone()));
        }
    }
    for label in ["nsubj", "dobj"] {
        for local in ["local-prev", "local-next"] {
            let a = RoleId::label(label);
            let b: RoleId = local.parse().expect("built-in role name");
            if tested.contains(&a) && tested.contains(&b) {
                pairs.push((a, b));
            }
        }
    }
    pairs
}

fn write_overlap(run: &RunConfig, ctx: &Context) -> Result<(), CliError> {
    let m = &ctx.matrix;
    let pairs = overlap_pairs(&m.roles);
    let overlaps: Vec<_> = pairs
        .iter()
        .map(|(a, b)| analysis::overlap_report(m, a, b))
        .collect();
    let correlations = pairs
        .iter()
        .map(|(a, b)| {
            let sa = &ctx.samples.roles[a];
            let sb = &ctx.samples.roles[b];
            let per_head = analysis::per_head_correlations(sa, sb);
            let defined: Vec<f64> = per_head.values().flatten().copied().collect();
            report::Correlation {
                role_a: a.clone(),
                role_b: b.clone(),
                pooled: analysis::pooled_score_correlation(sa, sb).ok(),
                mean_per_head: (!defined.is_empty()).then(|| stats::mean(&defined)),
                per_head: per_head
                    .into_iter()
                    .map(|(c, r)| (report::head_key(c), r))
                    .collect(),
            }
        })
        .collect();
    write_out(&run.out, "overlap.csv", &report::overlap_csv(&overlaps))?;
    write_out(
        &run.out,
        "overlap.json",
        &report::to_json(&report::OverlapFile {
            overlaps,
            correlations,
        }),
    )?;
    let venn_roles: Vec<RoleId> = RoleId::coarse_roles()
        .into_iter()
        .filter(|r| m.roles.contains(r))
        .collect();
    if !venn_roles.is_empty() {
        let venn = report::emit_venn_counts(m, &venn_roles).map_err(internal)?;
        write_out(&run.out, "venn.json", &report::to_json(&venn))?;
    }
    Ok(())
}

fn write_layers(run: &RunConfig, ctx: &Context) -> Result<(), CliError> {
    let fine = RoleId::fine_roles();
    let summaries = analysis::layer_distribution(&ctx.matrix, &fine);
    write_out(&run.out, "layers.json", &report::to_json(&summaries))?;
    write_out(&run.out, "layers.csv", &report::layers_csv(&summaries))?;
    let svg =
        report::emit_mosaic_svg(&ctx.matrix, &fine, &MosaicStyle::default()).map_err(internal)?;
    write_out(&run.out, "mosaic.svg", &svg)
}

fn delta(run: &RunConfig, after: &Path) -> Result<(), CliError> {
    let before_bundle = load(run.bundle_path()?)?;
    let after_bundle = load(after)?;
    let specs = run.role_specs(&before_bundle);
    let before = score::role_samples(&before_bundle, &specs);
    let after = score::role_samples(&after_bundle, &specs);
    let report = analysis::finetune_delta(&before, &after, run.bands).map_err(data)?;
    write_out(&run.out, "delta.csv", &report::delta_csv(&report))?;
    write_out(&run.out, "delta.json", &report::to_json(&report))
}

fn synth_cmd(args: &SynthArgs, cfg: &ConfigFile) -> Result<(), CliError> {
    let defaults = SynthConfig::default();
    let config = SynthConfig {
        model_id: args.model_id.clone().unwrap_or(defaults.model_id),
        layers: args.layers.or(cfg.layers).unwrap_or(defaults.layers),
        heads: args.heads.or(cfg.heads).unwrap_or(defaults.heads),
        seq_len: args.seq_len.or(cfg.len).unwrap_or(defaults.seq_len),
        n_sequences: args.n_sequences.or(cfg.n).unwrap_or(defaults.n_sequences),
        segments: args.segments.or(cfg.segments).unwrap_or(defaults.segments),
        background_noise: args
            .noise
            .or(cfg.noise)
            .unwrap_or(defaults.background_noise),
        window: args.window.or(cfg.window).unwrap_or(defaults.window),
        seed: args.seed.or(cfg.seed).unwrap_or(defaults.seed),
    };
    let plants: Vec<PlantSpec> = match args.plants.clone().or_else(|| cfg.plants.clone()) {
        Some(path) => {
            let text = fs::read_to_string(&path)
                .map_err(|e| CliError::Data(format!("plants {}: {e}", path.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| CliError::Data(format!("plants {}: {e}", path.display())))?
        }
        None => Vec::new(),
    };
    let out = args
        .out
        .clone()
        .or_else(|| cfg.out.clone())
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    let bundle = synth::generate_bundle(&config, &plants).map_err(data)?;
    bundle::write_bundle(&bundle, &out).map_err(data)?;
    println!(
        "wrote {} sequences ({} layers x {} heads, T = {}) to {}",
        config.n_sequences,
        config.layers,
        config.heads,
        config.seq_len,
        out.display()
    );
    Ok(())
}
