use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fairlens_core::anova::analyze;
use fairlens_core::bootstrap::{bootstrap_wls, BootstrapConfig};
use fairlens_core::calibrate::{calibrate_detectors, DetectorConfig, Orientation};
use fairlens_core::ingest;
use fairlens_core::matching::{downsample_matched, matched_subset, CategorySemantics, MatchSpec};
use fairlens_core::posthoc::{gated_lsmeans, lsmeans, pairwise_wald, LsMeanMode, WaldDistribution};
use fairlens_core::single_factor::{single_factor_test, WelchOptions};
use fairlens_core::synth::{generate, SynthSpec};
use fairlens_core::{aggregate_groups, AttributeSchema, DecisionRecord, Error, LabelFilter};
use fairlens_cli::render::{self, LsMeanColumn};
use fairlens_cli::{at, run_full_audit, FitBundle, RunConfig, StageError};

/// Bias audits for binary AI-text detectors.
#[derive(Parser)]
#[command(name = "fairlens", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Calibrate per-detector thresholds and write decisions.
    Calibrate(CalibrateArgs),
    /// Aggregate decisions into a weighted group table.
    Aggregate(AggregateArgs),
    /// Fit the WLS model and run Type II ANOVA.
    Anova(AnovaArgs),
    /// Least-squares means of a fitted model.
    Lsmeans(LsmeansArgs),
    /// Holm-corrected pairwise Wald tests.
    Posthoc(PosthocArgs),
    /// Welch t-test or one-way ANOVA of a single factor.
    SingleFactor(SingleFactorArgs),
    /// Matched subset or one-to-one down-sampling.
    Match(MatchArgs),
    /// Bootstrap the WLS coefficients.
    Bootstrap(BootstrapArgs),
    /// Generate a synthetic score dataset.
    Synth(SynthArgs),
    /// Run the full pipeline from a config file.
    Audit(AuditArgs),
}

#[derive(Args)]
struct CalibrateArgs {
    #[arg(long)]
    scores: PathBuf,
    #[arg(long)]
    schema: PathBuf,
    /// JSON list of detector configs; overrides --orientation/--target-fpr.
    #[arg(long)]
    detector_config: Option<PathBuf>,
    #[arg(long, default_value = "higher-is-ai")]
    orientation: Orientation,
    #[arg(long, default_value_t = 0.05)]
    target_fpr: f64,
    /// Decisions CSV.
    #[arg(long)]
    out: PathBuf,
    /// Per-detector thresholds CSV.
    #[arg(long)]
    thresholds_out: Option<PathBuf>,
}

#[derive(Args)]
struct DecisionInput {
    #[arg(long)]
    decisions: PathBuf,
    #[arg(long)]
    schema: PathBuf,
    /// Required when the file holds more than one detector.
    #[arg(long)]
    detector: Option<String>,
    #[arg(long, default_value = "all")]
    label_filter: LabelFilter,
}

#[derive(Args)]
struct AggregateArgs {
    #[command(flatten)]
    input: DecisionInput,
    /// Comma-separated; all schema attributes when omitted.
    #[arg(long, value_delimiter = ',')]
    factors: Option<Vec<String>>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AnovaArgs {
    #[arg(long)]
    groups: PathBuf,
    #[arg(long)]
    schema: PathBuf,
    #[arg(long, value_delimiter = ',')]
    factors: Option<Vec<String>>,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Label used in the output; defaults to the group file's stem.
    #[arg(long)]
    detector: Option<String>,
    #[arg(long)]
    out: PathBuf,
    /// Fitted model and ANOVA table as JSON, for `lsmeans` and `posthoc`.
    #[arg(long)]
    fit_out: Option<PathBuf>,
}

#[derive(Args)]
struct LsmeansArgs {
    #[arg(long)]
    fit: PathBuf,
    /// Factor to report; every factor of the model when omitted.
    #[arg(long)]
    factor: Option<String>,
    #[arg(long, default_value = "reference-profile")]
    mode: LsMeanMode,
    /// Report factors whose ANOVA is not significant as well.
    #[arg(long)]
    ungated: bool,
    #[arg(long)]
    schema: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum WaldDist {
    Chi2,
    T,
}

#[derive(Args)]
struct PosthocArgs {
    #[arg(long)]
    fit: PathBuf,
    #[arg(long)]
    factor: Option<String>,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Reference distribution of the Wald statistic.
    #[arg(long, value_enum, default_value = "chi2")]
    wald_dist: WaldDist,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SingleFactorArgs {
    #[command(flatten)]
    input: DecisionInput,
    #[arg(long)]
    factor: String,
    /// Grouping used to form the weighted rows; all schema attributes when omitted.
    #[arg(long, value_delimiter = ',')]
    group_by: Option<Vec<String>>,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Use Σw − 1 in the weighted variances.
    #[arg(long)]
    bias_corrected: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum MatchMode {
    Subset,
    Downsample,
}

#[derive(Args)]
struct MatchArgs {
    #[arg(long, value_enum)]
    mode: MatchMode,
    /// Decision file to match (or use --scores).
    #[arg(long, conflicts_with = "scores", required_unless_present = "scores")]
    decisions: Option<PathBuf>,
    #[arg(long)]
    scores: Option<PathBuf>,
    #[arg(long)]
    schema: PathBuf,
    #[arg(long)]
    main: String,
    #[arg(long, value_delimiter = ',')]
    controls: Vec<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Require only the main levels that occur in the input.
    #[arg(long)]
    observed_levels: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BootstrapArgs {
    #[command(flatten)]
    input: DecisionInput,
    #[arg(long, value_delimiter = ',')]
    factors: Option<Vec<String>>,
    #[arg(short = 'B', long = "replicates", default_value_t = 1000)]
    replicates: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Full-precision report as JSON.
    #[arg(long)]
    json_out: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    spec: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Also write the spec's attribute schema.
    #[arg(long)]
    schema_out: Option<PathBuf>,
}

#[derive(Args)]
struct AuditArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output_dir` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

type CmdResult = Result<(), StageError>;

fn write_text(path: &Path, text: &str, stage: &'static str) -> CmdResult {
    fs::write(path, text).map_err(|e| StageError::new(stage, Error::io(path, e)))
}

fn factor_list(schema: &AttributeSchema, given: Option<Vec<String>>) -> Vec<String> {
    given.unwrap_or_else(|| schema.names().map(String::from).collect())
}

/// Loads a decision file and keeps one detector's records.
fn load_decisions(input: &DecisionInput, stage: &'static str) -> Result<(AttributeSchema, String, Vec<DecisionRecord>), StageError> {
    let schema = ingest::read_schema(&input.schema).map_err(at("ingest"))?;
    let all = ingest::read_decisions(&input.decisions, &schema).map_err(at("ingest"))?;
    let ids: BTreeSet<&str> = all.iter().map(|d| d.detector_id.as_str()).collect();
    let detector = match (&input.detector, ids.len()) {
        (Some(d), _) => d.clone(),
        (None, 1) => ids.iter().next().expect("one id").to_string(),
        (None, 0) => return Err(StageError::new("ingest", Error::EmptyInput { context: "decision file" })),
        (None, _) => {
            return Err(StageError::new(
                stage,
                Error::InvalidConfig(format!("file holds {} detectors; pick one with --detector", ids.len())),
            ))
        }
    };
    let kept: Vec<DecisionRecord> = all
        .into_iter()
        .filter(|d| d.detector_id == detector && input.label_filter.keeps(d.true_label))
        .collect();
    Ok((schema, detector, kept))
}

fn calibrate(args: CalibrateArgs) -> CmdResult {
    let schema = ingest::read_schema(&args.schema).map_err(at("ingest"))?;
    let records = ingest::read_scores(&args.scores, &schema).map_err(at("ingest"))?;
    let configs: Vec<DetectorConfig> = match &args.detector_config {
        Some(path) => ingest::read_json(path).map_err(at("ingest"))?,
        None => {
            let ids: BTreeSet<&str> = records.iter().map(|r| r.detector_id.as_str()).collect();
            ids.into_iter()
                .map(|id| DetectorConfig::new(id, args.orientation, args.target_fpr))
                .collect::<fairlens_core::Result<_>>()
                .map_err(at("calibrate"))?
        }
    };
    let calibrated = calibrate_detectors(&records, &configs).map_err(at("calibrate"))?;
    let decisions: Vec<DecisionRecord> = calibrated.iter().flat_map(|(_, d)| d.iter().cloned()).collect();
    ingest::write_decisions(&decisions, &schema, &args.out).map_err(at("calibrate"))?;
    if let Some(path) = &args.thresholds_out {
        let results: Vec<_> = calibrated.into_iter().map(|(r, _)| r).collect();
        write_text(path, &render::calibration_table(&results), "calibrate")?;
    }
    Ok(())
}

fn aggregate(args: AggregateArgs) -> CmdResult {
    let (schema, _, decisions) = load_decisions(&args.input, "aggregate")?;
    let factors = factor_list(&schema, args.factors);
    let table = aggregate_groups(&decisions, &schema, &factors).map_err(at("aggregate"))?;
    ingest::write_group_table(&table, &args.out).map_err(at("aggregate"))
}

fn anova(args: AnovaArgs) -> CmdResult {
    let schema = ingest::read_schema(&args.schema).map_err(at("ingest"))?;
    let table = ingest::read_group_table(&args.groups, &schema).map_err(at("ingest"))?;
    let factors = args.factors.unwrap_or_else(|| table.factors.clone());
    let analysis = analyze(&table, &factors, &schema, args.alpha).map_err(at("anova"))?;
    let detector = args.detector.unwrap_or_else(|| {
        args.groups
            .file_stem()
            .map_or_else(|| "detector".into(), |s| s.to_string_lossy().into_owned())
    });
    let tables = [(detector.clone(), analysis.anova.clone())];
    write_text(&args.out, &render::anova_detail(&tables), "anova")?;
    if let Some(path) = &args.fit_out {
        let bundle = FitBundle {
            detector,
            fit: analysis.fit,
            anova: analysis.anova,
        };
        ingest::write_json(&bundle, path).map_err(at("anova"))?;
    }
    Ok(())
}

fn bundle_factors(bundle: &FitBundle, factor: Option<String>) -> Vec<String> {
    factor.map_or_else(|| bundle.anova.rows.iter().map(|r| r.factor.clone()).collect(), |f| vec![f])
}

fn lsmeans_cmd(args: LsmeansArgs) -> CmdResult {
    let schema = ingest::read_schema(&args.schema).map_err(at("ingest"))?;
    let bundle: FitBundle = ingest::read_json(&args.fit).map_err(at("ingest"))?;
    let factors = bundle_factors(&bundle, args.factor);
    let cells = factors
        .iter()
        .map(|f| {
            if args.ungated {
                lsmeans(&bundle.fit, f, args.mode).map(Some)
            } else {
                gated_lsmeans(&bundle.fit, f, args.mode, &bundle.anova)
            }
        })
        .collect::<fairlens_core::Result<Vec<_>>>()
        .map_err(at("lsmeans"))?;
    let columns: Vec<LsMeanColumn> = factors
        .iter()
        .zip(&cells)
        .map(|(f, c)| LsMeanColumn {
            detector: &bundle.detector,
            factor: f,
            cells: c.as_deref(),
        })
        .collect();
    let text = render::lsmeans_table(&schema, &factors, std::slice::from_ref(&bundle.detector), &columns);
    write_text(&args.out, &text, "lsmeans")
}

fn posthoc_cmd(args: PosthocArgs) -> CmdResult {
    let bundle: FitBundle = ingest::read_json(&args.fit).map_err(at("ingest"))?;
    let dist = match args.wald_dist {
        WaldDist::Chi2 => WaldDistribution::ChiSquare1,
        WaldDist::T => WaldDistribution::StudentT,
    };
    let results = bundle_factors(&bundle, args.factor)
        .iter()
        .map(|f| pairwise_wald(&bundle.fit, f, args.alpha, &bundle.anova, dist).map(|r| (bundle.detector.clone(), r)))
        .collect::<fairlens_core::Result<Vec<_>>>()
        .map_err(at("posthoc"))?;
    write_text(&args.out, &render::posthoc_table(&results), "posthoc")
}

fn single_factor_cmd(args: SingleFactorArgs) -> CmdResult {
    let (schema, detector, decisions) = load_decisions(&args.input, "single-factor")?;
    let mut group_by = factor_list(&schema, args.group_by);
    if !group_by.contains(&args.factor) {
        group_by.push(args.factor.clone());
    }
    let table = aggregate_groups(&decisions, &schema, &group_by).map_err(at("aggregate"))?;
    let opts = WelchOptions {
        bias_corrected: args.bias_corrected,
    };
    let result = single_factor_test(&table, &args.factor, &schema, args.alpha, opts).map_err(at("single-factor"))?;
    write_text(&args.out, &render::single_factor_table(&[(detector, result)], args.alpha), "single-factor")
}

fn match_cmd(args: MatchArgs) -> CmdResult {
    let schema = ingest::read_schema(&args.schema).map_err(at("ingest"))?;
    let spec = MatchSpec {
        main_feature: args.main,
        control_features: args.controls,
        seed: args.seed,
        semantics: if args.observed_levels {
            CategorySemantics::Observed
        } else {
            CategorySemantics::Declared
        },
    };
    let downsample = matches!(args.mode, MatchMode::Downsample);
    if let Some(path) = &args.scores {
        let records = ingest::read_scores(path, &schema).map_err(at("ingest"))?;
        let out = if downsample {
            downsample_matched(&records, &spec, &schema)
        } else {
            matched_subset(&records, &spec, &schema)
        }
        .map_err(at("match"))?;
        ingest::write_scores(&out, &schema, &args.out).map_err(at("match"))
    } else {
        let path = args.decisions.as_ref().expect("clap requires one input");
        let records = ingest::read_decisions(path, &schema).map_err(at("ingest"))?;
        let out = if downsample {
            downsample_matched(&records, &spec, &schema)
        } else {
            matched_subset(&records, &spec, &schema)
        }
        .map_err(at("match"))?;
        ingest::write_decisions(&out, &schema, &args.out).map_err(at("match"))
    }
}

fn bootstrap_cmd(args: BootstrapArgs) -> CmdResult {
    let (schema, detector, decisions) = load_decisions(&args.input, "bootstrap")?;
    let factors = factor_list(&schema, args.factors);
    let config = BootstrapConfig {
        replicates: args.replicates,
        seed: args.seed,
    };
    let report = bootstrap_wls(&decisions, &factors, &schema, config).map_err(at("bootstrap"))?;
    if let Some(path) = &args.json_out {
        ingest::write_json(&report, path).map_err(at("bootstrap"))?;
    }
    write_text(&args.out, &render::bootstrap_table(&[(detector, report)]), "bootstrap")
}

fn synth_cmd(args: SynthArgs) -> CmdResult {
    let spec: SynthSpec = ingest::read_json(&args.spec).map_err(at("ingest"))?;
    let (records, manifest) = generate(&spec).map_err(at("synth"))?;
    ingest::write_scores(&records, &spec.schema, &args.out).map_err(at("synth"))?;
    if let Some(path) = &args.manifest {
        ingest::write_json(&manifest, path).map_err(at("synth"))?;
    }
    if let Some(path) = &args.schema_out {
        ingest::write_json(&spec.schema, path).map_err(at("synth"))?;
    }
    Ok(())
}

fn audit_cmd(args: AuditArgs) -> CmdResult {
    let config = RunConfig::load(&args.config).map_err(at("ingest"))?;
    let out = args.out.or_else(|| config.output_dir.clone()).ok_or_else(|| {
        StageError::new("config", Error::InvalidConfig("no output directory; pass --out or set output_dir".into()))
    })?;
    run_full_audit(&config, &out).map(|_| ())
}

fn run(cli: Cli) -> CmdResult {
    match cli.command {
        Command::Calibrate(a) => calibrate(a),
        Command::Aggregate(a) => aggregate(a),
        Command::Anova(a) => anova(a),
        Command::Lsmeans(a) => lsmeans_cmd(a),
        Command::Posthoc(a) => posthoc_cmd(a),
        Command::SingleFactor(a) => single_factor_cmd(a),
        Command::Match(a) => match_cmd(a),
        Command::Bootstrap(a) => bootstrap_cmd(a),
        Command::Synth(a) => synth_cmd(a),
        Command::Audit(a) => audit_cmd(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = fairlens_cli::threads_from_env() {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("{}", serde_json::json!({ "stage": "startup", "error": e.to_string() }));
            return ExitCode::from(2);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(2)
        }
    }
}
