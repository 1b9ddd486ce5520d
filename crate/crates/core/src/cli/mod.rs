//! Command-line driver: one TOML config, seeded commands, CSV reports and a
//! run manifest per output directory.
//!
//! Exit codes: 0 success, 2 input or validation failure, 3 statistical
//! failure, 4 configuration error.

mod config;
pub mod report;

pub use config::RunConfig;

use crate::causal::{bootstrap_effects, effect_design, CausalError, EffectOptions};
use crate::cohort::{load_cohort, Cohort, CodeMap, CohortError, Outcome};
use crate::eval::{cross_validated_auc, roc_curve, EvalError};
use crate::glm::{backward_eliminate, coefficient_table, FitOptions, GlmError};
use crate::preprocess::{
    apply_eligibility, build_features, build_matrix, Contrast, FeatureSet, FeatureTable, PreprocessConfig,
    PreprocessError, Target,
};
use crate::synth::{compute_truth, generate, write_truth, SynthError, SyntheticSpec};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::ffi::OsString;
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const EXIT_INPUT: i32 = 2;
pub const EXIT_STATISTICAL: i32 = 3;
pub const EXIT_CONFIG: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Statistical(String),
    #[error("{0}")]
    Config(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => EXIT_INPUT,
            CliError::Statistical(_) => EXIT_STATISTICAL,
            CliError::Config(_) => EXIT_CONFIG,
        }
    }
}

impl From<CohortError> for CliError {
    fn from(e: CohortError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<PreprocessError> for CliError {
    fn from(e: PreprocessError) -> Self {
        match e {
            PreprocessError::UnknownFeature(_) => CliError::Config(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}

fn statistical(label: impl std::fmt::Display, e: impl std::fmt::Display) -> CliError {
    CliError::Statistical(format!("{label}: {e}"))
}

fn glm_code(e: &GlmError) -> &'static str {
    match e {
        GlmError::DegenerateOutcome { .. } => "DEGENERATE_OUTCOME",
        GlmError::SeparationDetected { .. } => "SEPARATION_DETECTED",
        GlmError::SingularInformation { .. } => "SINGULAR_INFORMATION",
        GlmError::NotConverged { .. } => "NOT_CONVERGED",
        GlmError::TooFewRows { .. } => "TOO_FEW_ROWS",
        GlmError::DimensionMismatch { .. } => "DIMENSION_MISMATCH",
        GlmError::ZeroSe { .. } => "ZERO_SE",
        GlmError::UnknownColumn(_) => "UNKNOWN_COLUMN",
    }
}

fn from_glm(label: impl std::fmt::Display, e: GlmError) -> CliError {
    statistical(format!("{label}: {}", glm_code(&e)), e)
}

fn from_eval(label: impl std::fmt::Display, e: EvalError) -> CliError {
    match e {
        EvalError::Fold { fold, source } => from_glm(format!("{label}: fold {}", fold + 1), source),
        EvalError::OneClassOnly { .. } => statistical(format!("{label}: ONE_CLASS_ONLY"), e),
        EvalError::BadK { .. } => statistical(format!("{label}: BAD_K"), e),
        other => statistical(label, other),
    }
}

fn from_causal(label: impl std::fmt::Display, e: CausalError) -> CliError {
    match e {
        CausalError::Fit(g) => from_glm(label, g),
        CausalError::Preprocess(p) => p.into(),
        CausalError::TooFewReplicates(_) => CliError::Config(e.to_string()),
        CausalError::MissingArm(_) => statistical(format!("{label}: MISSING_ARM"), e),
        CausalError::TooManyBootFailures { .. } => statistical(format!("{label}: TOO_MANY_BOOT_FAILURES"), e),
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        match e {
            SynthError::InvalidSpec(_) => CliError::Config(e.to_string()),
            SynthError::Io { .. } => CliError::Input(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "cardiotox", version, about = "Cardiotoxicity risk models and treatment effects for breast-cancer cohorts")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Run configuration (TOML).
    #[arg(long, value_name = "PATH")]
    pub config: PathBuf,
    /// Overrides `seed` in the config.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory; overrides `out` in the config.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Overrides `alpha_stay`.
    #[arg(long)]
    pub alpha_stay: Option<f64>,
    /// Overrides `k` (number of folds).
    #[arg(long)]
    pub k: Option<usize>,
    /// Overrides `boot` (bootstrap replicates).
    #[arg(long)]
    pub boot: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load the cohort and apply the eligibility rules.
    Validate(Common),
    /// Build the baseline feature table.
    Features(Common),
    /// Fit full and backward-eliminated outcome models.
    Fit {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        outcome: Option<Outcome>,
        #[arg(long)]
        feature_set: Option<FeatureSet>,
    },
    /// Cross-validated AUROC per outcome.
    Cv {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        outcome: Option<Outcome>,
        #[arg(long)]
        feature_set: Option<FeatureSet>,
    },
    /// Bootstrap ATE and ATT of each treatment against radiation.
    Effects {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        outcome: Option<Outcome>,
    },
    /// Which baseline variables separate a treatment arm from radiation.
    Compare {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        contrast: Contrast,
        #[arg(long, default_value = "BASELINE_HEALTH")]
        feature_set: FeatureSet,
    },
    /// Generate a synthetic cohort and its truth table from a spec.
    Synth {
        /// Synthetic spec (TOML).
        #[arg(long, alias = "spec", value_name = "PATH")]
        config: PathBuf,
        /// Overrides the spec seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[derive(Serialize)]
struct ManifestFile {
    file: String,
    sha256: String,
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    version: &'a str,
    config_sha256: String,
    seed: Option<u64>,
    options: serde_json::Value,
    outputs: Vec<ManifestFile>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Output directory that records every file it writes for the manifest.
struct OutputDir {
    dir: PathBuf,
    written: Vec<ManifestFile>,
}

impl OutputDir {
    fn create(dir: PathBuf) -> Result<Self, CliError> {
        std::fs::create_dir_all(&dir).map_err(|e| CliError::Input(format!("{}: {e}", dir.display())))?;
        Ok(Self { dir, written: Vec::new() })
    }

    fn write(&mut self, name: &str, content: &str) -> Result<(), CliError> {
        let path = self.dir.join(name);
        std::fs::write(&path, content).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        self.written.push(ManifestFile {
            file: name.to_string(),
            sha256: sha256_hex(content.as_bytes()),
        });
        Ok(())
    }

    fn finish(mut self, command: &str, config_bytes: &[u8], seed: Option<u64>, options: serde_json::Value) -> Result<(), CliError> {
        let manifest = Manifest {
            command,
            version: env!("CARGO_PKG_VERSION"),
            config_sha256: sha256_hex(config_bytes),
            seed,
            options,
            outputs: std::mem::take(&mut self.written),
        };
        let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        text.push('\n');
        let name = format!("manifest_{command}.json");
        let path = self.dir.join(&name);
        std::fs::write(&path, text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
    }
}

struct Context {
    cfg: RunConfig,
    config_bytes: Vec<u8>,
    out: PathBuf,
}

impl Context {
    fn new(common: &Common) -> Result<Self, CliError> {
        let (mut cfg, config_bytes) = RunConfig::load(&common.config)?;
        if let Some(s) = common.seed {
            cfg.seed = Some(s);
        }
        if let Some(a) = common.alpha_stay {
            cfg.alpha_stay = a;
        }
        if let Some(k) = common.k {
            cfg.k = k;
        }
        if let Some(b) = common.boot {
            cfg.boot = b;
        }
        cfg.validate()?;
        let out = common
            .out
            .clone()
            .or_else(|| cfg.out.clone())
            .ok_or_else(|| CliError::Config("no output directory: pass --out or set `out`".into()))?;
        Ok(Self { cfg, config_bytes, out })
    }

    fn seed(&self, command: &str) -> Result<u64, CliError> {
        self.cfg
            .seed
            .ok_or_else(|| CliError::Config(format!("`{command}` needs a seed: pass --seed or set `seed`")))
    }

    fn code_map(&self) -> Result<CodeMap, CliError> {
        match &self.cfg.code_map {
            Some(p) => Ok(CodeMap::load(p)?),
            None => Ok(CodeMap::default_map()),
        }
    }

    fn cohort(&self, code_map: &CodeMap) -> Result<Cohort, CliError> {
        let cohort = load_cohort(&self.cfg.cohort_files()?)?;
        Ok(if self.cfg.coded_radiation {
            cohort.with_coded_radiation(code_map)
        } else {
            cohort
        })
    }

    fn preprocess_config(&self) -> PreprocessConfig {
        let mut p = PreprocessConfig::new(self.cfg.end_of_data);
        p.outcome_horizon_days = self.cfg.outcome_horizon_days;
        p.troponin_threshold = self.cfg.troponin_threshold;
        p
    }

    fn features(&self) -> Result<FeatureTable, CliError> {
        let code_map = self.code_map()?;
        let cohort = self.cohort(&code_map)?;
        Ok(build_features(&cohort, &code_map, &self.preprocess_config())?)
    }

    fn options(&self) -> serde_json::Value {
        let c = &self.cfg;
        serde_json::json!({
            "end_of_data": c.end_of_data.to_string(),
            "alpha_stay": c.alpha_stay,
            "k": c.k,
            "boot": c.boot,
            "eliminate_in_causal": c.eliminate_in_causal,
            "arms_only_ate": c.arms_only_ate,
            "eliminate_in_cv": c.eliminate_in_cv,
            "outcome_horizon_days": c.outcome_horizon_days,
            "troponin_threshold": c.troponin_threshold,
            "coded_radiation": c.coded_radiation,
        })
    }
}

fn outcomes(one: Option<Outcome>) -> Vec<Outcome> {
    one.map_or_else(|| Outcome::ALL.to_vec(), |o| vec![o])
}

fn execute(command: Command) -> Result<(), CliError> {
    match command {
        Command::Validate(common) => cmd_validate(&common),
        Command::Features(common) => cmd_features(&common),
        Command::Fit {
            common,
            outcome,
            feature_set,
        } => cmd_fit(&common, outcome, feature_set),
        Command::Cv {
            common,
            outcome,
            feature_set,
        } => cmd_cv(&common, outcome, feature_set),
        Command::Effects { common, outcome } => cmd_effects(&common, outcome),
        Command::Compare {
            common,
            contrast,
            feature_set,
        } => cmd_compare(&common, contrast, feature_set),
        Command::Synth { config, seed, out } => cmd_synth(&config, seed, &out),
    }
}

fn cmd_validate(common: &Common) -> Result<(), CliError> {
    let ctx = Context::new(common)?;
    let code_map = ctx.code_map()?;
    let cohort = ctx.cohort(&code_map)?;
    let report = apply_eligibility(&cohort, &code_map, ctx.cfg.end_of_data);
    let mut out = OutputDir::create(ctx.out.clone())?;
    out.write("exclusions.csv", &report::exclusions_csv(&report))?;
    println!(
        "patients: {}, events: {}, included: {}, excluded: {}",
        cohort.len(),
        cohort.event_count(),
        report.included.len(),
        report.excluded.len()
    );
    out.finish("validate", &ctx.config_bytes, ctx.cfg.seed, ctx.options())
}

fn cmd_features(common: &Common) -> Result<(), CliError> {
    let ctx = Context::new(common)?;
    let table = ctx.features()?;
    let mut out = OutputDir::create(ctx.out.clone())?;
    out.write("features.csv", &report::features_csv(&table.features))?;
    out.write("exclusions.csv", &report::exclusions_csv(&table.eligibility))?;
    out.write("summary.csv", &report::summary_csv(&table.features))?;
    println!(
        "included: {}, excluded: {}",
        table.eligibility.included.len(),
        table.eligibility.excluded.len()
    );
    out.finish("features", &ctx.config_bytes, ctx.cfg.seed, ctx.options())
}

fn cmd_fit(common: &Common, outcome: Option<Outcome>, feature_set: Option<FeatureSet>) -> Result<(), CliError> {
    let ctx = Context::new(common)?;
    let predictors = match feature_set {
        Some(fs) => fs,
        None => ctx.cfg.predictors()?,
    };
    let table = ctx.features()?;
    let mut out = OutputDir::create(ctx.out.clone())?;
    let opts = FitOptions::default();
    for o in outcomes(outcome) {
        let fm = build_matrix(&table.features, &predictors, Target::Outcome(o))?;
        let trace = backward_eliminate(&fm, ctx.cfg.alpha_stay, &[], &opts).map_err(|e| from_glm(o, e))?;
        let full = coefficient_table(&trace.full_model, &fm).map_err(|e| from_glm(o, e))?;
        let kept = coefficient_table(&trace.final_model, &fm).map_err(|e| from_glm(o, e))?;
        out.write(&format!("coefficients_full_{o}.csv"), &report::coefficients_csv(&full))?;
        out.write(&format!("coefficients_{o}.csv"), &report::coefficients_csv(&kept))?;
        out.write(&format!("elimination_{o}.csv"), &report::elimination_csv(&trace))?;
        println!(
            "{o}: n = {}, kept {} of {} predictors",
            fm.nrows(),
            trace.final_model.column_names.len() - 1,
            fm.ncols() - 1
        );
    }
    let mut options = ctx.options();
    options["feature_set"] = predictors.name().into();
    out.finish("fit", &ctx.config_bytes, ctx.cfg.seed, options)
}

fn cmd_cv(common: &Common, outcome: Option<Outcome>, feature_set: Option<FeatureSet>) -> Result<(), CliError> {
    let ctx = Context::new(common)?;
    let seed = ctx.seed("cv")?;
    let predictors = match feature_set {
        Some(fs) => fs,
        None => ctx.cfg.predictors()?,
    };
    let table = ctx.features()?;
    let mut out = OutputDir::create(ctx.out.clone())?;
    let alpha = ctx.cfg.eliminate_in_cv.then_some(ctx.cfg.alpha_stay);
    let mut cv = format!("{}\n", report::CV_HEADER);
    for o in outcomes(outcome) {
        let fm = build_matrix(&table.features, &predictors, Target::Outcome(o))?;
        let r = cross_validated_auc(&fm, ctx.cfg.k, seed, alpha, &FitOptions::default()).map_err(|e| from_eval(o, e))?;
        let labels: Vec<bool> = fm.y.iter().map(|v| *v > 0.5).collect();
        let curve = roc_curve(&r.held_out_scores, &labels).map_err(|e| from_eval(o, e))?;
        cv.push_str(&report::cv_rows(o, &r));
        out.write(&format!("roc_points_{o}.csv"), &report::roc_csv(o, &curve))?;
        println!("{o}: mean AUC {} (pooled {})", crate::format::real(r.mean_auc), crate::format::real(r.pooled_auc));
    }
    out.write("cv_report.csv", &cv)?;
    println!("note: imputation means come from the full included cohort, before fold assignment");
    let mut options = ctx.options();
    options["feature_set"] = predictors.name().into();
    out.finish("cv", &ctx.config_bytes, Some(seed), options)
}

fn cmd_effects(common: &Common, outcome: Option<Outcome>) -> Result<(), CliError> {
    let ctx = Context::new(common)?;
    let seed = ctx.seed("effects")?;
    let table = ctx.features()?;
    let opts = EffectOptions {
        covariates: ctx.cfg.effect_covariates(),
        arms_only_ate: ctx.cfg.arms_only_ate,
        eliminate: ctx.cfg.eliminate_in_causal.then_some(ctx.cfg.alpha_stay),
        fit: FitOptions::default(),
    };
    let mut out = OutputDir::create(ctx.out.clone())?;
    let mut csv = format!("{}\n", report::EFFECTS_HEADER);
    for o in outcomes(outcome) {
        let design = effect_design(&table.features, o, &opts.covariates).map_err(|e| from_causal(o, e))?;
        let estimates = bootstrap_effects(&design, &opts, ctx.cfg.boot, seed).map_err(|e| from_causal(o, e))?;
        csv.push_str(&report::effect_rows(&estimates));
        println!("{o}: {} of {} bootstrap replicates succeeded", estimates[0].n_boot_succeeded, ctx.cfg.boot);
    }
    out.write("effects.csv", &csv)?;
    out.finish("effects", &ctx.config_bytes, Some(seed), ctx.options())
}

fn cmd_compare(common: &Common, contrast: Contrast, feature_set: FeatureSet) -> Result<(), CliError> {
    let ctx = Context::new(common)?;
    let table = ctx.features()?;
    let fm = build_matrix(&table.features, &feature_set, Target::Contrast(contrast))?;
    let treated = fm.y.iter().filter(|v| **v > 0.5).count();
    for (arm, count) in [(contrast.treated_arm(), treated), (crate::cohort::Treatment::Radiation, fm.nrows() - treated)] {
        if count == 0 {
            return Err(from_causal(contrast, CausalError::MissingArm(arm)));
        }
    }
    let trace = backward_eliminate(&fm, ctx.cfg.alpha_stay, &[], &FitOptions::default()).map_err(|e| from_glm(contrast, e))?;
    let full = coefficient_table(&trace.full_model, &fm).map_err(|e| from_glm(contrast, e))?;
    let kept = coefficient_table(&trace.final_model, &fm).map_err(|e| from_glm(contrast, e))?;
    let stem = format!("compare_{contrast}_{}", feature_set.name());
    let mut out = OutputDir::create(ctx.out.clone())?;
    out.write(&format!("{stem}_full.csv"), &report::coefficients_csv(&full))?;
    out.write(&format!("{stem}.csv"), &report::coefficients_csv(&kept))?;
    out.write(&format!("{stem}_elimination.csv"), &report::elimination_csv(&trace))?;
    println!(
        "{contrast}: n = {}, kept {} of {} predictors",
        fm.nrows(),
        trace.final_model.column_names.len() - 1,
        fm.ncols() - 1
    );
    let mut options = ctx.options();
    options["contrast"] = contrast.as_str().into();
    options["feature_set"] = feature_set.name().into();
    out.finish("compare", &ctx.config_bytes, ctx.cfg.seed, options)
}

fn cmd_synth(spec_path: &Path, seed: Option<u64>, out_dir: &Path) -> Result<(), CliError> {
    let bytes = std::fs::read(spec_path).map_err(|e| CliError::Config(format!("{}: {e}", spec_path.display())))?;
    let mut spec = SyntheticSpec::load(spec_path)?;
    if let Some(s) = seed {
        spec.seed = s;
    }
    let cohort = generate(&spec)?;
    cohort.write(out_dir)?;
    let truth = compute_truth(&cohort);
    write_truth(out_dir, &truth)?;
    let mut out = OutputDir::create(out_dir.to_path_buf())?;
    for name in ["patients.csv", "observations.csv", "diagnoses.csv", "medications.csv", "treatments.csv", "truth.csv"] {
        let content = std::fs::read(out_dir.join(name)).map_err(|e| CliError::Input(e.to_string()))?;
        out.written.push(ManifestFile {
            file: name.into(),
            sha256: sha256_hex(&content),
        });
    }
    println!("generated {} patients into {}", spec.n, out_dir.display());
    let options = serde_json::json!({ "n": spec.n, "truth_mc_draws": spec.mc_draws() });
    out.finish("synth", &bytes, Some(spec.seed), options)
}
