use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};
use serde::Serialize;

use rtbarrier_core::clusrank::MIN_MOMENT_PERMUTATIONS;
use rtbarrier_core::diagnostics::{self, Histogram};
use rtbarrier_core::tailsim::{self, DEFAULT_DRAWS};
use rtbarrier_core::{
    asymptotic_test, build_clustered_sample, build_model_dataset, fit, load_csv, load_exclusions, permutation_test,
    quantile_residuals, simulate_marginal, tail_report, ClusRankResult, Comparison, Exclusion, FitConfig, Gender,
    GenderFilter, MixedGGModel, ModelFilter, PopulationParams, RTRecord, TailReport,
};

use crate::output::{fmt_f64, report, sha256_file, Sink};
use crate::{ClusrankArgs, Cli, Command, Common, FitArgs, ReproduceArgs, TailArgs};

const DATA_FILE: &str = "reaction_times.csv";
const EXCLUSIONS_FILE: &str = "exclusions.csv";
const HISTOGRAM_WIDTH: f64 = 0.005;
const KDE_GRID: (f64, f64, usize) = (0.05, 0.35, 601);
const FILLIBEN_CUTOFF: f64 = 0.99;
const QUICK_PERMUTATIONS: usize = 10_000;
const QUICK_DRAWS: usize = 100_000;
const DENSITY_DRAWS: usize = 1_000_000;
const EXIT_NOT_CONVERGED: u8 = 2;

pub fn run(cli: &Cli) -> Result<ExitCode> {
    match &cli.command {
        Command::Clusrank(args) => cmd_clusrank(&cli.common, args),
        Command::Fit(args) => cmd_fit(&cli.common, args),
        Command::Tail(args) => cmd_tail(&cli.common, args),
        Command::Reproduce(args) => cmd_reproduce(&cli.common, args),
    }
}

struct Dataset {
    path: PathBuf,
    sha256: String,
    records: Vec<RTRecord>,
}

fn data_path(common: &Common) -> PathBuf {
    if let Some(p) = &common.data {
        return p.clone();
    }
    common.data_dir.clone().unwrap_or_else(|| PathBuf::from("data")).join(DATA_FILE)
}

fn load_dataset(common: &Common) -> Result<Dataset> {
    let path = data_path(common);
    if !path.is_file() {
        bail!(
            "reaction-time data not found at {} (pass --data or set {})",
            path.display(),
            crate::DATA_DIR_ENV
        );
    }
    let sha256 = sha256_file(&path)?;
    let records = load_csv(&path).with_context(|| format!("loading {}", path.display()))?;
    Ok(Dataset { path, sha256, records })
}

fn display(p: &Path) -> String {
    p.display().to_string()
}

// ---------------------------------------------------------------- clusrank

#[derive(Debug, Serialize)]
struct ClusrankConfig {
    command: &'static str,
    data_path: String,
    seed: u64,
    n_permutations: usize,
    comparisons: Vec<&'static str>,
    genders: Vec<GenderFilter>,
}

#[derive(Debug, Serialize)]
struct ClusrankBody<'a> {
    comparison: &'static str,
    treatment: String,
    control: String,
    gender: GenderFilter,
    n_athletes: usize,
    n_rts: usize,
    n_treatment_rts: usize,
    n_control_rts: usize,
    mode: &'static str,
    result: &'a ClusRankResult,
}

struct ClusrankRow {
    comparison: Comparison,
    gender: GenderFilter,
    n_athletes: usize,
    n_rts: usize,
    result: ClusRankResult,
    file: PathBuf,
}

fn clusrank_one(
    sink: &Sink,
    config: &ClusrankConfig,
    data: &Dataset,
    comparison: Comparison,
    gender: GenderFilter,
) -> Result<ClusrankRow> {
    let sample = build_clustered_sample(&data.records, comparison.treatment(), comparison.control(), gender)
        .with_context(|| format!("{} ({gender})", comparison.name()))?;
    let (result, mode) = if config.n_permutations == 0 {
        (asymptotic_test(&sample, MIN_MOMENT_PERMUTATIONS, config.seed)?, "asymptotic")
    } else {
        (permutation_test(&sample, config.n_permutations, config.seed)?, "permutation")
    };
    let n_treatment: usize = sample.clusters().iter().map(|c| c.treatment_count()).sum();
    let body = ClusrankBody {
        comparison: comparison.name(),
        treatment: comparison.treatment().to_string(),
        control: comparison.control().to_string(),
        gender,
        n_athletes: sample.n_clusters(),
        n_rts: sample.n_observations(),
        n_treatment_rts: n_treatment,
        n_control_rts: sample.n_observations() - n_treatment,
        mode,
        result: &result,
    };
    let file = sink.json(
        &format!("clusrank_{gender}_{}.json", comparison.name()),
        &report(config, Some(&data.sha256), body),
    )?;
    Ok(ClusrankRow {
        comparison,
        gender,
        n_athletes: sample.n_clusters(),
        n_rts: sample.n_observations(),
        result,
        file,
    })
}

fn write_clusrank_table(sink: &Sink, name: &str, rows: &[ClusrankRow]) -> Result<PathBuf> {
    sink.csv(
        name,
        &[
            "comparison",
            "gender",
            "n_athletes",
            "n_rts",
            "statistic",
            "null_mean",
            "null_sd",
            "z",
            "p_asymptotic",
            "p_permutation",
        ],
        rows.iter().map(|r| {
            vec![
                r.comparison.name().to_string(),
                r.gender.to_string(),
                r.n_athletes.to_string(),
                r.n_rts.to_string(),
                fmt_f64(r.result.statistic),
                fmt_f64(r.result.null_mean),
                fmt_f64(r.result.null_sd),
                fmt_f64(r.result.z),
                fmt_f64(r.result.p_asymptotic),
                r.result.p_permutation.map(fmt_f64).unwrap_or_default(),
            ]
        }),
    )
}

fn cmd_clusrank(common: &Common, args: &ClusrankArgs) -> Result<ExitCode> {
    let data = load_dataset(common)?;
    let comparisons = if args.compare.is_empty() {
        Comparison::ALL.to_vec()
    } else {
        args.compare.clone()
    };
    let genders = match (args.pool_genders, args.gender) {
        (true, _) => vec![GenderFilter::Pooled],
        (false, Some(g)) => vec![g],
        (false, None) => vec![GenderFilter::Men, GenderFilter::Women],
    };
    let config = ClusrankConfig {
        command: "clusrank",
        data_path: display(&data.path),
        seed: common.seed,
        n_permutations: args.permutations,
        comparisons: comparisons.iter().map(|c| c.name()).collect(),
        genders: genders.clone(),
    };
    let sink = Sink::new(&common.out)?;
    let mut rows = Vec::new();
    for &gender in &genders {
        for &comparison in &comparisons {
            let row = clusrank_one(&sink, &config, &data, comparison, gender)?;
            println!(
                "{:<22} {:<6} athletes={:>3} rts={:>4} S={:.4} z={:.3} p_asym={:.3e} p_perm={}",
                comparison.name(),
                gender,
                row.n_athletes,
                row.n_rts,
                row.result.statistic,
                row.result.z,
                row.result.p_asymptotic,
                row.result.p_permutation.map(|p| format!("{p:.3e}")).unwrap_or_else(|| "-".into()),
            );
            rows.push(row);
        }
    }
    write_clusrank_table(&sink, "clusrank_table.csv", &rows)?;
    Ok(ExitCode::SUCCESS)
}

// --------------------------------------------------------------------- fit

#[derive(Debug, Clone, Serialize)]
struct FitRunConfig {
    command: &'static str,
    data_path: String,
    seed: u64,
    gender: Gender,
    include_2022: bool,
    include_dq: bool,
    exclusion_list_path: Option<String>,
    n_exclusions: usize,
    density_draws: usize,
    fit: FitConfig,
}

#[derive(Debug, Serialize)]
struct FitDiagnostics {
    ks_statistic: f64,
    ks_pvalue: f64,
    filliben: f64,
    adequate_fit: bool,
    clamped_residuals: Vec<usize>,
}

#[derive(Debug, Serialize)]
struct FitBody<'a> {
    label: &'a str,
    n_observations: usize,
    n_venues: usize,
    n_heats: usize,
    diagnostics: FitDiagnostics,
    model: &'a MixedGGModel,
}

struct FitSpec {
    gender: Gender,
    include_2022: bool,
    include_dq: bool,
    exclusions: Option<PathBuf>,
    density_draws: usize,
}

impl FitSpec {
    fn label(&self) -> String {
        let mut s = format!("{}-{}", self.gender, if self.include_2022 { "incl2022" } else { "excl2022" });
        if !self.include_dq {
            s.push_str("-nodq");
        }
        s
    }
}

struct FitOutcome {
    model: MixedGGModel,
    files: Vec<PathBuf>,
}

fn model_gender(g: GenderFilter) -> Result<Gender> {
    match g {
        GenderFilter::Men => Ok(Gender::Men),
        GenderFilter::Women => Ok(Gender::Women),
        GenderFilter::Pooled => bail!("the mixed model is fitted per gender; `pooled` is not supported"),
    }
}

/// Explicit list, else the bundled list next to the data for women.
fn resolve_exclusions(explicit: Option<&Path>, data: &Dataset, gender: Gender) -> Option<PathBuf> {
    if let Some(p) = explicit {
        return Some(p.to_path_buf());
    }
    if gender != Gender::Women {
        return None;
    }
    let bundled = data.path.parent().unwrap_or(Path::new(".")).join(EXCLUSIONS_FILE);
    bundled.is_file().then_some(bundled)
}

fn fit_one(sink: &Sink, seed: u64, data: &Dataset, spec: &FitSpec) -> Result<FitOutcome> {
    let label = spec.label();
    let exclusions: Vec<Exclusion> = match &spec.exclusions {
        Some(p) => load_exclusions(p).with_context(|| format!("loading {}", p.display()))?,
        None => Vec::new(),
    };
    let filter = ModelFilter {
        include_2022: spec.include_2022,
        include_positive_dq: spec.include_dq,
        exclusions: exclusions.clone(),
        ..ModelFilter::new(spec.gender)
    };
    let dataset = build_model_dataset(&data.records, &filter)?;
    let fit_config = FitConfig::default();
    let config = FitRunConfig {
        command: "fit",
        data_path: display(&data.path),
        seed,
        gender: spec.gender,
        include_2022: spec.include_2022,
        include_dq: spec.include_dq,
        exclusion_list_path: spec.exclusions.as_deref().map(display),
        n_exclusions: exclusions.len(),
        density_draws: spec.density_draws,
        fit: fit_config.clone(),
    };
    let model = fit(&dataset, &fit_config)?;
    let residuals = quantile_residuals(&model, &dataset)?;
    let ks = diagnostics::ks_statistic(&residuals.z_scores, rtbarrier_core::special::norm_cdf);
    let filliben = residuals.filliben();
    let body = FitBody {
        label: &label,
        n_observations: dataset.len(),
        n_venues: dataset.venue_count(),
        n_heats: dataset.heat_count(),
        diagnostics: FitDiagnostics {
            ks_statistic: ks,
            ks_pvalue: diagnostics::ks_pvalue(ks, dataset.len() as f64),
            filliben,
            adequate_fit: filliben >= FILLIBEN_CUTOFF,
            clamped_residuals: residuals.clamped.clone(),
        },
        model: &model,
    };
    let mut files = vec![sink.json(&format!("fit_{label}.json"), &report(&config, Some(&data.sha256), body))?];

    files.push(sink.csv(
        &format!("residuals_{label}.csv"),
        &["index", "year", "heat_id", "rt_seconds", "z"],
        dataset.observations.iter().zip(&residuals.z_scores).enumerate().map(|(i, (o, z))| {
            let heat = &dataset.heats[o.heat];
            vec![
                i.to_string(),
                dataset.venues[heat.venue].to_string(),
                heat.heat_id.clone(),
                fmt_f64(o.value),
                fmt_f64(*z),
            ]
        }),
    )?);
    files.push(sink.csv(
        &format!("qq_{label}.csv"),
        &["theoretical", "sample"],
        residuals.qq_pairs.iter().map(|(t, s)| vec![fmt_f64(*t), fmt_f64(*s)]),
    )?);

    let observed: Vec<f64> = dataset.values().collect();
    let hist = Histogram::new(&observed, HISTOGRAM_WIDTH);
    files.push(sink.csv(
        &format!("histogram_{label}.csv"),
        &["bin_center", "count", "density"],
        hist.centers()
            .zip(&hist.counts)
            .zip(hist.density())
            .map(|((c, n), d)| vec![fmt_f64(c), n.to_string(), fmt_f64(d)]),
    )?);
    let draws = simulate_marginal(&model.population(), spec.density_draws, seed);
    let bandwidth = diagnostics::silverman_bandwidth(&draws);
    let kde = diagnostics::kde(&draws, bandwidth, KDE_GRID.0, KDE_GRID.1, KDE_GRID.2);
    files.push(sink.csv(
        &format!("kde_{label}.csv"),
        &["rt_seconds", "density"],
        kde.iter().map(|(x, d)| vec![fmt_f64(*x), fmt_f64(*d)]),
    )?);

    println!(
        "{label}: n={} beta0={:.4} gamma0={:.4} nu={:.4} tau_v={:.4} tau_h={:.4} converged={} iterations={} filliben={:.4}",
        dataset.len(),
        model.beta0,
        model.gamma0,
        model.nu,
        model.tau_v,
        model.tau_h,
        model.converged,
        model.n_iterations,
        filliben
    );
    Ok(FitOutcome { model, files })
}

fn cmd_fit(common: &Common, args: &FitArgs) -> Result<ExitCode> {
    let data = load_dataset(common)?;
    let gender = model_gender(args.model.gender)?;
    let spec = FitSpec {
        gender,
        include_2022: args.model.include_2022(),
        include_dq: args.model.include_dq(),
        exclusions: resolve_exclusions(args.model.exclusions.as_deref(), &data, gender),
        density_draws: args.draws,
    };
    let sink = Sink::new(&common.out)?;
    let outcome = fit_one(&sink, common.seed, &data, &spec)?;
    if !outcome.model.converged {
        eprintln!(
            "error: fit did not converge after {} iterations; partial model written",
            outcome.model.n_iterations
        );
        return Ok(ExitCode::from(EXIT_NOT_CONVERGED));
    }
    Ok(ExitCode::SUCCESS)
}

// -------------------------------------------------------------------- tail

#[derive(Debug, Serialize)]
struct TailRunConfig {
    command: &'static str,
    seed: u64,
    n_draws: usize,
    thresholds: Vec<f64>,
    targets: Vec<f64>,
    model_path: Option<String>,
    model_sha256: Option<String>,
}

#[derive(Debug, Serialize)]
struct UnavailableTarget {
    target_tail_prob: f64,
    reason: String,
}

#[derive(Debug, Serialize)]
struct TailBody<'a> {
    label: &'a str,
    report: &'a TailReport,
    unavailable_targets: Vec<UnavailableTarget>,
}

/// Accepts a fit report or a bare model. Bare population parameters also work.
fn read_model(path: &Path) -> Result<MixedGGModel> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading model {}", path.display()))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).with_context(|| format!("model file {} is not valid JSON", path.display()))?;
    let inner = value.get("model").cloned().unwrap_or(value);
    if let Ok(model) = serde_json::from_value::<MixedGGModel>(inner.clone()) {
        return Ok(model);
    }
    let params: PopulationParams = serde_json::from_value(inner)
        .with_context(|| format!("model file {} holds neither a fitted model nor population parameters", path.display()))?;
    Ok(MixedGGModel::from_population(PopulationParams::new(
        params.beta0,
        params.gamma0,
        params.nu,
        params.tau_v,
        params.tau_h,
    )?))
}

struct TailSpec<'a> {
    label: &'a str,
    thresholds: &'a [f64],
    targets: &'a [f64],
    n_draws: usize,
    /// Skip targets the draw count cannot support instead of failing.
    skip_infeasible: bool,
}

fn tail_one(
    sink: &Sink,
    seed: u64,
    model: &MixedGGModel,
    model_path: Option<&Path>,
    dataset_sha256: Option<&str>,
    spec: &TailSpec<'_>,
) -> Result<(TailReport, Vec<f64>, Vec<PathBuf>)> {
    let (feasible, infeasible): (Vec<f64>, Vec<f64>) = spec
        .targets
        .iter()
        .partition(|&&t| !spec.skip_infeasible || tailsim::target_feasible(t, spec.n_draws));
    let report_data = tail_report(model, spec.thresholds, &feasible, spec.n_draws, seed)?;
    let config = TailRunConfig {
        command: "tail",
        seed,
        n_draws: spec.n_draws,
        thresholds: spec.thresholds.to_vec(),
        targets: spec.targets.to_vec(),
        model_path: model_path.map(display),
        model_sha256: model_path.map(sha256_file).transpose()?,
    };
    let body = TailBody {
        label: spec.label,
        report: &report_data,
        unavailable_targets: infeasible
            .iter()
            .map(|&t| UnavailableTarget {
                target_tail_prob: t,
                reason: format!(
                    "insufficient draws for target probability: {} draws give {} expected tail draws, below {}",
                    spec.n_draws,
                    t * spec.n_draws as f64,
                    tailsim::MIN_TAIL_COUNT
                ),
            })
            .collect(),
    };
    let mut files = vec![sink.json(&format!("tail_{}.json", spec.label), &report(&config, dataset_sha256, body))?];
    files.push(sink.with_writer(&format!("tail_{}.csv", spec.label), |f| Ok(report_data.write_csv(f)?))?);
    files.push(sink.csv(
        &format!("barriers_{}.csv", spec.label),
        &["target_tail_prob", "barrier_seconds", "raw_quantile"],
        report_data.barriers.iter().map(|b| {
            vec![fmt_f64(b.target_tail_prob), fmt_f64(b.barrier_seconds), fmt_f64(b.raw_quantile)]
        }),
    )?);
    for e in &report_data.thresholds_evaluated {
        let one_in = e.one_in.map(|n| format!("one in {n}")).unwrap_or_else(|| "no draws below".into());
        let bound = if e.upper_bound_only { " (upper bound)" } else { "" };
        println!(
            "{}: P(Y < {}) = {:.3e}{bound} se={:.2e} ({one_in})",
            spec.label, e.threshold, e.p_hat, e.mc_standard_error
        );
    }
    for b in &report_data.barriers {
        println!("{}: barrier at tail {:e} = {:.3} s", spec.label, b.target_tail_prob, b.barrier_seconds);
    }
    Ok((report_data, infeasible, files))
}

fn cmd_tail(common: &Common, args: &TailArgs) -> Result<ExitCode> {
    let model = match (&args.model, &args.params) {
        (Some(path), _) => read_model(path)?,
        (None, Some(p)) if p.len() != 5 => bail!("--params takes 5 values, got {}", p.len()),
        (None, Some(p)) => MixedGGModel::from_population(PopulationParams::new(p[0], p[1], p[2], p[3], p[4])?),
        (None, None) => bail!("pass --model or --params"),
    };
    let sink = Sink::new(&common.out)?;
    let spec = TailSpec {
        label: &args.label,
        thresholds: &args.thresholds,
        targets: &args.targets,
        n_draws: args.draws,
        skip_infeasible: false,
    };
    tail_one(&sink, common.seed, &model, args.model.as_deref(), None, &spec)?;
    Ok(ExitCode::SUCCESS)
}

// --------------------------------------------------------------- reproduce

#[derive(Debug, Serialize)]
struct Step {
    kind: &'static str,
    name: String,
    status: &'static str,
    files: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    note: Option<String>,
}

#[derive(Debug, Serialize)]
struct Manifest {
    tool_version: &'static str,
    started_unix: u64,
    seed: u64,
    quick: bool,
    n_permutations: usize,
    n_draws: usize,
    data_path: String,
    dataset_sha256: String,
    steps: Vec<Step>,
    all_ok: bool,
}

fn relative(root: &Path, files: &[PathBuf]) -> Vec<String> {
    files
        .iter()
        .map(|f| f.strip_prefix(root).unwrap_or(f).display().to_string())
        .collect()
}

fn cmd_reproduce(common: &Common, args: &ReproduceArgs) -> Result<ExitCode> {
    let data = load_dataset(common)?;
    let started = SystemTime::now().duration_since(UNIX_EPOCH)?.as_secs();
    let n_permutations = args
        .permutations
        .unwrap_or(if args.quick { QUICK_PERMUTATIONS } else { 1_000_000 });
    let n_draws = args.draws.unwrap_or(if args.quick { QUICK_DRAWS } else { DEFAULT_DRAWS });
    let sink = Sink::new(common.out.join(format!("run-{started}")))?;
    let mut steps = Vec::new();

    // Clustered rank-sum tests, per gender and pooled.
    let clus_config = ClusrankConfig {
        command: "clusrank",
        data_path: display(&data.path),
        seed: common.seed,
        n_permutations,
        comparisons: Comparison::ALL.iter().map(|c| c.name()).collect(),
        genders: vec![GenderFilter::Men, GenderFilter::Women, GenderFilter::Pooled],
    };
    for (table, genders) in [
        ("clusrank_table.csv", vec![GenderFilter::Men, GenderFilter::Women]),
        ("clusrank_pooled.csv", vec![GenderFilter::Pooled]),
    ] {
        let mut rows = Vec::new();
        for &gender in &genders {
            for comparison in Comparison::ALL {
                let name = format!("{gender}/{}", comparison.name());
                match clusrank_one(&sink, &clus_config, &data, comparison, gender) {
                    Ok(row) => {
                        steps.push(Step {
                            kind: "clusrank",
                            name,
                            status: "ok",
                            files: relative(&sink.dir, std::slice::from_ref(&row.file)),
                            note: None,
                        });
                        rows.push(row);
                    }
                    Err(e) => steps.push(Step {
                        kind: "clusrank",
                        name,
                        status: "failed",
                        files: Vec::new(),
                        note: Some(format!("{e:#}")),
                    }),
                }
            }
        }
        let table_file = write_clusrank_table(&sink, table, &rows)?;
        steps.push(Step {
            kind: "table",
            name: table.to_string(),
            status: "ok",
            files: relative(&sink.dir, &[table_file]),
            note: None,
        });
    }

    // Model fits and their tail tables.
    let density_draws = if args.quick { QUICK_DRAWS } else { DENSITY_DRAWS };
    let fits = [
        (Gender::Men, true, true),
        (Gender::Men, false, true),
        (Gender::Men, true, false),
        (Gender::Women, true, true),
        (Gender::Women, false, true),
    ];
    let thresholds = [0.08, 0.09, 0.10];
    let targets = [1e-2, 1e-3, 1e-4];
    for (gender, include_2022, include_dq) in fits {
        let spec = FitSpec {
            gender,
            include_2022,
            include_dq,
            exclusions: resolve_exclusions(args.exclusions.as_deref(), &data, gender),
            density_draws,
        };
        let label = spec.label();
        let outcome = match fit_one(&sink, common.seed, &data, &spec) {
            Ok(o) => o,
            Err(e) => {
                steps.push(Step {
                    kind: "fit",
                    name: label.clone(),
                    status: "failed",
                    files: Vec::new(),
                    note: Some(format!("{e:#}")),
                });
                steps.push(Step {
                    kind: "tail",
                    name: label,
                    status: "skipped",
                    files: Vec::new(),
                    note: Some("no fitted model".into()),
                });
                continue;
            }
        };
        let converged = outcome.model.converged;
        steps.push(Step {
            kind: "fit",
            name: label.clone(),
            status: if converged { "ok" } else { "failed" },
            files: relative(&sink.dir, &outcome.files),
            note: (!converged).then(|| format!("not converged after {} iterations", outcome.model.n_iterations)),
        });
        let tail_spec = TailSpec {
            label: &label,
            thresholds: &thresholds,
            targets: &targets,
            n_draws,
            skip_infeasible: true,
        };
        match tail_one(&sink, common.seed, &outcome.model, None, Some(&data.sha256), &tail_spec) {
            Ok((_, infeasible, files)) => steps.push(Step {
                kind: "tail",
                name: label,
                status: "ok",
                files: relative(&sink.dir, &files),
                note: (!infeasible.is_empty()).then(|| {
                    format!("barriers unavailable at {n_draws} draws for targets {infeasible:?}")
                }),
            }),
            Err(e) => steps.push(Step {
                kind: "tail",
                name: label,
                status: "failed",
                files: Vec::new(),
                note: Some(format!("{e:#}")),
            }),
        }
    }

    let all_ok = steps.iter().all(|s| s.status != "failed");
    let manifest = Manifest {
        tool_version: env!("CARGO_PKG_VERSION"),
        started_unix: started,
        seed: common.seed,
        quick: args.quick,
        n_permutations,
        n_draws,
        data_path: display(&data.path),
        dataset_sha256: data.sha256.clone(),
        steps,
        all_ok,
    };
    let path = sink.json("manifest.json", &manifest)?;
    println!("manifest: {}", path.display());
    Ok(if all_ok { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}
