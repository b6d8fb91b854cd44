use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use designvar::bound_estimation::{ipw_bound_matrix, plugin_bound_estimate};
use designvar::bounds::{
    algorithm_m_bound, aronow_samii_bound, certify, neyman_bound, AlgorithmMInit,
    AlgorithmMOptions, BoundMatrix, DEFAULT_MAX_ITER,
};
use designvar::design::{
    build_design, first_order_condition_norm, Design, DesignMatrix, DesignMode, DesignMoments,
    DesignSpec, ImpossibilityMask,
};
use designvar::estimators::{
    expand_covariates, point_estimate, ContrastVector, EstimatorKind, EstimatorSpec,
};
use designvar::io::{
    read_covariates_csv, read_matrix_csv, read_observed_csv, read_weights_csv, write_matrix_csv,
    write_vector_csv, MatrixCsv,
};
use designvar::montecarlo::{
    consistency_sweep, run_scenario, BoundChoice, EstimatorFileSpec, OutcomeSpec, ScenarioSpec,
    SweepRow,
};
use designvar::prob::{self, Rational};
use designvar::spectral::{compare_bound_matrices, compare_matrices, DEFAULT_PSD_TOL};
use designvar::{Error, IndexLayout, Result};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Parser)]
#[command(
    name = "designvar",
    version,
    about = "Design-based variances, variance bounds and bound estimators"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write π, p, d and the impossibility mask for a JSON design.
    Design {
        spec: PathBuf,
        /// Output directory.
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Seed for a monte-carlo design that gives none.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Build or verify a variance bound from d and mask CSVs.
    Bound {
        #[arg(long)]
        d: PathBuf,
        #[arg(long)]
        mask: PathBuf,
        #[arg(long, value_enum)]
        method: Method,
        /// Comma-separated contrast, e.g. "-1,1".
        #[arg(long, allow_hyphen_values = true)]
        contrast: Option<String>,
        #[arg(long, default_value_t = DEFAULT_PSD_TOL)]
        tol: f64,
        #[arg(long, default_value_t = DEFAULT_MAX_ITER)]
        max_iter: usize,
        /// Number of arms k; n is inferred from the matrix size.
        #[arg(long, default_value_t = 2)]
        arms: usize,
        /// Bound matrix to certify (verify only).
        #[arg(long)]
        dtilde: Option<PathBuf>,
        /// Bound CSV path; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Certification JSON path; stderr summary when absent.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Point estimate and bound estimate from one observed assignment.
    Estimate {
        #[arg(long)]
        design: PathBuf,
        /// unit_id,arm_assigned,y_obs
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "ht")]
        estimator: EstimatorKind,
        #[arg(long, allow_hyphen_values = true, default_value = "-1,1")]
        contrast: String,
        #[arg(long, default_value = "as")]
        bound: BoundChoice,
        /// unit_id,x1,...
        #[arg(long)]
        covariates: Option<PathBuf>,
        /// unit_id,arm,m (WLS)
        #[arg(long)]
        weights: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Spectrum of the difference of two matrices.
    Compare {
        a: PathBuf,
        b: PathBuf,
        #[arg(long = "as", value_enum, default_value_t = CompareKind::Designs)]
        kind: CompareKind,
        #[arg(long, default_value_t = 2)]
        arms: usize,
        #[arg(long, default_value_t = DEFAULT_PSD_TOL)]
        tol: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a simulation scenario file.
    Simulate {
        scenario: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// n-scaled variance and Taylor-gap trend table over replicated populations.
    Sweep {
        spec: PathBuf,
        /// CSV trend table path; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Neyman,
    As,
    Algm,
    Verify,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum CompareKind {
    Designs,
    Bounds,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Error::Io(e)) if e.kind() == std::io::ErrorKind::BrokenPipe => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 3 } else { 2 })
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Design { spec, out, seed } => cmd_design(&spec, &out, seed),
        Command::Bound {
            d,
            mask,
            method,
            contrast,
            tol,
            max_iter,
            arms,
            dtilde,
            out,
            report,
        } => cmd_bound(BoundArgs {
            d,
            mask,
            method,
            contrast,
            tol,
            max_iter,
            arms,
            dtilde,
            out,
            report,
        }),
        Command::Estimate {
            design,
            data,
            estimator,
            contrast,
            bound,
            covariates,
            weights,
            seed,
            out,
        } => cmd_estimate(EstimateArgs {
            design,
            data,
            estimator,
            contrast,
            bound,
            covariates,
            weights,
            seed,
            out,
        }),
        Command::Compare {
            a,
            b,
            kind,
            arms,
            tol,
            out,
        } => cmd_compare(&a, &b, kind, arms, tol, out.as_deref()),
        Command::Simulate {
            scenario,
            seed,
            out,
        } => cmd_simulate(&scenario, seed, out.as_deref()),
        Command::Sweep { spec, out } => cmd_sweep(&spec, out.as_deref()),
    }
}

fn read_json(path: &Path) -> Result<Value> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))
}

/// Fills a missing `seed` in a monte-carlo block from `--seed`.
fn inject_seed(v: &mut Value, seed: Option<u64>) {
    if let (Some(seed), Some(obj)) = (seed, v.as_object_mut()) {
        if obj.get("mode").and_then(Value::as_str) == Some("mc") && !obj.contains_key("seed") {
            obj.insert("seed".into(), seed.into());
        }
    }
}

fn from_value<T: for<'de> Deserialize<'de>>(v: Value, path: &Path) -> Result<T> {
    serde_json::from_value(v).map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))
}

fn load_design(path: &Path, seed: Option<u64>) -> Result<Design> {
    let mut v = read_json(path)?;
    inject_seed(&mut v, seed);
    build_design(&from_value::<DesignSpec>(v, path)?)
}

fn parse_contrast(s: &str) -> Result<ContrastVector> {
    let values = s
        .split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidInput(format!("contrast entry '{t}' is not a number")))
        })
        .collect::<Result<Vec<_>>>()?;
    ContrastVector::new(values)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

fn emit_json<T: Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match out {
        Some(path) => {
            let mut w = create(path)?;
            writeln!(w, "{text}")?;
            w.flush()?;
        }
        None => writeln!(std::io::stdout().lock(), "{text}")?,
    }
    Ok(())
}

#[derive(Serialize)]
struct DesignSummary {
    k: usize,
    n: usize,
    mode: DesignMode,
    support_size: String,
    enumerable: bool,
    exact: bool,
    masked_pairs: usize,
    first_order_condition_norm: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    mc_replicates: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pi_std_errors: Option<Vec<f64>>,
}

fn cmd_design(spec: &Path, out: &Path, seed: Option<u64>) -> Result<()> {
    let design = load_design(spec, seed)?;
    let m = DesignMoments::compute(&design)?;
    let layout = *design.layout();
    fs::create_dir_all(out)?;
    write_vector_csv(
        create(&out.join("pi.csv"))?,
        &layout,
        m.pi.probs().as_slice(),
        m.pi.exact(),
    )?;
    write_matrix_csv(create(&out.join("p.csv"))?, m.p.values(), m.p.exact())?;
    write_matrix_csv(create(&out.join("d.csv"))?, m.d.values(), m.d.exact())?;
    write_matrix_csv(create(&out.join("mask.csv"))?, m.mask.values(), None)?;
    let mc = design
        .options()
        .monte_carlo
        .filter(|_| design.mode() == DesignMode::MonteCarlo);
    let summary = DesignSummary {
        k: layout.k(),
        n: layout.n(),
        mode: design.mode(),
        support_size: design.support_size().to_string(),
        enumerable: design.is_enumerable(),
        exact: m.d.exact().is_some(),
        masked_pairs: m.mask.count(),
        first_order_condition_norm: first_order_condition_norm(&m.d),
        mc_replicates: mc.map(|c| c.replicates),
        seed: mc.map(|c| c.seed),
        pi_std_errors: m.pi.std_errors().map(|s| s.iter().copied().collect()),
    };
    emit_json(&summary, Some(&out.join("design.json")))
}

fn read_matrix(path: &Path) -> Result<MatrixCsv> {
    read_matrix_csv(BufReader::new(File::open(path)?))
}

fn layout_for(size: usize, arms: usize) -> Result<IndexLayout> {
    if arms == 0 || !size.is_multiple_of(arms) {
        return Err(Error::InvalidInput(format!(
            "a {size}x{size} matrix cannot hold {arms} arms"
        )));
    }
    IndexLayout::new(arms, size / arms)
}

fn load_d(path: &Path, arms: usize) -> Result<DesignMatrix> {
    let csv = read_matrix(path)?;
    let layout = layout_for(csv.values.nrows(), arms)?;
    match csv.exact {
        Some(exact) => DesignMatrix::from_exact_entries(layout, exact),
        None => DesignMatrix::from_matrix(layout, csv.values),
    }
}

struct BoundArgs {
    d: PathBuf,
    mask: PathBuf,
    method: Method,
    contrast: Option<String>,
    tol: f64,
    max_iter: usize,
    arms: usize,
    dtilde: Option<PathBuf>,
    out: Option<PathBuf>,
    report: Option<PathBuf>,
}

fn cmd_bound(args: BoundArgs) -> Result<()> {
    if !(args.tol.is_finite() && args.tol > 0.0) {
        return Err(Error::InvalidInput(format!(
            "tolerance {} must be positive",
            args.tol
        )));
    }
    let d = load_d(&args.d, args.arms)?;
    let mask = ImpossibilityMask::from_matrix(*d.layout(), read_matrix(&args.mask)?.values)?;
    let contrast = args.contrast.as_deref().map(parse_contrast).transpose()?;
    let bound = match args.method {
        Method::Neyman => {
            let c = contrast
                .ok_or_else(|| Error::InvalidInput("--method neyman needs --contrast".into()))?;
            certify(neyman_bound(&d, &mask, &c)?, &d, &mask, args.tol)
        }
        Method::As => certify(aronow_samii_bound(&d, &mask)?, &d, &mask, args.tol),
        Method::Algm => {
            let init = match contrast {
                Some(c) => AlgorithmMInit::Neyman(c),
                None => AlgorithmMInit::Mask,
            };
            algorithm_m_bound(
                &d,
                &mask,
                &AlgorithmMOptions {
                    init,
                    tol: args.tol,
                    max_iter: args.max_iter,
                },
            )?
        }
        Method::Verify => {
            let path = args
                .dtilde
                .as_ref()
                .ok_or_else(|| Error::InvalidInput("--method verify needs --dtilde".into()))?;
            let user = BoundMatrix::user(*d.layout(), read_matrix(path)?.values)?;
            certify(user, &d, &mask, args.tol)
        }
    };
    let sidecar = bound.sidecar();
    match &args.out {
        Some(path) => write_matrix_csv(create(path)?, bound.dtilde(), None)?,
        None if !matches!(args.method, Method::Verify) => {
            write_matrix_csv(std::io::stdout().lock(), bound.dtilde(), None)?
        }
        None => {}
    }
    match (&args.report, args.method) {
        (Some(path), _) => emit_json(&sidecar, Some(path)),
        (None, Method::Verify) => emit_json(&sidecar, None),
        (None, _) => {
            eprintln!("{}", serde_json::to_string(&sidecar)?);
            Ok(())
        }
    }
}

struct EstimateArgs {
    design: PathBuf,
    data: PathBuf,
    estimator: EstimatorKind,
    contrast: String,
    bound: BoundChoice,
    covariates: Option<PathBuf>,
    weights: Option<PathBuf>,
    seed: Option<u64>,
    out: Option<PathBuf>,
}

#[derive(Serialize)]
struct EstimateReport {
    point_estimate: f64,
    bound_estimate: f64,
    bound_method: String,
    estimator: EstimatorKind,
    se: f64,
    plug_in: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    condition: Option<f64>,
    ill_conditioned: bool,
    estimated_design: bool,
}

fn cmd_estimate(args: EstimateArgs) -> Result<()> {
    let design = load_design(&args.design, args.seed)?;
    let layout = *design.layout();
    let data = read_observed_csv(BufReader::new(File::open(&args.data)?), layout.k())?;
    layout.ensure_same(data.layout())?;
    let c = parse_contrast(&args.contrast)?;
    let covariates = match &args.covariates {
        Some(path) => Some(expand_covariates(
            &read_covariates_csv(BufReader::new(File::open(path)?))?,
            &layout,
        )?),
        None => None,
    };
    let weights = match &args.weights {
        Some(path) => Some(DVector::from_vec(read_weights_csv(
            BufReader::new(File::open(path)?),
            &layout,
        )?)),
        None => None,
    };
    let spec = EstimatorSpec::of_kind(args.estimator, c.clone(), covariates, weights)?;
    spec.validate(&layout)?;
    let m = DesignMoments::compute(&design)?;
    let estimate = point_estimate(&spec, &data, &m.pi)?;
    let bound = designvar::montecarlo::build_bound(args.bound, &m, &c)?;
    let ipw = ipw_bound_matrix(&bound, &m.p)?;
    let b = plugin_bound_estimate(&spec, &data, &m.pi, &ipw)?;
    let report = EstimateReport {
        point_estimate: estimate.value,
        bound_estimate: b.value,
        bound_method: b.method.to_string(),
        estimator: spec.kind(),
        se: b.value.max(0.0).sqrt(),
        plug_in: b.plug_in,
        condition: estimate.condition,
        ill_conditioned: estimate.ill_conditioned,
        estimated_design: m.d.is_estimated(),
    };
    emit_json(&report, args.out.as_deref())
}

#[derive(Serialize)]
struct Direction {
    eigenvalue: f64,
    arm_profiles: Vec<Vec<f64>>,
}

#[derive(Serialize)]
struct CompareReport {
    kind: &'static str,
    /// Spectrum of a - b for designs, b - a for bounds.
    eigenvalues: Vec<f64>,
    min_eig: f64,
    max_eig: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    relation: Option<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    directions: Vec<Direction>,
}

fn cmd_compare(
    a: &Path,
    b: &Path,
    kind: CompareKind,
    arms: usize,
    tol: f64,
    out: Option<&Path>,
) -> Result<()> {
    let ma = read_matrix(a)?.values;
    let mb = read_matrix(b)?.values;
    let la = layout_for(ma.nrows(), arms)?;
    let lb = layout_for(mb.nrows(), arms)?;
    let report = match kind {
        CompareKind::Designs => {
            let cmp = compare_matrices(&la, &ma, &lb, &mb)?;
            CompareReport {
                kind: "designs",
                eigenvalues: cmp.report.eigenvalues.clone(),
                min_eig: cmp.report.min_eig,
                max_eig: cmp.report.max_eig,
                relation: None,
                directions: cmp
                    .directions
                    .into_iter()
                    .map(|d| Direction {
                        eigenvalue: d.eigenvalue,
                        arm_profiles: d.arm_profiles,
                    })
                    .collect(),
            }
        }
        CompareKind::Bounds => {
            let v = compare_bound_matrices(&la, &ma, &lb, &mb, tol)?;
            CompareReport {
                kind: "bounds",
                eigenvalues: v.evidence.eigenvalues.clone(),
                min_eig: v.evidence.min_eig,
                max_eig: v.evidence.max_eig,
                relation: Some(v.relation.to_string()),
                directions: Vec::new(),
            }
        }
    };
    emit_json(&report, out)
}

fn cmd_simulate(path: &Path, seed: Option<u64>, out: Option<&Path>) -> Result<()> {
    let mut v = read_json(path)?;
    inject_seed(&mut v, seed);
    if let Some(design) = v.get_mut("design") {
        inject_seed(design, seed);
    }
    let spec: ScenarioSpec = from_value(v, path)?;
    let report = run_scenario(&spec.build()?)?;
    emit_json(&report, out)
}

/// A design family indexed by the population size n.
#[derive(Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
enum Family {
    /// Arm counts proportional to `fractions` (exact for every n in the sweep).
    Complete {
        fractions: Vec<String>,
    },
    /// Units (1,2), (3,4), ...
    Paired,
    Bernoulli {
        probs: Vec<String>,
    },
}

#[derive(Deserialize)]
struct SweepSpec {
    family: Family,
    outcomes: OutcomeSpec,
    estimator: EstimatorFileSpec,
    n: Vec<usize>,
}

fn parse_probs(values: &[String]) -> Result<Vec<Rational>> {
    values.iter().map(|s| prob::parse(s)).collect()
}

fn family_design(family: &Family, n: usize) -> Result<Design> {
    match family {
        Family::Paired => {
            if !n.is_multiple_of(2) {
                return Err(Error::InvalidDesign(format!(
                    "paired family needs an even n, got {n}"
                )));
            }
            Design::paired(
                n,
                &(0..n / 2).map(|j| (2 * j, 2 * j + 1)).collect::<Vec<_>>(),
            )
        }
        Family::Bernoulli { probs } => Design::bernoulli_uniform(n, &parse_probs(probs)?),
        Family::Complete { fractions } => {
            let counts = parse_probs(fractions)?
                .iter()
                .map(|f| {
                    let c = f * Rational::from_integer(n.into());
                    if !c.is_integer() {
                        return Err(Error::InvalidDesign(format!(
                            "fraction {} of n = {n} is not a whole count",
                            prob::format(f)
                        )));
                    }
                    c.to_integer()
                        .try_into()
                        .map_err(|_| Error::InvalidDesign("negative count".into()))
                })
                .collect::<Result<Vec<usize>>>()?;
            Design::complete(counts)
        }
    }
}

fn cmd_sweep(path: &Path, out: Option<&Path>) -> Result<()> {
    let spec: SweepSpec = from_value(read_json(path)?, path)?;
    let base = spec.outcomes.build()?;
    let base_n = base.layout().n();
    let rows: Vec<SweepRow> = consistency_sweep(
        &|n| family_design(&spec.family, n),
        &|layout| spec.estimator.build(layout),
        &|n| {
            if n % base_n != 0 {
                return Err(Error::InvalidInput(format!(
                    "n = {n} is not a multiple of the base population size {base_n}"
                )));
            }
            base.tile(n / base_n)
        },
        &spec.n,
    )?;
    let sink: Box<dyn Write> = match out {
        Some(p) => Box::new(create(p)?),
        None => Box::new(std::io::stdout().lock()),
    };
    let mut w = csv::Writer::from_writer(sink);
    for row in &rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}
