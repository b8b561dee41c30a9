use std::fs;
use std::path::{Path, PathBuf};

use fracmort::data::{self, MortalityTable};
use fracmort::fgn::{generate_fgn, HurstIndex};
use fracmort::fou::{simulate_fou, FouParams};
use fracmort::hurst::{self, HurstMethod};
use fracmort::mortality::{
    self, fit_model, forecast, residuals, survival_curve, ForecastConfig, MortalityModel,
    SurvivalConfig,
};
use fracmort::qgv;
use serde::Serialize;
use serde_json::{json, Value};

use crate::{
    Cli, CohortArgs, ColumnInput, Command, EstHurstArgs, EstQgvArgs, FitArgs, FixtureArgs,
    ForecastArgs, GenFgnArgs, ModelSource, SurvivalArgs, TableFormat, DEFAULT_SEED,
};

#[derive(Debug)]
pub enum CliError {
    Lib(fracmort::Error),
    Usage(String),
    Io(String),
    Input(String),
}

impl<E: Into<fracmort::Error>> From<E> for CliError {
    fn from(e: E) -> Self {
        CliError::Lib(e.into())
    }
}

impl CliError {
    pub fn to_json(&self) -> String {
        let (module, kind, message) = match self {
            CliError::Lib(e) => (e.module(), e.kind(), e.to_string()),
            CliError::Usage(m) => ("cli", "usage", m.clone()),
            CliError::Io(m) => ("cli", "io", m.clone()),
            CliError::Input(m) => ("cli", "input", m.clone()),
        };
        json!({ "error": { "module": module, "kind": kind, "message": message } }).to_string()
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

/// Everything needed to regenerate one output file.
#[derive(Serialize)]
struct Metadata<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a Command,
    seed: u64,
    /// Command line with the resolved seed made explicit.
    replay: Vec<String>,
    warnings: Vec<String>,
    #[serde(skip_serializing_if = "Value::is_null")]
    details: Value,
}

struct Run<'a> {
    cli: &'a Cli,
    seed: u64,
}

impl Run<'_> {
    fn write(
        &self,
        path: &Path,
        contents: &str,
        warnings: Vec<String>,
        details: Value,
    ) -> Result<(), CliError> {
        fs::write(path, contents).map_err(|e| io_err(path, e))?;
        let mut replay: Vec<String> = std::env::args().collect();
        if self.cli.seed.is_none() {
            replay.push(format!("--seed={}", self.seed));
        }
        let meta = Metadata {
            tool: "fracmort",
            version: env!("CARGO_PKG_VERSION"),
            command: &self.cli.command,
            seed: self.seed,
            replay,
            warnings,
            details,
        };
        let meta_path = sidecar_path(path);
        let text = serde_json::to_string_pretty(&meta).expect("metadata serializes");
        fs::write(&meta_path, text + "\n").map_err(|e| io_err(&meta_path, e))
    }
}

/// `<output>.meta.json`
pub fn sidecar_path(output: &Path) -> PathBuf {
    let mut s = output.as_os_str().to_os_string();
    s.push(".meta.json");
    PathBuf::from(s)
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let default_seed = match cli.command {
        Command::Fixture(_) => data::bundled_fixture_spec().seed,
        _ => DEFAULT_SEED,
    };
    let run = Run {
        cli,
        seed: cli.seed.unwrap_or(default_seed),
    };
    match &cli.command {
        Command::GenFgn(a) => gen_fgn(&run, a),
        Command::EstHurst(a) => est_hurst(&run, a),
        Command::EstQgv(a) => est_qgv(&run, a),
        Command::Fit(a) => fit(&run, a),
        Command::Forecast(a) => run_forecast(&run, a),
        Command::Survival(a) => survival(&run, a),
        Command::Fixture(a) => fixture(&run, a),
    }
}

fn gen_fgn(run: &Run, a: &GenFgnArgs) -> Result<(), CliError> {
    let hurst = HurstIndex::new(a.hurst)?;
    match (a.lambda, a.sigma) {
        (Some(lambda), Some(sigma)) => {
            let params = FouParams::new(lambda, sigma, hurst, a.mesh)?;
            let path = simulate_fou(params, a.n, run.seed)?;
            let details = json!({ "method": path.driving.method });
            run.write(&a.output, &path.to_csv_string(), Vec::new(), details)
        }
        _ => {
            let path = generate_fgn(hurst, a.n, a.mesh, run.seed)?;
            let details = json!({ "method": path.method });
            run.write(&a.output, &path.to_csv_string(), Vec::new(), details)
        }
    }
}

fn read_column(input: &ColumnInput) -> Result<Vec<f64>, CliError> {
    let mut reader = csv::Reader::from_path(&input.input)
        .map_err(|e| CliError::Io(format!("{}: {e}", input.input.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| CliError::Input(e.to_string()))?
        .clone();
    let idx = match &input.column {
        Some(name) => headers.iter().position(|h| h == name).ok_or_else(|| {
            CliError::Input(format!("no column {name:?} in {}", input.input.display()))
        })?,
        None if headers.is_empty() => return Err(CliError::Input("input has no columns".into())),
        None => headers.len() - 1,
    };
    let mut values = Vec::new();
    for (row, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| CliError::Input(e.to_string()))?;
        let cell = rec.get(idx).unwrap_or("").trim();
        if cell.is_empty() {
            continue;
        }
        let v: f64 = cell
            .parse()
            .map_err(|_| CliError::Input(format!("row {}: {cell:?} is not a number", row + 2)))?;
        values.push(v);
    }
    Ok(values)
}

fn est_hurst(run: &Run, a: &EstHurstArgs) -> Result<(), CliError> {
    let x = read_column(&a.input)?;
    if a.compare_hurst {
        let rows = hurst::compare_sliding(&x, a.window, a.step)?;
        let cell = |v: Option<f64>| v.map_or_else(String::new, |v| v.to_string());
        let mut csv = String::from("start,end,rs_analysis,rescaled_range,local_whittle\n");
        for r in &rows {
            csv.push_str(&format!(
                "{},{},{},{},{}\n",
                r.start,
                r.end,
                cell(r.rs_analysis),
                cell(r.rescaled_range),
                cell(r.local_whittle)
            ));
        }
        return run.write(
            &a.output,
            &csv,
            Vec::new(),
            json!({ "n_windows": rows.len() }),
        );
    }
    let method = HurstMethod::from(a.method);
    let est = match (method, a.bandwidth) {
        (HurstMethod::LocalWhittle, m) => hurst::estimate_local_whittle(&x, m)?,
        (_, Some(_)) => {
            return Err(CliError::Usage(
                "--bandwidth applies to --method whittle only".into(),
            ))
        }
        (m, None) => hurst::estimate(m, &x)?,
    };
    let mut warnings = Vec::new();
    if est.out_of_range {
        warnings.push(format!("estimate {} lies outside (0, 1)", est.value));
    }
    if let Some(path) = &a.diagnostics {
        fs::write(path, est.diagnostics_csv()).map_err(|e| io_err(path, e))?;
    }
    let text = serde_json::to_string_pretty(&est).expect("estimate serializes");
    run.write(&a.output, &(text + "\n"), warnings, Value::Null)
}

fn est_qgv(run: &Run, a: &EstQgvArgs) -> Result<(), CliError> {
    let x = read_column(&a.input)?;
    let filter = qgv::filter_by_name(&a.filter)?;
    let est = qgv::estimate_all(&x, &filter, a.mesh, a.force_lambda)?;
    let text = serde_json::to_string_pretty(&est).expect("estimates serialize");
    run.write(&a.output, &(text + "\n"), est.warnings.clone(), Value::Null)
}

fn load_table(cohort: &CohortArgs) -> Result<(MortalityTable, Vec<String>), CliError> {
    match &cohort.table {
        None => Ok((data::bundled_fixture(), Vec::new())),
        Some(path) => {
            let file = fs::File::open(path).map_err(|e| io_err(path, e))?;
            let (table, report) = data::parse_hmd(std::io::BufReader::new(file))?;
            let mut warnings: Vec<String> = report
                .errors
                .iter()
                .map(|e| format!("{}:{}: {}", path.display(), e.line, e.message))
                .collect();
            if report.zero_rates > 0 {
                warnings.push(format!(
                    "{} zero rates treated as missing",
                    report.zero_rates
                ));
            }
            Ok((table, warnings))
        }
    }
}

struct Fitted {
    model: MortalityModel,
    residuals: Option<Vec<f64>>,
    warnings: Vec<String>,
    details: Value,
}

fn fit_cohort(cohort: &CohortArgs) -> Result<Fitted, CliError> {
    let (table, mut warnings) = load_table(cohort)?;
    let series = table.extract_cohort(cohort.age, cohort.sex, cohort.years.0, cohort.years.1)?;
    let filter = qgv::filter_by_name(&cohort.filter)?;
    let report = fit_model(&series, cohort.method.into(), &filter)?;
    warnings.extend(report.warnings.iter().cloned());
    let fit = mortality::Alpha0Fit {
        h0: report.model.h0,
        alpha0: report.model.alpha0,
    };
    let details = json!({
        "table": cohort.table.as_ref().map_or("bundled".into(), |p| p.display().to_string()),
        "hurst_method": report.hurst_estimate.method,
        "raw_hurst": report.raw_hurst,
        "qgv": {
            "h_hat": report.qgv.h_hat,
            "sigma_hat": report.qgv.sigma_hat,
            "lambda_hat": report.qgv.lambda_hat,
            "mu2_hat": report.qgv.mu2_hat,
            "filter": report.qgv.filter,
            "outside_validity": report.qgv.outside_validity,
        },
    });
    Ok(Fitted {
        residuals: Some(residuals(&series, &fit)),
        model: report.model,
        warnings,
        details,
    })
}

fn load_model(source: &ModelSource) -> Result<Fitted, CliError> {
    match &source.model {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
            let model = MortalityModel::from_json(&text)?;
            Ok(Fitted {
                model,
                residuals: None,
                warnings: Vec::new(),
                details: json!({ "model_file": path.display().to_string() }),
            })
        }
        None => fit_cohort(&source.cohort),
    }
}

fn fit(run: &Run, a: &FitArgs) -> Result<(), CliError> {
    let f = fit_cohort(&a.cohort)?;
    run.write(
        &a.output,
        &(f.model.to_json() + "\n"),
        f.warnings,
        f.details,
    )
}

fn with_model(details: Value, model: &MortalityModel) -> Value {
    let mut d = details;
    d["model"] = serde_json::to_value(model).expect("model serializes");
    d
}

fn run_forecast(run: &Run, a: &ForecastArgs) -> Result<(), CliError> {
    let f = load_model(&a.source)?;
    let n_years = a.n_years.unwrap_or(f.model.horizon.round() as usize + 1);
    let cfg = ForecastConfig {
        n_years,
        n_paths: a.n_paths,
        seed: run.seed,
        coverage: a.coverage,
        quantile_band: a.quantile_band,
    };
    let band = forecast(&f.model, &cfg)?;
    let mut details = with_model(f.details, &f.model);
    details["band"] = json!(band.kind);
    run.write(&a.output, &band.to_csv_string(), f.warnings, details)
}

fn survival(run: &Run, a: &SurvivalArgs) -> Result<(), CliError> {
    let f = load_model(&a.source)?;
    let mut warnings = f.warnings;
    let start = match (a.start, &f.residuals) {
        (Some(s), _) => s,
        (None, _) if a.t == 0.0 => 0.0,
        (None, Some(r)) if a.t.fract() == 0.0 && (a.t as usize) < r.len() => r[a.t as usize],
        (None, _) => {
            warnings.push(format!(
                "no fitted residual at t = {}; restarting from 0",
                a.t
            ));
            0.0
        }
    };
    let cfg = SurvivalConfig {
        t: a.t,
        n_paths: a.n_paths,
        seed: run.seed,
        start,
    };
    let curve = survival_curve(&f.model, &a.horizon, &cfg)?;
    let mut csv = String::from("t,horizon,estimate,std_error,mean_integrated_hazard\n");
    for s in &curve {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            s.t, s.horizon, s.estimate, s.std_error, s.mean_integrated_hazard
        ));
    }
    let mut details = with_model(f.details, &f.model);
    details["start"] = json!(start);
    run.write(&a.output, &csv, warnings, details)
}

fn fixture(run: &Run, a: &FixtureArgs) -> Result<(), CliError> {
    let mut spec = data::bundled_fixture_spec();
    let table = if run.seed == spec.seed {
        data::bundled_fixture()
    } else {
        spec.seed = run.seed;
        data::synthesize_fixture(&spec)?
    };
    let text = match a.format {
        TableFormat::Hmd => table.to_hmd_string(),
        TableFormat::Csv => table.to_csv_string(),
        TableFormat::Json => table.to_json() + "\n",
    };
    run.write(&a.output, &text, Vec::new(), Value::Null)
}
