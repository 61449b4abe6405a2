use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use circspline::circle::AngularSample;
use circspline::detect::detect_features;
use circspline::error::Error;
use circspline::io::{self, GroupedData, InputSummary, OutputDocument, OUTPUT_POINTS};
use circspline::pipeline::{estimate_detailed, LambdaChoice, PipelineConfig};
use circspline::sim::{self, Method, Scenario};

#[derive(Parser)]
#[command(name = "circspline", version, about = "Density estimation on the circle")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the full estimator and write a JSON document.
    Estimate {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        fit: FitArgs,
        /// Penalty: `auto` or a nonnegative number.
        #[arg(long, default_value = "auto")]
        lambda: String,
        /// Skip feature detection and fit the smooth estimate only.
        #[arg(long)]
        no_detection: bool,
        /// Rows in the density table (must divide 8192).
        #[arg(long, default_value_t = OUTPUT_POINTS)]
        output_points: usize,
        #[arg(long, short)]
        output: PathBuf,
    },
    /// Run feature detection only and print or write the report.
    Detect {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        fit: FitArgs,
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Monte Carlo MISE for one scenario.
    Simulate {
        #[arg(long)]
        scenario: String,
        /// Comma-separated methods: pipeline, spline, kde, kde_cv, cos2, oracle, uniform.
        #[arg(long, default_value = "pipeline,kde")]
        methods: String,
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long)]
        theta: Option<f64>,
        #[arg(long)]
        sigma: Option<f64>,
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value_t = 1000)]
        replicates: usize,
        #[arg(long, env = "CIRCSPLINE_SEED")]
        seed: Option<u64>,
        #[arg(long, short)]
        output: PathBuf,
        /// Also write the reports as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Percentage-increase and pointwise comparison tables.
    Bench {
        /// Which table: 1, 2 or all.
        #[arg(long, default_value = "all")]
        table: String,
        #[arg(long, default_value_t = 1000)]
        replicates: usize,
        #[arg(long, env = "CIRCSPLINE_SEED")]
        seed: Option<u64>,
        #[arg(long, default_value = ".")]
        output_dir: PathBuf,
    },
    /// Turn an estimate document into `x,density,is_feature_boundary` rows.
    PlotData {
        #[arg(long)]
        from: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct InputArgs {
    #[arg(long, short)]
    input: PathBuf,
    /// Input is a `start_deg,end_deg,count` table.
    #[arg(long)]
    grouped: bool,
    /// Angles are in degrees.
    #[arg(long)]
    degrees: bool,
    /// Seed for grouped-data jitter.
    #[arg(long, env = "CIRCSPLINE_SEED")]
    seed: Option<u64>,
    /// Extra rotation in degrees applied to grouped data.
    #[arg(long, default_value_t = 0.0)]
    rotation: f64,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    max_layer: Option<u32>,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
}

impl InputArgs {
    fn load(&self) -> Result<(AngularSample, InputSummary), Error> {
        let sample = if self.grouped {
            GroupedData::load(&self.input)?.to_sample(self.seed.unwrap_or(0), self.rotation)?
        } else {
            io::load_angles(&self.input, self.degrees)?
        };
        let summary = InputSummary {
            source: self.input.display().to_string(),
            n: sample.len(),
            degrees: self.degrees || self.grouped,
            grouped: self.grouped,
        };
        Ok((sample, summary))
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Domain(_) => 1,
        Error::Validation(_) | Error::Parse { .. } | Error::Io(_) => 2,
        Error::Estimation { .. } | Error::Inconsistent(_) => 3,
    }
}

fn config(fit: &FitArgs) -> PipelineConfig {
    PipelineConfig {
        max_layer: fit.max_layer,
        alpha: fit.alpha,
        ..PipelineConfig::default()
    }
}

fn write(path: &Path, text: &str) -> Result<(), Error> {
    std::fs::write(path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn run(cmd: Command) -> Result<(), Error> {
    match cmd {
        Command::Estimate {
            input,
            fit,
            lambda,
            no_detection,
            output_points,
            output,
        } => {
            let (sample, summary) = input.load()?;
            let mut cfg = config(&fit);
            cfg.detection = !no_detection;
            cfg.lambda = match lambda.as_str() {
                "auto" => LambdaChoice::Auto,
                s => LambdaChoice::Fixed(
                    s.parse()
                        .map_err(|_| Error::Domain(format!("--lambda must be 'auto' or a number, got '{s}'")))?,
                ),
            };
            let out = estimate_detailed(&sample, &cfg)?;
            let doc = OutputDocument::build(&out, summary, &cfg, input.seed, output_points)?;
            write(&output, &doc.to_json()?)
        }
        Command::Detect { input, fit, output } => {
            let (sample, _) = input.load()?;
            let cfg = config(&fit);
            cfg.validate()?;
            let report = detect_features(&sample, &cfg.detect_config(sample.len()))?;
            let text = io::to_json_string(&report)?;
            match output {
                Some(p) => write(&p, &text),
                None => {
                    println!("{text}");
                    Ok(())
                }
            }
        }
        Command::Simulate {
            scenario,
            methods,
            eps,
            theta,
            sigma,
            n,
            replicates,
            seed,
            output,
            json,
        } => {
            let sc = scenario_with(&scenario, eps, theta, sigma)?;
            let methods = methods
                .split(',')
                .map(|m| Method::parse(m.trim()))
                .collect::<Result<Vec<_>, _>>()?;
            let seed = seed.unwrap_or(0);
            let reports = methods
                .iter()
                .map(|m| sim::mise(m, &sc, n, replicates, seed))
                .collect::<Result<Vec<_>, _>>()?;
            let mut w = csv_writer(&output)?;
            w.write_record(["scenario", "method", "n", "replicates", "mise_mean", "mise_stderr", "failures"])
                .map_err(csv_err)?;
            for r in &reports {
                w.write_record([
                    sc.name().to_string(),
                    r.method.clone(),
                    r.n.to_string(),
                    r.replicates.to_string(),
                    format!("{:.16e}", r.mise_mean),
                    format!("{:.16e}", r.mise_stderr),
                    r.failures.to_string(),
                ])
                .map_err(csv_err)?;
            }
            w.flush()?;
            if let Some(p) = json {
                write(&p, &io::to_json_string(&reports)?)?;
            }
            Ok(())
        }
        Command::Bench {
            table,
            replicates,
            seed,
            output_dir,
        } => {
            let seed = seed.unwrap_or(0);
            let (t1, t2) = match table.as_str() {
                "1" => (true, false),
                "2" => (false, true),
                "all" => (true, true),
                other => return Err(Error::Domain(format!("--table must be 1, 2 or all, got '{other}'"))),
            };
            std::fs::create_dir_all(&output_dir)?;
            if t1 {
                let rows = sim::table1_percent_increase(&[0.01, 0.05, 0.10], &[100, 500, 1000], replicates, seed)?;
                let mut w = csv_writer(&output_dir.join("table1.csv"))?;
                w.write_record(["n", "eps", "mise", "mise_stderr", "percent_increase"])
                    .map_err(csv_err)?;
                for r in &rows {
                    w.write_record([
                        r.n.to_string(),
                        r.eps.to_string(),
                        format!("{:.16e}", r.mise),
                        format!("{:.16e}", r.mise_stderr),
                        format!("{:.16e}", r.percent_increase),
                    ])
                    .map_err(csv_err)?;
                    println!("n={:<5} eps={:<5} mise={:.5} increase={:.2}%", r.n, r.eps, r.mise, r.percent_increase);
                }
                w.flush()?;
                write(&output_dir.join("table1.json"), &io::to_json_string(&rows)?)?;
            }
            if t2 {
                let rows = sim::table2_compare(&sim::table2_theta_grid(), 50, replicates, seed)?;
                let mut w = csv_writer(&output_dir.join("table2.csv"))?;
                w.write_record(["theta", "spline", "cos2", "kde_cv", "kde_plugin"])
                    .map_err(csv_err)?;
                for r in &rows {
                    w.write_record([r.theta, r.spline, r.cos2, r.kde_cv, r.kde_plugin].map(|v| format!("{v:.16e}")))
                        .map_err(csv_err)?;
                    println!(
                        "theta={:.2} spline={:.4} cos2={:.4} kde_cv={:.4} kde_plugin={:.4}",
                        r.theta, r.spline, r.cos2, r.kde_cv, r.kde_plugin
                    );
                }
                w.flush()?;
                write(&output_dir.join("table2.json"), &io::to_json_string(&rows)?)?;
            }
            Ok(())
        }
        Command::PlotData { from, out } => {
            let doc = OutputDocument::load(&from)?;
            io::write_plot_csv(&doc, &out)
        }
    }
}

fn scenario_with(name: &str, eps: Option<f64>, theta: Option<f64>, sigma: Option<f64>) -> Result<Scenario, Error> {
    let mut sc = Scenario::parse(name)?;
    match &mut sc {
        Scenario::EpsMixture { eps: e, sigma: s } => {
            *e = eps.unwrap_or(*e);
            *s = sigma.unwrap_or(*s);
        }
        Scenario::WrappedBimodal { theta: t, sigma: s } => {
            *t = theta.unwrap_or(*t);
            *s = sigma.unwrap_or(*s);
        }
        _ => {}
    }
    sc.validate()?;
    Ok(sc)
}

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>, Error> {
    csv::Writer::from_path(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}
