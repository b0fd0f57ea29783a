use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use twosex::validate::validate;
use twosex_harness::config::Pipeline;
use twosex_harness::output::{write_echo, write_error, write_outcome};
use twosex_harness::scenarios::{load, BUNDLED};
use twosex_harness::{run, HarnessError, ScenarioConfig};

/// Null-controllability laboratory for the two-sex population model.
///
/// Exit status: 0 all verdicts pass, 1 a threshold was missed,
/// 2 bad configuration or violated hypotheses, 3 numerical abort.
#[derive(Parser)]
#[command(name = "twosex-lab", version)]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Subcommand)]
enum Verb {
    /// Check the scenario against the hypotheses without solving anything.
    Validate(Common),
    /// Run the scenario's own pipeline.
    Run(Common),
    /// Run the observability probes on the scenario.
    Probe(Common),
    /// Run the manufactured-solution refinement study.
    Study(Common),
    /// Print the fully expanded configuration.
    Echo(Common),
    /// List the bundled scenarios.
    List,
}

#[derive(Args)]
struct Common {
    /// Scenario file, or `@name` for a bundled one.
    #[arg(long)]
    config: String,
    /// Output directory; defaults to `out/<scenario name>`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Number of refinement levels (study only).
    #[arg(long)]
    level: Option<usize>,
}

impl Common {
    fn config(&self, pipeline: Option<Pipeline>) -> Result<ScenarioConfig, HarnessError> {
        let mut cfg = load(&self.config)?;
        if let Some(p) = pipeline {
            cfg.pipeline = p;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(l) = self.level {
            cfg.study.levels = l;
        }
        Ok(cfg)
    }
}

fn execute(c: &Common, pipeline: Option<Pipeline>) -> Result<i32, HarnessError> {
    let cfg = c.config(pipeline)?;
    let dir = c.out.clone().unwrap_or_else(|| PathBuf::from("out").join(&cfg.name));
    write_echo(&dir, &cfg)?;
    match run(&cfg) {
        Ok(outcome) => {
            write_outcome(&dir, &outcome)?;
            for v in &outcome.summary.verdicts {
                println!("{v}");
            }
            println!("artifacts in {}", dir.display());
            Ok(outcome.exit_code())
        }
        Err(e) => {
            write_error(&dir, &e)?;
            Err(e)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.verb {
        Verb::List => {
            for (name, _) in BUNDLED {
                println!("@{name}");
            }
            Ok(0)
        }
        Verb::Echo(c) => c.config(None).map(|cfg| {
            print!("{}", cfg.echo());
            0
        }),
        Verb::Validate(c) => c.config(None).and_then(|cfg| {
            let report = validate(&cfg.rates, &cfg.windows, cfg.grid.horizon);
            print!("{report}");
            if report.passed() {
                Ok(0)
            } else {
                Err(HarnessError::Validation(report))
            }
        }),
        Verb::Run(c) => execute(c, None),
        Verb::Probe(c) => execute(c, Some(Pipeline::Probe)),
        Verb::Study(c) => execute(c, Some(Pipeline::Study)),
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
