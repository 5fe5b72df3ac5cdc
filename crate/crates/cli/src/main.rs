use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use replaylab::config::{StudyConfig, StudyKind};
use replaylab::experiments::directional::{
    check_ablative, check_additive, check_offline, check_sticky, DirectionalCheck,
};
use replaylab::experiments::{collect_dataset, run_specs, run_study, StudyOutput};
use replaylab::report::{emit_report, render_charts, summary_table};
use replaylab::Error;

/// Environment variable holding the number of worker threads.
const WORKERS_ENV: &str = "REPLAYLAB_WORKERS";

#[derive(Parser)]
#[command(
    name = "replaylab",
    version,
    about = "Experience replay capacity and ratio studies"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML config with dotted keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one key, e.g. `--set replay.ratio=0.5`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    seed_root: Option<u64>,
    /// Output directory; overrides `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Train the configured variant on every environment and seed.
    Train {
        #[command(flatten)]
        common: Common,
        /// Also write each run's full transition log to this directory.
        #[arg(long)]
        dump_datasets: Option<PathBuf>,
    },
    /// Capacity by oldest-policy-age grid.
    Grid(Common),
    /// DQN plus one Rainbow component at a time.
    Additive(Common),
    /// Rainbow minus one component at a time.
    Ablate(Common),
    /// Offline n-step learners on logged data.
    Offline {
        #[command(flatten)]
        common: Common,
        /// Dataset file (`.jsonl` or binary); collected online when omitted.
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// n-step capacity gains with and without sticky actions.
    Sticky(Common),
    /// Redraw charts from the CSV files in a results directory.
    Report {
        #[arg(long, default_value = "results")]
        dir: PathBuf,
    },
}

enum Failure {
    Config(Error),
    Runtime(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config { .. } => Failure::Config(e),
            other => Failure::Runtime(other),
        }
    }
}

fn load(common: &Common, study: StudyKind, extra: &[String]) -> Result<StudyConfig, Failure> {
    let mut overrides = vec![format!("study={}", study.as_str())];
    overrides.extend(common.set.iter().cloned());
    overrides.extend(extra.iter().cloned());
    if let Some(s) = common.seed_root {
        overrides.push(format!("seed_root={s}"));
    }
    if let Some(o) = &common.out {
        overrides.push(format!("output_dir={}", toml_string(&o.to_string_lossy())));
    }
    let config = match &common.config {
        Some(path) => StudyConfig::load(path, &overrides)?,
        None => StudyConfig::parse("", &overrides)?,
    };
    Ok(config)
}

fn toml_string(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

fn configure_workers() -> Result<(), Failure> {
    let Ok(raw) = std::env::var(WORKERS_ENV) else {
        return Ok(());
    };
    let n: usize = raw.parse().ok().filter(|&n| n > 0).ok_or_else(|| Error::Config {
        key: WORKERS_ENV.into(),
        message: format!("`{raw}` is not a positive integer"),
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    Ok(())
}

fn directional(config: &StudyConfig, out: &StudyOutput) -> Vec<DirectionalCheck> {
    match config.study {
        StudyKind::Additive => check_additive(out),
        StudyKind::Ablative => vec![check_ablative(out)],
        StudyKind::Sticky => match config.sticky.values[..] {
            [low, high, ..] => vec![check_sticky(out, low, high, &config.sticky.n)],
            _ => Vec::new(),
        },
        StudyKind::Offline => vec![check_offline(out)],
        _ => Vec::new(),
    }
}

fn dump_datasets(config: &StudyConfig, dir: &Path) -> Result<StudyOutput, Failure> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.into(),
        source: e,
    })?;
    let envs = config.env.specs()?;
    let specs = run_specs(
        config,
        config.variant,
        &envs,
        config.replay.settings(config.replay.capacity),
    );
    let runs = specs
        .par_iter()
        .map(|spec| {
            let (result, data) = collect_dataset(spec)?;
            let name = format!("{}-seed{}.bin", spec.env.label().replace('/', "-"), spec.seed);
            data.save(&dir.join(name))?;
            Ok(result)
        })
        .collect::<Result<Vec<_>, Error>>()?;
    Ok(StudyOutput {
        study: config.study,
        runs,
        comparisons: Vec::new(),
    })
}

fn execute(config: StudyConfig, dump: Option<&Path>) -> Result<ExitCode, Failure> {
    configure_workers()?;
    let dir = PathBuf::from(&config.output_dir);
    std::fs::create_dir_all(&dir).map_err(|e| Error::Io {
        path: dir.clone(),
        source: e,
    })?;
    let echoed = dir.join("config.toml");
    std::fs::write(&echoed, config.to_toml()).map_err(|e| Error::Io {
        path: echoed,
        source: e,
    })?;
    let out = match dump {
        Some(d) => dump_datasets(&config, d)?,
        None => run_study(&config)?,
    };
    let files = emit_report(&out, &dir)?;
    print!("{}", summary_table(&out));
    let checks = directional(&config, &out);
    if !checks.is_empty() {
        let text: String = checks.iter().map(|c| c.line() + "\n").collect();
        print!("{text}");
        let path = dir.join("directional.txt");
        std::fs::write(&path, text).map_err(|e| Error::Io { path, source: e })?;
    }
    for f in files {
        println!("wrote {}", f.display());
    }
    let diverged = out.diverged();
    if diverged > 0 {
        eprintln!("{diverged} run(s) diverged; see results.jsonl");
        return Ok(ExitCode::from(3));
    }
    Ok(ExitCode::SUCCESS)
}

fn run(cli: Cli) -> Result<ExitCode, Failure> {
    match cli.command {
        Command::Train {
            common,
            dump_datasets,
        } => execute(load(&common, StudyKind::Train, &[])?, dump_datasets.as_deref()),
        Command::Grid(c) => execute(load(&c, StudyKind::Grid, &[])?, None),
        Command::Additive(c) => execute(load(&c, StudyKind::Additive, &[])?, None),
        Command::Ablate(c) => execute(load(&c, StudyKind::Ablative, &[])?, None),
        Command::Sticky(c) => execute(load(&c, StudyKind::Sticky, &[])?, None),
        Command::Offline { common, dataset } => {
            let extra: Vec<String> = dataset
                .iter()
                .map(|d| format!("offline.dataset={}", toml_string(&d.to_string_lossy())))
                .collect();
            execute(load(&common, StudyKind::Offline, &extra)?, None)
        }
        Command::Report { dir } => {
            let files = render_charts(&dir)?;
            if files.is_empty() {
                return Err(Failure::Runtime(Error::EmptyInput("report directory")));
            }
            for f in files {
                println!("wrote {}", f.display());
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(Failure::Config(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
