use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use audit_repair::data::{generate_synthetic, write_csv, SynthConfig};
use audit_repair::harness::{
    emit_reports, run_rq3, run_rq4, run_settings, DataSource, ExperimentConfig, HarnessError, ModelKind, RunResult,
    Setting,
};

#[derive(Parser)]
#[command(name = "audit-repair", version, about = "Label-bias repair experiments on audit-study hiring data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic audit dataset as CSV.
    Generate {
        #[arg(long)]
        out: PathBuf,
        /// TOML file with SynthConfig fields; overrides the flags below.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        n_records: Option<usize>,
        #[arg(long)]
        delta: Option<f64>,
    },
    /// Run the selected settings.
    Run {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, value_delimiter = ',', default_value = "BR,EBR,ITE_TrainAndTest,EBR_Train_ITE_Test")]
        settings: Vec<String>,
    },
    /// BR, EBR and EBR-Train/ITE-Test.
    Rq1 {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// All four settings.
    Rq2 {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Original data against data with a doubled callback gap.
    Rq3 {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, default_value_t = 0.10)]
        target_gap: f64,
    },
    /// Sweep of Spanish-fluency selection bias.
    Rq4 {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, value_delimiter = ',', default_value = "0,0.2,0.4,0.6,0.8")]
        levels: Vec<f64>,
    },
    /// Print the aggregates of a report directory.
    Report {
        dir: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    Forest,
    Mlp,
}

#[derive(Args)]
struct CommonArgs {
    #[arg(long, value_enum, default_value = "forest")]
    model: ModelArg,
    #[arg(long, default_value_t = 5)]
    k_folds: usize,
    #[arg(long, default_value_t = 0.16)]
    budget_rate: f64,
    #[arg(long, value_delimiter = ',', default_value = "0")]
    seeds: Vec<u64>,
    /// Audit CSV; the synthetic replica is used when absent.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    n_estimators: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    /// TOML ExperimentConfig; its keys override flags.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "reports")]
    out: PathBuf,
}

fn config_error(msg: impl ToString) -> HarnessError {
    HarnessError::Config(msg.to_string())
}

fn merge_toml(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge_toml(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

fn overlay<T: serde::Serialize + serde::de::DeserializeOwned>(base: &T, path: &Path) -> Result<T, HarnessError> {
    let text = std::fs::read_to_string(path)?;
    let over: toml::Table = toml::from_str(&text).map_err(config_error)?;
    let mut table = toml::Table::try_from(base).map_err(config_error)?;
    merge_toml(&mut table, over);
    table.try_into().map_err(config_error)
}

fn build_config(c: &CommonArgs, settings: Vec<Setting>) -> Result<ExperimentConfig, HarnessError> {
    let mut cfg = ExperimentConfig {
        settings,
        model: match c.model {
            ModelArg::Forest => ModelKind::Forest,
            ModelArg::Mlp => ModelKind::Mlp,
        },
        k_folds: c.k_folds,
        budget_rate: c.budget_rate,
        seeds: c.seeds.clone(),
        ..ExperimentConfig::default()
    };
    if let Some(p) = &c.data {
        cfg.data_source = DataSource::Csv(p.clone());
    }
    if let Some(n) = c.n_estimators {
        cfg.forest.n_estimators = n;
    }
    if let Some(e) = c.epochs {
        cfg.mlp.epochs = e;
    }
    if let Some(p) = &c.config {
        cfg = overlay(&cfg, p)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn print_summary(r: &RunResult) {
    println!("{:<20} {:>8} {:>8} {:>8} {:>8} {:>8}", "setting", "x", "auc", "auc_sd", "fprd", "fprd_sd");
    for a in &r.aggregates {
        let x = a.x.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into());
        println!(
            "{:<20} {:>8} {:>8.4} {:>8.4} {:>+8.4} {:>8.4}",
            a.setting.name(),
            x,
            a.auc_mean,
            a.auc_std,
            a.fprd_mean,
            a.fprd_std
        );
    }
    if let Some((p, base)) = r.mean_repair_precision("test") {
        println!("repair precision (test folds): {p:.3} vs random {base:.3}");
    }
    eprintln!("finished in {:.1}s", r.duration_secs);
}

fn finish(r: &RunResult, out: &Path) -> Result<(), HarnessError> {
    print_summary(r);
    for f in emit_reports(r, out)? {
        eprintln!("wrote {}", f.display());
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Generate {
            out,
            config,
            seed,
            n_records,
            delta,
        } => {
            let mut s = SynthConfig::default();
            if let Some(v) = seed {
                s.seed = v;
            }
            if let Some(v) = n_records {
                s.n_records = v;
            }
            if let Some(v) = delta {
                s.discrimination_delta = v;
            }
            if let Some(p) = config {
                s = overlay(&s, &p)?;
            }
            let data = generate_synthetic(&s)?;
            let c = data.group_counts();
            write_csv(&data, std::fs::File::create(&out)?)?;
            eprintln!(
                "wrote {} records to {} (young {:.4}, older {:.4})",
                data.len(),
                out.display(),
                c.young_rate(),
                c.older_rate()
            );
            Ok(())
        }
        Command::Run { common, settings } => {
            let settings = settings
                .iter()
                .map(|s| Setting::parse(s).ok_or_else(|| config_error(format!("unknown setting {s:?}"))))
                .collect::<Result<Vec<_>, _>>()?;
            let cfg = build_config(&common, settings)?;
            finish(&run_settings(&cfg)?, &common.out)
        }
        Command::Rq1 { common } => {
            let cfg = build_config(&common, vec![Setting::BR, Setting::EBR, Setting::EBR_Train_ITE_Test])?;
            finish(&run_settings(&cfg)?, &common.out)
        }
        Command::Rq2 { common } => {
            let cfg = build_config(&common, Setting::ALL.to_vec())?;
            finish(&run_settings(&cfg)?, &common.out)
        }
        Command::Rq3 { common, target_gap } => {
            let cfg = build_config(&common, Setting::ALL.to_vec())?;
            let r = run_rq3(&cfg, target_gap)?;
            println!("original:");
            finish(&r.original, &common.out.join("original"))?;
            println!("doubled:");
            finish(&r.doubled, &common.out.join("doubled"))?;
            println!(
                "EBR vs EBR_Train_ITE_Test discrepancy: {:.4} -> {:.4}",
                r.discrepancy_original, r.discrepancy_doubled
            );
            Ok(())
        }
        Command::Rq4 { common, levels } => {
            let cfg = build_config(&common, Setting::ALL.to_vec())?;
            finish(&run_rq4(&cfg, &levels)?, &common.out)
        }
        Command::Report { dir } => {
            let text = std::fs::read_to_string(dir.join("aggregate.json"))?;
            let v: serde_json::Value = serde_json::from_str(&text).map_err(config_error)?;
            println!("{}", serde_json::to_string_pretty(&v["aggregates"]).map_err(config_error)?);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
