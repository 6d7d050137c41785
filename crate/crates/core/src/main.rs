use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use topovox::pipeline::{self, synth, PipelineConfig, Stage};
use topovox::Error;

#[derive(Parser)]
#[command(name = "topovox", version, about = "Topologically augmented clustering of vocalization clips")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the pipeline described by a TOML config file.
    Run {
        config: PathBuf,
        /// Stop after writing features.csv.
        #[arg(long, group = "stage")]
        features_only: bool,
        /// Cluster an existing features.csv and stop after partition.csv.
        #[arg(long, group = "stage")]
        cluster_only: bool,
        /// Profile and report from existing features.csv and partition.csv.
        #[arg(long, group = "stage")]
        report_only: bool,
        /// Override the output directory.
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Write the three-family synthetic corpus and a matching config.
    Synth {
        dir: PathBuf,
        #[arg(long, default_value_t = 20)]
        per_family: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
}

/// Exit codes: 2 config, 3 corpus/features, 4 clustering, 5 report, 1 other.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => 2,
        Error::Stage { stage, .. } => match *stage {
            "corpus" | "features" => 3,
            "cluster" => 4,
            "report" => 5,
            _ => 1,
        },
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            config,
            features_only,
            cluster_only,
            report_only,
            output_dir,
        } => PipelineConfig::from_path(&config).and_then(|mut cfg| {
            if features_only {
                cfg.stage = Stage::FeaturesOnly;
            } else if cluster_only {
                cfg.stage = Stage::ClusterOnly;
            } else if report_only {
                cfg.stage = Stage::ReportOnly;
            }
            if let Some(dir) = output_dir {
                cfg.output_dir = dir;
            }
            let out = pipeline::run(&cfg)?;
            if let Some(r) = &out.report {
                let k = r.table_medians.len();
                println!("{} clips in {k} clusters; outputs in {}", r.labels.len(), cfg.output_dir.display());
                for c in &r.contrasts {
                    println!("cluster {}: {}", c.reference, c.highlighted.join(", "));
                }
            } else if let Some(f) = &out.features {
                println!("{} feature rows, {} skipped", f.features.len(), f.skipped.len());
            }
            Ok(())
        }),
        Command::Synth { dir, per_family, seed } => synth::generate(&dir, per_family, seed).and_then(|c| {
            std::fs::write(
                dir.join("config.toml"),
                "manifest = \"manifest.csv\"\noutput_dir = \"out\"\n",
            )?;
            println!("wrote {} clips and config.toml to {}", c.clips.len(), dir.display());
            Ok(())
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
