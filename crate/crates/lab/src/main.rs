use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use lab::{replay, run, LabConfig};
use lcam::construction::{build_params, Variant, World};
use lcam::realizer::{assemble_instance, audit_instance, Instance};
use lcam::report::write_json;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "lab", about = "Query-limited matching laboratory", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate one instance and write its container plus audit sidecar.
    Generate {
        #[arg(long)]
        n: u64,
        #[arg(long)]
        k: u32,
        #[arg(long)]
        d: u32,
        #[arg(long)]
        s: u32,
        #[arg(long, default_value = "full-hierarchy")]
        variant: String,
        #[arg(long, default_value = "yes")]
        world: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output container path (.lcam); the audit JSON lands next to it.
        #[arg(long)]
        out: PathBuf,
    },
    /// Audit an instance container; exit 0 iff clean.
    Audit {
        #[arg(long)]
        instance: PathBuf,
        /// Optional path for the audit JSON (defaults next to the input).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the experiment described by a TOML config.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Re-run a manifest and verify the artifacts byte-for-byte.
    Replay {
        #[arg(long)]
        manifest: PathBuf,
        /// Directory for the replayed artifacts (default: sibling of the
        /// original run with a _replay suffix).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-emit the CSV view of a stored JSON report.
    Report {
        #[arg(long)]
        results: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_variant(s: &str) -> Result<Variant> {
    Ok(match s {
        "core-only" | "core_only" => Variant::CoreOnly,
        "single-delusive" | "single_delusive" => Variant::SingleDelusive,
        "full-hierarchy" | "full_hierarchy" | "full" => Variant::FullHierarchy,
        other => bail!("unknown variant {other}"),
    })
}

fn parse_world(s: &str) -> Result<World> {
    Ok(match s {
        "yes" | "YES" => World::Yes,
        "no" | "NO" => World::No,
        other => bail!("unknown world {other}"),
    })
}

fn main() -> ExitCode {
    match real_main() {
        Ok(code) => code,
        Err(err) => {
            // Machine-readable error report on failure.
            let report = serde_json::json!({ "error": format!("{err:#}") });
            eprintln!("{report}");
            ExitCode::from(1)
        }
    }
}

fn real_main() -> Result<ExitCode> {
    if let Ok(threads) = std::env::var("LAB_THREADS") {
        let threads: usize = threads.parse().context("LAB_THREADS must be an integer")?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .ok();
    }
    let cli = Cli::parse();
    match cli.command {
        Command::Generate {
            n,
            k,
            d,
            s,
            variant,
            world,
            seed,
            out,
        } => {
            let params = build_params(
                n,
                k,
                d,
                s,
                parse_variant(&variant)?,
                parse_world(&world)?,
                seed,
            )
            .map_err(|e| anyhow::anyhow!("{e}"))?;
            let inst = assemble_instance(&params)?;
            inst.write_file(&out)?;
            let audit = audit_instance(&inst);
            let sidecar = out.with_extension("audit.json");
            write_json(&sidecar, &audit)?;
            println!(
                "wrote {} (n={}, edges={}, broken={}) and {}",
                out.display(),
                inst.n(),
                inst.graph().edge_count(),
                inst.broken().len(),
                sidecar.display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Audit { instance, out } => {
            let inst = Instance::read_file(&instance)?;
            let report = audit_instance(&inst);
            let out = out.unwrap_or_else(|| instance.with_extension("audit.json"));
            write_json(&out, &report)?;
            println!(
                "audit: {} violations, report at {}",
                report.violations.len(),
                out.display()
            );
            Ok(if report.clean() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(2)
            })
        }
        Command::Run { config, out } => {
            let config = LabConfig::from_path(&config)?;
            let written = run(&config, &out)?;
            for path in written {
                println!("wrote {}", path.display());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Replay { manifest, out } => {
            let out = out.unwrap_or_else(|| {
                let dir = manifest.parent().unwrap_or_else(|| std::path::Path::new("."));
                let mut name = dir
                    .file_name()
                    .map(|n| n.to_string_lossy().into_owned())
                    .unwrap_or_else(|| "run".into());
                name.push_str("_replay");
                dir.with_file_name(name)
            });
            let mismatches = replay(&manifest, &out)?;
            if mismatches.is_empty() {
                println!("replay OK: all artifacts byte-identical");
                Ok(ExitCode::SUCCESS)
            } else {
                println!("replay MISMATCH: {mismatches:?}");
                Ok(ExitCode::from(3))
            }
        }
        Command::Report { results, out } => {
            lab::reemit_csv(&results, &out)?;
            println!("wrote {}", out.display());
            Ok(ExitCode::SUCCESS)
        }
    }
}
