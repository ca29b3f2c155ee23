use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};
use emotrail_core::aggregate::{emotion_map_panels, render_emotion_map};
use emotrail_core::catalog::Catalog;
use emotrail_core::postcard::{compose_postcard, render_postcard_svg_with};
use emotrail_core::store::Store;
use emotrail_gateway::api::{current_stats, router, system_clock, AppState};
use emotrail_gateway::config::Config;
use emotrail_gateway::end_of_utc_day;
use emotrail_gateway::simulate::{simulate, Profile};

#[derive(Parser)]
#[command(name = "emotrail", version, about = "Museum visit gateway and operator tools")]
struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Store directory (overrides config and EMOTRAIL_STORE).
    #[arg(long, global = true)]
    store: Option<PathBuf>,
    /// Catalog TOML (overrides config and EMOTRAIL_CATALOG).
    #[arg(long, global = true)]
    catalog: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the HTTP service.
    Serve {
        #[arg(long)]
        bind: Option<String>,
    },
    /// Fill the store with synthetic visits.
    Simulate {
        #[arg(long, default_value_t = 20)]
        sessions: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// `default` or `paper-2019`.
        #[arg(long, default_value = "default")]
        profile: String,
    },
    /// Re-render a session's postcard as SVG.
    RenderPostcard {
        session: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write emotion_map.svg and stats.json for the donated data.
    Aggregate {
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Delete sessions with no consent decision whose last event is older
    /// than the cutoff (ms since epoch; default: end of today, UTC).
    PurgeIncomplete {
        #[arg(long)]
        cutoff: Option<i64>,
    },
    /// Check a catalog file and print a one-line summary.
    ValidateCatalog { path: PathBuf },
    /// Write donated sessions as JSON lines.
    Export {
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

type Failure = Box<dyn std::error::Error>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn write_output(out: Option<&Path>, bytes: &[u8]) -> Result<(), Failure> {
    match out {
        Some(p) => fs::write(p, bytes)?,
        None => std::io::stdout().write_all(bytes)?,
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    let mut config = Config::load(cli.config.as_deref())?;
    if let Some(s) = cli.store {
        config.store = s;
    }
    if let Some(c) = cli.catalog {
        config.catalog = Some(c);
    }

    match cli.command {
        Command::ValidateCatalog { path } => {
            let catalog = Catalog::load(&fs::read(&path)?)?;
            println!(
                "ok: {} emotions, {} interview videos",
                catalog.entries().len(),
                catalog.videos().len()
            );
        }
        Command::Serve { bind } => {
            if let Some(b) = bind {
                config.bind = b;
            }
            let catalog = config.load_catalog()?;
            let store = Arc::new(Store::open(&config.store)?);
            let bind = config.bind.clone();
            let state = Arc::new(AppState::new(catalog, store, config, system_clock(), None)?);
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(async move {
                let listener = tokio::net::TcpListener::bind(&bind).await?;
                eprintln!("listening on {}", listener.local_addr()?);
                axum::serve(listener, router(state))
                    .with_graceful_shutdown(async {
                        let _ = tokio::signal::ctrl_c().await;
                    })
                    .await?;
                Ok::<(), Failure>(())
            })?;
        }
        Command::Simulate {
            sessions,
            seed,
            profile,
        } => {
            let profile: Profile = profile.parse()?;
            let catalog = config.load_catalog()?;
            let store = Store::open(&config.store)?;
            let s = simulate(&store, &catalog, &config, sessions, seed, profile)?;
            println!(
                "simulated {} donated, {} withheld, {} partial",
                s.donated, s.withheld, s.partial
            );
        }
        Command::RenderPostcard { session, out } => {
            let catalog = config.load_catalog()?;
            let store = Store::open(&config.store)?;
            let s = store.load_session(&session)?;
            let data = compose_postcard(&s, s.scores.as_ref(), &catalog)?;
            let svg = render_postcard_svg_with(&data, &catalog, &config.postcard);
            write_output(out.as_deref(), svg.as_bytes())?;
        }
        Command::Aggregate { out_dir } => {
            let catalog = config.load_catalog()?;
            let store = Store::open(&config.store)?;
            let stats = current_stats(&store, &catalog)?;
            let dataset = store.donated_records()?;
            let svg = render_emotion_map(&emotion_map_panels(&dataset, &catalog), &config.emotion_map);
            fs::create_dir_all(&out_dir)?;
            fs::write(out_dir.join("emotion_map.svg"), svg)?;
            let json = serde_json::to_string_pretty(&stats)?;
            fs::write(out_dir.join("stats.json"), format!("{json}\n"))?;
            println!("{json}");
        }
        Command::PurgeIncomplete { cutoff } => {
            let cutoff = cutoff.unwrap_or_else(|| end_of_utc_day(system_clock()()));
            let store = Store::open(&config.store)?;
            let n = store.purge_incomplete(cutoff)?;
            println!("purged {n} incomplete sessions");
        }
        Command::Export { out } => {
            let store = Store::open(&config.store)?;
            let mut buf = Vec::new();
            store.export_donated(&mut buf)?;
            write_output(out.as_deref(), &buf)?;
        }
    }
    Ok(())
}
