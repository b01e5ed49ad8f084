use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use eotrack::{output, Experiment, Profile, RunSpec};
use eotrack_core::likelihood::Mode;

#[derive(Parser)]
#[command(version, about = "Extended-agent tracking simulations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo run of the configured scenario; writes rmse.csv,
    /// cdf_<mode>.csv and summary.txt.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_delimiter = ',')]
        modes: Option<Vec<Mode>>,
        #[arg(long)]
        realizations: Option<usize>,
        #[arg(long)]
        particles: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// desk: 50 realizations of 2000 particles; paper: 500 of 5000.
        #[arg(long)]
        profile: Option<Profile>,
    },
}

fn main() -> ExitCode {
    let Command::Simulate {
        config,
        out,
        modes,
        realizations,
        particles,
        seed,
        profile,
    } = Cli::parse().command;
    let run = || -> Result<(), eotrack::Error> {
        let mut spec = RunSpec::load(&config)?;
        if let Some(p) = profile {
            p.apply(&mut spec);
        }
        if let Some(m) = modes {
            spec.modes = m;
        }
        if let Some(r) = realizations {
            spec.realizations = r;
        }
        if let Some(i) = particles {
            spec.tracker.particles = i;
        }
        if let Some(s) = seed {
            spec.base_seed = s;
        }
        spec.output_dir = Some(out.clone());
        let experiment = Experiment::new(spec)?;
        let table = experiment.run()?;
        output::write_outputs(&table, &experiment.spec, &out)?;
        eprintln!(
            "wrote {} ({:.1} s)",
            out.display(),
            table.wall_time.as_secs_f64()
        );
        Ok(())
    };
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
