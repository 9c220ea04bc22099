use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use pwa_reach::{CertificateKind, Tolerances};

/// Reachable-set estimation for bimodal piecewise-affine systems.
///
/// SYSTEM is a JSON file, or `bundled:example1` / `bundled:example2` for the shipped examples.
#[derive(Debug, Parser)]
#[command(name = "pwa-reach", version, about)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print continuity vector, Hurwitz margins, origin region and constant-term modes.
    Check(CommonArgs),
    /// Search alpha, write certificates and set boundaries.
    Estimate {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        search: SearchArgs,
        #[command(flatten)]
        plot: PlotArgs,
    },
    /// Simulate trajectories from the origin and write them as CSV.
    Simulate {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        sim: SimArgs,
        /// Keep every k-th sample in the CSV.
        #[arg(long, default_value_t = 10)]
        every: usize,
    },
    /// Audit certificates along simulated trajectories.
    Validate {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        certs: CertArgs,
        #[command(flatten)]
        sim: SimArgs,
    },
    /// Write set boundaries as CSV and SVG.
    Plot {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        certs: CertArgs,
        #[command(flatten)]
        plot: PlotArgs,
        /// Overlay this many simulated trajectories in the SVG.
        #[arg(long, default_value_t = 0)]
        overlay: usize,
        #[command(flatten)]
        sim: SimArgs,
    },
    /// Compare a piecewise certificate with a common one.
    Compare {
        #[command(flatten)]
        common: CommonArgs,
        /// Piecewise certificate (default: OUT/certificate_piecewise.json).
        #[arg(long)]
        piecewise: Option<String>,
        /// Common certificate (default: OUT/certificate_common.json).
        #[arg(long = "common")]
        common_cert: Option<String>,
    },
}

impl Command {
    pub fn common(&self) -> &CommonArgs {
        match self {
            Command::Check(c) => c,
            Command::Estimate { common, .. }
            | Command::Simulate { common, .. }
            | Command::Validate { common, .. }
            | Command::Plot { common, .. }
            | Command::Compare { common, .. } => common,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Piecewise,
    Common,
    Both,
}

impl Method {
    pub fn kinds(self) -> Vec<CertificateKind> {
        match self {
            Method::Piecewise => vec![CertificateKind::Piecewise],
            Method::Common => vec![CertificateKind::Common],
            Method::Both => vec![CertificateKind::Piecewise, CertificateKind::Common],
        }
    }
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// System JSON file or `bundled:<name>`.
    pub system: String,
    /// Output directory.
    #[arg(long = "out", default_value = "out")]
    pub out_dir: PathBuf,
    #[command(flatten)]
    pub tol: TolArgs,
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    /// Solve at a single alpha.
    #[arg(long, conflicts_with = "alpha_grid")]
    pub alpha: Option<f64>,
    /// Comma-separated alpha grid.
    #[arg(long, value_delimiter = ',')]
    pub alpha_grid: Option<Vec<f64>>,
    #[arg(long, value_enum, default_value_t = Method::Both)]
    pub method: Method,
}

impl SearchArgs {
    pub fn grid(&self) -> Option<Vec<f64>> {
        self.alpha.map(|a| vec![a]).or_else(|| self.alpha_grid.clone())
    }
}

#[derive(Debug, Args)]
pub struct CertArgs {
    /// Certificate files; defaults to OUT/certificate_{method}.json.
    #[arg(long = "certificate")]
    pub certificates: Vec<String>,
    #[arg(long, value_enum, default_value_t = Method::Both)]
    pub method: Method,
}

#[derive(Debug, Args)]
pub struct SimArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 100)]
    pub trajectories: usize,
    #[arg(long, default_value_t = 30.0)]
    pub t_end: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub dt: f64,
    #[arg(long, default_value_t = 1e-2)]
    pub hold_dt: f64,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    /// Coordinate pair (1-based) to project onto when n > 2.
    #[arg(long, num_args = 2, value_names = ["I", "J"])]
    pub project: Option<Vec<usize>>,
    /// Points per boundary piece.
    #[arg(long, default_value_t = 200)]
    pub samples: usize,
}

#[derive(Debug, Args)]
pub struct TolArgs {
    #[arg(long)]
    pub tol_cont: Option<f64>,
    #[arg(long)]
    pub tol_pd: Option<f64>,
    #[arg(long)]
    pub tol_hurwitz: Option<f64>,
    #[arg(long)]
    pub tol_eps_pd: Option<f64>,
    #[arg(long)]
    pub tol_solver: Option<f64>,
    #[arg(long)]
    pub tol_mem: Option<f64>,
    #[arg(long)]
    pub tol_audit: Option<f64>,
    #[arg(long)]
    pub tol_psd: Option<f64>,
    #[arg(long)]
    pub tol_entry: Option<f64>,
    #[arg(long)]
    pub tol_split: Option<f64>,
}

impl TolArgs {
    pub fn tolerances(&self) -> Tolerances {
        let mut t = Tolerances::default();
        let set = |slot: &mut f64, v: Option<f64>| {
            if let Some(v) = v {
                *slot = v;
            }
        };
        set(&mut t.cont, self.tol_cont);
        set(&mut t.pd, self.tol_pd);
        set(&mut t.hurwitz, self.tol_hurwitz);
        set(&mut t.eps_pd, self.tol_eps_pd);
        set(&mut t.solver, self.tol_solver);
        set(&mut t.mem, self.tol_mem);
        set(&mut t.audit, self.tol_audit);
        set(&mut t.psd, self.tol_psd);
        set(&mut t.entry, self.tol_entry);
        set(&mut t.split, self.tol_split);
        t
    }
}
