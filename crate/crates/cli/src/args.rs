use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use translator_lab::speeds::SpeedKind;

#[derive(Debug, Parser)]
#[command(name = "translator-lab", version, about = "Translating solitons of curvature flows: profiles and estimate checks")]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Speed function (mean, two-harmonic-mean, sqrt-scalar, scalar-to-mean).
    #[arg(long, global = true, default_value = "mean", value_parser = parse_speed)]
    pub speed: SpeedKind,
    /// Hypersurface dimension n.
    #[arg(long = "dim", global = true, default_value_t = 3, value_parser = parse_dim)]
    pub n: usize,
    /// Height at which profile integration stops.
    #[arg(long = "hmax", global = true, default_value_t = 1e4, value_parser = parse_hmax)]
    pub h_max: f64,
    /// Local error tolerance of the integrator.
    #[arg(long, global = true, default_value_t = 1e-8, value_parser = parse_tol)]
    pub tol: f64,
    #[arg(long, global = true, default_value_t = 100_000, value_parser = parse_samples)]
    pub samples: usize,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Directory for artifacts; created if missing.
    #[arg(long = "out", global = true, default_value = "runs")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Translator profiles.
    Bowl {
        #[command(subcommand)]
        action: BowlAction,
    },
    /// Run one estimate check, or all of them, and write a manifest.
    Verify {
        #[arg(value_enum)]
        target: VerifyTarget,
    },
    /// Pinching cones and the constant β₂.
    Cone {
        #[command(subcommand)]
        action: ConeAction,
    },
    /// Sampling checks of the speed function itself.
    Speeds {
        #[command(subcommand)]
        action: SpeedsAction,
    },
    /// Inverse-concavity form at face points.
    Iccond {
        /// Single face point `z₂,…,zₙ`; a random sweep when omitted.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        z: Option<Vec<f64>>,
    },
    /// Rescaled cross-section radii against the shrinking cylinder.
    Blowdown {
        /// Blow-down height h_j (defaults to --hmax).
        #[arg(long = "hj", value_parser = parse_positive)]
        h_j: Option<f64>,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "-1,0,0.5,0.9")]
        t: Vec<f64>,
    },
}

#[derive(Debug, Subcommand)]
pub enum BowlAction {
    /// Solve the profile ODE and write the profile CSV plus sidecar.
    Solve,
}

#[derive(Debug, Subcommand)]
pub enum ConeAction {
    /// Empirical β₂ with an independent validation sample.
    Beta2 {
        #[arg(long, value_enum, default_value_t = Mode::Concave)]
        mode: Mode,
    },
    /// Scan of the face z₁ = 0.
    Probe {
        #[arg(long, value_enum, default_value_t = Mode::Concave)]
        mode: Mode,
        #[arg(long, default_value_t = 40, value_parser = clap::value_parser!(u64).range(2..))]
        grid: u64,
    },
}

#[derive(Debug, Subcommand)]
pub enum SpeedsAction {
    /// Symmetry, monotonicity and homogeneity on random samples.
    Check,
    Concavity {
        #[arg(long, value_enum, default_value_t = ConcavityArg::Concave)]
        mode: ConcavityArg,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Convex,
    Concave,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ConcavityArg {
    Convex,
    Concave,
    DualConcave,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VerifyTarget {
    All,
    #[value(name = "lemma-3.1")]
    Lemma31,
    #[value(name = "lemma-3.3")]
    Lemma33,
    #[value(name = "lemma-3.4")]
    Lemma34,
    #[value(name = "lemma-3.5")]
    Lemma35,
    #[value(name = "lemma-3.6")]
    Lemma36,
    Blowdown,
    #[value(name = "corollary-H")]
    CorollaryH,
    #[value(name = "claim-4.1")]
    Claim41,
    #[value(name = "claim-4.2")]
    Claim42,
    Iccond,
    LinearizedCylinder,
    JacobiSpeed,
    JacobiRotation,
    CylindricalEstimate,
}

impl VerifyTarget {
    pub fn id(self) -> &'static str {
        match self {
            VerifyTarget::All => "all",
            VerifyTarget::Lemma31 => "lemma-3.1",
            VerifyTarget::Lemma33 => "lemma-3.3",
            VerifyTarget::Lemma34 => "lemma-3.4",
            VerifyTarget::Lemma35 => "lemma-3.5",
            VerifyTarget::Lemma36 => "lemma-3.6",
            VerifyTarget::Blowdown => "blowdown",
            VerifyTarget::CorollaryH => "corollary-H",
            VerifyTarget::Claim41 => "claim-4.1",
            VerifyTarget::Claim42 => "claim-4.2",
            VerifyTarget::Iccond => "iccond",
            VerifyTarget::LinearizedCylinder => "linearized-cylinder",
            VerifyTarget::JacobiSpeed => "jacobi-speed",
            VerifyTarget::JacobiRotation => "jacobi-rotation",
            VerifyTarget::CylindricalEstimate => "cylindrical-estimate",
        }
    }
}

fn parse_speed(s: &str) -> Result<SpeedKind, String> {
    s.parse().map_err(|e: translator_lab::LabError| e.to_string())
}

fn parse_float(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("`{s}` is not finite"))
    }
}

fn parse_tol(s: &str) -> Result<f64, String> {
    let v = parse_float(s)?;
    if v > 0.0 && v <= 1e-2 {
        Ok(v)
    } else {
        Err(format!("tol must lie in (0, 1e-2], got {v}"))
    }
}

fn parse_hmax(s: &str) -> Result<f64, String> {
    let v = parse_float(s)?;
    if v >= 1.0 {
        Ok(v)
    } else {
        Err(format!("hmax must be >= 1, got {v}"))
    }
}

fn parse_positive(s: &str) -> Result<f64, String> {
    let v = parse_float(s)?;
    if v > 0.0 {
        Ok(v)
    } else {
        Err(format!("expected a positive value, got {v}"))
    }
}

fn parse_dim(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(n) if n >= 1 => Ok(n),
        _ => Err(format!("dim must be an integer >= 1, got `{s}`")),
    }
}

fn parse_samples(s: &str) -> Result<usize, String> {
    match s.parse::<f64>() {
        Ok(v) if v >= 1.0 && v.fract() == 0.0 && v <= 1e9 => Ok(v as usize),
        _ => Err(format!("samples must be a positive integer, got `{s}`")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn command_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn defaults() {
        let cli = Cli::try_parse_from(["translator-lab", "bowl", "solve"]).unwrap();
        assert_eq!(cli.common.speed, SpeedKind::Mean);
        assert_eq!(cli.common.n, 3);
        assert_eq!(cli.common.h_max, 1e4);
        assert_eq!(cli.common.tol, 1e-8);
        assert_eq!(cli.common.samples, 100_000);
        assert_eq!(cli.common.seed, 0);
        assert_eq!(cli.common.out_dir, PathBuf::from("runs"));
    }

    #[test]
    fn rejects_out_of_range_flags() {
        for bad in [
            vec!["verify", "all", "--tol", "0.1"],
            vec!["verify", "all", "--tol", "0"],
            vec!["verify", "all", "--hmax", "0.5"],
            vec!["verify", "all", "--dim", "0"],
            vec!["verify", "all", "--speed", "gauss"],
            vec!["verify", "lemma-9"],
            vec!["cone", "probe", "--grid", "1"],
        ] {
            let argv = std::iter::once("translator-lab").chain(bad.iter().copied());
            assert!(Cli::try_parse_from(argv).is_err(), "{bad:?}");
        }
    }

    #[test]
    fn lists_and_scientific_notation() {
        let cli =
            Cli::try_parse_from(["translator-lab", "--samples", "1e3", "blowdown", "--hj", "1e3", "--t", "-1,0.5"]).unwrap();
        assert_eq!(cli.common.samples, 1000);
        match cli.command {
            Command::Blowdown { h_j, t } => {
                assert_eq!(h_j, Some(1e3));
                assert_eq!(t, vec![-1.0, 0.5]);
            }
            other => panic!("{other:?}"),
        }
    }
}
