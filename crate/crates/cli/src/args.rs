use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use gsmooth_core::{DetectorConfig, FilterConfig, SweepParam};
use serde::de::Error as _;
use serde::{Deserialize, Deserializer};

#[derive(Debug, Parser)]
#[command(name = "gsmooth", version, about = "Detect whether graph signals are smooth")]
pub struct Cli {
    /// JSON file of option defaults (keys as the long flag names); flags on
    /// the command line take precedence.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample a random geometric graph and write its edge list.
    #[command(alias = "generate")]
    GenerateGraph(Opts),
    /// Draw a batch of filtered white-noise signals on a graph.
    GenerateSignals(Opts),
    /// Smoothness ratio, normalization and LPF ratios of a filter.
    FilterInfo(Opts),
    /// Run a detector on a signal batch. Exit status 0 = smooth, 1 = not smooth.
    Detect(DetectorOpts),
    /// Threshold for a target false-alarm probability.
    Calibrate(DetectorOpts),
    /// Monte Carlo ROC curve of one detector.
    Roc(DetectorOpts),
    /// Detection probability at fixed false-alarm probability over a grid.
    Sweep(Opts),
}

#[derive(Debug, Args)]
pub struct DetectorOpts {
    /// Detector, e.g. `semi`, `tv`, `lpf:k=10`, `lrt`, `lrt-tikhonov:alpha=0.2`.
    #[arg(value_name = "DETECTOR")]
    pub name: Option<DetectorArg>,

    #[command(flatten)]
    pub opts: Opts,
}

/// Options shared by all subcommands. Each also reads from the JSON config.
#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct Opts {
    /// Edge list CSV with header `src,dst,weight`.
    #[arg(long, value_name = "PATH")]
    pub graph: Option<PathBuf>,
    /// Signal CSV, one row per sample.
    #[arg(long, value_name = "PATH")]
    pub signals: Option<PathBuf>,
    /// Output file; standard output when omitted.
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
    #[arg(long, value_name = "U64")]
    pub seed: Option<u64>,
    /// Target false-alarm probability.
    #[arg(long, value_name = "P")]
    pub pfa: Option<f64>,
    /// Fixed decision threshold, used instead of calibrating.
    #[arg(long, value_name = "T")]
    pub threshold: Option<f64>,
    /// Variance of the white input.
    #[arg(long, value_name = "S")]
    pub sigma2: Option<f64>,
    /// Smooth-hypothesis filter, e.g. `tikhonov:alpha=0.2`.
    #[arg(long, alias = "filter", value_name = "FILTERSPEC")]
    pub h0: Option<FilterArg>,
    /// Alternative filter, e.g. `allpass`.
    #[arg(long, value_name = "FILTERSPEC")]
    pub h1: Option<FilterArg>,
    /// Detector (repeatable for `sweep`).
    #[arg(long, value_name = "NAME")]
    #[serde(deserialize_with = "one_or_many")]
    pub detector: Vec<DetectorArg>,
    #[arg(long, value_name = "T")]
    pub trials: Option<usize>,
    /// Samples per batch.
    #[arg(long = "m", short = 'M', value_name = "M")]
    pub m: Option<usize>,
    /// Standard deviation of additive noise.
    #[arg(long, value_name = "STD")]
    pub noise_std: Option<f64>,
    /// Generate a random geometric (RBF-weighted) graph.
    #[arg(long)]
    pub rbf: bool,
    /// Number of nodes for generated graphs.
    #[arg(long, value_name = "N")]
    pub n: Option<usize>,
    #[arg(long, value_name = "SIGMA")]
    pub kernel_sigma: Option<f64>,
    /// Edges with smaller weight are removed.
    #[arg(long, value_name = "W")]
    pub cutoff: Option<f64>,
    /// LPF order.
    #[arg(long, value_name = "K")]
    pub k: Option<usize>,
    /// Swept parameter: M, alpha, r or scale.
    #[arg(long, value_name = "NAME")]
    pub param: Option<SweepParam>,
    /// Comma-separated grid values.
    #[arg(long, value_delimiter = ',', value_name = "V,..")]
    pub grid: Vec<f64>,
}

impl Opts {
    /// Fields set here win over `base`.
    pub fn overlay(self, base: Opts) -> Opts {
        Opts {
            graph: self.graph.or(base.graph),
            signals: self.signals.or(base.signals),
            out: self.out.or(base.out),
            seed: self.seed.or(base.seed),
            pfa: self.pfa.or(base.pfa),
            threshold: self.threshold.or(base.threshold),
            sigma2: self.sigma2.or(base.sigma2),
            h0: self.h0.or(base.h0),
            h1: self.h1.or(base.h1),
            detector: or_list(self.detector, base.detector),
            trials: self.trials.or(base.trials),
            m: self.m.or(base.m),
            noise_std: self.noise_std.or(base.noise_std),
            rbf: self.rbf || base.rbf,
            n: self.n.or(base.n),
            kernel_sigma: self.kernel_sigma.or(base.kernel_sigma),
            cutoff: self.cutoff.or(base.cutoff),
            k: self.k.or(base.k),
            param: self.param.or(base.param),
            grid: or_list(self.grid, base.grid),
        }
    }
}

fn or_list<T>(a: Vec<T>, b: Vec<T>) -> Vec<T> {
    if a.is_empty() {
        b
    } else {
        a
    }
}

/// A filter given either as `kind[:key=val,…]` or, in JSON, as an object.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterArg(pub FilterConfig);

impl FromStr for FilterArg {
    type Err = gsmooth_core::Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.parse().map(FilterArg)
    }
}

impl<'de> Deserialize<'de> for FilterArg {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Text(String),
            Full(FilterConfig),
        }
        match Raw::deserialize(d)? {
            Raw::Text(s) => s.parse().map_err(D::Error::custom),
            Raw::Full(c) => Ok(FilterArg(c)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectorArg(pub DetectorConfig);

impl FromStr for DetectorArg {
    type Err = gsmooth_core::Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.parse().map(DetectorArg)
    }
}

impl<'de> Deserialize<'de> for DetectorArg {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Text(String),
            Full(DetectorConfig),
        }
        match Raw::deserialize(d)? {
            Raw::Text(s) => s.parse().map_err(D::Error::custom),
            Raw::Full(c) => Ok(DetectorArg(c)),
        }
    }
}

fn one_or_many<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<DetectorArg>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        One(DetectorArg),
        Many(Vec<DetectorArg>),
    }
    Ok(match Raw::deserialize(d)? {
        Raw::One(a) => vec![a],
        Raw::Many(v) => v,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn flags_win_over_config() {
        let base: Opts = serde_json::from_str(r#"{"pfa": 0.01, "m": 5, "h0": "gmrf", "detector": "tv"}"#).unwrap();
        let cli = Cli::parse_from(["gsmooth", "detect", "semi", "--pfa", "0.2"]);
        let Command::Detect(d) = cli.command else { panic!() };
        let o = d.opts.overlay(base);
        assert_eq!(o.pfa, Some(0.2));
        assert_eq!(o.m, Some(5));
        assert_eq!(o.h0, Some(FilterArg(FilterConfig::gmrf())));
        assert_eq!(o.detector, vec![DetectorArg(DetectorConfig::Tv)]);
    }

    #[test]
    fn config_accepts_objects_and_lists() {
        let o: Opts = serde_json::from_str(
            r#"{"h1": {"kind": "tikhonov", "params": {"alpha": 0.3}},
                "detector": ["semi", {"name": "lrt-diffusion", "tau": 0.1}],
                "noise-std": 0.1, "grid": [1, 2]}"#,
        )
        .unwrap();
        assert_eq!(o.h1, Some(FilterArg(FilterConfig::tikhonov(0.3))));
        assert_eq!(o.detector.len(), 2);
        assert_eq!(o.grid, vec![1.0, 2.0]);
        assert!(serde_json::from_str::<Opts>(r#"{"bogus": 1}"#).is_err());
    }

    #[test]
    fn generate_alias() {
        let cli = Cli::parse_from(["gsmooth", "generate", "--rbf", "--n", "30", "--kernel-sigma", "0.5"]);
        let Command::GenerateGraph(o) = cli.command else {
            panic!()
        };
        assert!(o.rbf);
        assert_eq!((o.n, o.kernel_sigma), (Some(30), Some(0.5)));
    }
}
