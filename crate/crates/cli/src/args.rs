use std::path::PathBuf;
use std::str::FromStr;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};
use linkhodge::hodge::{EigenMethod, Laplacian};
use linkhodge::recurrence::LinkBase;
use linkhodge::{Family, Simplex};
use serde::Serialize;

#[derive(Parser, Serialize, Debug)]
#[command(
    name = "linkhodge",
    version,
    about = "Weighted simplicial complexes, link recurrence and the ∂∂ defect"
)]
pub struct Cli {
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Single-threaded, sequential execution.
    #[arg(long, global = true)]
    pub deterministic: bool,
    /// Seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Exit with status 2 when a verdict is undetermined.
    #[arg(long, global = true)]
    pub strict: bool,
    /// Write the report (or, for `gen`, the complex) here instead of stdout.
    #[arg(short, long, global = true)]
    pub output: Option<PathBuf>,
    /// Also write the per-level series as CSV.
    #[arg(long, global = true)]
    pub csv: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Serialize, Debug)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum Command {
    /// Generate a truncation of a family as a wsc-v1 file.
    Gen(GenArgs),
    /// Check a wsc-v1 file: face closure, weights, D∘D = 0, B = M⁻¹DᵀM.
    Validate(ValidateArgs),
    /// Link graph of a simplex, with components and balancedness.
    Links(LinksArgs),
    /// Recurrence or transience of every link component along an exhaustion.
    ClassifyLink(ClassifyArgs),
    /// ∂∂ω(ρ) for the monopole witness along levels.
    Defect(DefectArgs),
    /// Minimum-norm top-degree ω with ∂ω = 1_σ along levels.
    Tprime(TPrimeArgs),
    /// Betti numbers, Hodge splits of random cochains, spectral pairing.
    Hodge(HodgeArgs),
    /// Eigenvalues of a degree-k Laplacian.
    Spectrum(SpectrumArgs),
    /// Monte Carlo return probability of a random walk.
    Walk(WalkArgs),
}

/// A complex from a family or a file.
#[derive(Args, Serialize, Debug, Clone)]
pub struct Source {
    /// Family, e.g. `octahedron`, `torus_grid:7x7`, `cone_over_tree:2`.
    #[arg(long)]
    pub family: Option<Family>,
    /// Truncation level (ignored by finite families).
    #[arg(long, default_value_t = 0)]
    pub level: usize,
    /// wsc-v1 file instead of a family.
    #[arg(long, conflicts_with = "family")]
    pub input: Option<PathBuf>,
    /// Include ∅ with this weight.
    #[arg(long)]
    pub empty_weight: Option<f64>,
}

#[derive(Args, Serialize, Debug)]
pub struct GenArgs {
    #[arg(long)]
    pub family: Family,
    #[arg(long, default_value_t = 0)]
    pub level: usize,
    #[arg(long)]
    pub empty_weight: Option<f64>,
}

#[derive(Args, Serialize, Debug)]
pub struct ValidateArgs {
    pub file: PathBuf,
}

#[derive(Args, Serialize, Debug)]
pub struct LinksArgs {
    #[command(flatten)]
    pub source: Source,
    /// `apex` or a simplex such as `0,1`.
    #[arg(long, default_value = "apex")]
    pub rho: Base,
}

#[derive(Args, Serialize, Debug)]
pub struct ClassifyArgs {
    #[arg(long, required_unless_present = "graph")]
    pub family: Option<Family>,
    #[arg(long, default_value = "apex")]
    pub rho: Base,
    /// Ground-truth exhaustion instead of a link: `lattice:D`, `tree:B`, `tree:B:lumped`.
    #[arg(long, conflicts_with = "family")]
    pub graph: Option<GraphSpec>,
    /// `N` (levels 1..=N, or just 0 for finite complexes), `A..B`
    /// (inclusive) or a comma list.
    #[arg(long)]
    pub levels: Levels,
    #[arg(long, default_value_t = 1e-12)]
    pub tol: f64,
    /// Also estimate the return probability of the last level with this many walks.
    #[arg(long)]
    pub mc_walks: Option<u64>,
    #[arg(long, default_value_t = 1_000_000)]
    pub mc_max_steps: u64,
}

#[derive(Args, Serialize, Debug)]
pub struct DefectArgs {
    #[arg(long)]
    pub family: Family,
    #[arg(long, default_value = "apex")]
    pub rho: Base,
    /// Monopole source (default: the link root).
    #[arg(long)]
    pub v0: Option<u64>,
    #[arg(long)]
    pub levels: Levels,
    #[arg(long, default_value_t = 1e-12)]
    pub tol: f64,
    /// Check the cutoff bound on this many forms per level.
    #[arg(long)]
    pub bound_forms: Option<usize>,
    /// Classify the link and report whether ∂∂ = 0 holds at ρ.
    #[arg(long)]
    pub check_property: bool,
}

#[derive(Args, Serialize, Debug)]
pub struct TPrimeArgs {
    #[arg(long)]
    pub family: Family,
    /// Target (d−1)-simplex, e.g. `0,1`.
    #[arg(long)]
    pub sigma: SimplexArg,
    /// `single`, `global`, or `local:RHO` (e.g. `local:0`).
    #[arg(long, default_value = "single")]
    pub mode: ModeArg,
    #[arg(long)]
    pub levels: Levels,
    #[arg(long, default_value_t = 1e-12)]
    pub tol: f64,
}

#[derive(Args, Serialize, Debug)]
pub struct HodgeArgs {
    #[command(flatten)]
    pub source: Source,
    /// Random cochains per degree for the decomposition check.
    #[arg(long, default_value_t = 100)]
    pub samples: usize,
    #[arg(long, default_value_t = 1e-13)]
    pub tol: f64,
}

#[derive(Args, Serialize, Debug)]
pub struct SpectrumArgs {
    #[command(flatten)]
    pub source: Source,
    /// `up`, `down` or `hodge`.
    #[arg(long, default_value = "hodge")]
    pub tag: LaplacianArg,
    #[arg(long, allow_hyphen_values = true)]
    pub degree: isize,
    /// Smallest eigenvalues to report (default: all).
    #[arg(long)]
    pub count: Option<usize>,
    /// `auto`, `dense` or `lanczos`.
    #[arg(long, default_value = "auto")]
    pub method: MethodArg,
    #[arg(long)]
    pub vectors: bool,
}

#[derive(Args, Serialize, Debug)]
pub struct WalkArgs {
    /// Walk on Z^D (D ≤ 3) instead of a link.
    #[arg(long, conflicts_with = "family")]
    pub lattice: Option<usize>,
    /// Escape radius for lattice walks.
    #[arg(long, default_value_t = 64.0)]
    pub escape_radius: f64,
    #[arg(long, required_unless_present = "lattice")]
    pub family: Option<Family>,
    #[arg(long, default_value = "apex")]
    pub rho: Base,
    #[arg(long, default_value_t = 1)]
    pub level: usize,
    /// Hop distance at which link walks count as escaped.
    #[arg(long)]
    pub radius: Option<usize>,
    #[arg(long, default_value_t = 100_000)]
    pub walks: u64,
    #[arg(long, default_value_t = 1_000_000)]
    pub max_steps: u64,
}

macro_rules! string_arg {
    ($name:ident, $inner:ty, $parse:expr) => {
        #[derive(Clone, Debug, Serialize)]
        #[serde(into = "String")]
        pub struct $name {
            raw: String,
            #[serde(skip)]
            pub value: $inner,
        }

        impl FromStr for $name {
            type Err = anyhow::Error;
            fn from_str(s: &str) -> anyhow::Result<Self> {
                let f: fn(&str) -> anyhow::Result<$inner> = $parse;
                Ok($name {
                    raw: s.to_string(),
                    value: f(s)?,
                })
            }
        }

        impl From<$name> for String {
            fn from(a: $name) -> String {
                a.raw
            }
        }
    };
}

string_arg!(Base, LinkBase, |s| {
    if s == "apex" {
        Ok(LinkBase::Apex)
    } else {
        Ok(LinkBase::Simplex(Simplex::from_str(s)?))
    }
});

string_arg!(SimplexArg, Simplex, |s| Ok(Simplex::from_str(s)?));

#[derive(Clone, Debug)]
pub enum Mode {
    Single,
    Global,
    Local(Simplex),
}

string_arg!(ModeArg, Mode, |s| match s.split_once(':') {
    None if s == "single" => Ok(Mode::Single),
    None if s == "global" => Ok(Mode::Global),
    Some(("local", rho)) => Ok(Mode::Local(Simplex::from_str(rho)?)),
    _ => Err(anyhow!("mode must be single, global or local:RHO")),
});

string_arg!(LaplacianArg, Laplacian, |s| Ok(Laplacian::from_str(s)?));
string_arg!(MethodArg, EigenMethod, |s| Ok(EigenMethod::from_str(s)?));

#[derive(Clone, Debug)]
pub enum Graph {
    Lattice(usize),
    Tree { branching: usize, lumped: bool },
}

string_arg!(GraphSpec, Graph, |s| {
    let parts: Vec<&str> = s.split(':').collect();
    let num = |i: usize| -> anyhow::Result<usize> {
        parts
            .get(i)
            .ok_or_else(|| anyhow!("missing parameter in {s:?}"))?
            .parse()
            .with_context(|| format!("bad number in {s:?}"))
    };
    match parts[0] {
        "lattice" => Ok(Graph::Lattice(num(1)?)),
        "tree" => Ok(Graph::Tree {
            branching: num(1)?,
            lumped: parts.get(2) == Some(&"lumped"),
        }),
        _ => bail!("graph must be lattice:D or tree:B[:lumped]"),
    }
});

string_arg!(Levels, Vec<usize>, |s| {
    let out: Vec<usize> = if let Some((a, b)) = s.split_once("..") {
        let a: usize = a.parse().context("bad level range")?;
        let b: usize = b.parse().context("bad level range")?;
        (a..=b).collect()
    } else if s.contains(',') {
        s.split(',')
            .map(|x| x.trim().parse::<usize>())
            .collect::<Result<_, _>>()
            .context("bad level list")?
    } else {
        match s.parse::<usize>().context("bad level count")? {
            0 => vec![0],
            n => (1..=n).collect(),
        }
    };
    if out.is_empty() || out.windows(2).any(|w| w[0] >= w[1]) {
        bail!("levels must be non-empty and strictly increasing");
    }
    Ok(out)
});
