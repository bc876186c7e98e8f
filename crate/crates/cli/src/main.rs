mod args;

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::Parser;
use linkhodge::defect::{
    check_complex_property, defect_sequence, local_balancedness_in, recurrent_bound_check,
    tprime_sequence, PropertyVerdict, TPrimeMode,
};
use linkhodge::hodge::{
    betti_numbers, harmonic_eigenform_check, hodge_decompose, spectrum, supersymmetry_check,
    EigenMethod,
};
use linkhodge::io::{read_wsc, write_wsc_with_meta};
use linkhodge::links::link_in;
use linkhodge::operators::{assemble, chain_defect, random_cochain};
use linkhodge::recurrence::{
    classify, classify_components, combine_verdicts, mc_return_probability, ClassificationReport,
    GraphExhaustion, GraphWalk, LatticeExhaustion, LatticeWalk, LinkExhaustion, Policy,
    TreeExhaustion, Verdict,
};
use linkhodge::{Error, Execution, Truncation};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use args::{Cli, Command, Graph, Mode, Source};

/// Usage errors, following the BSD `EX_USAGE` convention.
const EXIT_USAGE: u8 = 64;

enum Outcome {
    Done,
    Invalid,
    Undetermined,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::Invalid) => ExitCode::from(1),
        Ok(Outcome::Undetermined) => ExitCode::from(if cli.strict { 2 } else { 0 }),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

struct Ctx<'a> {
    cli: &'a Cli,
    exec: Execution,
}

impl Ctx<'_> {
    fn config(&self) -> Value {
        json!({
            "tool": "linkhodge",
            "version": env!("CARGO_PKG_VERSION"),
            "args": self.cli,
        })
    }

    fn emit<T: Serialize>(&self, result: &T) -> Result<()> {
        let doc = json!({ "config": self.config(), "result": result });
        let text = serde_json::to_string_pretty(&doc)? + "\n";
        match &self.cli.output {
            Some(p) => {
                std::fs::write(p, text).with_context(|| format!("writing {}", p.display()))?
            }
            None => std::io::stdout().write_all(text.as_bytes())?,
        }
        Ok(())
    }

    /// CSV with the config echo as a leading `#` comment.
    fn emit_csv(&self, body: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
        let Some(path) = &self.cli.csv else {
            return Ok(());
        };
        let mut out = BufWriter::new(
            File::create(path).with_context(|| format!("creating {}", path.display()))?,
        );
        writeln!(out, "# {}", serde_json::to_string(&self.config())?)?;
        body(&mut out)?;
        out.flush()?;
        Ok(())
    }

    fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.cli.seed)
    }
}

fn run(cli: &Cli) -> Result<Outcome> {
    if cli.deterministic {
        linkhodge::par::configure_threads(1);
    } else if let Some(t) = cli.threads {
        linkhodge::par::configure_threads(t);
    }
    let ctx = Ctx {
        cli,
        exec: if cli.deterministic {
            Execution::Sequential
        } else {
            Execution::default()
        },
    };
    match &cli.command {
        Command::Gen(a) => gen(&ctx, a),
        Command::Validate(a) => validate(&ctx, a),
        Command::Links(a) => links(&ctx, a),
        Command::ClassifyLink(a) => classify_link(&ctx, a),
        Command::Defect(a) => defect(&ctx, a),
        Command::Tprime(a) => tprime(&ctx, a),
        Command::Hodge(a) => hodge(&ctx, a),
        Command::Spectrum(a) => spectrum_cmd(&ctx, a),
        Command::Walk(a) => walk(&ctx, a),
    }
}

fn load(src: &Source) -> Result<Truncation> {
    let trunc = match (&src.family, &src.input) {
        (Some(f), _) => {
            let level = if f.is_finite() { 0 } else { src.level };
            f.generate(level)?
        }
        (None, Some(p)) => {
            let file = File::open(p).with_context(|| format!("opening {}", p.display()))?;
            Truncation::from_finite(read_wsc(BufReader::new(file))?)
        }
        (None, None) => return Err(anyhow!("either --family or --input is required")),
    };
    Ok(match src.empty_weight {
        Some(w) => trunc.with_empty(w)?,
        None => trunc,
    })
}

fn gen(ctx: &Ctx, a: &args::GenArgs) -> Result<Outcome> {
    let level = if a.family.is_finite() { 0 } else { a.level };
    let mut trunc = a.family.generate(level)?;
    if let Some(w) = a.empty_weight {
        trunc = trunc.with_empty(w)?;
    }
    let meta = Some(ctx.config());
    match &ctx.cli.output {
        Some(p) => {
            let file = File::create(p).with_context(|| format!("creating {}", p.display()))?;
            let mut out = BufWriter::new(file);
            write_wsc_with_meta(&trunc.complex, meta, &mut out)?;
            out.flush()?;
        }
        None => write_wsc_with_meta(&trunc.complex, meta, std::io::stdout().lock())?,
    }
    Ok(Outcome::Done)
}

#[derive(Serialize)]
struct Validation {
    valid: bool,
    counts: Vec<(isize, usize)>,
    chain_nonzeros: Vec<(isize, usize)>,
    max_transpose_error: f64,
    error: Option<String>,
}

fn validate(ctx: &Ctx, a: &args::ValidateArgs) -> Result<Outcome> {
    let file = File::open(&a.file).with_context(|| format!("opening {}", a.file.display()))?;
    let complex = match read_wsc(BufReader::new(file)) {
        Ok(c) => c,
        Err(e) => {
            ctx.emit(&Validation {
                valid: false,
                counts: vec![],
                chain_nonzeros: vec![],
                max_transpose_error: f64::NAN,
                error: Some(e.to_string()),
            })?;
            return Ok(Outcome::Invalid);
        }
    };
    let lo = complex.min_degree();
    let hi = complex.top_dimension();
    let ops = (lo..=hi)
        .map(|k| assemble(&complex, k, ctx.exec))
        .collect::<linkhodge::Result<Vec<_>>>()?;
    let chain_nonzeros = ops
        .windows(2)
        .map(|w| Ok((w[0].degree, chain_defect(&w[0], &w[1])?)))
        .collect::<Result<Vec<_>>>()?;
    let max_transpose_error = ops
        .iter()
        .map(|o| o.weighted_transpose_error(&complex))
        .fold(0.0, f64::max);
    let valid = chain_nonzeros.iter().all(|&(_, n)| n == 0) && max_transpose_error <= 1e-12;
    ctx.emit(&Validation {
        valid,
        counts: (lo..=hi).map(|k| (k, complex.count(k))).collect(),
        chain_nonzeros,
        max_transpose_error,
        error: None,
    })?;
    Ok(if valid {
        Outcome::Done
    } else {
        Outcome::Invalid
    })
}

fn rho_of(
    trunc: &Truncation,
    base: &linkhodge::recurrence::LinkBase,
) -> Result<linkhodge::Simplex> {
    use linkhodge::recurrence::LinkBase;
    match base {
        LinkBase::Apex => trunc
            .apex()
            .cloned()
            .ok_or_else(|| anyhow!("this complex has no apex")),
        LinkBase::Simplex(s) => Ok(s.clone()),
    }
}

fn links(ctx: &Ctx, a: &args::LinksArgs) -> Result<Outcome> {
    let trunc = load(&a.source)?;
    let rho = rho_of(&trunc, &a.rho.value)?;
    let link = link_in(&trunc, &rho)?;
    let balance = local_balancedness_in(&trunc, &rho)?;
    ctx.emit(&json!({
        "rho": rho,
        "link": link.to_json(),
        "components": link.components(),
        "balancedness": balance,
    }))?;
    Ok(Outcome::Done)
}

fn policy(tol: f64) -> Policy {
    Policy {
        solver_tol: tol,
        ..Policy::default()
    }
}

fn classify_link(ctx: &Ctx, a: &args::ClassifyArgs) -> Result<Outcome> {
    let levels = &a.levels.value;
    let policy = policy(a.tol);
    let exh: Box<dyn GraphExhaustion> = match (&a.graph, &a.family) {
        (Some(g), _) => match g.value {
            Graph::Lattice(d) => Box::new(LatticeExhaustion::new(d)),
            Graph::Tree { branching, lumped } => Box::new(TreeExhaustion { branching, lumped }),
        },
        (None, Some(f)) => Box::new(LinkExhaustion {
            family: f.clone(),
            base: a.rho.value.clone(),
        }),
        (None, None) => return Err(anyhow!("either --family or --graph is required")),
    };
    let mut reports: Vec<ClassificationReport> = if a.graph.is_some() {
        vec![classify(exh.as_ref(), levels, None, &policy)?]
    } else {
        classify_components(exh.as_ref(), levels, &policy)?
    };
    if let Some(walks) = a.mc_walks {
        let last = *levels.last().expect("non-empty");
        for r in &mut reports {
            let space = GraphWalk::new(exh.graph(last)?, r.root, None)?;
            let est = mc_return_probability(&space, walks, a.mc_max_steps, ctx.cli.seed, ctx.exec);
            r.mc_return_estimate = Some(est);
        }
    }
    let verdict = combine_verdicts(reports.iter().map(|r| r.verdict));
    ctx.emit_csv(|out| {
        writeln!(out, "component,level,resistance,capacity")?;
        for (c, r) in reports.iter().enumerate() {
            for (i, n) in r.levels.iter().enumerate() {
                writeln!(
                    out,
                    "{c},{n},{:e},{:e}",
                    r.resistance_seq[i], r.capacity_seq[i]
                )?;
            }
        }
        Ok(())
    })?;
    ctx.emit(&json!({ "verdict": verdict, "components": reports }))?;
    Ok(match verdict {
        Verdict::Undetermined => Outcome::Undetermined,
        _ => Outcome::Done,
    })
}

fn defect(ctx: &Ctx, a: &args::DefectArgs) -> Result<Outcome> {
    let levels = &a.levels.value;
    let report = defect_sequence(&a.family, &a.rho.value, a.v0, levels, a.tol, ctx.exec)?;
    let bounds = match a.bound_forms {
        Some(forms) => Some(
            levels
                .iter()
                .map(|&n| {
                    let trunc = a.family.generate(n)?;
                    let rho = rho_of(&trunc, &a.rho.value)?;
                    Ok(recurrent_bound_check(
                        &trunc,
                        &rho,
                        forms,
                        ctx.cli.seed,
                        a.tol,
                    )?)
                })
                .collect::<Result<Vec<_>>>()?,
        ),
        None => None,
    };
    let property = if a.check_property {
        Some(check_complex_property(
            &a.family,
            &a.rho.value,
            levels,
            &policy(a.tol),
            ctx.exec,
        )?)
    } else {
        None
    };
    ctx.emit_csv(|out| {
        writeln!(out, "level,defect,full_defect,witness_norm,link_energy")?;
        for i in 0..report.levels.len() {
            writeln!(
                out,
                "{},{:e},{:e},{:e},{:e}",
                report.levels[i],
                report.defects[i],
                report.full_defects[i],
                report.witness_norms[i],
                report.link_energies[i]
            )?;
        }
        Ok(())
    })?;
    let undetermined = property
        .as_ref()
        .is_some_and(|p| p.verdict == PropertyVerdict::Undetermined);
    ctx.emit(&json!({ "witness": report, "bounds": bounds, "property": property }))?;
    Ok(if undetermined {
        Outcome::Undetermined
    } else {
        Outcome::Done
    })
}

fn tprime(ctx: &Ctx, a: &args::TPrimeArgs) -> Result<Outcome> {
    let mode = match &a.mode.value {
        Mode::Single => TPrimeMode::Single,
        Mode::Global => TPrimeMode::Global,
        Mode::Local(r) => TPrimeMode::Local(r.clone()),
    };
    let result = tprime_sequence(&a.family, &a.sigma.value, &mode, &a.levels.value, a.tol);
    match result {
        Ok(report) => {
            ctx.emit_csv(|out| Ok(report.write_csv(out)?))?;
            ctx.emit(&json!({ "solvable": true, "report": report }))?;
        }
        Err(Error::Singular { kernel_projection }) => {
            ctx.emit(&json!({ "solvable": false, "kernel_projection": kernel_projection }))?;
        }
        Err(e) => return Err(e.into()),
    }
    Ok(Outcome::Done)
}

#[derive(Serialize, Default)]
struct SplitStats {
    degree: isize,
    samples: usize,
    max_orthogonality: f64,
    max_reconstruction: f64,
    max_harmonic_residual: f64,
}

fn hodge(ctx: &Ctx, a: &args::HodgeArgs) -> Result<Outcome> {
    let trunc = load(&a.source)?;
    let c = &trunc.complex;
    let betti = betti_numbers(c)?;
    let mut rng = ctx.rng();
    let mut splits = Vec::new();
    for k in c.min_degree()..=c.top_dimension() {
        let mut st = SplitStats {
            degree: k,
            samples: a.samples,
            ..Default::default()
        };
        for _ in 0..a.samples {
            let f = random_cochain(c, k, &mut rng, true);
            let sp = hodge_decompose(c, &f, a.tol)?;
            st.max_orthogonality = st.max_orthogonality.max(sp.orthogonality);
            st.max_reconstruction = st.max_reconstruction.max(sp.reconstruction);
            st.max_harmonic_residual = st.max_harmonic_residual.max(sp.harmonic_residual);
        }
        splits.push(st);
    }
    let pairing = (c.min_degree()..c.top_dimension())
        .map(|k| supersymmetry_check(c, k, EigenMethod::Auto))
        .collect::<linkhodge::Result<Vec<_>>>()?;
    let mut eigen_max = 0.0f64;
    let mut degenerate = 0usize;
    for (s, _) in c.iter() {
        match harmonic_eigenform_check(c, s) {
            Ok(r) => {
                eigen_max = eigen_max
                    .max(r.up_residual)
                    .max(r.down_residual.unwrap_or(0.0))
            }
            Err(Error::NoCoface(_)) => degenerate += 1,
            Err(e) => return Err(e.into()),
        }
    }
    ctx.emit(&json!({
        "betti": betti,
        "splits": splits,
        "pairing": pairing,
        "eigenforms": { "max_residual": eigen_max, "without_coface": degenerate },
    }))?;
    Ok(Outcome::Done)
}

fn spectrum_cmd(ctx: &Ctx, a: &args::SpectrumArgs) -> Result<Outcome> {
    let trunc = load(&a.source)?;
    let s = spectrum(
        &trunc.complex,
        a.tag.value,
        a.degree,
        a.count,
        a.method.value,
        a.vectors,
    )?;
    ctx.emit(&s)?;
    Ok(Outcome::Done)
}

fn walk(ctx: &Ctx, a: &args::WalkArgs) -> Result<Outcome> {
    let est = match (a.lattice, &a.family) {
        (Some(d), _) => {
            if !(1..=3).contains(&d) {
                return Err(anyhow!("lattice walks support dimensions 1 to 3"));
            }
            let space = LatticeWalk {
                dim: d,
                escape_radius: a.escape_radius,
            };
            mc_return_probability(&space, a.walks, a.max_steps, ctx.cli.seed, ctx.exec)
        }
        (None, Some(f)) => {
            let exh = LinkExhaustion {
                family: f.clone(),
                base: a.rho.value.clone(),
            };
            let g = exh.graph(a.level)?;
            let start = g
                .default_root()
                .ok_or_else(|| anyhow!("every link vertex is grounded"))?;
            let space = GraphWalk::new(g, start, a.radius)?;
            mc_return_probability(&space, a.walks, a.max_steps, ctx.cli.seed, ctx.exec)
        }
        (None, None) => return Err(anyhow!("either --lattice or --family is required")),
    };
    ctx.emit(&est)?;
    Ok(Outcome::Done)
}
