use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::json;

use simplex_sbp::advection::{
    cfl_search, convergence_point, energy_history, fit_slope, spectrum, spectrum_summary, Advection, CflRow,
    Scheme, SpectrumRow,
};
use simplex_sbp::cubature::{golden_rule, solve_cubature};
use simplex_sbp::operators::{bilinear_accuracy_check, build_operators, verify_sbp, Tolerances};
use simplex_sbp::{Error, Operators, Rule};

const GOLDEN_ENV: &str = "SBP_GOLDEN_DIR";
const SCHEMA_VERSION: u32 = 1;

#[derive(Parser, Debug)]
#[command(name = "sbp", version, about = "Summation-by-parts operators on simplices")]
struct Cli {
    /// Write a JSON run manifest here.
    #[arg(long, global = true)]
    manifest: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(tag = "subcommand", rename_all = "kebab-case")]
enum Cmd {
    /// Print or write a cubature rule.
    Cubature {
        #[arg(long)]
        p: usize,
        #[arg(long, default_value_t = 2)]
        dim: usize,
        /// Solve from scratch instead of loading the shipped rule.
        #[arg(long)]
        solve: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build element operators and write them as JSON.
    BuildOps {
        #[arg(long)]
        p: usize,
        #[arg(long, default_value_t = 2)]
        dim: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check the SBP properties of one operator, or of all eight.
    Verify {
        #[arg(long, required_unless_present = "all")]
        p: Option<usize>,
        #[arg(long, default_value_t = 2)]
        dim: usize,
        #[arg(long)]
        all: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Grid-refinement study of the periodic advection problem.
    Converge {
        #[arg(long, value_parser = parse_scheme)]
        scheme: Scheme,
        #[arg(long)]
        p: usize,
        /// `start:end:xF`, `start:end:+S` or a comma list.
        #[arg(long, default_value = "4:32:x2", value_parser = parse_range)]
        n: MeshSizes,
        /// Fixed CFL number; default is `cfl_fraction` times the searched maximum.
        #[arg(long)]
        cfl: Option<f64>,
        #[arg(long, default_value_t = 0.9)]
        cfl_fraction: f64,
        /// Skip the search and use this maximum.
        #[arg(long)]
        cfl_max: Option<f64>,
        #[arg(long, default_value_t = 1.0)]
        sigma: f64,
        #[arg(long, default_value_t = 1.0)]
        t: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Eigenvalues of the assembled `Q_x + Q_y`.
    Spectrum {
        #[arg(long, value_parser = parse_scheme)]
        scheme: Scheme,
        #[arg(long)]
        p: usize,
        #[arg(long, default_value_t = 12)]
        n: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Energy history `ΔE(t)`.
    Energy {
        #[arg(long, value_parser = parse_scheme)]
        scheme: Scheme,
        #[arg(long)]
        p: usize,
        #[arg(long, default_value_t = 12)]
        n: usize,
        #[arg(long, default_value_t = 0.01)]
        cfl: f64,
        #[arg(long, default_value_t = 2.0)]
        t: f64,
        #[arg(long, default_value_t = 1.0)]
        sigma: f64,
        /// Sample every this many steps.
        #[arg(long, default_value_t = 100)]
        every: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Largest stable CFL number over one period.
    Cfl {
        #[arg(long, value_parser = parse_scheme)]
        scheme: Scheme,
        #[arg(long)]
        p: usize,
        #[arg(long, default_value_t = 32)]
        n: usize,
        #[arg(long, default_value_t = 1.0)]
        sigma: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-run the command recorded in a manifest.
    Replay { file: PathBuf },
}

fn parse_scheme(s: &str) -> Result<Scheme, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Clone, Debug, Serialize)]
#[serde(transparent)]
struct MeshSizes(Vec<usize>);

fn parse_range(s: &str) -> Result<MeshSizes, String> {
    parse_sizes(s).map(MeshSizes)
}

fn parse_sizes(s: &str) -> Result<Vec<usize>, String> {
    let bad = || format!("bad range {s:?}; use start:end:x2, start:end:+4 or 4,8,16");
    if s.contains(',') {
        return s.split(',').map(|v| v.trim().parse().map_err(|_| bad())).collect();
    }
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() == 1 {
        return Ok(vec![parts[0].parse().map_err(|_| bad())?]);
    }
    if parts.len() != 3 {
        return Err(bad());
    }
    let start: usize = parts[0].parse().map_err(|_| bad())?;
    let end: usize = parts[1].parse().map_err(|_| bad())?;
    let step = parts[2].trim();
    let mut out = Vec::new();
    let mut v = start;
    if let Some(f) = step.strip_prefix('x').or_else(|| step.strip_prefix('×')).or_else(|| step.strip_prefix('*')) {
        let f: usize = f.parse().map_err(|_| bad())?;
        if f < 2 || start == 0 {
            return Err(bad());
        }
        while v <= end {
            out.push(v);
            v *= f;
        }
    } else {
        let d: usize = step.trim_start_matches('+').parse().map_err(|_| bad())?;
        if d == 0 {
            return Err(bad());
        }
        while v <= end {
            out.push(v);
            v += d;
        }
    }
    if out.is_empty() {
        return Err(bad());
    }
    Ok(out)
}

/// Failures of a run; an empty list means every asserted tolerance passed.
struct Outcome {
    outputs: Vec<PathBuf>,
    failures: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct RunManifest {
    schema: u32,
    subcommand: String,
    argv: Vec<String>,
    parameters: serde_json::Value,
    outputs: Vec<PathBuf>,
    tool_version: String,
    wall_clock_seconds: f64,
    exit_code: u8,
    failures: Vec<String>,
}

enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidInput(_) | Error::UnsupportedDegree { .. } | Error::UnsupportedDimension(_) => {
                Failure::Usage(e.to_string())
            }
            other => Failure::Runtime(other.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

fn golden_dir() -> Option<PathBuf> {
    std::env::var_os(GOLDEN_ENV).map(PathBuf::from)
}

fn load_rule(p: usize, d: usize) -> Result<Rule, Error> {
    golden_rule(p, d, golden_dir().as_deref())
}

fn load_ops(p: usize, d: usize) -> Result<Operators, Error> {
    build_operators(&load_rule(p, d)?)
}

fn check_degree(p: usize) -> Result<(), Error> {
    if (1..=4).contains(&p) {
        Ok(())
    } else {
        Err(Error::UnsupportedDegree { p })
    }
}

fn write_text(out: &Option<PathBuf>, text: &str, outputs: &mut Vec<PathBuf>) -> Result<(), Failure> {
    match out {
        Some(path) => {
            std::fs::write(path, text)?;
            outputs.push(path.clone());
        }
        None => {
            let mut so = std::io::stdout().lock();
            so.write_all(text.as_bytes())?;
            so.write_all(b"\n")?;
        }
    }
    Ok(())
}

fn write_csv<R: Serialize>(out: &Option<PathBuf>, rows: &[R], outputs: &mut Vec<PathBuf>) -> Result<(), Failure> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Failure::Runtime(e.to_string()))?;
    let text = String::from_utf8(bytes).map_err(|e| Failure::Runtime(e.to_string()))?;
    write_text(out, text.trim_end(), outputs)
}

fn advection(scheme: Scheme, p: usize, n: usize, sigma: f64) -> Result<Advection<f64>, Error> {
    check_degree(p)?;
    if n < 2 {
        return Err(Error::InvalidInput(format!("N must be at least 2, got {n}")));
    }
    Advection::new(&load_ops(p, 2)?, scheme, n, [1.0, 1.0], sigma)
}

fn run(cmd: &Cmd) -> Result<Outcome, Failure> {
    let mut outputs = Vec::new();
    let mut failures = Vec::new();
    match cmd {
        Cmd::Cubature { p, dim, solve, out } => {
            check_degree(*p)?;
            let rule: Rule = if *solve { solve_cubature(*p, *dim)? } else { load_rule(*p, *dim)? };
            eprintln!("d={} p={}: {} nodes, residual {:e}, branch {}", dim, p, rule.len(), rule.residual, rule.branch);
            write_text(out, &rule.to_json()?, &mut outputs)?;
        }
        Cmd::BuildOps { p, dim, out } => {
            check_degree(*p)?;
            let ops = load_ops(*p, *dim)?;
            write_text(out, &ops.to_json()?, &mut outputs)?;
        }
        Cmd::Verify { p, dim, all, out } => {
            let cases: Vec<(usize, usize)> = if *all {
                [2, 3].iter().flat_map(|&d| (1..=4).map(move |p| (p, d))).collect()
            } else {
                let p = p.ok_or_else(|| Failure::Usage("--p is required without --all".into()))?;
                check_degree(p)?;
                vec![(p, *dim)]
            };
            let tol = Tolerances::default();
            let mut reports = Vec::new();
            for (p, d) in cases {
                let ops = load_ops(p, d)?;
                let rep = verify_sbp(&ops);
                let bil = bilinear_accuracy_check(&ops);
                let mut f = rep.failures(&tol);
                if !(bil.max() <= 1e-10) {
                    f.push(format!("bilinear = {:e} > 1e-10", bil.max()));
                }
                eprintln!("d={d} p={p}: {}", if f.is_empty() { "ok".to_string() } else { f.join("; ") });
                failures.extend(f.iter().map(|x| format!("d={d} p={p}: {x}")));
                reports.push(json!({ "report": rep, "bilinear": bil, "failures": f }));
            }
            write_text(out, &serde_json::to_string_pretty(&reports)?, &mut outputs)?;
        }
        Cmd::Converge { scheme, p, n, cfl, cfl_fraction, cfl_max, sigma, t, out } => {
            if !(*cfl_fraction > 0.0) || !(*t > 0.0) {
                return Err(Failure::Usage("CFL fraction and final time must be positive".into()));
            }
            let cfl = match (cfl, cfl_max) {
                (Some(c), _) => *c,
                (None, Some(m)) => cfl_fraction * m,
                (None, None) => {
                    let prob = advection(*scheme, *p, 32, *sigma)?;
                    let res = cfl_search(&prob, 0.01, 4.0, 0.01, 1.0);
                    eprintln!("CFL_max({scheme}, p={p}, N=32) = {:.3}", res.cfl_max);
                    cfl_fraction * res.cfl_max
                }
            };
            if !(cfl > 0.0) {
                return Err(Failure::Usage(format!("CFL must be positive, got {cfl}")));
            }
            let mut rows = Vec::new();
            for &nn in &n.0 {
                let prob = advection(*scheme, *p, nn, *sigma)?;
                let row = convergence_point(&prob, cfl, *t)?;
                eprintln!("N={nn}: error {:.4e}", row.normalized_error);
                rows.push(row);
            }
            if rows.len() >= 2 {
                let tail = &rows[rows.len().saturating_sub(3)..];
                let h: Vec<f64> = tail.iter().map(|r| r.h).collect();
                let e: Vec<f64> = tail.iter().map(|r| r.normalized_error).collect();
                eprintln!("fitted slope (last {} points): {:.3}", tail.len(), fit_slope(&h, &e));
            }
            write_csv(out, &rows, &mut outputs)?;
        }
        Cmd::Spectrum { scheme, p, n, out } => {
            if *scheme == Scheme::Dsbp {
                return Err(Failure::Usage("spectra are computed for the assembled schemes (csbp, se)".into()));
            }
            let prob = advection(*scheme, *p, *n, 1.0)?;
            let q = prob.global_q_sum().expect("assembled scheme");
            let ev = spectrum(q)?;
            let (abs_re, max_re, rad) = spectrum_summary(&ev);
            eprintln!("{scheme} p={p} N={n}: {} eigenvalues, max|Re| {abs_re:.3e}, max Re {max_re:.3e}, radius {rad:.3e}", ev.len());
            if *scheme == Scheme::Csbp && !(abs_re <= 1e-10 * rad) {
                failures.push(format!("max|Re λ| = {abs_re:e} > 1e-10·{rad:e}"));
            }
            let rows: Vec<SpectrumRow> = ev.iter().map(|z| SpectrumRow { re: z.re, im: z.im }).collect();
            write_csv(out, &rows, &mut outputs)?;
        }
        Cmd::Energy { scheme, p, n, cfl, t, sigma, every, out } => {
            if !(*cfl > 0.0) || !(*t > 0.0) {
                return Err(Failure::Usage("CFL and final time must be positive".into()));
            }
            let prob = advection(*scheme, *p, *n, *sigma)?;
            let rows = energy_history(&prob, *cfl, *t, *every)?;
            let last = rows.last().map_or(0.0, |r| r.delta_e);
            eprintln!("{scheme} p={p} N={n}: ΔE(T) = {last:.3e}");
            if *scheme != Scheme::Se && *sigma >= 0.5 && !(last <= 1e-8) {
                failures.push(format!("energy grew: ΔE = {last:e}"));
            }
            write_csv(out, &rows, &mut outputs)?;
        }
        Cmd::Cfl { scheme, p, n, sigma, out } => {
            let prob = advection(*scheme, *p, *n, *sigma)?;
            let res = cfl_search(&prob, 0.01, 4.0, 0.01, 1.0);
            eprintln!("{scheme} p={p} N={n}: CFL_max = {:.3} ({} runs)", res.cfl_max, res.evaluations);
            if res.flagged {
                failures.push("no stable CFL number in [0.01, 4]".into());
            }
            write_csv(out, &[CflRow { scheme: *scheme, p: *p, cfl_max: res.cfl_max }], &mut outputs)?;
        }
        Cmd::Replay { file } => {
            let text = std::fs::read_to_string(file)
                .map_err(|e| Failure::Usage(format!("cannot read manifest {}: {e}", file.display())))?;
            let m: RunManifest = serde_json::from_str(&text)?;
            let cli = Cli::try_parse_from(&m.argv).map_err(|e| Failure::Usage(e.to_string()))?;
            if matches!(cli.cmd, Cmd::Replay { .. }) {
                return Err(Failure::Usage("a manifest cannot replay another replay".into()));
            }
            return run(&cli.cmd);
        }
    }
    Ok(Outcome { outputs, failures })
}

fn subcommand_name(cmd: &Cmd) -> String {
    serde_json::to_value(cmd)
        .ok()
        .and_then(|v| v.get("subcommand").and_then(|s| s.as_str()).map(str::to_string))
        .unwrap_or_default()
}

fn write_manifest(path: &Path, cli: &Cli, argv: Vec<String>, outcome: &Outcome, secs: f64, code: u8) -> std::io::Result<()> {
    // The recorded argv omits the manifest flag so a replay does not overwrite it.
    let mut clean = Vec::with_capacity(argv.len());
    let mut it = argv.into_iter();
    while let Some(a) = it.next() {
        if a == "--manifest" {
            it.next();
        } else if !a.starts_with("--manifest=") {
            clean.push(a);
        }
    }
    let m = RunManifest {
        schema: SCHEMA_VERSION,
        subcommand: subcommand_name(&cli.cmd),
        argv: clean,
        parameters: serde_json::to_value(&cli.cmd).unwrap_or_default(),
        outputs: outcome.outputs.clone(),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        wall_clock_seconds: secs,
        exit_code: code,
        failures: outcome.failures.clone(),
    };
    std::fs::write(path, serde_json::to_string_pretty(&m)?)
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let start = Instant::now();
    let (code, outcome) = match run(&cli.cmd) {
        Ok(o) if o.failures.is_empty() => (0, o),
        Ok(o) => {
            for f in &o.failures {
                eprintln!("FAIL {f}");
            }
            (1, o)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            (2, Outcome { outputs: Vec::new(), failures: vec![msg] })
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            (1, Outcome { outputs: Vec::new(), failures: vec![msg] })
        }
    };
    if let Some(path) = &cli.manifest {
        if let Err(e) = write_manifest(path, &cli, argv, &outcome, start.elapsed().as_secs_f64(), code) {
            eprintln!("error: cannot write manifest: {e}");
            return ExitCode::from(1);
        }
    }
    ExitCode::from(code)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranges() {
        assert_eq!(parse_sizes("4:32:x2").unwrap(), vec![4, 8, 16, 32]);
        assert_eq!(parse_sizes("4:32:×2").unwrap(), vec![4, 8, 16, 32]);
        assert_eq!(parse_sizes("4:16:+4").unwrap(), vec![4, 8, 12, 16]);
        assert_eq!(parse_sizes("6,9").unwrap(), vec![6, 9]);
        assert_eq!(parse_sizes("12").unwrap(), vec![12]);
        assert!(parse_sizes("4:32:x1").is_err());
        assert!(parse_sizes("32:4:x2").is_err());
        assert!(parse_sizes("a:b").is_err());
    }

    #[test]
    fn manifest_name() {
        let cli = Cli::try_parse_from(["sbp", "build-ops", "--p", "2"]).unwrap();
        assert_eq!(subcommand_name(&cli.cmd), "build-ops");
    }
}
