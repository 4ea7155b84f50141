//! Command-line front end.
//!
//! Every subcommand emits either CSV (default) or JSON. Outputs are
//! self-describing: CSV starts with `#`-comment manifest lines echoing the
//! exact parameters, JSON carries a `manifest` object. Reruns of the same
//! manifest are byte-identical (seeded subcommands included; there are no
//! timestamps). Floats are printed with 12 significant digits, '.' decimal
//! point, no separators.
//!
//! Exit codes: 0 success, 2 domain error, 3 singularity, 4 fit/bracket
//! failure, 5 failed validation checks.

use crate::asymptotics::{
    correction_c1, correction_c2_fit, tail_bound, weighted_factorial_tail, LimitReport,
};
use crate::distribution::{exact_distribution, limit_distribution, tail_law};
use crate::exact::{second_moment_rounds, CandidacyParam};
use crate::optimizer::{default_nu, find_t_star, scan_segment, SegmentKind, SegmentSpec};
use crate::simulator::{simulate, SimConfig};
use crate::util::fmt_sig;
use crate::validation::run_acceptance;
use crate::{Error, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Map, Value};
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::PathBuf;

#[derive(Debug, Parser)]
#[command(
    name = "ring-analyzer",
    about = "Round/bit complexity of probabilistic leader election on anonymous rings",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub output: OutputOpts,
}

#[derive(Debug, Args)]
pub struct OutputOpts {
    /// Output format (default: csv; simulate defaults to json).
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// Output path (stdout when omitted).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Exact moments M(n,t), M2(n,t), var at one point.
    Moments {
        #[arg(long)]
        n: u64,
        #[arg(long, default_value_t = 1.0)]
        t: f64,
    },
    /// The full panel of limit constants with error bounds.
    Limits {
        /// Truncation of the limit sums.
        #[arg(long, default_value_t = 30)]
        nu: u64,
    },
    /// Distribution of the round count: P(n,j) or P(inf,j).
    Distribution {
        /// Ring size, or "inf" for the limit table.
        #[arg(long)]
        n: String,
        #[arg(long = "j-max", default_value_t = 40)]
        j_max: usize,
        #[arg(long, default_value_t = 1.0)]
        t: f64,
        /// Truncation of the limit sums (inf table only).
        #[arg(long, default_value_t = 30)]
        nu: u64,
        /// Add the geometric tail approximation column (inf table only).
        #[arg(long)]
        overlay: bool,
    },
    /// Convergence data: n, M(n)−M(inf)−C1/n, C2/n².
    Convergence {
        #[arg(long = "n-lo")]
        n_lo: u64,
        #[arg(long = "n-hi")]
        n_hi: u64,
    },
    /// Locate the minimum of M(inf,t) on (0,2).
    Optimize {
        #[arg(long, default_value_t = 1e-8)]
        tolerance: f64,
    },
    /// Sample M(inf,t) and M'(inf,t) over a segment.
    Scan {
        /// Segment: "open02", "int2to3", or "xi:<integer ≥ 3>".
        #[arg(long, default_value = "open02")]
        segment: String,
        #[arg(long, default_value_t = 0.05)]
        step: f64,
        /// Truncation override (defaults to max(30, ceil(t)+25)).
        #[arg(long)]
        nu: Option<u64>,
    },
    /// Monte Carlo simulation of the protocol (JSON report).
    Simulate {
        #[arg(long)]
        n: u64,
        #[arg(long, default_value_t = 1.0)]
        t: f64,
        #[arg(long, default_value_t = 100_000)]
        trials: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long = "j-max", default_value_t = 40)]
        j_max: usize,
        /// Segment convention, required for t ≥ 2: "int2to3" or "xi".
        #[arg(long)]
        segment: Option<String>,
    },
    /// Run the full cross-module consistency suite.
    Validate,
}

/// Rendered output plus the manifest that produced it.
struct Emission {
    manifest: Vec<(String, String)>,
    /// CSV header and rows (also the JSON row source).
    header: Vec<&'static str>,
    rows: Vec<Vec<String>>,
    /// JSON-specific payload overriding the tabular rendering, if any.
    json_override: Option<Value>,
}

impl Emission {
    fn table(
        manifest: Vec<(String, String)>,
        header: Vec<&'static str>,
        rows: Vec<Vec<String>>,
    ) -> Self {
        Self {
            manifest,
            header,
            rows,
            json_override: None,
        }
    }

    fn render(&self, format: Format) -> String {
        match format {
            Format::Csv => {
                let mut out = String::new();
                for (k, v) in &self.manifest {
                    writeln!(out, "# {k}={v}").unwrap();
                }
                writeln!(out, "{}", self.header.join(",")).unwrap();
                for row in &self.rows {
                    writeln!(out, "{}", row.join(",")).unwrap();
                }
                out
            }
            Format::Json => {
                let mut manifest = Map::new();
                for (k, v) in &self.manifest {
                    manifest.insert(k.clone(), Value::String(v.clone()));
                }
                let body = if let Some(v) = &self.json_override {
                    v.clone()
                } else {
                    let rows: Vec<Value> = self
                        .rows
                        .iter()
                        .map(|row| {
                            let mut obj = Map::new();
                            for (name, value) in self.header.iter().zip(row) {
                                obj.insert(name.to_string(), Value::String(value.clone()));
                            }
                            Value::Object(obj)
                        })
                        .collect();
                    Value::Array(rows)
                };
                let doc = json!({ "manifest": Value::Object(manifest), "data": body });
                let mut s = serde_json::to_string_pretty(&doc).expect("serializable");
                s.push('\n');
                s
            }
        }
    }
}

fn f(x: f64) -> String {
    fmt_sig(x, 12)
}

fn parse_segment(s: &str) -> Result<SegmentSpec> {
    match s {
        "open02" => Ok(SegmentSpec::open02()),
        "int2to3" | "2-3" => Ok(SegmentSpec::int2to3()),
        other => {
            if let Some(xi) = other.strip_prefix("xi:") {
                let xi: u32 = xi
                    .parse()
                    .map_err(|_| Error::Domain(format!("bad segment ξ in {other:?}")))?;
                SegmentSpec::general(xi)
            } else {
                Err(Error::Domain(format!(
                    "unknown segment {other:?} (expected open02, int2to3 or xi:<k>)"
                )))
            }
        }
    }
}

fn parse_segment_kind(s: &str) -> Result<SegmentKind> {
    Ok(parse_segment(s)?.kind)
}

fn cmd_moments(n: u64, t: f64) -> Result<Emission> {
    let m = second_moment_rounds(n, CandidacyParam::new(t)?)?;
    let manifest = vec![
        ("subcommand".into(), "moments".into()),
        ("n".into(), n.to_string()),
        ("t".into(), f(t)),
    ];
    let mut rows = vec![
        vec!["mean".into(), f(m.mean)],
        vec!["second_moment".into(), f(m.second_moment)],
        vec!["variance".into(), f(m.variance)],
    ];
    if m.variance_clamped {
        rows.push(vec!["variance_clamped".into(), "true".into()]);
    }
    Ok(Emission::table(manifest, vec!["quantity", "value"], rows))
}

fn cmd_limits(nu: u64) -> Result<Emission> {
    let report = LimitReport::compute(nu);
    let law = tail_law(15)?;
    let law_hi = tail_law(25)?;
    let c2 = correction_c2_fit(250, 300)?;
    let tb = tail_bound(nu);
    // sup M2(k) ≤ M2(inf) < 9 bounds the second-moment tail; the variance
    // combines both sums, bounded by 25·tb with slack
    let m2_bound = 9.0 * tb;
    let var_bound = 25.0 * tb;
    // C1 summand carries a k(k−3) weight: tail of Σ k²/k! with constants
    let e1 = (-1.0f64).exp();
    let c1_bound =
        weighted_factorial_tail(nu, 2) * std::f64::consts::E * e1 / (2.0 * (1.0 - e1) * (1.0 - e1));
    let rho_bound = (law.rho - law_hi.rho).abs().max(f64::EPSILON);
    let coef_bound = 2.0 * rho_bound / (1.0 - 2.0 * e1);
    let manifest = vec![
        ("subcommand".into(), "limits".into()),
        ("nu".into(), nu.to_string()),
    ];
    let rows = vec![
        vec!["M_inf".into(), f(report.m_inf), f(tb)],
        vec!["M2_inf".into(), f(report.m2_inf), f(m2_bound)],
        vec!["var_inf".into(), f(report.var_inf), f(var_bound)],
        vec!["C1".into(), f(correction_c1(nu.max(3))), f(c1_bound)],
        vec!["C2_fit".into(), f(c2.value), f(c2.spread)],
        vec!["rho".into(), f(law.rho), f(rho_bound)],
        vec!["coef".into(), f(law.coefficient), f(coef_bound)],
    ];
    Ok(Emission::table(
        manifest,
        vec!["name", "value", "error_bound"],
        rows,
    ))
}

fn cmd_distribution(n: &str, j_max: usize, t: f64, nu: u64, overlay: bool) -> Result<Emission> {
    let manifest = vec![
        ("subcommand".into(), "distribution".into()),
        ("n".into(), n.to_string()),
        ("j_max".into(), j_max.to_string()),
        ("t".into(), f(t)),
        ("nu".into(), nu.to_string()),
        ("overlay".into(), overlay.to_string()),
    ];
    if n == "inf" {
        let d = limit_distribution(j_max, nu);
        let coef = tail_law(15)?.coefficient;
        let mut rows = Vec::with_capacity(j_max);
        for j in 1..=j_max {
            let mut row = vec![j.to_string(), f(d.prob(j))];
            if overlay {
                row.push(f(coef * 0.5f64.powi(j as i32)));
            }
            rows.push(row);
        }
        let header = if overlay {
            vec!["j", "P", "approx"]
        } else {
            vec!["j", "P"]
        };
        Ok(Emission::table(manifest, header, rows))
    } else {
        let n: u64 = n
            .parse()
            .map_err(|_| Error::Domain(format!("--n must be an integer or \"inf\", got {n:?}")))?;
        if overlay {
            return Err(Error::Domain(
                "--overlay applies to the inf table only".into(),
            ));
        }
        let d = exact_distribution(n, j_max, t)?;
        let rows = (1..=j_max)
            .map(|j| vec![j.to_string(), f(d.prob(j))])
            .collect();
        Ok(Emission::table(manifest, vec!["j", "P"], rows))
    }
}

fn cmd_convergence(n_lo: u64, n_hi: u64) -> Result<Emission> {
    if n_lo < 1 || n_hi < n_lo {
        return Err(Error::Domain(format!(
            "need 1 ≤ n_lo ≤ n_hi, got [{n_lo}, {n_hi}]"
        )));
    }
    let manifest = vec![
        ("subcommand".into(), "convergence".into()),
        ("n_lo".into(), n_lo.to_string()),
        ("n_hi".into(), n_hi.to_string()),
    ];
    let header = vec!["n", "gap", "c2_over_n2"];
    if n_hi < 3 {
        return Ok(Emission::table(manifest, header, Vec::new()));
    }
    let report = LimitReport::compute(30);
    let mean = crate::exact::mean_table(1.0, n_hi, crate::exact::BaseConvention::Protocol)?;
    let rows = (n_lo.max(2)..=n_hi)
        .map(|n| {
            let nf = n as f64;
            let gap = mean[n as usize] - report.m_inf - report.c1 / nf;
            vec![n.to_string(), f(gap), f(report.c2 / (nf * nf))]
        })
        .collect();
    Ok(Emission::table(manifest, header, rows))
}

fn cmd_optimize(tolerance: f64) -> Result<Emission> {
    let ext = find_t_star(tolerance)?;
    let m1 = crate::optimizer::limit_mean_t(1.0, 30, &SegmentSpec::open02())?;
    let gain_pct = 100.0 * (m1 - ext.m_star) / m1;
    let manifest = vec![
        ("subcommand".into(), "optimize".into()),
        ("tolerance".into(), f(tolerance)),
    ];
    let rows = vec![
        vec!["t_star".into(), f(ext.t_star)],
        vec!["m_star".into(), f(ext.m_star)],
        vec!["gain_percent".into(), f(gain_pct)],
    ];
    Ok(Emission::table(manifest, vec!["quantity", "value"], rows))
}

fn cmd_scan(segment: &str, step: f64, nu: Option<u64>) -> Result<Emission> {
    let seg = parse_segment(segment)?;
    let nu = nu.unwrap_or_else(|| default_nu(seg.hi));
    let scan = scan_segment(&seg, step, nu)?;
    let mut manifest = vec![
        ("subcommand".into(), "scan".into()),
        ("segment".into(), segment.to_string()),
        ("step".into(), f(step)),
        ("nu".into(), nu.to_string()),
        ("convexity_ok".into(), scan.convexity_ok.to_string()),
    ];
    if let Some(ext) = &scan.extremum {
        manifest.push(("t_star".into(), f(ext.t_star)));
        manifest.push(("m_star".into(), f(ext.m_star)));
    }
    if !scan.gaps.is_empty() {
        manifest.push((
            "gaps".into(),
            scan.gaps
                .iter()
                .map(|(t, _)| f(*t))
                .collect::<Vec<_>>()
                .join(";"),
        ));
    }
    let rows = scan
        .samples
        .iter()
        .map(|s| vec![f(s.t), f(s.m_inf_t), f(s.m_prime_t)])
        .collect();
    Ok(Emission::table(
        manifest,
        vec!["t", "m_inf_t", "m_prime_t"],
        rows,
    ))
}

fn cmd_simulate(
    n: u64,
    t: f64,
    trials: u64,
    seed: u64,
    j_max: usize,
    segment: Option<&str>,
) -> Result<Emission> {
    let segment = segment.map(parse_segment_kind).transpose()?;
    let config = SimConfig {
        ring_size: n,
        t,
        trials,
        master_seed: seed,
        j_max,
        segment,
    };
    let report = simulate(&config)?;
    let manifest = vec![
        ("subcommand".into(), "simulate".into()),
        ("n".into(), n.to_string()),
        ("t".into(), f(t)),
        ("trials".into(), trials.to_string()),
        ("seed".into(), seed.to_string()),
        ("j_max".into(), j_max.to_string()),
        (
            "segment".into(),
            segment.map_or("-".into(), |s| format!("{s:?}")),
        ),
        ("rng".into(), report.rng_algorithm.to_string()),
    ];
    // 12-significant-digit decimal strings for the statistics
    let hist: Vec<Value> = report
        .round_histogram
        .iter()
        .map(|&p| Value::String(f(p)))
        .collect();
    let body = json!({
        "trials_run": report.trials_run,
        "mean_rounds": f(report.mean_rounds),
        "stderr_rounds": f(report.stderr_rounds),
        "round_histogram": hist,
        "histogram_tail_mass": f(report.histogram_tail_mass),
        "tail_mean_contribution": f(report.tail_mean_contribution),
        "mean_bits": f(report.mean_bits),
        "stderr_bits": f(report.stderr_bits),
        "bits_per_link_gap": f(report.bits_per_link_gap),
        "stderr_bits_per_link_gap": f(report.stderr_bits_per_link_gap),
        "analytic_mean": f(report.analytic_mean),
        "z_score": f(report.z_score),
    });
    // histogram rows double as the CSV rendering
    let rows = report
        .round_histogram
        .iter()
        .enumerate()
        .map(|(i, &p)| vec![(i + 1).to_string(), f(p)])
        .collect();
    let mut emission = Emission::table(manifest, vec!["j", "frequency"], rows);
    emission.json_override = Some(body);
    Ok(emission)
}

/// Runs the validation suite, printing one line per check. Returns the exit
/// code (0 or 5).
fn cmd_validate(sink: &mut dyn std::io::Write) -> std::io::Result<i32> {
    let outcomes = run_acceptance();
    let mut failed = 0u32;
    for o in &outcomes {
        let status = if o.passed { "PASS" } else { "FAIL" };
        writeln!(sink, "[{status}] {} - {}", o.id, o.details)?;
        if !o.passed {
            failed += 1;
        }
    }
    writeln!(sink, "{} checks, {} failed", outcomes.len(), failed)?;
    Ok(if failed == 0 { 0 } else { 5 })
}

/// Entry point used by `main`; returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let result = match &cli.command {
        Command::Moments { n, t } => cmd_moments(*n, *t),
        Command::Limits { nu } => cmd_limits(*nu),
        Command::Distribution {
            n,
            j_max,
            t,
            nu,
            overlay,
        } => cmd_distribution(n, *j_max, *t, *nu, *overlay),
        Command::Convergence { n_lo, n_hi } => cmd_convergence(*n_lo, *n_hi),
        Command::Optimize { tolerance } => cmd_optimize(*tolerance),
        Command::Scan { segment, step, nu } => cmd_scan(segment, *step, *nu),
        Command::Simulate {
            n,
            t,
            trials,
            seed,
            j_max,
            segment,
        } => cmd_simulate(*n, *t, *trials, *seed, *j_max, segment.as_deref()),
        Command::Validate => {
            return match write_sink(&cli.output.out, |sink| cmd_validate(sink)) {
                Ok(code) => code,
                Err(e) => {
                    eprintln!("ring-analyzer: {e}");
                    1
                }
            };
        }
    };
    // the simulation report is natively a JSON document
    let format = cli.output.format.unwrap_or(match &cli.command {
        Command::Simulate { .. } => Format::Json,
        _ => Format::Csv,
    });
    match result {
        Ok(emission) => {
            let text = emission.render(format);
            match write_sink(&cli.output.out, |sink| sink.write_all(text.as_bytes())) {
                Ok(()) => 0,
                Err(e) => {
                    eprintln!("ring-analyzer: {e}");
                    1
                }
            }
        }
        Err(e) => {
            eprintln!("ring-analyzer: {e}");
            e.exit_code()
        }
    }
}

fn write_sink<T>(
    out: &Option<PathBuf>,
    body: impl FnOnce(&mut dyn std::io::Write) -> std::io::Result<T>,
) -> std::io::Result<T> {
    match out {
        Some(path) => {
            let mut file = std::fs::File::create(path)?;
            let v = body(&mut file)?;
            file.flush()?;
            Ok(v)
        }
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            let v = body(&mut lock)?;
            lock.flush()?;
            Ok(v)
        }
    }
}
