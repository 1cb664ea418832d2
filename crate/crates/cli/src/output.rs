//! CSV output.
//!
//! Every file starts with `#` lines: the artifact version, then the
//! normalised configuration as TOML. Then one header row and one row per
//! grid point. Floats are printed as `{:.16e}` (17 significant digits, so
//! they parse back to the same `f64`); a missing value is an empty cell.
//!
//! Sweep columns, in order:
//!
//! | column | meaning |
//! |---|---|
//! | `axis`, `value` | swept axis and its value |
//! | `loss`, `task`, `channel`, `delta` | estimator and teacher |
//! | `activation`, `kappa0`, `kappa1`, `kappa_star` | feature map (`custom` when given by κ) |
//! | `spectrum`, `rho` | spectral law of `FFᵀ/p`, teacher norm |
//! | `n_over_d`, `p_over_n`, `alpha`, `gamma` | ratios, `α = n/p`, `γ = d/p` |
//! | `lambda_policy`, `lambda` | λ used by the theory |
//! | `converged`, `iterations`, `residual` | fixed-point solver report |
//! | `eps_g`, `eps_t` | asymptotic errors |
//! | `m_s`, `q_s`, `q_w`, `v_s`, `v_w` | overlaps at the fixed point |
//! | `theory_error` | why the theory is missing or did not converge |
//! | `d`, `n`, `p`, `sim_lambda` | simulation sizes and λ |
//! | `{original,equivalent}_n_seeds` | runs averaged |
//! | `{..}_n_failed`, `{..}_n_nonconverged` | runs dropped / fits stopped early |
//! | `{..}_eps_g`, `{..}_eps_g_stderr`, `{..}_eps_t`, `{..}_eps_t_stderr` | seed means and standard errors |
//! | `{..}_error` | why the whole simulation failed |
//!
//! Separability columns: `spectrum`, `n_over_d`, `alpha_star`,
//! `inv_alpha_star`, `error`.

use std::io::Write;
use std::path::Path;

use crate::sweep::{ResultRow, SeparabilityRow, SimSummary, Sizes, TheorySummary};
use crate::CliError;

const THEORY_COLUMNS: [&str; 11] = [
    "converged",
    "iterations",
    "residual",
    "eps_g",
    "eps_t",
    "m_s",
    "q_s",
    "q_w",
    "v_s",
    "v_w",
    "theory_error",
];
const SIM_FIELDS: [&str; 8] = [
    "n_seeds",
    "n_failed",
    "n_nonconverged",
    "eps_g",
    "eps_g_stderr",
    "eps_t",
    "eps_t_stderr",
    "error",
];

pub fn sweep_columns() -> Vec<String> {
    let mut cols: Vec<String> = [
        "axis",
        "value",
        "loss",
        "task",
        "channel",
        "delta",
        "activation",
        "kappa0",
        "kappa1",
        "kappa_star",
        "spectrum",
        "rho",
        "n_over_d",
        "p_over_n",
        "alpha",
        "gamma",
        "lambda_policy",
        "lambda",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    cols.extend(THEORY_COLUMNS.iter().map(|s| s.to_string()));
    cols.extend(["d", "n", "p", "sim_lambda"].iter().map(|s| s.to_string()));
    for model in ["original", "equivalent"] {
        cols.extend(SIM_FIELDS.iter().map(|f| format!("{model}_{f}")));
    }
    cols
}

pub const SEPARABILITY_COLUMNS: [&str; 5] = ["spectrum", "n_over_d", "alpha_star", "inv_alpha_star", "error"];

pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn opt_f64(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

fn record(row: &ResultRow) -> Vec<String> {
    let mut r = vec![
        row.axis.clone(),
        fmt_f64(row.value),
        row.loss.clone(),
        row.task.clone(),
        row.channel.clone(),
        fmt_f64(row.delta),
        row.activation.clone(),
        fmt_f64(row.kappa0),
        fmt_f64(row.kappa1),
        fmt_f64(row.kappa_star),
        row.spectrum.clone(),
        fmt_f64(row.rho),
        fmt_f64(row.n_over_d),
        fmt_f64(row.p_over_n),
        fmt_f64(row.alpha),
        fmt_f64(row.gamma),
        row.lambda_policy.clone(),
        fmt_f64(row.lambda),
    ];
    match &row.theory {
        Some(t) => r.extend([
            t.converged.to_string(),
            t.iterations.to_string(),
            fmt_f64(t.residual),
            fmt_f64(t.eps_g),
            fmt_f64(t.eps_t),
            fmt_f64(t.m_s),
            fmt_f64(t.q_s),
            fmt_f64(t.q_w),
            fmt_f64(t.v_s),
            fmt_f64(t.v_w),
        ]),
        None => r.extend(std::iter::repeat_n(String::new(), THEORY_COLUMNS.len() - 1)),
    }
    r.push(row.theory_error.clone().unwrap_or_default());
    match row.sizes {
        Some(s) => r.extend([s.d.to_string(), s.n.to_string(), s.p.to_string()]),
        None => r.extend(std::iter::repeat_n(String::new(), 3)),
    }
    r.push(opt_f64(row.sim_lambda));
    for sim in [&row.original, &row.equivalent] {
        match sim {
            Some(s) => r.extend([
                s.n_seeds.to_string(),
                s.n_failed.to_string(),
                s.n_nonconverged.to_string(),
                fmt_f64(s.eps_g),
                opt_f64(s.eps_g_stderr),
                fmt_f64(s.eps_t),
                opt_f64(s.eps_t_stderr),
                s.error.clone().unwrap_or_default(),
            ]),
            None => r.extend(std::iter::repeat_n(String::new(), SIM_FIELDS.len())),
        }
    }
    r
}

fn separability_record(row: &SeparabilityRow) -> Vec<String> {
    vec![
        row.spectrum.clone(),
        fmt_f64(row.n_over_d),
        fmt_f64(row.alpha_star),
        fmt_f64(row.inv_alpha_star),
        row.error.clone().unwrap_or_default(),
    ]
}

/// Comment block: version line, then the configuration, each line prefixed by `# `.
pub fn header_lines(config_toml: &str) -> Vec<String> {
    let mut lines = vec![format!("rfhmm {}", env!("CARGO_PKG_VERSION"))];
    lines.extend(config_toml.lines().map(str::to_owned));
    lines
}

fn render(header: &[String], columns: &[&str], records: impl Iterator<Item = Vec<String>>) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    for line in header {
        writeln!(buf, "# {line}").expect("write to memory");
    }
    let mut w = csv::Writer::from_writer(buf);
    let io = |e: csv::Error| CliError::Io(e.to_string());
    w.write_record(columns).map_err(io)?;
    for r in records {
        w.write_record(&r).map_err(io)?;
    }
    w.into_inner().map_err(|e| CliError::Io(e.to_string()))
}

pub fn render_sweep(header: &[String], rows: &[ResultRow]) -> Result<Vec<u8>, CliError> {
    let cols = sweep_columns();
    let cols: Vec<&str> = cols.iter().map(String::as_str).collect();
    render(header, &cols, rows.iter().map(record))
}

pub fn render_separability(header: &[String], rows: &[SeparabilityRow]) -> Result<Vec<u8>, CliError> {
    render(header, &SEPARABILITY_COLUMNS, rows.iter().map(separability_record))
}

/// Writes `bytes` to `path` through a temporary file in the same directory
/// and an atomic rename, or to stdout when `path` is `None`.
pub fn write_output(path: Option<&Path>, bytes: &[u8]) -> Result<(), CliError> {
    let Some(path) = path else {
        return std::io::stdout().write_all(bytes).map_err(|e| CliError::Io(format!("stdout: {e}")));
    };
    let io = |e: std::io::Error| CliError::Io(format!("{}: {e}", path.display()));
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(bytes).map_err(io)?;
    tmp.as_file().sync_all().map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

/// `#` lines and data rows of a file written by this module.
pub struct ParsedCsv {
    pub header: Vec<String>,
    pub columns: Vec<String>,
    pub records: Vec<Vec<String>>,
}

pub fn parse_csv(bytes: &[u8]) -> Result<ParsedCsv, CliError> {
    let text = std::str::from_utf8(bytes).map_err(|e| CliError::Io(e.to_string()))?;
    let header = text
        .lines()
        .take_while(|l| l.starts_with('#'))
        .map(|l| l.strip_prefix("# ").unwrap_or(&l[1..]).to_owned())
        .collect();
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(bytes);
    let io = |e: csv::Error| CliError::Io(e.to_string());
    let columns = r.headers().map_err(io)?.iter().map(str::to_owned).collect();
    let records = r
        .records()
        .map(|rec| rec.map(|rec| rec.iter().map(str::to_owned).collect()).map_err(io))
        .collect::<Result<_, _>>()?;
    Ok(ParsedCsv { header, columns, records })
}

fn field<'a>(cols: &[String], rec: &'a [String], name: &str) -> Result<&'a str, CliError> {
    cols.iter()
        .position(|c| c == name)
        .and_then(|i| rec.get(i))
        .map(String::as_str)
        .ok_or_else(|| CliError::Io(format!("missing column {name}")))
}

fn num<T: std::str::FromStr>(cols: &[String], rec: &[String], name: &str) -> Result<T, CliError> {
    let s = field(cols, rec, name)?;
    s.parse().map_err(|_| CliError::Io(format!("column {name}: cannot parse {s:?}")))
}

fn opt_num<T: std::str::FromStr>(cols: &[String], rec: &[String], name: &str) -> Result<Option<T>, CliError> {
    if field(cols, rec, name)?.is_empty() {
        Ok(None)
    } else {
        num(cols, rec, name).map(Some)
    }
}

fn opt_str(cols: &[String], rec: &[String], name: &str) -> Result<Option<String>, CliError> {
    let s = field(cols, rec, name)?;
    Ok((!s.is_empty()).then(|| s.to_owned()))
}

/// Parses the rows of a sweep CSV back.
pub fn read_sweep(bytes: &[u8]) -> Result<Vec<ResultRow>, CliError> {
    let parsed = parse_csv(bytes)?;
    let c = &parsed.columns;
    parsed
        .records
        .iter()
        .map(|r| {
            let theory = if field(c, r, "converged")?.is_empty() {
                None
            } else {
                Some(TheorySummary {
                    converged: num(c, r, "converged")?,
                    iterations: num(c, r, "iterations")?,
                    residual: num(c, r, "residual")?,
                    eps_g: num(c, r, "eps_g")?,
                    eps_t: num(c, r, "eps_t")?,
                    m_s: num(c, r, "m_s")?,
                    q_s: num(c, r, "q_s")?,
                    q_w: num(c, r, "q_w")?,
                    v_s: num(c, r, "v_s")?,
                    v_w: num(c, r, "v_w")?,
                })
            };
            let sizes = match opt_num::<usize>(c, r, "d")? {
                Some(d) => Some(Sizes {
                    d,
                    n: num(c, r, "n")?,
                    p: num(c, r, "p")?,
                }),
                None => None,
            };
            let sim = |m: &str| -> Result<Option<SimSummary>, CliError> {
                let key = |f: &str| format!("{m}_{f}");
                if field(c, r, &key("n_seeds"))?.is_empty() {
                    return Ok(None);
                }
                Ok(Some(SimSummary {
                    n_seeds: num(c, r, &key("n_seeds"))?,
                    n_failed: num(c, r, &key("n_failed"))?,
                    n_nonconverged: num(c, r, &key("n_nonconverged"))?,
                    eps_g: num(c, r, &key("eps_g"))?,
                    eps_g_stderr: opt_num(c, r, &key("eps_g_stderr"))?,
                    eps_t: num(c, r, &key("eps_t"))?,
                    eps_t_stderr: opt_num(c, r, &key("eps_t_stderr"))?,
                    error: opt_str(c, r, &key("error"))?,
                }))
            };
            Ok(ResultRow {
                axis: field(c, r, "axis")?.to_owned(),
                value: num(c, r, "value")?,
                loss: field(c, r, "loss")?.to_owned(),
                task: field(c, r, "task")?.to_owned(),
                channel: field(c, r, "channel")?.to_owned(),
                delta: num(c, r, "delta")?,
                activation: field(c, r, "activation")?.to_owned(),
                kappa0: num(c, r, "kappa0")?,
                kappa1: num(c, r, "kappa1")?,
                kappa_star: num(c, r, "kappa_star")?,
                spectrum: field(c, r, "spectrum")?.to_owned(),
                rho: num(c, r, "rho")?,
                n_over_d: num(c, r, "n_over_d")?,
                p_over_n: num(c, r, "p_over_n")?,
                alpha: num(c, r, "alpha")?,
                gamma: num(c, r, "gamma")?,
                lambda_policy: field(c, r, "lambda_policy")?.to_owned(),
                lambda: num(c, r, "lambda")?,
                theory,
                theory_error: opt_str(c, r, "theory_error")?,
                sizes,
                sim_lambda: opt_num(c, r, "sim_lambda")?,
                original: sim("original")?,
                equivalent: sim("equivalent")?,
            })
        })
        .collect()
}

pub fn read_separability(bytes: &[u8]) -> Result<Vec<SeparabilityRow>, CliError> {
    let parsed = parse_csv(bytes)?;
    let c = &parsed.columns;
    parsed
        .records
        .iter()
        .map(|r| {
            Ok(SeparabilityRow {
                spectrum: field(c, r, "spectrum")?.to_owned(),
                n_over_d: num(c, r, "n_over_d")?,
                alpha_star: num(c, r, "alpha_star")?,
                inv_alpha_star: num(c, r, "inv_alpha_star")?,
                error: opt_str(c, r, "error")?,
            })
        })
        .collect()
}
