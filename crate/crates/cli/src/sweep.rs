//! Grid sweeps over `(alpha, lambda)`.

use std::fmt::Write as _;
use std::fs;

use mvsc_core::{fit, load_dataset, MultiViewDataset};
use rayon::prelude::*;

use crate::error::{CliError, CliResult};
use crate::SweepArgs;

/// One CSV row. Scores are means over the seeds that succeeded.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub alpha: f64,
    pub lambda: f64,
    pub acc: Option<f64>,
    pub nmi: Option<f64>,
    pub status: String,
}

/// `10^t` for `count` evenly spaced `t` in `[start, stop]`, from `START:STOP:COUNT`.
pub fn parse_log_grid(spec: &str) -> CliResult<Vec<f64>> {
    let bad = || CliError::Usage(format!("grid {spec:?} is not START:STOP:COUNT"));
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() != 3 {
        return Err(bad());
    }
    let start: f64 = parts[0].trim().parse().map_err(|_| bad())?;
    let stop: f64 = parts[1].trim().parse().map_err(|_| bad())?;
    let count: usize = parts[2].trim().parse().map_err(|_| bad())?;
    if count == 0 || !start.is_finite() || !stop.is_finite() {
        return Err(bad());
    }
    if count == 1 {
        return Ok(vec![10f64.powf(start)]);
    }
    let step = (stop - start) / (count - 1) as f64;
    Ok((0..count).map(|i| 10f64.powf(start + step * i as f64)).collect())
}

fn sorted_grid(explicit: &Option<Vec<f64>>, log: &str, name: &str) -> CliResult<Vec<f64>> {
    let mut values = match explicit {
        Some(v) => v.clone(),
        None => parse_log_grid(log)?,
    };
    if values.is_empty() || values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(CliError::Usage(format!("{name} grid must hold finite values >= 0")));
    }
    values.sort_by(f64::total_cmp);
    values.dedup();
    Ok(values)
}

/// Rows in `(alpha asc, lambda asc)` order whatever order the runs finish in.
pub fn run_sweep(data: &MultiViewDataset, args: &SweepArgs) -> CliResult<Vec<SweepRow>> {
    let truth = data
        .labels()
        .ok_or_else(|| CliError::Usage("sweep needs a labelled dataset".into()))?;
    if args.seeds.is_empty() {
        return Err(CliError::Usage("at least one seed is required".into()));
    }
    let alphas = sorted_grid(&args.alphas, &args.alpha_log, "alpha")?;
    let lambdas = sorted_grid(&args.lambdas, &args.lambda_log, "lambda")?;
    // Surface flag errors once instead of in every row.
    args.solver.config(data, alphas[0], lambdas[0], args.seeds[0])?;

    let grid: Vec<(f64, f64)> = alphas
        .iter()
        .flat_map(|&a| lambdas.iter().map(move |&l| (a, l)))
        .collect();
    Ok(grid
        .par_iter()
        .map(|&(alpha, lambda)| {
            let mut acc = 0.0;
            let mut nmi = 0.0;
            let mut ok = 0usize;
            let mut failure = None;
            for &seed in &args.seeds {
                let outcome = args
                    .solver
                    .config(data, alpha, lambda, seed)
                    .and_then(|config| Ok(fit(data, &config)?))
                    .and_then(|r| Ok(mvsc_core::metrics::score(&r.labels, truth)?));
                match outcome {
                    Ok(s) => {
                        acc += s.acc;
                        nmi += s.nmi;
                        ok += 1;
                    }
                    Err(e) => {
                        failure.get_or_insert_with(|| e.to_string());
                    }
                }
            }
            let mean = |x: f64| (ok > 0).then(|| x / ok as f64);
            SweepRow {
                alpha,
                lambda,
                acc: mean(acc),
                nmi: mean(nmi),
                status: match failure {
                    None => "ok".into(),
                    Some(msg) => format!("failed ({}/{} seeds): {msg}", args.seeds.len() - ok, args.seeds.len()),
                },
            }
        })
        .collect())
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn to_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("alpha,lambda,acc,nmi,status\n");
    let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.alpha,
            r.lambda,
            opt(r.acc),
            opt(r.nmi),
            csv_field(&r.status)
        );
    }
    out
}

pub fn cmd_sweep(args: &SweepArgs) -> CliResult<()> {
    let data = load_dataset(&args.manifest)?;
    let rows = run_sweep(&data, args)?;
    let csv = to_csv(&rows);
    match &args.out {
        Some(path) => fs::write(path, csv).map_err(|e| CliError::io(path, e)),
        None => {
            print!("{csv}");
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_grid_endpoints() {
        let g = parse_log_grid("-2:2:5").unwrap();
        assert_eq!(g.len(), 5);
        assert!((g[0] - 0.01).abs() < 1e-15);
        assert_eq!(g[2], 1.0);
        assert!((g[4] - 100.0).abs() < 1e-12);
        assert_eq!(parse_log_grid("1:1:1").unwrap(), vec![10.0]);
        assert!(parse_log_grid("1:2").is_err());
        assert!(parse_log_grid("a:2:3").is_err());
        assert!(parse_log_grid("0:1:0").is_err());
    }

    #[test]
    fn csv_quotes_messages() {
        let rows = [SweepRow {
            alpha: 0.5,
            lambda: 2.0,
            acc: None,
            nmi: None,
            status: "failed: a, b".into(),
        }];
        assert_eq!(to_csv(&rows), "alpha,lambda,acc,nmi,status\n0.5,2,,,\"failed: a, b\"\n");
    }
}
