//! CSV output of a sweep. Files are byte-identical for identical inputs.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::{Coord, ExperimentResult, Record};
use crate::error::Result;
use crate::metrics::summarize;

pub const RESULTS_HEADER: &str = "drop,ue,method,order,precision,nulling,q,sinr_db,capacity,cond_q,cond_rv,flops,flops_nulling,angle,status";
pub const SUMMARY_HEADER: &str = "method,order,precision,nulling,q,n,failed,mean_capacity,p10_capacity,mean_sinr_db,p10_sinr_db,mean_angle";
pub const FLOPS_HEADER: &str = "method,order,precision,nulling,q,n_rx,mean_flops,mean_flops_nulling";

fn num(x: f64) -> String {
    if x.is_nan() { "nan".into() } else { format!("{x:.9e}") }
}

fn quote(s: &str) -> String {
    if s.contains([',', '"', '\n']) { format!("\"{}\"", s.replace('"', "\"\"")) } else { s.to_string() }
}

fn coord_cols(c: &Coord) -> String {
    format!("{},{},{},{},{}", c.method, c.order, quote(&c.precision), c.nulling, c.q)
}

pub fn results_csv(records: &[Record]) -> String {
    let mut out = String::from(RESULTS_HEADER);
    out.push('\n');
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.drop,
            r.ue,
            coord_cols(&r.coord()),
            num(r.sinr_db),
            num(r.capacity),
            num(r.cond_q),
            num(r.cond_rv),
            r.flops,
            r.flops_nulling,
            num(r.angle),
            quote(&r.status),
        );
    }
    out
}

fn finite(rows: &[&Record], f: impl Fn(&Record) -> f64) -> Vec<f64> {
    rows.iter().map(|r| f(r)).filter(|x| x.is_finite()).collect()
}

pub fn summary_csv(res: &ExperimentResult) -> String {
    let mut out = String::from(SUMMARY_HEADER);
    out.push('\n');
    for c in res.coords() {
        let rows: Vec<&Record> = res.cell(&c).collect();
        let cap = finite(&rows, |r| r.capacity);
        let failed = rows.len() - cap.len();
        let (mc, pc) = summarize(&cap).map(|s| (s.mean, s.p10)).unwrap_or((f64::NAN, f64::NAN));
        let (ms, ps) = summarize(&finite(&rows, |r| r.sinr_db)).map(|s| (s.mean, s.p10)).unwrap_or((f64::NAN, f64::NAN));
        let ma = summarize(&finite(&rows, |r| r.angle)).map(|s| s.mean).unwrap_or(f64::NAN);
        let _ = writeln!(out, "{},{},{},{},{},{},{},{}", coord_cols(&c), rows.len(), failed, num(mc), num(pc), num(ms), num(ps), num(ma));
    }
    out
}

pub fn flops_csv(res: &ExperimentResult) -> String {
    let mut out = String::from(FLOPS_HEADER);
    out.push('\n');
    for c in res.coords().into_iter().filter(|c| c.method != "mmse") {
        let rows: Vec<&Record> = res.cell(&c).filter(|r| !r.status.starts_with("error")).collect();
        if rows.is_empty() {
            continue;
        }
        // flops are per drop; every UE row of a drop carries the same count
        let n = rows.len() as f64;
        let mf = rows.iter().map(|r| r.flops as f64).sum::<f64>() / n;
        let mn = rows.iter().map(|r| r.flops_nulling as f64).sum::<f64>() / n;
        let _ = writeln!(out, "{},{},{},{}", coord_cols(&c), res.n_rx, num(mf), num(mn));
    }
    out
}

/// Empirical capacity CDF of one cell.
pub fn cdf_csv(res: &ExperimentResult, coord: &Coord) -> String {
    let mut out = String::from("metric,value,cdf\n");
    let rows: Vec<&Record> = res.cell(coord).collect();
    for (name, f) in [("capacity", (|r: &Record| r.capacity) as fn(&Record) -> f64), ("sinr_db", |r: &Record| r.sinr_db)] {
        if let Ok(s) = summarize(&finite(&rows, f)) {
            for (v, p) in s.cdf {
                let _ = writeln!(out, "{name},{},{}", num(v), num(p));
            }
        }
    }
    out
}

pub const SCHEMA_MD: &str = "# Output files

## results.csv

One row per (drop, UE, method, order, precision, nulling, q).

| column | meaning |
|---|---|
| drop | drop index |
| ue | UE index within the drop |
| method | `mmse` (full-array MMSE), `exact` (FP64 inverse), `cg` or `poly` |
| order | CG iterations or polynomial degree, 0 for mmse/exact |
| precision | arithmetic profile of the inversion, with `/narrow` for per-op rounding |
| nulling | whether interference subspace nulling was applied |
| q | nulling rank, 0 without nulling |
| sinr_db | mean post-MMSE SINR over subcarriers and streams, dB |
| capacity | mean over subcarriers of sum of log2(1+SINR), bit/s/Hz |
| cond_q | condition number of the full covariance |
| cond_rv | condition number of the reduced covariance (nulling only) |
| flops | complex multiply-adds of the inversion plus nulling |
| flops_nulling | complex multiply-adds of the nulling stage |
| angle | largest principal angle (rad) to the exact design with the same nulling |
| status | `ok`, solver flags (`stagnation:n`, `divergence`, `floored:n`), `warn:` notes, or `error: ...` |

Missing values are written as `nan`.

## summary.csv

Per coordinate: row count, failed rows, mean and nearest-rank 10th percentile
of capacity and SINR, mean angle.

## flops.csv

Mean measured multiply-adds per coordinate together with the array size.

## cdf_<coordinate>.csv

Empirical CDF of capacity and SINR for one coordinate: `metric,value,cdf`.
";

/// Writes every output file into `dir` and returns their paths.
pub fn write_all(res: &ExperimentResult, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut files = vec![
        ("results.csv".to_string(), results_csv(&res.records)),
        ("summary.csv".to_string(), summary_csv(res)),
        ("flops.csv".to_string(), flops_csv(res)),
        ("schema.md".to_string(), SCHEMA_MD.to_string()),
        ("config.toml".to_string(), res.spec.to_toml()?),
    ];
    for c in res.coords() {
        files.push((format!("cdf_{}.csv", c.label()), cdf_csv(res, &c)));
    }
    let mut paths = Vec::new();
    for (name, body) in files {
        let p = dir.join(name);
        fs::write(&p, body)?;
        paths.push(p);
    }
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::SweepSpec;

    fn rec(drop: u64, ue: usize, cap: f64) -> Record {
        Record {
            drop,
            ue,
            method: "cg".into(),
            order: 2,
            precision: "q15.16".into(),
            nulling: true,
            q: 3,
            sinr_db: 10.0,
            capacity: cap,
            cond_q: 100.0,
            cond_rv: f64::NAN,
            flops: 10,
            flops_nulling: 3,
            angle: 0.1,
            status: "ok".into(),
        }
    }

    #[test]
    fn empty_results_are_header_only() {
        let res = ExperimentResult { spec: SweepSpec::default(), n_rx: 64, records: vec![] };
        assert_eq!(results_csv(&res.records), format!("{RESULTS_HEADER}\n"));
        assert_eq!(summary_csv(&res), format!("{SUMMARY_HEADER}\n"));
        assert_eq!(flops_csv(&res), format!("{FLOPS_HEADER}\n"));
    }

    #[test]
    fn rows_have_header_arity() {
        let res = ExperimentResult { spec: SweepSpec::default(), n_rx: 64, records: vec![rec(0, 0, 2.0), rec(0, 1, f64::NAN), rec(1, 0, 4.0)] };
        for (csv, header) in [(results_csv(&res.records), RESULTS_HEADER), (summary_csv(&res), SUMMARY_HEADER), (flops_csv(&res), FLOPS_HEADER)] {
            let cols = header.split(',').count();
            for line in csv.lines() {
                assert_eq!(line.split(',').count(), cols, "{line}");
            }
        }
        let summary = summary_csv(&res);
        let row: Vec<&str> = summary.lines().nth(1).unwrap().split(',').collect();
        assert_eq!(row[5], "3");
        assert_eq!(row[6], "1");
        assert_eq!(row[7].parse::<f64>().unwrap(), 3.0);
        assert_eq!(row[8].parse::<f64>().unwrap(), 2.0);
        assert!(results_csv(&res.records).contains(",nan,"));
    }

    #[test]
    fn statuses_with_commas_are_quoted() {
        let mut r = rec(0, 0, 1.0);
        r.status = "error: bad, worse".into();
        let csv = results_csv(&[r]);
        assert!(csv.lines().nth(1).unwrap().ends_with("\"error: bad, worse\""));
    }

    #[test]
    fn cdf_is_monotone() {
        let res = ExperimentResult { spec: SweepSpec::default(), n_rx: 64, records: vec![rec(0, 0, 3.0), rec(1, 0, 1.0), rec(2, 0, 2.0)] };
        let csv = cdf_csv(&res, &res.coords()[0]);
        let caps: Vec<(f64, f64)> = csv
            .lines()
            .skip(1)
            .filter(|l| l.starts_with("capacity"))
            .map(|l| {
                let f: Vec<&str> = l.split(',').collect();
                (f[1].parse().unwrap(), f[2].parse().unwrap())
            })
            .collect();
        assert_eq!(caps.len(), 3);
        assert!(caps.windows(2).all(|w| w[0].0 <= w[1].0 && w[0].1 < w[1].1));
        assert_eq!(caps[2].1, 1.0);
    }
}
