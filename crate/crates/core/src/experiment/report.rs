//! Report rows and CSV emission. Files are written atomically (temp file,
//! then rename) and all numbers use shortest round-trip formatting so a
//! rerun with the same seed produces byte-identical reports.

use crate::error::{Error, Result};
use crate::metrics::{summarize, wilcoxon_signed_rank, MetricSet};
use crate::sampling::VolumeId;
use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

#[derive(Clone, Debug, PartialEq)]
pub struct CaseRow {
    pub case_id: VolumeId,
    pub strategy: String,
    pub iteration: usize,
    pub metrics: MetricSet,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepsRow {
    pub strategy: String,
    pub iteration: usize,
    pub steps_run: usize,
    pub best_step: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub strategy: String,
    pub iteration: usize,
    pub metric: &'static str,
    pub mean: f64,
    pub sd: f64,
    /// 5th percentile for dice, 95th for the error metrics.
    pub p05_or_p95: f64,
    pub p_value_vs_best: Option<f64>,
}

pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.flush()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_cases_csv(path: &Path, rows: &[CaseRow]) -> Result<()> {
    let mut out = String::from("case_id,strategy,iteration,dice,rve_pct,msd_mm,hd_mm,undefined_flags\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.case_id,
            r.strategy,
            r.iteration,
            fmt_opt(r.metrics.dice),
            fmt_opt(r.metrics.rve),
            fmt_opt(r.metrics.msd),
            fmt_opt(r.metrics.hd),
            r.metrics.undefined_flags().join(";"),
        ));
    }
    atomic_write(path, out.as_bytes())
}

pub fn read_cases_csv(path: &Path) -> Result<Vec<CaseRow>> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| Error::parse(path.display().to_string(), e.to_string()))?;
    let parse_opt = |s: &str, field: &str| -> Result<Option<f64>> {
        if s.is_empty() {
            Ok(None)
        } else {
            s.parse::<f64>()
                .map(Some)
                .map_err(|_| Error::parse(path.display().to_string(), format!("{field}: bad number {s:?}")))
        }
    };
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::parse(path.display().to_string(), e.to_string()))?;
        if record.len() < 7 {
            return Err(Error::parse(
                path.display().to_string(),
                format!("row has {} fields, expected at least 7", record.len()),
            ));
        }
        let case_id = record[0]
            .parse::<u32>()
            .map_err(|_| Error::parse(path.display().to_string(), format!("case_id: bad id {:?}", &record[0])))?;
        let iteration = record[2]
            .parse::<usize>()
            .map_err(|_| Error::parse(path.display().to_string(), format!("iteration: bad value {:?}", &record[2])))?;
        rows.push(CaseRow {
            case_id: VolumeId(case_id),
            strategy: record[1].to_string(),
            iteration,
            metrics: MetricSet {
                dice: parse_opt(&record[3], "dice")?,
                rve: parse_opt(&record[4], "rve_pct")?,
                msd: parse_opt(&record[5], "msd_mm")?,
                hd: parse_opt(&record[6], "hd_mm")?,
            },
        });
    }
    Ok(rows)
}

pub fn write_steps_csv(path: &Path, rows: &[StepsRow]) -> Result<()> {
    let mut out = String::from("strategy,iteration,steps_run,best_step\n");
    for r in rows {
        out.push_str(&format!("{},{},{},{}\n", r.strategy, r.iteration, r.steps_run, r.best_step));
    }
    atomic_write(path, out.as_bytes())
}

pub fn write_summary_csv(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    let mut out = String::from("strategy,iteration,metric,mean,sd,p05_or_p95,p_value_vs_best\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.strategy,
            r.iteration,
            r.metric,
            r.mean,
            r.sd,
            r.p05_or_p95,
            fmt_opt(r.p_value_vs_best),
        ));
    }
    atomic_write(path, out.as_bytes())
}

const METRICS: [&str; 4] = ["dice", "rve", "msd", "hd"];

fn metric_of(m: &MetricSet, name: &str) -> Option<f64> {
    match name {
        "dice" => m.dice,
        "rve" => m.rve,
        "msd" => m.msd,
        _ => m.hd,
    }
}

/// Strategy arms compete inside one comparison group; reference rows
/// (initial model, data-pool baseline) stand alone.
fn comparison_group(strategy: &str, iteration: usize) -> Option<(usize, bool)> {
    let converged = strategy.ends_with("_converged");
    let base = strategy.strip_suffix("_converged").unwrap_or(strategy);
    if matches!(base, "uvs" | "rvs" | "uss" | "rss") {
        Some((iteration, converged))
    } else {
        None
    }
}

/// Group cases by `(strategy, iteration)`, summarize each metric, and test
/// every arm against the best arm of its comparison group with the
/// Wilcoxon signed-rank test on paired per-case values.
pub fn build_summary(rows: &[CaseRow]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<(String, usize), Vec<&CaseRow>> = BTreeMap::new();
    for r in rows {
        groups.entry((r.strategy.clone(), r.iteration)).or_default().push(r);
    }

    // Which (strategy, iteration) is best per comparison group and metric.
    let mut best: BTreeMap<((usize, bool), &'static str), (String, usize, f64)> = BTreeMap::new();
    for ((strategy, iteration), cases) in &groups {
        let Some(cmp) = comparison_group(strategy, *iteration) else {
            continue;
        };
        for metric in METRICS {
            let vals: Vec<Option<f64>> = cases.iter().map(|r| metric_of(&r.metrics, metric)).collect();
            let Ok(s) = summarize(&vals) else { continue };
            let better = |mean: f64, incumbent: f64| {
                if metric == "dice" {
                    mean > incumbent
                } else {
                    mean < incumbent
                }
            };
            match best.get(&(cmp, metric)) {
                Some((_, _, incumbent)) if !better(s.mean, *incumbent) => {}
                _ => {
                    best.insert((cmp, metric), (strategy.clone(), *iteration, s.mean));
                }
            }
        }
    }

    let paired_values = |a: &[&CaseRow], b: &[&CaseRow], metric: &str| -> (Vec<f64>, Vec<f64>) {
        let bmap: BTreeMap<VolumeId, &CaseRow> = b.iter().map(|r| (r.case_id, *r)).collect();
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for r in a {
            if let (Some(x), Some(other)) = (metric_of(&r.metrics, metric), bmap.get(&r.case_id)) {
                if let Some(y) = metric_of(&other.metrics, metric) {
                    xs.push(x);
                    ys.push(y);
                }
            }
        }
        (xs, ys)
    };

    let mut out = Vec::new();
    for ((strategy, iteration), cases) in &groups {
        for metric in METRICS {
            let vals: Vec<Option<f64>> = cases.iter().map(|r| metric_of(&r.metrics, metric)).collect();
            let Ok(s) = summarize(&vals) else { continue };
            let p_value = comparison_group(strategy, *iteration).and_then(|cmp| {
                let (best_strategy, best_iter, _) = best.get(&(cmp, metric))?;
                if best_strategy == strategy && *best_iter == *iteration {
                    return None;
                }
                let best_cases = &groups[&(best_strategy.clone(), *best_iter)];
                let (xs, ys) = paired_values(cases, best_cases, metric);
                wilcoxon_signed_rank(&xs, &ys).ok().map(|r| r.p_value)
            });
            out.push(SummaryRow {
                strategy: strategy.clone(),
                iteration: *iteration,
                metric,
                mean: s.mean,
                sd: s.sd,
                p05_or_p95: if metric == "dice" { s.p05 } else { s.p95 },
                p_value_vs_best: p_value,
            });
        }
    }
    out
}
