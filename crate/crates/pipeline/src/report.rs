//! Aggregation of per-sample metric reports into per-method tables with a
//! direction-aware relative-improvement column.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("no report files found in {0}")]
    NoReports(String),
    #[error("unknown baseline method {0:?}")]
    UnknownBaseline(String),
    #[error("report parse error in {path}: {detail}")]
    Parse { path: String, detail: String },
}

/// One per-sample metric record. Unknown metric keys ride along untouched.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MethodSample {
    pub method: String,
    #[serde(flatten)]
    pub metrics: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct MethodRow {
    pub method: String,
    pub sample_count: usize,
    pub means: BTreeMap<String, f64>,
    /// Mean direction-aware relative gain over the 3D metric family
    /// (cd_x1000 down, nc up, f1_at_001 up), percent, vs the baseline.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub impro_3d_pct: Option<f64>,
    /// Same for the 2D family (psnr, ssim, embed_i up; lpips down).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub impro_2d_pct: Option<f64>,
}

/// (metric key, higher-is-better)
const FAMILY_3D: [(&str, bool); 3] = [("cd_x1000", false), ("nc", true), ("f1_at_001", true)];
const FAMILY_2D: [(&str, bool); 4] = [
    ("psnr", true),
    ("ssim", true),
    ("lpips", false),
    ("embed_i", true),
];

fn relative_gain(base: f64, new: f64, higher_better: bool) -> Option<f64> {
    if base == 0.0 {
        return None;
    }
    Some(if higher_better {
        (new - base) / base
    } else {
        (base - new) / base
    })
}

fn family_improvement(
    family: &[(&str, bool)],
    base: &BTreeMap<String, f64>,
    new: &BTreeMap<String, f64>,
) -> Option<f64> {
    let gains: Vec<f64> = family
        .iter()
        .filter_map(|(key, higher)| {
            let b = base.get(*key)?;
            let n = new.get(*key)?;
            relative_gain(*b, *n, *higher)
        })
        .collect();
    if gains.is_empty() {
        None
    } else {
        Some(100.0 * gains.iter().sum::<f64>() / gains.len() as f64)
    }
}

/// Groups samples by method, averages every metric, and computes the
/// improvement columns against `baseline` (methods equal to the baseline get
/// 0% by definition).
pub fn aggregate_tables(
    samples: &[MethodSample],
    baseline: Option<&str>,
) -> Result<Vec<MethodRow>, ReportError> {
    if samples.is_empty() {
        return Err(ReportError::NoReports("<empty sample list>".into()));
    }
    let mut by_method: BTreeMap<String, Vec<&MethodSample>> = BTreeMap::new();
    for sample in samples {
        by_method.entry(sample.method.clone()).or_default().push(sample);
    }

    let mut rows: Vec<MethodRow> = by_method
        .iter()
        .map(|(method, group)| {
            let mut sums: BTreeMap<String, (f64, usize)> = BTreeMap::new();
            for sample in group {
                for (key, value) in &sample.metrics {
                    let slot = sums.entry(key.clone()).or_insert((0.0, 0));
                    slot.0 += value;
                    slot.1 += 1;
                }
            }
            let means = sums
                .into_iter()
                .map(|(key, (sum, n))| (key, sum / n as f64))
                .collect();
            MethodRow {
                method: method.clone(),
                sample_count: group.len(),
                means,
                impro_3d_pct: None,
                impro_2d_pct: None,
            }
        })
        .collect();

    if let Some(baseline) = baseline {
        let base_means = rows
            .iter()
            .find(|r| r.method == baseline)
            .ok_or_else(|| ReportError::UnknownBaseline(baseline.into()))?
            .means
            .clone();
        for row in &mut rows {
            row.impro_3d_pct = family_improvement(&FAMILY_3D, &base_means, &row.means);
            row.impro_2d_pct = family_improvement(&FAMILY_2D, &base_means, &row.means);
        }
    }
    Ok(rows)
}

/// Reads every `*.json` report in a directory into `MethodSample`s.
pub fn load_report_dir(dir: &Path) -> Result<Vec<MethodSample>, ReportError> {
    let entries = std::fs::read_dir(dir)
        .map_err(|_| ReportError::NoReports(dir.display().to_string()))?;
    let mut files: Vec<_> = entries
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().map(|e| e == "json").unwrap_or(false))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(ReportError::NoReports(dir.display().to_string()));
    }
    files
        .iter()
        .map(|path| {
            let text = std::fs::read_to_string(path).map_err(|e| ReportError::Parse {
                path: path.display().to_string(),
                detail: e.to_string(),
            })?;
            serde_json::from_str(&text).map_err(|e| ReportError::Parse {
                path: path.display().to_string(),
                detail: e.to_string(),
            })
        })
        .collect()
}

/// Fixed-width text rendering of the aggregate rows.
pub fn render_text_table(rows: &[MethodRow]) -> String {
    let mut keys: Vec<&str> = Vec::new();
    for (key, _) in FAMILY_3D.iter().chain(FAMILY_2D.iter()) {
        if rows.iter().any(|r| r.means.contains_key(*key)) {
            keys.push(key);
        }
    }
    let mut out = String::new();
    out.push_str(&format!("{:<16} {:>7}", "method", "n"));
    for key in &keys {
        out.push_str(&format!(" {:>10}", key));
    }
    out.push_str(&format!(" {:>10} {:>10}\n", "3D impro%", "2D impro%"));
    for row in rows {
        out.push_str(&format!("{:<16} {:>7}", row.method, row.sample_count));
        for key in &keys {
            match row.means.get(*key) {
                Some(v) => out.push_str(&format!(" {:>10.4}", v)),
                None => out.push_str(&format!(" {:>10}", "-")),
            }
        }
        for impro in [row.impro_3d_pct, row.impro_2d_pct] {
            match impro {
                Some(v) => out.push_str(&format!(" {:>10.1}", v)),
                None => out.push_str(&format!(" {:>10}", "-")),
            }
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(method: &str, pairs: &[(&str, f64)]) -> MethodSample {
        MethodSample {
            method: method.into(),
            metrics: pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        }
    }

    #[test]
    fn single_report_table_echoes_values() {
        let rows = aggregate_tables(
            &[sample("only", &[("cd_x1000", 12.5), ("nc", 0.9)])],
            None,
        )
        .unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].sample_count, 1);
        assert_eq!(rows[0].means["cd_x1000"], 12.5);
        assert_eq!(rows[0].means["nc"], 0.9);
    }

    #[test]
    fn baseline_self_improvement_is_zero() {
        let rows = aggregate_tables(
            &[sample(
                "base",
                &[("cd_x1000", 10.0), ("nc", 0.8), ("f1_at_001", 70.0)],
            )],
            Some("base"),
        )
        .unwrap();
        assert_eq!(rows[0].impro_3d_pct, Some(0.0));
    }

    #[test]
    fn worked_improvement_example() {
        // method1 CD 10 / NC 0.9 / F1 80 against baseline CD 20 / 0.8 / 40:
        // gains 50%, 12.5%, 100% -> mean 54.2%
        let rows = aggregate_tables(
            &[
                sample("m1", &[("cd_x1000", 10.0), ("nc", 0.9), ("f1_at_001", 80.0)]),
                sample("m2", &[("cd_x1000", 20.0), ("nc", 0.8), ("f1_at_001", 40.0)]),
            ],
            Some("m2"),
        )
        .unwrap();
        let m1 = rows.iter().find(|r| r.method == "m1").unwrap();
        let impro = m1.impro_3d_pct.unwrap();
        assert!((impro - 54.166_666).abs() < 1e-3, "impro = {impro}");
    }

    #[test]
    fn means_are_per_method() {
        let rows = aggregate_tables(
            &[
                sample("m", &[("psnr", 20.0)]),
                sample("m", &[("psnr", 30.0)]),
            ],
            None,
        )
        .unwrap();
        assert_eq!(rows[0].means["psnr"], 25.0);
        assert_eq!(rows[0].sample_count, 2);
    }

    #[test]
    fn unknown_baseline_rejected() {
        let res = aggregate_tables(&[sample("m", &[("psnr", 20.0)])], Some("nope"));
        assert!(matches!(res, Err(ReportError::UnknownBaseline(_))));
    }

    #[test]
    fn empty_input_rejected() {
        assert!(matches!(
            aggregate_tables(&[], None),
            Err(ReportError::NoReports(_))
        ));
    }

    #[test]
    fn text_table_renders_all_methods() {
        let rows = aggregate_tables(
            &[
                sample("alpha", &[("cd_x1000", 10.0), ("psnr", 25.0)]),
                sample("beta", &[("cd_x1000", 12.0), ("psnr", 22.0)]),
            ],
            Some("beta"),
        )
        .unwrap();
        let text = render_text_table(&rows);
        assert!(text.contains("alpha"));
        assert!(text.contains("beta"));
        assert!(text.contains("cd_x1000"));
    }
}
