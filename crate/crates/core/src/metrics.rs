//! Dice overlap and percentile tables of per-case scores.
//!
//! A report has one row per `(group, region)` with mean, population std and
//! the lower-tail percentiles p50/p25/p10/p5, all in percent. Values are kept
//! at full precision; rounding (half away from zero, one decimal) happens only
//! when rendering text.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::data::{GroupTag, ScoreTable};
use crate::error::{DroError, Result};
use crate::robust::empirical_percentile;

/// Sørensen–Dice coefficient `2|A∩B| / (|A|+|B|)`; two empty masks score 1.
pub fn dice(pred: &[bool], gt: &[bool]) -> Result<f64> {
    if pred.len() != gt.len() {
        return Err(DroError::invalid(format!(
            "mask shapes differ: {} vs {} voxels",
            pred.len(),
            gt.len()
        )));
    }
    let (mut inter, mut total) = (0usize, 0usize);
    for (&a, &b) in pred.iter().zip(gt) {
        inter += (a && b) as usize;
        total += a as usize + b as usize;
    }
    if total == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * inter as f64 / total as f64)
}

/// Summary statistics of one cell, in percent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellStats {
    pub mean: f64,
    pub std: f64,
    pub p50: f64,
    pub p25: f64,
    pub p10: f64,
    pub p5: f64,
}

impl CellStats {
    pub const LABELS: [&'static str; 6] = ["Mean", "Std", "p50", "p25", "p10", "p5"];

    /// Statistics of raw scores in `[0, 1]`, scaled to percent.
    pub fn from_scores(scores: &[f64]) -> Result<Self> {
        if scores.is_empty() {
            return Err(DroError::invalid("no scores"));
        }
        let n = scores.len() as f64;
        let mean = scores.iter().sum::<f64>() / n;
        let var = scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n;
        let pct = |alpha| empirical_percentile(scores, alpha).map(|v| 100.0 * v);
        Ok(CellStats {
            mean: 100.0 * mean,
            std: 100.0 * var.sqrt(),
            p50: pct(0.50)?,
            p25: pct(0.25)?,
            p10: pct(0.10)?,
            p5: pct(0.05)?,
        })
    }

    pub fn values(&self) -> [f64; 6] {
        [self.mean, self.std, self.p50, self.p25, self.p10, self.p5]
    }

    fn zip_with(&self, other: &CellStats, f: impl Fn(f64, f64) -> f64) -> CellStats {
        CellStats {
            mean: f(self.mean, other.mean),
            std: f(self.std, other.std),
            p50: f(self.p50, other.p50),
            p25: f(self.p25, other.p25),
            p10: f(self.p10, other.p10),
            p5: f(self.p5, other.p5),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub group: GroupTag,
    pub region: String,
    pub stats: CellStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupCount {
    pub group: GroupTag,
    pub cases: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PercentileReport {
    pub rows: Vec<ReportRow>,
    pub counts: Vec<GroupCount>,
}

/// Rounds half away from zero to one decimal.
pub fn round1(x: f64) -> f64 {
    (x * 10.0).round() / 10.0
}

fn first_seen<'a, T: PartialEq + 'a>(items: impl Iterator<Item = &'a T>) -> Vec<&'a T> {
    let mut out: Vec<&T> = Vec::new();
    for it in items {
        if !out.contains(&it) {
            out.push(it);
        }
    }
    out
}

/// Builds the per-(group, region) table. Groups, and regions within each
/// group, appear in first-encountered order.
pub fn percentile_report(table: &ScoreTable) -> Result<PercentileReport> {
    if table.is_empty() {
        return Err(DroError::invalid("score table is empty"));
    }
    let rows = table.rows();
    let groups = first_seen(rows.iter().map(|r| &r.group));
    let regions = first_seen(rows.iter().map(|r| &r.region));
    let mut out = Vec::new();
    let mut counts = Vec::new();
    for group in groups {
        let mut cases = first_seen(rows.iter().filter(|r| &r.group == group).map(|r| &r.case_id));
        cases.dedup();
        counts.push(GroupCount { group: group.clone(), cases: cases.len() });
        for region in &regions {
            let scores: Vec<f64> = rows
                .iter()
                .filter(|r| &r.group == group && &r.region == *region)
                .map(|r| r.score)
                .collect();
            if scores.is_empty() {
                continue;
            }
            out.push(ReportRow {
                group: group.clone(),
                region: (*region).clone(),
                stats: CellStats::from_scores(&scores)?,
            });
        }
    }
    Ok(PercentileReport { rows: out, counts })
}

impl PercentileReport {
    pub fn cell(&self, group: &str, region: &str) -> Option<&CellStats> {
        self.rows
            .iter()
            .find(|r| r.group.as_str() == group && r.region == region)
            .map(|r| &r.stats)
    }

    pub fn cases(&self, group: &str) -> Option<usize> {
        self.counts.iter().find(|c| c.group.as_str() == group).map(|c| c.cases)
    }

    /// Aligned plain-text table in the layout of a method-comparison table:
    /// the group label and case count appear on the group's first row.
    pub fn render_text(&self) -> String {
        let cells: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| r.stats.values().iter().map(|v| format!("{:.1}", round1(*v))).collect())
            .collect();
        render_table(self, &cells)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

fn group_labels(report: &PercentileReport) -> Vec<String> {
    let mut prev: Option<&GroupTag> = None;
    report
        .rows
        .iter()
        .map(|r| {
            if prev == Some(&r.group) {
                String::new()
            } else {
                prev = Some(&r.group);
                match report.cases(r.group.as_str()) {
                    Some(n) => format!("{} ({n} cases)", r.group),
                    None => r.group.to_string(),
                }
            }
        })
        .collect()
}

fn render_table(report: &PercentileReport, cells: &[Vec<String>]) -> String {
    let labels = group_labels(report);
    let gw = labels.iter().map(|s| s.len()).chain(["Group".len()]).max().unwrap();
    let rw = report.rows.iter().map(|r| r.region.len()).chain(["ROI".len()]).max().unwrap();
    let cw = cells.iter().flatten().map(|s| s.len()).chain([5]).max().unwrap();
    let mut out = String::new();
    let _ = write!(out, "{:<gw$}  {:<rw$}", "Group", "ROI");
    for l in CellStats::LABELS {
        let _ = write!(out, "  {l:>cw$}");
    }
    out.push('\n');
    for ((label, row), values) in labels.iter().zip(&report.rows).zip(cells) {
        let _ = write!(out, "{label:<gw$}  {:<rw$}", row.region);
        for v in values {
            let _ = write!(out, "  {v:>cw$}");
        }
        out.push('\n');
    }
    out
}

/// Per-cell `b − a` in percentage points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportComparison {
    pub rows: Vec<ReportRow>,
    #[serde(skip)]
    layout: Option<PercentileReport>,
}

/// Signed one-decimal rendering; rounded zero prints as `+0.0`.
pub fn format_delta(delta: f64) -> String {
    let r = round1(delta);
    if r == 0.0 {
        "+0.0".to_string()
    } else {
        format!("{r:+.1}")
    }
}

/// Cell-wise `b − a`. Both reports must cover the same `(group, region)`
/// keys; the result follows `b`'s row order.
pub fn compare_reports(a: &PercentileReport, b: &PercentileReport) -> Result<ReportComparison> {
    if a.rows.len() != b.rows.len() {
        return Err(DroError::invalid(format!(
            "reports have {} and {} rows",
            a.rows.len(),
            b.rows.len()
        )));
    }
    let rows = b
        .rows
        .iter()
        .map(|rb| {
            let sa = a.cell(rb.group.as_str(), &rb.region).ok_or_else(|| {
                DroError::invalid(format!(
                    "baseline has no row for group {:?}, region {:?}",
                    rb.group.as_str(),
                    rb.region
                ))
            })?;
            Ok(ReportRow {
                group: rb.group.clone(),
                region: rb.region.clone(),
                stats: rb.stats.zip_with(sa, |x, y| x - y),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ReportComparison { rows, layout: Some(b.clone()) })
}

impl ReportComparison {
    pub fn delta(&self, group: &str, region: &str) -> Option<&CellStats> {
        self.rows
            .iter()
            .find(|r| r.group.as_str() == group && r.region == region)
            .map(|r| &r.stats)
    }

    pub fn render_text(&self) -> String {
        let cells: Vec<Vec<String>> =
            self.rows.iter().map(|r| r.stats.values().iter().map(|v| format_delta(*v)).collect()).collect();
        let layout = self.layout.clone().unwrap_or_else(|| PercentileReport {
            rows: self.rows.clone(),
            counts: Vec::new(),
        });
        render_table(&layout, &cells)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("comparison serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::ScoreRow;

    fn table(rows: &[(&str, &str, &str, f64)]) -> ScoreTable {
        ScoreTable::new(
            rows.iter()
                .map(|&(c, g, r, s)| ScoreRow {
                    case_id: c.into(),
                    group: GroupTag::new(g).unwrap(),
                    region: r.into(),
                    score: s,
                })
                .collect(),
        )
        .unwrap()
    }

    fn stats(p10: f64, p5: f64) -> CellStats {
        CellStats { mean: 50.0, std: 1.0, p50: 50.0, p25: 30.0, p10, p5 }
    }

    fn single(group: &str, s: CellStats) -> PercentileReport {
        PercentileReport {
            rows: vec![ReportRow { group: GroupTag::new(group).unwrap(), region: "Cer".into(), stats: s }],
            counts: vec![GroupCount { group: GroupTag::new(group).unwrap(), cases: 98 }],
        }
    }

    #[test]
    fn dice_examples() {
        let a = [true, true, false, false];
        assert_eq!(dice(&a, &a).unwrap(), 1.0);
        assert_eq!(dice(&a, &[false, false, true, true]).unwrap(), 0.0);
        assert_eq!(dice(&a, &[true, false, true, false]).unwrap(), 0.5);
        assert_eq!(dice(&[false; 3], &[false; 3]).unwrap(), 1.0);
        assert_eq!(dice(&[false; 3], &[true, false, false]).unwrap(), 0.0);
        assert!(dice(&a, &[true]).is_err());
    }

    #[test]
    fn singleton_report() {
        let r = percentile_report(&table(&[("c1", "A", "WM", 0.8)])).unwrap();
        let s = r.cell("A", "WM").unwrap();
        assert_eq!(round1(s.mean), 80.0);
        assert_eq!(s.std, 0.0);
        for v in [s.p50, s.p25, s.p10, s.p5] {
            assert_eq!(round1(v), 80.0);
        }
        assert_eq!(r.cases("A"), Some(1));
    }

    #[test]
    fn uniform_grid_percentiles() {
        let ids: Vec<String> = (1..=100).map(|i| format!("c{i}")).collect();
        let rows: Vec<(&str, &str, &str, f64)> =
            ids.iter().enumerate().map(|(i, id)| (id.as_str(), "A", "WM", (i + 1) as f64 / 100.0)).collect();
        let r = percentile_report(&table(&rows)).unwrap();
        let s = r.cell("A", "WM").unwrap();
        assert_eq!((round1(s.p5), round1(s.p10), round1(s.p25), round1(s.p50)), (5.0, 10.0, 25.0, 50.0));
    }

    #[test]
    fn ordering_and_counts() {
        let t = table(&[
            ("c1", "Spina Bifida", "WM", 0.9),
            ("c1", "Spina Bifida", "Cer", 0.2),
            ("c2", "Controls", "Cer", 0.95),
            ("c2", "Controls", "WM", 0.93),
            ("c3", "Spina Bifida", "WM", 0.7),
        ]);
        let r = percentile_report(&t).unwrap();
        let keys: Vec<(&str, &str)> = r.rows.iter().map(|x| (x.group.as_str(), x.region.as_str())).collect();
        assert_eq!(
            keys,
            vec![("Spina Bifida", "WM"), ("Spina Bifida", "Cer"), ("Controls", "WM"), ("Controls", "Cer")]
        );
        assert_eq!(r.cases("Spina Bifida"), Some(2));
        assert_eq!(r.cases("Controls"), Some(1));
        assert!(percentile_report(&ScoreTable::default()).is_err());
    }

    #[test]
    fn text_rendering_layout() {
        let t = table(&[("c1", "Controls", "WM", 0.939), ("c2", "Controls", "WM", 0.5), ("c1", "Controls", "Vent", 0.25)]);
        let text = percentile_report(&t).unwrap().render_text();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[0].starts_with("Group"));
        assert!(lines[1].starts_with("Controls (2 cases)"));
        assert!(lines[2].starts_with("                  "));
        assert!(lines[1].contains("72.0"));
        assert!(lines[2].contains("25.0"));
    }

    #[test]
    fn rounding_is_half_away_from_zero() {
        assert_eq!(round1(0.25), 0.3);
        assert_eq!(round1(-0.25), -0.3);
        assert_eq!(round1(26.499999999999996), 26.5);
        assert_eq!(format_delta(0.0), "+0.0");
        assert_eq!(format_delta(-0.04), "+0.0");
        assert_eq!(format_delta(-0.1), "-0.1");
        assert_eq!(format_delta(2.0), "+2.0");
    }

    #[test]
    fn compare_identity() {
        let r = single("Controls", stats(78.1, 76.8));
        let c = compare_reports(&r, &r).unwrap();
        assert!(c.rows[0].stats.values().iter().all(|&d| format_delta(d) == "+0.0"));
    }

    #[test]
    fn compare_renders_signed_deltas() {
        // spina bifida cerebellum p10: 13.9 → 40.4
        let a = single("Spina Bifida", stats(13.9, 0.0));
        let b = single("Spina Bifida", stats(40.4, 0.0));
        let c = compare_reports(&a, &b).unwrap();
        assert_eq!(format_delta(c.delta("Spina Bifida", "Cer").unwrap().p10), "+26.5");
        // controls ventricles p5: 76.8 → 76.7
        let a = single("Controls", stats(78.1, 76.8));
        let b = single("Controls", stats(78.3, 76.7));
        let c = compare_reports(&a, &b).unwrap();
        assert_eq!(format_delta(c.delta("Controls", "Cer").unwrap().p5), "-0.1");
        assert!(c.render_text().contains("-0.1"));
    }

    #[test]
    fn compare_key_mismatch() {
        let a = single("Controls", stats(1.0, 1.0));
        let b = single("Other Abn.", stats(1.0, 1.0));
        assert!(compare_reports(&a, &b).is_err());
        let mut two = a.clone();
        two.rows.push(b.rows[0].clone());
        assert!(compare_reports(&a, &two).is_err());
    }
}
