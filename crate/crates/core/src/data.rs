//! Synthetic stratified datasets and per-case score tables.
//!
//! The generator produces hidden stratification at small scale: a majority
//! group of well-separated Gaussian class clusters and a rare minority group
//! whose clusters are translated away from the majority and packed closer
//! together, so minority cases are both scarce and harder.

use std::collections::HashSet;
use std::fmt;
use std::io::Read;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{DroError, Result};
use crate::model::Sample;
use crate::rng::{self, Stream};

pub const SCORE_HEADER: [&str; 4] = ["case_id", "group", "region", "score"];
pub const MAJORITY: &str = "majority";
pub const MINORITY: &str = "minority";

/// Name of a subpopulation ("majority", "Spina Bifida", ...).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct GroupTag(String);

impl GroupTag {
    pub fn new(name: impl Into<String>) -> Result<Self> {
        let name = name.into();
        if name.trim().is_empty() {
            return Err(DroError::invalid("group name is empty"));
        }
        Ok(GroupTag(name))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for GroupTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl TryFrom<String> for GroupTag {
    type Error = DroError;
    fn try_from(s: String) -> Result<Self> {
        GroupTag::new(s)
    }
}

impl From<GroupTag> for String {
    fn from(g: GroupTag) -> String {
        g.0
    }
}

/// Parameters of the synthetic generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerationConfig {
    pub n: usize,
    /// Feature dimension; must be at least `classes`.
    pub d: usize,
    pub classes: usize,
    pub minority_fraction: f64,
    /// Circumradius of the simplex holding the majority class means.
    pub radius: f64,
    /// Circumradius for the minority; smaller means more class overlap.
    pub minority_radius: f64,
    /// Length of the translation applied to minority clusters.
    pub shift: f64,
    #[serde(default)]
    pub label_noise_majority: f64,
    #[serde(default)]
    pub label_noise_minority: f64,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        GenerationConfig {
            n: 2000,
            d: 10,
            classes: 3,
            minority_fraction: 0.05,
            radius: 3.0,
            minority_radius: 1.5,
            shift: 3.0,
            label_noise_majority: 0.0,
            label_noise_minority: 0.0,
        }
    }
}

impl GenerationConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(DroError::invalid(msg));
        if self.n == 0 {
            return bad("n must be at least 1".into());
        }
        if self.classes < 2 {
            return bad(format!("need at least 2 classes, got {}", self.classes));
        }
        if self.d < self.classes {
            return bad(format!("d = {} must be >= classes = {}", self.d, self.classes));
        }
        if !(self.minority_fraction > 0.0 && self.minority_fraction < 1.0) {
            return bad(format!("minority_fraction must lie in (0, 1), got {}", self.minority_fraction));
        }
        for (name, v) in [
            ("radius", self.radius),
            ("minority_radius", self.minority_radius),
            ("shift", self.shift),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be finite and non-negative, got {v}"));
            }
        }
        for (name, v) in [
            ("label_noise_majority", self.label_noise_majority),
            ("label_noise_minority", self.label_noise_minority),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} must lie in [0, 1], got {v}"));
            }
        }
        Ok(())
    }

    /// Mean of class `k` for a group whose simplex has circumradius `radius`
    /// and is translated by `shift` along [`Self::shift_direction`].
    pub fn class_mean(&self, k: usize, radius: f64, shift: f64) -> Vec<f64> {
        let c = self.classes as f64;
        let norm = ((c - 1.0) / c).sqrt();
        let dir = self.shift_direction();
        (0..self.d)
            .map(|j| {
                let vertex = if j < self.classes {
                    let e = if j == k { 1.0 } else { 0.0 };
                    radius * (e - 1.0 / c) / norm
                } else {
                    0.0
                };
                vertex + shift * dir[j]
            })
            .collect()
    }

    /// Unit vector `(1, …, 1)/√d`.
    ///
    /// It is orthogonal to every difference of class means, so the shift
    /// moves the minority off the majority's support without relabelling it.
    pub fn shift_direction(&self) -> Vec<f64> {
        vec![1.0 / (self.d as f64).sqrt(); self.d]
    }
}

/// Samples plus group bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct StratifiedDataset {
    pub samples: Vec<Sample>,
    pub case_ids: Vec<String>,
    /// Empirical fraction of each group, in order of first appearance
    /// (majority before minority for generated data).
    pub prevalence: Vec<(GroupTag, f64)>,
    pub generation: Option<(GenerationConfig, u64)>,
}

impl StratifiedDataset {
    pub fn new(samples: Vec<Sample>, case_ids: Vec<String>) -> Result<Self> {
        if samples.is_empty() {
            return Err(DroError::invalid("dataset is empty"));
        }
        if case_ids.len() != samples.len() {
            return Err(DroError::invalid("one case id per sample required"));
        }
        let d = samples[0].features.len();
        if samples.iter().any(|s| s.features.len() != d) {
            return Err(DroError::invalid("samples have differing feature dimensions"));
        }
        let mut seen = HashSet::new();
        if let Some(dup) = case_ids.iter().find(|c| !seen.insert(c.as_str())) {
            return Err(DroError::invalid(format!("duplicate case id {dup}")));
        }
        let prevalence = prevalence_of(&samples);
        Ok(StratifiedDataset { samples, case_ids, prevalence, generation: None })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn feature_dim(&self) -> usize {
        self.samples[0].features.len()
    }

    pub fn num_classes(&self) -> usize {
        self.samples.iter().map(|s| s.target).max().unwrap_or(0) + 1
    }

    pub fn group_count(&self, group: &str) -> usize {
        self.samples.iter().filter(|s| s.group.as_str() == group).count()
    }

    /// Subset in the order of `indices`.
    pub fn subset(&self, indices: &[usize]) -> Result<StratifiedDataset> {
        let samples = indices.iter().map(|&i| self.samples[i].clone()).collect();
        let ids = indices.iter().map(|&i| self.case_ids[i].clone()).collect();
        StratifiedDataset::new(samples, ids)
    }

    /// CSV export: `case_id,group,label,f0..f{d-1}`.
    pub fn to_csv(&self) -> String {
        let mut w = csv_writer();
        let mut header = vec!["case_id".to_string(), "group".into(), "label".into()];
        header.extend((0..self.feature_dim()).map(|j| format!("f{j}")));
        w.write_record(&header).expect("in-memory write");
        for (s, id) in self.samples.iter().zip(&self.case_ids) {
            let mut rec = vec![id.clone(), s.group.to_string(), s.target.to_string()];
            rec.extend(s.features.iter().map(|f| f.to_string()));
            w.write_record(&rec).expect("in-memory write");
        }
        finish(w)
    }

    pub fn from_csv(text: &str) -> Result<StratifiedDataset> {
        let mut reader = csv_reader(text.as_bytes());
        let mut records = reader.records();
        let header = match records.next() {
            Some(r) => r.map_err(|e| csv_error(e, 1))?,
            None => return Err(DroError::Parse { line: 1, message: "missing header".into() }),
        };
        let d = header.len().saturating_sub(3);
        let expected: Vec<String> = ["case_id", "group", "label"]
            .iter()
            .map(|s| s.to_string())
            .chain((0..d).map(|j| format!("f{j}")))
            .collect();
        if d == 0 || header.iter().ne(expected.iter().map(String::as_str)) {
            return Err(DroError::Parse {
                line: 1,
                message: format!("expected header case_id,group,label,f0..f{{d-1}}, got {:?}", header),
            });
        }
        let mut samples = Vec::new();
        let mut ids = Vec::new();
        for rec in records {
            let rec = rec.map_err(|e| csv_error(e, 0))?;
            let line = rec.position().map(|p| p.line()).unwrap_or(0);
            if rec.len() != d + 3 {
                return Err(DroError::Parse {
                    line,
                    message: format!("expected {} fields, got {}", d + 3, rec.len()),
                });
            }
            let group = GroupTag::new(&rec[1])
                .map_err(|e| DroError::Validation { line, message: e.to_string() })?;
            let target = rec[2].parse::<usize>().map_err(|e| DroError::Parse {
                line,
                message: format!("label {:?}: {e}", &rec[2]),
            })?;
            let features = (3..d + 3)
                .map(|j| {
                    rec[j].parse::<f64>().map_err(|e| DroError::Parse {
                        line,
                        message: format!("feature {:?}: {e}", &rec[j]),
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            ids.push(rec[0].to_string());
            samples.push(Sample { features, target, group });
        }
        StratifiedDataset::new(samples, ids)
    }

    pub fn load(path: &Path) -> Result<StratifiedDataset> {
        StratifiedDataset::from_csv(&read_to_string(path)?)
    }
}

fn prevalence_of(samples: &[Sample]) -> Vec<(GroupTag, f64)> {
    let mut counts: Vec<(GroupTag, usize)> = Vec::new();
    for s in samples {
        match counts.iter_mut().find(|(g, _)| *g == s.group) {
            Some((_, c)) => *c += 1,
            None => counts.push((s.group.clone(), 1)),
        }
    }
    let n = samples.len() as f64;
    counts.into_iter().map(|(g, c)| (g, c as f64 / n)).collect()
}

/// Draws a synthetic stratified dataset; fully determined by `seed`.
///
/// Each sample independently joins the minority with probability
/// `minority_fraction`, picks a class uniformly, and gets unit-variance
/// Gaussian features around its group's class mean. Label noise replaces
/// the label with a uniformly chosen *other* class.
pub fn generate_stratified(config: &GenerationConfig, seed: u64) -> Result<StratifiedDataset> {
    config.validate()?;
    let mut rng = rng::seeded(seed, Stream::Data);
    // separate stream so that noise rates leave features untouched
    let mut noise_rng = rng::seeded(rng::derive_seed(seed, 1), Stream::Data);
    let majority = GroupTag::new(MAJORITY)?;
    let minority = GroupTag::new(MINORITY)?;
    let means: Vec<Vec<Vec<f64>>> = [(config.radius, 0.0), (config.minority_radius, config.shift)]
        .iter()
        .map(|&(r, s)| (0..config.classes).map(|k| config.class_mean(k, r, s)).collect())
        .collect();

    let mut samples = Vec::with_capacity(config.n);
    for _ in 0..config.n {
        let is_minority = rng.random::<f64>() < config.minority_fraction;
        let class = rng.random_range(0..config.classes);
        let mean = &means[is_minority as usize][class];
        let features: Vec<f64> =
            mean.iter().map(|m| m + rng.sample::<f64, _>(StandardNormal)).collect();
        let noise = if is_minority { config.label_noise_minority } else { config.label_noise_majority };
        let mut target = class;
        if noise > 0.0 && noise_rng.random::<f64>() < noise {
            let mut others: Vec<usize> = (0..config.classes).filter(|&k| k != class).collect();
            others.shuffle(&mut noise_rng);
            target = others[0];
        }
        let group = if is_minority { minority.clone() } else { majority.clone() };
        samples.push(Sample { features, target, group });
    }
    let ids = (0..config.n).map(|i| format!("case{i:05}")).collect();
    let mut ds = StratifiedDataset::new(samples, ids)?;
    ds.prevalence.sort_by_key(|(g, _)| if g.as_str() == MAJORITY { 0 } else { 1 });
    ds.generation = Some((config.clone(), seed));
    Ok(ds)
}

/// One per-case, per-region score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub case_id: String,
    pub group: GroupTag,
    pub region: String,
    pub score: f64,
}

/// Validated table of scores in `[0, 1]` with unique `(case_id, region)`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScoreTable {
    rows: Vec<ScoreRow>,
}

impl ScoreTable {
    pub fn new(rows: Vec<ScoreRow>) -> Result<Self> {
        let mut table = ScoreTable::default();
        for (i, row) in rows.into_iter().enumerate() {
            table.push_at(row, i as u64 + 2)?;
        }
        Ok(table)
    }

    fn push_at(&mut self, row: ScoreRow, line: u64) -> Result<()> {
        if !(0.0..=1.0).contains(&row.score) {
            return Err(DroError::Validation {
                line,
                message: format!("score {} outside [0, 1]", row.score),
            });
        }
        if row.case_id.is_empty() || row.region.is_empty() {
            return Err(DroError::Validation { line, message: "empty case id or region".into() });
        }
        if self.rows.iter().any(|r| r.case_id == row.case_id && r.region == row.region) {
            return Err(DroError::Validation {
                line,
                message: format!("duplicate (case_id, region) = ({}, {})", row.case_id, row.region),
            });
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn push(&mut self, row: ScoreRow) -> Result<()> {
        let line = self.rows.len() as u64 + 2;
        self.push_at(row, line)
    }

    pub fn rows(&self) -> &[ScoreRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Canonical CSV rendering; scores use the shortest round-trip decimal.
    pub fn to_csv(&self) -> String {
        let mut w = csv_writer();
        w.write_record(SCORE_HEADER).expect("in-memory write");
        for r in &self.rows {
            w.write_record([r.case_id.as_str(), r.group.as_str(), &r.region, &r.score.to_string()])
                .expect("in-memory write");
        }
        finish(w)
    }
}

/// Parses a score CSV (header `case_id,group,region,score`).
pub fn parse_scores(reader: impl Read) -> Result<ScoreTable> {
    let mut reader = csv_reader(reader);
    let mut records = reader.records();
    match records.next() {
        Some(Ok(h)) if h.iter().eq(SCORE_HEADER) => {}
        Some(Ok(h)) => {
            return Err(DroError::Parse {
                line: 1,
                message: format!("expected header {}, got {}", SCORE_HEADER.join(","), h.iter().collect::<Vec<_>>().join(",")),
            })
        }
        Some(Err(e)) => return Err(csv_error(e, 1)),
        None => return Err(DroError::Parse { line: 1, message: "empty file".into() }),
    }
    let mut table = ScoreTable::default();
    for rec in records {
        let rec = rec.map_err(|e| csv_error(e, 0))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() != 4 {
            return Err(DroError::Parse { line, message: format!("expected 4 fields, got {}", rec.len()) });
        }
        let score = rec[3].parse::<f64>().map_err(|e| DroError::Parse {
            line,
            message: format!("score {:?}: {e}", &rec[3]),
        })?;
        let group =
            GroupTag::new(&rec[1]).map_err(|e| DroError::Validation { line, message: e.to_string() })?;
        table.push_at(
            ScoreRow { case_id: rec[0].to_string(), group, region: rec[2].to_string(), score },
            line,
        )?;
    }
    Ok(table)
}

pub fn load_scores(path: &Path) -> Result<ScoreTable> {
    let file = std::fs::File::open(path).map_err(|e| DroError::io(path, e))?;
    parse_scores(std::io::BufReader::new(file))
}

pub fn write_scores(table: &ScoreTable, path: &Path) -> Result<()> {
    std::fs::write(path, table.to_csv()).map_err(|e| DroError::io(path, e))
}

fn read_to_string(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| DroError::io(path, e))
}

fn csv_reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(r)
}

fn csv_writer() -> csv::Writer<Vec<u8>> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new())
}

fn finish(w: csv::Writer<Vec<u8>>) -> String {
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is utf-8")
}

fn csv_error(e: csv::Error, fallback_line: u64) -> DroError {
    let line = e.position().map(|p| p.line()).unwrap_or(fallback_line);
    DroError::Parse { line, message: e.to_string() }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn group_tag_rejects_empty() {
        assert!(GroupTag::new("").is_err());
        assert!(GroupTag::new("  ").is_err());
        assert_eq!(GroupTag::new("Spina Bifida").unwrap().as_str(), "Spina Bifida");
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = GenerationConfig { n: 300, ..GenerationConfig::default() };
        let a = generate_stratified(&cfg, 7).unwrap();
        let b = generate_stratified(&cfg, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_csv(), b.to_csv());
        assert_ne!(a.to_csv(), generate_stratified(&cfg, 8).unwrap().to_csv());
    }

    #[test]
    fn prevalence_sums_to_one() {
        let ds = generate_stratified(&GenerationConfig::default(), 3).unwrap();
        let total: f64 = ds.prevalence.iter().map(|(_, p)| p).sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert_eq!(ds.prevalence[0].0.as_str(), MAJORITY);
        assert_eq!(ds.group_count(MAJORITY) + ds.group_count(MINORITY), ds.len());
    }

    #[test]
    fn minority_count_within_binomial_interval() {
        // Binomial(2000, 0.05): exact 0.5% and 99.5% quantiles are 76 and 126.
        // Over 100 seeds about one count should land outside.
        let cfg = GenerationConfig::default();
        let outside = (0..100)
            .map(|seed| generate_stratified(&cfg, seed).unwrap().group_count(MINORITY))
            .filter(|m| !(76..=126).contains(m))
            .count();
        assert!(outside <= 4, "{outside} of 100 seeds outside the 99% interval");
    }

    #[test]
    fn class_means_form_a_centered_simplex() {
        let cfg = GenerationConfig::default();
        for k in 0..3 {
            let m = cfg.class_mean(k, 2.0, 0.0);
            let norm: f64 = m.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((norm - 2.0).abs() < 1e-12);
        }
        let sum: Vec<f64> = (0..cfg.d)
            .map(|j| (0..3).map(|k| cfg.class_mean(k, 2.0, 0.0)[j]).sum())
            .collect();
        assert!(sum.iter().all(|v| v.abs() < 1e-12));
        // the shift is orthogonal to mean differences
        let a = cfg.class_mean(0, 1.0, 0.0);
        let b = cfg.class_mean(1, 1.0, 0.0);
        let dot: f64 = cfg.shift_direction().iter().zip(a.iter().zip(&b)).map(|(u, (x, y))| u * (x - y)).sum();
        assert!(dot.abs() < 1e-12);
    }

    #[test]
    fn invalid_configs() {
        let base = GenerationConfig::default();
        let bad = [
            GenerationConfig { n: 0, ..base.clone() },
            GenerationConfig { d: 2, ..base.clone() },
            GenerationConfig { classes: 1, ..base.clone() },
            GenerationConfig { minority_fraction: 0.0, ..base.clone() },
            GenerationConfig { minority_fraction: 1.0, ..base.clone() },
            GenerationConfig { shift: -1.0, ..base.clone() },
            GenerationConfig { label_noise_minority: 1.5, ..base.clone() },
        ];
        for c in bad {
            assert!(generate_stratified(&c, 0).is_err(), "{c:?}");
        }
    }

    #[test]
    fn label_noise_flips_labels() {
        let cfg = GenerationConfig { n: 400, label_noise_majority: 1.0, minority_fraction: 0.01, ..GenerationConfig::default() };
        let noisy = generate_stratified(&cfg, 1).unwrap();
        let clean = generate_stratified(&GenerationConfig { label_noise_majority: 0.0, ..cfg }, 1).unwrap();
        for (a, b) in noisy.samples.iter().zip(&clean.samples) {
            assert_eq!(a.features, b.features);
            assert_eq!(a.group, b.group);
            assert_eq!(a.target != b.target, a.group.as_str() == MAJORITY);
        }
    }

    #[test]
    fn dataset_csv_round_trip() {
        let cfg = GenerationConfig { n: 50, d: 4, ..GenerationConfig::default() };
        let ds = generate_stratified(&cfg, 2).unwrap();
        let text = ds.to_csv();
        assert!(text.starts_with("case_id,group,label,f0,f1,f2,f3\n"));
        let back = StratifiedDataset::from_csv(&text).unwrap();
        assert_eq!(back.samples, ds.samples);
        assert_eq!(back.case_ids, ds.case_ids);
        assert_eq!(back.to_csv(), text);
    }

    #[test]
    fn dataset_csv_errors() {
        assert!(StratifiedDataset::from_csv("").is_err());
        assert!(StratifiedDataset::from_csv("case_id,group,label\n").is_err());
        let err = StratifiedDataset::from_csv("case_id,group,label,f0\na,majority,x,1.0\n").unwrap_err();
        assert!(matches!(err, DroError::Parse { line: 2, .. }), "{err}");
    }

    #[test]
    fn load_minimal_score_file() {
        let t = parse_scores("case_id,group,region,score\nc1,Controls,WM,0.9\nc2,Spina Bifida,WM,0.5\n".as_bytes())
            .unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t.rows()[1].group.as_str(), "Spina Bifida");
    }

    #[test]
    fn score_out_of_range_names_line() {
        let err = parse_scores("case_id,group,region,score\nc1,A,WM,0.9\nc2,A,WM,1.2\n".as_bytes()).unwrap_err();
        assert!(matches!(err, DroError::Validation { line: 3, .. }), "{err}");
    }

    #[test]
    fn duplicate_case_region_rejected() {
        let err = parse_scores("case_id,group,region,score\nc1,A,WM,0.9\nc1,A,WM,0.8\n".as_bytes()).unwrap_err();
        assert!(matches!(err, DroError::Validation { line: 3, .. }), "{err}");
        // same case, different region is fine
        assert!(parse_scores("case_id,group,region,score\nc1,A,WM,0.9\nc1,A,Cer,0.8\n".as_bytes()).is_ok());
    }

    #[test]
    fn malformed_rows_name_line() {
        let err = parse_scores("case_id,group,region,score\nc1,A,WM,abc\n".as_bytes()).unwrap_err();
        assert!(matches!(err, DroError::Parse { line: 2, .. }), "{err}");
        let err = parse_scores("case_id,group,region,score\nc1,A,WM\n".as_bytes()).unwrap_err();
        assert!(matches!(err, DroError::Parse { line: 2, .. }), "{err}");
        let err = parse_scores("id,group,region,score\n".as_bytes()).unwrap_err();
        assert!(matches!(err, DroError::Parse { line: 1, .. }), "{err}");
    }
}
