//! Per-domain / per-strategy score tables with AVG columns and
//! disambiguation-minus-base delta rows.
//!
//! Cells keep full precision. AVG is the mean of the cells rounded to two
//! decimals, and every delta is taken between two-decimal display values,
//! so a printed delta always equals the difference of the printed numbers.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::ScoreFile;
use crate::prompts::TemplateId;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("duplicate score for template {template}, domain `{domain}`")]
    Duplicate {
        template: TemplateId,
        domain: String,
    },
    #[error("invalid pairing `{0}`")]
    Pairing(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// A fixed-point value in hundredths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Centi(pub i64);

impl Centi {
    /// Half-up rounding to two decimals. The value is first snapped to
    /// millionths so that decimal literals such as 33.145 round upward.
    pub fn round(x: f64) -> Centi {
        let micro = (x * 1e6).round() as i64;
        Centi((micro + 5_000).div_euclid(10_000))
    }

    /// Half-up mean of hundredths.
    pub fn mean(values: &[Centi]) -> Option<Centi> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as i64;
        let sum: i64 = values.iter().map(|c| c.0).sum();
        Some(Centi((2 * sum + n).div_euclid(2 * n)))
    }

    pub fn as_f64(self) -> f64 {
        self.0 as f64 / 100.0
    }

    /// Signed rendering: `+0.32`, `-2.38`, `0.00`.
    pub fn signed(self) -> String {
        match self.0.signum() {
            1 => format!("+{self}"),
            _ => self.to_string(),
        }
    }
}

impl fmt::Display for Centi {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.0 < 0 { "-" } else { "" };
        let a = self.0.unsigned_abs();
        write!(f, "{sign}{}.{:02}", a / 100, a % 100)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Bleu,
    Comet,
    Disamb,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Bleu, Metric::Comet, Metric::Disamb];

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Bleu => "bleu",
            Metric::Comet => "comet",
            Metric::Disamb => "disamb",
        }
    }

    fn title(self) -> &'static str {
        match self {
            Metric::Bleu => "BLEU",
            Metric::Comet => "COMET",
            Metric::Disamb => "Disambiguation accuracy (%)",
        }
    }
}

impl FromStr for Metric {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Metric::ALL
            .into_iter()
            .find(|m| m.as_str() == s.to_ascii_lowercase())
            .ok_or_else(|| format!("unknown metric `{s}`"))
    }
}

/// Scores for one (template, domain). Disambiguation accuracy is stored as
/// a percentage.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bleu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comet: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub disamb: Option<f64>,
}

impl Cell {
    pub fn get(&self, m: Metric) -> Option<f64> {
        match m {
            Metric::Bleu => self.bleu,
            Metric::Comet => self.comet,
            Metric::Disamb => self.disamb,
        }
    }

    fn slot(&mut self, m: Metric) -> &mut Option<f64> {
        match m {
            Metric::Bleu => &mut self.bleu,
            Metric::Comet => &mut self.comet,
            Metric::Disamb => &mut self.disamb,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScoreTable {
    pub rows: BTreeMap<TemplateId, BTreeMap<String, Cell>>,
}

impl ScoreTable {
    pub fn insert(
        &mut self,
        template: TemplateId,
        domain: &str,
        cell: Cell,
    ) -> Result<(), ReportError> {
        let row = self.rows.entry(template).or_default();
        if row.contains_key(domain) {
            return Err(ReportError::Duplicate {
                template,
                domain: domain.to_string(),
            });
        }
        row.insert(domain.to_string(), cell);
        Ok(())
    }

    /// Union of domains over all rows, sorted.
    pub fn domains(&self) -> Vec<String> {
        let set: BTreeSet<&String> = self.rows.values().flat_map(|r| r.keys()).collect();
        set.into_iter().cloned().collect()
    }

    pub fn templates(&self) -> Vec<TemplateId> {
        self.rows.keys().copied().collect()
    }

    /// Metrics with at least one value anywhere in the table.
    pub fn metrics(&self) -> Vec<Metric> {
        Metric::ALL
            .into_iter()
            .filter(|&m| {
                self.rows
                    .values()
                    .flat_map(|r| r.values())
                    .any(|c| c.get(m).is_some())
            })
            .collect()
    }

    pub fn value(&self, t: TemplateId, domain: &str, m: Metric) -> Option<f64> {
        self.rows.get(&t)?.get(domain)?.get(m)
    }

    pub fn cell(&self, t: TemplateId, domain: &str, m: Metric) -> Option<Centi> {
        self.value(t, domain, m).map(Centi::round)
    }

    fn row_centis(&self, t: TemplateId, m: Metric) -> Vec<Centi> {
        self.rows
            .get(&t)
            .map(|r| {
                r.values()
                    .filter_map(|c| c.get(m))
                    .map(Centi::round)
                    .collect()
            })
            .unwrap_or_default()
    }

    /// Unrounded mean of the two-decimal cells present for `t`.
    pub fn avg_exact(&self, t: TemplateId, m: Metric) -> Option<f64> {
        let cells = self.row_centis(t, m);
        if cells.is_empty() {
            return None;
        }
        Some(cells.iter().map(|c| c.0 as f64).sum::<f64>() / cells.len() as f64 / 100.0)
    }

    pub fn avg(&self, t: TemplateId, m: Metric) -> Option<Centi> {
        Centi::mean(&self.row_centis(t, m))
    }

    fn has_missing(&self, m: Metric) -> bool {
        let domains = self.domains();
        self.rows.values().any(|r| {
            domains
                .iter()
                .any(|d| r.get(d).and_then(|c| c.get(m)).is_none())
        })
    }
}

/// Builds a table from score files. Disambiguation accuracy is scaled to a
/// percentage; an absent accuracy (no annotated occurrences) stays absent.
pub fn aggregate<'a, I>(files: I) -> Result<ScoreTable, ReportError>
where
    I: IntoIterator<Item = &'a ScoreFile>,
{
    let mut table = ScoreTable::default();
    for f in files {
        table.insert(
            f.template,
            &f.domain,
            Cell {
                bleu: f.bleu,
                comet: f.comet,
                disamb: f.disamb.accuracy.map(|a| a * 100.0),
            },
        )?;
    }
    Ok(table)
}

/// (disambiguation template, base template).
pub type Pair = (TemplateId, TemplateId);

pub const DEFAULT_PAIRING: [Pair; 6] = [
    (TemplateId::T5, TemplateId::T1),
    (TemplateId::T6, TemplateId::T1),
    (TemplateId::T7, TemplateId::T2),
    (TemplateId::T8, TemplateId::T2),
    (TemplateId::T9, TemplateId::T3),
    (TemplateId::T10, TemplateId::T4),
];

/// Parses `default` or a comma list such as `T5-T1,T9-T3`.
pub fn parse_pairing(s: &str) -> Result<Vec<Pair>, ReportError> {
    if s.trim() == "default" {
        return Ok(DEFAULT_PAIRING.to_vec());
    }
    s.split(',')
        .map(|p| {
            let (a, b) = p
                .trim()
                .split_once('-')
                .ok_or_else(|| ReportError::Pairing(p.to_string()))?;
            let a = a.parse().map_err(|_| ReportError::Pairing(p.to_string()))?;
            let b = b.parse().map_err(|_| ReportError::Pairing(p.to_string()))?;
            Ok((a, b))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeltaRow {
    pub disamb: TemplateId,
    pub base: TemplateId,
    pub metric: Metric,
    /// Absent when either side lacks the cell.
    pub domains: BTreeMap<String, Option<Centi>>,
    pub avg: Option<Centi>,
}

impl DeltaRow {
    pub fn label(&self) -> String {
        format!("{}-{}", self.disamb, self.base)
    }
}

/// One row per (pair, metric). Pairs with a template missing from the table
/// are skipped with a warning.
pub fn delta(table: &ScoreTable, pairing: &[Pair]) -> (Vec<DeltaRow>, Vec<String>) {
    let mut rows = Vec::new();
    let mut warnings = Vec::new();
    let domains = table.domains();
    for &(d, b) in pairing {
        let missing: Vec<String> = [d, b]
            .iter()
            .filter(|t| !table.rows.contains_key(t))
            .map(|t| t.to_string())
            .collect();
        if !missing.is_empty() {
            warnings.push(format!(
                "skipping {d}-{b}: no scores for {}",
                missing.join(", ")
            ));
            continue;
        }
        for m in table.metrics() {
            let per_domain = domains
                .iter()
                .map(|dom| {
                    let v = match (table.cell(d, dom, m), table.cell(b, dom, m)) {
                        (Some(x), Some(y)) => Some(Centi(x.0 - y.0)),
                        _ => None,
                    };
                    (dom.clone(), v)
                })
                .collect();
            let avg = match (table.avg(d, m), table.avg(b, m)) {
                (Some(x), Some(y)) => Some(Centi(x.0 - y.0)),
                _ => None,
            };
            rows.push(DeltaRow {
                disamb: d,
                base: b,
                metric: m,
                domains: per_domain,
                avg,
            });
        }
    }
    (rows, warnings)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Markdown,
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "markdown" | "md" => Ok(Format::Markdown),
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            _ => Err(format!(
                "unknown format `{s}` (expected markdown, csv or json)"
            )),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportMeta {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bleu_signature: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub match_mode: Option<String>,
}

pub fn emit(table: &ScoreTable, deltas: &[DeltaRow], meta: &ReportMeta, format: Format) -> String {
    match format {
        Format::Markdown => emit_markdown(table, deltas, meta),
        Format::Csv => emit_csv(table, deltas),
        Format::Json => emit_json(table, deltas, meta),
    }
}

const MISSING: &str = "-";

/// Row groups: each base template followed by its disambiguation templates
/// (in pairing order) and their delta rows. Templates outside every pair
/// form their own group.
fn groups(table: &ScoreTable, deltas: &[DeltaRow]) -> Vec<Vec<TemplateId>> {
    let mut out: Vec<Vec<TemplateId>> = Vec::new();
    let mut placed = BTreeSet::new();
    for t in table.templates() {
        if placed.contains(&t) {
            continue;
        }
        let partners: Vec<TemplateId> = deltas
            .iter()
            .filter(|r| r.base == t)
            .map(|r| r.disamb)
            .fold(Vec::new(), |mut v, d| {
                if !v.contains(&d) && !placed.contains(&d) {
                    v.push(d);
                }
                v
            });
        let is_partner_elsewhere = deltas
            .iter()
            .any(|r| r.disamb == t && table.rows.contains_key(&r.base));
        if is_partner_elsewhere {
            continue;
        }
        let mut g = vec![t];
        g.extend(partners);
        placed.extend(g.iter().copied());
        out.push(g);
    }
    for t in table.templates() {
        if !placed.contains(&t) {
            placed.insert(t);
            out.push(vec![t]);
        }
    }
    out
}

fn emit_markdown(table: &ScoreTable, deltas: &[DeltaRow], meta: &ReportMeta) -> String {
    let domains = table.domains();
    let mut s = String::from("# Translation results\n");
    if let Some(sig) = &meta.bleu_signature {
        s.push_str(&format!("\nBLEU signature: `{sig}`\n"));
    }
    if let Some(mode) = &meta.match_mode {
        s.push_str(&format!("\nDisambiguation match mode: {mode}\n"));
    }
    let groups = groups(table, deltas);
    for m in table.metrics() {
        s.push_str(&format!("\n## {}\n\n| Strategy |", m.title()));
        for d in &domains {
            s.push_str(&format!(" {d} |"));
        }
        s.push_str(" AVG |\n|---|");
        for _ in &domains {
            s.push_str("---:|");
        }
        s.push_str("---:|\n");
        for g in &groups {
            let avgs: Vec<Centi> = g.iter().filter_map(|t| table.avg(*t, m)).collect();
            let best = if avgs.len() >= 2 {
                avgs.iter().max().copied()
            } else {
                None
            };
            for &t in g {
                s.push_str(&format!("| {t} |"));
                for d in &domains {
                    match table.cell(t, d, m) {
                        Some(c) => s.push_str(&format!(" {c} |")),
                        None => s.push_str(&format!(" {MISSING} |")),
                    }
                }
                match table.avg(t, m) {
                    Some(a) if Some(a) == best => s.push_str(&format!(" **{a}** |\n")),
                    Some(a) => s.push_str(&format!(" {a} |\n")),
                    None => s.push_str(&format!(" {MISSING} |\n")),
                }
                for r in deltas
                    .iter()
                    .filter(|r| r.disamb == t && r.metric == m && g.contains(&r.base))
                {
                    s.push_str(&format!("| {} |", r.label()));
                    for d in &domains {
                        match r.domains.get(d).copied().flatten() {
                            Some(c) => s.push_str(&format!(" {} |", c.signed())),
                            None => s.push_str(&format!(" {MISSING} |")),
                        }
                    }
                    match r.avg {
                        Some(a) => s.push_str(&format!(" {} |\n", a.signed())),
                        None => s.push_str(&format!(" {MISSING} |\n")),
                    }
                }
            }
        }
        if table.has_missing(m) {
            s.push_str(&format!(
                "\n`{MISSING}` marks a cell with no score; AVG is over the domains present.\n"
            ));
        }
    }
    s
}

/// Long format. `cell` rows carry full-precision values; `avg` and `delta`
/// rows carry the two-decimal display values.
fn emit_csv(table: &ScoreTable, deltas: &[DeltaRow]) -> String {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(["kind", "row", "domain", "metric", "value"])
        .expect("in-memory write");
    for (t, row) in &table.rows {
        for (d, cell) in row {
            for m in Metric::ALL {
                if let Some(v) = cell.get(m) {
                    w.write_record(["cell", &t.to_string(), d, m.as_str(), &v.to_string()])
                        .expect("in-memory write");
                }
            }
        }
    }
    for t in table.templates() {
        for m in Metric::ALL {
            if let Some(a) = table.avg(t, m) {
                w.write_record(["avg", &t.to_string(), "AVG", m.as_str(), &a.to_string()])
                    .expect("in-memory write");
            }
        }
    }
    for r in deltas {
        let label = r.label();
        for (d, v) in &r.domains {
            if let Some(v) = v {
                w.write_record(["delta", &label, d, r.metric.as_str(), &v.signed()])
                    .expect("in-memory write");
            }
        }
        if let Some(a) = r.avg {
            w.write_record(["delta", &label, "AVG", r.metric.as_str(), &a.signed()])
                .expect("in-memory write");
        }
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
}

/// Reads back the `cell` rows of a CSV report.
pub fn parse_csv(s: &str) -> Result<ScoreTable, ReportError> {
    let mut r = csv::Reader::from_reader(s.as_bytes());
    let mut table = ScoreTable::default();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let err = |msg: String| ReportError::Parse { line, msg };
        if rec.len() != 5 {
            return Err(err(format!("expected 5 columns, found {}", rec.len())));
        }
        if &rec[0] != "cell" {
            continue;
        }
        let t: TemplateId = rec[1]
            .parse()
            .map_err(|_| err(format!("bad template `{}`", &rec[1])))?;
        let m: Metric = rec[3].parse().map_err(err)?;
        let v: f64 = rec[4]
            .parse()
            .map_err(|_| err(format!("bad value `{}`", &rec[4])))?;
        let slot = table
            .rows
            .entry(t)
            .or_default()
            .entry(rec[2].to_string())
            .or_default()
            .slot(m);
        if slot.is_some() {
            return Err(ReportError::Duplicate {
                template: t,
                domain: rec[2].to_string(),
            });
        }
        *slot = Some(v);
    }
    Ok(table)
}

#[derive(Serialize, Deserialize)]
struct JsonReport {
    #[serde(default)]
    meta: ReportMeta,
    domains: Vec<String>,
    rows: BTreeMap<TemplateId, BTreeMap<String, Cell>>,
    #[serde(default)]
    averages: BTreeMap<TemplateId, BTreeMap<Metric, String>>,
    #[serde(default)]
    deltas: Vec<JsonDelta>,
}

#[derive(Serialize, Deserialize)]
struct JsonDelta {
    pair: String,
    metric: Metric,
    domains: BTreeMap<String, Option<String>>,
    avg: Option<String>,
}

fn emit_json(table: &ScoreTable, deltas: &[DeltaRow], meta: &ReportMeta) -> String {
    let averages = table
        .templates()
        .into_iter()
        .map(|t| {
            let avgs = Metric::ALL
                .into_iter()
                .filter_map(|m| table.avg(t, m).map(|a| (m, a.to_string())))
                .collect();
            (t, avgs)
        })
        .collect();
    let report = JsonReport {
        meta: meta.clone(),
        domains: table.domains(),
        rows: table.rows.clone(),
        averages,
        deltas: deltas
            .iter()
            .map(|r| JsonDelta {
                pair: r.label(),
                metric: r.metric,
                domains: r
                    .domains
                    .iter()
                    .map(|(d, v)| (d.clone(), v.map(Centi::signed)))
                    .collect(),
                avg: r.avg.map(Centi::signed),
            })
            .collect(),
    };
    let mut s = serde_json::to_string_pretty(&report).expect("report serializes");
    s.push('\n');
    s
}

pub fn parse_json(s: &str) -> Result<ScoreTable, ReportError> {
    let report: JsonReport = serde_json::from_str(s)?;
    Ok(ScoreTable { rows: report.rows })
}
