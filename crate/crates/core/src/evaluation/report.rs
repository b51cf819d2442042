use std::collections::BTreeMap;
use std::fmt::Write as _;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use super::{Category, EvalError, TrialResult};

/// Version written in the first column of every CSV row.
pub const CSV_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tally {
    pub trials: u64,
    pub successes: u64,
}

impl Tally {
    pub fn add(&mut self, success: bool) {
        self.trials += 1;
        self.successes += u64::from(success);
    }

    /// Exact success rate; `None` when there were no trials.
    pub fn rate(&self) -> Option<Ratio<u64>> {
        (self.trials > 0).then(|| Ratio::new(self.successes, self.trials))
    }

    /// Whole percent, rounded half up; `n/a` when there were no trials.
    pub fn percent_label(&self) -> String {
        match self.trials {
            0 => "n/a".into(),
            t => format!("{}%", (200 * self.successes + t) / (2 * t)),
        }
    }

    pub fn count_label(&self) -> String {
        format!("{}/{}", self.successes, self.trials)
    }
}

/// One timed attempt of a pipeline stage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageSample {
    pub stage: String,
    pub success: bool,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageRow {
    pub stage: String,
    pub tally: Tally,
    pub mean_seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuccessReport {
    pub overall: Tally,
    /// Every category, including ones without trials.
    pub per_category: BTreeMap<Category, Tally>,
    pub per_task: BTreeMap<String, Tally>,
    /// Stages in first-seen order.
    pub stages: Vec<StageRow>,
}

/// Folds trial results and stage timings into counts. Fails only when both
/// inputs are empty.
pub fn aggregate_report(results: &[TrialResult], stages: &[StageSample]) -> Result<SuccessReport, EvalError> {
    if results.is_empty() && stages.is_empty() {
        return Err(EvalError::EmptyResults);
    }
    let mut overall = Tally::default();
    let mut per_category: BTreeMap<Category, Tally> = Category::ALL.into_iter().map(|c| (c, Tally::default())).collect();
    let mut per_task: BTreeMap<String, Tally> = BTreeMap::new();
    for r in results {
        let ok = r.success && r.error.is_none();
        overall.add(ok);
        per_category.entry(r.category).or_default().add(ok);
        per_task.entry(r.task_name.clone()).or_default().add(ok);
    }

    let mut rows: Vec<(String, Tally, f64)> = Vec::new();
    for s in stages {
        let i = match rows.iter().position(|r| r.0 == s.stage) {
            Some(i) => i,
            None => {
                rows.push((s.stage.clone(), Tally::default(), 0.0));
                rows.len() - 1
            }
        };
        rows[i].1.add(s.success);
        rows[i].2 += s.seconds;
    }
    let stages = rows
        .into_iter()
        .map(|(stage, tally, total)| StageRow { stage, mean_seconds: total / tally.trials as f64, tally })
        .collect();
    Ok(SuccessReport { overall, per_category, per_task, stages })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Text,
    Csv,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "text" => Ok(Self::Text),
            "csv" => Ok(Self::Csv),
            other => Err(format!("unknown report format {other:?} (expected text or csv)")),
        }
    }
}

pub fn render_report(report: &SuccessReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Text => render_text(report),
        ReportFormat::Csv => render_csv(report),
    }
}

fn table(out: &mut String, header: &[&str], rows: &[Vec<String>]) {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for r in rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.len());
        }
    }
    let line = |cells: Vec<&str>| {
        let mut s = String::new();
        for (i, (c, w)) in cells.iter().zip(&widths).enumerate() {
            if i + 1 == cells.len() {
                s.push_str(c);
            } else {
                let _ = write!(s, "{c:<w$}  ");
            }
        }
        s.trim_end().to_string()
    };
    out.push_str(&line(header.to_vec()));
    out.push('\n');
    for r in rows {
        out.push_str(&line(r.iter().map(String::as_str).collect()));
        out.push('\n');
    }
}

fn render_text(report: &SuccessReport) -> String {
    let mut out = String::new();
    if !report.stages.is_empty() {
        let rows: Vec<Vec<String>> = report
            .stages
            .iter()
            .map(|r| {
                vec![
                    r.stage.clone(),
                    r.tally.percent_label(),
                    r.tally.count_label(),
                    format!("{:.2} s", r.mean_seconds),
                ]
            })
            .collect();
        table(&mut out, &["Task", "Success Rate", "Count", "Average Inference Time"], &rows);
        out.push('\n');
    }
    let cat_rows: Vec<Vec<String>> = report
        .per_category
        .iter()
        .map(|(c, t)| vec![c.to_string(), t.percent_label(), t.count_label()])
        .collect();
    table(&mut out, &["Category", "Success Rate", "Count"], &cat_rows);
    if !report.per_task.is_empty() {
        out.push('\n');
        let mut rows: Vec<Vec<String>> = report
            .per_task
            .iter()
            .map(|(name, t)| vec![name.clone(), t.percent_label(), t.count_label()])
            .collect();
        rows.push(vec!["overall".into(), report.overall.percent_label(), report.overall.count_label()]);
        table(&mut out, &["Task", "Success Rate", "Count"], &rows);
    }
    out
}

/// Columns: schema_version, section (`stage`, `category`, `task`,
/// `overall`), name, trials, successes, rate_percent (`n/a` when empty),
/// mean_seconds (stage rows only).
fn render_csv(report: &SuccessReport) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let v = CSV_SCHEMA_VERSION.to_string();
    w.write_record(["schema_version", "section", "name", "trials", "successes", "rate_percent", "mean_seconds"])
        .expect("in-memory write");
    let mut row = |section: &str, name: &str, t: &Tally, mean: Option<f64>| {
        let pct = t.percent_label();
        w.write_record([
            v.as_str(),
            section,
            name,
            &t.trials.to_string(),
            &t.successes.to_string(),
            pct.trim_end_matches('%'),
            &mean.map(|m| m.to_string()).unwrap_or_default(),
        ])
        .expect("in-memory write");
    };
    for s in &report.stages {
        row("stage", &s.stage, &s.tally, Some(s.mean_seconds));
    }
    for (c, t) in &report.per_category {
        row("category", c.as_str(), t, None);
    }
    for (name, t) in &report.per_task {
        row("task", name, t, None);
    }
    row("overall", "all", &report.overall, None);
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
}
