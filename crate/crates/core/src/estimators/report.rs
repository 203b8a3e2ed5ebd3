//! Experiment reports and their JSON, CSV and plot-data renderings.

use serde::{Deserialize, Serialize};

/// Bumped whenever the report layout changes.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
    /// Reported for context; does not affect the outcome.
    Info,
}

impl Verdict {
    pub fn from_bool(ok: bool) -> Self {
        if ok {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
            Verdict::Info => "info",
        }
    }
}

/// One reported statistic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Entry {
    pub name: String,
    pub estimate: f64,
    pub stderr: Option<f64>,
    pub target: Option<f64>,
    pub ratio: Option<f64>,
    pub verdict: Verdict,
}

impl Entry {
    pub fn new(name: impl Into<String>, estimate: f64) -> Self {
        Self {
            name: name.into(),
            estimate,
            stderr: None,
            target: None,
            ratio: None,
            verdict: Verdict::Info,
        }
    }

    pub fn stderr(mut self, se: f64) -> Self {
        self.stderr = Some(se);
        self
    }

    /// Sets the target and the ratio `estimate / target` (omitted for a zero target).
    pub fn target(mut self, target: f64) -> Self {
        self.target = Some(target);
        self.ratio = (target != 0.0).then(|| self.estimate / target);
        self
    }

    pub fn verdict(mut self, v: Verdict) -> Self {
        self.verdict = v;
        self
    }

    /// Pass iff `|estimate - target| <= k * stderr`.
    pub fn within_se(self, k: f64) -> Self {
        let ok = match (self.target, self.stderr) {
            (Some(t), Some(se)) => (self.estimate - t).abs() <= k * se,
            _ => false,
        };
        self.verdict(Verdict::from_bool(ok))
    }

    /// Pass iff the ratio lies in `[lo, hi]`.
    pub fn ratio_within(self, lo: f64, hi: f64) -> Self {
        let ok = self.ratio.is_some_and(|r| (lo..=hi).contains(&r));
        self.verdict(Verdict::from_bool(ok))
    }

    /// Pass iff `|estimate / target - 1| <= tol`.
    pub fn relative_within(self, tol: f64) -> Self {
        let ok = self.ratio.is_some_and(|r| (r - 1.0).abs() <= tol);
        self.verdict(Verdict::from_bool(ok))
    }
}

/// One point of a plot series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotPoint {
    pub series: String,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub schema_version: u32,
    pub experiment: String,
    /// Echo of the configuration that produced the report.
    pub config: serde_json::Value,
    pub entries: Vec<Entry>,
    /// Number of independent replication batches.
    pub batches: usize,
    pub total_paths: u64,
    pub notes: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub plot: Vec<PlotPoint>,
}

impl ExperimentReport {
    pub fn new(experiment: impl Into<String>, batches: usize, total_paths: u64) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            experiment: experiment.into(),
            config: serde_json::Value::Null,
            entries: Vec::new(),
            batches,
            total_paths,
            notes: Vec::new(),
            plot: Vec::new(),
        }
    }

    pub fn push(&mut self, e: Entry) {
        self.entries.push(e);
    }

    pub fn note(&mut self, s: impl Into<String>) {
        self.notes.push(s.into());
    }

    pub fn plot_point(&mut self, series: impl Into<String>, x: f64, y: f64) {
        self.plot.push(PlotPoint {
            series: series.into(),
            x,
            y,
        });
    }

    pub fn entry(&self, name: &str) -> Option<&Entry> {
        self.entries.iter().find(|e| e.name == name)
    }

    /// No entry failed.
    pub fn all_pass(&self) -> bool {
        self.entries.iter().all(|e| e.verdict != Verdict::Fail)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Entry> {
        self.entries.iter().filter(|e| e.verdict == Verdict::Fail)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("reports are plain data");
        s.push('\n');
        s
    }

    /// Flat rows `experiment,statistic,estimate,stderr,target,ratio,verdict`.
    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let mut s = String::from("experiment,statistic,estimate,stderr,target,ratio,verdict\n");
        for e in &self.entries {
            s.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                self.experiment,
                csv_field(&e.name),
                e.estimate,
                opt(e.stderr),
                opt(e.target),
                opt(e.ratio),
                e.verdict.as_str()
            ));
        }
        s
    }

    /// Plot series as `series,x,y` rows.
    pub fn plot_csv(&self) -> String {
        let mut s = String::from("series,x,y\n");
        for p in &self.plot {
            s.push_str(&format!("{},{},{}\n", csv_field(&p.series), p.x, p.y));
        }
        s
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
