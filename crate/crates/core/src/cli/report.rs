//! Run reports: a human-readable block followed by `key=value` lines.

use std::collections::BTreeMap;
use std::fmt::Write;

#[derive(Debug, Clone, PartialEq)]
pub struct FoldLine {
    pub fold: usize,
    pub n_test: usize,
    pub accuracy: f64,
    pub mean_class_accuracy: f64,
    pub c1: Option<f64>,
    pub c2: Option<f64>,
    pub n_active: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunReport {
    pub command: String,
    pub seed: u64,
    /// Effective configuration, in echo order.
    pub config: Vec<(String, String)>,
    pub folds: Vec<FoldLine>,
    pub mean_accuracy: Option<f64>,
    pub mean_class_accuracy: Option<f64>,
    pub results: Vec<(String, String)>,
    /// Wall-clock seconds; never part of a deterministic report file.
    pub timings: Vec<(String, f64)>,
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |v| v.to_string())
}

impl RunReport {
    pub fn new(command: &str, seed: u64) -> RunReport {
        RunReport {
            command: command.to_string(),
            seed,
            ..Default::default()
        }
    }

    pub fn config(&mut self, key: &str, value: impl ToString) {
        self.config.push((key.to_string(), value.to_string()));
    }

    pub fn result(&mut self, key: &str, value: impl ToString) {
        self.results.push((key.to_string(), value.to_string()));
    }

    pub fn time(&mut self, key: &str, secs: f64) {
        self.timings.push((key.to_string(), secs.max(0.0)));
    }

    /// Stores the folds and their arithmetic mean metrics.
    pub fn set_folds(&mut self, folds: Vec<FoldLine>) {
        let n = folds.len() as f64;
        if !folds.is_empty() {
            self.mean_accuracy = Some(folds.iter().map(|f| f.accuracy).sum::<f64>() / n);
            self.mean_class_accuracy = Some(folds.iter().map(|f| f.mean_class_accuracy).sum::<f64>() / n);
        }
        self.folds = folds;
    }

    pub fn human(&self, timings: bool) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "mbkl {} (seed {})", self.command, self.seed);
        let width = self
            .config
            .iter()
            .chain(&self.results)
            .map(|(k, _)| k.len())
            .max()
            .unwrap_or(0);
        let _ = writeln!(s, "configuration:");
        for (k, v) in &self.config {
            let _ = writeln!(s, "  {k:<width$}  {v}");
        }
        if !self.folds.is_empty() {
            let _ = writeln!(s, "folds:");
            let _ = writeln!(s, "  {:>4}  {:>6}  {:>8}  {:>10}  {:>8}  {:>8}  {:>7}", "fold", "n_test", "accuracy", "mean_class", "c1", "c2", "active");
            for f in &self.folds {
                let _ = writeln!(
                    s,
                    "  {:>4}  {:>6}  {:>8.4}  {:>10.4}  {:>8}  {:>8}  {:>7}",
                    f.fold,
                    f.n_test,
                    f.accuracy,
                    f.mean_class_accuracy,
                    opt(f.c1),
                    opt(f.c2),
                    f.n_active
                );
            }
        }
        if let Some(a) = self.mean_accuracy {
            let _ = writeln!(s, "mean accuracy: {:.2}%", 100.0 * a);
        }
        if let Some(a) = self.mean_class_accuracy {
            let _ = writeln!(s, "mean per-class accuracy: {:.2}%", 100.0 * a);
        }
        if !self.results.is_empty() {
            let _ = writeln!(s, "results:");
            for (k, v) in &self.results {
                let _ = writeln!(s, "  {k:<width$}  {v}");
            }
        }
        if timings && !self.timings.is_empty() {
            let _ = writeln!(s, "wall time (s):");
            for (k, v) in &self.timings {
                let _ = writeln!(s, "  {k:<10}  {v:.3}");
            }
        }
        s
    }

    pub fn key_values(&self, timings: bool) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "command={}", self.command);
        let _ = writeln!(s, "seed={}", self.seed);
        for (k, v) in &self.config {
            let _ = writeln!(s, "config.{k}={v}");
        }
        for f in &self.folds {
            let p = format!("fold.{}", f.fold);
            let _ = writeln!(s, "{p}.n_test={}", f.n_test);
            let _ = writeln!(s, "{p}.accuracy={}", f.accuracy);
            let _ = writeln!(s, "{p}.mean_class_accuracy={}", f.mean_class_accuracy);
            let _ = writeln!(s, "{p}.c1={}", opt(f.c1));
            let _ = writeln!(s, "{p}.c2={}", opt(f.c2));
            let _ = writeln!(s, "{p}.n_active={}", f.n_active);
        }
        if let Some(a) = self.mean_accuracy {
            let _ = writeln!(s, "mean_accuracy={a}");
        }
        if let Some(a) = self.mean_class_accuracy {
            let _ = writeln!(s, "mean_class_accuracy={a}");
        }
        for (k, v) in &self.results {
            let _ = writeln!(s, "{k}={v}");
        }
        if timings {
            for (k, v) in &self.timings {
                let _ = writeln!(s, "time.{k}={v}");
            }
        }
        s
    }

    pub fn render(&self, timings: bool) -> String {
        format!("{}\n{}", self.human(timings), self.key_values(timings))
    }
}

/// Reads the `key=value` lines of a rendered report.
pub fn parse_key_values(text: &str) -> BTreeMap<String, String> {
    text.lines()
        .filter(|l| !l.starts_with(' '))
        .filter_map(|l| l.split_once('='))
        .filter(|(k, _)| !k.contains(' '))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(fold: usize, acc: f64) -> FoldLine {
        FoldLine {
            fold,
            n_test: 10,
            accuracy: acc,
            mean_class_accuracy: acc,
            c1: Some(1.0),
            c2: None,
            n_active: 3,
        }
    }

    #[test]
    fn means_and_key_values() {
        let mut r = RunReport::new("train", 7);
        r.config("stumps", 100);
        r.set_folds(vec![line(0, 0.5), line(1, 1.0)]);
        r.time("total", -1e-9);
        assert_eq!(r.mean_accuracy, Some(0.75));
        let kv = parse_key_values(&r.render(true));
        assert_eq!(kv["mean_accuracy"], "0.75");
        assert_eq!(kv["config.stumps"], "100");
        assert_eq!(kv["fold.1.c2"], "-");
        assert_eq!(kv["time.total"], "0");
        assert!(!r.render(false).contains("time."));
    }
}
