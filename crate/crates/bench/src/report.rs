//! Timing statistics and the CSV report format.

use std::fmt::Write as _;
use std::time::Duration;

pub const CSV_HEADER: &str = "workload,iters,trials,mean_s,std_s,peak_nodes,peak_bytes,checks";

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub workload: String,
    pub iterations: usize,
    pub trials: usize,
    /// Wall time of each timing sample in nanoseconds.
    pub samples_ns: Vec<u128>,
    pub mean_s: f64,
    /// Sample standard deviation; zero when there is a single sample.
    pub std_s: f64,
    pub peak_nodes: usize,
    pub peak_bytes: usize,
    pub checks_passed: bool,
    /// Free-form lines shown on the terminal but not written to CSV.
    pub notes: Vec<String>,
}

/// Mean and `n - 1` standard deviation in seconds.
pub fn mean_std(samples: &[Duration]) -> (f64, f64) {
    if samples.is_empty() {
        return (0.0, 0.0);
    }
    let xs: Vec<f64> = samples.iter().map(Duration::as_secs_f64).collect();
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

impl BenchReport {
    pub fn new(workload: &str, iterations: usize, trials: usize, samples: &[Duration]) -> Self {
        let (mean_s, std_s) = mean_std(samples);
        BenchReport {
            workload: workload.to_string(),
            iterations,
            trials,
            samples_ns: samples.iter().map(Duration::as_nanos).collect(),
            mean_s,
            std_s,
            peak_nodes: 0,
            peak_bytes: 0,
            checks_passed: true,
            notes: Vec::new(),
        }
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{:e},{:e},{},{},{}",
            self.workload,
            self.iterations,
            self.trials,
            self.mean_s,
            self.std_s,
            self.peak_nodes,
            self.peak_bytes,
            if self.checks_passed { "pass" } else { "fail" }
        )
    }

    pub fn summary(&self) -> String {
        let mut s = format!(
            "{}: {} iters x {} trials, mean {:.6} s, std {:.6} s, peak {} nodes / {} bytes, checks {}",
            self.workload,
            self.iterations,
            self.trials,
            self.mean_s,
            self.std_s,
            self.peak_nodes,
            self.peak_bytes,
            if self.checks_passed { "pass" } else { "FAIL" }
        );
        for n in &self.notes {
            let _ = write!(s, "\n  {n}");
        }
        s
    }
}

pub fn to_csv(reports: &[BenchReport]) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for r in reports {
        s.push_str(&r.csv_row());
        s.push('\n');
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_std_uses_n_minus_one() {
        let d = [Duration::from_secs(1), Duration::from_secs(3)];
        let (m, s) = mean_std(&d);
        assert_eq!(m, 2.0);
        assert!((s - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(mean_std(&d[..1]), (1.0, 0.0));
    }

    #[test]
    fn csv_has_fixed_columns() {
        let r = BenchReport::new("tiny", 10, 2, &[Duration::from_millis(5), Duration::from_millis(7)]);
        let csv = to_csv(&[r]);
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), CSV_HEADER);
        let row = lines.next().unwrap();
        assert_eq!(row.split(',').count(), 8);
        assert!(row.starts_with("tiny,10,2,") && row.ends_with(",pass"));
    }
}
