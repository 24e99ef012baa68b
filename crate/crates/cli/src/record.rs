//! Per-step evaluation records and their CSV and plot-data renderings.
//!
//! CSV columns, in order:
//!
//! | column | meaning |
//! |---|---|
//! | `mode` | `online` or `batch` |
//! | `seed` | forest and shuffle seed of the run |
//! | `step` | 1-based index of the mini-batch or training fraction |
//! | `fraction_seen` | share of the training split used so far |
//! | `points_seen` | number of training points used so far |
//! | `cumulative_train_seconds` | wall-clock time spent training, excluding evaluation and I/O |
//! | `test_accuracy` | exact-match accuracy on the full test split |
//! | `mean_weighted_depth` | data-weighted leaf depth averaged over trees |
//! | `num_trees`, `lifetime`, `gamma_multiplier`, `use_pausing` | forest configuration |
//!
//! `cumulative_train_seconds` is the only column that varies between runs
//! with the same seed.

use std::fs;
use std::io::Write;
use std::path::Path;

use mondrian_forest::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub mode: String,
    pub seed: u64,
    pub step: usize,
    pub fraction_seen: f64,
    pub points_seen: usize,
    pub cumulative_train_seconds: f64,
    pub test_accuracy: f64,
    pub mean_weighted_depth: f64,
    pub num_trees: usize,
    pub lifetime: f64,
    pub gamma_multiplier: f64,
    pub use_pausing: bool,
}

pub const CSV_HEADER: &str = "mode,seed,step,fraction_seen,points_seen,cumulative_train_seconds,\
test_accuracy,mean_weighted_depth,num_trees,lifetime,gamma_multiplier,use_pausing";

/// Index of the timing column in [`CSV_HEADER`].
pub const TIMING_COLUMN: usize = 5;

fn csv_error(e: csv::Error) -> Error {
    Error::InvalidArgument(format!("csv: {e}"))
}

pub fn to_csv(records: &[RunRecord]) -> Result<String> {
    let mut writer = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    for r in records {
        writer.serialize(r).map_err(csv_error)?;
    }
    let body = writer.into_inner().map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut out = String::with_capacity(CSV_HEADER.len() + 1 + body.len());
    out.push_str(CSV_HEADER);
    out.push('\n');
    out.push_str(std::str::from_utf8(&body).expect("csv output is utf-8"));
    Ok(out)
}

pub fn from_csv(text: &str) -> Result<Vec<RunRecord>> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = reader.headers().map_err(csv_error)?.iter().map(str::to_owned).collect();
    if header.join(",") != CSV_HEADER {
        return Err(Error::InvalidArgument(format!("unexpected header {:?}", header.join(","))));
    }
    reader
        .deserialize()
        .collect::<std::result::Result<Vec<RunRecord>, _>>()
        .map_err(csv_error)
}

/// CSV rows with the timing column removed, for reproducibility checks.
pub fn without_timing(csv_text: &str) -> Vec<String> {
    csv_text
        .lines()
        .map(|line| {
            line.split(',')
                .enumerate()
                .filter(|(i, _)| *i != TIMING_COLUMN)
                .map(|(_, f)| f)
                .collect::<Vec<_>>()
                .join(",")
        })
        .collect()
}

/// Whitespace-separated columns for gnuplot or similar tools: one block per
/// seed, separated by two blank lines so `index` selects a run.
pub fn to_plot_data(records: &[RunRecord]) -> String {
    let mut out = String::from("# fraction_seen cumulative_train_seconds test_accuracy mean_weighted_depth\n");
    let mut last_key: Option<(&str, u64)> = None;
    for r in records {
        let key = (r.mode.as_str(), r.seed);
        if last_key.is_some_and(|k| k != key) {
            out.push_str("\n\n");
        }
        if last_key != Some(key) {
            out.push_str(&format!("# mode={} seed={}\n", r.mode, r.seed));
        }
        last_key = Some(key);
        out.push_str(&format!(
            "{} {} {} {}\n",
            r.fraction_seen, r.cumulative_train_seconds, r.test_accuracy, r.mean_weighted_depth
        ));
    }
    out
}

/// Write `records` as CSV to `path` and as plot data next to it (same stem,
/// `.dat` extension).
pub fn write_outputs(path: &Path, records: &[RunRecord]) -> Result<()> {
    fs::write(path, to_csv(records)?).map_err(Error::io(path))?;
    let dat_path = path.with_extension("dat");
    let mut dat = fs::File::create(&dat_path).map_err(Error::io(&dat_path))?;
    dat.write_all(to_plot_data(records).as_bytes()).map_err(Error::io(&dat_path))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(seed: u64, step: usize) -> RunRecord {
        RunRecord {
            mode: "online".into(),
            seed,
            step,
            fraction_seen: step as f64 / 2.0,
            points_seen: 10 * step,
            cumulative_train_seconds: 0.25 * step as f64,
            test_accuracy: 0.5,
            mean_weighted_depth: 3.0,
            num_trees: 100,
            lifetime: f64::INFINITY,
            gamma_multiplier: 10.0,
            use_pausing: true,
        }
    }

    #[test]
    fn csv_round_trip() {
        let records = vec![record(1, 1), record(1, 2), record(2, 1)];
        let text = to_csv(&records).unwrap();
        assert!(text.starts_with(CSV_HEADER));
        assert_eq!(text.lines().count(), 4);
        assert_eq!(from_csv(&text).unwrap(), records);
        assert!(text.contains(",inf,"));
    }

    #[test]
    fn timing_column_is_dropped() {
        let mut a = vec![record(1, 1)];
        let b = a.clone();
        a[0].cumulative_train_seconds = 99.0;
        let (ta, tb) = (to_csv(&a).unwrap(), to_csv(&b).unwrap());
        assert_ne!(ta, tb);
        assert_eq!(without_timing(&ta), without_timing(&tb));
        assert!(!without_timing(&ta)[0].contains("cumulative_train_seconds"));
    }

    #[test]
    fn plot_blocks_per_seed() {
        let text = to_plot_data(&[record(1, 1), record(1, 2), record(2, 1)]);
        assert_eq!(text.matches("# mode=").count(), 2);
        assert_eq!(text.matches("\n\n\n").count(), 1);
    }
}
