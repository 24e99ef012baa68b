//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit status
//! if any criterion fails.
//!
//! Criterion 5 and 7 use the satimage split when `MONDRIAN_SATIMAGE_TRAIN`
//! and `MONDRIAN_SATIMAGE_TEST` point at LIBSVM files; otherwise they run on
//! synthetic data only.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use mondrian_cli::checks::{self, EquivalenceConfig, McConfig};
use mondrian_cli::protocol::{self, RunConfig, Split};
use mondrian_cli::synth;
use mondrian_forest::{Format, LabelMap, LoadOptions};

struct Outcome {
    passed: bool,
    summary: String,
    details: String,
}

impl Outcome {
    fn new(passed: bool, summary: impl Into<String>, details: impl Into<String>) -> Self {
        Self {
            passed,
            summary: summary.into(),
            details: details.into(),
        }
    }
}

type Criterion = (&'static str, fn() -> Outcome);

fn satimage() -> Option<(PathBuf, PathBuf)> {
    let train = std::env::var_os("MONDRIAN_SATIMAGE_TRAIN")?;
    let test = std::env::var_os("MONDRIAN_SATIMAGE_TEST")?;
    Some((train.into(), test.into()))
}

fn synthetic_split(n_train: usize, n_test: usize, dim: usize, seed: u64) -> Split {
    protocol::prepare_split(
        synth::two_class(n_train, dim, seed).unwrap(),
        synth::two_class(n_test, dim, seed + 1).unwrap(),
        LabelMap::from_raw(vec!["0".into(), "1".into()]),
    )
}

fn equivalence() -> Outcome {
    let start = Instant::now();
    let mut details = String::new();
    let mut ok = true;
    for lifetime in [f64::INFINITY, 3.0] {
        let cfg = EquivalenceConfig {
            lifetime,
            ..EquivalenceConfig::default()
        };
        let r = checks::online_vs_batch(&cfg).unwrap();
        ok &= r.passed();
        details += &format!("{r}\n");
    }
    let broken = checks::online_vs_batch(&EquivalenceConfig {
        broken_extension: true,
        ..EquivalenceConfig::default()
    })
    .unwrap();
    let mutation_caught = !broken.passed();
    details += &format!("{broken}\n");
    let elapsed = start.elapsed();
    let in_time = elapsed < Duration::from_secs(120);
    Outcome::new(
        ok && mutation_caught && in_time,
        format!(
            "online = batch on N=50, 2000 seeds (KS p > 0.01 on all marginals: {ok}); broken extension rejected: {mutation_caught}; {:.1}s",
            elapsed.as_secs_f64()
        ),
        details,
    )
}

fn order_invariance() -> Outcome {
    let mut details = String::new();
    let mut ok = true;
    let mut min_p: f64 = 1.0;
    for lifetime in [f64::INFINITY, 3.0] {
        let r = checks::order_invariance(&EquivalenceConfig {
            lifetime,
            ..EquivalenceConfig::default()
        })
        .unwrap();
        ok &= r.passed();
        min_p = min_p.min(r.min_p_value());
        details += &format!("{r}\n");
    }
    Outcome::new(ok, format!("two random insertion orders, min p = {min_p:.4}"), details)
}

fn mc_prediction() -> Outcome {
    let start = Instant::now();
    let r = checks::mc_check(&McConfig::default()).unwrap();
    let elapsed = start.elapsed();
    let in_time = elapsed < Duration::from_secs(300);
    Outcome::new(
        r.passed() && in_time && r.fixtures.len() >= 20,
        format!(
            "{} fixtures, max exterior deviation {:.2e} < 0.01, interior deviation {:.1e}; {:.1}s",
            r.fixtures.len(),
            r.max_exterior_deviation(),
            r.max_interior_deviation(),
            elapsed.as_secs_f64()
        ),
        r.to_string(),
    )
}

fn posterior_counts() -> Outcome {
    let r = checks::counts_check(1000, 0).unwrap();
    Outcome::new(r.passed(), r.to_string(), String::new())
}

fn depth_scaling() -> Outcome {
    let cfg = RunConfig::default();
    let r = checks::depth_scaling(&[500, 1000, 2000, 4000, 8000], &cfg).unwrap();
    let mut details = r.to_string();
    let mut ok = r.passed();
    let mut summary = match r.fit {
        Some(f) => format!("synthetic: slope {:.3}, R^2 {:.4}", f.slope, f.r_squared),
        None => "synthetic: no fit".into(),
    };
    match satimage() {
        Some((train, test)) => {
            let split = protocol::load_split(&train, &test, &LoadOptions::new(Format::Libsvm)).unwrap();
            let d = protocol::depth_stats(&split.train, &cfg, 0).unwrap();
            let in_band = (d.mean - 17.4).abs() <= 3.2;
            ok &= in_band;
            summary += &format!("; satimage depth {:.2} (band 17.4 ± 3.2)", d.mean);
            details += &format!("\nsatimage: {d}");
        }
        None => summary += "; satimage not provided",
    }
    Outcome::new(ok, summary, details)
}

fn complexity() -> Outcome {
    let r = checks::complexity(4000, 8000, 5, &RunConfig::default()).unwrap();
    Outcome::new(r.passed(), r.to_string(), String::new())
}

fn batch_parity() -> Outcome {
    let cfg = RunConfig::default();
    let split = synthetic_split(4000, 2000, 5, 11);
    let r = checks::batch_parity(&split, &cfg).unwrap();
    let mut ok = r.passed();
    let mut summary = format!("synthetic N=4000: {r}");
    if let Some((train, test)) = satimage() {
        let split = protocol::load_split(&train, &test, &LoadOptions::new(Format::Libsvm)).unwrap();
        let s = checks::batch_parity(&split, &cfg).unwrap();
        ok &= s.passed();
        summary += &format!("; satimage: {s}");
    }
    Outcome::new(ok, summary, String::new())
}

fn determinism() -> Outcome {
    let split = synthetic_split(1000, 500, 3, 21);
    let cfg = RunConfig {
        seed: 17,
        ..RunConfig::default()
    };
    let r = checks::determinism(&split, &cfg).unwrap();
    Outcome::new(r.passed(), r.to_string(), String::new())
}

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("online/batch equivalence", equivalence),
        ("order invariance", order_invariance),
        ("analytic vs Monte Carlo prediction", mc_prediction),
        ("posterior counts", posterior_counts),
        ("depth scaling", depth_scaling),
        ("training complexity", complexity),
        ("batch parity", batch_parity),
        ("determinism", determinism),
    ];
    let mut failures = 0;
    let mut lines = Vec::new();
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = run();
        let verdict = if outcome.passed { "PASS" } else { "FAIL" };
        failures += usize::from(!outcome.passed);
        if !outcome.details.is_empty() {
            println!("{}", outcome.details.trim_end());
        }
        let line = format!(
            "{verdict} criterion {} ({name}): {} [{:.1}s]",
            i + 1,
            outcome.summary,
            start.elapsed().as_secs_f64()
        );
        println!("{line}\n");
        lines.push(line);
    }
    println!("summary:");
    for line in &lines {
        println!("  {line}");
    }
    println!("{} of {} criteria passed", criteria.len() - failures, criteria.len());
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
