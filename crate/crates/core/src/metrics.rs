//! Time-dependent concordance and bootstrap confidence intervals.
//!
//! The concordance index is deliberately the brute-force definition: every
//! ordered pair is enumerated. A pair (i, j) is comparable when instance i's
//! event was observed and its time bin strictly precedes j's; it counts 1
//! when the model ranks i at higher risk at i's own event time, 0.5 on a
//! tie. Risk is read through a caller-supplied function
//! `cdf_at_event(i, j) = F(t_i | x_j)`, keeping this module independent of
//! any particular model.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("no comparable pairs: need at least one observed event with a strictly later companion")]
    NoComparablePairs,
    #[error("times and events disagree: {times} vs {events}")]
    LengthMismatch { times: usize, events: usize },
    #[error("invalid metric input: {0}")]
    InvalidInput(String),
    #[error("bootstrap resample {resample} found no comparable pairs in {attempts} redraws")]
    BootstrapExhausted { resample: usize, attempts: usize },
    #[error("report file line {line}: {problem}")]
    Parse { line: usize, problem: String },
}

/// Time-dependent concordance over time bins.
///
/// `cdf_at_event(i, j)` must return the predicted probability, under
/// instance j's covariates, that the event falls at or before instance i's
/// observed bin. Ties contribute one half.
pub fn ctd(
    time_bins: &[usize],
    events: &[u8],
    cdf_at_event: impl Fn(usize, usize) -> f64,
) -> Result<f64, MetricsError> {
    if time_bins.len() != events.len() {
        return Err(MetricsError::LengthMismatch {
            times: time_bins.len(),
            events: events.len(),
        });
    }
    let n = time_bins.len();
    // Concordance increments are dyadic (1 or 1/2), so the sums are exact
    // and iteration order cannot change the result.
    let mut concordant = 0.0f64;
    let mut comparable = 0.0f64;
    for i in 0..n {
        if events[i] != 1 {
            continue;
        }
        let own = cdf_at_event(i, i);
        for j in 0..n {
            if j == i || time_bins[i] >= time_bins[j] {
                continue;
            }
            let other = cdf_at_event(i, j);
            comparable += 1.0;
            if own > other {
                concordant += 1.0;
            } else if own == other {
                concordant += 0.5;
            }
        }
    }
    if comparable == 0.0 {
        return Err(MetricsError::NoComparablePairs);
    }
    Ok(concordant / comparable)
}

/// Concordance estimate with bootstrap uncertainty. Notches follow the
/// box-plot convention `median ± 1.57 * IQR / sqrt(b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CtdReport {
    pub point_estimate: f64,
    pub bootstrap_median: f64,
    pub iqr: f64,
    pub notch_low: f64,
    pub notch_high: f64,
    pub b: usize,
    /// One concordance value per resample, in resample order.
    pub resample_values: Vec<f64>,
}

impl CtdReport {
    /// Builds a report from a point estimate and per-resample values,
    /// validating ranges and computing median, IQR, and notches.
    pub fn from_resamples(point_estimate: f64, resample_values: Vec<f64>) -> Result<Self, MetricsError> {
        if resample_values.is_empty() {
            return Err(MetricsError::InvalidInput("no resample values".into()));
        }
        for &v in std::iter::once(&point_estimate).chain(resample_values.iter()) {
            if !(0.0..=1.0).contains(&v) {
                return Err(MetricsError::InvalidInput(format!(
                    "concordance value {v} outside [0, 1]"
                )));
            }
        }
        let b = resample_values.len();
        let mut sorted = resample_values.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).expect("values checked finite"));
        let bootstrap_median = quantile_sorted(&sorted, 0.5);
        let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
        let half_width = 1.57 * iqr / (b as f64).sqrt();
        Ok(Self {
            point_estimate,
            bootstrap_median,
            iqr,
            notch_low: bootstrap_median - half_width,
            notch_high: bootstrap_median + half_width,
            b,
            resample_values,
        })
    }

    pub fn notch_half_width(&self) -> f64 {
        (self.notch_high - self.notch_low) / 2.0
    }

    /// Box-plot emission: `resample_id,ctd` rows followed by named summary
    /// rows. Floats print in shortest round-trip form, so
    /// [`CtdReport::from_box_plot_csv`] reproduces the report exactly.
    pub fn to_box_plot_csv(&self) -> String {
        let mut out = String::from("resample_id,ctd\n");
        for (i, v) in self.resample_values.iter().enumerate() {
            out.push_str(&format!("{i},{v}\n"));
        }
        out.push_str(&format!("point_estimate,{}\n", self.point_estimate));
        out.push_str(&format!("bootstrap_median,{}\n", self.bootstrap_median));
        out.push_str(&format!("iqr,{}\n", self.iqr));
        out.push_str(&format!("notch_low,{}\n", self.notch_low));
        out.push_str(&format!("notch_high,{}\n", self.notch_high));
        out.push_str(&format!("b,{}\n", self.b));
        out
    }

    pub fn from_box_plot_csv(text: &str) -> Result<Self, MetricsError> {
        let mut resample_values = Vec::new();
        let mut summary: std::collections::HashMap<&str, f64> = std::collections::HashMap::new();
        for (idx, line) in text.lines().enumerate() {
            let line_no = idx + 1;
            if idx == 0 {
                if line != "resample_id,ctd" {
                    return Err(MetricsError::Parse {
                        line: 1,
                        problem: format!("expected header resample_id,ctd, got {line:?}"),
                    });
                }
                continue;
            }
            let (key, value) = line.split_once(',').ok_or_else(|| MetricsError::Parse {
                line: line_no,
                problem: "expected two comma-separated fields".into(),
            })?;
            let value: f64 = value.parse().map_err(|_| MetricsError::Parse {
                line: line_no,
                problem: format!("{value:?} is not a number"),
            })?;
            if let Ok(id) = key.parse::<usize>() {
                if id != resample_values.len() {
                    return Err(MetricsError::Parse {
                        line: line_no,
                        problem: format!("resample ids out of order: got {id}"),
                    });
                }
                resample_values.push(value);
            } else {
                summary.insert(
                    match key {
                        "point_estimate" => "point_estimate",
                        "bootstrap_median" => "bootstrap_median",
                        "iqr" => "iqr",
                        "notch_low" => "notch_low",
                        "notch_high" => "notch_high",
                        "b" => "b",
                        other => {
                            return Err(MetricsError::Parse {
                                line: line_no,
                                problem: format!("unknown summary row {other:?}"),
                            })
                        }
                    },
                    value,
                );
            }
        }
        let get = |key: &str| {
            summary.get(key).copied().ok_or_else(|| MetricsError::Parse {
                line: 0,
                problem: format!("missing summary row {key:?}"),
            })
        };
        let report = Self::from_resamples(get("point_estimate")?, resample_values)?;
        // The recomputed statistics must agree with the stored summary rows;
        // disagreement means the file was edited inconsistently.
        for (key, stored) in [
            ("bootstrap_median", report.bootstrap_median),
            ("iqr", report.iqr),
            ("notch_low", report.notch_low),
            ("notch_high", report.notch_high),
            ("b", report.b as f64),
        ] {
            let claimed = get(key)?;
            if claimed != stored {
                return Err(MetricsError::Parse {
                    line: 0,
                    problem: format!("summary row {key} is {claimed} but recomputes to {stored}"),
                });
            }
        }
        Ok(report)
    }
}

/// Linear-interpolation quantile of an ascending slice (the `q * (n - 1)`
/// positional convention).
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Draws `b` bootstrap resamples of `0..n` with replacement and evaluates
/// the caller's concordance producer on each. A resample whose evaluation
/// finds no comparable pairs is redrawn (bounded retries); everything is
/// deterministic because resample `r` uses ChaCha stream `r` of the seed.
pub fn bootstrap(
    n: usize,
    b: usize,
    seed: u64,
    eval: impl Fn(&[usize]) -> Result<f64, MetricsError>,
) -> Result<CtdReport, MetricsError> {
    const MAX_ATTEMPTS: usize = 100;
    if n == 0 {
        return Err(MetricsError::InvalidInput("empty test set".into()));
    }
    if b == 0 {
        return Err(MetricsError::InvalidInput("bootstrap count must be positive".into()));
    }
    let identity: Vec<usize> = (0..n).collect();
    let point_estimate = eval(&identity)?;

    let mut values = Vec::with_capacity(b);
    let mut indices = vec![0usize; n];
    for resample in 0..b {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(resample as u64);
        let mut value = None;
        for _attempt in 0..MAX_ATTEMPTS {
            for slot in indices.iter_mut() {
                *slot = rng.random_range(0..n);
            }
            match eval(&indices) {
                Ok(v) => {
                    value = Some(v);
                    break;
                }
                Err(MetricsError::NoComparablePairs) => continue,
                Err(other) => return Err(other),
            }
        }
        match value {
            Some(v) => values.push(v),
            None => {
                return Err(MetricsError::BootstrapExhausted {
                    resample,
                    attempts: MAX_ATTEMPTS,
                })
            }
        }
    }
    CtdReport::from_resamples(point_estimate, values)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent exhaustive oracle: enumerates every ordered pair with the
    /// comparability rule spelled out longhand. Kept deliberately separate
    /// from the production formulation.
    fn oracle_ctd(bins: &[usize], events: &[u8], f: &dyn Fn(usize, usize) -> f64) -> Option<f64> {
        let n = bins.len();
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let i_event_observed = events[i] == 1;
                let i_strictly_earlier = bins[i] < bins[j];
                if !(i_event_observed && i_strictly_earlier) {
                    continue;
                }
                den += 1.0;
                let fi = f(i, i);
                let fj = f(i, j);
                if fi > fj {
                    num += 1.0;
                } else if fi == fj {
                    num += 0.5;
                }
            }
        }
        if den == 0.0 {
            None
        } else {
            Some(num / den)
        }
    }

    #[test]
    fn perfect_ordering_gives_one_and_reversed_gives_zero() {
        let bins = [1usize, 2, 3];
        let events = [1u8, 1, 1];
        // Earlier event implies uniformly higher cdf: risk[j] decreasing.
        let risk = [0.9, 0.5, 0.1];
        let c = ctd(&bins, &events, |_, j| risk[j]).unwrap();
        assert_eq!(c, 1.0);
        let c = ctd(&bins, &events, |_, j| -risk[j]).unwrap();
        assert_eq!(c, 0.0);
    }

    #[test]
    fn all_ties_give_exactly_half() {
        let bins = [0usize, 1, 2, 3];
        let events = [1u8, 1, 1, 1];
        let c = ctd(&bins, &events, |_, _| 0.42).unwrap();
        assert_eq!(c, 0.5);
    }

    #[test]
    fn censored_instances_never_anchor_pairs() {
        let bins = [0usize, 1, 2];
        let events = [0u8, 1, 1];
        // Only (1, 2) is comparable: instance 0 is censored.
        let anchors = std::cell::RefCell::new(Vec::new());
        let c = ctd(&bins, &events, |i, j| {
            if i != j {
                anchors.borrow_mut().push(i);
            }
            [0.3, 0.8, 0.1][j]
        });
        assert!(c.is_ok());
        assert!(anchors.borrow().iter().all(|&i| i == 1));
    }

    #[test]
    fn no_comparable_pairs_is_an_error() {
        // All censored.
        assert!(matches!(
            ctd(&[0, 1], &[0, 0], |_, _| 0.5).unwrap_err(),
            MetricsError::NoComparablePairs
        ));
        // All in the same bin.
        assert!(matches!(
            ctd(&[3, 3, 3], &[1, 1, 1], |_, _| 0.5).unwrap_err(),
            MetricsError::NoComparablePairs
        ));
        // Mismatched lengths are a different error.
        assert!(matches!(
            ctd(&[0, 1], &[1], |_, _| 0.5).unwrap_err(),
            MetricsError::LengthMismatch { times: 2, events: 1 }
        ));
    }

    #[test]
    fn matches_exhaustive_oracle_on_200_random_datasets() {
        use rand::{Rng, SeedableRng};
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for trial in 0..200 {
            let n = 2 + rng.random_range(0..59);
            // Narrow bin range forces time ties; coarse risk grid forces
            // risk ties; random events mix censoring in.
            let bins: Vec<usize> = (0..n).map(|_| rng.random_range(0..8)).collect();
            let events: Vec<u8> = (0..n).map(|_| u8::from(rng.random::<f64>() < 0.7)).collect();
            let f_matrix: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..n).map(|_| (rng.random_range(0..10) as f64) / 10.0).collect())
                .collect();
            let f = |i: usize, j: usize| f_matrix[i][j];
            let ours = ctd(&bins, &events, f);
            let oracle = oracle_ctd(&bins, &events, &f);
            match (ours, oracle) {
                (Ok(a), Some(b)) => assert_eq!(a, b, "trial {trial} disagreed"),
                (Err(MetricsError::NoComparablePairs), None) => {}
                (a, b) => panic!("trial {trial}: mismatch {a:?} vs {b:?}"),
            }
        }
    }

    #[test]
    fn invariant_under_strictly_monotone_transform() {
        use rand::{Rng, SeedableRng};
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 40;
        let bins: Vec<usize> = (0..n).map(|_| rng.random_range(0..12)).collect();
        let events: Vec<u8> = (0..n).map(|_| u8::from(rng.random::<f64>() < 0.6)).collect();
        let f_matrix: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..n).map(|_| rng.random::<f64>()).collect())
            .collect();
        let base = ctd(&bins, &events, |i, j| f_matrix[i][j]).unwrap();
        let transformed = ctd(&bins, &events, |i, j| (3.0 * f_matrix[i][j]).exp() - 10.0).unwrap();
        assert_eq!(base, transformed);
    }

    #[test]
    fn reversing_scores_complements_to_one_without_ties() {
        use rand::{Rng, SeedableRng};
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let n = 30;
        let bins: Vec<usize> = (0..n).collect();
        let events: Vec<u8> = (0..n).map(|_| u8::from(rng.random::<f64>() < 0.8)).collect();
        // Distinct scores: ties impossible.
        let f_matrix: Vec<Vec<f64>> = (0..n)
            .map(|i| (0..n).map(|j| (i * n + j) as f64 * 0.001 + rng.random::<f64>() * 1e-7).collect())
            .collect();
        let forward = ctd(&bins, &events, |i, j| f_matrix[i][j]).unwrap();
        let reversed = ctd(&bins, &events, |i, j| -f_matrix[i][j]).unwrap();
        assert!((forward + reversed - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_predictor_bootstrap_degenerates_to_half() {
        let bins: Vec<usize> = (0..25).collect();
        let events = vec![1u8; 25];
        let report = bootstrap(25, 200, 11, |idx| {
            let rb: Vec<usize> = idx.iter().map(|&i| bins[i]).collect();
            let re: Vec<u8> = idx.iter().map(|&i| events[i]).collect();
            ctd(&rb, &re, |_, _| 0.7)
        })
        .unwrap();
        assert_eq!(report.point_estimate, 0.5);
        assert_eq!(report.bootstrap_median, 0.5);
        assert_eq!(report.iqr, 0.0);
        assert_eq!(report.notch_half_width(), 0.0);
        assert!(report.resample_values.iter().all(|&v| v == 0.5));
    }

    #[test]
    fn bootstrap_is_seed_deterministic() {
        use rand::{Rng, SeedableRng};
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 30;
        let bins: Vec<usize> = (0..n).map(|_| rng.random_range(0..10)).collect();
        let events: Vec<u8> = (0..n).map(|_| u8::from(rng.random::<f64>() < 0.7)).collect();
        let scores: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let eval = |idx: &[usize]| {
            let rb: Vec<usize> = idx.iter().map(|&i| bins[i]).collect();
            let re: Vec<u8> = idx.iter().map(|&i| events[i]).collect();
            ctd(&rb, &re, |_, q| scores[idx[q]])
        };
        let a = bootstrap(n, 50, 99, eval).unwrap();
        let b = bootstrap(n, 50, 99, eval).unwrap();
        assert_eq!(a, b);
        let c = bootstrap(n, 50, 100, eval).unwrap();
        assert_ne!(a.resample_values, c.resample_values);
    }

    #[test]
    fn notch_width_halves_when_b_quadruples_at_fixed_iqr() {
        let tile = [0.4, 0.45, 0.5, 0.55, 0.6];
        let small: Vec<f64> = tile.iter().cycle().take(100).copied().collect();
        let large: Vec<f64> = tile.iter().cycle().take(400).copied().collect();
        let rs = CtdReport::from_resamples(0.5, small).unwrap();
        let rl = CtdReport::from_resamples(0.5, large).unwrap();
        assert!((rs.iqr - rl.iqr).abs() < 1e-12);
        assert!((rs.notch_half_width() / rl.notch_half_width() - 2.0).abs() < 1e-9);
        assert!(rs.notch_low <= rs.bootstrap_median && rs.bootstrap_median <= rs.notch_high);
    }

    #[test]
    fn failing_resamples_are_redrawn_and_exhaustion_reported() {
        // Dataset with one comparable pair: resamples missing both indices
        // fail and redraw; an always-failing producer exhausts.
        let bins = [0usize, 1];
        let events = [1u8, 1];
        let report = bootstrap(2, 40, 5, |idx| {
            let rb: Vec<usize> = idx.iter().map(|&i| bins[i]).collect();
            let re: Vec<u8> = idx.iter().map(|&i| events[i]).collect();
            ctd(&rb, &re, |_, q| [0.8, 0.2][idx[q]])
        })
        .unwrap();
        assert_eq!(report.b, 40);

        // A producer that fails on the full test set is a data error, not
        // an exhausted bootstrap.
        let err = bootstrap(2, 4, 5, |_| Err(MetricsError::NoComparablePairs)).unwrap_err();
        assert!(matches!(err, MetricsError::NoComparablePairs));

        // One that passes the point estimate but fails every resample
        // exhausts the redraw budget.
        let calls = std::cell::Cell::new(0usize);
        let err = bootstrap(2, 4, 5, |_| {
            let c = calls.get();
            calls.set(c + 1);
            if c == 0 {
                Ok(0.6)
            } else {
                Err(MetricsError::NoComparablePairs)
            }
        })
        .unwrap_err();
        assert!(matches!(err, MetricsError::BootstrapExhausted { .. }));
    }

    #[test]
    fn report_rejects_out_of_range_values() {
        assert!(CtdReport::from_resamples(0.5, vec![]).is_err());
        assert!(CtdReport::from_resamples(1.5, vec![0.5]).is_err());
        assert!(CtdReport::from_resamples(0.5, vec![-0.1]).is_err());
    }

    #[test]
    fn box_plot_csv_round_trips_exactly() {
        let values: Vec<f64> = (0..50).map(|i| 0.4 + (i as f64) * 0.003).collect();
        let report = CtdReport::from_resamples(0.5213, values).unwrap();
        let text = report.to_box_plot_csv();
        let parsed = CtdReport::from_box_plot_csv(&text).unwrap();
        assert_eq!(parsed, report);
    }

    #[test]
    fn box_plot_csv_parser_rejects_tampering() {
        let report = CtdReport::from_resamples(0.5, vec![0.4, 0.5, 0.6]).unwrap();
        let text = report.to_box_plot_csv();
        let tampered = text.replace("iqr,", "iqr,0.9#");
        assert!(CtdReport::from_box_plot_csv(&tampered).is_err());
        assert!(CtdReport::from_box_plot_csv("wrong,header\n").is_err());
    }
}
