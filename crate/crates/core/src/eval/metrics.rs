use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// `max(p/a, a/p)`; both inputs must be positive.
pub fn qerror(predicted: f64, actual: f64) -> Result<f64> {
    if !(predicted > 0.0 && actual > 0.0) || !predicted.is_finite() || !actual.is_finite() {
        return Err(Error::Eval(format!("q-error needs positive finite inputs, got {predicted} and {actual}")));
    }
    Ok((predicted / actual).max(actual / predicted))
}

/// Type-7 quantile (linear interpolation between order statistics) of
/// already sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of an empty set");
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    quantile_sorted(&v, q)
}

pub fn median(values: &[f64]) -> f64 {
    quantile(values, 0.5)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub median: f64,
    pub p95: f64,
    pub max: f64,
    pub count: usize,
}

impl Metrics {
    pub fn from_qerrors(qerrors: &[f64]) -> Result<Metrics> {
        if qerrors.is_empty() {
            return Err(Error::Eval("no samples to evaluate".into()));
        }
        let mut v = qerrors.to_vec();
        v.sort_by(f64::total_cmp);
        Ok(Metrics {
            median: quantile_sorted(&v, 0.5),
            p95: quantile_sorted(&v, 0.95),
            max: *v.last().expect("non-empty"),
            count: v.len(),
        })
    }

    /// `label & median & p95 & max` with two decimals.
    pub fn table_row(&self, label: &str) -> String {
        format!("{label} & {:.2} & {:.2} & {:.2}", self.median, self.p95, self.max)
    }

    /// `(predicted, actual)` cost pairs in work units, compared as `1 + cost`.
    pub fn from_costs(pairs: impl IntoIterator<Item = (f64, f64)>) -> Result<Metrics> {
        let qs = pairs.into_iter().map(|(p, a)| qerror(1.0 + p.max(0.0), 1.0 + a)).collect::<Result<Vec<f64>>>()?;
        Metrics::from_qerrors(&qs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn qerror_basics() {
        assert_eq!(qerror(10.0, 10.0).unwrap(), 1.0);
        assert_eq!(qerror(20.0, 10.0).unwrap(), 2.0);
        assert_eq!(qerror(10.0, 20.0).unwrap(), 2.0);
        assert!(qerror(0.0, 1.0).is_err());
        assert!(qerror(1.0, -2.0).is_err());
        assert!(qerror(f64::NAN, 1.0).is_err());
    }

    #[test]
    fn small_set_metrics() {
        let m = Metrics::from_qerrors(&[4.0, 1.0, 2.0]).unwrap();
        assert_eq!((m.median, m.max, m.count), (2.0, 4.0, 3));
        assert_eq!(m.p95, 2.0 + 0.9 * 2.0);
        let exact = Metrics::from_costs([(5.0, 5.0), (0.0, 0.0)]).unwrap();
        assert_eq!((exact.median, exact.p95, exact.max), (1.0, 1.0, 1.0));
        assert!(Metrics::from_qerrors(&[]).is_err());
    }

    /// Quantile by explicit rank arithmetic on a fresh sort.
    fn reference_quantile(values: &[f64], q: f64) -> f64 {
        let mut v = values.to_vec();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = v.len();
        let pos = q * (n as f64 - 1.0);
        let i = pos as usize;
        if i + 1 >= n {
            return v[n - 1];
        }
        let frac = pos - i as f64;
        v[i] * (1.0 - frac) + v[i + 1] * frac
    }

    #[test]
    fn quantiles_match_reference() {
        let mut r = crate::rng::seeded(7);
        let values: Vec<f64> = (0..1000).map(|_| 1.0 + r.random::<f64>() * 50.0).collect();
        for q in [0.0, 0.1, 0.5, 0.95, 0.999, 1.0] {
            let a = quantile(&values, q);
            let b = reference_quantile(&values, q);
            assert!((a - b).abs() <= 1e-12 * b.abs(), "q={q}: {a} vs {b}");
        }
    }

    #[test]
    fn table_layout_row() {
        // a Table-1 style row is median, p95, max in that order
        let m = Metrics { median: 1.19, p95: 1.93, max: 3.93, count: 1 };
        assert_eq!(m.table_row("Scale"), "Scale & 1.19 & 1.93 & 3.93");
        let m = Metrics { median: 1.2149, p95: 2.505, max: 10.7251, count: 1 };
        assert_eq!(m.table_row("Index"), "Index & 1.21 & 2.50 & 10.73");
    }

    proptest! {
        #[test]
        fn qerror_is_symmetric_and_at_least_one(a in 1e-6f64..1e9, b in 1e-6f64..1e9) {
            let x = qerror(a, b).unwrap();
            prop_assert!(x >= 1.0);
            prop_assert_eq!(x, qerror(b, a).unwrap());
        }

        #[test]
        fn metrics_are_ordered(v in prop::collection::vec(1.0f64..1e4, 1..200)) {
            let m = Metrics::from_qerrors(&v).unwrap();
            prop_assert!(1.0 <= m.median && m.median <= m.p95 && m.p95 <= m.max);
        }
    }
}
