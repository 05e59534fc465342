//! State-dependent switching rates, the interval partition of the positive
//! half line, and the displacement function built on it.
//!
//! For a fixed `(x, k)` the rates `q_kl(x)`, `l ≠ k`, are laid out as
//! consecutive left-closed right-open intervals in ascending target order;
//! the interval for target `l` has length `q_kl(x)` and targets with zero
//! rate are omitted. A uniform draw on `[0, q_k(x))` landing in the
//! interval for `l` encodes a switch displacement of `l − k`.

use std::sync::Arc;

use crate::error::{Error, Result};

type RateFn = Arc<dyn Fn(&[f64], usize, usize) -> f64 + Send + Sync>;

/// Banded state-dependent rate matrix `q_kl(x)`.
#[derive(Clone)]
pub struct RateMatrix {
    kappa: usize,
    bound: Option<f64>,
    rate_fn: RateFn,
}

impl std::fmt::Debug for RateMatrix {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RateMatrix")
            .field("kappa", &self.kappa)
            .field("bound", &self.bound)
            .finish()
    }
}

/// One evaluated row: off-diagonal rates from `source` and their total.
#[derive(Debug, Clone, PartialEq)]
pub struct RateRow {
    pub source: usize,
    /// `(target, rate)` in ascending target order; zero rates omitted.
    pub entries: Vec<(usize, f64)>,
    pub total: f64,
}

impl RateRow {
    pub fn rate_to(&self, target: usize) -> f64 {
        self.entries
            .iter()
            .find(|(l, _)| *l == target)
            .map(|(_, r)| *r)
            .unwrap_or(0.0)
    }
}

/// The interval layout for one `(x, k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SwitchPartition {
    pub source: usize,
    /// `(target, start, end)` with consecutive intervals covering
    /// `[0, q_k(x))`.
    pub intervals: Vec<(usize, f64, f64)>,
}

impl SwitchPartition {
    pub fn total_length(&self) -> f64 {
        self.intervals.last().map(|&(_, _, b)| b).unwrap_or(0.0)
    }

    /// Regime displacement encoded at coordinate `r ≥ 0`; zero when `r`
    /// is at or past the total rate mass.
    pub fn displacement(&self, r: f64) -> i64 {
        for &(target, a, b) in &self.intervals {
            if r >= a && r < b {
                return target as i64 - self.source as i64;
            }
        }
        0
    }
}

impl RateMatrix {
    /// `rate_fn(x, k, l)` is consulted only for `l ≠ k` within the band
    /// `|l − k| ≤ kappa`; everything outside the band is structurally zero.
    pub fn new(
        kappa: usize,
        rate_fn: impl Fn(&[f64], usize, usize) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            kappa,
            bound: None,
            rate_fn: Arc::new(rate_fn),
        }
    }

    /// Declares the bound `q_k(x) ≤ bound·(k+1)`; enables the thinning
    /// clock scheme and the rate-bound assumption check.
    pub fn with_bound(mut self, bound: f64) -> Self {
        self.bound = Some(bound);
        self
    }

    pub fn kappa(&self) -> usize {
        self.kappa
    }

    pub fn bound(&self) -> Option<f64> {
        self.bound
    }

    pub fn rate(&self, x: &[f64], k: usize, l: usize) -> f64 {
        if l == k || l.abs_diff(k) > self.kappa {
            return 0.0;
        }
        (self.rate_fn)(x, k, l)
    }

    /// Evaluate the row from `k` at `x`, confined to the band.
    pub fn row(&self, x: &[f64], k: usize) -> Result<RateRow> {
        let lo = k.saturating_sub(self.kappa);
        let hi = k + self.kappa;
        let mut entries = Vec::new();
        let mut total = 0.0;
        for l in lo..=hi {
            if l == k {
                continue;
            }
            let r = (self.rate_fn)(x, k, l);
            if !r.is_finite() || r < 0.0 {
                return Err(Error::NegativeRate {
                    from: k,
                    to: l,
                    rate: r,
                    x: x.to_vec(),
                });
            }
            if r > 0.0 {
                entries.push((l, r));
                total += r;
            }
        }
        Ok(RateRow {
            source: k,
            entries,
            total,
        })
    }

    /// Interval partition of `[0, q_k(x))` in ascending target order.
    pub fn partition(&self, x: &[f64], k: usize) -> Result<SwitchPartition> {
        let row = self.row(x, k)?;
        let mut intervals = Vec::with_capacity(row.entries.len());
        let mut cursor = 0.0;
        for (target, rate) in row.entries {
            intervals.push((target, cursor, cursor + rate));
            cursor += rate;
        }
        Ok(SwitchPartition {
            source: k,
            intervals,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_target_matrix() -> RateMatrix {
        // q(x, 0, 1) = 2, q(x, 0, 2) = 3
        RateMatrix::new(2, |_x, k, l| match (k, l) {
            (0, 1) => 2.0,
            (0, 2) => 3.0,
            _ => 0.0,
        })
    }

    #[test]
    fn row_totals_and_band() {
        let m = two_target_matrix();
        let row = m.row(&[0.0], 0).unwrap();
        assert_eq!(row.entries, vec![(1, 2.0), (2, 3.0)]);
        assert_eq!(row.total, 5.0);
        // far regimes have empty rows
        let far = m.row(&[0.0], 9).unwrap();
        assert!(far.entries.is_empty());
        assert_eq!(far.total, 0.0);
    }

    #[test]
    fn partition_layout_matches_row() {
        let m = two_target_matrix();
        let p = m.partition(&[0.0], 0).unwrap();
        assert_eq!(p.intervals, vec![(1, 0.0, 2.0), (2, 2.0, 5.0)]);
        assert_eq!(p.total_length(), 5.0);
    }

    #[test]
    fn displacement_and_tail() {
        let m = two_target_matrix();
        let p = m.partition(&[0.0], 0).unwrap();
        assert_eq!(p.displacement(1.0), 1);
        assert_eq!(p.displacement(3.5), 2);
        assert_eq!(p.displacement(7.0), 0);
        assert_eq!(p.displacement(5.0), 0); // right-open at the total mass
    }

    #[test]
    fn negative_rate_is_reported_with_witness() {
        let m = RateMatrix::new(1, |_x, _k, _l| -1.0);
        let err = m.row(&[1.5], 3).unwrap_err();
        match err {
            Error::NegativeRate { from, rate, x, .. } => {
                assert_eq!(from, 3);
                assert_eq!(rate, -1.0);
                assert_eq!(x, vec![1.5]);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }
}
