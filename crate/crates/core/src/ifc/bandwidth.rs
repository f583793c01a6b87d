//! Splitting one ground station's feeder bandwidth over its concurrent
//! non-cached files.

use crate::link_budget::shannon_rate;

/// One file's use of a feeder link: its delay is
/// `fixed_delay_s + bits / min(shannon(share), rate_cap_bps)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeederDemand {
    pub bits: f64,
    pub fixed_delay_s: f64,
    pub bandwidth_hz: f64,
    /// Linear SNR when the whole bandwidth is granted.
    pub full_band_snr: f64,
    /// Rate ceiling set by the rest of the route; `f64::INFINITY` when the
    /// feeder transmission is paid separately.
    pub rate_cap_bps: f64,
}

/// A file's delay as a convex, non-increasing function of the feeder share
/// granted to it at one ground station.
pub trait ShareCost {
    fn delay(&self, share: f64) -> f64;
    /// `-d delay / d share`; non-increasing in `share`.
    fn marginal(&self, share: f64) -> f64;
    /// The file gains nothing from any share.
    fn idle(&self) -> bool;
}

/// Derivative of `shannon_rate(bandwidth_hz, snr, share)` in `share`.
pub(crate) fn shannon_slope(bandwidth_hz: f64, full_band_snr: f64, share: f64) -> f64 {
    let q = full_band_snr / share;
    bandwidth_hz * ((1.0 + q).log2() - q / ((1.0 + q) * std::f64::consts::LN_2))
}

impl FeederDemand {
    pub fn rate(&self, share: f64) -> f64 {
        if share <= 0.0 {
            return 0.0;
        }
        shannon_rate(self.bandwidth_hz, self.full_band_snr, share).min(self.rate_cap_bps)
    }
}

impl ShareCost for FeederDemand {
    fn delay(&self, share: f64) -> f64 {
        if self.bits == 0.0 {
            return self.fixed_delay_s;
        }
        let rate = self.rate(share);
        if rate <= 0.0 {
            return f64::INFINITY;
        }
        self.fixed_delay_s + self.bits / rate
    }

    fn marginal(&self, share: f64) -> f64 {
        if self.bits == 0.0 {
            return 0.0;
        }
        let raw = shannon_rate(self.bandwidth_hz, self.full_band_snr, share);
        if raw >= self.rate_cap_bps {
            return 0.0;
        }
        self.bits * shannon_slope(self.bandwidth_hz, self.full_band_snr, share) / (raw * raw)
    }

    fn idle(&self) -> bool {
        self.bits == 0.0
    }
}

/// Largest share whose marginal gain still reaches `lambda`.
fn share_at<T: ShareCost>(d: &T, lambda: f64) -> f64 {
    if d.idle() {
        return 0.0;
    }
    if d.marginal(1.0) >= lambda {
        return 1.0;
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if d.marginal(mid) >= lambda {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

pub fn total_delay<T: ShareCost>(demands: &[T], shares: &[f64]) -> f64 {
    demands.iter().zip(shares).map(|(d, &s)| d.delay(s)).sum()
}

pub fn equal_shares(n: usize) -> Vec<f64> {
    vec![1.0 / n as f64; n]
}

/// Shares minimising the summed delay subject to `sum(shares) <= 1`.
///
/// Each delay is convex and non-increasing in its share, so at the optimum
/// every file with spare demand sees the same marginal gain. The common
/// marginal is found by bisection in log space; per-file shares by an inner
/// bisection on the monotone marginal. The equal split is returned instead
/// when it is at least as good, which only happens at numerical ties.
pub fn optimal_shares<T: ShareCost>(demands: &[T]) -> Vec<f64> {
    let n = demands.len();
    if n == 0 {
        return Vec::new();
    }
    let shares_at = |lambda: f64| -> Vec<f64> { demands.iter().map(|d| share_at(d, lambda)).collect() };
    let (mut lo, mut hi) = (-60.0f64, 60.0f64);
    let mut best = shares_at(10f64.powf(lo));
    if best.iter().sum::<f64>() > 1.0 {
        best = shares_at(10f64.powf(hi));
        for _ in 0..120 {
            if hi - lo < 1e-12 {
                break;
            }
            let mid = 0.5 * (lo + hi);
            let s = shares_at(10f64.powf(mid));
            if s.iter().sum::<f64>() > 1.0 {
                lo = mid;
            } else {
                hi = mid;
                best = s;
            }
        }
    }
    let sum: f64 = best.iter().sum();
    if sum > 1.0 {
        for s in &mut best {
            *s /= sum;
        }
    }
    let equal = equal_shares(n);
    if total_delay(demands, &equal) <= total_delay(demands, &best) {
        equal
    } else {
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::link_budget::LinkBudgetParams;

    fn demand(packets: f64) -> FeederDemand {
        let p = LinkBudgetParams::ground_to_sat();
        FeederDemand {
            bits: packets * 1080.0,
            fixed_delay_s: 0.02,
            bandwidth_hz: p.bandwidth_hz,
            full_band_snr: p.full_band_snr(1500.0).unwrap(),
            rate_cap_bps: f64::INFINITY,
        }
    }

    #[test]
    fn single_file_gets_everything() {
        assert_eq!(optimal_shares(&[demand(500.0)]), vec![1.0]);
        assert_eq!(equal_shares(1), vec![1.0]);
    }

    #[test]
    fn identical_files_split_evenly() {
        let s = optimal_shares(&[demand(500.0), demand(500.0)]);
        assert!((s[0] - 0.5).abs() < 1e-9 && (s[1] - 0.5).abs() < 1e-9, "{s:?}");
    }

    #[test]
    fn larger_file_gets_more_and_beats_equal() {
        let d = [demand(100.0), demand(1000.0)];
        let s = optimal_shares(&d);
        assert!(s[1] > s[0]);
        assert!(s.iter().sum::<f64>() <= 1.0 + 1e-12);
        assert!(total_delay(&d, &s) < total_delay(&d, &equal_shares(2)));
        let mut grid_best = f64::INFINITY;
        for k in 1..100 {
            let b = k as f64 / 100.0;
            grid_best = grid_best.min(total_delay(&d, &[b, 1.0 - b]));
        }
        assert!(total_delay(&d, &s) <= grid_best + 1e-6);
    }

    #[test]
    fn capped_file_takes_only_what_it_can_use() {
        let mut small = demand(1000.0);
        small.rate_cap_bps = 1e8;
        let big = demand(1000.0);
        let s = optimal_shares(&[small, big]);
        assert!((small.rate(s[0]) - 1e8).abs() / 1e8 < 1e-6);
        assert!(s[1] > s[0]);
    }

    #[test]
    fn empty_file_needs_no_share() {
        let s = optimal_shares(&[demand(0.0), demand(10.0)]);
        assert!(s[0] <= 0.5);
        assert!(total_delay(&[demand(0.0)], &[0.0]).is_finite());
    }
}
