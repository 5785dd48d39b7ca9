//! Shared frequentist summaries for Monte Carlo estimates.

/// 97.5% standard normal quantile: two-sided 95% coverage.
pub const Z_95: f64 = 1.959_963_984_540_054;

/// Wilson score interval for a binomial proportion at 95% confidence.
///
/// Returns `(low, high)`. Well-behaved at the boundaries: zero successes
/// give a positive-width interval starting at 0, and the interval always
/// stays inside [0, 1].
pub fn wilson_95(successes: u64, trials: u64) -> (f64, f64) {
    assert!(trials > 0, "Wilson interval needs at least one trial");
    assert!(successes <= trials);
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = Z_95 * Z_95;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = Z_95 * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    // At p = 0 (resp. 1) center and half agree algebraically, so the bound
    // is exactly 0 (resp. 1); pin it rather than leave rounding residue.
    let low = if successes == 0 {
        0.0
    } else {
        (center - half).max(0.0)
    };
    let high = if successes == trials {
        1.0
    } else {
        (center + half).min(1.0)
    };
    (low, high)
}

/// Sample mean and standard error from exact integer tallies.
///
/// `sum` and `sum_sq` are the raw totals of the observable and its square;
/// keeping them as integers makes the merged result independent of how
/// trials were partitioned across workers.
pub fn mean_se_from_tallies(sum: u64, sum_sq: u64, trials: u64) -> (f64, f64) {
    assert!(trials > 0);
    let n = trials as f64;
    let mean = sum as f64 / n;
    if trials == 1 {
        return (mean, 0.0);
    }
    // Sample variance via the exact integer second moment.
    let var = ((sum_sq as f64) - (sum as f64) * (sum as f64) / n) / (n - 1.0);
    (mean, (var.max(0.0) / n).sqrt())
}
