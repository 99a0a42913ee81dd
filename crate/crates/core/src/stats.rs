//! Paired-comparison statistics for within-subject condition data.
//!
//! The pipeline mirrors common practice for small paired samples: check the
//! per-participant differences for normality with Shapiro-Wilk, then run a
//! paired t-test when normality holds and a Wilcoxon signed-rank test when
//! it does not. Effect sizes are Cohen's d for the t-test and the matched
//! pairs rank-biserial correlation for Wilcoxon.
//!
//! Shapiro-Wilk follows Royston's 1995 algorithm (the same one scipy and R
//! use), valid for 3 to 50 samples here. The Wilcoxon p-value is exact for
//! up to 25 nonzero differences, computed by dynamic programming over the
//! signed-rank distribution with midranks for ties; larger samples use the
//! normal approximation with continuity correction and tie-corrected
//! variance.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};
use thiserror::Error;

/// Largest sample size the Shapiro-Wilk implementation accepts.
pub const SHAPIRO_MAX_N: usize = 50;

/// Normality gate: differences with a Shapiro-Wilk p at or above this run
/// the paired t-test, below it the Wilcoxon signed-rank test.
pub const NORMALITY_ALPHA: f64 = 0.05;

/// Largest number of nonzero differences for which the Wilcoxon p-value is
/// computed exactly.
pub const WILCOXON_EXACT_MAX: usize = 25;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("need at least {need} samples, got {got}")]
    TooFewSamples { got: usize, need: usize },
    #[error("Shapiro-Wilk supports at most {max} samples, got {got}")]
    TooManySamples { got: usize, max: usize },
    #[error("paired samples differ in length ({a} vs {b})")]
    MismatchedLengths { a: usize, b: usize },
    #[error("sample has zero variance")]
    ZeroVariance,
    #[error("every paired difference is zero")]
    AllDifferencesZero,
    #[error("sample contains a non-finite value")]
    NonFinite,
}

/// Shapiro-Wilk normality test result.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SwResult {
    pub w: f64,
    pub p: f64,
}

fn poly(coeffs: &[f64], x: f64) -> f64 {
    // Horner evaluation; coeffs are ordered from the constant term up.
    coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

/// Shapiro-Wilk W test for normality (Royston 1995 / AS R94).
pub fn shapiro_wilk(data: &[f64]) -> Result<SwResult, StatsError> {
    let n = data.len();
    if n < 3 {
        return Err(StatsError::TooFewSamples { got: n, need: 3 });
    }
    if n > SHAPIRO_MAX_N {
        return Err(StatsError::TooManySamples {
            got: n,
            max: SHAPIRO_MAX_N,
        });
    }
    if data.iter().any(|x| !x.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let mut x = data.to_vec();
    x.sort_by(|a, b| a.partial_cmp(b).unwrap());
    if x[n - 1] - x[0] == 0.0 {
        return Err(StatsError::ZeroVariance);
    }

    let an = n as f64;
    let nn2 = n / 2;
    let normal = Normal::new(0.0, 1.0).unwrap();

    // Blom scores for the lower half of the order statistics (negative).
    let m: Vec<f64> = (1..=nn2)
        .map(|i| normal.inverse_cdf((i as f64 - 0.375) / (an + 0.25)))
        .collect();
    let summ2: f64 = 2.0 * m.iter().map(|v| v * v).sum::<f64>();
    let ssumm2 = summ2.sqrt();
    let rsn = 1.0 / an.sqrt();

    // Polynomial corrections to the two outermost weights (Royston 1995).
    const C1: [f64; 6] = [0.0, 0.221157, -0.147981, -2.071190, 4.434685, -2.706056];
    const C2: [f64; 6] = [0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633];

    // Positive weights for the upper half; the lower half mirrors with
    // negated sign and the middle weight (odd n) is zero.
    let mut a = vec![0.0; nn2];
    let a1 = poly(&C1, rsn) - m[0] / ssumm2;
    if n == 3 {
        a[0] = std::f64::consts::FRAC_1_SQRT_2;
    } else if n <= 5 {
        let fac = ((summ2 - 2.0 * m[0] * m[0]) / (1.0 - 2.0 * a1 * a1)).sqrt();
        a[0] = a1;
        for i in 1..nn2 {
            a[i] = -m[i] / fac;
        }
    } else {
        let a2 = poly(&C2, rsn) - m[1] / ssumm2;
        let fac = ((summ2 - 2.0 * m[0] * m[0] - 2.0 * m[1] * m[1])
            / (1.0 - 2.0 * a1 * a1 - 2.0 * a2 * a2))
            .sqrt();
        a[0] = a1;
        a[1] = a2;
        for i in 2..nn2 {
            a[i] = -m[i] / fac;
        }
    }

    // W is the squared correlation between the sorted data and the weights,
    // computed through 1 - W to keep precision when W is near one.
    let mean = x.iter().sum::<f64>() / an;
    let ssx: f64 = x.iter().map(|v| (v - mean).powi(2)).sum();
    let ssa: f64 = 2.0 * a.iter().map(|v| v * v).sum::<f64>();
    let sax: f64 = (0..nn2).map(|i| a[i] * (x[n - 1 - i] - x[i])).sum();
    let ssassx = (ssa * ssx).sqrt();
    let w1 = (ssassx - sax) * (ssassx + sax) / (ssa * ssx);
    let w = 1.0 - w1;

    let p = if n == 3 {
        let pi6 = 6.0 / std::f64::consts::PI;
        let stqr = 0.75_f64.sqrt().asin();
        (pi6 * (w.sqrt().asin() - stqr)).clamp(0.0, 1.0)
    } else {
        let y = (1.0 - w).ln();
        let (z_num, mu, sigma) = if n <= 11 {
            let gamma = -2.273 + 0.459 * an;
            if y >= gamma {
                return Ok(SwResult { w, p: 0.0 });
            }
            let yy = -(gamma - y).ln();
            let mu = poly(&[0.5440, -0.39978, 0.025054, -0.0006714], an);
            let sigma = poly(&[1.3822, -0.77857, 0.062767, -0.0020322], an).exp();
            (yy, mu, sigma)
        } else {
            let xx = an.ln();
            let mu = poly(&[-1.5861, -0.31082, -0.083751, 0.0038915], xx);
            let sigma = poly(&[-0.4803, -0.082676, 0.0030302], xx).exp();
            (y, mu, sigma)
        };
        1.0 - normal.cdf((z_num - mu) / sigma)
    };
    Ok(SwResult { w, p })
}

/// Paired t-test result.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairedTResult {
    pub t: f64,
    pub df: f64,
    pub p: f64,
    pub mean_diff: f64,
    pub sd_diff: f64,
    /// Cohen's d for paired samples: mean difference over its SD.
    pub cohen_d: f64,
}

fn paired_diffs(a: &[f64], b: &[f64]) -> Result<Vec<f64>, StatsError> {
    if a.len() != b.len() {
        return Err(StatsError::MismatchedLengths {
            a: a.len(),
            b: b.len(),
        });
    }
    if a.iter().chain(b).any(|x| !x.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    Ok(a.iter().zip(b).map(|(x, y)| x - y).collect())
}

/// Two-tailed paired t-test on `a - b`.
pub fn paired_t(a: &[f64], b: &[f64]) -> Result<PairedTResult, StatsError> {
    let d = paired_diffs(a, b)?;
    let n = d.len();
    if n < 2 {
        return Err(StatsError::TooFewSamples { got: n, need: 2 });
    }
    let mean = d.iter().sum::<f64>() / n as f64;
    let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
    if var == 0.0 {
        return Err(StatsError::ZeroVariance);
    }
    let sd = var.sqrt();
    let t = mean / (sd / (n as f64).sqrt());
    let df = n as f64 - 1.0;
    let dist = StudentsT::new(0.0, 1.0, df).expect("df >= 1");
    let p = 2.0 * dist.cdf(-t.abs());
    Ok(PairedTResult {
        t,
        df,
        p,
        mean_diff: mean,
        sd_diff: sd,
        cohen_d: mean / sd,
    })
}

/// Cohen's d recovered from a paired t statistic: `t / sqrt(n)`.
pub fn cohen_d_from_t(t: f64, n: usize) -> f64 {
    t / (n as f64).sqrt()
}

/// Wilcoxon signed-rank test result.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WilcoxonResult {
    /// Test statistic: the smaller of the signed-rank sums.
    pub w: f64,
    pub r_plus: f64,
    pub r_minus: f64,
    /// Nonzero differences used (zeros are dropped).
    pub n_used: usize,
    pub p: f64,
    /// Whether `p` came from the exact distribution or the normal
    /// approximation.
    pub exact: bool,
    /// Matched-pairs rank-biserial correlation `(R+ - R-) / (R+ + R-)`.
    pub rank_biserial: f64,
}

/// Midranks of `|values|`, with doubled integer ranks alongside (midranks
/// are multiples of one half, so doubling keeps exact integer arithmetic
/// for the exact-distribution count).
fn signed_midranks(d: &[f64]) -> (Vec<f64>, Vec<u64>, Vec<usize>) {
    let m = d.len();
    let mut idx: Vec<usize> = (0..m).collect();
    idx.sort_by(|&i, &j| d[i].abs().partial_cmp(&d[j].abs()).unwrap());
    let mut ranks = vec![0.0; m];
    let mut doubled = vec![0u64; m];
    let mut tie_sizes = Vec::new();
    let mut i = 0;
    while i < m {
        let mut j = i;
        while j < m && d[idx[j]].abs() == d[idx[i]].abs() {
            j += 1;
        }
        // Positions i+1 ..= j share the midrank (i + 1 + j) / 2.
        let doubled_rank = (i + 1 + j) as u64;
        for k in i..j {
            ranks[idx[k]] = doubled_rank as f64 / 2.0;
            doubled[idx[k]] = doubled_rank;
        }
        if j - i > 1 {
            tie_sizes.push(j - i);
        }
        i = j;
    }
    (ranks, doubled, tie_sizes)
}

/// Two-tailed Wilcoxon signed-rank test on `a - b`. Zero differences are
/// dropped; ties in `|difference|` share midranks.
pub fn wilcoxon_signed_rank(a: &[f64], b: &[f64]) -> Result<WilcoxonResult, StatsError> {
    let d: Vec<f64> = paired_diffs(a, b)?
        .into_iter()
        .filter(|&v| v != 0.0)
        .collect();
    let m = d.len();
    if m == 0 {
        return Err(StatsError::AllDifferencesZero);
    }
    let (ranks, doubled, tie_sizes) = signed_midranks(&d);
    let r_plus: f64 = ranks
        .iter()
        .zip(&d)
        .filter(|(_, &v)| v > 0.0)
        .map(|(r, _)| r)
        .sum();
    let r_minus: f64 = ranks
        .iter()
        .zip(&d)
        .filter(|(_, &v)| v < 0.0)
        .map(|(r, _)| r)
        .sum();
    let w = r_plus.min(r_minus);

    let (p, exact) = if m <= WILCOXON_EXACT_MAX {
        (exact_min_sum_p(&doubled, w), true)
    } else {
        let mf = m as f64;
        let mu = mf * (mf + 1.0) / 4.0;
        let tie_term: f64 = tie_sizes
            .iter()
            .map(|&t| {
                let t = t as f64;
                t * t * t - t
            })
            .sum::<f64>()
            / 48.0;
        let sigma2 = mf * (mf + 1.0) * (2.0 * mf + 1.0) / 24.0 - tie_term;
        let z = (w - mu + 0.5) / sigma2.sqrt();
        let normal = Normal::new(0.0, 1.0).unwrap();
        ((2.0 * normal.cdf(z)).min(1.0), false)
    };

    Ok(WilcoxonResult {
        w,
        r_plus,
        r_minus,
        n_used: m,
        p,
        exact,
        rank_biserial: (r_plus - r_minus) / (r_plus + r_minus),
    })
}

/// Exact two-tailed p for the min-sum statistic: the fraction of the 2^m
/// equally likely sign assignments whose smaller rank sum is at most `w`.
/// Counts run over doubled ranks so ties stay in integer arithmetic.
fn exact_min_sum_p(doubled: &[u64], w: f64) -> f64 {
    let m = doubled.len();
    let s2: u64 = doubled.iter().sum();
    let w2 = (2.0 * w).round() as u64;
    let mut count = vec![0u64; s2 as usize + 1];
    count[0] = 1;
    for &dr in doubled {
        for s in (dr..=s2).rev() {
            count[s as usize] += count[(s - dr) as usize];
        }
    }
    let favorable: u64 = (0..=s2)
        .filter(|&s| s.min(s2 - s) <= w2)
        .map(|s| count[s as usize])
        .sum();
    (favorable as f64 / (1u64 << m) as f64).min(1.0)
}

/// Which paired test the normality gate selected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestKind {
    PairedT,
    WilcoxonSignedRank,
}

/// Outcome of the gated paired comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub kind: TestKind,
    pub n_pairs: usize,
    /// Shapiro-Wilk on the differences; `None` when the gate could not run
    /// (constant differences) and the analysis fell back to Wilcoxon.
    pub normality: Option<SwResult>,
    /// t statistic or the Wilcoxon min-sum W.
    pub statistic: f64,
    pub df: Option<f64>,
    pub p_value: f64,
    /// Cohen's d (paired t) or rank-biserial r (Wilcoxon).
    pub effect_size: f64,
    pub mean_diff: f64,
}

/// Runs the analysis pipeline on paired condition data: Shapiro-Wilk on the
/// differences, then the paired t-test when p >= [`NORMALITY_ALPHA`] and the
/// Wilcoxon signed-rank test otherwise.
pub fn select_test(a: &[f64], b: &[f64]) -> Result<TestReport, StatsError> {
    let d = paired_diffs(a, b)?;
    let n = d.len();
    if n < 3 {
        return Err(StatsError::TooFewSamples { got: n, need: 3 });
    }
    let mean_diff = d.iter().sum::<f64>() / n as f64;

    let normality = match shapiro_wilk(&d) {
        Ok(sw) => Some(sw),
        // Constant differences: the gate cannot run. All-zero is hopeless;
        // constant nonzero falls through to the rank test, which handles it.
        Err(StatsError::ZeroVariance) => {
            if d.iter().all(|&v| v == 0.0) {
                return Err(StatsError::AllDifferencesZero);
            }
            None
        }
        Err(e) => return Err(e),
    };

    let use_t = normality.map(|sw| sw.p >= NORMALITY_ALPHA).unwrap_or(false);
    if use_t {
        let t = paired_t(a, b)?;
        Ok(TestReport {
            kind: TestKind::PairedT,
            n_pairs: n,
            normality,
            statistic: t.t,
            df: Some(t.df),
            p_value: t.p,
            effect_size: t.cohen_d,
            mean_diff,
        })
    } else {
        let wx = wilcoxon_signed_rank(a, b)?;
        Ok(TestReport {
            kind: TestKind::WilcoxonSignedRank,
            n_pairs: n,
            normality,
            statistic: wx.w,
            df: None,
            p_value: wx.p,
            effect_size: wx.rank_biserial,
            mean_diff,
        })
    }
}
