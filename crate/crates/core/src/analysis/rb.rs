//! Randomized-benchmarking decay fit, survival = A·p^m + B.
//!
//! For fixed p the model is linear in (A, B), so the weighted least-squares
//! problem reduces to a one-dimensional search over p (variable projection).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RbPoint {
    /// Sequence length in gates.
    pub length: u64,
    /// Mean survival probability over all sequences and shots.
    pub survival: f64,
    /// Total shots behind `survival`; sets the binomial weight.
    pub shots: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RbFit {
    pub a: f64,
    pub b: f64,
    pub p: f64,
    /// Error per gate, (1 − p)/2.
    pub eps: f64,
    /// Δχ² = 1 interval on eps.
    pub eps_low: f64,
    pub eps_high: f64,
    pub chi2: f64,
    /// Decay not resolved: p pinned at 1 or no amplitude.
    pub degenerate: bool,
}

struct Problem<'a> {
    pts: &'a [RbPoint],
    w: Vec<f64>,
    asymptote: Option<f64>,
}

impl Problem<'_> {
    /// Best (A, B) and χ² at decay constant `p`.
    fn solve(&self, p: f64) -> (f64, f64, f64) {
        let f: Vec<f64> = self.pts.iter().map(|pt| p.powf(pt.length as f64)).collect();
        let (a, b) = match self.asymptote {
            Some(b) => {
                let (mut num, mut den) = (0.0, 0.0);
                for ((pt, &fi), &wi) in self.pts.iter().zip(&f).zip(&self.w) {
                    num += wi * fi * (pt.survival - b);
                    den += wi * fi * fi;
                }
                (if den > 0.0 { num / den } else { 0.0 }, b)
            }
            None => {
                let (mut sw, mut sf, mut sff, mut sy, mut sfy) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for ((pt, &fi), &wi) in self.pts.iter().zip(&f).zip(&self.w) {
                    sw += wi;
                    sf += wi * fi;
                    sff += wi * fi * fi;
                    sy += wi * pt.survival;
                    sfy += wi * fi * pt.survival;
                }
                let det = sw * sff - sf * sf;
                if det.abs() <= 1e-14 * sw * sff {
                    // Columns collinear (p = 1): the data only fix A + B.
                    (0.0, sy / sw)
                } else {
                    ((sw * sfy - sf * sy) / det, (sff * sy - sf * sfy) / det)
                }
            }
        };
        let chi2 =
            self.pts.iter().zip(&f).zip(&self.w).map(|((pt, &fi), &wi)| wi * (pt.survival - a * fi - b).powi(2)).sum();
        (a, b, chi2)
    }

    fn chi2(&self, x: f64) -> f64 {
        self.solve((-x).exp()).2
    }
}

fn golden(lo: f64, hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let (mut a, mut b) = (lo, hi);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if (b - a).abs() <= 1e-15 * (a.abs() + b.abs()) + 1e-300 {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Weighted least-squares fit of A·p^m + B.
///
/// `asymptote` fixes B (0.5 for a fully depolarized qubit); `None` fits it.
pub fn fit_rb_decay(points: &[RbPoint], asymptote: Option<f64>) -> Result<RbFit> {
    let mut lengths: Vec<u64> = points.iter().map(|p| p.length).collect();
    lengths.sort_unstable();
    lengths.dedup();
    if lengths.len() < 2 {
        return Err(Error::InvalidParameter("RB fit needs at least two distinct sequence lengths".into()));
    }
    for p in points {
        if !(0.0..=1.0).contains(&p.survival) || p.shots == 0 {
            return Err(Error::InvalidParameter(format!("bad RB point {p:?}")));
        }
    }
    // Binomial weights with a half-count floor so perfect survival still carries finite weight.
    let w = points
        .iter()
        .map(|p| {
            let n = p.shots as f64;
            let s = (p.survival * n + 0.5) / (n + 1.0);
            n / (s * (1.0 - s))
        })
        .collect();
    let prob = Problem { pts: points, w, asymptote };

    // x = −ln p on a log grid, then golden-section refinement around the best node.
    let mut grid = vec![0.0];
    let mut x = 1e-10;
    while x < 5.0 {
        grid.push(x);
        x *= 1.25;
    }
    let vals: Vec<f64> = grid.iter().map(|&x| prob.chi2(x)).collect();
    let best = vals.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).map(|(i, _)| i).unwrap_or(0);
    let lo = grid[best.saturating_sub(1)];
    let hi = grid[(best + 1).min(grid.len() - 1)];
    let mut x_hat = golden(lo, hi, |x| prob.chi2(x));
    if prob.chi2(0.0) <= prob.chi2(x_hat) {
        x_hat = 0.0;
    }
    let p = (-x_hat).exp();
    let (a, b, chi2) = prob.solve(p);
    let degenerate = x_hat <= 1e-12 || a.abs() < 1e-12;

    // Δχ² = 1 bounds in x, mapped to eps.
    let target = chi2 + 1.0;
    let bisect = |mut inside: f64, mut outside: f64| {
        for _ in 0..200 {
            let mid = 0.5 * (inside + outside);
            if prob.chi2(mid) <= target {
                inside = mid;
            } else {
                outside = mid;
            }
        }
        inside
    };
    let x_low = if prob.chi2(0.0) <= target { 0.0 } else { bisect(x_hat, 0.0) };
    let mut x_far = (2.0 * x_hat).max(1e-9);
    while prob.chi2(x_far) <= target && x_far < 50.0 {
        x_far *= 2.0;
    }
    let x_high = bisect(x_hat, x_far);
    let eps_of = |x: f64| (1.0 - (-x).exp()) / 2.0;

    Ok(RbFit {
        a,
        b,
        p,
        eps: if degenerate { 0.0 } else { (1.0 - p) / 2.0 },
        eps_low: eps_of(x_low),
        eps_high: eps_of(x_high),
        chi2,
        degenerate,
    })
}
