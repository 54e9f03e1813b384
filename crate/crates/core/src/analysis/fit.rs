use std::f64::consts::TAU;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual.
    pub rms: f64,
}

/// Least-squares line through `(x, y)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    if x.len() != y.len() {
        return Err(Error::config("fit", "x and y lengths differ"));
    }
    if x.len() < 2 {
        return Err(Error::InsufficientLength {
            reason: "a line needs two points".into(),
        });
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxx += (a - mx) * (a - mx);
        sxy += (a - mx) * (b - my);
    }
    if sxx == 0.0 {
        return Err(Error::config("fit", "x values are all equal"));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rms = (x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum::<f64>() / n).sqrt();
    Ok(LinearFit { slope, intercept, rms })
}

/// `y ≈ offset + amplitude sin(omega t + phase)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SineFit {
    pub amplitude: f64,
    pub omega: f64,
    pub phase: f64,
    pub offset: f64,
    pub rms: f64,
}

impl SineFit {
    pub fn period(&self) -> f64 {
        TAU / self.omega
    }
}

/// Linear least squares for the sine, cosine and constant terms at fixed `omega`.
fn fit_at(t: &[f64], y: &[f64], omega: f64) -> Option<SineFit> {
    let mut m = [[0.0f64; 4]; 3];
    for (&ti, &yi) in t.iter().zip(y) {
        let b = [(omega * ti).sin(), (omega * ti).cos(), 1.0];
        for r in 0..3 {
            for c in 0..3 {
                m[r][c] += b[r] * b[c];
            }
            m[r][3] += b[r] * yi;
        }
    }
    // Gauss-Jordan with partial pivoting on the 3x3 normal equations.
    for col in 0..3 {
        let piv = (col..3).max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))?;
        if m[piv][col].abs() < 1e-300 {
            return None;
        }
        m.swap(col, piv);
        for r in 0..3 {
            if r != col {
                let f = m[r][col] / m[col][col];
                let pivot = m[col];
                for (x, p) in m[r].iter_mut().zip(pivot).skip(col) {
                    *x -= f * p;
                }
            }
        }
    }
    let (a, b, c) = (m[0][3] / m[0][0], m[1][3] / m[1][1], m[2][3] / m[2][2]);
    let rms = (t
        .iter()
        .zip(y)
        .map(|(&ti, &yi)| (yi - a * (omega * ti).sin() - b * (omega * ti).cos() - c).powi(2))
        .sum::<f64>()
        / t.len() as f64)
        .sqrt();
    Some(SineFit {
        amplitude: a.hypot(b),
        omega,
        phase: b.atan2(a),
        offset: c,
        rms,
    })
}

/// Fits a sinusoid with unknown frequency, searching `omega` within ±30 %
/// of `omega_guess`.
pub fn fit_sinusoid(t: &[f64], y: &[f64], omega_guess: f64) -> Result<SineFit> {
    if t.len() != y.len() {
        return Err(Error::config("fit", "t and y lengths differ"));
    }
    if t.len() < 4 {
        return Err(Error::InsufficientLength {
            reason: "a sinusoid needs four points".into(),
        });
    }
    if !(omega_guess.is_finite() && omega_guess > 0.0) {
        return Err(Error::config("omega_guess", "must be positive"));
    }
    let cost = |w: f64| fit_at(t, y, w).map_or(f64::INFINITY, |f| f.rms);
    let (lo, hi, steps) = (0.7 * omega_guess, 1.3 * omega_guess, 240);
    let h = (hi - lo) / steps as f64;
    let best = (0..=steps)
        .map(|i| lo + i as f64 * h)
        .min_by(|&a, &b| cost(a).total_cmp(&cost(b)))
        .expect("non-empty scan");
    // Golden-section refinement inside the neighbouring scan cells.
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let (mut a, mut b) = (best - h, best + h);
    let (mut c, mut d) = (b - g * (b - a), a + g * (b - a));
    let (mut fc, mut fd) = (cost(c), cost(d));
    for _ in 0..80 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = cost(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = cost(d);
        }
    }
    fit_at(t, y, 0.5 * (a + b)).ok_or_else(|| Error::config("fit", "degenerate sample times"))
}
