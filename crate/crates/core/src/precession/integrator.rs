//! Dormand–Prince 5(4) embedded Runge–Kutta stepper with a projection hook.

use crate::error::{Error, Result};

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;

// Difference between the fifth- and fourth-order weights.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const SAFETY: f64 = 0.9;
const MIN_FACTOR: f64 = 0.2;
const MAX_FACTOR: f64 = 5.0;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

/// Adaptive stepper for autonomous systems y' = f(y) of fixed dimension `N`.
///
/// After every accepted step the state is passed to `project`, which may
/// pull it back onto a constraint manifold.
pub struct Dopri5<const N: usize> {
    pub rtol: f64,
    pub atol: f64,
    pub stats: StepStats,
    h: f64,
}

fn axpy<const N: usize>(y: &[f64; N], terms: &[(f64, &[f64; N])], h: f64) -> [f64; N] {
    let mut out = *y;
    for (c, k) in terms {
        for i in 0..N {
            out[i] += h * c * k[i];
        }
    }
    out
}

impl<const N: usize> Dopri5<N> {
    pub fn new(tol: f64) -> Self {
        Self { rtol: tol, atol: tol, stats: StepStats::default(), h: 0.0 }
    }

    fn initial_step<F>(&mut self, f: &F, y: &[f64; N], k1: &[f64; N], dir: f64) -> f64
    where
        F: Fn(&[f64; N]) -> [f64; N],
    {
        let scale = |i: usize| self.atol + self.rtol * y[i].abs();
        let d0 = (0..N).map(|i| (y[i] / scale(i)).powi(2)).sum::<f64>().sqrt() / (N as f64).sqrt();
        let d1 = (0..N).map(|i| (k1[i] / scale(i)).powi(2)).sum::<f64>().sqrt() / (N as f64).sqrt();
        let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        let y1 = axpy(y, &[(1.0, k1)], dir * h0);
        let k2 = f(&y1);
        self.stats.evaluations += 1;
        let d2 = (0..N).map(|i| ((k2[i] - k1[i]) / scale(i)).powi(2)).sum::<f64>().sqrt()
            / (N as f64).sqrt()
            / h0;
        let h1 = if d1.max(d2) <= 1e-15 {
            (h0 * 1e-3).max(1e-6)
        } else {
            (0.01 / d1.max(d2)).powf(1.0 / 5.0)
        };
        (100.0 * h0).min(h1)
    }

    /// Advances `y` from `t` to exactly `t_end` (either direction).
    pub fn advance<F, P>(&mut self, f: &F, project: &P, t: f64, y: &mut [f64; N], t_end: f64) -> Result<()>
    where
        F: Fn(&[f64; N]) -> [f64; N],
        P: Fn(&mut [f64; N]),
    {
        let span = t_end - t;
        if span == 0.0 {
            return Ok(());
        }
        let dir = span.signum();
        let mut t = t;
        let mut k1 = f(y);
        self.stats.evaluations += 1;
        if self.h == 0.0 {
            self.h = self.initial_step(f, y, &k1, dir);
        }
        loop {
            let remaining = (t_end - t) * dir;
            if remaining <= 0.0 {
                return Ok(());
            }
            let mut h = self.h.min(remaining);
            let last = h == remaining;
            let min_h = 1e-14 * t.abs().max(1.0);
            if h < min_h && !last {
                return Err(Error::Stiffness { t, h });
            }
            loop {
                let hs = dir * h;
                let k2 = f(&axpy(y, &[(A21, &k1)], hs));
                let k3 = f(&axpy(y, &[(A31, &k1), (A32, &k2)], hs));
                let k4 = f(&axpy(y, &[(A41, &k1), (A42, &k2), (A43, &k3)], hs));
                let k5 = f(&axpy(y, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)], hs));
                let k6 = f(&axpy(y, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)], hs));
                let y_new = axpy(y, &[(B1, &k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)], hs);
                let k7 = f(&y_new);
                self.stats.evaluations += 6;

                let mut err = 0.0;
                for i in 0..N {
                    let e = hs
                        * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
                    let sc = self.atol + self.rtol * y[i].abs().max(y_new[i].abs());
                    err += (e / sc).powi(2);
                }
                let err = (err / N as f64).sqrt();
                let factor = if err == 0.0 {
                    MAX_FACTOR
                } else {
                    (SAFETY * err.powf(-0.2)).clamp(MIN_FACTOR, MAX_FACTOR)
                };

                if err <= 1.0 {
                    self.stats.accepted += 1;
                    t = if last { t_end } else { t + hs };
                    *y = y_new;
                    project(y);
                    // Clipping to hit `t_end` must not shrink the next natural step.
                    if !last || factor < 1.0 {
                        self.h = h * factor;
                    }
                    k1 = f(y);
                    self.stats.evaluations += 1;
                    break;
                }
                self.stats.rejected += 1;
                h *= factor.min(1.0);
                if h < min_h {
                    return Err(Error::Stiffness { t, h });
                }
            }
        }
    }
}
