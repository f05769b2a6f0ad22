//! Integral squared error over evaluation windows of a trace.
//!
//! ```text
//! ISE_V = int (V_ref - mean_k V_bus,k)^2 dt
//! ISE_I = int sum_k (I_ref,k - I_k)^2 dt
//! ```
//!
//! All converters sit on one bus, so the mean terminal bus voltage is the
//! recorded `v_bus`. Integrals use the trapezoidal rule on the trace samples;
//! window edges that fall between samples are handled by linear
//! interpolation of the integrand.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::trace::{Trace, TraceRecord};

const EDGE_EPS: f64 = 1e-9;

/// How per-converter current references are obtained.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum SharingReference {
    /// `I_ref,k = share_k * i_load`, shares summing to one.
    Proportional(Vec<f64>),
    /// Constant references (A).
    Fixed(Vec<f64>),
}

impl SharingReference {
    /// Shares proportional to the converter ratings.
    pub fn from_ratings(ratings: &[f64]) -> Self {
        let total: f64 = ratings.iter().sum();
        SharingReference::Proportional(ratings.iter().map(|r| r / total).collect())
    }

    fn len(&self) -> usize {
        match self {
            SharingReference::Proportional(v) | SharingReference::Fixed(v) => v.len(),
        }
    }

    fn reference(&self, k: usize, rec: &TraceRecord) -> f64 {
        match self {
            SharingReference::Proportional(s) => s[k] * rec.i_load,
            SharingReference::Fixed(r) => r[k],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IseWindow {
    pub t_start: f64,
    pub t_end: f64,
    /// Bus voltage reference (V).
    pub v_ref: f64,
    pub i_refs: SharingReference,
}

impl IseWindow {
    pub fn new(t_start: f64, t_end: f64, v_ref: f64, i_refs: SharingReference) -> Result<Self> {
        if !(t_end > t_start) {
            return Err(Error::invalid(format!(
                "window end {t_end} must be after start {t_start}"
            )));
        }
        Ok(Self {
            t_start,
            t_end,
            v_ref,
            i_refs,
        })
    }

    /// `count` back-to-back windows of length `tau` starting at `t0`.
    pub fn tiled(t0: f64, tau: f64, count: usize, v_ref: f64, i_refs: SharingReference) -> Result<Vec<Self>> {
        (0..count)
            .map(|k| {
                let a = t0 + k as f64 * tau;
                Self::new(a, a + tau, v_ref, i_refs.clone())
            })
            .collect()
    }
}

pub fn ise_v(trace: &Trace, window: &IseWindow) -> Result<f64> {
    integrate(trace, window, |rec| {
        let err = window.v_ref - rec.v_bus;
        err * err
    })
}

pub fn ise_i(trace: &Trace, window: &IseWindow) -> Result<f64> {
    if window.i_refs.len() != trace.n_converters() {
        return Err(Error::invalid(format!(
            "window has {} current references for {} converters",
            window.i_refs.len(),
            trace.n_converters()
        )));
    }
    integrate(trace, window, |rec| {
        (0..rec.i_line.len())
            .map(|k| {
                let err = window.i_refs.reference(k, rec) - rec.i_line[k];
                err * err
            })
            .sum()
    })
}

fn integrate(trace: &Trace, w: &IseWindow, f: impl Fn(&TraceRecord) -> f64) -> Result<f64> {
    let recs = trace.records();
    let (Some(first), Some(last)) = (recs.first(), recs.last()) else {
        return Err(Error::Trace("empty trace".into()));
    };
    if first.t > w.t_start + EDGE_EPS || last.t < w.t_end - EDGE_EPS {
        return Err(Error::Trace(format!(
            "window [{}, {}] outside trace [{}, {}]",
            w.t_start, w.t_end, first.t, last.t
        )));
    }
    let (a, b) = (w.t_start.max(first.t), w.t_end.min(last.t));
    let mut acc = 0.0;
    for pair in recs.windows(2) {
        let (t0, t1) = (pair[0].t, pair[1].t);
        if t1 <= a || t0 >= b {
            continue;
        }
        let (f0, f1) = (f(&pair[0]), f(&pair[1]));
        let at = |t: f64| f0 + (f1 - f0) * (t - t0) / (t1 - t0);
        let (lo, hi) = (t0.max(a), t1.min(b));
        acc += 0.5 * (at(lo) + at(hi)) * (hi - lo);
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn trace_with(dt: f64, t_end: f64, v: impl Fn(f64) -> f64, i: impl Fn(f64) -> [f64; 2]) -> Trace {
        let mut tr = Trace::new(2);
        let steps = (t_end / dt).round() as usize;
        for k in 0..=steps {
            let t = k as f64 * dt;
            let il = i(t);
            tr.push(TraceRecord {
                t,
                v_conv: vec![v(t); 2],
                i_line: il.to_vec(),
                droop: vec![1.0, 2.0],
                r_v: vec![0.0; 2],
                r_i: vec![0.0; 2],
                i_pu: vec![il[0] / 10.0, il[1] / 5.0],
                i_ref_pu: vec![0.0; 2],
                v_bus: v(t),
                v_bar_pu: vec![v(t) / 400.0; 2],
                i_load: il[0] + il[1],
            })
            .unwrap();
        }
        tr
    }

    fn shares() -> SharingReference {
        SharingReference::from_ratings(&[4000.0, 2000.0])
    }

    #[test]
    fn zero_error_gives_zero() {
        let tr = trace_with(1e-3, 4.0, |_| 400.0, |_| [10.0, 5.0]);
        let w = IseWindow::new(0.0, 4.0, 400.0, shares()).unwrap();
        assert_eq!(ise_v(&tr, &w).unwrap(), 0.0);
        assert!(ise_i(&tr, &w).unwrap() < 1e-20);
    }

    #[test]
    fn constant_errors() {
        let tr = trace_with(1e-3, 4.0, |_| 399.0, |_| [5.5, 2.5]);
        let w = IseWindow::new(0.0, 4.0, 400.0, SharingReference::Fixed(vec![5.0, 2.5])).unwrap();
        assert_relative_eq!(ise_v(&tr, &w).unwrap(), 4.0, max_relative = 1e-12);
        assert_relative_eq!(ise_i(&tr, &w).unwrap(), 1.0, max_relative = 1e-12);
    }

    #[test]
    fn window_outside_trace_is_an_error() {
        let tr = trace_with(1e-3, 2.0, |_| 400.0, |_| [1.0, 1.0]);
        let w = IseWindow::new(1.0, 4.0, 400.0, shares()).unwrap();
        assert!(ise_v(&tr, &w).is_err());
        assert!(IseWindow::new(1.0, 1.0, 400.0, shares()).is_err());
    }

    #[test]
    fn unaligned_window_edges_interpolate() {
        // integrand t^2 on a 1 ms grid: int_0.0005^1.0005 t^2 dt
        let tr = trace_with(1e-3, 2.0, |t| 400.0 - t, |_| [0.0, 0.0]);
        let w = IseWindow::new(0.0005, 1.0005, 400.0, shares()).unwrap();
        let exact = (1.0005f64.powi(3) - 0.0005f64.powi(3)) / 3.0;
        assert_relative_eq!(ise_v(&tr, &w).unwrap(), exact, max_relative = 1e-6);
    }

    #[test]
    fn grid_refinement_changes_little() {
        let v = |t: f64| 400.0 - 5.0 * (-3.0 * t).exp() * (20.0 * t).cos();
        let coarse = trace_with(2e-3, 4.0, v, |_| [0.0, 0.0]);
        let fine = trace_with(1e-3, 4.0, v, |_| [0.0, 0.0]);
        let w = IseWindow::new(0.0, 4.0, 400.0, shares()).unwrap();
        let (c, f) = (ise_v(&coarse, &w).unwrap(), ise_v(&fine, &w).unwrap());
        assert!(((c - f) / f).abs() < 5e-3);
    }

    proptest! {
        #[test]
        fn non_negative_and_additive(split in 0.1..3.9f64, amp in 0.0..10.0f64, w0 in 0.5..30.0f64) {
            let tr = trace_with(1e-3, 4.0, |t| 400.0 + amp * (w0 * t).sin(), |t| [5.0 + (w0 * t).cos(), 2.5]);
            let whole = IseWindow::new(0.0, 4.0, 400.0, shares()).unwrap();
            let left = IseWindow::new(0.0, split, 400.0, shares()).unwrap();
            let right = IseWindow::new(split, 4.0, 400.0, shares()).unwrap();
            for f in [ise_v, ise_i] {
                let (a, l, r) = (f(&tr, &whole).unwrap(), f(&tr, &left).unwrap(), f(&tr, &right).unwrap());
                prop_assert!(a >= 0.0 && l >= 0.0 && r >= 0.0);
                prop_assert!((a - l - r).abs() <= 1e-9 * a.max(1.0));
            }
        }
    }
}
