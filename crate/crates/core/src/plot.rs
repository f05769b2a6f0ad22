//! Plot-script generation.
//!
//! The emitted script is plain Python with matplotlib; it reads the trace
//! CSV itself and selects columns by header name, so it keeps working if
//! columns are appended.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::metrics::{self, IseWindow, SharingReference};
use crate::trace::Trace;

/// Optional second trace drawn against the first, with per-window ISE bars.
#[derive(Clone, Debug)]
pub struct Comparison<'a> {
    pub label: &'a str,
    pub path: &'a Path,
    pub trace: &'a Trace,
    /// ISE window length (s); windows are tiled from t = 0.
    pub window: f64,
}

/// Python source that renders droops, currents and bus voltage of `trace`,
/// plus an ISE panel when `compare` is given.
pub fn plot_script(path: &Path, trace: &Trace, label: &str, compare: Option<&Comparison>) -> Result<String> {
    if trace.is_empty() {
        return Err(Error::Trace(format!("{}: trace has no rows", path.display())));
    }
    let n = trace.n_converters();
    let mut s = String::new();
    let panels = if compare.is_some() { 4 } else { 3 };

    s.push_str("import csv\nimport matplotlib\nmatplotlib.use(\"Agg\")\nimport matplotlib.pyplot as plt\n\n");
    s.push_str(
        "def load(path):\n    with open(path, newline=\"\") as f:\n        rows = list(csv.DictReader(f))\n    if not rows:\n        raise SystemExit(path + \": empty trace\")\n    return {k: [float(r[k]) for r in rows] for k in rows[0]}\n\n",
    );
    let _ = writeln!(s, "N = {n}");
    let _ = writeln!(s, "runs = [({:?}, load({:?}))]", label, path.display().to_string());
    if let Some(c) = compare {
        let _ = writeln!(s, "runs.append(({:?}, load({:?})))", c.label, c.path.display().to_string());
    }
    let _ = writeln!(
        s,
        "fig, axes = plt.subplots({panels}, 1, figsize=(9, {}), sharex=False)",
        3 * panels
    );
    s.push_str(
        r#"for name, d in runs:
    for k in range(1, N + 1):
        axes[0].plot(d["t"], d[f"droop_{k}"], label=f"{name} R_d{k}")
        axes[1].plot(d["t"], d[f"i_line_{k}"], label=f"{name} I_{k}")
    axes[2].plot(d["t"], d["v_bus"], label=f"{name} V_bus")
axes[0].set_ylabel("droop (ohm)")
axes[1].set_ylabel("current (A)")
axes[2].set_ylabel("bus voltage (V)")
for ax in axes[:3]:
    ax.set_xlabel("t (s)")
    ax.grid(True)
    ax.legend(loc="best", fontsize="small")
"#,
    );

    if let Some(c) = compare {
        let (a, b) = (ise_series(trace, c.window)?, ise_series(c.trace, c.window)?);
        let _ = writeln!(s, "ise = {{{:?}: {}, {:?}: {}}}", label, py_pairs(&a), c.label, py_pairs(&b));
        s.push_str(
            r#"ax = axes[3]
for name, series in ise.items():
    ax.plot(range(1, len(series) + 1), [v for v, _ in series], "o-", label=f"{name} ISE_V")
ax2 = ax.twinx()
for name, series in ise.items():
    ax2.plot(range(1, len(series) + 1), [i for _, i in series], "s--", label=f"{name} ISE_I")
ax.set_xlabel("window")
ax.set_ylabel("ISE_V (V^2 s)")
ax2.set_ylabel("ISE_I (A^2 s)")
ax.grid(True)
ax.legend(loc="upper left", fontsize="small")
ax2.legend(loc="upper right", fontsize="small")
"#,
        );
    }

    let out = path.with_extension("png");
    let _ = writeln!(s, "fig.tight_layout()\nfig.savefig({:?}, dpi=120)", out.display().to_string());
    Ok(s)
}

/// `(ISE_V, ISE_I)` for back-to-back windows of `window` seconds, with
/// rating-proportional sharing inferred from the per-unit bases in the trace.
fn ise_series(trace: &Trace, window: f64) -> Result<Vec<(f64, f64)>> {
    let recs = trace.records();
    let span = recs.last().map_or(0.0, |r| r.t) - recs[0].t;
    if !(window > 0.0) {
        return Err(Error::invalid("ISE window must be positive"));
    }
    let count = ((span + 1e-9) / window).floor() as usize;
    if count == 0 {
        return Err(Error::Trace(format!(
            "trace spans {span} s, shorter than one {window} s window"
        )));
    }
    let bases = current_bases(trace)?;
    let windows = IseWindow::tiled(recs[0].t, window, count, 400.0, SharingReference::from_ratings(&bases))?;
    windows
        .iter()
        .map(|w| Ok((metrics::ise_v(trace, w)?, metrics::ise_i(trace, w)?)))
        .collect()
}

/// Current bases recovered as `i_line / i_pu` from the first row with
/// non-negligible current on every converter.
fn current_bases(trace: &Trace) -> Result<Vec<f64>> {
    trace
        .records()
        .iter()
        .find(|r| r.i_pu.iter().all(|p| p.abs() > 1e-6))
        .map(|r| r.i_line.iter().zip(&r.i_pu).map(|(i, p)| i / p).collect())
        .ok_or_else(|| Error::Trace("cannot infer current bases: no row with current on all converters".into()))
}

fn py_pairs(xs: &[(f64, f64)]) -> String {
    let items: Vec<String> = xs.iter().map(|(a, b)| format!("({a:?}, {b:?})")).collect();
    format!("[{}]", items.join(", "))
}
