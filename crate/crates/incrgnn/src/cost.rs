//! Analytical per-hop FLOP estimates and correlation against measured
//! operation counters.
//!
//! For a hop with `a_l` active vertices, average degree `delta`, and layer
//! dims `d_{l-1} x d_l`:
//!
//! - recompute:   `a_l * delta * d_{l-1} + a_l * d_{l-1} * d_l`
//! - incremental: `a_{l-1} * delta * d_{l-1} + a_l * d_{l-1} * d_l`
//!
//! The incremental estimate never exceeds the recompute estimate while the
//! frontier is non-shrinking, and the two coincide when `a_{l-1} = a_l`.

use std::io::{BufWriter, Write};
use std::path::Path;

use crate::engine::BatchResult;

/// Inputs to the per-hop estimators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HopStats {
    pub active: u64,
    pub active_prev: u64,
    /// Average in-degree of the graph at batch time (|E| / |V|).
    pub avg_degree: f64,
    pub d_in: usize,
    pub d_out: usize,
}

pub fn estimate_rc(hs: &HopStats) -> f64 {
    hs.active as f64 * hs.avg_degree * hs.d_in as f64
        + hs.active as f64 * hs.d_in as f64 * hs.d_out as f64
}

pub fn estimate_rp(hs: &HopStats) -> f64 {
    hs.active_prev as f64 * hs.avg_degree * hs.d_in as f64
        + hs.active as f64 * hs.d_in as f64 * hs.d_out as f64
}

/// One report line: a (batch, hop) pair for one engine.
#[derive(Debug, Clone)]
pub struct CostRow {
    pub batch: usize,
    pub hop: usize,
    pub engine: &'static str,
    pub active_prev: u64,
    pub active: u64,
    pub est_rc: f64,
    pub est_rp: f64,
    pub measured: u64,
}

/// Builds report rows from a batch result, reading layer dims off `dims`
/// (dims[l] = embedding width at hop l, dims[0] = feature width).
pub fn rows_for_batch(
    batch: usize,
    engine: &'static str,
    result: &BatchResult,
    avg_degree: f64,
    dims: &[usize],
) -> Vec<CostRow> {
    let mut rows = Vec::with_capacity(result.hops.len());
    for (i, hop) in result.hops.iter().enumerate() {
        let l = i + 1;
        let active_prev = if i == 0 { result.active_hop0 } else { result.hops[i - 1].active };
        let hs = HopStats {
            active: hop.active,
            active_prev,
            avg_degree,
            d_in: dims[l - 1],
            d_out: dims[l],
        };
        rows.push(CostRow {
            batch,
            hop: l,
            engine,
            active_prev,
            active: hop.active,
            est_rc: estimate_rc(&hs),
            est_rp: estimate_rp(&hs),
            measured: hop.ops,
        });
    }
    rows
}

/// Pearson correlation coefficient; `None` when either side is constant.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        cov += (x - mx) * (y - my);
        vx += (x - mx) * (x - mx);
        vy += (y - my) * (y - my);
    }
    if vx == 0.0 || vy == 0.0 {
        return None;
    }
    Some(cov / (vx.sqrt() * vy.sqrt()))
}

/// Correlation between estimates and measurements at one hop for one engine.
pub fn hop_correlation(rows: &[CostRow], engine: &str, hop: usize) -> Option<f64> {
    let (mut est, mut meas) = (Vec::new(), Vec::new());
    for r in rows.iter().filter(|r| r.engine == engine && r.hop == hop) {
        est.push(if engine == "rp" { r.est_rp } else { r.est_rc });
        meas.push(r.measured as f64);
    }
    pearson(&est, &meas)
}

/// Writes the cost report CSV: schema comment, header, one row per
/// (batch, hop, engine).
pub fn write_report(rows: &[CostRow], path: &Path) -> Result<(), std::io::Error> {
    let file = std::fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    writeln!(w, "# schema=cost-report.v1")?;
    writeln!(w, "batch,hop,engine,a_prev,a,est_rc,est_rp,measured")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            r.batch, r.hop, r.engine, r.active_prev, r.active, r.est_rc, r.est_rp, r.measured
        )?;
    }
    w.flush()
}
