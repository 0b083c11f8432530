//! Energy-based magnitude/phase decompositions: Sprague-Geers, the Russell
//! magnitude, and NISE.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{cross_correlation, psi_stats, MetricError, PsiStats, Result, ShiftScan};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpragueGeers {
    pub m: f64,
    pub p: f64,
    pub c: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NiseDecomposition {
    pub p: f64,
    pub m: f64,
    pub s: f64,
    pub c: f64,
}

fn require_energy(psi: &PsiStats) -> Result<()> {
    if psi.psi_xx == 0.0 {
        return Err(MetricError::ZeroEnergy("test"));
    }
    if psi.psi_yy == 0.0 {
        return Err(MetricError::ZeroEnergy("reference"));
    }
    Ok(())
}

pub(crate) fn sprague_geers_from(psi: &PsiStats) -> Result<SpragueGeers> {
    require_energy(psi)?;
    let m = (psi.psi_xx / psi.psi_yy).sqrt() - 1.0;
    let cos = (psi.psi_xy / psi.energy_product().sqrt()).clamp(-1.0, 1.0);
    let p = cos.acos() / PI;
    Ok(SpragueGeers {
        m,
        p,
        c: m.hypot(p),
    })
}

pub fn sprague_geers(x: &[f64], y: &[f64]) -> Result<SpragueGeers> {
    sprague_geers_from(&psi_stats(x, y)?)
}

pub(crate) fn russell_from(psi: &PsiStats) -> Result<f64> {
    require_energy(psi)?;
    let diff = psi.psi_xx - psi.psi_yy;
    let ratio = (diff / psi.energy_product().sqrt()).abs();
    if diff == 0.0 {
        return Ok(0.0);
    }
    Ok(diff.signum() * (1.0 + ratio).log10())
}

/// Signed log-scaled magnitude error; positive when the test signal carries
/// more energy than the reference.
pub fn russell_magnitude(x: &[f64], y: &[f64]) -> Result<f64> {
    russell_from(&psi_stats(x, y)?)
}

/// NISE components from precomputed energies and a lag scan of the same pair.
pub fn nise_from_scan(psi: &PsiStats, scan: &ShiftScan) -> Result<NiseDecomposition> {
    require_energy(psi)?;
    let total = psi.psi_xx + psi.psi_yy;
    let cross_star = scan.cross_at(scan.n_star);
    let rho_star = scan.rho_star();
    Ok(NiseDecomposition {
        p: (2.0 * cross_star - 2.0 * psi.psi_xy) / total,
        m: rho_star - 2.0 * cross_star / total,
        s: 1.0 - rho_star,
        c: 1.0 - 2.0 * psi.psi_xy / total,
    })
}

pub fn nise(x: &[f64], y: &[f64], max_lag: usize) -> Result<NiseDecomposition> {
    let psi = psi_stats(x, y)?;
    require_energy(&psi)?;
    let scan = cross_correlation(x, y, max_lag)?;
    nise_from_scan(&psi, &scan)
}
