//! Count-table analysis: correlators with Poisson errors, CHSH reports,
//! sinusoidal fringe fits, visibility and accidental subtraction.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quantum::{reduce_phase, MeasurementSettings};
use crate::sim::{CountRow, CountTable};

/// How an S value was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    RawCounts,
    FromFit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelatorEntry {
    pub phi_a: f64,
    pub phi_b: f64,
    pub e: f64,
    pub delta_e: f64,
}

/// CHSH estimate with first-order Poisson error propagation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChshReport {
    pub s: f64,
    pub delta_s: f64,
    /// (S - 2) / delta_S; absent when delta_S = 0.
    pub sigma_violation: Option<f64>,
    pub method: Method,
    pub correlators: Vec<CorrelatorEntry>,
}

/// Correlator E = (c11 + c22 - c12 - c21) / total with each count treated as
/// an independent Poisson variable of variance equal to its value.
///
/// Counts are accepted as reals so fitted count models can be fed through
/// the same estimator.
pub fn correlation_from_counts(counts: [f64; 4]) -> Result<(f64, f64)> {
    let [c11, c12, c21, c22] = counts;
    if counts.iter().any(|&c| c < 0.0 || !c.is_finite()) {
        return Err(Error::Domain("counts must be finite and nonnegative".into()));
    }
    let n = c11 + c12 + c21 + c22;
    if n <= 0.0 {
        return Err(Error::IncompleteData("zero total count".into()));
    }
    let e = (c11 + c22 - c12 - c21) / n;
    let var = ((1.0 - e).powi(2) * (c11 + c22) + (1.0 + e).powi(2) * (c12 + c21)) / (n * n);
    Ok((e, var.max(0.0).sqrt()))
}

pub fn sigma_of_violation(s: f64, delta_s: f64) -> Option<f64> {
    (delta_s > 0.0).then(|| (s - 2.0) / delta_s)
}

fn find_row<'a>(table: &'a CountTable, phi_a: f64, phi_b: f64) -> Result<&'a CountRow> {
    let tol = 1e-9;
    table
        .rows
        .iter()
        .find(|r| {
            (reduce_phase(r.phi_a) - reduce_phase(phi_a)).abs() < tol
                && (reduce_phase(r.phi_b) - reduce_phase(phi_b)).abs() < tol
        })
        .ok_or_else(|| {
            Error::IncompleteData(format!(
                "no count row for setting pair ({phi_a}, {phi_b})"
            ))
        })
}

/// CHSH value from raw counts: S = E(A,B) + E(A',B) + E(A,B') - E(A',B'),
/// delta_S in quadrature.
pub fn chsh_from_counts(table: &CountTable, settings: &MeasurementSettings) -> Result<ChshReport> {
    let pairs = settings.setting_pairs();
    let mut correlators = Vec::with_capacity(4);
    for (pa, pb) in pairs {
        let row = find_row(table, pa, pb)?;
        let (e, de) = correlation_from_counts(row.counts.map(|c| c as f64))?;
        correlators.push(CorrelatorEntry {
            phi_a: pa,
            phi_b: pb,
            e,
            delta_e: de,
        });
    }
    let s = correlators[0].e + correlators[1].e + correlators[2].e - correlators[3].e;
    let delta_s = correlators
        .iter()
        .map(|c| c.delta_e * c.delta_e)
        .sum::<f64>()
        .sqrt();
    Ok(ChshReport {
        s,
        delta_s,
        sigma_violation: sigma_of_violation(s, delta_s),
        method: Method::RawCounts,
        correlators,
    })
}

/// Least-squares fit of count(phi) = C [1 + V cos(phi + theta0)].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FringeFit {
    pub amplitude: f64,
    pub offset: f64,
    pub phase: f64,
    pub visibility: f64,
    pub residual_norm: f64,
}

impl FringeFit {
    /// Fitted count model evaluated at `phi`, floored at zero.
    pub fn eval(&self, phi: f64) -> f64 {
        (self.offset + self.amplitude * (phi + self.phase).cos()).max(0.0)
    }
}

/// Fit the single-harmonic fringe model by linear least squares in
/// (C, C V cos theta0, -C V sin theta0).
pub fn fit_fringe(phis: &[f64], counts: &[f64]) -> Result<FringeFit> {
    if phis.len() != counts.len() {
        return Err(Error::Domain("phase and count arrays differ in length".into()));
    }
    if phis.len() < 4 {
        return Err(Error::IncompleteData("need at least 4 phase points".into()));
    }
    // Normal equations for y = b0 + b1 cos(phi) + b2 sin(phi).
    let mut ata = Matrix3::zeros();
    let mut aty = Vector3::zeros();
    for (&phi, &y) in phis.iter().zip(counts) {
        let row = Vector3::new(1.0, phi.cos(), phi.sin());
        ata += row * row.transpose();
        aty += row * y;
    }
    let beta = ata
        .lu()
        .solve(&aty)
        .ok_or_else(|| Error::Numeric("singular fringe-fit design".into()))?;
    // Guard against near-singular designs the LU still "solves".
    let svd = ata.svd(false, false);
    let smin = svd.singular_values.min();
    let smax = svd.singular_values.max();
    if smin <= 0.0 || smax / smin > 1e12 {
        return Err(Error::Numeric("degenerate fringe-fit design".into()));
    }
    let (c, a, b) = (beta[0], beta[1], beta[2]);
    if c <= 0.0 {
        return Err(Error::Numeric("fitted offset is nonpositive".into()));
    }
    let amplitude = a.hypot(b);
    let phase = (-b).atan2(a);
    let visibility = (amplitude / c).clamp(0.0, 1.0);
    let residual_norm = phis
        .iter()
        .zip(counts)
        .map(|(&phi, &y)| {
            let m = c + a * phi.cos() + b * phi.sin();
            (y - m) * (y - m)
        })
        .sum::<f64>()
        .sqrt();
    Ok(FringeFit {
        amplitude,
        offset: c,
        phase,
        visibility,
        residual_norm,
    })
}

/// CHSH from fitted fringe models: evaluate the four fitted curves at the
/// CHSH phases and push the fitted values through the count estimator.
///
/// `fits_b` holds the (11, 12, 21, 22) curves recorded at phi_B =
/// `settings.phi_b`; `fits_b_prime` the curves at phi_B'.
pub fn chsh_from_fits(
    fits_b: &[FringeFit; 4],
    fits_b_prime: &[FringeFit; 4],
    settings: &MeasurementSettings,
) -> Result<ChshReport> {
    let eval4 = |fits: &[FringeFit; 4], phi_a: f64| -> [f64; 4] {
        [
            fits[0].eval(phi_a),
            fits[1].eval(phi_a),
            fits[2].eval(phi_a),
            fits[3].eval(phi_a),
        ]
    };
    let pairs = [
        (settings.phi_a, settings.phi_b, eval4(fits_b, settings.phi_a)),
        (
            settings.phi_a_prime,
            settings.phi_b,
            eval4(fits_b, settings.phi_a_prime),
        ),
        (
            settings.phi_a,
            settings.phi_b_prime,
            eval4(fits_b_prime, settings.phi_a),
        ),
        (
            settings.phi_a_prime,
            settings.phi_b_prime,
            eval4(fits_b_prime, settings.phi_a_prime),
        ),
    ];
    let mut correlators = Vec::with_capacity(4);
    for (pa, pb, counts) in pairs {
        let (e, de) = correlation_from_counts(counts)?;
        correlators.push(CorrelatorEntry {
            phi_a: pa,
            phi_b: pb,
            e,
            delta_e: de,
        });
    }
    let s = correlators[0].e + correlators[1].e + correlators[2].e - correlators[3].e;
    let delta_s = correlators
        .iter()
        .map(|c| c.delta_e * c.delta_e)
        .sum::<f64>()
        .sqrt();
    Ok(ChshReport {
        s,
        delta_s,
        sigma_violation: sigma_of_violation(s, delta_s),
        method: Method::FromFit,
        correlators,
    })
}

/// Unweighted mean of per-curve visibilities with the standard error of the
/// mean.
pub fn mean_visibility(fits: &[FringeFit]) -> Result<(f64, f64)> {
    if fits.is_empty() {
        return Err(Error::IncompleteData("no fits supplied".into()));
    }
    let n = fits.len() as f64;
    let mean = fits.iter().map(|f| f.visibility).sum::<f64>() / n;
    if fits.len() == 1 {
        return Ok((mean, 0.0));
    }
    let var = fits
        .iter()
        .map(|f| (f.visibility - mean).powi(2))
        .sum::<f64>()
        / (n - 1.0);
    Ok((mean, (var / n).sqrt()))
}

/// Subtract expected accidental counts rate_ij * duration per detector pair,
/// flooring at zero and re-rounding to integers.
pub fn subtract_accidentals(table: &CountTable, rates: [f64; 4]) -> Result<CountTable> {
    if rates.iter().any(|&r| r < 0.0 || !r.is_finite()) {
        return Err(Error::Domain("accidental rates must be nonnegative".into()));
    }
    let rows = table
        .rows
        .iter()
        .map(|r| {
            let mut counts = [0u64; 4];
            for (k, c) in counts.iter_mut().enumerate() {
                let corrected = r.counts[k] as f64 - rates[k] * r.duration;
                *c = corrected.round().max(0.0) as u64;
            }
            CountRow {
                counts,
                ..r.clone()
            }
        })
        .collect();
    Ok(CountTable { rows })
}
