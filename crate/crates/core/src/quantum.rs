//! Exact quantum predictions for the path-qubit pair: states, analyzer
//! projectors, coincidence probabilities, correlators, CHSH values and
//! fidelity.
//!
//! Basis order is fixed globally as (SS, SL, LS, LL), i.e. qubit A tensor
//! qubit B with the single-qubit basis ordered (S, L).

use nalgebra::{Matrix2, Matrix4, SymmetricEigen, Vector2};
use num_complex::Complex64;
use std::f64::consts::PI;

use crate::error::{Error, Result};

type C64 = Complex64;

const HERMITICITY_TOL: f64 = 1e-12;
const TRACE_TOL: f64 = 1e-12;
const PSD_TOL: f64 = 1e-10;

/// Reduce a phase to the interval (-pi, pi].
pub fn reduce_phase(phi: f64) -> f64 {
    let r = phi.rem_euclid(2.0 * PI);
    if r > PI {
        r - 2.0 * PI
    } else {
        r
    }
}

/// A validated 4x4 density operator of the two path qubits.
///
/// Invariants checked on construction: Hermitian, unit trace, positive
/// semidefinite (eigenvalues >= -1e-10).
#[derive(Debug, Clone, PartialEq)]
pub struct DensityOperator {
    matrix: Matrix4<C64>,
}

impl DensityOperator {
    pub fn new(matrix: Matrix4<C64>) -> Result<Self> {
        for j in 0..4 {
            for k in 0..4 {
                let d = matrix[(j, k)] - matrix[(k, j)].conj();
                if d.norm() > HERMITICITY_TOL {
                    return Err(Error::Domain(format!(
                        "density operator is not Hermitian at ({j},{k})"
                    )));
                }
            }
        }
        let trace = matrix.trace();
        if (trace.re - 1.0).abs() > TRACE_TOL || trace.im.abs() > TRACE_TOL {
            return Err(Error::Domain(format!(
                "density operator trace is {trace}, expected 1"
            )));
        }
        let eig = SymmetricEigen::new(matrix);
        if eig.eigenvalues.iter().any(|&l| l < -PSD_TOL) {
            return Err(Error::Domain(
                "density operator has a negative eigenvalue".into(),
            ));
        }
        Ok(Self { matrix })
    }

    /// Build a state from an arbitrary complex factor A as A A†/tr(A A†).
    /// The result is physical by construction.
    pub fn from_positive_factor(factor: &Matrix4<C64>) -> Result<Self> {
        let g = factor * factor.adjoint();
        let t = g.trace().re;
        if t <= 0.0 || !t.is_finite() {
            return Err(Error::Domain("factor has nonpositive trace norm".into()));
        }
        Self::new(g / C64::new(t, 0.0))
    }

    pub fn matrix(&self) -> &Matrix4<C64> {
        &self.matrix
    }

    pub fn eigenvalues(&self) -> [f64; 4] {
        let eig = SymmetricEigen::new(self.matrix);
        let mut out = [0.0; 4];
        for (i, l) in eig.eigenvalues.iter().enumerate() {
            out[i] = *l;
        }
        out
    }
}

/// Detector port behind an analyzer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Port {
    One,
    Two,
}

/// Single-qubit projector of an analyzer set to phase `phi`.
///
/// Port 1 projects onto (|L> + e^{i phi}|S>)/sqrt(2); port 2 onto the
/// orthogonal complement.
#[derive(Debug, Clone, Copy)]
pub struct AnalyzerProjector {
    pub phase: f64,
    pub port: Port,
}

impl AnalyzerProjector {
    pub fn new(phase: f64, port: Port) -> Self {
        Self {
            phase: reduce_phase(phase),
            port,
        }
    }

    /// The projected single-qubit state in the (S, L) basis.
    pub fn state(&self) -> Vector2<C64> {
        let e = C64::from_polar(1.0, self.phase);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        match self.port {
            Port::One => Vector2::new(e * s, C64::new(s, 0.0)),
            Port::Two => Vector2::new(-e * s, C64::new(s, 0.0)),
        }
    }

    pub fn matrix(&self) -> Matrix2<C64> {
        let v = self.state();
        v * v.adjoint()
    }
}

/// State vector for a port-1 analyzer projection at phase `phi`,
/// in the (S, L) basis.
pub fn analyzer_state(phi: f64) -> Vector2<C64> {
    AnalyzerProjector::new(phi, Port::One).state()
}

/// The four analyzer phases of a CHSH run, reduced to (-pi, pi].
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MeasurementSettings {
    pub phi_a: f64,
    pub phi_a_prime: f64,
    pub phi_b: f64,
    pub phi_b_prime: f64,
}

impl MeasurementSettings {
    pub fn new(phi_a: f64, phi_a_prime: f64, phi_b: f64, phi_b_prime: f64) -> Result<Self> {
        for (name, v) in [
            ("phi_a", phi_a),
            ("phi_a_prime", phi_a_prime),
            ("phi_b", phi_b),
            ("phi_b_prime", phi_b_prime),
        ] {
            if !v.is_finite() {
                return Err(Error::Domain(format!("{name} is not finite")));
            }
        }
        Ok(Self {
            phi_a: reduce_phase(phi_a),
            phi_a_prime: reduce_phase(phi_a_prime),
            phi_b: reduce_phase(phi_b),
            phi_b_prime: reduce_phase(phi_b_prime),
        })
    }

    /// The four (phi_A, phi_B) pairs entering the CHSH combination, in the
    /// order (A,B), (A',B), (A,B'), (A',B').
    pub fn setting_pairs(&self) -> [(f64, f64); 4] {
        [
            (self.phi_a, self.phi_b),
            (self.phi_a_prime, self.phi_b),
            (self.phi_a, self.phi_b_prime),
            (self.phi_a_prime, self.phi_b_prime),
        ]
    }
}

/// Coincidence probabilities for the four detector pairs at one setting pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoincidenceProbabilities {
    pub p11: f64,
    pub p12: f64,
    pub p21: f64,
    pub p22: f64,
}

impl CoincidenceProbabilities {
    pub fn as_array(&self) -> [f64; 4] {
        [self.p11, self.p12, self.p21, self.p22]
    }
}

/// The maximally entangled path state (|SS> + |LL>)/sqrt(2) as a density
/// operator.
pub fn bell_phi_plus() -> DensityOperator {
    let mut m = Matrix4::zeros();
    let h = C64::new(0.5, 0.0);
    m[(0, 0)] = h;
    m[(0, 3)] = h;
    m[(3, 0)] = h;
    m[(3, 3)] = h;
    DensityOperator::new(m).expect("|Phi+><Phi+| is a valid state")
}

/// Phase-dephased Phi+ with interference visibility exactly `v`:
/// v |Phi+><Phi+| + (1-v) (|SS><SS| + |LL><LL|)/2.
pub fn werner_like(v: f64) -> Result<DensityOperator> {
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::Domain(format!("visibility {v} outside [0, 1]")));
    }
    let mut m = Matrix4::zeros();
    let h = C64::new(0.5, 0.0);
    let c = C64::new(0.5 * v, 0.0);
    m[(0, 0)] = h;
    m[(3, 3)] = h;
    m[(0, 3)] = c;
    m[(3, 0)] = c;
    DensityOperator::new(m)
}

fn joint_projector(phi_a: f64, i: Port, phi_b: f64, j: Port) -> Matrix4<C64> {
    let pa = AnalyzerProjector::new(phi_a, i).matrix();
    let pb = AnalyzerProjector::new(phi_b, j).matrix();
    pa.kronecker(&pb)
}

/// Coincidence detection probabilities p_ij = tr(rho Pi_iA x Pi_jB).
pub fn coincidence_probabilities(
    rho: &DensityOperator,
    phi_a: f64,
    phi_b: f64,
) -> CoincidenceProbabilities {
    let p = |i, j| {
        let pi = joint_projector(phi_a, i, phi_b, j);
        (rho.matrix() * pi).trace().re
    };
    CoincidenceProbabilities {
        p11: p(Port::One, Port::One),
        p12: p(Port::One, Port::Two),
        p21: p(Port::Two, Port::One),
        p22: p(Port::Two, Port::Two),
    }
}

/// Correlator E = p11 + p22 - p12 - p21 at one setting pair.
pub fn correlation(rho: &DensityOperator, phi_a: f64, phi_b: f64) -> f64 {
    let p = coincidence_probabilities(rho, phi_a, phi_b);
    p.p11 + p.p22 - p.p12 - p.p21
}

/// CHSH quantity S = E(A,B) + E(A',B) + E(A,B') - E(A',B').
pub fn chsh_value(rho: &DensityOperator, s: &MeasurementSettings) -> f64 {
    let [ab, apb, abp, apbp] = s.setting_pairs();
    correlation(rho, ab.0, ab.1) + correlation(rho, apb.0, apb.1)
        + correlation(rho, abp.0, abp.1)
        - correlation(rho, apbp.0, apbp.1)
}

/// Settings that maximize S for Phi+: (pi/4, -pi/4, 0, -pi/2).
///
/// Note phi_B' = -pi/2, which makes the CHSH combination evaluate to
/// 2*sqrt(2)*V for the dephased Phi+ family.
pub fn canonical_settings() -> MeasurementSettings {
    MeasurementSettings::new(PI / 4.0, -PI / 4.0, 0.0, -PI / 2.0)
        .expect("canonical phases are finite")
}

/// Hermitian operator S-hat with tr(S-hat rho) = chsh_value(rho, s) for all
/// rho.
pub fn chsh_operator(s: &MeasurementSettings) -> Matrix4<C64> {
    let obs = |phi: f64| {
        AnalyzerProjector::new(phi, Port::One).matrix()
            - AnalyzerProjector::new(phi, Port::Two).matrix()
    };
    let a = obs(s.phi_a);
    let ap = obs(s.phi_a_prime);
    let b = obs(s.phi_b);
    let bp = obs(s.phi_b_prime);
    a.kronecker(&b) + ap.kronecker(&b) + a.kronecker(&bp) - ap.kronecker(&bp)
}

/// Sample a random physical state as A A†/tr(A A†) with A a uniform complex
/// square factor. Used for property tests and benchmarks.
pub fn random_density_operator(rng: &mut impl rand::Rng) -> DensityOperator {
    let m = Matrix4::from_fn(|_, _| C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5));
    DensityOperator::from_positive_factor(&m).expect("random factor is generically full rank")
}

fn hermitian_sqrt(m: &Matrix4<C64>) -> Matrix4<C64> {
    let eig = SymmetricEigen::new(*m);
    let d = Matrix4::from_diagonal(&eig.eigenvalues.map(|l| C64::new(l.max(0.0).sqrt(), 0.0)));
    &eig.eigenvectors * d * eig.eigenvectors.adjoint()
}

/// Jozsa fidelity (tr sqrt(sqrt(rho) sigma sqrt(rho)))^2, clamped to [0, 1].
pub fn fidelity(rho: &DensityOperator, sigma: &DensityOperator) -> f64 {
    let sr = hermitian_sqrt(rho.matrix());
    let inner = &sr * sigma.matrix() * sr;
    let eig = SymmetricEigen::new(inner);
    let t: f64 = eig.eigenvalues.iter().map(|l| l.max(0.0).sqrt()).sum();
    (t * t).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    const SQRT2: f64 = std::f64::consts::SQRT_2;

    fn random_state(rng: &mut impl Rng) -> DensityOperator {
        random_density_operator(rng)
    }

    #[test]
    fn bell_state_entries() {
        let rho = bell_phi_plus();
        let m = rho.matrix();
        for j in 0..4 {
            for k in 0..4 {
                let expected = if (j == 0 || j == 3) && (k == 0 || k == 3) {
                    0.5
                } else {
                    0.0
                };
                assert_abs_diff_eq!(m[(j, k)].re, expected, epsilon = 1e-15);
                assert_abs_diff_eq!(m[(j, k)].im, 0.0, epsilon = 1e-15);
            }
        }
        assert_abs_diff_eq!(m.trace().re, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(fidelity(&rho, &rho), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn werner_limits() {
        let w1 = werner_like(1.0).unwrap();
        assert_eq!(w1, bell_phi_plus());
        let w0 = werner_like(0.0).unwrap();
        let m = w0.matrix();
        assert_abs_diff_eq!(m[(0, 0)].re, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(m[(3, 3)].re, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(m[(0, 3)].norm(), 0.0, epsilon = 1e-15);
        assert!(werner_like(-0.1).is_err());
        assert!(werner_like(1.1).is_err());
    }

    #[test]
    fn werner_correlation_matches_closed_form() {
        let w = werner_like(0.9).unwrap();
        assert_abs_diff_eq!(
            correlation(&w, PI / 4.0, 0.0),
            0.9 * (PI / 4.0).cos(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn phi_plus_probabilities() {
        let rho = bell_phi_plus();
        let p = coincidence_probabilities(&rho, 0.0, 0.0);
        assert_abs_diff_eq!(p.p11, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(p.p12, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p.p21, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p.p22, 0.5, epsilon = 1e-12);

        let p = coincidence_probabilities(&rho, PI / 2.0, PI / 2.0);
        assert_abs_diff_eq!(p.p11, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p.p12, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(p.p21, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(p.p22, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn werner_probability_point() {
        let w = werner_like(0.9).unwrap();
        let p = coincidence_probabilities(&w, PI / 4.0, 0.0);
        assert_abs_diff_eq!(p.p11, 0.25 * (1.0 + 0.9 * SQRT2 / 2.0), epsilon = 1e-12);
    }

    #[test]
    fn correlation_points() {
        let rho = bell_phi_plus();
        assert_abs_diff_eq!(correlation(&rho, PI / 4.0, 0.0), SQRT2 / 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(correlation(&rho, PI / 2.0, PI / 2.0), -1.0, epsilon = 1e-12);
        let w = werner_like(0.9).unwrap();
        assert_abs_diff_eq!(correlation(&w, 0.0, 0.0), 0.9, epsilon = 1e-12);
    }

    #[test]
    fn chsh_canonical_values() {
        let s = canonical_settings();
        assert_abs_diff_eq!(s.phi_a, PI / 4.0, epsilon = 1e-15);
        assert_abs_diff_eq!(chsh_value(&bell_phi_plus(), &s), 2.0 * SQRT2, epsilon = 1e-12);
        assert_abs_diff_eq!(
            chsh_value(&werner_like(0.9).unwrap(), &s),
            2.0 * SQRT2 * 0.9,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            chsh_value(&werner_like(1.0 / SQRT2).unwrap(), &s),
            2.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn printed_phase_convention_gives_zero() {
        // With phi_B' = +pi/2 the same CHSH combination cancels exactly.
        let s = MeasurementSettings::new(PI / 4.0, -PI / 4.0, 0.0, PI / 2.0).unwrap();
        assert_abs_diff_eq!(chsh_value(&bell_phi_plus(), &s), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn chsh_operator_consistency() {
        let s = canonical_settings();
        let op = chsh_operator(&s);
        let rho = bell_phi_plus();
        assert_abs_diff_eq!(
            (op * rho.matrix()).trace().re,
            2.0 * SQRT2,
            epsilon = 1e-12
        );
        let eig = SymmetricEigen::new(op);
        let max = eig.eigenvalues.iter().cloned().fold(f64::MIN, f64::max);
        assert_abs_diff_eq!(max, 2.0 * SQRT2, epsilon = 1e-9);
        // Maximally mixed state carries no correlations.
        let mixed = DensityOperator::new(Matrix4::identity() * C64::new(0.25, 0.0)).unwrap();
        assert_abs_diff_eq!((op * mixed.matrix()).trace().re, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn chsh_operator_linearity_on_random_states() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let s = canonical_settings();
        let op = chsh_operator(&s);
        for _ in 0..100 {
            let rho = random_state(&mut rng);
            assert_abs_diff_eq!(
                (op * rho.matrix()).trace().re,
                chsh_value(&rho, &s),
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn tsirelson_bound_random_states() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let s = canonical_settings();
        for _ in 0..1000 {
            let rho = random_state(&mut rng);
            assert!(chsh_value(&rho, &s).abs() <= 2.0 * SQRT2 + 1e-9);
        }
    }

    #[test]
    fn fidelity_special_cases() {
        let phi = bell_phi_plus();
        assert_abs_diff_eq!(fidelity(&phi, &werner_like(0.0).unwrap()), 0.5, epsilon = 1e-12);

        let mut ss = Matrix4::zeros();
        ss[(0, 0)] = C64::new(1.0, 0.0);
        let mut ll = Matrix4::zeros();
        ll[(3, 3)] = C64::new(1.0, 0.0);
        let ss = DensityOperator::new(ss).unwrap();
        let ll = DensityOperator::new(ll).unwrap();
        assert_abs_diff_eq!(fidelity(&ss, &ll), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn projectors_sum_to_identity() {
        for phi in [0.0, 0.7, -2.1, PI] {
            let sum = AnalyzerProjector::new(phi, Port::One).matrix()
                + AnalyzerProjector::new(phi, Port::Two).matrix();
            let d = sum - Matrix2::identity();
            assert!(d.iter().all(|c| c.norm() < 1e-12));
        }
    }

    #[test]
    fn settings_reject_non_finite() {
        assert!(MeasurementSettings::new(f64::NAN, 0.0, 0.0, 0.0).is_err());
        assert!(MeasurementSettings::new(0.0, f64::INFINITY, 0.0, 0.0).is_err());
    }

    #[test]
    fn phase_reduction_range() {
        for phi in [-7.0, -PI, 0.0, 3.5, 9.9, PI] {
            let r = reduce_phase(phi);
            assert!(r > -PI && r <= PI, "{phi} -> {r}");
            assert_abs_diff_eq!((r - phi).rem_euclid(2.0 * PI).min(2.0 * PI - (r - phi).rem_euclid(2.0 * PI)), 0.0, epsilon = 1e-12);
        }
    }
}
