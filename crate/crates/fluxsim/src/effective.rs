//! Effective (anharmonic-oscillator) models: the fixed-frequency quartic
//! Hamiltonian, the adiabatic and non-adiabatic flux-tunable models, higher
//! orders of the junction cosine expansion, effective charge operators and
//! interaction strengths, composite two-qubit models, the closed-form
//! solution of the purely adiabatic model, and the adjusted-spectrum tables
//! built from exact charge-basis diagonalization.
//!
//! Parameter sources follow the device tables: fixed transmons and the
//! table-parameterised tunable qubits use measured (omega, alpha) pairs,
//! with the flux dependence entering through the quarter-power scaling
//! r(phi) = (cos^2(phi/2) + d^2 sin^2(phi/2))^(1/4) referenced to phi = 0.
//! Everything that needs Josephson energies (interaction strengths, the
//! drive term, adjusted spectra) takes them from the circuit parameters.

use crate::circuit::{
    effective_flux_derivative, effective_josephson_energy, tunable_exact_levels, xi_log_derivative,
    CircuitError,
};
use crate::device::{
    DeviceSpec, EffectiveQubitParams, FixedTransmonParams, Subsystem, TunableTransmonParams,
};
use crate::numerics::{ComplexMatrix, NumericsError, StateVector};
use crate::operators::{SiteFactor, SpaceShape, Term, TermSeries, TermSeriesError};
use crate::pulse::FluxPulse;
use num_complex::Complex64 as C64;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EffectiveError {
    #[error("expansion order K = {0} must be an even number >= 2")]
    BadExpansionOrder(usize),
    #[error("flux {phi} outside the adjusted-spectrum table range [{lo}, {hi}]")]
    FluxOutsideTable { phi: f64, lo: f64, hi: f64 },
    #[error("subsystem {0} has no effective (omega, alpha) parameters and no energies to derive them")]
    MissingEffectiveParams(usize),
    #[error("pulse target {index} is a {kind}; only tunable transmons take a flux pulse")]
    PulseTargetNotTunable { index: usize, kind: &'static str },
    #[error(transparent)]
    Circuit(#[from] CircuitError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Series(#[from] TermSeriesError),
}

/// Bosonic ladder operators on an N-level subspace.
#[derive(Clone, Debug)]
pub struct LadderOperators {
    pub dim: usize,
    /// Lowering operator b.
    pub lowering: ComplexMatrix,
    /// Number operator b^dag b.
    pub number: ComplexMatrix,
    /// b^dag b (b^dag b - 1) / 2.
    pub anharmonic: ComplexMatrix,
    /// b^dag + b.
    pub position: ComplexMatrix,
    /// -i (b^dag - b), Hermitian.
    pub momentum: ComplexMatrix,
    /// i (b^dag b^dag - b b), Hermitian.
    pub pair: ComplexMatrix,
}

pub fn ladder_operators(dim: usize) -> LadderOperators {
    let mut lowering = ComplexMatrix::zeros(dim, dim);
    for m in 0..dim.saturating_sub(1) {
        lowering[(m, m + 1)] = C64::new(((m + 1) as f64).sqrt(), 0.0);
    }
    let raising = lowering.adjoint();
    let number = ComplexMatrix::from_fn(dim, dim, |r, c| {
        if r == c { C64::new(r as f64, 0.0) } else { C64::ZERO }
    });
    let anharmonic = ComplexMatrix::from_fn(dim, dim, |r, c| {
        if r == c {
            C64::new(0.5 * r as f64 * (r as f64 - 1.0), 0.0)
        } else {
            C64::ZERO
        }
    });
    let position = raising.add(&lowering);
    let momentum = raising.sub(&lowering).scale(C64::new(0.0, -1.0));
    let pair = raising.mul(&raising).sub(&lowering.mul(&lowering)).scale(C64::new(0.0, 1.0));
    LadderOperators { dim, lowering, number, anharmonic, position, momentum, pair }
}

/// Quarter-power flux scaling (cos^2(phi/2) + d^2 sin^2(phi/2))^(1/4).
pub fn flux_scaling(phi: f64, d: f64) -> f64 {
    let (s, c) = (0.5 * phi).sin_cos();
    (c * c + d * d * s * s).powf(0.25)
}

/// Harmonic tunable frequency sqrt(2 E_C E_Sigma) r(phi).
pub fn tunable_frequency(phi: f64, p: &TunableTransmonParams) -> f64 {
    (2.0 * p.e_c * p.e_sigma()).sqrt() * flux_scaling(phi, p.asymmetry())
}

/// Qubit frequency of the quartic model, omega(phi) + alpha with
/// alpha = -E_C / 4.
pub fn quartic_qubit_frequency(phi: f64, p: &TunableTransmonParams) -> f64 {
    tunable_frequency(phi, p) - 0.25 * p.e_c
}

/// Diagonal of (b^dag - b)^4 on an N-level ladder, computed with four levels
/// of padding so the retained entries are free of truncation contamination;
/// entry m equals 3 (2 m^2 + 2 m + 1).
pub fn quartic_diagonal(n: usize) -> Vec<f64> {
    let padded = ladder_operators(n + 4);
    let dd = padded.lowering.adjoint().sub(&padded.lowering);
    let d2 = dd.mul(&dd);
    let d4 = d2.mul(&d2);
    (0..n).map(|m| d4[(m, m)].re).collect()
}

/// (b^dag - b)^(2k) on an N-level ladder, padded by `pad` levels and
/// cropped; `diagonal_only` keeps the diagonal part.
pub fn displacement_power(n: usize, k: usize, pad: usize, diagonal_only: bool) -> ComplexMatrix {
    let padded = ladder_operators(n + pad);
    let dd = padded.lowering.adjoint().sub(&padded.lowering);
    let mut acc = ComplexMatrix::identity(n + pad);
    for _ in 0..2 * k {
        acc = acc.mul(&dd);
    }
    ComplexMatrix::from_fn(n, n, |r, c| {
        if diagonal_only && r != c {
            C64::ZERO
        } else {
            acc[(r, c)]
        }
    })
}

/// Static quartic model of a fixed-frequency transmon,
/// omega' b^dag b + (alpha/2) b^dag b (b^dag b - 1) with
/// omega' = sqrt(2 E_C E_J) + alpha and alpha = -E_C/4.
pub fn fixed_effective_hamiltonian(
    p: &FixedTransmonParams,
    n: usize,
) -> Result<TermSeries, EffectiveError> {
    let ops = ladder_operators(n);
    let alpha = -0.25 * p.e_c;
    let omega_prime = (2.0 * p.e_c * p.e_j).sqrt() + alpha;
    let h = ops.number.scale_re(omega_prime).add(&ops.anharmonic.scale_re(alpha));
    Ok(TermSeries::new(
        SpaceShape::new(vec![n]),
        vec![Term::constant("fixed_effective", 1.0, vec![SiteFactor { site: 0, matrix: h }])],
    )?)
}

/// Same spectrum built the other way: omega b^dag b - (E_C/48) D with D the
/// diagonal of (b^dag - b)^4, referenced to the ground state.
pub fn fixed_effective_via_quartic(p: &FixedTransmonParams, n: usize) -> ComplexMatrix {
    let omega = (2.0 * p.e_c * p.e_j).sqrt();
    let d = quartic_diagonal(n);
    ComplexMatrix::from_fn(n, n, |r, c| {
        if r == c {
            C64::new(omega * r as f64 - p.e_c / 48.0 * (d[r] - d[0]), 0.0)
        } else {
            C64::ZERO
        }
    })
}

/// Coefficients of the non-adiabatic drive term
/// c1 (-i)(b^dag - b) + c2 i (b^dag b^dag - b b):
/// c1 = sqrt(xi/2) dphi_eff/dt and c2 = (1/4)(dxi/dt)/xi.
pub fn drive_term_coefficients(
    phi: f64,
    phi_dot: f64,
    p: &TunableTransmonParams,
) -> Result<(f64, f64), EffectiveError> {
    let e_j_eff = effective_josephson_energy(phi, p);
    let xi = (e_j_eff / (2.0 * p.e_c)).sqrt();
    if !(xi > 1e-12) {
        return Err(EffectiveError::Circuit(CircuitError::FluxSingularity {
            d: p.asymmetry(),
            phi,
        }));
    }
    let c1 = (0.5 * xi).sqrt() * effective_flux_derivative(phi, phi_dot, p)?;
    let c2 = 0.25 * xi_log_derivative(phi, phi_dot, p)?;
    Ok((c1, c2))
}

/// The full drive operator at one instant; Hermitian and traceless.
pub fn drive_term(
    phi: f64,
    phi_dot: f64,
    p: &TunableTransmonParams,
    n: usize,
) -> Result<ComplexMatrix, EffectiveError> {
    let (c1, c2) = drive_term_coefficients(phi, phi_dot, p)?;
    let ops = ladder_operators(n);
    Ok(ops.momentum.scale_re(c1).add(&ops.pair.scale_re(c2)))
}

/// Two-level reduction -(omega(t)/2) sigma_z - sqrt(xi/2) dphi_eff sigma_y.
pub fn two_level_reduction(
    p: &TunableTransmonParams,
    pulse: &FluxPulse,
    t: f64,
) -> Result<ComplexMatrix, EffectiveError> {
    let phi = pulse.flux(t);
    let phi_dot = pulse.flux_derivative(t);
    let omega = tunable_frequency(phi, p);
    let (c1, _) = drive_term_coefficients(phi, phi_dot, p)?;
    let mut h = ComplexMatrix::zeros(2, 2);
    h[(0, 0)] = C64::new(-0.5 * omega, 0.0);
    h[(1, 1)] = C64::new(0.5 * omega, 0.0);
    // -c1 sigma_y
    h[(0, 1)] = C64::new(0.0, 1.0) * c1;
    h[(1, 0)] = C64::new(0.0, -1.0) * c1;
    Ok(h)
}

/// Dipole matrix-element prefactor (E_J / 8 E_C)^(1/4) of the effective
/// charge operator.
pub fn dipole_factor(e_j: f64, e_c: f64) -> f64 {
    (e_j / (8.0 * e_c)).powf(0.25)
}

/// Effective charge operator n_eff = (E_J / 8 E_C)^(1/4) (b^dag + b).
pub fn effective_charge(e_j: f64, e_c: f64, n: usize) -> ComplexMatrix {
    ladder_operators(n).position.scale_re(dipole_factor(e_j, e_c))
}

/// Eq-25-style interaction strength between subsystem ends with the given
/// dipole factors.
pub fn interaction_strength(g_bare: f64, factor_i: f64, factor_j: f64) -> f64 {
    g_bare * factor_i * factor_j
}

/// Dipole factor of a tunable transmon at external flux phi.
pub fn tunable_dipole_factor(p: &TunableTransmonParams, phi: f64) -> f64 {
    dipole_factor(effective_josephson_energy(phi, p), p.e_c)
}

/// Dipole factor of a fixed transmon.
pub fn fixed_dipole_factor(p: &FixedTransmonParams) -> f64 {
    dipole_factor(p.e_j, p.e_c)
}

/// Interaction-strength options of the composite effective models.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InteractionModel {
    /// Freeze every g at the t = 0 fluxes (case A).
    Static,
    /// Follow the flux pulse through the Josephson energies (case B / C).
    TimeDependent,
}

/// Spectrum options of the composite effective models.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpectrumModel {
    /// Table frequency scaled by r(phi)/r(0), constant anharmonicity.
    Plain,
    /// Exact charge-basis gaps interpolated from an adjusted-spectrum table.
    Adjusted,
}

/// Scope of cosine-expansion orders beyond the harmonic part.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExpansionScope {
    DiagonalOnly,
    Full,
}

#[derive(Clone, Debug)]
pub struct EffectiveModelOptions {
    pub interaction: InteractionModel,
    pub drive_term: bool,
    pub spectrum: SpectrumModel,
    /// Cosine expansion order K (even, >= 2); K = 4 is the quartic model.
    pub expansion_order: usize,
    pub scope: ExpansionScope,
    /// Separate amplitude driving only the interaction strengths; None means
    /// the interaction follows the same pulse as the frequency.
    pub g_pulse_delta: Option<f64>,
}

impl Default for EffectiveModelOptions {
    fn default() -> Self {
        Self {
            interaction: InteractionModel::Static,
            drive_term: false,
            spectrum: SpectrumModel::Plain,
            expansion_order: 4,
            scope: ExpansionScope::DiagonalOnly,
            g_pulse_delta: None,
        }
    }
}

impl EffectiveModelOptions {
    pub fn case_a() -> Self {
        Self { interaction: InteractionModel::Static, spectrum: SpectrumModel::Plain, ..Self::default() }
    }

    pub fn case_b() -> Self {
        Self {
            interaction: InteractionModel::TimeDependent,
            spectrum: SpectrumModel::Plain,
            ..Self::default()
        }
    }

    pub fn case_c() -> Self {
        Self {
            interaction: InteractionModel::TimeDependent,
            spectrum: SpectrumModel::Adjusted,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), EffectiveError> {
        if self.expansion_order < 2 || self.expansion_order % 2 != 0 {
            return Err(EffectiveError::BadExpansionOrder(self.expansion_order));
        }
        Ok(())
    }
}

/// Sampled exact qubit frequency and anharmonicity over a flux grid, with
/// natural cubic-spline interpolation.
#[derive(Clone, Debug)]
pub struct AdjustedSpectrumTable {
    phis: Vec<f64>,
    omega: Vec<f64>,
    alpha: Vec<f64>,
    omega_m2: Vec<f64>,
    alpha_m2: Vec<f64>,
}

fn natural_spline_moments(xs: &[f64], ys: &[f64]) -> Vec<f64> {
    let n = xs.len();
    let mut m = vec![0.0; n];
    if n < 3 {
        return m;
    }
    let mut sub = vec![0.0; n];
    let mut diag = vec![0.0; n];
    let mut sup = vec![0.0; n];
    let mut rhs = vec![0.0; n];
    diag[0] = 1.0;
    diag[n - 1] = 1.0;
    for i in 1..n - 1 {
        let h0 = xs[i] - xs[i - 1];
        let h1 = xs[i + 1] - xs[i];
        sub[i] = h0 / 6.0;
        diag[i] = (h0 + h1) / 3.0;
        sup[i] = h1 / 6.0;
        rhs[i] = (ys[i + 1] - ys[i]) / h1 - (ys[i] - ys[i - 1]) / h0;
    }
    // Thomas algorithm
    for i in 1..n {
        let w = sub[i] / diag[i - 1];
        diag[i] -= w * sup[i - 1];
        rhs[i] -= w * rhs[i - 1];
    }
    m[n - 1] = rhs[n - 1] / diag[n - 1];
    for i in (0..n - 1).rev() {
        m[i] = (rhs[i] - sup[i] * m[i + 1]) / diag[i];
    }
    m
}

fn spline_eval(xs: &[f64], ys: &[f64], m2: &[f64], x: f64) -> f64 {
    let n = xs.len();
    let mut lo = 0;
    let mut hi = n - 1;
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if xs[mid] <= x {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let h = xs[hi] - xs[lo];
    let a = (xs[hi] - x) / h;
    let b = (x - xs[lo]) / h;
    a * ys[lo]
        + b * ys[hi]
        + ((a * a * a - a) * m2[lo] + (b * b * b - b) * m2[hi]) * h * h / 6.0
}

impl AdjustedSpectrumTable {
    /// Exact spectrum on a flux grid covering [phi_lo, phi_hi] with the
    /// given step (default grid step is 0.001 flux quanta).
    pub fn build(
        p: &TunableTransmonParams,
        phi_lo: f64,
        phi_hi: f64,
        step: f64,
        n_c: usize,
    ) -> Result<Self, EffectiveError> {
        assert!(phi_hi > phi_lo && step > 0.0);
        let n = ((phi_hi - phi_lo) / step).ceil() as usize + 1;
        let mut phis = Vec::with_capacity(n);
        let mut omega = Vec::with_capacity(n);
        let mut alpha = Vec::with_capacity(n);
        for i in 0..n {
            let phi = phi_lo + (phi_hi - phi_lo) * i as f64 / (n - 1) as f64;
            let levels = tunable_exact_levels(p, phi, n_c, 3)?;
            phis.push(phi);
            omega.push(levels[1]);
            alpha.push(levels[2] - 2.0 * levels[1]);
        }
        let omega_m2 = natural_spline_moments(&phis, &omega);
        let alpha_m2 = natural_spline_moments(&phis, &alpha);
        Ok(Self { phis, omega, alpha, omega_m2, alpha_m2 })
    }

    pub fn range(&self) -> (f64, f64) {
        (self.phis[0], *self.phis.last().unwrap())
    }

    fn check_range(&self, phi: f64) -> Result<(), EffectiveError> {
        let (lo, hi) = self.range();
        if phi < lo - 1e-12 || phi > hi + 1e-12 {
            return Err(EffectiveError::FluxOutsideTable { phi, lo, hi });
        }
        Ok(())
    }

    pub fn omega_at(&self, phi: f64) -> Result<f64, EffectiveError> {
        self.check_range(phi)?;
        Ok(spline_eval(&self.phis, &self.omega, &self.omega_m2, phi))
    }

    pub fn alpha_at(&self, phi: f64) -> Result<f64, EffectiveError> {
        self.check_range(phi)?;
        Ok(spline_eval(&self.phis, &self.alpha, &self.alpha_m2, phi))
    }
}

/// Which approximation a spectrum deviation is computed for.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpectrumApproximation {
    /// Quartic qubit frequency omega(phi) - E_C/4 with constant alpha.
    PlainQuartic,
    /// Adjusted table omega~(phi), alpha~(phi).
    Adjusted,
}

/// |(E_m - E_0)_exact - (m omega + alpha/2 m (m-1))| at external flux phi.
/// The m = 1 deviation involves only the frequency model, never alpha.
pub fn spectrum_deviation(
    m: usize,
    phi: f64,
    approximation: SpectrumApproximation,
    p: &TunableTransmonParams,
    table: Option<&AdjustedSpectrumTable>,
    alpha_override: Option<f64>,
    n_c: usize,
) -> Result<f64, EffectiveError> {
    let exact = tunable_exact_levels(p, phi, n_c, m + 1)?;
    let exact_gap = exact[m];
    let (omega_model, alpha_model) = match approximation {
        SpectrumApproximation::PlainQuartic => {
            (quartic_qubit_frequency(phi, p), alpha_override.unwrap_or(-0.25 * p.e_c))
        }
        SpectrumApproximation::Adjusted => {
            let table = table.expect("adjusted deviation needs a table");
            (table.omega_at(phi)?, table.alpha_at(phi)?)
        }
    };
    let model_gap = m as f64 * omega_model + 0.5 * alpha_model * (m as f64) * (m as f64 - 1.0);
    Ok((exact_gap - model_gap).abs())
}

/// Closed-form solution of the diagonal adiabatic model: each amplitude only
/// acquires the phase exp(-i Int E_m dt'), so populations are frozen.
/// The integral is evaluated with adaptive Simpson quadrature.
pub fn closed_form_adiabatic_evolution(
    c0: &StateVector,
    pulse: &FluxPulse,
    p: &TunableTransmonParams,
    t0: f64,
    t: f64,
) -> StateVector {
    let alpha = -0.25 * p.e_c;
    let omega_q = |time: f64| quartic_qubit_frequency(pulse.flux(time), p);
    let omega_integral = adaptive_simpson(&omega_q, t0, t, 1e-11);
    let amps = c0
        .amps
        .iter()
        .enumerate()
        .map(|(m, c)| {
            let mf = m as f64;
            let phase = -(mf * omega_integral + 0.5 * alpha * mf * (mf - 1.0) * (t - t0));
            c * C64::from_polar(1.0, phase)
        })
        .collect();
    StateVector { amps }
}

fn adaptive_simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(a: f64, fa: f64, b: f64, fb: f64, fm: f64) -> f64 {
        (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    }
    fn recurse(
        f: &impl Fn(f64) -> f64,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        fm: f64,
        whole: f64,
        tol: f64,
        depth: usize,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = simpson(a, fa, m, fm, flm);
        let right = simpson(m, fm, b, fb, frm);
        if depth == 0 || (left + right - whole).abs() < 15.0 * tol {
            left + right + (left + right - whole) / 15.0
        } else {
            recurse(f, a, fa, m, fm, flm, left, 0.5 * tol, depth - 1)
                + recurse(f, m, fm, b, fb, frm, right, 0.5 * tol, depth - 1)
        }
    }
    if a == b {
        return 0.0;
    }
    let fa = f(a);
    let fb = f(b);
    let fm = f(0.5 * (a + b));
    let whole = simpson(a, fa, b, fb, fm);
    recurse(f, a, fa, b, fb, fm, whole, tol.max(1e-14), 48)
}

/// Single tunable transmon, adiabatic diagonal model: only the level
/// energies m omega_q(t) + (alpha/2) m (m - 1) move; no transitions.
pub fn single_tunable_adiabatic(
    p: &TunableTransmonParams,
    pulse: &FluxPulse,
    n: usize,
) -> Result<TermSeries, EffectiveError> {
    let ops = ladder_operators(n);
    let alpha = -0.25 * p.e_c;
    let pp = *p;
    let pulse = pulse.clone();
    let terms = vec![
        Term::time_dependent(
            "qubit_frequency",
            move |t| quartic_qubit_frequency(pulse.flux(t), &pp),
            vec![SiteFactor { site: 0, matrix: ops.number.clone() }],
        ),
        Term::constant("anharmonicity", alpha, vec![SiteFactor { site: 0, matrix: ops.anharmonic }]),
    ];
    Ok(TermSeries::new(SpaceShape::new(vec![n]), terms)?)
}

/// Single tunable transmon in the time-dependent harmonic basis: harmonic
/// frequency term, cosine-expansion orders 2k = 4..K, and the non-adiabatic
/// drive term. The drive term is what makes this model non-adiabatic, so it
/// is always present regardless of `options.drive_term` (which controls the
/// optional drive terms of the composite models).
pub fn single_tunable_nonadiabatic(
    p: &TunableTransmonParams,
    pulse: &FluxPulse,
    options: &EffectiveModelOptions,
    n: usize,
) -> Result<TermSeries, EffectiveError> {
    options.validate()?;
    let k_max = options.expansion_order / 2;
    let ops = ladder_operators(n);
    let pp = *p;
    let mut terms = Vec::new();
    {
        let pulse = pulse.clone();
        terms.push(Term::time_dependent(
            "harmonic_frequency",
            move |t| tunable_frequency(pulse.flux(t), &pp),
            vec![SiteFactor { site: 0, matrix: ops.number.clone() }],
        ));
    }
    for k in 2..=k_max {
        let diagonal_only = options.scope == ExpansionScope::DiagonalOnly;
        let op = displacement_power(n, k, options.expansion_order, diagonal_only);
        // ground-reference the diagonal so every order leaves E_0 = 0
        let offset = op[(0, 0)].re;
        let op = op.sub(&ComplexMatrix::identity(n).scale_re(offset));
        let factorial = (1..=2 * k).map(|x| x as f64).product::<f64>();
        let pulse = pulse.clone();
        terms.push(Term::time_dependent(
            format!("cosine_order_{}", 2 * k),
            move |t| {
                let e_j_eff = effective_josephson_energy(pulse.flux(t), &pp);
                let xi = (e_j_eff / (2.0 * pp.e_c)).sqrt();
                -e_j_eff / (factorial * (2.0 * xi).powi(k as i32))
            },
            vec![SiteFactor { site: 0, matrix: op }],
        ));
    }
    {
        let pulse_a = pulse.clone();
        let pa = *p;
        terms.push(Term::time_dependent(
            "drive_velocity",
            move |t| {
                drive_term_coefficients(pulse_a.flux(t), pulse_a.flux_derivative(t), &pa)
                    .map(|(c1, _)| c1)
                    .unwrap_or(f64::NAN)
            },
            vec![SiteFactor { site: 0, matrix: ops.momentum.clone() }],
        ));
        let pulse_b = pulse.clone();
        let pb = *p;
        terms.push(Term::time_dependent(
            "drive_squeeze",
            move |t| {
                drive_term_coefficients(pulse_b.flux(t), pulse_b.flux_derivative(t), &pb)
                    .map(|(_, c2)| c2)
                    .unwrap_or(f64::NAN)
            },
            vec![SiteFactor { site: 0, matrix: ops.pair.clone() }],
        ));
    }
    Ok(TermSeries::new(SpaceShape::new(vec![n]), terms)?)
}

fn table_params(
    spec: &DeviceSpec,
    k: usize,
) -> Result<EffectiveQubitParams, EffectiveError> {
    match &spec.subsystems[k] {
        Subsystem::Fixed { params, effective } => Ok(effective.unwrap_or(EffectiveQubitParams {
            omega: (2.0 * params.e_c * params.e_j).sqrt() - 0.25 * params.e_c,
            alpha: -0.25 * params.e_c,
        })),
        Subsystem::Tunable { params, effective, .. } => {
            Ok(effective.unwrap_or(EffectiveQubitParams {
                omega: (2.0 * params.e_c * params.e_sigma()).sqrt() - 0.25 * params.e_c,
                alpha: -0.25 * params.e_c,
            }))
        }
        Subsystem::Resonator { .. } => Err(EffectiveError::MissingEffectiveParams(k)),
    }
}

/// Composite effective model of a device (architecture I when the coupler
/// is a tunable transmon, II when it is a resonator), with N levels per
/// subsystem. Pulse target frequencies scale as omega_table r(phi)/r(0);
/// the adjusted-spectrum option replaces that scaling by interpolated exact
/// charge-basis gaps.
pub fn assemble_effective(
    spec: &DeviceSpec,
    pulse: &FluxPulse,
    options: &EffectiveModelOptions,
    n: usize,
) -> Result<TermSeries, EffectiveError> {
    options.validate()?;
    let target = spec.pulse_target;
    if !spec.subsystems[target].is_tunable() {
        return Err(EffectiveError::PulseTargetNotTunable {
            index: target,
            kind: spec.subsystems[target].kind_name(),
        });
    }
    let ops = ladder_operators(n);
    let mut diag_terms: Vec<Term> = Vec::new();
    let mut coupling_terms: Vec<Term> = Vec::new();
    let mut drive_terms: Vec<Term> = Vec::new();
    let mut dims = Vec::new();

    // Pulse that drives the interaction strengths. The scaling experiment
    // uses a separate amplitude delta* with the flux offset interpolated
    // along: delta* = 0 then reproduces the static (zero-flux) interaction
    // exactly and delta* = delta reproduces the fully time-dependent one.
    // Amplitudes beyond delta keep the physical offset.
    let g_pulse = match options.g_pulse_delta {
        None => pulse.clone(),
        Some(delta_star) => {
            let ratio =
                if pulse.delta > 0.0 { (delta_star / pulse.delta).min(1.0) } else { 1.0 };
            FluxPulse::new(pulse.phi0 * ratio, delta_star, pulse.omega_d, pulse.t_rf, pulse.t_d)
                .expect("delta* pulse")
        }
    };

    for (k, sub) in spec.subsystems.iter().enumerate() {
        match sub {
            Subsystem::Resonator { params } => {
                dims.push(n.min(params.fock_cutoff).max(2));
                let dim_k = *dims.last().unwrap();
                let res_ops = ladder_operators(dim_k);
                diag_terms.push(Term::constant(
                    format!("resonator_{k}"),
                    1.0,
                    vec![SiteFactor { site: k, matrix: res_ops.number.scale_re(params.omega_r) }],
                ));
            }
            Subsystem::Fixed { .. } => {
                dims.push(n);
                let eff = table_params(spec, k)?;
                let h = ops.number.scale_re(eff.omega).add(&ops.anharmonic.scale_re(eff.alpha));
                diag_terms.push(Term::constant(
                    format!("qubit_{k}"),
                    1.0,
                    vec![SiteFactor { site: k, matrix: h.clone() }],
                ));
            }
            Subsystem::Tunable { params, phi0, .. } => {
                dims.push(n);
                let eff = table_params(spec, k)?;
                if k == target {
                    match options.spectrum {
                        SpectrumModel::Plain => {
                            let d = params.asymmetry();
                            let scale0 = flux_scaling(0.0, d);
                            let omega_tbl = eff.omega;
                            let pulse_c = pulse.clone();
                            diag_terms.push(Term::time_dependent(
                                format!("qubit_{k}_frequency"),
                                move |t| omega_tbl * flux_scaling(pulse_c.flux(t), d) / scale0,
                                vec![SiteFactor { site: k, matrix: ops.number.clone() }],
                            ));
                            diag_terms.push(Term::constant(
                                format!("qubit_{k}_anharmonicity"),
                                eff.alpha,
                                vec![SiteFactor { site: k, matrix: ops.anharmonic.clone() }],
                            ));
                        }
                        SpectrumModel::Adjusted => {
                            let (lo, hi) = pulse.plateau_flux_range();
                            let pad = 0.02 * std::f64::consts::TAU;
                            let table = Arc::new(AdjustedSpectrumTable::build(
                                params,
                                lo - pad,
                                hi + pad,
                                0.001 * std::f64::consts::TAU,
                                spec.n_c,
                            )?);
                            let t_omega = Arc::clone(&table);
                            let pulse_c = pulse.clone();
                            diag_terms.push(Term::time_dependent(
                                format!("qubit_{k}_frequency"),
                                move |t| t_omega.omega_at(pulse_c.flux(t)).unwrap_or(f64::NAN),
                                vec![SiteFactor { site: k, matrix: ops.number.clone() }],
                            ));
                            let t_alpha = Arc::clone(&table);
                            let pulse_c = pulse.clone();
                            diag_terms.push(Term::time_dependent(
                                format!("qubit_{k}_anharmonicity"),
                                move |t| t_alpha.alpha_at(pulse_c.flux(t)).unwrap_or(f64::NAN),
                                vec![SiteFactor { site: k, matrix: ops.anharmonic.clone() }],
                            ));
                        }
                    }
                    if options.drive_term {
                        let pa = *params;
                        let pulse_a = pulse.clone();
                        drive_terms.push(Term::time_dependent(
                            format!("drive_velocity_{k}"),
                            move |t| {
                                drive_term_coefficients(
                                    pulse_a.flux(t),
                                    pulse_a.flux_derivative(t),
                                    &pa,
                                )
                                .map(|(c1, _)| c1)
                                .unwrap_or(f64::NAN)
                            },
                            vec![SiteFactor { site: k, matrix: ops.momentum.clone() }],
                        ));
                        let pb = *params;
                        let pulse_b = pulse.clone();
                        drive_terms.push(Term::time_dependent(
                            format!("drive_squeeze_{k}"),
                            move |t| {
                                drive_term_coefficients(
                                    pulse_b.flux(t),
                                    pulse_b.flux_derivative(t),
                                    &pb,
                                )
                                .map(|(_, c2)| c2)
                                .unwrap_or(f64::NAN)
                            },
                            vec![SiteFactor { site: k, matrix: ops.pair.clone() }],
                        ));
                    }
                } else {
                    let scale0 = flux_scaling(0.0, params.asymmetry());
                    let omega_static =
                        eff.omega * flux_scaling(*phi0, params.asymmetry()) / scale0;
                    let h = ops
                        .number
                        .scale_re(omega_static)
                        .add(&ops.anharmonic.scale_re(eff.alpha));
                    diag_terms.push(Term::constant(
                        format!("qubit_{k}"),
                        1.0,
                        vec![SiteFactor { site: k, matrix: h }],
                    ));
                }
            }
        }
    }

    for cpl in &spec.couplings {
        // Per-end dipole factors. Static ends and the static-interaction
        // freeze evaluate at phi = 0, the reference the published coupling
        // tables correspond to; the time-dependent option re-evaluates the
        // pulsed end along the g-pulse.
        let end_factor = |site: usize| -> Result<(f64, Option<(TunableTransmonParams, bool)>), EffectiveError> {
            match &spec.subsystems[site] {
                Subsystem::Fixed { params, .. } => Ok((fixed_dipole_factor(params), None)),
                Subsystem::Tunable { params, phi0, .. } => {
                    if site == target {
                        Ok((tunable_dipole_factor(params, 0.0), Some((*params, true))))
                    } else {
                        Ok((tunable_dipole_factor(params, *phi0), Some((*params, false))))
                    }
                }
                Subsystem::Resonator { .. } => Ok((1.0, None)),
            }
        };
        let (fac_i, tun_i) = end_factor(cpl.i)?;
        let (fac_j, tun_j) = end_factor(cpl.j)?;
        let x_i = match &spec.subsystems[cpl.i] {
            Subsystem::Resonator { params } => ladder_operators(n.min(params.fock_cutoff).max(2)).position,
            _ => ops.position.clone(),
        };
        let x_j = match &spec.subsystems[cpl.j] {
            Subsystem::Resonator { params } => ladder_operators(n.min(params.fock_cutoff).max(2)).position,
            _ => ops.position.clone(),
        };
        let factors = vec![
            SiteFactor { site: cpl.i, matrix: x_i },
            SiteFactor { site: cpl.j, matrix: x_j },
        ];
        let label = format!("interaction_{}_{}", cpl.i, cpl.j);
        let time_dep_ends: Vec<TunableTransmonParams> = [tun_i, tun_j]
            .into_iter()
            .flatten()
            .filter(|(_, pulsed)| *pulsed)
            .map(|(p, _)| p)
            .collect();
        if options.interaction == InteractionModel::Static || time_dep_ends.is_empty() {
            coupling_terms.push(Term::constant(label, cpl.g * fac_i * fac_j, factors));
        } else {
            // the pulsed end re-evaluates its dipole factor along the g-pulse
            let g_bare = cpl.g;
            let static_factor = if tun_i.map(|(_, pulsed)| pulsed).unwrap_or(false) {
                fac_j
            } else {
                fac_i
            };
            let p_end = time_dep_ends[0];
            let g_pulse_c = g_pulse.clone();
            coupling_terms.push(Term::time_dependent(
                label,
                move |t| g_bare * static_factor * tunable_dipole_factor(&p_end, g_pulse_c.flux(t)),
                factors,
            ));
        }
    }

    let mut terms = diag_terms;
    terms.extend(coupling_terms);
    terms.extend(drive_terms);
    // per-site dimensions follow the subsystem list
    let shape = SpaceShape::new(
        spec.subsystems
            .iter()
            .map(|s| match s {
                Subsystem::Resonator { params } => n.min(params.fock_cutoff).max(2),
                _ => n,
            })
            .collect(),
    );
    Ok(TermSeries::new(shape, terms)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::device::parse_device_spec;
    use crate::numerics::hermitian_eigendecomposition;
    use crate::propagator::{propagate, PropagationPlan};
    use std::f64::consts::TAU;

    fn coupler() -> TunableTransmonParams {
        TunableTransmonParams { e_c: 5.529, e_j1: 112.450, e_j2: 134.999 }
    }

    #[test]
    fn ladder_matrix_elements() {
        let ops = ladder_operators(5);
        for m in 0..5 {
            assert_eq!(ops.number[(m, m)], C64::new(m as f64, 0.0));
        }
        for m in 0..4 {
            assert!((ops.lowering[(m, m + 1)].re - ((m + 1) as f64).sqrt()).abs() < 1e-15);
        }
        assert!(ops.momentum.hermiticity_residual() < 1e-15);
        assert!(ops.pair.hermiticity_residual() < 1e-15);
    }

    #[test]
    fn tunable_frequency_reproduces_table() {
        let p = coupler();
        let w0 = tunable_frequency(0.0, &p) / TAU;
        assert!((w0 - 8.325).abs() < 1e-3, "harmonic {w0}");
        let wq0 = quartic_qubit_frequency(0.0, &p) / TAU;
        assert!((wq0 - 8.105).abs() < 1e-3, "qubit {wq0}");
        let wq = quartic_qubit_frequency(TAU * 0.15, &p) / TAU;
        assert!((wq - 7.643).abs() < 1e-3, "operating point {wq}");
    }

    #[test]
    fn fully_symmetric_junction_at_half_quantum() {
        let p = TunableTransmonParams { e_c: 5.0, e_j1: 50.0, e_j2: 50.0 };
        assert!(tunable_frequency(TAU * 0.5, &p).abs() < 1e-6);
        assert!(matches!(
            drive_term_coefficients(TAU * 0.5, 1.0, &p),
            Err(EffectiveError::Circuit(CircuitError::FluxSingularity { .. }))
        ));
    }

    #[test]
    fn quartic_diagonal_first_entries() {
        let d = quartic_diagonal(3);
        assert!((d[0] - 3.0).abs() < 1e-12);
        assert!((d[1] - 15.0).abs() < 1e-12);
        assert!((d[2] - 39.0).abs() < 1e-12);
        for (m, v) in quartic_diagonal(8).iter().enumerate() {
            let mf = m as f64;
            assert!((v - 3.0 * (2.0 * mf * mf + 2.0 * mf + 1.0)).abs() < 1e-9);
        }
    }

    #[test]
    fn fixed_effective_routes_agree() {
        let p = FixedTransmonParams { e_c: 6.777, e_j: 84.482 };
        let n = 6;
        let series = fixed_effective_hamiltonian(&p, n).unwrap();
        let via_levels = series.dense_at(0.0).unwrap();
        let via_quartic = fixed_effective_via_quartic(&p, n);
        assert!(via_levels.sub(&via_quartic).max_abs() < 1e-12 * via_levels.max_abs());
        // N = 2 reduces to diag(0, omega')
        let two = fixed_effective_hamiltonian(&p, 2).unwrap().dense_at(0.0).unwrap();
        let omega_prime = (2.0 * p.e_c * p.e_j).sqrt() - 0.25 * p.e_c;
        assert!((two[(0, 0)].re).abs() < 1e-12);
        assert!((two[(1, 1)].re - omega_prime).abs() < 1e-12);
        // anharmonicity definition: (E2 - E1) - (E1 - E0) = alpha
        let h = series.dense_at(0.0).unwrap();
        let alpha = (h[(2, 2)].re - h[(1, 1)].re) - (h[(1, 1)].re - h[(0, 0)].re);
        assert!((alpha + 0.25 * p.e_c).abs() < 1e-12);
    }

    #[test]
    fn drive_term_limits() {
        let p = coupler();
        // plateau: phi_dot = 0 kills the whole operator
        let op = drive_term(TAU * 0.2, 0.0, &p, 6).unwrap();
        assert_eq!(op.max_abs(), 0.0);
        // d = 0 kills the velocity part for all fluxes
        let sym = TunableTransmonParams { e_c: 5.0, e_j1: 50.0, e_j2: 50.0 };
        for k in 0..20 {
            let phi = 0.1 * k as f64;
            let (c1, _) = drive_term_coefficients(phi, 0.8, &sym).unwrap();
            assert_eq!(c1, 0.0);
        }
        // d = 1 kills the squeeze part
        let asym = TunableTransmonParams { e_c: 5.0, e_j1: 1e-9, e_j2: 100.0 };
        for k in 0..20 {
            let phi = 0.1 * k as f64;
            let (_, c2) = drive_term_coefficients(phi, 0.8, &asym).unwrap();
            assert!(c2.abs() < 1e-9);
        }
        // Hermitian and traceless
        let op = drive_term(TAU * 0.2, 0.37, &p, 6).unwrap();
        assert!(op.hermiticity_residual() < 1e-14);
        let trace: f64 = (0..6).map(|i| op[(i, i)].re).sum();
        assert!(trace.abs() < 1e-14);
    }

    #[test]
    fn higher_order_k4_diagonal_matches_quartic_model() {
        let p = coupler();
        let pulse = FluxPulse::constant(TAU * 0.15, 10.0);
        let n = 4;
        let series = single_tunable_nonadiabatic(
            &p,
            &pulse,
            &EffectiveModelOptions { expansion_order: 4, ..Default::default() },
            n,
        )
        .unwrap();
        let h = series.dense_at(3.0).unwrap();
        // closed form: omega'(phi0) m + alpha/2 m(m-1), referenced to E_0
        let alpha = -0.25 * p.e_c;
        let wq = quartic_qubit_frequency(TAU * 0.15, &p);
        for m in 0..n {
            let mf = m as f64;
            let expect = wq * mf + 0.5 * alpha * mf * (mf - 1.0);
            assert!(
                (h[(m, m)].re - expect).abs() < 1e-10 * expect.abs().max(1.0),
                "level {m}: {} vs {expect}",
                h[(m, m)].re
            );
        }
    }

    #[test]
    fn higher_orders_converge_toward_exact_spectrum() {
        let p = coupler();
        let pulse = FluxPulse::constant(TAU * 0.15, 10.0);
        let exact = tunable_exact_levels(&p, TAU * 0.15, 25, 2).unwrap()[1];
        let gap_at = |k_order: usize, scope: ExpansionScope, n: usize| {
            let series = single_tunable_nonadiabatic(
                &p,
                &pulse,
                &EffectiveModelOptions { expansion_order: k_order, scope, ..Default::default() },
                n,
            )
            .unwrap();
            let h = series.dense_at(0.0).unwrap();
            let ev = hermitian_eigendecomposition(&h).unwrap().eigenvalues;
            ev[1] - ev[0]
        };
        // quartic value is the published 7.643 GHz
        let quartic = gap_at(4, ExpansionScope::DiagonalOnly, 4);
        assert!((quartic / TAU - 7.643).abs() < 1e-3);
        // each extra order moves the diagonal-model spectrum by strictly
        // less than the previous one
        let mut increments = Vec::new();
        let mut prev = quartic;
        for k_order in [6, 8, 10, 12] {
            let g = gap_at(k_order, ExpansionScope::DiagonalOnly, 4);
            increments.push((g - prev).abs());
            prev = g;
        }
        for w in increments.windows(2) {
            assert!(w[1] < w[0], "increments must shrink: {increments:?}");
        }
        // with the off-diagonal orders kept, the gap walks from the quartic
        // 7.643 GHz toward the 7.636 GHz circuit value
        let err4 = (gap_at(4, ExpansionScope::Full, 8) - exact).abs();
        let err24 = (gap_at(24, ExpansionScope::Full, 8) - exact).abs();
        assert!(err24 < err4, "err(K=24) = {err24}, err(K=4) = {err4}");
        assert!(err24 / TAU < 1e-3, "residual {} GHz", err24 / TAU);
    }

    #[test]
    fn interaction_strengths_reproduce_tables() {
        let p2 = coupler();
        let q0 = FixedTransmonParams { e_c: 6.777, e_j: 84.482 };
        let q1 = FixedTransmonParams { e_c: 6.453, e_j: 127.992 };
        let g = TAU * 0.085;
        let g20 = interaction_strength(g, tunable_dipole_factor(&p2, 0.0), fixed_dipole_factor(&q0));
        let g21 = interaction_strength(g, tunable_dipole_factor(&p2, 0.0), fixed_dipole_factor(&q1));
        assert!((g20 / TAU - 0.146).abs() < 1e-3, "{}", g20 / TAU);
        assert!((g21 / TAU - 0.164).abs() < 1e-3, "{}", g21 / TAU);
        // at the flux offset both drop by about 3 percent
        let g20_op = interaction_strength(
            g,
            tunable_dipole_factor(&p2, TAU * 0.15),
            fixed_dipole_factor(&q0),
        );
        assert!((g20_op / TAU - 0.142).abs() < 1e-3);
        // resonator-charge strength of the second architecture, row 1
        let q_arch2 = TunableTransmonParams { e_c: 6.512, e_j1: 30.265, e_j2: 60.529 };
        let gbar = interaction_strength(TAU * 0.300, tunable_dipole_factor(&q_arch2, 0.0), 1.0);
        assert!((gbar / TAU - 0.344).abs() < 1e-3, "{}", gbar / TAU);
        // zero bare coupling stays zero everywhere
        assert_eq!(interaction_strength(0.0, 1.3, 0.9), 0.0);
    }

    #[test]
    fn g_bounds_follow_josephson_monotonicity() {
        let p = coupler();
        let hi = tunable_dipole_factor(&p, 0.0);
        let lo = tunable_dipole_factor(&p, std::f64::consts::PI);
        for k in 0..=50 {
            let phi = std::f64::consts::PI * k as f64 / 50.0;
            let f = tunable_dipole_factor(&p, phi);
            assert!(f <= hi + 1e-12 && f >= lo - 1e-12);
        }
    }

    #[test]
    fn two_level_reduction_properties() {
        let p = coupler();
        let pulse = FluxPulse::new(TAU * 0.15, TAU * 0.075, TAU * 1.089, 13.0, 100.0).unwrap();
        for t in [0.0, 5.0, 20.0, 50.0, 93.0] {
            let h = two_level_reduction(&p, &pulse, t).unwrap();
            assert!(h.hermiticity_residual() < 1e-14);
            assert!((h[(0, 0)].re + h[(1, 1)].re).abs() < 1e-14);
        }
        // plateau of a unimodal pulse: pure sigma_z
        let unimodal = FluxPulse::new(0.0, TAU * 0.2, 0.0, 10.0, 50.0).unwrap();
        let h = two_level_reduction(&p, &unimodal, 25.0).unwrap();
        assert_eq!(h[(0, 1)], C64::ZERO);
        let d0 = TunableTransmonParams { e_c: 5.0, e_j1: 50.0, e_j2: 50.0 };
        for t in [3.0, 7.0, 44.0] {
            let h = two_level_reduction(&d0, &unimodal, t).unwrap();
            assert_eq!(h[(0, 1)], C64::ZERO, "sigma_y coefficient must vanish for d = 0");
        }
    }

    #[test]
    fn closed_form_matches_propagated_diagonal_model() {
        let p = coupler();
        let pulse = FluxPulse::new(TAU * 0.15, TAU * 0.075, TAU * 1.089, 13.0, 60.0).unwrap();
        let n = 4;
        let series = single_tunable_adiabatic(&p, &pulse, n).unwrap();
        let plan = PropagationPlan::new(series, 5e-4, 0.0, 60.0, 0.2, vec![0, 1, 2, 3], true).unwrap();
        let amp = 0.5f64;
        let psi0 = StateVector { amps: vec![C64::new(amp, 0.0); 4] };
        let traj = propagate(&plan, &psi0).unwrap();
        // populations frozen
        for row in &traj.probabilities {
            for p_m in row {
                assert!((p_m - 0.25).abs() < 1e-10);
            }
        }
        let end = traj.states.unwrap().pop().unwrap();
        let closed = closed_form_adiabatic_evolution(&psi0, &pulse, &p, 0.0, 60.0);
        let mut err = 0.0f64;
        for (a, b) in end.amps.iter().zip(&closed.amps) {
            err = err.max((a - b).norm());
        }
        assert!(err < 1e-8, "closed form vs propagated: {err}");
        // delta = 0: phases reduce to exp(-i E_m t)
        let idle = FluxPulse::constant(TAU * 0.15, 10.0);
        let closed = closed_form_adiabatic_evolution(&psi0, &idle, &p, 0.0, 10.0);
        let alpha = -0.25 * p.e_c;
        let wq = quartic_qubit_frequency(TAU * 0.15, &p);
        for (m, c) in closed.amps.iter().enumerate() {
            let mf = m as f64;
            let e_m = wq * mf + 0.5 * alpha * mf * (mf - 1.0);
            let expect = psi0.amps[m] * C64::from_polar(1.0, -e_m * 10.0);
            assert!((c - expect).norm() < 1e-10);
        }
    }

    const ARCH_I_EFFECTIVE: &str = r#"
[subsystem.0]
kind = fixed_transmon
e_c = 6.777 rad_per_ns
e_j = 84.482 rad_per_ns
omega = 5.100 ghz_over_2pi
alpha = -0.310 ghz_over_2pi

[subsystem.1]
kind = fixed_transmon
e_c = 6.453 rad_per_ns
e_j = 127.992 rad_per_ns
omega = 6.200 ghz_over_2pi
alpha = -0.285 ghz_over_2pi

[subsystem.2]
kind = tunable_transmon
e_c = 5.529 rad_per_ns
e_j1 = 112.450 rad_per_ns
e_j2 = 134.999 rad_per_ns
phi0_over_2pi = 0.15
omega = 8.100 ghz_over_2pi
alpha = -0.235 ghz_over_2pi

[coupling.0]
i = 2
j = 1
g = 0.085 ghz_over_2pi

[coupling.1]
i = 2
j = 0
g = 0.085 ghz_over_2pi

[simulation]
n_m = 4
n_c = 25
pulse_target = 2
"#;

    #[test]
    fn effective_arch_i_cases() {
        let spec = parse_device_spec(ARCH_I_EFFECTIVE).unwrap();
        let pulse = FluxPulse::new(TAU * 0.15, TAU * 0.075, TAU * 1.088, 13.0, 100.0).unwrap();
        let case_a = assemble_effective(&spec, &pulse, &EffectiveModelOptions::case_a(), 4).unwrap();
        // static interaction: both coupling terms constant
        let coupling_consts: Vec<bool> = case_a
            .terms()
            .iter()
            .filter(|t| t.label.starts_with("interaction"))
            .map(|t| t.coefficient.is_constant())
            .collect();
        assert_eq!(coupling_consts, vec![true, true]);
        // case B promotes them to functions of time
        let case_b = assemble_effective(&spec, &pulse, &EffectiveModelOptions::case_b(), 4).unwrap();
        let coupling_consts: Vec<bool> = case_b
            .terms()
            .iter()
            .filter(|t| t.label.starts_with("interaction"))
            .map(|t| t.coefficient.is_constant())
            .collect();
        assert_eq!(coupling_consts, vec![false, false]);
        // zero amplitude: everything static
        let idle = FluxPulse::constant(TAU * 0.15, 100.0);
        let static_series =
            assemble_effective(&spec, &idle, &EffectiveModelOptions::case_b(), 4).unwrap();
        for term in static_series.terms() {
            if term.coefficient.is_constant() {
                continue;
            }
            let v0 = term.coefficient.at(0.0);
            for k in 1..20 {
                assert!((term.coefficient.at(5.0 * k as f64) - v0).abs() < 1e-12);
            }
        }
        // Hermitian at sampled times
        for k in 0..50 {
            let t = 2.0 * k as f64;
            assert!(case_b.hermiticity_residual_at(t).unwrap() < 1e-12);
        }
    }

    #[test]
    fn effective_case_a_freezes_at_zero_flux_reference() {
        // the static-interaction freeze matches the published coupling
        // tables, whose values are the phi = 0 evaluations of the
        // interaction-strength formula
        let spec = parse_device_spec(ARCH_I_EFFECTIVE).unwrap();
        let pulse = FluxPulse::new(TAU * 0.15, TAU * 0.075, TAU * 1.088, 13.0, 100.0).unwrap();
        let series = assemble_effective(&spec, &pulse, &EffectiveModelOptions::case_a(), 4).unwrap();
        let g20: Vec<f64> = series
            .terms()
            .iter()
            .filter(|t| t.label == "interaction_2_0")
            .map(|t| t.coefficient.at(0.0))
            .collect();
        let p2 = coupler();
        let q0 = FixedTransmonParams { e_c: 6.777, e_j: 84.482 };
        let expect = interaction_strength(
            TAU * 0.085,
            tunable_dipole_factor(&p2, 0.0),
            fixed_dipole_factor(&q0),
        );
        assert!((g20[0] - expect).abs() < 1e-12);
        assert!((g20[0] / TAU - 0.146).abs() < 1e-3);
    }

    #[test]
    fn adjusted_spectrum_table_interpolation() {
        let p = TunableTransmonParams { e_c: 6.512, e_j1: 30.265, e_j2: 60.529 };
        let table =
            AdjustedSpectrumTable::build(&p, 0.0, TAU * 0.35, 0.001 * TAU, 25).unwrap();
        // midpoint interpolation error against direct diagonalization
        let mut worst = 0.0f64;
        for k in 0..40 {
            let phi = (0.004 + 0.008 * k as f64) * TAU;
            if phi > TAU * 0.34 {
                break;
            }
            let exact = tunable_exact_levels(&p, phi, 25, 2).unwrap()[1];
            worst = worst.max((table.omega_at(phi).unwrap() - exact).abs());
        }
        assert!(worst < TAU * 1e-6, "interpolation error {worst}");
        assert!(matches!(
            table.omega_at(TAU * 0.4),
            Err(EffectiveError::FluxOutsideTable { .. })
        ));
    }

    #[test]
    fn spectrum_deviation_ordering_and_growth() {
        // published second-architecture rows: deviations of the adjusted
        // table beat the plain quartic model pointwise and grow toward a
        // half flux quantum
        let p = TunableTransmonParams { e_c: 6.512, e_j1: 30.265, e_j2: 60.529 };
        let table = AdjustedSpectrumTable::build(&p, 0.0, TAU * 0.45, 0.001 * TAU, 25).unwrap();
        let mut prev_plain = -1.0;
        for k in 0..=8 {
            let phi = TAU * 0.05 * k as f64;
            let plain = spectrum_deviation(
                1,
                phi,
                SpectrumApproximation::PlainQuartic,
                &p,
                None,
                None,
                25,
            )
            .unwrap();
            let adjusted = spectrum_deviation(
                1,
                phi,
                SpectrumApproximation::Adjusted,
                &p,
                Some(&table),
                None,
                25,
            )
            .unwrap();
            assert!(adjusted <= plain + 1e-12, "adjusted {adjusted} vs plain {plain} at {phi}");
            if k > 0 {
                assert!(plain > prev_plain, "plain deviation must grow with flux");
            }
            prev_plain = plain;
        }
        // m = 1 deviations do not involve the anharmonicity at all
        let with_alpha = spectrum_deviation(
            1,
            TAU * 0.2,
            SpectrumApproximation::PlainQuartic,
            &p,
            None,
            Some(-0.123),
            25,
        )
        .unwrap();
        let without = spectrum_deviation(
            1,
            TAU * 0.2,
            SpectrumApproximation::PlainQuartic,
            &p,
            None,
            None,
            25,
        )
        .unwrap();
        assert_eq!(with_alpha, without);
    }

    #[test]
    fn plain_deviation_at_operating_point_is_seven_megahertz() {
        let p = coupler();
        let dev = spectrum_deviation(
            1,
            TAU * 0.15,
            SpectrumApproximation::PlainQuartic,
            &p,
            None,
            None,
            25,
        )
        .unwrap();
        let mhz = dev / TAU * 1e3;
        assert!((5.0..9.0).contains(&mhz), "deviation {mhz} MHz");
    }

    #[test]
    fn eigendecomposition_of_assembled_effective_hamiltonian_is_reachable() {
        let spec = parse_device_spec(ARCH_I_EFFECTIVE).unwrap();
        let idle = FluxPulse::constant(TAU * 0.15, 10.0);
        let series = assemble_effective(&spec, &idle, &EffectiveModelOptions::case_a(), 3).unwrap();
        let h = series.dense_at(0.0).unwrap();
        let fac = hermitian_eigendecomposition(&h).unwrap();
        assert_eq!(fac.dim(), 27);
    }
}
