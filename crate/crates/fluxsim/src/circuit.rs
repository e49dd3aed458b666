//! Circuit (lumped-element) Hamiltonians in the charge and Fock bases, the
//! tunable-junction recast, composite architecture assembly, and the t = 0
//! bare "transmon basis" with per-subsystem truncation.
//!
//! The tunable junction -E_J1 cos(phi_hat + phi/2) - E_J2 cos(phi_hat - phi/2)
//! is handled through the exact identity
//!
//! ```text
//! E_J1 cos(phi_hat + phi/2) + E_J2 cos(phi_hat - phi/2)
//!   = E_Sigma cos(phi/2) cos(phi_hat) + E_Sigma d sin(phi/2) sin(phi_hat)
//!   = E_J_eff(phi) cos(phi_hat - phi_eff(phi))
//! ```
//!
//! so the two charge-basis operators cos(phi_hat) and sin(phi_hat) stay
//! constant and all time dependence lives in scalar coefficients, which is
//! what the product-formula propagator needs.

use crate::device::{DeviceSpec, Subsystem, TunableTransmonParams, CouplingKind};
use crate::numerics::{hermitian_eigendecomposition, ComplexMatrix, NumericsError};
use crate::operators::{SiteFactor, SpaceShape, StateLabel, Term, TermSeries, TermSeriesError};
use crate::pulse::FluxPulse;
use num_complex::Complex64 as C64;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CircuitError {
    #[error("pulse target {index} is a {kind}; only tunable transmons take a flux pulse")]
    PulseTargetNotTunable { index: usize, kind: &'static str },
    #[error("effective-flux denominator vanished (d = {d}, phi = {phi}); junction fully closed")]
    FluxSingularity { d: f64, phi: f64 },
    #[error("N_m = {n_m} exceeds the native dimension {native} of subsystem {site}")]
    TruncationTooLarge { site: usize, n_m: usize, native: usize },
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Series(#[from] TermSeriesError),
}

/// Charge operator and the shift-built flux functions on the charge basis
/// n in {-N_c, ..., +N_c}.
#[derive(Clone, Debug)]
pub struct ChargeBasisOperators {
    pub n_c: usize,
    pub n_hat: ComplexMatrix,
    pub cos_phi: ComplexMatrix,
    pub sin_phi: ComplexMatrix,
}

/// cos(phi_hat) = (S + S^H)/2 and sin(phi_hat) = (S - S^H)/(2i) with the
/// shift convention S|n> = |n+1>.
pub fn charge_operators(n_c: usize) -> ChargeBasisOperators {
    let dim = 2 * n_c + 1;
    let mut n_hat = ComplexMatrix::zeros(dim, dim);
    for k in 0..dim {
        n_hat[(k, k)] = C64::new(k as f64 - n_c as f64, 0.0);
    }
    let mut cos_phi = ComplexMatrix::zeros(dim, dim);
    let mut sin_phi = ComplexMatrix::zeros(dim, dim);
    for k in 0..dim - 1 {
        // S[k+1][k] = 1
        cos_phi[(k + 1, k)] = C64::new(0.5, 0.0);
        cos_phi[(k, k + 1)] = C64::new(0.5, 0.0);
        sin_phi[(k + 1, k)] = C64::new(0.0, -0.5);
        sin_phi[(k, k + 1)] = C64::new(0.0, 0.5);
    }
    ChargeBasisOperators { n_c, n_hat, cos_phi, sin_phi }
}

/// E_J_eff(phi) = E_Sigma sqrt(cos^2(phi/2) + d^2 sin^2(phi/2)).
pub fn effective_josephson_energy(phi: f64, p: &TunableTransmonParams) -> f64 {
    let d = p.asymmetry();
    let (s, c) = (0.5 * phi).sin_cos();
    p.e_sigma() * (c * c + d * d * s * s).sqrt()
}

/// phi_eff(phi) = arctan(d tan(phi/2)), evaluated on the branch that keeps
/// E_J_eff cos(phi_hat - phi_eff) equal to the two-junction sum (atan2 of
/// the exact quadrature pair, continuous for |phi| < pi).
pub fn effective_flux(phi: f64, p: &TunableTransmonParams) -> f64 {
    let d = p.asymmetry();
    let (s, c) = (0.5 * phi).sin_cos();
    (d * s).atan2(c)
}

/// d(phi_eff)/dt given phi and d(phi)/dt.
pub fn effective_flux_derivative(
    phi: f64,
    phi_dot: f64,
    p: &TunableTransmonParams,
) -> Result<f64, CircuitError> {
    let d = p.asymmetry();
    let (s, c) = (0.5 * phi).sin_cos();
    let denom = c * c + d * d * s * s;
    if denom < 1e-14 {
        return Err(CircuitError::FluxSingularity { d, phi });
    }
    Ok(phi_dot * d / (2.0 * denom))
}

/// Logarithmic derivative (d xi / dt) / xi of xi = sqrt(E_J_eff / 2 E_C).
pub fn xi_log_derivative(
    phi: f64,
    phi_dot: f64,
    p: &TunableTransmonParams,
) -> Result<f64, CircuitError> {
    let d = p.asymmetry();
    let (s, c) = (0.5 * phi).sin_cos();
    let denom = c * c + d * d * s * s;
    if denom < 1e-14 {
        return Err(CircuitError::FluxSingularity { d, phi });
    }
    Ok(phi_dot * (d * d - 1.0) * phi.sin() / (8.0 * denom))
}

fn resonator_ops(fock: usize) -> (ComplexMatrix, ComplexMatrix) {
    // (number operator, a^dag + a)
    let number = ComplexMatrix::from_fn(fock, fock, |r, c| {
        if r == c { C64::new(r as f64, 0.0) } else { C64::ZERO }
    });
    let x = ComplexMatrix::from_fn(fock, fock, |r, c| {
        if r + 1 == c {
            C64::new((c as f64).sqrt(), 0.0)
        } else if c + 1 == r {
            C64::new((r as f64).sqrt(), 0.0)
        } else {
            C64::ZERO
        }
    });
    (number, x)
}

/// Native-basis shape of a device: charge dimension for transmons, Fock
/// cutoff for resonators.
pub fn native_shape(spec: &DeviceSpec) -> SpaceShape {
    SpaceShape::new((0..spec.subsystems.len()).map(|k| spec.native_dim(k)).collect())
}

/// Assemble the circuit Hamiltonian of the device as a term series over the
/// native product basis. Static pieces carry constant coefficient 1 (their
/// energy prefactors live in the operator); the pulsed junction contributes
/// the cos/sin pair with time-dependent coefficients.
pub fn assemble_architecture(
    spec: &DeviceSpec,
    pulse: &FluxPulse,
) -> Result<TermSeries, CircuitError> {
    let target = spec.pulse_target;
    if !spec.subsystems[target].is_tunable() {
        return Err(CircuitError::PulseTargetNotTunable {
            index: target,
            kind: spec.subsystems[target].kind_name(),
        });
    }
    let ops = charge_operators(spec.n_c);
    let shape = native_shape(spec);
    let mut diag_terms: Vec<Term> = Vec::new();
    let mut static_terms: Vec<Term> = Vec::new();
    let mut drive_terms: Vec<Term> = Vec::new();
    let mut coupling_terms: Vec<Term> = Vec::new();

    for (k, sub) in spec.subsystems.iter().enumerate() {
        match sub {
            Subsystem::Fixed { params, .. } => {
                let n2 = ops.n_hat.mul(&ops.n_hat).scale_re(params.e_c);
                diag_terms.push(Term::constant(
                    format!("charge_energy_{k}"),
                    1.0,
                    vec![SiteFactor { site: k, matrix: n2 }],
                ));
                static_terms.push(Term::constant(
                    format!("josephson_{k}"),
                    1.0,
                    vec![SiteFactor { site: k, matrix: ops.cos_phi.scale_re(-params.e_j) }],
                ));
            }
            Subsystem::Tunable { params, phi0, .. } => {
                let n2 = ops.n_hat.mul(&ops.n_hat).scale_re(params.e_c);
                diag_terms.push(Term::constant(
                    format!("charge_energy_{k}"),
                    1.0,
                    vec![SiteFactor { site: k, matrix: n2 }],
                ));
                let e_sigma = params.e_sigma();
                let d = params.asymmetry();
                if k == target && pulse.delta > 0.0 {
                    let p_cos = pulse.clone();
                    let p_sin = pulse.clone();
                    drive_terms.push(Term::time_dependent(
                        format!("junction_cos_{k}"),
                        move |t| -e_sigma * (0.5 * p_cos.flux(t)).cos(),
                        vec![SiteFactor { site: k, matrix: ops.cos_phi.clone() }],
                    ));
                    drive_terms.push(Term::time_dependent(
                        format!("junction_sin_{k}"),
                        move |t| -e_sigma * d * (0.5 * p_sin.flux(t)).sin(),
                        vec![SiteFactor { site: k, matrix: ops.sin_phi.clone() }],
                    ));
                } else {
                    let phi = if k == target { pulse.flux(0.0) } else { *phi0 };
                    let (s, c) = (0.5 * phi).sin_cos();
                    let junction = ops
                        .cos_phi
                        .scale_re(-e_sigma * c)
                        .add(&ops.sin_phi.scale_re(-e_sigma * d * s));
                    static_terms.push(Term::constant(
                        format!("junction_{k}"),
                        1.0,
                        vec![SiteFactor { site: k, matrix: junction }],
                    ));
                }
            }
            Subsystem::Resonator { params } => {
                let (number, _) = resonator_ops(params.fock_cutoff);
                diag_terms.push(Term::constant(
                    format!("resonator_{k}"),
                    1.0,
                    vec![SiteFactor { site: k, matrix: number.scale_re(params.omega_r) }],
                ));
            }
        }
    }

    for cpl in &spec.couplings {
        match cpl.kind {
            CouplingKind::ChargeCharge => {
                coupling_terms.push(Term::constant(
                    format!("coupling_{}_{}", cpl.i, cpl.j),
                    cpl.g,
                    vec![
                        SiteFactor { site: cpl.i, matrix: ops.n_hat.clone() },
                        SiteFactor { site: cpl.j, matrix: ops.n_hat.clone() },
                    ],
                ));
            }
            CouplingKind::ResonatorCharge => {
                let (res_site, charge_site) =
                    if matches!(spec.subsystems[cpl.i], Subsystem::Resonator { .. }) {
                        (cpl.i, cpl.j)
                    } else {
                        (cpl.j, cpl.i)
                    };
                let fock = match &spec.subsystems[res_site] {
                    Subsystem::Resonator { params } => params.fock_cutoff,
                    _ => unreachable!("validated coupling"),
                };
                let (_, x) = resonator_ops(fock);
                coupling_terms.push(Term::constant(
                    format!("coupling_{}_{}", cpl.i, cpl.j),
                    cpl.g,
                    vec![
                        SiteFactor { site: res_site, matrix: x },
                        SiteFactor { site: charge_site, matrix: ops.n_hat.clone() },
                    ],
                ));
            }
        }
    }

    let mut terms = diag_terms;
    terms.extend(static_terms);
    terms.extend(drive_terms);
    terms.extend(coupling_terms);
    Ok(TermSeries::new(shape, terms)?)
}

/// Eigenbasis of one subsystem at t = 0.
#[derive(Clone, Debug)]
pub struct SiteBasis {
    /// Lowest `kept` eigenenergies, ascending (rad/ns).
    pub energies: Vec<f64>,
    /// native_dim x kept matrix of eigenvector columns.
    pub vectors: ComplexMatrix,
    pub native_dim: usize,
    pub kept: usize,
}

/// The t = 0 product eigenbasis ("transmon basis") with N_m states kept per
/// transmon subsystem.
#[derive(Clone, Debug)]
pub struct BareBasis {
    pub sites: Vec<SiteBasis>,
    shape: SpaceShape,
}

fn phase_fix_columns(m: &mut ComplexMatrix) {
    for c in 0..m.cols() {
        let mut best = 0usize;
        let mut best_mag = -1.0;
        for r in 0..m.rows() {
            let mag = m[(r, c)].norm();
            if mag > best_mag {
                best_mag = mag;
                best = r;
            }
        }
        let z = m[(best, c)];
        if z.norm() > 0.0 {
            let phase = z / z.norm();
            for r in 0..m.rows() {
                let v = m[(r, c)] * phase.conj();
                m[(r, c)] = v;
            }
        }
    }
}

/// Diagonalize each subsystem Hamiltonian at t = 0 (flux at its offset) and
/// keep the lowest `n_m` states per transmon; resonators keep their full
/// Fock basis, where the t = 0 Hamiltonian is already diagonal.
pub fn build_bare_basis(
    spec: &DeviceSpec,
    pulse: &FluxPulse,
    n_m: usize,
) -> Result<BareBasis, CircuitError> {
    let ops = charge_operators(spec.n_c);
    let native = 2 * spec.n_c + 1;
    let mut sites = Vec::new();
    for (k, sub) in spec.subsystems.iter().enumerate() {
        let basis = match sub {
            Subsystem::Fixed { params, .. } => {
                if n_m > native {
                    return Err(CircuitError::TruncationTooLarge { site: k, n_m, native });
                }
                let h = ops
                    .n_hat
                    .mul(&ops.n_hat)
                    .scale_re(params.e_c)
                    .add(&ops.cos_phi.scale_re(-params.e_j));
                let fac = hermitian_eigendecomposition(&h)?;
                let mut vectors =
                    ComplexMatrix::from_fn(native, n_m, |r, c| fac.eigenvectors[(r, c)]);
                phase_fix_columns(&mut vectors);
                SiteBasis { energies: fac.eigenvalues[..n_m].to_vec(), vectors, native_dim: native, kept: n_m }
            }
            Subsystem::Tunable { params, phi0, .. } => {
                if n_m > native {
                    return Err(CircuitError::TruncationTooLarge { site: k, n_m, native });
                }
                let phi = if k == spec.pulse_target { pulse.flux(0.0) } else { *phi0 };
                let e_sigma = params.e_sigma();
                let d = params.asymmetry();
                let (s, c) = (0.5 * phi).sin_cos();
                let h = ops
                    .n_hat
                    .mul(&ops.n_hat)
                    .scale_re(params.e_c)
                    .add(&ops.cos_phi.scale_re(-e_sigma * c))
                    .add(&ops.sin_phi.scale_re(-e_sigma * d * s));
                let fac = hermitian_eigendecomposition(&h)?;
                let mut vectors =
                    ComplexMatrix::from_fn(native, n_m, |r, c| fac.eigenvectors[(r, c)]);
                phase_fix_columns(&mut vectors);
                SiteBasis { energies: fac.eigenvalues[..n_m].to_vec(), vectors, native_dim: native, kept: n_m }
            }
            Subsystem::Resonator { params } => {
                let fock = params.fock_cutoff;
                SiteBasis {
                    energies: (0..fock).map(|m| m as f64 * params.omega_r).collect(),
                    vectors: ComplexMatrix::identity(fock),
                    native_dim: fock,
                    kept: fock,
                }
            }
        };
        sites.push(basis);
    }
    let shape = SpaceShape::new(sites.iter().map(|s| s.kept).collect());
    Ok(BareBasis { sites, shape })
}

impl BareBasis {
    pub fn shape(&self) -> &SpaceShape {
        &self.shape
    }

    pub fn dim(&self) -> usize {
        self.shape.dim()
    }

    /// Conjugate every factor of a native-basis series into the bare basis
    /// and truncate: A -> B^H A B per site.
    pub fn transform_series(&self, series: &TermSeries) -> Result<TermSeries, CircuitError> {
        let terms = series
            .terms()
            .iter()
            .map(|term| {
                let factors = term
                    .factors
                    .iter()
                    .map(|f| {
                        let b = &self.sites[f.site].vectors;
                        let projected = b.adjoint().mul(&f.matrix).mul(b);
                        SiteFactor { site: f.site, matrix: projected }
                    })
                    .collect();
                Term { label: term.label.clone(), coefficient: term.coefficient.clone(), factors }
            })
            .collect();
        Ok(TermSeries::new(self.shape.clone(), terms)?)
    }

    /// Flat index of the bare product state with the given label.
    pub fn state_index(&self, label: &StateLabel) -> usize {
        label.flat_index(&self.shape)
    }

    /// Bare energy of a product state, relative to the bare ground state.
    pub fn bare_energy(&self, label: &StateLabel) -> f64 {
        let occ = label.occupations();
        occ.iter()
            .enumerate()
            .map(|(site, &m)| self.sites[site].energies[m] - self.sites[site].energies[0])
            .sum()
    }
}

/// Exact single-transmon spectrum in the charge basis: the lowest `levels`
/// energies of E_C n^2 - E_J cos(phi_hat), relative to the ground state.
pub fn charge_basis_levels(
    e_c: f64,
    e_j: f64,
    n_c: usize,
    levels: usize,
) -> Result<Vec<f64>, NumericsError> {
    let ops = charge_operators(n_c);
    let h = ops.n_hat.mul(&ops.n_hat).scale_re(e_c).add(&ops.cos_phi.scale_re(-e_j));
    let fac = hermitian_eigendecomposition(&h)?;
    Ok(fac.eigenvalues[..levels].iter().map(|e| e - fac.eigenvalues[0]).collect())
}

/// Exact tunable-transmon level gaps at external flux `phi`.
pub fn tunable_exact_levels(
    p: &TunableTransmonParams,
    phi: f64,
    n_c: usize,
    levels: usize,
) -> Result<Vec<f64>, NumericsError> {
    charge_basis_levels(p.e_c, effective_josephson_energy(phi, p), n_c, levels)
}
