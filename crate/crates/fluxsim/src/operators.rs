//! Hamiltonians as sums of {scalar function of time} x {constant Hermitian
//! operator} pairs.
//!
//! Every Hamiltonian handled by the propagator is a [`TermSeries`]. A term's
//! operator is stored as a product of per-subsystem factors (identity on all
//! unlisted subsystems); single-subsystem terms have one factor, dipole
//! couplings have two. This keeps the time dependence scalar and lets the
//! propagator exponentiate each term exactly from small spectral
//! factorizations instead of composite-dimension ones.
//!
//! Composite state indexing: subsystem 0 is the fastest axis, so the flat
//! index of the product state |m_{J-1}, ..., m_1, m_0> is
//! m_0 + d_0 * (m_1 + d_1 * (m_2 + ...)). State labels are written the way
//! they are indexed in the tables, z = (m_{J-1}, ..., m_0).

use crate::numerics::{ComplexMatrix, NumericsError, kron, MAX_STATE_DIM};
use std::fmt;
use std::sync::Arc;

/// Dimensions of the composite product space, one entry per subsystem.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SpaceShape {
    dims: Vec<usize>,
}

impl SpaceShape {
    pub fn new(dims: Vec<usize>) -> Self {
        assert!(!dims.is_empty() && dims.iter().all(|&d| d > 0));
        Self { dims }
    }

    pub fn num_sites(&self) -> usize {
        self.dims.len()
    }

    pub fn site_dim(&self, site: usize) -> usize {
        self.dims[site]
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    /// Total composite dimension.
    pub fn dim(&self) -> usize {
        self.dims.iter().product()
    }

    /// Stride of a site in the flat index (site 0 is fastest).
    pub fn stride(&self, site: usize) -> usize {
        self.dims[..site].iter().product()
    }

    /// Flat index of the product state with occupation `occ[k]` on site `k`.
    pub fn index_of(&self, occ: &[usize]) -> usize {
        assert_eq!(occ.len(), self.dims.len());
        let mut idx = 0;
        for site in (0..self.dims.len()).rev() {
            debug_assert!(occ[site] < self.dims[site]);
            idx = idx * self.dims[site] + occ[site];
        }
        idx
    }

    /// Occupations of a flat index, one entry per site.
    pub fn occupations(&self, mut idx: usize) -> Vec<usize> {
        let mut occ = Vec::with_capacity(self.dims.len());
        for &d in &self.dims {
            occ.push(idx % d);
            idx /= d;
        }
        occ
    }
}

/// Product-basis state label, written high site first: z = (m_{J-1},...,m_0).
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct StateLabel(pub Vec<usize>);

impl StateLabel {
    /// Label from occupations listed per site (site 0 first).
    pub fn from_occupations(occ: &[usize]) -> Self {
        Self(occ.iter().rev().copied().collect())
    }

    pub fn occupations(&self) -> Vec<usize> {
        self.0.iter().rev().copied().collect()
    }

    pub fn flat_index(&self, shape: &SpaceShape) -> usize {
        shape.index_of(&self.occupations())
    }
}

impl fmt::Display for StateLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (k, m) in self.0.iter().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{m}")?;
        }
        write!(f, ")")
    }
}

/// Scalar coefficient of a term.
#[derive(Clone)]
pub enum Coefficient {
    Constant(f64),
    TimeDependent(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl Coefficient {
    pub fn at(&self, t: f64) -> f64 {
        match self {
            Coefficient::Constant(c) => *c,
            Coefficient::TimeDependent(f) => f(t),
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, Coefficient::Constant(_))
    }
}

impl fmt::Debug for Coefficient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Coefficient::Constant(c) => write!(f, "Constant({c})"),
            Coefficient::TimeDependent(_) => write!(f, "TimeDependent(..)"),
        }
    }
}

/// A Hermitian factor acting on one subsystem.
#[derive(Clone, Debug)]
pub struct SiteFactor {
    pub site: usize,
    pub matrix: ComplexMatrix,
}

/// One term: coefficient(t) times a product of site factors.
#[derive(Clone, Debug)]
pub struct Term {
    pub label: String,
    pub coefficient: Coefficient,
    pub factors: Vec<SiteFactor>,
}

impl Term {
    pub fn constant(label: impl Into<String>, value: f64, factors: Vec<SiteFactor>) -> Self {
        Self { label: label.into(), coefficient: Coefficient::Constant(value), factors }
    }

    pub fn time_dependent(
        label: impl Into<String>,
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
        factors: Vec<SiteFactor>,
    ) -> Self {
        Self { label: label.into(), coefficient: Coefficient::TimeDependent(Arc::new(f)), factors }
    }
}

/// H(t) = sum_k f_k(t) A_k over a composite product space.
#[derive(Clone, Debug)]
pub struct TermSeries {
    shape: SpaceShape,
    terms: Vec<Term>,
}

#[derive(Debug, thiserror::Error)]
pub enum TermSeriesError {
    #[error("term `{label}`: factor on site {site} is {rows}x{cols}, site dimension is {dim}")]
    FactorShape { label: String, site: usize, rows: usize, cols: usize, dim: usize },
    #[error("term `{label}`: factor on site {site} is not Hermitian (residual {residual:.3e})")]
    FactorNotHermitian { label: String, site: usize, residual: f64 },
    #[error("term `{label}`: duplicate factor on site {site}")]
    DuplicateSite { label: String, site: usize },
    #[error("term `{label}`: site {site} out of range for {num_sites} subsystems")]
    SiteOutOfRange { label: String, site: usize, num_sites: usize },
    #[error("composite dimension {dim} exceeds the configured maximum {max}")]
    TooLarge { dim: usize, max: usize },
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

impl TermSeries {
    pub fn new(shape: SpaceShape, terms: Vec<Term>) -> Result<Self, TermSeriesError> {
        for term in &terms {
            let mut seen = Vec::new();
            for f in &term.factors {
                if f.site >= shape.num_sites() {
                    return Err(TermSeriesError::SiteOutOfRange {
                        label: term.label.clone(),
                        site: f.site,
                        num_sites: shape.num_sites(),
                    });
                }
                if seen.contains(&f.site) {
                    return Err(TermSeriesError::DuplicateSite {
                        label: term.label.clone(),
                        site: f.site,
                    });
                }
                seen.push(f.site);
                let d = shape.site_dim(f.site);
                if f.matrix.rows() != d || f.matrix.cols() != d {
                    return Err(TermSeriesError::FactorShape {
                        label: term.label.clone(),
                        site: f.site,
                        rows: f.matrix.rows(),
                        cols: f.matrix.cols(),
                        dim: d,
                    });
                }
                let residual = f.matrix.hermiticity_residual();
                if residual > 1e-12 * f.matrix.max_abs().max(1.0) {
                    return Err(TermSeriesError::FactorNotHermitian {
                        label: term.label.clone(),
                        site: f.site,
                        residual,
                    });
                }
            }
        }
        Ok(Self { shape, terms })
    }

    pub fn shape(&self) -> &SpaceShape {
        &self.shape
    }

    pub fn dim(&self) -> usize {
        self.shape.dim()
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn is_time_independent(&self) -> bool {
        self.terms.iter().all(|t| t.coefficient.is_constant())
    }

    /// Dense composite matrix of a single term's operator part (coefficient
    /// not applied). Only usable while the composite dimension is small.
    pub fn dense_term_operator(&self, term: &Term) -> Result<ComplexMatrix, TermSeriesError> {
        let dim = self.dim();
        if dim > MAX_STATE_DIM {
            return Err(TermSeriesError::TooLarge { dim, max: MAX_STATE_DIM });
        }
        // kron with the highest site leftmost matches the fast-site-0 indexing
        let mut acc: Option<ComplexMatrix> = None;
        for site in (0..self.shape.num_sites()).rev() {
            let m = term
                .factors
                .iter()
                .find(|f| f.site == site)
                .map(|f| f.matrix.clone())
                .unwrap_or_else(|| ComplexMatrix::identity(self.shape.site_dim(site)));
            acc = Some(match acc {
                None => m,
                Some(a) => kron(&a, &m)?,
            });
        }
        Ok(acc.expect("non-empty shape"))
    }

    /// Dense H(t); for tests and small spectra only.
    pub fn dense_at(&self, t: f64) -> Result<ComplexMatrix, TermSeriesError> {
        let dim = self.dim();
        if dim > MAX_STATE_DIM {
            return Err(TermSeriesError::TooLarge { dim, max: MAX_STATE_DIM });
        }
        let mut h = ComplexMatrix::zeros(dim, dim);
        for term in &self.terms {
            let op = self.dense_term_operator(term)?;
            h = h.add(&op.scale_re(term.coefficient.at(t)));
        }
        Ok(h)
    }

    /// Largest anti-Hermitian residual of H(t).
    pub fn hermiticity_residual_at(&self, t: f64) -> Result<f64, TermSeriesError> {
        Ok(self.dense_at(t)?.hermiticity_residual())
    }
}
