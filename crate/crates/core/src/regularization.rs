//! Spectral regularization of the first-stage projection.
//!
//! With `ν_j, ψ_j` the eigenpairs of `QQ′/n`, the regularized projector is
//! `P^α e = Σ_j q(α, ν_j²)⟨e, ψ_j⟩ψ_j`. It is applied through the retained
//! eigenvectors and never assembled as an `n × n` matrix.

use std::fmt;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Eigenvalues below this fraction of the largest are treated as zero.
pub const EIGEN_CUTOFF: f64 = 1e-12;
/// Default Landweber-Fridman step as a fraction of `1/ν₁²`.
pub const LF_STEP_FRACTION: f64 = 0.9;

/// Nonzero eigenpairs of `QQ′/n`, eigenvalues descending.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    nu: Vec<f64>,
    psi: DMatrix<f64>,
}

impl Spectrum {
    /// Eigendecomposition of `QQ′/n`.
    ///
    /// When `Q` has fewer than `n/4` columns the `m × m` matrix `Q′Q/n` is
    /// decomposed instead and `ψ_j = Qφ_j/√(nν_j)`.
    pub fn new(q: &DMatrix<f64>) -> Result<Self> {
        let (n, m) = q.shape();
        if n == 0 || m == 0 {
            return Err(Error::DegenerateProjector("instrument matrix is empty".into()));
        }
        if q.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("instrument matrix has non-finite entries".into()));
        }
        let nf = n as f64;
        let (vals, vecs, dual) = if 4 * m < n {
            let g = q.tr_mul(q) / nf;
            let eig = g.symmetric_eigen();
            (eig.eigenvalues, eig.eigenvectors, true)
        } else {
            let g = q * q.transpose() / nf;
            let eig = g.symmetric_eigen();
            (eig.eigenvalues, eig.eigenvectors, false)
        };
        let mut order: Vec<usize> = (0..vals.len()).collect();
        order.sort_by(|&a, &b| vals[b].total_cmp(&vals[a]));
        let top = vals[order[0]];
        if !(top > 0.0) {
            return Err(Error::DegenerateProjector("instrument matrix is zero".into()));
        }
        let keep: Vec<usize> = order
            .into_iter()
            .filter(|&k| vals[k] > EIGEN_CUTOFF * top)
            .collect();
        let mut psi = DMatrix::zeros(n, keep.len());
        let mut nu = Vec::with_capacity(keep.len());
        for (col, &k) in keep.iter().enumerate() {
            let v = vals[k];
            if dual {
                let p = q * vecs.column(k) / (nf * v).sqrt();
                psi.set_column(col, &p);
            } else {
                psi.set_column(col, &vecs.column(k));
            }
            nu.push(v);
        }
        Ok(Self { nu, psi })
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.nu
    }

    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.psi
    }

    pub fn rank(&self) -> usize {
        self.nu.len()
    }

    pub fn n(&self) -> usize {
        self.psi.nrows()
    }

    pub fn largest(&self) -> f64 {
        self.nu[0]
    }

    /// Ratio of the extreme retained eigenvalues.
    pub fn condition_number(&self) -> f64 {
        self.nu[0] / self.nu[self.nu.len() - 1]
    }

    /// Landweber-Fridman step `0.9/ν₁²`.
    pub fn default_lf_step(&self) -> f64 {
        LF_STEP_FRACTION / (self.nu[0] * self.nu[0])
    }

    /// Ψ′A.
    pub fn coefficients(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        self.psi.tr_mul(a)
    }

    pub fn projector<'a>(&'a self, scheme: &Scheme) -> Result<RegularizedProjector<'a>> {
        RegularizedProjector::new(self, *scheme)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SchemeKind {
    Tikhonov,
    LandweberFridman,
    PrincipalComponents,
}

impl SchemeKind {
    pub fn short(&self) -> &'static str {
        match self {
            SchemeKind::Tikhonov => "T",
            SchemeKind::LandweberFridman => "LF",
            SchemeKind::PrincipalComponents => "PC",
        }
    }
}

impl fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short())
    }
}

impl std::str::FromStr for SchemeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "T" | "TIKHONOV" | "RIDGE" => Ok(SchemeKind::Tikhonov),
            "LF" | "LANDWEBER" | "LANDWEBER-FRIDMAN" => Ok(SchemeKind::LandweberFridman),
            "PC" | "PRINCIPAL-COMPONENTS" => Ok(SchemeKind::PrincipalComponents),
            other => Err(Error::InvalidArgument(format!("unknown scheme {other}"))),
        }
    }
}

/// Regularization scheme with its parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Scheme {
    Tikhonov { alpha: f64 },
    /// `iterations = 1/α`; `c` is the step.
    LandweberFridman { iterations: u32, c: f64 },
    /// `components = 1/α`.
    PrincipalComponents { components: usize },
}

impl Scheme {
    pub fn kind(&self) -> SchemeKind {
        match self {
            Scheme::Tikhonov { .. } => SchemeKind::Tikhonov,
            Scheme::LandweberFridman { .. } => SchemeKind::LandweberFridman,
            Scheme::PrincipalComponents { .. } => SchemeKind::PrincipalComponents,
        }
    }

    /// The regularization parameter α.
    pub fn alpha(&self) -> f64 {
        match *self {
            Scheme::Tikhonov { alpha } => alpha,
            Scheme::LandweberFridman { iterations, .. } => 1.0 / iterations as f64,
            Scheme::PrincipalComponents { components } => 1.0 / components as f64,
        }
    }

    /// The grid coordinate: α for Tikhonov, 1/α otherwise.
    pub fn parameter(&self) -> f64 {
        match *self {
            Scheme::Tikhonov { alpha } => alpha,
            Scheme::LandweberFridman { iterations, .. } => iterations as f64,
            Scheme::PrincipalComponents { components } => components as f64,
        }
    }

    /// Builds the scheme of `kind` at grid coordinate `parameter`.
    pub fn from_parameter(kind: SchemeKind, parameter: f64, lf_step: f64) -> Result<Scheme> {
        let integer = |p: f64| -> Result<u64> {
            if p >= 1.0 && p.fract() == 0.0 && p <= u32::MAX as f64 {
                Ok(p as u64)
            } else {
                Err(Error::Scheme(format!("{kind} parameter {p} must be a positive integer")))
            }
        };
        Ok(match kind {
            SchemeKind::Tikhonov => Scheme::Tikhonov { alpha: parameter },
            SchemeKind::LandweberFridman => Scheme::LandweberFridman {
                iterations: integer(parameter)? as u32,
                c: lf_step,
            },
            SchemeKind::PrincipalComponents => Scheme::PrincipalComponents {
                components: integer(parameter)? as usize,
            },
        })
    }

    /// Checks the scheme's constraints against `spectrum`.
    pub fn validate(&self, spectrum: &Spectrum) -> Result<()> {
        match *self {
            Scheme::Tikhonov { alpha } => {
                if !(alpha > 0.0 && alpha.is_finite()) {
                    return Err(Error::Scheme(format!("Tikhonov alpha {alpha} must be positive")));
                }
            }
            Scheme::LandweberFridman { iterations, c } => {
                if iterations == 0 {
                    return Err(Error::Scheme("Landweber-Fridman needs at least one iteration".into()));
                }
                let top = spectrum.largest();
                let cn = c * top * top;
                if !(cn > 0.0 && cn < 1.0) {
                    return Err(Error::Scheme(format!(
                        "Landweber-Fridman step requires 0 < c*nu1^2 < 1, got {cn}"
                    )));
                }
            }
            Scheme::PrincipalComponents { components } => {
                if components == 0 || components > spectrum.n() {
                    return Err(Error::Scheme(format!(
                        "component count {components} must lie in [1, {}]",
                        spectrum.n()
                    )));
                }
            }
        }
        Ok(())
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Scheme::Tikhonov { alpha } => write!(f, "T(alpha={})", crate::fmt_num(alpha)),
            Scheme::LandweberFridman { iterations, c } => {
                write!(f, "LF(iterations={iterations}, c={})", crate::fmt_num(c))
            }
            Scheme::PrincipalComponents { components } => write!(f, "PC(components={components})"),
        }
    }
}

/// Damping weight of the `j`-th eigenpair (1-based) with eigenvalue `nu`.
pub fn q_weight(scheme: &Scheme, nu: f64, j: usize) -> Result<f64> {
    let nu2 = nu * nu;
    match *scheme {
        Scheme::Tikhonov { alpha } => Ok(nu2 / (nu2 + alpha)),
        Scheme::LandweberFridman { iterations, c } => {
            let cn = c * nu2;
            if !(0.0..1.0).contains(&cn) {
                return Err(Error::Scheme(format!(
                    "Landweber-Fridman weight needs c*nu^2 < 1, got {cn}"
                )));
            }
            Ok(1.0 - (1.0 - cn).powi(iterations.min(i32::MAX as u32) as i32))
        }
        Scheme::PrincipalComponents { components } => Ok(if j <= components { 1.0 } else { 0.0 }),
    }
}

/// `P^α` realized through a spectrum and its weights.
#[derive(Debug, Clone)]
pub struct RegularizedProjector<'a> {
    spectrum: &'a Spectrum,
    scheme: Scheme,
    q: Vec<f64>,
}

impl<'a> RegularizedProjector<'a> {
    pub fn new(spectrum: &'a Spectrum, scheme: Scheme) -> Result<Self> {
        scheme.validate(spectrum)?;
        let q = spectrum
            .nu
            .iter()
            .enumerate()
            .map(|(k, &nu)| q_weight(&scheme, nu, k + 1))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { spectrum, scheme, q })
    }

    pub fn scheme(&self) -> &Scheme {
        &self.scheme
    }

    pub fn spectrum(&self) -> &Spectrum {
        self.spectrum
    }

    pub fn weights(&self) -> &[f64] {
        &self.q
    }

    /// `P^α e`.
    pub fn apply(&self, e: &DVector<f64>) -> DVector<f64> {
        let mut c = self.spectrum.psi.tr_mul(e);
        for (ck, qk) in c.iter_mut().zip(&self.q) {
            *ck *= qk;
        }
        &self.spectrum.psi * c
    }

    /// `P^α A`, column by column.
    pub fn apply_mat(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        let mut c = self.spectrum.psi.tr_mul(a);
        for (k, qk) in self.q.iter().enumerate() {
            c.row_mut(k).scale_mut(*qk);
        }
        &self.spectrum.psi * c
    }

    /// `A′P^αB` computed from the coefficient matrices `Ψ′A`, `Ψ′B`.
    pub fn quadratic_form(&self, ca: &DMatrix<f64>, cb: &DMatrix<f64>) -> DMatrix<f64> {
        let mut scaled = cb.clone();
        for (k, qk) in self.q.iter().enumerate() {
            scaled.row_mut(k).scale_mut(*qk);
        }
        ca.tr_mul(&scaled)
    }

    /// `(tr P^α, tr (P^α)²)`.
    pub fn traces(&self) -> (f64, f64) {
        (self.q.iter().sum(), self.q.iter().map(|q| q * q).sum())
    }

    /// Diagonal of `P^α`.
    pub fn diagonal(&self) -> DVector<f64> {
        let psi = &self.spectrum.psi;
        DVector::from_fn(psi.nrows(), |i, _| {
            psi.row(i)
                .iter()
                .zip(&self.q)
                .map(|(v, q)| q * v * v)
                .sum()
        })
    }

    /// Dense `P^α`; only for small problems and tests.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let psi = &self.spectrum.psi;
        let mut scaled = psi.clone();
        for (k, qk) in self.q.iter().enumerate() {
            scaled.column_mut(k).scale_mut(*qk);
        }
        scaled * psi.transpose()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs_diff;
    use proptest::prelude::{prop_assert, proptest};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_q(n: usize, m: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(n, m, |_, _| rng.random::<f64>() - 0.5)
    }

    fn ols_projector(q: &DMatrix<f64>) -> DMatrix<f64> {
        let g = q.tr_mul(q);
        q * g.try_inverse().unwrap() * q.transpose()
    }

    #[test]
    fn q_weight_formulas() {
        let t = Scheme::Tikhonov { alpha: 1.0 };
        assert_eq!(q_weight(&t, 1.0, 1).unwrap(), 0.5);
        let lf = Scheme::LandweberFridman { iterations: 2, c: 0.5 };
        assert_eq!(q_weight(&lf, 1.0, 1).unwrap(), 0.75);
        let pc = Scheme::PrincipalComponents { components: 2 };
        assert_eq!(q_weight(&pc, 0.3, 3).unwrap(), 0.0);
        assert_eq!(q_weight(&pc, 0.3, 2).unwrap(), 1.0);
        let bad = Scheme::LandweberFridman { iterations: 2, c: 1.0 };
        assert!(q_weight(&bad, 1.0, 1).is_err());
    }

    #[test]
    fn both_routes_agree() {
        // 6 columns, n = 40 takes the small route; n = 20 the large one.
        for n in [40, 20] {
            let q = random_q(n, 6, n as u64);
            let s = Spectrum::new(&q).unwrap();
            assert_eq!(s.rank(), 6);
            let psi = s.eigenvectors();
            assert!(max_abs_diff(&psi.tr_mul(psi), &DMatrix::identity(6, 6)) < 1e-8);
            let recon = psi * DMatrix::from_diagonal(&DVector::from_column_slice(s.eigenvalues())) * psi.transpose();
            let g = &q * q.transpose() / n as f64;
            assert!(max_abs_diff(&recon, &g) < 1e-8 * s.largest());
        }
    }

    #[test]
    fn pc_full_is_ols_projection() {
        let q = random_q(30, 5, 1);
        let s = Spectrum::new(&q).unwrap();
        let p = s.projector(&Scheme::PrincipalComponents { components: 30 }).unwrap();
        assert!(max_abs_diff(&p.to_dense(), &ols_projector(&q)) < 1e-10);
    }

    #[test]
    fn heavy_tikhonov_vanishes() {
        let q = random_q(30, 5, 2);
        let s = Spectrum::new(&q).unwrap();
        let p = s.projector(&Scheme::Tikhonov { alpha: 1e12 }).unwrap();
        let e = DVector::from_fn(30, |i, _| (i as f64).sin());
        assert!(p.apply(&e).norm() < 1e-6 * e.norm());
    }

    #[test]
    fn tikhonov_dual_formula() {
        let n = 25;
        let q = random_q(n, 6, 3);
        let s = Spectrum::new(&q).unwrap();
        let alpha = 0.1;
        let p = s.projector(&Scheme::Tikhonov { alpha }).unwrap();
        let k = q.tr_mul(&q) / n as f64;
        let inner = (&k * &k + DMatrix::identity(6, 6) * alpha).try_inverse().unwrap() * &k;
        let e = DVector::from_fn(n, |i, _| (i as f64 * 0.7).cos());
        let oracle = &q * (&inner * q.tr_mul(&e)) / n as f64;
        assert!((p.apply(&e) - oracle).amax() < 1e-8);
    }

    #[test]
    fn traces_match_dense() {
        let q = random_q(20, 8, 4);
        let s = Spectrum::new(&q).unwrap();
        for scheme in [
            Scheme::Tikhonov { alpha: 0.05 },
            Scheme::LandweberFridman { iterations: 7, c: s.default_lf_step() },
            Scheme::PrincipalComponents { components: 4 },
        ] {
            let p = s.projector(&scheme).unwrap();
            let d = p.to_dense();
            let (t1, t2) = p.traces();
            assert!((t1 - d.trace()).abs() < 1e-8);
            assert!((t2 - (&d * &d).trace()).abs() < 1e-8);
            assert!(t2 <= t1 + 1e-12);
            assert!((p.diagonal() - d.diagonal()).amax() < 1e-12);
        }
        let pc = s.projector(&Scheme::PrincipalComponents { components: 4 }).unwrap();
        assert_eq!(pc.traces(), (4.0, 4.0));
    }

    #[test]
    fn lf_limit_is_pc_full() {
        let q = random_q(30, 4, 5);
        let s = Spectrum::new(&q).unwrap();
        let lf = s
            .projector(&Scheme::LandweberFridman { iterations: 2_000_000, c: s.default_lf_step() })
            .unwrap();
        let pc = s.projector(&Scheme::PrincipalComponents { components: 30 }).unwrap();
        assert!(max_abs_diff(&lf.to_dense(), &pc.to_dense()) < 1e-8);
    }

    #[test]
    fn scheme_violations() {
        let s = Spectrum::new(&random_q(10, 3, 6)).unwrap();
        assert!(s.projector(&Scheme::PrincipalComponents { components: 0 }).is_err());
        assert!(s.projector(&Scheme::PrincipalComponents { components: 11 }).is_err());
        assert!(s.projector(&Scheme::Tikhonov { alpha: 0.0 }).is_err());
        let c = 1.0 / (s.largest() * s.largest());
        assert!(s.projector(&Scheme::LandweberFridman { iterations: 3, c }).is_err());
        assert!(Spectrum::new(&DMatrix::zeros(5, 2)).is_err());
    }

    proptest! {
        #[test]
        fn projector_properties(seed in 0u64..10_000, alpha in 1e-6f64..10.0, iters in 1u32..500, comps in 1usize..7) {
            let q = random_q(24, 6, seed);
            let s = Spectrum::new(&q).unwrap();
            let psi = s.eigenvectors().clone();
            let schemes = [
                Scheme::Tikhonov { alpha },
                Scheme::LandweberFridman { iterations: iters, c: s.default_lf_step() },
                Scheme::PrincipalComponents { components: comps },
            ];
            for scheme in schemes {
                let p = s.projector(&scheme).unwrap();
                let d = p.to_dense();
                prop_assert!(max_abs_diff(&d, &d.transpose()) < 1e-12);
                for (k, qk) in p.weights().iter().enumerate() {
                    prop_assert!((0.0..=1.0).contains(qk));
                    let v = psi.column(k).into_owned();
                    let rq = v.dot(&(&d * &v));
                    prop_assert!((rq - qk).abs() < 1e-10);
                }
            }
            let pc = s.projector(&Scheme::PrincipalComponents { components: comps }).unwrap().to_dense();
            prop_assert!(max_abs_diff(&(&pc * &pc), &pc) < 1e-8);

            let t1 = s.projector(&Scheme::Tikhonov { alpha }).unwrap();
            let t2 = s.projector(&Scheme::Tikhonov { alpha: alpha / 2.0 }).unwrap();
            for (a, b) in t1.weights().iter().zip(t2.weights()) {
                prop_assert!(b > a);
                prop_assert!(*a < 1.0);
            }
            let c = s.default_lf_step();
            let l1 = s.projector(&Scheme::LandweberFridman { iterations: iters, c }).unwrap();
            let l2 = s.projector(&Scheme::LandweberFridman { iterations: iters + 1, c }).unwrap();
            for (a, b) in l1.weights().iter().zip(l2.weights()) {
                prop_assert!(b >= a);
            }
        }
    }
}
