//! Data-driven choice of the regularization parameter.
//!
//! For each candidate α the selector evaluates
//!
//! `Ŝ(α) = σ̂²[ϖ̂(α) − σ̂²_v tr(P²)/n + σ̂² (tr P)²/n · (e₁′γ̄)² · ‖D̃ι‖²/n]`
//!
//! where `ϖ̂` is a goodness-of-fit criterion (Mallows Cp, GCV or leave-one-out)
//! for the first-stage residual `v̂ = (I − P^α)JR̃Z H̃⁻¹γ̄`, and keeps the
//! minimizer.

use std::fmt;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimation::Model;
use crate::linalg::{solve_spd, BlockDiagonal};
use crate::regularization::{q_weight, Scheme, SchemeKind, Spectrum};
use crate::transforms::{r_matrix, s_matrix};

/// Relative gap below which two Ŝ values count as tied.
const TIE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Criterion {
    MallowsCp,
    Gcv,
    LeaveOneOut,
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Criterion::MallowsCp => "cp",
            Criterion::Gcv => "gcv",
            Criterion::LeaveOneOut => "loo",
        })
    }
}

impl std::str::FromStr for Criterion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cp" | "mallows" => Ok(Criterion::MallowsCp),
            "gcv" => Ok(Criterion::Gcv),
            "loo" | "cv" => Ok(Criterion::LeaveOneOut),
            other => Err(Error::InvalidArgument(format!("unknown criterion {other}"))),
        }
    }
}

/// Grid of scheme parameters: α for Tikhonov, iteration or component counts
/// otherwise. Sorted ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub kind: SchemeKind,
    pub values: Vec<f64>,
}

impl Grid {
    pub fn new(kind: SchemeKind, mut values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidArgument("selection grid is empty".into()));
        }
        if values.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return Err(Error::InvalidArgument("grid values must be positive and finite".into()));
        }
        if kind != SchemeKind::Tikhonov && values.iter().any(|v| v.fract() != 0.0) {
            return Err(Error::InvalidArgument(format!("{kind} grid values must be integers")));
        }
        values.sort_by(f64::total_cmp);
        values.dedup();
        Ok(Self { kind, values })
    }

    /// 40 log-spaced points on [1e−8, 1].
    pub fn default_tikhonov() -> Self {
        let values = (0..40).map(|i| 10f64.powf(-8.0 + 8.0 * i as f64 / 39.0)).collect();
        Self { kind: SchemeKind::Tikhonov, values }
    }

    /// Iteration counts 1, 2, 4, …, 2¹⁴.
    pub fn default_landweber() -> Self {
        let values = (0..15).map(|p| (1u32 << p) as f64).collect();
        Self { kind: SchemeKind::LandweberFridman, values }
    }

    /// Component counts from `k + 1` (one per coefficient) up to the rank.
    pub fn default_pc(rank: usize, coefficients: usize) -> Self {
        let start = coefficients.min(rank).max(1);
        let values = (start..=rank.max(start)).map(|c| c as f64).collect();
        Self { kind: SchemeKind::PrincipalComponents, values }
    }

    pub fn default_for(kind: SchemeKind, rank: usize, coefficients: usize) -> Self {
        match kind {
            SchemeKind::Tikhonov => Self::default_tikhonov(),
            SchemeKind::LandweberFridman => Self::default_landweber(),
            SchemeKind::PrincipalComponents => Self::default_pc(rank, coefficients),
        }
    }

    /// True when moving right along the grid weakens regularization.
    fn weaker_to_the_right(&self) -> bool {
        self.kind != SchemeKind::Tikhonov
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionConfig {
    pub criterion: Criterion,
    /// Direction γ̄ of length k + 1; defaults to e₁ (the λ direction).
    pub gamma_bar: DVector<f64>,
}

impl SelectionConfig {
    pub fn new(criterion: Criterion, gamma_bar: DVector<f64>) -> Result<Self> {
        if gamma_bar.iter().all(|v| *v == 0.0) || gamma_bar.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("gamma_bar must be finite and nonzero".into()));
        }
        Ok(Self { criterion, gamma_bar })
    }

    pub fn lambda_direction(criterion: Criterion, dim: usize) -> Self {
        let mut g = DVector::zeros(dim);
        g[0] = 1.0;
        Self { criterion, gamma_bar: g }
    }
}

/// Quantities shared by every grid point.
#[derive(Debug, Clone)]
pub struct SelectionContext<'s> {
    spectrum: &'s Spectrum,
    /// JR̃Z H̃⁻¹γ̄.
    target: DVector<f64>,
    /// Ψ′ target.
    coef: DVector<f64>,
    /// σ̂² from the preliminary fit.
    pub sigma2: f64,
    /// σ̂²_v from the unregularized first stage.
    pub sigma2_v: f64,
    /// e₁′γ̄.
    pub gamma1: f64,
    /// ‖D̃ι‖²/n.
    pub d_iota: f64,
    pub criterion: Criterion,
}

impl<'s> SelectionContext<'s> {
    /// Builds the plug-ins from a preliminary fit `(δ̃, ρ̃)`.
    ///
    /// `H̃` and `ṽ` use the unregularized projection on the retained spectrum;
    /// `D̃ = JR̃WS̃⁻¹R̃⁻¹` uses `λ̃ = δ̃₁`.
    pub fn new(
        model: &Model<'_>,
        spectrum: &'s Spectrum,
        rho: f64,
        delta_tilde: &DVector<f64>,
        config: &SelectionConfig,
    ) -> Result<Self> {
        let n = model.n();
        if spectrum.n() != n {
            return Err(Error::DimensionMismatch("instruments do not match the sample".into()));
        }
        if config.gamma_bar.len() != model.dim() || delta_tilde.len() != model.dim() {
            return Err(Error::DimensionMismatch(format!(
                "gamma_bar and delta need {} entries",
                model.dim()
            )));
        }
        let nf = n as f64;
        let (rz, _) = model.transformed(rho);
        let a = model.j.mul_mat(&rz);
        let ca = spectrum.coefficients(&a);
        let h = ca.tr_mul(&ca) / nf;
        let (w, _) = solve_spd(
            &h,
            &DMatrix::from_columns(std::slice::from_ref(&config.gamma_bar)),
            "first-stage matrix",
            1e14,
        )?;
        let target = &a * w.column(0);
        let coef = spectrum.eigenvectors().tr_mul(&target);
        let v_full = &target - spectrum.eigenvectors() * &coef;
        let sigma2_v = v_full.norm_squared() / nf;
        let sigma2 = model.sigma2(delta_tilde, rho);
        let d_iota = d_iota(model, &model.j, rho, delta_tilde[0])?;
        Ok(Self {
            spectrum,
            target,
            coef,
            sigma2,
            sigma2_v,
            gamma1: config.gamma_bar[0],
            d_iota,
            criterion: config.criterion,
        })
    }

    /// Context from explicit plug-in values.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        spectrum: &'s Spectrum,
        target: DVector<f64>,
        sigma2: f64,
        sigma2_v: f64,
        gamma1: f64,
        d_iota: f64,
        criterion: Criterion,
    ) -> Result<Self> {
        if target.len() != spectrum.n() {
            return Err(Error::DimensionMismatch("target does not match the spectrum".into()));
        }
        let coef = spectrum.eigenvectors().tr_mul(&target);
        Ok(Self {
            spectrum,
            target,
            coef,
            sigma2,
            sigma2_v,
            gamma1,
            d_iota,
            criterion,
        })
    }

    pub fn spectrum(&self) -> &Spectrum {
        self.spectrum
    }

    pub fn target(&self) -> &DVector<f64> {
        &self.target
    }

    fn weights(&self, scheme: &Scheme) -> Result<Vec<f64>> {
        scheme.validate(self.spectrum)?;
        self.spectrum
            .eigenvalues()
            .iter()
            .enumerate()
            .map(|(k, &nu)| q_weight(scheme, nu, k + 1))
            .collect()
    }

    fn residual(&self, q: &[f64]) -> DVector<f64> {
        let scaled = DVector::from_iterator(q.len(), self.coef.iter().zip(q).map(|(c, q)| c * q));
        &self.target - self.spectrum.eigenvectors() * scaled
    }

    /// First-stage residual `v̂ = (I − P^α)·target`.
    pub fn v_hat(&self, scheme: &Scheme) -> Result<DVector<f64>> {
        Ok(self.residual(&self.weights(scheme)?))
    }

    /// Goodness-of-fit criterion ϖ̂(α).
    pub fn criterion_value(&self, scheme: &Scheme) -> Result<f64> {
        let q = self.weights(scheme)?;
        self.criterion_from_weights(&q)
    }

    fn criterion_from_weights(&self, q: &[f64]) -> Result<f64> {
        let n = self.spectrum.n() as f64;
        let v = self.residual(q);
        let rss = v.norm_squared() / n;
        let tr: f64 = q.iter().sum();
        match self.criterion {
            Criterion::MallowsCp => Ok(rss + 2.0 * self.sigma2_v * tr / n),
            Criterion::Gcv => {
                if tr >= n {
                    return Err(Error::InvalidArgument(format!(
                        "GCV needs tr(P) < n, got {tr} with n = {n}"
                    )));
                }
                Ok(rss / (1.0 - tr / n).powi(2))
            }
            Criterion::LeaveOneOut => {
                let psi = self.spectrum.eigenvectors();
                let mut total = 0.0;
                for i in 0..psi.nrows() {
                    let pii: f64 = psi.row(i).iter().zip(q).map(|(p, qk)| qk * p * p).sum();
                    total += (v[i] / (1.0 - pii)).powi(2);
                }
                Ok(total / n)
            }
        }
    }

    /// Ŝ(α) together with the criterion value.
    pub fn s_hat(&self, scheme: &Scheme) -> Result<(f64, f64)> {
        let q = self.weights(scheme)?;
        let crit = self.criterion_from_weights(&q)?;
        let n = self.spectrum.n() as f64;
        let tr: f64 = q.iter().sum();
        let tr2: f64 = q.iter().map(|v| v * v).sum();
        let s = self.sigma2
            * (crit - self.sigma2_v * tr2 / n
                + self.sigma2 * tr * tr / n * self.gamma1 * self.gamma1 * self.d_iota);
        Ok((crit, s))
    }

    /// Leave-one-out criterion by literally refitting without each row of `q`.
    ///
    /// The fitted coefficient on the remaining rows is
    /// `Φ diag(q_j/ν_j) Φ′ Q′y/(n−1)` from the eigenpairs of `Q′Q/(n−1)`.
    /// Matches the linear-smoother identity exactly for unregularized
    /// projections.
    pub fn loo_literal(&self, q: &DMatrix<f64>, scheme: &Scheme) -> Result<f64> {
        let n = q.nrows();
        if n != self.spectrum.n() {
            return Err(Error::DimensionMismatch("instrument matrix does not match".into()));
        }
        let mut total = 0.0;
        for i in 0..n {
            let keep: Vec<usize> = (0..n).filter(|&r| r != i).collect();
            let qi = q.select_rows(&keep);
            let yi = self.target.select_rows(&keep);
            let nf = (n - 1) as f64;
            let eig = (qi.tr_mul(&qi) / nf).symmetric_eigen();
            let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
            order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
            let top = eig.eigenvalues[order[0]];
            let qty = qi.tr_mul(&yi) / nf;
            let mut b = DVector::zeros(q.ncols());
            let spectrum_i = Spectrum::new(&qi)?;
            let scheme_i = match *scheme {
                Scheme::PrincipalComponents { components } => Scheme::PrincipalComponents {
                    components: components.min(n - 1),
                },
                other => other,
            };
            scheme_i.validate(&spectrum_i)?;
            for (rank, &k) in order.iter().enumerate() {
                let nu = eig.eigenvalues[k];
                if nu <= crate::regularization::EIGEN_CUTOFF * top {
                    continue;
                }
                let w = q_weight(&scheme_i, nu, rank + 1)?;
                let phi = eig.eigenvectors.column(k);
                b += phi * (phi.dot(&qty) * w / nu);
            }
            let pred = q.row(i).transpose().dot(&b);
            total += (self.target[i] - pred).powi(2);
        }
        Ok(total / n as f64)
    }
}

/// ‖JR̃WS̃⁻¹R̃⁻¹ι‖²/n with ι the vector of ones.
pub fn d_iota(model: &Model<'_>, j: &BlockDiagonal, rho: f64, lambda: f64) -> Result<f64> {
    let net = model.network;
    let r = r_matrix(rho, net.m());
    let ones = DVector::from_element(model.n(), 1.0);
    let x = r.lu("R(rho)")?.solve_vec(&ones);
    let x = s_matrix(lambda, net.w()).lu("S(lambda)")?.solve_vec(&x);
    let d = j.mul_vec(&r.mul_vec(&net.w().mul_vec(&x)));
    Ok(d.norm_squared() / model.n() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub parameter: f64,
    pub alpha: f64,
    pub criterion: f64,
    pub s_hat: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub scheme: Scheme,
    pub curve: Vec<CurvePoint>,
}

impl Selection {
    pub fn alpha(&self) -> f64 {
        self.scheme.alpha()
    }
}

/// Minimizes Ŝ over `grid`. Ties go to the stronger regularization.
pub fn select_alpha(ctx: &SelectionContext<'_>, grid: &Grid) -> Result<Selection> {
    let lf_step = ctx.spectrum.default_lf_step();
    let curve: Vec<CurvePoint> = grid
        .values
        .par_iter()
        .map(|&p| {
            let point = Scheme::from_parameter(grid.kind, p, lf_step)
                .and_then(|scheme| ctx.s_hat(&scheme).map(|v| (scheme, v)));
            match point {
                Ok((scheme, (crit, s))) => CurvePoint {
                    parameter: p,
                    alpha: scheme.alpha(),
                    criterion: crit,
                    s_hat: s,
                },
                Err(e) => {
                    log::debug!("grid point {p} skipped: {e}");
                    CurvePoint {
                        parameter: p,
                        alpha: f64::NAN,
                        criterion: f64::NAN,
                        s_hat: f64::NAN,
                    }
                }
            }
        })
        .collect();
    let best = argmin_with_ties(&curve, grid.weaker_to_the_right()).ok_or(Error::NoFiniteCriterion)?;
    let scheme = Scheme::from_parameter(grid.kind, curve[best].parameter, lf_step)?;
    Ok(Selection { scheme, curve })
}

fn argmin_with_ties(curve: &[CurvePoint], weaker_to_the_right: bool) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, p) in curve.iter().enumerate() {
        if !p.s_hat.is_finite() {
            continue;
        }
        match best {
            None => best = Some(i),
            Some(b) => {
                let cur = curve[b].s_hat;
                let tie = (p.s_hat - cur).abs() <= TIE_TOL * cur.abs().max(p.s_hat.abs());
                // Scanning left to right: on a tie keep the earlier point when
                // regularization weakens to the right.
                if (!tie && p.s_hat < cur) || (tie && !weaker_to_the_right) {
                    best = Some(i);
                }
            }
        }
    }
    best
}

/// Writes the curve as CSV with header `parameter,alpha,criterion,s_hat`.
pub fn write_curve<W: Write>(out: W, curve: &[CurvePoint]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(["parameter", "alpha", "criterion", "s_hat"])?;
    for p in curve {
        wtr.write_record([
            crate::fmt_num(p.parameter),
            crate::fmt_num(p.alpha),
            crate::fmt_num(p.criterion),
            crate::fmt_num(p.s_hat),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}
