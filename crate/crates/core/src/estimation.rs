//! Two-stage least squares estimators for the network model.
//!
//! All estimators work on the Cochrane-Orcutt transformed system
//! `R̃Y = R̃Zδ + error` with `Z = (WY, X)` and `R̃ = I − ρ̃M`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::graphs::GroupedNetwork;
use crate::linalg::{solve_spd, BlockDiagonal};
use crate::regularization::{RegularizedProjector, Scheme};
use crate::transforms::{j_projector, r_matrix, s_matrix, PanelData};

/// Normal-equations systems with a larger condition number are rejected.
pub const MAX_CONDITION: f64 = 1e14;
/// Search interval for ρ̃.
pub const RHO_BOUND: f64 = 0.99;
const RHO_GRID_STEP: f64 = 0.01;
const RHO_TOL: f64 = 1e-6;
/// Projectors with a smaller trace are treated as zero.
pub const MIN_TRACE: f64 = 1e-10;

/// Data, network and the quantities every estimator needs.
#[derive(Debug, Clone)]
pub struct Model<'a> {
    pub network: &'a GroupedNetwork,
    pub data: &'a PanelData,
    pub j: BlockDiagonal,
    pub z: DMatrix<f64>,
}

impl<'a> Model<'a> {
    pub fn new(network: &'a GroupedNetwork, data: &'a PanelData) -> Result<Self> {
        if data.n() != network.n() {
            return Err(Error::DimensionMismatch(format!(
                "data has {} rows, network has {} nodes",
                data.n(),
                network.n()
            )));
        }
        Ok(Self {
            network,
            data,
            j: j_projector(network.m()),
            z: data.z(network),
        })
    }

    pub fn n(&self) -> usize {
        self.data.n()
    }

    /// Number of coefficients, k + 1.
    pub fn dim(&self) -> usize {
        self.z.ncols()
    }

    /// (R̃Z, R̃Y).
    pub fn transformed(&self, rho: f64) -> (DMatrix<f64>, DVector<f64>) {
        let r = r_matrix(rho, self.network.m());
        (r.mul_mat(&self.z), r.mul_vec(&self.data.y))
    }

    /// JR̃(Y − Zδ).
    pub fn residual(&self, delta: &DVector<f64>, rho: f64) -> DVector<f64> {
        let u = &self.data.y - &self.z * delta;
        let ru = r_matrix(rho, self.network.m()).mul_vec(&u);
        self.j.mul_vec(&ru)
    }

    /// ε̂′ε̂ / n.
    pub fn sigma2(&self, delta: &DVector<f64>, rho: f64) -> f64 {
        self.residual(delta, rho).norm_squared() / self.n() as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimationResult {
    /// (λ̂, β̂₁, β̂₂).
    pub delta: DVector<f64>,
    pub rho_tilde: f64,
    pub sigma2_hat: f64,
    /// `None` for the unregularized estimators.
    pub scheme: Option<Scheme>,
    /// Standard errors from `σ̂²H⁻¹`. They ignore the effect of regularization
    /// and of parameter selection.
    pub std_errors: DVector<f64>,
    pub trace_p: f64,
    /// Condition number of `H = Z′R̃′PR̃Z`.
    pub h_condition: f64,
    /// Ratio of extreme nonzero eigenvalues of `QQ′`.
    pub instrument_condition: f64,
}

impl EstimationResult {
    pub fn lambda(&self) -> f64 {
        self.delta[0]
    }

    pub fn alpha(&self) -> f64 {
        self.scheme.map(|s| s.alpha()).unwrap_or(f64::NAN)
    }
}

/// Orthonormal basis of col(Q), singular values above `1e−10·σ_max`.
pub fn column_basis(q: &DMatrix<f64>) -> Result<(DMatrix<f64>, f64)> {
    if q.ncols() == 0 {
        return Err(Error::DegenerateProjector("no instruments".into()));
    }
    let svd = q.clone().svd(true, false);
    let u = svd.u.expect("requested U");
    let top = svd.singular_values.max();
    if !(top > 0.0) {
        return Err(Error::DegenerateProjector("instrument matrix is zero".into()));
    }
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&k| svd.singular_values[k] > 1e-10 * top)
        .collect();
    let low = keep.iter().map(|&k| svd.singular_values[k]).fold(f64::INFINITY, f64::min);
    let cols: Vec<_> = keep.iter().map(|&k| u.column(k).into_owned()).collect();
    Ok((DMatrix::from_columns(&cols), (top / low).powi(2)))
}

struct Solved {
    delta: DVector<f64>,
    h_inv: DMatrix<f64>,
    condition: f64,
}

fn solve_normal(h: DMatrix<f64>, rhs: &DVector<f64>) -> Result<Solved> {
    let k = h.nrows();
    let mut both = DMatrix::zeros(k, k + 1);
    both.columns_mut(0, k).fill_with_identity();
    both.set_column(k, rhs);
    let (sol, condition) = solve_spd(&h, &both, "normal-equations matrix", MAX_CONDITION)?;
    Ok(Solved {
        delta: sol.column(k).into_owned(),
        h_inv: sol.columns(0, k).into_owned(),
        condition,
    })
}

fn finish(
    model: &Model<'_>,
    solved: &Solved,
    rho: f64,
    scheme: Option<Scheme>,
    trace_p: f64,
    instrument_condition: f64,
) -> EstimationResult {
    let sigma2_hat = model.sigma2(&solved.delta, rho);
    let std_errors = solved.h_inv.diagonal().map(|v| (sigma2_hat * v).max(0.0).sqrt());
    EstimationResult {
        delta: solved.delta.clone(),
        rho_tilde: rho,
        sigma2_hat,
        scheme,
        std_errors,
        trace_p,
        h_condition: solved.condition,
        instrument_condition,
    }
}

/// Classical 2SLS with the orthogonal projection on col(Q) after the R̃ transform.
pub fn classical_2sls(model: &Model<'_>, q: &DMatrix<f64>, rho: f64) -> Result<EstimationResult> {
    if q.nrows() != model.n() {
        return Err(Error::DimensionMismatch("instruments do not match the sample".into()));
    }
    let (basis, inst_cond) = column_basis(q)?;
    let (a, b) = model.transformed(rho);
    let ua = basis.tr_mul(&a);
    let ub = basis.tr_mul(&b);
    let solved = solve_normal(ua.tr_mul(&ua), &ua.tr_mul(&ub))?;
    Ok(finish(model, &solved, rho, None, basis.ncols() as f64, inst_cond))
}

/// Classical IV with a small fixed instrument set and no error transform.
pub fn preliminary_delta(model: &Model<'_>, q1: &DMatrix<f64>) -> Result<DVector<f64>> {
    Ok(classical_2sls(model, q1, 0.0)?.delta)
}

/// Regularized 2SLS: `(Z′R̃′P^αR̃Z)⁻¹Z′R̃′P^αR̃Y`.
pub fn regularized_2sls(
    model: &Model<'_>,
    projector: &RegularizedProjector<'_>,
    rho: f64,
) -> Result<EstimationResult> {
    let spectrum = projector.spectrum();
    if spectrum.n() != model.n() {
        return Err(Error::DimensionMismatch("instruments do not match the sample".into()));
    }
    let (a, b) = model.transformed(rho);
    let ca = spectrum.coefficients(&a);
    let cb = spectrum.coefficients(&DMatrix::from_columns(&[b]));
    let h = projector.quadratic_form(&ca, &ca);
    let rhs = projector.quadratic_form(&ca, &cb).column(0).into_owned();
    let (trace_p, _) = projector.traces();
    if !(trace_p >= MIN_TRACE) {
        return Err(Error::DegenerateProjector("regularized projector is numerically zero".into()));
    }
    let solved = solve_normal(h, &rhs)?;
    Ok(finish(
        model,
        &solved,
        rho,
        Some(*projector.scheme()),
        trace_p,
        spectrum.condition_number(),
    ))
}

/// `tr(P^α R̃WS⁻¹R̃⁻¹)` with `S = I − λW`, computed as `Σ q_j ψ_j′Bψ_j`.
pub fn bias_trace(
    network: &GroupedNetwork,
    projector: &RegularizedProjector<'_>,
    rho: f64,
    lambda: f64,
) -> Result<f64> {
    let r = r_matrix(rho, network.m());
    let r_lu = r.lu("R(rho)")?;
    let s_lu = s_matrix(lambda, network.w()).lu("S(lambda)")?;
    let psi = projector.spectrum().eigenvectors();
    let mut total = 0.0;
    for (k, &q) in projector.weights().iter().enumerate() {
        if q == 0.0 {
            continue;
        }
        let v = psi.column(k).into_owned();
        let bv = r.mul_vec(&network.w().mul_vec(&s_lu.solve_vec(&r_lu.solve_vec(&v))));
        total += q * v.dot(&bv);
    }
    Ok(total)
}

/// Many-instrument 2SLS with the plug-in bias correction
/// `δ̂ − σ̃² tr(P R̃WS̃⁻¹R̃⁻¹) H⁻¹e₁`.
///
/// By default `λ̃` is the uncorrected estimate and `σ̃²` its residual sum of
/// squares over `tr(J)`; `lambda_tilde` overrides the former.
pub fn bias_corrected_2sls(
    model: &Model<'_>,
    projector: &RegularizedProjector<'_>,
    rho: f64,
    lambda_tilde: Option<f64>,
) -> Result<EstimationResult> {
    let (trace_p, _) = projector.traces();
    if !(trace_p >= MIN_TRACE) {
        return Err(Error::DegenerateProjector(
            "bias correction is undefined for a numerically zero projector".into(),
        ));
    }
    let base = regularized_2sls(model, projector, rho)?;
    let lambda = lambda_tilde.unwrap_or(base.delta[0]);
    let dof = model.j.trace();
    let sigma2_tilde = model.residual(&base.delta, rho).norm_squared() / dof;
    let tr = bias_trace(model.network, projector, rho, lambda)?;

    let (a, _) = model.transformed(rho);
    let ca = projector.spectrum().coefficients(&a);
    let h = projector.quadratic_form(&ca, &ca);
    let mut e1 = DVector::zeros(model.dim());
    e1[0] = 1.0;
    let solved = solve_normal(h, &e1)?;
    let bias = &solved.delta * (sigma2_tilde * tr);
    let delta = &base.delta - bias;
    let sigma2_hat = model.sigma2(&delta, rho);
    Ok(EstimationResult {
        std_errors: solved.h_inv.diagonal().map(|v| (sigma2_hat * v).max(0.0).sqrt()),
        delta,
        sigma2_hat,
        ..base
    })
}

/// Preliminary ρ̃ and whether the moment objective was flat.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RhoEstimate {
    pub rho: f64,
    pub degenerate: bool,
}

/// Quadratic-moment objective in ρ: `Σ_k g_k(ρ)²` with
/// `g_k(ρ) = ε(ρ)′M_kε(ρ)` and `ε(ρ) = J(e − ρMe)`.
#[derive(Debug, Clone)]
pub struct RhoObjective {
    /// Coefficients of `g_k(ρ) = c0 + c1ρ + c2ρ²`.
    pub coefs: Vec<[f64; 3]>,
}

impl RhoObjective {
    /// Builds the three moments `M₁ = JWJ − tr(JWJ)I/tr(J)`, `M₂` with `M`
    /// and `M₃` with `MW`, from residuals `e = Y − Zδ̃`.
    pub fn new(network: &GroupedNetwork, j: &BlockDiagonal, e: &DVector<f64>) -> Result<Self> {
        let w = network.w();
        let m = network.m();
        let mw = m.mul(w)?;
        let a = j.mul_vec(e);
        let b = j.mul_vec(&m.mul_vec(e));
        let tr_j = j.trace();
        if tr_j <= 0.0 {
            return Err(Error::DegenerateProjector("J has zero trace".into()));
        }
        let mut coefs = Vec::with_capacity(3);
        for op in [w, m, &mw] {
            let jaj = j.mul(op)?.mul(j)?;
            let shift = jaj.trace() / tr_j;
            let quad = |x: &DVector<f64>, y: &DVector<f64>| x.dot(&jaj.mul_vec(y)) - shift * x.dot(y);
            let c0 = quad(&a, &a);
            let c1 = -(quad(&a, &b) + quad(&b, &a));
            let c2 = quad(&b, &b);
            coefs.push([c0, c1, c2]);
        }
        Ok(Self { coefs })
    }

    pub fn value(&self, rho: f64) -> f64 {
        self.coefs
            .iter()
            .map(|c| {
                let g = c[0] + rho * (c[1] + rho * c[2]);
                g * g
            })
            .sum()
    }

    fn is_flat(&self) -> bool {
        self.coefs.iter().flatten().all(|c| c.abs() < 1e-300)
    }
}

/// Method-of-moments ρ̃: grid search on [−0.99, 0.99] in steps of 0.01, then
/// golden-section refinement around the best grid point.
pub fn preliminary_rho(model: &Model<'_>, delta_tilde: &DVector<f64>) -> Result<RhoEstimate> {
    let e = &model.data.y - &model.z * delta_tilde;
    let obj = RhoObjective::new(model.network, &model.j, &e)?;
    Ok(minimize_rho(&obj))
}

pub fn minimize_rho(obj: &RhoObjective) -> RhoEstimate {
    if obj.is_flat() {
        log::warn!("flat moment objective for rho; returning 0");
        return RhoEstimate { rho: 0.0, degenerate: true };
    }
    let steps = (2.0 * RHO_BOUND / RHO_GRID_STEP).round() as i64;
    let grid: Vec<f64> = (0..=steps)
        .map(|i| -RHO_BOUND + i as f64 * RHO_GRID_STEP)
        .collect();
    let vals: Vec<f64> = grid.iter().map(|&r| obj.value(r)).collect();
    let mut best = 0;
    for i in 1..grid.len() {
        let better = vals[i] < vals[best]
            || (vals[i] == vals[best] && grid[i].abs() < grid[best].abs());
        if better {
            best = i;
        }
    }
    if vals.iter().all(|v| *v == vals[0]) {
        log::warn!("flat moment objective for rho; returning 0");
        return RhoEstimate { rho: 0.0, degenerate: true };
    }
    let lo = grid[best.saturating_sub(1)];
    let hi = grid[(best + 1).min(grid.len() - 1)];
    let refined = golden_section(|r| obj.value(r), lo, hi, RHO_TOL);
    let rho = if obj.value(refined) <= vals[best] {
        refined
    } else {
        grid[best]
    };
    RhoEstimate { rho, degenerate: false }
}

/// Minimizer of a unimodal `f` on `[lo, hi]` to interval width `tol`.
pub fn golden_section<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - inv_phi * (hi - lo);
    let mut d = lo + inv_phi * (hi - lo);
    let mut fc = f(c);
    let mut fd = f(d);
    while hi - lo > tol {
        if fc <= fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - inv_phi * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + inv_phi * (hi - lo);
            fd = f(d);
        }
    }
    0.5 * (lo + hi)
}
