//! Model transforms: S(λ), R(ρ), the within projector J, structural and reduced forms.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::graphs::GroupedNetwork;
use crate::linalg::BlockDiagonal;

/// Relative residual of Mι on ι below which the two are treated as collinear.
pub const COLLINEARITY_TOL: f64 = 1e-8;
/// Singular-value cutoff (relative) for the generalized inverse inside J.
pub const PINV_CUTOFF: f64 = 1e-10;

/// Parameters of `Y = λWY + X₁β₁ + WX₂β₂ + ιγ + u`, `u = ρMu + ε`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub lambda: f64,
    pub beta1: DVector<f64>,
    pub beta2: DVector<f64>,
    pub rho: f64,
    pub gamma: DVector<f64>,
    pub sigma2: f64,
}

impl ModelParams {
    /// Validates against `network`: ‖λW‖∞ < 1, one γ per group, σ² ≥ 0.
    pub fn new(
        lambda: f64,
        beta1: DVector<f64>,
        beta2: DVector<f64>,
        rho: f64,
        gamma: DVector<f64>,
        sigma2: f64,
        network: &GroupedNetwork,
    ) -> Result<Self> {
        let norm = lambda.abs() * network.w().row_sum_norm();
        if !(norm < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "|lambda| * ||W||_inf = {norm} must be below 1"
            )));
        }
        if gamma.len() != network.group_count() {
            return Err(Error::DimensionMismatch(format!(
                "gamma has {} entries for {} groups",
                gamma.len(),
                network.group_count()
            )));
        }
        if !(sigma2 >= 0.0) {
            return Err(Error::InvalidArgument(format!("sigma2 = {sigma2} must be nonnegative")));
        }
        Ok(Self {
            lambda,
            beta1,
            beta2,
            rho,
            gamma,
            sigma2,
        })
    }

    /// (β₁, β₂) stacked.
    pub fn beta(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.beta1.len() + self.beta2.len(),
            self.beta1.iter().chain(self.beta2.iter()).copied(),
        )
    }

    /// δ = (λ, β₁, β₂).
    pub fn delta(&self) -> DVector<f64> {
        DVector::from_iterator(
            1 + self.beta1.len() + self.beta2.len(),
            std::iter::once(self.lambda)
                .chain(self.beta1.iter().copied())
                .chain(self.beta2.iter().copied()),
        )
    }
}

/// Outcome and regressors. `x` holds the assembled `(X₁, WX₂)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelData {
    pub y: DVector<f64>,
    pub x1: DMatrix<f64>,
    pub x2: DMatrix<f64>,
    pub x: DMatrix<f64>,
}

impl PanelData {
    pub fn new(
        y: DVector<f64>,
        x1: DMatrix<f64>,
        x2: DMatrix<f64>,
        network: &GroupedNetwork,
    ) -> Result<Self> {
        let n = network.n();
        if y.len() != n || x1.nrows() != n || x2.nrows() != n {
            return Err(Error::DimensionMismatch(format!(
                "data rows (y {}, x1 {}, x2 {}) must equal network order {n}",
                y.len(),
                x1.nrows(),
                x2.nrows()
            )));
        }
        let x = assemble_x(&x1, &x2, network);
        Ok(Self { y, x1, x2, x })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    /// Number of exogenous coefficients k = k₁ + k₂.
    pub fn k(&self) -> usize {
        self.x.ncols()
    }

    /// Z = (WY, X).
    pub fn z(&self, network: &GroupedNetwork) -> DMatrix<f64> {
        let wy = network.w().mul_vec(&self.y);
        let mut z = DMatrix::zeros(self.n(), 1 + self.k());
        z.set_column(0, &wy);
        z.columns_mut(1, self.k()).copy_from(&self.x);
        z
    }
}

/// (X₁, WX₂).
pub fn assemble_x(x1: &DMatrix<f64>, x2: &DMatrix<f64>, network: &GroupedNetwork) -> DMatrix<f64> {
    let wx2 = network.w().mul_mat(x2);
    let mut x = DMatrix::zeros(x1.nrows(), x1.ncols() + x2.ncols());
    x.columns_mut(0, x1.ncols()).copy_from(x1);
    x.columns_mut(x1.ncols(), x2.ncols()).copy_from(&wx2);
    x
}

/// S(λ) = I − λW.
pub fn s_matrix(lambda: f64, w: &BlockDiagonal) -> BlockDiagonal {
    w.identity_minus_scaled(lambda)
}

/// R(ρ) = I − ρM.
pub fn r_matrix(rho: f64, m: &BlockDiagonal) -> BlockDiagonal {
    m.identity_minus_scaled(rho)
}

/// Projector onto the orthogonal complement of span{ι, Mι} for one group.
pub fn j_block(m: &DMatrix<f64>) -> DMatrix<f64> {
    let size = m.nrows();
    let ones = DVector::from_element(size, 1.0);
    let mi = m * &ones;
    let mean = mi.sum() / size as f64;
    let resid = (&mi - &ones * mean).norm();
    let mi_norm = mi.norm();
    if mi_norm == 0.0 || resid <= COLLINEARITY_TOL * mi_norm {
        return DMatrix::identity(size, size) - DMatrix::from_element(size, size, 1.0 / size as f64);
    }
    let mut b = DMatrix::zeros(size, 2);
    b.set_column(0, &ones);
    b.set_column(1, &mi);
    let svd = b.svd(true, false);
    let u = svd.u.expect("requested U");
    let top = svd.singular_values.max();
    let mut j = DMatrix::identity(size, size);
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s > PINV_CUTOFF * top {
            let uk = u.column(k);
            j -= uk * uk.transpose();
        }
    }
    (&j + j.transpose()) * 0.5
}

/// Block-diagonal J built group by group from `M`.
pub fn j_projector(m: &BlockDiagonal) -> BlockDiagonal {
    m.map_blocks(j_block)
}

/// JR(ρ)(Y − λWY − Xβ); equals Jε at the true parameters.
pub fn structural_residual(
    params: &ModelParams,
    data: &PanelData,
    network: &GroupedNetwork,
    j: &BlockDiagonal,
) -> Result<DVector<f64>> {
    let beta = params.beta();
    if beta.len() != data.k() {
        return Err(Error::DimensionMismatch(format!(
            "beta has {} entries, X has {} columns",
            beta.len(),
            data.k()
        )));
    }
    if j.order() != data.n() {
        return Err(Error::DimensionMismatch("J does not match the sample size".into()));
    }
    let wy = network.w().mul_vec(&data.y);
    let u = &data.y - wy * params.lambda - &data.x * beta;
    let ru = r_matrix(params.rho, network.m()).mul_vec(&u);
    Ok(j.mul_vec(&ru))
}

/// Y = S⁻¹(Xβ + ιγ + R⁻¹ε), by block solves.
pub fn reduced_form(
    params: &ModelParams,
    x: &DMatrix<f64>,
    eps: &DVector<f64>,
    network: &GroupedNetwork,
) -> Result<DVector<f64>> {
    let n = network.n();
    let beta = params.beta();
    if x.nrows() != n || eps.len() != n || beta.len() != x.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "X is {}x{}, eps has {} entries, beta has {}, network order {n}",
            x.nrows(),
            x.ncols(),
            eps.len(),
            beta.len()
        )));
    }
    let r_lu = r_matrix(params.rho, network.m()).lu("R(rho)")?;
    let s_lu = s_matrix(params.lambda, network.w()).lu("S(lambda)")?;
    let u = r_lu.solve_vec(eps);
    let mut rhs = x * beta + u;
    for (r, &g) in params.gamma.iter().enumerate() {
        for i in network.w().range(r) {
            rhs[i] += g;
        }
    }
    Ok(s_lu.solve_vec(&rhs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphs::{generate_mc_network, row_normalize};
    use crate::linalg::max_abs_diff;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn fixture(seed: u64) -> (GroupedNetwork, ModelParams, PanelData, DVector<f64>) {
        let net = generate_mc_network(3, 4, 2, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 1);
        let n = net.n();
        let x1 = DMatrix::from_fn(n, 1, |_, _| rng.random::<f64>() - 0.5);
        let x2 = x1.clone();
        let params = ModelParams::new(
            0.3,
            DVector::from_vec(vec![0.7]),
            DVector::from_vec(vec![-0.4]),
            0.25,
            DVector::from_vec(vec![0.5, -1.0, 2.0]),
            1.0,
            &net,
        )
        .unwrap();
        let eps = DVector::from_fn(n, |_, _| rng.random::<f64>() - 0.5);
        let x = assemble_x(&x1, &x2, &net);
        let y = reduced_form(&params, &x, &eps, &net).unwrap();
        let data = PanelData::new(y, x1, x2, &net).unwrap();
        (net, params, data, eps)
    }

    #[test]
    fn s_and_r_by_substitution() {
        let w = BlockDiagonal::new(vec![DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0])]).unwrap();
        assert_eq!(s_matrix(0.0, &w).to_dense(), DMatrix::identity(2, 2));
        let s = s_matrix(0.1, &w).to_dense();
        assert_eq!(s, DMatrix::from_row_slice(2, 2, &[1.0, -0.1, -0.1, 1.0]));
        let ring = row_normalize(&DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 1.0, 1.0, 0.0, 1.0, 1.0, 1.0, 0.0])).unwrap();
        let m = BlockDiagonal::new(vec![ring.clone()]).unwrap();
        let r = r_matrix(0.1, &m).to_dense();
        assert!(max_abs_diff(&r, &(DMatrix::identity(3, 3) - ring * 0.1)) < 1e-16);
    }

    #[test]
    fn s_inverse_via_solve() {
        let net = generate_mc_network(2, 6, 3, 9).unwrap();
        let s = s_matrix(0.2, net.w());
        let inv = s.lu("S").unwrap().solve_mat(&DMatrix::identity(12, 12));
        assert!(max_abs_diff(&(&inv * s.to_dense()), &DMatrix::identity(12, 12)) < 1e-10);
    }

    #[test]
    fn r_recovers_innovations() {
        let (net, params, _, eps) = fixture(4);
        let u = r_matrix(params.rho, net.m()).lu("R").unwrap().solve_vec(&eps);
        let back = r_matrix(params.rho, net.m()).mul_vec(&u);
        assert!((back - eps).amax() < 1e-10);
    }

    #[test]
    fn j_falls_back_to_group_mean() {
        let m = row_normalize(&DMatrix::from_fn(4, 4, |i, j| if i == j { 0.0 } else { 1.0 })).unwrap();
        let j = j_block(&m);
        let expect = DMatrix::identity(4, 4) - DMatrix::from_element(4, 4, 0.25);
        assert!(max_abs_diff(&j, &expect) < 1e-15);
    }

    #[test]
    fn j_rank_with_zero_row() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut m = DMatrix::from_fn(6, 6, |i, j| if i == j { 0.0 } else { rng.random::<f64>() });
        m.row_mut(2).fill(0.0);
        let j = j_block(&m);
        // Rank oracle: count eigenvalues of J near 1.
        let eig = j.clone().symmetric_eigen();
        let rank = eig.eigenvalues.iter().filter(|v| **v > 0.5).count();
        assert_eq!(rank, 4);
        let ones = DVector::from_element(6, 1.0);
        assert!((&j * &ones).amax() < 1e-12);
        assert!((&j * (&m * &ones)).amax() < 1e-12);
    }

    #[test]
    fn structural_residual_zero_without_noise() {
        let (net, mut params, _, _) = fixture(6);
        params.sigma2 = 0.0;
        let n = net.n();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x1 = DMatrix::from_fn(n, 1, |_, _| rng.random::<f64>());
        let x = assemble_x(&x1, &x1, &net);
        let y = reduced_form(&params, &x, &DVector::zeros(n), &net).unwrap();
        let data = PanelData::new(y, x1.clone(), x1, &net).unwrap();
        let j = j_projector(net.m());
        let r = structural_residual(&params, &data, &net, &j).unwrap();
        assert!(r.amax() < 1e-10);
    }

    #[test]
    fn structural_residual_at_zero_params_is_jy() {
        let (net, params, data, _) = fixture(8);
        let zero = ModelParams {
            lambda: 0.0,
            beta1: DVector::zeros(1),
            beta2: DVector::zeros(1),
            rho: 0.0,
            ..params
        };
        let j = j_projector(net.m());
        let r = structural_residual(&zero, &data, &net, &j).unwrap();
        assert!((r - j.mul_vec(&data.y)).amax() < 1e-14);
    }

    #[test]
    fn structural_residual_matches_dense_expansion() {
        let (net, params, data, eps) = fixture(10);
        let n = net.n();
        let j = j_projector(net.m());
        let jd = j.to_dense();
        let wd = net.w().to_dense();
        let md = net.m().to_dense();
        let i = DMatrix::<f64>::identity(n, n);
        let rd = &i - &md * params.rho;
        let oracle = &jd * &rd * (&data.y - &wd * &data.y * params.lambda - &data.x * params.beta());
        let got = structural_residual(&params, &data, &net, &j).unwrap();
        assert!((got.clone() - oracle).amax() < 1e-10);
        assert!((got - &jd * eps).amax() < 1e-10);
    }

    #[test]
    fn reduced_form_without_network_terms() {
        let (net, params, data, eps) = fixture(12);
        let p = ModelParams {
            lambda: 0.0,
            rho: 0.0,
            ..params.clone()
        };
        let y = reduced_form(&p, &data.x, &eps, &net).unwrap();
        let mut expect = &data.x * p.beta() + &eps;
        for (idx, g) in net.membership().into_iter().enumerate() {
            expect[idx] += p.gamma[g];
        }
        assert!((y - expect).amax() < 1e-12);
    }

    #[test]
    fn reduced_form_round_trip() {
        let (net, params, data, eps) = fixture(14);
        let s = s_matrix(params.lambda, net.w());
        let r = r_matrix(params.rho, net.m());
        let mut u = s.mul_vec(&data.y) - &data.x * params.beta();
        for (idx, g) in net.membership().into_iter().enumerate() {
            u[idx] -= params.gamma[g];
        }
        assert!((r.mul_vec(&u) - eps).amax() < 1e-10);
    }

    #[test]
    fn gamma_shift_moves_group_means_of_sy() {
        let (net, params, data, eps) = fixture(16);
        let mut shifted = params.clone();
        shifted.gamma.add_scalar_mut(1.5);
        let y2 = reduced_form(&shifted, &data.x, &eps, &net).unwrap();
        let s = s_matrix(params.lambda, net.w());
        let d = s.mul_vec(&y2) - s.mul_vec(&data.y);
        assert!((d.add_scalar(-1.5)).amax() < 1e-10);
    }

    #[test]
    fn singular_r_is_named() {
        let w = BlockDiagonal::new(vec![DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0])]).unwrap();
        let net = GroupedNetwork::with_row_normalized_m(w).unwrap();
        let p = ModelParams::new(0.1, DVector::zeros(0), DVector::zeros(0), 1.0, DVector::zeros(1), 1.0, &net)
            .unwrap();
        let err = reduced_form(&p, &DMatrix::zeros(2, 0), &DVector::zeros(2), &net).unwrap_err();
        assert!(matches!(err, Error::SingularFactor { factor: "R(rho)" }));
    }

    #[test]
    fn lambda_norm_is_checked() {
        let net = generate_mc_network(1, 5, 3, 1).unwrap();
        let norm = net.w().row_sum_norm();
        let bad = ModelParams::new(1.0 / norm, DVector::zeros(0), DVector::zeros(0), 0.0, DVector::zeros(1), 1.0, &net);
        assert!(bad.is_err());
    }

    proptest! {
        #[test]
        fn j_is_symmetric_idempotent_annihilating(seed in any::<u64>(), links in 1usize..4) {
            let net = generate_mc_network(3, 6, links, seed).unwrap();
            let w_only = GroupedNetwork::new(net.w().clone(), net.w().clone(), false).unwrap();
            for m in [net.m(), w_only.m()] {
                let j = j_projector(m).to_dense();
                prop_assert!(max_abs_diff(&(&j * &j), &j) < 1e-10);
                prop_assert_eq!(max_abs_diff(&j, &j.transpose()), 0.0);
                let ones = DVector::from_element(18, 1.0);
                prop_assert!((&j * &ones).norm() < 1e-10);
                prop_assert!((&j * m.mul_vec(&ones)).norm() < 1e-10);
            }
        }

        #[test]
        fn round_trip_recovers_j_eps(seed in 0u64..500) {
            let (net, params, data, eps) = fixture(seed);
            let j = j_projector(net.m());
            let r = structural_residual(&params, &data, &net, &j).unwrap();
            prop_assert!((r - j.mul_vec(&eps)).amax() < 1e-10);
        }
    }
}
