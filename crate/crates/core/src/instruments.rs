//! Finite instrument sets built from powers of the network matrices.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::graphs::GroupedNetwork;
use crate::linalg::BlockDiagonal;

/// A column whose norm falls below this fraction of its norm before `J` is
/// treated as annihilated.
pub const ZERO_COLUMN_TOL: f64 = 1e-10;
/// Order used when no eigenvalue count is available.
pub const DEFAULT_ORDER: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Normalization {
    None,
    UnitVariance,
    Standardized,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InstrumentSet {
    pub q: DMatrix<f64>,
    pub labels: Vec<String>,
    pub normalization: Normalization,
}

impl InstrumentSet {
    pub fn n(&self) -> usize {
        self.q.nrows()
    }

    pub fn len(&self) -> usize {
        self.q.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.q.ncols() == 0
    }

    /// Appends the columns of `other`.
    pub fn concat(&self, other: &InstrumentSet) -> Result<InstrumentSet> {
        if self.n() != other.n() {
            return Err(Error::DimensionMismatch("instrument sets have different row counts".into()));
        }
        let mut cols: Vec<DVector<f64>> = self.q.column_iter().map(|c| c.into_owned()).collect();
        cols.extend(other.q.column_iter().map(|c| c.into_owned()));
        let mut labels = self.labels.clone();
        labels.extend(other.labels.iter().cloned());
        Ok(InstrumentSet {
            q: DMatrix::from_columns(&cols),
            labels,
            normalization: self.normalization,
        })
    }
}

/// Truncation order: `ϱ_w − 1` when the eigenvalue count is known.
pub fn default_order(distinct_eigenvalues: Option<usize>) -> usize {
    match distinct_eigenvalues {
        Some(v) => v.saturating_sub(1).max(1),
        None => DEFAULT_ORDER,
    }
}

/// Applies `J` to labelled raw columns and drops the ones it annihilates.
pub fn annihilate(j: &BlockDiagonal, raw: Vec<(String, DVector<f64>)>) -> InstrumentSet {
    let n = j.order();
    let mut cols = Vec::with_capacity(raw.len());
    let mut labels = Vec::with_capacity(raw.len());
    for (label, c) in raw {
        let before = c.norm();
        let jc = j.mul_vec(&c);
        if !before.is_finite() || before == 0.0 || jc.norm() <= ZERO_COLUMN_TOL * before {
            log::debug!("dropping numerically zero instrument column {label}");
            continue;
        }
        cols.push(jc);
        labels.push(format!("J·{label}"));
    }
    let q = if cols.is_empty() {
        DMatrix::zeros(n, 0)
    } else {
        DMatrix::from_columns(&cols)
    };
    InstrumentSet {
        q,
        labels,
        normalization: Normalization::None,
    }
}

fn push_columns(out: &mut Vec<(String, DVector<f64>)>, name: &str, m: &DMatrix<f64>, unit: &str) {
    for (c, col) in m.column_iter().enumerate() {
        out.push((format!("{name} {unit} {}", c + 1), col.into_owned()));
    }
}

/// `J[W X, …, W^{m₁}X, Wι, …, W^{m₁}ι, X]`, optionally followed by the
/// `M`-premultiplied copy of the uncorrected stack. `ι` is the matrix of group
/// dummies.
pub fn build_instruments(
    network: &GroupedNetwork,
    j: &BlockDiagonal,
    x: &DMatrix<f64>,
    order: usize,
    include_bonacich: bool,
    include_m_lags: bool,
) -> Result<InstrumentSet> {
    if order == 0 {
        return Err(Error::InvalidArgument("instrument order must be at least 1".into()));
    }
    if x.nrows() != network.n() {
        return Err(Error::DimensionMismatch(format!(
            "X has {} rows for {} nodes",
            x.nrows(),
            network.n()
        )));
    }
    let w = network.w();
    let mut raw = Vec::new();
    let mut cur = x.clone();
    for p in 1..=order {
        cur = w.mul_mat(&cur);
        push_columns(&mut raw, &power_name("W", p, "X"), &cur, "col");
    }
    if include_bonacich {
        let mut cur = network.group_dummies();
        for p in 1..=order {
            cur = w.mul_mat(&cur);
            push_columns(&mut raw, &power_name("W", p, "ι"), &cur, "grp");
        }
    }
    push_columns(&mut raw, "X", x, "col");
    if include_m_lags {
        let lagged: Vec<_> = raw
            .iter()
            .map(|(label, c)| (format!("M·{label}"), network.m().mul_vec(c)))
            .collect();
        raw.extend(lagged);
    }
    let set = annihilate(j, raw);
    if set.is_empty() {
        return Err(Error::DegenerateProjector("every instrument column is zero".into()));
    }
    Ok(set)
}

fn power_name(base: &str, p: usize, arg: &str) -> String {
    if p == 1 {
        format!("{base}{arg}")
    } else {
        format!("{base}^{p}{arg}")
    }
}

/// Small simulation set `J[X, WX, MX, MWX]` for `X = [x, Wx]`, with the
/// duplicated `Wx` and `MWx` columns removed: `J[x, Wx, W²x, Mx, MWx, MW²x]`.
pub fn mc_roster_q1(network: &GroupedNetwork, j: &BlockDiagonal, x: &DVector<f64>) -> InstrumentSet {
    let w = network.w();
    let m = network.m();
    let wx = w.mul_vec(x);
    let w2x = w.mul_vec(&wx);
    let raw = vec![
        ("x".to_string(), x.clone()),
        ("Wx".to_string(), wx.clone()),
        ("W^2x".to_string(), w2x.clone()),
        ("Mx".to_string(), m.mul_vec(x)),
        ("MWx".to_string(), m.mul_vec(&wx)),
        ("MW^2x".to_string(), m.mul_vec(&w2x)),
    ];
    annihilate(j, raw)
}

/// Large simulation set `[Q₁, JWι]`, one Bonacich column per group.
pub fn mc_roster_q2(network: &GroupedNetwork, j: &BlockDiagonal, q1: &InstrumentSet) -> Result<InstrumentSet> {
    let wi = network.w().mul_mat(&network.group_dummies());
    let mut raw = Vec::new();
    push_columns(&mut raw, "Wι", &wi, "grp");
    q1.concat(&annihilate(j, raw))
}

/// Rescales columns to unit sample variance, demeaning first when
/// `Standardized`. Constant columns are dropped.
pub fn normalize_columns(set: &InstrumentSet, mode: Normalization) -> Result<InstrumentSet> {
    if set.is_empty() {
        return Err(Error::InvalidArgument("empty instrument set".into()));
    }
    if mode == Normalization::None {
        return Ok(InstrumentSet {
            normalization: mode,
            ..set.clone()
        });
    }
    let n = set.n();
    if n < 2 {
        return Err(Error::InvalidArgument("need at least two rows to normalize".into()));
    }
    let mut cols = Vec::with_capacity(set.len());
    let mut labels = Vec::with_capacity(set.len());
    for (col, label) in set.q.column_iter().zip(&set.labels) {
        let mean = col.mean();
        let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        let scale = col.amax().max(f64::MIN_POSITIVE);
        if sd <= 1e-12 * scale {
            log::warn!("dropping zero-variance instrument column {label}");
            continue;
        }
        let c = match mode {
            Normalization::Standardized => col.add_scalar(-mean) / sd,
            _ => col / sd,
        };
        cols.push(c);
        labels.push(label.clone());
    }
    if cols.is_empty() {
        return Err(Error::DegenerateProjector("every instrument column is constant".into()));
    }
    Ok(InstrumentSet {
        q: DMatrix::from_columns(&cols),
        labels,
        normalization: mode,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphs::generate_mc_network;
    use crate::linalg::{max_abs_diff, sample_sd};
    use crate::transforms::j_projector;
    use proptest::prelude::{any, prop_assert, prop_assert_eq, proptest};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn setup(seed: u64) -> (GroupedNetwork, BlockDiagonal, DVector<f64>) {
        let net = generate_mc_network(5, 8, 3, seed).unwrap();
        let j = j_projector(net.m());
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
        let x = DVector::from_fn(net.n(), |_, _| rng.random::<f64>() - 0.5);
        (net, j, x)
    }

    fn ortho_projector(q: &DMatrix<f64>) -> DMatrix<f64> {
        let svd = q.clone().svd(true, false);
        let u = svd.u.unwrap();
        let top = svd.singular_values.max();
        let mut p = DMatrix::zeros(q.nrows(), q.nrows());
        for (k, s) in svd.singular_values.iter().enumerate() {
            if *s > 1e-10 * top {
                p += u.column(k) * u.column(k).transpose();
            }
        }
        p
    }

    #[test]
    fn first_order_is_jwx_x() {
        let (net, j, x) = setup(1);
        let xm = DMatrix::from_columns(std::slice::from_ref(&x));
        let set = build_instruments(&net, &j, &xm, 1, false, false).unwrap();
        assert_eq!(set.len(), 2);
        let expect = j.mul_mat(&DMatrix::from_columns(&[net.w().mul_vec(&x), x]));
        assert!(max_abs_diff(&set.q, &expect) < 1e-14);
        assert_eq!(set.labels, vec!["J·WX col 1", "J·X col 1"]);
    }

    #[test]
    fn roster_shapes() {
        let (net, j, x) = setup(2);
        let q1 = mc_roster_q1(&net, &j, &x);
        assert_eq!(q1.len(), 6);
        let q2 = mc_roster_q2(&net, &j, &q1).unwrap();
        assert!(q2.len() > q1.len() && q2.len() <= q1.len() + net.group_count());
        assert_eq!(q2.q.columns(0, 6), q1.q.columns(0, 6));
        let wi = net.w().mul_mat(&net.group_dummies());
        let jwi0 = j.mul_vec(&wi.column(0).into_owned());
        if q2.labels.contains(&"J·Wι grp 1".to_string()) {
            let idx = q2.labels.iter().position(|l| l == "J·Wι grp 1").unwrap();
            assert!((q2.q.column(idx) - jwi0).amax() < 1e-14);
        }
    }

    #[test]
    fn constant_column_is_dropped_when_standardized() {
        let q = DMatrix::from_columns(&[
            DVector::from_element(4, 5.0),
            DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0]),
        ]);
        let set = InstrumentSet {
            q,
            labels: vec!["const".into(), "ramp".into()],
            normalization: Normalization::None,
        };
        let out = normalize_columns(&set, Normalization::Standardized).unwrap();
        assert_eq!(out.labels, vec!["ramp"]);
    }

    #[test]
    fn unit_variance_scales_to_one() {
        let set = InstrumentSet {
            q: DMatrix::from_column_slice(3, 1, &[1.0, 2.0, 3.0]),
            labels: vec!["c".into()],
            normalization: Normalization::None,
        };
        let out = normalize_columns(&set, Normalization::UnitVariance).unwrap();
        let col: Vec<f64> = out.q.column(0).iter().copied().collect();
        assert!((sample_sd(&col) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn normalization_keeps_span() {
        let (net, j, x) = setup(3);
        let q1 = mc_roster_q1(&net, &j, &x);
        let q2 = mc_roster_q2(&net, &j, &q1).unwrap();
        let unit = normalize_columns(&q2, Normalization::UnitVariance).unwrap();
        assert_eq!(unit.len(), q2.len());
        assert!(max_abs_diff(&ortho_projector(&q2.q), &ortho_projector(&unit.q)) < 1e-10);
    }

    #[test]
    fn zero_columns_are_dropped_with_label() {
        let (net, j, _) = setup(4);
        let ones = DVector::from_element(net.n(), 1.0);
        let set = annihilate(&j, vec![("ones".into(), ones), ("zero".into(), DVector::zeros(net.n()))]);
        assert!(set.is_empty());
    }

    #[test]
    fn default_order_rule() {
        assert_eq!(default_order(Some(4)), 3);
        assert_eq!(default_order(None), 10);
    }

    proptest! {
        #[test]
        fn instruments_are_annihilated(seed in any::<u64>(), order in 1usize..4, bon in any::<bool>(), lags in any::<bool>()) {
            let (net, j, x) = setup(seed);
            let xm = DMatrix::from_columns(&[x.clone(), net.w().mul_vec(&x)]);
            let set = build_instruments(&net, &j, &xm, order, bon, lags).unwrap();
            prop_assert!(max_abs_diff(&j.mul_mat(&set.q), &set.q) < 1e-10);
            prop_assert_eq!(set.labels.len(), set.len());
            let unit = normalize_columns(&set, Normalization::UnitVariance).unwrap();
            prop_assert_eq!(unit.labels.len(), unit.len());
            for c in unit.q.column_iter() {
                let v: Vec<f64> = c.iter().copied().collect();
                prop_assert!((sample_sd(&v).powi(2) - 1.0).abs() < 1e-10);
            }
        }
    }
}
