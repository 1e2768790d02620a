//! Spectral identification diagnostics.
//!
//! A symmetric W with exactly two distinct eigenvalues cannot separate the
//! endogenous from the contextual effect. Otherwise identification rests on the
//! column rank of the power stack `J[WX, …, W^{ϱ−1}X, X]`, and its Gram
//! condition number measures how close the model is to losing it.

use std::fmt;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{gram_condition_number, max_asymmetry, numerical_rank, BlockDiagonal};

pub const DEFAULT_EIGEN_TOL: f64 = 1e-8;
pub const SYMMETRY_TOL: f64 = 1e-10;
pub const RANK_TOL: f64 = 1e-10;
/// Stack condition number above which the verdict is `WeaklyIdentified`.
pub const WEAK_CONDITION: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    NotIdentified,
    /// Passes the eigenvalue-count check; the rank check decides.
    PossiblyIdentified,
    Identified,
    WeaklyIdentified,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Verdict::NotIdentified => "NotIdentified",
            Verdict::PossiblyIdentified => "PossiblyIdentified",
            Verdict::Identified => "Identified",
            Verdict::WeaklyIdentified => "WeaklyIdentified",
        };
        f.write_str(s)
    }
}

/// Eigenvalue cluster: representative value and multiplicity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cluster {
    pub value: f64,
    pub multiplicity: usize,
}

/// Groups sorted eigenvalues. A new cluster opens when the gap to the previous
/// eigenvalue exceeds `tol · max(1, |ν|max)`.
pub fn cluster_eigenvalues(eigenvalues: &[f64], tol: f64) -> Vec<Cluster> {
    let mut vals: Vec<f64> = eigenvalues.to_vec();
    vals.sort_by(|a, b| b.total_cmp(a));
    let scale = vals.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
    let gap = tol * scale;
    let mut out: Vec<Cluster> = Vec::new();
    let mut sum = 0.0;
    let mut prev = f64::NAN;
    for v in vals {
        match out.last_mut() {
            Some(c) if prev - v <= gap => {
                c.multiplicity += 1;
                sum += v;
                c.value = sum / c.multiplicity as f64;
            }
            _ => {
                out.push(Cluster { value: v, multiplicity: 1 });
                sum = v;
            }
        }
        prev = v;
    }
    out
}

fn check_symmetric(a: &DMatrix<f64>) -> Result<()> {
    if !a.is_square() {
        return Err(Error::NonSquareBlock {
            index: 0,
            rows: a.nrows(),
            cols: a.ncols(),
        });
    }
    let asym = max_asymmetry(a);
    if asym > SYMMETRY_TOL {
        return Err(Error::Asymmetric(asym));
    }
    Ok(())
}

/// Number of distinct eigenvalues of a symmetric matrix and its clusters.
pub fn distinct_eigenvalues(w: &DMatrix<f64>, tol: f64) -> Result<(usize, Vec<Cluster>)> {
    check_symmetric(w)?;
    let eig = w.clone().symmetric_eigen();
    let clusters = cluster_eigenvalues(eig.eigenvalues.as_slice(), tol);
    Ok((clusters.len(), clusters))
}

/// Block-wise version: the spectrum of a block-diagonal matrix is the union of
/// the block spectra.
pub fn distinct_eigenvalues_blocks(w: &BlockDiagonal, tol: f64) -> Result<(usize, Vec<Cluster>)> {
    let mut all = Vec::with_capacity(w.order());
    for b in w.blocks() {
        check_symmetric(b)?;
        all.extend(b.clone().symmetric_eigen().eigenvalues.iter().copied());
    }
    let clusters = cluster_eigenvalues(&all, tol);
    Ok((clusters.len(), clusters))
}

/// Two distinct eigenvalues rule identification out.
pub fn proposition1_check(w: &BlockDiagonal, tol: f64) -> Result<Verdict> {
    let (count, _) = distinct_eigenvalues_blocks(w, tol)?;
    Ok(verdict_from_count(count))
}

fn verdict_from_count(count: usize) -> Verdict {
    if count == 2 {
        Verdict::NotIdentified
    } else {
        Verdict::PossiblyIdentified
    }
}

/// Outcome of the instrument-stack rank check.
#[derive(Debug, Clone, PartialEq)]
pub struct RankCheck {
    pub columns: usize,
    pub rank: usize,
    pub full_rank: bool,
    pub condition_number: f64,
    /// Highest power of W in the stack.
    pub max_power: usize,
}

/// Which identification stack to build.
#[derive(Debug, Clone, Copy)]
pub enum Stack<'a> {
    /// `J[WX, …, W^pX, X]` for models without correlated errors.
    NoCorrelation,
    /// `J[Q₀, MQ₀]` with `Q₀ = [WX, …, W^pX, Wι, …, W^pι, X]`
    /// and `ι` the group dummies.
    Correlated { m: &'a BlockDiagonal },
}

/// Rank and Gram condition number of the identification stack.
///
/// Powers of W are added one at a time up to `ϱ_w − 1`. A power whose columns
/// are already spanned by the lower ones adds no identifying information, so
/// the stack stops at the last power that keeps full column rank. The rank
/// flag is the full rank of the stack with the first power, which is what the
/// excluded instruments need. Powers are also capped so that the stack never
/// has more columns than rows.
pub fn proposition2_rank_check(
    w: &BlockDiagonal,
    j: &BlockDiagonal,
    x: &DMatrix<f64>,
    varrho: usize,
    stack: Stack<'_>,
) -> Result<RankCheck> {
    let n = w.order();
    let k = x.ncols();
    if k == 0 || x.nrows() == 0 {
        return Err(Error::InvalidArgument("X must have at least one column".into()));
    }
    if x.nrows() != n || j.order() != n {
        return Err(Error::DimensionMismatch(format!(
            "X has {} rows, W has order {n}",
            x.nrows()
        )));
    }
    let correlated = matches!(stack, Stack::Correlated { .. });
    let groups = w.block_count();
    let (per_power, base) = if correlated { (2 * (k + groups), 2 * k) } else { (k, k) };
    let cap = n.saturating_sub(base) / per_power;
    let p_max = varrho.saturating_sub(1).min(cap).max(1);

    let mut powers: Vec<DVector<f64>> = Vec::new();
    let mut cur = x.clone();
    let mut cur_iota = group_dummies(w);
    let mut best: Option<RankCheck> = None;
    for p in 1..=p_max {
        cur = w.mul_mat(&cur);
        powers.extend(cur.column_iter().map(|c| c.into_owned()));
        if correlated {
            cur_iota = w.mul_mat(&cur_iota);
            powers.extend(cur_iota.column_iter().map(|c| c.into_owned()));
        }
        let mut cols = powers.clone();
        cols.extend(x.column_iter().map(|c| c.into_owned()));
        if let Stack::Correlated { m } = stack {
            let lagged: Vec<_> = cols.iter().map(|c| m.mul_vec(c)).collect();
            cols.extend(lagged);
        }
        let q = j.mul_mat(&DMatrix::from_columns(&cols));
        let rank = numerical_rank(&q, RANK_TOL);
        let check = RankCheck {
            columns: q.ncols(),
            rank,
            full_rank: rank == q.ncols(),
            condition_number: gram_condition_number(&q),
            max_power: p,
        };
        let keep_going = check.full_rank;
        if p == 1 || check.full_rank {
            best = Some(check);
        }
        if !keep_going {
            break;
        }
    }
    Ok(best.expect("at least one power is evaluated"))
}

fn group_dummies(w: &BlockDiagonal) -> DMatrix<f64> {
    let mut d = DMatrix::zeros(w.order(), w.block_count());
    for r in 0..w.block_count() {
        for i in w.range(r) {
            d[(i, r)] = 1.0;
        }
    }
    d
}

/// Within-group reduced-form coefficient `((m−1)β₁ − β₂)/(m − 1 + λ)` for a
/// complete group of size `m` with weights `1/(m−1)`.
pub fn lee_reduced_coefficient(m: usize, lambda: f64, beta1: f64, beta2: f64) -> Result<f64> {
    if m < 2 {
        return Err(Error::InvalidArgument(format!("group size {m} must be at least 2")));
    }
    let mm1 = (m - 1) as f64;
    let denom = mm1 + lambda;
    if denom == 0.0 {
        return Err(Error::SingularFactor { factor: "m - 1 + lambda" });
    }
    Ok((mm1 * beta1 - beta2) / denom)
}

/// Block-diagonal matrix of complete groups with weights `1/(m_r − 1)`.
pub fn lee_block_matrix(sizes: &[usize]) -> Result<BlockDiagonal> {
    let blocks = sizes
        .iter()
        .map(|&m| {
            if m < 2 {
                return Err(Error::InvalidArgument(format!("group size {m} must be at least 2")));
            }
            let wgt = 1.0 / (m - 1) as f64;
            Ok(DMatrix::from_fn(m, m, |i, j| if i == j { 0.0 } else { wgt }))
        })
        .collect::<Result<Vec<_>>>()?;
    BlockDiagonal::new(blocks)
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdentificationReport {
    pub distinct_eigenvalue_count: usize,
    pub eigenvalue_clusters: Vec<Cluster>,
    pub stack_condition_number: f64,
    pub rank_flag: bool,
    pub stack_columns: usize,
    pub stack_rank: usize,
    pub verdict: Verdict,
}

impl IdentificationReport {
    /// `key=value` lines for machine consumption.
    pub fn to_key_values(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("verdict={}\n", self.verdict));
        s.push_str(&format!("distinct_eigenvalues={}\n", self.distinct_eigenvalue_count));
        s.push_str(&format!("rank_flag={}\n", self.rank_flag));
        s.push_str(&format!("stack_rank={}\n", self.stack_rank));
        s.push_str(&format!("stack_columns={}\n", self.stack_columns));
        s.push_str(&format!(
            "stack_condition_number={}\n",
            crate::fmt_num(self.stack_condition_number)
        ));
        let clusters: Vec<String> = self
            .eigenvalue_clusters
            .iter()
            .map(|c| format!("{}:{}", crate::fmt_num(c.value), c.multiplicity))
            .collect();
        s.push_str(&format!("eigenvalue_clusters={}\n", clusters.join(";")));
        s
    }
}

impl fmt::Display for IdentificationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{} ({} distinct eigenvalues)",
            self.verdict, self.distinct_eigenvalue_count
        )?;
        if self.stack_columns > 0 {
            writeln!(
                f,
                "instrument stack: rank {} of {} columns, condition number {}",
                self.stack_rank,
                self.stack_columns,
                crate::fmt_num(self.stack_condition_number)
            )?;
        } else {
            writeln!(f, "instrument stack: not checked (no covariates)")?;
        }
        writeln!(f, "eigenvalue clusters (value x multiplicity):")?;
        for c in &self.eigenvalue_clusters {
            writeln!(f, "  {} x {}", crate::fmt_num(c.value), c.multiplicity)?;
        }
        write!(
            f,
            "note: the weak-identification threshold (condition number > {WEAK_CONDITION:e}) is an engineering choice"
        )
    }
}

/// Verdict from the spectrum of W alone, without covariates.
pub fn eigenvalue_report(w: &BlockDiagonal, tol: f64) -> Result<IdentificationReport> {
    let (count, clusters) = distinct_eigenvalues_blocks(w, tol)?;
    Ok(IdentificationReport {
        distinct_eigenvalue_count: count,
        eigenvalue_clusters: clusters,
        stack_condition_number: f64::NAN,
        rank_flag: false,
        stack_columns: 0,
        stack_rank: 0,
        verdict: verdict_from_count(count),
    })
}

/// Eigenvalue count, rank check and verdict in one pass.
pub fn diagnose(
    w: &BlockDiagonal,
    j: &BlockDiagonal,
    x: &DMatrix<f64>,
    stack: Stack<'_>,
    tol: f64,
) -> Result<IdentificationReport> {
    let (count, clusters) = distinct_eigenvalues_blocks(w, tol)?;
    let rank = proposition2_rank_check(w, j, x, count, stack)?;
    let verdict = if verdict_from_count(count) == Verdict::NotIdentified || !rank.full_rank {
        Verdict::NotIdentified
    } else if rank.condition_number > WEAK_CONDITION {
        Verdict::WeaklyIdentified
    } else {
        Verdict::Identified
    };
    Ok(IdentificationReport {
        distinct_eigenvalue_count: count,
        eigenvalue_clusters: clusters,
        stack_condition_number: rank.condition_number,
        rank_flag: rank.full_rank,
        stack_columns: rank.columns,
        stack_rank: rank.rank,
        verdict,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphs::complete_graph;
    use crate::transforms::j_projector;
    use proptest::prelude::{any, prop_assert, prop_assert_eq, proptest};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn single(a: DMatrix<f64>) -> BlockDiagonal {
        BlockDiagonal::new(vec![a]).unwrap()
    }

    fn path(n: usize) -> DMatrix<f64> {
        DMatrix::from_fn(n, n, |i, j| if i.abs_diff(j) == 1 { 1.0 } else { 0.0 })
    }

    /// Eigenvalues of a symmetric matrix below `x`, via the inertia of A − xI
    /// (negative pivots of an unpivoted LDLᵀ).
    fn count_below(a: &DMatrix<f64>, x: f64) -> usize {
        let n = a.nrows();
        let mut m = a.clone();
        for i in 0..n {
            m[(i, i)] -= x;
        }
        let mut neg = 0;
        for k in 0..n {
            let d = m[(k, k)];
            if d < 0.0 {
                neg += 1;
            }
            for i in (k + 1)..n {
                let f = m[(i, k)] / d;
                for jj in (k + 1)..n {
                    m[(i, jj)] -= f * m[(k, jj)];
                }
            }
        }
        neg
    }

    #[test]
    fn complete_graph_k4() {
        let (count, clusters) = distinct_eigenvalues(&complete_graph(4), DEFAULT_EIGEN_TOL).unwrap();
        assert_eq!(count, 2);
        assert!((clusters[0].value - 3.0).abs() < 1e-12);
        assert_eq!(clusters[1].multiplicity, 3);
        assert!((clusters[1].value + 1.0).abs() < 1e-12);
    }

    #[test]
    fn lee_groups_five_and_seven() {
        let w = lee_block_matrix(&[5, 7]).unwrap();
        let (count, clusters) = distinct_eigenvalues_blocks(&w, DEFAULT_EIGEN_TOL).unwrap();
        assert_eq!(count, 3);
        let vals: Vec<f64> = clusters.iter().map(|c| c.value).collect();
        let expect = [1.0, -1.0 / 6.0, -1.0 / 4.0];
        for (v, e) in vals.iter().zip(expect) {
            assert!((v - e).abs() < 1e-10, "{vals:?}");
        }
        assert_eq!(clusters[0].multiplicity, 2);
    }

    #[test]
    fn sylvester_inertia_oracle_matches_clusters() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let g = DMatrix::from_fn(8, 8, |_, _| rng.random::<f64>() - 0.5);
        let q = g.qr().q();
        // Prescribed spectrum with repeats.
        let d = DVector::from_vec(vec![2.0, 2.0, 0.5, 0.5, 0.5, -1.0, -3.0, -3.0]);
        let a = &q * DMatrix::from_diagonal(&d) * q.transpose();
        let a = (&a + a.transpose()) * 0.5;
        let (count, clusters) = distinct_eigenvalues(&a, DEFAULT_EIGEN_TOL).unwrap();
        assert_eq!(count, 4);
        let mut cumulative = 8;
        for pair in clusters.windows(2) {
            cumulative -= pair[0].multiplicity;
            let mid = 0.5 * (pair[0].value + pair[1].value);
            assert_eq!(count_below(&a, mid), cumulative);
        }
        let r = DMatrix::from_fn(8, 8, |_, _| rng.random::<f64>());
        let r = &r + r.transpose();
        let (count, clusters) = distinct_eigenvalues(&r, DEFAULT_EIGEN_TOL).unwrap();
        let mut cumulative = 8;
        for pair in clusters.windows(2) {
            cumulative -= pair[0].multiplicity;
            assert_eq!(count_below(&r, 0.5 * (pair[0].value + pair[1].value)), cumulative);
        }
        assert_eq!(count, 8);
    }

    #[test]
    fn asymmetric_input_is_refused() {
        let mut a = complete_graph(3);
        a[(0, 1)] = 0.0;
        match distinct_eigenvalues(&a, DEFAULT_EIGEN_TOL) {
            Err(Error::Asymmetric(v)) => assert_eq!(v, 1.0),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn proposition1_cases() {
        assert_eq!(
            proposition1_check(&single(complete_graph(5)), DEFAULT_EIGEN_TOL).unwrap(),
            Verdict::NotIdentified
        );
        assert_eq!(
            proposition1_check(&lee_block_matrix(&[10, 10]).unwrap(), DEFAULT_EIGEN_TOL).unwrap(),
            Verdict::NotIdentified
        );
        let p4 = single(path(4));
        assert_eq!(distinct_eigenvalues_blocks(&p4, DEFAULT_EIGEN_TOL).unwrap().0, 4);
        assert_eq!(proposition1_check(&p4, DEFAULT_EIGEN_TOL).unwrap(), Verdict::PossiblyIdentified);
    }

    #[test]
    fn complete_graphs_are_not_identified() {
        for n in 3..=20 {
            let w = single(complete_graph(n));
            assert_eq!(proposition1_check(&w, DEFAULT_EIGEN_TOL).unwrap(), Verdict::NotIdentified, "n = {n}");
        }
    }

    #[test]
    fn complete_graph_stack_is_rank_deficient() {
        let w = single(complete_graph(6));
        let m = crate::graphs::row_normalize_blocks(&w).unwrap();
        let j = j_projector(&m);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = DMatrix::from_fn(6, 1, |_, _| rng.random::<f64>());
        let rc = proposition2_rank_check(&w, &j, &x, 2, Stack::NoCorrelation).unwrap();
        assert!(!rc.full_rank);
    }

    #[test]
    fn lee_three_groups_full_rank() {
        let w = lee_block_matrix(&[4, 5, 6]).unwrap();
        let m = crate::graphs::row_normalize_blocks(&w).unwrap();
        let j = j_projector(&m);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = DMatrix::from_fn(15, 2, |_, _| rng.random::<f64>() - 0.5);
        let (count, _) = distinct_eigenvalues_blocks(&w, DEFAULT_EIGEN_TOL).unwrap();
        assert_eq!(count, 4);
        let rc = proposition2_rank_check(&w, &j, &x, count, Stack::NoCorrelation).unwrap();
        // Within groups JW acts as −J/(m_r − 1), so three group sizes support two powers.
        assert_eq!(rc.max_power, 2);
        // Explicit oracle: build the stack by dense products and count singular values.
        let wd = w.to_dense();
        let jd = j.to_dense();
        let mut cols = Vec::new();
        let mut cur = x.clone();
        for _ in 0..rc.max_power {
            cur = &wd * &cur;
            cols.extend(cur.column_iter().map(|c| c.into_owned()));
        }
        cols.extend(x.column_iter().map(|c| c.into_owned()));
        let q = &jd * DMatrix::from_columns(&cols);
        let sv = q.svd(false, false).singular_values;
        let oracle_rank = sv.iter().filter(|s| **s > 1e-8 * sv.max()).count();
        assert_eq!(rc.rank, oracle_rank);
        assert!(rc.full_rank);
    }

    #[test]
    fn lee_coefficient_cases() {
        for m in [2, 5, 10] {
            assert_eq!(lee_reduced_coefficient(m, 0.3, 0.0, 0.0).unwrap(), 0.0);
        }
        let c = lee_reduced_coefficient(10, 0.1, 0.2, 0.2).unwrap();
        assert!((c - 1.6 / 9.1).abs() < 1e-15);
        assert!(lee_reduced_coefficient(2, -1.0, 0.2, 0.2).is_err());
        let vals: Vec<f64> = [10, 100, 1000]
            .iter()
            .map(|&m| lee_reduced_coefficient(m, 0.1, 0.2, 0.2).unwrap())
            .collect();
        let d1 = (vals[1] - vals[0]).abs();
        let d2 = (vals[2] - vals[1]).abs();
        assert!(d2 < d1 / 5.0);
    }

    #[test]
    fn diagnose_report() {
        let w = lee_block_matrix(&[4, 5, 6]).unwrap();
        let m = crate::graphs::row_normalize_blocks(&w).unwrap();
        let j = j_projector(&m);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = DMatrix::from_fn(15, 1, |_, _| rng.random::<f64>() - 0.5);
        let rep = diagnose(&w, &j, &x, Stack::NoCorrelation, DEFAULT_EIGEN_TOL).unwrap();
        assert!(rep.rank_flag);
        assert_ne!(rep.verdict, Verdict::NotIdentified);
        assert_eq!(rep.eigenvalue_clusters.iter().map(|c| c.multiplicity).sum::<usize>(), 15);
        assert!(rep.to_key_values().contains("distinct_eigenvalues=4"));

        let k = single(complete_graph(5));
        let jk = j_projector(&crate::graphs::row_normalize_blocks(&k).unwrap());
        let xk = DMatrix::from_fn(5, 1, |_, _| rng.random::<f64>());
        let rep = diagnose(&k, &jk, &xk, Stack::NoCorrelation, DEFAULT_EIGEN_TOL).unwrap();
        assert_eq!(rep.verdict, Verdict::NotIdentified);
        assert!(rep.to_string().starts_with("NotIdentified (2 distinct eigenvalues)"));
    }

    proptest! {
        #[test]
        fn eigen_count_is_permutation_invariant(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = 7;
            let mut a = DMatrix::from_fn(n, n, |_, _| if rng.random::<f64>() < 0.4 { 1.0 } else { 0.0 });
            a = &a + a.transpose();
            a.fill_diagonal(0.0);
            a.apply(|v: &mut f64| *v = v.min(1.0));
            let mut perm: Vec<usize> = (0..n).collect();
            for i in (1..n).rev() {
                perm.swap(i, rng.random_range(0..=i));
            }
            let pa = DMatrix::from_fn(n, n, |i, j| a[(perm[i], perm[j])]);
            let c1 = distinct_eigenvalues(&a, DEFAULT_EIGEN_TOL).unwrap().0;
            let c2 = distinct_eigenvalues(&pa, DEFAULT_EIGEN_TOL).unwrap().0;
            prop_assert_eq!(c1, c2);
            let total: usize = distinct_eigenvalues(&a, DEFAULT_EIGEN_TOL).unwrap().1.iter().map(|c| c.multiplicity).sum();
            prop_assert_eq!(total, n);
        }

        #[test]
        fn block_spectrum_is_union(sizes in proptest::collection::vec(2usize..7, 1..4)) {
            let w = lee_block_matrix(&sizes).unwrap();
            let blockwise = distinct_eigenvalues_blocks(&w, DEFAULT_EIGEN_TOL).unwrap().1;
            let dense = distinct_eigenvalues(&w.to_dense(), DEFAULT_EIGEN_TOL).unwrap().1;
            prop_assert_eq!(blockwise.len(), dense.len());
            for (a, b) in blockwise.iter().zip(&dense) {
                prop_assert!((a.value - b.value).abs() < 1e-9);
                prop_assert_eq!(a.multiplicity, b.multiplicity);
            }
        }

        #[test]
        fn rank_flag_is_scale_invariant(seed in any::<u64>(), scale in 1e-3f64..1e3) {
            let w = lee_block_matrix(&[3, 4, 5]).unwrap();
            let j = j_projector(&crate::graphs::row_normalize_blocks(&w).unwrap());
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = DMatrix::from_fn(12, 1, |_, _| rng.random::<f64>() - 0.5);
            let a = proposition2_rank_check(&w, &j, &x, 4, Stack::NoCorrelation).unwrap();
            let b = proposition2_rank_check(&w, &j, &(x * scale), 4, Stack::NoCorrelation).unwrap();
            prop_assert_eq!(a.full_rank, b.full_rank);
        }
    }
}
