//! Monte Carlo experiment on simulated grouped networks.
//!
//! Each replication draws `(W, x, γ, ε)` from one random stream, generates
//! `Y`, estimates a common ρ̃ and runs six 2SLS variants on the same data.

use std::fmt;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimation::{
    bias_corrected_2sls, classical_2sls, preliminary_delta, preliminary_rho, regularized_2sls, Model,
};
use crate::graphs::{sample_mc_network, GroupedNetwork};
use crate::instruments::{mc_roster_q1, mc_roster_q2, normalize_columns, Normalization};
use crate::regularization::{Scheme, SchemeKind, Spectrum};
use crate::selection::{select_alpha, Criterion, Grid, SelectionConfig, SelectionContext};
use crate::transforms::{assemble_x, reduced_form, ModelParams, PanelData};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrueParams {
    pub lambda: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub rho: f64,
    /// Standard deviation of the group effects.
    pub gamma_sd: f64,
    pub sigma2: f64,
}

impl Default for TrueParams {
    fn default() -> Self {
        Self {
            lambda: 0.1,
            beta1: 0.2,
            beta2: 0.2,
            rho: 0.1,
            gamma_sd: 0.1,
            sigma2: 1.0,
        }
    }
}

impl TrueParams {
    fn truth(&self) -> [f64; 4] {
        [self.lambda, self.beta1, self.beta2, self.rho]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct McConfig {
    pub group_count: usize,
    pub group_size: usize,
    pub max_links: usize,
    pub replications: usize,
    pub seed: u64,
    pub truth: TrueParams,
    pub criterion: Criterion,
}

impl McConfig {
    pub fn new(group_count: usize, group_size: usize, max_links: usize) -> Self {
        Self {
            group_count,
            group_size,
            max_links,
            replications: 500,
            seed: 42,
            truth: TrueParams::default(),
            criterion: Criterion::MallowsCp,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::InvalidArgument("need at least one replication".into()));
        }
        if self.group_count == 0 || self.group_size < 2 {
            return Err(Error::InvalidArgument(
                "need at least one group of two or more members".into(),
            ));
        }
        if self.max_links >= self.group_size {
            return Err(Error::InvalidArgument(format!(
                "max_links {} must be below the group size {}",
                self.max_links, self.group_size
            )));
        }
        let t = &self.truth;
        if !(t.sigma2 >= 0.0 && t.gamma_sd >= 0.0) {
            return Err(Error::InvalidArgument("variances must be nonnegative".into()));
        }
        let norm = t.lambda.abs() * self.max_links.max(1) as f64;
        if !(norm < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "|lambda| * max_links = {norm} must be below 1"
            )));
        }
        if !(t.rho.abs() < 1.0) {
            return Err(Error::InvalidArgument("|rho| must be below 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Estimator {
    FiniteIv,
    LargeIv,
    BiasCorrected,
    Tikhonov,
    LandweberFridman,
    PrincipalComponents,
}

impl Estimator {
    pub const ALL: [Estimator; 6] = [
        Estimator::FiniteIv,
        Estimator::LargeIv,
        Estimator::BiasCorrected,
        Estimator::Tikhonov,
        Estimator::LandweberFridman,
        Estimator::PrincipalComponents,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            Estimator::FiniteIv => "2SLS (finite iv)",
            Estimator::LargeIv => "2SLS (large iv)",
            Estimator::BiasCorrected => "Bias-corrected 2SLS",
            Estimator::Tikhonov => "T-2SLS",
            Estimator::LandweberFridman => "LF-2SLS",
            Estimator::PrincipalComponents => "PC-2SLS",
        }
    }

    pub fn key(&self) -> &'static str {
        match self {
            Estimator::FiniteIv => "finite_iv",
            Estimator::LargeIv => "large_iv",
            Estimator::BiasCorrected => "bias_corrected",
            Estimator::Tikhonov => "t",
            Estimator::LandweberFridman => "lf",
            Estimator::PrincipalComponents => "pc",
        }
    }

    fn scheme_kind(&self) -> Option<SchemeKind> {
        match self {
            Estimator::Tikhonov => Some(SchemeKind::Tikhonov),
            Estimator::LandweberFridman => Some(SchemeKind::LandweberFridman),
            Estimator::PrincipalComponents => Some(SchemeKind::PrincipalComponents),
            _ => None,
        }
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// One simulated sample.
#[derive(Debug, Clone)]
pub struct Draw {
    pub network: GroupedNetwork,
    pub data: PanelData,
    pub x: DVector<f64>,
    pub gamma: DVector<f64>,
}

/// Draws network, then `x`, then `γ`, then `ε` from `rng` and solves for `Y`.
pub fn draw_sample<R: Rng + ?Sized>(config: &McConfig, rng: &mut R) -> Result<Draw> {
    let t = &config.truth;
    let network = sample_mc_network(config.group_count, config.group_size, config.max_links, rng)?;
    let n = network.n();
    let x = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let gamma = DVector::from_fn(config.group_count, |_, _| {
        t.gamma_sd * rng.sample::<f64, _>(StandardNormal)
    });
    let sd = t.sigma2.sqrt();
    let eps = DVector::from_fn(n, |_, _| sd * rng.sample::<f64, _>(StandardNormal));
    let x1 = DMatrix::from_columns(std::slice::from_ref(&x));
    let params = ModelParams::new(
        t.lambda,
        DVector::from_element(1, t.beta1),
        DVector::from_element(1, t.beta2),
        t.rho,
        gamma.clone(),
        t.sigma2,
        &network,
    )?;
    let y = reduced_form(&params, &assemble_x(&x1, &x1, &network), &eps, &network)?;
    let data = PanelData::new(y, x1.clone(), x1, &network)?;
    Ok(Draw { network, data, x, gamma })
}

/// Random stream of replication `rep`.
pub fn replication_rng(seed: u64, rep: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep);
    rng
}

#[derive(Debug, Clone, PartialEq)]
pub struct Replication {
    pub rho: Option<f64>,
    /// δ̂ per estimator in [`Estimator::ALL`] order; `None` on failure.
    pub estimates: [Option<[f64; 3]>; 6],
    /// Selected grid parameter of the T, LF and PC estimators.
    pub parameters: [Option<f64>; 3],
}

impl Replication {
    fn failed() -> Self {
        Self {
            rho: None,
            estimates: [None; 6],
            parameters: [None; 3],
        }
    }

    pub fn estimate(&self, e: Estimator) -> Option<[f64; 3]> {
        self.estimates[e as usize]
    }
}

fn as_array(d: &DVector<f64>) -> Option<[f64; 3]> {
    let a = [d[0], d[1], d[2]];
    a.iter().all(|v| v.is_finite()).then_some(a)
}

fn record<T>(what: Estimator, rep: u64, r: Result<T>) -> Option<T> {
    match r {
        Ok(v) => Some(v),
        Err(e) => {
            log::debug!("replication {rep}: {what} failed: {e}");
            None
        }
    }
}

/// Runs all estimators on replication `rep`. Estimator failures leave empty
/// cells.
pub fn run_replication(config: &McConfig, rep: u64) -> Replication {
    let mut rng = replication_rng(config.seed, rep);
    let draw = match draw_sample(config, &mut rng) {
        Ok(d) => d,
        Err(e) => {
            log::warn!("replication {rep}: sample generation failed: {e}");
            return Replication::failed();
        }
    };
    estimate_all(config, &draw, rep)
}

fn estimate_all(config: &McConfig, draw: &Draw, rep: u64) -> Replication {
    let mut out = Replication::failed();
    let model = match Model::new(&draw.network, &draw.data) {
        Ok(m) => m,
        Err(_) => return out,
    };
    let q1 = mc_roster_q1(&draw.network, &model.j, &draw.x);
    let q2 = match mc_roster_q2(&draw.network, &model.j, &q1) {
        Ok(q) => q,
        Err(_) => return out,
    };
    let dt = match preliminary_delta(&model, &q1.q) {
        Ok(d) => d,
        Err(e) => {
            log::debug!("replication {rep}: preliminary IV failed: {e}");
            return out;
        }
    };
    let rho = match preliminary_rho(&model, &dt) {
        Ok(r) => r.rho,
        Err(e) => {
            log::debug!("replication {rep}: preliminary rho failed: {e}");
            return out;
        }
    };
    out.rho = rho.is_finite().then_some(rho);

    let put = |out: &mut Replication, e: Estimator, r: Result<DVector<f64>>| {
        out.estimates[e as usize] = record(e, rep, r).and_then(|d| as_array(&d));
    };
    put(&mut out, Estimator::FiniteIv, classical_2sls(&model, &q1.q, rho).map(|r| r.delta));
    put(&mut out, Estimator::LargeIv, classical_2sls(&model, &q2.q, rho).map(|r| r.delta));
    let bc = Spectrum::new(&q2.q).and_then(|s| {
        let full = s.projector(&Scheme::PrincipalComponents { components: s.rank() })?;
        bias_corrected_2sls(&model, &full, rho, None).map(|r| r.delta)
    });
    put(&mut out, Estimator::BiasCorrected, bc);

    let spectrum = match normalize_columns(&q2, Normalization::UnitVariance).and_then(|q| Spectrum::new(&q.q)) {
        Ok(s) => s,
        Err(e) => {
            log::debug!("replication {rep}: normalized instruments failed: {e}");
            return out;
        }
    };
    let cfg = SelectionConfig::lambda_direction(config.criterion, model.dim());
    let ctx = match SelectionContext::new(&model, &spectrum, rho, &dt, &cfg) {
        Ok(c) => c,
        Err(e) => {
            log::debug!("replication {rep}: selection plug-ins failed: {e}");
            return out;
        }
    };
    for (slot, est) in Estimator::ALL[3..].iter().enumerate() {
        let kind = est.scheme_kind().expect("regularized estimator");
        let grid = Grid::default_for(kind, spectrum.rank(), model.dim());
        let fit = select_alpha(&ctx, &grid).and_then(|sel| {
            out.parameters[slot] = Some(sel.scheme.parameter());
            let p = spectrum.projector(&sel.scheme)?;
            regularized_2sls(&model, &p, rho).map(|r| r.delta)
        });
        put(&mut out, *est, fit);
    }
    out
}

/// Runs every replication in parallel; results are in replication order.
pub fn run(config: &McConfig) -> Result<Vec<Replication>> {
    config.validate()?;
    Ok((0..config.replications as u64)
        .into_par_iter()
        .map(|rep| run_replication(config, rep))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellSummary {
    pub mean: f64,
    pub sd: f64,
    pub rmse: f64,
    pub count: usize,
    pub failures: usize,
}

impl CellSummary {
    /// Mean, SD with divisor `R − 1` and RMSE around `truth`.
    ///
    /// Values are sorted before accumulation so the result does not depend on
    /// replication order.
    pub fn from_values(values: &[f64], truth: f64, failures: usize) -> Self {
        let mut v: Vec<f64> = values.to_vec();
        v.sort_by(f64::total_cmp);
        let r = v.len();
        if r == 0 {
            return Self {
                mean: f64::NAN,
                sd: f64::NAN,
                rmse: f64::NAN,
                count: 0,
                failures,
            };
        }
        let rf = r as f64;
        let mean = v.iter().sum::<f64>() / rf;
        let sd = if r > 1 {
            (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (rf - 1.0)).sqrt()
        } else {
            f64::NAN
        };
        let rmse = (v.iter().map(|x| (x - truth).powi(2)).sum::<f64>() / rf).sqrt();
        Self {
            mean,
            sd,
            rmse,
            count: r,
            failures,
        }
    }

    /// `Mean (SD) [RMSE]`, with `-` for an empty cell.
    pub fn display(&self) -> String {
        if self.count == 0 {
            return "-".into();
        }
        format!(
            "{} ({}) [{}]",
            crate::fmt_num(self.mean),
            crate::fmt_num(self.sd),
            crate::fmt_num(self.rmse)
        )
    }
}

pub const PARAMETER_NAMES: [&str; 4] = ["lambda", "beta1", "beta2", "rho"];

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub estimator: Estimator,
    /// λ, β₁, β₂ and ρ̃; the ρ̃ cell is only filled for the finite-IV row.
    pub cells: [Option<CellSummary>; 4],
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub config: McConfig,
    pub rows: Vec<SummaryRow>,
    /// Share of replications where LF and PC agree to 1e−8 in every
    /// coefficient, among those where both succeed.
    pub lf_pc_agreement: f64,
    /// Median selected grid parameter for T, LF and PC.
    pub median_parameters: [f64; 3],
}

impl Summary {
    pub fn row(&self, e: Estimator) -> &SummaryRow {
        &self.rows[e as usize]
    }

    pub fn cell(&self, e: Estimator, parameter: usize) -> Option<&CellSummary> {
        self.rows[e as usize].cells[parameter].as_ref()
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

pub fn summarize(config: &McConfig, reps: &[Replication]) -> Summary {
    let truth = config.truth.truth();
    let total = reps.len();
    let rows = Estimator::ALL
        .iter()
        .map(|&e| {
            let mut cells = [None; 4];
            for (p, cell) in cells.iter_mut().enumerate().take(3) {
                let vals: Vec<f64> = reps.iter().filter_map(|r| r.estimate(e)).map(|d| d[p]).collect();
                *cell = Some(CellSummary::from_values(&vals, truth[p], total - vals.len()));
            }
            if e == Estimator::FiniteIv {
                let vals: Vec<f64> = reps.iter().filter_map(|r| r.rho).collect();
                cells[3] = Some(CellSummary::from_values(&vals, truth[3], total - vals.len()));
            }
            SummaryRow { estimator: e, cells }
        })
        .collect();
    let (mut both, mut agree) = (0usize, 0usize);
    for r in reps {
        if let (Some(a), Some(b)) = (
            r.estimate(Estimator::LandweberFridman),
            r.estimate(Estimator::PrincipalComponents),
        ) {
            both += 1;
            if a.iter().zip(&b).all(|(x, y)| (x - y).abs() <= 1e-8) {
                agree += 1;
            }
        }
    }
    let median_parameters =
        [0, 1, 2].map(|k| median(reps.iter().filter_map(|r| r.parameters[k]).collect()));
    Summary {
        config: config.clone(),
        rows,
        lf_pc_agreement: if both == 0 { f64::NAN } else { agree as f64 / both as f64 },
        median_parameters,
    }
}

/// Aligned text table in `Mean (SD) [RMSE]` cells.
pub fn write_text<W: Write>(mut out: W, s: &Summary) -> Result<()> {
    let c = &s.config;
    let t = &c.truth;
    writeln!(
        out,
        "m={}  g={}  max_links={}  replications={}  seed={}",
        c.group_size, c.group_count, c.max_links, c.replications, c.seed
    )?;
    let header = [
        format!("lambda0={}", crate::fmt_num(t.lambda)),
        format!("beta10={}", crate::fmt_num(t.beta1)),
        format!("beta20={}", crate::fmt_num(t.beta2)),
        format!("rho0={}", crate::fmt_num(t.rho)),
    ];
    let body: Vec<Vec<String>> = s
        .rows
        .iter()
        .map(|r| r.cells.iter().map(|c| c.map(|c| c.display()).unwrap_or_else(|| "-".into())).collect())
        .collect();
    let mut widths = [0usize; 4];
    for (k, h) in header.iter().enumerate() {
        widths[k] = body.iter().map(|row| row[k].len()).chain([h.len()]).max().unwrap_or(0);
    }
    write!(out, "{:<20}", "")?;
    for (k, h) in header.iter().enumerate() {
        write!(out, "  {:<w$}", h, w = widths[k])?;
    }
    writeln!(out)?;
    for (row, cells) in s.rows.iter().zip(&body) {
        write!(out, "{:<20}", row.estimator.label())?;
        for (k, cell) in cells.iter().enumerate() {
            write!(out, "  {:<w$}", cell, w = widths[k])?;
        }
        writeln!(out)?;
    }
    let failures: Vec<String> = s
        .rows
        .iter()
        .filter_map(|r| r.cells[0].filter(|c| c.failures > 0).map(|c| format!("{} {}", r.estimator.key(), c.failures)))
        .collect();
    writeln!(
        out,
        "failures: {}",
        if failures.is_empty() { "none".to_string() } else { failures.join(", ") }
    )?;
    writeln!(
        out,
        "LF/PC agreement: {}  median parameter T {} LF {} PC {}",
        crate::fmt_num(s.lf_pc_agreement),
        crate::fmt_num(s.median_parameters[0]),
        crate::fmt_num(s.median_parameters[1]),
        crate::fmt_num(s.median_parameters[2])
    )?;
    Ok(())
}

pub const CSV_HEADER: [&str; 11] = [
    "group_size",
    "group_count",
    "max_links",
    "estimator",
    "parameter",
    "truth",
    "mean",
    "sd",
    "rmse",
    "count",
    "failures",
];

/// One CSV record per estimator and parameter. Set `header` for the first
/// table written to a stream.
pub fn write_csv<W: Write>(out: W, s: &Summary, header: bool) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    if header {
        wtr.write_record(CSV_HEADER)?;
    }
    let c = &s.config;
    let truth = c.truth.truth();
    for row in &s.rows {
        for (p, cell) in row.cells.iter().enumerate() {
            let Some(cell) = cell else { continue };
            wtr.write_record([
                c.group_size.to_string(),
                c.group_count.to_string(),
                c.max_links.to_string(),
                row.estimator.key().to_string(),
                PARAMETER_NAMES[p].to_string(),
                crate::fmt_num(truth[p]),
                crate::fmt_num(cell.mean),
                crate::fmt_num(cell.sd),
                crate::fmt_num(cell.rmse),
                cell.count.to_string(),
                cell.failures.to_string(),
            ])?;
        }
    }
    wtr.flush()?;
    Ok(())
}
