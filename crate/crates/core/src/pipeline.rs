//! End-to-end estimation on a network and a panel: preliminary fit, `ρ̃`,
//! the large instrument set, and the chosen second stage.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::estimation::{
    bias_corrected_2sls, classical_2sls, preliminary_delta, preliminary_rho, regularized_2sls,
    EstimationResult, Model, RhoEstimate,
};
use crate::graphs::GroupedNetwork;
use crate::identification::{distinct_eigenvalues_blocks, DEFAULT_EIGEN_TOL};
use crate::instruments::{build_instruments, default_order, normalize_columns, InstrumentSet, Normalization};
use crate::regularization::{Scheme, SchemeKind, Spectrum};
use crate::selection::{select_alpha, Criterion, Grid, Selection, SelectionConfig, SelectionContext};
use crate::transforms::PanelData;

#[derive(Debug, Clone, PartialEq)]
pub struct InstrumentOptions {
    /// Highest power of `W`; `None` picks it from the eigenvalue count.
    pub order: Option<usize>,
    pub bonacich: bool,
    pub m_lags: bool,
    pub normalization: Normalization,
}

impl Default for InstrumentOptions {
    fn default() -> Self {
        Self {
            order: None,
            bonacich: true,
            m_lags: true,
            normalization: Normalization::UnitVariance,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Method {
    Classical,
    BiasCorrected,
    /// `parameter` fixes the regularization parameter; otherwise it is
    /// selected over `grid` (or the default grid) by `criterion`.
    Regularized {
        kind: SchemeKind,
        parameter: Option<f64>,
        criterion: Criterion,
        grid: Option<Vec<f64>>,
    },
}

pub struct FirstStage<'a> {
    pub model: Model<'a>,
    pub delta_tilde: DVector<f64>,
    pub rho: RhoEstimate,
    pub instruments: InstrumentSet,
    pub spectrum: Spectrum,
}

pub fn first_stage<'a>(
    network: &'a GroupedNetwork,
    data: &'a PanelData,
    opts: &InstrumentOptions,
) -> Result<FirstStage<'a>> {
    let model = Model::new(network, data)?;
    let small = build_instruments(network, &model.j, &data.x, 1, false, true)?;
    let delta_tilde = preliminary_delta(&model, &small.q)?;
    let rho = preliminary_rho(&model, &delta_tilde)?;
    let order = match opts.order {
        Some(o) => o,
        None => default_order(distinct_eigenvalues_blocks(network.w(), DEFAULT_EIGEN_TOL).ok().map(|(c, _)| c)),
    };
    let raw = build_instruments(network, &model.j, &data.x, order, opts.bonacich, opts.m_lags)?;
    let instruments = normalize_columns(&raw, opts.normalization)?;
    let spectrum = Spectrum::new(&instruments.q)?;
    Ok(FirstStage {
        model,
        delta_tilde,
        rho,
        instruments,
        spectrum,
    })
}

impl FirstStage<'_> {
    pub fn selection_context(&self, criterion: Criterion) -> Result<SelectionContext<'_>> {
        let cfg = SelectionConfig::lambda_direction(criterion, self.model.dim());
        SelectionContext::new(&self.model, &self.spectrum, self.rho.rho, &self.delta_tilde, &cfg)
    }

    pub fn grid(&self, kind: SchemeKind, values: Option<&[f64]>) -> Result<Grid> {
        match values {
            Some(v) => Grid::new(kind, v.to_vec()),
            None => Ok(Grid::default_for(kind, self.spectrum.rank(), self.model.dim())),
        }
    }

    pub fn select(&self, kind: SchemeKind, criterion: Criterion, grid: Option<&[f64]>) -> Result<Selection> {
        let ctx = self.selection_context(criterion)?;
        select_alpha(&ctx, &self.grid(kind, grid)?)
    }

    pub fn estimate(&self, method: &Method) -> Result<EstimationResult> {
        let rho = self.rho.rho;
        match method {
            Method::Classical => classical_2sls(&self.model, &self.instruments.q, rho),
            Method::BiasCorrected => {
                let full = self.spectrum.projector(&Scheme::PrincipalComponents {
                    components: self.spectrum.rank(),
                })?;
                bias_corrected_2sls(&self.model, &full, rho, None)
            }
            Method::Regularized {
                kind,
                parameter,
                criterion,
                grid,
            } => {
                if parameter.is_some() && grid.is_some() {
                    return Err(Error::InvalidArgument("give a parameter or a grid, not both".into()));
                }
                let scheme = match parameter {
                    Some(v) => Scheme::from_parameter(*kind, *v, self.spectrum.default_lf_step())?,
                    None => self.select(*kind, *criterion, grid.as_deref())?.scheme,
                };
                regularized_2sls(&self.model, &self.spectrum.projector(&scheme)?, rho)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::montecarlo::{draw_sample, McConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn pc_full_matches_classical() {
        let cfg = McConfig::new(10, 10, 3);
        let d = draw_sample(&cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let fs = first_stage(&d.network, &d.data, &InstrumentOptions::default()).unwrap();
        let classical = fs.estimate(&Method::Classical).unwrap();
        let pc = fs
            .estimate(&Method::Regularized {
                kind: SchemeKind::PrincipalComponents,
                parameter: Some(fs.spectrum.rank() as f64),
                criterion: Criterion::MallowsCp,
                grid: None,
            })
            .unwrap();
        assert!((classical.delta - pc.delta).amax() < 1e-8);
    }

    #[test]
    fn parameter_and_grid_conflict() {
        let cfg = McConfig::new(6, 8, 3);
        let d = draw_sample(&cfg, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let fs = first_stage(&d.network, &d.data, &InstrumentOptions::default()).unwrap();
        let m = Method::Regularized {
            kind: SchemeKind::Tikhonov,
            parameter: Some(0.1),
            criterion: Criterion::Gcv,
            grid: Some(vec![0.1, 1.0]),
        };
        assert!(matches!(fs.estimate(&m), Err(Error::InvalidArgument(_))));
    }
}
