//! JSON run configuration: one optional block per experiment kind, all fields defaulted.

use lorentz_core::coefficients::Method;
use lorentz_core::dynamics::{SimulationParams, StepControl};
use lorentz_core::ensemble::{CutoffMode, EnsembleSpec, LawReference, PdeResolution, SmoothObservable};
use lorentz_core::{PotentialModel, Vec2};
use serde::{Deserialize, Serialize};
use std::path::PathBuf;

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub simulate: Option<SimulateConfig>,
    #[serde(default)]
    pub zeta: Option<ZetaConfig>,
    #[serde(default)]
    pub landau: Option<LandauConfig>,
    #[serde(default)]
    pub boltzmann: Option<BoltzmannConfig>,
    #[serde(default)]
    pub law: Option<LawConfig>,
    #[serde(default)]
    pub expectation: Option<ExpectationConfig>,
    #[serde(default)]
    pub doublets: Option<DoubletsConfig>,
    #[serde(default)]
    pub recollision: Option<RecollisionConfig>,
    #[serde(default, rename = "scatter-table")]
    pub scatter_table: Option<ScatterTableConfig>,
}

fn ensemble_step() -> StepControl {
    StepControl::ensemble()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub eps: f64,
    pub alpha: f64,
    pub rho: f64,
    pub horizon: f64,
    pub x0: Vec2,
    /// Initial velocity angle; `|v0| = 1`.
    pub theta0: f64,
    pub potential: PotentialModel,
    pub step: StepControl,
    pub cutoffs: CutoffMode,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        SimulateConfig {
            eps: 1e-2,
            alpha: 0.3,
            rho: 1.0,
            horizon: 1.0,
            x0: Vec2::ZERO,
            theta0: 0.0,
            potential: PotentialModel::default(),
            step: StepControl::default(),
            cutoffs: CutoffMode::Standard,
        }
    }
}

impl SimulateConfig {
    pub fn params(&self, seed: u64) -> SimulationParams {
        SimulationParams {
            eps: self.eps,
            alpha: self.alpha,
            rho: self.rho,
            v0: Vec2::from_angle(self.theta0),
            x0: self.x0,
            horizon: self.horizon,
            step: self.step,
            seed,
            potential: self.potential,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McConfig {
    pub eps: f64,
    /// Defaults to the block's `alpha`.
    pub alpha: Option<f64>,
    pub n_traj: usize,
    pub times: Vec<f64>,
    #[serde(default = "ensemble_step")]
    pub step: StepControl,
    pub cutoffs: CutoffMode,
}

impl Default for McConfig {
    fn default() -> Self {
        McConfig { eps: 1e-3, alpha: None, n_traj: 1000, times: vec![0.5, 1.0], step: StepControl::ensemble(), cutoffs: CutoffMode::Standard }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ZetaConfig {
    pub potential: PotentialModel,
    pub rho: f64,
    pub alpha: f64,
    pub eps_list: Vec<f64>,
    pub methods: Vec<Method>,
    pub mc: McConfig,
}

impl Default for ZetaConfig {
    fn default() -> Self {
        ZetaConfig {
            potential: PotentialModel::default(),
            rho: 1.0,
            alpha: 0.5,
            eps_list: vec![1e-3, 1e-4, 1e-5],
            methods: vec![Method::QuadratureZeta, Method::LimitDefn, Method::Fourier, Method::TrajectoryMc],
            mc: McConfig::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LandauMode {
    Velocity,
    Phase,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LandauConfig {
    pub mode: LandauMode,
    pub zeta: f64,
    pub t: f64,
    /// Velocity mode: point mass at `theta0`.
    pub theta0: f64,
    pub order: usize,
    /// Points of the density CSV.
    pub grid: usize,
    /// Phase mode: initial datum on `[0, L)²`.
    pub initial: SmoothObservable,
    pub resolution: PdeResolution,
}

impl Default for LandauConfig {
    fn default() -> Self {
        LandauConfig {
            mode: LandauMode::Velocity,
            zeta: 1.0,
            t: 1.0,
            theta0: 0.0,
            order: lorentz_core::kinetic::DEFAULT_ORDER,
            grid: lorentz_core::kinetic::DEFAULT_NTHETA,
            initial: SmoothObservable { constant: 2.0, m: 1, kx: 1, ky: 0, box_size: 4.0 },
            resolution: PdeResolution::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoltzmannConfig {
    pub potential: PotentialModel,
    pub eps: f64,
    pub alpha: f64,
    pub rho: f64,
    pub t: f64,
    pub n_samples: usize,
    pub theta0: f64,
    pub order: usize,
    pub grid: usize,
    /// Poisson tail tolerance fixing the number of series terms.
    pub series_tol: f64,
}

impl Default for BoltzmannConfig {
    fn default() -> Self {
        BoltzmannConfig {
            potential: PotentialModel::default(),
            eps: 1e-3,
            alpha: 0.5,
            rho: 1.0,
            t: 0.1,
            n_samples: 10_000,
            theta0: 0.0,
            order: 64,
            grid: 512,
            series_tol: 1e-10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleConfig {
    pub potential: PotentialModel,
    pub rho: f64,
    pub x0: Vec2,
    pub theta0: f64,
    #[serde(default = "ensemble_step")]
    pub step: StepControl,
    pub n_traj: usize,
    pub eps_sweep: Vec<f64>,
    pub alpha_sweep: Vec<f64>,
    pub times: Vec<f64>,
    pub cutoffs: CutoffMode,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        EnsembleConfig {
            potential: PotentialModel::default(),
            rho: 1.0,
            x0: Vec2::ZERO,
            theta0: 0.0,
            step: StepControl::ensemble(),
            n_traj: 1000,
            eps_sweep: vec![1e-2, 3e-3, 1e-3],
            alpha_sweep: vec![0.25],
            times: vec![0.5, 1.0],
            cutoffs: CutoffMode::Standard,
        }
    }
}

impl EnsembleConfig {
    pub fn spec(&self, seed: u64) -> EnsembleSpec {
        let horizon = self.times.iter().cloned().fold(0.0, f64::max);
        let base = SimulationParams {
            eps: self.eps_sweep.first().copied().unwrap_or(f64::NAN),
            alpha: self.alpha_sweep.first().copied().unwrap_or(f64::NAN),
            rho: self.rho,
            v0: Vec2::from_angle(self.theta0),
            x0: self.x0,
            horizon,
            step: self.step,
            seed: 0,
            potential: self.potential,
        };
        let mut s = EnsembleSpec::new(base, self.n_traj, self.eps_sweep.clone(), self.alpha_sweep.clone(), self.times.clone(), seed);
        s.cutoffs = self.cutoffs;
        s
    }
}

fn smallest_eps_mc() -> LawReference {
    LawReference::SmallestEpsMc
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LawConfig {
    pub ensemble: EnsembleConfig,
    #[serde(default = "smallest_eps_mc")]
    pub reference: LawReference,
}

impl Default for LawConfig {
    fn default() -> Self {
        LawConfig { ensemble: EnsembleConfig::default(), reference: LawReference::SmallestEpsMc }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExpectationConfig {
    pub ensemble: EnsembleConfig,
    pub observable: SmoothObservable,
    /// `None`: trajectory-MC value at the smallest ε of the sweep.
    pub zeta_ref: Option<f64>,
    pub resolution: PdeResolution,
}

impl Default for ExpectationConfig {
    fn default() -> Self {
        ExpectationConfig {
            ensemble: EnsembleConfig::default(),
            observable: SmoothObservable::cos_angle(),
            zeta_ref: None,
            resolution: PdeResolution::default(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DoubletsConfig {
    pub ensemble: EnsembleConfig,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RecollisionConfig {
    pub ensemble: EnsembleConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScatterTableConfig {
    pub potential: PotentialModel,
    pub eps: f64,
    pub alpha: f64,
    /// Clenshaw–Curtis order of the `b` grid (even, ≥ 8).
    pub order: usize,
    pub step: StepControl,
    /// Points of the cross-section CSV.
    pub cross_section_points: usize,
}

impl Default for ScatterTableConfig {
    fn default() -> Self {
        ScatterTableConfig {
            potential: PotentialModel::default(),
            eps: 1e-3,
            alpha: 0.3,
            order: lorentz_core::scattering::TABLE_ORDER,
            step: StepControl::default(),
            cross_section_points: 401,
        }
    }
}
