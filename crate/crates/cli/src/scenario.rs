//! Run descriptions: presets, configuration files, and flag overrides.
//!
//! A [`Scenario`] is fully resolved: every physical parameter, the grid, the
//! realization count, the seed, and the worker count. Serializing it into the
//! run manifest is what makes a run reproducible bit for bit.

use std::path::Path;

use noisychain::model::{InitialState, TimeGrid};
use noisychain::montecarlo::{NoiseMapping, NoiseSpec};
use noisychain::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("{0}")]
    Invalid(String),
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot parse config: {0}")]
    Parse(#[from] toml::de::Error),
}

fn invalid<T>(msg: impl Into<String>) -> Result<T, ScenarioError> {
    Err(ScenarioError::Invalid(msg.into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum Kind {
    TwoMode,
    Avalanche,
    Quench,
    Custom,
}

impl Kind {
    pub fn name(self) -> &'static str {
        match self {
            Kind::TwoMode => "two_mode",
            Kind::Avalanche => "avalanche",
            Kind::Quench => "quench",
            Kind::Custom => "custom",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mapping {
    AlgebraConsistent,
    RealQuadrature,
}

impl Mapping {
    fn parse(s: &str) -> Result<Mapping, ScenarioError> {
        match s {
            "algebra-consistent" => Ok(Mapping::AlgebraConsistent),
            "real-quadrature" => Ok(Mapping::RealQuadrature),
            other => invalid(format!(
                "unknown mapping {other:?}; expected \"algebra-consistent\" or \"real-quadrature\""
            )),
        }
    }
}

impl From<Mapping> for NoiseMapping {
    fn from(m: Mapping) -> NoiseMapping {
        match m {
            Mapping::AlgebraConsistent => NoiseMapping::AlgebraConsistent,
            Mapping::RealQuadrature => NoiseMapping::RealQuadrature,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum MethodChoice {
    Moments,
    Montecarlo,
    Fock,
    All,
}

impl MethodChoice {
    pub fn name(self) -> &'static str {
        match self {
            MethodChoice::Moments => "moments",
            MethodChoice::Montecarlo => "montecarlo",
            MethodChoice::Fock => "fock",
            MethodChoice::All => "all",
        }
    }

    fn parse(s: &str) -> Result<MethodChoice, ScenarioError> {
        match s {
            "moments" => Ok(MethodChoice::Moments),
            "montecarlo" => Ok(MethodChoice::Montecarlo),
            "fock" => Ok(MethodChoice::Fock),
            "all" => Ok(MethodChoice::All),
            other => invalid(format!(
                "unknown method {other:?}; expected moments, montecarlo, fock, or all"
            )),
        }
    }
}

/// Fully resolved run description. `photon_mode` is 1-based, matching every
/// user-facing mode label; the constructors below convert where the library
/// expects 0-based indices.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Scenario {
    pub kind: Kind,
    pub method: MethodChoice,
    pub n_modes: usize,
    /// Mean coupling per link as `[re, im]`.
    pub v_bar: Vec<[f64; 2]>,
    /// Resolved noise amplitude per interval.
    pub sigma: f64,
    /// Echo of the requested effective decay rate, when sigma came from one.
    pub gamma_target: Option<f64>,
    pub ellipticity: f64,
    pub mapping: Mapping,
    /// Coherent amplitude per mode as `[re, im]`.
    pub alpha: Vec<[f64; 2]>,
    /// 1-based mode carrying the injected photon, if any.
    pub photon_mode: Option<usize>,
    pub t_max: f64,
    pub n_steps: usize,
    pub realizations: u64,
    pub seed: u64,
    pub workers: usize,
}

impl Scenario {
    /// Built-in parameter sets. `two_mode` relaxes a seeded pair toward the
    /// correlated plateau, `avalanche` grows mode correlations link by link
    /// along a driven chain, `quench` interrupts that growth with a single
    /// photon, and `custom` is a small template meant to be overridden by a
    /// config file.
    pub fn preset(kind: Kind) -> Scenario {
        let (n_modes, v_bar, nu, alpha1, photon, t_max, n_steps, k) = match kind {
            Kind::TwoMode | Kind::Custom => (2, 0.0, 0.0, 1.0, None, 10.0, 300, 5_000),
            Kind::Avalanche => (15, 5.0, 0.5, 10.0, None, 1.0, 300, 300_000),
            Kind::Quench => (15, 0.0, 1.0, 10.0, Some(5), 1.0, 300, 300_000),
        };
        let mut scn = Scenario {
            kind,
            method: MethodChoice::All,
            n_modes,
            v_bar: vec![[v_bar, 0.0]; n_modes - 1],
            sigma: 0.0,
            gamma_target: Some(1.0),
            ellipticity: nu,
            mapping: Mapping::AlgebraConsistent,
            alpha: one_hot(n_modes, alpha1),
            photon_mode: photon,
            t_max,
            n_steps,
            realizations: k,
            seed: 11,
            workers: 1,
        };
        scn.resolve_sigma();
        scn
    }

    /// Recomputes `sigma` from `gamma_target` for the current grid and
    /// mapping. No-op when sigma was given directly.
    pub fn resolve_sigma(&mut self) {
        if let Some(g) = self.gamma_target {
            let dt = self.t_max / self.n_steps as f64;
            let nu2 = self.ellipticity * self.ellipticity;
            let scale = match self.mapping {
                Mapping::AlgebraConsistent => 0.5 * (1.0 + nu2),
                Mapping::RealQuadrature => 1.0,
            };
            self.sigma = (g / (scale * dt)).sqrt();
        }
    }

    /// Applies a config file on top of this scenario, then revalidates.
    pub fn with_config(mut self, path: &Path) -> Result<Scenario, ScenarioError> {
        let text = std::fs::read_to_string(path)?;
        let cfg: ConfigFile = toml::from_str(&text)?;
        cfg.apply(&mut self)?;
        self.resolve_sigma();
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.n_modes < 2 {
            return invalid("need at least two modes");
        }
        if self.v_bar.len() != self.n_modes - 1 {
            return invalid(format!(
                "{} mean couplings given but {} modes have {} links",
                self.v_bar.len(),
                self.n_modes,
                self.n_modes - 1
            ));
        }
        if self.alpha.len() != self.n_modes {
            return invalid(format!(
                "{} coherent amplitudes given for {} modes",
                self.alpha.len(),
                self.n_modes
            ));
        }
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return invalid(format!("noise amplitude must be positive, got {}", self.sigma));
        }
        if !(self.ellipticity.is_finite() && self.ellipticity >= 0.0) {
            return invalid(format!(
                "ellipticity must be nonnegative, got {}",
                self.ellipticity
            ));
        }
        if !(self.t_max.is_finite() && self.t_max > 0.0) || self.n_steps == 0 {
            return invalid(format!(
                "time grid needs t_max > 0 and n_steps > 0, got t_max={} n_steps={}",
                self.t_max, self.n_steps
            ));
        }
        if self.realizations == 0 {
            return invalid("need at least one realization");
        }
        if self.workers == 0 {
            return invalid("need at least one worker");
        }
        if let Some(m1) = self.photon_mode {
            if m1 == 0 || m1 > self.n_modes {
                return invalid(format!(
                    "photon mode {m1} out of range for {} modes",
                    self.n_modes
                ));
            }
        }
        for (j, a) in self.alpha.iter().enumerate() {
            if !(a[0].is_finite() && a[1].is_finite()) {
                return invalid(format!("amplitude for mode {} is not finite", j + 1));
            }
        }
        for (j, v) in self.v_bar.iter().enumerate() {
            if !(v[0].is_finite() && v[1].is_finite()) {
                return invalid(format!("mean coupling on link {} is not finite", j + 1));
            }
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        self.t_max / self.n_steps as f64
    }

    pub fn noise(&self) -> Result<NoiseSpec, ScenarioError> {
        let mean: Vec<Complex64> = self
            .v_bar
            .iter()
            .map(|c| Complex64::new(c[0], c[1]))
            .collect();
        NoiseSpec::new(mean, self.sigma, self.ellipticity, self.mapping.into())
            .map_err(|e| ScenarioError::Invalid(e.to_string()))
    }

    pub fn initial(&self) -> Result<InitialState, ScenarioError> {
        let alpha: Vec<Complex64> = self
            .alpha
            .iter()
            .map(|c| Complex64::new(c[0], c[1]))
            .collect();
        match self.photon_mode {
            Some(m1) => InitialState::with_photon(alpha, m1 - 1),
            None => InitialState::coherent(alpha),
        }
        .map_err(|e| ScenarioError::Invalid(e.to_string()))
    }

    pub fn grid(&self) -> Result<TimeGrid, ScenarioError> {
        TimeGrid::new(self.t_max, self.n_steps).map_err(|e| ScenarioError::Invalid(e.to_string()))
    }
}

fn one_hot(n: usize, a: f64) -> Vec<[f64; 2]> {
    let mut v = vec![[0.0, 0.0]; n];
    v[0] = [a, 0.0];
    v
}

/// A complex number in a config file: either a bare float or `[re, im]`.
#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(untagged)]
enum CNum {
    Real(f64),
    Pair([f64; 2]),
}

impl CNum {
    fn pair(self) -> [f64; 2] {
        match self {
            CNum::Real(x) => [x, 0.0],
            CNum::Pair(p) => p,
        }
    }
}

/// One complex value applied uniformly, or one value per entry.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum CList {
    Uniform(f64),
    PerEntry(Vec<CNum>),
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    chain: Option<ChainSection>,
    initial: Option<InitialSection>,
    grid: Option<GridSection>,
    run: Option<RunSection>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ChainSection {
    n_modes: Option<usize>,
    v_bar: Option<CList>,
    sigma: Option<f64>,
    gamma_target: Option<f64>,
    ellipticity: Option<f64>,
    mapping: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct InitialSection {
    alpha: Option<CList>,
    /// 1-based mode receiving a scalar `alpha`; defaults to mode 1.
    seed_mode: Option<usize>,
    /// 1-based; absent means no injected photon, 0 clears a preset's photon.
    photon_mode: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridSection {
    t_max: Option<f64>,
    n_steps: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunSection {
    realizations: Option<u64>,
    seed: Option<u64>,
    workers: Option<usize>,
    method: Option<String>,
}

impl ConfigFile {
    fn apply(self, scn: &mut Scenario) -> Result<(), ScenarioError> {
        if let Some(chain) = self.chain {
            if let Some(m) = chain.n_modes {
                if m < 2 {
                    return invalid("chain.n_modes must be at least 2");
                }
                if m != scn.n_modes {
                    // Resizing invalidates per-mode/per-link lists unless the
                    // config replaces them; start from silent defaults.
                    scn.n_modes = m;
                    scn.v_bar = vec![[0.0, 0.0]; m - 1];
                    scn.alpha = vec![[0.0, 0.0]; m];
                    if scn.photon_mode.map_or(false, |p| p > m) {
                        scn.photon_mode = None;
                    }
                }
            }
            if let Some(v) = chain.v_bar {
                scn.v_bar = match v {
                    CList::Uniform(x) => vec![[x, 0.0]; scn.n_modes - 1],
                    CList::PerEntry(list) => {
                        if list.len() == 1 {
                            vec![list[0].pair(); scn.n_modes - 1]
                        } else {
                            list.into_iter().map(CNum::pair).collect()
                        }
                    }
                };
            }
            match (chain.sigma, chain.gamma_target) {
                (Some(_), Some(_)) => {
                    return invalid("chain.sigma and chain.gamma_target are mutually exclusive")
                }
                (Some(s), None) => {
                    scn.sigma = s;
                    scn.gamma_target = None;
                }
                (None, Some(g)) => scn.gamma_target = Some(g),
                (None, None) => {}
            }
            if let Some(nu) = chain.ellipticity {
                scn.ellipticity = nu;
            }
            if let Some(m) = chain.mapping {
                scn.mapping = Mapping::parse(&m)?;
            }
        }
        if let Some(init) = self.initial {
            if let Some(a) = init.alpha {
                scn.alpha = match a {
                    CList::Uniform(x) => {
                        let seed = init.seed_mode.unwrap_or(1);
                        if seed == 0 || seed > scn.n_modes {
                            return invalid(format!(
                                "initial.seed_mode {seed} out of range for {} modes",
                                scn.n_modes
                            ));
                        }
                        let mut v = vec![[0.0, 0.0]; scn.n_modes];
                        v[seed - 1] = [x, 0.0];
                        v
                    }
                    CList::PerEntry(list) => list.into_iter().map(CNum::pair).collect(),
                };
            } else if init.seed_mode.is_some() {
                return invalid("initial.seed_mode is only meaningful with a scalar initial.alpha");
            }
            if let Some(p) = init.photon_mode {
                scn.photon_mode = if p == 0 { None } else { Some(p) };
            }
        }
        if let Some(grid) = self.grid {
            if let Some(t) = grid.t_max {
                scn.t_max = t;
            }
            if let Some(n) = grid.n_steps {
                scn.n_steps = n;
            }
        }
        if let Some(run) = self.run {
            if let Some(k) = run.realizations {
                scn.realizations = k;
            }
            if let Some(s) = run.seed {
                scn.seed = s;
            }
            if let Some(w) = run.workers {
                scn.workers = w;
            }
            if let Some(m) = run.method {
                scn.method = MethodChoice::parse(&m)?;
            }
        }
        scn.kind = Kind::Custom;
        Ok(())
    }
}
