//! JSON experiment configuration.

use msde_core::ldp::{EventKind, EventSpec};
use msde_core::models::H2Constants;
use msde_core::monotone_ops::HalfSpace;
use msde_core::skeleton::GradientMethod;
use msde_core::{
    Control, ConvexDomain, FilledGraph, LinearMonotoneMap, Model, MonotoneOperator, PathFunctional, RateOptions,
    TimeGrid,
};
use serde::{Deserialize, Serialize};

use crate::HarnessError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub model: ModelConfig,
    #[serde(default)]
    pub domain: DomainConfig,
    #[serde(default)]
    pub operator: OperatorConfig,
    pub grid: GridConfig,
    #[serde(default)]
    pub x0: Option<Vec<f64>>,
    #[serde(default)]
    pub eps: Option<f64>,
    #[serde(default)]
    pub eps_list: Option<Vec<f64>>,
    #[serde(default)]
    pub n_paths: Option<usize>,
    #[serde(default)]
    pub event: Option<EventConfig>,
    #[serde(default)]
    pub functional: Option<FunctionalConfig>,
    #[serde(default)]
    pub target: Option<Vec<f64>>,
    #[serde(default)]
    pub control: Option<ControlConfig>,
    #[serde(default)]
    pub output_dir: Option<String>,
    #[serde(default)]
    pub options: Options,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelName {
    Brownian,
    Ou,
    Doublewell,
    Statedep,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub name: ModelName,
    #[serde(default)]
    pub dim: Option<usize>,
    #[serde(default)]
    pub noise_dim: Option<usize>,
    #[serde(default)]
    pub params: ModelParams,
    #[serde(default)]
    pub constants: Option<ConstantsConfig>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    #[serde(default)]
    pub rate: Option<f64>,
    #[serde(default)]
    pub scale: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstantsConfig {
    pub c_b: f64,
    pub c_sigma: f64,
    pub c_b_prime: f64,
    pub growth_order: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainKind {
    #[default]
    Whole,
    HalfSpace,
    HalfPlane,
    HalfLine,
    Box,
    Ball,
    Polytope,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    #[serde(default)]
    pub kind: DomainKind,
    #[serde(default)]
    pub params: DomainParams,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainParams {
    #[serde(default)]
    pub normal: Option<Vec<f64>>,
    #[serde(default)]
    pub offset: Option<f64>,
    /// `null` entries mean unbounded.
    #[serde(default)]
    pub lower: Option<Vec<Option<f64>>>,
    #[serde(default)]
    pub upper: Option<Vec<Option<f64>>>,
    #[serde(default)]
    pub center: Option<Vec<f64>>,
    #[serde(default)]
    pub radius: Option<f64>,
    #[serde(default)]
    pub faces: Option<Vec<FaceConfig>>,
    #[serde(default)]
    pub interior: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaceConfig {
    pub normal: Vec<f64>,
    pub offset: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorVariant {
    #[default]
    Indicator,
    FilledGraph,
    Sum,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorConfig {
    #[serde(default)]
    pub variant: OperatorVariant,
    #[serde(default)]
    pub breakpoints: Option<Vec<f64>>,
    #[serde(default)]
    pub intervals: Option<Vec<(f64, f64)>>,
    #[serde(default)]
    pub rate: Option<f64>,
    #[serde(default)]
    pub center: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(rename = "T")]
    pub horizon: f64,
    #[serde(rename = "N")]
    pub steps: usize,
    #[serde(rename = "M", default = "default_intervals")]
    pub intervals: usize,
}

fn default_intervals() -> usize {
    32
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKindName {
    EndpointBeyond,
    EndpointInBall,
    Tube,
    RunningMaxAbove,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventConfig {
    pub kind: EventKindName,
    #[serde(default)]
    pub id: Option<String>,
    #[serde(default)]
    pub open: bool,
    #[serde(default)]
    pub direction: Option<Vec<f64>>,
    #[serde(default)]
    pub level: Option<f64>,
    #[serde(default)]
    pub center: Option<Vec<f64>>,
    #[serde(default)]
    pub radius: Option<f64>,
    #[serde(default)]
    pub coord: Option<usize>,
    /// Control whose skeleton path is the tube centre.
    #[serde(default)]
    pub reference_control: Option<ControlConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FunctionalKind {
    Zero,
    Constant,
    EndpointDistanceCap,
    RunningMaxCap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FunctionalConfig {
    pub kind: FunctionalKind,
    #[serde(default)]
    pub value: Option<f64>,
    #[serde(default)]
    pub target: Option<Vec<f64>>,
    #[serde(default)]
    pub cap: Option<f64>,
    #[serde(default)]
    pub coord: Option<usize>,
    #[serde(default)]
    pub level: Option<f64>,
}

/// Either explicit per-interval values (`M·d` numbers) or one constant rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlConfig {
    #[serde(default)]
    pub values: Option<Vec<f64>>,
    #[serde(default)]
    pub constant: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TiltChoice {
    /// Minimizer of the endpoint rate for the event's reference target.
    #[default]
    Optimal,
    None,
    /// The `control` entry.
    Control,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientChoice {
    #[default]
    Adjoint,
    ForwardDifference,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitChoice {
    #[default]
    Affine,
    AffineLogCorrected,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Options {
    #[serde(default)]
    pub tol: Option<f64>,
    #[serde(default)]
    pub resid: Option<f64>,
    #[serde(default)]
    pub restarts: Option<usize>,
    #[serde(default)]
    pub gradient: GradientChoice,
    #[serde(default)]
    pub penalties: Option<Vec<f64>>,
    #[serde(default)]
    pub tilt: TiltChoice,
    #[serde(default)]
    pub fit: FitChoice,
    /// Probes for the solution-property checks.
    #[serde(default)]
    pub probe_count: Option<usize>,
    /// Samples for `check-ops`.
    #[serde(default)]
    pub samples: Option<usize>,
    /// Number of simulated paths written as CSV.
    #[serde(default)]
    pub write_paths: Option<usize>,
    /// Acceptance criteria to run in `suite` (all when absent).
    #[serde(default)]
    pub criteria: Option<Vec<u32>>,
}

fn missing(key: &str) -> HarnessError {
    HarnessError::Config(format!("missing key `{key}`"))
}

fn invalid(key: &str, e: impl std::fmt::Display) -> HarnessError {
    HarnessError::Config(format!("invalid `{key}`: {e}"))
}

impl ExperimentConfig {
    /// Parses and validates the model, domain and operator sections.
    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.build_model()?;
        cfg.build_operator()?;
        TimeGrid::new(cfg.grid.horizon, cfg.grid.steps).map_err(|e| invalid("grid", e))?;
        Ok(cfg)
    }

    pub fn build_model(&self) -> Result<Model, HarnessError> {
        let m = &self.model;
        let dim = m.dim.unwrap_or(1);
        let model = match m.name {
            ModelName::Brownian => Model::brownian(dim),
            ModelName::Ou => Model::ornstein_uhlenbeck(dim, m.params.rate.ok_or_else(|| missing("model.params.rate"))?),
            ModelName::Doublewell => {
                if dim != 1 {
                    return Err(invalid("model.dim", "the double-well model is one-dimensional"));
                }
                Model::double_well()
            }
            ModelName::Statedep => Model::state_dependent(dim, m.params.scale.ok_or_else(|| missing("model.params.scale"))?),
        }
        .map_err(|e| invalid("model", e))?;
        let model = match m.noise_dim {
            Some(d) => model.with_noise_dim(d).map_err(|e| invalid("model.noise_dim", e))?,
            None => model,
        };
        Ok(match m.constants {
            Some(c) => model.with_constants(H2Constants {
                c_b: c.c_b,
                c_sigma: c.c_sigma,
                c_b_prime: c.c_b_prime,
                growth_order: c.growth_order,
            }),
            None => model,
        })
    }

    pub fn dim(&self) -> usize {
        self.model.dim.unwrap_or(1)
    }

    pub fn build_domain(&self) -> Result<ConvexDomain, HarnessError> {
        let dim = self.dim();
        let p = &self.domain.params;
        let key = |k: &str| format!("domain.params.{k}");
        let domain = match self.domain.kind {
            DomainKind::Whole => ConvexDomain::whole(dim),
            DomainKind::HalfSpace => ConvexDomain::half_space(
                p.normal.clone().ok_or_else(|| missing(&key("normal")))?,
                p.offset.ok_or_else(|| missing(&key("offset")))?,
            ),
            DomainKind::HalfPlane => ConvexDomain::half_plane(dim),
            DomainKind::HalfLine => {
                if dim != 1 {
                    return Err(invalid("domain.kind", "half_line needs a one-dimensional model"));
                }
                Ok(ConvexDomain::half_line())
            }
            DomainKind::Box => {
                let unbounded = |v: &Option<Vec<Option<f64>>>, fill: f64| -> Option<Vec<f64>> {
                    v.as_ref().map(|v| v.iter().map(|b| b.unwrap_or(fill)).collect())
                };
                ConvexDomain::axis_box(
                    unbounded(&p.lower, f64::NEG_INFINITY).ok_or_else(|| missing(&key("lower")))?,
                    unbounded(&p.upper, f64::INFINITY).ok_or_else(|| missing(&key("upper")))?,
                )
            }
            DomainKind::Ball => ConvexDomain::ball(
                p.center.clone().unwrap_or_else(|| vec![0.0; dim]),
                p.radius.ok_or_else(|| missing(&key("radius")))?,
            ),
            DomainKind::Polytope => {
                let faces = p.faces.as_ref().ok_or_else(|| missing(&key("faces")))?;
                let faces = faces.iter().map(|f| HalfSpace::new(f.normal.clone(), f.offset)).collect::<Result<Vec<_>, _>>();
                ConvexDomain::polytope(
                    faces.map_err(|e| invalid(&key("faces"), e))?,
                    p.interior.clone().ok_or_else(|| missing(&key("interior")))?,
                )
            }
        }
        .map_err(|e| invalid("domain", e))?;
        if domain.dim() != dim {
            return Err(invalid("domain", format!("dimension {} does not match model dimension {dim}", domain.dim())));
        }
        match &p.interior {
            Some(a) if self.domain.kind != DomainKind::Polytope => {
                domain.with_interior_point(a.clone()).map_err(|e| invalid(&key("interior"), e))
            }
            _ => Ok(domain),
        }
    }

    pub fn build_operator(&self) -> Result<MonotoneOperator, HarnessError> {
        let o = &self.operator;
        match o.variant {
            OperatorVariant::Indicator => Ok(MonotoneOperator::indicator(self.build_domain()?)),
            OperatorVariant::FilledGraph => {
                if self.dim() != 1 || self.domain.kind != DomainKind::Whole {
                    return Err(invalid("operator.variant", "filled graphs act on the whole real line"));
                }
                let g = FilledGraph::new(
                    o.breakpoints.clone().ok_or_else(|| missing("operator.breakpoints"))?,
                    o.intervals.clone().ok_or_else(|| missing("operator.intervals"))?,
                )
                .map_err(|e| invalid("operator", e))?;
                Ok(MonotoneOperator::FilledGraph(g))
            }
            OperatorVariant::Sum => {
                let map = LinearMonotoneMap::new(
                    o.rate.ok_or_else(|| missing("operator.rate"))?,
                    o.center.clone().unwrap_or_else(|| vec![0.0; self.dim()]),
                )
                .map_err(|e| invalid("operator", e))?;
                MonotoneOperator::sum(MonotoneOperator::indicator(self.build_domain()?), map).map_err(|e| invalid("operator", e))
            }
        }
    }

    pub fn build_grid(&self) -> Result<TimeGrid, HarnessError> {
        TimeGrid::new(self.grid.horizon, self.grid.steps).map_err(|e| invalid("grid", e))
    }

    pub fn x0(&self, op: &MonotoneOperator) -> Vec<f64> {
        self.x0.clone().unwrap_or_else(|| op.interior_point())
    }

    pub fn eps(&self) -> Result<f64, HarnessError> {
        self.eps.or_else(|| self.eps_list.as_ref().and_then(|l| l.first().copied())).ok_or_else(|| missing("eps"))
    }

    pub fn eps_list(&self) -> Result<Vec<f64>, HarnessError> {
        self.eps_list.clone().or_else(|| self.eps.map(|e| vec![e])).ok_or_else(|| missing("eps_list"))
    }

    pub fn n_paths(&self) -> Result<usize, HarnessError> {
        self.n_paths.ok_or_else(|| missing("n_paths"))
    }

    pub fn target(&self) -> Result<Vec<f64>, HarnessError> {
        self.target.clone().ok_or_else(|| missing("target"))
    }

    pub fn rate_options(&self) -> RateOptions {
        let d = RateOptions::default();
        let o = &self.options;
        RateOptions {
            intervals: self.grid.intervals,
            steps: self.grid.steps,
            tol: o.tol.unwrap_or(d.tol),
            resid: o.resid.unwrap_or(d.resid),
            restarts: o.restarts.unwrap_or(d.restarts),
            seed: self.seed,
            gradient: match o.gradient {
                GradientChoice::Adjoint => GradientMethod::Adjoint,
                GradientChoice::ForwardDifference => GradientMethod::ForwardDifference,
            },
            penalties: o.penalties.clone().unwrap_or(d.penalties),
            ..d
        }
    }

    pub fn build_control(&self, c: Option<&ControlConfig>, key: &str) -> Result<Control, HarnessError> {
        let c = c.ok_or_else(|| missing(key))?;
        let (t, m) = (self.grid.horizon, self.grid.intervals);
        let d = self.model.noise_dim.unwrap_or(self.dim());
        match (&c.values, &c.constant) {
            (Some(v), None) => Control::new(t, m, d, v.clone()),
            (None, Some(r)) => Control::constant(t, m, r),
            _ => return Err(invalid(key, "give exactly one of `values` and `constant`")),
        }
        .map_err(|e| invalid(key, e))
    }

    pub fn build_event(&self, model: &Model, op: &MonotoneOperator) -> Result<EventSpec, HarnessError> {
        let e = self.event.as_ref().ok_or_else(|| missing("event"))?;
        let id = e.id.clone().unwrap_or_else(|| format!("{:?}", e.kind).to_lowercase());
        let req = |v: Option<f64>, k: &str| v.ok_or_else(|| missing(&format!("event.{k}")));
        let kind = match e.kind {
            EventKindName::EndpointBeyond => EventKind::EndpointBeyond {
                direction: e.direction.clone().unwrap_or_else(|| unit(self.dim())),
                level: req(e.level, "level")?,
            },
            EventKindName::EndpointInBall => EventKind::EndpointInBall {
                center: e.center.clone().ok_or_else(|| missing("event.center"))?,
                radius: req(e.radius, "radius")?,
            },
            EventKindName::Tube => {
                let h = self.build_control(e.reference_control.as_ref(), "event.reference_control")?;
                let reference = msde_core::skeleton::solve_skeleton(model, op, &self.x0(op), &h, self.build_grid()?)
                    .map_err(HarnessError::Numerical)?;
                EventKind::Tube { reference, radius: req(e.radius, "radius")? }
            }
            EventKindName::RunningMaxAbove => {
                EventKind::RunningMaxAbove { coord: e.coord.unwrap_or(0), level: req(e.level, "level")? }
            }
        };
        let spec = EventSpec::new(id, kind, e.open);
        spec.validate(self.dim(), self.build_grid()?).map_err(|err| invalid("event", err))?;
        Ok(spec)
    }

    pub fn build_functional(&self) -> Result<PathFunctional, HarnessError> {
        let f = self.functional.as_ref().ok_or_else(|| missing("functional"))?;
        let req = |v: Option<f64>, k: &str| v.ok_or_else(|| missing(&format!("functional.{k}")));
        let g = match f.kind {
            FunctionalKind::Zero => PathFunctional::Zero,
            FunctionalKind::Constant => PathFunctional::Constant(req(f.value, "value")?),
            FunctionalKind::EndpointDistanceCap => PathFunctional::EndpointDistanceCap {
                target: f.target.clone().ok_or_else(|| missing("functional.target"))?,
                cap: req(f.cap, "cap")?,
            },
            FunctionalKind::RunningMaxCap => {
                PathFunctional::RunningMaxCap { coord: f.coord.unwrap_or(0), level: req(f.level, "level")?, cap: req(f.cap, "cap")? }
            }
        };
        g.validate(self.dim()).map_err(|e| invalid("functional", e))?;
        Ok(g)
    }
}

fn unit(dim: usize) -> Vec<f64> {
    let mut v = vec![0.0; dim];
    v[0] = 1.0;
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    const OU: &str = r#"{
        "seed": 7,
        "model": {"name": "ou", "params": {"rate": 1.0}},
        "domain": {"kind": "half_line"},
        "grid": {"T": 1.0, "N": 512},
        "x0": [0.0],
        "target": [1.0]
    }"#;

    #[test]
    fn parses_minimal_config() {
        let cfg = ExperimentConfig::from_json(OU).unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.grid.intervals, 32);
        assert_eq!(cfg.build_model().unwrap().name(), "ou");
        assert_eq!(cfg.build_operator().unwrap().dim(), 1);
    }

    #[test]
    fn missing_seed_is_named() {
        let text = OU.replace("\"seed\": 7,", "");
        let err = ExperimentConfig::from_json(&text).unwrap_err();
        assert!(err.to_string().contains("seed"), "{err}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = OU.replace("\"seed\": 7,", "\"seed\": 7, \"sede\": 1,");
        assert!(ExperimentConfig::from_json(&text).unwrap_err().to_string().contains("sede"));
        let text = OU.replace("\"rate\": 1.0", "\"rate\": 1.0, \"drift\": 2");
        assert!(ExperimentConfig::from_json(&text).is_err());
    }

    #[test]
    fn domain_kinds() {
        let mk = |domain: &str, dim: usize| {
            format!(r#"{{"seed": 1, "model": {{"name": "brownian", "dim": {dim}}}, "domain": {domain}, "grid": {{"T": 1, "N": 4}}}}"#)
        };
        for (d, dim) in [
            (r#"{"kind": "whole"}"#, 2),
            (r#"{"kind": "half_plane"}"#, 2),
            (r#"{"kind": "half_space", "params": {"normal": [1, 1], "offset": 1}}"#, 2),
            (r#"{"kind": "box", "params": {"lower": [0, null], "upper": [1, 2]}}"#, 2),
            (r#"{"kind": "ball", "params": {"radius": 2}}"#, 3),
            (r#"{"kind": "polytope", "params": {"faces": [{"normal": [-1, 0], "offset": 0}, {"normal": [0, -1], "offset": 0}, {"normal": [1, 1], "offset": 1}], "interior": [0.2, 0.2]}}"#, 2),
        ] {
            ExperimentConfig::from_json(&mk(d, dim)).unwrap_or_else(|e| panic!("{d}: {e}"));
        }
        assert!(ExperimentConfig::from_json(&mk(r#"{"kind": "ball", "params": {"radius": -1}}"#, 2)).is_err());
        assert!(ExperimentConfig::from_json(&mk(r#"{"kind": "half_line"}"#, 2)).is_err());
    }

    #[test]
    fn operator_variants() {
        let text = r#"{"seed": 1, "model": {"name": "brownian"}, "operator": {"variant": "filled_graph",
            "breakpoints": [0], "intervals": [[-1, 1]]}, "grid": {"T": 1, "N": 4}}"#;
        let op = ExperimentConfig::from_json(text).unwrap().build_operator().unwrap();
        assert_eq!(op.resolvent(1.0, &[0.5]).unwrap(), vec![0.0]);
        let text = r#"{"seed": 1, "model": {"name": "brownian", "dim": 2}, "domain": {"kind": "ball", "params": {"radius": 1}},
            "operator": {"variant": "sum", "rate": 2}, "grid": {"T": 1, "N": 4}}"#;
        ExperimentConfig::from_json(text).unwrap();
    }
}
