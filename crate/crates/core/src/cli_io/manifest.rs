//! Run manifests: JSON documents layered over a named preset.
//!
//! A manifest picks a `scenario`; the preset for that scenario supplies
//! every field and the user's keys are merged on top. Errors carry the
//! JSON pointer of the offending key.

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::coupling::CouplingConfig;
use crate::error::{KmfgError, Result};
use crate::hamiltonian::{HamiltonianConfig, HamiltonianKind};
use crate::hjb::NumericalHamiltonian;
use crate::kolmogorov::{OperatorConfig, TransportScheme};
use crate::mfg::MfgConfig;
use crate::oracle::KineticGaussian;
use crate::phase_grid::{build_grid, GridConfig, PhaseGrid};

pub const DEFAULT_SCENARIO: &str = "lipschitz-linear-coupling";
pub const SCENARIOS: [&str; 3] = ["decoupled-kolmogorov", "lipschitz-linear-coupling", "quadratic-continuation"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    pub mean_x: f64,
    pub mean_v: f64,
    pub sigma_x: f64,
    pub sigma_v: f64,
}

impl InitialConfig {
    pub fn law(&self) -> KineticGaussian {
        KineticGaussian::isotropic(self.mean_x, self.mean_v, self.sigma_x, self.sigma_v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorSection {
    pub hjb_transport: TransportScheme,
    pub fp_transport: TransportScheme,
    pub cfl_safety: f64,
    pub hjb_scheme: NumericalHamiltonian,
}

impl OperatorSection {
    pub fn hjb(&self) -> OperatorConfig {
        OperatorConfig {
            transport: self.hjb_transport,
            v_implicit: true,
            cfl_safety: self.cfl_safety,
        }
    }

    pub fn fp(&self) -> OperatorConfig {
        OperatorConfig {
            transport: self.fp_transport,
            v_implicit: true,
            cfl_safety: self.cfl_safety,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub scenario: String,
    pub grid: GridConfig,
    pub hamiltonian: HamiltonianConfig,
    pub coupling: CouplingConfig,
    pub initial: InitialConfig,
    pub operator: OperatorSection,
    pub mfg: MfgConfig,
    pub seed: u64,
    pub output_dir: String,
}

/// Full document for a named scenario.
pub fn preset(name: &str) -> Option<Value> {
    let operator = json!({
        "hjb_transport": "semi_lagrangian",
        "fp_transport": "semi_lagrangian_limited",
        "cfl_safety": 0.9,
        "hjb_scheme": "upwind_godunov"
    });
    let mfg = serde_json::to_value(MfgConfig::default()).expect("serializable");
    let doc = match name {
        "decoupled-kolmogorov" => json!({
            "grid": {"d": 1, "t_final": 0.5, "n_t": 50, "l_x": 2.0, "n_x": 64, "l_v": 5.0, "n_v": 64},
            "hamiltonian": {"kind": "zero"},
            "coupling": {"name": "none"},
            "initial": {"mean_x": 0.0, "mean_v": 0.0, "sigma_x": 0.3, "sigma_v": 0.3},
        }),
        "lipschitz-linear-coupling" => json!({
            "grid": {"d": 1, "t_final": 1.0, "n_t": 50, "l_x": 2.0, "n_x": 32, "l_v": 4.0, "n_v": 32},
            "hamiltonian": {"kind": "lipschitz"},
            "coupling": {"name": "linear"},
            "initial": {"mean_x": 0.0, "mean_v": 0.5, "sigma_x": 0.4, "sigma_v": 0.5},
        }),
        "quadratic-continuation" => json!({
            "grid": {"d": 1, "t_final": 0.5, "n_t": 50, "l_x": 2.0, "n_x": 32, "l_v": 4.0, "n_v": 32},
            "hamiltonian": {"kind": "quadratic"},
            "coupling": {"name": "linear"},
            "initial": {"mean_x": 0.0, "mean_v": 0.0, "sigma_x": 0.15, "sigma_v": 0.15},
            "mfg": {"epsilon_schedule": [0.5, 0.25, 0.125, 0.0625]},
        }),
        _ => return None,
    };
    let mut base = json!({
        "scenario": name,
        "operator": operator,
        "mfg": mfg,
        "seed": 0,
        "output_dir": "out",
    });
    merge(&mut base, doc);
    // Fill serde defaults so the preset is a complete document.
    let grid: GridConfig = serde_json::from_value(base["grid"].clone()).expect("preset grid");
    base["grid"] = serde_json::to_value(grid).expect("serializable");
    let coupling: CouplingConfig = serde_json::from_value(base["coupling"].clone()).expect("preset coupling");
    base["coupling"] = serde_json::to_value(coupling).expect("serializable");
    Some(base)
}

/// Recursive object merge; non-object values in `patch` replace `base`.
pub fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, p) => *slot = p,
    }
}

fn manifest_error(pointer: impl Into<String>, message: impl Into<String>) -> KmfgError {
    KmfgError::Manifest {
        pointer: pointer.into(),
        message: message.into(),
    }
}

fn json_pointer(path: &serde_path_to_error::Path) -> String {
    use serde_path_to_error::Segment;
    let mut out = String::new();
    for seg in path.iter() {
        out.push('/');
        match seg {
            Segment::Seq { index } => out.push_str(&index.to_string()),
            Segment::Map { key } => out.push_str(&key.replace('~', "~0").replace('/', "~1")),
            Segment::Enum { variant } => out.push_str(variant),
            Segment::Unknown => out.push('?'),
        }
    }
    out
}

/// Parses, merges over the preset, deserializes and validates.
pub fn parse_manifest(text: &str) -> Result<RunManifest> {
    let user: Value = serde_json::from_str(text).map_err(|e| manifest_error("", format!("invalid JSON: {e}")))?;
    if !user.is_object() {
        return Err(manifest_error("", "manifest must be a JSON object"));
    }
    let scenario = match user.get("scenario") {
        None => DEFAULT_SCENARIO.to_string(),
        Some(Value::String(s)) => s.clone(),
        Some(_) => return Err(manifest_error("/scenario", "scenario must be a string")),
    };
    let mut doc = preset(&scenario).ok_or_else(|| {
        manifest_error("/scenario", format!("unknown scenario {scenario:?}, expected one of {SCENARIOS:?}"))
    })?;
    merge(&mut doc, user);
    let manifest: RunManifest = serde_path_to_error::deserialize(doc).map_err(|e| {
        let pointer = json_pointer(e.path());
        manifest_error(pointer, e.into_inner().to_string())
    })?;
    manifest.validate()?;
    Ok(manifest)
}

/// Complete document with every default written out.
pub fn echo_manifest(m: &RunManifest) -> String {
    serde_json::to_string_pretty(m).expect("manifest serializes")
}

impl RunManifest {
    pub fn from_scenario(name: &str) -> Result<Self> {
        parse_manifest(&json!({ "scenario": name }).to_string())
    }

    pub fn validate(&self) -> Result<()> {
        let g = &self.grid;
        let checks: [(bool, &str, &str); 7] = [
            (g.d == 1 || g.d == 2, "/grid/d", "d must be 1 or 2"),
            (g.t_final.is_finite() && g.t_final > 0.0, "/grid/t_final", "t_final must be positive"),
            (g.n_t >= 1, "/grid/n_t", "n_t must be at least 1"),
            (g.l_x.is_finite() && g.l_x > 0.0, "/grid/l_x", "l_x must be positive"),
            (g.n_x >= 4 && g.n_x.is_power_of_two(), "/grid/n_x", "n_x must be a power of two, at least 4"),
            (g.l_v.is_finite() && g.l_v > 0.0, "/grid/l_v", "l_v must be positive"),
            (g.n_v >= 4, "/grid/n_v", "n_v must be at least 4"),
        ];
        for (ok, pointer, msg) in checks {
            if !ok {
                return Err(manifest_error(pointer, msg));
            }
        }
        build_grid(g).map_err(|e| manifest_error("/grid/max_cells", e.to_string()))?;

        if let Some(eps) = self.hamiltonian.epsilon {
            if !(eps > 0.0 && eps.is_finite()) {
                return Err(manifest_error("/hamiltonian/epsilon", "epsilon must be positive"));
            }
            if !self.mfg.epsilon_schedule.is_empty() {
                return Err(manifest_error(
                    "/hamiltonian/epsilon",
                    "set either hamiltonian.epsilon or mfg.epsilon_schedule, not both",
                ));
            }
        }
        let unbounded = matches!(self.hamiltonian.kind, HamiltonianKind::Quadratic | HamiltonianKind::HalfQuadratic);
        if unbounded && self.hamiltonian.epsilon.is_none() && self.mfg.epsilon_schedule.is_empty() {
            return Err(manifest_error(
                "/mfg/epsilon_schedule",
                "quadratic Hamiltonians need an epsilon schedule or hamiltonian.epsilon",
            ));
        }
        if !(self.coupling.c0.is_finite() && self.coupling.c0 >= 0.0) {
            return Err(manifest_error("/coupling/c0", "c0 must be nonnegative"));
        }
        for (v, pointer) in [(self.initial.sigma_x, "/initial/sigma_x"), (self.initial.sigma_v, "/initial/sigma_v")] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(manifest_error(pointer, "width must be positive"));
            }
        }
        for (v, pointer) in [(self.initial.mean_x, "/initial/mean_x"), (self.initial.mean_v, "/initial/mean_v")] {
            if !v.is_finite() {
                return Err(manifest_error(pointer, "mean must be finite"));
            }
        }
        if !(self.operator.cfl_safety > 0.0 && self.operator.cfl_safety <= 1.0) {
            return Err(manifest_error("/operator/cfl_safety", "cfl_safety must lie in (0,1]"));
        }
        if !self.operator.fp_transport.preserves_positivity() {
            return Err(manifest_error(
                "/operator/fp_transport",
                "density transport must preserve positivity",
            ));
        }
        self.mfg
            .validate()
            .map_err(|(field, msg)| manifest_error(format!("/mfg/{field}"), msg))?;
        if self.output_dir.is_empty() {
            return Err(manifest_error("/output_dir", "output_dir must not be empty"));
        }
        Ok(())
    }

    pub fn phase_grid(&self) -> Result<PhaseGrid> {
        build_grid(&self.grid)
    }
}
