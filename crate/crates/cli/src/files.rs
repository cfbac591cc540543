//! JSON model and gain files.
//!
//! Files use 1-based indices for observations and regions; the library
//! is 0-based. Output is canonical: object keys sorted, numbers in
//! shortest round-trip form, two-space indentation, trailing newline.

use std::fmt;
use std::io::Write;
use std::path::Path;

use mjls_core::linalg::Matrix;
use mjls_core::model::{
    InterdependentModel, JumpLinearSystem, Mode, ObservationModel, RateFamily, RegionPartition,
};
use mjls_core::synthesis::{ControllerBank, GainKey, LyapunovData, Scheme};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

pub type Rows = Vec<Vec<f64>>;

/// An input problem tied to the file it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct FileError {
    pub file: String,
    pub message: String,
}

impl fmt::Display for FileError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.file, self.message)
    }
}

impl std::error::Error for FileError {}

fn file_error(path: &Path, message: impl Into<String>) -> FileError {
    FileError { file: path.display().to_string(), message: message.into() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeSpec {
    #[serde(rename = "A")]
    pub a: Rows,
    #[serde(rename = "B")]
    pub b: Rows,
    #[serde(rename = "D")]
    pub d: Rows,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpec {
    pub modes: Vec<ModeSpec>,
}

/// Squared-norm shell boundaries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionSpec {
    pub thresholds: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSpec {
    pub x1: Vec<f64>,
    pub x2: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub notes: Option<String>,
    pub system1: SystemSpec,
    pub system2: SystemSpec,
    pub partition1: PartitionSpec,
    pub partition2: PartitionSpec,
    /// One generator per region of `x₂`.
    pub rates1: Vec<Rows>,
    /// One generator per region of `x₁`.
    pub rates2: Vec<Rows>,
    pub obs1: Vec<Rows>,
    pub obs2: Vec<Rows>,
    /// Default initial state for `simulate` and `montecarlo`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<InitialSpec>,
}

fn rows(m: &Matrix) -> Rows {
    m.to_rows()
}

fn matrix(r: &Rows, field: &str) -> Result<Matrix, String> {
    Matrix::from_rows(r).map_err(|e| format!("{field}: {e}"))
}

impl ModelFile {
    pub fn from_model(model: &InterdependentModel) -> Self {
        let system = |s: &JumpLinearSystem| SystemSpec {
            modes: s.modes().iter().map(|m| ModeSpec { a: rows(&m.a), b: rows(&m.b), d: rows(&m.d) }).collect(),
        };
        Self {
            notes: None,
            system1: system(&model.sys1),
            system2: system(&model.sys2),
            partition1: PartitionSpec { thresholds: model.part1.thresholds().to_vec() },
            partition2: PartitionSpec { thresholds: model.part2.thresholds().to_vec() },
            rates1: model.rates1.generators.iter().map(rows).collect(),
            rates2: model.rates2.generators.iter().map(rows).collect(),
            obs1: model.obs1.emissions().iter().map(rows).collect(),
            obs2: model.obs2.emissions().iter().map(rows).collect(),
            initial: None,
        }
    }

    /// Builds and validates the model; every problem found is reported
    /// with the JSON path of the offending field.
    pub fn to_model(&self) -> Result<InterdependentModel, String> {
        let system = |spec: &SystemSpec, name: &str| -> Result<JumpLinearSystem, String> {
            let modes = spec
                .modes
                .iter()
                .enumerate()
                .map(|(i, m)| {
                    let f = |k: &str| format!("{name}.modes[{i}].{k}");
                    Ok(Mode::new(matrix(&m.a, &f("A"))?, matrix(&m.b, &f("B"))?, matrix(&m.d, &f("D"))?))
                })
                .collect::<Result<Vec<_>, String>>()?;
            JumpLinearSystem::new(modes).map_err(|e| format!("{name}: {e}"))
        };
        let partition = |p: &PartitionSpec, name: &str| {
            RegionPartition::new(p.thresholds.clone()).map_err(|e| format!("{name}.thresholds: {e}"))
        };
        let family = |list: &[Rows], name: &str| -> Result<Vec<Matrix>, String> {
            list.iter().enumerate().map(|(m, r)| matrix(r, &format!("{name}[{m}]"))).collect()
        };
        let observations = |list: &[Rows], name: &str| -> Result<ObservationModel, String> {
            ObservationModel::new(family(list, name)?).map_err(|e| format!("{name}: {e}"))
        };
        let model = InterdependentModel {
            sys1: system(&self.system1, "system1")?,
            sys2: system(&self.system2, "system2")?,
            part1: partition(&self.partition1, "partition1")?,
            part2: partition(&self.partition2, "partition2")?,
            rates1: RateFamily::new(family(&self.rates1, "rates1")?),
            rates2: RateFamily::new(family(&self.rates2, "rates2")?),
            obs1: observations(&self.obs1, "obs1")?,
            obs2: observations(&self.obs2, "obs2")?,
        };
        let violations = model.validate();
        if !violations.is_empty() {
            let lines: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
            return Err(format!("invalid model:\n  {}", lines.join("\n  ")));
        }
        Ok(model)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainEntry {
    /// 1 or 2 for a subsystem gain, 0 for a gain on the stacked state.
    pub system: usize,
    pub observation: usize,
    pub region1: usize,
    pub region2: usize,
    #[serde(rename = "G")]
    pub g: Rows,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertificateEntry {
    pub system: usize,
    #[serde(rename = "P")]
    pub p: Vec<Rows>,
    /// Disturbance weight per mode, null where the mode has none.
    pub s: Vec<Option<f64>>,
    pub margins: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainsFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub notes: Option<String>,
    pub scheme: String,
    pub gains: Vec<GainEntry>,
    #[serde(default)]
    pub certificate: Vec<CertificateEntry>,
}

impl GainsFile {
    pub fn from_bank(bank: &ControllerBank) -> Self {
        Self {
            notes: None,
            scheme: bank.scheme.name().into(),
            gains: bank
                .gains
                .iter()
                .map(|(k, g)| GainEntry {
                    system: k.system,
                    observation: k.observation + 1,
                    region1: k.region1 + 1,
                    region2: k.region2 + 1,
                    g: rows(g),
                })
                .collect(),
            certificate: bank
                .certificate
                .iter()
                .map(|c| CertificateEntry {
                    system: c.system,
                    p: c.p.iter().map(rows).collect(),
                    s: c.s.clone(),
                    margins: c.margins.clone(),
                })
                .collect(),
        }
    }

    /// Converts without reference to a model; see
    /// [`check_bank_shapes`] for the dimension checks.
    pub fn to_bank(&self) -> Result<ControllerBank, String> {
        let scheme = Scheme::from_name(&self.scheme)
            .ok_or_else(|| format!("scheme: unknown scheme `{}` (centralized, fullinfo, distributed)", self.scheme))?;
        let mut bank = ControllerBank::new(scheme);
        for (n, e) in self.gains.iter().enumerate() {
            let field = format!("gains[{n}]");
            if e.observation == 0 || e.region1 == 0 || e.region2 == 0 {
                return Err(format!("{field}: observation and region indices are 1-based"));
            }
            let key = GainKey::new(e.system, e.observation - 1, e.region1 - 1, e.region2 - 1);
            let g = matrix(&e.g, &format!("{field}.G"))?;
            if bank.gains.insert(key, g).is_some() {
                return Err(format!("{field}: duplicate entry for {key}"));
            }
        }
        for (n, c) in self.certificate.iter().enumerate() {
            let p = c
                .p
                .iter()
                .enumerate()
                .map(|(i, r)| matrix(r, &format!("certificate[{n}].P[{i}]")))
                .collect::<Result<_, _>>()?;
            bank.certificate.push(LyapunovData { system: c.system, p, s: c.s.clone(), margins: c.margins.clone() });
        }
        Ok(bank)
    }
}

/// Every gain must have the dimensions of the system it drives, and
/// every index must exist in `model`.
pub fn check_bank_shapes(bank: &ControllerBank, model: &InterdependentModel) -> Result<(), String> {
    let cells = model.cells();
    for (k, g) in &bank.gains {
        let (modes, nu, nx) = match k.system {
            0 => (
                model.sys1.num_modes() * model.sys2.num_modes(),
                model.sys1.input_dim() + model.sys2.input_dim(),
                model.sys1.state_dim() + model.sys2.state_dim(),
            ),
            1 | 2 => {
                let s = model.system(k.system);
                (s.num_modes(), s.input_dim(), s.state_dim())
            }
            other => return Err(format!("gain for {k}: system must be 0, 1 or 2, got {other}")),
        };
        if k.observation >= modes || k.region1 >= cells.first || k.region2 >= cells.second {
            return Err(format!("gain for {k}: index outside the model (1-based in the file)"));
        }
        if g.shape() != (nu, nx) {
            return Err(format!("gain for {k} is {}x{}, expected {nu}x{nx}", g.rows(), g.cols()));
        }
    }
    Ok(())
}

/// Parses JSON, reporting the path of the failing field and the line and
/// column of the failure.
pub fn parse_json<T: DeserializeOwned>(text: &str) -> Result<T, String> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        if path == "." {
            e.into_inner().to_string()
        } else {
            format!("{path}: {}", e.into_inner())
        }
    })
}

fn read(path: &Path) -> Result<String, FileError> {
    std::fs::read_to_string(path).map_err(|e| file_error(path, e.to_string()))
}

pub fn read_model(path: &Path) -> Result<(InterdependentModel, ModelFile), FileError> {
    let file: ModelFile = parse_json(&read(path)?).map_err(|m| file_error(path, m))?;
    let model = file.to_model().map_err(|m| file_error(path, m))?;
    Ok((model, file))
}

pub fn read_gains(path: &Path, model: &InterdependentModel) -> Result<ControllerBank, FileError> {
    let file: GainsFile = parse_json(&read(path)?).map_err(|m| file_error(path, m))?;
    let bank = file.to_bank().map_err(|m| file_error(path, m))?;
    check_bank_shapes(&bank, model).map_err(|m| file_error(path, m))?;
    Ok(bank)
}

/// Canonical pretty JSON of `value`.
pub fn canonical_json<T: Serialize>(value: &T) -> String {
    // `Value` keeps object keys in a sorted map
    let v = serde_json::to_value(value).expect("file types serialise");
    let mut s = serde_json::to_string_pretty(&v).expect("values serialise");
    s.push('\n');
    s
}

/// Writes through a temporary file in the same directory and renames it
/// into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), FileError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| file_error(path, e.to_string()))?;
    tmp.write_all(contents).map_err(|e| file_error(path, e.to_string()))?;
    tmp.as_file().sync_all().map_err(|e| file_error(path, e.to_string()))?;
    tmp.persist(path).map_err(|e| file_error(path, e.error.to_string()))?;
    Ok(())
}

/// Notes embedded in the shipped example model.
pub const EXAMPLE_NOTES: &str = "Rate matrices are valid generators. In rates1 the second row of every \
matrix has its signs flipped relative to the listed values (which had a negative off-diagonal rate), and \
rates2[1] has -0.6 at (2,2) instead of the listed -0.5 so that its row sums to zero. \
example_model_as_printed.json keeps the listed values.";

pub fn example_model_file() -> ModelFile {
    let (x1, x2) = mjls_core::fixtures::example_initial_state();
    ModelFile {
        notes: Some(EXAMPLE_NOTES.into()),
        initial: Some(InitialSpec { x1, x2 }),
        ..ModelFile::from_model(&mjls_core::fixtures::example_model())
    }
}

pub fn example_printed_file() -> ModelFile {
    let (x1, x2) = mjls_core::fixtures::example_initial_state();
    ModelFile {
        notes: Some("Rate matrices exactly as listed; this file is rejected by validation.".into()),
        initial: Some(InitialSpec { x1, x2 }),
        ..ModelFile::from_model(&mjls_core::fixtures::example_model_as_printed())
    }
}

pub fn published_gains_file() -> GainsFile {
    GainsFile {
        notes: Some(
            "Distributed gains as listed, three decimals. The last System 2 entry is listed under observation 2 \
             twice; it is stored here as observation 3."
                .into(),
        ),
        scheme: Scheme::Distributed.name().into(),
        gains: mjls_core::fixtures::published_gains()
            .into_iter()
            .map(|p| GainEntry {
                system: p.system,
                observation: p.observation,
                region1: p.region1,
                region2: p.region2,
                g: vec![p.gain],
            })
            .collect(),
        certificate: Vec::new(),
    }
}
