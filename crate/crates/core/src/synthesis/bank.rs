use std::collections::BTreeMap;
use std::fmt;

use super::SynthesisError;
use crate::linalg::Matrix;
use crate::model::{IntegratedModel, InterdependentModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    Centralized,
    FullInformation,
    Distributed,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::Centralized => "centralized",
            Scheme::FullInformation => "fullinfo",
            Scheme::Distributed => "distributed",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "centralized" => Some(Scheme::Centralized),
            "fullinfo" => Some(Scheme::FullInformation),
            "distributed" => Some(Scheme::Distributed),
            _ => None,
        }
    }
}

/// Index of one gain, 0-based throughout.
///
/// `system` is 0 for a gain acting on the integrated state (centralized
/// and full-information banks, where `observation` is the joint mode
/// index) and 1 or 2 for a subsystem gain of a distributed bank.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GainKey {
    pub system: usize,
    pub observation: usize,
    pub region1: usize,
    pub region2: usize,
}

impl GainKey {
    pub fn new(system: usize, observation: usize, region1: usize, region2: usize) -> Self {
        Self { system, observation, region1, region2 }
    }
}

impl fmt::Display for GainKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "system {} observation {} regions ({}, {})",
            self.system, self.observation, self.region1, self.region2
        )
    }
}

/// Lyapunov data a synthesis run produced for one system.
#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovData {
    pub system: usize,
    /// `P_i = X_i⁻¹` per mode.
    pub p: Vec<Matrix>,
    /// `s_i = 1/κ_i` per mode, absent when the mode has no disturbance.
    pub s: Vec<Option<f64>>,
    /// Extreme eigenvalue of every LMI constraint at the solution.
    pub margins: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerBank {
    pub scheme: Scheme,
    pub gains: BTreeMap<GainKey, Matrix>,
    pub certificate: Vec<LyapunovData>,
}

impl ControllerBank {
    pub fn new(scheme: Scheme) -> Self {
        Self { scheme, gains: BTreeMap::new(), certificate: Vec::new() }
    }

    /// A distributed bank holding a zero gain at every index.
    pub fn zero_distributed(model: &InterdependentModel) -> Self {
        let mut bank = Self::new(Scheme::Distributed);
        let cells = model.cells();
        for c in 0..cells.len() {
            let (m1, m2) = cells.decode(c);
            for k in 1..=2 {
                let sys = model.system(k);
                for o in 0..sys.num_modes() {
                    bank.gains.insert(GainKey::new(k, o, m1, m2), Matrix::zeros(sys.input_dim(), sys.state_dim()));
                }
            }
        }
        bank
    }

    pub fn len(&self) -> usize {
        self.gains.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gains.is_empty()
    }

    pub fn gain(&self, key: GainKey) -> Result<&Matrix, SynthesisError> {
        self.gains.get(&key).ok_or(SynthesisError::MissingGain(key))
    }

    pub fn certificate_for(&self, system: usize) -> Option<&LyapunovData> {
        self.certificate.iter().find(|c| c.system == system)
    }

    /// Union of two distributed subsystem banks.
    pub fn combine(a: &ControllerBank, b: &ControllerBank) -> ControllerBank {
        let mut out = a.clone();
        out.gains.extend(b.gains.iter().map(|(k, v)| (*k, v.clone())));
        out.certificate.extend(b.certificate.iter().cloned());
        out
    }

    /// The gains of one subsystem of a distributed bank.
    pub fn subsystem(&self, k: usize) -> ControllerBank {
        ControllerBank {
            scheme: self.scheme,
            gains: self.gains.iter().filter(|(key, _)| key.system == k).map(|(k, v)| (*k, v.clone())).collect(),
            certificate: self.certificate.iter().filter(|c| c.system == k).cloned().collect(),
        }
    }

    /// Gain applied to the stacked state `(x₁, x₂)` when the joint
    /// observation is `obs` and the state lies in joint cell `cell`.
    ///
    /// Distributed banks give the block-diagonal `diag(G₁, G₂)`.
    pub fn integrated_gain(&self, model: &IntegratedModel, obs: usize, cell: usize) -> Result<Matrix, SynthesisError> {
        let (m1, m2) = model.cells.decode(cell);
        match self.scheme {
            Scheme::Centralized | Scheme::FullInformation => Ok(self.gain(GainKey::new(0, obs, m1, m2))?.clone()),
            Scheme::Distributed => {
                let (o1, o2) = model.modes.decode(obs);
                let g1 = self.gain(GainKey::new(1, o1, m1, m2))?;
                let g2 = self.gain(GainKey::new(2, o2, m1, m2))?;
                Ok(Matrix::block_diag(&[g1, g2]))
            }
        }
    }

    /// Every integrated gain, indexed `[cell][joint observation]`.
    pub fn integrated_table(&self, model: &IntegratedModel) -> Result<Vec<Vec<Matrix>>, SynthesisError> {
        (0..model.num_cells())
            .map(|c| (0..model.num_modes()).map(|o| self.integrated_gain(model, o, c)).collect())
            .collect()
    }

    /// Number of gains this scheme should hold for `model`.
    pub fn expected_len(scheme: Scheme, model: &IntegratedModel) -> usize {
        let cells = model.num_cells();
        match scheme {
            Scheme::Centralized | Scheme::FullInformation => model.num_modes() * cells,
            Scheme::Distributed => (model.modes.first + model.modes.second) * cells,
        }
    }

    pub fn all_finite(&self) -> bool {
        self.gains.values().all(Matrix::is_finite)
    }
}
