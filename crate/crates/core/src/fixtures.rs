//! The reference two-system example: a 2-mode planar System 1 and a
//! 3-mode spatial System 2, with norm-shell regions and noisy mode
//! observations.
//!
//! The rate matrices of System 1 are stored with their second row
//! sign-corrected so that each one is a valid generator, and the middle
//! diagonal entry of System 2's second rate matrix is set to -0.6 so that
//! its row sums to zero. The literal (invalid) values are kept in
//! [`example_model_as_printed`].

use crate::linalg::Matrix;
use crate::model::{InterdependentModel, JumpLinearSystem, Mode, ObservationModel, RateFamily, RegionPartition};

fn m<const C: usize>(rows: &[[f64; C]]) -> Matrix {
    Matrix::from_rows(rows).expect("fixture matrix")
}

fn sys1() -> JumpLinearSystem {
    let a = m(&[[5.0, 2.0], [2.0, 4.0]]);
    JumpLinearSystem::new(vec![
        Mode::new(a.clone(), m(&[[1.0], [2.0]]), Matrix::zeros(2, 1)),
        Mode::new(a, m(&[[2.0], [1.0]]), Matrix::zeros(2, 1)),
    ])
    .expect("fixture system 1")
}

fn sys2() -> JumpLinearSystem {
    JumpLinearSystem::new(vec![
        Mode::new(
            m(&[[3.0, 2.0, 4.0], [5.0, 2.0, 6.0], [-9.0, 0.0, 2.0]]),
            m(&[[1.0], [2.0], [1.0]]),
            Matrix::zeros(3, 1),
        ),
        Mode::new(
            m(&[[1.0, 2.0, 3.0], [2.0, 1.0, 0.0], [5.0, 6.0, 3.0]]),
            m(&[[1.0], [0.0], [1.0]]),
            Matrix::zeros(3, 1),
        ),
        Mode::new(
            m(&[[4.0, -1.0, 8.0], [5.0, 8.0, 0.0], [-1.0, 7.0, 5.0]]),
            m(&[[2.0], [1.0], [0.0]]),
            Matrix::zeros(3, 1),
        ),
    ])
    .expect("fixture system 2")
}

fn lambda_corrected() -> Vec<Matrix> {
    vec![
        m(&[[-0.6, 0.6], [0.4, -0.4]]),
        m(&[[-0.2, 0.2], [0.8, -0.8]]),
        m(&[[-0.5, 0.5], [1.2, -1.2]]),
    ]
}

fn lambda_printed() -> Vec<Matrix> {
    vec![
        m(&[[-0.6, 0.6], [-0.4, 0.4]]),
        m(&[[-0.2, 0.2], [-0.8, 0.8]]),
        m(&[[-0.5, 0.5], [-1.2, 1.2]]),
    ]
}

fn mu_corrected() -> Vec<Matrix> {
    vec![
        m(&[[-0.8, 0.2, 0.6], [0.2, -0.9, 0.7], [0.5, 0.4, -0.9]]),
        m(&[[-0.4, 0.2, 0.2], [0.2, -0.6, 0.4], [0.5, 0.6, -1.1]]),
    ]
}

fn mu_printed() -> Vec<Matrix> {
    vec![
        m(&[[-0.8, 0.2, 0.6], [0.2, -0.9, 0.7], [0.5, 0.4, -0.9]]),
        m(&[[-0.4, 0.2, 0.2], [0.2, -0.5, 0.4], [0.5, 0.6, -1.1]]),
    ]
}

fn build(lambda: Vec<Matrix>, mu: Vec<Matrix>) -> InterdependentModel {
    let obs1 = ObservationModel::new(vec![m(&[[0.9, 0.1], [0.1, 0.9]]), m(&[[0.7, 0.3], [0.3, 0.7]])])
        .expect("fixture emissions 1");
    let obs2 = ObservationModel::new(vec![
        m(&[[0.8, 0.1, 0.1], [0.1, 0.8, 0.1], [0.1, 0.1, 0.8]]),
        m(&[[0.7, 0.2, 0.1], [0.2, 0.7, 0.1], [0.2, 0.1, 0.7]]),
        m(&[[0.7, 0.1, 0.2], [0.1, 0.7, 0.2], [0.1, 0.2, 0.7]]),
    ])
    .expect("fixture emissions 2");
    InterdependentModel {
        sys1: sys1(),
        sys2: sys2(),
        part1: RegionPartition::new(vec![10.0]).expect("partition 1"),
        part2: RegionPartition::new(vec![5.0, 10.0]).expect("partition 2"),
        rates1: RateFamily::new(lambda),
        rates2: RateFamily::new(mu),
        obs1,
        obs2,
    }
}

/// The example with valid generators.
pub fn example_model() -> InterdependentModel {
    build(lambda_corrected(), mu_corrected())
}

/// The example with every rate matrix exactly as originally listed;
/// fails validation.
pub fn example_model_as_printed() -> InterdependentModel {
    build(lambda_printed(), mu_printed())
}

/// `(x₁(0), x₂(0))` used in the example runs.
pub fn example_initial_state() -> (Vec<f64>, Vec<f64>) {
    (vec![-6.0, 5.0], vec![2.0, -5.5, 8.0])
}

/// A published gain `G_{system, observation}^{region1, region2}`, all
/// indices 1-based as listed.
#[derive(Debug, Clone, PartialEq)]
pub struct PublishedGain {
    pub system: usize,
    pub observation: usize,
    pub region1: usize,
    pub region2: usize,
    pub gain: Vec<f64>,
}

/// The 30 distributed gains listed for the example, to three decimals.
///
/// The last System 2 row is listed under observation 2 a second time; it
/// is read here as observation 3, the only entry otherwise missing.
pub fn published_gains() -> Vec<PublishedGain> {
    let sys1: [(usize, usize, usize, [f64; 2]); 12] = [
        (1, 1, 1, [-8.638, -0.498]),
        (1, 1, 2, [-8.500, -0.391]),
        (1, 1, 3, [-8.610, -0.477]),
        (1, 2, 1, [-4.878, -0.501]),
        (1, 2, 2, [-4.706, -0.347]),
        (1, 2, 3, [-4.878, -0.501]),
        (2, 1, 1, [-16.154, -0.490]),
        (2, 1, 2, [-16.087, -0.480]),
        (2, 1, 3, [-16.076, -0.431]),
        (2, 2, 1, [-19.913, -0.487]),
        (2, 2, 2, [-19.881, -0.525]),
        (2, 2, 3, [-19.808, -0.408]),
    ];
    let sys2: [(usize, usize, [f64; 3]); 6] = [
        (1, 1, [-13.100, -2.454, 1.550]),
        (1, 2, [-17.592, -0.798, 5.666]),
        (2, 1, [-3.974, -6.840, 6.134]),
        (2, 2, [-4.071, -7.606, -5.580]),
        (3, 1, [0.427, -23.902, -22.903]),
        (3, 2, [0.266, -23.881, -22.386]),
    ];
    let mut out: Vec<PublishedGain> = sys1
        .iter()
        .map(|&(obs, r1, r2, g)| PublishedGain { system: 1, observation: obs, region1: r1, region2: r2, gain: g.to_vec() })
        .collect();
    for &(obs, r1, g) in &sys2 {
        for r2 in 1..=3 {
            out.push(PublishedGain { system: 2, observation: obs, region1: r1, region2: r2, gain: g.to_vec() });
        }
    }
    out
}
