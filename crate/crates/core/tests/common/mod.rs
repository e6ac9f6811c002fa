//! Random gate/measurement scripts shared by the state-engine suites.

use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64 as C64;
use qnet::gates::{Gate, GateKind};
use qnet::linalg::DenseMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Debug)]
pub enum Step {
    Gate(Gate, Vec<usize>),
    Measure(usize),
}

pub fn random_gate(rng: &mut ChaCha8Rng, n: usize) -> (Gate, Vec<usize>) {
    loop {
        let kind = GateKind::ALL[rng.gen_range(0..GateKind::ALL.len())];
        if kind.arity() > n {
            continue;
        }
        let mut positions: Vec<usize> = (0..n).collect();
        for i in 0..kind.arity() {
            let j = rng.gen_range(i..n);
            positions.swap(i, j);
        }
        positions.truncate(kind.arity());
        let angle = rng.gen_range(-2.0 * PI..2.0 * PI);
        let gate = match kind {
            GateKind::Cu => {
                let (a, b, c) = (rng.gen::<f64>() * PI, rng.gen::<f64>() * PI, rng.gen::<f64>() * PI);
                let u = qnet::gates::Matrix2c::new(
                    C64::from_polar(a.cos(), b),
                    -C64::from_polar(a.sin(), c),
                    C64::from_polar(a.sin(), -c),
                    C64::from_polar(a.cos(), -b),
                );
                Gate::controlled(u).unwrap()
            }
            _ => {
                let params: Vec<f64> = match kind {
                    GateKind::Rx | GateKind::Ry | GateKind::Rz | GateKind::Phase | GateKind::Cphase => vec![angle],
                    _ => vec![],
                };
                Gate::from_parts(kind, &params).unwrap()
            }
        };
        return (gate, positions);
    }
}

pub fn script(n: usize, seed: u64, len: usize) -> Vec<Step> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len)
        .map(|_| {
            if rng.gen_bool(0.2) {
                Step::Measure(rng.gen_range(0..n))
            } else {
                let (g, t) = random_gate(&mut rng, n);
                Step::Gate(g, t)
            }
        })
        .collect()
}

pub fn min_eigenvalue(m: &DenseMatrix) -> f64 {
    let h: DMatrix<C64> = (m + m.adjoint()) * C64::new(0.5, 0.0);
    SymmetricEigen::new(h).eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}
