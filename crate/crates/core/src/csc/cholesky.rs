//! Incremental Cholesky projection onto the span of the active atoms.
//!
//! Gram entries between placed atoms are computed from the atoms themselves;
//! two atoms whose lags differ by at least `L` do not overlap and contribute
//! an exact zero. No column of the convolutional dictionary is ever formed.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::interp::InterpolatedDictionary;
use crate::signal_model::dot;

use super::ActiveAtom;

/// Selected atoms in selection order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ActiveSet {
    atoms: Vec<ActiveAtom>,
}

impl ActiveSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn atoms(&self) -> &[ActiveAtom] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn contains(&self, atom: ActiveAtom) -> bool {
        self.atoms.contains(&atom)
    }

    /// Appends `atom`; duplicates are refused.
    pub fn push(&mut self, atom: ActiveAtom) -> Result<()> {
        if self.contains(atom) {
            return Err(Error::InvalidArgument(format!("atom {atom:?} is already active")));
        }
        self.atoms.push(atom);
        Ok(())
    }
}

/// Inner product of atom `a` placed at lag `a.n` with atom `b` at `b.n`.
pub fn gram_entry(bank: &InterpolatedDictionary, a: ActiveAtom, b: ActiveAtom) -> f64 {
    let len = bank.template_len();
    let delta = b.n as isize - a.n as isize;
    if delta.unsigned_abs() >= len {
        return 0.0;
    }
    let ha = bank.atom(a.c, a.k);
    let hb = bank.atom(b.c, b.k);
    if delta >= 0 {
        dot(&ha[delta as usize..], hb)
    } else {
        dot(ha, &hb[(-delta) as usize..])
    }
}

/// Lower-triangular factor of the active Gram matrix, stored by rows.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CholeskyState {
    rows: Vec<Vec<f64>>,
}

impl CholeskyState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn dim(&self) -> usize {
        self.rows.len()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let t = self.dim();
        DMatrix::from_fn(t, t, |i, j| if j <= i { self.rows[i][j] } else { 0.0 })
    }

    /// Solves `L z = b`.
    pub fn forward_solve(&self, b: &[f64]) -> Vec<f64> {
        let mut z = Vec::with_capacity(b.len());
        for (i, row) in self.rows.iter().enumerate() {
            let partial: f64 = row[..i].iter().zip(&z).map(|(l, v)| l * v).sum();
            z.push((b[i] - partial) / row[i]);
        }
        z
    }

    /// Solves `L^T x = z`.
    pub fn backward_solve(&self, z: &[f64]) -> Vec<f64> {
        let t = self.dim();
        let mut x = vec![0.0; t];
        for i in (0..t).rev() {
            let partial: f64 = (i + 1..t).map(|j| self.rows[j][i] * x[j]).sum();
            x[i] = (z[i] - partial) / self.rows[i][i];
        }
        x
    }

    /// Grows the factor by the row for `new_atom`. On a linear-dependence
    /// error the state is left untouched.
    pub fn try_extend(
        &mut self,
        active: &ActiveSet,
        new_atom: ActiveAtom,
        bank: &InterpolatedDictionary,
        pivot_floor: f64,
    ) -> Result<()> {
        debug_assert_eq!(active.len(), self.dim());
        if active.contains(new_atom) {
            return Err(Error::LinearDependence { pivot_sq: 0.0 });
        }
        let v: Vec<f64> = active.atoms().iter().map(|&a| gram_entry(bank, a, new_atom)).collect();
        let w = self.forward_solve(&v);
        let atom_energy = gram_entry(bank, new_atom, new_atom);
        let pivot_sq = atom_energy - w.iter().map(|x| x * x).sum::<f64>();
        if !(pivot_sq > pivot_floor) {
            return Err(Error::LinearDependence { pivot_sq });
        }
        let mut row = w;
        row.push(pivot_sq.sqrt());
        self.rows.push(row);
        Ok(())
    }
}

pub fn cholesky_extend(
    state: &CholeskyState,
    active: &ActiveSet,
    new_atom: ActiveAtom,
    bank: &InterpolatedDictionary,
    pivot_floor: f64,
) -> Result<CholeskyState> {
    let mut next = state.clone();
    next.try_extend(active, new_atom, bank, pivot_floor)?;
    Ok(next)
}

/// Least-squares amplitudes of the active atoms for window `y`.
pub fn solve_coefficients(
    state: &CholeskyState,
    active: &ActiveSet,
    y: &[f64],
    bank: &InterpolatedDictionary,
) -> Result<Vec<f64>> {
    if state.dim() != active.len() {
        return Err(Error::InvalidArgument(format!(
            "factor of order {} does not match {} active atoms",
            state.dim(),
            active.len()
        )));
    }
    let len = bank.template_len();
    let alpha: Vec<f64> = active.atoms().iter().map(|a| dot(bank.atom(a.c, a.k), &y[a.n..a.n + len])).collect();
    Ok(state.backward_solve(&state.forward_solve(&alpha)))
}

/// `y` minus the placed, scaled active atoms.
pub fn update_residual(y: &[f64], active: &ActiveSet, amplitudes: &[f64], bank: &InterpolatedDictionary) -> Vec<f64> {
    let mut r = y.to_vec();
    for (a, &x) in active.atoms().iter().zip(amplitudes) {
        for (ri, h) in r[a.n..].iter_mut().zip(bank.atom(a.c, a.k)) {
            *ri -= x * h;
        }
    }
    r
}
