use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;

use super::basis::ControlBasis;
use super::modal::ModalCoordinates;
use crate::error::{Error, Result};
use crate::sim::{final_state, State, SystemInstance, TimeGrid};

/// Dense map from basis coefficients to the stacked final state in modal
/// energy coordinates. Column `j` is the final state reached from zero data
/// under basis function `j` alone.
#[derive(Debug, Clone)]
pub struct ControlOperator {
    pub matrix: DMatrix<f64>,
    pub basis: ControlBasis,
    pub grid: TimeGrid,
    pub coords: Arc<ModalCoordinates>,
}

impl ControlOperator {
    pub fn rows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn cols(&self) -> usize {
        self.matrix.ncols()
    }

    /// `Λ c`.
    pub fn apply(&self, coeffs: &DVector<f64>) -> DVector<f64> {
        &self.matrix * coeffs
    }
}

fn column(
    sys: &SystemInstance,
    basis: &ControlBasis,
    grid: TimeGrid,
    coords: &ModalCoordinates,
    j: usize,
) -> Result<DVector<f64>> {
    // The state stays exactly zero until the hat switches on.
    let skip = basis.first_active_step(j, grid);
    let full = basis.unit_signal(j, grid);
    let per = basis.boundary_nodes * basis.channels;
    let shifted = crate::sim::ControlSignal::new(
        grid.dt,
        basis.boundary_nodes,
        basis.channels,
        full.values[skip * per..].to_vec(),
    )?;
    let sub = TimeGrid {
        dt: grid.dt,
        steps: grid.steps - skip,
    };
    let fin = final_state(
        sys,
        &State::zeros(sys.n(), sys.domain.node_count()),
        Some(&shifted),
        sub,
    )?;
    coords.stack(&fin)
}

/// Assembles `Λ` column by column; columns are independent runs done in parallel.
pub fn assemble_control_operator(
    sys: &SystemInstance,
    basis: &ControlBasis,
    grid: TimeGrid,
    coords: Arc<ModalCoordinates>,
) -> Result<ControlOperator> {
    if basis.is_empty() {
        return Err(Error::EmptyBasis);
    }
    if basis.boundary_nodes != sys.domain.boundary_nodes().len() || basis.channels != sys.m() {
        return Err(Error::dims(
            "control basis",
            format!(
                "{} boundary nodes x {} channels",
                sys.domain.boundary_nodes().len(),
                sys.m()
            ),
            format!("{} x {}", basis.boundary_nodes, basis.channels),
        ));
    }
    if coords.n() != sys.n() || coords.nodes() != sys.domain.node_count() {
        return Err(Error::GridMismatch("modal coordinates built for another grid".into()));
    }
    let cols: Vec<DVector<f64>> = (0..basis.len())
        .into_par_iter()
        .map(|j| column(sys, basis, grid, &coords, j))
        .collect::<Result<_>>()?;
    Ok(ControlOperator {
        matrix: DMatrix::from_columns(&cols),
        basis: basis.clone(),
        grid,
        coords,
    })
}

/// Stacked final state of the uncontrolled run from `init`.
pub fn free_final_state(
    sys: &SystemInstance,
    init: &State,
    grid: TimeGrid,
    coords: &ModalCoordinates,
) -> Result<DVector<f64>> {
    coords.stack(&final_state(sys, init, None, grid)?)
}

/// Singular values of `Λ`, descending (from the eigenvalues of the smaller Gram matrix).
pub fn gramian_spectrum(op: &ControlOperator) -> Vec<f64> {
    singular_values_via_gram(&op.matrix)
}

/// Singular values of the rows of `Λ` listed in `rows`.
pub fn restricted_spectrum(op: &ControlOperator, rows: &[usize]) -> Vec<f64> {
    let sub = DMatrix::from_fn(rows.len(), op.cols(), |i, j| op.matrix[(rows[i], j)]);
    singular_values_via_gram(&sub)
}

pub(crate) fn singular_values_via_gram(m: &DMatrix<f64>) -> Vec<f64> {
    if m.is_empty() {
        return Vec::new();
    }
    let g = if m.nrows() <= m.ncols() {
        m * m.transpose()
    } else {
        m.transpose() * m
    };
    let mut s: Vec<f64> = SymmetricEigen::new(g)
        .eigenvalues
        .iter()
        .map(|l| l.max(0.0).sqrt())
        .collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::CouplingSpec;
    use crate::sim::BoxDomain;

    fn small() -> (SystemInstance, ControlBasis, TimeGrid, Arc<ModalCoordinates>) {
        let c = CouplingSpec::new(
            DMatrix::from_element(1, 1, 0.5),
            DMatrix::zeros(1, 1),
            DMatrix::identity(1, 1),
        )
        .unwrap();
        let sys = SystemInstance::new(c, BoxDomain::interval(1.0, 12).unwrap()).unwrap();
        let grid = sys.time_grid(2.0, None).unwrap();
        let basis = ControlBasis::new(&sys.domain, 1, 2.0, 9).unwrap();
        let coords = Arc::new(ModalCoordinates::new(&sys.domain, 1));
        (sys, basis, grid, coords)
    }

    #[test]
    fn columns_match_full_resimulation() {
        let (sys, basis, grid, coords) = small();
        let op = assemble_control_operator(&sys, &basis, grid, coords.clone()).unwrap();
        for j in [0, 7, 17] {
            let h = basis.unit_signal(j, grid);
            let fin = final_state(&sys, &State::zeros(1, 12), Some(&h), grid).unwrap();
            let col = coords.stack(&fin).unwrap();
            assert!((col - op.matrix.column(j)).norm() <= 1e-12 * op.matrix.norm());
        }
    }

    #[test]
    fn assembly_is_deterministic() {
        let (sys, basis, grid, coords) = small();
        let a = assemble_control_operator(&sys, &basis, grid, coords.clone()).unwrap();
        let b = assemble_control_operator(&sys, &basis, grid, coords).unwrap();
        assert_eq!(a.matrix, b.matrix);
    }

    #[test]
    fn empty_basis_is_an_error() {
        let (sys, _, grid, coords) = small();
        let c = CouplingSpec::new(DMatrix::zeros(1, 1), DMatrix::zeros(1, 1), DMatrix::zeros(1, 0)).unwrap();
        let sys0 = sys.with_control_matrix(c.d).unwrap();
        let basis = ControlBasis::new(&sys0.domain, 0, 2.0, 5).unwrap();
        assert!(matches!(
            assemble_control_operator(&sys0, &basis, grid, coords),
            Err(Error::EmptyBasis)
        ));
    }

    #[test]
    fn spectrum_of_zero_operator() {
        let s = singular_values_via_gram(&DMatrix::zeros(3, 5));
        assert_eq!(s, vec![0.0; 3]);
    }
}
