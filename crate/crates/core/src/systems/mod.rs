//! Concrete system instances: an analytically solvable linear test map, the
//! spectral Galerkin 2D Navier-Stokes system on the torus, and the complex
//! Ginzburg-Landau equation with a cubic nonlinearity on an interval (or a
//! square, `dim = 2`).

mod etd;
mod ginzburg_landau;
mod linear;
mod navier_stokes;

pub use ginzburg_landau::GinzburgLandauSpec;
pub use linear::LinearTestSpec;
pub use navier_stokes::NavierStokesSpec;

use crate::model::{StateVector, System};
use crate::tilted::Observable;

/// Catalogue of named observables for a system: energy `|u|`, the quadratic
/// weight contributions, coordinate projections, and (per system) enstrophy
/// or the Ginzburg-Landau energy functional.
pub fn observables(system: &dyn System) -> Vec<Observable> {
    let mut out = vec![Observable::state_fn("energy", |u: &StateVector| u.norm())];
    for j in 1..=system.n_dim().min(4) {
        out.push(Observable::coordinate(j));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::BasisId;

    #[test]
    fn catalogue_energy_vanishes_at_zero() {
        let sys = LinearTestSpec::new(3, 0.5).unwrap();
        let cat = observables(&sys);
        let z = StateVector::zeros(3, BasisId(0));
        let energy = cat.iter().find(|o| o.name() == "energy").unwrap();
        assert_eq!(energy.eval_state(&z), 0.0);
    }

    #[test]
    fn coordinate_observable_projects() {
        let sys = LinearTestSpec::new(3, 0.5).unwrap();
        let cat = observables(&sys);
        let u = StateVector::new(vec![1.0, -2.0, 0.5], BasisId(0));
        let c2 = cat.iter().find(|o| o.name() == "coord_2").unwrap();
        assert_eq!(c2.eval_state(&u), -2.0);
    }
}
