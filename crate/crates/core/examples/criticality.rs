//! The criticality measure on a box and a ball, with and without a
//! restriction to a subspace.

use nalgebra::{dvector, DMatrix};
use psarp::criticality::chi;
use psarp::FeasibleSet;

fn main() -> psarp::Result<()> {
    let g = dvector![-1.0, 0.5];
    let x = dvector![0.8, 0.0];
    let full = DMatrix::identity(2, 2);
    let first_axis = DMatrix::from_column_slice(2, 1, &[1.0, 0.0]);

    let sets = [
        ("box [-1,1]^2", FeasibleSet::uniform_box(2, -1.0, 1.0)?),
        ("unit ball", FeasibleSet::ball(dvector![0.0, 0.0], 1.0)?),
    ];
    for (name, set) in &sets {
        for (label, basis) in [("R = R^2", &full), ("R = span(e1)", &first_axis)] {
            let c = chi(&g, &x, set, basis, 1e-10)?;
            println!(
                "{name:<13} {label:<13} chi = {:.6} (gap {:.1e}), d* = [{:+.4}, {:+.4}]",
                c.value, c.gap, c.d_star[0], c.d_star[1]
            );
        }
    }
    Ok(())
}
