//! Kernel-centered certificates for a few sets and singular maps.

use nalgebra::{dvector, DVector};
use psarp::feasible::KernelStatus;
use psarp::FeasibleSet;

fn main() -> psarp::Result<()> {
    let maps = vec![dvector![1.0, 0.0], dvector![0.0, 1.0]];
    let sets = [
        ("box [-1,1]^2", FeasibleSet::uniform_box(2, -1.0, 1.0)?),
        ("box [0.5,2] x [-1,1]", FeasibleSet::boxed(dvector![0.5, -1.0], dvector![2.0, 1.0])?),
        ("ball at origin", FeasibleSet::ball(DVector::zeros(2), 1.0)?),
        ("ball at (0.5, 0.5)", FeasibleSet::ball(dvector![0.5, 0.5], 1.0)?),
        (
            "x1 + x2 <= -1",
            FeasibleSet::halfspaces(vec![dvector![1.0, 1.0]], vec![-1.0])?,
        ),
    ];
    for (name, set) in &sets {
        let cert = set.check_kernel_centered(&maps);
        println!("{name}:");
        for (i, status) in cert.entries.iter().enumerate() {
            let text = match status {
                KernelStatus::NotCentered { witness } => format!("not centered, witness {:.3?}", witness.as_slice()),
                other => format!("{other:?}"),
            };
            println!("  |x_{}|^q: {text}", i + 1);
        }
    }
    Ok(())
}
