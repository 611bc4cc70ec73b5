//! The two-sided model of `|x + s|^q` around `x = 0.4`: it agrees with the
//! function at `s = 0` and stays above it across the sign change.

use psarp::models::{true_h_change, TwoSidedBranch};

fn main() -> psarp::Result<()> {
    let (x, q) = (0.4, 0.5);
    println!("{:>6} {:>10} {:>10} {:>10} {:>10}", "s", "|x+s|^q", "p=1", "p=3", "p=5");
    let branches: Vec<_> = [1, 3, 5].iter().map(|&p| TwoSidedBranch::new(x, q, p)).collect::<Result<_, _>>()?;
    for k in -8..=8 {
        let s = k as f64 * 0.1;
        let exact = x.abs().powf(q) + true_h_change(x, s, q);
        print!("{s:>6.2} {exact:>10.5}");
        for b in &branches {
            print!(" {:>10.5}", b.value(s));
        }
        println!();
    }
    Ok(())
}
