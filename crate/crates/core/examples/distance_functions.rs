//! Prints the three pairwise distance functions over a range of score gaps.

use rankpair::DistanceFunction;

fn main() -> rankpair::Result<()> {
    let step = DistanceFunction::piecewise_step(0.5)?;
    let sigmoid = DistanceFunction::sigmoid(8.0)?;
    let ce = DistanceFunction::ce_sigmoid(8.0)?;

    println!("{:>6} {:>10} {:>10} {:>10} {:>10}", "x", "step", "sigmoid", "ce", "d ce/dx");
    for k in -8..=8 {
        let x = k as f64 / 8.0;
        println!(
            "{x:>6.3} {:>10.6} {:>10.6} {:>10.6} {:>10.6}",
            step.value(x),
            sigmoid.value(x),
            ce.value(x),
            ce.derivative(x)
        );
    }
    Ok(())
}
