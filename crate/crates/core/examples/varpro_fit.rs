//! Fits `y_0 e^{-x_0 t} + y_1 e^{-(x_1 + 1) t}` jointly and by variable
//! projection from the same start.

use nalgebra::DVector;
use sepunmix::model::simple::ExponentialModel;
use sepunmix::solvers::{solve_formulation, Formulation, SolverKind, SolverOptions};
use sepunmix::model::assemble_dictionary;
use sepunmix::{varpro, FeasibleBox, Theta};

fn main() -> sepunmix::Result<()> {
    let t: Vec<f64> = (0..60).map(|l| l as f64 / 10.0).collect();
    let model = ExponentialModel::new(t, 2, FeasibleBox::cube(0.1, 3.0, 2)?)?;
    let truth = Theta::from_slices(&[0.7, 0.9], &[2.0, -1.0]);
    let z = assemble_dictionary(&model, &truth.x)? * &truth.y;

    let x0 = DVector::from_vec(vec![1.5, 0.3]);
    let start = varpro::linear_solve(&model, &z, &x0)?.theta;
    for f in [Formulation::Joint, Formulation::Projected] {
        let opts = SolverOptions::with_kind(SolverKind::LevenbergMarquardt);
        let (theta, res) = solve_formulation(&model, &z, f, &start, &opts)?;
        println!(
            "{f:?}: {:?} after {} iterations, loss {:.2e}, x = {:.6?}",
            res.status,
            res.iterations,
            res.final_loss,
            theta.x.as_slice()
        );
    }
    Ok(())
}
