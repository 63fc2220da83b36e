//! Prints the sampling and training noise ladders and the preconditioning
//! coefficients along them.

use lam_diffusion::edm::{NoiseSchedule, Preconditioner};

fn main() -> lam_diffusion::Result<()> {
    let pre = Preconditioner::default();
    for (label, s) in [("inference", NoiseSchedule::inference()), ("training", NoiseSchedule::training())] {
        println!(
            "{label} ladder: sigma_max {}, sigma_min {}, rho {}, {} steps",
            s.sigma_max, s.sigma_min, s.rho, s.steps
        );
        println!(
            "{:>3} {:>12} {:>10} {:>10} {:>10} {:>10} {:>12}",
            "n", "sigma", "c_skip", "c_out", "c_in", "c_noise", "weight"
        );
        for (n, &sigma) in s.ladder().iter().enumerate() {
            if sigma == 0.0 {
                println!("{n:>3} {sigma:>12.6}");
                continue;
            }
            let c = pre.coeffs(sigma)?;
            println!(
                "{n:>3} {sigma:>12.6} {:>10.6} {:>10.6} {:>10.6} {:>10.6} {:>12.4}",
                c.skip,
                c.out,
                c.input,
                c.noise,
                pre.loss_weight(sigma)?
            );
        }
        println!();
    }

    let custom = NoiseSchedule::new(0.002, 80.0, 3.0, 8)?;
    println!("rho = 3, 8 steps: {:.4?}", custom.ladder());
    Ok(())
}
