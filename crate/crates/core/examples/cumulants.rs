//! Cumulants, moments and the Cramér-condition check for the builtin laws.

use moddev::cgf::{verify_cramer, InnovationModel};

fn main() -> moddev::error::Result<()> {
    let laws = [
        InnovationModel::gaussian(1.0)?,
        InnovationModel::rademacher(),
        InnovationModel::centered_bernoulli(0.3)?,
        InnovationModel::centered_uniform(1.0)?,
        InnovationModel::centered_poisson(1.0)?,
    ];
    for law in &laws {
        let report = verify_cramer(law, 128)?;
        println!(
            "{:<20} H = {:.4}  C = {:.4}  max|L| = {:.4}  ok = {}",
            law.name(),
            law.radius_h(),
            law.bound_c(),
            report.max_abs_l,
            report.ok
        );
        let gammas: Vec<String> = (2..=6).map(|k| format!("{:+.5}", law.cumulant(k).unwrap())).collect();
        println!("    gamma_2..6 = {}", gammas.join(" "));
    }
    Ok(())
}
