//! Inversion of the saddle map and the Cramér series coefficients for an
//! i.i.d. Poisson sum and a FARIMA field.

use moddev::cgf::InnovationModel;
use moddev::field::{CoefficientField, Cutoff};
use moddev::series::{inversion_coefficients, lambda_coefficients};

fn main() -> moddev::error::Result<()> {
    let inn = InnovationModel::centered_poisson(1.0)?;
    for (name, field) in [
        ("iid", CoefficientField::iid(1)?),
        ("farima(0.3)", CoefficientField::farima(0.3, vec![], vec![], Cutoff::Auto)?),
    ] {
        let model = field.window_weights(&inn, 100)?;
        let a = inversion_coefficients(&model, 6)?;
        let beta = lambda_coefficients(&model, 6)?;
        println!("{name}: H_n = {:.4}, B_n = {:.2}", model.h_n(), model.b_n());
        println!("  z(t)      = {a}");
        println!("  lambda(t) = {beta}");
    }
    Ok(())
}
