//! Window weights of short- and long-memory fields and the growth of B_n.

use moddev::cgf::InnovationModel;
use moddev::field::{scaling_exponent, Angular, CoefficientField, Cutoff, Origin, SlowlyVarying};

fn main() -> moddev::error::Result<()> {
    let inn = InnovationModel::rademacher();
    let fields = [
        ("geometric d=1", CoefficientField::geometric(1, 0.5, Cutoff::Auto)?, 1.0),
        ("geometric d=2", CoefficientField::geometric(2, 0.5, Cutoff::Auto)?, 2.0),
        (
            "long memory d=1, alpha=0.75",
            CoefficientField::long_memory(1, 0.75, SlowlyVarying::Constant, Angular::Constant(1.0), Origin::Auto, Cutoff::Auto)?,
            1.5,
        ),
    ];
    for (name, field, target) in &fields {
        let m = field.window_weights(&inn, 50)?;
        let slope = scaling_exponent(field, &[50, 100, 200, 400])?;
        println!(
            "{name:<28} n=50: B_n = {:>10.2}  M_n = {:.3}  sites = {:>6}  slope = {slope:.3} (expected {target})",
            m.b_n(),
            m.m_n(),
            m.support_size()
        );
    }
    let m = fields[0].1.window_weights(&inn, 3)?;
    m.write_weights_csv(std::io::stdout()).expect("stdout");
    Ok(())
}
