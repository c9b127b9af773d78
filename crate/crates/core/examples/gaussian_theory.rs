//! Closed-form ERM and CMI-constrained linear regressors on the Gaussian
//! model, checked against a numerical constrained optimizer.

use cmid::theory::{
    cmid_closed_form_2f, erm_closed_form, fig5_table, thm1_check, verification_sweep, GaussParams, TheoryConfig,
};

fn main() -> anyhow::Result<()> {
    let cfg = TheoryConfig::new(0.01)?;
    for eta in [0.75, 0.95, 0.99] {
        let p = GaussParams::two(5.0, 1.5, 5.0, 0.5, eta);
        let erm = erm_closed_form(&p)?;
        let cmid = cmid_closed_form_2f(&p, &cfg)?;
        println!(
            "eta {eta}: ERM w = [{:.4}, {:.4}], constrained w = [{:.4}, {:.4}] (binding {}, unconstrained feasible {})",
            erm.w[0],
            erm.w[1],
            cmid.w[0],
            cmid.w[1],
            cmid.binding,
            thm1_check(&p, &cfg).feasible
        );
    }

    for features in [2, 3] {
        let rows = verification_sweep(features, 20, 0, None)?;
        let gap = rows.iter().map(|r| r.max_rel_gap).fold(0.0, f64::max);
        let binding = rows.iter().filter(|r| r.closed_binding).count();
        println!("{features} features: 20 random draws, {binding} binding, worst closed-form vs oracle gap {gap:.2e}");
    }

    println!("w1/w2 against the variance ratio:");
    for row in fig5_table(1.0, 0.95, &[0.1], &[0.1667, 0.5, 0.8])? {
        println!("  ratio {:.4} {:>5}: w1/w2 = {:.3}", row.variance_ratio, row.method, row.w1_over_w2);
    }
    Ok(())
}
