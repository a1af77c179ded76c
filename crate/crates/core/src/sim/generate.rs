//! Synthetic trial generation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp, StandardNormal};

use super::config::{Scenario, ARM_COLUMN, DAYS_PER_MONTH};
use crate::estimator::{TrialData, X_COLUMN};
use crate::glm::{logistic, Frame};

/// Independent random stream for replication `rep` of a run seeded with `seed`.
///
/// Streams are addressed by counter rather than drawn from a shared
/// generator, so a replication's data never depend on which thread runs it.
pub fn replication_rng(seed: u64, rep: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep);
    rng
}

/// Draws `n_patients` patients in arrival order.
///
/// Each patient consumes the same number of draws whatever the scenario's
/// models, so the first `k` patients do not depend on `n_patients`.
pub fn generate_trial<R: Rng + ?Sized>(scenario: &Scenario, rng: &mut R, n_patients: usize) -> TrialData {
    let names = &scenario.covariate_names;
    let p = names.len();
    let gap = Exp::new(scenario.config.recruitment_rate / DAYS_PER_MONTH).expect("positive rate");
    let mut z_cols: Vec<Vec<f64>> = vec![Vec::with_capacity(n_patients); p];
    let mut arm = Vec::with_capacity(n_patients);
    let mut xs = Vec::with_capacity(n_patients);
    let mut ys = Vec::with_capacity(n_patients);
    let mut arrival = Vec::with_capacity(n_patients);
    let mut day = 0.0;
    let mut z = vec![0.0; p];

    for _ in 0..n_patients {
        day += rng.sample::<f64, _>(gap);
        match &scenario.covariates {
            Some(table) => {
                let row = &table.rows[rng.random_range(0..table.rows.len())];
                z.copy_from_slice(row);
            }
            None => {
                for v in z.iter_mut() {
                    *v = rng.sample(StandardNormal);
                }
            }
        }
        let a = u8::from(rng.random_bool(0.5));
        let u_x: f64 = rng.random();
        let u_y: f64 = rng.random();

        let mut x_val = f64::NAN;
        let lookup = |c: &str, x: f64| -> Option<f64> {
            if c == ARM_COLUMN {
                Some(a as f64)
            } else if c == X_COLUMN {
                Some(x)
            } else {
                names.iter().position(|n| n == c).map(|j| z[j])
            }
        };
        if let Some(xm) = &scenario.x_model {
            let px = logistic(xm.eval(&|c| lookup(c, f64::NAN)));
            x_val = f64::from(u8::from(u_x < px));
        }
        let py = logistic(scenario.y_model.eval(&|c| lookup(c, x_val)));
        let y = u8::from(u_y < py);

        for (col, v) in z_cols.iter_mut().zip(&z) {
            col.push(*v);
        }
        arm.push(a);
        xs.push(Some(x_val as u8));
        ys.push(Some(y));
        arrival.push(day);
    }

    let mut frame = Frame::new(n_patients);
    for (name, col) in names.iter().zip(z_cols) {
        frame.push_column(name.clone(), col);
    }
    TrialData::new(
        (1..=n_patients).map(|i| i.to_string()).collect(),
        arm,
        frame,
        scenario.has_x().then_some(xs),
        ys,
        arrival,
    )
    .expect("generated columns are consistent")
}
