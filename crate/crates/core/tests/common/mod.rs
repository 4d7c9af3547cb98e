#![allow(dead_code)]

use pps_core::targets::TableTarget;
use pps_core::StateBox;
use rand::Rng;

/// Random table on `{0..=max}^d` with a downward-closed positive set that
/// always contains the origin and the unit vectors. `hole` is the chance that a state whose
/// lower neighbours are all positive is nevertheless dropped.
pub fn random_table<R: Rng + ?Sized>(maxima: &[u32], hole: f64, rng: &mut R) -> TableTarget {
    let states = StateBox::new(maxima.to_vec()).unwrap();
    let mut log_f = vec![0.0; states.volume()];
    let mut y = vec![0; maxima.len()];
    for idx in 0..states.volume() {
        states.state_into(idx, &mut y);
        let below_ok = (0..y.len()).all(|i| match states.step_down(idx, &y, i) {
            Some(j) => log_f[j] > f64::NEG_INFINITY,
            None => true,
        });
        let near_origin = y.iter().sum::<u32>() <= 1;
        log_f[idx] = if !near_origin && (!below_ok || rng.gen::<f64>() < hole) {
            f64::NEG_INFINITY
        } else {
            rng.gen_range(-2.0..2.0)
        };
    }
    TableTarget::new(maxima.to_vec(), log_f).unwrap()
}

pub fn ln_fact(n: u32) -> f64 {
    (1..=n).map(|k| f64::from(k).ln()).sum()
}
