//! Shared fixtures for unit tests.

use alloc::vec::Vec;

use rand::Rng;

use crate::estimation::BsStatistics;
use crate::linalg::{CMat, C64};
use crate::math::sqrt;
use crate::pilots::{build_pilot_book, default_groups, BookKind, PilotPlan};
use crate::rng::{cn, purpose, stream};
use crate::spatial::{local_scattering_r, uncorrelated_r, ChannelFactor, CorrelationMatrix, ScatteringParams};

pub fn plan(l: usize, k: usize, f: usize) -> PilotPlan {
    let groups = default_groups(l, f, true).unwrap();
    PilotPlan::new(l, k, f, groups, build_pilot_book(f * k, 1.0, BookKind::Dft).unwrap()).unwrap()
}

/// Random local-scattering (or uncorrelated) statistics at BS `j`.
pub fn random_stats(seed: u64, j: usize, plan: &PilotPlan, m: usize, correlated: bool, sigma2: f64) -> BsStatistics {
    let mut rng = stream(seed, &[purpose::TEST, 7]);
    let r: Vec<CorrelationMatrix> = (0..plan.l * plan.k)
        .map(|u| {
            let own = u / plan.k == j;
            let beta = if own { 0.5 + rng.random::<f64>() } else { 0.05 + 0.5 * rng.random::<f64>() };
            if correlated {
                let angle = (rng.random::<f64>() - 0.5) * 2.5;
                let p = ScatteringParams::draw(angle, 3, 0.3, 0.1, 1.0, beta, m, &mut rng);
                local_scattering_r(&p, m).unwrap()
            } else {
                uncorrelated_r(beta, m).unwrap()
            }
        })
        .collect();
    BsStatistics::new(j, r, plan, sigma2, 1.0).unwrap()
}

pub fn factors(stats: &BsStatistics) -> Vec<ChannelFactor> {
    stats.r.iter().map(ChannelFactor::new).collect()
}

/// True channels (M×LK) and the despread pilot vectors (M×τ_p) of one block.
pub fn sample_block<R: Rng>(stats: &BsStatistics, factors: &[ChannelFactor], rng: &mut R) -> (CMat, CMat) {
    let m = stats.m();
    let mut h = CMat::from_element(m, factors.len(), C64::new(0.0, 0.0));
    for (u, f) in factors.iter().enumerate() {
        h.set_column(u, &f.sample(rng));
    }
    let mut y = CMat::from_fn(m, stats.tau_p(), |_, _| cn(rng) * sqrt(stats.noise));
    for u in 0..factors.len() {
        let p = stats.pilot_of[u];
        let col = y.column(p) + h.column(u);
        y.set_column(p, &col);
    }
    (h, y)
}
