//! Complex-multiplication counts per coherence block (combining, estimation)
//! and per statistics epoch (precomputation), in exact integer arithmetic.

use alloc::format;

use crate::combining::Scheme;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ComplexityParams {
    pub m: u64,
    pub k: u64,
    pub l: u64,
    pub tau_p: u64,
    pub f: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ComplexityReport {
    pub scheme: Scheme,
    pub combining_mults: u128,
    pub estimation_mults: u128,
    pub precompute_mults: u128,
    pub params: ComplexityParams,
}

/// n(n+1)/2
fn tri(n: u128) -> u128 {
    n * (n + 1) / 2
}

/// (n³−n)/3
fn cube3(n: u128) -> u128 {
    (n * n * n - n) / 3
}

pub fn count(scheme: Scheme, p: ComplexityParams) -> Result<ComplexityReport> {
    if p.m == 0 || p.k == 0 || p.l == 0 || p.tau_p == 0 || p.f == 0 {
        return Err(Error::Domain(format!("complexity parameters must be positive, got {p:?}")));
    }
    let (m, k, l, tp) = (p.m as u128, p.k as u128, p.l as u128, p.tau_p as u128);
    let m2 = m * m;
    let m3 = m2 * m;
    let mmse_comb = l * k * tri(m) + cube3(m) + k * m2;
    let (comb, est, pre) = match scheme {
        Scheme::Mmmse => (mmse_comb, m * tp * tp + l * k * m2, cube3(m) * tp + l * k * m3),
        Scheme::Smmse => (k * tri(m) + cube3(m) + k * m2, m * k * tp + k * m2, cube3(m) * k + k * m3),
        Scheme::Zf => (m * tri(k) + cube3(k) + m * k * k, m * k * tp + k * m2, 0),
        Scheme::Mr => (0, m * k * tp + k * m2, 0),
        Scheme::MmmseEw => (mmse_comb, m * tp + k * m, l * k * m),
        Scheme::Obe => {
            if p.l % p.f != 0 {
                return Err(Error::Domain(format!("L = {} is not divisible by f = {}", p.l, p.f)));
            }
            let g = (p.l / p.f) as u128;
            let pre = k * (7 * m3 - m) / 3 + cube3(m) + 3 * k * m3 * tri(g) + k * cube3(g);
            (k * m2, m * k * tp, pre)
        }
        Scheme::Dobe => {
            return Err(Error::InvalidCombination("no complexity row is defined for the diagonal OBE variant".into()));
        }
    };
    Ok(ComplexityReport { scheme, combining_mults: comb, estimation_mults: est, precompute_mults: pre, params: p })
}

/// The schemes that have a complexity row, in table order.
pub const TABLE_SCHEMES: [Scheme; 6] = [Scheme::Mmmse, Scheme::Smmse, Scheme::Zf, Scheme::Mr, Scheme::MmmseEw, Scheme::Obe];

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::ln;
    use crate::rng::{purpose, stream};
    use proptest::prelude::*;
    use rand::Rng;

    fn params(m: u64, k: u64, l: u64, f: u64) -> ComplexityParams {
        ComplexityParams { m, k, l, tau_p: f * k, f }
    }

    #[test]
    fn hand_evaluations() {
        assert_eq!(count(Scheme::Mmmse, params(2, 1, 1, 1)).unwrap().combining_mults, 9);
        assert_eq!(count(Scheme::Zf, params(4, 2, 1, 1)).unwrap().combining_mults, 30);
        let obe = count(Scheme::Obe, params(2, 1, 4, 2)).unwrap();
        // K(56−2)/3 + 2 + 3·8·3 + (8−2)/3
        assert_eq!(obe.precompute_mults, 18 + 2 + 72 + 2);
        assert_eq!(obe.combining_mults, 4);
    }

    /// Straight floating-point transcription of the table, exact below 2⁵³.
    fn oracle(s: Scheme, p: ComplexityParams) -> [f64; 3] {
        let (m, k, l, t, f) = (p.m as f64, p.k as f64, p.l as f64, p.tau_p as f64, p.f as f64);
        let mm = l * k * (m * m + m) / 2.0 + (m * m * m - m) / 3.0 + k * m * m;
        match s {
            Scheme::Mmmse => [mm, m * t * t + l * k * m * m, (m * m * m - m) / 3.0 * t + l * k * m * m * m],
            Scheme::Smmse => [
                k * (m * m + m) / 2.0 + (m * m * m - m) / 3.0 + k * m * m,
                m * k * t + k * m * m,
                (m * m * m - m) / 3.0 * k + k * m * m * m,
            ],
            Scheme::Zf => [m * (k * k + k) / 2.0 + (k * k * k - k) / 3.0 + m * k * k, m * k * t + k * m * m, 0.0],
            Scheme::Mr => [0.0, m * k * t + k * m * m, 0.0],
            Scheme::MmmseEw => [mm, m * t + k * m, l * k * m],
            Scheme::Obe => {
                let g = l / f;
                [
                    k * m * m,
                    m * k * t,
                    k * (7.0 * m * m * m - m) / 3.0
                        + (m * m * m - m) / 3.0
                        + 3.0 * k * m * m * m * (g * (g + 1.0) / 2.0)
                        + k * (g * g * g - g) / 3.0,
                ]
            }
            Scheme::Dobe => unreachable!(),
        }
    }

    #[test]
    fn random_tuples_match_the_table() {
        let mut rng = stream(3, &[purpose::TEST, 40]);
        for _ in 0..10 {
            let f = [1u64, 2, 4][rng.random_range(0..3)];
            let p = params(rng.random_range(1..600), rng.random_range(1..20), f * rng.random_range(1..8), f);
            for s in TABLE_SCHEMES {
                let r = count(s, p).unwrap();
                let o = oracle(s, p);
                assert_eq!([r.combining_mults as f64, r.estimation_mults as f64, r.precompute_mults as f64], o, "{s:?} {p:?}");
            }
        }
    }

    #[test]
    fn mr_has_no_combining_cost_and_invalid_inputs_fail() {
        for m in [1, 7, 100] {
            assert_eq!(count(Scheme::Mr, params(m, 3, 4, 1)).unwrap().combining_mults, 0);
        }
        assert!(count(Scheme::Mmmse, params(0, 1, 1, 1)).is_err());
        assert!(count(Scheme::Obe, ComplexityParams { m: 4, k: 2, l: 5, tau_p: 4, f: 2 }).is_err());
        assert!(count(Scheme::Dobe, params(4, 1, 1, 1)).is_err());
    }

    #[test]
    fn growth_orders() {
        let ms: alloc::vec::Vec<f64> = (4..=12).map(|e| (1u64 << e) as f64).collect();
        let fit = |s: Scheme, pick: fn(&ComplexityReport) -> u128| {
            let ys: alloc::vec::Vec<f64> = ms.iter().map(|&m| ln(pick(&count(s, params(m as u64, 1, 1, 1)).unwrap()) as f64)).collect();
            let xs: alloc::vec::Vec<f64> = ms.iter().map(|&m| ln(m)).collect();
            let n = xs.len() as f64;
            let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
            let num: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
            let den: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
            num / den
        };
        let mmse = fit(Scheme::Mmmse, |r| r.combining_mults);
        let obe = fit(Scheme::Obe, |r| r.combining_mults);
        assert!((mmse - 3.0).abs() < 0.05, "{mmse}");
        assert!((obe - 2.0).abs() < 0.05, "{obe}");
    }

    proptest! {
        #[test]
        fn multicell_never_cheaper_than_single_cell(m in 1u64..2000, k in 1u64..40, l in 2u64..64) {
            let p = params(m, k, l, 1);
            prop_assert!(count(Scheme::Mmmse, p).unwrap().combining_mults >= count(Scheme::Smmse, p).unwrap().combining_mults);
        }
    }
}
