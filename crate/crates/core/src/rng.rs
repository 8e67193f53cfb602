//! Counter-based stream derivation: every random quantity is drawn from a
//! ChaCha8 stream keyed by (root seed, labels...), so adding or reordering work
//! never perturbs other streams.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::linalg::{CMat, CVec, C64};

pub type SimRng = ChaCha8Rng;

/// Purpose tags used as the first label of a stream.
pub mod purpose {
    pub const UE_DROP: u64 = 1;
    pub const SHADOW: u64 = 2;
    pub const SCATTERING: u64 = 3;
    pub const CHANNEL: u64 = 4;
    pub const PILOT_NOISE: u64 = 5;
    pub const ACQUISITION: u64 = 6;
    pub const RANDOM_COMBINER: u64 = 7;
    pub const TEST: u64 = 99;
}

#[inline]
fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(root: u64, labels: &[u64]) -> [u8; 32] {
    let mut h = splitmix(root ^ 0x6D6D_696D_6F5F_7631);
    for (n, &l) in labels.iter().enumerate() {
        h = splitmix(h ^ splitmix(l.wrapping_add((n as u64 + 1).wrapping_mul(0xA24B_AED4_963E_E407))));
    }
    h = splitmix(h ^ labels.len() as u64);
    let mut out = [0u8; 32];
    let mut s = h;
    for chunk in out.chunks_mut(8) {
        s = splitmix(s);
        chunk.copy_from_slice(&s.to_le_bytes());
    }
    out
}

pub fn stream(root: u64, labels: &[u64]) -> SimRng {
    ChaCha8Rng::from_seed(derive_seed(root, labels))
}

#[inline]
pub fn std_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// Uniform on [0, 1).
#[inline]
pub fn uniform<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.random::<f64>()
}

/// CN(0, 1) sample.
#[inline]
pub fn cn<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let s = core::f64::consts::FRAC_1_SQRT_2;
    C64::new(s * std_normal(rng), s * std_normal(rng))
}

pub fn cn_vec<R: Rng + ?Sized>(rng: &mut R, n: usize) -> CVec {
    CVec::from_fn(n, |_, _| cn(rng))
}

/// Matrix with i.i.d. CN(0, 1) entries, filled column-major.
pub fn cn_mat<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> CMat {
    CMat::from_fn(rows, cols, |_, _| cn(rng))
}
