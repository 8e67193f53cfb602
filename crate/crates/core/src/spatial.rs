//! Spatial correlation matrices, channel sampling and matrix-difference metrics.

use alloc::format;
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::f64::consts::PI;
use core::fmt;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{cr, herm_eigen, hermitize, pivoted_cholesky, real_lstsq, CMat, CVec, Herm, C64, C_ZERO};
use crate::math::{cos, exp, pow10, sin, sqrt};
use crate::quadrature;
use crate::rng::{cn, std_normal, uniform};

/// Relative eigenvalue tolerance for the PSD invariant.
pub const PSD_EPS: f64 = 1e-10;
/// Eigenvalues below this fraction of the largest are dropped from an [`EigenFactor`].
pub const EIG_CUTOFF: f64 = 1e-12;

/// Hermitian PSD spatial correlation matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct CorrelationMatrix {
    h: Herm,
}

/// What PSD repair had to do on construction.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Repair {
    pub min_eigenvalue: f64,
    pub clipped_trace: f64,
}

impl CorrelationMatrix {
    /// Symmetrises, then clips any negative eigenvalues to zero.
    pub fn new(a: CMat) -> Self {
        Self::new_with_report(a).0
    }

    pub fn new_with_report(mut a: CMat) -> (Self, Repair) {
        hermitize(&mut a);
        let (vals, vecs) = herm_eigen(&a);
        let min = vals.last().copied().unwrap_or(0.0);
        if min >= 0.0 {
            return (CorrelationMatrix { h: Herm::Full(a) }, Repair { min_eigenvalue: min, clipped_trace: 0.0 });
        }
        let clipped: f64 = vals.iter().filter(|&&v| v < 0.0).map(|v| -v).sum();
        let m = a.nrows();
        let mut out = CMat::zeros(m, m);
        for (n, &v) in vals.iter().enumerate() {
            if v > 0.0 {
                let u = vecs.column(n);
                out += (u * u.adjoint()) * cr(v);
            }
        }
        hermitize(&mut out);
        if clipped > 0.0 {
            log::debug!("PSD repair clipped eigenvalue mass {clipped:e} (min eigenvalue {min:e})");
        }
        (CorrelationMatrix { h: Herm::Full(out) }, Repair { min_eigenvalue: min, clipped_trace: clipped })
    }

    /// For matrices that are PSD by construction: exact symmetrisation only.
    pub fn trusted(h: Herm) -> Self {
        match h {
            Herm::Full(a) => CorrelationMatrix { h: Herm::from_full(a) },
            d => CorrelationMatrix { h: d },
        }
    }

    pub fn from_diagonal(d: DVector<f64>) -> Self {
        CorrelationMatrix { h: Herm::Diag(d.map(|x| x.max(0.0))) }
    }

    pub fn uncorrelated(beta: f64, m: usize) -> Result<Self> {
        if !(beta >= 0.0) {
            return Err(Error::Domain(format!("beta must be non-negative, got {beta}")));
        }
        Ok(CorrelationMatrix { h: Herm::scaled_identity(m, beta) })
    }

    pub fn herm(&self) -> &Herm {
        &self.h
    }
    pub fn into_herm(self) -> Herm {
        self.h
    }
    pub fn dim(&self) -> usize {
        self.h.dim()
    }
    pub fn is_diagonal(&self) -> bool {
        self.h.is_diagonal()
    }
    pub fn trace(&self) -> f64 {
        self.h.trace()
    }
    /// Average gain tr(R)/M.
    pub fn beta(&self) -> f64 {
        self.trace() / self.dim() as f64
    }
    pub fn to_full(&self) -> CMat {
        self.h.to_full()
    }
    pub fn diag(&self) -> DVector<f64> {
        self.h.diag()
    }
    pub fn diagonal_part(&self) -> CorrelationMatrix {
        CorrelationMatrix { h: self.h.diagonal_part() }
    }
    pub fn scaled(&self, s: f64) -> CorrelationMatrix {
        CorrelationMatrix { h: self.h.scaled(s) }
    }
    /// Leading `m`×`m` block (the same link seen by the first `m` antennas).
    pub fn truncated(&self, m: usize) -> CorrelationMatrix {
        match &self.h {
            Herm::Diag(d) => CorrelationMatrix { h: Herm::Diag(d.rows(0, m).into_owned()) },
            Herm::Full(a) => CorrelationMatrix { h: Herm::Full(a.view((0, 0), (m, m)).into_owned()) },
        }
    }
}

pub fn uncorrelated_r(beta: f64, m: usize) -> Result<CorrelationMatrix> {
    CorrelationMatrix::uncorrelated(beta, m)
}

/// ULA response: entry m is exp(j2π·Δ·m·cos φ), m = 0..M−1.
pub fn ula_array_response(phi: f64, m: usize, delta: f64) -> CVec {
    let w = 2.0 * PI * delta * cos(phi);
    CVec::from_fn(m, |n, _| C64::from_polar(1.0, w * n as f64))
}

/// Karhunen–Loève factor R ≈ U diag(λ) Uᴴ.
#[derive(Clone, Debug)]
pub struct EigenFactor {
    pub u: CMat,
    pub lambda: Vec<f64>,
}

impl EigenFactor {
    pub fn new(r: &CorrelationMatrix) -> Self {
        Self::with_cutoff(r, EIG_CUTOFF)
    }

    pub fn with_cutoff(r: &CorrelationMatrix, rel: f64) -> Self {
        let m = r.dim();
        let (vals, vecs) = match r.herm() {
            Herm::Diag(d) => {
                let mut order: Vec<usize> = (0..m).collect();
                order.sort_by(|&a, &b| d[b].total_cmp(&d[a]));
                let vals: Vec<f64> = order.iter().map(|&i| d[i]).collect();
                let vecs = CMat::from_fn(m, m, |row, col| if row == order[col] { cr(1.0) } else { C_ZERO });
                (vals, vecs)
            }
            Herm::Full(a) => herm_eigen(a),
        };
        let top = vals.first().copied().unwrap_or(0.0);
        let r_eff = vals.iter().take_while(|&&v| v > 0.0 && v >= rel * top).count();
        EigenFactor { u: vecs.columns(0, r_eff).into_owned(), lambda: vals[..r_eff].to_vec() }
    }

    pub fn rank(&self) -> usize {
        self.lambda.len()
    }
}

/// h = U Λ^{1/2} e with e ~ CN(0, I_r).
pub fn kl_sample<R: Rng + ?Sized>(eig: &EigenFactor, rng: &mut R) -> CVec {
    let mut h = CVec::zeros(eig.u.nrows());
    for (n, &l) in eig.lambda.iter().enumerate() {
        let e = cn(rng) * sqrt(l);
        h.axpy(e, &eig.u.column(n), cr(1.0));
    }
    h
}

/// Square-root factor G with R = GGᴴ (rank-revealing), used for bulk sampling.
#[derive(Clone, Debug)]
pub enum ChannelFactor {
    Diag(DVector<f64>),
    Full(CMat),
}

impl ChannelFactor {
    pub fn new(r: &CorrelationMatrix) -> Self {
        match r.herm() {
            Herm::Diag(d) => ChannelFactor::Diag(d.map(sqrt)),
            h => ChannelFactor::Full(pivoted_cholesky(h, 1e-13)),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            ChannelFactor::Diag(d) => d.len(),
            ChannelFactor::Full(g) => g.nrows(),
        }
    }

    /// Writes one CN(0, R) draw into `out`.
    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [C64]) {
        match self {
            ChannelFactor::Diag(s) => {
                for (o, &v) in out.iter_mut().zip(s.iter()) {
                    *o = cn(rng) * v;
                }
            }
            ChannelFactor::Full(g) => {
                for o in out.iter_mut() {
                    *o = C_ZERO;
                }
                for col in 0..g.ncols() {
                    let e = cn(rng);
                    for (o, x) in out.iter_mut().zip(g.column(col).iter()) {
                        *o += x * e;
                    }
                }
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> CVec {
        let mut h = CVec::zeros(self.dim());
        self.sample_into(rng, h.as_mut_slice());
        h
    }
}

/// Parameters of the Gaussian local scattering model.
#[derive(Clone, Debug, PartialEq)]
pub struct ScatteringParams {
    /// Nominal cluster angles φ̄_s (radians, measured from broadside).
    pub nominal_angles: Vec<f64>,
    pub asd_rad: f64,
    /// Per-antenna gain draws f_m; empty disables gain variations.
    pub gain_db: Vec<f64>,
    pub beta: f64,
    /// Antenna spacing in wavelengths.
    pub delta: f64,
}

impl ScatteringParams {
    /// Draws cluster angles uniformly within ±spread of `geo_angle`, then `m` gain
    /// values, in that order, so draws for a smaller array are a prefix of a larger one.
    pub fn draw<R: Rng + ?Sized>(
        geo_angle: f64,
        clusters: usize,
        spread_rad: f64,
        asd_rad: f64,
        gain_std: f64,
        beta: f64,
        m: usize,
        rng: &mut R,
    ) -> Self {
        let nominal_angles = (0..clusters).map(|_| geo_angle + spread_rad * (2.0 * uniform(rng) - 1.0)).collect();
        let gain_db = if gain_std > 0.0 { (0..m).map(|_| gain_std * std_normal(rng)).collect() } else { Vec::new() };
        ScatteringParams { nominal_angles, asd_rad, gain_db, beta, delta: 0.5 }
    }
}

/// First column t(d), d = 0..M−1, of the Toeplitz part of the local scattering model.
fn scattering_kernel(p: &ScatteringParams, m: usize) -> Vec<C64> {
    let s = p.nominal_angles.len() as f64;
    let w = 2.0 * PI * p.delta;
    (0..m)
        .map(|d| {
            let d = d as f64;
            p.nominal_angles.iter().fold(C_ZERO, |acc, &phi| {
                let spread = p.asd_rad * w * d * cos(phi);
                acc + C64::from_polar(exp(-0.5 * spread * spread), w * d * sin(phi))
            }) / s
        })
        .collect()
}

/// [R]_{a,b} = β·10^{(f_a+f_b)/10}·(1/S)Σ_s e^{j2πΔ(a−b)sin φ̄_s}·e^{−σ²/2·(2πΔ(a−b)cos φ̄_s)²}.
///
/// The kernel is a sampled Gaussian characteristic function, hence PSD by
/// construction; only exact Hermitian symmetry is enforced.
pub fn local_scattering_r(p: &ScatteringParams, m: usize) -> Result<CorrelationMatrix> {
    if p.nominal_angles.is_empty() || p.asd_rad < 0.0 || p.beta < 0.0 {
        return Err(Error::Domain("local scattering needs S >= 1, ASD >= 0 and beta >= 0".into()));
    }
    if !p.gain_db.is_empty() && p.gain_db.len() < m {
        return Err(Error::Domain(format!("need {m} gain draws, got {}", p.gain_db.len())));
    }
    let t = scattering_kernel(p, m);
    let g: Vec<f64> =
        (0..m).map(|a| if p.gain_db.is_empty() { 1.0 } else { pow10(p.gain_db[a] / 10.0) }).collect();
    let mut r = CMat::zeros(m, m);
    for b in 0..m {
        for a in b..m {
            let v = t[a - b] * (p.beta * g[a] * g[b]);
            r[(a, b)] = v;
            r[(b, a)] = v.conj();
        }
    }
    Ok(CorrelationMatrix::trusted(Herm::Full(r)))
}

/// Angular density of the incoming planar waves.
#[derive(Clone)]
pub enum AngularDensity {
    Point(f64),
    Uniform { lo: f64, hi: f64 },
    Custom { pdf: Arc<dyn Fn(f64) -> f64 + Send + Sync>, lo: f64, hi: f64 },
}

impl fmt::Debug for AngularDensity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AngularDensity::Point(p) => write!(f, "Point({p})"),
            AngularDensity::Uniform { lo, hi } => write!(f, "Uniform[{lo}, {hi}]"),
            AngularDensity::Custom { lo, hi, .. } => write!(f, "Custom[{lo}, {hi}]"),
        }
    }
}

/// Multipath description: discrete rays and/or an angular density.
#[derive(Clone, Debug)]
pub struct AngularRaySet {
    pub angles: Vec<f64>,
    pub gains: Vec<C64>,
    pub density: Option<AngularDensity>,
}

impl AngularRaySet {
    pub fn from_density(density: AngularDensity) -> Self {
        AngularRaySet { angles: Vec::new(), gains: Vec::new(), density: Some(density) }
    }

    /// One channel realisation h = Σ_n g_n a(φ_n).
    pub fn channel(&self, m: usize, delta: f64) -> CVec {
        let mut h = CVec::zeros(m);
        for (&phi, &g) in self.angles.iter().zip(self.gains.iter()) {
            h.axpy(g, &ula_array_response(phi, m, delta), cr(1.0));
        }
        h
    }
}

const QUAD_TOL: f64 = 1e-10;

/// Toeplitz correlation β·∫ e^{j2πΔ(a−b)cos φ} f(φ) dφ, one row by adaptive quadrature.
pub fn toeplitz_from_density(beta: f64, rays: &AngularRaySet, delta: f64, m: usize) -> Result<CorrelationMatrix> {
    let density = rays
        .density
        .as_ref()
        .ok_or_else(|| Error::Domain("toeplitz_from_density needs an angular density".into()))?;
    let t: Vec<C64> = match density {
        AngularDensity::Point(phi) => {
            let a = ula_array_response(*phi, m, delta);
            (0..m).map(|d| a[d]).collect()
        }
        AngularDensity::Uniform { lo, hi } => {
            let (lo, hi) = (*lo, *hi);
            if !(hi > lo) {
                return Err(Error::Domain("uniform density needs hi > lo".into()));
            }
            density_row(&|_| 1.0 / (hi - lo), lo, hi, delta, m)?
        }
        AngularDensity::Custom { pdf, lo, hi } => {
            let (mass, _) =
                quadrature::integrate(|x| cr(pdf(x)), *lo, *hi, QUAD_TOL, 16, 20_000)?;
            if (mass.re - 1.0).abs() > 1e-6 {
                return Err(Error::Domain(format!("angular density integrates to {} instead of 1", mass.re)));
            }
            density_row(pdf.as_ref(), *lo, *hi, delta, m)?
        }
    };
    let mut r = CMat::zeros(m, m);
    for b in 0..m {
        for a in b..m {
            let v = t[a - b] * beta;
            r[(a, b)] = v;
            r[(b, a)] = v.conj();
        }
    }
    Ok(CorrelationMatrix::trusted(Herm::Full(r)))
}

fn density_row(pdf: &dyn Fn(f64) -> f64, lo: f64, hi: f64, delta: f64, m: usize) -> Result<Vec<C64>> {
    (0..m)
        .map(|d| {
            let w = 2.0 * PI * delta * d as f64;
            let panels = 8 + 2 * d;
            quadrature::integrate(|x| C64::from_polar(pdf(x), w * cos(x)), lo, hi, QUAD_TOL, panels, 200_000)
                .map(|(v, _)| v)
        })
        .collect()
}

/// Projection onto circulant matrices, F·diag(FᴴRF)·Fᴴ, computed by averaging
/// the wrapped diagonals.
pub fn circulant_project(r: &CorrelationMatrix) -> CorrelationMatrix {
    match r.herm() {
        Herm::Diag(d) => {
            let mean = d.mean();
            CorrelationMatrix::trusted(Herm::scaled_identity(d.len(), mean))
        }
        Herm::Full(a) => CorrelationMatrix::trusted(Herm::Full(circulant_average(a))),
    }
}

pub(crate) fn circulant_average(a: &CMat) -> CMat {
    let m = a.nrows();
    let mut c = alloc::vec![C_ZERO; m];
    for col in 0..m {
        for row in 0..m {
            c[(row + m - col) % m] += a[(row, col)];
        }
    }
    for x in c.iter_mut() {
        *x /= m as f64;
    }
    CMat::from_fn(m, m, |row, col| c[(row + m - col) % m])
}

/// min over real c of ‖R − Σ c_i R_i‖²_F / M.
pub fn linear_independence_residual(r: &CorrelationMatrix, others: &[CorrelationMatrix]) -> Result<f64> {
    let m = r.dim();
    if others.iter().any(|o| o.dim() != m) {
        return Err(Error::Domain("all correlation matrices must share M".into()));
    }
    let target = r.to_full();
    if others.is_empty() {
        return Ok(crate::linalg::frob2(&target) / m as f64);
    }
    let fulls: Vec<CMat> = others.iter().map(|o| o.to_full()).collect();
    let rows = 2 * m * m;
    let a = DMatrix::from_fn(rows, fulls.len(), |ix, col| {
        let z = fulls[col][ix / 2];
        if ix % 2 == 0 { z.re } else { z.im }
    });
    let b = DVector::from_fn(rows, |ix, _| {
        let z = target[ix / 2];
        if ix % 2 == 0 { z.re } else { z.im }
    });
    let coef = real_lstsq(&a, &b);
    let mut resid = target;
    for (cval, f) in coef.iter().zip(fulls.iter()) {
        resid -= f * cr(*cval);
    }
    Ok(crate::linalg::frob2(&resid) / m as f64)
}

/// tr(R₁R₂)/M.
pub fn orthogonality_metric(r1: &CorrelationMatrix, r2: &CorrelationMatrix) -> f64 {
    r1.herm().tr_mul(r2.herm()) / r1.dim() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{dft_matrix, frob2, herm_eigenvalues};
    use crate::rng::{cn_mat, purpose, stream};
    use proptest::prelude::*;

    fn deg(x: f64) -> f64 {
        x * PI / 180.0
    }

    fn random_params(seed: u64, m: usize) -> ScatteringParams {
        let mut r = stream(seed, &[purpose::TEST]);
        ScatteringParams::draw(deg(30.0), 6, deg(40.0), deg(5.0), 2.0, 0.7, m, &mut r)
    }

    fn assert_psd(r: &CorrelationMatrix) {
        let full = r.to_full();
        assert_eq!(full, full.adjoint());
        let ev = herm_eigenvalues(&full);
        assert!(ev.last().unwrap() >= &(-PSD_EPS * ev[0]), "min eig {:?}", ev.last());
    }

    #[test]
    fn uncorrelated_examples() {
        assert_eq!(uncorrelated_r(1.0, 3).unwrap().to_full(), CMat::identity(3, 3));
        assert_eq!(uncorrelated_r(0.0, 3).unwrap().to_full(), CMat::zeros(3, 3));
        assert!((uncorrelated_r(2.5, 7).unwrap().beta() - 2.5).abs() < 1e-15);
        assert!(uncorrelated_r(-1.0, 3).is_err());
    }

    #[test]
    fn ula_examples() {
        let a = ula_array_response(PI / 2.0, 5, 0.5);
        assert!(a.iter().all(|x| (x - cr(1.0)).norm() < 1e-15));
        assert_eq!(ula_array_response(0.3, 1, 0.5).len(), 1);
        let a = ula_array_response(1.234, 9, 0.5);
        assert!((a.norm() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn local_scattering_single_ray_is_rank_one() {
        // Angles here are measured from broadside, the array response from the axis.
        let phi = 0.4;
        let p = ScatteringParams { nominal_angles: alloc::vec![phi], asd_rad: 0.0, gain_db: Vec::new(), beta: 2.0, delta: 0.5 };
        let r = local_scattering_r(&p, 6).unwrap().to_full();
        let a = ula_array_response(PI / 2.0 - phi, 6, 0.5);
        let expect = (&a * a.adjoint()) * cr(2.0);
        assert!((r - expect).norm() < 1e-12);
    }

    #[test]
    fn local_scattering_diagonal_and_factorisation() {
        let m = 16;
        let p = random_params(5, m);
        let r = local_scattering_r(&p, m).unwrap();
        let full = r.to_full();
        for a in 0..m {
            let expect = p.beta * pow10(2.0 * p.gain_db[a] / 10.0);
            assert!((full[(a, a)].re - expect).abs() < 1e-12 * expect);
        }
        // Independent construction: R₀ entry-by-entry, then D·R₀·D.
        let mut r0 = CMat::zeros(m, m);
        for a in 0..m {
            for b in 0..m {
                let d = a as f64 - b as f64;
                let mut acc = C_ZERO;
                for &phi in &p.nominal_angles {
                    let g = exp(-(p.asd_rad * p.asd_rad) / 2.0 * (PI * d * cos(phi)).powi(2));
                    acc += C64::new(0.0, PI * d * sin(phi)).exp() * g;
                }
                r0[(a, b)] = acc * (p.beta / p.nominal_angles.len() as f64);
            }
        }
        let dmat = CMat::from_diagonal(&CVec::from_fn(m, |a, _| cr(pow10(p.gain_db[a] / 10.0))));
        let expect = &dmat * r0 * &dmat;
        assert!((full - &expect).norm() < 1e-12 * expect.norm());
        assert_psd(&r);
    }

    #[test]
    fn local_scattering_nests_across_m() {
        let mut r1 = stream(77, &[1]);
        let mut r2 = stream(77, &[1]);
        let small = ScatteringParams::draw(0.1, 6, deg(40.0), deg(5.0), 2.0, 1.0, 8, &mut r1);
        let big = ScatteringParams::draw(0.1, 6, deg(40.0), deg(5.0), 2.0, 1.0, 32, &mut r2);
        let a = local_scattering_r(&small, 8).unwrap();
        let b = local_scattering_r(&big, 32).unwrap().truncated(8);
        assert!((a.to_full() - b.to_full()).norm() < 1e-14);
    }

    /// J₀(x) = (1/π)∫₀^π cos(x sin t) dt by the trapezoid rule (spectrally accurate for this periodic integrand).
    fn bessel_j0(x: f64) -> f64 {
        let n = 4000;
        let h = PI / n as f64;
        let mut s = 0.5 * (1.0 + cos(x * sin(PI)));
        for k in 1..n {
            s += cos(x * sin(k as f64 * h));
        }
        s * h / PI
    }

    #[test]
    fn toeplitz_uniform_density_is_bessel() {
        let m = 10;
        let rays = AngularRaySet::from_density(AngularDensity::Uniform { lo: 0.0, hi: 2.0 * PI });
        let r = toeplitz_from_density(1.5, &rays, 0.5, m).unwrap().to_full();
        for a in 0..m {
            for b in 0..m {
                let expect = 1.5 * bessel_j0(PI * (a as f64 - b as f64));
                assert!((r[(a, b)] - cr(expect)).norm() < 1e-9, "({a},{b})");
                if a > 0 && b > 0 {
                    assert_eq!(r[(a, b)], r[(a - 1, b - 1)]);
                }
            }
        }
    }

    #[test]
    fn toeplitz_point_density_and_custom() {
        let rays = AngularRaySet::from_density(AngularDensity::Point(0.7));
        let r = toeplitz_from_density(2.0, &rays, 0.5, 5).unwrap().to_full();
        let a = ula_array_response(0.7, 5, 0.5);
        assert!((r - (&a * a.adjoint()) * cr(2.0)).norm() < 1e-12);
        let half = AngularRaySet::from_density(AngularDensity::Custom { pdf: Arc::new(|_| 0.5), lo: 0.0, hi: 1.0 });
        assert!(matches!(toeplitz_from_density(1.0, &half, 0.5, 4), Err(Error::Domain(_))));
        let tri = AngularRaySet::from_density(AngularDensity::Custom {
            pdf: Arc::new(|x: f64| 1.0 - (x - 1.0).abs()),
            lo: 0.0,
            hi: 2.0,
        });
        let r = toeplitz_from_density(1.0, &tri, 0.5, 6).unwrap();
        assert_psd(&r);
        assert!((r.beta() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn kl_sample_covariance() {
        let m = 8;
        let r = local_scattering_r(&random_params(8, m), m).unwrap();
        let eig = EigenFactor::new(&r);
        let ut = eig.u.adjoint() * &eig.u;
        assert!((ut - CMat::identity(eig.rank(), eig.rank())).norm() < 1e-10);
        let mut rng = stream(10, &[purpose::TEST]);
        let n = 100_000;
        let mut acc = CMat::zeros(m, m);
        let mut energy = 0.0;
        for _ in 0..n {
            let h = kl_sample(&eig, &mut rng);
            energy += h.norm_squared();
            acc += &h * h.adjoint();
        }
        acc /= cr(n as f64);
        let full = r.to_full();
        assert!((acc - &full).norm() / full.norm() < 0.02);
        assert!((energy / n as f64 / r.trace() - 1.0).abs() < 0.01);
    }

    #[test]
    fn kl_rank_one_samples_are_collinear() {
        let v = CVec::from_vec(alloc::vec![cr(1.0), C64::new(0.0, 1.0), cr(-1.0)]);
        let r = CorrelationMatrix::new(&v * v.adjoint());
        let eig = EigenFactor::new(&r);
        assert_eq!(eig.rank(), 1);
        let mut rng = stream(11, &[purpose::TEST]);
        for _ in 0..10 {
            let h = kl_sample(&eig, &mut rng);
            let s = h[0] / v[0];
            assert!((h - &v * s).norm() < 1e-12);
        }
    }

    #[test]
    fn channel_factor_matches_covariance() {
        let m = 8;
        let r = local_scattering_r(&random_params(12, m), m).unwrap();
        let f = ChannelFactor::new(&r);
        let mut rng = stream(13, &[purpose::TEST]);
        let n = 50_000;
        let mut acc = CMat::zeros(m, m);
        for _ in 0..n {
            let h = f.sample(&mut rng);
            acc += &h * h.adjoint();
        }
        acc /= cr(n as f64);
        let full = r.to_full();
        assert!((acc - &full).norm() / full.norm() < 0.03);
    }

    #[test]
    fn psd_repair_clips() {
        let a = CMat::from_diagonal(&CVec::from_vec(alloc::vec![cr(2.0), cr(-0.5), cr(1.0)]));
        let (r, rep) = CorrelationMatrix::new_with_report(a);
        assert!((rep.min_eigenvalue + 0.5).abs() < 1e-12);
        assert!((rep.clipped_trace - 0.5).abs() < 1e-12);
        assert!((r.trace() - 3.0).abs() < 1e-12);
        assert_psd(&r);
    }

    #[test]
    fn circulant_projection_properties() {
        let m = 12;
        let r = local_scattering_r(&random_params(14, m), m).unwrap();
        let c = circulant_project(&r);
        // Oracle: explicit F diag(FᴴRF) Fᴴ.
        let f = dft_matrix(m);
        let d = (f.adjoint() * r.to_full() * &f).diagonal();
        let expect = &f * CMat::from_diagonal(&d) * f.adjoint();
        assert!((c.to_full() - &expect).norm() < 1e-12 * expect.norm());
        assert!((c.trace() - r.trace()).abs() < 1e-10);
        let cc = circulant_project(&c);
        assert!((cc.to_full() - c.to_full()).norm() < 1e-12);
        assert_psd(&c);
        let id = CorrelationMatrix::trusted(Herm::Full(CMat::identity(5, 5)));
        assert!((circulant_project(&id).to_full() - CMat::identity(5, 5)).norm() < 1e-15);
    }

    #[test]
    fn independence_residual_examples() {
        let m = 6;
        let r = local_scattering_r(&random_params(15, m), m).unwrap();
        assert!(linear_independence_residual(&r, &[r.clone()]).unwrap() < 1e-20);
        assert!(linear_independence_residual(&r, &[r.scaled(2.0)]).unwrap() < 1e-20);
        let mut rng = stream(16, &[purpose::TEST]);
        let lam: Vec<f64> = (0..50).map(|_| uniform(&mut rng) * 2.0).collect();
        let rd = CorrelationMatrix::from_diagonal(DVector::from_vec(lam.clone()));
        let res = linear_independence_residual(&rd, &[uncorrelated_r(1.0, 50).unwrap()]).unwrap();
        let mean = lam.iter().sum::<f64>() / 50.0;
        let var = lam.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 50.0;
        assert!(res >= var * (1.0 - 1e-12));
        assert!((res - var).abs() < 1e-12);
    }

    #[test]
    fn orthogonality_examples() {
        let a = CorrelationMatrix::from_diagonal(DVector::from_vec(alloc::vec![1.0, 1.0, 0.0, 0.0]));
        let b = CorrelationMatrix::from_diagonal(DVector::from_vec(alloc::vec![0.0, 0.0, 2.0, 3.0]));
        assert_eq!(orthogonality_metric(&a, &b), 0.0);
        let id = uncorrelated_r(1.0, 4).unwrap();
        assert!((orthogonality_metric(&id, &id) - 1.0).abs() < 1e-15);
        let m = 16;
        let f = dft_matrix(m);
        let mut rng = stream(17, &[purpose::TEST]);
        let lam: Vec<f64> = (0..m).map(|_| uniform(&mut rng)).collect();
        let r1 = CorrelationMatrix::new(&f * f.adjoint());
        let lm = CMat::from_diagonal(&CVec::from_fn(m, |i, _| cr(lam[i])));
        let r = CorrelationMatrix::new(&f * lm * f.adjoint());
        let mean = lam.iter().sum::<f64>() / m as f64;
        assert!((orthogonality_metric(&r1, &r) - mean).abs() < 1e-10);
        let x = local_scattering_r(&random_params(18, 8), 8).unwrap();
        assert!((orthogonality_metric(&x, &x) - frob2(&x.to_full()) / 8.0).abs() < 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn constructors_are_hermitian_psd(seed in 0u64..10_000, m in 1usize..24) {
            let r = local_scattering_r(&random_params(seed, m), m).unwrap();
            assert_psd(&r);
            prop_assert!(r.beta() >= 0.0);
        }

        #[test]
        fn residual_unitary_invariant(seed in 0u64..10_000) {
            let m = 5;
            let rs: Vec<CorrelationMatrix> = (0..3).map(|n| local_scattering_r(&random_params(seed * 7 + n, m), m).unwrap()).collect();
            let mut rng = stream(seed, &[purpose::TEST, 1]);
            let q = cn_mat(&mut rng, m, m).qr().q();
            let rot = |r: &CorrelationMatrix| CorrelationMatrix::new(&q * r.to_full() * q.adjoint());
            let a = linear_independence_residual(&rs[0], &rs[1..]).unwrap();
            let rotated: Vec<CorrelationMatrix> = rs[1..].iter().map(rot).collect();
            let b = linear_independence_residual(&rot(&rs[0]), &rotated).unwrap();
            prop_assert!((a - b).abs() <= 1e-8 * a.max(1e-12));
        }

        #[test]
        fn circulant_idempotent(seed in 0u64..10_000, m in 2usize..20) {
            let r = local_scattering_r(&random_params(seed, m), m).unwrap();
            let c = circulant_project(&r);
            let cc = circulant_project(&c);
            prop_assert!((cc.to_full() - c.to_full()).norm() <= 1e-12 * c.to_full().norm().max(1.0));
        }
    }
}
