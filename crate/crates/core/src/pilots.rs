//! Orthogonal pilot books, reuse plans, pilot synthesis and despreading.

use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{cr, CMat, CVec, C64};
use crate::math::{floor, sqrt};
use crate::rng::cn;
use crate::topology::NetworkScenario;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(rename_all = "kebab-case"))]
pub enum BookKind {
    #[default]
    Dft,
    WalshHadamard,
}

/// τ_p×τ_p book of unit-modulus orthogonal sequences (columns) together with the
/// pilot power; the transmitted sequences are √ρ·φ.
#[derive(Clone, Debug)]
pub struct PilotBook {
    pub unit: CMat,
    pub rho: f64,
}

impl PilotBook {
    pub fn tau_p(&self) -> usize {
        self.unit.ncols()
    }

    /// Transmitted sequences √ρ·Φ.
    pub fn scaled(&self) -> CMat {
        &self.unit * cr(sqrt(self.rho))
    }

    /// Φᵀ·conj(Φ) of the transmitted sequences; τ_p·ρ·I.
    pub fn gram(&self) -> CMat {
        let s = self.scaled();
        s.transpose() * s.map(|x| x.conj())
    }
}

pub fn build_pilot_book(tau_p: usize, rho: f64, kind: BookKind) -> Result<PilotBook> {
    if tau_p == 0 {
        return Err(Error::Domain("pilot length must be at least 1".into()));
    }
    if !(rho > 0.0) {
        return Err(Error::Domain(format!("pilot power must be positive, got {rho}")));
    }
    let unit = match kind {
        BookKind::Dft => CMat::from_fn(tau_p, tau_p, |n, k| {
            let e = ((n * k) % tau_p) as f64 / tau_p as f64;
            C64::from_polar(1.0, -2.0 * PI * e)
        }),
        BookKind::WalshHadamard => {
            if !tau_p.is_power_of_two() {
                return Err(Error::Domain(format!("Walsh-Hadamard book needs a power-of-two length, got {tau_p}")));
            }
            CMat::from_fn(tau_p, tau_p, |n, k| if (n & k).count_ones() % 2 == 0 { cr(1.0) } else { cr(-1.0) })
        }
    };
    Ok(PilotBook { unit, rho })
}

/// Pilot reuse plan: cells in the same group reuse the same K pilots, UE i of
/// every cell in group g using column g·K + i.
#[derive(Clone, Debug)]
pub struct PilotPlan {
    pub l: usize,
    pub k: usize,
    pub f: usize,
    pub book: PilotBook,
    pub group_of_cell: Vec<usize>,
}

impl PilotPlan {
    pub fn new(l: usize, k: usize, f: usize, group_of_cell: Vec<usize>, book: PilotBook) -> Result<Self> {
        if group_of_cell.len() != l {
            return Err(Error::Config(format!("group map has {} entries but L = {l}", group_of_cell.len())));
        }
        if let Some(g) = group_of_cell.iter().find(|&&g| g >= f) {
            return Err(Error::Config(format!("group index {g} out of range for f = {f}")));
        }
        if book.tau_p() != f * k {
            return Err(Error::Config(format!("pilot book length {} differs from f*K = {}", book.tau_p(), f * k)));
        }
        Ok(PilotPlan { l, k, f, book, group_of_cell })
    }

    pub fn tau_p(&self) -> usize {
        self.f * self.k
    }

    pub fn pilot_of_ue(&self, l: usize, i: usize) -> usize {
        self.group_of_cell[l] * self.k + i
    }

    pub fn shares(&self, a: usize, b: usize) -> bool {
        self.group_of_cell[a] == self.group_of_cell[b]
    }

    /// P_j: cells sharing cell j's pilot group (j included).
    pub fn sharers(&self, j: usize) -> Vec<usize> {
        (0..self.l).filter(|&l| self.shares(j, l)).collect()
    }

    /// Cells using pilot group `g`.
    pub fn cells_in_group(&self, g: usize) -> Vec<usize> {
        (0..self.l).filter(|&l| self.group_of_cell[l] == g).collect()
    }

    /// Column index l·K+i of every UE using pilot `p`.
    pub fn users_of_pilot(&self, p: usize) -> Vec<usize> {
        let (g, i) = (p / self.k, p % self.k);
        self.cells_in_group(g).into_iter().map(|l| l * self.k + i).collect()
    }
}

/// Group map for the grid layout: one group for f=1, checkerboard for f=2,
/// 2×2 tiling for f=4; any other f (or a non-grid layout with f>1) needs an
/// explicit map, except f=L which gives every cell its own group.
pub fn default_groups(l: usize, f: usize, grid: bool) -> Result<Vec<usize>> {
    if f == 1 {
        return Ok(alloc::vec![0; l]);
    }
    if f == l {
        return Ok((0..l).collect());
    }
    let n = floor(sqrt(l as f64) + 0.5) as usize;
    if !grid || n * n != l {
        return Err(Error::Config(format!("reuse factor {f} on this layout needs an explicit group_of_cell map")));
    }
    let rc = |c: usize| (c / n, c % n);
    match f {
        2 => Ok((0..l).map(|c| { let (r, col) = rc(c); (r + col) % 2 }).collect()),
        4 => Ok((0..l).map(|c| { let (r, col) = rc(c); (r % 2) * 2 + col % 2 }).collect()),
        _ => Err(Error::Config(format!("reuse factor {f} needs an explicit group_of_cell map"))),
    }
}

pub fn assign_pilot_groups(s: &NetworkScenario, kind: BookKind) -> Result<PilotPlan> {
    let f = s.reuse_f;
    if f == 0 {
        return Err(Error::Config("reuse factor must be at least 1".into()));
    }
    if f * s.k > s.tau_c {
        return Err(Error::Protocol(format!("pilot length f*K = {} exceeds tau_c = {}", f * s.k, s.tau_c)));
    }
    let groups = match &s.group_of_cell {
        Some(g) => g.clone(),
        None => default_groups(s.l, f, s.is_grid())?,
    };
    let book = build_pilot_book(f * s.k, s.ul_power_mw(), kind)?;
    PilotPlan::new(s.l, s.k, f, groups, book)
}

/// Y = Σ_{l,i} √ρ·h_li·φ_liᵀ + N at one BS. `h` holds h_li in column l·K+i.
pub fn synth_pilot_observation<R: Rng + ?Sized>(h: &CMat, plan: &PilotPlan, sigma2: f64, rng: &mut R) -> CMat {
    let m = h.nrows();
    let tau_p = plan.tau_p();
    let mut y = CMat::from_fn(m, tau_p, |_, _| cn(rng) * sqrt(sigma2));
    // Σ h_li φ_liᵀ = H·Ψᵀ with Ψ the book column assigned to each UE.
    let book = plan.book.scaled();
    let psi_t = CMat::from_fn(plan.l * plan.k, tau_p, |u, t| book[(t, plan.pilot_of_ue(u / plan.k, u % plan.k))]);
    y.gemm(cr(1.0), h, &psi_t, cr(1.0));
    y
}

/// y = Y·conj(φ_p)/(τ_p·√ρ) for pilot column `p`.
pub fn despread(y: &CMat, plan: &PilotPlan, p: usize) -> CVec {
    let phi = plan.book.unit.column(p).map(|x| x.conj());
    (y * phi) / cr(plan.tau_p() as f64 * sqrt(plan.book.rho))
}

/// All τ_p despread vectors as columns.
pub fn despread_all(y: &CMat, plan: &PilotPlan) -> CMat {
    let phi = plan.book.unit.map(|x| x.conj());
    (y * phi) / cr(plan.tau_p() as f64 * sqrt(plan.book.rho))
}
