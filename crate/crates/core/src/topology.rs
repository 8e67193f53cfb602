//! Cell layouts, UE drops and large-scale fading.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{atan2, db_to_lin, floor, log10, sqrt};
use crate::rng::{purpose, std_normal, stream, uniform};

pub type Point = [f64; 2];

/// How `shadow_std_db` is interpreted.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize), serde(rename_all = "kebab-case"))]
pub enum ShadowParam {
    #[default]
    StdDev,
    Variance,
}

/// Small-scale fading model used for every link.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize), serde(tag = "model", rename_all = "kebab-case"))]
pub enum Fading {
    Uncorrelated,
    /// Gaussian local scattering around `clusters` nominal angles drawn uniformly
    /// within ±`cluster_spread_deg` of the geographic angle, with per-antenna
    /// log-normal gain draws of standard deviation `gain_std` (0 disables them).
    LocalScattering {
        clusters: usize,
        cluster_spread_deg: f64,
        asd_deg: f64,
        gain_std: f64,
    },
}

impl Fading {
    pub fn local_scattering_default() -> Self {
        Fading::LocalScattering { clusters: 6, cluster_spread_deg: 40.0, asd_deg: 5.0, gain_std: 2.0 }
    }
}

/// Where UEs are dropped.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize), serde(tag = "kind", rename_all = "kebab-case"))]
pub enum UePlacement {
    /// Uniform over the square cell around the serving BS (grid layouts).
    UniformInCell,
    /// UE `i` of every cell is dropped uniformly in a disc of `radius_m` around `centers[i]`.
    Clusters { centers: Vec<Point>, radius_m: f64 },
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize), serde(deny_unknown_fields))]
pub struct NetworkScenario {
    pub name: String,
    #[cfg_attr(feature = "serde", serde(rename = "L"))]
    pub l: usize,
    #[cfg_attr(feature = "serde", serde(rename = "K"))]
    pub k: usize,
    #[cfg_attr(feature = "serde", serde(rename = "M"))]
    pub m: usize,
    pub area_m: f64,
    /// Empty means "regular √L×√L grid with a BS at each cell centre".
    #[cfg_attr(feature = "serde", serde(default))]
    pub bs_positions: Vec<Point>,
    pub wraparound: bool,
    pub min_ue_bs_distance_m: f64,
    pub ul_noise_dbm: f64,
    pub dl_noise_dbm: f64,
    pub ul_power_dbm: f64,
    pub dl_power_dbm: f64,
    pub tau_c: usize,
    pub reuse_f: usize,
    pub shadow_std_db: f64,
    #[cfg_attr(feature = "serde", serde(default))]
    pub shadow_param: ShadowParam,
    /// Redraw a UE's shadowing until its serving BS has the largest gain.
    #[cfg_attr(feature = "serde", serde(default))]
    pub shadow_serving_strongest: bool,
    pub seed: u64,
    /// Explicit pilot-group map (one entry per cell); derived from the grid when absent.
    #[cfg_attr(feature = "serde", serde(default))]
    pub group_of_cell: Option<Vec<usize>>,
    pub fading: Fading,
    pub ue_placement: UePlacement,
}

impl NetworkScenario {
    /// 16 cells on a 4×4 wrap-around grid over 1 km², K=10, M=100.
    pub fn running_example() -> Self {
        NetworkScenario {
            name: "running-example".into(),
            l: 16,
            k: 10,
            m: 100,
            area_m: 1000.0,
            bs_positions: Vec::new(),
            wraparound: true,
            min_ue_bs_distance_m: 35.0,
            ul_noise_dbm: -94.0,
            dl_noise_dbm: -94.0,
            ul_power_dbm: 20.0,
            dl_power_dbm: 20.0,
            tau_c: 200,
            reuse_f: 1,
            shadow_std_db: 10.0,
            shadow_param: ShadowParam::StdDev,
            shadow_serving_strongest: true,
            seed: 1,
            group_of_cell: None,
            fading: Fading::local_scattering_default(),
            ue_placement: UePlacement::UniformInCell,
        }
    }

    /// Four BSs at the corners of a 500 m square, K=2, the UEs sharing a pilot
    /// clustered together near the centre. Transmit powers are 40 dBm: every UE
    /// is about 350 m from every BS, and at 20 dBm the whole M ≤ 1024 range
    /// would stay noise-limited.
    pub fn four_cell_corners() -> Self {
        let a = 500.0;
        NetworkScenario {
            name: "four-cell-corners".into(),
            l: 4,
            k: 2,
            m: 256,
            area_m: a,
            bs_positions: vec![[0.0, 0.0], [a, 0.0], [0.0, a], [a, a]],
            wraparound: false,
            shadow_std_db: 0.0,
            shadow_serving_strongest: false,
            ul_power_dbm: 40.0,
            dl_power_dbm: 40.0,
            ue_placement: UePlacement::Clusters {
                centers: vec![[0.47 * a, 0.5 * a], [0.53 * a, 0.5 * a]],
                radius_m: 10.0,
            },
            ..Self::running_example()
        }
    }

    pub fn tau_p(&self) -> usize {
        self.reuse_f * self.k
    }

    pub fn ul_noise_mw(&self) -> f64 {
        db_to_lin(self.ul_noise_dbm)
    }
    pub fn dl_noise_mw(&self) -> f64 {
        db_to_lin(self.dl_noise_dbm)
    }
    pub fn ul_power_mw(&self) -> f64 {
        db_to_lin(self.ul_power_dbm)
    }
    pub fn dl_power_mw(&self) -> f64 {
        db_to_lin(self.dl_power_dbm)
    }

    /// σ²_ul/ρ_ul.
    pub fn ul_noise_ratio(&self) -> f64 {
        self.ul_noise_mw() / self.ul_power_mw()
    }

    /// Shadowing standard deviation in dB under the configured convention.
    pub fn shadow_sigma_db(&self) -> f64 {
        match self.shadow_param {
            ShadowParam::StdDev => self.shadow_std_db,
            ShadowParam::Variance => sqrt(self.shadow_std_db.max(0.0)),
        }
    }

    pub fn is_grid(&self) -> bool {
        self.bs_positions.is_empty()
    }

    pub fn bs_layout(&self) -> Result<Vec<Point>> {
        if self.is_grid() {
            build_grid_layout(self.l, self.area_m)
        } else if self.bs_positions.len() != self.l {
            Err(Error::Config(format!(
                "bs_positions has {} entries but L = {}",
                self.bs_positions.len(),
                self.l
            )))
        } else {
            Ok(self.bs_positions.clone())
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.l < 2 {
            return Err(Error::Config(format!("need L >= 2 cells, got {}", self.l)));
        }
        if self.m < 1 || self.k < 1 {
            return Err(Error::Config("M and K must be at least 1".into()));
        }
        if self.reuse_f < 1 {
            return Err(Error::Config("reuse factor must be at least 1".into()));
        }
        if self.tau_p() > self.tau_c {
            return Err(Error::Protocol(format!(
                "pilot length f*K = {} exceeds tau_c = {}",
                self.tau_p(),
                self.tau_c
            )));
        }
        if !(self.area_m > 0.0) {
            return Err(Error::Config("area_m must be positive".into()));
        }
        if self.shadow_std_db < 0.0 {
            return Err(Error::Config("shadow_std_db must be non-negative".into()));
        }
        self.bs_layout()?;
        match &self.ue_placement {
            UePlacement::UniformInCell => {
                let side = self.cell_side()?;
                if self.min_ue_bs_distance_m >= side / core::f64::consts::SQRT_2 {
                    return Err(Error::Config(format!(
                        "min UE-BS distance {} m exceeds the cell circumradius {:.1} m",
                        self.min_ue_bs_distance_m,
                        side / core::f64::consts::SQRT_2
                    )));
                }
            }
            UePlacement::Clusters { centers, radius_m } => {
                if centers.len() != self.k {
                    return Err(Error::Config(format!(
                        "cluster placement needs K = {} centres, got {}",
                        self.k,
                        centers.len()
                    )));
                }
                if *radius_m < 0.0 {
                    return Err(Error::Config("cluster radius must be non-negative".into()));
                }
            }
        }
        if let Fading::LocalScattering { clusters, asd_deg, gain_std, .. } = &self.fading {
            if *clusters < 1 || *asd_deg < 0.0 || *gain_std < 0.0 {
                return Err(Error::Config("local scattering needs S >= 1, ASD >= 0, gain std >= 0".into()));
            }
        }
        Ok(())
    }

    fn cell_side(&self) -> Result<f64> {
        let n = grid_side(self.l).ok_or_else(|| {
            Error::Config(format!("uniform UE drops need a square grid, L = {} is not a perfect square", self.l))
        })?;
        Ok(self.area_m / n as f64)
    }
}

fn grid_side(l: usize) -> Option<usize> {
    let n = floor(sqrt(l as f64) + 0.5) as usize;
    (n * n == l).then_some(n)
}

/// BS positions on a regular √L×√L grid, one at each cell centre (row-major).
pub fn build_grid_layout(l: usize, area_m: f64) -> Result<Vec<Point>> {
    let n = grid_side(l)
        .ok_or_else(|| Error::Config(format!("grid layout needs a perfect-square L, got {l}")))?;
    let s = area_m / n as f64;
    Ok((0..l).map(|c| [(c % n) as f64 * s + s / 2.0, (c / n) as f64 * s + s / 2.0]).collect())
}

/// Displacement q − p, using the minimum image on the torus when `wrap` is set.
pub fn wrap_delta(p: Point, q: Point, area_m: f64, wrap: bool) -> [f64; 2] {
    let mut d = [q[0] - p[0], q[1] - p[1]];
    if wrap {
        for x in d.iter_mut() {
            *x -= area_m * floor(*x / area_m + 0.5);
        }
    }
    d
}

pub fn wrap_distance(p: Point, q: Point, area_m: f64, wrap: bool) -> f64 {
    let d = wrap_delta(p, q, area_m, wrap);
    sqrt(d[0] * d[0] + d[1] * d[1])
}

/// Large-scale fading in dB: −148.1 − 37.6·log10(d/1 km) + shadowing.
pub fn large_scale_fading(d_m: f64, shadow_db: f64) -> Result<f64> {
    if !(d_m > 0.0) {
        return Err(Error::Domain(format!("distance must be positive, got {d_m}")));
    }
    Ok(-148.1 - 37.6 * log10(d_m / 1000.0) + shadow_db)
}

/// UE positions, index `l*K + i`.
#[derive(Clone, Debug, PartialEq)]
pub struct UeDrop {
    pub positions: Vec<Point>,
}

const MAX_REJECTIONS: usize = 100_000;

/// Uniform point in the square of side `side` centred at `bs`, at least `dmin` away from it.
pub fn sample_in_cell<R: rand::Rng + ?Sized>(
    bs: Point,
    side: f64,
    dmin: f64,
    area_m: f64,
    wrap: bool,
    rng: &mut R,
) -> Result<Point> {
    for _ in 0..MAX_REJECTIONS {
        let dx = (uniform(rng) - 0.5) * side;
        let dy = (uniform(rng) - 0.5) * side;
        if dx * dx + dy * dy < dmin * dmin {
            continue;
        }
        let mut p = [bs[0] + dx, bs[1] + dy];
        if wrap {
            for x in p.iter_mut() {
                *x -= area_m * floor(*x / area_m);
            }
        }
        return Ok(p);
    }
    Err(Error::Numerical(format!("UE drop rejected {MAX_REJECTIONS} times; exclusion disk too large")))
}

pub fn drop_ues(s: &NetworkScenario, drop: u64) -> Result<UeDrop> {
    s.validate()?;
    let bs = s.bs_layout()?;
    let mut rng = stream(s.seed, &[purpose::UE_DROP, drop]);
    let mut positions = Vec::with_capacity(s.l * s.k);
    match &s.ue_placement {
        UePlacement::UniformInCell => {
            let side = s.cell_side()?;
            for b in &bs {
                for _ in 0..s.k {
                    positions.push(sample_in_cell(*b, side, s.min_ue_bs_distance_m, s.area_m, s.wraparound, &mut rng)?);
                }
            }
        }
        UePlacement::Clusters { centers, radius_m } => {
            for b in &bs {
                for c in centers {
                    let mut placed = None;
                    for _ in 0..MAX_REJECTIONS {
                        let (u, v) = (2.0 * uniform(&mut rng) - 1.0, 2.0 * uniform(&mut rng) - 1.0);
                        if u * u + v * v > 1.0 {
                            continue;
                        }
                        let p = [c[0] + radius_m * u, c[1] + radius_m * v];
                        if wrap_distance(*b, p, s.area_m, s.wraparound) >= s.min_ue_bs_distance_m {
                            placed = Some(p);
                            break;
                        }
                    }
                    positions.push(placed.ok_or_else(|| {
                        Error::Config("cluster lies inside the minimum-distance disk of its BS".into())
                    })?);
                }
            }
        }
    }
    Ok(UeDrop { positions })
}

/// β^j_li in dB plus the shadowing realisations, index `(j*L + l)*K + i`.
#[derive(Clone, Debug, PartialEq)]
pub struct LargeScaleMap {
    pub l: usize,
    pub k: usize,
    pub beta_db: Vec<f64>,
    pub shadow_db: Vec<f64>,
    /// Geographic angle (radians) of UE (l,i) seen from BS j, same indexing.
    pub angle: Vec<f64>,
}

impl LargeScaleMap {
    #[inline]
    pub fn idx(&self, j: usize, l: usize, i: usize) -> usize {
        (j * self.l + l) * self.k + i
    }
    pub fn beta_db(&self, j: usize, l: usize, i: usize) -> f64 {
        self.beta_db[self.idx(j, l, i)]
    }
    pub fn beta(&self, j: usize, l: usize, i: usize) -> f64 {
        db_to_lin(self.beta_db(j, l, i))
    }
    pub fn angle(&self, j: usize, l: usize, i: usize) -> f64 {
        self.angle[self.idx(j, l, i)]
    }
}

pub fn large_scale_map(s: &NetworkScenario, ues: &UeDrop, drop: u64) -> Result<LargeScaleMap> {
    let bs = s.bs_layout()?;
    let (l_n, k_n) = (s.l, s.k);
    let n = l_n * l_n * k_n;
    let mut map = LargeScaleMap { l: l_n, k: k_n, beta_db: vec![0.0; n], shadow_db: vec![0.0; n], angle: vec![0.0; n] };
    let sigma = s.shadow_sigma_db();
    let mut rng = stream(s.seed, &[purpose::SHADOW, drop]);
    let mut path = vec![0.0; l_n];
    let mut shadow = vec![0.0; l_n];
    for l in 0..l_n {
        for i in 0..k_n {
            let p = ues.positions[l * k_n + i];
            for j in 0..l_n {
                let d = wrap_delta(bs[j], p, s.area_m, s.wraparound);
                let dist = sqrt(d[0] * d[0] + d[1] * d[1]);
                path[j] = large_scale_fading(dist, 0.0)?;
                let ix = map.idx(j, l, i);
                map.angle[ix] = atan2(d[1], d[0]);
            }
            let mut tries = 0;
            loop {
                for x in shadow.iter_mut() {
                    *x = if sigma > 0.0 { sigma * std_normal(&mut rng) } else { 0.0 };
                }
                let own = path[l] + shadow[l];
                let strongest = (0..l_n).all(|j| path[j] + shadow[j] <= own);
                tries += 1;
                if !s.shadow_serving_strongest || sigma == 0.0 || strongest || tries >= 10_000 {
                    if s.shadow_serving_strongest && sigma > 0.0 && !strongest {
                        log::warn!("UE ({l},{i}): serving BS never strongest after {tries} shadowing draws");
                    }
                    break;
                }
            }
            for j in 0..l_n {
                let ix = map.idx(j, l, i);
                map.shadow_db[ix] = shadow[j];
                map.beta_db[ix] = path[j] + shadow[j];
            }
        }
    }
    Ok(map)
}
