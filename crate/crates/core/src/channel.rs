//! Network geometry, large-scale fading and correlated Rayleigh channel draws.

use std::f64::consts::FRAC_1_SQRT_2;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::config::{check_rho, db_to_linear, CorrelationModel, NetworkConfig};
use crate::error::{Error, Result};
use crate::linalg::{c, hermitian_sqrt, CMatrix, CVector};

/// Attempts at redrawing a user position that falls closer than the
/// distance floor to some AP before the floor is applied to the distance.
const MAX_RESAMPLES: usize = 10_000;

#[derive(Debug, Clone, PartialEq)]
pub struct Placement {
    pub ap_positions: Vec<[f64; 2]>,
    pub user_positions: Vec<[f64; 2]>,
    /// `distances[(l, k)]`, meters.
    pub distances: DMatrix<f64>,
}

impl Placement {
    pub fn num_aps(&self) -> usize {
        self.ap_positions.len()
    }

    pub fn num_users(&self) -> usize {
        self.user_positions.len()
    }
}

/// Deterministic grid of `count` points over the square: `ceil(sqrt(count))`
/// columns, the last row centred when it is not full.
pub fn ap_grid(count: usize, side: f64) -> Vec<[f64; 2]> {
    if count == 0 {
        return vec![];
    }
    let cols = (count as f64).sqrt().ceil() as usize;
    let rows = count.div_ceil(cols);
    let mut out = Vec::with_capacity(count);
    for row in 0..rows {
        let in_row = cols.min(count - row * cols);
        let y = (row as f64 + 0.5) * side / rows as f64;
        for col in 0..in_row {
            let x = (col as f64 + 0.5) * side / in_row as f64;
            out.push([x, y]);
        }
    }
    out
}

fn distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// APs on a fixed grid, users uniform over the area with every AP-user
/// distance at least `cfg.min_distance`.
pub fn generate_placement<R: Rng + ?Sized>(cfg: &NetworkConfig, rng: &mut R) -> Placement {
    let side = cfg.area_side;
    let aps = ap_grid(cfg.num_aps, side);
    let mut users = Vec::with_capacity(cfg.users);
    for _ in 0..cfg.users {
        let mut pos = [0.0; 2];
        for _ in 0..MAX_RESAMPLES {
            pos = [rng.random::<f64>() * side, rng.random::<f64>() * side];
            if aps.iter().all(|&ap| distance(ap, pos) >= cfg.min_distance) {
                break;
            }
        }
        users.push(pos);
    }
    let distances = DMatrix::from_fn(aps.len(), users.len(), |l, k| {
        distance(aps[l], users[k]).max(cfg.min_distance)
    });
    Placement {
        ap_positions: aps,
        user_positions: users,
        distances,
    }
}

/// 3GPP Urban Microcell large-scale gain in dB at distance `d` meters.
pub fn pathloss_db(d: f64) -> Result<f64> {
    if d.is_nan() || d <= 0.0 {
        return Err(Error::Domain(format!("path loss needs a positive distance, got {d}")));
    }
    Ok(-30.5 - 36.7 * d.log10())
}

/// `N x N` spatial covariance with trace `N * beta`.
pub fn build_spatial_covariance(cfg: &NetworkConfig, beta: f64) -> Result<CMatrix> {
    spatial_covariance(cfg.antennas, cfg.correlation, beta)
}

pub fn spatial_covariance(n: usize, model: CorrelationModel, beta: f64) -> Result<CMatrix> {
    if beta.is_nan() || beta < 0.0 {
        return Err(Error::Domain(format!(
            "large-scale gain must be non-negative, got {beta}"
        )));
    }
    match model {
        CorrelationModel::Uncorrelated => Ok(CMatrix::identity(n, n) * c(beta)),
        CorrelationModel::Exponential { rho } => {
            check_rho(rho)?;
            Ok(CMatrix::from_fn(n, n, |i, j| {
                c(beta * rho.powi((i as i32 - j as i32).abs()))
            }))
        }
    }
}

/// Per-AP channel matrices for one coherence block.
#[derive(Debug, Clone)]
pub struct ChannelRealization {
    /// `h[l]` is `N x K`; column `k` is the channel from user `k` to AP `l`.
    pub h: Vec<CMatrix>,
    /// `covariances[l][k]`, shared by every block of a placement.
    pub covariances: Arc<Vec<Vec<CMatrix>>>,
    /// Linear large-scale gains, `L x K`.
    pub beta: DMatrix<f64>,
}

/// Placement-level channel statistics: covariances and their square roots.
#[derive(Debug, Clone)]
pub struct ChannelModel {
    antennas: usize,
    covariances: Arc<Vec<Vec<CMatrix>>>,
    roots: Vec<Vec<Option<CMatrix>>>,
    beta: DMatrix<f64>,
}

impl ChannelModel {
    pub fn new(cfg: &NetworkConfig, placement: &Placement) -> Result<Self> {
        let (l_count, k_count) = placement.distances.shape();
        let mut beta = DMatrix::zeros(l_count, k_count);
        for l in 0..l_count {
            for k in 0..k_count {
                beta[(l, k)] = db_to_linear(pathloss_db(placement.distances[(l, k)])?);
            }
        }
        Self::from_gains(cfg.antennas, cfg.correlation, beta)
    }

    pub fn from_gains(antennas: usize, model: CorrelationModel, beta: DMatrix<f64>) -> Result<Self> {
        let (l_count, k_count) = beta.shape();
        let mut covariances = Vec::with_capacity(l_count);
        let mut roots = Vec::with_capacity(l_count);
        for l in 0..l_count {
            let mut cov_row = Vec::with_capacity(k_count);
            let mut root_row = Vec::with_capacity(k_count);
            for k in 0..k_count {
                let r = spatial_covariance(antennas, model, beta[(l, k)])?;
                // Scaled identity needs no factorization.
                let root = match model {
                    CorrelationModel::Uncorrelated => None,
                    CorrelationModel::Exponential { .. } => Some(hermitian_sqrt(&r)?),
                };
                cov_row.push(r);
                root_row.push(root);
            }
            covariances.push(cov_row);
            roots.push(root_row);
        }
        Ok(Self {
            antennas,
            covariances: Arc::new(covariances),
            roots,
            beta,
        })
    }

    pub fn beta(&self) -> &DMatrix<f64> {
        &self.beta
    }

    /// One block: `h_kl = R^{1/2} w`, `w ~ CN(0, I_N)`.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> ChannelRealization {
        let (l_count, k_count) = self.beta.shape();
        let n = self.antennas;
        let mut h = Vec::with_capacity(l_count);
        let mut w = CVector::zeros(n);
        for l in 0..l_count {
            let mut hl = CMatrix::zeros(n, k_count);
            for k in 0..k_count {
                for wi in w.iter_mut() {
                    *wi = complex_normal(rng);
                }
                match &self.roots[l][k] {
                    None => {
                        let scale = self.beta[(l, k)].sqrt();
                        for i in 0..n {
                            hl[(i, k)] = w[i] * scale;
                        }
                    }
                    Some(root) => hl.set_column(k, &(root * &w)),
                }
            }
            h.push(hl);
        }
        ChannelRealization {
            h,
            covariances: Arc::clone(&self.covariances),
            beta: self.beta.clone(),
        }
    }
}

pub fn draw_channel<R: Rng + ?Sized>(
    cfg: &NetworkConfig,
    placement: &Placement,
    rng: &mut R,
) -> Result<ChannelRealization> {
    Ok(ChannelModel::new(cfg, placement)?.draw(rng))
}

/// A `CN(0, 1)` sample.
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re * FRAC_1_SQRT_2, im * FRAC_1_SQRT_2)
}

/// `y = H s + n` with `n ~ CN(0, sigma2 I)`.
pub fn receive_signal<R: Rng + ?Sized>(h: &CMatrix, s: &CVector, sigma2: f64, rng: &mut R) -> Result<CVector> {
    let mut y = CVector::zeros(h.nrows());
    receive_signal_into(h, s.as_slice(), sigma2, rng, y.as_mut_slice())?;
    Ok(y)
}

/// Allocation-free form of [`receive_signal`].
pub fn receive_signal_into<R: Rng + ?Sized>(
    h: &CMatrix,
    s: &[Complex64],
    sigma2: f64,
    rng: &mut R,
    out: &mut [Complex64],
) -> Result<()> {
    let (n, k) = h.shape();
    if s.len() != k || out.len() != n {
        return Err(Error::Dimension(format!(
            "H is {n}x{k}, s has {} entries, output has {}",
            s.len(),
            out.len()
        )));
    }
    let std = sigma2.sqrt();
    let hs = h.as_slice();
    for (i, o) in out.iter_mut().enumerate() {
        let mut acc = complex_normal(rng) * std;
        for (j, sj) in s.iter().enumerate() {
            acc += hs[i + j * n] * sj;
        }
        *o = acc;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn pathloss_goldens() {
        assert_eq!(pathloss_db(1.0).unwrap(), -30.5);
        assert!((pathloss_db(100.0).unwrap() + 103.9).abs() < 1e-12);
        assert!((pathloss_db(10.0).unwrap() + 67.2).abs() < 1e-12);
        assert!(pathloss_db(0.0).is_err());
        assert!(pathloss_db(-3.0).is_err());
    }

    #[test]
    fn single_ap_sits_at_centre() {
        assert_eq!(ap_grid(1, 500.0), vec![[250.0, 250.0]]);
        let five = ap_grid(5, 500.0);
        assert_eq!(five.len(), 5);
        assert!(five.iter().all(|p| p.iter().all(|&v| (0.0..=500.0).contains(&v))));
    }

    #[test]
    fn placement_respects_floor_and_seed() {
        let cfg = NetworkConfig {
            min_distance: 30.0,
            ..NetworkConfig::default()
        };
        let a = generate_placement(&cfg, &mut ChaCha8Rng::seed_from_u64(5));
        let b = generate_placement(&cfg, &mut ChaCha8Rng::seed_from_u64(5));
        assert_eq!(a, b);
        assert!(a.distances.iter().all(|&d| d >= 30.0));
        for p in a.user_positions.iter().chain(&a.ap_positions) {
            assert!(p.iter().all(|&v| (0.0..=cfg.area_side).contains(&v)));
        }
    }

    #[test]
    fn covariance_models() {
        let cfg = NetworkConfig::default();
        let r = build_spatial_covariance(&cfg, 2.0).unwrap();
        assert_eq!(r, CMatrix::identity(4, 4) * c(2.0));

        let exp = spatial_covariance(2, CorrelationModel::Exponential { rho: 0.5 }, 3.0).unwrap();
        assert!((exp[(0, 1)].re - 1.5).abs() < 1e-15);
        assert!((exp[(0, 0)].re + exp[(1, 1)].re - 6.0).abs() < 1e-15);

        let zero_rho = spatial_covariance(3, CorrelationModel::Exponential { rho: 0.0 }, 1.5).unwrap();
        assert!((zero_rho - CMatrix::identity(3, 3) * c(1.5)).norm() < 1e-15);

        for rho in [-0.1, 1.0, 1.5] {
            assert!(spatial_covariance(3, CorrelationModel::Exponential { rho }, 1.0).is_err());
        }
    }

    #[test]
    fn zero_covariance_gives_zero_channel() {
        let model =
            ChannelModel::from_gains(3, CorrelationModel::Exponential { rho: 0.3 }, DMatrix::zeros(2, 4)).unwrap();
        let draw = model.draw(&mut ChaCha8Rng::seed_from_u64(1));
        assert!(draw.h.iter().all(|h| h.norm() == 0.0));
    }

    #[test]
    fn noiseless_reception_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let h = CMatrix::from_fn(4, 10, |_, _| complex_normal(&mut rng));
        let s = CVector::from_fn(10, |_, _| complex_normal(&mut rng));
        let y = receive_signal(&h, &s, 0.0, &mut rng).unwrap();
        assert!((y - &h * &s).norm() < 1e-13);
        let zero = receive_signal(&h, &CVector::zeros(10), 0.0, &mut rng).unwrap();
        assert_eq!(zero.norm(), 0.0);
        assert!(receive_signal(&h, &CVector::zeros(9), 1.0, &mut rng).is_err());
    }
}
