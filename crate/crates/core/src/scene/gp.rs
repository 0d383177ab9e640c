//! Squared-exponential Gaussian-process prior over lathe profiles, evaluated
//! on the integer station grid. Profiles are parameterized by whitened
//! coordinates: `f = L z` with `L` the Cholesky factor of the Gram matrix
//! and `z` iid standard normal, so the latent dimension stays fixed while
//! the station count varies.

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{Error, Result};
use crate::scalar::{cast, Scalar};

/// Factor by which the diagonal jitter grows after a failed factorization.
const JITTER_GROWTH: f64 = 10.0;
/// Jitter ceiling; beyond this the Gram matrix is reported as non-PD.
const JITTER_MAX: f64 = 1e-4;

/// Squared-exponential covariance `exp(-(xi - xj)^2 / (2 L^2))`.
pub fn gp_kernel<T: Scalar>(xi: T, xj: T, bandwidth: T) -> Result<T> {
    if bandwidth <= T::zero() {
        return Err(Error::InvalidParameter(format!(
            "gp bandwidth must be positive, got {}",
            crate::scalar::to_f64(bandwidth)
        )));
    }
    let d = xi - xj;
    let two = cast::<T>(2.0);
    Ok((-(d * d) / (two * bandwidth * bandwidth)).exp())
}

/// Gram matrix of the kernel over `stations` with `jitter` on the diagonal.
pub fn gram<T: Scalar>(stations: &[T], bandwidth: T, jitter: T) -> Result<DMatrix<T>> {
    let n = stations.len();
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let k = gp_kernel(stations[i], stations[j], bandwidth)?;
            m[(i, j)] = k;
            m[(j, i)] = k;
        }
        m[(i, i)] += jitter;
    }
    Ok(m)
}

/// Lower Cholesky factor of the Gram matrix, escalating jitter by powers of
/// ten (up to 1e-4) if the factorization fails. Returns the factor and the
/// jitter actually used.
pub fn gram_cholesky<T: Scalar>(
    stations: &[T],
    bandwidth: T,
    jitter: T,
) -> Result<(DMatrix<T>, T)> {
    if jitter <= T::zero() {
        return Err(Error::InvalidParameter("gp jitter must be positive".into()));
    }
    let mut j = jitter;
    let max = cast::<T>(JITTER_MAX);
    loop {
        let g = gram(stations, bandwidth, j)?;
        if let Some(chol) = nalgebra::Cholesky::new(g) {
            return Ok((chol.unpack(), j));
        }
        j *= cast::<T>(JITTER_GROWTH);
        if j > max {
            return Err(Error::Numerical(format!(
                "gram matrix not positive definite at jitter ceiling {JITTER_MAX}"
            )));
        }
    }
}

/// Integer station coordinates `1..=n` as scalars.
pub fn station_grid<T: Scalar>(n: usize) -> Vec<T> {
    (1..=n).map(|k| cast(k as f64)).collect()
}

/// Map whitened coordinates to GP values on the grid: `f = L z`, using the
/// first `stations.len()` entries of `z`.
pub fn values_from_whitened<T: Scalar>(
    stations: &[T],
    bandwidth: T,
    jitter: T,
    z: &[T],
) -> Result<Vec<T>> {
    let n = stations.len();
    if z.len() < n {
        return Err(Error::InvalidParameter(format!(
            "need {n} whitened coordinates, got {}",
            z.len()
        )));
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    let (l, _) = gram_cholesky(stations, bandwidth, jitter)?;
    let mut f = vec![T::zero(); n];
    for i in 0..n {
        let mut acc = T::zero();
        for k in 0..=i {
            acc += l[(i, k)] * z[k];
        }
        f[i] = acc;
    }
    Ok(f)
}

/// Draw GP values on the grid by sampling fresh whitened coordinates.
pub fn sample_gp_values<T: Scalar, R: Rng + ?Sized>(
    stations: &[T],
    bandwidth: T,
    jitter: T,
    rng: &mut R,
) -> Result<Vec<T>> {
    let z: Vec<T> = (0..stations.len()).map(|_| T::std_normal(rng)).collect();
    values_from_whitened(stations, bandwidth, jitter, &z)
}

/// Positive-radius mapping from GP value to lathe radius.
#[derive(Debug, Clone, Copy)]
pub struct RadiusMap<T> {
    pub base: T,
    pub scale: T,
    pub min: T,
}

impl<T: Scalar> RadiusMap<T> {
    pub fn from_config(cfg: &crate::config::ObjectConfig) -> Self {
        Self { base: cast(cfg.r_base), scale: cast(cfg.r_scale), min: cast(cfg.r_min) }
    }

    pub fn apply(&self, f: T) -> T {
        let r = self.base + self.scale * f;
        if r < self.min {
            self.min
        } else {
            r
        }
    }
}

/// Draw a lathe profile: GP values pushed through the radius mapping.
pub fn sample_gp_profile<T: Scalar, R: Rng + ?Sized>(
    stations: &[T],
    bandwidth: T,
    jitter: T,
    map: RadiusMap<T>,
    rng: &mut R,
) -> Result<Vec<T>> {
    let f = sample_gp_values(stations, bandwidth, jitter, rng)?;
    Ok(f.into_iter().map(|v| map.apply(v)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn kernel_unit_distance_value() {
        // exp(-1/2) at unit separation and unit bandwidth.
        let k = gp_kernel(3.0_f64, 4.0, 1.0).unwrap();
        assert_relative_eq!(k, 0.6065306597126334, epsilon = 1e-15);
        assert_relative_eq!(gp_kernel(2.0_f64, 2.0, 0.7).unwrap(), 1.0);
        assert!(gp_kernel(0.0_f64, 1.0, 0.0).is_err());
    }

    #[test]
    fn kernel_is_symmetric_and_monotone_in_distance() {
        let l = 1.3_f64;
        for d in [0.1, 0.5, 1.0, 2.5] {
            assert_eq!(gp_kernel(0.0, d, l).unwrap(), gp_kernel(d, 0.0, l).unwrap());
        }
        let near = gp_kernel(0.0, 0.5, l).unwrap();
        let far = gp_kernel(0.0, 3.0, l).unwrap();
        assert!(near > far);
    }

    #[test]
    fn gram_is_positive_definite_on_grid() {
        // Oracle: all eigenvalues of the jittered Gram matrix are positive.
        for n in [1usize, 4, 10] {
            for l in [0.5_f64, 2.0, 4.5] {
                let g = gram(&station_grid::<f64>(n), l, 1e-8).unwrap();
                let eig = g.symmetric_eigenvalues();
                assert!(eig.iter().all(|&e| e > 0.0), "n={n} l={l} eig={eig:?}");
            }
        }
    }

    #[test]
    fn cholesky_reconstructs_gram() {
        let stations = station_grid::<f64>(7);
        let (l, used) = gram_cholesky(&stations, 1.7, 1e-8).unwrap();
        assert_eq!(used, 1e-8);
        let g = gram(&stations, 1.7, used).unwrap();
        let rec = &l * l.transpose();
        for i in 0..7 {
            for j in 0..7 {
                assert_relative_eq!(rec[(i, j)], g[(i, j)], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn whitened_values_have_prior_moments() {
        // Monte Carlo oracle: marginal variance 1 + jitter at each station,
        // correlation between adjacent stations close to the kernel value.
        let stations = station_grid::<f64>(5);
        let l = 2.0;
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let n = 20_000;
        let mut sum = vec![0.0; 5];
        let mut sum_sq = vec![0.0; 5];
        let mut sum_adj = 0.0;
        for _ in 0..n {
            let f = sample_gp_values(&stations, l, 1e-8, &mut rng).unwrap();
            for i in 0..5 {
                sum[i] += f[i];
                sum_sq[i] += f[i] * f[i];
            }
            sum_adj += f[2] * f[3];
        }
        for i in 0..5 {
            let mean = sum[i] / n as f64;
            let var = sum_sq[i] / n as f64 - mean * mean;
            assert!(mean.abs() < 0.02, "station {i} mean {mean}");
            assert!((var - 1.0).abs() < 0.03, "station {i} var {var}");
        }
        let cov = sum_adj / n as f64;
        let expect = gp_kernel(3.0, 4.0, l).unwrap();
        assert!((cov - expect).abs() < 0.03, "cov {cov} vs {expect}");
    }

    #[test]
    fn radius_map_clamps_at_min() {
        let map = RadiusMap { base: 0.35_f64, scale: 0.12, min: 0.05 };
        assert_relative_eq!(map.apply(0.0), 0.35);
        assert_relative_eq!(map.apply(1.0), 0.47);
        assert_relative_eq!(map.apply(-10.0), 0.05);
    }

    #[test]
    fn empty_station_grid_gives_empty_profile() {
        let f = values_from_whitened::<f64>(&[], 1.0, 1e-8, &[]).unwrap();
        assert!(f.is_empty());
    }

    #[test]
    fn jitter_escalates_on_near_singular_gram() {
        // A huge bandwidth over a small grid drives the smallest eigenvalue
        // far below machine precision; a 1e-16 starting jitter cannot rescue
        // the factorization, so it must escalate (or report failure at the
        // ceiling), never panic.
        let stations = station_grid::<f64>(10);
        match gram_cholesky(&stations, 1e3, 1e-16) {
            Ok((_, used)) => assert!(used > 1e-16, "expected escalated jitter, got {used}"),
            Err(Error::Numerical(_)) => {}
            Err(e) => panic!("unexpected error {e}"),
        }
        assert!(gram_cholesky(&stations, 1.0, 0.0).is_err());
        assert!(gram_cholesky(&stations, 1.0, -1e-8).is_err());
    }
}
