use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

#[derive(Clone, Debug, PartialEq)]
pub struct VICRegConfig {
    pub sim_weight: f64,
    pub var_weight: f64,
    pub cov_weight: f64,
    pub var_target: f64,
    pub eps: f64,
}

impl Default for VICRegConfig {
    fn default() -> Self {
        Self {
            sim_weight: 25.0,
            var_weight: 25.0,
            cov_weight: 1.0,
            var_target: 1.0,
            eps: 1e-4,
        }
    }
}

impl VICRegConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sim_weight < 0.0 || self.var_weight < 0.0 || self.cov_weight < 0.0 {
            return Err(Error::Config("VICReg weights must be non-negative".into()));
        }
        Ok(())
    }
}

/// Unweighted terms and the weighted total.
pub struct VicTerms<T: Element> {
    pub invariance: Tensor<T>,
    pub variance: Tensor<T>,
    pub covariance: Tensor<T>,
    pub total: Tensor<T>,
}

/// Hinge on per-dimension std and off-diagonal covariance penalty of one
/// branch. Uses the unbiased `N − 1` normalization.
fn branch_terms<T: Element>(z: &Tensor<T>, cfg: &VICRegConfig) -> Result<(Tensor<T>, Tensor<T>)> {
    let (n, d) = (z.shape()[0], z.shape()[1]);
    let centered = z.add_row(&z.mean_axis(0)?.neg())?;
    let var = centered.square().sum_axis(0)?.scale(1.0 / (n as f64 - 1.0));
    let std = var.add_scalar(cfg.eps).sqrt();
    let hinge = std.neg().add_scalar(cfg.var_target).relu().mean();

    let cov = centered
        .transpose()?
        .matmul(&centered)?
        .scale(1.0 / (n as f64 - 1.0));
    let mut off = vec![T::one(); d * d];
    for i in 0..d {
        off[i * d + i] = T::zero();
    }
    let off = Tensor::from_vec(&[d, d], off)?;
    let cov_pen = cov.square().mul(&off)?.sum().scale(1.0 / d as f64);
    Ok((hinge, cov_pen))
}

/// `λ·MSE(zA, zB) + μ·(hinge_A + hinge_B)/2 + ν·(cov_A + cov_B)`.
pub fn vicreg_loss<T: Element>(za: &Tensor<T>, zb: &Tensor<T>, cfg: &VICRegConfig) -> Result<VicTerms<T>> {
    cfg.validate()?;
    if za.ndim() != 2 || za.shape() != zb.shape() {
        return Err(Error::shape("vicreg_loss", za.shape(), zb.shape()));
    }
    if za.shape()[0] < 2 {
        return Err(Error::invalid("vicreg_loss", "covariance needs at least 2 samples"));
    }
    let invariance = za.sub(zb)?.square().mean();
    let (ha, ca) = branch_terms(za, cfg)?;
    let (hb, cb) = branch_terms(zb, cfg)?;
    let variance = ha.add(&hb)?.scale(0.5);
    let covariance = ca.add(&cb)?;
    let total = invariance
        .scale(cfg.sim_weight)
        .add(&variance.scale(cfg.var_weight))?
        .add(&covariance.scale(cfg.cov_weight))?;
    Ok(VicTerms {
        invariance,
        variance,
        covariance,
        total,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testing::check_fn;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_z(seed: u64, n: usize, d: usize, scale: f64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n * d).map(|_| rng.gen_range(-scale..scale)).collect()
    }

    #[test]
    fn identical_branches_have_zero_invariance() {
        let z = Tensor::from_vec(&[5, 3], rand_z(1, 5, 3, 1.0)).unwrap();
        let t = vicreg_loss(&z, &z, &VICRegConfig::default()).unwrap();
        assert_eq!(t.invariance.item(), 0.0);
    }

    #[test]
    fn wide_spread_disables_the_hinge() {
        // ±5 per dimension: std far above the target of 1
        let n = 6;
        let za: Vec<f64> = (0..n * 2).map(|i| if (i / 2) % 2 == 0 { 5.0 } else { -5.0 }).collect();
        let zb: Vec<f64> = za.iter().map(|v| v * 1.5).collect();
        let t = vicreg_loss(
            &Tensor::from_vec(&[n, 2], za).unwrap(),
            &Tensor::from_vec(&[n, 2], zb).unwrap(),
            &VICRegConfig::default(),
        )
        .unwrap();
        assert_eq!(t.variance.item(), 0.0);
    }

    #[test]
    fn matches_direct_covariance() {
        let (n, d) = (7, 4);
        let za = rand_z(2, n, d, 2.0);
        let zb = rand_z(3, n, d, 0.5);
        let cfg = VICRegConfig::default();
        let oracle_branch = |z: &[f64]| {
            let mut mean = vec![0.0; d];
            for i in 0..n {
                for j in 0..d {
                    mean[j] += z[i * d + j] / n as f64;
                }
            }
            let mut cov = vec![vec![0.0; d]; d];
            for a in 0..d {
                for b in 0..d {
                    for i in 0..n {
                        cov[a][b] += (z[i * d + a] - mean[a]) * (z[i * d + b] - mean[b]);
                    }
                    cov[a][b] /= (n - 1) as f64;
                }
            }
            let mut off = 0.0;
            let mut hinge = 0.0;
            for a in 0..d {
                for b in 0..d {
                    if a != b {
                        off += cov[a][b] * cov[a][b];
                    }
                }
                hinge += (cfg.var_target - (cov[a][a] + cfg.eps).sqrt()).max(0.0);
            }
            (hinge / d as f64, off / d as f64)
        };
        let (ha, ca) = oracle_branch(&za);
        let (hb, cb) = oracle_branch(&zb);
        let inv: f64 = za.iter().zip(&zb).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / (n * d) as f64;
        let total = cfg.sim_weight * inv + cfg.var_weight * (ha + hb) / 2.0 + cfg.cov_weight * (ca + cb);
        let t = vicreg_loss(
            &Tensor::from_vec(&[n, d], za).unwrap(),
            &Tensor::from_vec(&[n, d], zb).unwrap(),
            &cfg,
        )
        .unwrap();
        assert!((t.covariance.item() - (ca + cb)).abs() <= 1e-6);
        assert!((t.variance.item() - (ha + hb) / 2.0).abs() <= 1e-6);
        assert!((t.total.item() - total).abs() <= 1e-6);
    }

    #[test]
    fn needs_two_samples() {
        let z = Tensor::<f64>::from_vec(&[1, 3], vec![1., 2., 3.]).unwrap();
        assert!(vicreg_loss(&z, &z, &VICRegConfig::default()).is_err());
    }

    #[test]
    fn negative_weights_rejected() {
        let z = Tensor::<f64>::from_vec(&[2, 1], vec![1., 2.]).unwrap();
        let cfg = VICRegConfig { cov_weight: -1.0, ..Default::default() };
        assert!(vicreg_loss(&z, &z, &cfg).is_err());
    }

    #[test]
    fn gradcheck() {
        let (n, d) = (5, 3);
        let r = check_fn(
            &[(vec![n, d], rand_z(4, n, d, 0.3)), (vec![n, d], rand_z(5, n, d, 0.3))],
            1e-5,
            &|x| Ok(vicreg_loss(&x[0], &x[1], &VICRegConfig::default())?.total),
        )
        .unwrap();
        assert!(r.rel_error <= 1e-4, "{r:?}");
    }
}
