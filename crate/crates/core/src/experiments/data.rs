//! Data generators for the three simulation studies.

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::error::Result;
use crate::inference::{Statistic, ENET_STAT_L1, ENET_STAT_RIDGE};
use crate::model::{Matrix, Model, Vector};

use super::config::ExperimentKind;

/// Component scale of every mixture component in the generator.
pub const MIXTURE_SD: f64 = 0.1;
pub const MIXTURE_MEAN: f64 = 0.4;
pub const SPARSE_SIGNAL: f64 = 5.0;
pub const SPARSE_ACTIVE: usize = 5;

/// One simulated data set: the data, its statistic, and the true null model
/// the oracle samples from.
#[derive(Debug, Clone)]
pub struct TrialData {
    pub x: Vector,
    pub statistic: Statistic,
    pub null_model: Model,
    pub theta0: Vector,
}

/// The two-component null `½N(0.4, 0.01) + ½N(−0.4, 0.01)` as mixture
/// parameters.
pub fn mixture_null_theta() -> Vector {
    Vector::from_vec(vec![0.5, MIXTURE_MEAN, MIXTURE_SD, -MIXTURE_MEAN, MIXTURE_SD])
}

/// `π0 N(0, 0.01) + ((1 − π0)/2) N(±0.4, 0.01)`.
pub fn mixture_data<R: Rng + ?Sized>(pi0: f64, n: usize, rng: &mut R) -> Vector {
    let noise = Normal::new(0.0, MIXTURE_SD).expect("valid scale");
    Vector::from_fn(n, |_, _| {
        let u: f64 = rng.random();
        let centre = if u < pi0 {
            0.0
        } else if rng.random::<bool>() {
            MIXTURE_MEAN
        } else {
            -MIXTURE_MEAN
        };
        centre + noise.sample(rng)
    })
}

/// Step mean `0.1·⌈i/10⌉` for `i = 1..n`.
pub fn isotonic_theta0(n: usize) -> Vector {
    Vector::from_fn(n, |i, _| 0.1 * ((i + 1) as f64 / 10.0).ceil())
}

pub fn sparse_theta0(d: usize) -> Vector {
    Vector::from_fn(d, |j, _| if j < SPARSE_ACTIVE { SPARSE_SIGNAL } else { 0.0 })
}

fn normals<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vector {
    Vector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Draw a data set for `kind` at signal level `signal` (π0 or β0).
/// `stat_seed` fixes the k-means restarts of the mixture statistic.
pub fn generate<R: Rng + ?Sized>(
    kind: ExperimentKind,
    signal: f64,
    n: usize,
    d: usize,
    stat_seed: u64,
    rng: &mut R,
) -> Result<TrialData> {
    match kind {
        ExperimentKind::MixtureGof => Ok(TrialData {
            x: mixture_data(signal, n, rng),
            statistic: Statistic::kmeans(stat_seed),
            null_model: Model::mixture2(n)?,
            theta0: mixture_null_theta(),
        }),
        ExperimentKind::IsotonicRegression => {
            let theta0 = isotonic_theta0(n);
            let x = &theta0 + normals(n, rng);
            let y = &x * signal + normals(n, rng);
            Ok(TrialData {
                x,
                statistic: Statistic::abs_correlation(y),
                null_model: Model::gaussian_linear(Matrix::identity(n, n), 1.0, 0.0)?,
                theta0,
            })
        }
        ExperimentKind::SparseRegression => {
            let scale = 1.0 / (d as f64).sqrt();
            let z = Matrix::from_fn(n, d, |_, _| scale * rng.sample::<f64, _>(StandardNormal));
            let theta0 = sparse_theta0(d);
            let x = &z * &theta0 + normals(n, rng);
            let eta = normals(n, rng);
            let y =
                Vector::from_fn(n, |i, _| signal * x[i] + (0..SPARSE_ACTIVE).map(|j| z[(i, j)]).sum::<f64>() + eta[i]);
            Ok(TrialData {
                x,
                statistic: Statistic::elastic_net_coef(y, z.clone(), ENET_STAT_RIDGE, ENET_STAT_L1)?,
                null_model: Model::gaussian_linear(z, 1.0, 0.0)?,
                theta0,
            })
        }
    }
}
