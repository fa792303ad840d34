use crate::halfspace::frame::SimilarityMap;
use crate::halfspace::system::AlmostOrthogonalSystem;
use crate::ideals::{sequence_norm, IdealSpec};
use crate::opcore::dense::{CVec, Mat};
use crate::opcore::structured::StructuredOp;
use crate::{Error, Result, C64};

/// Leading `m x m` block of `S^-1 T S` on the f-basis, next to the values
/// the construction predicts for it.
#[derive(Clone, Debug)]
pub struct CoreMatrix {
    pub matrix: Mat,
    /// Predicted diagonal `lambda_{n_k}` (position 1 holds 0).
    pub lambdas: Vec<C64>,
    /// Predicted first row `alpha_{n_k}` (position 1 holds 0).
    pub alphas: Vec<f64>,
    /// First column: coefficients of `P_{M'} T e` in the l-basis.
    pub betas: Vec<C64>,
    /// Largest entry outside the first row, first column and diagonal.
    pub off_pattern: f64,
    /// Largest deviation of the diagonal and first row from the prediction.
    pub model_defect: f64,
    /// `||sum beta_j l_j - P_{M'} T e||`.
    pub beta_defect: f64,
}

impl CoreMatrix {
    pub fn size(&self) -> usize {
        self.matrix.nrows()
    }

    /// Measured `(lambda, alpha)` at 0-based position `p >= 1`.
    pub fn entry(&self, p: usize) -> (C64, C64) {
        (self.matrix[(p, p)], self.matrix[(0, p)])
    }

    /// Core matrix with exactly the predicted pattern.
    pub fn synthetic(lambdas: Vec<C64>, alphas: Vec<f64>) -> CoreMatrix {
        let m = lambdas.len();
        let mut matrix = Mat::zeros(m, m);
        for k in 1..m {
            matrix[(k, k)] = lambdas[k];
            matrix[(0, k)] = C64::new(alphas[k], 0.0);
        }
        CoreMatrix {
            matrix,
            lambdas,
            alphas,
            betas: vec![C64::new(0.0, 0.0); m],
            off_pattern: 0.0,
            model_defect: 0.0,
            beta_defect: 0.0,
        }
    }
}

pub fn assemble_core(
    g: &StructuredOp,
    op: &StructuredOp,
    sys: &AlmostOrthogonalSystem,
    sim: &SimilarityMap,
) -> Result<CoreMatrix> {
    let m = sys.len();
    let idx: Vec<usize> = (0..m).collect();
    let matrix = g.block(&idx, &idx);
    let scale = op.norm_bound().max(f64::MIN_POSITIVE);
    let mut off_pattern: f64 = 0.0;
    let mut model_defect: f64 = 0.0;
    for j in 1..m {
        for k in 1..m {
            if j != k {
                off_pattern = off_pattern.max(matrix[(j, k)].norm());
            }
        }
        model_defect = model_defect
            .max((matrix[(j, j)] - sys.lambdas[j]).norm())
            .max((matrix[(0, j)] - sys.alphas[j]).norm());
    }
    if off_pattern > 1e-6 * scale {
        return Err(Error::Construction(format!("core pattern residual {off_pattern:e}")));
    }
    let betas: Vec<C64> = (0..m).map(|j| matrix[(j, 0)]).collect();
    let te = op.apply(&sys.l_vectors[0]);
    let projected = &sim.f * sim.f.ad_mul(&te);
    let combo = sys.l_matrix() * CVec::from_vec(betas.clone());
    let beta_defect = (combo - projected).norm();
    Ok(CoreMatrix {
        matrix,
        lambdas: sys.lambdas.clone(),
        alphas: sys.alphas.clone(),
        betas,
        off_pattern,
        model_defect,
        beta_defect,
    })
}

/// Cutoff `K` and the half-space positions `f_{2k}, k >= K` (0-based).
#[derive(Clone, Debug, PartialEq)]
pub struct Halfspace {
    pub k: usize,
    pub positions: Vec<usize>,
    pub lambda_sup: f64,
    pub lambda_ideal: f64,
    pub alpha_l2: f64,
}

pub fn halfspace_positions(m: usize, k: usize) -> Vec<usize> {
    (k..).map(|j| 2 * j).take_while(|&p| p <= m).map(|p| p - 1).collect()
}

pub fn choose_halfspace(core: &CoreMatrix, ideal: &IdealSpec, epsilon: f64) -> Result<Halfspace> {
    let m = core.size();
    for k in 1.. {
        let positions = halfspace_positions(m, k);
        if positions.is_empty() {
            break;
        }
        let lam: Vec<f64> = positions.iter().map(|&p| core.entry(p).0.norm()).collect();
        let alpha: Vec<f64> = positions.iter().map(|&p| core.entry(p).1.norm()).collect();
        let lambda_sup = lam.iter().copied().fold(0.0, f64::max);
        let lambda_ideal = sequence_norm(&lam, ideal);
        let alpha_l2 = alpha.iter().map(|a| a * a).sum::<f64>().sqrt();
        if lambda_sup < epsilon && lambda_ideal < epsilon && alpha_l2 < epsilon {
            return Ok(Halfspace { k, positions, lambda_sup, lambda_ideal, alpha_l2 });
        }
    }
    Err(Error::BudgetExhausted(format!(
        "no cutoff meets epsilon = {epsilon} within a system of size {m}; enlarge the system"
    )))
}
