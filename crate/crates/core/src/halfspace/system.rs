use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::halfspace::near::ApproachSequence;
use crate::opcore::dd::{self, Dd};
use crate::opcore::dense::{hermitian_eigenvalues, CVec, Mat};
use crate::{Error, Result, C64};

pub const RIESZ_LOWER: f64 = 43.0 / 45.0;
pub const RIESZ_UPPER: f64 = 47.0 / 45.0;
pub const RIESZ_DRAWS: usize = 1000;

/// Selected vectors `l_1 = e, l_2 = h_{n_2}, ...`.
#[derive(Clone, Debug)]
pub struct AlmostOrthogonalSystem {
    /// Indices into the approach sequence; `None` marks the probe.
    pub selected: Vec<Option<usize>>,
    pub l_vectors: Vec<CVec>,
    /// Inner products `<l_j, l_k>`, in double-double when available.
    pub gram: Mat,
    pub lambdas: Vec<C64>,
    pub alphas: Vec<f64>,
    pub dd: bool,
}

impl AlmostOrthogonalSystem {
    pub fn len(&self) -> usize {
        self.l_vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.l_vectors.is_empty()
    }

    pub fn l_matrix(&self) -> Mat {
        Mat::from_columns(&self.l_vectors)
    }

    /// Largest ratio `|<l_j, l_k>| / 4^-(j+k)` over `j != k` (1-based).
    pub fn pairing_ratio(&self) -> f64 {
        let m = self.len();
        let mut worst: f64 = 0.0;
        for j in 0..m {
            for k in 0..m {
                if j != k {
                    let bound = 4f64.powi(-((j + 1 + k + 1) as i32));
                    worst = worst.max(self.gram[(j, k)].norm() / bound);
                }
            }
        }
        worst
    }
}

enum Inner<'a> {
    Dd(&'a crate::halfspace::near::DdVectors),
    Plain(&'a ApproachSequence),
}

impl Inner<'_> {
    /// `<x, y>` with `None` for the probe.
    fn dot(&self, x: Option<usize>, y: Option<usize>) -> C64 {
        match self {
            Inner::Dd(d) => {
                let get = |i: Option<usize>| match i {
                    None => &d.probe,
                    Some(n) => &d.vectors[n],
                };
                let v: Dd = dd::dot(get(x), get(y));
                C64::new(v.to_f64(), 0.0)
            }
            Inner::Plain(s) => {
                let get = |i: Option<usize>| match i {
                    None => &s.probe,
                    Some(n) => &s.vectors[n],
                };
                get(x).dotc(get(y))
            }
        }
    }
}

/// Greedy first-fit scan in ascending n; stops at `target` or when the
/// candidates run out.
pub fn select_up_to(seq: &ApproachSequence, target: usize) -> AlmostOrthogonalSystem {
    let inner = match &seq.dd {
        Some(d) => Inner::Dd(d),
        None => Inner::Plain(seq),
    };
    let mut selected: Vec<Option<usize>> = vec![None];
    for n in 0..seq.len() {
        if selected.len() >= target {
            break;
        }
        let pos = selected.len() + 1;
        let ok = selected.iter().enumerate().all(|(j, &s)| {
            let bound = 4f64.powi(-((j + 1 + pos) as i32));
            inner.dot(s, Some(n)).norm() < bound
        });
        if ok {
            selected.push(Some(n));
        }
    }
    let m = selected.len();
    let mut gram = Mat::zeros(m, m);
    for j in 0..m {
        for k in j..m {
            let g = inner.dot(selected[j], selected[k]);
            gram[(j, k)] = g;
            gram[(k, j)] = g.conj();
        }
    }
    let l_vectors = selected.iter().map(|s| s.map_or_else(|| seq.probe.clone(), |n| seq.vectors[n].clone())).collect();
    let lambdas = selected.iter().map(|s| s.map_or(C64::new(0.0, 0.0), |n| seq.lambdas[n])).collect();
    let alphas = selected.iter().map(|s| s.map_or(0.0, |n| seq.alphas[n])).collect();
    AlmostOrthogonalSystem { selected, l_vectors, gram, lambdas, alphas, dd: seq.dd.is_some() }
}

pub fn select_almost_orthogonal(seq: &ApproachSequence, target: usize) -> Result<AlmostOrthogonalSystem> {
    if target < 6 {
        return Err(Error::Precondition(format!("target size {target} below 6")));
    }
    let sys = select_up_to(seq, target);
    if sys.len() < target {
        return Err(Error::SelectionExhausted { found: sys.len(), target });
    }
    Ok(sys)
}

#[derive(Clone, Debug)]
pub struct RieszCertificate {
    pub lower: f64,
    pub upper: f64,
    /// Extremes of `||sum b_k l_k||^2` over random unit coefficient vectors.
    pub draw_min: f64,
    pub draw_max: f64,
    pub draws: usize,
    pub pass: bool,
}

pub fn riesz_certificate(sys: &AlmostOrthogonalSystem, seed: u64) -> Result<RieszCertificate> {
    if sys.is_empty() {
        return Err(Error::Precondition("empty system".into()));
    }
    let eig = hermitian_eigenvalues(&sys.gram)?;
    let lower = eig.iter().copied().fold(f64::INFINITY, f64::min);
    let upper = eig.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(lower > 0.0) {
        return Err(Error::Construction(format!("Gram matrix is singular (lower bound {lower:e})")));
    }
    let m = sys.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut draw_min, mut draw_max) = (f64::INFINITY, f64::NEG_INFINITY);
    for _ in 0..RIESZ_DRAWS {
        let b = CVec::from_fn(m, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        let b = &b / C64::new(b.norm(), 0.0);
        let q = b.dotc(&(&sys.gram * &b)).re;
        draw_min = draw_min.min(q);
        draw_max = draw_max.max(q);
    }
    let pass = lower >= RIESZ_LOWER - 1e-12
        && upper <= RIESZ_UPPER + 1e-12
        && draw_min >= RIESZ_LOWER - 1e-12
        && draw_max <= RIESZ_UPPER + 1e-12;
    Ok(RieszCertificate { lower, upper, draw_min, draw_max, draws: RIESZ_DRAWS, pass })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectra::ApproachKind;

    fn synthetic(vectors: Vec<CVec>, probe: CVec) -> ApproachSequence {
        let k = vectors.len();
        ApproachSequence {
            beta: C64::new(0.0, 0.0),
            kind: ApproachKind::Ray,
            lambdas: vec![C64::new(0.0, 0.0); k],
            probe,
            probe_label: "test".into(),
            alphas: vec![1.0; k],
            vectors,
            residuals: vec![0.0; k],
            kappas: vec![1.0; k],
            dd: None,
            warnings: Vec::new(),
        }
    }

    fn unit(n: usize, k: usize) -> CVec {
        let mut v = CVec::zeros(n);
        v[k] = C64::new(1.0, 0.0);
        v
    }

    #[test]
    fn orthonormal_candidates() {
        let seq = synthetic((1..8).map(|k| unit(8, k)).collect(), unit(8, 0));
        let sys = select_almost_orthogonal(&seq, 6).unwrap();
        assert_eq!(sys.len(), 6);
        assert_eq!(sys.gram, Mat::identity(6, 6));
        let r = riesz_certificate(&sys, 0).unwrap();
        assert_eq!((r.lower, r.upper), (1.0, 1.0));
    }

    #[test]
    fn repeated_probe_exhausts() {
        let seq = synthetic(vec![unit(8, 0); 10], unit(8, 0));
        assert_eq!(select_up_to(&seq, 6).len(), 1);
        assert_eq!(select_almost_orthogonal(&seq, 6).unwrap_err(), Error::SelectionExhausted { found: 1, target: 6 });
    }

    #[test]
    fn overlapping_pair_fails_window() {
        let sys = AlmostOrthogonalSystem {
            selected: vec![None, Some(0)],
            l_vectors: vec![unit(2, 0), unit(2, 1)],
            gram: Mat::from_row_slice(2, 2, &[1.0, 0.9, 0.9, 1.0].map(|x| C64::new(x, 0.0))),
            lambdas: vec![C64::new(0.0, 0.0); 2],
            alphas: vec![0.0; 2],
            dd: false,
        };
        let r = riesz_certificate(&sys, 0).unwrap();
        assert!((r.lower - 0.1).abs() < 1e-12 && !r.pass);
    }

    #[test]
    fn small_target_rejected() {
        let seq = synthetic(vec![unit(8, 1)], unit(8, 0));
        assert!(matches!(select_almost_orthogonal(&seq, 5), Err(Error::Precondition(_))));
    }
}
