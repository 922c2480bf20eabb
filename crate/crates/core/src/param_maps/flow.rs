//! Jacobian flows `S = U^m o Sigma^m o ... o U^1 o Sigma^1` with orthogonal
//! `Sigma^j` and monotone triangular `U^j`.

use serde::{Deserialize, Serialize};

use super::{ComponentDegrees, IntegrandForm, MonotoneMapSpec, Scratch};
use crate::densities::SupportBox;
use crate::error::{Error, Result};

/// Tolerance on `|Sigma^T Sigma - I|` entries.
pub const ORTHOGONALITY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowBlock {
    /// Row-major orthogonal matrix applied before the triangular map.
    pub rotation: Vec<Vec<f64>>,
    pub map: MonotoneMapSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FlowDocument", into = "FlowDocument")]
pub struct JacobianFlowSpec {
    support: SupportBox,
    blocks: Vec<FlowBlock>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FlowDocument {
    pub support: SupportBox,
    pub blocks: Vec<FlowBlock>,
}

impl TryFrom<FlowDocument> for JacobianFlowSpec {
    type Error = Error;
    fn try_from(d: FlowDocument) -> Result<Self> {
        JacobianFlowSpec::new(d.support, d.blocks)
    }
}

impl From<JacobianFlowSpec> for FlowDocument {
    fn from(f: JacobianFlowSpec) -> Self {
        Self {
            support: f.support,
            blocks: f.blocks,
        }
    }
}

/// Output of a forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowEval {
    pub y: Vec<f64>,
    pub logdet: f64,
    /// Inputs `Sigma^j x^{j-1}` of each triangular block.
    pub intermediates: Vec<Vec<f64>>,
    /// Blocks whose output has Euclidean norm above 1.
    pub norm_violations: usize,
}

fn matvec(m: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    m.iter()
        .map(|r| r.iter().zip(x).map(|(a, b)| a * b).sum())
        .collect()
}

fn matvec_t(m: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    let d = x.len();
    (0..d)
        .map(|j| (0..d).map(|i| m[i][j] * x[i]).sum())
        .collect()
}

fn check_orthogonal(m: &[Vec<f64>], d: usize) -> Result<()> {
    if m.len() != d || m.iter().any(|r| r.len() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: m.len(),
        });
    }
    let mut worst = 0.0f64;
    for i in 0..d {
        for j in 0..d {
            let dot: f64 = (0..d).map(|k| m[k][i] * m[k][j]).sum();
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((dot - target).abs());
        }
    }
    if worst > ORTHOGONALITY_TOL {
        return Err(Error::NotOrthogonal(worst));
    }
    Ok(())
}

/// Bounding box of the image of `b` under the linear map `m`.
pub fn image_box(m: &[Vec<f64>], b: &SupportBox) -> Result<SupportBox> {
    let d = b.dim();
    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    for corner in 0..(1usize << d) {
        let x: Vec<f64> = (0..d)
            .map(|k| {
                if corner >> k & 1 == 1 {
                    b.upper()[k]
                } else {
                    b.lower()[k]
                }
            })
            .collect();
        let y = matvec(m, &x);
        for k in 0..d {
            lo[k] = lo[k].min(y[k]);
            hi[k] = hi[k].max(y[k]);
        }
    }
    SupportBox::new(lo, hi)
}

/// Permutation matrix with `(P x)_i = x_{perm[i]}`.
pub fn permutation_matrix(perm: &[usize]) -> Vec<Vec<f64>> {
    let d = perm.len();
    (0..d)
        .map(|i| {
            (0..d)
                .map(|j| if perm[i] == j { 1.0 } else { 0.0 })
                .collect()
        })
        .collect()
}

impl JacobianFlowSpec {
    pub fn new(support: SupportBox, blocks: Vec<FlowBlock>) -> Result<Self> {
        if blocks.is_empty() {
            return Err(Error::InvalidParameter(
                "a flow needs at least one block".into(),
            ));
        }
        let d = support.dim();
        for b in &blocks {
            check_orthogonal(&b.rotation, d)?;
            if b.map.dim() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: b.map.dim(),
                });
            }
        }
        Ok(Self { support, blocks })
    }

    /// `depth` identity-initialized blocks; the first rotation is the identity
    /// and every later one reverses the coordinates.
    pub fn alternating(
        support: SupportBox,
        depth: usize,
        diag_degree: usize,
        tail_degree: usize,
        form: IntegrandForm,
    ) -> Result<Self> {
        let d = support.dim();
        let mut blocks = Vec::with_capacity(depth);
        let mut current = support.clone();
        for j in 0..depth {
            // each rotation acts on the previous block's output coordinates
            let rotation = if j == 0 {
                permutation_matrix(&(0..d).collect::<Vec<_>>())
            } else {
                permutation_matrix(&(0..d).rev().collect::<Vec<_>>())
            };
            let input = image_box(&rotation, &current)?;
            let map = MonotoneMapSpec::identity(
                input.clone(),
                input.clone(),
                ComponentDegrees::uniform(d, diag_degree, tail_degree),
                form,
            )?;
            current = input;
            blocks.push(FlowBlock { rotation, map });
        }
        Self::new(support, blocks)
    }

    pub fn dim(&self) -> usize {
        self.support.dim()
    }

    pub fn depth(&self) -> usize {
        self.blocks.len()
    }

    pub fn support(&self) -> &SupportBox {
        &self.support
    }

    pub fn blocks(&self) -> &[FlowBlock] {
        &self.blocks
    }

    pub fn n_params(&self) -> usize {
        self.blocks.iter().map(|b| b.map.n_params()).sum()
    }

    pub fn theta(&self) -> Vec<f64> {
        self.blocks
            .iter()
            .flat_map(|b| b.map.theta().iter().copied())
            .collect()
    }

    pub fn with_theta(&self, theta: &[f64]) -> Result<Self> {
        if theta.len() != self.n_params() {
            return Err(Error::DimensionMismatch {
                expected: self.n_params(),
                got: theta.len(),
            });
        }
        let mut out = self.clone();
        let mut off = 0;
        for b in &mut out.blocks {
            let n = b.map.n_params();
            b.map.set_theta(theta[off..off + n].to_vec())?;
            off += n;
        }
        Ok(out)
    }

    pub fn eval_unchecked(&self, x: &[f64], scr: &mut Scratch) -> FlowEval {
        let mut cur = x.to_vec();
        let mut logdet = 0.0;
        let mut intermediates = Vec::with_capacity(self.blocks.len());
        let mut norm_violations = 0;
        for b in &self.blocks {
            let z = matvec(&b.rotation, &cur);
            let (y, ld) = b.map.eval_unchecked(&z, scr);
            logdet += ld.iter().sum::<f64>();
            if y.iter().map(|v| v * v).sum::<f64>() > 1.0 {
                norm_violations += 1;
            }
            intermediates.push(z);
            cur = y;
        }
        FlowEval {
            y: cur,
            logdet,
            intermediates,
            norm_violations,
        }
    }

    /// `y = S(x)` and `ln |det JS(x)| = sum_j sum_k ln D_k U^j_k(x^j)`.
    pub fn flow_eval_with_logdet(&self, x: &[f64]) -> Result<FlowEval> {
        self.support.check(x)?;
        Ok(self.eval_unchecked(x, &mut Scratch::default()))
    }

    /// Reverse pass for `ybar . S(x) + w * logdet`, adding into `grad`.
    pub fn backprop_row(
        &self,
        x: &[f64],
        ybar: &[f64],
        w: f64,
        grad: &mut [f64],
        scr: &mut Scratch,
    ) {
        let fe = self.eval_unchecked(x, scr);
        let mut bar = ybar.to_vec();
        let mut end = self.n_params();
        for (b, z) in self.blocks.iter().zip(&fe.intermediates).rev() {
            let n = b.map.n_params();
            let mut zbar = vec![0.0; z.len()];
            b.map
                .backprop_row(z, &bar, w, &mut grad[end - n..end], Some(&mut zbar), scr);
            bar = matvec_t(&b.rotation, &zbar);
            end -= n;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn det(m: &[Vec<f64>]) -> f64 {
        // Gaussian elimination with partial pivoting
        let d = m.len();
        let mut a = m.to_vec();
        let mut det = 1.0;
        for c in 0..d {
            let p = (c..d)
                .max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))
                .unwrap();
            if a[p][c] == 0.0 {
                return 0.0;
            }
            if p != c {
                a.swap(p, c);
                det = -det;
            }
            det *= a[c][c];
            for r in c + 1..d {
                let f = a[r][c] / a[c][c];
                for k in c..d {
                    a[r][k] -= f * a[c][k];
                }
            }
        }
        det
    }

    fn randomize(f: &JacobianFlowSpec, rng: &mut ChaCha8Rng, scale: f64) -> JacobianFlowSpec {
        let th: Vec<f64> = f
            .theta()
            .iter()
            .map(|t| t + rng.random_range(-scale..scale))
            .collect();
        f.with_theta(&th).unwrap()
    }

    #[test]
    fn identity_single_block() {
        let b = SupportBox::unit(2);
        let f = JacobianFlowSpec::alternating(b, 1, 1, 1, IntegrandForm::Exp).unwrap();
        let e = f.flow_eval_with_logdet(&[0.3, 0.6]).unwrap();
        assert!((e.y[0] - 0.3).abs() < 1e-14 && (e.y[1] - 0.6).abs() < 1e-14);
        assert!(e.logdet.abs() < 1e-14);
    }

    #[test]
    fn two_swaps_cancel() {
        let b = SupportBox::unit(2);
        let swap = permutation_matrix(&[1, 0]);
        let id = MonotoneMapSpec::identity(
            b.clone(),
            b.clone(),
            ComponentDegrees::uniform(2, 1, 1),
            IntegrandForm::Exp,
        )
        .unwrap();
        let f = JacobianFlowSpec::new(
            b,
            vec![
                FlowBlock {
                    rotation: swap.clone(),
                    map: id.clone(),
                },
                FlowBlock {
                    rotation: swap,
                    map: id,
                },
            ],
        )
        .unwrap();
        let e = f.flow_eval_with_logdet(&[0.2, 0.9]).unwrap();
        assert!((e.y[0] - 0.2).abs() < 1e-14 && (e.y[1] - 0.9).abs() < 1e-14);
        assert!(e.logdet.abs() < 1e-14);
    }

    #[test]
    fn doubling_logdet() {
        let b = SupportBox::unit(1);
        let mut m = MonotoneMapSpec::zeros(
            1,
            b.clone(),
            b.clone(),
            ComponentDegrees::uniform(1, 0, 0),
            IntegrandForm::Exp,
        )
        .unwrap();
        m.set_theta(vec![0.0, 2f64.ln()]).unwrap();
        let f = JacobianFlowSpec::new(
            b,
            vec![FlowBlock {
                rotation: vec![vec![1.0]],
                map: m,
            }],
        )
        .unwrap();
        let e = f.flow_eval_with_logdet(&[0.4]).unwrap();
        assert!((e.y[0] - 0.8).abs() < 1e-15);
        assert!((e.logdet - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn rejects_non_orthogonal() {
        let b = SupportBox::unit(2);
        let id = MonotoneMapSpec::identity(
            b.clone(),
            b.clone(),
            ComponentDegrees::uniform(2, 1, 1),
            IntegrandForm::Exp,
        )
        .unwrap();
        let bad = vec![vec![1.0, 1e-9], vec![0.0, 1.0]];
        assert!(matches!(
            JacobianFlowSpec::new(
                b,
                vec![FlowBlock {
                    rotation: bad,
                    map: id
                }]
            ),
            Err(Error::NotOrthogonal(_))
        ));
    }

    #[test]
    fn logdet_matches_numerical_jacobian() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for d in 1..=3 {
            for depth in 1..=3 {
                let b = SupportBox::cube(d, -1.0, 1.0).unwrap();
                let f = JacobianFlowSpec::alternating(b, depth, 2, 1, IntegrandForm::Exp).unwrap();
                let f = randomize(&f, &mut rng, 0.1);
                let x: Vec<f64> = (0..d).map(|_| rng.random_range(-0.8..0.8)).collect();
                let e = f.flow_eval_with_logdet(&x).unwrap();
                let h = 1e-6;
                let mut scr = Scratch::default();
                let mut jac = vec![vec![0.0; d]; d];
                for j in 0..d {
                    let mut xp = x.clone();
                    let mut xm = x.clone();
                    xp[j] += h;
                    xm[j] -= h;
                    let yp = f.eval_unchecked(&xp, &mut scr).y;
                    let ym = f.eval_unchecked(&xm, &mut scr).y;
                    for i in 0..d {
                        jac[i][j] = (yp[i] - ym[i]) / (2.0 * h);
                    }
                }
                let ld = det(&jac).abs().ln();
                assert!(
                    (ld - e.logdet).abs() < 1e-4,
                    "d={d} depth={depth}: {ld} vs {}",
                    e.logdet
                );
            }
        }
    }

    #[test]
    fn permutation_relabels_triangular_map() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let b = SupportBox::cube(3, -1.0, 1.0).unwrap();
        let perm = [2, 0, 1];
        let rot = permutation_matrix(&perm);
        let inner_box = image_box(&rot, &b).unwrap();
        let m = MonotoneMapSpec::identity(
            inner_box.clone(),
            inner_box,
            ComponentDegrees::uniform(3, 2, 1),
            IntegrandForm::Exp,
        )
        .unwrap();
        let th: Vec<f64> = m
            .theta()
            .iter()
            .map(|t| t + rng.random_range(-0.2..0.2))
            .collect();
        let m = m.with_theta(&th).unwrap();
        let f = JacobianFlowSpec::new(
            b,
            vec![FlowBlock {
                rotation: rot,
                map: m.clone(),
            }],
        )
        .unwrap();
        let x = [0.1, -0.4, 0.7];
        let y = f.flow_eval_with_logdet(&x).unwrap().y;
        let z: Vec<f64> = perm.iter().map(|&p| x[p]).collect();
        let direct = m.eval_unchecked(&z, &mut Scratch::default()).0;
        assert_eq!(y, direct);
    }

    #[test]
    fn flow_gradient_matches_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let b = SupportBox::cube(2, -1.0, 1.0).unwrap();
        let f = JacobianFlowSpec::alternating(b, 3, 2, 2, IntegrandForm::Exp).unwrap();
        let f = randomize(&f, &mut rng, 0.1);
        let x = [0.3, -0.5];
        let ybar = [0.7, -1.3];
        let w = -1.0;
        let obj = |g: &JacobianFlowSpec| {
            let e = g.eval_unchecked(&x, &mut Scratch::default());
            ybar[0] * e.y[0] + ybar[1] * e.y[1] + w * e.logdet
        };
        let mut grad = vec![0.0; f.n_params()];
        f.backprop_row(&x, &ybar, w, &mut grad, &mut Scratch::default());
        let th = f.theta();
        let h = 1e-6;
        for p in 0..th.len() {
            let mut tp = th.clone();
            let mut tm = th.clone();
            tp[p] += h;
            tm[p] -= h;
            let fd =
                (obj(&f.with_theta(&tp).unwrap()) - obj(&f.with_theta(&tm).unwrap())) / (2.0 * h);
            assert!(
                (fd - grad[p]).abs() <= 1e-5 * grad[p].abs().max(1.0),
                "p={p}: {fd} vs {}",
                grad[p]
            );
        }
    }

    #[test]
    fn json_round_trip() {
        let b = SupportBox::unit(2);
        let f = JacobianFlowSpec::alternating(b, 2, 1, 1, IntegrandForm::Square).unwrap();
        let s = serde_json::to_string(&f).unwrap();
        let back: JacobianFlowSpec = serde_json::from_str(&s).unwrap();
        assert_eq!(back, f);
    }
}
