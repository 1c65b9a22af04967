use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::linear::{Mlp, MlpCache};
use crate::error::{Error, Result};
use crate::rng::{rng_for, STREAM_INIT};

/// Layer widths and classifier settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub d_in: usize,
    #[serde(default = "defaults::d_hidden")]
    pub d_hidden: usize,
    #[serde(default = "defaults::d_feat")]
    pub d_feat: usize,
    #[serde(default = "defaults::d_proj_hidden")]
    pub d_proj_hidden: usize,
    #[serde(default = "defaults::d_proj")]
    pub d_proj: usize,
    pub num_classes: usize,
    #[serde(default = "defaults::classifier_scale")]
    pub classifier_scale: f64,
}

pub(crate) mod defaults {
    pub fn d_hidden() -> usize {
        64
    }
    pub fn d_feat() -> usize {
        32
    }
    pub fn d_proj_hidden() -> usize {
        64
    }
    pub fn d_proj() -> usize {
        32
    }
    pub fn classifier_scale() -> f64 {
        10.0
    }
}

impl ModelConfig {
    pub fn new(d_in: usize, num_classes: usize) -> Self {
        ModelConfig {
            d_in,
            d_hidden: defaults::d_hidden(),
            d_feat: defaults::d_feat(),
            d_proj_hidden: defaults::d_proj_hidden(),
            d_proj: defaults::d_proj(),
            num_classes,
            classifier_scale: defaults::classifier_scale(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("d_in", self.d_in),
            ("d_hidden", self.d_hidden),
            ("d_feat", self.d_feat),
            ("d_proj_hidden", self.d_proj_hidden),
            ("d_proj", self.d_proj),
            ("num_classes", self.num_classes),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, d)| *d == 0) {
            return Err(Error::invalid(format!("{name} must be positive")));
        }
        if !(self.classifier_scale > 0.0 && self.classifier_scale.is_finite()) {
            return Err(Error::invalid("classifier scale must be > 0"));
        }
        Ok(())
    }
}

/// Logits `s * <z/|z|, w_c/|w_c|>` for one weight row per class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CosineClassifier {
    /// `C x d_feat`
    pub weight: Array2<f64>,
    pub scale: f64,
}

/// Parameter groups, used to restrict optimizer updates to one branch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Part {
    Encoder,
    Projector,
    Classifier,
}

/// Shared encoder, contrastive projector and cosine classifier.
///
/// The same struct doubles as a gradient accumulator (see [`Model::zeros_like`]).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub encoder: Mlp,
    pub projector: Mlp,
    pub classifier: CosineClassifier,
}

pub struct EncoderPass {
    pub z: Array2<f64>,
    cache: MlpCache,
}

pub struct ProjectorPass {
    /// Unit-norm rows.
    pub unit: Array2<f64>,
    norms: Array1<f64>,
    cache: MlpCache,
    /// Rows whose pre-normalisation vector was zero (replaced by `e_0`).
    pub degenerate: Vec<usize>,
}

pub struct ClassifierPass {
    pub logits: Array2<f64>,
    unit_z: Array2<f64>,
    z_norms: Array1<f64>,
    unit_w: Array2<f64>,
    w_norms: Array1<f64>,
}

impl Model {
    pub fn new(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = rng_for(seed, STREAM_INIT, 0);
        let encoder = Mlp::random(&[config.d_in, config.d_hidden, config.d_feat], &mut rng)?;
        let projector = Mlp::random(
            &[config.d_feat, config.d_proj_hidden, config.d_proj],
            &mut rng,
        )?;
        let weight = Array2::from_shape_simple_fn((config.num_classes, config.d_feat), || {
            rng.sample::<f64, _>(StandardNormal)
        });
        Ok(Model {
            encoder,
            projector,
            classifier: CosineClassifier {
                weight,
                scale: config.classifier_scale,
            },
        })
    }

    pub fn num_classes(&self) -> usize {
        self.classifier.weight.nrows()
    }

    pub fn d_feat(&self) -> usize {
        self.encoder.output_dim()
    }

    pub fn zeros_like(&self) -> Self {
        Model {
            encoder: self.encoder.zeros_like(),
            projector: self.projector.zeros_like(),
            classifier: CosineClassifier {
                weight: Array2::zeros(self.classifier.weight.raw_dim()),
                scale: self.classifier.scale,
            },
        }
    }

    /// Visits every trainable tensor as a flat slice, in a fixed order.
    pub fn visit(&self, mut f: impl FnMut(Part, &str, &[usize], &[f64])) {
        for (i, l) in self.encoder.layers.iter().enumerate() {
            f(
                Part::Encoder,
                &format!("encoder.{i}.weight"),
                l.weight.shape(),
                l.weight.as_slice().unwrap(),
            );
            f(
                Part::Encoder,
                &format!("encoder.{i}.bias"),
                l.bias.shape(),
                l.bias.as_slice().unwrap(),
            );
        }
        for (i, l) in self.projector.layers.iter().enumerate() {
            f(
                Part::Projector,
                &format!("projector.{i}.weight"),
                l.weight.shape(),
                l.weight.as_slice().unwrap(),
            );
            f(
                Part::Projector,
                &format!("projector.{i}.bias"),
                l.bias.shape(),
                l.bias.as_slice().unwrap(),
            );
        }
        let w = &self.classifier.weight;
        f(
            Part::Classifier,
            "classifier.weight",
            w.shape(),
            w.as_slice().unwrap(),
        );
    }

    pub fn visit_mut(&mut self, mut f: impl FnMut(Part, &str, &mut [f64])) {
        for (i, l) in self.encoder.layers.iter_mut().enumerate() {
            f(
                Part::Encoder,
                &format!("encoder.{i}.weight"),
                l.weight.as_slice_mut().unwrap(),
            );
            f(
                Part::Encoder,
                &format!("encoder.{i}.bias"),
                l.bias.as_slice_mut().unwrap(),
            );
        }
        for (i, l) in self.projector.layers.iter_mut().enumerate() {
            f(
                Part::Projector,
                &format!("projector.{i}.weight"),
                l.weight.as_slice_mut().unwrap(),
            );
            f(
                Part::Projector,
                &format!("projector.{i}.bias"),
                l.bias.as_slice_mut().unwrap(),
            );
        }
        f(
            Part::Classifier,
            "classifier.weight",
            self.classifier.weight.as_slice_mut().unwrap(),
        );
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        self.visit(|_, _, _, s| out.extend_from_slice(s));
        out
    }

    pub fn load_flat(&mut self, flat: &[f64]) {
        let mut offset = 0;
        self.visit_mut(|_, _, s| {
            s.copy_from_slice(&flat[offset..offset + s.len()]);
            offset += s.len();
        });
    }

    pub fn is_finite(&self) -> bool {
        let mut ok = true;
        self.visit(|_, _, _, s| ok &= s.iter().all(|v| v.is_finite()));
        ok
    }

    // ---- single-vector API ----

    pub fn encode(&self, x: ArrayView1<f64>) -> Result<Array1<f64>> {
        let pass = self.encode_batch(x.insert_axis(Axis(0)))?;
        Ok(pass.z.row(0).to_owned())
    }

    pub fn project(&self, z: ArrayView1<f64>) -> Result<Array1<f64>> {
        let pass = self.project_batch(z.insert_axis(Axis(0)))?;
        Ok(pass.unit.row(0).to_owned())
    }

    pub fn classify(&self, z: ArrayView1<f64>) -> Result<Array1<f64>> {
        let pass = self.classify_batch(z.insert_axis(Axis(0)))?;
        Ok(pass.logits.row(0).to_owned())
    }

    // ---- batched forward / backward ----

    pub fn encode_batch(&self, x: ArrayView2<f64>) -> Result<EncoderPass> {
        let (z, cache) = self.encoder.forward(x)?;
        Ok(EncoderPass { z, cache })
    }

    pub fn encoder_backward(&self, pass: &EncoderPass, grad_z: ArrayView2<f64>, grads: &mut Model) {
        self.encoder
            .backward(&pass.cache, grad_z, &mut grads.encoder);
    }

    pub fn project_batch(&self, z: ArrayView2<f64>) -> Result<ProjectorPass> {
        let (mut out, cache) = self.projector.forward(z)?;
        let mut norms = Array1::zeros(out.nrows());
        let mut degenerate = Vec::new();
        for (i, mut row) in out.rows_mut().into_iter().enumerate() {
            let n = row.dot(&row).sqrt();
            if n > 0.0 && n.is_finite() {
                row /= n;
                norms[i] = n;
            } else {
                row.fill(0.0);
                row[0] = 1.0;
                degenerate.push(i);
            }
        }
        if !degenerate.is_empty() {
            tracing::warn!(rows = ?degenerate, "zero projector output replaced by first basis vector");
        }
        Ok(ProjectorPass {
            unit: out,
            norms,
            cache,
            degenerate,
        })
    }

    /// Backpropagates through normalisation and the projector MLP; returns `dL/dz`.
    pub fn projector_backward(
        &self,
        pass: &ProjectorPass,
        grad_unit: ArrayView2<f64>,
        grads: &mut Model,
    ) -> Array2<f64> {
        let mut g_pre = Array2::zeros(grad_unit.raw_dim());
        for i in 0..grad_unit.nrows() {
            if pass.norms[i] == 0.0 {
                continue;
            }
            let y = pass.unit.row(i);
            let g = grad_unit.row(i);
            let proj = y.dot(&g);
            let mut out = g_pre.row_mut(i);
            out.assign(&((&g - &(&y * proj)) / pass.norms[i]));
        }
        self.projector
            .backward(&pass.cache, g_pre.view(), &mut grads.projector)
    }

    pub fn classify_batch(&self, z: ArrayView2<f64>) -> Result<ClassifierPass> {
        if z.ncols() != self.d_feat() {
            return Err(Error::DimensionMismatch {
                expected: self.d_feat(),
                actual: z.ncols(),
            });
        }
        let (unit_z, z_norms) = normalize_rows(z, "classifier input")?;
        let (unit_w, w_norms) = normalize_rows(self.classifier.weight.view(), "classifier weight")?;
        let logits = unit_z.dot(&unit_w.t()) * self.classifier.scale;
        Ok(ClassifierPass {
            logits,
            unit_z,
            z_norms,
            unit_w,
            w_norms,
        })
    }

    /// Accumulates classifier weight gradients and returns `dL/dz`.
    pub fn classifier_backward(
        &self,
        pass: &ClassifierPass,
        grad_logits: ArrayView2<f64>,
        grads: &mut Model,
    ) -> Array2<f64> {
        let s = self.classifier.scale;
        let g_uz = grad_logits.dot(&pass.unit_w) * s;
        let g_uw = grad_logits.t().dot(&pass.unit_z) * s;
        let g_z = unnormalize_grad(&pass.unit_z, &pass.z_norms, &g_uz);
        let g_w = unnormalize_grad(&pass.unit_w, &pass.w_norms, &g_uw);
        grads.classifier.weight += &g_w;
        g_z
    }
}

fn normalize_rows(x: ArrayView2<f64>, what: &str) -> Result<(Array2<f64>, Array1<f64>)> {
    let mut out = x.to_owned();
    let mut norms = Array1::zeros(x.nrows());
    for (i, mut row) in out.rows_mut().into_iter().enumerate() {
        let n = row.dot(&row).sqrt();
        if !n.is_finite() {
            return Err(Error::NonFinite(what.to_string()));
        }
        if n == 0.0 {
            return Err(Error::invalid(format!(
                "{what} row {i} is zero; direction undefined"
            )));
        }
        row /= n;
        norms[i] = n;
    }
    Ok((out, norms))
}

/// Gradient through `u = x/|x|` given `dL/du`.
fn unnormalize_grad(unit: &Array2<f64>, norms: &Array1<f64>, g_unit: &Array2<f64>) -> Array2<f64> {
    let mut out = g_unit.clone();
    for i in 0..out.nrows() {
        let u = unit.row(i);
        let proj = u.dot(&g_unit.row(i));
        let mut row = out.row_mut(i);
        row.scaled_add(-proj, &u);
        row /= norms[i];
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::linear::Linear;
    use ndarray::array;

    fn small() -> Model {
        let cfg = ModelConfig {
            d_in: 4,
            d_hidden: 5,
            d_feat: 3,
            d_proj_hidden: 4,
            d_proj: 3,
            num_classes: 3,
            classifier_scale: 10.0,
        };
        Model::new(&cfg, 7).unwrap()
    }

    #[test]
    fn zero_network_encodes_to_zero() {
        let mut m = small();
        m.encoder = m.encoder.zeros_like();
        let z = m.encode(array![1.0, -2.0, 3.0, 0.5].view()).unwrap();
        assert!(z.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_single_layer_encoder() {
        let mut m = small();
        m.encoder = Mlp::new(vec![Linear::identity(4)]).unwrap();
        let x = array![1.0, -2.0, 3.0, 0.5];
        assert_eq!(m.encode(x.view()).unwrap(), x);
    }

    #[test]
    fn encode_rejects_wrong_dimension() {
        assert!(matches!(
            small().encode(array![1.0, 2.0].view()),
            Err(Error::DimensionMismatch {
                expected: 4,
                actual: 2
            })
        ));
    }

    #[test]
    fn projection_is_unit_norm_and_scale_invariant() {
        let mut m = small();
        // single linear projector: positive scaling of the input scales the pre-activation
        m.projector = Mlp::new(vec![Linear {
            weight: array![[1.0, 0.5, 0.0], [0.0, 2.0, -1.0], [0.3, 0.0, 1.0]],
            bias: array![0.0, 0.0, 0.0],
        }])
        .unwrap();
        let z = array![0.3, -1.2, 0.8];
        let p = m.project(z.view()).unwrap();
        assert!((p.dot(&p).sqrt() - 1.0).abs() < 1e-12);
        let p2 = m.project((&z * 17.5).view()).unwrap();
        for (a, b) in p.iter().zip(&p2) {
            assert!((a - b).abs() < 1e-12);
        }
        let q = small().project(z.view()).unwrap();
        assert!((q.dot(&q).sqrt() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn zero_projection_falls_back_to_first_basis_vector() {
        let mut m = small();
        m.projector = m.projector.zeros_like();
        let pass = m.project_batch(array![[1.0, 2.0, 3.0]].view()).unwrap();
        assert_eq!(pass.unit.row(0).to_vec(), vec![1.0, 0.0, 0.0]);
        assert_eq!(pass.degenerate, vec![0]);
    }

    #[test]
    fn cosine_logits() {
        let mut m = small();
        m.classifier.weight = array![[2.0, 0.0, 0.0], [0.0, 3.0, 0.0], [1.0, 1.0, 0.0]];
        let logits = m.classify(array![5.0, 0.0, 0.0].view()).unwrap();
        assert!((logits[0] - 10.0).abs() < 1e-12);
        assert!(logits[1].abs() < 1e-12);
        let scaled = m.classify(array![12.5, 0.0, 0.0].view()).unwrap();
        assert_eq!(logits, scaled);
        assert!(m.classify(array![0.0, 0.0, 0.0].view()).is_err());
    }

    #[test]
    fn classify_scale_invariance_on_random_inputs() {
        let m = small();
        let z = array![0.37, -1.1, 2.4];
        let a = m.classify(z.view()).unwrap();
        for lambda in [1e-3, 0.5, 3.0, 1e4] {
            let b = m.classify((&z * lambda).view()).unwrap();
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).abs() < 1e-12);
                assert!(x.abs() <= 10.0 + 1e-12);
            }
        }
    }

    #[test]
    fn forward_is_deterministic() {
        let m = small();
        let x = array![[0.1, 0.2, -0.3, 0.4], [1.0, -1.0, 0.5, 0.0]];
        let a = m.encode_batch(x.view()).unwrap().z;
        let b = m.encode_batch(x.view()).unwrap().z;
        assert_eq!(a, b);
        assert_eq!(
            Model::new(&ModelConfig::new(4, 3), 1).unwrap(),
            Model::new(&ModelConfig::new(4, 3), 1).unwrap()
        );
    }

    #[test]
    fn flatten_round_trip() {
        let m = small();
        let mut other = m.zeros_like();
        other.load_flat(&m.flatten());
        assert_eq!(other.flatten(), m.flatten());
    }
}
