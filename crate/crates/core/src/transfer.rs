//! Turning classifier outputs into contrastive supervision: logit
//! adjustment against the estimated distribution, class-wise sampling of
//! pseudo-labels, and pairwise positiveness scores.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimate::ClassDistribution;
use crate::losses::PositivenessMatrix;
use crate::util::{argmax, softmax};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingConfig {
    /// Exponent for classes with labels in the batch.
    pub alpha: f64,
    /// Exponent for all other classes.
    pub beta: f64,
    /// Logit-adjustment strength.
    pub k: f64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig {
            alpha: 0.8,
            beta: 0.5,
            k: 0.5,
        }
    }
}

impl SamplingConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::invalid(format!("{name} must be in [0, 1], got {v}")));
            }
        }
        if !(self.k >= 0.0 && self.k.is_finite()) {
            return Err(Error::invalid(format!("k must be >= 0, got {}", self.k)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SimilarityMetric {
    Dot,
    Cosine,
    L1,
    L2,
}

impl SimilarityMetric {
    pub const ALL: [SimilarityMetric; 4] = [
        SimilarityMetric::L1,
        SimilarityMetric::L2,
        SimilarityMetric::Cosine,
        SimilarityMetric::Dot,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            SimilarityMetric::Dot => "dot",
            SimilarityMetric::Cosine => "cosine",
            SimilarityMetric::L1 => "l1",
            SimilarityMetric::L2 => "l2",
        }
    }
}

/// Rectified pseudo-labels of the unlabeled part of a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoLabelBatch {
    pub ids: Vec<u64>,
    pub rectified: Vec<Vec<f64>>,
    pub pred_class: Vec<usize>,
    pub confidence: Vec<f64>,
    pub mask: Vec<bool>,
}

impl PseudoLabelBatch {
    /// Builds an unmasked batch from rectified probabilities.
    pub fn new(ids: Vec<u64>, rectified: Vec<Vec<f64>>) -> Result<Self> {
        if ids.len() != rectified.len() {
            return Err(Error::DimensionMismatch {
                expected: ids.len(),
                actual: rectified.len(),
            });
        }
        let pred_class: Vec<usize> = rectified.iter().map(|p| argmax(p)).collect();
        let confidence = rectified
            .iter()
            .zip(&pred_class)
            .map(|(p, &c)| p[c])
            .collect();
        let n = ids.len();
        Ok(PseudoLabelBatch {
            ids,
            rectified,
            pred_class,
            confidence,
            mask: vec![false; n],
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn selected(&self) -> impl Iterator<Item = usize> + '_ {
        self.mask
            .iter()
            .enumerate()
            .filter(|(_, &m)| m)
            .map(|(i, _)| i)
    }
}

/// `softmax(logits - k * log(pi_e))`.
pub fn debias(logits: &[f64], pi_e: &ClassDistribution, k: f64) -> Result<Vec<f64>> {
    if logits.len() != pi_e.len() {
        return Err(Error::DimensionMismatch {
            expected: pi_e.len(),
            actual: logits.len(),
        });
    }
    if logits.iter().any(|l| !l.is_finite()) {
        return Err(Error::NonFinite("logits".into()));
    }
    if pi_e.freq.iter().any(|&f| f <= 0.0) {
        return Err(Error::invalid(
            "estimated distribution must be strictly positive",
        ));
    }
    let adjusted: Vec<f64> = logits
        .iter()
        .zip(&pi_e.freq)
        .map(|(&l, &f)| l - k * f.ln())
        .collect();
    Ok(softmax(&adjusted))
}

/// Per-class rate `(pi_e[c] / min(pi_e))^-alpha` for classes labeled in the
/// batch and `^-beta` otherwise. Every rate lies in `(0, 1]`.
pub fn sampling_rates(
    pi_e: &ClassDistribution,
    batch_classes: &[usize],
    alpha: f64,
    beta: f64,
) -> Result<Vec<f64>> {
    SamplingConfig {
        alpha,
        beta,
        k: 0.0,
    }
    .validate()?;
    let min = pi_e.min();
    if min <= 0.0 {
        return Err(Error::invalid(
            "estimated distribution must be strictly positive",
        ));
    }
    let mut in_batch = vec![false; pi_e.len()];
    for &c in batch_classes {
        *in_batch
            .get_mut(c)
            .ok_or_else(|| Error::invalid(format!("class {c} out of range")))? = true;
    }
    Ok(pi_e
        .freq
        .iter()
        .zip(&in_batch)
        .map(|(&f, &labeled)| {
            let exponent = if labeled { alpha } else { beta };
            // min / f <= 1, so the rate stays in (0, 1] without round-off above 1
            (min / f).powf(exponent).min(1.0)
        })
        .collect())
}

/// Number of instances kept out of `m` at rate `sr`: `ceil(sr * m)`, with a
/// small allowance so products like `0.5 * 4` are not pushed up by round-off.
pub fn selection_count(sr: f64, m: usize) -> usize {
    let raw = sr * m as f64;
    ((raw - 1e-9).ceil().max(0.0) as usize).min(m)
}

/// Sets the mask: within each predicted class keep the `ceil(SR^c * m_c)`
/// most confident instances (ties: lower id).
pub fn sample_pseudolabels(mut batch: PseudoLabelBatch, rates: &[f64]) -> Result<PseudoLabelBatch> {
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); rates.len()];
    for (i, &c) in batch.pred_class.iter().enumerate() {
        members
            .get_mut(c)
            .ok_or_else(|| Error::invalid(format!("predicted class {c} has no sampling rate")))?
            .push(i);
    }
    batch.mask = vec![false; batch.len()];
    for (c, mut idx) in members.into_iter().enumerate() {
        if idx.is_empty() {
            continue;
        }
        let keep = selection_count(rates[c], idx.len());
        idx.sort_by(|&a, &b| {
            batch.confidence[b]
                .total_cmp(&batch.confidence[a])
                .then(batch.ids[a].cmp(&batch.ids[b]))
        });
        for &i in &idx[..keep] {
            batch.mask[i] = true;
        }
    }
    Ok(batch)
}

fn check_simplex(p: &[f64]) -> Result<()> {
    let total: f64 = p.iter().sum();
    if p.iter().any(|&v| v < -1e-6 || !v.is_finite()) || (total - 1.0).abs() > 1e-6 {
        return Err(Error::invalid("probability vector is off the simplex"));
    }
    Ok(())
}

/// Similarity of two class-probability vectors, clamped to `[0, 1]`.
pub fn positiveness(p: &[f64], q: &[f64], metric: SimilarityMetric) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::DimensionMismatch {
            expected: p.len(),
            actual: q.len(),
        });
    }
    check_simplex(p)?;
    check_simplex(q)?;
    let dot: f64 = p.iter().zip(q).map(|(a, b)| a * b).sum();
    let value = match metric {
        SimilarityMetric::Dot => dot,
        SimilarityMetric::Cosine => {
            let np = p.iter().map(|a| a * a).sum::<f64>().sqrt();
            let nq = q.iter().map(|a| a * a).sum::<f64>().sqrt();
            dot / (np * nq)
        }
        SimilarityMetric::L1 => {
            1.0 - 0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
        }
        SimilarityMetric::L2 => {
            1.0 - p
                .iter()
                .zip(q)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt()
                / std::f64::consts::SQRT_2
        }
    };
    Ok(value.clamp(0.0, 1.0))
}

/// Pairwise positiveness over a soft batch (labeled samples enter as one-hot
/// vectors). The diagonal is left at zero.
pub fn build_positiveness_matrix(
    probs: &[Vec<f64>],
    metric: SimilarityMetric,
) -> Result<PositivenessMatrix> {
    let n = probs.len();
    let mut w = Array2::zeros((n, n));
    for i in 0..n {
        for j in i + 1..n {
            let v = positiveness(&probs[i], &probs[j], metric)?;
            w[[i, j]] = v;
            w[[j, i]] = v;
        }
    }
    Ok(PositivenessMatrix { w })
}

/// Hard variant: 1 when the two arg-max classes agree, else 0.
pub fn build_hard_matrix(probs: &[Vec<f64>]) -> PositivenessMatrix {
    let n = probs.len();
    let classes: Vec<usize> = probs.iter().map(|p| argmax(p)).collect();
    let w = Array2::from_shape_fn((n, n), |(i, j)| {
        if i != j && classes[i] == classes[j] {
            1.0
        } else {
            0.0
        }
    });
    PositivenessMatrix { w }
}

pub fn one_hot(class: usize, num_classes: usize) -> Vec<f64> {
    let mut v = vec![0.0; num_classes];
    v[class] = 1.0;
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dist(v: &[f64]) -> ClassDistribution {
        ClassDistribution::new(v.to_vec()).unwrap()
    }

    #[test]
    fn debias_examples() {
        let p = debias(&[0.0, 0.0], &dist(&[0.8, 0.2]), 1.0).unwrap();
        assert!((p[0] - 0.2).abs() < 1e-15 && (p[1] - 0.8).abs() < 1e-15);
        let pi = dist(&[0.5, 0.3, 0.2]);
        let logits: Vec<f64> = pi.freq.iter().map(|f| f.ln()).collect();
        for v in debias(&logits, &pi, 1.0).unwrap() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        let plain = softmax(&[1.0, -2.0, 0.5]);
        let uni = debias(&[1.0, -2.0, 0.5], &ClassDistribution::uniform(3), 0.7).unwrap();
        for (a, b) in plain.iter().zip(&uni) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(debias(&[f64::NAN, 0.0], &dist(&[0.5, 0.5]), 1.0).is_err());
    }

    #[test]
    fn sampling_rate_examples() {
        let pi = dist(&[0.8, 0.2]);
        let sr = sampling_rates(&pi, &[0], 0.5, 0.3).unwrap();
        assert!((sr[0] - 0.5).abs() < 1e-15);
        assert_eq!(sr[1], 1.0);
        let zero = sampling_rates(&dist(&[0.6, 0.3, 0.1]), &[1], 0.0, 0.0).unwrap();
        assert_eq!(zero, vec![1.0; 3]);
        assert!(sampling_rates(&pi, &[], 1.5, 0.0).is_err());
        assert!(sampling_rates(&pi, &[], 0.5, -0.1).is_err());
    }

    #[test]
    fn sampling_keeps_the_most_confident() {
        let probs = vec![
            vec![0.6, 0.4],
            vec![0.9, 0.1],
            vec![0.7, 0.3],
            vec![0.55, 0.45],
            vec![0.2, 0.8],
        ];
        let batch = PseudoLabelBatch::new(vec![10, 11, 12, 13, 14], probs).unwrap();
        let out = sample_pseudolabels(batch.clone(), &[0.5, 0.5]).unwrap();
        assert_eq!(out.mask, vec![false, true, true, false, true]);
        let all = sample_pseudolabels(batch, &[1.0, 1.0]).unwrap();
        assert!(all.mask.iter().all(|&m| m));
        let empty = PseudoLabelBatch::new(vec![], vec![]).unwrap();
        assert!(sample_pseudolabels(empty, &[1.0]).unwrap().mask.is_empty());
    }

    #[test]
    fn confidence_ties_prefer_lower_id() {
        let batch =
            PseudoLabelBatch::new(vec![5, 3], vec![vec![0.7, 0.3], vec![0.7, 0.3]]).unwrap();
        let out = sample_pseudolabels(batch, &[0.5, 1.0]).unwrap();
        assert_eq!(out.mask, vec![false, true]);
    }

    #[test]
    fn positiveness_examples() {
        let a = one_hot(1, 3);
        let b = one_hot(2, 3);
        assert_eq!(positiveness(&a, &a, SimilarityMetric::Dot).unwrap(), 1.0);
        assert_eq!(positiveness(&a, &b, SimilarityMetric::Dot).unwrap(), 0.0);
        let u = vec![0.25; 4];
        assert!((positiveness(&u, &u, SimilarityMetric::Dot).unwrap() - 0.25).abs() < 1e-15);
        for m in SimilarityMetric::ALL {
            assert!((positiveness(&a, &a, m).unwrap() - 1.0).abs() < 1e-12);
            assert!(positiveness(&a, &b, m).unwrap().abs() < 1e-12);
        }
        assert!(positiveness(&[0.5, 0.6], &[0.5, 0.5], SimilarityMetric::Dot).is_err());
    }

    #[test]
    fn matrices() {
        let same = vec![one_hot(0, 3); 3];
        let w = build_positiveness_matrix(&same, SimilarityMetric::Dot)
            .unwrap()
            .w;
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(w[[i, j]], if i == j { 0.0 } else { 1.0 });
            }
        }
        let two = vec![one_hot(0, 2), one_hot(1, 2)];
        assert_eq!(
            build_positiveness_matrix(&two, SimilarityMetric::Dot)
                .unwrap()
                .w[[0, 1]],
            0.0
        );
    }

    #[test]
    fn dot_positiveness_is_coincidence_probability() {
        // Two independent draws from p and q land on the same class with probability <p, q>.
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let draw = |p: &[f64], rng: &mut ChaCha8Rng| {
            let mut u: f64 = rng.random();
            for (i, &v) in p.iter().enumerate() {
                if u < v {
                    return i;
                }
                u -= v;
            }
            p.len() - 1
        };
        let mut outside_3sigma = 0;
        for _ in 0..10 {
            let raw_p: Vec<f64> = (0..4).map(|_| rng.random::<f64>()).collect();
            let raw_q: Vec<f64> = (0..4).map(|_| rng.random::<f64>()).collect();
            let p: Vec<f64> = raw_p
                .iter()
                .map(|v| v / raw_p.iter().sum::<f64>())
                .collect();
            let q: Vec<f64> = raw_q
                .iter()
                .map(|v| v / raw_q.iter().sum::<f64>())
                .collect();
            let w = positiveness(&p, &q, SimilarityMetric::Dot).unwrap();
            let trials = 20_000;
            let hits = (0..trials)
                .filter(|_| draw(&p, &mut rng) == draw(&q, &mut rng))
                .count();
            let freq = hits as f64 / trials as f64;
            let sigma = (w * (1.0 - w) / trials as f64).sqrt();
            let z = (freq - w).abs() / sigma;
            assert!(z < 4.5, "{freq} vs {w}");
            if z >= 3.0 {
                outside_3sigma += 1;
            }
        }
        // Ten pairs at 3 sigma each: one excursion is expected now and then.
        assert!(outside_3sigma <= 1);
    }

    fn simplex_vec(n: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.001f64..1.0, n).prop_map(|v| {
            let s: f64 = v.iter().sum();
            v.into_iter().map(|x| x / s).collect()
        })
    }

    proptest! {
        #[test]
        fn rates_in_unit_interval_and_monotone(
            pi in simplex_vec(6),
            alpha in 0.0f64..=1.0,
            beta in 0.0f64..=1.0,
        ) {
            let d = ClassDistribution { freq: pi };
            let sr = sampling_rates(&d, &[0, 2], alpha, beta).unwrap();
            prop_assert!(sr.iter().all(|&r| r > 0.0 && r <= 1.0));
            for group in [[0usize, 2].as_slice(), [1, 3, 4, 5].as_slice()] {
                for &a in group {
                    for &b in group {
                        if d.freq[a] <= d.freq[b] {
                            prop_assert!(sr[a] >= sr[b]);
                        }
                    }
                }
            }
        }

        #[test]
        fn self_similarity_bounds(p in simplex_vec(5)) {
            let s = positiveness(&p, &p, SimilarityMetric::Dot).unwrap();
            let norm2: f64 = p.iter().map(|v| v * v).sum();
            prop_assert!((s - norm2).abs() < 1e-12);
            prop_assert!((0.2 - 1e-12..=1.0).contains(&s));
        }

        #[test]
        fn matrix_symmetric(probs in prop::collection::vec(simplex_vec(4), 2..7)) {
            for m in SimilarityMetric::ALL {
                let w = build_positiveness_matrix(&probs, m).unwrap().w;
                for i in 0..probs.len() {
                    for j in 0..probs.len() {
                        prop_assert_eq!(w[[i, j]], w[[j, i]]);
                        if i != j {
                            prop_assert_eq!(w[[i, j]], positiveness(&probs[j], &probs[i], m).unwrap());
                        }
                    }
                }
            }
        }

        #[test]
        fn sampling_bounded_and_dominant(
            probs in prop::collection::vec(simplex_vec(3), 0..20),
            rates in prop::collection::vec(0.01f64..=1.0, 3),
        ) {
            let ids = (0..probs.len() as u64).collect();
            let out = sample_pseudolabels(PseudoLabelBatch::new(ids, probs).unwrap(), &rates).unwrap();
            for (c, &rate) in rates.iter().enumerate() {
                let members: Vec<usize> = (0..out.len()).filter(|&i| out.pred_class[i] == c).collect();
                let chosen: Vec<usize> = members.iter().copied().filter(|&i| out.mask[i]).collect();
                prop_assert_eq!(chosen.len(), selection_count(rate, members.len()));
                if !members.is_empty() {
                    prop_assert!(!chosen.is_empty());
                }
                for &s in &chosen {
                    for &u in members.iter().filter(|&&i| !out.mask[i]) {
                        prop_assert!(out.confidence[s] >= out.confidence[u]);
                    }
                }
            }
        }
    }
}
