//! A `[5, H, 1]` multilayer perceptron that maps per-context similarity
//! features to the probability that a candidate belongs to the seed class.

use std::io::{Read, Write};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::contexts::ContextType;
use crate::error::{Error, Result};

/// One feature per context type.
pub const INPUT_WIDTH: usize = ContextType::ALL.len();

pub type Features = [f64; INPUT_WIDTH];

/// Parameters are stored row-major: `w1` is `H x 5`, `w2` is `1 x H`.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    pub hidden: usize,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
}

/// Gradient of the summed loss, laid out like [`MlpModel`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
}

impl Gradient {
    fn zeros(hidden: usize) -> Self {
        Gradient {
            w1: vec![0.0; hidden * INPUT_WIDTH],
            b1: vec![0.0; hidden],
            w2: vec![0.0; hidden],
            b2: 0.0,
        }
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.w1.len() + 2 * self.b1.len() + 1);
        out.extend(&self.w1);
        out.extend(&self.b1);
        out.extend(&self.w2);
        out.push(self.b2);
        out
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Binary cross-entropy of `σ(z)` against `y`, computed from the logit.
fn bce_from_logit(z: f64, y: f64) -> f64 {
    // −[y log σ(z) + (1−y) log(1−σ(z))] = softplus(z) − y·z
    let softplus = if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    };
    softplus - y * z
}

impl MlpModel {
    pub fn zeros(hidden: usize) -> Self {
        MlpModel {
            hidden,
            w1: vec![0.0; hidden * INPUT_WIDTH],
            b1: vec![0.0; hidden],
            w2: vec![0.0; hidden],
            b2: 0.0,
        }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn glorot(hidden: usize, rng: &mut impl Rng) -> Self {
        let mut m = Self::zeros(hidden);
        let r1 = (6.0 / (INPUT_WIDTH + hidden) as f64).sqrt();
        for w in &mut m.w1 {
            *w = rng.gen_range(-r1..=r1);
        }
        let r2 = (6.0 / (hidden + 1) as f64).sqrt();
        for w in &mut m.w2 {
            *w = rng.gen_range(-r2..=r2);
        }
        m
    }

    pub fn parameter_count(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + 1
    }

    fn parameter_mut(&mut self, mut i: usize) -> &mut f64 {
        for v in [&mut self.w1, &mut self.b1, &mut self.w2] {
            if i < v.len() {
                return &mut v[i];
            }
            i -= v.len();
        }
        assert_eq!(i, 0, "parameter index out of range");
        &mut self.b2
    }

    fn hidden_pre(&self, x: &Features) -> Vec<f64> {
        (0..self.hidden)
            .map(|j| {
                let row = &self.w1[j * INPUT_WIDTH..(j + 1) * INPUT_WIDTH];
                self.b1[j] + row.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>()
            })
            .collect()
    }

    fn logit(&self, x: &Features) -> f64 {
        let a = self.hidden_pre(x);
        self.b2 + self.w2.iter().zip(&a).map(|(w, a)| w * a.max(0.0)).sum::<f64>()
    }

    /// `σ(W₂·relu(W₁·x + b₁) + b₂)`, kept strictly inside (0, 1).
    pub fn forward(&self, x: &Features) -> Result<f64> {
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite feature in {x:?}")));
        }
        let p = sigmoid(self.logit(x));
        Ok(p.clamp(f64::EPSILON, 1.0 - f64::EPSILON))
    }

    /// Summed cross-entropy over `batch`.
    pub fn loss(&self, batch: &[(Features, f64)]) -> f64 {
        batch.iter().map(|(x, y)| bce_from_logit(self.logit(x), *y)).sum()
    }

    fn mean_loss(&self, batch: &[(Features, f64)]) -> f64 {
        if batch.is_empty() {
            0.0
        } else {
            self.loss(batch) / batch.len() as f64
        }
    }

    /// Analytic gradient of [`MlpModel::loss`].
    pub fn gradient(&self, batch: &[(Features, f64)]) -> Gradient {
        let mut g = Gradient::zeros(self.hidden);
        for (x, y) in batch {
            self.accumulate(x, *y, &mut g);
        }
        g
    }

    fn accumulate(&self, x: &Features, y: f64, g: &mut Gradient) {
        let a = self.hidden_pre(x);
        let z = self.b2 + self.w2.iter().zip(&a).map(|(w, a)| w * a.max(0.0)).sum::<f64>();
        let dz = sigmoid(z) - y;
        g.b2 += dz;
        for j in 0..self.hidden {
            g.w2[j] += dz * a[j].max(0.0);
            if a[j] > 0.0 {
                let da = dz * self.w2[j];
                g.b1[j] += da;
                for (i, xi) in x.iter().enumerate() {
                    g.w1[j * INPUT_WIDTH + i] += da * xi;
                }
            }
        }
    }

    fn step(&mut self, x: &Features, y: f64, lr: f64) {
        let mut g = Gradient::zeros(self.hidden);
        self.accumulate(x, y, &mut g);
        for (w, d) in self.w1.iter_mut().zip(&g.w1) {
            *w -= lr * d;
        }
        for (w, d) in self.b1.iter_mut().zip(&g.b1) {
            *w -= lr * d;
        }
        for (w, d) in self.w2.iter_mut().zip(&g.w2) {
            *w -= lr * d;
        }
        self.b2 -= lr * g.b2;
    }

    fn check(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Format { line: 0, message: m });
        if self.hidden == 0 {
            return bad("hidden layer is empty".into());
        }
        if self.w1.len() != self.hidden * INPUT_WIDTH
            || self.b1.len() != self.hidden
            || self.w2.len() != self.hidden
        {
            return bad(format!(
                "parameter shapes do not match layer sizes [{INPUT_WIDTH}, {}, 1]",
                self.hidden
            ));
        }
        let all = self.w1.iter().chain(&self.b1).chain(&self.w2).chain([&self.b2]);
        if all.into_iter().any(|v| !v.is_finite()) {
            return bad("non-finite parameter".into());
        }
        Ok(())
    }

    pub fn save<W: Write>(&self, w: W) -> Result<()> {
        let file = ModelFile {
            layer_sizes: vec![INPUT_WIDTH, self.hidden, 1],
            weights: vec![self.w1.clone(), self.w2.clone()],
            biases: vec![self.b1.clone(), vec![self.b2]],
        };
        serde_json::to_writer_pretty(w, &file)?;
        Ok(())
    }

    pub fn load<R: Read>(r: R) -> Result<Self> {
        let file: ModelFile = serde_json::from_reader(r).map_err(|e| Error::Format {
            line: e.line(),
            message: e.to_string(),
        })?;
        let shape_err = |m: &str| Error::Format {
            line: 0,
            message: m.to_string(),
        };
        let &[input, hidden, output] = file.layer_sizes.as_slice() else {
            return Err(shape_err("layer_sizes must have three entries"));
        };
        if input != INPUT_WIDTH || output != 1 {
            return Err(shape_err("layer_sizes must be [5, H, 1]"));
        }
        let (Ok([w1, w2]), Ok([b1, b2])) = (
            <[Vec<f64>; 2]>::try_from(file.weights),
            <[Vec<f64>; 2]>::try_from(file.biases),
        ) else {
            return Err(shape_err("expected two weight matrices and two bias vectors"));
        };
        let &[b2] = b2.as_slice() else {
            return Err(shape_err("output bias must have one entry"));
        };
        let model = MlpModel {
            hidden,
            w1,
            b1,
            w2,
            b2,
        };
        model.check()?;
        Ok(model)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    layer_sizes: Vec<usize>,
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
}

/// Largest relative error between the analytic gradient and central
/// differences over every parameter.
pub fn grad_check(model: &MlpModel, batch: &[(Features, f64)]) -> f64 {
    const H: f64 = 1e-5;
    let analytic = model.gradient(batch).flatten();
    let mut probe = model.clone();
    let mut worst: f64 = 0.0;
    for (i, a) in analytic.iter().enumerate() {
        let orig = *probe.parameter_mut(i);
        *probe.parameter_mut(i) = orig + H;
        let up = probe.loss(batch);
        *probe.parameter_mut(i) = orig - H;
        let down = probe.loss(batch);
        *probe.parameter_mut(i) = orig;
        let numeric = (up - down) / (2.0 * H);
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
        worst = worst.max(rel);
    }
    worst
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub features: Features,
    pub label: f64,
    pub split: Split,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainSet {
    pub rows: Vec<Example>,
}

#[derive(Serialize, Deserialize)]
struct CsvRow {
    f1: f64,
    f2: f64,
    f3: f64,
    f4: f64,
    f5: f64,
    label: u8,
    split: Split,
}

impl TrainSet {
    pub fn split(&self, split: Split) -> Vec<(Features, f64)> {
        self.rows
            .iter()
            .filter(|r| r.split == split)
            .map(|r| (r.features, r.label))
            .collect()
    }

    /// Reads `f1,f2,f3,f4,f5,label,split` with a header row.
    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rows = Vec::new();
        for (i, rec) in csv::Reader::from_reader(r).deserialize::<CsvRow>().enumerate() {
            let line = i + 2;
            let rec = rec.map_err(|e| Error::Format {
                line,
                message: e.to_string(),
            })?;
            let features = [rec.f1, rec.f2, rec.f3, rec.f4, rec.f5];
            if features.iter().any(|f| !(-1.0..=1.0).contains(f)) {
                return Err(Error::Format {
                    line,
                    message: "features must lie in [-1, 1]".into(),
                });
            }
            if rec.label > 1 {
                return Err(Error::Format {
                    line,
                    message: format!("label must be 0 or 1, found {}", rec.label),
                });
            }
            rows.push(Example {
                features,
                label: rec.label as f64,
                split: rec.split,
            });
        }
        Ok(TrainSet { rows })
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for r in &self.rows {
            let [f1, f2, f3, f4, f5] = r.features;
            out.serialize(CsvRow {
                f1,
                f2,
                f3,
                f4,
                f5,
                label: r.label as u8,
                split: r.split,
            })?;
        }
        out.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MlpConfig {
    pub hidden: usize,
    pub lr: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Epochs without dev-loss improvement before stopping.
    pub patience: usize,
}

impl Default for MlpConfig {
    fn default() -> Self {
        MlpConfig {
            hidden: 8,
            lr: 0.1,
            epochs: 200,
            seed: 1,
            patience: 20,
        }
    }
}

/// Per-epoch mean losses. `train_loss[0]` is the loss before training.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainHistory {
    pub train_loss: Vec<f64>,
    pub dev_loss: Vec<f64>,
    pub best_epoch: usize,
    pub final_lr: f64,
}

pub fn train(data: &TrainSet, config: &MlpConfig) -> Result<MlpModel> {
    train_with_history(data, config).map(|(m, _)| m)
}

/// Per-sample SGD on cross-entropy. An epoch that raises the train loss is
/// rolled back and the learning rate halved, so the train loss never
/// increases. Returns the model with the lowest dev loss (train loss when
/// there is no dev split).
pub fn train_with_history(data: &TrainSet, config: &MlpConfig) -> Result<(MlpModel, TrainHistory)> {
    if config.hidden == 0 || !(config.lr > 0.0) {
        return Err(Error::InvalidInput("mlp config: hidden and lr must be positive".into()));
    }
    let train = data.split(Split::Train);
    let dev = data.split(Split::Dev);
    let positives = train.iter().filter(|(_, y)| *y == 1.0).count();
    if positives == 0 || positives == train.len() {
        return Err(Error::Training(
            "train split needs both positive and negative rows".into(),
        ));
    }
    let dev_or_train = if dev.is_empty() { &train } else { &dev };

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = MlpModel::glorot(config.hidden, &mut rng);
    let mut lr = config.lr;
    let mut train_loss = model.mean_loss(&train);
    let mut best = (model.mean_loss(dev_or_train), model.clone());
    let mut history = TrainHistory {
        train_loss: vec![train_loss],
        dev_loss: vec![best.0],
        best_epoch: 0,
        final_lr: lr,
    };
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut stale = 0;
    for epoch in 1..=config.epochs {
        let snapshot = model.clone();
        order.shuffle(&mut rng);
        for &i in &order {
            model.step(&train[i].0, train[i].1, lr);
        }
        let loss = model.mean_loss(&train);
        if !(loss <= train_loss) {
            model = snapshot;
            lr /= 2.0;
        } else {
            train_loss = loss;
        }
        let dev_loss = model.mean_loss(dev_or_train);
        history.train_loss.push(train_loss);
        history.dev_loss.push(dev_loss);
        if dev_loss < best.0 {
            best = (dev_loss, model.clone());
            history.best_epoch = epoch;
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.patience {
                break;
            }
        }
    }
    history.final_lr = lr;
    Ok((best.1, history))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_model(seed: u64, hidden: usize) -> MlpModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = MlpModel::glorot(hidden, &mut rng);
        for b in &mut m.b1 {
            *b = rng.gen_range(-0.5..0.5);
        }
        m.b2 = rng.gen_range(-0.5..0.5);
        m
    }

    fn random_features(rng: &mut impl Rng) -> Features {
        std::array::from_fn(|_| rng.gen_range(-1.0..=1.0))
    }

    #[test]
    fn zero_model_outputs_one_half() {
        let m = MlpModel::zeros(8);
        assert_eq!(m.forward(&[0.3, -1.0, 0.0, 1.0, 0.2]).unwrap(), 0.5);
        assert!(m.forward(&[f64::NAN, 0.0, 0.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn outputs_stay_inside_unit_interval() {
        let mut m = MlpModel::zeros(2);
        m.b2 = 1e4;
        let p = m.forward(&[0.0; 5]).unwrap();
        assert!(p > 0.0 && p < 1.0);
        m.b2 = -1e4;
        let p = m.forward(&[0.0; 5]).unwrap();
        assert!(p > 0.0 && p < 1.0);
    }

    #[test]
    fn nonnegative_weights_are_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for seed in 0..20 {
            let mut m = random_model(seed, 8);
            for w in m.w1.iter_mut().chain(m.w2.iter_mut()) {
                *w = w.abs();
            }
            let x = random_features(&mut rng);
            let base = m.forward(&x).unwrap();
            for i in 0..INPUT_WIDTH {
                let mut up = x;
                up[i] += 0.25;
                assert!(m.forward(&up).unwrap() >= base);
            }
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for seed in 0..5 {
            let m = random_model(seed, 8);
            let batch: Vec<(Features, f64)> = (0..5)
                .map(|i| (random_features(&mut rng), (i % 2) as f64))
                .collect();
            let err = grad_check(&m, &batch);
            assert!(err <= 1e-4, "seed {seed}: {err}");
        }
    }

    #[test]
    fn duplicated_rows_double_the_gradient() {
        let m = random_model(5, 8);
        let row = ([0.1, -0.4, 0.9, 0.0, 0.3], 1.0);
        let one = m.gradient(&[row]).flatten();
        let two = m.gradient(&[row, row]).flatten();
        for (a, b) in one.iter().zip(&two) {
            assert_eq!(2.0 * a, *b);
        }
        let zero = MlpModel::zeros(8).gradient(&[row, ([-0.1, 0.4, -0.9, 0.0, -0.3], 0.0)]);
        assert!(zero.flatten().iter().all(|g| g.is_finite()));
    }

    fn separable(n: usize, seed: u64) -> TrainSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows = (0..n)
            .map(|i| {
                let mut features = random_features(&mut rng);
                // Keep a margin around the boundary.
                let f1: f64 = rng.gen_range(0.0..0.4);
                features[0] = if i % 2 == 0 { 0.6 + f1 } else { -1.0 + 3.5 * f1 };
                Example {
                    features,
                    label: (features[0] > 0.5) as u8 as f64,
                    split: if i % 5 == 4 { Split::Dev } else { Split::Train },
                }
            })
            .collect();
        TrainSet { rows }
    }

    #[test]
    fn learns_a_separable_set() {
        let data = separable(50, 2);
        let (m, history) = train_with_history(&data, &MlpConfig::default()).unwrap();
        for r in data.rows.iter().filter(|r| r.split == Split::Train) {
            let p = m.forward(&r.features).unwrap();
            assert_eq!(p > 0.5, r.label == 1.0, "{:?} -> {p}", r.features);
        }
        for w in history.train_loss.windows(2) {
            assert!(w[1] <= w[0]);
        }
    }

    #[test]
    fn zero_epochs_returns_initial_model() {
        let data = separable(20, 4);
        let cfg = MlpConfig {
            epochs: 0,
            ..MlpConfig::default()
        };
        let m = train(&data, &cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        assert_eq!(m, MlpModel::glorot(cfg.hidden, &mut rng));
        assert_eq!(train(&data, &MlpConfig::default()).unwrap(), train(&data, &MlpConfig::default()).unwrap());
    }

    #[test]
    fn single_class_is_rejected() {
        let mut data = separable(20, 4);
        for r in &mut data.rows {
            r.label = 1.0;
        }
        assert!(matches!(train(&data, &MlpConfig::default()), Err(Error::Training(_))));
    }

    #[test]
    fn json_round_trip_and_shape_errors() {
        let m = random_model(8, 8);
        let mut buf = Vec::new();
        m.save(&mut buf).unwrap();
        let back = MlpModel::load(buf.as_slice()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let x = random_features(&mut rng);
            assert_eq!(m.forward(&x).unwrap().to_bits(), back.forward(&x).unwrap().to_bits());
        }
        let text = String::from_utf8(buf).unwrap();
        let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
        let mut wrong_h = v.clone();
        wrong_h["layer_sizes"][1] = 7.into();
        assert!(matches!(MlpModel::load(wrong_h.to_string().as_bytes()), Err(Error::Format { .. })));
        v.as_object_mut().unwrap().remove("biases");
        assert!(MlpModel::load(v.to_string().as_bytes()).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let data = separable(6, 1);
        let mut buf = Vec::new();
        data.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("f1,f2,f3,f4,f5,label,split\n"));
        assert_eq!(TrainSet::read_csv(buf.as_slice()).unwrap(), data);
        let bad = "f1,f2,f3,f4,f5,label,split\n0,0,0,0,0,2,train\n";
        assert!(matches!(TrainSet::read_csv(bad.as_bytes()), Err(Error::Format { line: 2, .. })));
    }
}
