use std::io::Write;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::mlp::{InputEncoding, Mlp, Normalizer};
use crate::dynamics::{fmt_f64, StateVec};
use crate::error::{contract, Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    /// Learning rate at the first epoch, decayed with a cosine schedule to
    /// `final_learning_rate`.
    pub learning_rate: f64,
    pub final_learning_rate: f64,
    pub momentum: f64,
    pub validation_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hidden: vec![64, 64],
            epochs: 60,
            batch_size: 64,
            learning_rate: 0.05,
            final_learning_rate: 5e-4,
            momentum: 0.9,
            validation_fraction: 0.1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(contract("epochs and batch size must be positive"));
        }
        if !(self.learning_rate > 0.0 && self.final_learning_rate > 0.0) {
            return Err(contract("learning rates must be positive"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(contract("momentum must be in [0, 1)"));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction <= 0.5) {
            return Err(contract("validation fraction must be in (0, 0.5]"));
        }
        if self.hidden.iter().any(|h| *h == 0) {
            return Err(contract("hidden layers must be non-empty"));
        }
        Ok(())
    }

    fn learning_rate_at(&self, epoch: usize) -> f64 {
        let frac = if self.epochs > 1 {
            epoch as f64 / (self.epochs - 1) as f64
        } else {
            0.0
        };
        let cos = 0.5 * (1.0 + (std::f64::consts::PI * frac).cos());
        self.final_learning_rate + (self.learning_rate - self.final_learning_rate) * cos
    }
}

/// Per-epoch losses in normalized output units.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub train_loss: Vec<f64>,
    pub validation_loss: Vec<f64>,
    pub best_epoch: usize,
    pub train_rows: usize,
    pub validation_rows: usize,
}

impl TrainReport {
    pub fn best_validation_loss(&self) -> f64 {
        self.validation_loss
            .get(self.best_epoch)
            .copied()
            .unwrap_or(f64::NAN)
    }

    /// `epoch,train_loss,validation_loss`
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["epoch", "train_loss", "validation_loss"])?;
        for (i, (t, v)) in self.train_loss.iter().zip(&self.validation_loss).enumerate() {
            w.write_record([i.to_string(), fmt_f64(*t), fmt_f64(*v)])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Fits a fresh network mapping `inputs` to `targets` (one row per sample)
/// by mini-batch SGD with momentum. The parameters with the lowest
/// validation loss are returned.
pub fn train_regressor(
    inputs: &[StateVec],
    targets: &[Vec<f64>],
    encoding: InputEncoding,
    cfg: &TrainConfig,
) -> Result<(Mlp, TrainReport)> {
    cfg.validate()?;
    if inputs.is_empty() || inputs.len() != targets.len() {
        return Err(contract("training needs one target per input and at least one row"));
    }
    let dout = targets[0].len();
    if dout == 0 || targets.iter().any(|t| t.len() != dout) {
        return Err(contract("targets must share a non-zero dimension"));
    }
    if targets.iter().flatten().any(|v| !v.is_finite()) || inputs.iter().any(|x| !x.iter().all(|v| v.is_finite())) {
        return Err(contract("training data must be finite"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut dims = vec![encoding.feature_dim()];
    dims.extend(&cfg.hidden);
    dims.push(dout);
    let mut net = Mlp::new(&dims, encoding, &mut rng)?;

    let mut order: Vec<usize> = (0..inputs.len()).collect();
    order.shuffle(&mut rng);
    let n_val = if inputs.len() >= 10 {
        ((inputs.len() as f64) * cfg.validation_fraction).round() as usize
    } else {
        0
    };
    let (val_idx, train_idx) = order.split_at(n_val);

    let x_all = net.features(inputs);
    let y_all = DMatrix::from_fn(dout, inputs.len(), |i, j| targets[j][i]);
    let pick = |m: &DMatrix<f64>, idx: &[usize]| m.select_columns(idx.iter());
    let train_x_raw = pick(&x_all, train_idx);
    let train_y_raw = pick(&y_all, train_idx);
    net.input_norm = Normalizer::fit(&train_x_raw);
    net.output_norm = Normalizer::fit(&train_y_raw);
    let mut x_all = x_all;
    let mut y_all = y_all;
    net.normalize_inputs(&mut x_all);
    net.normalize_outputs(&mut y_all);
    let (val_x, val_y) = if val_idx.is_empty() {
        (pick(&x_all, train_idx), pick(&y_all, train_idx))
    } else {
        (pick(&x_all, val_idx), pick(&y_all, val_idx))
    };

    let mut params = net.params();
    let mut velocity = vec![0.0; params.len()];
    let mut best = (f64::INFINITY, params.clone(), 0);
    let mut report = TrainReport {
        train_rows: train_idx.len(),
        validation_rows: val_idx.len(),
        ..Default::default()
    };
    let mut shuffled = train_idx.to_vec();
    for epoch in 0..cfg.epochs {
        let lr = cfg.learning_rate_at(epoch);
        shuffled.shuffle(&mut rng);
        let mut sum = 0.0;
        let mut count = 0usize;
        for batch in shuffled.chunks(cfg.batch_size) {
            let bx = pick(&x_all, batch);
            let by = pick(&y_all, batch);
            let (loss, grad) = net.loss_and_grad(bx, &by);
            if !loss.is_finite() {
                return Err(Error::TrainingDiverged { epoch, loss });
            }
            sum += loss * batch.len() as f64;
            count += batch.len();
            for ((p, v), g) in params.iter_mut().zip(velocity.iter_mut()).zip(&grad) {
                *v = cfg.momentum * *v - lr * g;
                *p += *v;
            }
            net.set_params(&params);
        }
        let train_loss = sum / count as f64;
        let val_loss = net.loss(val_x.clone(), &val_y);
        if !val_loss.is_finite() {
            return Err(Error::TrainingDiverged { epoch, loss: val_loss });
        }
        report.train_loss.push(train_loss);
        report.validation_loss.push(val_loss);
        if val_loss < best.0 {
            best = (val_loss, params.clone(), epoch);
        }
    }
    net.set_params(&best.1);
    report.best_epoch = best.2;
    Ok((net, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn fits_a_linear_map() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let k = [[0.5, -1.0, 0.25, 0.0], [0.0, 0.3, -0.7, 1.2]];
        let xs: Vec<StateVec> = (0..1000)
            .map(|_| StateVec::from_fn(|_, _| rng.random_range(-1.0..1.0)))
            .collect();
        let ys: Vec<Vec<f64>> = xs
            .iter()
            .map(|x| k.iter().map(|row| (0..4).map(|i| row[i] * x[i]).sum()).collect())
            .collect();
        let cfg = TrainConfig {
            hidden: vec![16],
            epochs: 200,
            batch_size: 16,
            learning_rate: 0.05,
            final_learning_rate: 1e-3,
            ..Default::default()
        };
        let (net, report) = train_regressor(&xs, &ys, InputEncoding::Raw, &cfg).unwrap();
        let mse: f64 = xs
            .iter()
            .zip(&ys)
            .map(|(x, y)| {
                let p = net.predict(x);
                (p[0] - y[0]).powi(2) + (p[1] - y[1]).powi(2)
            })
            .sum::<f64>()
            / (2.0 * xs.len() as f64);
        assert!(mse <= 1e-4, "mse {mse}");
        assert!(report.best_validation_loss() <= report.validation_loss[0]);
    }

    #[test]
    fn memorizes_a_single_point() {
        let x = vec![StateVec::new(0.3, -0.2, 1.0, 0.5)];
        let y = vec![vec![0.7, -0.4]];
        let cfg = TrainConfig {
            hidden: vec![4],
            epochs: 300,
            batch_size: 1,
            learning_rate: 0.01,
            ..Default::default()
        };
        let (net, _) = train_regressor(&x, &y, InputEncoding::HeadingSinCos, &cfg).unwrap();
        let p = net.predict(&x[0]);
        assert!((p[0] - 0.7).abs() < 1e-6 && (p[1] + 0.4).abs() < 1e-6, "{p:?}");
    }

    #[test]
    fn training_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let xs: Vec<StateVec> = (0..200)
            .map(|_| StateVec::from_fn(|_, _| rng.random_range(-1.0..1.0)))
            .collect();
        let ys: Vec<Vec<f64>> = xs.iter().map(|x| vec![x[0].sin() * x[1]]).collect();
        let cfg = TrainConfig {
            hidden: vec![8, 8],
            epochs: 5,
            ..Default::default()
        };
        let a = train_regressor(&xs, &ys, InputEncoding::Raw, &cfg).unwrap();
        let b = train_regressor(&xs, &ys, InputEncoding::Raw, &cfg).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
    }

    #[test]
    fn divergence_is_reported() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let xs: Vec<StateVec> = (0..100)
            .map(|_| StateVec::from_fn(|_, _| rng.random_range(-1.0..1.0)))
            .collect();
        let ys: Vec<Vec<f64>> = xs.iter().map(|x| vec![x[0] * 3.0 - x[3]]).collect();
        let cfg = TrainConfig {
            hidden: vec![32],
            epochs: 50,
            learning_rate: 1e6,
            final_learning_rate: 1e6,
            momentum: 0.99,
            ..Default::default()
        };
        assert!(matches!(
            train_regressor(&xs, &ys, InputEncoding::Raw, &cfg),
            Err(Error::TrainingDiverged { .. })
        ));
    }

    #[test]
    fn rejects_bad_configuration() {
        let xs = vec![StateVec::zeros()];
        let ys = vec![vec![0.0]];
        for cfg in [
            TrainConfig { epochs: 0, ..Default::default() },
            TrainConfig { momentum: 1.0, ..Default::default() },
            TrainConfig { learning_rate: -1.0, ..Default::default() },
        ] {
            assert!(train_regressor(&xs, &ys, InputEncoding::Raw, &cfg).is_err());
        }
        assert!(train_regressor(&xs, &[], InputEncoding::Raw, &TrainConfig::default()).is_err());
    }

    #[test]
    fn report_csv_has_one_row_per_epoch() {
        let r = TrainReport {
            train_loss: vec![1.0, 0.5],
            validation_loss: vec![1.1, 0.6],
            best_epoch: 1,
            train_rows: 9,
            validation_rows: 1,
        };
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert_eq!(s.lines().count(), 3);
        assert!(s.starts_with("epoch,train_loss,validation_loss\n0,1.0,1.1"));
    }
}
