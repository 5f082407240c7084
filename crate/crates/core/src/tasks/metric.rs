use super::{TaskError, Targets};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricKind {
    Rmse,
    Accuracy,
    MseVsAnalytic,
}

fn mse(pred: &Tensor, target: &Tensor) -> Result<f64, TaskError> {
    if pred.shape() != target.shape() {
        return Err(TaskError::Shape(format!("{:?} vs {:?}", pred.shape(), target.shape())));
    }
    if pred.is_empty() {
        return Err(TaskError::Domain("metric of empty input".into()));
    }
    let sum: f64 = pred
        .values()
        .iter()
        .zip(target.values())
        .map(|(p, t)| (p - t) * (p - t))
        .sum();
    Ok(sum / pred.len() as f64)
}

pub fn rmse(pred: &Tensor, target: &Tensor) -> Result<f64, TaskError> {
    mse(pred, target).map(f64::sqrt)
}

pub fn mse_vs_analytic(pred: &Tensor, analytic: &Tensor) -> Result<f64, TaskError> {
    mse(pred, analytic)
}

/// Fraction of rows of `[n, c]` logits whose first maximum is the label.
pub fn accuracy(logits: &Tensor, labels: &[usize]) -> Result<f64, TaskError> {
    if logits.rank() != 2 || logits.shape()[0] != labels.len() {
        return Err(TaskError::Shape(format!("logits {:?}, {} labels", logits.shape(), labels.len())));
    }
    if labels.is_empty() {
        return Err(TaskError::Domain("metric of empty input".into()));
    }
    let c = logits.shape()[1];
    let hits = logits
        .values()
        .chunks_exact(c)
        .zip(labels)
        .filter(|(row, &label)| {
            let best = row
                .iter()
                .enumerate()
                .fold(0, |best, (i, &v)| if v > row[best] { i } else { best });
            best == label
        })
        .count();
    Ok(hits as f64 / labels.len() as f64)
}

pub fn metric(kind: MetricKind, pred: &Tensor, target: &Targets) -> Result<f64, TaskError> {
    match (kind, target) {
        (MetricKind::Rmse, Targets::Values(t)) => rmse(pred, t),
        (MetricKind::MseVsAnalytic, Targets::Values(t)) => mse_vs_analytic(pred, t),
        (MetricKind::Accuracy, Targets::Classes(labels)) => accuracy(pred, labels),
        (kind, _) => Err(TaskError::Contract(format!("{kind:?} does not apply to these targets"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        let x = Tensor::from_rows(&[[0.3, -2.0]]).unwrap();
        assert_eq!(rmse(&x, &x).unwrap(), 0.0);
        let zeros = Tensor::new(vec![2], vec![0.0, 0.0]).unwrap();
        let ones = Tensor::new(vec![2], vec![1.0, 1.0]).unwrap();
        assert_eq!(rmse(&zeros, &ones).unwrap(), 1.0);
        let empty = Tensor::zeros(vec![0]);
        assert!(matches!(rmse(&empty, &empty), Err(TaskError::Domain(_))));

        let logits = Tensor::from_rows(&[[0.1, 0.9, 0.0], [2.0, -1.0, 0.5], [0.0, 0.0, 3.0]]).unwrap();
        assert_eq!(accuracy(&logits, &[1, 0, 2]).unwrap(), 1.0);
        assert!((accuracy(&logits, &[1, 1, 1]).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!(metric(MetricKind::Accuracy, &logits, &Targets::Values(logits.clone())).is_err());
    }
}
