use super::ModelError;
use crate::predictions::Prediction;

/// Element-wise mean of prediction sets that list the same ids in the same
/// order.
pub fn ensemble_mean(sets: &[Vec<Prediction>]) -> Result<Vec<Prediction>, ModelError> {
    let first = sets.first().ok_or(ModelError::EmptyInput("ensemble"))?;
    for set in &sets[1..] {
        if set.len() != first.len() {
            return Err(ModelError::LengthMismatch { left: first.len(), right: set.len() });
        }
        for (row, (a, b)) in first.iter().zip(set).enumerate() {
            if a.id != b.id {
                return Err(ModelError::IdMismatch { row, left: a.id.clone(), right: b.id.clone() });
            }
        }
    }
    let k = sets.len() as f64;
    Ok((0..first.len())
        .map(|i| Prediction::new(first[i].id.clone(), sets.iter().map(|s| s[i].score).sum::<f64>() / k))
        .collect())
}
