//! Accuracy metrics for comparing allocations against a ground truth.

use super::AllocationError;

/// Percentage relative difference of an estimated cost share against the
/// exact value: `|estimate - truth| / |truth| * 100`.
pub fn relative_difference(estimate: f64, truth: f64) -> Result<f64, AllocationError> {
    if truth == 0.0 {
        return Err(AllocationError::ZeroTruth);
    }
    Ok((estimate - truth).abs() / truth.abs() * 100.0)
}

/// Community-wide average of per-class relative differences, weighted by
/// class size so every agent counts once. Returns a percentage.
pub fn average_relative_difference(
    estimates: &[f64],
    truths: &[f64],
    sizes: &[usize],
) -> Result<f64, AllocationError> {
    if estimates.len() != truths.len() || estimates.len() != sizes.len() || estimates.is_empty() {
        return Err(AllocationError::InvalidCounts(
            "estimates, truths, and sizes must have equal nonzero lengths".into(),
        ));
    }
    let mut weighted = 0.0;
    let mut agents = 0usize;
    for ((&e, &t), &n) in estimates.iter().zip(truths).zip(sizes) {
        weighted += n as f64 * relative_difference(e, t)?;
        agents += n;
    }
    Ok(weighted / agents as f64)
}
