/// Mean of equally spaced samples over one period (the first point only, not
/// the repeated endpoint). For smooth periodic integrands this is the
/// trapezoid rule and converges spectrally.
///
/// Panics if fewer than 8 samples are given.
pub fn periodic_trapezoid(samples: &[f64]) -> f64 {
    assert!(
        samples.len() >= 8,
        "periodic_trapezoid needs at least 8 samples, got {}",
        samples.len()
    );
    samples.iter().sum::<f64>() / samples.len() as f64
}

/// Composite trapezoid rule on an arbitrary increasing mesh.
pub fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    debug_assert_eq!(x.len(), y.len());
    x.windows(2)
        .zip(y.windows(2))
        .map(|(xs, ys)| 0.5 * (xs[1] - xs[0]) * (ys[0] + ys[1]))
        .sum()
}
