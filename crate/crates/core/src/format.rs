//! Fixed numeric formatting for every emitted file.

/// Scientific notation with 12 significant digits. Negative zero prints as
/// zero so outputs are byte-stable.
pub fn sci(value: f64) -> String {
    let value = if value == 0.0 { 0.0 } else { value };
    format!("{value:.11e}")
}
