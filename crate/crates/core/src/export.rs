//! Shared helpers for writing numeric result files.

/// Formats a float with 17 significant digits, enough to round-trip any
/// `f64` exactly through its decimal representation.
pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}
