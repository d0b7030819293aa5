//! Number formatting for CSV and summary outputs.

/// Formats with 17 significant digits so that every f64 round-trips exactly.
pub fn g17(x: f64) -> String {
    format!("{:.16e}", x)
}
