//! Plain CSV writers with a fixed 17-significant-digit number format.

use std::io::{self, Write};

/// `x` with 17 significant digits, enough to round-trip any `f64`.
pub fn sig17(x: f64) -> String {
    if x == 0.0 {
        // Normalise -0 so identical runs cannot differ by the zero sign alone.
        return "0.0000000000000000e0".to_string();
    }
    format!("{x:.16e}")
}

/// Write a header line and rows of numeric columns.
pub fn write_columns<W: Write>(mut w: W, header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> io::Result<()> {
    writeln!(w, "{}", header.join(","))?;
    let mut line = String::new();
    for row in rows {
        line.clear();
        for (i, v) in row.iter().enumerate() {
            if i > 0 {
                line.push(',');
            }
            line.push_str(&sig17(*v));
        }
        writeln!(w, "{line}")?;
    }
    w.flush()
}
