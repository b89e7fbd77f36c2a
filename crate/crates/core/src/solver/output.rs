//! CSV emission for snapshots and diagnostics. Floats carry 17
//! significant digits so the files round-trip exactly.

use std::io::{self, Write};

use super::{Diagnostics, Field};

pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// One row per cell: cell-center coordinates followed by `y_1..y_N`.
pub fn write_snapshot_csv<W: Write>(field: &Field, mut w: W) -> io::Result<()> {
    let axes = ["x", "y"];
    let mut header: Vec<String> = axes[..field.grid.dim()].iter().map(|s| s.to_string()).collect();
    header.extend((1..=field.n_species()).map(|k| format!("y_{k}")));
    writeln!(w, "{}", header.join(","))?;
    for (cell, y) in field.vectors().enumerate() {
        let row: Vec<String> = field
            .grid
            .cell_center(cell)
            .into_iter()
            .chain(y.iter().copied())
            .map(fmt_f64)
            .collect();
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

/// Columns `t, Psi, min_y, max_y, sum_dev, dt, q_1..q_d`.
pub fn write_diagnostics_csv<W: Write>(diagnostics: &[Diagnostics], mut w: W) -> io::Result<()> {
    let d = diagnostics.first().map(|r| r.conserved_values.len()).unwrap_or(0);
    let mut header: Vec<String> = ["t", "Psi", "min_y", "max_y", "sum_dev", "dt"].iter().map(|s| s.to_string()).collect();
    header.extend((1..=d).map(|q| format!("q_{q}")));
    writeln!(w, "{}", header.join(","))?;
    for r in diagnostics {
        let row: Vec<String> = [r.time, r.free_energy, r.min_component, r.max_component, r.sum_deviation, r.step_size]
            .into_iter()
            .chain(r.conserved_values.iter().copied())
            .map(fmt_f64)
            .collect();
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mixture::Composition;
    use crate::solver::Grid;

    #[test]
    fn seventeen_significant_digits_round_trip() {
        let v = 0.1 + 0.2;
        let s = fmt_f64(v);
        assert_eq!(s.parse::<f64>().unwrap(), v);
        assert_eq!(s.split('e').next().unwrap().replace(['.', '-'], "").len(), 17);
    }

    #[test]
    fn snapshot_layout() {
        let grid = Grid::new(vec![1.0, 1.0], vec![2, 2]).unwrap();
        let field = Field::uniform(grid, &Composition::from_slice(&[0.25, 0.75]).unwrap());
        let mut buf = Vec::new();
        write_snapshot_csv(&field, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "x,y,y_1,y_2");
        assert_eq!(lines.len(), 5);
        assert_eq!(lines[2].split(',').count(), 4);
        assert!(lines[2].starts_with("7.5000000000000000e-1,2.5000000000000000e-1,"));
    }
}
