//! gnuplot scripts for grid evaluations, detections and groups.
//!
//! Scripts read the CSV files written next to them; nothing is rendered here.

use std::fmt::Write as _;

use crate::error::{Error, Result};

fn check_dim(q: usize) -> Result<()> {
    if q == 1 || q == 2 {
        Ok(())
    } else {
        Err(Error::invalid(format!("plots are available for q = 1 or 2, not q = {q}")))
    }
}

fn preamble(out: &mut String, title: &str) {
    let _ = writeln!(out, "set datafile separator ','");
    let _ = writeln!(out, "set title '{title}'");
    let _ = writeln!(out, "set key off");
}

/// Script for a grid CSV (`x1,...,xq,re,im,abs`), optionally overlaying a
/// detection CSV.
pub fn grid_script(q: usize, grid_csv: &str, spikes_csv: Option<&str>) -> Result<String> {
    check_dim(q)?;
    let mut out = String::new();
    preamble(&mut out, "|T_n|");
    if q == 1 {
        let _ = writeln!(out, "set xlabel 'x'");
        let _ = write!(out, "plot '{grid_csv}' every ::1 using 1:4 with lines lw 1.5");
        if let Some(s) = spikes_csv {
            let _ = write!(out, ", '{s}' every ::1 using 2:(column(5) == 0 ? 0 : sqrt(column(5)**2 + column(6)**2)) with points pt 7");
        }
        out.push('\n');
    } else {
        let _ = writeln!(out, "set view map");
        let _ = writeln!(out, "set size ratio -1");
        let _ = writeln!(out, "set xlabel 'x1'");
        let _ = writeln!(out, "set ylabel 'x2'");
        let _ = write!(out, "splot '{grid_csv}' every ::1 using 1:2:5 with points pt 5 ps 0.5 palette");
        if let Some(s) = spikes_csv {
            let _ = write!(out, ", '{s}' every ::1 using 2:3:(0) with points pt 6 ps 2 lc rgb 'white'");
        }
        out.push('\n');
    }
    Ok(out)
}

/// Script colouring group template rows (`group,x1..xq,a_re,a_im`) by group.
pub fn group_script(q: usize, groups_csv: &str) -> Result<String> {
    check_dim(q)?;
    let mut out = String::new();
    preamble(&mut out, "groups");
    if q == 1 {
        let _ = writeln!(out, "set xlabel 'x'");
        let _ = writeln!(out, "plot '{groups_csv}' every ::1 using 2:(0):1 with points pt 7 ps 1.5 lc variable");
    } else {
        let _ = writeln!(out, "set size ratio -1");
        let _ = writeln!(out, "set xlabel 'x1'");
        let _ = writeln!(out, "set ylabel 'x2'");
        let _ = writeln!(out, "plot '{groups_csv}' every ::1 using 2:3:1 with points pt 7 ps 1.5 lc variable");
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scripts_reference_their_data() {
        let s = grid_script(1, "g.csv", Some("s.csv")).unwrap();
        assert!(s.contains("'g.csv'") && s.contains("'s.csv'"));
        let s = grid_script(2, "g.csv", None).unwrap();
        assert!(s.contains("splot 'g.csv'"));
        assert!(group_script(2, "groups.csv").unwrap().contains("lc variable"));
    }

    #[test]
    fn higher_dimensions_are_refused() {
        assert!(grid_script(3, "g.csv", None).is_err());
        assert!(group_script(3, "g.csv").is_err());
    }
}
