//! The `lp` command: Littlewood-Paley block norms and the Besov norm of a field.

use std::path::Path;

use serde::Serialize;

use popowicz::io::read_field_csv;
use popowicz::littlewood_paley::{build_cutoffs, decompose, BesovParams};
use popowicz::spectral::Field;

use crate::error::{CliError, CliResult};

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct BlockNorm {
    pub j: i32,
    pub l2: f64,
    pub lp: f64,
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct LpReport {
    pub blocks: Vec<BlockNorm>,
    pub besov: f64,
}

pub fn lp_report(field: &Field, params: &BesovParams) -> CliResult<LpReport> {
    let cutoffs = build_cutoffs(field.grid())?;
    let d = decompose(field, &cutoffs)?;
    let blocks = d
        .iter()
        .map(|(j, b)| BlockNorm {
            j,
            l2: b.l2_norm(),
            lp: b.lp_norm(params.p),
        })
        .collect();
    Ok(LpReport {
        blocks,
        besov: d.besov_norm(params),
    })
}

pub fn lp_report_from_csv(path: &Path, params: &BesovParams) -> CliResult<LpReport> {
    let file = std::fs::File::open(path).map_err(CliError::io(format!("opening {}", path.display())))?;
    let field = read_field_csv(file)?;
    lp_report(&field, params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use popowicz::spectral::Grid;

    #[test]
    fn cosine_lives_in_two_blocks() {
        let g = Grid::new(64, 2.0 * std::f64::consts::PI).unwrap();
        let f = Field::from_fn(&g, |x| (4.0 * x).cos());
        let r = lp_report(&f, &BesovParams::new(1.0, 2.0, 2.0).unwrap()).unwrap();
        let live: Vec<i32> = r.blocks.iter().filter(|b| b.l2 > 1e-12).map(|b| b.j).collect();
        assert_eq!(live, vec![1, 2]);
        let expected = r
            .blocks
            .iter()
            .map(|b| (2f64.powi(b.j) * b.lp).powi(2))
            .sum::<f64>()
            .sqrt();
        assert!((r.besov - expected).abs() < 1e-12 * expected);
    }
}
