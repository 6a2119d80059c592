use nalgebra::DMatrix;

use super::GenomeTable;
use crate::error::{Error, Result};
use crate::transport::CostMatrix;
use crate::ItemId;

fn unit_vector(genome: &GenomeTable, item: ItemId) -> Result<Vec<f64>> {
    let v = genome
        .get(item)
        .ok_or_else(|| Error::Data(format!("item {item} has no genome vector")))?;
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(Error::Data(format!("item {item} has an all-zero genome; cosine is undefined")));
    }
    Ok(v.iter().map(|x| x / norm).collect())
}

/// `1 - cos(genome_i, genome_j)` clamped to `[0, 2]`.
pub fn cosine_costs(genome: &GenomeTable, rows: &[ItemId], cols: &[ItemId]) -> Result<DMatrix<f64>> {
    let row_vecs = rows.iter().map(|i| unit_vector(genome, *i)).collect::<Result<Vec<_>>>()?;
    let col_vecs = cols.iter().map(|i| unit_vector(genome, *i)).collect::<Result<Vec<_>>>()?;
    Ok(DMatrix::from_fn(rows.len(), cols.len(), |i, j| {
        let cos: f64 = row_vecs[i].iter().zip(&col_vecs[j]).map(|(a, b)| a * b).sum();
        (1.0 - cos).clamp(0.0, 2.0)
    }))
}

/// Cost between interacted items (rows) and cold items (columns).
pub fn build_cost_matrix(genome: &GenomeTable, rows: &[ItemId], cols: &[ItemId]) -> Result<CostMatrix> {
    CostMatrix::new(cosine_costs(genome, rows, cols)?, rows.to_vec(), cols.to_vec())
}
