use crate::error::{Error, Result};
use crate::lattice::Lattice;
use crate::map_icm::LabelField;

/// Dice overlap `2|A∩B| / (|A|+|B|)` of the sites labeled `label`; 1 when both are empty.
pub fn dice(a: &LabelField, b: &LabelField, label: usize) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    let (mut both, mut in_a, mut in_b) = (0usize, 0usize, 0usize);
    for (&x, &y) in a.as_slice().iter().zip(b.as_slice()) {
        let (pa, pb) = (x == label, y == label);
        in_a += usize::from(pa);
        in_b += usize::from(pb);
        both += usize::from(pa && pb);
    }
    if in_a + in_b == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * both as f64 / (in_a + in_b) as f64)
}

/// Number of neighbor pairs whose labels differ.
pub fn disagreeing_pairs(x: &LabelField, lattice: &Lattice) -> Result<usize> {
    if x.len() != lattice.site_count() {
        return Err(Error::DimensionMismatch {
            expected: lattice.site_count(),
            found: x.len(),
        });
    }
    let labels = x.as_slice();
    Ok(lattice.edges().filter(|&(i, j)| labels[i] != labels[j]).count())
}
