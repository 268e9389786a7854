use super::codebook::WordField;
use super::{l2_norm, FeatureKind, FeatureVector};
use crate::bbox::BBox;
use crate::error::{Error, Result};

/// One global region plus a 3×3 grid.
pub const SPM_REGIONS: usize = 10;
const GRID: usize = 3;

/// Which of three equal slices of `[start, start + len)` holds `p`; points on
/// an internal boundary belong to the lower slice.
fn slice_index(p: f64, start: u32, len: u32) -> usize {
    let t = GRID as f64 * (p - start as f64) / len as f64;
    (t.ceil() as i64 - 1).clamp(0, GRID as i64 - 1) as usize
}

/// Word histograms of the lattice points whose support centre lies in `bbox`,
/// laid out as `[global | cell(0,0) | cell(0,1) | … | cell(2,2)]` (cells in
/// row-major order), then L2-normalized. A box without lattice points yields
/// the zero vector with `empty` set.
pub fn spm_pool(wf: &WordField, bbox: &BBox, codebook_size: usize) -> Result<FeatureVector> {
    if !bbox.fits_in(wf.width, wf.height) {
        return Err(Error::Dimension(format!(
            "box {bbox} exceeds the {}x{} image",
            wf.width, wf.height
        )));
    }
    if codebook_size == 0 {
        return Err(Error::Input("codebook size must be positive".into()));
    }
    let mut values = vec![0.0; SPM_REGIONS * codebook_size];
    for (&(cx, cy), &word) in wf.centers.iter().zip(&wf.words) {
        if !bbox.contains_point(cx, cy) {
            continue;
        }
        if word >= codebook_size {
            return Err(Error::Input(format!(
                "word {word} out of range for a {codebook_size}-word codebook"
            )));
        }
        let cell = slice_index(cy, bbox.y, bbox.h) * GRID + slice_index(cx, bbox.x, bbox.w);
        values[word] += 1.0;
        values[(1 + cell) * codebook_size + word] += 1.0;
    }
    let norm = l2_norm(&values);
    let empty = norm == 0.0;
    if !empty {
        values.iter_mut().for_each(|v| *v /= norm);
    }
    Ok(FeatureVector {
        kind: FeatureKind::Spm,
        values,
        empty,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn word_field(points: &[((f64, f64), usize)], size: usize) -> WordField {
        WordField {
            width: 100,
            height: 100,
            centers: points.iter().map(|p| p.0).collect(),
            words: points.iter().map(|p| p.1).collect(),
            codebook_size: size,
        }
    }

    #[test]
    fn single_point() {
        let wf = word_field(&[((20.0, 20.0), 3), ((80.0, 80.0), 1)], 5);
        let f = spm_pool(&wf, &BBox::new(10, 10, 30, 30).unwrap(), 5).unwrap();
        assert_eq!(f.len(), 50);
        let nonzero: Vec<(usize, f64)> =
            f.values.iter().cloned().enumerate().filter(|(_, v)| *v != 0.0).collect();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        // (20, 20) in a box spanning 10..40 sits on the first internal
        // boundary (x = 20), so it falls in cell (0, 0)
        assert_eq!(nonzero.len(), 2);
        assert_eq!(nonzero[0].0, 3);
        assert_eq!(nonzero[1].0, 5 + 3);
        assert!((nonzero[0].1 - h).abs() < 1e-15 && (nonzero[1].1 - h).abs() < 1e-15);
        assert!((f.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cell_assignment_row_major() {
        // centre of the box goes to the middle cell (index 4)
        let wf = word_field(&[((25.0, 25.0), 0)], 2);
        let f = spm_pool(&wf, &BBox::new(10, 10, 30, 30).unwrap(), 2).unwrap();
        assert!(f.values[(1 + 4) * 2] > 0.0);
        // bottom-left region: row 2, column 0 -> cell 6
        let wf = word_field(&[((12.0, 38.0), 1)], 2);
        let f = spm_pool(&wf, &BBox::new(10, 10, 30, 30).unwrap(), 2).unwrap();
        assert!(f.values[(1 + 6) * 2 + 1] > 0.0);
    }

    #[test]
    fn empty_region_flagged() {
        let wf = word_field(&[((80.0, 80.0), 1)], 4);
        let f = spm_pool(&wf, &BBox::new(0, 0, 10, 10).unwrap(), 4).unwrap();
        assert!(f.empty);
        assert_eq!(f.len(), 40);
        assert!(f.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn cells_sum_to_global() {
        let pts: Vec<((f64, f64), usize)> = (0..200)
            .map(|i| (((i % 20) as f64 * 5.0 + 2.0, (i / 20) as f64 * 10.0 + 1.0), i % 7))
            .collect();
        let wf = word_field(&pts, 7);
        let f = spm_pool(&wf, &BBox::new(5, 5, 61, 47).unwrap(), 7).unwrap();
        for w in 0..7 {
            let cells: f64 = (1..SPM_REGIONS).map(|c| f.values[c * 7 + w]).sum();
            assert!((cells - f.values[w]).abs() < 1e-12);
        }
    }

    #[test]
    fn box_outside_rejected() {
        let wf = word_field(&[], 3);
        assert!(spm_pool(&wf, &BBox::new(90, 90, 20, 5).unwrap(), 3).is_err());
    }
}
