use ndarray::{s, Array2};

use super::FeatureMatrix;

fn regression_deltas(c: &Array2<f64>, half_width: usize) -> Array2<f64> {
    let (frames, dims) = c.dim();
    let denom = 2.0 * (1..=half_width).map(|n| (n * n) as f64).sum::<f64>();
    let mut out = Array2::zeros((frames, dims));
    if half_width == 0 || frames == 0 {
        return out;
    }
    let last = frames - 1;
    for t in 0..frames {
        let mut row = out.row_mut(t);
        for n in 1..=half_width {
            let ahead = c.row((t + n).min(last));
            let behind = c.row(t.saturating_sub(n));
            let w = n as f64 / denom;
            row.zip_mut_with(&(&ahead - &behind), |r, d| *r += w * d);
        }
    }
    out
}

/// Stacks static, delta and acceleration coefficients: `[c | Δc | ΔΔc]`.
/// `Δc_t = Σ_{n=1..W} n (c_{t+n} − c_{t−n}) / (2 Σ n²)`, with the first and
/// last frames replicated past the edges.
pub fn add_deltas(features: &FeatureMatrix, half_width: usize) -> FeatureMatrix {
    let stat = &features.data;
    let delta = regression_deltas(stat, half_width);
    let accel = regression_deltas(&delta, half_width);
    let (frames, dims) = stat.dim();
    let mut data = Array2::zeros((frames, 3 * dims));
    data.slice_mut(s![.., ..dims]).assign(stat);
    data.slice_mut(s![.., dims..2 * dims]).assign(&delta);
    data.slice_mut(s![.., 2 * dims..]).assign(&accel);
    FeatureMatrix {
        data,
        kind: features.kind,
        n_static: dims,
        includes_deltas: true,
    }
}

#[cfg(test)]
mod tests {
    use super::super::FeatureKind;
    use super::*;

    #[test]
    fn constant_features_have_zero_deltas() {
        let fm = FeatureMatrix::new(Array2::from_elem((7, 3), 2.5), FeatureKind::Mfcc);
        let d = add_deltas(&fm, 2);
        assert_eq!(d.dims(), 9);
        assert!(d.includes_deltas);
        assert!(d.data.slice(s![.., 3..]).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn ramp_has_unit_delta_in_the_interior() {
        let fm = FeatureMatrix::new(
            Array2::from_shape_fn((20, 2), |(t, _)| t as f64),
            FeatureKind::Lfcc,
        );
        let d = add_deltas(&fm, 2);
        // acceleration sees replicated deltas for 2 more frames at each end
        for t in 4..16 {
            for j in 0..2 {
                assert!((d.data[[t, 2 + j]] - 1.0).abs() < 1e-12);
                assert!(d.data[[t, 4 + j]].abs() < 1e-12);
            }
        }
    }

    #[test]
    fn single_frame_is_fine() {
        let fm = FeatureMatrix::new(Array2::from_elem((1, 4), 1.0), FeatureKind::Mfcc);
        let d = add_deltas(&fm, 2);
        assert_eq!(d.data.dim(), (1, 12));
    }
}
