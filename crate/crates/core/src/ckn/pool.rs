use super::FeatureMap;

/// Output grid size for a strided Gaussian pooling of a `len`-long axis.
#[inline]
pub fn pooled_len(len: usize, stride: usize) -> usize {
    len.div_ceil(stride)
}

// weights[o * len + i] = exp(-beta * (i - o*stride)^2)
fn axis_weights(len: usize, beta: f64, stride: usize) -> (usize, Vec<f64>) {
    let out = pooled_len(len, stride);
    let mut w = vec![0.0; out * len];
    for o in 0..out {
        let center = (o * stride) as f64;
        for i in 0..len {
            let d = i as f64 - center;
            w[o * len + i] = (-beta * d * d).exp();
        }
    }
    (out, w)
}

/// Gaussian pooling `out(z) = sum_z' m(z') exp(-beta |z' - z|^2)` evaluated on
/// the strided grid. The Gaussian factorizes over axes, so rows and columns
/// are pooled in two passes.
pub fn gaussian_pool(m: &FeatureMap, pool_beta: f64, subsample: usize) -> FeatureMap {
    let stride = subsample.max(1);
    let c = m.channels;
    let (oh, wr) = axis_weights(m.height, pool_beta, stride);
    let (ow, wc) = axis_weights(m.width, pool_beta, stride);

    // pass 1: pool along columns -> height x ow
    let mut tmp = FeatureMap::zeros(m.height, ow, c);
    for r in 0..m.height {
        for oc in 0..ow {
            let dst_off = tmp.offset(r, oc);
            for ic in 0..m.width {
                let wgt = wc[oc * m.width + ic];
                if wgt == 0.0 {
                    continue;
                }
                let src = m.at(r, ic);
                for (k, s) in src.iter().enumerate() {
                    tmp.data[dst_off + k] += wgt * s;
                }
            }
        }
    }
    // pass 2: pool along rows -> oh x ow
    let mut out = FeatureMap::zeros(oh, ow, c);
    for or in 0..oh {
        for ir in 0..m.height {
            let wgt = wr[or * m.height + ir];
            if wgt == 0.0 {
                continue;
            }
            for oc in 0..ow {
                let dst_off = out.offset(or, oc);
                let src = tmp.at(ir, oc);
                for (k, s) in src.iter().enumerate() {
                    out.data[dst_off + k] += wgt * s;
                }
            }
        }
    }
    out
}

/// Adjoint of [`gaussian_pool`] for an input grid of `height x width`.
pub fn gaussian_pool_adjoint(
    g: &FeatureMap,
    height: usize,
    width: usize,
    pool_beta: f64,
    subsample: usize,
) -> FeatureMap {
    let stride = subsample.max(1);
    let c = g.channels;
    let (oh, wr) = axis_weights(height, pool_beta, stride);
    let (ow, wc) = axis_weights(width, pool_beta, stride);
    debug_assert_eq!((oh, ow), (g.height, g.width));

    let mut tmp = FeatureMap::zeros(height, ow, c);
    for or in 0..oh {
        for ir in 0..height {
            let wgt = wr[or * height + ir];
            if wgt == 0.0 {
                continue;
            }
            for oc in 0..ow {
                let dst_off = tmp.offset(ir, oc);
                let src = g.at(or, oc);
                for (k, s) in src.iter().enumerate() {
                    tmp.data[dst_off + k] += wgt * s;
                }
            }
        }
    }
    let mut out = FeatureMap::zeros(height, width, c);
    for r in 0..height {
        for oc in 0..ow {
            let src_off = tmp.offset(r, oc);
            for ic in 0..width {
                let wgt = wc[oc * width + ic];
                if wgt == 0.0 {
                    continue;
                }
                let dst_off = out.offset(r, ic);
                for k in 0..c {
                    out.data[dst_off + k] += wgt * tmp.data[src_off + k];
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng as _;

    use crate::rng::rng_from;

    fn naive_pool(m: &FeatureMap, beta: f64, stride: usize) -> FeatureMap {
        let oh = m.height.div_ceil(stride);
        let ow = m.width.div_ceil(stride);
        let mut out = FeatureMap::zeros(oh, ow, m.channels);
        for or in 0..oh {
            for oc in 0..ow {
                for r in 0..m.height {
                    for c in 0..m.width {
                        let dr = r as f64 - (or * stride) as f64;
                        let dc = c as f64 - (oc * stride) as f64;
                        let w = (-beta * (dr * dr + dc * dc)).exp();
                        for k in 0..m.channels {
                            out.at_mut(or, oc)[k] += w * m.at(r, c)[k];
                        }
                    }
                }
            }
        }
        out
    }

    fn random_map(h: usize, w: usize, c: usize, seed: u64) -> FeatureMap {
        let mut rng = rng_from(seed);
        FeatureMap::new(h, w, c, (0..h * w * c).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .unwrap()
    }

    #[test]
    fn single_pixel_is_identity() {
        let m = FeatureMap::new(1, 1, 2, vec![0.3, -2.0]).unwrap();
        assert_eq!(gaussian_pool(&m, 0.7, 1), m);
    }

    #[test]
    fn huge_beta_is_identity() {
        let m = random_map(5, 4, 3, 11);
        let out = gaussian_pool(&m, 1e9, 1);
        for (a, b) in out.data.iter().zip(&m.data) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn matches_double_loop() {
        let m = random_map(4, 4, 2, 3);
        let fast = gaussian_pool(&m, 0.5, 2);
        let slow = naive_pool(&m, 0.5, 2);
        assert_eq!((fast.height, fast.width), (2, 2));
        for (a, b) in fast.data.iter().zip(&slow.data) {
            assert!((a - b).abs() < 1e-10);
        }
        let m = random_map(7, 5, 1, 4);
        let fast = gaussian_pool(&m, 0.3, 3);
        let slow = naive_pool(&m, 0.3, 3);
        for (a, b) in fast.data.iter().zip(&slow.data) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn adjoint_identity() {
        let m = random_map(6, 5, 2, 9);
        let out = gaussian_pool(&m, 0.4, 2);
        let g = random_map(out.height, out.width, 2, 10);
        let lhs: f64 = out.data.iter().zip(&g.data).map(|(a, b)| a * b).sum();
        let back = gaussian_pool_adjoint(&g, 6, 5, 0.4, 2);
        let rhs: f64 = m.data.iter().zip(&back.data).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10);
    }
}
