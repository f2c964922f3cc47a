//! Binary morphology with disc structuring elements and connected components.
//!
//! Pixels outside the grid are ignored: erosion treats them as foreground and
//! dilation as background, so opening and closing stay idempotent and leave a
//! full mask unchanged.

use std::collections::VecDeque;

use crate::imaging::{neighbours8, Mask};

/// Half-widths of a discrete disc `dx^2 + dy^2 <= r^2`, indexed by `dy + R`.
fn disc_rows(radius: f64) -> Vec<isize> {
    let reach = radius.floor() as isize;
    let r2 = radius * radius;
    (-reach..=reach).map(|dy| ((r2 - (dy * dy) as f64).max(0.0)).sqrt().floor() as isize).collect()
}

/// Per-row prefix counts of pixels equal to `value`.
fn row_prefix(mask: &Mask, value: bool) -> Vec<Vec<u32>> {
    let w = mask.width();
    (0..mask.height())
        .map(|y| {
            let mut acc = Vec::with_capacity(w + 1);
            acc.push(0u32);
            let mut c = 0u32;
            for x in 0..w {
                c += (mask.get(x, y) == value) as u32;
                acc.push(c);
            }
            acc
        })
        .collect()
}

fn span_count(prefix: &[u32], lo: isize, hi: isize, w: usize) -> u32 {
    let lo = lo.max(0) as usize;
    let hi = (hi.min(w as isize - 1)).max(-1);
    if hi < lo as isize {
        return 0;
    }
    prefix[hi as usize + 1] - prefix[lo]
}

pub fn erode(mask: &Mask, radius: f64) -> Mask {
    let rows = disc_rows(radius);
    let reach = (rows.len() / 2) as isize;
    let bg = row_prefix(mask, false);
    let (w, h) = (mask.width(), mask.height());
    Mask::from_fn(w, h, |x, y| {
        rows.iter().enumerate().all(|(k, &hw)| {
            let yy = y as isize + k as isize - reach;
            if yy < 0 || yy >= h as isize {
                return true;
            }
            span_count(&bg[yy as usize], x as isize - hw, x as isize + hw, w) == 0
        })
    })
}

pub fn dilate(mask: &Mask, radius: f64) -> Mask {
    let rows = disc_rows(radius);
    let reach = (rows.len() / 2) as isize;
    let fg = row_prefix(mask, true);
    let (w, h) = (mask.width(), mask.height());
    Mask::from_fn(w, h, |x, y| {
        rows.iter().enumerate().any(|(k, &hw)| {
            let yy = y as isize + k as isize - reach;
            if yy < 0 || yy >= h as isize {
                return false;
            }
            span_count(&fg[yy as usize], x as isize - hw, x as isize + hw, w) > 0
        })
    })
}

pub fn opening(mask: &Mask, radius: f64) -> Mask {
    dilate(&erode(mask, radius), radius)
}

pub fn closing(mask: &Mask, radius: f64) -> Mask {
    erode(&dilate(mask, radius), radius)
}

/// 8-connected component labels (0 = background, components numbered from 1
/// in raster order of their first pixel) and per-label sizes.
pub fn label_components(mask: &Mask) -> (Vec<u32>, Vec<usize>) {
    let (w, h) = (mask.width(), mask.height());
    let mut labels = vec![0u32; w * h];
    let mut sizes = vec![0usize];
    let mut queue = VecDeque::new();
    for start in 0..w * h {
        if !mask.data()[start] || labels[start] != 0 {
            continue;
        }
        let label = sizes.len() as u32;
        let mut size = 0usize;
        labels[start] = label;
        queue.push_back(start);
        while let Some(i) = queue.pop_front() {
            size += 1;
            for j in neighbours8(i % w, i / w, w, h) {
                if mask.data()[j] && labels[j] == 0 {
                    labels[j] = label;
                    queue.push_back(j);
                }
            }
        }
        sizes.push(size);
    }
    (labels, sizes)
}

/// Keeps only the largest 8-connected component (earliest in raster order on ties).
pub fn largest_component(mask: &Mask) -> Mask {
    let (labels, sizes) = label_components(mask);
    let best =
        sizes.iter().enumerate().skip(1).fold((0usize, 0usize), |acc, (l, &s)| if s > acc.1 { (l, s) } else { acc }).0 as u32;
    if best == 0 {
        return Mask::empty(mask.width(), mask.height());
    }
    Mask::new(mask.width(), mask.height(), labels.iter().map(|&l| l == best).collect()).expect("same dimensions")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Definitional erosion/dilation straight from the set formulas.
    fn naive(mask: &Mask, radius: f64, erode: bool) -> Mask {
        let reach = radius.floor() as isize;
        let (w, h) = (mask.width() as isize, mask.height() as isize);
        Mask::from_fn(mask.width(), mask.height(), |x, y| {
            let mut all = true;
            let mut any = false;
            for dy in -reach..=reach {
                for dx in -reach..=reach {
                    if ((dx * dx + dy * dy) as f64) > radius * radius {
                        continue;
                    }
                    let (nx, ny) = (x as isize + dx, y as isize + dy);
                    if nx < 0 || ny < 0 || nx >= w || ny >= h {
                        continue;
                    }
                    let v = mask.get(nx as usize, ny as usize);
                    all &= v;
                    any |= v;
                }
            }
            if erode {
                all
            } else {
                any
            }
        })
    }

    fn arb_mask() -> impl Strategy<Value = Mask> {
        (3usize..14, 3usize..14).prop_flat_map(|(w, h)| {
            proptest::collection::vec(any::<bool>(), w * h).prop_map(move |d| Mask::new(w, h, d).unwrap())
        })
    }

    proptest! {
        #[test]
        fn matches_definitional_oracle(mask in arb_mask(), r in 0.5f64..3.5) {
            prop_assert_eq!(erode(&mask, r), naive(&mask, r, true));
            prop_assert_eq!(dilate(&mask, r), naive(&mask, r, false));
        }

        #[test]
        fn opening_closing_bounds_and_idempotence(mask in arb_mask(), r in 0.5f64..3.5) {
            let o = opening(&mask, r);
            let c = closing(&mask, r);
            prop_assert!(o.is_subset_of(&mask));
            prop_assert!(mask.is_subset_of(&c));
            prop_assert_eq!(opening(&o, r), o);
            prop_assert_eq!(closing(&c, r), c);
        }
    }

    #[test]
    fn components_are_eight_connected() {
        let mask = Mask::from_fn(5, 5, |x, y| x == y || (x == 4 && y == 0));
        let (_, sizes) = label_components(&mask);
        assert_eq!(&sizes[1..], &[5, 1]);
        assert_eq!(largest_component(&mask).count(), 5);
    }
}
