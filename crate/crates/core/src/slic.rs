//! SLIC superpixels: local k-means in (color, scaled position) space.

use crate::error::{Error, Result};
use crate::graph::{connected_components, ImageGrid, SuperpixelSegmentation};

#[derive(Debug, Clone)]
struct Center {
    row: f64,
    col: f64,
    color: Vec<f64>,
}

/// Seed grid with `rows * cols ≈ target` and roughly square cells.
fn seed_grid(height: usize, width: usize, target: usize) -> (usize, usize) {
    let rows = ((target as f64 * height as f64 / width as f64).sqrt().round() as usize).clamp(1, height);
    let cols = ((target as f64 / rows as f64).round() as usize).clamp(1, width);
    (rows, cols)
}

/// Segment `image` into roughly `target_count` compact superpixels.
///
/// Distance is `|Δcolor|² + (compactness · |Δpos| / S)²` with grid step `S`.
/// Each center only competes for pixels inside a `2S x 2S` window. Equal
/// distances go to the lower center index. A final pass keeps the largest
/// 4-connected piece of each cluster and merges every other piece into the
/// largest segment it touches.
pub fn slic_segment(
    image: &ImageGrid,
    target_count: usize,
    compactness: f64,
    max_iters: usize,
) -> Result<SuperpixelSegmentation> {
    let (h, w, ch) = (image.height(), image.width(), image.channels());
    if target_count == 0 || target_count > h * w {
        return Err(Error::InvalidArgument(format!(
            "target_count must be in 1..={}, got {target_count}",
            h * w
        )));
    }
    if !(compactness > 0.0) || max_iters == 0 {
        return Err(Error::InvalidArgument("compactness must be > 0 and max_iters >= 1".into()));
    }

    let (rows, cols) = seed_grid(h, w, target_count);
    let step_r = h as f64 / rows as f64;
    let step_c = w as f64 / cols as f64;
    let step = (step_r * step_c).sqrt();
    let mut centers: Vec<Center> = (0..rows)
        .flat_map(|i| (0..cols).map(move |j| (i, j)))
        .map(|(i, j)| {
            let row = (i as f64 + 0.5) * step_r - 0.5;
            let col = (j as f64 + 0.5) * step_c - 0.5;
            let (pr, pc) = (row.round() as usize, col.round() as usize);
            Center { row, col, color: image.pixel(pr.min(h - 1), pc.min(w - 1)).to_vec() }
        })
        .collect();

    let spatial_weight = (compactness / step).powi(2);
    let window = (2.0 * step).ceil() as isize;
    let mut labels = vec![usize::MAX; h * w];
    let mut dist = vec![f64::INFINITY; h * w];

    for _ in 0..max_iters {
        dist.iter_mut().for_each(|d| *d = f64::INFINITY);
        for (k, center) in centers.iter().enumerate() {
            let (cr, cc) = (center.row.round() as isize, center.col.round() as isize);
            let r0 = (cr - window).max(0) as usize;
            let r1 = ((cr + window) as usize).min(h - 1);
            let c0 = (cc - window).max(0) as usize;
            let c1 = ((cc + window).max(0) as usize).min(w - 1);
            for r in r0..=r1 {
                for c in c0..=c1 {
                    let px = image.pixel(r, c);
                    let dc: f64 = px.iter().zip(&center.color).map(|(a, b)| (a - b) * (a - b)).sum();
                    let ds = (r as f64 - center.row).powi(2) + (c as f64 - center.col).powi(2);
                    let d = dc + spatial_weight * ds;
                    let idx = r * w + c;
                    // strict comparison: the lower index keeps ties
                    if d < dist[idx] {
                        dist[idx] = d;
                        labels[idx] = k;
                    }
                }
            }
        }
        // pixels outside every window go to the nearest center by position
        for idx in 0..h * w {
            if labels[idx] == usize::MAX {
                let (r, c) = ((idx / w) as f64, (idx % w) as f64);
                labels[idx] = nearest_center(&centers, r, c);
            }
        }

        let mut sums = vec![(0.0, 0.0, vec![0.0; ch], 0usize); centers.len()];
        for idx in 0..h * w {
            let s = &mut sums[labels[idx]];
            s.0 += (idx / w) as f64;
            s.1 += (idx % w) as f64;
            for (acc, v) in s.2.iter_mut().zip(image.pixel(idx / w, idx % w)) {
                *acc += v;
            }
            s.3 += 1;
        }
        let mut moved = 0.0f64;
        for (center, (sr, sc, scol, count)) in centers.iter_mut().zip(sums) {
            if count == 0 {
                continue;
            }
            let k = count as f64;
            let (nr, nc) = (sr / k, sc / k);
            moved = moved.max((nr - center.row).abs()).max((nc - center.col).abs());
            center.row = nr;
            center.col = nc;
            center.color = scol.into_iter().map(|v| v / k).collect();
        }
        if moved < 1e-3 {
            break;
        }
    }

    Ok(enforce_connectivity(h, w, &labels))
}

fn nearest_center(centers: &[Center], r: f64, c: f64) -> usize {
    let mut best = (f64::INFINITY, 0);
    for (k, ctr) in centers.iter().enumerate() {
        let d = (r - ctr.row).powi(2) + (c - ctr.col).powi(2);
        if d < best.0 {
            best = (d, k);
        }
    }
    best.1
}

/// Keep the largest component of each cluster; merge every orphan component
/// into the largest adjacent kept segment; relabel densely in raster order.
pub(crate) fn enforce_connectivity(h: usize, w: usize, labels: &[usize]) -> SuperpixelSegmentation {
    let (comp, ncomp) = connected_components(h, w, labels);
    let mut comp_size = vec![0usize; ncomp];
    let mut comp_label = vec![0usize; ncomp];
    for (idx, &c) in comp.iter().enumerate() {
        comp_size[c] += 1;
        comp_label[c] = labels[idx];
    }
    let nlabels = labels.iter().max().map_or(0, |m| m + 1);
    let mut primary = vec![usize::MAX; nlabels];
    for c in 0..ncomp {
        let l = comp_label[c];
        if primary[l] == usize::MAX || comp_size[c] > comp_size[primary[l]] {
            primary[l] = c;
        }
    }

    // adjacency between components
    let mut adjacent: Vec<Vec<usize>> = vec![Vec::new(); ncomp];
    for r in 0..h {
        for c in 0..w {
            let a = comp[r * w + c];
            let mut link = |b: usize| {
                if a != b {
                    adjacent[a].push(b);
                    adjacent[b].push(a);
                }
            };
            if c + 1 < w {
                link(comp[r * w + c + 1]);
            }
            if r + 1 < h {
                link(comp[(r + 1) * w + c]);
            }
        }
    }
    adjacent.iter_mut().for_each(|a| {
        a.sort_unstable();
        a.dedup();
    });

    // owner[c] = the kept component that c is merged into
    let mut owner: Vec<Option<usize>> = (0..ncomp)
        .map(|c| (primary[comp_label[c]] == c).then_some(c))
        .collect();
    let mut owner_size: Vec<usize> = comp_size.clone();
    loop {
        let mut progressed = false;
        let mut pending = false;
        for c in 0..ncomp {
            if owner[c].is_some() {
                continue;
            }
            let target = adjacent[c]
                .iter()
                .filter_map(|&b| owner[b])
                .max_by(|&x, &y| owner_size[x].cmp(&owner_size[y]).then(y.cmp(&x)));
            match target {
                Some(t) => {
                    owner[c] = Some(t);
                    owner_size[t] += comp_size[c];
                    progressed = true;
                }
                None => pending = true,
            }
        }
        if !pending || !progressed {
            break;
        }
    }

    let mut remap = vec![usize::MAX; ncomp];
    let mut next = 0;
    let mut out = Vec::with_capacity(h * w);
    for &c in &comp {
        let o = owner[c].unwrap_or(c);
        if remap[o] == usize::MAX {
            remap[o] = next;
            next += 1;
        }
        out.push(remap[o]);
    }
    SuperpixelSegmentation::from_parts_unchecked(h, w, next, out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bbox_aspects(seg: &SuperpixelSegmentation) -> Vec<f64> {
        let n = seg.node_count();
        let mut bb = vec![(usize::MAX, 0usize, usize::MAX, 0usize); n];
        for r in 0..seg.height() {
            for c in 0..seg.width() {
                let b = &mut bb[seg.label(r, c)];
                b.0 = b.0.min(r);
                b.1 = b.1.max(r);
                b.2 = b.2.min(c);
                b.3 = b.3.max(c);
            }
        }
        bb.iter()
            .map(|b| (b.1 - b.0 + 1) as f64 / (b.3 - b.2 + 1) as f64)
            .collect()
    }

    #[test]
    fn uniform_image_gives_square_segments() {
        let img = ImageGrid::filled(60, 60, 3, 0.4).unwrap();
        let seg = slic_segment(&img, 36, 10.0, 10).unwrap();
        let n = seg.node_count();
        assert!((29..=43).contains(&n), "n = {n}");
        assert!(seg.is_connected());
        for a in bbox_aspects(&seg) {
            assert!((0.5..=2.0).contains(&a), "aspect {a}");
        }
    }

    #[test]
    fn two_colour_split_follows_edge() {
        let values: Vec<f64> = (0..3600).map(|i| if i % 60 < 30 { 0.1 } else { 0.9 }).collect();
        let img = ImageGrid::new(60, 60, 1, values).unwrap();
        let seg = slic_segment(&img, 2, 1e-6, 10).unwrap();
        assert_eq!(seg.node_count(), 2);
        // the boundary column in each row is within one pixel of the colour edge
        for r in 0..60 {
            let left = seg.label(r, 0);
            let first_other = (0..60).find(|&c| seg.label(r, c) != left).unwrap();
            assert!(first_other.abs_diff(30) <= 1, "row {r}: boundary at {first_other}");
        }
    }

    #[test]
    fn output_is_connected_on_noisy_image() {
        let mut state = 12345u64;
        let values: Vec<f64> = (0..48 * 40)
            .map(|_| {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                (state >> 11) as f64 / (1u64 << 53) as f64
            })
            .collect();
        let img = ImageGrid::new(48, 40, 1, values).unwrap();
        let seg = slic_segment(&img, 30, 0.5, 10).unwrap();
        assert!(seg.is_connected());
        assert_eq!(seg.pixel_counts().iter().sum::<usize>(), 48 * 40);
    }

    #[test]
    fn rejects_bad_arguments() {
        let img = ImageGrid::filled(8, 8, 1, 0.0).unwrap();
        assert!(slic_segment(&img, 65, 1.0, 5).is_err());
        assert!(slic_segment(&img, 4, 0.0, 5).is_err());
        assert!(slic_segment(&img, 4, 1.0, 0).is_err());
    }

    #[test]
    fn orphans_merge_into_largest_neighbour() {
        // label 0 has a stray pixel inside label 1's area
        #[rustfmt::skip]
        let labels = vec![
            0, 0, 1, 1,
            0, 0, 1, 0,
            0, 0, 1, 1,
            2, 2, 2, 2,
        ];
        let seg = enforce_connectivity(4, 4, &labels);
        assert_eq!(seg.node_count(), 3);
        assert!(seg.is_connected());
        assert_eq!(seg.label(1, 3), seg.label(1, 2));
    }
}
