use std::cell::RefCell;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// Mean Euclidean distance over all unordered pairs of grid cells; 0 for
/// fewer than two cells.
///
/// Distances depend only on the integer offset between two cells, so apart
/// from tiny sets the sum is taken over the offset histogram of the set. The
/// histogram is counted pair by pair when the pairs are few relative to the
/// FFT cost, and otherwise computed as the autocorrelation of the set over
/// its bounding box by FFT, where every count is exact after rounding. All
/// paths agree with the direct sum to floating-point accumulation error.
pub fn mean_pairwise_distance(cells: &[(usize, usize)]) -> f64 {
    let n = cells.len();
    if n < 2 {
        return 0.0;
    }
    let pairs = n * (n - 1) / 2;
    let sum = match OffsetGrid::for_cells(cells) {
        Some(grid) if grid.cost() < pairs => grid.pair_distance_sum(cells),
        Some(grid) if grid.offsets() <= 2 * pairs => grid.counted_distance_sum(cells),
        _ => direct_pair_distance_sum(cells),
    };
    sum / pairs as f64
}

fn direct_pair_distance_sum(cells: &[(usize, usize)]) -> f64 {
    let mut sum = 0.0;
    for (i, &(r1, c1)) in cells.iter().enumerate() {
        for &(r2, c2) in &cells[i + 1..] {
            let dr = r1 as f64 - r2 as f64;
            let dc = c1 as f64 - c2 as f64;
            sum += (dr * dr + dc * dc).sqrt();
        }
    }
    sum
}

struct OffsetGrid {
    r0: usize,
    c0: usize,
    h: usize,
    w: usize,
    p: usize,
    q: usize,
}

impl OffsetGrid {
    fn for_cells(cells: &[(usize, usize)]) -> Option<Self> {
        let r0 = cells.iter().map(|c| c.0).min()?;
        let r1 = cells.iter().map(|c| c.0).max()?;
        let c0 = cells.iter().map(|c| c.1).min()?;
        let c1 = cells.iter().map(|c| c.1).max()?;
        let (h, w) = (r1 - r0 + 1, c1 - c0 + 1);
        Some(Self {
            r0,
            c0,
            h,
            w,
            p: (2 * h - 1).next_power_of_two(),
            q: (2 * w - 1).next_power_of_two(),
        })
    }

    /// Distinct offsets `(dr, dc)` with `dr, dc` spanning the bounding box in both directions.
    fn offsets(&self) -> usize {
        (2 * self.h - 1) * (2 * self.w - 1)
    }

    /// Histogram of pair offsets counted directly, one increment per pair.
    fn counted_distance_sum(&self, cells: &[(usize, usize)]) -> f64 {
        let (h, w) = (self.h, self.w);
        let span = 2 * w - 1;
        let mut counts = vec![0u32; self.offsets()];
        for (i, &(r1, c1)) in cells.iter().enumerate() {
            for &(r2, c2) in &cells[i + 1..] {
                let dr = r2 + h - 1 - r1;
                let dc = c2 + w - 1 - c1;
                counts[dr * span + dc] += 1;
            }
        }
        let mut sum = 0.0;
        for (k, &n) in counts.iter().enumerate() {
            if n > 0 {
                let dr = (k / span) as f64 - (h - 1) as f64;
                let dc = (k % span) as f64 - (w - 1) as f64;
                sum += n as f64 * (dr * dr + dc * dc).sqrt();
            }
        }
        sum
    }

    /// Rough operation count, comparable to a number of direct pair terms.
    fn cost(&self) -> usize {
        let size = self.p * self.q;
        4 * size * (size.trailing_zeros() as usize + 1)
    }

    fn pair_distance_sum(&self, cells: &[(usize, usize)]) -> f64 {
        let (p, q) = (self.p, self.q);
        let mut buf = vec![Complex::new(0.0, 0.0); p * q];
        for &(r, c) in cells {
            buf[(r - self.r0) * q + (c - self.c0)].re = 1.0;
        }

        PLANNER.with(|planner| {
            let mut planner = planner.borrow_mut();
            let row_fwd = planner.plan_fft_forward(q);
            let col_fwd = planner.plan_fft_forward(p);
            let row_inv = planner.plan_fft_inverse(q);
            let col_inv = planner.plan_fft_inverse(p);

            // Rows beyond the bounding box are zero and stay zero.
            row_fwd.process(&mut buf[..self.h * q]);
            let mut column = vec![Complex::new(0.0, 0.0); p];
            for c in 0..q {
                for r in 0..p {
                    column[r] = buf[r * q + c];
                }
                col_fwd.process(&mut column);
                for v in column.iter_mut() {
                    *v = Complex::new(v.norm_sqr(), 0.0);
                }
                col_inv.process(&mut column);
                for r in 0..p {
                    buf[r * q + c] = column[r];
                }
            }
            row_inv.process(&mut buf);
        });

        let scale = 1.0 / (p * q) as f64;
        let mut sum = 0.0;
        for i in 0..p {
            let dr = if i < self.h {
                i as f64
            } else if i + self.h > p {
                (p - i) as f64
            } else {
                continue;
            };
            for j in 0..q {
                let dc = if j < self.w {
                    j as f64
                } else if j + self.w > q {
                    (q - j) as f64
                } else {
                    continue;
                };
                let count = (buf[i * q + j].re * scale).round();
                if count > 0.0 {
                    sum += count * (dr * dr + dc * dc).sqrt();
                }
            }
        }
        // Every unordered pair appears at offset d and -d.
        sum / 2.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn offset_histogram_matches_direct_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..40 {
            let h = rng.random_range(1..40);
            let w = rng.random_range(1..40);
            let density = rng.random_range(0.05..1.0);
            let cells: Vec<(usize, usize)> = (0..h)
                .flat_map(|r| (0..w).map(move |c| (r + 5, c + 3)))
                .filter(|_| rng.random_bool(density))
                .collect();
            if cells.len() < 2 {
                continue;
            }
            let grid = OffsetGrid::for_cells(&cells).unwrap();
            let fft = grid.pair_distance_sum(&cells);
            let counted = grid.counted_distance_sum(&cells);
            let direct = direct_pair_distance_sum(&cells);
            for got in [fft, counted] {
                assert!(
                    (got - direct).abs() <= 1e-9 * direct.max(1.0),
                    "{got} vs {direct}"
                );
            }
        }
    }

    #[test]
    fn degenerate_sets() {
        assert_eq!(mean_pairwise_distance(&[]), 0.0);
        assert_eq!(mean_pairwise_distance(&[(3, 3)]), 0.0);
        assert_eq!(mean_pairwise_distance(&[(0, 0), (3, 4)]), 5.0);
    }

    #[test]
    fn large_block_uses_histogram_path() {
        let cells: Vec<(usize, usize)> =
            (0..64).flat_map(|r| (0..64).map(move |c| (r, c))).collect();
        let grid = OffsetGrid::for_cells(&cells).unwrap();
        let pairs = (cells.len() * (cells.len() - 1) / 2) as f64;
        assert!((grid.cost() as f64) < pairs);
        let fast = mean_pairwise_distance(&cells);
        let direct = direct_pair_distance_sum(&cells) / pairs;
        assert!((fast - direct).abs() < 1e-9 * direct);
    }
}
