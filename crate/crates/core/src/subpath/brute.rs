//! Exhaustive tube enumeration, used as an independent oracle for the DP.

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::subpath::volume::{PathElement, ScoreVolume, SubpathConfig, TubePath};

/// Enumeration is refused above this many candidate tubes.
pub const MAX_CANDIDATES: f64 = 1e7;

fn all_cells(m: &ScoreVolume) -> Vec<(usize, usize, usize, usize)> {
    let [ns, nsh, w, h, _] = m.dims();
    let mut cells = Vec::with_capacity(ns * nsh * w * h);
    for sc in 0..ns {
        for sh in 0..nsh {
            for i in 0..w {
                for j in 0..h {
                    cells.push((sc, sh, i, j));
                }
            }
        }
    }
    cells
}

fn at(c: (usize, usize, usize, usize), t: usize) -> PathElement {
    PathElement::new(c.0, c.1, c.2, c.3, t)
}

/// Number of distinct tubes in the volume under the given radii.
pub fn count_tubes(m: &ScoreVolume, cfg: &SubpathConfig) -> f64 {
    let cells = all_cells(m);
    let mut ending: Vec<f64> = vec![1.0; cells.len()];
    let mut total: f64 = ending.iter().sum();
    for t in 1..m.frames() {
        let next: Vec<f64> = cells
            .iter()
            .map(|&c| {
                1.0 + cells
                    .iter()
                    .zip(&ending)
                    .filter(|(&v, _)| cfg.adjacent(&at(v, t - 1), &at(c, t)))
                    .map(|(_, &n)| n)
                    .sum::<f64>()
            })
            .collect();
        total += next.iter().sum::<f64>();
        ending = next;
    }
    total
}

/// Canonical order between candidates: higher score first, then smaller t0,
/// smaller t1, then lexicographically smaller per-frame cell sequence.
fn canonical_cmp(a: (f64, &[PathElement]), b: (f64, &[PathElement])) -> Ordering {
    b.0.partial_cmp(&a.0)
        .unwrap_or(Ordering::Equal)
        .then(a.1[0].t.cmp(&b.1[0].t))
        .then(a.1.len().cmp(&b.1.len()))
        .then_with(|| {
            a.1.iter().map(PathElement::cell_key).cmp(b.1.iter().map(PathElement::cell_key))
        })
}

/// Enumerates every valid tube and returns the canonical maximum.
pub fn brute_force_subpath(m: &ScoreVolume, cfg: &SubpathConfig) -> Result<(f64, TubePath)> {
    let n = count_tubes(m, cfg);
    if n > MAX_CANDIDATES {
        return Err(Error::TooLarge(format!("{n} candidate tubes exceed {MAX_CANDIDATES}")));
    }
    let cells = all_cells(m);
    let nt = m.frames();
    let mut best: Option<(f64, Vec<PathElement>)> = None;
    let mut stack = Vec::with_capacity(nt);

    fn walk(
        m: &ScoreVolume,
        cfg: &SubpathConfig,
        cells: &[(usize, usize, usize, usize)],
        stack: &mut Vec<PathElement>,
        sum: f64,
        best: &mut Option<(f64, Vec<PathElement>)>,
    ) {
        let replace = match best {
            None => true,
            Some((bs, bp)) => canonical_cmp((sum, stack), (*bs, bp)) == Ordering::Less,
        };
        if replace {
            *best = Some((sum, stack.clone()));
        }
        let last = *stack.last().unwrap();
        if last.t + 1 >= m.frames() {
            return;
        }
        for &c in cells {
            let next = at(c, last.t + 1);
            if cfg.adjacent(&last, &next) {
                stack.push(next);
                walk(m, cfg, cells, stack, sum + m.get(c.0, c.1, c.2, c.3, next.t), best);
                stack.pop();
            }
        }
    }

    for t0 in 0..nt {
        for &c in &cells {
            stack.clear();
            stack.push(at(c, t0));
            walk(m, cfg, &cells, &mut stack, m.get(c.0, c.1, c.2, c.3, t0), &mut best);
        }
    }
    let (s, p) = best.ok_or(Error::EmptyInput)?;
    Ok((s, TubePath::new(p)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_cell_volume() {
        let m = ScoreVolume::new_3d(1, 1, 1, vec![-2.5]).unwrap();
        let (s, p) = brute_force_subpath(&m, &SubpathConfig::default()).unwrap();
        assert_eq!(s, -2.5);
        assert_eq!(p.elements(), &[PathElement::new(0, 0, 0, 0, 0)]);
    }

    #[test]
    fn tube_count_of_a_column() {
        // 1x1x3: [0], [1], [2], [0,1], [1,2], [0,1,2]
        let m = ScoreVolume::new_3d(1, 1, 3, vec![0.0; 3]).unwrap();
        assert_eq!(count_tubes(&m, &SubpathConfig::default()), 6.0);
    }

    #[test]
    fn oversized_instance_is_refused() {
        let m = ScoreVolume::new_3d(8, 8, 8, vec![0.0; 512]).unwrap();
        assert!(matches!(
            brute_force_subpath(&m, &SubpathConfig::spatial(1)),
            Err(Error::TooLarge(_))
        ));
    }

    #[test]
    fn hand_enumerated_two_by_one_by_two() {
        let m = ScoreVolume::new_3d(2, 1, 2, vec![1.0, -5.0, -5.0, 4.0]).unwrap();
        assert_eq!(brute_force_subpath(&m, &SubpathConfig::spatial(0)).unwrap().0, 4.0);
        assert_eq!(brute_force_subpath(&m, &SubpathConfig::spatial(1)).unwrap().0, 5.0);
    }
}
