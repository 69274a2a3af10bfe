//! Maximum subpath dynamic program with backpointers.
//!
//! `S(u, t)` is the best score of a tube ending at cell `u` in frame `t`:
//! `S(u, t) = M(u, t) + max(0, max_{v in N(u)} S(v, t - 1))`. Each frame also
//! carries a rank of the canonical tube ending at every cell, so that ties are
//! resolved by (t0, t1, lexicographic element sequence) without enumerating
//! the tied tubes.

use crate::error::{Error, Result};
use crate::subpath::volume::{PathElement, ScoreVolume, SubpathConfig, TubePath};

const NONE: u32 = u32::MAX;

/// Maximum-sum contiguous subarray, ties broken by smallest start then smallest end.
pub fn kadane_1d(a: &[f64]) -> Result<(f64, usize, usize)> {
    let (&first, rest) = a.split_first().ok_or(Error::EmptyInput)?;
    let (mut cur, mut cur_start) = (first, 0);
    let mut best = (first, 0, 0);
    for (k, &x) in rest.iter().enumerate() {
        let end = k + 1;
        if cur >= 0.0 {
            cur += x;
        } else {
            cur = x;
            cur_start = end;
        }
        if cur > best.0 || (cur == best.0 && cur_start < best.1) {
            best = (cur, cur_start, end);
        }
    }
    Ok(best)
}

/// Flat cell layout shared by the DP and its neighbourhood iteration.
#[derive(Clone, Copy)]
pub(crate) struct Grid {
    pub ns: usize,
    pub nsh: usize,
    pub w: usize,
    pub h: usize,
}

impl Grid {
    pub fn of(m: &ScoreVolume) -> Self {
        let [ns, nsh, w, h, _] = m.dims();
        Self { ns, nsh, w, h }
    }

    pub fn cells(&self) -> usize {
        self.ns * self.nsh * self.w * self.h
    }

    #[inline]
    pub fn flat(&self, sc: usize, sh: usize, i: usize, j: usize) -> usize {
        ((sc * self.nsh + sh) * self.w + i) * self.h + j
    }

    #[inline]
    pub fn unflat(&self, u: usize) -> (usize, usize, usize, usize) {
        let j = u % self.h;
        let r = u / self.h;
        let i = r % self.w;
        let r = r / self.w;
        (r / self.nsh, r % self.nsh, i, j)
    }

    /// Calls `f` on every neighbour of `u` in ascending flat order.
    #[inline]
    pub fn for_each_neighbor(&self, u: usize, cfg: &SubpathConfig, mut f: impl FnMut(usize)) {
        let (sc, sh, i, j) = self.unflat(u);
        let span = |c: usize, r: usize, n: usize| c.saturating_sub(r)..=(c + r).min(n - 1);
        for vs in span(sc, cfg.r_scale, self.ns) {
            for vh in span(sh, cfg.r_shape, self.nsh) {
                for vi in span(i, cfg.k_move, self.w) {
                    for vj in span(j, cfg.k_move, self.h) {
                        f(self.flat(vs, vh, vi, vj));
                    }
                }
            }
        }
    }
}

/// Exact maximum-sum tube with canonical tie-breaking.
pub fn max_subpath(m: &ScoreVolume, cfg: &SubpathConfig) -> Result<(f64, TubePath)> {
    if m.rank() != 3 && m.rank() != 5 {
        return Err(Error::Dimensionality(m.rank()));
    }
    let grid = Grid::of(m);
    let n = grid.cells();
    let nt = m.frames();
    if n >= NONE as usize {
        return Err(Error::TooLarge(format!("{n} cells per frame")));
    }

    // Backpointers for every frame; scores, start frames and ranks for two frames.
    let mut prev = vec![NONE; n * nt];
    let mut score: Vec<f64> = (0..n).map(|u| m.cell(u, 0)).collect();
    let mut start = vec![0u32; n];
    let mut rank: Vec<u32> = (0..n as u32).collect();
    let mut next_score = vec![0.0; n];
    let mut next_start = vec![0u32; n];
    let mut next_rank = vec![0u32; n];
    let mut keys: Vec<(u32, u32, u32)> = Vec::with_capacity(n);

    // (score, t0, t1, rank) of the incumbent; rank compares within one frame only.
    let mut best = (f64::NEG_INFINITY, 0u32, 0usize, 0u32, 0usize);
    for u in 0..n {
        consider(&mut best, score[u], 0, 0, rank[u], u);
    }

    for t in 1..nt {
        keys.clear();
        for u in 0..n {
            let mut arg = NONE as usize;
            let mut arg_score = f64::NEG_INFINITY;
            grid.for_each_neighbor(u, cfg, |v| {
                let s = score[v];
                if s > arg_score || (s == arg_score && rank[v] < rank[arg]) {
                    arg = v;
                    arg_score = s;
                }
            });
            let here = m.cell(u, t);
            // Extending through a zero-sum prefix keeps the score and moves t0 earlier.
            if arg_score >= 0.0 {
                next_score[u] = arg_score + here;
                next_start[u] = start[arg];
                prev[t * n + u] = arg as u32;
                keys.push((start[arg], rank[arg], u as u32));
            } else {
                next_score[u] = here;
                next_start[u] = t as u32;
                keys.push((t as u32, 0, u as u32));
            }
        }
        keys.sort_unstable();
        for (r, &(_, _, u)) in keys.iter().enumerate() {
            next_rank[u as usize] = r as u32;
        }
        std::mem::swap(&mut score, &mut next_score);
        std::mem::swap(&mut start, &mut next_start);
        std::mem::swap(&mut rank, &mut next_rank);
        for u in 0..n {
            consider(&mut best, score[u], start[u], t, rank[u], u);
        }
    }

    let (best_score, _, t_end, _, mut u) = best;
    let mut elements = Vec::new();
    let mut t = t_end;
    loop {
        let (sc, sh, i, j) = grid.unflat(u);
        elements.push(PathElement::new(sc, sh, i, j, t));
        let p = prev[t * n + u];
        if p == NONE {
            break;
        }
        u = p as usize;
        t -= 1;
    }
    elements.reverse();
    Ok((best_score, TubePath::new(elements)?))
}

#[inline]
fn consider(
    best: &mut (f64, u32, usize, u32, usize),
    s: f64,
    t0: u32,
    t1: usize,
    rank: u32,
    u: usize,
) {
    let better = s > best.0
        || (s == best.0
            && (t0 < best.1 || (t0 == best.1 && (t1 < best.2 || (t1 == best.2 && rank < best.3)))));
    if better {
        *best = (s, t0, t1, rank, u);
    }
}

/// Minimum-sum tube: the maximum of the negated volume, with the score negated back.
pub fn min_subpath(m: &ScoreVolume, cfg: &SubpathConfig) -> Result<(f64, TubePath)> {
    let (s, p) = max_subpath(&m.neg(), cfg)?;
    Ok((-s, p))
}

/// 0/1 volume marking the path's elements, equal to the derivative of the
/// path sum with respect to the volume.
pub fn path_indicator(m: &ScoreVolume, path: &TubePath) -> Result<ScoreVolume> {
    let mut out = ScoreVolume::zeros_like(m);
    for e in path.elements() {
        if !m.contains(e) {
            return Err(Error::InvalidPath(format!("{e:?} outside {:?}", m.dims())));
        }
        out.set(e.scale, e.shape, e.i, e.j, e.t, 1.0);
    }
    Ok(out)
}
