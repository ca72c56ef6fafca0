//! Context windows: for every token, the horizontal and vertical neighbors
//! that feed the context networks.
//!
//! The horizontal window takes the tokens left and right of the target on its
//! own line. The vertical window takes, from each surrounding line, the one
//! token whose rightmost character sits closest to the target's rightmost
//! character. Missing neighbors become zero-padding slots.

use crate::error::{Error, Result};
use crate::grid::{CharCodec, TokenGrid};
use crate::nn::Tensor;

/// Window and encoding geometry for sample construction.
#[derive(Clone, Copy, Debug)]
pub struct WindowConfig {
    /// Horizontal window size, including the target slot; odd.
    pub h_w: usize,
    /// Vertical window size, including the target line; odd.
    pub v_w: usize,
    /// Maximum token length for one-hot encoding.
    pub l_t: usize,
}

/// One training or inference example. Encodings are stored compactly as
/// per-position character indices; densify with [`onehot_into`] or
/// [`ContextSample::target_onehot`]. `None` slots are the zero-matrix
/// padding, which is distinguishable from an encoded all-space token.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ContextSample {
    pub target: Box<[u8]>,
    pub h_ctx: Vec<Option<Box<[u8]>>>,
    pub v_ctx: Vec<Option<Box<[u8]>>>,
    pub position: (usize, usize),
}

impl ContextSample {
    pub fn target_onehot(&self, d: usize) -> Tensor {
        let mut m = Tensor::zeros(&[self.target.len(), d]);
        onehot_into(Some(&self.target), d, m.data_mut());
        m
    }
}

/// Write the one-hot expansion of a compact encoding into `out` (length
/// `l_t * d`); `None` writes the all-zero padding matrix.
pub fn onehot_into(encoding: Option<&[u8]>, d: usize, out: &mut [f64]) {
    out.fill(0.0);
    if let Some(idx) = encoding {
        for (row, &i) in idx.iter().enumerate() {
            out[row * d + i as usize] = 1.0;
        }
    }
}

fn check_window(w: usize, what: &str) -> Result<()> {
    if w == 0 || w % 2 == 0 {
        return Err(Error::Argument(format!(
            "{what} window must be odd and at least 1, got {w}"
        )));
    }
    Ok(())
}

/// The `h_w - 1` positions flanking the target on its line, left block first,
/// `None` where the line runs out.
pub fn horizontal_context(
    grid: &TokenGrid,
    pos: (usize, usize),
    h_w: usize,
) -> Result<Vec<Option<(usize, usize)>>> {
    check_window(h_w, "horizontal")?;
    let (line, idx) = pos;
    grid.token(line, idx)?;
    let half = h_w / 2;
    let line_len = grid.lines()[line].len();
    let mut out = Vec::with_capacity(h_w - 1);
    for offset in (1..=half).rev() {
        out.push(idx.checked_sub(offset).map(|i| (line, i)));
    }
    for offset in 1..=half {
        let i = idx + offset;
        out.push(if i < line_len { Some((line, i)) } else { None });
    }
    Ok(out)
}

/// The `v_w - 1` tokens chosen from surrounding lines, nearest lines first
/// and above before below at equal distance. On each line the token whose
/// `end_col` is closest to the target's wins; ties go to the smaller
/// `end_col`. Lines without tokens (or beyond the document) give `None`.
pub fn vertical_context(
    grid: &TokenGrid,
    pos: (usize, usize),
    v_w: usize,
) -> Result<Vec<Option<(usize, usize)>>> {
    check_window(v_w, "vertical")?;
    let (line, idx) = pos;
    let target_end = grid.token(line, idx)?.end_col;
    let half = v_w / 2;
    let mut out = Vec::with_capacity(v_w - 1);
    for dist in 1..=half {
        for dir in [-1isize, 1] {
            let l = line as isize + dir * dist as isize;
            if l < 0 || l as usize >= grid.num_lines() {
                out.push(None);
                continue;
            }
            let l = l as usize;
            let mut best: Option<(usize, usize)> = None; // (token idx, end_col)
            for (ti, tok) in grid.lines()[l].iter().enumerate() {
                let gap = tok.end_col.abs_diff(target_end);
                match best {
                    None => best = Some((ti, tok.end_col)),
                    Some((_, bend)) => {
                        let bgap = bend.abs_diff(target_end);
                        if gap < bgap || (gap == bgap && tok.end_col < bend) {
                            best = Some((ti, tok.end_col));
                        }
                    }
                }
            }
            out.push(best.map(|(ti, _)| (l, ti)));
        }
    }
    Ok(out)
}

/// Build exactly one sample per token in the grid, in document order.
pub fn build_samples(
    grid: &TokenGrid,
    codec: &CharCodec,
    cfg: &WindowConfig,
) -> Result<Vec<ContextSample>> {
    check_window(cfg.h_w, "horizontal")?;
    check_window(cfg.v_w, "vertical")?;
    if cfg.l_t == 0 {
        return Err(Error::Argument("l_t must be at least 1".into()));
    }
    let encode = |pos: Option<(usize, usize)>| -> Option<Box<[u8]>> {
        pos.map(|(l, t)| {
            let tok = &grid.lines()[l][t];
            codec.encode_indices(&tok.text, cfg.l_t).into_boxed_slice()
        })
    };
    let mut samples = Vec::with_capacity(grid.num_tokens());
    for (line, idx) in grid.positions() {
        let h = horizontal_context(grid, (line, idx), cfg.h_w)?;
        let v = vertical_context(grid, (line, idx), cfg.v_w)?;
        samples.push(ContextSample {
            target: encode(Some((line, idx))).unwrap(),
            h_ctx: h.into_iter().map(encode).collect(),
            v_ctx: v.into_iter().map(encode).collect(),
            position: (line, idx),
        });
    }
    Ok(samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::tokenize_document;

    #[test]
    fn horizontal_center_of_three() {
        let grid = tokenize_document("aa bb cc");
        let ctx = horizontal_context(&grid, (0, 1), 5).unwrap();
        assert_eq!(ctx, vec![None, Some((0, 0)), Some((0, 2)), None]);
    }

    #[test]
    fn horizontal_single_token_line() {
        let grid = tokenize_document("only");
        let ctx = horizontal_context(&grid, (0, 0), 5).unwrap();
        assert_eq!(ctx, vec![None, None, None, None]);
    }

    #[test]
    fn horizontal_wide_window_on_invoice_line() {
        let grid = tokenize_document("f1 f2 f3 f4 f5 f6 f7 f8");
        let ctx = horizontal_context(&grid, (0, 0), 21).unwrap();
        assert_eq!(ctx.len(), 20);
        let real: Vec<_> = ctx.iter().filter(|s| s.is_some()).collect();
        assert_eq!(real.len(), 7); // 7 right neighbors
        assert_eq!(ctx.iter().filter(|s| s.is_none()).count(), 13);
        // the 10 left slots are all padding
        assert!(ctx[..10].iter().all(|s| s.is_none()));
    }

    #[test]
    fn horizontal_even_window_rejected() {
        let grid = tokenize_document("a b");
        assert!(horizontal_context(&grid, (0, 0), 4).is_err());
    }

    #[test]
    fn invalid_position_errors() {
        let grid = tokenize_document("a b");
        assert!(horizontal_context(&grid, (0, 5), 3).is_err());
        assert!(vertical_context(&grid, (2, 0), 3).is_err());
    }

    #[test]
    fn vertical_aligned_lines() {
        let grid = tokenize_document("aa bb\naa bb\naa bb");
        let ctx = vertical_context(&grid, (1, 1), 3).unwrap();
        // nearest lines first, above before below
        assert_eq!(ctx, vec![Some((0, 1)), Some((2, 1))]);
    }

    #[test]
    fn vertical_top_line_pads_above() {
        let grid = tokenize_document("aa\naa\naa");
        let ctx = vertical_context(&grid, (0, 0), 5).unwrap();
        // order: line-1, line+1, line-2, line+2
        assert_eq!(ctx, vec![None, Some((1, 0)), None, Some((2, 0))]);
    }

    #[test]
    fn vertical_closest_end_col_wins() {
        // line above has tokens ending at cols 5 and 9; target ends at col 6
        let grid = tokenize_document("abcdef  hj\n      x");
        let above = &grid.lines()[0];
        assert_eq!((above[0].end_col, above[1].end_col), (5, 9));
        assert_eq!(grid.lines()[1][0].end_col, 6);
        let ctx = vertical_context(&grid, (1, 0), 3).unwrap();
        assert_eq!(ctx[0], Some((0, 0))); // |5-6| beats |9-6|
    }

    #[test]
    fn vertical_tie_takes_smaller_end_col() {
        // candidates end at cols 5 and 9, target ends at col 7: an exact tie
        let grid = tokenize_document("abcdef  hj\n      xy");
        assert_eq!(grid.lines()[1][0].end_col, 7);
        let ctx = vertical_context(&grid, (1, 0), 3).unwrap();
        assert_eq!(ctx[0], Some((0, 0))); // smaller end_col wins the tie
    }

    #[test]
    fn vertical_empty_line_is_padding() {
        let grid = tokenize_document("aa\n\naa");
        // line 1 has no tokens, so both neighbors of line 0 are padding
        let ctx = vertical_context(&grid, (0, 0), 3).unwrap();
        assert_eq!(ctx, vec![None, None]);
        // with v_w = 5 the second line above/below comes into range
        let ctx = vertical_context(&grid, (0, 0), 5).unwrap();
        assert_eq!(ctx, vec![None, None, None, Some((2, 0))]);
    }

    #[test]
    fn build_samples_counts_and_slots() {
        let codec = CharCodec::default();
        let grid = tokenize_document("aa bb\ncc dd");
        let cfg = WindowConfig { h_w: 3, v_w: 3, l_t: 4 };
        let samples = build_samples(&grid, &codec, &cfg).unwrap();
        assert_eq!(samples.len(), grid.num_tokens());
        for s in &samples {
            assert_eq!(s.h_ctx.len(), 2);
            assert_eq!(s.v_ctx.len(), 2);
            assert_eq!(s.h_ctx.iter().filter(|c| c.is_some()).count(), 1);
            assert_eq!(s.v_ctx.iter().filter(|c| c.is_some()).count(), 1);
            // target never appears in its own context slots
            for slot in s.h_ctx.iter().chain(&s.v_ctx).flatten() {
                assert_ne!(&**slot, &*s.target);
            }
        }
    }

    #[test]
    fn build_samples_empty_grid() {
        let codec = CharCodec::default();
        let grid = tokenize_document("");
        let cfg = WindowConfig { h_w: 5, v_w: 3, l_t: 4 };
        assert!(build_samples(&grid, &codec, &cfg).unwrap().is_empty());
    }

    #[test]
    fn translation_invariance() {
        let codec = CharCodec::default();
        let text = "a bb  ccc\n dd e\nfff  g hh";
        let shifted: String = text
            .lines()
            .map(|l| format!("    {l}"))
            .collect::<Vec<_>>()
            .join("\n");
        let cfg = WindowConfig { h_w: 5, v_w: 5, l_t: 6 };
        let a = build_samples(&tokenize_document(text), &codec, &cfg).unwrap();
        let b = build_samples(&tokenize_document(&shifted), &codec, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn padding_distinguishable_from_space_token() {
        let d = 78;
        let codec = CharCodec::default();
        let enc = codec.encode_indices("x", 3);
        let mut dense_tok = vec![0.0; 3 * d];
        onehot_into(Some(&enc), d, &mut dense_tok);
        let mut dense_pad = vec![0.0; 3 * d];
        onehot_into(None, d, &mut dense_pad);
        assert!(dense_pad.iter().all(|v| *v == 0.0));
        assert!(dense_tok.iter().any(|v| *v != 0.0));
    }
}
