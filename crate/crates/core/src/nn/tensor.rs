//! Dense row-major f64 tensors and the handful of linear-algebra kernels the
//! layers are built on.

use crate::error::{Error, Result};

/// A dense tensor: a shape plus row-major 64-bit float storage.
///
/// The last axis is the feature axis; operations that work on matrices treat
/// every leading axis as one flattened row dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Tensor {
        let n = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; n],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Tensor> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::Shape(format!(
                "cannot view {} values as shape {:?}",
                data.len(),
                shape
            )));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Number of rows when the tensor is viewed as a matrix (all leading axes
    /// flattened); 1 for a rank-0/rank-1 tensor viewed as a single row.
    pub fn rows(&self) -> usize {
        if self.shape.len() <= 1 {
            1
        } else {
            self.shape[..self.shape.len() - 1].iter().product()
        }
    }

    /// Size of the last axis.
    pub fn cols(&self) -> usize {
        *self.shape.last().unwrap_or(&0)
    }

    /// Same storage under a new shape with identical element count.
    pub fn reshaped(mut self, shape: &[usize]) -> Result<Tensor> {
        let n: usize = shape.iter().product();
        if n != self.data.len() {
            return Err(Error::Shape(format!(
                "cannot reshape {:?} into {:?}",
                self.shape, shape
            )));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    pub fn ensure_finite(&self, what: &str) -> Result<()> {
        if self.data.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite(what.to_string()))
        }
    }

    /// The two dimensions of a matrix view, flattening leading axes.
    pub fn mat_dims(&self) -> (usize, usize) {
        (self.rows(), self.cols())
    }
}

/// C = alpha * op(A) x op(B) + beta * C over matrix views of the tensors.
#[allow(clippy::too_many_arguments)]
pub fn gemm_into(
    c: &mut Tensor,
    alpha: f64,
    a: &Tensor,
    a_t: bool,
    b: &Tensor,
    b_t: bool,
    beta: f64,
) -> Result<()> {
    let (ar, ac) = a.mat_dims();
    let (br, bc) = b.mat_dims();
    let (m, k) = if a_t { (ac, ar) } else { (ar, ac) };
    let (kb, n) = if b_t { (bc, br) } else { (br, bc) };
    let (cr, cc) = c.mat_dims();
    if k != kb || m != cr || n != cc {
        return Err(Error::Shape(format!(
            "gemm: ({m}x{k}) x ({kb}x{n}) -> ({cr}x{cc})"
        )));
    }
    if m == 0 || n == 0 || k == 0 {
        return Ok(());
    }
    // Row-major strides; a transpose is just a stride swap.
    let (rsa, csa) = if a_t { (1, ac as isize) } else { (ac as isize, 1) };
    let (rsb, csb) = if b_t { (1, bc as isize) } else { (bc as isize, 1) };
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.data.as_ptr(),
            rsa,
            csa,
            b.data.as_ptr(),
            rsb,
            csb,
            beta,
            c.data.as_mut_ptr(),
            cc as isize,
            1,
        );
    }
    Ok(())
}

/// op(A) x op(B) into a freshly allocated tensor.
pub fn matmul(a: &Tensor, a_t: bool, b: &Tensor, b_t: bool) -> Result<Tensor> {
    let (ar, ac) = a.mat_dims();
    let (br, bc) = b.mat_dims();
    let m = if a_t { ac } else { ar };
    let n = if b_t { br } else { bc };
    let mut c = Tensor::zeros(&[m, n]);
    gemm_into(&mut c, 1.0, a, a_t, b, b_t, 0.0)?;
    Ok(c)
}

/// Concatenate matrices along the feature (last) axis.
pub fn concat_cols(parts: &[&Tensor]) -> Result<Tensor> {
    let rows = parts.first().map(|t| t.rows()).unwrap_or(0);
    if parts.iter().any(|t| t.rows() != rows) {
        return Err(Error::Shape("concat_cols: row counts differ".into()));
    }
    let widths: Vec<usize> = parts.iter().map(|t| t.cols()).collect();
    let total: usize = widths.iter().sum();
    let mut out = Tensor::zeros(&[rows, total]);
    let mut offset = 0;
    for (part, w) in parts.iter().zip(&widths) {
        for r in 0..rows {
            out.data[r * total + offset..r * total + offset + w]
                .copy_from_slice(&part.data[r * w..(r + 1) * w]);
        }
        offset += w;
    }
    Ok(out)
}

/// Split a matrix into column blocks of the given widths.
pub fn split_cols(t: &Tensor, widths: &[usize]) -> Result<Vec<Tensor>> {
    let rows = t.rows();
    let cols = t.cols();
    if widths.iter().sum::<usize>() != cols {
        return Err(Error::Shape(format!(
            "split_cols: widths {:?} do not cover {} columns",
            widths, cols
        )));
    }
    let mut parts = Vec::with_capacity(widths.len());
    let mut offset = 0;
    for &w in widths {
        let mut out = Tensor::zeros(&[rows, w]);
        for r in 0..rows {
            out.data[r * w..(r + 1) * w]
                .copy_from_slice(&t.data[r * cols + offset..r * cols + offset + w]);
        }
        offset += w;
        parts.push(out);
    }
    Ok(parts)
}

/// Copy the selected rows of a matrix view into a new matrix.
pub fn gather_rows(src: &Tensor, idx: &[u32]) -> Tensor {
    let cols = src.cols();
    let mut out = Tensor::zeros(&[idx.len(), cols]);
    for (r, &i) in idx.iter().enumerate() {
        let i = i as usize;
        out.data[r * cols..(r + 1) * cols].copy_from_slice(&src.data[i * cols..(i + 1) * cols]);
    }
    out
}

/// dst[idx[r], :] += src[r, :] in ascending row order.
pub fn scatter_add_rows(dst: &mut Tensor, idx: &[u32], src: &Tensor) -> Result<()> {
    let cols = dst.cols();
    if src.cols() != cols || src.rows() != idx.len() {
        return Err(Error::Shape("scatter_add_rows: shape mismatch".into()));
    }
    for (r, &i) in idx.iter().enumerate() {
        let i = i as usize;
        let row = &src.data[r * cols..(r + 1) * cols];
        let out = &mut dst.data[i * cols..(i + 1) * cols];
        for (o, v) in out.iter_mut().zip(row) {
            *o += v;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_small() {
        let a = Tensor::from_vec(&[2, 3], vec![1., 2., 3., 4., 5., 6.]).unwrap();
        let b = Tensor::from_vec(&[3, 2], vec![7., 8., 9., 10., 11., 12.]).unwrap();
        let c = matmul(&a, false, &b, false).unwrap();
        assert_eq!(c.data(), &[58., 64., 139., 154.]);
    }

    #[test]
    fn matmul_transposed_views() {
        let a = Tensor::from_vec(&[3, 2], vec![1., 4., 2., 5., 3., 6.]).unwrap(); // aᵀ is 2x3
        let b = Tensor::from_vec(&[3, 2], vec![7., 8., 9., 10., 11., 12.]).unwrap();
        let c = matmul(&a, true, &b, false).unwrap();
        assert_eq!(c.data(), &[58., 64., 139., 154.]);

        let a2 = Tensor::from_vec(&[2, 3], vec![1., 2., 3., 4., 5., 6.]).unwrap();
        let b2 = Tensor::from_vec(&[2, 3], vec![7., 9., 11., 8., 10., 12.]).unwrap(); // b2ᵀ is 3x2
        let c2 = matmul(&a2, false, &b2, true).unwrap();
        assert_eq!(c2.data(), &[58., 64., 139., 154.]);
    }

    #[test]
    fn concat_split_roundtrip() {
        let a = Tensor::from_vec(&[2, 2], vec![1., 2., 3., 4.]).unwrap();
        let b = Tensor::from_vec(&[2, 1], vec![5., 6.]).unwrap();
        let c = concat_cols(&[&a, &b]).unwrap();
        assert_eq!(c.shape(), &[2, 3]);
        assert_eq!(c.data(), &[1., 2., 5., 3., 4., 6.]);
        let parts = split_cols(&c, &[2, 1]).unwrap();
        assert_eq!(parts[0], a);
        assert_eq!(parts[1], b);
    }

    #[test]
    fn gather_scatter() {
        let src = Tensor::from_vec(&[3, 2], vec![1., 2., 3., 4., 5., 6.]).unwrap();
        let g = gather_rows(&src, &[2, 0, 2]);
        assert_eq!(g.data(), &[5., 6., 1., 2., 5., 6.]);
        let mut dst = Tensor::zeros(&[3, 2]);
        scatter_add_rows(&mut dst, &[2, 0, 2], &g).unwrap();
        assert_eq!(dst.data(), &[1., 2., 0., 0., 10., 12.]);
    }

    #[test]
    fn finite_check() {
        let mut t = Tensor::zeros(&[2]);
        assert!(t.ensure_finite("x").is_ok());
        t.data_mut()[1] = f64::NAN;
        assert!(matches!(t.ensure_finite("x"), Err(Error::NonFinite(_))));
    }

    #[test]
    fn shape_errors() {
        assert!(Tensor::from_vec(&[2, 2], vec![1.0]).is_err());
        let a = Tensor::zeros(&[2, 3]);
        let b = Tensor::zeros(&[2, 3]);
        assert!(matmul(&a, false, &b, false).is_err());
    }
}
