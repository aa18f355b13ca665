use nalgebra::{DMatrix, DVector};

/// Read access to a symmetric `n × n` matrix that may be stored densely or
/// evaluated on demand.
pub trait MatrixSource {
    fn n(&self) -> usize;

    fn entry(&self, i: usize, j: usize) -> f64;

    fn diag(&self, i: usize) -> f64 {
        self.entry(i, i)
    }

    fn column(&self, j: usize) -> DVector<f64> {
        DVector::from_fn(self.n(), |i, _| self.entry(i, j))
    }

    fn block(&self, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(rows.len(), cols.len(), |a, b| self.entry(rows[a], cols[b]))
    }

    fn to_dense(&self) -> DMatrix<f64> {
        let n = self.n();
        DMatrix::from_fn(n, n, |i, j| self.entry(i, j))
    }
}

impl MatrixSource for DMatrix<f64> {
    fn n(&self) -> usize {
        self.nrows()
    }

    fn entry(&self, i: usize, j: usize) -> f64 {
        self[(i, j)]
    }

    fn column(&self, j: usize) -> DVector<f64> {
        nalgebra::Matrix::column(self, j).into_owned()
    }

    fn to_dense(&self) -> DMatrix<f64> {
        self.clone()
    }
}

impl<T: MatrixSource + ?Sized> MatrixSource for &T {
    fn n(&self) -> usize {
        (**self).n()
    }

    fn entry(&self, i: usize, j: usize) -> f64 {
        (**self).entry(i, j)
    }

    fn diag(&self, i: usize) -> f64 {
        (**self).diag(i)
    }

    fn column(&self, j: usize) -> DVector<f64> {
        (**self).column(j)
    }

    fn to_dense(&self) -> DMatrix<f64> {
        (**self).to_dense()
    }
}
