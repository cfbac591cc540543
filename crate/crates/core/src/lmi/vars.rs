use crate::linalg::Matrix;

/// Allocates consecutive slots of the decision vector.
#[derive(Debug, Clone, Default)]
pub struct VarSpace {
    len: usize,
}

impl VarSpace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn sym(&mut self, n: usize) -> SymVar {
        let v = SymVar { offset: self.len, n };
        self.len += v.len();
        v
    }

    pub fn rect(&mut self, rows: usize, cols: usize) -> RectVar {
        let v = RectVar { offset: self.len, rows, cols };
        self.len += rows * cols;
        v
    }

    pub fn scalar(&mut self) -> usize {
        self.len += 1;
        self.len - 1
    }
}

/// Symmetric `n × n` matrix variable packed as its upper triangle,
/// row by row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SymVar {
    pub offset: usize,
    pub n: usize,
}

impl SymVar {
    pub fn len(&self) -> usize {
        self.n * (self.n + 1) / 2
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// `(variable index, row, col)` with `row <= col`.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        let n = self.n;
        (0..n).flat_map(move |p| (p..n).map(move |q| (p, q))).enumerate().map(|(k, (p, q))| (self.offset + k, p, q))
    }

    /// Basis matrix of each packed entry: `E_pq + E_qp` off the diagonal.
    pub fn bases(&self) -> impl Iterator<Item = (usize, Matrix)> + '_ {
        let n = self.n;
        self.entries().map(move |(var, p, q)| {
            let mut e = Matrix::zeros(n, n);
            e[(p, q)] = 1.0;
            e[(q, p)] = 1.0;
            (var, e)
        })
    }

    pub fn unpack(&self, z: &[f64]) -> Matrix {
        let mut m = Matrix::zeros(self.n, self.n);
        for (var, p, q) in self.entries() {
            m[(p, q)] = z[var];
            m[(q, p)] = z[var];
        }
        m
    }

    /// Writes the upper triangle of `m` into `z`.
    pub fn pack(&self, m: &Matrix, z: &mut [f64]) {
        for (var, p, q) in self.entries() {
            z[var] = m[(p, q)];
        }
    }
}

/// Rectangular matrix variable packed row-major.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RectVar {
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

impl RectVar {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn bases(&self) -> impl Iterator<Item = (usize, Matrix)> + '_ {
        let (r, c) = (self.rows, self.cols);
        (0..r * c).map(move |k| {
            let mut e = Matrix::zeros(r, c);
            e.as_mut_slice()[k] = 1.0;
            (self.offset + k, e)
        })
    }

    pub fn unpack(&self, z: &[f64]) -> Matrix {
        Matrix::new(self.rows, self.cols, z[self.offset..self.offset + self.len()].to_vec())
            .expect("rect variable length")
    }

    pub fn pack(&self, m: &Matrix, z: &mut [f64]) {
        z[self.offset..self.offset + self.len()].copy_from_slice(m.as_slice());
    }
}
