/// Dense row-major feature matrix handed to models.
///
/// Categorical features are carried as their level code.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    n_cols: usize,
    data: Vec<f64>,
}

impl Frame {
    pub fn new(n_cols: usize, data: Vec<f64>) -> Self {
        assert!(n_cols == 0 || data.len() % n_cols == 0, "ragged frame");
        Frame { n_cols, data }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let n_cols = rows.first().map(Vec::len).unwrap_or(0);
        let mut data = Vec::with_capacity(rows.len() * n_cols);
        for r in rows {
            assert_eq!(r.len(), n_cols, "ragged frame");
            data.extend_from_slice(r);
        }
        Frame { n_cols, data }
    }

    pub fn n_rows(&self) -> usize {
        if self.n_cols == 0 {
            0
        } else {
            self.data.len() / self.n_cols
        }
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.n_cols.max(1))
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n_cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n_cols + j] = v;
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n_rows()).map(|i| self.get(i, j)).collect()
    }

    pub fn set_column(&mut self, j: usize, values: &[f64]) {
        for (i, v) in values.iter().enumerate() {
            self.set(i, j, *v);
        }
    }

    pub fn fill_column(&mut self, j: usize, v: f64) {
        for i in 0..self.n_rows() {
            self.set(i, j, v);
        }
    }

    pub fn select_rows(&self, rows: &[usize]) -> Frame {
        let mut data = Vec::with_capacity(rows.len() * self.n_cols);
        for &r in rows {
            data.extend_from_slice(self.row(r));
        }
        Frame::new(self.n_cols, data)
    }
}
