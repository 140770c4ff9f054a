//! Binary morphology with a 3×3 square element on small dense grids.
//! Neighbours outside the grid are ignored.

pub(crate) struct Grid {
    pub rows: usize,
    pub cols: usize,
    pub cells: Vec<bool>,
}

impl Grid {
    pub fn new(rows: usize, cols: usize) -> Self {
        Grid { rows, cols, cells: vec![false; rows * cols] }
    }

    pub fn get(&self, r: usize, c: usize) -> bool {
        self.cells[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: bool) {
        self.cells[r * self.cols + c] = v;
    }

    fn neighbourhood(&self, r: usize, c: usize) -> impl Iterator<Item = bool> + '_ {
        let rs = r.saturating_sub(1)..=(r + 1).min(self.rows - 1);
        rs.flat_map(move |rr| {
            let cs = c.saturating_sub(1)..=(c + 1).min(self.cols - 1);
            cs.map(move |cc| self.get(rr, cc))
        })
    }

    fn map(&self, f: impl Fn(&Self, usize, usize) -> bool) -> Grid {
        let mut out = Grid::new(self.rows, self.cols);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.set(r, c, f(self, r, c));
            }
        }
        out
    }

    pub fn erode(&self) -> Grid {
        self.map(|g, r, c| g.neighbourhood(r, c).all(|v| v))
    }

    pub fn dilate(&self) -> Grid {
        self.map(|g, r, c| g.neighbourhood(r, c).any(|v| v))
    }

    pub fn open(&self) -> Grid {
        self.erode().dilate()
    }

    pub fn close(&self) -> Grid {
        self.dilate().erode()
    }

    pub fn is_empty(&self) -> bool {
        !self.cells.iter().any(|&v| v)
    }
}
