/// Values indexed by inventory level and time index, stored time-major so a
/// single time slice is contiguous.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelTable {
    q_lo: i32,
    q_hi: i32,
    n_times: usize,
    data: Vec<f64>,
}

impl LevelTable {
    pub fn filled(q_lo: i32, q_hi: i32, n_times: usize, value: f64) -> Self {
        assert!(q_lo <= q_hi, "empty level range {q_lo}..={q_hi}");
        let width = (q_hi - q_lo + 1) as usize;
        Self {
            q_lo,
            q_hi,
            n_times,
            data: vec![value; width * n_times],
        }
    }

    pub fn q_lo(&self) -> i32 {
        self.q_lo
    }

    pub fn q_hi(&self) -> i32 {
        self.q_hi
    }

    pub fn levels(&self) -> std::ops::RangeInclusive<i32> {
        self.q_lo..=self.q_hi
    }

    pub fn n_times(&self) -> usize {
        self.n_times
    }

    pub fn width(&self) -> usize {
        (self.q_hi - self.q_lo + 1) as usize
    }

    #[inline]
    fn idx(&self, q: i32, j: usize) -> usize {
        debug_assert!(q >= self.q_lo && q <= self.q_hi, "level {q} out of range");
        debug_assert!(j < self.n_times, "time index {j} out of range");
        j * self.width() + (q - self.q_lo) as usize
    }

    #[inline]
    pub fn get(&self, q: i32, j: usize) -> f64 {
        self.data[self.idx(q, j)]
    }

    #[inline]
    pub fn set(&mut self, q: i32, j: usize, v: f64) {
        let i = self.idx(q, j);
        self.data[i] = v;
    }

    /// All levels at time index `j`, ordered from `q_lo` upwards.
    pub fn slice(&self, j: usize) -> &[f64] {
        let w = self.width();
        &self.data[j * w..(j + 1) * w]
    }

    pub fn slice_mut(&mut self, j: usize) -> &mut [f64] {
        let w = self.width();
        &mut self.data[j * w..(j + 1) * w]
    }

    /// Path of level `q` over time.
    pub fn row(&self, q: i32) -> Vec<f64> {
        (0..self.n_times).map(|j| self.get(q, j)).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.data.iter().copied()
    }

    pub fn max_abs_diff(&self, other: &LevelTable) -> f64 {
        assert_eq!(
            (self.q_lo, self.q_hi, self.n_times),
            (other.q_lo, other.q_hi, other.n_times),
            "shape mismatch"
        );
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}
