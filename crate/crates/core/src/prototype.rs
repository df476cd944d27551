//! The prototype matrix: one categorical distribution over the layer library
//! per network position.
//!
//! A prototype is a value type. Every operator returns a new instance, so a
//! prototype can be shared freely between threads or shipped to remote
//! evaluators.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use rand::Rng;

use crate::error::{Error, Result};
use crate::library::LayerLibrary;
use crate::scalar::Scalar;

/// Probability caps `[p_min, p_max]`, with `p_min = (1 - p_max) / (|L| - 1)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CapConfig<T> {
    p_max: T,
    p_min: T,
}

impl<T: Scalar> CapConfig<T> {
    /// Derives the lower cap from `p_max` for a library of `library_size`
    /// entries. Requires `1/|L| < p_max < 1`.
    pub fn new(p_max: T, library_size: usize) -> Result<Self> {
        if library_size < 2 {
            return Err(Error::InvalidCap(format!("library size {library_size} is below 2")));
        }
        let size = T::of_count(library_size);
        if !(p_max > T::one() / size && p_max < T::one()) {
            return Err(Error::InvalidCap(format!(
                "p_max {p_max} must lie strictly between 1/{library_size} and 1"
            )));
        }
        let p_min = (T::one() - p_max) / (size - T::one());
        Ok(CapConfig { p_max, p_min })
    }

    pub fn p_max(&self) -> T {
        self.p_max
    }

    pub fn p_min(&self) -> T {
        self.p_min
    }
}

/// Row-stochastic `N x |L|` matrix of layer-type probabilities.
#[derive(Clone, Debug, PartialEq)]
pub struct Prototype<T> {
    probs: Vec<T>,
    n_layers: usize,
    library_size: usize,
    fresh_rows: BTreeSet<usize>,
}

impl<T: Scalar> Prototype<T> {
    /// Every entry set to `1/|L|`.
    pub fn uniform(n_layers: usize, library_size: usize) -> Result<Self> {
        if n_layers == 0 {
            return Err(Error::InvalidDimensions("prototype needs at least one row".into()));
        }
        if library_size < 2 {
            return Err(Error::InvalidDimensions(format!(
                "library size {library_size} is below 2"
            )));
        }
        let value = T::one() / T::of_count(library_size);
        Ok(Prototype {
            probs: vec![value; n_layers * library_size],
            n_layers,
            library_size,
            fresh_rows: BTreeSet::new(),
        })
    }

    /// Builds a prototype from explicit rows, validating row-stochasticity.
    pub fn from_rows(rows: Vec<Vec<T>>) -> Result<Self> {
        let n_layers = rows.len();
        if n_layers == 0 {
            return Err(Error::InvalidDimensions("prototype needs at least one row".into()));
        }
        let library_size = rows[0].len();
        if library_size < 2 {
            return Err(Error::InvalidDimensions(format!(
                "library size {library_size} is below 2"
            )));
        }
        let mut probs = Vec::with_capacity(n_layers * library_size);
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != library_size {
                return Err(Error::InvalidDimensions(format!(
                    "row {i} has {} entries, expected {library_size}",
                    row.len()
                )));
            }
            validate_row(i, &row)?;
            probs.extend(row);
        }
        Ok(Prototype {
            probs,
            n_layers,
            library_size,
            fresh_rows: BTreeSet::new(),
        })
    }

    /// A prototype whose rows are one-hot on the given layer indices.
    pub fn one_hot(layers: &[usize], library_size: usize) -> Result<Self> {
        let rows = layers
            .iter()
            .map(|&j| {
                if j >= library_size {
                    return Err(Error::InvalidDimensions(format!(
                        "layer index {j} outside library of size {library_size}"
                    )));
                }
                let mut row = vec![T::zero(); library_size];
                row[j] = T::one();
                Ok(row)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_rows(rows)
    }

    pub fn n_layers(&self) -> usize {
        self.n_layers
    }

    pub fn library_size(&self) -> usize {
        self.library_size
    }

    /// Rows appended by [`Prototype::grow`] since the last selection update.
    pub fn fresh_rows(&self) -> &BTreeSet<usize> {
        &self.fresh_rows
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.probs[i * self.library_size..(i + 1) * self.library_size]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[T]> {
        self.probs.chunks(self.library_size)
    }

    pub fn get(&self, row: usize, col: usize) -> T {
        self.probs[row * self.library_size + col]
    }

    pub fn to_rows(&self) -> Vec<Vec<T>> {
        self.rows().map(<[T]>::to_vec).collect()
    }

    /// Checks the row-stochastic invariant at the scalar's tolerance.
    pub fn validate(&self) -> Result<()> {
        self.rows().enumerate().try_for_each(|(i, row)| validate_row(i, row))
    }

    /// Draws `k` layer-index sequences. Position `i` of every sequence is an
    /// independent draw from row `i`. Draws are consumed sample by sample,
    /// row by row, so the result is a pure function of the RNG state.
    pub fn sample<R: Rng + ?Sized>(&self, k: usize, rng: &mut R) -> Vec<Vec<usize>> {
        (0..k)
            .map(|_| self.rows().map(|row| sample_row(row, rng)).collect())
            .collect()
    }

    /// Replaces every row by the empirical marginal frequencies of the
    /// selected sequences and clears the fresh-row set.
    pub fn update_from_selection(&self, selected: &[Vec<usize>]) -> Result<Self> {
        if selected.is_empty() {
            return Err(Error::EmptySelection);
        }
        let mut counts = vec![0usize; self.probs.len()];
        for (index, seq) in selected.iter().enumerate() {
            if seq.len() != self.n_layers {
                return Err(Error::LengthMismatch {
                    index,
                    expected: self.n_layers,
                    found: seq.len(),
                });
            }
            for (i, &j) in seq.iter().enumerate() {
                if j >= self.library_size {
                    return Err(Error::InvalidDimensions(format!(
                        "layer index {j} outside library of size {}",
                        self.library_size
                    )));
                }
                counts[i * self.library_size + j] += 1;
            }
        }
        let total = T::of_count(selected.len());
        Ok(Prototype {
            probs: counts.into_iter().map(|c| T::of_count(c) / total).collect(),
            n_layers: self.n_layers,
            library_size: self.library_size,
            fresh_rows: BTreeSet::new(),
        })
    }

    /// Appends `n_new_rows` uniform rows and marks them fresh.
    pub fn grow(&self, n_new_rows: usize) -> Self {
        let mut grown = self.clone();
        let value = T::one() / T::of_count(self.library_size);
        grown
            .probs
            .extend(std::iter::repeat_n(value, n_new_rows * self.library_size));
        grown.fresh_rows.extend(self.n_layers..self.n_layers + n_new_rows);
        grown.n_layers += n_new_rows;
        grown
    }

    /// Floors every row at `p_min` with proportional rescaling of the
    /// remaining entries, repeated until no entry is left below the floor.
    pub fn cap_normalize(&self, cap: &CapConfig<T>) -> Self {
        let mut capped = self.clone();
        for row in capped.probs.chunks_mut(self.library_size) {
            cap_row(row, cap.p_min());
        }
        capped
    }

    /// Complements every row and re-caps it with the same cap parameters.
    pub fn invert_full(&self, cap: &CapConfig<T>) -> Self {
        let mut inverted = self.clone();
        for row in inverted.probs.chunks_mut(self.library_size) {
            invert_row(row, cap.p_min());
        }
        inverted
    }

    /// Inverts the `floor(sqrt(N))` rows with the largest L2 norm. Equal norms
    /// are broken in favor of the lower row index.
    pub fn invert_partial(&self, cap: &CapConfig<T>) -> Self {
        let mut inverted = self.clone();
        for i in self.partial_inversion_rows() {
            let row = &mut inverted.probs[i * self.library_size..(i + 1) * self.library_size];
            invert_row(row, cap.p_min());
        }
        inverted
    }

    /// Row indices that [`Prototype::invert_partial`] transforms, in order of
    /// decreasing norm.
    pub fn partial_inversion_rows(&self) -> Vec<usize> {
        let count = isqrt(self.n_layers);
        let norms: Vec<T> = self.rows().map(l2_norm).collect();
        let mut order: Vec<usize> = (0..self.n_layers).collect();
        order.sort_by(|&a, &b| {
            norms[b]
                .partial_cmp(&norms[a])
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.cmp(&b))
        });
        order.truncate(count);
        order
    }

    pub fn row_l2_norm(&self, row: usize) -> Result<T> {
        if row >= self.n_layers {
            return Err(Error::RowOutOfRange {
                row,
                rows: self.n_layers,
            });
        }
        Ok(l2_norm(self.row(row)))
    }

    /// Mean row norm, optionally ignoring rows added since the last update.
    pub fn mean_l2_norm(&self, exclude_fresh: bool) -> Result<T> {
        let mut sum = T::zero();
        let mut count = 0usize;
        for (i, row) in self.rows().enumerate() {
            if exclude_fresh && self.fresh_rows.contains(&i) {
                continue;
            }
            sum += l2_norm(row);
            count += 1;
        }
        if count == 0 {
            return Err(Error::NoIncludableRows);
        }
        Ok(sum / T::of_count(count))
    }

    /// True when every entry is 0 or 1.
    pub fn is_fully_converged(&self) -> bool {
        let tol = T::entry_tolerance();
        self.probs
            .iter()
            .all(|&p| p.abs() <= tol || (p - T::one()).abs() <= tol)
    }

    /// Most likely layer per row; ties go to the lowest library index.
    pub fn argmax_architecture(&self) -> Vec<usize> {
        self.rows()
            .map(|row| {
                let mut best = 0;
                for (j, &p) in row.iter().enumerate().skip(1) {
                    if p > row[best] {
                        best = j;
                    }
                }
                best
            })
            .collect()
    }

    /// Serializes to the text snapshot format: a header `N |L| tokens...`
    /// followed by one line of space-separated probabilities per row.
    pub fn to_snapshot(&self, library: &LayerLibrary) -> Result<String> {
        if library.size() != self.library_size {
            return Err(Error::InvalidDimensions(format!(
                "library has {} entries, prototype has {} columns",
                library.size(),
                self.library_size
            )));
        }
        let mut out = format!("{} {}", self.n_layers, self.library_size);
        for token in library.tokens() {
            out.push(' ');
            out.push_str(&token);
        }
        out.push('\n');
        for row in self.rows() {
            let mut first = true;
            for p in row {
                if !first {
                    out.push(' ');
                }
                first = false;
                write!(out, "{p}").expect("writing to a String cannot fail");
            }
            out.push('\n');
        }
        Ok(out)
    }

    /// Parses the text snapshot format, validating dimensions and
    /// row-stochasticity.
    pub fn parse_snapshot(text: &str) -> Result<(LayerLibrary, Self)> {
        let parse_err = |message: String| Error::Parse {
            context: "prototype snapshot".into(),
            message,
        };
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| parse_err("empty snapshot".into()))?;
        let mut fields = header.split_whitespace();
        let n: usize = fields
            .next()
            .and_then(|f| f.parse().ok())
            .ok_or_else(|| parse_err("header must start with the row count".into()))?;
        let l: usize = fields
            .next()
            .and_then(|f| f.parse().ok())
            .ok_or_else(|| parse_err("header must give the library size".into()))?;
        let tokens: Vec<&str> = fields.collect();
        if tokens.len() != l {
            return Err(parse_err(format!(
                "header lists {} tokens for library size {l}",
                tokens.len()
            )));
        }
        let library = LayerLibrary::from_tokens(&tokens)?;
        let rows = lines
            .map(|line| {
                line.split_whitespace()
                    .map(|v| {
                        v.parse::<T>()
                            .map_err(|_| parse_err(format!("invalid probability `{v}`")))
                    })
                    .collect::<Result<Vec<T>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        if rows.len() != n {
            return Err(parse_err(format!("header declares {n} rows, found {}", rows.len())));
        }
        let prototype = Self::from_rows(rows)?;
        Ok((library, prototype))
    }
}

fn validate_row<T: Scalar>(i: usize, row: &[T]) -> Result<()> {
    let mut sum = T::zero();
    for &p in row {
        if !(p >= T::zero() && p <= T::one()) {
            return Err(Error::InvalidPrototype(format!("row {i} has entry {p} outside [0, 1]")));
        }
        sum += p;
    }
    if (sum - T::one()).abs() > T::row_sum_tolerance() {
        return Err(Error::InvalidPrototype(format!("row {i} sums to {sum}")));
    }
    Ok(())
}

fn sample_row<T: Scalar, R: Rng + ?Sized>(row: &[T], rng: &mut R) -> usize {
    let u = T::of(rng.random::<f64>());
    let mut cumulative = T::zero();
    let mut last_positive = 0;
    for (j, &p) in row.iter().enumerate() {
        if p > T::zero() {
            last_positive = j;
        }
        cumulative += p;
        if u < cumulative {
            return j;
        }
    }
    // Rounding can leave the cumulative sum just below `u`.
    last_positive
}

fn cap_row<T: Scalar>(row: &mut [T], p_min: T) {
    let tol = T::entry_tolerance();
    // |S| grows on every pass that does not terminate, so |L| + 1 passes suffice.
    for _ in 0..=row.len() {
        let mut sum_big = T::zero();
        let mut sum_small = T::zero();
        let mut n_small = 0usize;
        for &p in row.iter() {
            if p <= p_min {
                sum_small += p;
                n_small += 1;
            } else {
                sum_big += p;
            }
        }
        if sum_big <= T::zero() {
            return;
        }
        let scale = (sum_big + sum_small - T::of_count(n_small) * p_min) / sum_big;
        for p in row.iter_mut() {
            if *p <= p_min {
                *p = p_min;
            } else {
                *p *= scale;
            }
        }
        if row.iter().all(|&p| p >= p_min - tol) {
            return;
        }
    }
}

fn invert_row<T: Scalar>(row: &mut [T], p_min: T) {
    // Complements of a stochastic row sum to |L| - 1.
    let others = T::of_count(row.len() - 1);
    for p in row.iter_mut() {
        *p = (T::one() - *p) / others;
    }
    cap_row(row, p_min);
}

fn l2_norm<T: Scalar>(row: &[T]) -> T {
    row.iter().fold(T::zero(), |acc, &p| acc + p * p).sqrt()
}

fn isqrt(n: usize) -> usize {
    let mut r = (n as f64).sqrt() as usize;
    while r * r > n {
        r -= 1;
    }
    while (r + 1) * (r + 1) <= n {
        r += 1;
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::library::default_library;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const C3: usize = 2;
    const M2: usize = 7;

    fn cap() -> CapConfig<f64> {
        CapConfig::new(0.9, 10).unwrap()
    }

    fn row_with(entries: &[(usize, f64)]) -> Vec<f64> {
        let mut row = vec![0.0; 10];
        for &(j, p) in entries {
            row[j] = p;
        }
        row
    }

    #[test]
    fn uniform_entries() {
        let p = Prototype::<f64>::uniform(5, 10).unwrap();
        assert!(p.rows().flatten().all(|&v| v == 0.1));
        assert!(p.fresh_rows().is_empty());
        let start = Prototype::<f64>::uniform(2, 10).unwrap();
        assert_eq!((start.n_layers(), start.library_size()), (2, 10));
        let one = Prototype::<f64>::uniform(1, 10).unwrap();
        assert_abs_diff_eq!(one.row_l2_norm(0).unwrap(), 0.31623, epsilon = 1e-5);
        assert!(Prototype::<f64>::uniform(0, 10).is_err());
        assert!(Prototype::<f64>::uniform(3, 1).is_err());
    }

    #[test]
    fn sample_one_hot_and_determinism() {
        let p = Prototype::<f64>::one_hot(&[3, 3, 3], 10).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(p.sample(50, &mut rng).iter().all(|s| s == &vec![3, 3, 3]));

        let u = Prototype::<f64>::uniform(4, 10).unwrap();
        let a = u.sample(20, &mut ChaCha8Rng::seed_from_u64(9));
        let b = u.sample(20, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a, b);
    }

    #[test]
    fn sample_frequencies_match_uniform() {
        let p = Prototype::<f64>::uniform(5, 10).unwrap();
        let samples = p.sample(10_000, &mut ChaCha8Rng::seed_from_u64(42));
        // Empirical frequency count per position.
        for i in 0..5 {
            let mut counts = [0usize; 10];
            for s in &samples {
                counts[s[i]] += 1;
            }
            for c in counts {
                assert!((c as f64 / 10_000.0 - 0.1).abs() < 0.02);
            }
        }
    }

    #[test]
    fn update_examples() {
        let p = Prototype::<f64>::uniform(1, 10).unwrap();
        let q = p.update_from_selection(&[vec![C3], vec![C3]]).unwrap();
        assert_eq!(q.row(0), row_with(&[(C3, 1.0)]).as_slice());

        let q = p.update_from_selection(&[vec![C3], vec![M2]]).unwrap();
        assert_eq!(q.row(0), row_with(&[(C3, 0.5), (M2, 0.5)]).as_slice());

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let wide = Prototype::<f64>::uniform(4, 10).unwrap();
        let selected = wide.sample(100, &mut rng);
        let q = wide.update_from_selection(&selected).unwrap();
        for &v in q.rows().flatten() {
            let scaled = v * 100.0;
            assert!((scaled - scaled.round()).abs() < 1e-9);
        }
    }

    #[test]
    fn update_errors_and_fresh_clearing() {
        let p = Prototype::<f64>::uniform(2, 10).unwrap().grow(1);
        assert_eq!(p.fresh_rows().len(), 1);
        assert!(matches!(p.update_from_selection(&[]), Err(Error::EmptySelection)));
        assert!(matches!(
            p.update_from_selection(&[vec![0, 0, 0], vec![0, 0]]),
            Err(Error::LengthMismatch {
                index: 1,
                expected: 3,
                found: 2
            })
        ));
        let q = p.update_from_selection(&[vec![0, 1, 2]]).unwrap();
        assert!(q.fresh_rows().is_empty());
    }

    #[test]
    fn grow_examples() {
        let p = Prototype::<f64>::one_hot(&[1, 2, 3, 4, 5], 10).unwrap();
        let g = p.grow(2);
        assert_eq!(g.n_layers(), 7);
        for i in 0..5 {
            assert_eq!(g.row(i), p.row(i));
        }
        assert!(g.row(5).iter().chain(g.row(6)).all(|&v| v == 0.1));
        assert_eq!(p.grow(0), p);
        let f = Prototype::<f64>::uniform(5, 10).unwrap().grow(1);
        assert_eq!(f.fresh_rows().iter().copied().collect::<Vec<_>>(), vec![5]);
    }

    #[test]
    fn cap_examples() {
        assert_abs_diff_eq!(cap().p_min(), 1.0 / 90.0, epsilon = 1e-15);
        let p = Prototype::<f64>::one_hot(&[4], 10).unwrap();
        let c = p.cap_normalize(&cap());
        for (j, &v) in c.row(0).iter().enumerate() {
            let expected = if j == 4 { 0.9 } else { 1.0 / 90.0 };
            assert_abs_diff_eq!(v, expected, epsilon = 1e-12);
        }
        let u = Prototype::<f64>::uniform(3, 10).unwrap();
        assert_eq!(u.cap_normalize(&cap()), u);
    }

    #[test]
    fn cap_fixpoint_lifts_entries_pushed_below_floor() {
        // A single pass scales 0.012 by m < 1 and leaves it below 1/90.
        let mut row = vec![0.0; 10];
        row[0] = 0.5;
        row[1] = 0.476;
        row[2] = 0.012;
        row[3] = 0.012;
        let p = Prototype::from_rows(vec![row]).unwrap();
        let c = p.cap_normalize(&cap());
        let min = c.row(0).iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(min >= cap().p_min() - 1e-12);
        c.validate().unwrap();
    }

    #[test]
    fn cap_config_bounds() {
        assert!(CapConfig::<f64>::new(0.1, 10).is_err());
        assert!(CapConfig::<f64>::new(1.0, 10).is_err());
        assert!(CapConfig::<f64>::new(0.9, 1).is_err());
        assert!(CapConfig::<f64>::new(0.11, 10).is_ok());
    }

    #[test]
    fn inversion_examples() {
        // Complement before normalization.
        assert_abs_diff_eq!(1.0 - 0.85, 0.15, epsilon = 1e-15);

        let p = Prototype::<f64>::one_hot(&[6], 10).unwrap();
        let inv = p.invert_full(&cap());
        let row = inv.row(0);
        let min_j = (0..10).min_by(|&a, &b| row[a].partial_cmp(&row[b]).unwrap()).unwrap();
        assert_eq!(min_j, 6);
        assert_abs_diff_eq!(row[6], 1.0 / 90.0, epsilon = 1e-12);
        assert!(row.iter().all(|&v| v > 0.0));

        let u = Prototype::<f64>::uniform(2, 10).unwrap();
        let inv = u.invert_full(&cap());
        for &v in inv.rows().flatten() {
            assert_abs_diff_eq!(v, 0.1, epsilon = 1e-12);
        }
    }

    #[test]
    fn inversion_of_row_with_085() {
        let row = row_with(&[(2, 0.85), (3, 0.15)]);
        let p = Prototype::from_rows(vec![row]).unwrap();
        let inv = p.invert_full(&cap());
        // Complements (0.15, 0.85, 1.0 x 8) divided by 9 then capped.
        assert!(inv.get(0, 2) < inv.get(0, 3));
        assert!(inv.get(0, 3) < inv.get(0, 0));
        inv.validate().unwrap();
    }

    #[test]
    fn partial_inversion_row_counts() {
        for (n, expected) in [(1, 1), (3, 1), (4, 2), (9, 3), (15, 3), (16, 4)] {
            let p = Prototype::<f64>::uniform(n, 10).unwrap();
            assert_eq!(p.partial_inversion_rows().len(), expected, "N={n}");
        }
    }

    #[test]
    fn partial_inversion_tie_break() {
        let mut rows = vec![vec![0.1; 10]; 4];
        rows[2] = row_with(&[(5, 1.0)]);
        let p = Prototype::from_rows(rows).unwrap();
        assert_eq!(p.partial_inversion_rows(), vec![2, 0]);
        let inv = p.invert_partial(&cap());
        assert_ne!(inv.row(2), p.row(2));
        assert_eq!(inv.row(1), p.row(1));
        assert_eq!(inv.row(3), p.row(3));
    }

    #[test]
    fn norms() {
        let p = Prototype::from_rows(vec![
            vec![0.1; 10],
            row_with(&[(0, 1.0)]),
            row_with(&[(0, 0.5), (1, 0.5)]),
        ])
        .unwrap();
        assert_abs_diff_eq!(p.row_l2_norm(0).unwrap(), 0.31623, epsilon = 1e-5);
        assert_abs_diff_eq!(p.row_l2_norm(1).unwrap(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(
            p.row_l2_norm(2).unwrap(),
            std::f64::consts::FRAC_1_SQRT_2,
            epsilon = 1e-12
        );
        assert!(matches!(
            p.row_l2_norm(3),
            Err(Error::RowOutOfRange { row: 3, rows: 3 })
        ));

        let u = Prototype::<f64>::uniform(4, 10).unwrap();
        assert_abs_diff_eq!(u.mean_l2_norm(false).unwrap(), 1.0 / 10f64.sqrt(), epsilon = 1e-12);
        let h = Prototype::<f64>::one_hot(&[1, 2], 10).unwrap();
        assert_abs_diff_eq!(h.mean_l2_norm(false).unwrap(), 1.0, epsilon = 1e-12);
        let g = h.grow(2);
        assert_abs_diff_eq!(g.mean_l2_norm(true).unwrap(), 1.0, epsilon = 1e-12);
        assert!(g.mean_l2_norm(false).unwrap() < 1.0);
    }

    #[test]
    fn mean_norm_fails_without_includable_rows() {
        let mut p = Prototype::<f64>::uniform(1, 10).unwrap();
        p.fresh_rows.insert(0);
        assert!(matches!(p.mean_l2_norm(true), Err(Error::NoIncludableRows)));
    }

    #[test]
    fn convergence_checks() {
        assert!(Prototype::<f64>::one_hot(&[1, 9], 10).unwrap().is_fully_converged());
        assert!(!Prototype::<f64>::uniform(2, 10).unwrap().is_fully_converged());
        let capped = Prototype::<f64>::one_hot(&[1, 9], 10).unwrap().cap_normalize(&cap());
        assert!(!capped.is_fully_converged());
    }

    #[test]
    fn argmax_examples() {
        let h = Prototype::<f64>::one_hot(&[2, 7, 3], 10).unwrap();
        assert_eq!(h.argmax_architecture(), vec![2, 7, 3]);
        let tie = Prototype::from_rows(vec![row_with(&[(0, 0.5), (1, 0.5)])]).unwrap();
        assert_eq!(tie.argmax_architecture(), vec![0]);
        let q = Prototype::<f64>::uniform(1, 10)
            .unwrap()
            .update_from_selection(&[vec![C3], vec![C3], vec![M2]])
            .unwrap();
        assert_eq!(q.argmax_architecture(), vec![C3]);
    }

    #[test]
    fn snapshot_round_trip_and_validation() {
        let lib = default_library();
        let p = Prototype::<f64>::one_hot(&[4], 10)
            .unwrap()
            .cap_normalize(&cap())
            .grow(1);
        let text = p.to_snapshot(&lib).unwrap();
        assert!(text.starts_with("2 10 id c1 c3 c5 c7 d3 d5 m2 m3 a3\n"));
        let (parsed_lib, parsed) = Prototype::<f64>::parse_snapshot(&text).unwrap();
        assert_eq!(parsed_lib, lib);
        assert_eq!(parsed.to_rows(), p.to_rows());

        let bad = "1 10 id c1 c3 c5 c7 d3 d5 m2 m3 a3\n0.09 0.09 0.09 0.09 0.09 0.09 0.09 0.09 0.09 0.09\n";
        assert!(matches!(
            Prototype::<f64>::parse_snapshot(bad),
            Err(Error::InvalidPrototype(_))
        ));
        assert!(Prototype::<f64>::parse_snapshot("2 10 id\n").is_err());
    }

    #[test]
    fn works_in_single_precision() {
        let cap = CapConfig::<f32>::new(0.9, 10).unwrap();
        let p = Prototype::<f32>::one_hot(&[0, 5], 10).unwrap();
        let inv = p.invert_full(&cap);
        inv.validate().unwrap();
        assert_eq!(inv.argmax_architecture(), vec![1, 0]);
        assert!((p.cap_normalize(&cap).get(1, 5) - 0.9).abs() < 1e-6);
    }
}
