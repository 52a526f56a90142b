//! Transition kernels, lattice boxes, particle configurations and
//! enumerated state spaces with bijective indexing.

use crate::{Error, Result};

/// Integer lattice coordinate.
pub type Coord = i64;
/// A site of `Z^d`, stored as its coordinate vector.
pub type Point = Vec<Coord>;

/// Validation tolerance for kernel weights.
pub const KERNEL_TOL: f64 = 1e-12;
/// Default cap on enumerated state-space sizes.
pub const DEFAULT_SPACE_CAP: u128 = 50_000_000;

/// Finite-range symmetric transition probability on `Z^d`.
///
/// Invariants enforced at construction: `p(z) = p(-z)`, weights sum to one,
/// no jump to the origin, and the support generates `Z^d` as a group.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    dimension: usize,
    support: Vec<(Point, f64)>,
    range: Coord,
}

impl Kernel {
    /// Builds and validates a kernel from `(displacement, weight)` pairs.
    ///
    /// Weights of `z` and `-z` are averaged when they differ by at most
    /// `1e-12` and rejected otherwise.
    pub fn new(spec: &[(Point, f64)]) -> Result<Self> {
        if spec.is_empty() {
            return Err(Error::InvalidKernel("empty support".into()));
        }
        let d = spec[0].0.len();
        if d == 0 {
            return Err(Error::InvalidKernel("zero-dimensional vectors".into()));
        }
        let mut entries: Vec<(Point, f64)> = Vec::with_capacity(spec.len());
        for (z, w) in spec {
            if z.len() != d {
                return Err(Error::InvalidKernel("inconsistent vector dimensions".into()));
            }
            if z.iter().all(|&c| c == 0) {
                return Err(Error::InvalidKernel("zero vector in support".into()));
            }
            if !w.is_finite() || *w <= 0.0 {
                return Err(Error::InvalidKernel(format!("nonpositive weight {w}")));
            }
            if entries.iter().any(|(p, _)| p == z) {
                return Err(Error::InvalidKernel(format!("duplicate support vector {z:?}")));
            }
            entries.push((z.clone(), *w));
        }
        // Symmetrize: every z must come with -z carrying (nearly) the same weight.
        let mut support: Vec<(Point, f64)> = Vec::with_capacity(entries.len());
        for (z, w) in &entries {
            let neg: Point = z.iter().map(|c| -c).collect();
            match entries.iter().find(|(p, _)| *p == neg) {
                None => {
                    return Err(Error::InvalidKernel(format!(
                        "asymmetric support: {z:?} present without {neg:?}"
                    )))
                }
                Some((_, wn)) => {
                    if (w - wn).abs() > KERNEL_TOL {
                        return Err(Error::InvalidKernel(format!(
                            "asymmetric weights for {z:?}: {w} vs {wn}"
                        )));
                    }
                    support.push((z.clone(), 0.5 * (w + wn)));
                }
            }
        }
        let total: f64 = support.iter().map(|(_, w)| w).sum();
        if (total - 1.0).abs() > KERNEL_TOL {
            return Err(Error::InvalidKernel(format!("weights sum to {total}, not 1")));
        }
        if !generates_full_lattice(d, &support.iter().map(|(z, _)| z.clone()).collect::<Vec<_>>()) {
            return Err(Error::InvalidKernel(
                "reducible support: vectors do not generate Z^d".into(),
            ));
        }
        let range = support
            .iter()
            .map(|(z, _)| z.iter().map(|c| c.abs()).max().unwrap_or(0))
            .max()
            .unwrap_or(0);
        // Deterministic order for reproducible assembly.
        support.sort_by(|a, b| a.0.cmp(&b.0));
        Ok(Kernel { dimension: d, support, range })
    }

    /// Nearest-neighbor kernel in dimension `d` (weight `1/(2d)` per unit step).
    pub fn nearest_neighbor(d: usize) -> Self {
        let w = 1.0 / (2 * d) as f64;
        let mut spec = Vec::new();
        for j in 0..d {
            for s in [1i64, -1] {
                let mut z = vec![0; d];
                z[j] = s;
                spec.push((z, w));
            }
        }
        Kernel::new(&spec).expect("nearest-neighbor kernel is valid")
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    /// Sup-norm range of the support.
    pub fn range(&self) -> Coord {
        self.range
    }

    /// Full support as `(displacement, weight)` pairs, lexicographically sorted.
    pub fn support(&self) -> &[(Point, f64)] {
        &self.support
    }

    /// One representative per `{z, -z}` pair (the lexicographically positive one).
    pub fn half_support(&self) -> Vec<(Point, f64)> {
        self.support
            .iter()
            .filter(|(z, _)| lex_positive(z))
            .cloned()
            .collect()
    }

    /// `p(z)`, zero off the support.
    pub fn weight(&self, z: &[Coord]) -> f64 {
        self.support
            .iter()
            .find(|(p, _)| p.as_slice() == z)
            .map(|(_, w)| *w)
            .unwrap_or(0.0)
    }
}

fn lex_positive(z: &[Coord]) -> bool {
    for &c in z {
        if c > 0 {
            return true;
        }
        if c < 0 {
            return false;
        }
    }
    false
}

/// Checks that `vectors` generate `Z^d` as a group, by reducing the stacked
/// matrix to Hermite normal form and testing for unit determinant.
fn generates_full_lattice(d: usize, vectors: &[Point]) -> bool {
    // Row-reduce integer vectors via Euclidean elimination, column by column.
    let mut rows: Vec<Vec<i128>> = vectors
        .iter()
        .map(|v| v.iter().map(|&c| c as i128).collect())
        .collect();
    let mut pivot_row = 0;
    for col in 0..d {
        loop {
            // Find the row (>= pivot_row) with the smallest nonzero |entry| in col.
            let mut best: Option<usize> = None;
            for r in pivot_row..rows.len() {
                if rows[r][col] != 0 {
                    best = match best {
                        None => Some(r),
                        Some(b) if rows[r][col].abs() < rows[b][col].abs() => Some(r),
                        other => other,
                    };
                }
            }
            let Some(b) = best else { break };
            rows.swap(pivot_row, b);
            let p = rows[pivot_row][col];
            let mut reduced_all = true;
            for r in (pivot_row + 1)..rows.len() {
                let q = rows[r][col].div_euclid(p);
                if q != 0 {
                    for c in 0..d {
                        let sub = q * rows[pivot_row][c];
                        rows[r][c] -= sub;
                    }
                }
                if rows[r][col] != 0 {
                    reduced_all = false;
                }
            }
            if reduced_all {
                break;
            }
        }
        if pivot_row < rows.len() && rows[pivot_row][col] != 0 {
            pivot_row += 1;
        } else {
            return false; // no pivot in this column: rank-deficient
        }
    }
    // Determinant of the triangular pivot block must be +-1.
    let mut det: i128 = 1;
    for (i, row) in rows.iter().take(d).enumerate() {
        det = det.saturating_mul(row[i]);
    }
    det.abs() == 1
}

/// Boundary behavior of a finite computational domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Geometry {
    /// Jumps leaving the box are suppressed.
    OpenTruncation,
    /// Displacements wrap modulo `2L+1` per axis.
    Torus,
}

/// Centered box `[-L, L]^d` with either open truncation or torus wrapping.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LatticeBox {
    dimension: usize,
    half_width: Coord,
    geometry: Geometry,
}

impl LatticeBox {
    pub fn new(dimension: usize, half_width: Coord, geometry: Geometry) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::InvalidInput("box dimension must be positive".into()));
        }
        if half_width < 1 {
            return Err(Error::InvalidInput("box half-width must be >= 1".into()));
        }
        Ok(LatticeBox { dimension, half_width, geometry })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn half_width(&self) -> Coord {
        self.half_width
    }

    pub fn geometry(&self) -> Geometry {
        self.geometry
    }

    /// Sites per axis, `2L+1`.
    pub fn side(&self) -> Coord {
        2 * self.half_width + 1
    }

    /// Total number of sites, `(2L+1)^d`.
    pub fn site_count(&self) -> usize {
        let side = self.side() as u128;
        let mut n: u128 = 1;
        for _ in 0..self.dimension {
            n *= side;
        }
        n as usize
    }

    pub fn contains(&self, p: &[Coord]) -> bool {
        p.len() == self.dimension && p.iter().all(|&c| c.abs() <= self.half_width)
    }

    /// Lexicographic site index of a point of the box.
    pub fn site_index(&self, p: &[Coord]) -> Option<usize> {
        if !self.contains(p) {
            return None;
        }
        let side = self.side();
        let mut idx: i64 = 0;
        for &c in p {
            idx = idx * side + (c + self.half_width);
        }
        Some(idx as usize)
    }

    /// Point of the box with the given site index.
    pub fn site_point(&self, mut idx: usize) -> Point {
        let side = self.side() as usize;
        let mut p = vec![0; self.dimension];
        for j in (0..self.dimension).rev() {
            p[j] = (idx % side) as Coord - self.half_width;
            idx /= side;
        }
        p
    }

    /// Wraps a point into the box under torus geometry.
    pub fn wrap(&self, p: &[Coord]) -> Point {
        let side = self.side();
        p.iter()
            .map(|&c| {
                let m = (c + self.half_width).rem_euclid(side);
                m - self.half_width
            })
            .collect()
    }

    /// Site reached from site `idx` by displacement `z`, if any.
    ///
    /// Under open truncation, `None` marks a suppressed jump; under torus
    /// geometry every displacement lands somewhere.
    pub fn displace(&self, idx: usize, z: &[Coord]) -> Option<usize> {
        let p = self.site_point(idx);
        let q: Point = p.iter().zip(z).map(|(a, b)| a + b).collect();
        match self.geometry {
            Geometry::OpenTruncation => self.site_index(&q),
            Geometry::Torus => self.site_index(&self.wrap(&q)),
        }
    }

    /// All sites of the box in index order.
    pub fn sites(&self) -> Vec<Point> {
        (0..self.site_count()).map(|i| self.site_point(i)).collect()
    }
}

/// Labeled configuration: a vector of pairwise distinct sites (element of `B_n`).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LabeledConfig {
    points: Vec<Point>,
}

impl LabeledConfig {
    pub fn new(points: Vec<Point>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidInput("empty configuration".into()));
        }
        let d = points[0].len();
        if points.iter().any(|p| p.len() != d) {
            return Err(Error::InvalidInput("inconsistent point dimensions".into()));
        }
        for i in 0..points.len() {
            for j in (i + 1)..points.len() {
                if points[i] == points[j] {
                    return Err(Error::InvalidInput(format!(
                        "coordinates {i} and {j} coincide at {:?}",
                        points[i]
                    )));
                }
            }
        }
        Ok(LabeledConfig { points })
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dimension(&self) -> usize {
        self.points[0].len()
    }

    /// `sigma^{x,y}`: coordinates at `x` become `y` and vice versa.
    pub fn exchange(&self, x: &[Coord], y: &[Coord]) -> LabeledConfig {
        let points = self
            .points
            .iter()
            .map(|p| {
                if p.as_slice() == x {
                    y.to_vec()
                } else if p.as_slice() == y {
                    x.to_vec()
                } else {
                    p.clone()
                }
            })
            .collect();
        LabeledConfig { points }
    }

    /// Forgets the labels, producing the occupied set.
    pub fn forget(&self) -> UnlabeledConfig {
        UnlabeledConfig::new(self.points.clone()).expect("distinct points form a set")
    }
}

/// Unlabeled configuration: a set of sites in canonical (lexicographic) order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct UnlabeledConfig {
    points: Vec<Point>,
}

impl UnlabeledConfig {
    pub fn new(mut points: Vec<Point>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidInput("empty configuration".into()));
        }
        let d = points[0].len();
        if points.iter().any(|p| p.len() != d) {
            return Err(Error::InvalidInput("inconsistent point dimensions".into()));
        }
        points.sort();
        if points.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidInput("duplicate site in set".into()));
        }
        Ok(UnlabeledConfig { points })
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn contains(&self, p: &[Coord]) -> bool {
        self.points.iter().any(|q| q.as_slice() == p)
    }

    /// `A_{x,y}`: the set with sites `x` and `y` exchanged.
    pub fn exchange(&self, x: &[Coord], y: &[Coord]) -> UnlabeledConfig {
        let has_x = self.contains(x);
        let has_y = self.contains(y);
        if has_x == has_y {
            return self.clone();
        }
        let (out, inn) = if has_x { (x, y) } else { (y, x) };
        let mut points: Vec<Point> = self
            .points
            .iter()
            .filter(|p| p.as_slice() != out)
            .cloned()
            .collect();
        points.push(inn.to_vec());
        UnlabeledConfig::new(points).expect("exchange preserves distinctness")
    }
}

/// Enumerated state space of `n`-particle configurations over a finite site set,
/// with a bijective `configuration <-> contiguous id` map.
#[derive(Debug)]
pub struct StateSpace {
    sites: Vec<Point>,
    site_lookup: std::collections::HashMap<Point, u32>,
    boxed: Option<LatticeBox>,
    n: usize,
    labeled: bool,
    size: usize,
    // Unlabeled rank tables: prefix[i][v] = sum_{w < v} C(S-1-w, n-1-i).
    prefix: Vec<Vec<u64>>,
    // Labeled rank table: falling factorials ff[k] = S-k choose-arrange (S-k)...(S-n+1).
    falling: Vec<u64>,
}

impl StateSpace {
    /// Enumerates configurations of `n` particles in `boxed`.
    pub fn new(boxed: &LatticeBox, n: usize, labeled: bool) -> Result<Self> {
        Self::with_cap(boxed, n, labeled, DEFAULT_SPACE_CAP)
    }

    pub fn with_cap(boxed: &LatticeBox, n: usize, labeled: bool, cap: u128) -> Result<Self> {
        let sites = boxed.sites();
        Self::over_sites_inner(sites, Some(boxed.clone()), n, labeled, cap)
    }

    /// Enumerates configurations over an explicit site list (used for cubes
    /// that are not centered boxes).
    pub fn over_sites(sites: Vec<Point>, n: usize, labeled: bool) -> Result<Self> {
        Self::over_sites_inner(sites, None, n, labeled, DEFAULT_SPACE_CAP)
    }

    fn over_sites_inner(
        sites: Vec<Point>,
        boxed: Option<LatticeBox>,
        n: usize,
        labeled: bool,
        cap: u128,
    ) -> Result<Self> {
        let s = sites.len();
        if n == 0 || n > s {
            return Err(Error::InvalidInput(format!(
                "particle count {n} out of range for {s} sites"
            )));
        }
        let size = if labeled {
            let mut v: u128 = 1;
            for k in 0..n {
                v *= (s - k) as u128;
            }
            v
        } else {
            binomial_u128(s as u128, n as u128)
        };
        if size > cap {
            return Err(Error::EnumerationCap { size, cap });
        }
        let size = size as usize;

        let mut site_lookup = std::collections::HashMap::with_capacity(s);
        for (i, p) in sites.iter().enumerate() {
            site_lookup.insert(p.clone(), i as u32);
        }

        // prefix[i][v] = number of (n-i)-subsets of {v..S-1} that avoid choosing
        // position i below v; used for O(n) lexicographic subset ranking.
        let mut prefix = Vec::new();
        if !labeled {
            for i in 0..n {
                let k = n - 1 - i; // remaining slots after position i
                let mut row = vec![0u64; s + 1];
                for v in 0..s {
                    let c = binomial_u128((s - 1 - v) as u128, k as u128) as u64;
                    row[v + 1] = row[v] + c;
                }
                prefix.push(row);
            }
        }
        // completions[i] = (s-i)(s-i-1)...(s-n+1): injective fillings of the
        // last n-i coordinates once i sites are used.
        let mut completions = vec![1u64; n + 1];
        for i in (0..n).rev() {
            completions[i] = completions[i + 1] * (s - i) as u64;
        }

        Ok(StateSpace {
            sites,
            site_lookup,
            boxed,
            n,
            labeled,
            size,
            prefix,
            falling: completions,
        })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn particle_count(&self) -> usize {
        self.n
    }

    pub fn is_labeled(&self) -> bool {
        self.labeled
    }

    pub fn site_count(&self) -> usize {
        self.sites.len()
    }

    pub fn sites(&self) -> &[Point] {
        &self.sites
    }

    pub fn site_point(&self, idx: u32) -> &Point {
        &self.sites[idx as usize]
    }

    pub fn site_of_point(&self, p: &[Coord]) -> Option<u32> {
        self.site_lookup.get(p).copied()
    }

    /// Underlying box, when the space was built over one.
    pub fn lattice_box(&self) -> Option<&LatticeBox> {
        self.boxed.as_ref()
    }

    /// Rank of a configuration given as site indices.
    ///
    /// Unlabeled configurations must be strictly increasing; labeled ones are
    /// tuples of distinct indices. Both orders are lexicographic.
    pub fn rank(&self, config: &[u32]) -> usize {
        debug_assert_eq!(config.len(), self.n);
        if self.labeled {
            let mut rank: u64 = 0;
            for i in 0..self.n {
                let c = config[i];
                let smaller_used = config[..i].iter().filter(|&&u| u < c).count() as u64;
                rank += (c as u64 - smaller_used) * self.falling[i + 1];
            }
            rank as usize
        } else {
            let mut rank: u64 = 0;
            let mut prev: i64 = -1;
            for i in 0..self.n {
                let c = config[i] as usize;
                debug_assert!(c as i64 > prev);
                let row = &self.prefix[i];
                rank += row[c] - row[(prev + 1) as usize];
                prev = c as i64;
            }
            rank as usize
        }
    }

    /// Configuration (site indices) with the given rank.
    pub fn unrank(&self, id: usize) -> Vec<u32> {
        debug_assert!(id < self.size);
        let s = self.sites.len();
        let mut out = Vec::with_capacity(self.n);
        if self.labeled {
            let mut rem = id as u64;
            let mut used: Vec<u32> = Vec::with_capacity(self.n);
            for i in 0..self.n {
                let block = self.falling[i + 1];
                let pos = (rem / block) as u32; // rank among unused sites
                rem %= block;
                // pos-th unused site
                let mut count = 0u32;
                let mut site = 0u32;
                loop {
                    if !used.contains(&site) {
                        if count == pos {
                            break;
                        }
                        count += 1;
                    }
                    site += 1;
                }
                used.push(site);
                out.push(site);
            }
        } else {
            let mut rem = id as u64;
            let mut prev: i64 = -1;
            for i in 0..self.n {
                let row = &self.prefix[i];
                let base = row[(prev + 1) as usize];
                // smallest c > prev with row[c+1]-base > rem
                let mut lo = (prev + 1) as usize;
                let mut hi = s;
                while lo + 1 < hi {
                    let mid = (lo + hi) / 2;
                    if row[mid] - base <= rem {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                // lo is the largest index with row[lo]-base <= rem; chosen site is lo.
                rem -= row[lo] - base;
                out.push(lo as u32);
                prev = lo as i64;
            }
        }
        out
    }

    /// Configuration of rank `id` as lattice points.
    pub fn config_points(&self, id: usize) -> Vec<Point> {
        self.unrank(id)
            .into_iter()
            .map(|s| self.sites[s as usize].clone())
            .collect()
    }

    /// Rank of a labeled configuration given as points.
    pub fn rank_labeled(&self, config: &LabeledConfig) -> Option<usize> {
        if !self.labeled || config.len() != self.n {
            return None;
        }
        let mut idx = Vec::with_capacity(self.n);
        for p in config.points() {
            idx.push(self.site_of_point(p)?);
        }
        Some(self.rank(&idx))
    }

    /// Rank of an unlabeled configuration given as points.
    pub fn rank_unlabeled(&self, config: &UnlabeledConfig) -> Option<usize> {
        if self.labeled || config.len() != self.n {
            return None;
        }
        let mut idx = Vec::with_capacity(self.n);
        for p in config.points() {
            idx.push(self.site_of_point(p)?);
        }
        idx.sort_unstable();
        if idx.windows(2).any(|w| w[0] == w[1]) {
            return None;
        }
        Some(self.rank(&idx))
    }
}

fn binomial_u128(n: u128, k: u128) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) / (i + 1);
    }
    acc
}

/// Builds a validated kernel; alias for [`Kernel::new`] matching the
/// operation vocabulary of the crate.
pub fn build_kernel(spec: &[(Point, f64)]) -> Result<Kernel> {
    Kernel::new(spec)
}

/// Enumerates the state space of `n` particles in `boxed`.
pub fn enumerate_states(boxed: &LatticeBox, n: usize, labeled: bool) -> Result<StateSpace> {
    StateSpace::new(boxed, n, labeled)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(cs: &[Coord]) -> Point {
        cs.to_vec()
    }

    #[test]
    fn nearest_neighbor_kernel_valid() {
        let k = Kernel::new(&[(pt(&[1]), 0.5), (pt(&[-1]), 0.5)]).unwrap();
        assert_eq!(k.dimension(), 1);
        assert_eq!(k.range(), 1);
        assert_eq!(k.weight(&[1]), 0.5);
        assert_eq!(k.weight(&[2]), 0.0);
        assert_eq!(k.half_support().len(), 1);
    }

    #[test]
    fn asymmetric_kernel_rejected() {
        assert!(Kernel::new(&[(pt(&[1]), 1.0)]).is_err());
        assert!(Kernel::new(&[(pt(&[1]), 0.6), (pt(&[-1]), 0.4)]).is_err());
    }

    #[test]
    fn reducible_kernel_rejected() {
        // {+-2} generates 2Z only.
        assert!(Kernel::new(&[(pt(&[2]), 0.5), (pt(&[-2]), 0.5)]).is_err());
        // but {+-1, +-2} is fine
        assert!(Kernel::new(&[
            (pt(&[1]), 0.25),
            (pt(&[-1]), 0.25),
            (pt(&[2]), 0.25),
            (pt(&[-2]), 0.25)
        ])
        .is_ok());
    }

    #[test]
    fn zero_vector_and_bad_weights_rejected() {
        assert!(Kernel::new(&[(pt(&[0]), 1.0)]).is_err());
        assert!(Kernel::new(&[(pt(&[1]), 0.5), (pt(&[-1]), -0.5)]).is_err());
        assert!(Kernel::new(&[(pt(&[1]), 0.4), (pt(&[-1]), 0.4)]).is_err());
    }

    #[test]
    fn kernel_2d_irreducibility() {
        let k = Kernel::nearest_neighbor(2);
        assert_eq!(k.dimension(), 2);
        assert_eq!(k.support().len(), 4);
        // diagonal steps only: generates the even sublattice, reject
        assert!(Kernel::new(&[
            (pt(&[1, 1]), 0.25),
            (pt(&[-1, -1]), 0.25),
            (pt(&[1, -1]), 0.25),
            (pt(&[-1, 1]), 0.25),
        ])
        .is_err());
    }

    #[test]
    fn unlabeled_exchange_cases() {
        let a = UnlabeledConfig::new(vec![pt(&[0]), pt(&[3])]).unwrap();
        let b = a.exchange(&[0], &[1]);
        assert_eq!(b.points(), &[pt(&[1]), pt(&[3])]);
        // "otherwise" case: neither site involved
        let c = a.exchange(&[5], &[6]);
        assert_eq!(c, a);
        // both in A
        let d = a.exchange(&[0], &[3]);
        assert_eq!(d, a);
    }

    #[test]
    fn labeled_exchange_swaps_labels() {
        let x = LabeledConfig::new(vec![pt(&[0]), pt(&[3])]).unwrap();
        let y = x.exchange(&[0], &[3]);
        assert_eq!(y.points(), &[pt(&[3]), pt(&[0])]);
    }

    #[test]
    fn exchange_is_involution() {
        let a = UnlabeledConfig::new(vec![pt(&[0]), pt(&[3]), pt(&[7])]).unwrap();
        let x = LabeledConfig::new(vec![pt(&[0]), pt(&[3]), pt(&[7])]).unwrap();
        for (u, v) in [([0], [1]), ([3], [4]), ([0], [3]), ([9], [10])] {
            assert_eq!(a.exchange(&u, &v).exchange(&u, &v), a);
            assert_eq!(x.exchange(&u, &v).exchange(&u, &v), x);
        }
    }

    #[test]
    fn forget_commutes_with_exchange() {
        let x = LabeledConfig::new(vec![pt(&[2]), pt(&[0]), pt(&[5])]).unwrap();
        for (u, v) in [([0], [1]), ([2], [5]), ([5], [6]), ([8], [9])] {
            let lhs = x.exchange(&u, &v).forget();
            let rhs = x.forget().exchange(&u, &v);
            assert_eq!(lhs, rhs);
        }
    }

    #[test]
    fn enumeration_sizes() {
        let b = LatticeBox::new(1, 1, Geometry::OpenTruncation).unwrap();
        assert_eq!(StateSpace::new(&b, 2, false).unwrap().size(), 3);
        assert_eq!(StateSpace::new(&b, 2, true).unwrap().size(), 6);
        let b2 = LatticeBox::new(2, 1, Geometry::OpenTruncation).unwrap();
        assert_eq!(StateSpace::new(&b2, 1, false).unwrap().size(), 9);
    }

    #[test]
    fn enumeration_cap() {
        let b = LatticeBox::new(1, 40, Geometry::OpenTruncation).unwrap();
        let r = StateSpace::with_cap(&b, 4, false, 1000);
        assert!(matches!(r, Err(Error::EnumerationCap { .. })));
    }

    #[test]
    fn rank_roundtrip_unlabeled() {
        let b = LatticeBox::new(1, 5, Geometry::OpenTruncation).unwrap();
        let sp = StateSpace::new(&b, 3, false).unwrap();
        for id in 0..sp.size() {
            let c = sp.unrank(id);
            assert!(c.windows(2).all(|w| w[0] < w[1]));
            assert_eq!(sp.rank(&c), id);
        }
    }

    #[test]
    fn rank_roundtrip_labeled() {
        let b = LatticeBox::new(1, 3, Geometry::OpenTruncation).unwrap();
        let sp = StateSpace::new(&b, 3, true).unwrap();
        for id in 0..sp.size() {
            let c = sp.unrank(id);
            assert_eq!(sp.rank(&c), id);
        }
    }

    #[test]
    fn rank_roundtrip_2d_torus() {
        let b = LatticeBox::new(2, 2, Geometry::Torus).unwrap();
        let sp = StateSpace::new(&b, 2, false).unwrap();
        for id in 0..sp.size() {
            assert_eq!(sp.rank(&sp.unrank(id)), id);
        }
    }

    #[test]
    fn enumeration_is_lexicographic() {
        let b = LatticeBox::new(1, 2, Geometry::OpenTruncation).unwrap();
        let sp = StateSpace::new(&b, 2, false).unwrap();
        let mut prev = sp.unrank(0);
        for id in 1..sp.size() {
            let cur = sp.unrank(id);
            assert!(cur > prev);
            prev = cur;
        }
    }

    #[test]
    fn torus_wrapping() {
        let b = LatticeBox::new(1, 2, Geometry::Torus).unwrap();
        let idx = b.site_index(&[2]).unwrap();
        let n = b.displace(idx, &[1]).unwrap();
        assert_eq!(b.site_point(n), vec![-2]);
        let open = LatticeBox::new(1, 2, Geometry::OpenTruncation).unwrap();
        assert_eq!(open.displace(idx, &[1]), None);
    }
}
