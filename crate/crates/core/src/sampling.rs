//! Collocation grids over `[0, 1] x [0, T]`.
//!
//! A grid keeps interior points apart from the three constraint lines
//! `x = 0`, `x = 1` and `t = 0`. Flattened with [`Grid::points`], the order is
//! interior, left, right, initial, and [`GridLayout`] records the ranges.

use std::io::{Read, Write};
use std::ops::Range;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problems::Location;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridKind {
    Regular,
    FixedRandom(u64),
    VaryingRandom,
}

impl GridKind {
    pub fn name(self) -> &'static str {
        match self {
            GridKind::Regular => "regular",
            GridKind::FixedRandom(_) => "fixed_random",
            GridKind::VaryingRandom => "varying_random",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub interior: Vec<(f64, f64)>,
    pub left: Vec<(f64, f64)>,
    pub right: Vec<(f64, f64)>,
    pub initial: Vec<(f64, f64)>,
    pub n: usize,
    pub t_final: f64,
    pub kind: GridKind,
}

/// Index ranges of each point role inside [`Grid::points`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridLayout {
    pub interior: Range<usize>,
    pub left: Range<usize>,
    pub right: Range<usize>,
    pub initial: Range<usize>,
}

impl GridLayout {
    pub fn range(&self, location: Location) -> Range<usize> {
        match location {
            Location::Left => self.left.clone(),
            Location::Right => self.right.clone(),
            Location::Initial => self.initial.clone(),
        }
    }

    pub fn len(&self) -> usize {
        self.initial.end
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn check_t(t_final: f64) -> Result<()> {
    if !(t_final.is_finite() && t_final > 0.0) {
        return Err(Error::invalid(format!("final time must be positive, got {t_final}")));
    }
    Ok(())
}

/// `N x N` lattice with spacing `1/(N-1)` in `x` and `T/(N-1)` in `t`.
///
/// The constraint lines own their lattice points, so the interior holds the
/// `(N-2)(N-1)` points with `0 < x < 1` and `t > 0`. Corners appear on both
/// lines that meet there. `N` must be odd so that `(0.5, T/2)` is a lattice
/// point.
pub fn regular_grid(n: usize, t_final: f64) -> Result<Grid> {
    check_t(t_final)?;
    if n < 3 || n % 2 == 0 {
        return Err(Error::invalid(format!(
            "regular grid needs an odd side count >= 3, got {n}"
        )));
    }
    let m = (n - 1) as f64;
    let xs: Vec<f64> = (0..n).map(|i| i as f64 / m).collect();
    let ts: Vec<f64> = (0..n).map(|j| t_final * j as f64 / m).collect();
    let interior = ts[1..]
        .iter()
        .flat_map(|&t| xs[1..n - 1].iter().map(move |&x| (x, t)))
        .collect();
    Ok(Grid {
        interior,
        left: ts.iter().map(|&t| (0.0, t)).collect(),
        right: ts.iter().map(|&t| (1.0, t)).collect(),
        initial: xs.iter().map(|&x| (x, 0.0)).collect(),
        n,
        t_final,
        kind: GridKind::Regular,
    })
}

/// `N^2` uniform interior points on the open rectangle and `N` uniform points
/// on each constraint line, drawn from ChaCha8. Without a seed the generator
/// is seeded from system entropy.
pub fn random_grid(n: usize, t_final: f64, seed: Option<u64>) -> Result<Grid> {
    check_t(t_final)?;
    if n < 2 {
        return Err(Error::invalid(format!("random grid needs N >= 2, got {n}")));
    }
    let (mut rng, kind) = match seed {
        Some(s) => (ChaCha8Rng::seed_from_u64(s), GridKind::FixedRandom(s)),
        None => (ChaCha8Rng::from_os_rng(), GridKind::VaryingRandom),
    };
    let open = |rng: &mut ChaCha8Rng| loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    };
    let interior = (0..n * n)
        .map(|_| {
            let x = open(&mut rng);
            let t = t_final * open(&mut rng);
            (x, t)
        })
        .collect();
    let left = (0..n).map(|_| (0.0, t_final * rng.random::<f64>())).collect();
    let right = (0..n).map(|_| (1.0, t_final * rng.random::<f64>())).collect();
    let initial = (0..n).map(|_| (rng.random::<f64>(), 0.0)).collect();
    Ok(Grid {
        interior,
        left,
        right,
        initial,
        n,
        t_final,
        kind,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum Role {
    Interior,
    Left,
    Right,
    Initial,
}

#[derive(Debug, Serialize, Deserialize)]
struct Row {
    x: f64,
    t: f64,
    role: Role,
}

impl Grid {
    /// All points in batch order with the ranges of each role.
    pub fn points(&self) -> (Vec<(f64, f64)>, GridLayout) {
        let mut pts = Vec::with_capacity(self.len());
        let mut span = |v: &[(f64, f64)]| {
            let start = pts.len();
            pts.extend_from_slice(v);
            start..pts.len()
        };
        let interior = span(&self.interior);
        let left = span(&self.left);
        let right = span(&self.right);
        let initial = span(&self.initial);
        (
            pts,
            GridLayout {
                interior,
                left,
                right,
                initial,
            },
        )
    }

    pub fn len(&self) -> usize {
        self.interior.len() + self.left.len() + self.right.len() + self.initial.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of distinct locations; shared corners count once.
    pub fn distinct_points(&self) -> usize {
        let mut all: Vec<(u64, u64)> = self
            .points()
            .0
            .iter()
            .map(|&(x, t)| (x.to_bits(), t.to_bits()))
            .collect();
        all.sort_unstable();
        all.dedup();
        all.len()
    }

    fn roles(&self) -> impl Iterator<Item = (Role, &[(f64, f64)])> {
        [
            (Role::Interior, self.interior.as_slice()),
            (Role::Left, self.left.as_slice()),
            (Role::Right, self.right.as_slice()),
            (Role::Initial, self.initial.as_slice()),
        ]
        .into_iter()
    }

    /// Writes `x,t,role` rows in batch order. Values use the shortest
    /// round-tripping decimal form, so import restores them bit for bit.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        for (role, pts) in self.roles() {
            for &(x, t) in pts {
                wr.serialize(Row { x, t, role })?;
            }
        }
        wr.flush()?;
        Ok(())
    }

    /// Reads rows written by [`Grid::write_csv`]. The result is tagged as a
    /// regular grid when its points fall on a lattice, else as varying random.
    pub fn read_csv<R: Read>(r: R, n: usize, t_final: f64) -> Result<Grid> {
        check_t(t_final)?;
        let mut g = Grid {
            interior: Vec::new(),
            left: Vec::new(),
            right: Vec::new(),
            initial: Vec::new(),
            n,
            t_final,
            kind: GridKind::VaryingRandom,
        };
        for row in csv::Reader::from_reader(r).deserialize() {
            let row: Row = row?;
            if !(0.0..=1.0).contains(&row.x) || !(0.0..=t_final).contains(&row.t) {
                return Err(Error::invalid(format!(
                    "point ({}, {}) outside [0,1]x[0,{t_final}]",
                    row.x, row.t
                )));
            }
            let bucket = match row.role {
                Role::Interior => &mut g.interior,
                Role::Left => &mut g.left,
                Role::Right => &mut g.right,
                Role::Initial => &mut g.initial,
            };
            bucket.push((row.x, row.t));
        }
        if regular_grid(n, t_final).is_ok_and(|r| r.points().0 == g.points().0) {
            g.kind = GridKind::Regular;
        }
        Ok(g)
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    pub fn load_csv(path: impl AsRef<Path>, n: usize, t_final: f64) -> Result<Grid> {
        Self::read_csv(std::fs::File::open(path)?, n, t_final)
    }
}
