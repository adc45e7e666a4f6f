//! Matrix Market coordinate I/O and synthetic matrix generators.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, SpmvError};
use crate::matrix::{csr_from_coo, CsrMatrix};

#[derive(Debug, Clone, PartialEq)]
pub struct CooMatrix {
    pub nrows: usize,
    pub ncols: usize,
    pub triplets: Vec<(usize, usize, f64)>,
}

impl CooMatrix {
    pub fn to_csr(&self) -> Result<CsrMatrix> {
        csr_from_coo(&self.triplets, self.nrows, self.ncols)
    }

    pub fn nnz(&self) -> usize {
        self.triplets.len()
    }
}

impl From<&CsrMatrix> for CooMatrix {
    fn from(m: &CsrMatrix) -> Self {
        Self {
            nrows: m.nrows(),
            ncols: m.ncols(),
            triplets: m.triplets(),
        }
    }
}

fn parse_err(line: usize, message: impl Into<String>) -> SpmvError {
    SpmvError::Parse {
        line,
        message: message.into(),
    }
}

pub fn read_matrix_market(path: impl AsRef<Path>) -> Result<CooMatrix> {
    parse_matrix_market(BufReader::new(File::open(path)?))
}

/// Parses a real `coordinate` Matrix Market stream with `general` or
/// `symmetric` symmetry. Symmetric files are expanded to both triangles.
pub fn parse_matrix_market<R: BufRead>(reader: R) -> Result<CooMatrix> {
    let mut lines = reader.lines().enumerate().map(|(i, l)| (i + 1, l));

    let (lineno, header) = match lines.next() {
        Some((n, l)) => (n, l?),
        None => return Err(parse_err(1, "empty file")),
    };
    let fields: Vec<String> = header
        .split_whitespace()
        .map(str::to_ascii_lowercase)
        .collect();
    if fields.len() != 5 || fields[0] != "%%matrixmarket" {
        return Err(parse_err(
            lineno,
            "expected `%%MatrixMarket matrix coordinate real <symmetry>`",
        ));
    }
    if fields[1] != "matrix" {
        return Err(parse_err(
            lineno,
            format!("unsupported object `{}`", fields[1]),
        ));
    }
    if fields[2] != "coordinate" {
        return Err(parse_err(
            lineno,
            format!("unsupported format `{}`", fields[2]),
        ));
    }
    match fields[3].as_str() {
        "real" | "double" | "integer" => {}
        other => return Err(parse_err(lineno, format!("unsupported field `{other}`"))),
    }
    let symmetric = match fields[4].as_str() {
        "general" => false,
        "symmetric" => true,
        other => return Err(parse_err(lineno, format!("unsupported symmetry `{other}`"))),
    };

    let mut size: Option<(usize, usize, usize)> = None;
    let mut triplets = Vec::new();
    let mut seen = 0usize;
    for (lineno, line) in lines {
        let line = line?;
        let text = line.trim();
        if text.is_empty() || text.starts_with('%') {
            continue;
        }
        let toks: Vec<&str> = text.split_whitespace().collect();
        let Some((nrows, ncols, nnz)) = size else {
            if toks.len() != 3 {
                return Err(parse_err(lineno, "size line needs `rows cols entries`"));
            }
            let parse = |t: &str| {
                t.parse::<usize>()
                    .map_err(|_| parse_err(lineno, format!("bad size value `{t}`")))
            };
            let dims = (parse(toks[0])?, parse(toks[1])?, parse(toks[2])?);
            if symmetric && dims.0 != dims.1 {
                return Err(parse_err(lineno, "symmetric matrix must be square"));
            }
            size = Some(dims);
            triplets.reserve(if symmetric { 2 * dims.2 } else { dims.2 });
            continue;
        };
        if toks.len() != 3 {
            return Err(parse_err(lineno, "entry needs `row col value`"));
        }
        let index = |t: &str, bound: usize| -> Result<usize> {
            let v = t
                .parse::<usize>()
                .map_err(|_| parse_err(lineno, format!("bad index `{t}`")))?;
            if v == 0 || v > bound {
                return Err(parse_err(lineno, format!("index {v} outside 1..={bound}")));
            }
            Ok(v - 1)
        };
        let row = index(toks[0], nrows)?;
        let col = index(toks[1], ncols)?;
        let value: f64 = toks[2]
            .parse()
            .map_err(|_| parse_err(lineno, format!("bad value `{}`", toks[2])))?;
        seen += 1;
        if seen > nnz {
            return Err(parse_err(
                lineno,
                format!("more than the declared {nnz} entries"),
            ));
        }
        triplets.push((row, col, value));
        if symmetric && row != col {
            triplets.push((col, row, value));
        }
    }
    let Some((nrows, ncols, nnz)) = size else {
        return Err(parse_err(lineno, "missing size line"));
    };
    if seen != nnz {
        return Err(parse_err(
            0,
            format!("declared {nnz} entries, found {seen}"),
        ));
    }
    Ok(CooMatrix {
        nrows,
        ncols,
        triplets,
    })
}

/// Writes `general` coordinate format with shortest round-trip values.
pub fn write_matrix_market<W: Write>(out: W, m: &CooMatrix) -> Result<()> {
    let mut out = BufWriter::new(out);
    writeln!(out, "%%MatrixMarket matrix coordinate real general")?;
    writeln!(out, "{} {} {}", m.nrows, m.ncols, m.triplets.len())?;
    for &(r, c, v) in &m.triplets {
        writeln!(out, "{} {} {:e}", r + 1, c + 1, v)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_matrix_market_file(path: impl AsRef<Path>, m: &CooMatrix) -> Result<()> {
    write_matrix_market(File::create(path)?, m)
}

/// Shifted 7-point Laplacian on an `nx * ny * layers` grid.
///
/// Nodes are numbered with the vertical index fastest:
/// `((ix * ny) + iy) * layers + iz`. Off-diagonals are -1 for each grid
/// neighbour and the diagonal is the neighbour count plus one, which keeps
/// the matrix strictly positive definite.
pub fn gen_extruded_laplacian(nx: usize, ny: usize, layers: usize) -> CooMatrix {
    assert!(
        nx >= 1 && ny >= 1 && layers >= 1,
        "grid dimensions must be positive"
    );
    let n = nx * ny * layers;
    let node = |ix: usize, iy: usize, iz: usize| (ix * ny + iy) * layers + iz;
    let mut triplets = Vec::with_capacity(7 * n);
    for ix in 0..nx {
        for iy in 0..ny {
            for iz in 0..layers {
                let me = node(ix, iy, iz);
                let mut neighbours = [None; 6];
                if ix > 0 {
                    neighbours[0] = Some(node(ix - 1, iy, iz));
                }
                if iy > 0 {
                    neighbours[1] = Some(node(ix, iy - 1, iz));
                }
                if iz > 0 {
                    neighbours[2] = Some(node(ix, iy, iz - 1));
                }
                if iz + 1 < layers {
                    neighbours[3] = Some(node(ix, iy, iz + 1));
                }
                if iy + 1 < ny {
                    neighbours[4] = Some(node(ix, iy + 1, iz));
                }
                if ix + 1 < nx {
                    neighbours[5] = Some(node(ix + 1, iy, iz));
                }
                let count = neighbours.iter().flatten().count();
                for &nb in neighbours.iter().flatten() {
                    if nb < me {
                        triplets.push((me, nb, -1.0));
                    }
                }
                triplets.push((me, me, count as f64 + 1.0));
                for &nb in neighbours.iter().flatten() {
                    if nb > me {
                        triplets.push((me, nb, -1.0));
                    }
                }
            }
        }
    }
    CooMatrix {
        nrows: n,
        ncols: n,
        triplets,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SkewedSpec {
    pub n: usize,
    pub heavy_fraction: f64,
    /// Off-diagonal entries in each heavy row.
    pub heavy_nnz: usize,
    /// Off-diagonal entries in each light row.
    pub light_nnz: usize,
    pub seed: u64,
}

/// Symmetric, strictly diagonally dominant matrix where
/// `round(n * heavy_fraction)` randomly chosen rows carry `heavy_nnz`
/// off-diagonal entries and every other row carries `light_nnz`; each row
/// also stores its diagonal.
///
/// The pattern realises that exact degree sequence with a Havel-Hakimi
/// construction, breaking ties pseudorandomly from `seed`.
pub fn gen_skewed(spec: &SkewedSpec) -> Result<CooMatrix> {
    let SkewedSpec {
        n,
        heavy_fraction,
        heavy_nnz,
        light_nnz,
        seed,
    } = *spec;
    if !(0.0..=1.0).contains(&heavy_fraction) {
        return Err(SpmvError::Infeasible(format!(
            "heavy fraction {heavy_fraction} outside [0, 1]"
        )));
    }
    if light_nnz < 1 || heavy_nnz < light_nnz {
        return Err(SpmvError::Infeasible(
            "need heavy_nnz >= light_nnz >= 1".into(),
        ));
    }
    if heavy_nnz >= n {
        return Err(SpmvError::Infeasible(format!(
            "{heavy_nnz} off-diagonal entries do not fit in {n} columns"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let heavy_rows = (n as f64 * heavy_fraction).round() as usize;
    let mut degree = vec![light_nnz; n];
    for i in index::sample(&mut rng, n, heavy_rows) {
        degree[i] = heavy_nnz;
    }
    if degree.iter().sum::<usize>() % 2 == 1 {
        return Err(SpmvError::Infeasible(
            "odd total of off-diagonal entries".into(),
        ));
    }

    // Buckets of vertices keyed by remaining degree.
    let mut remaining = degree.clone();
    let mut buckets: Vec<Vec<usize>> = vec![Vec::new(); heavy_nnz + 1];
    let mut pos = vec![0usize; n];
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    for &v in &order {
        pos[v] = buckets[remaining[v]].len();
        buckets[remaining[v]].push(v);
    }
    let remove = |buckets: &mut Vec<Vec<usize>>, pos: &mut Vec<usize>, v: usize, d: usize| {
        let p = pos[v];
        buckets[d].swap_remove(p);
        if let Some(&moved) = buckets[d].get(p) {
            pos[moved] = p;
        }
    };

    let mut edges: Vec<(usize, usize)> = Vec::with_capacity(degree.iter().sum::<usize>() / 2);
    let mut top = heavy_nnz;
    loop {
        while top > 0 && buckets[top].is_empty() {
            top -= 1;
        }
        if top == 0 {
            break;
        }
        let k = rng.random_range(0..buckets[top].len());
        let v = buckets[top][k];
        let d = remaining[v];
        remove(&mut buckets, &mut pos, v, d);
        remaining[v] = 0;
        buckets[0].push(v);
        pos[v] = buckets[0].len() - 1;

        // Connect to the d vertices with the largest remaining degree.
        let mut chosen = Vec::with_capacity(d);
        let mut level = top;
        while chosen.len() < d {
            if level == 0 {
                return Err(SpmvError::Infeasible(
                    "degree sequence cannot be realised as a simple graph".into(),
                ));
            }
            let need = d - chosen.len();
            let bucket = &buckets[level];
            if bucket.len() <= need {
                chosen.extend(bucket.iter().copied());
            } else {
                chosen.extend(
                    index::sample(&mut rng, bucket.len(), need)
                        .into_iter()
                        .map(|i| bucket[i]),
                );
            }
            level -= 1;
        }
        for u in chosen {
            let du = remaining[u];
            remove(&mut buckets, &mut pos, u, du);
            remaining[u] = du - 1;
            buckets[du - 1].push(u);
            pos[u] = buckets[du - 1].len() - 1;
            edges.push((v.min(u), v.max(u)));
        }
    }

    let mut diag = vec![1.0f64; n];
    let mut triplets = Vec::with_capacity(2 * edges.len() + n);
    edges.sort_unstable();
    for (a, b) in edges {
        let w = rng.random_range(0.1..1.0);
        triplets.push((a, b, -w));
        triplets.push((b, a, -w));
        diag[a] += w;
        diag[b] += w;
    }
    triplets.extend(diag.into_iter().enumerate().map(|(i, d)| (i, i, d)));
    Ok(CooMatrix {
        nrows: n,
        ncols: n,
        triplets,
    })
}
