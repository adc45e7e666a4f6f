use hybrid_spmv::genio::{gen_extruded_laplacian, gen_skewed, SkewedSpec};
use hybrid_spmv::CsrMatrix;
use nalgebra::{DMatrix, SymmetricEigen};

fn dense(a: &CsrMatrix) -> DMatrix<f64> {
    let mut d = DMatrix::zeros(a.nrows(), a.ncols());
    for (i, j, v) in a.triplets() {
        d[(i, j)] += v;
    }
    d
}

fn assert_symmetric(a: &CsrMatrix) {
    for (i, j, v) in a.triplets() {
        assert_eq!(a.get(j, i), Some(v), "entry ({i},{j}) has no mirror");
    }
}

#[test]
fn extruded_is_symmetric_positive_definite() {
    for (nx, ny, layers) in [(1, 1, 2), (2, 2, 1), (3, 2, 4), (4, 4, 4), (2, 5, 3)] {
        let a = gen_extruded_laplacian(nx, ny, layers).to_csr().unwrap();
        assert_eq!(a.nrows(), nx * ny * layers);
        assert_symmetric(&a);
        let eig = SymmetricEigen::new(dense(&a));
        let min = eig
            .eigenvalues
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        // Laplacian plus identity: spectrum bounded below by one
        assert!(
            min >= 1.0 - 1e-10,
            "{nx}x{ny}x{layers}: min eigenvalue {min}"
        );
    }
}

#[test]
fn extruded_shifted_chain() {
    let a = gen_extruded_laplacian(1, 1, 2).to_csr().unwrap();
    assert_eq!(
        dense(&a),
        DMatrix::from_row_slice(2, 2, &[2.0, -1.0, -1.0, 2.0])
    );
}

#[test]
fn extruded_row_sums_are_one() {
    let a = gen_extruded_laplacian(5, 4, 6).to_csr().unwrap();
    let y = a.mul_vec(&vec![1.0; a.ncols()]).unwrap();
    assert!(y.iter().all(|&v| v == 1.0));
}

#[test]
fn extruded_nnz_counts_edges() {
    // n nodes plus two entries per grid edge
    for (nx, ny, l) in [(2, 2, 1), (3, 4, 5), (8, 8, 8)] {
        let edges = (nx - 1) * ny * l + nx * (ny - 1) * l + nx * ny * (l - 1);
        assert_eq!(
            gen_extruded_laplacian(nx, ny, l).nnz(),
            nx * ny * l + 2 * edges
        );
    }
}

#[test]
fn skewed_is_symmetric_and_dominant() {
    let spec = SkewedSpec {
        n: 60,
        heavy_fraction: 0.2,
        heavy_nnz: 20,
        light_nnz: 3,
        seed: 9,
    };
    let a = gen_skewed(&spec).unwrap().to_csr().unwrap();
    assert_symmetric(&a);
    for i in 0..a.nrows() {
        let (cols, vals) = a.row(i);
        let off: f64 = cols
            .iter()
            .zip(vals)
            .filter(|(&c, _)| c != i)
            .map(|(_, v)| v.abs())
            .sum();
        assert!(a.get(i, i).unwrap() > off);
    }
    let eig = SymmetricEigen::new(dense(&a));
    assert!(eig.eigenvalues.iter().all(|&l| l > 0.0));
}

#[test]
fn skewed_heavy_row_histogram() {
    let spec = SkewedSpec {
        n: 100,
        heavy_fraction: 0.1,
        heavy_nnz: 50,
        light_nnz: 5,
        seed: 0,
    };
    let a = gen_skewed(&spec).unwrap().to_csr().unwrap();
    let counts: Vec<usize> = (0..100).map(|i| a.row_nnz(i)).collect();
    assert_eq!(counts.iter().filter(|&&c| c == 51).count(), 10);
    assert_eq!(counts.iter().filter(|&&c| c == 6).count(), 90);
}

#[test]
fn skewed_seed_is_reproducible() {
    let spec = SkewedSpec {
        n: 80,
        heavy_fraction: 0.1,
        heavy_nnz: 30,
        light_nnz: 4,
        seed: 42,
    };
    let a = gen_skewed(&spec).unwrap();
    assert_eq!(a, gen_skewed(&spec).unwrap());
    let other = gen_skewed(&SkewedSpec { seed: 43, ..spec }).unwrap();
    assert_ne!(a, other);
}
