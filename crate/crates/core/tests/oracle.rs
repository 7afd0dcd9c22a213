use conetree::operator::{build_adjacency, realize_on_tree, OperatorParams};
use conetree::oracle::{assemble_matrix, spectral_measure, Resolvent};
use conetree::spectral::{extend_to_full_green, off_diagonal_green, truncated_green_on_tree, LeafSeed};
use conetree::{Complex64, SubstitutionMatrix, TruncatedTree};

#[test]
fn binary_depth_twelve_root_entry() {
    let m = SubstitutionMatrix::from_rows(vec![vec![2]]).unwrap();
    let tree = TruncatedTree::build(&m, 0, 12).unwrap();
    let vo = realize_on_tree(&build_adjacency(&m), &tree).unwrap();
    let z = Complex64::new(0.3, 0.5);
    let gamma = truncated_green_on_tree(&vo, z, LeafSeed::Free);
    let mat = assemble_matrix(&vo).unwrap();
    let r = Resolvent::new(&mat, z).unwrap();
    let root = mat.index(0);
    assert!((r.entry(root, root) - gamma[0]).norm() < 1e-10);
}

#[test]
fn vertex_green_functions_match_oracle() {
    let m = SubstitutionMatrix::from_rows(vec![vec![1, 2], vec![1, 1]]).unwrap();
    let p = OperatorParams::new(vec![vec![1.0, 0.5], vec![2.0, 1.5]], vec![0.3, -0.4]).unwrap();
    let tree = TruncatedTree::build(&m, 0, 6).unwrap();
    let vo = realize_on_tree(&p, &tree).unwrap();
    let z = Complex64::new(-0.2, 0.3);
    let gamma = truncated_green_on_tree(&vo, z, LeafSeed::Free);
    let full = extend_to_full_green(&vo, &gamma).unwrap();
    let mat = assemble_matrix(&vo).unwrap();
    let r = Resolvent::new(&mat, z).unwrap();
    for v in [0, 1, 2, 5, tree.len() - 1] {
        let g = r.entry(mat.index(v), mat.index(v));
        assert!((g - full[v]).norm() < 1e-10, "vertex {v}");
    }
    let y = tree.len() - 1;
    let path = tree.path_from_root(y);
    for &x in &path {
        let want = r.entry(mat.index(x), mat.index(y));
        let got = off_diagonal_green(&vo, &gamma, &full, x, y).unwrap();
        assert!((got - want).norm() < 1e-10, "pair {x} {y}");
    }
}

#[test]
fn resolvent_agrees_with_eigensolve() {
    let m = SubstitutionMatrix::from_rows(vec![vec![2, 1], vec![1, 1]]).unwrap();
    let tree = TruncatedTree::build(&m, 1, 6).unwrap();
    let vo = realize_on_tree(&build_adjacency(&m), &tree).unwrap();
    let mat = assemble_matrix(&vo).unwrap();
    let mu = spectral_measure(&mat, 0).unwrap();
    assert!((mu.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    for z in [Complex64::new(0.1, 0.2), Complex64::new(-2.5, 0.05), Complex64::new(1.3, 1.0)] {
        let r = Resolvent::new(&mat, z).unwrap();
        let root = mat.index(0);
        assert!((r.entry(root, root) - mu.stieltjes(z)).norm() < 1e-8);
    }
}
