use imre::checkpoint::{read_store, store_to_bytes};
use imre::container::{
    operator_file, operator_from_file, potential_file, potential_from_file, recording_file, recording_from_file,
    MatrixFile,
};
use imre::som_file;
use imre_core::autodiff::{ParamStore, Tensor};
use imre_core::cardiac::{BodyRecording, HeartPotential};
use imre_core::forge::{ErrorClass, ErrorSpec, ForwardOperator};
use imre_core::som::{LabelMap, SomGrid};
use imre_core::Matrix;
use proptest::prelude::*;

fn matrix(max: usize) -> impl Strategy<Value = Matrix> {
    (1..max, 1..max).prop_flat_map(|(r, c)| {
        prop::collection::vec(-1e6f64..1e6, r * c).prop_map(move |d| Matrix::from_vec(r, c, d))
    })
}

fn through_bytes(f: &MatrixFile) -> MatrixFile {
    MatrixFile::read_from(&mut f.to_bytes().unwrap().as_slice()).unwrap()
}

proptest! {
    #[test]
    fn container_round_trips(
        m in matrix(9),
        meta in prop::collection::btree_map("[a-z_]{1,8}", "[ -~]{0,12}", 0..5),
    ) {
        let mut f = MatrixFile::new(m);
        f.meta = meta;
        prop_assert_eq!(through_bytes(&f), f);
    }

    #[test]
    fn operator_with_spec_round_trips(
        m in matrix(6),
        id in 0u32..1000,
        rot in -10.0f64..10.0,
        shift in -10.0f64..10.0,
        scale in 0.9f64..1.1,
    ) {
        let spec = ErrorSpec::new([rot, -rot, rot], [shift, 0.0, -shift], scale, 0.0, ErrorClass::Compound).unwrap();
        let op = ForwardOperator::new(m, id, Some(spec)).unwrap();
        let back = operator_from_file(through_bytes(&operator_file(&op))).unwrap();
        prop_assert_eq!(back, op);
    }

    #[test]
    fn store_round_trips(
        tensors in prop::collection::vec(
            prop::collection::vec(1usize..4, 0..3).prop_flat_map(|shape| {
                let n = shape.iter().product::<usize>();
                (Just(shape), prop::collection::vec(-5.0f64..5.0, n))
            }),
            0..5,
        ),
    ) {
        let mut store = ParamStore::new();
        for (i, (shape, data)) in tensors.into_iter().enumerate() {
            store.add(format!("t{i}"), Tensor::new(shape, data).unwrap());
        }
        let back = read_store(&mut store_to_bytes(&store).unwrap().as_slice()).unwrap();
        prop_assert_eq!(back, store);
    }

    #[test]
    fn map_round_trips(
        w in 2usize..5,
        h in 2usize..5,
        dim in 1usize..4,
        hits in prop::collection::vec((0usize..16, 0usize..9, 1usize..20), 0..10),
    ) {
        let weights = (0..w * h * dim).map(|i| i as f64 * 0.25 - 1.0).collect();
        let grid = SomGrid::new(w, h, dim, weights).unwrap();
        let mut labels = LabelMap::empty(grid.len());
        for (node, class, count) in hits {
            labels.record(node % grid.len(), class, count);
        }
        let bytes = som_file::to_bytes(&grid, &labels).unwrap();
        let (g, l) = som_file::read_from(&mut bytes.as_slice()).unwrap();
        prop_assert_eq!(g, grid);
        prop_assert_eq!(l, labels);
    }
}

#[test]
fn potentials_and_recordings_keep_their_metadata() {
    let u = HeartPotential::new(Matrix::from_fn(4, 6, |i, j| (i * j) as f64), 0.25).unwrap();
    let f = through_bytes(&potential_file(&u, Some(3)));
    assert_eq!(f.get("pacing_node"), Some("3"));
    assert_eq!(potential_from_file(f).unwrap(), (u.clone(), Some(3)));
    assert_eq!(potential_from_file(through_bytes(&potential_file(&u, None))).unwrap().1, None);

    let y = BodyRecording::new(Matrix::from_fn(5, 6, |i, j| i as f64 - j as f64), 0.25, Some(35.0)).unwrap();
    let f = through_bytes(&recording_file(&y));
    assert_eq!(f.get("snr_db"), Some("35"));
    assert_eq!(recording_from_file(f).unwrap(), y);
}

#[test]
fn files_survive_the_filesystem() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.imo");
    let f = MatrixFile::new(Matrix::identity(3, 3)).with("dt", 1.5);
    f.save(&path).unwrap();
    assert_eq!(MatrixFile::load(&path).unwrap(), f);
    assert!(MatrixFile::load(dir.path().join("missing.imo")).is_err());
}

#[test]
fn operator_without_label_has_no_spec() {
    let op = ForwardOperator::new(Matrix::identity(2, 2), 0, None).unwrap();
    let f = operator_file(&op);
    assert_eq!(f.meta.keys().collect::<Vec<_>>(), ["id"]);
    assert_eq!(operator_from_file(f).unwrap(), op);
}
