use proptest::prelude::*;

use centerquant::harness::io::{decode_csv, decode_npy, encode_csv, encode_npy, NpyDtype};
use centerquant::harness::{load_tensor, save_tensor};
use centerquant::Tensor2D;

fn tensor() -> impl Strategy<Value = Tensor2D> {
    (1usize..12, 1usize..12).prop_flat_map(|(r, c)| {
        prop::collection::vec(
            prop_oneof![-1e6f64..1e6, -1e-6f64..1e-6, Just(0.0), Just(-0.0), Just(f64::MIN_POSITIVE)],
            r * c,
        )
        .prop_map(move |v| Tensor2D::new(r, c, v).unwrap())
    })
}

proptest! {
    #[test]
    fn npy_f64_round_trip_is_bit_exact(x in tensor()) {
        let y = decode_npy(&encode_npy(&x, NpyDtype::F64)).unwrap();
        prop_assert_eq!(y.shape(), x.shape());
        for (a, b) in x.data().iter().zip(y.data()) {
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn npy_f32_widens_exactly(x in tensor()) {
        let narrowed = Tensor2D::new(x.rows(), x.cols(), x.data().iter().map(|v| *v as f32 as f64).collect()).unwrap();
        let y = decode_npy(&encode_npy(&narrowed, NpyDtype::F32)).unwrap();
        prop_assert_eq!(y, narrowed);
    }

    #[test]
    fn csv_round_trip(x in tensor()) {
        let y = decode_csv(&encode_csv(&x)).unwrap();
        prop_assert_eq!(y.shape(), x.shape());
        for (a, b) in x.data().iter().zip(y.data()) {
            prop_assert_eq!(a, b);
        }
    }
}

#[test]
fn files_by_extension() {
    let dir = tempfile::tempdir().unwrap();
    let x = Tensor2D::from_fn(8, 8, |r, c| (r as f64 - 3.5) * 0.1 + c as f64 / 7.0).unwrap();
    for name in ["a.npy", "a.csv"] {
        let p = dir.path().join(name);
        save_tensor(&x, &p).unwrap();
        assert_eq!(load_tensor(&p).unwrap(), x);
    }
    let e = save_tensor(&x, &dir.path().join("a.txt")).unwrap_err();
    assert_eq!(e.exit_code(), 3);
}

#[test]
fn one_dimensional_npy_names_rank_two() {
    let header = "{'descr': '<f8', 'fortran_order': False, 'shape': (3,), }";
    let mut h = header.to_string();
    while (10 + h.len() + 1) % 64 != 0 {
        h.push(' ');
    }
    h.push('\n');
    let mut bytes = b"\x93NUMPY\x01\x00".to_vec();
    bytes.extend_from_slice(&(h.len() as u16).to_le_bytes());
    bytes.extend_from_slice(h.as_bytes());
    for v in [1.0f64, 2.0, 3.0] {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    let msg = decode_npy(&bytes).unwrap_err().to_string();
    assert!(msg.contains("expected rank 2"), "{msg}");
    assert!(msg.contains("found rank 1"), "{msg}");
}
