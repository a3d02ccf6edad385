use dudo::report::{read_table, write_losses, write_metrics, LOSS_HEADER, METRICS_HEADER};
use dudo::tensor_io::{decode, encode, encode_pgm, load_tensor, peek_dtype, save_pgm, save_tensor};
use dudo_core::mri::RefQuality;
use dudo_core::train::MetricRecord;
use dudo_core::{DType, Tensor};
use proptest::prelude::*;

fn shape_and_data() -> impl Strategy<Value = (Vec<usize>, Vec<f64>)> {
    prop::collection::vec(1usize..5, 0..4).prop_flat_map(|shape| {
        let n = shape.iter().product::<usize>();
        (Just(shape), prop::collection::vec(-1e6f64..1e6, n))
    })
}

proptest! {
    #[test]
    fn f64_tensors_roundtrip_exactly((shape, data) in shape_and_data()) {
        let t = Tensor::new(&shape, data).unwrap();
        let bytes = encode(&t);
        prop_assert_eq!(peek_dtype(&bytes).unwrap(), DType::F64);
        let back: Tensor<f64> = decode(&bytes).unwrap();
        prop_assert_eq!(back.shape(), t.shape());
        prop_assert_eq!(back.data(), t.data());
    }

    #[test]
    fn f32_tensors_roundtrip_exactly((shape, data) in shape_and_data()) {
        let t: Tensor<f32> = Tensor::new(&shape, data.iter().map(|&v| v as f32).collect()).unwrap();
        let bytes = encode(&t);
        prop_assert_eq!(bytes.len(), 8 + 4 * shape.len() + 4 * t.numel());
        let back: Tensor<f32> = decode(&bytes).unwrap();
        prop_assert_eq!(back.data(), t.data());
        let widened: Tensor<f64> = decode(&bytes).unwrap();
        for (a, b) in widened.data().iter().zip(t.data()) {
            prop_assert_eq!(*a, *b as f64);
        }
    }

    #[test]
    fn pgm_pixels_are_clipped_and_scaled(values in prop::collection::vec(-2.0f64..3.0, 12)) {
        let img = encode_pgm(&values, 3, 4);
        let header = b"P5\n4 3\n255\n";
        prop_assert_eq!(&img[..header.len()], header);
        for (&v, &p) in values.iter().zip(&img[header.len()..]) {
            prop_assert_eq!(p, (v.clamp(0.0, 1.0) * 255.0).round() as u8);
        }
    }
}

#[test]
fn header_layout() {
    let t = Tensor::new(&[2, 3], vec![1.0f64, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
    let b = encode(&t);
    assert_eq!(&b[..8], b"DDUT\x01\x01\x02\x00");
    assert_eq!(&b[8..16], &[2, 0, 0, 0, 3, 0, 0, 0]);
    assert_eq!(&b[16..24], &1.0f64.to_le_bytes());
    let t32 = Tensor::new(&[1], vec![0.5f32]).unwrap();
    assert_eq!(&encode(&t32)[4..8], &[1, 0, 1, 0]);
}

#[test]
fn malformed_files_are_rejected() {
    let good = encode(&Tensor::new(&[2], vec![1.0f64, 2.0]).unwrap());
    let mut bad_magic = good.clone();
    bad_magic[0] = b'X';
    let mut bad_version = good.clone();
    bad_version[4] = 2;
    let mut bad_dtype = good.clone();
    bad_dtype[5] = 7;
    let mut bad_reserved = good.clone();
    bad_reserved[7] = 1;
    for b in [bad_magic, bad_version, bad_dtype, bad_reserved, good[..good.len() - 1].to_vec(), good[..6].to_vec()] {
        assert!(decode::<f64>(&b).is_err());
    }
}

#[test]
fn files_and_previews_on_disk() {
    let dir = tempfile::tempdir().unwrap();
    let t = Tensor::from_fn(&[2, 4, 4], |i| i as f64 / 32.0);
    let path = dir.path().join("t.ddut");
    save_tensor(&path, &t).unwrap();
    assert_eq!(load_tensor::<f64>(&path).unwrap().data(), t.data());
    save_pgm(&dir.path().join("t.pgm"), &t).unwrap();
    let pgm = std::fs::read(dir.path().join("t.pgm")).unwrap();
    assert_eq!(pgm.len(), b"P5\n4 4\n255\n".len() + 16);
    assert!(save_pgm(&dir.path().join("x.pgm"), &Tensor::<f64>::zeros(&[3, 2, 2])).is_err());
    let missing = load_tensor::<f64>(&dir.path().join("nope.ddut")).unwrap_err();
    assert_eq!(missing.exit_code(), 3);
}

#[test]
fn csv_tables_use_lf_and_inf() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.csv");
    let rec = |psnr_db| MetricRecord { condition: RefQuality::Lq, accel: 4.0, seed: 7, psnr_db, ssim: 1.0 };
    write_metrics(&path, &[rec(f64::INFINITY), rec(31.5)]).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text, "condition,accel,seed,psnr_db,ssim\nLQ,4,7,inf,1\nLQ,4,7,31.5,1\n");
    let (header, rows) = read_table(&path).unwrap();
    assert_eq!(header, METRICS_HEADER);
    assert_eq!(rows.len(), 2);

    let path = dir.path().join("l.csv");
    write_losses(&path, &[2.5, 1.25]).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text, "step,loss\n0,2.5\n1,1.25\n");
    assert!(!text.contains('\r'));
    assert_eq!(read_table(&path).unwrap().0, LOSS_HEADER);
}
