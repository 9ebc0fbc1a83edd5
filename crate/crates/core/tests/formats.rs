use edenet::formats::*;
use edenet::gpr_sim::{make_dataset, Pose, SimConfig};
use edenet::net::Descriptor;
use edenet::numerics::Tensor;
use edenet::Error;
use proptest::prelude::*;
use serde_json::json;

fn f32_values(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(any::<f32>().prop_filter("finite", |v| v.is_finite()), len)
        .prop_map(|v| v.into_iter().map(f64::from).collect())
}

fn gsf_frames() -> impl Strategy<Value = Tensor> {
    (1usize..6, 1usize..9, 1usize..4).prop_flat_map(|(s, d, c)| {
        f32_values(s * d * c).prop_map(move |data| Tensor::new(&[s, d, c], data).unwrap())
    })
}

fn ntc_tensor() -> impl Strategy<Value = Tensor> {
    prop::collection::vec(1usize..5, 1..4).prop_flat_map(|shape| {
        let n = shape.iter().product();
        f32_values(n).prop_map(move |data| Tensor::new(&shape, data).unwrap())
    })
}

#[test]
fn gsf_file_size_follows_the_header_formula() {
    let sim = SimConfig {
        depth_bins: 128,
        channels: 3,
        ..SimConfig::default()
    };
    let ds = make_dataset(0, 50, &sim, 4.0, 5.0, 0.3).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("map.gsf");
    save_sequence(&path, &ds.map).unwrap();
    let len = std::fs::metadata(&path).unwrap().len() as usize;
    assert_eq!(len, 20 + 4 * 50 * 128 * 3);
    let csv = std::fs::read_to_string(sidecar_path(&path)).unwrap();
    assert_eq!(csv.lines().count(), 51);
    assert_eq!(csv.lines().next(), Some("frame,utm_x,utm_y"));
    assert_eq!(load_sequence(&path).unwrap(), ds.map);
}

#[test]
fn sequence_with_short_pose_file_is_rejected() {
    let ds = make_dataset(1, 10, &SimConfig::default(), 4.0, 4.0, 0.0).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("q.gsf");
    save_sequence(&path, &ds.queries).unwrap();
    let csv = std::fs::read_to_string(sidecar_path(&path)).unwrap();
    let short: Vec<&str> = csv.lines().take(5).collect();
    std::fs::write(sidecar_path(&path), short.join("\n")).unwrap();
    assert!(matches!(load_sequence(&path), Err(Error::Format(_))));
}

#[test]
fn gsf_header_fields() {
    let t = Tensor::filled(&[3, 5, 2], 1.5);
    let mut buf = Vec::new();
    write_gsf(&mut buf, &t).unwrap();
    let word = |i: usize| u32::from_le_bytes(buf[i..i + 4].try_into().unwrap());
    assert_eq!(&buf[..4], b"GPRS");
    assert_eq!((word(4), word(8), word(12), word(16)), (1, 3, 5, 2));
    assert_eq!(&buf[20..24], &1.5f32.to_le_bytes());
    let mut bad = buf.clone();
    bad[4] = 2;
    assert!(matches!(read_gsf(&mut &bad[..]), Err(Error::Format(_))));
}

#[test]
fn descriptor_set_round_trip() {
    let entries: Vec<(Descriptor, Pose, u64)> = (0..7u64)
        .map(|i| {
            let v: Vec<f64> = (0..5).map(|j| ((i * 5 + j) as f64).sin()).collect();
            let d = Descriptor::normalized(v).unwrap();
            let d = Descriptor::new(d.values().iter().map(|&x| x as f32 as f64).collect()).unwrap();
            (
                d,
                Pose::new(587_000.0 + i as f64 * 0.37, 4_477_000.123_456_789),
                i + 4,
            )
        })
        .collect();
    let set = DescriptorSet {
        entries,
        metadata: json!({"window": 12}),
    };
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.ntc");
    set.save(&path).unwrap();
    assert_eq!(DescriptorSet::load(&path).unwrap(), set);
    let empty = DescriptorSet {
        entries: vec![],
        metadata: json!(null),
    };
    assert!(matches!(empty.save(&path), Err(Error::Usage(_))));
}

proptest! {
    #[test]
    fn gsf_round_trips_bit_exactly(frames in gsf_frames()) {
        let mut buf = Vec::new();
        write_gsf(&mut buf, &frames).unwrap();
        prop_assert_eq!(buf.len(), GSF_HEADER_LEN + 4 * frames.len());
        let back = read_gsf(&mut &buf[..]).unwrap();
        prop_assert_eq!(back.shape(), frames.shape());
        let bits = |t: &Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        prop_assert_eq!(bits(&back), bits(&frames));
    }

    #[test]
    fn ntc_round_trips_bit_exactly(
        tensors in prop::collection::vec(ntc_tensor(), 0..4),
        step in any::<u32>(),
        tag in "[a-z]{0,12}",
    ) {
        let ntc = Ntc {
            tensors: tensors
                .into_iter()
                .enumerate()
                .map(|(i, t)| (format!("{tag}.t{i}"), t))
                .collect(),
            metadata: json!({"step": step, "tag": tag}),
        };
        let mut buf = Vec::new();
        ntc.write(&mut buf).unwrap();
        let back = Ntc::read(&mut &buf[..]).unwrap();
        prop_assert_eq!(&back, &ntc);
        let mut again = Vec::new();
        back.write(&mut again).unwrap();
        prop_assert_eq!(again, buf);
    }

    #[test]
    fn pose_csv_round_trips(rows in prop::collection::vec(
        (any::<u64>(), -1e7f64..1e7, -1e7f64..1e7), 0..20)
    ) {
        let rows: Vec<(u64, Pose)> = rows.into_iter().map(|(i, x, y)| (i, Pose::new(x, y))).collect();
        let mut buf = Vec::new();
        write_pose_csv(&mut buf, &rows).unwrap();
        prop_assert_eq!(read_pose_csv(&buf[..]).unwrap(), rows);
    }

    #[test]
    fn truncated_ntc_is_an_error(cut in 1usize..40) {
        let ntc = Ntc {
            tensors: vec![("w".into(), Tensor::filled(&[2, 3], 0.25))],
            metadata: json!({"k": 1}),
        };
        let mut buf = Vec::new();
        ntc.write(&mut buf).unwrap();
        let cut = cut.min(buf.len() - 1);
        prop_assert!(Ntc::read(&mut &buf[..buf.len() - cut]).is_err());
    }
}
