use mobile_affect::model_io::{self, encode_records, encoded_len, WeightFileError};
use mobile_affect::{ArchId, Head, Model, ModelGraph, SeededRng};

const HEADS: [Head; 2] = [Head::Emotion, Head::ValenceArousal];

#[test]
fn save_load_save_is_bit_identical_for_every_combination() {
    let dir = tempfile::tempdir().unwrap();
    for (i, arch) in ArchId::ALL.into_iter().enumerate() {
        for head in HEADS {
            let model = Model::<f32>::build(arch, head, &mut SeededRng::new(i as u64)).unwrap();
            let path = dir.path().join(format!("{arch}-{head}.afwt"));
            let written = model_io::save(&model, &path).unwrap();
            let first = std::fs::read(&path).unwrap();
            assert_eq!(written, first.len() as u64);
            assert_eq!(written, encoded_len(model.graph()).unwrap());

            let loaded = model_io::load(&path).unwrap();
            assert_eq!(loaded, model, "{arch} {head}");
            let again = dir.path().join("again.afwt");
            model_io::save(&loaded, &again).unwrap();
            assert_eq!(std::fs::read(&again).unwrap(), first, "{arch} {head}");
        }
    }
}

#[test]
fn any_flipped_byte_is_rejected() {
    let model = Model::<f32>::build(ArchId::MobileNet, Head::ValenceArousal, &mut SeededRng::new(8)).unwrap();
    let bytes = model_io::to_bytes(&model).unwrap();
    let n = bytes.len();
    for pos in [0, 5, 9, 40, n / 3, n / 2, n - 5, n - 1] {
        let mut bad = bytes.clone();
        bad[pos] ^= 0x10;
        let err = model_io::from_bytes(&bad).unwrap_err();
        assert!(matches!(err, WeightFileError::Checksum { .. }), "byte {pos}: {err}");
    }
    assert!(model_io::from_bytes(&bytes[..n - 7]).is_err());
    assert!(model_io::from_bytes(&[]).is_err());
}

#[test]
fn header_and_tensors_from_different_architectures_conflict() {
    let arch3 = Model::<f32>::build(ArchId::MobileNet, Head::Emotion, &mut SeededRng::new(1)).unwrap();
    let records: Vec<(String, &mobile_affect::Tensor<f32>)> = arch3.named_tensors();
    let forged = encode_records(ArchId::VggNet.as_str(), Head::Emotion, &records).unwrap();
    match model_io::from_bytes(&forged) {
        Err(WeightFileError::ShapeConformance { tensor, expected, found }) => {
            assert_eq!(tensor, "b00.conv.weight");
            assert_eq!(expected, [3, 3, 3, 16]);
            assert_eq!(found, [3, 3, 3, 32]);
        }
        other => panic!("expected a conformance error, got {other:?}"),
    }
}

#[test]
fn head_tag_must_match_tensor_shapes() {
    let emotion = Model::<f32>::build(ArchId::AlexNet, Head::Emotion, &mut SeededRng::new(1)).unwrap();
    let forged = encode_records(ArchId::AlexNet.as_str(), Head::ValenceArousal, &emotion.named_tensors()).unwrap();
    assert!(matches!(model_io::from_bytes(&forged), Err(WeightFileError::ShapeConformance { .. })));
}

#[test]
fn size_budget_in_decimal_megabytes() {
    let mb = |arch| encoded_len(&ModelGraph::build(arch, Head::Emotion)).unwrap() as f64 / 1e6;
    let (a1, a2, a3) = (mb(ArchId::AlexNet), mb(ArchId::VggNet), mb(ArchId::MobileNet));
    assert!((a2 / 15.0 - 1.0).abs() <= 0.05, "arch2 {a2} MB");
    assert!((a3 / 13.2 - 1.0).abs() <= 0.05, "arch3 {a3} MB");
    assert!(a3 < a1 && a1 < a2, "{a1} {a2} {a3}");
    assert!(a2 <= 15.0);
}

#[test]
fn info_reports_counts_and_size() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.afwt");
    let model = Model::<f32>::build(ArchId::VggNet, Head::Emotion, &mut SeededRng::new(3)).unwrap();
    model_io::save(&model, &path).unwrap();
    let info = model_io::model_info(&path).unwrap();
    assert_eq!(info.arch_id, "arch2-vggnet");
    assert_eq!(info.total_params, 3_746_872);
    assert_eq!(info.bytes, std::fs::metadata(&path).unwrap().len());
    assert!(info.table().contains("total params: 3746872"));
}
