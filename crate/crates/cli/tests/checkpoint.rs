use antideriv_cli::{Checkpoint, CheckpointError, CheckpointMethod};
use antideriv_core::{field_init, FieldConfig, Method};
use proptest::prelude::*;

fn sample(method: Method, d: usize, k: u32) -> Checkpoint {
    let mut cfg = FieldConfig::new(d, method.field_outputs(d, k, 1));
    cfg.hidden_width = 5;
    cfg.hidden_layers = 2;
    cfg.pe_bands = 2;
    Checkpoint::from_field(method, k, 1, &field_init(cfg, 3).unwrap())
}

fn bytes(ck: &Checkpoint) -> Vec<u8> {
    let mut b = Vec::new();
    ck.write_to(&mut b).unwrap();
    b
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn round_trip_is_bit_exact(
        d in 1usize..=3,
        k in 1u32..=3,
        m in 1usize..=2,
        method in prop::sample::select(Method::ALL.to_vec()),
        width in 1usize..=12,
        layers in 1usize..=3,
        bands in 0usize..=4,
        seed in any::<u64>(),
    ) {
        let norm = method.pe_norm_order(d, k);
        let cfg = FieldConfig {
            in_dims: d,
            out_dims: method.field_outputs(d, k, m),
            hidden_layers: layers,
            hidden_width: width,
            pe_bands: bands,
            pe_normalized: norm.is_some(),
            pe_norm_order: norm.unwrap_or(0),
        };
        let field = field_init(cfg.clone(), seed).unwrap();
        let ck = Checkpoint::from_field(method, k, m, &field);
        let b = bytes(&ck);
        let back = Checkpoint::from_bytes(&b).unwrap();
        prop_assert_eq!(&back, &ck);
        prop_assert_eq!(bytes(&back), b);
        let restored = back.field().unwrap().unwrap();
        prop_assert_eq!(restored.config(), &cfg);
        for (a, b) in restored.theta().iter().zip(field.theta()) {
            prop_assert_eq!(a.to_bits(), f64::from(*b as f32).to_bits());
        }
    }
}

#[test]
fn header_layout() {
    let ck = sample(Method::AdReduc, 2, 2);
    let b = bytes(&ck);
    let text = String::from_utf8_lossy(&b[..b.iter().position(|&c| c == b'\n').unwrap()]).into_owned();
    assert_eq!(text, "NADF1");
    let rest = &b[6..];
    let header = std::str::from_utf8(&rest[..rest.iter().position(|&c| c == b'\n').unwrap()]).unwrap();
    assert_eq!(header, format!("2 2 1 ad_reduc 2 0 5 2 {}", ck.theta.len()));
}

#[test]
fn distinct_errors() {
    let b = bytes(&sample(Method::AdNaive, 1, 1));
    assert!(matches!(Checkpoint::from_bytes(b"PK\x03\x04"), Err(CheckpointError::NotACheckpoint)));
    let mut v2 = b.clone();
    v2[4] = b'2';
    assert!(matches!(Checkpoint::from_bytes(&v2), Err(CheckpointError::VersionMismatch { .. })));
    let cut = &b[..b.len() - 3];
    match Checkpoint::from_bytes(cut) {
        Err(e @ CheckpointError::TruncatedPayload { .. }) => assert!(e.to_string().starts_with("truncated payload")),
        other => panic!("{other:?}"),
    }
    let bad = String::from_utf8_lossy(&b).replacen("ad_naive", "ad_great", 1).into_bytes();
    assert!(matches!(Checkpoint::from_bytes(&bad), Err(CheckpointError::CorruptHeader(_))));
    let bad = String::from_utf8_lossy(&b[..30]).replacen(" 5 2 ", " 6 2 ", 1);
    let mut bad = bad.into_bytes();
    bad.extend_from_slice(&b[30..]);
    assert!(matches!(Checkpoint::from_bytes(&bad), Err(CheckpointError::CorruptHeader(_))));
}

#[test]
fn oracle_pseudo_checkpoint() {
    let ck = Checkpoint::oracle(2, 3, 1);
    let b = bytes(&ck);
    assert!(b.ends_with(b"2 3 1 oracle 0 0 0 0 0\n"));
    let back = Checkpoint::from_bytes(&b).unwrap();
    assert_eq!(back.method, CheckpointMethod::Oracle);
    assert!(back.field().is_none());
}
