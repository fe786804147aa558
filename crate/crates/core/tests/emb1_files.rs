use subspace_embed::emb::EmbeddingSet;
use subspace_embed::io::{read_emb1, write_emb1};
use subspace_embed::Error;

const SINGLE_RECORD: [u8; 29] = [
    b'E', b'M', b'B', b'1', // magic
    1, 0, 0, 0, // version
    2, 0, 0, 0, // dim
    1, 0, 0, 0, // count
    1, 0, 0, 0, b'a', // name
    0x00, 0x00, 0x80, 0x3f, // 1.0f32
    0x00, 0x00, 0x00, 0xc0, // -2.0f32
];

#[test]
fn single_record_file_is_byte_exact() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.emb1");
    let set = EmbeddingSet::from_pairs([("a", vec![1.0, -2.0])]).unwrap();
    write_emb1(&set, &path).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), SINGLE_RECORD);
    assert_eq!(read_emb1(&path).unwrap(), set);
}

#[test]
fn f32_values_survive_disk_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("many.emb1");
    let values = [0.1f32, -3.5e-20, 7.25e30, f32::MIN_POSITIVE, -0.0];
    let set = EmbeddingSet::from_pairs((0..4).map(|i| {
        (
            format!("été-{i}"),
            values.iter().map(|&v| f64::from(v * (i as f32 + 1.0))).collect(),
        )
    }))
    .unwrap();
    write_emb1(&set, &path).unwrap();
    let back = read_emb1(&path).unwrap();
    for (a, b) in set.iter().zip(back.iter()) {
        assert_eq!(a.name, b.name);
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a.vector), bits(&b.vector));
    }
}

#[test]
fn missing_and_truncated_files() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.emb1");
    let err = read_emb1(&missing).unwrap_err();
    assert!(err.is_validation());
    assert!(err.to_string().contains("nope.emb1"), "{err}");

    let cut = dir.path().join("cut.emb1");
    std::fs::write(&cut, &SINGLE_RECORD[..27]).unwrap();
    assert!(matches!(read_emb1(&cut), Err(Error::Truncated)));
}
