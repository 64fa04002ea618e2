use mcroute_gpn::checkpoint::Checkpoint;
use mcroute_gpn::{ModelConfig, ModelParams};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn checkpoint() -> Checkpoint {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let p = ModelParams::init(&ModelConfig::default(), &mut rng).unwrap();
    Checkpoint::new(p, 1000, rng)
}

#[test]
fn file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ckpt");
    let c = checkpoint();
    c.save(&path).unwrap();
    assert_eq!(Checkpoint::load(&path).unwrap(), c);
    let bytes = std::fs::read(&path).unwrap();
    c.save(&path).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), bytes);
}

#[test]
fn truncated_block_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ckpt");
    let bytes = checkpoint().to_bytes();
    // W2 is the second-to-last block; cut inside its data.
    let w3 = 2 + 2 + 8 + 128 * 128 * 4;
    let cut = bytes.len() - w3 - 1000;
    std::fs::write(&path, &bytes[..cut]).unwrap();
    let err = Checkpoint::load(&path).unwrap_err().to_string();
    assert!(err.contains("block W2: expected 65536 bytes"), "{err}");
}

#[test]
fn config_mismatch_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ckpt");
    checkpoint().save(&path).unwrap();
    let other = ModelConfig::default().with_variant("gcn").unwrap();
    let err = Checkpoint::load_expecting(&path, &other).unwrap_err().to_string();
    assert!(err.contains("config mismatch"), "{err}");
    assert!(Checkpoint::load_expecting(&path, &ModelConfig::default()).is_ok());
}

#[test]
fn garbage_is_rejected() {
    assert!(Checkpoint::from_bytes(b"hello").is_err());
    let mut b = checkpoint().to_bytes();
    b.push(0);
    assert!(Checkpoint::from_bytes(&b).unwrap_err().to_string().contains("trailing"));
}
