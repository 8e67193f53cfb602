use mmimo_core::{CMat, C64};
use mmimo_lab::matio;
use proptest::prelude::*;

fn matrix(rows: usize, cols: usize, seed: u64) -> CMat {
    let mut x = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) | 1;
    let mut next = move || {
        x ^= x << 13;
        x ^= x >> 7;
        x ^= x << 17;
        (x as f64 / u64::MAX as f64 - 0.5) * 1e3
    };
    CMat::from_fn(rows, cols, |_, _| C64::new(next(), next()))
}

proptest! {
    #[test]
    fn csv_and_binary_round_trip_exactly(rows in 0usize..7, cols in 0usize..7, seed in any::<u64>()) {
        let dir = std::env::temp_dir().join(format!("mmimo-matio-{}-{rows}-{cols}-{seed}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let a = matrix(rows, cols, seed);
        matio::write_csv(&dir.join("a.csv"), &a).unwrap();
        matio::write_bin(&dir.join("a.bin"), &a).unwrap();
        prop_assert_eq!(&matio::read_csv(&dir.join("a.csv")).unwrap(), &a);
        prop_assert_eq!(&matio::read_bin(&dir.join("a.bin")).unwrap(), &a);
        std::fs::remove_dir_all(&dir).unwrap();
    }
}

#[test]
fn malformed_files_are_rejected() {
    let dir = std::env::temp_dir().join(format!("mmimo-matio-bad-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    std::fs::write(dir.join("short.csv"), "2,2\n1,0\n0,1\n").unwrap();
    assert!(matio::read_csv(&dir.join("short.csv")).is_err());
    std::fs::write(dir.join("junk.bin"), b"NOPE0000").unwrap();
    assert!(matio::read_bin(&dir.join("junk.bin")).is_err());
    std::fs::remove_dir_all(&dir).unwrap();
}
