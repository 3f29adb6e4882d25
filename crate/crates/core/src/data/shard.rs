//! Seeded, platform-stable assignment of users to devices.

/// 64-bit FNV-1a of the id, mixed with the seed through a splitmix64
/// finalizer. Stable across platforms and toolchains.
fn stable_hash(id: &str, seed: u64) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in id.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    let mut x = h ^ seed.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Device that owns `id` among `devices` devices.
pub fn shard_index(id: &str, devices: usize, seed: u64) -> usize {
    assert!(devices >= 1, "at least one device required");
    (stable_hash(id, seed) % devices as u64) as usize
}

/// Partitions `records` across `devices` shards by hashing the key; the
/// relative order of records is kept inside each shard.
pub fn shard<T, F>(records: Vec<T>, devices: usize, seed: u64, key: F) -> Vec<Vec<T>>
where
    F: Fn(&T) -> &str,
{
    let mut out: Vec<Vec<T>> = (0..devices).map(|_| Vec::new()).collect();
    for r in records {
        let idx = shard_index(key(&r), devices, seed);
        out[idx].push(r);
    }
    out
}
