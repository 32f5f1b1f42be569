//! Minimal Keccak-f[1600] sponge for SHA3-256, used only as a test oracle.
//! Round constants come from the LFSR in FIPS 202 rather than a table.

const RATE: usize = 136;

fn rc_bit(t: usize) -> u64 {
    let mut r: u8 = 1;
    for _ in 0..t % 255 {
        let hi = r & 0x80;
        r <<= 1;
        if hi != 0 {
            r ^= 0x71;
        }
    }
    (r & 1) as u64
}

fn round_constants() -> [u64; 24] {
    std::array::from_fn(|ir| {
        (0..7).fold(0u64, |rc, j| {
            rc | (rc_bit(j + 7 * ir) << ((1usize << j) - 1))
        })
    })
}

fn keccak_f(a: &mut [u64; 25], rc: &[u64; 24]) {
    // Rotation offsets derived by walking (x, y) -> (y, 2x + 3y).
    let mut rho = [0u32; 25];
    let (mut x, mut y) = (1usize, 0usize);
    for t in 0..24u32 {
        rho[x + 5 * y] = ((t + 1) * (t + 2) / 2) % 64;
        (x, y) = (y, (2 * x + 3 * y) % 5);
    }
    for &k in rc {
        let c: [u64; 5] = std::array::from_fn(|x| (0..5).fold(0, |acc, y| acc ^ a[x + 5 * y]));
        for x in 0..5 {
            let d = c[(x + 4) % 5] ^ c[(x + 1) % 5].rotate_left(1);
            for y in 0..5 {
                a[x + 5 * y] ^= d;
            }
        }
        let mut b = [0u64; 25];
        for x in 0..5 {
            for y in 0..5 {
                b[y + 5 * ((2 * x + 3 * y) % 5)] = a[x + 5 * y].rotate_left(rho[x + 5 * y]);
            }
        }
        for x in 0..5 {
            for y in 0..5 {
                a[x + 5 * y] = b[x + 5 * y] ^ (!b[(x + 1) % 5 + 5 * y] & b[(x + 2) % 5 + 5 * y]);
            }
        }
        a[0] ^= k;
    }
}

pub fn sha3_256(msg: &[u8]) -> [u8; 32] {
    let rc = round_constants();
    let mut padded = msg.to_vec();
    padded.push(0x06);
    while !padded.len().is_multiple_of(RATE) {
        padded.push(0);
    }
    *padded.last_mut().unwrap() |= 0x80;

    let mut a = [0u64; 25];
    for block in padded.chunks(RATE) {
        for (i, lane) in block.chunks(8).enumerate() {
            a[i] ^= u64::from_le_bytes(lane.try_into().unwrap());
        }
        keccak_f(&mut a, &rc);
    }
    let mut out = [0u8; 32];
    for i in 0..4 {
        out[8 * i..8 * i + 8].copy_from_slice(&a[i].to_le_bytes());
    }
    out
}

#[test]
fn fips202_known_digests() {
    assert_eq!(
        hex::encode(sha3_256(b"")),
        "a7ffc6f8bf1ed76651c14756a061d662f580ff4de43b49fa82d80a4b80f8434a"
    );
    assert_eq!(
        hex::encode(sha3_256(b"abc")),
        "3a985da74fe225b2045c172d6bd390bd855f086e3e9d525b46bfe24511431532"
    );
    // Crosses the 136-byte rate boundary.
    let long = vec![0xa3u8; 200];
    assert_eq!(
        hex::encode(sha3_256(&long)),
        "79f38adec5c20307a98ef76e8324afbfd46cfd81b22e3973c65fa1bd9de31787"
    );
}
