//! Straight-line AES-256 encryption following FIPS-197, used only as a test
//! oracle. The S-box is computed from the GF(2^8) inverse and affine map
//! rather than copied from a table.

fn gmul(mut a: u8, mut b: u8) -> u8 {
    let mut p = 0u8;
    while b != 0 {
        if b & 1 != 0 {
            p ^= a;
        }
        let hi = a & 0x80;
        a <<= 1;
        if hi != 0 {
            a ^= 0x1b;
        }
        b >>= 1;
    }
    p
}

fn sbox() -> &'static [u8; 256] {
    static SBOX: std::sync::OnceLock<[u8; 256]> = std::sync::OnceLock::new();
    SBOX.get_or_init(build_sbox)
}

fn build_sbox() -> [u8; 256] {
    let mut s = [0u8; 256];
    for x in 0..=255u8 {
        let inv = if x == 0 {
            0
        } else {
            (1..=255u8).find(|&y| gmul(x, y) == 1).unwrap()
        };
        let mut out = inv;
        for shift in 1..5 {
            out ^= inv.rotate_left(shift);
        }
        s[x as usize] = out ^ 0x63;
    }
    s
}

fn expand_key(key: &[u8; 32], s: &[u8; 256]) -> [[u8; 16]; 15] {
    let mut w = [[0u8; 4]; 60];
    for i in 0..8 {
        w[i].copy_from_slice(&key[4 * i..4 * i + 4]);
    }
    let mut rcon = 1u8;
    for i in 8..60 {
        let mut t = w[i - 1];
        if i % 8 == 0 {
            t = [
                s[t[1] as usize] ^ rcon,
                s[t[2] as usize],
                s[t[3] as usize],
                s[t[0] as usize],
            ];
            rcon = gmul(rcon, 2);
        } else if i % 8 == 4 {
            t = t.map(|b| s[b as usize]);
        }
        for j in 0..4 {
            w[i][j] = w[i - 8][j] ^ t[j];
        }
    }
    let mut rk = [[0u8; 16]; 15];
    for r in 0..15 {
        for c in 0..4 {
            rk[r][4 * c..4 * c + 4].copy_from_slice(&w[4 * r + c]);
        }
    }
    rk
}

/// Column-major state, as in the standard: byte `state[r + 4c]`.
pub fn encrypt_block(key: &[u8; 32], plaintext: &[u8; 16]) -> [u8; 16] {
    let s = sbox();
    let rk = expand_key(key, s);
    let mut st = *plaintext;
    let add = |st: &mut [u8; 16], k: &[u8; 16]| st.iter_mut().zip(k).for_each(|(a, b)| *a ^= b);
    add(&mut st, &rk[0]);
    #[allow(clippy::needless_range_loop)]
    for round in 1..=14 {
        st = st.map(|b| s[b as usize]);
        let prev = st;
        for c in 0..4 {
            for r in 0..4 {
                st[r + 4 * c] = prev[r + 4 * ((c + r) % 4)];
            }
        }
        if round != 14 {
            let prev = st;
            for c in 0..4 {
                let col = &prev[4 * c..4 * c + 4];
                for r in 0..4 {
                    st[r + 4 * c] = gmul(col[r], 2)
                        ^ gmul(col[(r + 1) % 4], 3)
                        ^ col[(r + 2) % 4]
                        ^ col[(r + 3) % 4];
                }
            }
        }
        add(&mut st, &rk[round]);
    }
    st
}

#[test]
fn fips197_appendix_c3() {
    let key: [u8; 32] = std::array::from_fn(|i| i as u8);
    let pt: [u8; 16] = std::array::from_fn(|i| (i as u8) * 0x11);
    assert_eq!(
        hex::encode(encrypt_block(&key, &pt)),
        "8ea2b7ca516745bfeafc49904b496089"
    );
}

#[test]
fn sbox_spot_values() {
    let s = sbox();
    assert_eq!(
        (s[0x00], s[0x01], s[0x53], s[0xff]),
        (0x63, 0x7c, 0xed, 0x16)
    );
}
