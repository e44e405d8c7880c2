//! Fixed-width lattice points.
//!
//! Points live in `Z^d` for `3 <= d <= 8` but are carried as `[i32; 8]`
//! with unused lanes zero, so coordinate arithmetic vectorizes and a point
//! packs into a single `u128` hash key (eight 16-bit two's complement
//! fields). Walks whose coordinates leave the 16-bit range abort with an
//! overflow error long before the key scheme could alias.

pub const MAXD: usize = 8;

/// A lattice point with unused trailing lanes kept at zero.
pub type Pt = [i32; MAXD];

pub const ORIGIN: Pt = [0; MAXD];

#[inline(always)]
pub fn add(a: &Pt, b: &Pt) -> Pt {
    let mut r = [0i32; MAXD];
    for i in 0..MAXD {
        r[i] = a[i] + b[i];
    }
    r
}

#[inline(always)]
pub fn sub(a: &Pt, b: &Pt) -> Pt {
    let mut r = [0i32; MAXD];
    for i in 0..MAXD {
        r[i] = a[i] - b[i];
    }
    r
}

#[inline(always)]
pub fn neg(a: &Pt) -> Pt {
    let mut r = [0i32; MAXD];
    for i in 0..MAXD {
        r[i] = -a[i];
    }
    r
}

/// Euclidean norm squared.
#[inline(always)]
pub fn norm2(a: &Pt) -> f64 {
    let mut s = 0i64;
    for &c in a {
        s += c as i64 * c as i64;
    }
    s as f64
}

/// Packs a point into a 128-bit key, or `None` if any coordinate does not
/// fit in an `i16` (the caller must treat that as path overflow).
#[inline(always)]
pub fn key(p: &Pt) -> Option<u128> {
    let mut bytes = [0u8; 16];
    let mut ok = true;
    for i in 0..MAXD {
        let c = p[i];
        ok &= (-32768..=32767).contains(&c);
        let v = (c as i16) as u16;
        bytes[2 * i] = (v & 0xff) as u8;
        bytes[2 * i + 1] = (v >> 8) as u8;
    }
    if ok {
        Some(u128::from_le_bytes(bytes))
    } else {
        None
    }
}

pub fn from_coords(coords: &[i64]) -> Pt {
    assert!(coords.len() <= MAXD);
    let mut p = ORIGIN;
    for (i, &c) in coords.iter().enumerate() {
        p[i] = i32::try_from(c).expect("coordinate out of i32 range");
    }
    p
}

pub fn to_coords(p: &Pt, d: usize) -> Vec<i64> {
    p[..d].iter().map(|&c| c as i64).collect()
}

/// Packed storage form, 16 bytes per point.
#[inline(always)]
pub fn pack(p: &Pt) -> Option<[i16; MAXD]> {
    let mut r = [0i16; MAXD];
    for i in 0..MAXD {
        if !(-32768..=32767).contains(&p[i]) {
            return None;
        }
        r[i] = p[i] as i16;
    }
    Some(r)
}

#[inline(always)]
pub fn unpack(p: &[i16; MAXD]) -> Pt {
    let mut r = [0i32; MAXD];
    for i in 0..MAXD {
        r[i] = p[i] as i32;
    }
    r
}

#[inline(always)]
pub fn key_packed(p: &[i16; MAXD]) -> u128 {
    let mut bytes = [0u8; 16];
    for i in 0..MAXD {
        let v = p[i] as u16;
        bytes[2 * i] = (v & 0xff) as u8;
        bytes[2 * i + 1] = (v >> 8) as u8;
    }
    u128::from_le_bytes(bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn key_injective_on_small_points() {
        let a = from_coords(&[1, -2, 3, 0, 0]);
        let b = from_coords(&[1, -2, 3, 0, 1]);
        assert_ne!(key(&a), key(&b));
        assert_eq!(key(&a), Some(key_packed(&pack(&a).unwrap())));
    }

    #[test]
    fn key_detects_overflow() {
        let mut p = ORIGIN;
        p[2] = 40_000;
        assert_eq!(key(&p), None);
        assert_eq!(pack(&p), None);
    }
}
