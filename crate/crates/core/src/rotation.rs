//! The 16 FOA rotation/reflection patterns.
//!
//! Each pattern is a signed permutation of the X/Y channels (one of the
//! eight symmetries of the square acting on azimuth) combined with an
//! optional sign flip of Z (elevation mirror). W is never touched. The same
//! pattern acts on audio channels, Cartesian vectors and DOA labels, so a
//! rotated recording and its rotated labels stay consistent.
//!
//! Canonical ids: `id = 2 * azimuth_map_index + (elevation flipped as 0/1)`,
//! with azimuth maps ordered as in [`AzimuthMap::ALL`].

use std::fmt;

use crate::audio::{AudioClip, W, X, Y, Z};
use crate::error::{Error, Result};
use crate::geometry::{wrap_azimuth, Direction};

pub const N_PATTERNS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AzimuthMap {
    /// φ
    Identity,
    /// −φ
    Mirror,
    /// 90 − φ
    SwapXY,
    /// φ + 90
    Plus90,
    /// φ − 90
    Minus90,
    /// −φ − 90
    AntiSwapXY,
    /// 180 − φ
    MirrorFront,
    /// φ + 180
    Plus180,
}

impl AzimuthMap {
    pub const ALL: [AzimuthMap; 8] = [
        AzimuthMap::Identity,
        AzimuthMap::Mirror,
        AzimuthMap::SwapXY,
        AzimuthMap::Plus90,
        AzimuthMap::Minus90,
        AzimuthMap::AntiSwapXY,
        AzimuthMap::MirrorFront,
        AzimuthMap::Plus180,
    ];

    pub fn eval(self, phi: f64) -> f64 {
        let out = match self {
            AzimuthMap::Identity => phi,
            AzimuthMap::Mirror => -phi,
            AzimuthMap::SwapXY => 90.0 - phi,
            AzimuthMap::Plus90 => phi + 90.0,
            AzimuthMap::Minus90 => phi - 90.0,
            AzimuthMap::AntiSwapXY => -phi - 90.0,
            AzimuthMap::MirrorFront => 180.0 - phi,
            AzimuthMap::Plus180 => phi + 180.0,
        };
        wrap_azimuth(out)
    }

    /// 2x2 signed permutation acting on (x, y).
    pub fn matrix(self) -> [[i8; 2]; 2] {
        match self {
            AzimuthMap::Identity => [[1, 0], [0, 1]],
            AzimuthMap::Mirror => [[1, 0], [0, -1]],
            AzimuthMap::SwapXY => [[0, 1], [1, 0]],
            AzimuthMap::Plus90 => [[0, -1], [1, 0]],
            AzimuthMap::Minus90 => [[0, 1], [-1, 0]],
            AzimuthMap::AntiSwapXY => [[0, -1], [-1, 0]],
            AzimuthMap::MirrorFront => [[-1, 0], [0, 1]],
            AzimuthMap::Plus180 => [[-1, 0], [0, -1]],
        }
    }

    fn index(self) -> usize {
        AzimuthMap::ALL.iter().position(|&m| m == self).unwrap()
    }
}

impl fmt::Display for AzimuthMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            AzimuthMap::Identity => "φ",
            AzimuthMap::Mirror => "−φ",
            AzimuthMap::SwapXY => "90−φ",
            AzimuthMap::Plus90 => "φ+90",
            AzimuthMap::Minus90 => "φ−90",
            AzimuthMap::AntiSwapXY => "−φ−90",
            AzimuthMap::MirrorFront => "180−φ",
            AzimuthMap::Plus180 => "φ+180",
        };
        f.write_str(s)
    }
}

/// Horizontal FOA channel feeding an output channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HorizontalChannel {
    X,
    Y,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RotationPattern {
    id: u8,
    azimuth_map: AzimuthMap,
    elevation_sign: i8,
}

impl RotationPattern {
    fn from_parts(azimuth_map: AzimuthMap, elevation_sign: i8) -> Self {
        let flip = u8::from(elevation_sign < 0);
        RotationPattern {
            id: 2 * azimuth_map.index() as u8 + flip,
            azimuth_map,
            elevation_sign,
        }
    }

    pub fn from_id(id: u8) -> Result<Self> {
        if id as usize >= N_PATTERNS {
            return Err(Error::Invalid(format!("rotation pattern id {id} not in 0..16")));
        }
        Ok(RotationPattern::from_parts(
            AzimuthMap::ALL[id as usize / 2],
            if id.is_multiple_of(2) { 1 } else { -1 },
        ))
    }

    pub fn identity() -> Self {
        RotationPattern::from_parts(AzimuthMap::Identity, 1)
    }

    pub fn id(&self) -> u8 {
        self.id
    }

    pub fn azimuth_map(&self) -> AzimuthMap {
        self.azimuth_map
    }

    pub fn elevation_sign(&self) -> i8 {
        self.elevation_sign
    }

    pub fn is_identity(&self) -> bool {
        self.id == 0
    }

    /// Source channel and sign for output X and output Y.
    pub fn xy_sources(&self) -> [(HorizontalChannel, i8); 2] {
        let m = self.azimuth_map.matrix();
        std::array::from_fn(|row| {
            if m[row][0] != 0 {
                (HorizontalChannel::X, m[row][0])
            } else {
                (HorizontalChannel::Y, m[row][1])
            }
        })
    }

    pub fn sign_z(&self) -> i8 {
        self.elevation_sign
    }

    /// Full 3x3 signed permutation on (x, y, z).
    pub fn matrix(&self) -> [[i8; 3]; 3] {
        let m = self.azimuth_map.matrix();
        [
            [m[0][0], m[0][1], 0],
            [m[1][0], m[1][1], 0],
            [0, 0, self.elevation_sign],
        ]
    }

    fn from_matrix(m: [[i8; 3]; 3]) -> Self {
        all_patterns()
            .into_iter()
            .find(|p| p.matrix() == m)
            .expect("signed XY permutation with Z sign is one of the 16 patterns")
    }

    pub fn apply_to_vec(&self, v: [f64; 3]) -> [f64; 3] {
        let m = self.matrix();
        std::array::from_fn(|r| (0..3).map(|c| m[r][c] as f64 * v[c]).sum())
    }

    pub fn apply_to_direction(&self, d: Direction) -> Direction {
        Direction::new(
            self.azimuth_map.eval(d.azimuth()),
            self.elevation_sign as f64 * d.elevation(),
        )
        .expect("rotation keeps angles in range")
    }

    pub fn apply_to_audio(&self, clip: &AudioClip) -> AudioClip {
        let ch = clip.channels();
        let src = |hc: HorizontalChannel| match hc {
            HorizontalChannel::X => &ch[X],
            HorizontalChannel::Y => &ch[Y],
        };
        let signed = |s: &[f64], sign: i8| -> Vec<f64> {
            if sign > 0 {
                s.to_vec()
            } else {
                s.iter().map(|v| -v).collect()
            }
        };
        let [(xs, xsign), (ys, ysign)] = self.xy_sources();
        AudioClip::new(
            clip.sample_rate(),
            [
                ch[W].clone(),
                signed(src(xs), xsign),
                signed(src(ys), ysign),
                signed(&ch[Z], self.elevation_sign),
            ],
        )
        .expect("channel lengths preserved")
    }

    pub fn inverse(&self) -> RotationPattern {
        let m = self.matrix();
        RotationPattern::from_matrix(std::array::from_fn(|r| std::array::from_fn(|c| m[c][r])))
    }

    /// The pattern equivalent to applying `other` first, then `self`.
    pub fn compose(&self, other: &RotationPattern) -> RotationPattern {
        RotationPattern::from_matrix(mat_mul(self.matrix(), other.matrix()))
    }
}

impl fmt::Display for RotationPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "#{} az {} el {}θ",
            self.id,
            self.azimuth_map,
            if self.elevation_sign > 0 { "+" } else { "−" }
        )
    }
}

fn mat_mul(a: [[i8; 3]; 3], b: [[i8; 3]; 3]) -> [[i8; 3]; 3] {
    std::array::from_fn(|r| std::array::from_fn(|c| (0..3).map(|k| a[r][k] * b[k][c]).sum()))
}

pub fn all_patterns() -> [RotationPattern; N_PATTERNS] {
    std::array::from_fn(|i| RotationPattern::from_id(i as u8).unwrap())
}

pub fn inverse(p: &RotationPattern) -> RotationPattern {
    p.inverse()
}

pub fn compose(p: &RotationPattern, q: &RotationPattern) -> RotationPattern {
    p.compose(q)
}

pub fn apply_to_direction(d: Direction, p: &RotationPattern) -> Direction {
    p.apply_to_direction(d)
}

pub fn apply_to_audio(clip: &AudioClip, p: &RotationPattern) -> AudioClip {
    p.apply_to_audio(clip)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{angular_distance, dir_to_unit};
    use proptest::prelude::*;

    fn dir(az: f64, el: f64) -> Direction {
        Direction::new(az, el).unwrap()
    }

    fn find(map: AzimuthMap, el: i8) -> RotationPattern {
        RotationPattern::from_parts(map, el)
    }

    #[test]
    fn sixteen_distinct_with_identity_first() {
        let all = all_patterns();
        assert_eq!(all.len(), 16);
        assert!(all[0].is_identity());
        assert_eq!(all[0].azimuth_map(), AzimuthMap::Identity);
        assert_eq!(all[0].elevation_sign(), 1);
        for i in 0..16 {
            for j in i + 1..16 {
                assert_ne!(all[i].matrix(), all[j].matrix());
            }
        }
        for (i, p) in all.iter().enumerate() {
            assert_eq!(p.id() as usize, i);
        }
    }

    #[test]
    fn xy_swap_is_ninety_minus_phi() {
        // Swapping the X and Y encode gains must equal encoding at 90 - az.
        let p = find(AzimuthMap::SwapXY, 1);
        assert_eq!(
            p.xy_sources(),
            [(HorizontalChannel::Y, 1), (HorizontalChannel::X, 1)]
        );
        for az in (-180..180).step_by(7) {
            for el in (-80..=80).step_by(20) {
                let (a, e) = (az as f64, el as f64);
                let gx = a.to_radians().cos() * e.to_radians().cos();
                let gy = a.to_radians().sin() * e.to_radians().cos();
                let target = dir_to_unit(dir(90.0 - a, e));
                assert!((target.x() - gy).abs() < 1e-12);
                assert!((target.y() - gx).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn z_flip_negates_elevation() {
        let p = find(AzimuthMap::Identity, -1);
        let d = p.apply_to_direction(dir(33.0, 20.0));
        assert_eq!((d.azimuth(), d.elevation()), (33.0, -20.0));
    }

    #[test]
    fn direction_examples() {
        let d = find(AzimuthMap::SwapXY, 1).apply_to_direction(dir(30.0, 0.0));
        assert_eq!(d.azimuth(), 60.0);
        let d = find(AzimuthMap::Plus180, 1).apply_to_direction(dir(170.0, -5.0));
        assert_eq!((d.azimuth(), d.elevation()), (-10.0, -5.0));
        let d = RotationPattern::identity().apply_to_direction(dir(-12.5, 40.0));
        assert_eq!((d.azimuth(), d.elevation()), (-12.5, 40.0));
    }

    #[test]
    fn inverse_examples() {
        assert!(RotationPattern::identity().inverse().is_identity());
        assert_eq!(
            find(AzimuthMap::Plus90, 1).inverse().azimuth_map(),
            AzimuthMap::Minus90
        );
        let r = find(AzimuthMap::SwapXY, 1);
        assert_eq!(r.inverse(), r);
        assert!(r.compose(&r).is_identity());
    }

    #[test]
    fn group_axioms_exhaustive() {
        let all = all_patterns();
        for p in &all {
            assert_eq!(p.compose(&RotationPattern::identity()), *p);
            assert_eq!(RotationPattern::identity().compose(p), *p);
            assert!(p.compose(&p.inverse()).is_identity());
            assert!(p.inverse().compose(p).is_identity());
            for q in &all {
                let pq = p.compose(q);
                assert!(all.contains(&pq));
                for r in &all {
                    assert_eq!(
                        mat_mul(mat_mul(p.matrix(), q.matrix()), r.matrix()),
                        mat_mul(p.matrix(), mat_mul(q.matrix(), r.matrix()))
                    );
                }
            }
        }
    }

    fn clip() -> AudioClip {
        AudioClip::new(
            24_000,
            [
                vec![1.0, 2.0, 3.0],
                vec![0.5, -0.25, 0.125],
                vec![-1.0, 0.75, 0.3],
                vec![0.1, 0.2, -0.9],
            ],
        )
        .unwrap()
    }

    #[test]
    fn audio_identity_and_inverse_are_exact() {
        let c = clip();
        assert_eq!(RotationPattern::identity().apply_to_audio(&c), c);
        for p in all_patterns() {
            let back = p.inverse().apply_to_audio(&p.apply_to_audio(&c));
            assert_eq!(back, c);
            let r = p.apply_to_audio(&c);
            assert_eq!(r.channel(W), c.channel(W));
            let energy = |c: &AudioClip| -> f64 {
                (1..4).flat_map(|i| c.channel(i).iter().map(|v| v * v)).sum()
            };
            assert!((energy(&r) - energy(&c)).abs() < 1e-12);
        }
    }

    #[test]
    fn vector_and_direction_actions_agree() {
        for p in all_patterns() {
            for az in (-175..=180).step_by(25) {
                for el in [-60.0, 0.0, 35.0] {
                    let d = dir(az as f64, el);
                    let via_vec = crate::geometry::vec_to_dir(p.apply_to_vec(dir_to_unit(d).to_array()))
                        .unwrap();
                    assert!(angular_distance(via_vec, p.apply_to_direction(d)) < 1e-9);
                }
            }
        }
    }

    proptest! {
        #[test]
        fn composition_acts_like_sequential_application(
            a in 0u8..16, b in 0u8..16, az in -179.9f64..180.0, el in -89.0f64..89.0
        ) {
            let p = RotationPattern::from_id(a).unwrap();
            let q = RotationPattern::from_id(b).unwrap();
            let d = dir(az, el);
            let seq = p.apply_to_direction(q.apply_to_direction(d));
            let comp = p.compose(&q).apply_to_direction(d);
            prop_assert!(angular_distance(seq, comp) < 1e-9);
        }
    }
}
