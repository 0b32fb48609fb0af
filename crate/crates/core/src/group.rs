//! The octic group D8, its irreducible representations, and the Fourier
//! transform between the regular and isotypical bases.
//!
//! Elements are indexed in the slot order of a regular vector,
//! `(e, r³, r², r, s, sr³, sr², sr)`, so that [`fourier_matrix`] is the
//! change of basis from isotypical to regular coordinates verbatim.

use std::fmt;

/// Number of elements of D8.
pub const ORDER: usize = 8;

const SQRT2_OVER_4: f64 = std::f64::consts::SQRT_2 / 4.0;

/// An element `s^flip · r^rot` of D8, stored as its slot index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GroupElement(u8);

impl GroupElement {
    pub const E: Self = Self(0);
    pub const R3: Self = Self(1);
    pub const R2: Self = Self(2);
    pub const R: Self = Self(3);
    pub const S: Self = Self(4);
    pub const SR3: Self = Self(5);
    pub const SR2: Self = Self(6);
    pub const SR: Self = Self(7);

    /// All elements in slot order.
    pub const ALL: [Self; ORDER] = [
        Self::E,
        Self::R3,
        Self::R2,
        Self::R,
        Self::S,
        Self::SR3,
        Self::SR2,
        Self::SR,
    ];

    pub fn from_index(index: usize) -> Option<Self> {
        (index < ORDER).then_some(Self(index as u8))
    }

    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }

    /// Build `s^flip · r^rot`.
    pub fn from_parts(flip: bool, rot: u8) -> Self {
        let rot = rot % 4;
        Self(4 * flip as u8 + (4 - rot) % 4)
    }

    /// Whether the element is a reflection.
    #[inline]
    pub fn flip(self) -> bool {
        self.0 >= 4
    }

    /// Rotation exponent in `s^flip · r^rot`.
    #[inline]
    pub fn rot(self) -> u8 {
        (4 - self.0 % 4) % 4
    }

    pub fn mul(self, other: Self) -> Self {
        // r^b s = s r^{-b}
        let (a, b) = (self.flip(), self.rot());
        let (c, d) = (other.flip(), other.rot());
        if c {
            Self::from_parts(!a, (4 - b + d) % 4)
        } else {
            Self::from_parts(a, (b + d) % 4)
        }
    }

    pub fn inverse(self) -> Self {
        if self.flip() {
            self
        } else {
            Self::from_parts(false, (4 - self.rot()) % 4)
        }
    }

    /// The faithful 2×2 integer representation (equal to `ρ_E`).
    pub fn matrix(self) -> [[i8; 2]; 2] {
        let mut m = [[1, 0], [0, 1]];
        for _ in 0..self.rot() {
            // m · R with R = [[0,-1],[1,0]]
            m = [[m[0][1], -m[0][0]], [m[1][1], -m[1][0]]];
        }
        if self.flip() {
            // S · m with S = diag(-1, 1)
            m[0] = [-m[0][0], -m[0][1]];
        }
        m
    }
}

impl fmt::Display for GroupElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        const NAMES: [&str; ORDER] = ["e", "r3", "r2", "r", "s", "sr3", "sr2", "sr"];
        f.write_str(NAMES[self.index()])
    }
}

pub fn mul(a: GroupElement, b: GroupElement) -> GroupElement {
    a.mul(b)
}

pub fn inverse(a: GroupElement) -> GroupElement {
    a.inverse()
}

/// Labels of the five real irreducible representations of D8.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum IrrepLabel {
    A1,
    A2,
    B1,
    B2,
    E,
}

impl IrrepLabel {
    pub const ALL: [Self; 5] = [Self::A1, Self::A2, Self::B1, Self::B2, Self::E];

    pub fn dim(self) -> usize {
        match self {
            Self::E => 2,
            _ => 1,
        }
    }
}

/// Small dense real matrix returned by [`irrep_matrix`].
pub type IrrepMatrix = Vec<Vec<f64>>;

/// Sign of a one-dimensional irrep at `g`.
#[inline]
pub fn character_1d(label: IrrepLabel, g: GroupElement) -> f64 {
    let (a, b) = (g.flip() as u8, g.rot());
    let odd = match label {
        IrrepLabel::A1 => false,
        IrrepLabel::A2 => a == 1,
        IrrepLabel::B1 => b % 2 == 1,
        IrrepLabel::B2 => (a + b) % 2 == 1,
        IrrepLabel::E => panic!("E is two-dimensional"),
    };
    if odd {
        -1.0
    } else {
        1.0
    }
}

pub fn irrep_matrix(label: IrrepLabel, g: GroupElement) -> IrrepMatrix {
    match label {
        IrrepLabel::E => g
            .matrix()
            .iter()
            .map(|row| row.iter().map(|&v| v as f64).collect())
            .collect(),
        _ => vec![vec![character_1d(label, g)]],
    }
}

/// Slot permutation of the regular representation: `perm[h] = g·h`, so that
/// `[ρ_reg(g)φ](g·h) = φ(h)`, i.e. `[ρ_reg(g)φ](h) = φ(g⁻¹h)`.
pub fn regular_permutation(g: GroupElement) -> [usize; ORDER] {
    let mut perm = [0; ORDER];
    for h in GroupElement::ALL {
        perm[h.index()] = g.mul(h).index();
    }
    perm
}

/// Dense 8×8 permutation matrix of `ρ_reg(g)`.
pub fn regular_matrix(g: GroupElement) -> [[f64; ORDER]; ORDER] {
    let mut m = [[0.0; ORDER]; ORDER];
    for (src, dst) in regular_permutation(g).into_iter().enumerate() {
        m[dst][src] = 1.0;
    }
    m
}

/// The inverse Fourier transform `Q_reg`, mapping isotypical coordinates
/// `(A1, A2, B1, B2, E11, E12, E21, E22)` to regular coordinates.
pub fn fourier_matrix() -> [[f64; ORDER]; ORDER] {
    const SIGNS: [[i8; ORDER]; ORDER] = [
        [1, 1, 1, 1, 1, 1, 1, -1],
        [1, 1, -1, -1, 1, -1, -1, -1],
        [1, 1, 1, 1, -1, -1, -1, 1],
        [1, 1, -1, -1, -1, 1, 1, 1],
        [1, -1, 1, -1, -1, 1, -1, -1],
        [1, -1, -1, 1, -1, -1, 1, -1],
        [1, -1, 1, -1, 1, -1, 1, 1],
        [1, -1, -1, 1, 1, 1, -1, 1],
    ];
    let mut q = [[0.0; ORDER]; ORDER];
    for (row, signs) in q.iter_mut().zip(SIGNS.iter()) {
        for (v, &s) in row.iter_mut().zip(signs.iter()) {
            *v = s as f64 * SQRT2_OVER_4;
        }
    }
    q
}

/// Block-diagonal `ρ_iso(g) = ρ_A1 ⊕ ρ_A2 ⊕ ρ_B1 ⊕ ρ_B2 ⊕ 2ρ_E` as a dense
/// 8×8 matrix. The two E doublets occupy slots (4, 5) and (6, 7).
pub fn isotypical_matrix(g: GroupElement) -> [[f64; ORDER]; ORDER] {
    let mut m = [[0.0; ORDER]; ORDER];
    let one_d = [IrrepLabel::A1, IrrepLabel::A2, IrrepLabel::B1, IrrepLabel::B2];
    for (i, label) in one_d.into_iter().enumerate() {
        m[i][i] = character_1d(label, g);
    }
    let e = g.matrix();
    for base in [4, 6] {
        for i in 0..2 {
            for j in 0..2 {
                m[base + i][base + j] = e[i][j] as f64;
            }
        }
    }
    m
}

/// `x ↦ Q_reg x` for one 8-vector using the butterfly network
/// (24 additions and 8 scalings).
#[inline]
pub fn isotypical_to_regular8(x: &[f64; ORDER]) -> [f64; ORDER] {
    let [a1, a2, b1, b2, e11, e12, e21, e22] = *x;
    let a = a1 + a2;
    let b = a1 - a2;
    let c = b1 + b2;
    let d = b1 - b2;
    let e = e11 + e12;
    let f = e11 - e12;
    let g = e21 + e22;
    let h = e21 - e22;
    let apc = a + c;
    let amc = a - c;
    let bpd = b + d;
    let bmd = b - d;
    let eph = e + h;
    let emh = e - h;
    let fpg = f + g;
    let fmg = f - g;
    [
        SQRT2_OVER_4 * (apc + eph),
        SQRT2_OVER_4 * (amc + fmg),
        SQRT2_OVER_4 * (apc - eph),
        SQRT2_OVER_4 * (amc - fmg),
        SQRT2_OVER_4 * (bpd - fpg),
        SQRT2_OVER_4 * (bmd - emh),
        SQRT2_OVER_4 * (bpd + fpg),
        SQRT2_OVER_4 * (bmd + emh),
    ]
}

/// `y ↦ Q_regᵀ y` for one 8-vector: the transposed butterfly network.
#[inline]
pub fn regular_to_isotypical8(y: &[f64; ORDER]) -> [f64; ORDER] {
    let [y0, y1, y2, y3, y4, y5, y6, y7] = *y;
    let apc = y0 + y2;
    let eph = y0 - y2;
    let amc = y1 + y3;
    let fmg = y1 - y3;
    let bpd = y6 + y4;
    let fpg = y6 - y4;
    let bmd = y7 + y5;
    let emh = y7 - y5;
    let a = apc + amc;
    let c = apc - amc;
    let b = bpd + bmd;
    let d = bpd - bmd;
    let e = eph + emh;
    let h = eph - emh;
    let f = fmg + fpg;
    let g = fpg - fmg;
    [
        SQRT2_OVER_4 * (a + b),
        SQRT2_OVER_4 * (a - b),
        SQRT2_OVER_4 * (c + d),
        SQRT2_OVER_4 * (c - d),
        SQRT2_OVER_4 * (e + f),
        SQRT2_OVER_4 * (e - f),
        SQRT2_OVER_4 * (g + h),
        SQRT2_OVER_4 * (g - h),
    ]
}

/// Batched inverse Fourier transform over contiguous 8-vectors.
///
/// Panics if `x.len()` is not a multiple of 8.
pub fn isotypical_to_regular(x: &[f64]) -> Vec<f64> {
    assert_eq!(x.len() % ORDER, 0, "batch length must be a multiple of 8");
    let mut out = Vec::with_capacity(x.len());
    for chunk in x.chunks_exact(ORDER) {
        out.extend_from_slice(&isotypical_to_regular8(chunk.try_into().unwrap()));
    }
    out
}

/// Batched Fourier transform over contiguous 8-vectors.
pub fn regular_to_isotypical(x: &[f64]) -> Vec<f64> {
    assert_eq!(x.len() % ORDER, 0, "batch length must be a multiple of 8");
    let mut out = Vec::with_capacity(x.len());
    for chunk in x.chunks_exact(ORDER) {
        out.extend_from_slice(&regular_to_isotypical8(chunk.try_into().unwrap()));
    }
    out
}

/// Apply `ρ_iso(g)` to a single isotypical 8-vector in place.
#[inline]
pub fn act_isotypical8(g: GroupElement, x: &mut [f64; ORDER]) {
    x[1] *= character_1d(IrrepLabel::A2, g);
    x[2] *= character_1d(IrrepLabel::B1, g);
    x[3] *= character_1d(IrrepLabel::B2, g);
    let m = g.matrix();
    for base in [4, 6] {
        let (u, v) = (x[base], x[base + 1]);
        x[base] = m[0][0] as f64 * u + m[0][1] as f64 * v;
        x[base + 1] = m[1][0] as f64 * u + m[1][1] as f64 * v;
    }
}
