//! Symmetric degree-6 quadrature on triangles (12 points).

use super::Vec2;

const W_A: f64 = 0.116_786_275_726_379;
const W_B: f64 = 0.050_844_906_370_207;
const W_C: f64 = 0.082_851_075_618_374;

/// Barycentric points and weights; weights sum to 1.
pub(crate) const RULE: [([f64; 3], f64); 12] = {
    const A1: f64 = 0.501_426_509_658_179;
    const A2: f64 = 0.249_286_745_170_910;
    const B1: f64 = 0.873_821_971_016_996;
    const B2: f64 = 0.063_089_014_491_502;
    const C1: f64 = 0.053_145_049_844_817;
    const C2: f64 = 0.310_352_451_033_784;
    const C3: f64 = 0.636_502_499_121_399;
    [
        ([A1, A2, A2], W_A),
        ([A2, A1, A2], W_A),
        ([A2, A2, A1], W_A),
        ([B1, B2, B2], W_B),
        ([B2, B1, B2], W_B),
        ([B2, B2, B1], W_B),
        ([C1, C2, C3], W_C),
        ([C1, C3, C2], W_C),
        ([C2, C1, C3], W_C),
        ([C2, C3, C1], W_C),
        ([C3, C1, C2], W_C),
        ([C3, C2, C1], W_C),
    ]
};

/// Integrates `(∫f, ∫f·q)` over triangle `abc` split uniformly into
/// `m × m` sub-triangles.
pub(crate) fn integrate_moments(
    a: Vec2,
    b: Vec2,
    c: Vec2,
    m: usize,
    f: &impl Fn(Vec2) -> f64,
) -> (f64, Vec2) {
    let area = 0.5 * (b - a).cross(c - a).abs();
    let sub_area = area / (m * m) as f64;
    let eu = (b - a) / m as f64;
    let ev = (c - a) / m as f64;
    let node = |i: usize, j: usize| a + eu * i as f64 + ev * j as f64;
    let mut mass = 0.0;
    let mut first = Vec2::ZERO;
    let mut tri = |p0: Vec2, p1: Vec2, p2: Vec2| {
        let mut tm = 0.0;
        let mut tf = Vec2::ZERO;
        for (l, w) in RULE.iter() {
            let q = p0 * l[0] + p1 * l[1] + p2 * l[2];
            let v = f(q) * w;
            tm += v;
            tf += q * v;
        }
        mass += tm * sub_area;
        first += tf * sub_area;
    };
    for i in 0..m {
        for j in 0..(m - i) {
            tri(node(i, j), node(i + 1, j), node(i, j + 1));
            if i + j + 2 <= m {
                tri(node(i + 1, j), node(i + 1, j + 1), node(i, j + 1));
            }
        }
    }
    (mass, first)
}
