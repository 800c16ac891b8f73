#![allow(dead_code)]

use std::path::PathBuf;

use smily::groups::{parse_cayley_table, GroupTable};
use smily::C64;

pub fn data_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

pub fn load_table(name: &str) -> GroupTable {
    let text = std::fs::read_to_string(data_path(name)).unwrap();
    parse_cayley_table(&text, 256).unwrap()
}

fn table(rows: Vec<Vec<usize>>) -> GroupTable {
    let one_based: Vec<Vec<usize>> = rows.into_iter().map(|r| r.into_iter().map(|x| x + 1).collect()).collect();
    GroupTable::from_cayley(&one_based, 256).unwrap()
}

pub fn cyclic(n: usize) -> GroupTable {
    table((0..n).map(|i| (0..n).map(|j| (i + j) % n).collect()).collect())
}

/// Dihedral group of order 2n; element `k + n e` is `r^k s^e`.
pub fn dihedral(n: usize) -> GroupTable {
    let mul = |a: usize, b: usize| {
        let (k1, e1) = (a % n, a / n);
        let (k2, e2) = (b % n, b / n);
        let k = if e1 == 0 { (k1 + k2) % n } else { (k1 + n - k2) % n };
        k + n * (e1 ^ e2)
    };
    table((0..2 * n).map(|a| (0..2 * n).map(|b| mul(a, b)).collect()).collect())
}

/// Quaternion group; element `u + 4 s` is `(−1)^s · [1, i, j, k][u]`.
pub fn quaternion() -> GroupTable {
    // unit products as (sign flip, unit)
    const UNIT: [[(usize, usize); 4]; 4] = [
        [(0, 0), (0, 1), (0, 2), (0, 3)],
        [(0, 1), (1, 0), (0, 3), (1, 2)],
        [(0, 2), (1, 3), (1, 0), (0, 1)],
        [(0, 3), (0, 2), (1, 1), (1, 0)],
    ];
    let mul = |a: usize, b: usize| {
        let (flip, u) = UNIT[a % 4][b % 4];
        u + 4 * ((a / 4) ^ (b / 4) ^ flip)
    };
    table((0..8).map(|a| (0..8).map(|b| mul(a, b)).collect()).collect())
}

/// Every test group with its name: Z₂…Z₁₂, D₄, Q₈.
pub fn small_groups() -> Vec<(String, GroupTable)> {
    let mut out: Vec<(String, GroupTable)> = (2..=12).map(|n| (format!("Z{n}"), cyclic(n))).collect();
    out.push(("D4".into(), dihedral(4)));
    out.push(("Q8".into(), quaternion()));
    out
}

pub fn element_order(g: &GroupTable, x: usize) -> usize {
    let e = g.identity();
    let mut y = x;
    let mut k = 1;
    while y != e {
        y = g.product(y, x);
        k += 1;
    }
    k
}

/// S₃ characters from element orders: trivial, sign, standard.
pub fn s3_characters(g: &GroupTable) -> Vec<Vec<C64>> {
    assert_eq!(g.order(), 6);
    let orders: Vec<usize> = (0..6).map(|x| element_order(g, x)).collect();
    let sign = orders.iter().map(|&o| if o == 2 { -1.0 } else { 1.0 }).collect::<Vec<_>>();
    let standard = orders.iter().map(|&o| [0.0, 2.0, 0.0, -1.0][o]).collect::<Vec<_>>();
    vec![
        vec![C64::new(1.0, 0.0); 6],
        sign.into_iter().map(|x| C64::new(x, 0.0)).collect(),
        standard.into_iter().map(|x| C64::new(x, 0.0)).collect(),
    ]
}

/// A₄ characters: the three lifts of A₄/V₄ ≅ Z₃ and the 3-dim irrep.
pub fn a4_characters(g: &GroupTable) -> Vec<Vec<C64>> {
    assert_eq!(g.order(), 12);
    let orders: Vec<usize> = (0..12).map(|x| element_order(g, x)).collect();
    let a = (0..12).find(|&x| orders[x] == 3).unwrap();
    let a2 = g.product(a, a);
    let klein: Vec<usize> = (0..12).filter(|&x| orders[x] <= 2).collect();
    assert_eq!(klein.len(), 4);
    let coset = |x: usize| -> usize {
        if klein.contains(&x) {
            0
        } else if klein.iter().any(|&v| g.product(a, v) == x) {
            1
        } else {
            assert!(klein.iter().any(|&v| g.product(a2, v) == x));
            2
        }
    };
    let omega = C64::from_polar(1.0, 2.0 * std::f64::consts::PI / 3.0);
    let mut chars: Vec<Vec<C64>> =
        (0..3).map(|p| (0..12).map(|x| omega.powu((p * coset(x)) as u32)).collect()).collect();
    chars.push(orders.iter().map(|&o| C64::new([0.0, 3.0, -1.0, 0.0][o], 0.0)).collect());
    chars
}

/// `⟨j₁ m₁ j₂ m₂ | J M⟩` by the Racah formula, all spins doubled.
pub fn racah_cg(tj1: i32, tm1: i32, tj2: i32, tm2: i32, tj: i32, tm: i32) -> f64 {
    if tm1 + tm2 != tm || tj < (tj1 - tj2).abs() || tj > tj1 + tj2 || (tj1 + tj2 + tj) % 2 != 0 {
        return 0.0;
    }
    let f = |x: i32| -> f64 { (1..=x).map(f64::from).product() };
    let h = |x: i32| x / 2;
    let pre = (f64::from(tj + 1) * f(h(tj + tj1 - tj2)) * f(h(tj - tj1 + tj2)) * f(h(tj1 + tj2 - tj))
        / f(h(tj1 + tj2 + tj) + 1))
    .sqrt();
    let norm =
        (f(h(tj + tm)) * f(h(tj - tm)) * f(h(tj1 - tm1)) * f(h(tj1 + tm1)) * f(h(tj2 - tm2)) * f(h(tj2 + tm2))).sqrt();
    let mut sum = 0.0;
    for k in 0..=h(tj1 + tj2 + tj) {
        let args =
            [h(tj1 + tj2 - tj) - k, h(tj1 - tm1) - k, h(tj2 + tm2) - k, h(tj - tj2 + tm1) + k, h(tj - tj1 - tm2) + k];
        if args.iter().any(|&x| x < 0) {
            continue;
        }
        let denom = f(k) * args.iter().map(|&x| f(x)).product::<f64>();
        sum += if k % 2 == 0 { 1.0 } else { -1.0 } / denom;
    }
    pre * norm * sum
}
