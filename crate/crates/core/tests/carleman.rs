use std::f64::consts::PI;

use carleman_lab::carleman::{assemble, Variant};
use carleman_lab::geometry::{DomainSpec, WeightParams};
use carleman_lab::grid::{Field, Grid, SpatialField};

fn trap(n: usize, h: f64, i: usize) -> f64 {
    if i == 0 || i + 1 == n {
        0.5 * h
    } else {
        h
    }
}

#[test]
fn terms_match_hand_quadrature_on_tiny_grid() {
    let d = DomainSpec::interval(0.0, 1.0, -0.1, 1.0).unwrap();
    let g = Grid::build(&d, 5, 1.0).unwrap();
    assert_eq!((g.nspace(), g.nt()), (5, 5));
    let (beta, lam, s) = (0.5, 0.5, 1.5);
    let p = WeightParams::for_domain(&d, beta, lam, s);
    let v = Field::from_fn(&g, |x, t| t * (PI * x[0]).sin());
    let got = assemble(&v, &SpatialField::zeros(&g), &p, Variant::Full).unwrap();

    let (n, h, tau) = (5usize, 0.25, 0.25);
    let x = |i: usize| i as f64 * h;
    let t = |l: usize| l as f64 * tau;
    let phi =
        |i: usize, l: usize| (lam * ((x(i) + 0.1).powi(2) - beta * t(l).powi(2) + p.beta0)).exp();
    let mut phi_max = f64::MIN;
    for l in 0..n {
        for i in 0..n {
            phi_max = phi_max.max(phi(i, l));
        }
    }
    let wgt = |i: usize, l: usize| (2.0 * s * (phi(i, l) - phi_max)).exp();
    let vv = |i: usize, l: usize| t(l) * (PI * x(i)).sin();
    let vt = |i: usize, _l: usize| (PI * x(i)).sin();
    let vx = |i: usize, l: usize| match i {
        0 => (-3.0 * vv(0, l) + 4.0 * vv(1, l) - vv(2, l)) / (2.0 * h),
        4 => (3.0 * vv(4, l) - 4.0 * vv(3, l) + vv(2, l)) / (2.0 * h),
        _ => (vv(i + 1, l) - vv(i - 1, l)) / (2.0 * h),
    };
    let vxx = |i: usize, l: usize| match i {
        0 => (2.0 * vv(0, l) - 5.0 * vv(1, l) + 4.0 * vv(2, l) - vv(3, l)) / (h * h),
        4 => (2.0 * vv(4, l) - 5.0 * vv(3, l) + 4.0 * vv(2, l) - vv(1, l)) / (h * h),
        _ => (vv(i + 1, l) - 2.0 * vv(i, l) + vv(i - 1, l)) / (h * h),
    };

    let (mut lhs_grad, mut lhs_zero, mut res, mut bdry) = (0.0, 0.0, 0.0, 0.0);
    for l in 0..n {
        for i in 0..n {
            let w = trap(n, tau, l) * trap(n, h, i) * wgt(i, l);
            lhs_grad += w * (vt(i, l).powi(2) + vx(i, l).powi(2));
            lhs_zero += w * vv(i, l).powi(2);
            res += w * vxx(i, l).powi(2);
        }
        // only x = 1 faces away from x0 = −0.1
        bdry += trap(n, tau, l) * wgt(4, l) * vx(4, l).powi(2);
    }
    let (mut t0, mut te, mut tz) = (0.0, 0.0, 0.0);
    for i in 0..n {
        t0 += trap(n, h, i) * wgt(i, 0) * vt(i, 0).powi(2);
        te += trap(n, h, i) * wgt(i, 4) * (vt(i, 4).powi(2) + vx(i, 4).powi(2));
        tz += trap(n, h, i) * wgt(i, 4) * vv(i, 4).powi(2);
    }
    let expect = [
        s.sqrt() * t0,
        s * lhs_grad,
        s.powi(3) * lhs_zero,
        res,
        s * bdry,
        s * te,
        s.powi(3) * tz,
    ];
    for (k, (a, b)) in got.terms().iter().zip(expect).enumerate() {
        assert!(
            (a - b).abs() <= 1e-12 * b.abs().max(1e-300),
            "term {k}: {a} vs {b}"
        );
    }
    assert!((got.log_scale - 2.0 * s * phi_max).abs() < 1e-12);
}
