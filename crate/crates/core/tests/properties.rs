use proptest::prelude::*;

use crc_core::affine::{CirParams, ModelParams, VasicekParams};
use crc_core::analytics::xi_deterministic;
use crc_core::curves::TimeGrid;
use crc_core::samplers::alfonsi_step;
use crc_core::volterra::{volterra_apply, volterra_solve, HullWhiteExtension};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn volterra_roundtrip(a in 1e-5f64..0.05, beta in -2.0f64..-0.05, c0 in -0.05f64..0.05,
                          c1 in -0.05f64..0.05, w in 0.1f64..4.0, cir in any::<bool>()) {
        let p = if cir {
            ModelParams::Cir(CirParams::new(a, beta).unwrap())
        } else {
            ModelParams::Vasicek(VasicekParams::new(a, beta).unwrap())
        };
        let grid = TimeGrid::new(0.05, 120).unwrap();
        let theta = HullWhiteExtension::from_fn(grid, |t| c0 + c1 * (w * t).sin());
        let g = volterra_apply(&p, &theta);
        let back = volterra_solve(&p, &g, -theta.values()[0]).unwrap();
        for (x, y) in back.values().iter().zip(theta.values()) {
            prop_assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn xi_is_nonnegative(t in 0.0f64..10.0, y0 in 0.0f64..0.1, m in 0.0f64..0.1,
                         mu in -3.0f64..0.0, beta in -3.0f64..-0.01) {
        prop_assert!(xi_deterministic(t, y0, m, mu, beta).unwrap() >= 0.0);
    }

    #[test]
    fn alfonsi_stays_nonnegative(x in 0.0f64..0.2, a in 0.0f64..0.05, k in -2.0f64..2.0,
                                 s2 in 1e-4f64..0.1, t in 1e-3f64..0.5, u in 0.0f64..1.0) {
        let v = alfonsi_step(x, a, k, s2, t, u);
        prop_assert!(v >= 0.0 && v.is_finite());
    }
}
