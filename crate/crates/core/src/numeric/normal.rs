use libm::erfc;
use std::f64::consts::{FRAC_1_SQRT_2, PI};

use crate::{Error, Result};

/// Standard normal CDF, `0.5 * erfc(-z / sqrt(2))`.
///
/// Saturates to exactly 0 or 1 for |z| beyond about 38; NaN propagates.
pub fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z * FRAC_1_SQRT_2)
}

/// Upper tail `1 - Φ(z)` without cancellation.
pub fn std_normal_sf(z: f64) -> f64 {
    0.5 * erfc(z * FRAC_1_SQRT_2)
}

pub fn std_normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

/// Two-tailed standard-normal p-value for a z (or large-sample t) statistic.
pub fn two_tailed_p(t: f64) -> f64 {
    (2.0 * std_normal_sf(t.abs())).min(1.0)
}

/// Inverse of [`std_normal_cdf`].
///
/// Wichura's AS 241 (PPND16) rational approximation, polished with one Newton step.
pub fn std_normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Argument(format!("normal quantile needs p in (0,1), got {p}")));
    }
    let z = ppnd16(p);
    // One Newton step on Φ(z) - p; work in the smaller tail to keep precision.
    let residual = if z > 0.0 {
        (1.0 - p) - std_normal_sf(z)
    } else {
        std_normal_cdf(z) - p
    };
    let density = std_normal_pdf(z);
    if density > 0.0 {
        Ok(z - residual / density)
    } else {
        Ok(z)
    }
}

#[allow(clippy::excessive_precision)]
fn ppnd16(p: f64) -> f64 {
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        let num = ((((((2.509_080_928_730_122_672_7e3 * r + 3.343_057_558_358_812_810_5e4) * r
            + 6.726_577_092_700_870_085_3e4)
            * r
            + 4.592_195_393_154_987_145_7e4)
            * r
            + 1.373_169_376_550_946_112_5e4)
            * r
            + 1.971_590_950_306_551_442_7e3)
            * r
            + 1.331_416_678_917_843_774_5e2)
            * r
            + 3.387_132_872_796_366_608_0;
        let den = ((((((5.226_495_278_852_854_561_0e3 * r + 2.872_908_573_572_194_267_4e4) * r
            + 3.930_789_580_009_271_061_0e4)
            * r
            + 2.121_379_430_158_659_586_7e4)
            * r
            + 5.394_196_021_424_751_107_7e3)
            * r
            + 6.871_870_074_920_579_083_0e2)
            * r
            + 4.231_333_070_160_091_125_2e1)
            * r
            + 1.0;
        return q * num / den;
    }
    let tail = if q < 0.0 { p } else { 1.0 - p };
    let mut r = (-tail.ln()).sqrt();
    let value = if r <= 5.0 {
        r -= 1.6;
        let num = ((((((7.745_450_142_783_414_076_4e-4 * r + 2.272_384_498_926_918_458_33e-2) * r
            + 2.417_807_251_774_506_117_7e-1)
            * r
            + 1.270_458_252_452_368_382_58)
            * r
            + 3.647_848_324_763_204_605_04)
            * r
            + 5.769_497_221_460_691_405_5)
            * r
            + 4.630_337_846_156_545_295_9)
            * r
            + 1.423_437_110_749_683_577_34;
        let den = ((((((1.050_750_071_644_416_843_24e-9 * r + 5.475_938_084_995_344_946e-4) * r
            + 1.519_866_656_361_645_719_66e-2)
            * r
            + 1.481_039_764_274_800_745_9e-1)
            * r
            + 6.897_673_349_851_000_045_5e-1)
            * r
            + 1.676_384_830_183_803_849_4)
            * r
            + 2.053_191_626_637_758_821_87)
            * r
            + 1.0;
        num / den
    } else {
        r -= 5.0;
        let num = ((((((2.010_334_399_292_288_132_65e-7 * r + 2.711_555_568_743_487_578_15e-5) * r
            + 1.242_660_947_388_078_438_6e-3)
            * r
            + 2.653_218_952_657_612_309_3e-2)
            * r
            + 2.965_605_718_285_048_912_3e-1)
            * r
            + 1.784_826_539_917_291_335_8)
            * r
            + 5.463_784_911_164_114_369_9)
            * r
            + 6.657_904_643_501_103_777_2;
        let den = ((((((2.044_263_103_389_939_785_64e-15 * r + 1.421_511_758_316_445_888_7e-7) * r
            + 1.846_318_317_510_054_681_8e-5)
            * r
            + 7.868_691_311_456_132_591e-4)
            * r
            + 1.487_536_129_085_061_485_25e-2)
            * r
            + 1.369_298_809_227_358_053_1e-1)
            * r
            + 5.998_322_065_558_879_376_9e-1)
            * r
            + 1.0;
        num / den
    };
    if q < 0.0 {
        -value
    } else {
        value
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // Reference values from 40-digit arbitrary-precision evaluation of
    // Φ(z) = (1 + erf(z/√2)) / 2 and Φ⁻¹(p) = √2 erf⁻¹(2p − 1).
    const CDF_REFERENCE: &[(f64, f64)] = &[
        (-8.0, 6.220_960_574_271_784_1e-16),
        (-5.0, 2.866_515_718_791_939_1e-7),
        (-3.3, 4.834_241_423_837_772_0e-4),
        (-0.53125, 0.297_622_774_366_407_91),
        (0.0, 0.5),
        (0.25, 0.598_706_325_682_923_72),
        (1.0, 0.841_344_746_068_542_95),
        (2.5, 0.993_790_334_674_223_86),
        (4.0, 0.999_968_328_758_166_88),
        (6.5, 0.999_999_999_959_839_99),
    ];

    const QUANTILE_REFERENCE: &[(f64, f64)] = &[
        (1e-12, -7.034_483_825_301_131_9),
        (1e-6, -4.753_424_308_822_898_9),
        (0.001, -3.090_232_306_167_813_5),
        (0.025, -1.959_963_984_540_054_2),
        (0.25, -0.674_489_750_196_081_74),
        (0.5, 0.0),
        (0.7, 0.524_400_512_708_040_78),
        (0.95, 1.644_853_626_951_472_7),
        (0.975, 1.959_963_984_540_054_2),
        // 0.999999 as a binary double, slightly below the decimal value.
        (0.999_999, 4.753_424_308_817_087_8),
    ];

    #[test]
    fn cdf_matches_high_precision_reference() {
        for &(z, expected) in CDF_REFERENCE {
            let got = std_normal_cdf(z);
            assert!((got - expected).abs() <= 1e-10, "z={z}: {got} vs {expected}");
        }
        assert!((std_normal_cdf(-0.53125) - 0.2976).abs() < 5e-5);
    }

    #[test]
    fn quantile_matches_high_precision_reference() {
        for &(p, expected) in QUANTILE_REFERENCE {
            let got = std_normal_quantile(p).unwrap();
            let tol = 1e-12 * expected.abs().max(1.0);
            assert!((got - expected).abs() <= tol, "p={p}: {got} vs {expected}");
        }
        assert!((std_normal_quantile(0.975).unwrap() - 1.95996).abs() < 1e-5);
    }

    #[test]
    fn quantile_rejects_closed_endpoints() {
        for p in [0.0, 1.0, -0.1, 1.5, f64::NAN] {
            assert!(matches!(std_normal_quantile(p), Err(Error::Argument(_))));
        }
    }

    #[test]
    fn two_tailed_p_values() {
        assert!((two_tailed_p(1.73) - 0.083_630_275).abs() < 1e-8);
        assert!((two_tailed_p(-2.41) - 0.015_952_521).abs() < 1e-8);
        assert!(two_tailed_p(-5.18) < 5e-4);
        assert_eq!(two_tailed_p(0.0), 1.0);
    }

    mod props {
        use super::super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn round_trip(p in 1e-12f64..(1.0 - 1e-12)) {
                let z = std_normal_quantile(p).unwrap();
                prop_assert!((std_normal_cdf(z) - p).abs() <= 1e-12);
            }

            #[test]
            fn cdf_symmetry(z in -30.0f64..30.0) {
                prop_assert!((std_normal_cdf(z) + std_normal_cdf(-z) - 1.0).abs() <= 1e-12);
            }

            #[test]
            fn cdf_monotone(a in -10.0f64..10.0, d in 0.0f64..5.0) {
                prop_assert!(std_normal_cdf(a) <= std_normal_cdf(a + d));
            }
        }
    }
}
