use super::AnfisError;

/// Generalized bell membership `μ(x) = 1 / (1 + |(x - c)/a|^(2b))`.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MembershipFunction {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

/// Floor applied to `a` and `b` after a gradient step.
pub(crate) const MIN_SHAPE: f64 = 1e-6;

/// Membership degree and its partial derivatives with respect to `(a, b, c)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BellPartials {
    pub mu: f64,
    pub d_a: f64,
    pub d_b: f64,
    pub d_c: f64,
}

impl MembershipFunction {
    pub fn new(a: f64, b: f64, c: f64) -> Result<Self, AnfisError> {
        let mf = MembershipFunction { a, b, c };
        mf.validate()?;
        Ok(mf)
    }

    pub fn validate(&self) -> Result<(), AnfisError> {
        if !(self.a > 0.0 && self.a.is_finite() && self.b > 0.0 && self.b.is_finite() && self.c.is_finite()) {
            return Err(AnfisError::InvalidMembership { a: self.a, b: self.b, c: self.c });
        }
        Ok(())
    }

    pub fn eval(&self, x: f64) -> f64 {
        let z = libm::fabs((x - self.c) / self.a);
        if z == 0.0 {
            return 1.0;
        }
        1.0 / (1.0 + libm::pow(z, 2.0 * self.b))
    }

    pub fn partials(&self, x: f64) -> BellPartials {
        let d = x - self.c;
        let z = libm::fabs(d / self.a);
        if z == 0.0 {
            // μ is flat in a and b at the center; the c-derivative vanishes for b > 1/2
            // and is taken as zero otherwise.
            return BellPartials { mu: 1.0, d_a: 0.0, d_b: 0.0, d_c: 0.0 };
        }
        let u = libm::pow(z, 2.0 * self.b);
        let mu = 1.0 / (1.0 + u);
        let mu2u = mu * mu * u;
        BellPartials {
            mu,
            d_a: 2.0 * self.b * mu2u / self.a,
            d_b: -2.0 * libm::log(z) * mu2u,
            d_c: 2.0 * self.b * mu2u / d,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_at_center_and_half_at_width() {
        let mf = MembershipFunction::new(0.25, 2.0, 0.5).unwrap();
        assert_eq!(mf.eval(0.5), 1.0);
        assert!((mf.eval(0.75) - 0.5).abs() < 1e-15);
        assert!((mf.eval(0.25) - 0.5).abs() < 1e-15);
        assert!(mf.eval(10.0) > 0.0 && mf.eval(10.0) < 1e-5);
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(MembershipFunction::new(0.0, 2.0, 0.0).is_err());
        assert!(MembershipFunction::new(1.0, -1.0, 0.0).is_err());
        assert!(MembershipFunction::new(1.0, 2.0, f64::NAN).is_err());
    }

    #[test]
    fn partials_match_finite_differences() {
        let mf = MembershipFunction::new(0.7, 1.6, -0.2).unwrap();
        let h = 1e-7;
        for x in [-1.3, -0.5, -0.19, 0.1, 0.9, 2.4] {
            let p = mf.partials(x);
            let fd = |f: &dyn Fn(f64) -> MembershipFunction, v: f64| (f(v + h).eval(x) - f(v - h).eval(x)) / (2.0 * h);
            let da = fd(&|v| MembershipFunction { a: v, ..mf }, mf.a);
            let db = fd(&|v| MembershipFunction { b: v, ..mf }, mf.b);
            let dc = fd(&|v| MembershipFunction { c: v, ..mf }, mf.c);
            assert!((p.d_a - da).abs() < 1e-7, "x={x}: {} vs {da}", p.d_a);
            assert!((p.d_b - db).abs() < 1e-7, "x={x}: {} vs {db}", p.d_b);
            assert!((p.d_c - dc).abs() < 1e-7, "x={x}: {} vs {dc}", p.d_c);
            assert_eq!(p.mu, mf.eval(x));
        }
    }
}
