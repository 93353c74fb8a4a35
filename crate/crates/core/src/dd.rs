//! Double-double arithmetic for large phases that must be reduced modulo 2 pi.

#[derive(Clone, Copy, Debug)]
pub struct Dd {
    pub hi: f64,
    pub lo: f64,
}

pub const TWO_PI_DD: Dd = Dd { hi: std::f64::consts::TAU, lo: 2.4492935982947064e-16 };

pub fn two_sum(a: f64, b: f64) -> Dd {
    let s = a + b;
    let bb = s - a;
    Dd { hi: s, lo: (a - (s - bb)) + (b - bb) }
}

fn quick(hi: f64, lo: f64) -> Dd {
    let s = hi + lo;
    Dd { hi: s, lo: lo - (s - hi) }
}

pub fn two_prod(a: f64, b: f64) -> Dd {
    let p = a * b;
    Dd { hi: p, lo: a.mul_add(b, -p) }
}

impl Dd {
    pub fn add(self, o: Dd) -> Dd {
        let s = two_sum(self.hi, o.hi);
        quick(s.hi, s.lo + self.lo + o.lo)
    }

    pub fn neg(self) -> Dd {
        Dd { hi: -self.hi, lo: -self.lo }
    }

    pub fn mul(self, o: Dd) -> Dd {
        let p = two_prod(self.hi, o.hi);
        quick(p.hi, p.lo + self.hi * o.lo + self.lo * o.hi)
    }

    pub fn mulf(self, b: f64) -> Dd {
        let p = two_prod(self.hi, b);
        quick(p.hi, p.lo + self.lo * b)
    }

    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    /// Representative in `[-pi, pi]`.
    pub fn reduce(self) -> f64 {
        let k = (self.hi / TWO_PI_DD.hi).round();
        self.add(TWO_PI_DD.mulf(k).neg()).to_f64()
    }
}

/// `exp(i t p)` with the product formed exactly and reduced before `cis`.
#[inline]
pub fn cis_product(t: f64, p: f64) -> crate::spectral::C64 {
    crate::spectral::C64::cis(two_prod(t, p).reduce())
}
