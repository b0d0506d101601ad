//! First-order forward-mode number carrying partials with respect to the two
//! network quantities a residual can depend on: the value `u` and the
//! Laplacian `lap`.
//!
//! Problem callbacks are written once against [`Jet`]; the loss code reads off
//! the partials to seed the reverse pass through the network.

use std::ops::{Add, Div, Mul, Neg, Sub};

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Jet {
    pub v: f64,
    pub du: f64,
    pub dlap: f64,
}

impl Jet {
    pub const ZERO: Jet = Jet { v: 0.0, du: 0.0, dlap: 0.0 };

    pub fn constant(v: f64) -> Self {
        Jet { v, du: 0.0, dlap: 0.0 }
    }

    /// Independent variable `u`.
    pub fn var_u(v: f64) -> Self {
        Jet { v, du: 1.0, dlap: 0.0 }
    }

    /// Independent variable `lap`.
    pub fn var_lap(v: f64) -> Self {
        Jet { v, du: 0.0, dlap: 1.0 }
    }

    pub fn square(self) -> Self {
        self * self
    }

    pub fn is_finite(&self) -> bool {
        self.v.is_finite() && self.du.is_finite() && self.dlap.is_finite()
    }
}

impl From<f64> for Jet {
    fn from(v: f64) -> Self {
        Jet::constant(v)
    }
}

impl Add for Jet {
    type Output = Jet;
    fn add(self, o: Jet) -> Jet {
        Jet { v: self.v + o.v, du: self.du + o.du, dlap: self.dlap + o.dlap }
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(self, o: Jet) -> Jet {
        Jet { v: self.v - o.v, du: self.du - o.du, dlap: self.dlap - o.dlap }
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, o: Jet) -> Jet {
        Jet {
            v: self.v * o.v,
            du: self.du * o.v + self.v * o.du,
            dlap: self.dlap * o.v + self.v * o.dlap,
        }
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        Jet { v: -self.v, du: -self.du, dlap: -self.dlap }
    }
}

impl Add<f64> for Jet {
    type Output = Jet;
    fn add(self, c: f64) -> Jet {
        Jet { v: self.v + c, ..self }
    }
}

impl Sub<f64> for Jet {
    type Output = Jet;
    fn sub(self, c: f64) -> Jet {
        Jet { v: self.v - c, ..self }
    }
}

impl Mul<f64> for Jet {
    type Output = Jet;
    fn mul(self, c: f64) -> Jet {
        Jet { v: self.v * c, du: self.du * c, dlap: self.dlap * c }
    }
}

impl Mul<Jet> for f64 {
    type Output = Jet;
    fn mul(self, j: Jet) -> Jet {
        j * self
    }
}

impl Div<f64> for Jet {
    type Output = Jet;
    fn div(self, c: f64) -> Jet {
        Jet { v: self.v / c, du: self.du / c, dlap: self.dlap / c }
    }
}
