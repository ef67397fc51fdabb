//! Values exchanged between robots and between the barrier builders and
//! the QP.

use crate::error::Error;

/// What every robot publishes once per tick on the shared bus.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BroadcastMsg {
    pub robot_id: u32,
    /// Estimated time until the voltage reaches E_min (s).
    pub t_l: f64,
    /// Drift of the arrival-time estimate (dimensionless).
    pub beta: f64,
    /// Distance to the station (m).
    pub d: f64,
}

impl BroadcastMsg {
    pub const WIRE_LEN: usize = 28;

    /// Fixed little-endian wire form: id (u32), t_l, beta, d (f64 each).
    pub fn to_bytes(&self) -> [u8; Self::WIRE_LEN] {
        let mut buf = [0u8; Self::WIRE_LEN];
        buf[0..4].copy_from_slice(&self.robot_id.to_le_bytes());
        buf[4..12].copy_from_slice(&self.t_l.to_le_bytes());
        buf[12..20].copy_from_slice(&self.beta.to_le_bytes());
        buf[20..28].copy_from_slice(&self.d.to_le_bytes());
        buf
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self, Error> {
        if buf.len() != Self::WIRE_LEN {
            return Err(Error::Decode(format!(
                "broadcast message must be {} bytes, got {}",
                Self::WIRE_LEN,
                buf.len()
            )));
        }
        let f = |r: std::ops::Range<usize>| f64::from_le_bytes(buf[r].try_into().expect("8-byte slice"));
        let msg = Self {
            robot_id: u32::from_le_bytes(buf[0..4].try_into().expect("4-byte slice")),
            t_l: f(4..12),
            beta: f(12..20),
            d: f(20..28),
        };
        msg.check()?;
        Ok(msg)
    }

    pub fn check(&self) -> Result<(), Error> {
        if !self.t_l.is_finite() || !self.beta.is_finite() {
            return Err(Error::Decode(format!("robot {}: non-finite arrival estimate", self.robot_id)));
        }
        if !(self.d >= 0.0) {
            return Err(Error::Decode(format!("robot {}: negative distance {}", self.robot_id, self.d)));
        }
        Ok(())
    }
}

/// One linear inequality `a . [u_x, u_y, eta] >= b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstraintRow {
    pub a: [f64; 3],
    pub b: f64,
}

impl ConstraintRow {
    pub fn new(a: [f64; 3], b: f64) -> Self {
        Self { a, b }
    }

    pub fn dot(&self, u: &[f64; 3]) -> f64 {
        self.a[0] * u[0] + self.a[1] * u[1] + self.a[2] * u[2]
    }

    /// Residual `a.u - b`; non-negative when satisfied.
    pub fn slack(&self, u: &[f64; 3]) -> f64 {
        self.dot(u) - self.b
    }

    pub fn norm_sq(&self) -> f64 {
        self.a.iter().map(|c| c * c).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.a.iter().all(|c| c.is_finite()) && self.b.is_finite()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self { a: [self.a[0] * c, self.a[1] * c, self.a[2] * c], b: self.b * c }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn wire_round_trip_is_bit_exact(id in any::<u32>(), t_l in -1e12f64..1e12, beta in -1e6f64..1e6, d in 0f64..1e6) {
            let m = BroadcastMsg { robot_id: id, t_l, beta, d };
            let back = BroadcastMsg::from_bytes(&m.to_bytes()).unwrap();
            prop_assert_eq!(back.robot_id, m.robot_id);
            prop_assert_eq!(back.t_l.to_bits(), m.t_l.to_bits());
            prop_assert_eq!(back.beta.to_bits(), m.beta.to_bits());
            prop_assert_eq!(back.d.to_bits(), m.d.to_bits());
        }
    }

    #[test]
    fn decode_rejects_bad_messages() {
        assert!(BroadcastMsg::from_bytes(&[0u8; 5]).is_err());
        let m = BroadcastMsg { robot_id: 1, t_l: f64::INFINITY, beta: 0.0, d: 1.0 };
        assert!(BroadcastMsg::from_bytes(&m.to_bytes()).is_err());
        let m = BroadcastMsg { robot_id: 1, t_l: 1.0, beta: 0.0, d: -1.0 };
        assert!(BroadcastMsg::from_bytes(&m.to_bytes()).is_err());
    }
}
