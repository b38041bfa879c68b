use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gender {
    Female,
    Male,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BmiClass {
    Overweight,
    NotOverweight,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserProfile {
    pub user: u32,
    pub gender: Gender,
    pub weight_kg: f64,
    pub height_m: f64,
    pub age: f64,
}

impl UserProfile {
    pub fn validate(&self) -> Result<()> {
        if !(self.weight_kg > 0.0) {
            return Err(Error::Input(format!("user {}: weight must be positive", self.user)));
        }
        if !(self.height_m > 0.0) {
            return Err(Error::Input(format!("user {}: height must be positive", self.user)));
        }
        Ok(())
    }

    pub fn bmi(&self) -> f64 {
        self.weight_kg / (self.height_m * self.height_m)
    }
}

/// Overweight iff BMI is strictly above 25.
pub fn bmi_label(profile: &UserProfile) -> Result<BmiClass> {
    profile.validate()?;
    Ok(if profile.bmi() > 25.0 {
        BmiClass::Overweight
    } else {
        BmiClass::NotOverweight
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(w: f64, h: f64) -> UserProfile {
        UserProfile {
            user: 1,
            gender: Gender::Male,
            weight_kg: w,
            height_m: h,
            age: 30.0,
        }
    }

    #[test]
    fn boundary_is_strict() {
        assert_eq!(p(81.0, 1.8).bmi(), 25.0);
        assert_eq!(bmi_label(&p(81.0, 1.8)).unwrap(), BmiClass::NotOverweight);
        assert_eq!(bmi_label(&p(100.0, 2.0)).unwrap(), BmiClass::NotOverweight);
    }

    #[test]
    fn arithmetic_cases() {
        assert_eq!(bmi_label(&p(90.0, 1.8)).unwrap(), BmiClass::Overweight);
        assert!((p(90.0, 1.8).bmi() - 27.777_777_777_777_78).abs() < 1e-9);
        assert_eq!(bmi_label(&p(50.0, 1.8)).unwrap(), BmiClass::NotOverweight);
    }

    #[test]
    fn nonpositive_height_rejected() {
        assert!(matches!(bmi_label(&p(70.0, 0.0)), Err(Error::Input(_))));
        assert!(bmi_label(&p(70.0, -1.7)).is_err());
    }
}
