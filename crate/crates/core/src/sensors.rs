//! Sensor simulation: magnetometer, sun sensor, rate gyro, and the inertial
//! reference directions (geomagnetic field, sun) they are compared against.

use nalgebra::Vector3;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::dynamics::{quat_to_dcm, AngularVelocity, Quaternion, Vec3};

/// Mean Earth radius used by the dipole field model, km.
pub const EARTH_RADIUS_KM: f64 = 6371.2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SensorError {
    #[error("invalid calendar instant: {0}")]
    InvalidInstant(&'static str),
    #[error("year {0} is outside the 1900-2100 window of the Julian date formula")]
    OutOfWindow(i32),
    #[error("invalid geographic position: {0}")]
    InvalidPosition(&'static str),
    #[error("cannot take the direction of a zero vector")]
    ZeroVector,
    #[error("noise standard deviations must be finite and non-negative")]
    InvalidNoise,
}

/// A UT calendar instant.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(deny_unknown_fields))]
pub struct CalendarInstant {
    pub year: i32,
    pub month: u32,
    pub day: u32,
    pub hour: u32,
    pub minute: u32,
    pub second: f64,
}

fn is_leap(year: i32) -> bool {
    (year % 4 == 0 && year % 100 != 0) || year % 400 == 0
}

fn days_in_month(year: i32, month: u32) -> u32 {
    match month {
        1 | 3 | 5 | 7 | 8 | 10 | 12 => 31,
        4 | 6 | 9 | 11 => 30,
        2 if is_leap(year) => 29,
        _ => 28,
    }
}

impl CalendarInstant {
    pub fn new(year: i32, month: u32, day: u32, hour: u32, minute: u32, second: f64) -> Result<Self, SensorError> {
        if !(1..=12).contains(&month) {
            return Err(SensorError::InvalidInstant("month must be in 1..=12"));
        }
        if day == 0 || day > days_in_month(year, month) {
            return Err(SensorError::InvalidInstant("day out of range for month"));
        }
        if hour > 23 || minute > 59 {
            return Err(SensorError::InvalidInstant("hour or minute out of range"));
        }
        if !(0.0..60.0).contains(&second) {
            return Err(SensorError::InvalidInstant("second must be in [0, 60)"));
        }
        if !(1900..=2100).contains(&year) {
            return Err(SensorError::OutOfWindow(year));
        }
        Ok(CalendarInstant { year, month, day, hour, minute, second })
    }

    /// 2000-01-01 12:00:00 UT.
    pub const J2000: CalendarInstant =
        CalendarInstant { year: 2000, month: 1, day: 1, hour: 12, minute: 0, second: 0.0 };
}

/// Geographic position on a spherical Earth.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(deny_unknown_fields))]
pub struct GeoPosition {
    pub latitude: f64,
    pub longitude: f64,
    pub altitude_km: f64,
}

impl GeoPosition {
    pub fn new(latitude: f64, longitude: f64, altitude_km: f64) -> Result<Self, SensorError> {
        if !(latitude.is_finite() && libm::fabs(latitude) <= 90.0) {
            return Err(SensorError::InvalidPosition("latitude must be within [-90, 90] deg"));
        }
        if !(longitude.is_finite() && longitude > -180.0 && longitude <= 180.0) {
            return Err(SensorError::InvalidPosition("longitude must be within (-180, 180] deg"));
        }
        if !(altitude_km.is_finite() && altitude_km >= 0.0) {
            return Err(SensorError::InvalidPosition("altitude must be non-negative"));
        }
        Ok(GeoPosition { latitude, longitude, altitude_km })
    }

    /// Earth-fixed position vector, km.
    pub fn to_earth_fixed(&self) -> Vec3 {
        let r = EARTH_RADIUS_KM + self.altitude_km;
        let (slat, clat) = libm::sincos(self.latitude.to_radians());
        let (slon, clon) = libm::sincos(self.longitude.to_radians());
        Vec3::new(r * clat * clon, r * clat * slon, r * slat)
    }
}

impl Default for GeoPosition {
    fn default() -> Self {
        GeoPosition { latitude: 0.0, longitude: 0.0, altitude_km: 500.0 }
    }
}

/// Unit direction vector.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DirectionVector(Vec3);

impl DirectionVector {
    pub fn from_vector(v: &Vec3) -> Result<Self, SensorError> {
        let n = v.norm();
        if !(n > 0.0) || !n.is_finite() {
            return Err(SensorError::ZeroVector);
        }
        Ok(DirectionVector(v / n))
    }

    pub fn as_vector(&self) -> &Vec3 {
        &self.0
    }

    pub fn to_array(&self) -> [f64; 3] {
        [self.0.x, self.0.y, self.0.z]
    }
}

/// White-noise levels for the three sensors plus the seed of the noise source.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(deny_unknown_fields))]
pub struct NoiseSpec {
    /// Per-axis std of the magnetometer noise relative to the field magnitude.
    pub sigma_mag: f64,
    /// Per-axis std of the sun sensor noise, direction-vector units.
    pub sigma_sun: f64,
    /// Per-axis std of the rate gyro noise, rad/s.
    pub sigma_gyro: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(sigma_mag: f64, sigma_sun: f64, sigma_gyro: f64, seed: u64) -> Result<Self, SensorError> {
        let ok = |s: f64| s.is_finite() && s >= 0.0;
        if !(ok(sigma_mag) && ok(sigma_sun) && ok(sigma_gyro)) {
            return Err(SensorError::InvalidNoise);
        }
        Ok(NoiseSpec { sigma_mag, sigma_sun, sigma_gyro, seed })
    }

    pub fn noiseless() -> Self {
        NoiseSpec { sigma_mag: 0.0, sigma_sun: 0.0, sigma_gyro: 0.0, seed: 0 }
    }

    pub fn is_noiseless(&self) -> bool {
        self.sigma_mag == 0.0 && self.sigma_sun == 0.0 && self.sigma_gyro == 0.0
    }
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec { sigma_mag: 1e-3, sigma_sun: 1e-3, sigma_gyro: 1e-4, seed: 0 }
    }
}

/// One synchronized sample of every sensor plus the inertial references.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SensorReading {
    pub mag_body: DirectionVector,
    pub sun_body: DirectionVector,
    pub omega_meas: AngularVelocity,
    pub mag_inertial: DirectionVector,
    pub sun_inertial: DirectionVector,
    pub t: f64,
}

impl SensorReading {
    /// Number of scalar channels in [`SensorReading::channels`].
    pub const CHANNELS: usize = 15;

    /// Flattened channels: body mag, body sun, inertial mag, inertial sun, gyro.
    pub fn channels(&self) -> [f64; 15] {
        let mut out = [0.0; 15];
        let blocks = [
            self.mag_body.to_array(),
            self.sun_body.to_array(),
            self.mag_inertial.to_array(),
            self.sun_inertial.to_array(),
            self.omega_meas.to_array(),
        ];
        for (i, block) in blocks.iter().enumerate() {
            out[3 * i..3 * i + 3].copy_from_slice(block);
        }
        out
    }

    pub const CHANNEL_NAMES: [&'static str; 15] = [
        "mag_b1", "mag_b2", "mag_b3", "sun_b1", "sun_b2", "sun_b3", "mag_i1", "mag_i2", "mag_i3", "sun_i1", "sun_i2",
        "sun_i3", "gyro1", "gyro2", "gyro3",
    ];
}

/// Julian date of a UT instant. `INT` is truncation toward zero.
pub fn julian_date(instant: &CalendarInstant) -> Result<f64, SensorError> {
    let CalendarInstant { year, month, day, hour, minute, second } = *instant;
    if !(1900..=2100).contains(&year) {
        return Err(SensorError::OutOfWindow(year));
    }
    // Integer division in Rust truncates toward zero, matching INT.
    let y = year as i64;
    let m = month as i64;
    let whole = 367 * y - (7 * (y + (m + 9) / 12)) / 4 + (275 * m) / 9 + day as i64;
    let frac = ((second / 60.0 + minute as f64) / 60.0 + hour as f64) / 24.0;
    Ok(whole as f64 + 1721013.5 + frac)
}

/// Intermediate quantities of the low-precision solar ephemeris, degrees.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolarAngles {
    pub centuries: f64,
    pub mean_longitude: f64,
    pub mean_anomaly: f64,
    pub ecliptic_longitude: f64,
    pub obliquity: f64,
}

fn reduce_deg(a: f64) -> f64 {
    let r = libm::fmod(a, 360.0);
    if r < 0.0 {
        r + 360.0
    } else {
        r
    }
}

pub fn solar_angles(jd: f64) -> SolarAngles {
    let t = (jd - 2451545.0) / 36525.0;
    let mean_longitude = reduce_deg(280.4606184 + 36000.77005361 * t);
    let mean_anomaly = reduce_deg(357.5277233 + 35999.05034 * t);
    let m = mean_anomaly.to_radians();
    let ecliptic_longitude = reduce_deg(mean_longitude + 1.914666471 * libm::sin(m) + 0.019994643 * libm::sin(2.0 * m));
    let obliquity = 23.439291 - 0.0130042 * t;
    SolarAngles { centuries: t, mean_longitude, mean_anomaly, ecliptic_longitude, obliquity }
}

/// Sun direction in the inertial (mean equator) frame.
pub fn sun_direction_inertial(jd: f64) -> DirectionVector {
    let a = solar_angles(jd);
    let (sl, cl) = libm::sincos(a.ecliptic_longitude.to_radians());
    let (se, ce) = libm::sincos(a.obliquity.to_radians());
    let v = Vec3::new(cl, ce * sl, se * sl);
    DirectionVector(v / v.norm())
}

/// Greenwich mean sidereal angle, degrees in `[0, 360)`.
pub fn greenwich_sidereal_deg(jd: f64) -> f64 {
    reduce_deg(280.46061837 + 360.98564736629 * (jd - 2451545.0))
}

/// Source of the geomagnetic field in the inertial frame, nT.
pub trait FieldModel {
    fn field_inertial(&self, pos: &GeoPosition, jd: f64) -> Vec3;
}

/// Centered dipole whose axis is tilted away from the rotation axis.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(deny_unknown_fields))]
pub struct TiltedDipole {
    /// Equatorial surface field strength B0, nT.
    pub reference_field: f64,
    /// Angle between dipole axis and rotation axis, deg.
    pub tilt_deg: f64,
    /// East longitude of the boreal geomagnetic pole, deg.
    pub pole_longitude_deg: f64,
}

impl Default for TiltedDipole {
    fn default() -> Self {
        TiltedDipole { reference_field: 30000.0, tilt_deg: 11.5, pole_longitude_deg: -72.0 }
    }
}

impl TiltedDipole {
    /// Unit vector toward the boreal geomagnetic pole, Earth-fixed.
    pub fn pole_axis(&self) -> Vec3 {
        let (st, ct) = libm::sincos(self.tilt_deg.to_radians());
        let (sl, cl) = libm::sincos(self.pole_longitude_deg.to_radians());
        Vec3::new(st * cl, st * sl, ct)
    }

    /// Field at an Earth-fixed position (km), Earth-fixed components, nT.
    pub fn field_earth_fixed(&self, r: &Vec3) -> Vec3 {
        let rn = r.norm();
        let rhat = r / rn;
        // The dipole moment points toward the geographic south, so surface
        // field lines run south to north.
        let m = -self.pole_axis();
        let scale = self.reference_field * libm::pow(EARTH_RADIUS_KM / rn, 3.0);
        (rhat * (3.0 * m.dot(&rhat)) - m) * scale
    }
}

impl FieldModel for TiltedDipole {
    fn field_inertial(&self, pos: &GeoPosition, jd: f64) -> Vec3 {
        let b = self.field_earth_fixed(&pos.to_earth_fixed());
        let (s, c) = libm::sincos(greenwich_sidereal_deg(jd).to_radians());
        Vec3::new(c * b.x - s * b.y, s * b.x + c * b.y, b.z)
    }
}

/// Geomagnetic field at `pos` for the given instant, inertial frame, nT.
pub fn magnetic_field_inertial<F: FieldModel + ?Sized>(
    model: &F,
    pos: &GeoPosition,
    instant: &CalendarInstant,
) -> Result<Vec3, SensorError> {
    Ok(model.field_inertial(pos, julian_date(instant)?))
}

fn gaussian_vector<R: Rng + ?Sized>(sigma: f64, rng: &mut R) -> Vec3 {
    if sigma == 0.0 {
        return Vec3::zeros();
    }
    let normal = Normal::new(0.0, sigma).expect("sigma validated as finite and non-negative");
    Vector3::new(normal.sample(rng), normal.sample(rng), normal.sample(rng))
}

fn noisy_direction<R: Rng + ?Sized>(
    reference: &Vec3,
    q: &Quaternion,
    sigma: f64,
    rng: &mut R,
) -> Result<DirectionVector, SensorError> {
    let magnitude = reference.norm();
    if !(magnitude > 0.0) || !magnitude.is_finite() {
        return Err(SensorError::ZeroVector);
    }
    let body = quat_to_dcm(q) * reference + gaussian_vector(sigma * magnitude, rng);
    DirectionVector::from_vector(&body)
}

/// Normalized magnetometer output for the inertial field `b_inertial`.
pub fn magnetometer_reading<R: Rng + ?Sized>(
    b_inertial: &Vec3,
    q: &Quaternion,
    noise: &NoiseSpec,
    rng: &mut R,
) -> Result<DirectionVector, SensorError> {
    noisy_direction(b_inertial, q, noise.sigma_mag, rng)
}

pub fn sun_sensor_reading<R: Rng + ?Sized>(
    sun_inertial: &DirectionVector,
    q: &Quaternion,
    noise: &NoiseSpec,
    rng: &mut R,
) -> Result<DirectionVector, SensorError> {
    noisy_direction(sun_inertial.as_vector(), q, noise.sigma_sun, rng)
}

pub fn gyro_reading<R: Rng + ?Sized>(omega: &AngularVelocity, noise: &NoiseSpec, rng: &mut R) -> AngularVelocity {
    AngularVelocity(omega.0 + gaussian_vector(noise.sigma_gyro, rng))
}
