//! Great-circle geometry on a spherical earth.

pub const EARTH_RADIUS_KM: f64 = 6371.0;

/// Point reached from (`latitude`, `longitude`) after travelling
/// `distance_km` along the great circle with initial `bearing` (degrees
/// clockwise from north). Longitude is normalized to [-180, 180).
pub fn destination_point(latitude: f64, longitude: f64, bearing: f64, distance_km: f64) -> (f64, f64) {
    if distance_km == 0.0 {
        return (latitude, longitude);
    }
    let phi1 = latitude.to_radians();
    let lambda1 = longitude.to_radians();
    let theta = bearing.to_radians();
    let delta = distance_km / EARTH_RADIUS_KM;

    let sin_phi2 = phi1.sin() * delta.cos() + phi1.cos() * delta.sin() * theta.cos();
    let phi2 = sin_phi2.clamp(-1.0, 1.0).asin();
    let y = theta.sin() * delta.sin() * phi1.cos();
    let x = delta.cos() - phi1.sin() * sin_phi2;
    let lambda2 = lambda1 + y.atan2(x);
    let lon = (lambda2.to_degrees() + 540.0).rem_euclid(360.0) - 180.0;
    (phi2.to_degrees(), lon)
}

/// Haversine distance in km.
pub fn haversine_km(lat1: f64, lon1: f64, lat2: f64, lon2: f64) -> f64 {
    let (p1, p2) = (lat1.to_radians(), lat2.to_radians());
    let dp = p2 - p1;
    let dl = (lon2 - lon1).to_radians();
    let a = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * a.sqrt().min(1.0).asin()
}
