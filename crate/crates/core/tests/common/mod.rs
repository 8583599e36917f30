#![allow(dead_code)]

use naim_core::feedback::Actuation;
use naim_core::{FeedbackConfig, ShapingMetric, Sphere, SphereField};
use nalgebra::{Matrix3, UnitQuaternion, Vector3};
use proptest::prelude::*;

pub fn unit_vector() -> impl Strategy<Value = Vector3<f64>> {
    prop::array::uniform3(-1.0f64..1.0)
        .prop_filter("away from the origin", |a| {
            let n = a.iter().map(|x| x * x).sum::<f64>();
            n > 0.01 && n <= 1.0
        })
        .prop_map(|a| Vector3::from(a).normalize())
}

pub fn ambient_vector(scale: f64) -> impl Strategy<Value = Vector3<f64>> {
    prop::array::uniform3(-scale..scale).prop_map(Vector3::from)
}

pub fn rotation() -> impl Strategy<Value = Matrix3<f64>> {
    prop::array::uniform3(-3.2f64..3.2).prop_map(|[a, b, c]| {
        UnitQuaternion::from_euler_angles(a, b, c)
            .to_rotation_matrix()
            .into_inner()
    })
}

pub fn ambient_matrix(scale: f64) -> impl Strategy<Value = Matrix3<f64>> {
    prop::array::uniform9(-scale..scale).prop_map(|a| Matrix3::from_row_slice(&a))
}

pub fn s2_config(epsilon: f64) -> FeedbackConfig<Sphere> {
    let field = SphereField::rotation(Vector3::z()).expect("unit axis");
    FeedbackConfig::new(
        Sphere,
        epsilon,
        ShapingMetric::SameAsBase,
        field,
        Actuation::FullyActuated,
    )
    .expect("valid config")
}

/// Deterministic tangent state off the graph of the e3 rotation field.
pub fn s2_state(i: usize) -> (Vector3<f64>, Vector3<f64>) {
    let t = i as f64;
    let q = Vector3::new(
        libm::cos(0.7 * t + 0.3),
        libm::sin(0.7 * t + 0.3),
        0.4 * libm::sin(1.3 * t) + 0.1,
    )
    .normalize();
    let w = Vector3::new(1.1 * libm::sin(2.1 * t + 1.0), -1.4, 0.9 * libm::cos(t) + 0.5);
    let v = w - q * w.dot(&q);
    (q, v)
}
