use romkit::toy::{linspace, ToyVariant};
use romkit_web::Demo;

fn demo() -> Demo {
    Demo::new(20, 40, 12, 15, ToyVariant::Snippet).unwrap()
}

#[test]
fn fields_are_square_images() {
    let d = demo();
    assert_eq!(d.side(), 21);
    assert_eq!(d.field(1.3).len(), 21 * 21);
    assert_eq!(d.rank(), 12);
    assert_eq!(d.sensor_count(), 15);
}

#[test]
fn compression_error_shrinks_with_modes() {
    let d = demo();
    let sv = d.singular_values();
    assert!(sv.windows(2).all(|w| w[1] <= w[0]));
    let mu = 2.2;
    let errs: Vec<f64> = [1, 4, 8, 12]
        .iter()
        .map(|&n| d.relative_error(mu, &d.compress(mu, n).unwrap()).unwrap())
        .collect();
    assert!(errs.windows(2).all(|w| w[1] <= w[0] + 1e-12), "{errs:?}");
    assert!(errs[3] < 0.05, "{errs:?}");
    // n beyond the rank is clamped
    assert_eq!(d.compress(mu, 99).unwrap(), d.compress(mu, 12).unwrap());
}

#[test]
fn sensor_points_lie_in_the_square_and_are_distinct() {
    let d = demo();
    let p = d.sensor_points(10);
    assert_eq!(p.len(), 20);
    assert!(p.iter().all(|v| (0.0..=1.0).contains(v)));
    let pairs: Vec<(u64, u64)> = p.chunks(2).map(|c| (c[0].to_bits(), c[1].to_bits())).collect();
    let mut uniq = pairs.clone();
    uniq.sort();
    uniq.dedup();
    assert_eq!(uniq.len(), pairs.len());
    assert_eq!(d.sensor_points(100).len(), 2 * d.sensor_count());
}

#[test]
fn clean_interpolation_improves_with_sensors() {
    let d = demo();
    let mu = linspace(-5.0, 5.0, 40)[7];
    let plain = d.interpolate(mu, 15, 0.0, 0, false).unwrap();
    let tikhonov = d.interpolate(mu, 15, 0.0, 0, true).unwrap();
    assert_eq!(plain, tikhonov);
    let few = d.interpolate(mu, 3, 0.0, 0, false).unwrap();
    let (e15, e3) = (d.relative_error(mu, &plain).unwrap(), d.relative_error(mu, &few).unwrap());
    assert!(e15 < e3 && e15 < 0.1, "{e15} vs {e3}");
}

#[test]
fn noisy_interpolation_depends_only_on_the_seed() {
    let d = demo();
    let a = d.interpolate(0.4, 12, 0.05, 3, true).unwrap();
    let b = d.interpolate(0.4, 12, 0.05, 3, true).unwrap();
    let c = d.interpolate(0.4, 12, 0.05, 4, true).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn bad_inputs_are_errors() {
    assert!(Demo::new(0, 10, 3, 3, ToyVariant::Prose).is_err());
    let d = demo();
    assert!(d.interpolate(0.0, 5, -1.0, 0, false).is_err());
    assert!(d.relative_error(0.0, &[1.0, 2.0]).is_err());
}
