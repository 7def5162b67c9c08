use multimin::metrics::chebyshev;
use multimin::objectives::registry;
use multimin::optim::{minimize, MinimizeOptions};

/// Tabulated minima are rounded, so stationarity is checked at the local
/// minimum reached by a short descent from each row.
#[test]
fn tabulated_minima_are_stationary_after_polishing() {
    let opts = MinimizeOptions {
        max_iterations: 2000,
        max_step: Some(1e-3),
        ..MinimizeOptions::default()
    };
    let mut checked = 0;
    for entry in registry() {
        let f = &entry.function;
        let domain = f.domain();
        for (i, (row, y)) in entry.known.entries().iter().enumerate() {
            let r = minimize(|x, g| f.value_and_gradient(x, g), row, domain, &opts).unwrap();
            let moved = chebyshev(&r.x, row).unwrap();
            assert!(
                moved <= 1e-2,
                "{} row {}: polished point moved {moved}",
                f.name(),
                i + 1
            );
            assert!(r.f <= y + 1e-3, "{} row {}: value {} vs {y}", f.name(), i + 1, r.f);

            let mut g = vec![0.0; f.dim()];
            f.value_and_gradient(&r.x, &mut g);
            let projected = g
                .iter()
                .enumerate()
                .map(|(j, &gj)| {
                    let at_lower = r.x[j] <= domain.lower()[j] && gj > 0.0;
                    let at_upper = r.x[j] >= domain.upper()[j] && gj < 0.0;
                    if at_lower || at_upper {
                        0.0
                    } else {
                        gj.abs()
                    }
                })
                .fold(0.0, f64::max);
            assert!(
                projected <= 1e-2,
                "{} row {}: |grad| {projected} at {:?}",
                f.name(),
                i + 1,
                r.x
            );
            checked += 1;
        }
    }
    assert_eq!(checked, 306);
}
