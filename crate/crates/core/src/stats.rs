//! Order statistics and fixed-precision number formatting used by the
//! summaries and CSV writers.

/// Linear-interpolation percentile of an ascending slice, `q` in `[0, 1]`.
///
/// Returns NaN on an empty slice.
pub fn percentile_sorted(sorted: &[f64], q: f64) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        1 => sorted[0],
        n => {
            let pos = q.clamp(0.0, 1.0) * (n - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = pos.ceil() as usize;
            let frac = pos - lo as f64;
            sorted[lo] + (sorted[hi] - sorted[lo]) * frac
        }
    }
}

/// Percentile of an unsorted sample. NaN entries are ignored.
pub fn percentile(values: &[f64], q: f64) -> f64 {
    let sorted = sorted_finite(values);
    percentile_sorted(&sorted, q)
}

/// Mean of the non-NaN entries, summed in ascending order so the result does
/// not depend on input order.
pub fn mean(values: &[f64]) -> f64 {
    let sorted = sorted_finite(values);
    if sorted.is_empty() {
        return f64::NAN;
    }
    sorted.iter().sum::<f64>() / sorted.len() as f64
}

fn sorted_finite(values: &[f64]) -> Vec<f64> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| !x.is_nan()).collect();
    v.sort_by(f64::total_cmp);
    v
}

/// Formats with 9 significant digits, trimming trailing zeros. Switches to
/// exponent notation outside `[1e-4, 1e9)`.
pub fn fmt_sig9(x: f64) -> String {
    if x.is_nan() {
        return "NaN".to_string();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf" } else { "-inf" }.to_string();
    }
    if x == 0.0 {
        return "0".to_string();
    }
    let sci = format!("{:.8e}", x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent format");
    let exp: i32 = exp.parse().expect("exponent digits");
    if (-4..9).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        trim_zeros(format!("{:.*}", decimals, x))
    } else {
        format!("{}e{}", trim_zeros(mantissa.to_string()), exp)
    }
}

/// Round-trips a value through [`fmt_sig9`].
pub fn quantize(x: f64) -> f64 {
    fmt_sig9(x).parse().unwrap_or(f64::NAN)
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}
