/// Ordinary least-squares line y = intercept + slope·x.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub n: usize,
}

pub fn line_fit(x: &[f64], y: &[f64]) -> Option<LineFit> {
    let n = x.len();
    if n < 2 || y.len() != n {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxx += (a - mx) * (a - mx);
        sxy += (a - mx) * (b - my);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Some(LineFit {
        slope,
        intercept: my - slope * mx,
        r2,
        n,
    })
}

/// Upper-envelope exponent: the smallest `p` such that y ≤ C·(1+t)^p on the
/// tail, estimated by fitting the running maxima from the right.
pub fn envelope_exponent(t: &[f64], y: &[f64]) -> Option<LineFit> {
    let n = t.len();
    if n < 3 {
        return None;
    }
    let mut env = vec![0.0; n];
    let mut m: f64 = 0.0;
    for i in (0..n).rev() {
        m = m.max(y[i].abs());
        env[i] = m;
    }
    let (lx, ly): (Vec<f64>, Vec<f64>) = t
        .iter()
        .zip(&env)
        .filter(|(_, e)| **e > 0.0)
        .map(|(t, e)| ((1.0 + t).ln(), e.ln()))
        .unzip();
    line_fit(&lx, &ly)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 - 0.5 * v).collect();
        let f = line_fit(&x, &y).unwrap();
        assert!((f.slope + 0.5).abs() < 1e-14 && (f.intercept - 2.0).abs() < 1e-14);
        assert!((f.r2 - 1.0).abs() < 1e-14);
    }

    #[test]
    fn envelope_of_power_law() {
        let t: Vec<f64> = (1..100).map(|i| i as f64).collect();
        let y: Vec<f64> = t.iter().map(|t| (1.0 + t).powf(-0.5)).collect();
        let f = envelope_exponent(&t, &y).unwrap();
        assert!((f.slope + 0.5).abs() < 1e-12);
    }
}
