//! Small quadrature, interpolation and monotone-regression helpers shared by
//! every module. Everything here works on plain slices.

/// `n` evenly spaced points on `[a, b]`, endpoints included.
pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![a],
        _ => (0..n)
            .map(|i| {
                if i == n - 1 {
                    b
                } else {
                    a + (b - a) * i as f64 / (n - 1) as f64
                }
            })
            .collect(),
    }
}

/// Trapezoid rule over arbitrary (sorted) nodes.
pub fn trapz(x: &[f64], y: &[f64]) -> f64 {
    debug_assert_eq!(x.len(), y.len());
    x.windows(2)
        .zip(y.windows(2))
        .map(|(xw, yw)| 0.5 * (xw[1] - xw[0]) * (yw[0] + yw[1]))
        .sum()
}

/// Cumulative trapezoid integral, starting at 0 on the first node.
pub fn cumtrapz(x: &[f64], y: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(x.len());
    let mut acc = 0.0;
    if !x.is_empty() {
        out.push(0.0);
    }
    for i in 1..x.len() {
        acc += 0.5 * (x[i] - x[i - 1]) * (y[i] + y[i - 1]);
        out.push(acc);
    }
    out
}

/// Trapezoid weights so that `sum(w[i] * y[i]) == trapz(x, y)`.
pub fn trapz_weights(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut w = vec![0.0; n];
    for i in 1..n {
        let h = 0.5 * (x[i] - x[i - 1]);
        w[i - 1] += h;
        w[i] += h;
    }
    w
}

/// Index `i` with `xs[i] <= x < xs[i+1]`, clamped to `[0, n-2]`.
pub fn bracket(xs: &[f64], x: f64) -> usize {
    let n = xs.len();
    if n < 2 || x <= xs[0] {
        return 0;
    }
    if x >= xs[n - 1] {
        return n - 2;
    }
    match xs.binary_search_by(|p| p.partial_cmp(&x).unwrap()) {
        Ok(i) => i.min(n - 2),
        Err(i) => i - 1,
    }
}

/// Piecewise-linear interpolation, constant extrapolation.
pub fn interp(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let n = xs.len();
    if n == 0 {
        return f64::NAN;
    }
    if n == 1 || x <= xs[0] {
        return ys[0];
    }
    if x >= xs[n - 1] {
        return ys[n - 1];
    }
    let i = bracket(xs, x);
    let dx = xs[i + 1] - xs[i];
    if dx <= 0.0 {
        return ys[i];
    }
    let w = (x - xs[i]) / dx;
    ys[i] * (1.0 - w) + ys[i + 1] * w
}

/// Smallest `x` at which the non-decreasing piecewise-linear function
/// `(xs, ys)` reaches `target` (left-continuous inverse).
pub fn inverse_monotone(xs: &[f64], ys: &[f64], target: f64) -> f64 {
    let n = xs.len();
    if n == 0 {
        return f64::NAN;
    }
    if target <= ys[0] {
        return xs[0];
    }
    for i in 1..n {
        if ys[i] >= target {
            let dy = ys[i] - ys[i - 1];
            if dy <= 0.0 {
                return xs[i];
            }
            let w = (target - ys[i - 1]) / dy;
            return xs[i - 1] + w * (xs[i] - xs[i - 1]);
        }
    }
    xs[n - 1]
}

/// Centered differences in the interior, one-sided at the ends.
pub fn gradient(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut d = vec![0.0; n];
    if n < 2 {
        return d;
    }
    d[0] = (y[1] - y[0]) / (x[1] - x[0]);
    d[n - 1] = (y[n - 1] - y[n - 2]) / (x[n - 1] - x[n - 2]);
    for i in 1..n - 1 {
        d[i] = (y[i + 1] - y[i - 1]) / (x[i + 1] - x[i - 1]);
    }
    d
}

/// Bisection for a sign change of `f` on `[a, b]`.
pub fn bisect<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let mut fa = f(a);
    if fa == 0.0 {
        return a;
    }
    for _ in 0..200 {
        if (b - a).abs() <= tol {
            break;
        }
        let m = 0.5 * (a + b);
        let fm = f(m);
        if fm == 0.0 {
            return m;
        }
        if (fm > 0.0) == (fa > 0.0) {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

/// Golden-section maximization of a unimodal function on `[a, b]`.
pub fn golden_max<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > tol {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Ironing of a curve `r` sampled at ascending `x`, with pointwise
/// derivative `dr` (non-finite where unknown).
#[derive(Clone, Debug, PartialEq)]
pub struct ConcaveIroning {
    /// Derivative of the least concave majorant at each node. At hull
    /// vertices `dr` is clamped between the adjacent segment slopes.
    pub slope: Vec<f64>,
    /// Majorant minus curve, `>= 0`.
    pub gap: Vec<f64>,
    /// Inclusive node ranges spanned by hull segments that lift off the
    /// curve.
    pub pooled: Vec<(usize, usize)>,
}

pub fn concave_iron(x: &[f64], r: &[f64], dr: &[f64]) -> ConcaveIroning {
    let n = x.len();
    // one representative (highest r) per distinct x
    let mut groups: Vec<(usize, usize, usize)> = Vec::new(); // (first, last, representative)
    for i in 0..n {
        match groups.last_mut() {
            Some(g) if x[i] <= x[g.0] => {
                g.1 = i;
                if r[i] > r[g.2] {
                    g.2 = i;
                }
            }
            _ => groups.push((i, i, i)),
        }
    }
    let rep: Vec<usize> = groups.iter().map(|g| g.2).collect();
    let mut hull: Vec<usize> = Vec::new(); // indices into `rep`
    for k in 0..rep.len() {
        while hull.len() >= 2 {
            let (a, b) = (rep[hull[hull.len() - 2]], rep[hull[hull.len() - 1]]);
            let c = rep[k];
            let cross = (x[b] - x[a]) * (r[c] - r[a]) - (r[b] - r[a]) * (x[c] - x[a]);
            if cross >= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(k);
    }
    let seg_slope = |s: usize| {
        let (a, b) = (rep[hull[s]], rep[hull[s + 1]]);
        (r[b] - r[a]) / (x[b] - x[a])
    };
    let rscale = r.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(1e-300);
    let mut slope = vec![0.0; n];
    let mut gap = vec![0.0; n];
    let mut pooled = Vec::new();
    let mut s = 0;
    for (k, g) in groups.iter().enumerate() {
        while s + 1 < hull.len() && hull[s + 1] < k {
            s += 1;
        }
        let value;
        let sl;
        if hull.len() == 1 {
            value = r[g.2];
            sl = if dr[g.2].is_finite() { dr[g.2] } else { 0.0 };
        } else if hull[s] == k || (s + 1 < hull.len() && hull[s + 1] == k) {
            // vertex
            let v = if hull[s] == k { s } else { s + 1 };
            let left = if v > 0 { seg_slope(v - 1) } else { f64::INFINITY };
            let right = if v + 1 < hull.len() { seg_slope(v) } else { f64::NEG_INFINITY };
            value = r[g.2];
            let d = dr[g.2];
            sl = if d.is_finite() {
                d.clamp(right, left)
            } else if left.is_finite() && right.is_finite() {
                0.5 * (left + right)
            } else if left.is_finite() {
                left
            } else {
                right
            };
        } else {
            let a = rep[hull[s]];
            sl = seg_slope(s);
            value = r[a] + sl * (x[g.0] - x[a]);
        }
        for i in g.0..=g.1 {
            slope[i] = sl;
            gap[i] = (value - r[i]).max(0.0);
        }
    }
    for w in hull.windows(2) {
        let (a, b) = (groups[w[0]].0, groups[w[1]].1);
        if w[1] > w[0] + 1 && (a..=b).any(|i| gap[i] > 1e-12 * rscale) {
            pooled.push((a, b));
        }
    }
    ConcaveIroning { slope, gap, pooled }
}
