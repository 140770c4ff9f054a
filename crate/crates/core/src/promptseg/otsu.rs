/// Otsu threshold over the exact set of sample values.
///
/// Candidates are the distinct sample values; a pixel belongs to the upper
/// class when it is strictly greater than the threshold. The candidate with
/// the largest between-class variance `w0·w1·(μ0 − μ1)²` wins, the lowest on
/// ties. Returns `None` when all samples are equal.
pub fn otsu_threshold(values: &[f64]) -> Option<f64> {
    let mut v: Vec<f64> = values.to_vec();
    v.sort_by(f64::total_cmp);
    let (&lo, &hi) = (v.first()?, v.last()?);
    if lo == hi {
        return None;
    }
    // Offsetting by the minimum keeps the sums independent of a constant
    // shift of the input.
    let shifted: Vec<f64> = v.iter().map(|x| x - lo).collect();
    let n = shifted.len() as f64;
    let total: f64 = shifted.iter().sum();
    let mut best: Option<(f64, f64)> = None;
    let mut below = 0.0;
    let mut i = 0;
    while i < shifted.len() {
        let mut j = i;
        while j < shifted.len() && shifted[j] == shifted[i] {
            below += shifted[j];
            j += 1;
        }
        if j == shifted.len() {
            break;
        }
        let n0 = j as f64;
        let n1 = n - n0;
        let m0 = below / n0;
        let m1 = (total - below) / n1;
        let score = (n0 / n) * (n1 / n) * (m1 - m0) * (m1 - m0);
        if best.is_none_or(|(s, _)| score > s) {
            best = Some((score, v[i]));
        }
        i = j;
    }
    best.map(|(_, t)| t)
}
