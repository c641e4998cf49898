/// Index of the largest `score(i)` for `i < n`; ties go to the lowest index
/// and NaN scores never win. The reduction is order independent, so the
/// parallel and serial paths agree.
pub(crate) fn argmax<F>(n: usize, score: F) -> Option<(usize, f64)>
where
    F: Fn(usize) -> f64 + Sync,
{
    fn better(a: Option<(usize, f64)>, b: Option<(usize, f64)>) -> Option<(usize, f64)> {
        match (a, b) {
            (None, x) | (x, None) => x,
            (Some(x), Some(y)) => {
                if y.1 > x.1 || (y.1 == x.1 && y.0 < x.0) {
                    Some(y)
                } else {
                    Some(x)
                }
            }
        }
    }
    let lift = |i: usize| {
        let s = score(i);
        (!s.is_nan()).then_some((i, s))
    };

    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        if n >= 256 {
            return (0..n).into_par_iter().map(lift).reduce(|| None, better);
        }
    }
    (0..n).map(lift).fold(None, better)
}
