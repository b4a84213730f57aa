//! Non-dominated filtering over `(f1, f2)`.

use super::baselines::TableRow;
use super::Objectives;

fn dominates(a: &Objectives, b: &Objectives) -> bool {
    a.f1 >= b.f1 && a.f2 >= b.f2 && (a.f1 > b.f1 || a.f2 > b.f2)
}

/// Indices of the rows not dominated by any other row, ascending.
///
/// Sorts by `f1` descending (ties by `f2` descending) and keeps rows whose
/// `f2` beats everything seen so far; exact duplicates of a front point are
/// kept as well.
pub fn pareto_front(table: &[TableRow]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..table.len()).collect();
    order.sort_by(|&i, &j| {
        let (a, b) = (&table[i].objectives, &table[j].objectives);
        b.f1.total_cmp(&a.f1).then(b.f2.total_cmp(&a.f2))
    });
    let mut front = Vec::new();
    let mut best_f2 = f64::NEG_INFINITY;
    let mut last: Option<Objectives> = None;
    for i in order {
        let o = table[i].objectives;
        if o.f2 > best_f2 || last == Some(o) {
            front.push(i);
            best_f2 = best_f2.max(o.f2);
            last = Some(o);
        }
    }
    front.sort_unstable();
    front
}

/// Quadratic dominance filter with the same output as [`pareto_front`].
pub fn pareto_front_brute_force(table: &[TableRow]) -> Vec<usize> {
    (0..table.len())
        .filter(|&i| !table.iter().any(|r| dominates(&r.objectives, &table[i].objectives)))
        .collect()
}

/// Euclidean distance from `point` to the nearest front member after min-max
/// normalizing both objectives over `table`. A constant objective contributes
/// zero.
pub fn normalized_distance_to_front(point: &Objectives, table: &[TableRow]) -> f64 {
    let range = |f: fn(&Objectives) -> f64| {
        let lo = table.iter().map(|r| f(&r.objectives)).fold(f64::INFINITY, f64::min);
        let hi = table.iter().map(|r| f(&r.objectives)).fold(f64::NEG_INFINITY, f64::max);
        (lo, hi - lo)
    };
    let (lo1, span1) = range(|o| o.f1);
    let (lo2, span2) = range(|o| o.f2);
    let norm = |v: f64, lo: f64, span: f64| if span > 0.0 { (v - lo) / span } else { 0.0 };
    let p = (norm(point.f1, lo1, span1), norm(point.f2, lo2, span2));
    pareto_front(table)
        .into_iter()
        .map(|i| {
            let o = &table[i].objectives;
            let q = (norm(o.f1, lo1, span1), norm(o.f2, lo2, span2));
            ((p.0 - q.0).powi(2) + (p.1 - q.1).powi(2)).sqrt()
        })
        .fold(f64::INFINITY, f64::min)
}
