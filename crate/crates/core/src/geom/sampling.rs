use super::{quat_distance, GeomError, Quaternion};

/// Greedy max-min selection of `k` rotations under [`quat_distance`],
/// starting from `start_index`; ties go to the lowest index.
pub fn farthest_rotation_sample(
    rotations: &[Quaternion],
    k: usize,
    start_index: usize,
) -> Result<Vec<usize>, GeomError> {
    let n = rotations.len();
    if k == 0 || k > n {
        return Err(GeomError::InvalidK { k, n });
    }
    if start_index >= n {
        return Err(GeomError::InvalidStartIndex { index: start_index, n });
    }
    let mut selected = Vec::with_capacity(k);
    let mut taken = vec![false; n];
    let mut min_dist = vec![f64::INFINITY; n];
    let mut current = start_index;
    loop {
        selected.push(current);
        taken[current] = true;
        if selected.len() == k {
            return Ok(selected);
        }
        let mut next: Option<(usize, f64)> = None;
        for i in 0..n {
            if taken[i] {
                continue;
            }
            let d = quat_distance(&rotations[i], &rotations[current])?;
            if d < min_dist[i] {
                min_dist[i] = d;
            }
            if next.is_none_or(|(_, best)| min_dist[i] > best) {
                next = Some((i, min_dist[i]));
            }
        }
        current = next.expect("k <= n leaves a candidate").0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn k_one_is_start() {
        let qs = vec![Quaternion::IDENTITY; 3];
        assert_eq!(farthest_rotation_sample(&qs, 1, 2).unwrap(), vec![2]);
    }

    #[test]
    fn ties_resolve_to_lowest_index() {
        // all identical: every candidate is at distance 0
        let qs = vec![Quaternion::IDENTITY; 5];
        assert_eq!(farthest_rotation_sample(&qs, 5, 3).unwrap(), vec![3, 0, 1, 2, 4]);
    }

    #[test]
    fn bad_arguments() {
        let qs = vec![Quaternion::IDENTITY; 2];
        assert_eq!(farthest_rotation_sample(&qs, 3, 0), Err(GeomError::InvalidK { k: 3, n: 2 }));
        assert_eq!(farthest_rotation_sample(&qs, 0, 0), Err(GeomError::InvalidK { k: 0, n: 2 }));
        assert_eq!(farthest_rotation_sample(&qs, 1, 2), Err(GeomError::InvalidStartIndex { index: 2, n: 2 }));
    }
}
