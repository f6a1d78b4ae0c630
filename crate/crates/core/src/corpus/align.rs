use super::bio::{repair_tags, Tag};

/// One step of a minimum edit-distance alignment, with positions into the
/// reference and the hypothesis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EditOp {
    Match(usize, usize),
    Substitute(usize, usize),
    /// Reference character with no hypothesis counterpart.
    Delete(usize),
    /// Hypothesis character with no reference counterpart.
    Insert(usize),
}

fn distance_table<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> Vec<Vec<usize>> {
    let (n, m) = (reference.len(), hypothesis.len());
    let mut d = vec![vec![0usize; m + 1]; n + 1];
    for (i, row) in d.iter_mut().enumerate() {
        row[0] = i;
    }
    for j in 0..=m {
        d[0][j] = j;
    }
    for i in 1..=n {
        for j in 1..=m {
            let diag = d[i - 1][j - 1] + usize::from(reference[i - 1] != hypothesis[j - 1]);
            d[i][j] = diag.min(d[i - 1][j] + 1).min(d[i][j - 1] + 1);
        }
    }
    d
}

/// Unit-cost Levenshtein distance.
pub fn edit_distance<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = (prev[j] + usize::from(x != y)).min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Minimum edit-distance alignment in reference order.
///
/// Ties prefer match, then substitution, then deletion, then insertion.
pub fn alignment<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> Vec<EditOp> {
    let d = distance_table(reference, hypothesis);
    let (mut i, mut j) = (reference.len(), hypothesis.len());
    let mut ops = Vec::with_capacity(i.max(j));
    while i > 0 || j > 0 {
        if i > 0 && j > 0 {
            let same = reference[i - 1] == hypothesis[j - 1];
            if same && d[i][j] == d[i - 1][j - 1] {
                ops.push(EditOp::Match(i - 1, j - 1));
                i -= 1;
                j -= 1;
                continue;
            }
            if !same && d[i][j] == d[i - 1][j - 1] + 1 {
                ops.push(EditOp::Substitute(i - 1, j - 1));
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 && d[i][j] == d[i - 1][j] + 1 {
            ops.push(EditOp::Delete(i - 1));
            i -= 1;
        } else {
            ops.push(EditOp::Insert(j - 1));
            j -= 1;
        }
    }
    ops.reverse();
    ops
}

/// Transfers transcription tags onto hypothesis characters through the
/// minimum edit-distance alignment; inserted characters get `O`.
pub fn align_hypothesis(transcription: &[char], hypothesis: &[char], transcription_tags: &[Tag]) -> Vec<Tag> {
    debug_assert_eq!(transcription.len(), transcription_tags.len());
    let mut out = vec![Tag::Outside; hypothesis.len()];
    for op in alignment(transcription, hypothesis) {
        match op {
            EditOp::Match(i, j) | EditOp::Substitute(i, j) => out[j] = transcription_tags[i].clone(),
            EditOp::Delete(_) | EditOp::Insert(_) => {}
        }
    }
    repair_tags(&out)
}

/// Edit distance divided by the transcription length.
///
/// An empty transcription yields the hypothesis length (0 when both are empty).
pub fn character_error_rate(hypothesis: &[char], transcription: &[char]) -> f64 {
    let distance = edit_distance(hypothesis, transcription) as f64;
    if transcription.is_empty() {
        hypothesis.len() as f64
    } else {
        distance / transcription.len() as f64
    }
}
