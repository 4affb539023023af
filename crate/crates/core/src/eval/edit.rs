use std::fmt;

/// A minimal source-span replacement.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Edit {
    /// Token offsets `[start, end)` in the source.
    pub start: usize,
    pub end: usize,
    /// Replacement tokens; empty for a deletion.
    pub replacement: Vec<String>,
    pub kind: Option<String>,
}

impl Edit {
    pub fn new(start: usize, end: usize, replacement: Vec<String>) -> Self {
        Edit {
            start,
            end,
            replacement,
            kind: None,
        }
    }

    /// Span and replacement identity, ignoring the type label.
    pub fn key(&self) -> (usize, usize, &[String]) {
        (self.start, self.end, &self.replacement)
    }

    pub fn source_text(&self, source: &[String]) -> String {
        source[self.start..self.end].join(" ")
    }

    pub fn target_text(&self) -> String {
        self.replacement.join(" ")
    }

    pub fn is_noop(&self, source: &[String]) -> bool {
        source[self.start..self.end] == self.replacement[..]
    }
}

impl fmt::Display for Edit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}..{} -> {:?}", self.start, self.end, self.target_text())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Step {
    Keep,
    Sub,
    Del,
    Ins,
}

/// Token-level edits turning `source` into `hypothesis`.
///
/// Unit-cost Levenshtein alignment; runs of adjacent non-matching steps are
/// merged into one edit. Backtrace prefers diagonal steps, then deletions.
pub fn extract_edits(source: &[String], hypothesis: &[String]) -> Vec<Edit> {
    let (n, m) = (source.len(), hypothesis.len());
    let w = m + 1;
    let mut dist = vec![0u32; (n + 1) * w];
    for i in 0..=n {
        dist[i * w] = i as u32;
    }
    for j in 0..=m {
        dist[j] = j as u32;
    }
    for i in 1..=n {
        for j in 1..=m {
            let sub = dist[(i - 1) * w + j - 1] + u32::from(source[i - 1] != hypothesis[j - 1]);
            let del = dist[(i - 1) * w + j] + 1;
            let ins = dist[i * w + j - 1] + 1;
            dist[i * w + j] = sub.min(del).min(ins);
        }
    }

    let mut steps = Vec::with_capacity(n + m);
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let here = dist[i * w + j];
        if i > 0 && j > 0 {
            let same = source[i - 1] == hypothesis[j - 1];
            if dist[(i - 1) * w + j - 1] + u32::from(!same) == here {
                steps.push(if same { Step::Keep } else { Step::Sub });
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 && dist[(i - 1) * w + j] + 1 == here {
            steps.push(Step::Del);
            i -= 1;
        } else {
            steps.push(Step::Ins);
            j -= 1;
        }
    }
    steps.reverse();

    let mut edits = Vec::new();
    let (mut si, mut hj) = (0, 0);
    let mut open: Option<(usize, usize)> = None;
    for step in steps {
        if step == Step::Keep {
            if let Some((s0, h0)) = open.take() {
                edits.push(Edit::new(s0, si, hypothesis[h0..hj].to_vec()));
            }
            si += 1;
            hj += 1;
            continue;
        }
        open.get_or_insert((si, hj));
        match step {
            Step::Sub => {
                si += 1;
                hj += 1;
            }
            Step::Del => si += 1,
            Step::Ins => hj += 1,
            Step::Keep => unreachable!(),
        }
    }
    if let Some((s0, h0)) = open {
        edits.push(Edit::new(s0, si, hypothesis[h0..hj].to_vec()));
    }
    edits
}

/// Applies non-overlapping edits (any order) to `source`.
pub fn apply_edits(source: &[String], edits: &[Edit]) -> Vec<String> {
    let mut sorted: Vec<&Edit> = edits.iter().collect();
    sorted.sort_by_key(|e| (e.start, e.end));
    let mut out = Vec::with_capacity(source.len());
    let mut pos = 0;
    for e in sorted {
        out.extend_from_slice(&source[pos..e.start]);
        out.extend(e.replacement.iter().cloned());
        pos = e.end;
    }
    out.extend_from_slice(&source[pos..]);
    out
}
